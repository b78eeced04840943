#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medcast/dataset.hpp"
#include "medcast/synth.hpp"
#include "medcast/unet.hpp"

namespace medcast {

// A seeded family of randomized single-feature scenarios. Scenario i gets
// seed base_seed + i; training and validation pools must use disjoint
// seed ranges.
struct ScenarioPool {
    enum class Kind { vortex, front };
    Kind kind = Kind::vortex;
    int count = 0;
    std::uint64_t base_seed = 0;

    // Vortex parameter ranges.
    double dp_min = 15.0, dp_max = 45.0;          // hPa
    double r_max_min = 45.0, r_max_max = 90.0;    // km
    double v_max_min = 15.0, v_max_max = 40.0;    // m/s
    // Front parameter ranges.
    double contrast_min = 6.0, contrast_max = 14.0;   // degC
    double width_min = 60.0, width_max = 150.0;       // km
    // Shared.
    double speed_cells_min = 0.05, speed_cells_max = 1.4;  // track speed, cells/hour
    double background_wind_max = 6.0;                      // m/s per component
    double noise_amplitude = 0.03;
    double margin_cells = 10.0;  // feature keeps this far from the boundary

    void validate() const;
};

// Scenario `index` of a pool, deterministic in (pool, grid, lead span).
Scenario make_pool_scenario(const ScenarioPool& pool, const GridSpec& grid, int index,
                            int lead_min, int lead_max);

struct TrainPlan {
    VariableKind variable = VariableKind::psea;
    GridSpec grid = GridSpec::desk();
    ScenarioPool train_pool;
    ScenarioPool val_pool;
    PairingConfig pairing;
    NetworkConfig net;
    AdamHyper adam;
    int batch_size = 8;
    int max_epochs = 30;
    int patience = 10;
    std::uint64_t seed = 0;

    std::vector<int> required_leads() const;
    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss;  // one entry per epoch
    std::vector<double> val_loss;
    int best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
    long consumed_ab = 0;  // presentations in (a, b) order, all epochs
    long consumed_ba = 0;
    long n_train_samples = 0;
    long n_val_samples = 0;
    double wall_seconds = 0.0;
    std::string checkpoint_path;  // filled by the caller after saving
};

std::pair<NetworkWeights, TrainReport> train_variable(const TrainPlan& plan);

}  // namespace medcast
