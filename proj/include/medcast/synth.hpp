#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "medcast/grid.hpp"

namespace medcast {

// Idealized cyclone: exponential pressure well plus a Rankine tangential
// wind profile, rotating counterclockwise (Northern Hemisphere).
struct VortexParams {
    double lat = 0.0;
    double lon = 0.0;
    double p_env = 1012.0;   // environmental pressure, hPa
    double dp = 30.0;        // pressure depth, hPa
    double r_max_km = 60.0;  // radius of maximum wind
    double v_max = 30.0;     // maximum tangential wind, m/s

    void validate() const;
};

// Idealized front: tanh transition of temperature and wind across a line
// through `anchor` with the given orientation (degrees clockwise from
// north; the warm side lies to the right of that direction).
struct FrontParams {
    double anchor_lat = 0.0;
    double anchor_lon = 0.0;
    double orientation_deg = 90.0;  // front line direction of travel along the line
    double t_mid = 18.0;            // temperature on the front line, degC
    double contrast_c = 10.0;       // warm-side minus cold-side temperature
    double width_km = 120.0;        // transition width
    double warm_u = 6.0, warm_v = 4.0;
    double cold_u = -4.0, cold_v = -3.0;

    void validate() const;
};

using FeatureParams = std::variant<VortexParams, FrontParams>;

struct Scenario {
    std::vector<FeatureParams> features;
    double background_u = 0.0;  // uniform flow, m/s
    double background_v = 0.0;
    double track_east_kmh = 0.0;  // feature motion per hour
    double track_north_kmh = 0.0;
    double base_pressure = 1012.0;
    double base_t2m = 20.0;
    double base_rh2m = 60.0;
    double noise_amplitude = 0.03;  // fraction of each variable's feature amplitude
    std::uint64_t seed = 0;
};

// Per-model departures from a scenario. Track displacement grows linearly
// with lead time and reaches `track_displacement_km` at `ref_lead_h`.
struct ModelPerturbation {
    std::string model_id = "m0";
    double track_displacement_km = 0.0;
    double displacement_bearing_deg = 0.0;  // direction the feature is pushed toward
    double ref_lead_h = 12.0;
    double intensity_scale = 1.0;  // in [0.5, 1.5]
    double timing_offset_h = 0.0;

    void validate() const;
};

struct ForecastRun {
    std::string model_id;
    std::string init_time;
    GridSpec grid;
    // lead hour -> variable -> field
    std::map<int, std::map<VariableKind, Field2D>> leads;

    const Field2D& field(int lead, VariableKind v) const;
    bool has(int lead, VariableKind v) const;
};

struct VortexFields {
    Field2D psea, u10, v10;
};

struct FrontFields {
    Field2D t2m, u10, v10;
};

VortexFields render_vortex(const VortexParams& params, const GridSpec& grid);
FrontFields render_front(const FrontParams& params, const GridSpec& grid);

// Signed cross-front distance in km; positive on the warm side.
double front_signed_distance_km(const FrontParams& params, double lat, double lon);

ForecastRun generate_run(const Scenario& scenario, const ModelPerturbation& pert,
                         const GridSpec& grid, const std::vector<int>& lead_hours,
                         const std::string& init_time = "2026-01-01T00Z");

// Feature center of the scenario's first feature at the given lead, after
// advection, perturbation displacement, and timing offset; used by tests
// and evaluation tooling as ground truth.
std::pair<double, double> feature_center_at(const Scenario& scenario,
                                            const ModelPerturbation& pert, double lead_h);

}  // namespace medcast
