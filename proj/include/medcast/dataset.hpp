#pragma once

#include <vector>

#include "medcast/grid.hpp"
#include "medcast/synth.hpp"

namespace medcast {

// Target lead hours and symmetric offsets used to draw training triplets
// from a single model run.
struct PairingConfig {
    std::vector<int> t_list{9, 10, 11, 12, 13, 14};
    std::vector<int> dt_list{3, 6};

    void validate() const;
};

struct NormParams {
    double x_min = 0.0;
    double x_max = 1.0;
    NormClass norm_class = NormClass::min_max;

    double range() const { return x_max - x_min; }
};

// (t - dt, t + dt) inputs with the t field as target, all from one run.
// Constant triplets get the degenerate flag instead of norm parameters;
// training rejects them.
struct TrainingSample {
    Field2D input_a;  // FT = t - dt
    Field2D input_b;  // FT = t + dt
    Field2D target;   // FT = t
    NormParams norm;
    VariableKind variable = VariableKind::psea;
    int t = 0;
    int dt = 0;
    bool degenerate = false;
};

std::vector<TrainingSample> build_pairs(const ForecastRun& run, const PairingConfig& cfg,
                                        VariableKind variable);

TrainingSample augment_swap(const TrainingSample& sample);

// Min/max over every value of every field; the symmetric class forces the
// range to [-m, m] with m = max(|min|, |max|). Throws Error::numeric when
// the range is degenerate (constant fields).
NormParams compute_norm(const std::vector<const Field2D*>& fields, NormClass norm_class);
NormParams compute_norm(const std::vector<Field2D>& fields, NormClass norm_class);

// x' = (x - x_min) / (x_max - x_min), applied elementwise.
Field2D normalize(const Field2D& field, const NormParams& norm);
Field2D denormalize(const Field2D& field, const NormParams& norm);

// Values-only helpers shared by the network input path.
std::vector<double> normalize_values(const std::vector<double>& values, const NormParams& norm);

// Replicate the last column/row until the array reaches target_n_x by
// target_n_y. Row-major in, row-major out.
std::vector<double> pad_replicate(const std::vector<double>& values, int n_x, int n_y,
                                  int target_n_x, int target_n_y);
std::vector<double> trim_padding(const std::vector<double>& values, int padded_n_x,
                                 int padded_n_y, int n_x, int n_y);

// Smallest multiple of 2^depth that is >= n.
int padded_dim(int n, int depth);

}  // namespace medcast
