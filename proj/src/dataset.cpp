#include "medcast/dataset.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace medcast {

void PairingConfig::validate() const {
    if (t_list.empty() || dt_list.empty()) {
        throw Error(Error::Kind::config, "pairing config needs at least one t and one dt");
    }
    for (int dt : dt_list) {
        if (dt <= 0) {
            throw Error(Error::Kind::config, fmt::format("pairing dt={} must be positive", dt));
        }
    }
}

std::vector<TrainingSample> build_pairs(const ForecastRun& run, const PairingConfig& cfg,
                                        VariableKind variable) {
    cfg.validate();
    std::vector<TrainingSample> samples;
    samples.reserve(cfg.t_list.size() * cfg.dt_list.size());
    for (int t : cfg.t_list) {
        for (int dt : cfg.dt_list) {
            for (int lead : {t - dt, t, t + dt}) {
                if (!run.has(lead, variable)) {
                    throw Error(Error::Kind::config,
                                fmt::format("run '{}' is missing {} at lead {} h "
                                            "(needed for t={}, dt={})",
                                            run.model_id, variable_name(variable), lead, t, dt));
                }
            }
            TrainingSample s;
            s.input_a = run.field(t - dt, variable);
            s.input_b = run.field(t + dt, variable);
            s.target = run.field(t, variable);
            s.variable = variable;
            s.t = t;
            s.dt = dt;
            try {
                s.norm =
                    compute_norm({&s.input_a, &s.input_b, &s.target}, norm_class_of(variable));
            } catch (const Error& e) {
                if (e.kind() != Error::Kind::numeric) throw;
                s.degenerate = true;
            }
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

TrainingSample augment_swap(const TrainingSample& sample) {
    TrainingSample out = sample;
    std::swap(out.input_a, out.input_b);
    return out;
}

NormParams compute_norm(const std::vector<const Field2D*>& fields, NormClass norm_class) {
    if (fields.empty()) {
        throw Error(Error::Kind::config, "compute_norm needs at least one field");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Field2D* f : fields) {
        const auto [fl, fh] = f->min_max();
        lo = std::min(lo, fl);
        hi = std::max(hi, fh);
    }
    NormParams norm;
    norm.norm_class = norm_class;
    if (norm_class == NormClass::symmetric) {
        const double m = std::max(std::abs(lo), std::abs(hi));
        norm.x_min = -m;
        norm.x_max = m;
    } else {
        norm.x_min = lo;
        norm.x_max = hi;
    }
    if (!(norm.x_max > norm.x_min)) {
        throw Error(Error::Kind::numeric,
                    fmt::format("degenerate normalization range [{}, {}]", norm.x_min, norm.x_max));
    }
    return norm;
}

NormParams compute_norm(const std::vector<Field2D>& fields, NormClass norm_class) {
    std::vector<const Field2D*> ptrs;
    ptrs.reserve(fields.size());
    for (const Field2D& f : fields) ptrs.push_back(&f);
    return compute_norm(ptrs, norm_class);
}

std::vector<double> normalize_values(const std::vector<double>& values, const NormParams& norm) {
    const double inv = 1.0 / norm.range();
    std::vector<double> out(values.size());
    for (std::size_t n = 0; n < values.size(); ++n) {
        out[n] = (values[n] - norm.x_min) * inv;
    }
    return out;
}

Field2D normalize(const Field2D& field, const NormParams& norm) {
    Field2D out = field;
    out.values = normalize_values(field.values, norm);
    return out;
}

Field2D denormalize(const Field2D& field, const NormParams& norm) {
    Field2D out = field;
    const double r = norm.range();
    for (std::size_t n = 0; n < out.values.size(); ++n) {
        out.values[n] = norm.x_min + field.values[n] * r;
    }
    return out;
}

std::vector<double> pad_replicate(const std::vector<double>& values, int n_x, int n_y,
                                  int target_n_x, int target_n_y) {
    if (target_n_x < n_x || target_n_y < n_y) {
        throw Error(Error::Kind::config,
                    fmt::format("pad target {}x{} smaller than field {}x{}", target_n_x,
                                target_n_y, n_x, n_y));
    }
    if (values.size() != static_cast<std::size_t>(n_x) * n_y) {
        throw Error(Error::Kind::format, "pad_replicate: value count does not match dims");
    }
    std::vector<double> out(static_cast<std::size_t>(target_n_x) * target_n_y);
    for (int i = 0; i < target_n_y; ++i) {
        const int si = std::min(i, n_y - 1);
        for (int j = 0; j < target_n_x; ++j) {
            const int sj = std::min(j, n_x - 1);
            out[static_cast<std::size_t>(i) * target_n_x + j] =
                values[static_cast<std::size_t>(si) * n_x + sj];
        }
    }
    return out;
}

std::vector<double> trim_padding(const std::vector<double>& values, int padded_n_x,
                                 int padded_n_y, int n_x, int n_y) {
    if (padded_n_x < n_x || padded_n_y < n_y) {
        throw Error(Error::Kind::config,
                    fmt::format("trim source {}x{} smaller than target {}x{}", padded_n_x,
                                padded_n_y, n_x, n_y));
    }
    if (values.size() != static_cast<std::size_t>(padded_n_x) * padded_n_y) {
        throw Error(Error::Kind::format, "trim_padding: value count does not match dims");
    }
    std::vector<double> out(static_cast<std::size_t>(n_x) * n_y);
    for (int i = 0; i < n_y; ++i) {
        for (int j = 0; j < n_x; ++j) {
            out[static_cast<std::size_t>(i) * n_x + j] =
                values[static_cast<std::size_t>(i) * padded_n_x + j];
        }
    }
    return out;
}

int padded_dim(int n, int depth) {
    const int m = 1 << depth;
    return (n + m - 1) / m * m;
}

}  // namespace medcast
