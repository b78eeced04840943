#include "medcast/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "medcast/rng.hpp"

namespace medcast {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Normalized triplet, padded to the network grid and stored as float.
struct PreparedSample {
    std::vector<float> a, b, target;
};

PreparedSample prepare_sample(const TrainingSample& s, int ph, int pw) {
    const GridSpec& g = s.input_a.grid;
    auto prep = [&](const Field2D& f) {
        const std::vector<double> norm = normalize_values(f.values, s.norm);
        const std::vector<double> padded = pad_replicate(norm, g.n_x, g.n_y, pw, ph);
        std::vector<float> out(padded.size());
        for (std::size_t i = 0; i < padded.size(); ++i) out[i] = static_cast<float>(padded[i]);
        return out;
    };
    return {prep(s.input_a), prep(s.input_b), prep(s.target)};
}

struct Presentation {
    int sample = 0;
    bool swapped = false;
};

void fill_batch(const std::vector<PreparedSample>& samples,
                const std::vector<Presentation>& order, std::size_t begin, std::size_t count,
                int ph, int pw, Tensor<float>& input, Tensor<float>& target) {
    const std::size_t plane = static_cast<std::size_t>(ph) * pw;
    input = Tensor<float>(static_cast<int>(count), 2, ph, pw);
    target = Tensor<float>(static_cast<int>(count), 1, ph, pw);
    for (std::size_t m = 0; m < count; ++m) {
        const Presentation& p = order[begin + m];
        const PreparedSample& s = samples[p.sample];
        const std::vector<float>& first = p.swapped ? s.b : s.a;
        const std::vector<float>& second = p.swapped ? s.a : s.b;
        std::copy(first.begin(), first.end(), input.sample(static_cast<int>(m)));
        std::copy(second.begin(), second.end(), input.sample(static_cast<int>(m)) + plane);
        std::copy(s.target.begin(), s.target.end(), target.sample(static_cast<int>(m)));
    }
}

double evaluate(const NetworkWeights& w, const std::vector<PreparedSample>& samples,
                const std::vector<Presentation>& order, int batch, int ph, int pw) {
    double sq_sum = 0.0;
    std::size_t n_elems = 0;
    Tensor<float> input, target;
    for (std::size_t at = 0; at < order.size(); at += batch) {
        const std::size_t count = std::min<std::size_t>(batch, order.size() - at);
        fill_batch(samples, order, at, count, ph, pw, input, target);
        const Tensor<float> pred = forward(w, input);
        sq_sum += mse_loss(pred, target) * static_cast<double>(pred.size());
        n_elems += pred.size();
    }
    return n_elems ? sq_sum / static_cast<double>(n_elems) : 0.0;
}

std::vector<PreparedSample> build_pool_samples(const ScenarioPool& pool, const TrainPlan& plan,
                                               int ph, int pw) {
    const std::vector<int> leads = plan.required_leads();
    std::vector<PreparedSample> out;
    for (int i = 0; i < pool.count; ++i) {
        const Scenario sc =
            make_pool_scenario(pool, plan.grid, i, leads.front(), leads.back());
        const ForecastRun run = generate_run(sc, ModelPerturbation{}, plan.grid, leads);
        for (const TrainingSample& s : build_pairs(run, plan.pairing, plan.variable)) {
            if (s.degenerate) continue;
            out.push_back(prepare_sample(s, ph, pw));
        }
    }
    return out;
}

}  // namespace

void ScenarioPool::validate() const {
    if (count < 1) {
        throw Error(Error::Kind::config, "scenario pool count must be at least 1");
    }
    if (noise_amplitude < 0.0 || noise_amplitude > 0.05) {
        throw Error(Error::Kind::config, "pool noise amplitude outside [0, 0.05]");
    }
}

Scenario make_pool_scenario(const ScenarioPool& pool, const GridSpec& grid, int index,
                            int lead_min, int lead_max) {
    Rng rng(mix_seed(pool.base_seed + static_cast<std::uint64_t>(index), 0x5c3a));
    const double cell_km = grid.d_lat * kKmPerDegree;

    Scenario sc;
    sc.seed = pool.base_seed + static_cast<std::uint64_t>(index);
    sc.noise_amplitude = pool.noise_amplitude;
    sc.background_u = rng.uniform(-pool.background_wind_max, pool.background_wind_max);
    sc.background_v = rng.uniform(-pool.background_wind_max, pool.background_wind_max);

    // Track chosen first; the start point is then boxed so the feature
    // stays `margin_cells` inside the grid over [lead_min, lead_max].
    const double speed_cells = rng.uniform(pool.speed_cells_min, pool.speed_cells_max);
    const double heading = rng.uniform(0.0, 2.0 * kPi);
    sc.track_east_kmh = speed_cells * cell_km * std::sin(heading);
    sc.track_north_kmh = speed_cells * cell_km * std::cos(heading);

    const double north_lo = std::min(sc.track_north_kmh * lead_min, sc.track_north_kmh * lead_max);
    const double north_hi = std::max(sc.track_north_kmh * lead_min, sc.track_north_kmh * lead_max);
    const double east_lo = std::min(sc.track_east_kmh * lead_min, sc.track_east_kmh * lead_max);
    const double east_hi = std::max(sc.track_east_kmh * lead_min, sc.track_east_kmh * lead_max);

    const double margin_lat = pool.margin_cells * grid.d_lat;
    const double margin_lon = pool.margin_cells * grid.d_lon;
    const double mid_lat = 0.5 * (grid.lat0 + grid.lat_max());
    const double cos_lat = std::cos(mid_lat * kPi / 180.0);
    double lat_lo = grid.lat0 + margin_lat - north_lo / kKmPerDegree;
    double lat_hi = grid.lat_max() - margin_lat - north_hi / kKmPerDegree;
    double lon_lo = grid.lon0 + margin_lon - east_lo / (kKmPerDegree * cos_lat);
    double lon_hi = grid.lon_max() - margin_lon - east_hi / (kKmPerDegree * cos_lat);
    if (lat_lo > lat_hi || lon_lo > lon_hi) {
        throw Error(Error::Kind::config,
                    fmt::format("pool scenario {}: track leaves no room inside the grid; "
                                "reduce speed or margin",
                                index));
    }
    const double lat = rng.uniform(lat_lo, lat_hi);
    const double lon = rng.uniform(lon_lo, lon_hi);

    if (pool.kind == ScenarioPool::Kind::vortex) {
        VortexParams vp;
        vp.lat = lat;
        vp.lon = lon;
        vp.p_env = rng.uniform(1008.0, 1016.0);
        vp.dp = rng.uniform(pool.dp_min, pool.dp_max);
        vp.r_max_km = rng.uniform(pool.r_max_min, pool.r_max_max);
        vp.v_max = rng.uniform(pool.v_max_min, pool.v_max_max);
        sc.base_pressure = vp.p_env;
        sc.features.emplace_back(vp);
    } else {
        FrontParams fp;
        fp.anchor_lat = lat;
        fp.anchor_lon = lon;
        fp.orientation_deg = 90.0 + rng.uniform(-25.0, 25.0);
        fp.t_mid = rng.uniform(16.0, 22.0);
        fp.contrast_c = rng.uniform(pool.contrast_min, pool.contrast_max);
        fp.width_km = rng.uniform(pool.width_min, pool.width_max);
        fp.warm_u = rng.uniform(2.0, 7.0);
        fp.warm_v = rng.uniform(2.0, 7.0);
        fp.cold_u = rng.uniform(-7.0, -2.0);
        fp.cold_v = rng.uniform(-7.0, -1.0);
        sc.base_t2m = fp.t_mid;
        sc.features.emplace_back(fp);
    }
    return sc;
}

std::vector<int> TrainPlan::required_leads() const {
    std::set<int> leads;
    for (int t : pairing.t_list) {
        for (int dt : pairing.dt_list) {
            leads.insert(t - dt);
            leads.insert(t);
            leads.insert(t + dt);
        }
    }
    return {leads.begin(), leads.end()};
}

void TrainPlan::validate() const {
    grid.validate();
    pairing.validate();
    net.validate();
    train_pool.validate();
    val_pool.validate();
    if (batch_size < 1 || max_epochs < 1 || patience < 1) {
        throw Error(Error::Kind::config, "batch size, max epochs, and patience must be positive");
    }
    const std::uint64_t t0 = train_pool.base_seed;
    const std::uint64_t t1 = t0 + static_cast<std::uint64_t>(train_pool.count);
    const std::uint64_t v0 = val_pool.base_seed;
    const std::uint64_t v1 = v0 + static_cast<std::uint64_t>(val_pool.count);
    if (t0 < v1 && v0 < t1) {
        throw Error(Error::Kind::config,
                    fmt::format("training seeds [{}, {}) overlap validation seeds [{}, {})", t0,
                                t1, v0, v1));
    }
    const std::vector<int> leads = required_leads();
    if (leads.front() < 0) {
        throw Error(Error::Kind::config, "pairing requires negative lead hours");
    }
}

std::pair<NetworkWeights, TrainReport> train_variable(const TrainPlan& plan) {
    plan.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const int ph = padded_dim(plan.grid.n_y, plan.net.depth);
    const int pw = padded_dim(plan.grid.n_x, plan.net.depth);

    const std::vector<PreparedSample> train_samples =
        build_pool_samples(plan.train_pool, plan, ph, pw);
    const std::vector<PreparedSample> val_samples =
        build_pool_samples(plan.val_pool, plan, ph, pw);
    if (train_samples.empty()) {
        throw Error(Error::Kind::config,
                    fmt::format("empty training set for {} (all samples degenerate or no "
                                "scenarios)",
                                variable_name(plan.variable)));
    }
    if (val_samples.empty()) {
        throw Error(Error::Kind::config, "empty validation set");
    }

    // Every sample is consumed in both channel orders each epoch.
    std::vector<Presentation> presentations;
    presentations.reserve(2 * train_samples.size());
    for (int i = 0; i < static_cast<int>(train_samples.size()); ++i) {
        presentations.push_back({i, false});
        presentations.push_back({i, true});
    }
    std::vector<Presentation> val_presentations;
    for (int i = 0; i < static_cast<int>(val_samples.size()); ++i) {
        val_presentations.push_back({i, false});
        val_presentations.push_back({i, true});
    }

    NetworkWeights weights = init_network(plan.net);
    AdamState adam_state = AdamState::zeros_like(weights);
    Rng shuffle_rng(mix_seed(plan.seed, 0xd1ce));

    TrainReport report;
    report.n_train_samples = static_cast<long>(train_samples.size());
    report.n_val_samples = static_cast<long>(val_samples.size());

    NetworkWeights best_weights = weights;
    double best_val = std::numeric_limits<double>::infinity();
    long step = 0;
    Tensor<float> input, target;

    for (int epoch = 1; epoch <= plan.max_epochs; ++epoch) {
        std::vector<Presentation> order = presentations;
        shuffle_rng.shuffle(order);

        double sq_sum = 0.0;
        std::size_t n_elems = 0;
        for (std::size_t at = 0; at < order.size(); at += plan.batch_size) {
            const std::size_t count =
                std::min<std::size_t>(plan.batch_size, order.size() - at);
            fill_batch(train_samples, order, at, count, ph, pw, input, target);
            auto [loss, grads] = backward(weights, input, target);
            if (!std::isfinite(loss)) {
                throw Error(Error::Kind::numeric,
                            fmt::format("training diverged: non-finite loss at epoch {} step {}",
                                        epoch, step + 1));
            }
            ++step;
            adam_update(weights, grads, adam_state, plan.adam, step);
            sq_sum += loss * static_cast<double>(count) * ph * pw;
            n_elems += count * static_cast<std::size_t>(ph) * pw;
            for (std::size_t m = 0; m < count; ++m) {
                if (order[at + m].swapped) {
                    ++report.consumed_ba;
                } else {
                    ++report.consumed_ab;
                }
            }
        }
        report.train_loss.push_back(sq_sum / static_cast<double>(n_elems));

        const double val =
            evaluate(weights, val_samples, val_presentations, plan.batch_size, ph, pw);
        if (!std::isfinite(val)) {
            throw Error(Error::Kind::numeric,
                        fmt::format("validation loss non-finite at epoch {}", epoch));
        }
        report.val_loss.push_back(val);
        if (val < best_val) {
            best_val = val;
            report.best_epoch = epoch;
            best_weights = weights;
        }
        if (epoch - report.best_epoch >= plan.patience) {
            break;
        }
    }
    report.best_val_loss = best_val;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(best_weights), std::move(report)};
}

}  // namespace medcast
