#include "medcast/synth.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "medcast/rng.hpp"

namespace medcast {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

struct NoiseField {
    struct Mode {
        double kx, ky;     // radians per cell
        double phase0;     // radians
        double omega;      // radians per hour
        double amplitude;  // physical units
    };
    std::vector<Mode> modes;

    static NoiseField make(double amplitude, std::uint64_t seed) {
        NoiseField n;
        if (amplitude <= 0.0) return n;
        Rng rng(seed);
        constexpr int kModes = 6;
        std::vector<double> weights(kModes);
        double total = 0.0;
        for (double& w : weights) {
            w = rng.uniform(0.5, 1.0);
            total += w;
        }
        for (int k = 0; k < kModes; ++k) {
            Mode m;
            const double wavelength_cells = rng.uniform(8.0, 24.0);
            const double dir = rng.uniform(0.0, 2.0 * kPi);
            m.kx = 2.0 * kPi / wavelength_cells * std::cos(dir);
            m.ky = 2.0 * kPi / wavelength_cells * std::sin(dir);
            m.phase0 = rng.uniform(0.0, 2.0 * kPi);
            m.omega = rng.uniform(-0.15, 0.15);
            m.amplitude = amplitude * weights[k] / total;
            n.modes.push_back(m);
        }
        return n;
    }

    double value(int i, int j, double hours) const {
        double v = 0.0;
        for (const Mode& m : modes) {
            v += m.amplitude * std::cos(m.kx * j + m.ky * i + m.phase0 + m.omega * hours);
        }
        return v;
    }
};

void check_inside(double lat, double lon, const GridSpec& grid, const char* what) {
    if (lat < grid.lat0 || lat > grid.lat_max() || lon < grid.lon0 || lon > grid.lon_max()) {
        throw Error(Error::Kind::config,
                    fmt::format("{} at ({:.3f}, {:.3f}) is outside the grid", what, lat, lon));
    }
}

// Center of a feature at forecast hour `lead`, including track motion,
// timing offset, and the perturbation displacement at that lead.
std::pair<double, double> advected_center(double lat, double lon, const Scenario& sc,
                                          const ModelPerturbation& pert, double lead_h) {
    const double t = lead_h + pert.timing_offset_h;
    double north_km = sc.track_north_kmh * t;
    double east_km = sc.track_east_kmh * t;
    if (pert.track_displacement_km != 0.0) {
        const double d = pert.track_displacement_km * lead_h / pert.ref_lead_h;
        const double b = pert.displacement_bearing_deg * kDegToRad;
        east_km += d * std::sin(b);
        north_km += d * std::cos(b);
    }
    const double lat_out = lat + north_km / kKmPerDegree;
    const double lon_out = lon + east_km / (kKmPerDegree * std::cos(lat * kDegToRad));
    return {lat_out, lon_out};
}

double feature_wind_amplitude(const FeatureParams& f) {
    if (std::holds_alternative<VortexParams>(f)) {
        return std::get<VortexParams>(f).v_max;
    }
    const FrontParams& fr = std::get<FrontParams>(f);
    return 0.5 * std::hypot(fr.warm_u - fr.cold_u, fr.warm_v - fr.cold_v);
}

}  // namespace

void VortexParams::validate() const {
    if (!(dp > 0.0 && dp <= 120.0)) {
        throw Error(Error::Kind::config, fmt::format("vortex dp={} outside (0, 120] hPa", dp));
    }
    if (!(r_max_km >= 20.0 && r_max_km <= 500.0)) {
        throw Error(Error::Kind::config,
                    fmt::format("vortex r_max={} outside [20, 500] km", r_max_km));
    }
    if (!(v_max > 0.0 && v_max <= 90.0)) {
        throw Error(Error::Kind::config, fmt::format("vortex v_max={} outside (0, 90] m/s", v_max));
    }
}

void FrontParams::validate() const {
    if (!(width_km >= 30.0 && width_km <= 300.0)) {
        throw Error(Error::Kind::config,
                    fmt::format("front width={} outside [30, 300] km", width_km));
    }
}

void ModelPerturbation::validate() const {
    if (!(intensity_scale >= 0.5 && intensity_scale <= 1.5)) {
        throw Error(Error::Kind::config,
                    fmt::format("intensity scale {} outside [0.5, 1.5]", intensity_scale));
    }
    if (ref_lead_h <= 0.0) {
        throw Error(Error::Kind::config, "perturbation ref_lead_h must be positive");
    }
}

const Field2D& ForecastRun::field(int lead, VariableKind v) const {
    auto it = leads.find(lead);
    if (it == leads.end() || !it->second.count(v)) {
        throw Error(Error::Kind::config,
                    fmt::format("run '{}' has no {} field at lead {} h", model_id,
                                variable_name(v), lead));
    }
    return it->second.at(v);
}

bool ForecastRun::has(int lead, VariableKind v) const {
    auto it = leads.find(lead);
    return it != leads.end() && it->second.count(v) > 0;
}

VortexFields render_vortex(const VortexParams& params, const GridSpec& grid) {
    grid.validate();
    params.validate();
    check_inside(params.lat, params.lon, grid, "vortex center");

    VortexFields out{make_field(VariableKind::psea, grid, params.p_env),
                     make_field(VariableKind::u10, grid),
                     make_field(VariableKind::v10, grid)};
    for (int i = 0; i < grid.n_y; ++i) {
        for (int j = 0; j < grid.n_x; ++j) {
            const auto [lat, lon] = latlon_of(grid, i, j);
            const auto [east, north] = local_km(lat, lon, params.lat, params.lon);
            const double r = std::hypot(east, north);
            out.psea.at(i, j) = params.p_env - params.dp * std::exp(-r / params.r_max_km);
            double speed;
            if (r <= params.r_max_km) {
                speed = params.v_max * r / params.r_max_km;
            } else {
                speed = params.v_max * params.r_max_km / r;
            }
            if (r > 0.0) {
                // Counterclockwise tangential flow.
                out.u10.at(i, j) = speed * (-north / r);
                out.v10.at(i, j) = speed * (east / r);
            }
        }
    }
    return out;
}

double front_signed_distance_km(const FrontParams& params, double lat, double lon) {
    const auto [east, north] = local_km(lat, lon, params.anchor_lat, params.anchor_lon);
    const double b = params.orientation_deg * kDegToRad;
    // Unit normal to the right of the line's direction of travel (warm side).
    return east * std::cos(b) - north * std::sin(b);
}

FrontFields render_front(const FrontParams& params, const GridSpec& grid) {
    grid.validate();
    params.validate();
    check_inside(params.anchor_lat, params.anchor_lon, grid, "front anchor");

    FrontFields out{make_field(VariableKind::t2m, grid),
                    make_field(VariableKind::u10, grid),
                    make_field(VariableKind::v10, grid)};
    const double mid_u = 0.5 * (params.warm_u + params.cold_u);
    const double mid_v = 0.5 * (params.warm_v + params.cold_v);
    for (int i = 0; i < grid.n_y; ++i) {
        for (int j = 0; j < grid.n_x; ++j) {
            const auto [lat, lon] = latlon_of(grid, i, j);
            const double s = front_signed_distance_km(params, lat, lon);
            const double blend = std::tanh(2.0 * s / params.width_km);
            out.t2m.at(i, j) = params.t_mid + 0.5 * params.contrast_c * blend;
            out.u10.at(i, j) = mid_u + 0.5 * (params.warm_u - params.cold_u) * blend;
            out.v10.at(i, j) = mid_v + 0.5 * (params.warm_v - params.cold_v) * blend;
        }
    }
    return out;
}

std::pair<double, double> feature_center_at(const Scenario& scenario,
                                            const ModelPerturbation& pert, double lead_h) {
    if (scenario.features.empty()) {
        throw Error(Error::Kind::config, "scenario has no features");
    }
    const FeatureParams& f = scenario.features.front();
    double lat, lon;
    if (std::holds_alternative<VortexParams>(f)) {
        lat = std::get<VortexParams>(f).lat;
        lon = std::get<VortexParams>(f).lon;
    } else {
        lat = std::get<FrontParams>(f).anchor_lat;
        lon = std::get<FrontParams>(f).anchor_lon;
    }
    return advected_center(lat, lon, scenario, pert, lead_h);
}

ForecastRun generate_run(const Scenario& scenario, const ModelPerturbation& pert,
                         const GridSpec& grid, const std::vector<int>& lead_hours,
                         const std::string& init_time) {
    grid.validate();
    pert.validate();
    if (lead_hours.empty()) {
        throw Error(Error::Kind::config, "lead_hours must not be empty");
    }
    if (!std::is_sorted(lead_hours.begin(), lead_hours.end())) {
        throw Error(Error::Kind::config, "lead_hours must be sorted");
    }
    if (!(scenario.noise_amplitude >= 0.0 && scenario.noise_amplitude <= 0.05)) {
        throw Error(Error::Kind::config,
                    fmt::format("noise amplitude {} outside [0, 0.05]", scenario.noise_amplitude));
    }

    // Feature amplitudes drive the noise scale per variable; variables with
    // no feature signal stay noise-free.
    double amp_psea = 0.0, amp_wind = 0.0, amp_t2m = 0.0, amp_rh = 0.0;
    bool any_vortex = false;
    for (const FeatureParams& f : scenario.features) {
        if (std::holds_alternative<VortexParams>(f)) {
            any_vortex = true;
            amp_psea = std::max(amp_psea, std::get<VortexParams>(f).dp * pert.intensity_scale);
        } else {
            amp_t2m = std::max(amp_t2m,
                               0.5 * std::get<FrontParams>(f).contrast_c * pert.intensity_scale);
        }
        amp_wind = std::max(amp_wind, feature_wind_amplitude(f) * pert.intensity_scale);
    }
    if (any_vortex) amp_rh = 35.0;

    const std::uint64_t noise_base = mix_seed(scenario.seed, fnv1a64(pert.model_id));
    const NoiseField noise_psea = NoiseField::make(scenario.noise_amplitude * amp_psea,
                                                   mix_seed(noise_base, 1));
    const NoiseField noise_u = NoiseField::make(scenario.noise_amplitude * amp_wind,
                                                mix_seed(noise_base, 2));
    const NoiseField noise_v = NoiseField::make(scenario.noise_amplitude * amp_wind,
                                                mix_seed(noise_base, 3));
    const NoiseField noise_t = NoiseField::make(scenario.noise_amplitude * amp_t2m,
                                                mix_seed(noise_base, 4));
    const NoiseField noise_rh = NoiseField::make(scenario.noise_amplitude * amp_rh,
                                                 mix_seed(noise_base, 5));

    ForecastRun run;
    run.model_id = pert.model_id;
    run.init_time = init_time;
    run.grid = grid;

    for (int lead : lead_hours) {
        Field2D psea = make_field(VariableKind::psea, grid, scenario.base_pressure, init_time, lead);
        Field2D u10 = make_field(VariableKind::u10, grid, scenario.background_u, init_time, lead);
        Field2D v10 = make_field(VariableKind::v10, grid, scenario.background_v, init_time, lead);
        Field2D t2m = make_field(VariableKind::t2m, grid, scenario.base_t2m, init_time, lead);
        Field2D rh2m = make_field(VariableKind::rh2m, grid, scenario.base_rh2m, init_time, lead);

        for (const FeatureParams& f : scenario.features) {
            if (std::holds_alternative<VortexParams>(f)) {
                VortexParams vp = std::get<VortexParams>(f);
                auto [lat, lon] = advected_center(vp.lat, vp.lon, scenario, pert, lead);
                if (lat < grid.lat0 || lat > grid.lat_max() || lon < grid.lon0 ||
                    lon > grid.lon_max()) {
                    throw Error(Error::Kind::config,
                                fmt::format("vortex advected outside the grid at lead {} h", lead));
                }
                vp.lat = lat;
                vp.lon = lon;
                vp.dp *= pert.intensity_scale;
                vp.v_max *= pert.intensity_scale;
                const VortexFields vf = render_vortex(vp, grid);
                for (std::size_t n = 0; n < grid.size(); ++n) {
                    psea.values[n] += vf.psea.values[n] - vp.p_env;
                    u10.values[n] += vf.u10.values[n];
                    v10.values[n] += vf.v10.values[n];
                }
                // Moist blob riding on the vortex.
                for (int i = 0; i < grid.n_y; ++i) {
                    for (int j = 0; j < grid.n_x; ++j) {
                        const auto [plat, plon] = latlon_of(grid, i, j);
                        const double r = distance_km(plat, plon, vp.lat, vp.lon);
                        const double x = r / (2.0 * vp.r_max_km);
                        rh2m.at(i, j) += amp_rh * std::exp(-x * x);
                    }
                }
            } else {
                FrontParams fp = std::get<FrontParams>(f);
                auto [lat, lon] = advected_center(fp.anchor_lat, fp.anchor_lon, scenario, pert, lead);
                if (lat < grid.lat0 || lat > grid.lat_max() || lon < grid.lon0 ||
                    lon > grid.lon_max()) {
                    throw Error(Error::Kind::config,
                                fmt::format("front advected outside the grid at lead {} h", lead));
                }
                fp.anchor_lat = lat;
                fp.anchor_lon = lon;
                fp.contrast_c *= pert.intensity_scale;
                const FrontFields ff = render_front(fp, grid);
                for (std::size_t n = 0; n < grid.size(); ++n) {
                    t2m.values[n] += ff.t2m.values[n] - fp.t_mid;
                    u10.values[n] += ff.u10.values[n];
                    v10.values[n] += ff.v10.values[n];
                }
            }
        }

        for (int i = 0; i < grid.n_y; ++i) {
            for (int j = 0; j < grid.n_x; ++j) {
                psea.at(i, j) += noise_psea.value(i, j, lead);
                u10.at(i, j) += noise_u.value(i, j, lead);
                v10.at(i, j) += noise_v.value(i, j, lead);
                t2m.at(i, j) += noise_t.value(i, j, lead);
                rh2m.at(i, j) = std::clamp(rh2m.at(i, j) + noise_rh.value(i, j, lead), 0.0, 100.0);
            }
        }

        auto& slot = run.leads[lead];
        slot.emplace(VariableKind::psea, std::move(psea));
        slot.emplace(VariableKind::u10, std::move(u10));
        slot.emplace(VariableKind::v10, std::move(v10));
        slot.emplace(VariableKind::t2m, std::move(t2m));
        slot.emplace(VariableKind::rh2m, std::move(rh2m));
    }
    return run;
}

}  // namespace medcast
