#include "medcast/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <fmt/format.h>

#include "medcast/rng.hpp"

namespace medcast {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Mean over the in-bounds part of the 3x3 window.
std::vector<double> smooth3x3(const Field2D& f) {
    const int ny = f.grid.n_y;
    const int nx = f.grid.n_x;
    std::vector<double> out(f.values.size());
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            double acc = 0.0;
            int cnt = 0;
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = i + di;
                    const int jj = j + dj;
                    if (ii >= 0 && ii < ny && jj >= 0 && jj < nx) {
                        acc += f.at(ii, jj);
                        ++cnt;
                    }
                }
            }
            out[static_cast<std::size_t>(i) * nx + j] = acc / cnt;
        }
    }
    return out;
}

// Least-squares quadratic on the 3x3 neighborhood; returns the vertex
// offset when the surface is convex and the vertex is nearby.
std::optional<std::pair<double, double>> quadratic_vertex(const std::vector<double>& s, int nx,
                                                          int ny, int i, int j) {
    if (i < 1 || i >= ny - 1 || j < 1 || j >= nx - 1) return std::nullopt;
    double sum = 0, sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
            const double v = s[static_cast<std::size_t>(i + di) * nx + (j + dj)];
            sum += v;
            sx += dj * v;
            sy += di * v;
            sxy += di * dj * v;
            sxx += dj * dj * v;
            syy += di * di * v;
        }
    }
    // f ~ a + b x + c y + d x^2 + e x y + g y^2 on x, y in {-1, 0, 1}.
    const double b = sx / 6.0;
    const double c = sy / 6.0;
    const double e = sxy / 4.0;
    const double d = (sxx - 2.0 / 3.0 * sum) / 2.0;
    const double g = (syy - 2.0 / 3.0 * sum) / 2.0;
    const double det = 4.0 * d * g - e * e;
    if (!(d > 0.0) || !(det > 0.0)) return std::nullopt;  // not convex
    const double dx = (-2.0 * g * b + e * c) / det;
    const double dy = (-2.0 * d * c + e * b) / det;
    if (std::abs(dx) > 1.0 || std::abs(dy) > 1.0) return std::nullopt;
    return std::make_pair(dx, dy);
}

void check_same_grid(const Field2D& a, const Field2D& b, const char* what) {
    if (!(a.grid == b.grid)) {
        throw Error(Error::Kind::format, fmt::format("{}: fields are on different grids", what));
    }
}

double wrap_angle_deg(double d) {
    d = std::remainder(d, 360.0);
    if (d <= -180.0) d += 360.0;
    return d;
}

}  // namespace

CycloneDiagnostics detect_cyclone(const Field2D& psea, const Field2D& u, const Field2D& v,
                                  double search_radius_km) {
    check_same_grid(psea, u, "detect_cyclone");
    check_same_grid(psea, v, "detect_cyclone");
    const GridSpec& g = psea.grid;
    const int nx = g.n_x;
    const int ny = g.n_y;

    const std::vector<double> s = smooth3x3(psea);
    std::size_t arg = 0;
    for (std::size_t n = 1; n < s.size(); ++n) {
        if (s[n] < s[arg]) arg = n;
    }
    const int mi = static_cast<int>(arg) / nx;
    const int mj = static_cast<int>(arg) % nx;

    CycloneDiagnostics out;
    const auto [lo, hi] = psea.min_max();
    out.degenerate = (hi - lo) < 1e-9 * std::max(1.0, std::abs(hi));
    out.central_pressure = psea.at(mi, mj);

    double fi = mi;
    double fj = mj;
    if (!out.degenerate) {
        if (const auto vtx = quadratic_vertex(s, nx, ny, mi, mj)) {
            fj += vtx->first;
            fi += vtx->second;
        }
    }
    out.lat = g.lat0 + fi * g.d_lat;
    out.lon = g.lon0 + fj * g.d_lon;

    double wmax = 0.0;
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            const auto [plat, plon] = latlon_of(g, i, j);
            if (distance_km(plat, plon, out.lat, out.lon) <= search_radius_km) {
                wmax = std::max(wmax, std::hypot(u.at(i, j), v.at(i, j)));
            }
        }
    }
    out.max_wind = wmax;
    return out;
}

int count_minima(const Field2D& psea, double depth_threshold_hpa) {
    if (!(depth_threshold_hpa > 0.0)) {
        throw Error(Error::Kind::config, "minima depth threshold must be positive");
    }
    const GridSpec& g = psea.grid;
    const int nx = g.n_x;
    const int ny = g.n_y;
    const std::vector<double> s = smooth3x3(psea);
    const double smax = *std::max_element(s.begin(), s.end());

    std::vector<std::size_t> candidates;
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            const double v = s[static_cast<std::size_t>(i) * nx + j];
            bool is_min = true;
            for (int di = -1; di <= 1 && is_min; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const int ii = i + di;
                    const int jj = j + dj;
                    if (ii < 0 || ii >= ny || jj < 0 || jj >= nx) continue;
                    if (s[static_cast<std::size_t>(ii) * nx + jj] <= v) {
                        is_min = false;
                        break;
                    }
                }
            }
            if (is_min) candidates.push_back(static_cast<std::size_t>(i) * nx + j);
        }
    }

    // A minimum counts when no path below (value + threshold) escapes to a
    // strictly deeper cell; the deepest minimum counts against the field top.
    int count = 0;
    std::vector<char> visited(s.size());
    for (std::size_t m : candidates) {
        const double vm = s[m];
        if (smax - vm < depth_threshold_hpa) continue;
        std::fill(visited.begin(), visited.end(), 0);
        std::deque<std::size_t> queue{m};
        visited[m] = 1;
        bool reaches_deeper = false;
        while (!queue.empty() && !reaches_deeper) {
            const std::size_t n = queue.front();
            queue.pop_front();
            const int i = static_cast<int>(n) / nx;
            const int j = static_cast<int>(n) % nx;
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = i + di;
                    const int jj = j + dj;
                    if (ii < 0 || ii >= ny || jj < 0 || jj >= nx) continue;
                    const std::size_t nn = static_cast<std::size_t>(ii) * nx + jj;
                    if (visited[nn]) continue;
                    const double vn = s[nn];
                    if (vn < vm) {
                        reaches_deeper = true;
                        break;
                    }
                    if (vn < vm + depth_threshold_hpa) {
                        visited[nn] = 1;
                        queue.push_back(nn);
                    }
                }
                if (reaches_deeper) break;
            }
        }
        if (!reaches_deeper) ++count;
    }
    return count;
}

Field2D arithmetic_mean(const std::vector<Field2D>& fields) {
    if (fields.empty()) {
        throw Error(Error::Kind::config, "arithmetic_mean of an empty field list");
    }
    Field2D out = fields.front();
    for (std::size_t k = 1; k < fields.size(); ++k) {
        check_same_grid(out, fields[k], "arithmetic_mean");
        if (fields[k].variable != out.variable) {
            throw Error(Error::Kind::format, "arithmetic_mean: variable mismatch");
        }
        for (std::size_t n = 0; n < out.values.size(); ++n) {
            out.values[n] += fields[k].values[n];
        }
    }
    const double inv = 1.0 / static_cast<double>(fields.size());
    for (double& v : out.values) v *= inv;
    return out;
}

std::pair<double, double> feature_midpoint(const std::vector<CycloneDiagnostics>& diags) {
    if (diags.empty()) {
        throw Error(Error::Kind::config, "feature_midpoint of an empty list");
    }
    double lat = 0.0, lon = 0.0;
    for (const CycloneDiagnostics& d : diags) {
        lat += d.lat;
        lon += d.lon;
    }
    const double inv = 1.0 / static_cast<double>(diags.size());
    return {lat * inv, lon * inv};
}

std::optional<double> detect_front(const Field2D& t2m, const Field2D& u, const Field2D& v,
                                   double along_lon, double min_shear) {
    check_same_grid(t2m, u, "detect_front");
    check_same_grid(t2m, v, "detect_front");
    const GridSpec& g = t2m.grid;
    if (along_lon < g.lon0 || along_lon > g.lon_max()) {
        throw Error(Error::Kind::config,
                    fmt::format("longitude {} outside the grid", along_lon));
    }
    const int j = std::clamp(
        static_cast<int>(std::lround((along_lon - g.lon0) / g.d_lon)), 0, g.n_x - 1);

    std::vector<double> score(g.n_y, 0.0);
    double max_shear = 0.0;
    int best = -1;
    for (int i = 1; i < g.n_y - 1; ++i) {
        const double dt = 0.5 * (t2m.at(i + 1, j) - t2m.at(i - 1, j));
        const double du = 0.5 * (u.at(i + 1, j) - u.at(i - 1, j));
        const double dv = 0.5 * (v.at(i + 1, j) - v.at(i - 1, j));
        const double shear = std::hypot(du, dv);
        max_shear = std::max(max_shear, shear);
        score[i] = std::abs(dt) * shear;
        if (best < 0 || score[i] > score[best]) best = i;
    }
    if (best < 0 || max_shear < min_shear) return std::nullopt;

    double fi = best;
    if (best >= 1 && best < g.n_y - 1) {
        // Parabolic peak refinement on the score profile.
        const double y0 = score[best - 1];
        const double y1 = score[best];
        const double y2 = score[best + 1];
        const double denom = y0 - 2.0 * y1 + y2;
        if (std::abs(denom) > 1e-12) {
            const double off = 0.5 * (y0 - y2) / denom;
            if (std::abs(off) <= 1.0) fi += off;
        }
    }
    return g.lat0 + fi * g.d_lat;
}

std::pair<Field2D, Field2D> wind_speed_dir(const Field2D& u, const Field2D& v) {
    check_same_grid(u, v, "wind_speed_dir");
    Field2D speed = u;
    Field2D dir = u;
    for (std::size_t n = 0; n < u.values.size(); ++n) {
        const double uu = u.values[n];
        const double vv = v.values[n];
        speed.values[n] = std::hypot(uu, vv);
        double d = std::atan2(-uu, -vv) * 180.0 / kPi;
        if (d < 0.0) d += 360.0;
        if (d >= 360.0) d = 0.0;
        dir.values[n] = d;
    }
    return {std::move(speed), std::move(dir)};
}

double rmse(const std::vector<std::vector<double>>& forecast,
            const std::vector<std::vector<double>>& observed, DiffKind kind) {
    if (forecast.size() != observed.size()) {
        throw Error(Error::Kind::config, "rmse: time dimension mismatch");
    }
    double acc = 0.0;
    int n_times = 0;
    for (std::size_t t = 0; t < forecast.size(); ++t) {
        if (forecast[t].size() != observed[t].size()) {
            throw Error(Error::Kind::config, "rmse: station dimension mismatch");
        }
        if (forecast[t].empty()) continue;
        double inner = 0.0;
        for (std::size_t n = 0; n < forecast[t].size(); ++n) {
            double d = forecast[t][n] - observed[t][n];
            if (kind == DiffKind::angular_deg) d = wrap_angle_deg(d);
            inner += d * d;
        }
        acc += inner / static_cast<double>(forecast[t].size());
        ++n_times;
    }
    if (n_times == 0) {
        throw Error(Error::Kind::config, "rmse: empty forecast/observation matrix");
    }
    return std::sqrt(acc / static_cast<double>(n_times));
}

double VerificationResult::value(const std::string& system, int lead,
                                 const std::string& variable) const {
    for (const VerificationRow& r : rows) {
        if (r.system == system && r.lead_hours == lead && r.variable == variable) {
            return r.rmse;
        }
    }
    throw Error(Error::Kind::config,
                fmt::format("no verification row for {}/{}/{}", system, lead, variable));
}

ObsSet make_observations(
    const std::function<std::pair<const Field2D*, const Field2D*>(int, int)>& truth,
    int n_times, const std::vector<int>& leads, const std::vector<Station>& stations,
    double sigma_ms, std::uint64_t seed) {
    ObsSet obs;
    obs.noise_sigma = sigma_ms;
    Rng rng(mix_seed(seed, 0x0b5));
    for (int t = 0; t < n_times; ++t) {
        for (int lead : leads) {
            const auto [uf, vf] = truth(t, lead);
            for (std::size_t n = 0; n < stations.size(); ++n) {
                validate_station(stations[n], uf->grid);
                const double uu =
                    bilinear_sample(*uf, stations[n].lat, stations[n].lon) +
                    rng.normal(0.0, sigma_ms);
                const double vv =
                    bilinear_sample(*vf, stations[n].lat, stations[n].lon) +
                    rng.normal(0.0, sigma_ms);
                ObsRecord rec;
                rec.time_idx = t;
                rec.lead_hours = lead;
                rec.station = static_cast<int>(n);
                rec.speed = std::hypot(uu, vv);
                double d = std::atan2(-uu, -vv) * 180.0 / kPi;
                if (d < 0.0) d += 360.0;
                rec.dir_deg = d;
                obs.records.push_back(rec);
            }
        }
    }
    return obs;
}

VerificationResult verify_against_stations(const std::vector<WindSystem>& systems,
                                           const ObsSet& obs,
                                           const std::vector<Station>& stations,
                                           int n_times, const std::vector<int>& leads) {
    VerificationResult result;
    for (const WindSystem& sys : systems) {
        for (int lead : leads) {
            std::vector<std::vector<double>> f_speed(n_times), o_speed(n_times);
            std::vector<std::vector<double>> f_dir(n_times), o_dir(n_times);
            for (int t = 0; t < n_times; ++t) {
                const auto [uf, vf] = sys.fields(t, lead);
                for (const ObsRecord& rec : obs.records) {
                    if (rec.time_idx != t || rec.lead_hours != lead) continue;
                    const Station& st = stations[rec.station];
                    const double uu = bilinear_sample(*uf, st.lat, st.lon);
                    const double vv = bilinear_sample(*vf, st.lat, st.lon);
                    f_speed[t].push_back(std::hypot(uu, vv));
                    o_speed[t].push_back(rec.speed);
                    if (rec.speed >= obs.calm_threshold) {
                        double d = std::atan2(-uu, -vv) * 180.0 / kPi;
                        if (d < 0.0) d += 360.0;
                        f_dir[t].push_back(d);
                        o_dir[t].push_back(rec.dir_deg);
                    }
                }
            }
            VerificationRow speed_row;
            speed_row.system = sys.name;
            speed_row.lead_hours = lead;
            speed_row.variable = "wind_speed";
            speed_row.rmse = rmse(f_speed, o_speed, DiffKind::linear);
            speed_row.n_stations = static_cast<int>(stations.size());
            speed_row.n_times = n_times;
            result.rows.push_back(speed_row);

            VerificationRow dir_row = speed_row;
            dir_row.variable = "wind_dir";
            dir_row.rmse = rmse(f_dir, o_dir, DiffKind::angular_deg);
            result.rows.push_back(dir_row);
        }
    }
    return result;
}

}  // namespace medcast
