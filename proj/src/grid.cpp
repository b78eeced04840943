#include "medcast/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace medcast {

void GridSpec::validate() const {
    if (n_x < 2 || n_y < 2) {
        throw Error(Error::Kind::config,
                    fmt::format("grid must be at least 2x2, got {}x{}", n_x, n_y));
    }
    if (d_lat <= 0.0 || d_lon <= 0.0) {
        throw Error(Error::Kind::config,
                    fmt::format("grid steps must be positive, got d_lat={} d_lon={}", d_lat, d_lon));
    }
}

GridSpec GridSpec::japan_target() {
    return GridSpec{121, 151, 22.4, 120.0, 0.2, 0.25};
}

GridSpec GridSpec::desk() {
    return GridSpec{64, 64, 26.0, 126.0, 0.2, 0.25};
}

NormClass norm_class_of(VariableKind v) {
    switch (v) {
        case VariableKind::u10:
        case VariableKind::v10:
            return NormClass::symmetric;
        default:
            return NormClass::min_max;
    }
}

const char* variable_name(VariableKind v) {
    switch (v) {
        case VariableKind::u10: return "U10";
        case VariableKind::v10: return "V10";
        case VariableKind::t2m: return "T2M";
        case VariableKind::rh2m: return "RH2M";
        case VariableKind::psea: return "PSEA";
    }
    return "?";
}

const char* variable_units(VariableKind v) {
    switch (v) {
        case VariableKind::u10:
        case VariableKind::v10: return "m/s";
        case VariableKind::t2m: return "degC";
        case VariableKind::rh2m: return "percent";
        case VariableKind::psea: return "hPa";
    }
    return "?";
}

VariableKind variable_from_name(const std::string& name) {
    std::string up = name;
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "U10") return VariableKind::u10;
    if (up == "V10") return VariableKind::v10;
    if (up == "T2M") return VariableKind::t2m;
    if (up == "RH2M") return VariableKind::rh2m;
    if (up == "PSEA") return VariableKind::psea;
    throw Error(Error::Kind::config, fmt::format("unknown variable '{}'", name));
}

std::pair<double, double> Field2D::min_max() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

void Field2D::validate() const {
    grid.validate();
    if (values.size() != grid.size()) {
        throw Error(Error::Kind::format,
                    fmt::format("field size {} does not match grid {}x{}", values.size(),
                                grid.n_x, grid.n_y));
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(Error::Kind::format, "field contains non-finite values");
        }
    }
}

Field2D make_field(VariableKind variable, const GridSpec& grid, double fill,
                   const std::string& init_time, int lead_hours) {
    grid.validate();
    Field2D f;
    f.variable = variable;
    f.grid = grid;
    f.values.assign(grid.size(), fill);
    f.init_time = init_time;
    f.lead_hours = lead_hours;
    return f;
}

void validate_station(const Station& s, const GridSpec& grid) {
    const double lat_lo = grid.lat0 + grid.d_lat;
    const double lat_hi = grid.lat_max() - grid.d_lat;
    const double lon_lo = grid.lon0 + grid.d_lon;
    const double lon_hi = grid.lon_max() - grid.d_lon;
    if (s.lat < lat_lo || s.lat > lat_hi || s.lon < lon_lo || s.lon > lon_hi) {
        throw Error(Error::Kind::config,
                    fmt::format("station '{}' at ({}, {}) is outside the grid interior", s.id,
                                s.lat, s.lon));
    }
}

std::pair<double, double> latlon_of(const GridSpec& grid, int i, int j) {
    if (i < 0 || i >= grid.n_y || j < 0 || j >= grid.n_x) {
        throw Error(Error::Kind::config,
                    fmt::format("grid index ({}, {}) out of range for {}x{}", i, j, grid.n_x,
                                grid.n_y));
    }
    return {grid.lat0 + i * grid.d_lat, grid.lon0 + j * grid.d_lon};
}

std::pair<int, int> nearest_index(const GridSpec& grid, double lat, double lon) {
    const int i = static_cast<int>(std::lround((lat - grid.lat0) / grid.d_lat));
    const int j = static_cast<int>(std::lround((lon - grid.lon0) / grid.d_lon));
    if (i < 0 || i >= grid.n_y || j < 0 || j >= grid.n_x) {
        throw Error(Error::Kind::config,
                    fmt::format("point ({}, {}) is outside the grid", lat, lon));
    }
    return {i, j};
}

double bilinear_sample(const Field2D& field, double lat, double lon) {
    const GridSpec& g = field.grid;
    double fi = (lat - g.lat0) / g.d_lat;
    double fj = (lon - g.lon0) / g.d_lon;
    // Tolerate rounding at the boundary itself.
    constexpr double kEdge = 1e-9;
    if (fi < -kEdge || fi > g.n_y - 1 + kEdge || fj < -kEdge || fj > g.n_x - 1 + kEdge) {
        throw Error(Error::Kind::config,
                    fmt::format("sample point ({}, {}) is outside the grid domain", lat, lon));
    }
    fi = std::clamp(fi, 0.0, static_cast<double>(g.n_y - 1));
    fj = std::clamp(fj, 0.0, static_cast<double>(g.n_x - 1));
    int i0 = static_cast<int>(std::floor(fi));
    int j0 = static_cast<int>(std::floor(fj));
    // Queries on the far boundary fold into the last cell with fraction 1.
    i0 = std::min(i0, g.n_y - 2);
    j0 = std::min(j0, g.n_x - 2);
    const double ti = fi - i0;
    const double tj = fj - j0;
    const double v00 = field.at(i0, j0);
    const double v01 = field.at(i0, j0 + 1);
    const double v10 = field.at(i0 + 1, j0);
    const double v11 = field.at(i0 + 1, j0 + 1);
    return (1.0 - ti) * ((1.0 - tj) * v00 + tj * v01) + ti * ((1.0 - tj) * v10 + tj * v11);
}

std::pair<double, double> local_km(double lat, double lon, double ref_lat, double ref_lon) {
    const double east = (lon - ref_lon) * kKmPerDegree *
                        std::cos(ref_lat * 3.14159265358979323846 / 180.0);
    const double north = (lat - ref_lat) * kKmPerDegree;
    return {east, north};
}

double distance_km(double lat1, double lon1, double lat2, double lon2) {
    const auto [east, north] = local_km(lat1, lon1, lat2, lon2);
    return std::hypot(east, north);
}

double distance_cells(const GridSpec& grid, double lat1, double lon1, double lat2, double lon2) {
    const double di = (lat1 - lat2) / grid.d_lat;
    const double dj = (lon1 - lon2) / grid.d_lon;
    return std::hypot(di, dj);
}

}  // namespace medcast
