#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "medcast/common.hpp"

namespace medcast {

// Regular lat/lon grid. Row 0 is the southernmost row and latitude
// increases with the row index; column 0 is the westernmost column.
struct GridSpec {
    int n_x = 0;          // columns (east-west)
    int n_y = 0;          // rows (north-south)
    double lat0 = 0.0;    // latitude of row 0, degrees
    double lon0 = 0.0;    // longitude of column 0, degrees
    double d_lat = 0.2;   // degrees per row
    double d_lon = 0.25;  // degrees per column

    double lat_max() const { return lat0 + (n_y - 1) * d_lat; }
    double lon_max() const { return lon0 + (n_x - 1) * d_lon; }
    std::size_t size() const { return static_cast<std::size_t>(n_x) * n_y; }

    void validate() const;
    bool operator==(const GridSpec&) const = default;

    // 121 x 151 cells at 0.25 x 0.2 degrees around Japan. 121 is adopted
    // as the column (longitude) count.
    static GridSpec japan_target();
    // 64 x 64 cells with the same steps; the default for fast experiments.
    static GridSpec desk();
};

enum class VariableKind { u10, v10, t2m, rh2m, psea };

enum class NormClass {
    min_max,    // plain min-max scaling
    symmetric,  // range forced symmetric about zero (wind components)
};

NormClass norm_class_of(VariableKind v);
const char* variable_name(VariableKind v);   // "U10", ...
const char* variable_units(VariableKind v);  // "m/s", ...
VariableKind variable_from_name(const std::string& name);

// One variable on one grid at one valid time. Values are row-major,
// index i * n_x + j for row i, column j.
struct Field2D {
    VariableKind variable = VariableKind::psea;
    GridSpec grid;
    std::vector<double> values;
    std::string init_time;  // e.g. "2026-01-01T00Z"
    int lead_hours = 0;

    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * grid.n_x + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * grid.n_x + j]; }

    std::pair<double, double> min_max() const;
    // Throws Error::format on size mismatch or non-finite values.
    void validate() const;
};

Field2D make_field(VariableKind variable, const GridSpec& grid, double fill = 0.0,
                   const std::string& init_time = "", int lead_hours = 0);

struct Station {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
};

// Stations must sit at least one cell inside the grid boundary.
void validate_station(const Station& s, const GridSpec& grid);

std::pair<double, double> latlon_of(const GridSpec& grid, int i, int j);

// Inverse of latlon_of for points on (or near) grid nodes.
std::pair<int, int> nearest_index(const GridSpec& grid, double lat, double lon);

// Bilinear interpolation from the four surrounding grid points. The query
// must lie inside the grid's bounding box (boundary included).
double bilinear_sample(const Field2D& field, double lat, double lon);

// Local equirectangular displacement (east_km, north_km) of (lat, lon)
// relative to (ref_lat, ref_lon).
std::pair<double, double> local_km(double lat, double lon, double ref_lat, double ref_lon);
double distance_km(double lat1, double lon1, double lat2, double lon2);

// Distance in index space, units of grid cells.
double distance_cells(const GridSpec& grid, double lat1, double lon1, double lat2, double lon2);

}  // namespace medcast
