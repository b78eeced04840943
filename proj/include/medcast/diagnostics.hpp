#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "medcast/grid.hpp"

namespace medcast {

struct CycloneDiagnostics {
    double lat = 0.0;
    double lon = 0.0;
    double central_pressure = 0.0;  // hPa, field value at the minimum
    double max_wind = 0.0;          // m/s, within the search radius of the center
    bool degenerate = false;        // flat field, center position meaningless
};

// Center: sub-cell quadratic fit around the global minimum of the 3x3-mean
// smoothed pressure field. Central pressure: raw field value at the
// discrete minimum. Max wind: strongest 10-m wind within search_radius_km
// of the center.
CycloneDiagnostics detect_cyclone(const Field2D& psea, const Field2D& u, const Field2D& v,
                                  double search_radius_km = 500.0);

// Local pressure minima (8-neighborhood after 3x3 smoothing) whose
// prominence reaches depth_threshold_hpa.
int count_minima(const Field2D& psea, double depth_threshold_hpa);

Field2D arithmetic_mean(const std::vector<Field2D>& fields);

// Mean latitude/longitude of detected feature positions.
std::pair<double, double> feature_midpoint(const std::vector<CycloneDiagnostics>& diags);

// Latitude of the front along the given longitude column: the point
// maximizing |dT/dy| * |d(u,v)/dy|, refined sub-cell. Not-found when the
// wind shear never reaches min_shear (m/s per cell).
std::optional<double> detect_front(const Field2D& t2m, const Field2D& u, const Field2D& v,
                                   double along_lon, double min_shear = 2.0);

// Speed in m/s and meteorological direction (degrees, the bearing the
// wind blows from, 0 = northerly).
std::pair<Field2D, Field2D> wind_speed_dir(const Field2D& u, const Field2D& v);

enum class DiffKind {
    linear,
    angular_deg,  // differences wrapped to (-180, 180]
};

// Eq-style pooled RMSE over T times and N stations:
// sqrt( (1/T) sum_t (1/N_t) sum_n (F - O)^2 ). Rows may have different
// lengths when observations are excluded (calm winds).
double rmse(const std::vector<std::vector<double>>& forecast,
            const std::vector<std::vector<double>>& observed, DiffKind kind = DiffKind::linear);

struct ObsRecord {
    int time_idx = 0;
    int lead_hours = 0;
    int station = 0;
    double speed = 0.0;
    double dir_deg = 0.0;
};

struct ObsSet {
    std::vector<ObsRecord> records;
    double noise_sigma = 0.0;
    double calm_threshold = 0.5;  // m/s; below it the direction is not verified
};

// A named candidate system: (time index, lead) -> (u10, v10).
struct WindSystem {
    std::string name;
    std::function<std::pair<const Field2D*, const Field2D*>(int time_idx, int lead)> fields;
};

struct VerificationRow {
    std::string system;
    int lead_hours = 0;
    std::string variable;  // "wind_speed" or "wind_dir"
    double rmse = 0.0;
    int n_stations = 0;
    int n_times = 0;
};

struct VerificationResult {
    std::vector<VerificationRow> rows;

    double value(const std::string& system, int lead, const std::string& variable) const;
};

// Synthetic station observations: truth winds bilinearly sampled at each
// station with independent Gaussian component noise.
ObsSet make_observations(
    const std::function<std::pair<const Field2D*, const Field2D*>(int, int)>& truth,
    int n_times, const std::vector<int>& leads, const std::vector<Station>& stations,
    double sigma_ms, std::uint64_t seed);

VerificationResult verify_against_stations(const std::vector<WindSystem>& systems,
                                           const ObsSet& obs,
                                           const std::vector<Station>& stations,
                                           int n_times, const std::vector<int>& leads);

}  // namespace medcast
