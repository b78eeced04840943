#include <doctest.h>

#include <cmath>

#include "medcast/diagnostics.hpp"
#include "medcast/grid.hpp"
#include "medcast/synth.hpp"

using namespace medcast;

namespace {

// One latitude cell of the desk grid in km; handy for exact-radius tests.
double cell_km() { return 0.2 * kKmPerDegree; }

VortexParams centered_vortex(const GridSpec& g, double r_max_km) {
    VortexParams vp;
    const auto [lat, lon] = latlon_of(g, g.n_y / 2, g.n_x / 2);
    vp.lat = lat;
    vp.lon = lon;
    vp.p_env = 1012.0;
    vp.dp = 30.0;
    vp.r_max_km = r_max_km;
    vp.v_max = 30.0;
    return vp;
}

}  // namespace

TEST_CASE("render_vortex matches the analytic profiles") {
    const GridSpec g = GridSpec::desk();
    const int ci = g.n_y / 2;
    const int cj = g.n_x / 2;

    SUBCASE("pressure depth and calm wind at the center") {
        const VortexParams vp = centered_vortex(g, 60.0);
        const VortexFields f = render_vortex(vp, g);
        CHECK(f.psea.at(ci, cj) == doctest::Approx(vp.p_env - vp.dp).epsilon(1e-12));
        CHECK(f.u10.at(ci, cj) == doctest::Approx(0.0));
        CHECK(f.v10.at(ci, cj) == doctest::Approx(0.0));
    }
    SUBCASE("wind speed peaks at r_max") {
        // r_max equal to one latitude cell puts the point one row north
        // exactly on the ring of maximum wind.
        const VortexParams vp = centered_vortex(g, cell_km());
        const VortexFields f = render_vortex(vp, g);
        const double speed = std::hypot(f.u10.at(ci + 1, cj), f.v10.at(ci + 1, cj));
        CHECK(speed == doctest::Approx(vp.v_max).epsilon(1e-9));
        // Counterclockwise: north of the center the flow points west.
        CHECK(f.u10.at(ci + 1, cj) == doctest::Approx(-vp.v_max).epsilon(1e-9));
    }
    SUBCASE("exponential tail and Rankine decay at 3 r_max") {
        const VortexParams vp = centered_vortex(g, cell_km());
        const VortexFields f = render_vortex(vp, g);
        // Three rows north is exactly 3 r_max.
        CHECK(f.psea.at(ci + 3, cj) ==
              doctest::Approx(vp.p_env - vp.dp * std::exp(-3.0)).epsilon(1e-9));
        const double speed = std::hypot(f.u10.at(ci + 3, cj), f.v10.at(ci + 3, cj));
        CHECK(speed == doctest::Approx(vp.v_max / 3.0).epsilon(1e-9));
    }
    SUBCASE("center outside the grid rejected") {
        VortexParams vp = centered_vortex(g, 60.0);
        vp.lat = g.lat_max() + 1.0;
        CHECK_THROWS_AS(render_vortex(vp, g), Error);
    }
    SUBCASE("parameter validation") {
        VortexParams vp = centered_vortex(g, 60.0);
        vp.dp = 0.0;
        CHECK_THROWS_AS(render_vortex(vp, g), Error);
        vp = centered_vortex(g, 10.0);  // r_max below 20 km
        CHECK_THROWS_AS(render_vortex(vp, g), Error);
    }
}

TEST_CASE("render_front matches the tanh profile") {
    const GridSpec g = GridSpec::desk();
    FrontParams fp;
    const auto [lat, lon] = latlon_of(g, g.n_y / 2, g.n_x / 2);
    fp.anchor_lat = lat;
    fp.anchor_lon = lon;
    fp.orientation_deg = 90.0;  // line runs east; warm side to the south
    fp.t_mid = 18.0;
    fp.contrast_c = 10.0;
    fp.width_km = 120.0;
    fp.warm_u = 6.0;
    fp.warm_v = 4.0;
    fp.cold_u = -4.0;
    fp.cold_v = -3.0;
    const FrontFields f = render_front(fp, g);

    SUBCASE("midpoint temperature on the line") {
        CHECK(front_signed_distance_km(fp, fp.anchor_lat, fp.anchor_lon) ==
              doctest::Approx(0.0).epsilon(1e-9));
        CHECK(f.t2m.at(g.n_y / 2, g.n_x / 2) == doctest::Approx(fp.t_mid).epsilon(1e-9));
    }
    SUBCASE("saturates to the warm-side temperature") {
        // ~3 widths onto the warm (south) side.
        const double lat_s = fp.anchor_lat - 3.0 * fp.width_km / kKmPerDegree;
        const double warm = fp.t_mid + 0.5 * fp.contrast_c;
        const double got = bilinear_sample(f.t2m, lat_s, fp.anchor_lon);
        CHECK(std::abs(got - warm) < 0.01 * warm);
    }
    SUBCASE("hand-evaluated blend a quarter width off the line") {
        // A width of four latitude cells puts the grid point one row south
        // of the anchor at exactly a quarter width, where the blend factor
        // is tanh(0.5).
        FrontParams fq = fp;
        fq.width_km = 4.0 * 0.2 * kKmPerDegree;
        const FrontFields fr = render_front(fq, g);
        const double expected = fq.t_mid + 0.5 * fq.contrast_c * std::tanh(0.5);
        CHECK(fr.t2m.at(g.n_y / 2 - 1, g.n_x / 2) ==
              doctest::Approx(expected).epsilon(1e-9));
    }
    SUBCASE("wind direction differs by at least 90 degrees across the front") {
        const double dot = fp.warm_u * fp.cold_u + fp.warm_v * fp.cold_v;
        CHECK(dot <= 0.0);
    }
    SUBCASE("anchor outside the grid rejected") {
        FrontParams bad = fp;
        bad.anchor_lon = g.lon0 - 5.0;
        CHECK_THROWS_AS(render_front(bad, g), Error);
    }
}

TEST_CASE("generate_run") {
    const GridSpec g = GridSpec::desk();
    Scenario sc;
    sc.seed = 99;
    sc.noise_amplitude = 0.03;
    sc.background_u = 2.0;
    sc.background_v = -1.0;
    sc.track_east_kmh = 8.0;
    sc.track_north_kmh = 4.0;
    VortexParams vp = centered_vortex(g, 60.0);
    sc.base_pressure = vp.p_env;
    sc.features.emplace_back(vp);
    const std::vector<int> leads{3, 6, 9, 12};

    SUBCASE("deterministic: same arguments produce identical runs") {
        const ForecastRun r1 = generate_run(sc, ModelPerturbation{}, g, leads);
        const ForecastRun r2 = generate_run(sc, ModelPerturbation{}, g, leads);
        for (int lead : leads) {
            REQUIRE(r1.field(lead, VariableKind::psea).values ==
                    r2.field(lead, VariableKind::psea).values);
            REQUIRE(r1.field(lead, VariableKind::u10).values ==
                    r2.field(lead, VariableKind::u10).values);
        }
    }
    SUBCASE("identity perturbation equals the unperturbed run") {
        ModelPerturbation identity;  // zero displacement, scale 1
        ModelPerturbation explicit_identity;
        explicit_identity.track_displacement_km = 0.0;
        explicit_identity.intensity_scale = 1.0;
        explicit_identity.timing_offset_h = 0.0;
        const ForecastRun r1 = generate_run(sc, identity, g, leads);
        const ForecastRun r2 = generate_run(sc, explicit_identity, g, leads);
        for (int lead : leads) {
            for (VariableKind v : {VariableKind::psea, VariableKind::u10, VariableKind::v10,
                                   VariableKind::t2m, VariableKind::rh2m}) {
                REQUIRE(r1.field(lead, v).values == r2.field(lead, v).values);
            }
        }
    }
    SUBCASE("zero features leave exactly the background flow") {
        Scenario flat = sc;
        flat.features.clear();
        const ForecastRun r = generate_run(flat, ModelPerturbation{}, g, leads);
        for (int lead : leads) {
            for (double v : r.field(lead, VariableKind::u10).values) {
                REQUIRE(v == flat.background_u);
            }
            for (double v : r.field(lead, VariableKind::v10).values) {
                REQUIRE(v == flat.background_v);
            }
        }
    }
    SUBCASE("fields satisfy their physical invariants") {
        const ForecastRun r = generate_run(sc, ModelPerturbation{}, g, leads);
        for (int lead : leads) {
            for (double v : r.field(lead, VariableKind::rh2m).values) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 100.0);
            }
            for (double v : r.field(lead, VariableKind::psea).values) {
                REQUIRE(v > 850.0);
                REQUIRE(v < 1100.0);
            }
            r.field(lead, VariableKind::psea).validate();
        }
    }
    SUBCASE("detected center tracks the analytic center at every lead") {
        Scenario clean = sc;
        clean.noise_amplitude = 0.0;
        const ForecastRun r = generate_run(clean, ModelPerturbation{}, g, leads);
        for (int lead : leads) {
            const CycloneDiagnostics d =
                detect_cyclone(r.field(lead, VariableKind::psea),
                               r.field(lead, VariableKind::u10),
                               r.field(lead, VariableKind::v10));
            const auto [tlat, tlon] = feature_center_at(clean, ModelPerturbation{}, lead);
            REQUIRE(distance_cells(g, d.lat, d.lon, tlat, tlon) <= 1.0);
        }
    }
    SUBCASE("advection outside the grid names the offending lead") {
        Scenario fast = sc;
        fast.track_east_kmh = 200.0;
        try {
            generate_run(fast, ModelPerturbation{}, g, {3, 6, 9, 12, 24});
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("lead") != std::string::npos);
        }
    }
    SUBCASE("noise amplitude above 5 percent rejected") {
        Scenario noisy = sc;
        noisy.noise_amplitude = 0.2;
        CHECK_THROWS_AS(generate_run(noisy, ModelPerturbation{}, g, leads), Error);
    }
}

TEST_CASE("opposing displacements separate the centers by twice the offset") {
    // Two models pushed 75 km to either side at the reference lead: the
    // detected centers end up ~150 km apart.
    const GridSpec g = GridSpec::desk();
    Scenario sc;
    sc.seed = 4;
    sc.noise_amplitude = 0.0;
    VortexParams vp = centered_vortex(g, 60.0);
    sc.base_pressure = vp.p_env;
    sc.features.emplace_back(vp);

    ModelPerturbation east;
    east.model_id = "east";
    east.track_displacement_km = 75.0;
    east.displacement_bearing_deg = 90.0;
    east.ref_lead_h = 51.0;
    ModelPerturbation west = east;
    west.model_id = "west";
    west.displacement_bearing_deg = 270.0;

    const std::vector<int> leads{51};
    const ForecastRun ra = generate_run(sc, east, g, leads);
    const ForecastRun rb = generate_run(sc, west, g, leads);
    const CycloneDiagnostics da =
        detect_cyclone(ra.field(51, VariableKind::psea), ra.field(51, VariableKind::u10),
                       ra.field(51, VariableKind::v10));
    const CycloneDiagnostics db =
        detect_cyclone(rb.field(51, VariableKind::psea), rb.field(51, VariableKind::u10),
                       rb.field(51, VariableKind::v10));
    const double sep = distance_km(da.lat, da.lon, db.lat, db.lon);
    CHECK(sep == doctest::Approx(150.0).epsilon(0.08));
}

TEST_CASE("perturbation validation") {
    ModelPerturbation p;
    p.intensity_scale = 2.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p.intensity_scale = 1.0;
    p.ref_lead_h = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
}
