#include <doctest.h>

#include <cmath>

#include "medcast/dataset.hpp"
#include "medcast/rng.hpp"
#include "medcast/synth.hpp"

using namespace medcast;

namespace {

ForecastRun vortex_run(const GridSpec& g, const std::vector<int>& leads) {
    Scenario sc;
    sc.seed = 21;
    sc.noise_amplitude = 0.02;
    sc.track_east_kmh = 10.0;
    VortexParams vp;
    const auto [lat, lon] = latlon_of(g, g.n_y / 2, g.n_x / 2);
    vp.lat = lat;
    vp.lon = lon;
    sc.base_pressure = vp.p_env;
    sc.features.emplace_back(vp);
    return generate_run(sc, ModelPerturbation{}, g, leads);
}

std::vector<int> hourly(int lo, int hi) {
    std::vector<int> v;
    for (int i = lo; i <= hi; ++i) v.push_back(i);
    return v;
}

}  // namespace

TEST_CASE("build_pairs") {
    const GridSpec g = GridSpec::desk();

    SUBCASE("paper-default pairing yields 12 samples per run") {
        const ForecastRun run = vortex_run(g, hourly(3, 20));
        const PairingConfig cfg;  // t in 9..14, dt in {3, 6}
        const auto samples = build_pairs(run, cfg, VariableKind::psea);
        CHECK(samples.size() == 12);
        for (const TrainingSample& s : samples) {
            CHECK(s.input_a.lead_hours == s.t - s.dt);
            CHECK(s.input_b.lead_hours == s.t + s.dt);
            CHECK(s.target.lead_hours == s.t);
            CHECK_FALSE(s.degenerate);
        }
    }
    SUBCASE("single combination") {
        const ForecastRun run = vortex_run(g, {7, 10, 13});
        PairingConfig cfg;
        cfg.t_list = {10};
        cfg.dt_list = {3};
        const auto samples = build_pairs(run, cfg, VariableKind::psea);
        REQUIRE(samples.size() == 1);
        CHECK(samples[0].input_a.lead_hours == 7);
        CHECK(samples[0].input_b.lead_hours == 13);
        CHECK(samples[0].target.lead_hours == 10);
    }
    SUBCASE("missing lead names the (t, dt) pair") {
        const ForecastRun run = vortex_run(g, hourly(4, 15));  // lead 16 absent
        PairingConfig cfg;
        cfg.t_list = {10};
        cfg.dt_list = {6};
        try {
            build_pairs(run, cfg, VariableKind::psea);
            FAIL("expected an error");
        } catch (const Error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("16") != std::string::npos);
            CHECK(msg.find("t=10") != std::string::npos);
            CHECK(msg.find("dt=6") != std::string::npos);
        }
    }
    SUBCASE("normalized triplet values always land in [0, 1]") {
        const ForecastRun run = vortex_run(g, hourly(3, 20));
        for (VariableKind var : {VariableKind::psea, VariableKind::u10, VariableKind::v10}) {
            for (const TrainingSample& s : build_pairs(run, PairingConfig{}, var)) {
                for (const Field2D* f : {&s.input_a, &s.input_b, &s.target}) {
                    const Field2D n = normalize(*f, s.norm);
                    const auto [lo, hi] = n.min_max();
                    REQUIRE(lo >= 0.0);
                    REQUIRE(hi <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("augment_swap is an involution that swaps the inputs") {
    const GridSpec g = GridSpec::desk();
    const ForecastRun run = vortex_run(g, {7, 10, 13});
    PairingConfig cfg;
    cfg.t_list = {10};
    cfg.dt_list = {3};
    const TrainingSample s = build_pairs(run, cfg, VariableKind::psea)[0];
    const TrainingSample sw = augment_swap(s);
    CHECK(sw.input_a.lead_hours == s.input_b.lead_hours);
    CHECK(sw.input_b.lead_hours == s.input_a.lead_hours);
    CHECK(sw.input_a.values == s.input_b.values);
    CHECK(sw.target.values == s.target.values);
    CHECK(sw.norm.x_min == s.norm.x_min);
    CHECK(sw.norm.x_max == s.norm.x_max);
    const TrainingSample back = augment_swap(sw);
    CHECK(back.input_a.values == s.input_a.values);
    CHECK(back.input_b.values == s.input_b.values);
}

TEST_CASE("compute_norm") {
    const GridSpec g{4, 4, 30.0, 130.0, 0.2, 0.25};
    auto field_with_range = [&](double lo, double hi) {
        Field2D f = make_field(VariableKind::psea, g, lo);
        f.at(0, 1) = hi;
        return f;
    };

    SUBCASE("plain min-max") {
        const NormParams n =
            compute_norm(std::vector<Field2D>{field_with_range(980.0, 1000.0)},
                         NormClass::min_max);
        CHECK(n.x_min == 980.0);
        CHECK(n.x_max == 1000.0);
    }
    SUBCASE("symmetric wind rule on range [-8, 6]") {
        const NormParams n = compute_norm(std::vector<Field2D>{field_with_range(-8.0, 6.0)},
                                          NormClass::symmetric);
        CHECK(n.x_min == -8.0);
        CHECK(n.x_max == 8.0);
    }
    SUBCASE("union of per-field ranges") {
        const std::vector<Field2D> fields{field_with_range(0.0, 1.0),
                                          field_with_range(-2.0, 3.0),
                                          field_with_range(1.0, 5.0)};
        const NormParams n = compute_norm(fields, NormClass::min_max);
        CHECK(n.x_min == -2.0);
        CHECK(n.x_max == 5.0);
    }
    SUBCASE("degenerate range rejected") {
        CHECK_THROWS_AS(compute_norm(std::vector<Field2D>{make_field(VariableKind::psea, g, 7.0)},
                                     NormClass::min_max),
                        Error);
    }
}

TEST_CASE("normalize and denormalize") {
    const GridSpec g{4, 4, 30.0, 130.0, 0.2, 0.25};

    SUBCASE("endpoints and midpoint") {
        NormParams n{980.0, 1000.0, NormClass::min_max};
        Field2D f = make_field(VariableKind::psea, g, 980.0);
        f.at(0, 1) = 1000.0;
        f.at(0, 2) = 990.0;
        const Field2D nf = normalize(f, n);
        CHECK(nf.at(0, 0) == 0.0);
        CHECK(nf.at(0, 1) == 1.0);
        CHECK(nf.at(0, 2) == 0.5);
    }
    SUBCASE("symmetric params map zero wind to exactly 0.5") {
        NormParams n{-8.0, 8.0, NormClass::symmetric};
        Field2D f = make_field(VariableKind::u10, g, 0.0);
        const Field2D nf = normalize(f, n);
        CHECK(nf.at(2, 2) == 0.5);  // exact, not approximate
    }
    SUBCASE("denormalize inverts the endpoints") {
        NormParams n{-8.0, 8.0, NormClass::symmetric};
        Field2D f = make_field(VariableKind::u10, g, 0.0);
        f.at(0, 0) = 0.0;
        f.at(0, 1) = 1.0;
        f.at(0, 2) = 0.5;
        const Field2D d = denormalize(f, n);
        CHECK(d.at(0, 0) == -8.0);
        CHECK(d.at(0, 1) == 8.0);
        CHECK(d.at(0, 2) == 0.0);
    }
    SUBCASE("round-trip within 1e-6 relative on random fields") {
        Rng rng(3);
        for (int k = 0; k < 50; ++k) {
            Field2D f = make_field(VariableKind::t2m, g);
            for (double& v : f.values) v = rng.uniform(-40.0, 40.0);
            const NormParams n = compute_norm(std::vector<Field2D>{f}, NormClass::min_max);
            const Field2D back = denormalize(normalize(f, n), n);
            for (std::size_t i = 0; i < f.values.size(); ++i) {
                REQUIRE(std::abs(back.values[i] - f.values[i]) <=
                        1e-6 * std::max(1.0, std::abs(f.values[i])));
            }
        }
    }
}

TEST_CASE("pad_replicate and trim_padding") {
    SUBCASE("paper grid pads to 128x152") {
        CHECK(padded_dim(121, 3) == 128);
        CHECK(padded_dim(151, 3) == 152);
        const int nx = 121, ny = 151;
        std::vector<double> vals(static_cast<std::size_t>(nx) * ny);
        for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(i) * 0.25;
        const auto padded = pad_replicate(vals, nx, ny, 128, 152);
        REQUIRE(padded.size() == 128u * 152u);
        // The last original column is replicated across the 7 new columns.
        for (int i = 0; i < ny; ++i) {
            for (int j = nx; j < 128; ++j) {
                REQUIRE(padded[static_cast<std::size_t>(i) * 128 + j] ==
                        vals[static_cast<std::size_t>(i) * nx + (nx - 1)]);
            }
        }
        // The last original row fills the one new row, corner included.
        for (int j = 0; j < 128; ++j) {
            REQUIRE(padded[151u * 128u + j] == padded[150u * 128u + j]);
        }
        const auto trimmed = trim_padding(padded, 128, 152, nx, ny);
        REQUIRE(trimmed == vals);  // bit-exact round trip
    }
    SUBCASE("padding to identical dims is a no-op") {
        const std::vector<double> vals{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
        CHECK(pad_replicate(vals, 3, 2, 3, 2) == vals);
    }
    SUBCASE("shrinking targets are rejected") {
        const std::vector<double> vals{1.0, 2.0, 3.0, 4.0};
        CHECK_THROWS_AS(pad_replicate(vals, 2, 2, 1, 2), Error);
        CHECK_THROWS_AS(trim_padding(vals, 2, 2, 3, 2), Error);
    }
    SUBCASE("random grids round-trip bit-exactly") {
        Rng rng(17);
        for (int k = 0; k < 50; ++k) {
            const int nx = 2 + static_cast<int>(rng.below(60));
            const int ny = 2 + static_cast<int>(rng.below(60));
            std::vector<double> vals(static_cast<std::size_t>(nx) * ny);
            for (double& v : vals) v = rng.uniform(-1e3, 1e3);
            const int tx = padded_dim(nx, 3);
            const int ty = padded_dim(ny, 3);
            const auto padded = pad_replicate(vals, nx, ny, tx, ty);
            REQUIRE(trim_padding(padded, tx, ty, nx, ny) == vals);
        }
    }
}

TEST_CASE("degenerate triplets are flagged, not dropped") {
    const GridSpec g = GridSpec::desk();
    Scenario flat;  // no features: T2M is constant
    flat.seed = 5;
    const ForecastRun run = generate_run(flat, ModelPerturbation{}, g, {7, 10, 13});
    PairingConfig cfg;
    cfg.t_list = {10};
    cfg.dt_list = {3};
    const auto samples = build_pairs(run, cfg, VariableKind::t2m);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].degenerate);
}
