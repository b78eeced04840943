#include <doctest.h>

#include <cmath>
#include <limits>

#include "medcast/grid.hpp"
#include "medcast/rng.hpp"

using namespace medcast;

TEST_CASE("latlon_of maps indices to coordinates") {
    const GridSpec g = GridSpec::japan_target();
    CHECK(g.n_x == 121);
    CHECK(g.n_y == 151);

    SUBCASE("origin") {
        const auto [lat, lon] = latlon_of(g, 0, 0);
        CHECK(lat == doctest::Approx(g.lat0).epsilon(1e-12));
        CHECK(lon == doctest::Approx(g.lon0).epsilon(1e-12));
    }
    SUBCASE("one step north") {
        const auto [lat, lon] = latlon_of(g, 1, 0);
        CHECK(lat == doctest::Approx(g.lat0 + 0.2).epsilon(1e-12));
        CHECK(lon == doctest::Approx(g.lon0).epsilon(1e-12));
    }
    SUBCASE("opposite corner of the 121x151 grid") {
        const auto [lat, lon] = latlon_of(g, 150, 120);
        CHECK(lat == doctest::Approx(g.lat0 + 150 * 0.2).epsilon(1e-12));
        CHECK(lon == doctest::Approx(g.lon0 + 120 * 0.25).epsilon(1e-12));
    }
    SUBCASE("out of range rejected") {
        CHECK_THROWS_AS(latlon_of(g, -1, 0), Error);
        CHECK_THROWS_AS(latlon_of(g, 151, 0), Error);
        CHECK_THROWS_AS(latlon_of(g, 0, 121), Error);
    }
}

TEST_CASE("latlon_of and nearest_index round-trip on every grid point") {
    const GridSpec g = GridSpec::desk();
    for (int i = 0; i < g.n_y; ++i) {
        for (int j = 0; j < g.n_x; ++j) {
            const auto [lat, lon] = latlon_of(g, i, j);
            const auto [ri, rj] = nearest_index(g, lat, lon);
            REQUIRE(ri == i);
            REQUIRE(rj == j);
        }
    }
}

TEST_CASE("bilinear_sample") {
    const GridSpec g{4, 4, 30.0, 130.0, 0.2, 0.25};
    Field2D f = make_field(VariableKind::t2m, g);
    // Distinct corner values in the cell (1,1)-(2,2).
    f.at(1, 1) = 10.0;
    f.at(1, 2) = 20.0;
    f.at(2, 1) = 30.0;
    f.at(2, 2) = 40.0;

    SUBCASE("exact at a grid point") {
        const auto [lat, lon] = latlon_of(g, 1, 1);
        CHECK(bilinear_sample(f, lat, lon) == doctest::Approx(10.0).epsilon(1e-12));
    }
    SUBCASE("cell center is the corner mean") {
        const auto [lat, lon] = latlon_of(g, 1, 1);
        CHECK(bilinear_sample(f, lat + 0.1, lon + 0.125) ==
              doctest::Approx(25.0).epsilon(1e-12));
    }
    SUBCASE("hand-computed tensor-product weights at fractions (0.25, 0.75)") {
        // lat fraction 0.25, lon fraction 0.75:
        // 0.75*(0.25*10 + 0.75*20) + 0.25*(0.25*30 + 0.75*40) = 22.5
        const auto [lat, lon] = latlon_of(g, 1, 1);
        CHECK(bilinear_sample(f, lat + 0.25 * g.d_lat, lon + 0.75 * g.d_lon) ==
              doctest::Approx(22.5).epsilon(1e-12));
    }
    SUBCASE("outside the grid rejected") {
        CHECK_THROWS_AS(bilinear_sample(f, g.lat0 - 0.01, g.lon0), Error);
        CHECK_THROWS_AS(bilinear_sample(f, g.lat0, g.lon_max() + 0.01), Error);
    }
    SUBCASE("boundary grid points are valid queries") {
        CHECK(bilinear_sample(f, g.lat_max(), g.lon_max()) == doctest::Approx(f.at(3, 3)));
    }
}

TEST_CASE("bilinear_sample is exact on affine fields") {
    const GridSpec g = GridSpec::desk();
    Field2D f = make_field(VariableKind::t2m, g);
    const double a = 2.0, b = 3.0, c = -1.5;
    for (int i = 0; i < g.n_y; ++i) {
        for (int j = 0; j < g.n_x; ++j) {
            const auto [lat, lon] = latlon_of(g, i, j);
            f.at(i, j) = a + b * lat + c * lon;
        }
    }
    const auto [lo, hi] = f.min_max();
    const double range = hi - lo;
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        const double lat = rng.uniform(g.lat0, g.lat_max());
        const double lon = rng.uniform(g.lon0, g.lon_max());
        const double got = bilinear_sample(f, lat, lon);
        REQUIRE(std::abs(got - (a + b * lat + c * lon)) <= 1e-9 * range);
    }
}

TEST_CASE("bilinear_sample stays within the corner envelope") {
    const GridSpec g{8, 8, 30.0, 130.0, 0.2, 0.25};
    Rng rng(11);
    Field2D f = make_field(VariableKind::psea, g);
    for (double& v : f.values) v = rng.uniform(-5.0, 5.0);
    for (int k = 0; k < 200; ++k) {
        const double fi = rng.uniform(0.0, g.n_y - 1.0);
        const double fj = rng.uniform(0.0, g.n_x - 1.0);
        const int i0 = std::min(static_cast<int>(fi), g.n_y - 2);
        const int j0 = std::min(static_cast<int>(fj), g.n_x - 2);
        const double corners[4] = {f.at(i0, j0), f.at(i0, j0 + 1), f.at(i0 + 1, j0),
                                   f.at(i0 + 1, j0 + 1)};
        const double lo = std::min({corners[0], corners[1], corners[2], corners[3]});
        const double hi = std::max({corners[0], corners[1], corners[2], corners[3]});
        const double v = bilinear_sample(f, g.lat0 + fi * g.d_lat, g.lon0 + fj * g.d_lon);
        REQUIRE(v >= lo - 1e-12);
        REQUIRE(v <= hi + 1e-12);
    }
}

TEST_CASE("station validation enforces the one-cell margin") {
    const GridSpec g = GridSpec::desk();
    CHECK_NOTHROW(validate_station({"s1", g.lat0 + 2 * g.d_lat, g.lon0 + 2 * g.d_lon}, g));
    CHECK_THROWS_AS(validate_station({"s2", g.lat0 + 0.5 * g.d_lat, g.lon0 + 2 * g.d_lon}, g),
                    Error);
    CHECK_THROWS_AS(validate_station({"s3", g.lat0 + 2 * g.d_lat, g.lon_max()}, g), Error);
}

TEST_CASE("field validation rejects non-finite values and bad sizes") {
    const GridSpec g{4, 4, 30.0, 130.0, 0.2, 0.25};
    Field2D f = make_field(VariableKind::psea, g, 1000.0);
    CHECK_NOTHROW(f.validate());
    f.at(2, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(f.validate(), Error);
    f.at(2, 2) = 0.0;
    f.values.pop_back();
    CHECK_THROWS_AS(f.validate(), Error);
}
