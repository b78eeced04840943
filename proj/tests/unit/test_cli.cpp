#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "medcast/diagnostics.hpp"
#include "medcast/io.hpp"

using namespace medcast;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "cli_log.txt";
    const std::string cmd =
        fmt::format("{} {} > {} 2>&1", MEDCAST_CLI_PATH, args, log.string());
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

fs::path temp_dir() {
    static int counter = 0;
    const fs::path p =
        fs::temp_directory_path() / fmt::format("medcast_cli_test_{}_{}", ::getpid(), counter++);
    fs::create_directories(p);
    return p;
}

void write_two_model_config(const fs::path& path, int seed = 5) {
    std::ofstream(path) << "grid.n_x = 48\n"
                           "grid.n_y = 48\n"
                           "grid.lat0 = 27.0\n"
                           "grid.lon0 = 127.0\n"
                        << fmt::format("scenario.seed = {}\n", seed)
                        << "scenario.background_u = 2.0\n"
                           "vortex.0.lat = 31.5\n"
                           "vortex.0.lon = 132.5\n"
                           "vortex.0.dp = 30\n"
                           "vortex.0.r_max_km = 60\n"
                           "model.0.id = gsma\n"
                           "model.0.displacement_km = 70\n"
                           "model.0.bearing_deg = 90\n"
                           "model.1.id = msma\n"
                           "model.1.displacement_km = 70\n"
                           "model.1.bearing_deg = 270\n"
                           "lead_hours = 9,12\n"
                           "variables = PSEA,U10,V10\n";
}

}  // namespace

TEST_CASE("synth writes one file per model, variable, and lead") {
    const fs::path dir = temp_dir();
    write_two_model_config(dir / "scenario.cfg");
    const RunResult r = run_cli(
        fmt::format("synth --config {} --out-dir {}", (dir / "scenario.cfg").string(),
                    (dir / "out").string()),
        dir);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    int count = 0;
    for (const auto& e : fs::directory_iterator(dir / "out")) {
        if (e.path().extension() == ".mfd1") ++count;
    }
    CHECK(count == 2 * 3 * 2);  // 2 models x 3 variables x 2 leads
    CHECK(fs::exists(dir / "out" / "synth_manifest.txt"));
    CHECK(fs::exists(dir / "out" / "gsma_psea_ft009.mfd1"));

    SUBCASE("rerun with the same seed is byte-identical") {
        const RunResult r2 = run_cli(
            fmt::format("synth --config {} --out-dir {}", (dir / "scenario.cfg").string(),
                        (dir / "out2").string()),
            dir);
        REQUIRE(r2.exit_code == 0);
        for (const auto& e : fs::directory_iterator(dir / "out")) {
            if (e.path().extension() != ".mfd1") continue;
            const fs::path twin = dir / "out2" / e.path().filename();
            REQUIRE(fs::exists(twin));
            REQUIRE(file_digest_hex(e.path()) == file_digest_hex(twin));
        }
    }
    SUBCASE("the manifest replays to identical outputs") {
        const RunResult r3 = run_cli(
            fmt::format("synth --config {} --out-dir {}",
                        (dir / "out" / "synth_manifest.txt").string(), (dir / "out3").string()),
            dir);
        REQUIRE_MESSAGE(r3.exit_code == 0, r3.output);
        CHECK(file_digest_hex(dir / "out3" / "gsma_psea_ft009.mfd1") ==
              file_digest_hex(dir / "out" / "gsma_psea_ft009.mfd1"));
    }
}

TEST_CASE("synth rejects malformed configs with the bad key") {
    const fs::path dir = temp_dir();
    std::ofstream(dir / "bad.cfg") << "grid.n_x = 32\n"
                                      "grid.n_y = 32\n"
                                      "vortex.0.lat = 28.0\n"
                                      "vortex.0.lon = 129.0\n"
                                      "vortex.0.dqp = 30\n"
                                      "lead_hours = 9\n";
    const RunResult r = run_cli(
        fmt::format("synth --config {} --out-dir {}", (dir / "bad.cfg").string(),
                    (dir / "out").string()),
        dir);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("dqp") != std::string::npos);
    CHECK(r.output.find(":5") != std::string::npos);  // line number
}

TEST_CASE("medcast command") {
    const fs::path dir = temp_dir();
    write_two_model_config(dir / "scenario.cfg");
    REQUIRE(run_cli(fmt::format("synth --config {} --out-dir {}",
                                (dir / "scenario.cfg").string(), (dir / "runs").string()),
                    dir)
                .exit_code == 0);

    // An untrained checkpoint is enough to exercise the plumbing.
    NetworkConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.seed = 3;
    save_weights(dir / "weights.mwt1", init_network(cfg), {{"variable", "PSEA"}});

    const std::string a = (dir / "runs" / "gsma_psea_ft012.mfd1").string();
    const std::string b = (dir / "runs" / "msma_psea_ft012.mfd1").string();

    SUBCASE("two inputs produce one output plus manifest") {
        const RunResult r = run_cli(
            fmt::format("medcast --checkpoint {} --out-dir {} --out med.mfd1 {} {}",
                        (dir / "weights.mwt1").string(), (dir / "med").string(), a, b),
            dir);
        REQUIRE_MESSAGE(r.exit_code == 0, r.output);
        REQUIRE(fs::exists(dir / "med" / "med.mfd1"));
        const FieldFile out = read_field_file(dir / "med" / "med.mfd1");
        CHECK(out.field.lead_hours == 12);
        CHECK(out.model_id == "med(gsma,msma)");

        SUBCASE("replaying the manifest reproduces the output bit for bit") {
            const std::string digest = file_digest_hex(dir / "med" / "med.mfd1");
            const RunResult r2 = run_cli(
                fmt::format("medcast --replay {} --out-dir {}",
                            (dir / "med" / "medcast_manifest.txt").string(),
                            (dir / "med2").string()),
                dir);
            REQUIRE_MESSAGE(r2.exit_code == 0, r2.output);
            CHECK(file_digest_hex(dir / "med2" / "med.mfd1") == digest);
        }
    }
    SUBCASE("three inputs exit with the usage code, not the io code") {
        const RunResult r = run_cli(
            fmt::format("medcast --checkpoint {} --out-dir {} {} {} {}",
                        (dir / "weights.mwt1").string(), (dir / "med3").string(), a, b, a),
            dir);
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("power-of-two") != std::string::npos);
    }
    SUBCASE("missing input file is an io error") {
        const RunResult r = run_cli(
            fmt::format("medcast --checkpoint {} --out-dir {} {} {}",
                        (dir / "weights.mwt1").string(), (dir / "med4").string(), a,
                        (dir / "runs" / "absent.mfd1").string()),
            dir);
        CHECK(r.exit_code == 5);
    }
    SUBCASE("corrupt input file is a format error, distinct from io") {
        std::ofstream(dir / "corrupt.mfd1") << "not a field file";
        const RunResult r = run_cli(
            fmt::format("medcast --checkpoint {} --out-dir {} {} {}",
                        (dir / "weights.mwt1").string(), (dir / "med5").string(), a,
                        (dir / "corrupt.mfd1").string()),
            dir);
        CHECK(r.exit_code == 3);
    }
    SUBCASE("variable mismatch against the checkpoint is refused") {
        const RunResult r = run_cli(
            fmt::format("medcast --checkpoint {} --out-dir {} {} {}",
                        (dir / "weights.mwt1").string(), (dir / "med6").string(),
                        (dir / "runs" / "gsma_u10_ft012.mfd1").string(),
                        (dir / "runs" / "msma_u10_ft012.mfd1").string()),
            dir);
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("train command produces a checkpoint, report, and replayable manifest") {
    const fs::path dir = temp_dir();
    std::ofstream(dir / "plan.txt") << "variable = PSEA\n"
                                       "grid.n_x = 32\n"
                                       "grid.n_y = 32\n"
                                       "grid.lat0 = 28.0\n"
                                       "grid.lon0 = 128.0\n"
                                       "pairing.t_list = 12\n"
                                       "pairing.dt_list = 3\n"
                                       "net.base_channels = 4\n"
                                       "net.depth = 2\n"
                                       "net.seed = 2\n"
                                       "train_pool.count = 2\n"
                                       "train_pool.base_seed = 10\n"
                                       "train_pool.margin_cells = 8\n"
                                       "train_pool.speed_cells_max = 0.8\n"
                                       "val_pool.count = 1\n"
                                       "val_pool.base_seed = 99\n"
                                       "val_pool.margin_cells = 8\n"
                                       "val_pool.speed_cells_max = 0.8\n"
                                       "max_epochs = 3\n"
                                       "patience = 3\n"
                                       "seed = 4\n";
    const RunResult r = run_cli(fmt::format("train --plan {} --out-dir {} --single-thread",
                                            (dir / "plan.txt").string(), (dir / "t1").string()),
                                dir);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    REQUIRE(fs::exists(dir / "t1" / "psea_weights.mwt1"));
    REQUIRE(fs::exists(dir / "t1" / "train_report.csv"));
    REQUIRE(fs::exists(dir / "t1" / "train_manifest.txt"));

    SUBCASE("report has one row per epoch") {
        std::ifstream in(dir / "t1" / "train_report.csv");
        std::string line;
        int rows = 0;
        while (std::getline(in, line)) ++rows;
        CHECK(rows == 1 + 3);  // header + epochs
    }
    SUBCASE("rerunning from the manifest is bit-identical") {
        const RunResult r2 =
            run_cli(fmt::format("train --plan {} --out-dir {} --single-thread",
                                (dir / "t1" / "train_manifest.txt").string(),
                                (dir / "t2").string()),
                    dir);
        REQUIRE_MESSAGE(r2.exit_code == 0, r2.output);
        CHECK(file_digest_hex(dir / "t2" / "psea_weights.mwt1") ==
              file_digest_hex(dir / "t1" / "psea_weights.mwt1"));
        CHECK(file_digest_hex(dir / "t2" / "train_report.csv") ==
              file_digest_hex(dir / "t1" / "train_report.csv"));
    }
    SUBCASE("a plan whose pairing needs missing leads fails up front") {
        std::ofstream(dir / "bad_plan.txt") << "variable = PSEA\n"
                                               "pairing.t_list = 2\n"
                                               "pairing.dt_list = 6\n"
                                               "train_pool.count = 1\n"
                                               "train_pool.base_seed = 1\n"
                                               "val_pool.count = 1\n"
                                               "val_pool.base_seed = 9\n";
        const RunResult rb = run_cli(
            fmt::format("train --plan {} --out-dir {}", (dir / "bad_plan.txt").string(),
                        (dir / "t3").string()),
            dir);
        CHECK(rb.exit_code == 2);
    }
}

TEST_CASE("render command") {
    const fs::path dir = temp_dir();
    write_two_model_config(dir / "scenario.cfg");
    REQUIRE(run_cli(fmt::format("synth --config {} --out-dir {}",
                                (dir / "scenario.cfg").string(), (dir / "runs").string()),
                    dir)
                .exit_code == 0);

    SUBCASE("vortex render puts the darkest pixel at the detected center") {
        const fs::path field_path = dir / "runs" / "gsma_psea_ft012.mfd1";
        const RunResult r = run_cli(
            fmt::format("render --input {} --out {} --upscale 1", field_path.string(),
                        (dir / "vortex.pgm").string()),
            dir);
        REQUIRE_MESSAGE(r.exit_code == 0, r.output);
        REQUIRE(fs::exists(dir / "vortex.pgm"));
        REQUIRE(fs::exists(dir / "vortex.pgm.txt"));

        // Parse the PGM and find the darkest pixel.
        std::ifstream img(dir / "vortex.pgm", std::ios::binary);
        std::string magic;
        int w = 0, h = 0, maxval = 0;
        img >> magic >> w >> h >> maxval;
        img.get();
        REQUIRE(magic == "P5");
        std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
        img.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
        int best = 0;
        for (int i = 1; i < w * h; ++i) {
            if (px[i] < px[best]) best = i;
        }
        const int img_row = best / w;
        const int img_col = best % w;

        const FieldFile ff = read_field_file(field_path);
        const Field2D zero = make_field(VariableKind::u10, ff.field.grid, 0.0);
        const CycloneDiagnostics d = detect_cyclone(ff.field, zero, zero);
        const auto [ci, cj] = nearest_index(ff.field.grid, d.lat, d.lon);
        CHECK(std::abs((h - 1 - img_row) - ci) <= 1);
        CHECK(std::abs(img_col - cj) <= 1);
    }
    SUBCASE("constant field renders uniform gray") {
        const GridSpec g{16, 16, 28.0, 128.0, 0.2, 0.25};
        write_field_file(dir / "flat.mfd1",
                         FieldFile{"m", make_field(VariableKind::t2m, g, 18.0)});
        const RunResult r = run_cli(
            fmt::format("render --input {} --out {} --upscale 1", (dir / "flat.mfd1").string(),
                        (dir / "flat.pgm").string()),
            dir);
        REQUIRE(r.exit_code == 0);
        std::ifstream img(dir / "flat.pgm", std::ios::binary);
        std::string magic;
        int w, h, maxval;
        img >> magic >> w >> h >> maxval;
        img.get();
        std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
        img.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
        for (unsigned char p : px) REQUIRE(p == 128);
    }
    SUBCASE("corrupt input exits nonzero") {
        std::ofstream(dir / "junk.mfd1") << "garbage";
        const RunResult r = run_cli(
            fmt::format("render --input {} --out {}", (dir / "junk.mfd1").string(),
                        (dir / "junk.pgm").string()),
            dir);
        CHECK(r.exit_code == 3);
    }
}

TEST_CASE("verify command scores a perfect system at zero") {
    const fs::path dir = temp_dir();
    write_two_model_config(dir / "scenario.cfg");
    REQUIRE(run_cli(fmt::format("synth --config {} --out-dir {}",
                                (dir / "scenario.cfg").string(), (dir / "runs").string()),
                    dir)
                .exit_code == 0);

    const GridSpec g{48, 48, 27.0, 127.0, 0.2, 0.25};
    std::vector<Station> stations;
    for (int n = 0; n < 5; ++n) {
        stations.push_back({fmt::format("s{}", n), 28.0 + 0.8 * n, 128.0 + 0.9 * n});
    }
    write_stations(dir / "stations.txt", stations);

    const std::string truth_prefix = (dir / "runs" / "gsma").string();
    const RunResult r = run_cli(
        fmt::format("verify --truth {} --system self={} --system other={} --stations {} "
                    "--leads 9 12 --sigma 0 --out-dir {}",
                    truth_prefix, truth_prefix, (dir / "runs" / "msma").string(),
                    (dir / "stations.txt").string(), (dir / "v").string()),
        dir);
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    REQUIRE(fs::exists(dir / "v" / "verification.csv"));

    std::ifstream csv(dir / "v" / "verification.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "system,lead_hours,variable,rmse,n_stations,n_times");
    bool saw_self_speed = false;
    while (std::getline(csv, line)) {
        std::stringstream ss(line);
        std::string system, lead, var, rmse_s;
        std::getline(ss, system, ',');
        std::getline(ss, lead, ',');
        std::getline(ss, var, ',');
        std::getline(ss, rmse_s, ',');
        if (system == "self") {
            CHECK(std::stod(rmse_s) == doctest::Approx(0.0).epsilon(1e-9));
            if (var == "wind_speed") saw_self_speed = true;
        }
        if (system == "other" && var == "wind_speed") {
            CHECK(std::stod(rmse_s) > 0.1);
        }
    }
    CHECK(saw_self_speed);
}
