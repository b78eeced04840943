// Command-line front end: synthetic forecast generation, network training,
// intermediate-forecast inference, station verification, and rendering.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 file format or
// shape error, 4 numerical failure, 5 I/O error, 1 unexpected.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "medcast/dataset.hpp"
#include "medcast/diagnostics.hpp"
#include "medcast/infer.hpp"
#include "medcast/io.hpp"
#include "medcast/train.hpp"

namespace fs = std::filesystem;
using namespace medcast;

namespace {

int exit_code_for(Error::Kind kind) {
    switch (kind) {
        case Error::Kind::config: return 2;
        case Error::Kind::format: return 3;
        case Error::Kind::numeric: return 4;
        case Error::Kind::io: return 5;
    }
    return 1;
}

std::string lead_file_name(const std::string& model_id, VariableKind var, int lead) {
    std::string v = variable_name(var);
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return fmt::format("{}_{}_ft{:03d}.mfd1", model_id, v, lead);
}

struct CommonOpts {
    std::string out_dir = ".";
    std::string manifest_path;  // default: <out_dir>/<cmd>_manifest.txt
    bool single_thread = false;
    std::optional<std::uint64_t> seed;
};

fs::path manifest_target(const CommonOpts& c, const std::string& cmd) {
    if (!c.manifest_path.empty()) return c.manifest_path;
    return fs::path(c.out_dir) / fmt::format("{}_manifest.txt", cmd);
}

void add_common(CLI::App* cmd, CommonOpts& c, bool with_seed = true) {
    cmd->add_option("--out-dir", c.out_dir, "Output directory");
    cmd->add_option("--manifest", c.manifest_path, "Manifest file path override");
    cmd->add_flag("--single-thread", c.single_thread,
                  "Force the deterministic single-threaded mode (execution is "
                  "single-threaded either way; the flag pins it for reproduction runs)");
    if (with_seed) {
        cmd->add_option("--seed", [&c](const std::vector<std::string>& vals) {
            c.seed = std::stoull(vals.at(0));
            return true;
        }, "Seed override");
    }
}

int cmd_synth(const std::string& config_path, const CommonOpts& common) {
    SynthJob job = load_synth_job(config_path);
    if (common.seed) job.scenario.seed = *common.seed;
    fs::create_directories(common.out_dir);

    KeyValues manifest = synth_job_manifest(job);
    manifest.emplace_back("record.command", "synth");
    manifest.emplace_back("record.tool_version", kToolVersion);
    manifest.emplace_back("record.config", config_path);
    manifest.emplace_back("record.config_digest", file_digest_hex(config_path));

    int files = 0;
    for (const ModelPerturbation& model : job.models) {
        const ForecastRun run =
            generate_run(job.scenario, model, job.grid, job.lead_hours, job.init_time);
        for (int lead : job.lead_hours) {
            for (VariableKind var : job.variables) {
                const fs::path path =
                    fs::path(common.out_dir) / lead_file_name(model.model_id, var, lead);
                write_field_file(path, FieldFile{model.model_id, run.field(lead, var)});
                manifest.emplace_back(fmt::format("record.output.{}", files),
                                      path.filename().string());
                manifest.emplace_back(fmt::format("record.output.{}.digest", files),
                                      file_digest_hex(path));
                ++files;
            }
        }
    }
    write_kv_file(manifest_target(common, "synth"), manifest);
    fmt::print("synth: wrote {} field files to {}\n", files, common.out_dir);
    return 0;
}

int cmd_train(const std::string& plan_path, const CommonOpts& common) {
    TrainPlan plan = load_train_plan(plan_path);
    if (common.seed) plan.seed = *common.seed;
    fs::create_directories(common.out_dir);

    auto [weights, report] = train_variable(plan);

    std::string var = variable_name(plan.variable);
    std::transform(var.begin(), var.end(), var.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    const fs::path ckpt = fs::path(common.out_dir) / fmt::format("{}_weights.mwt1", var);
    save_weights(ckpt, weights, {{"variable", variable_name(plan.variable)},
                                 {"tool_version", kToolVersion}});
    report.checkpoint_path = ckpt.string();

    const fs::path report_path = fs::path(common.out_dir) / "train_report.csv";
    write_train_report_csv(report_path, report);

    KeyValues manifest = train_plan_manifest(plan);
    manifest.emplace_back("record.command", "train");
    manifest.emplace_back("record.tool_version", kToolVersion);
    manifest.emplace_back("record.plan", plan_path);
    manifest.emplace_back("record.plan_digest", file_digest_hex(plan_path));
    manifest.emplace_back("record.checkpoint", ckpt.string());
    manifest.emplace_back("record.checkpoint_digest", file_digest_hex(ckpt));
    manifest.emplace_back("record.report", report_path.string());
    manifest.emplace_back("record.best_epoch", std::to_string(report.best_epoch));
    manifest.emplace_back("record.best_val_loss", fmt::format("{:.17g}", report.best_val_loss));
    manifest.emplace_back("record.epochs_run", std::to_string(report.train_loss.size()));
    manifest.emplace_back("record.train_samples", std::to_string(report.n_train_samples));
    manifest.emplace_back("record.val_samples", std::to_string(report.n_val_samples));
    write_kv_file(manifest_target(common, "train"), manifest);

    fmt::print("train: {} epochs, best epoch {} (val loss {:.6g}), checkpoint {}\n",
               report.train_loss.size(), report.best_epoch, report.best_val_loss, ckpt.string());
    return 0;
}

int run_medcast_job(const std::string& checkpoint, const std::vector<std::string>& inputs,
                    const std::string& tree_layout, const std::string& out_name,
                    const CommonOpts& common) {
    auto [weights, meta] = load_weights(checkpoint);
    if (inputs.size() < 2) {
        throw Error(Error::Kind::config, "medcast needs at least two input fields");
    }

    std::vector<CombineTree::Leaf> leaves;
    for (const std::string& in : inputs) {
        FieldFile ff = read_field_file(in);
        leaves.push_back(CombineTree::Leaf{ff.model_id, std::move(ff.field)});
    }
    const auto it = meta.find("variable");
    if (it != meta.end() && it->second != variable_name(leaves.front().field.variable)) {
        throw Error(Error::Kind::config,
                    fmt::format("checkpoint was trained for {}, inputs are {}", it->second,
                                variable_name(leaves.front().field.variable)));
    }

    std::string joined;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (i) joined += ",";
        joined += leaves[i].model_id;
    }
    const VariableKind var = leaves.front().field.variable;
    const int lead = leaves.front().field.lead_hours;

    const CombineTree tree = tree_layout.empty()
                                 ? CombineTree::balanced(std::move(leaves))
                                 : CombineTree::parse(tree_layout, std::move(leaves));
    const Field2D result = medcast_combine(weights, tree);

    fs::create_directories(common.out_dir);
    const fs::path out_path =
        fs::path(common.out_dir) /
        (out_name.empty() ? lead_file_name(fmt::format("med({})", joined), var, lead) : out_name);
    write_field_file(out_path, FieldFile{fmt::format("med({})", joined), result});

    KeyValues manifest;
    manifest.emplace_back("checkpoint", checkpoint);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        manifest.emplace_back(fmt::format("input.{}", i), inputs[i]);
    }
    if (!tree_layout.empty()) manifest.emplace_back("tree", tree_layout);
    if (!out_name.empty()) manifest.emplace_back("out", out_name);
    manifest.emplace_back("record.command", "medcast");
    manifest.emplace_back("record.tool_version", kToolVersion);
    manifest.emplace_back("record.tree", tree.layout());
    manifest.emplace_back("record.checkpoint_digest", file_digest_hex(checkpoint));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        manifest.emplace_back(fmt::format("record.input.{}.digest", i),
                              file_digest_hex(inputs[i]));
    }
    manifest.emplace_back("record.output", out_path.string());
    manifest.emplace_back("record.output_digest", file_digest_hex(out_path));
    write_kv_file(manifest_target(common, "medcast"), manifest);

    fmt::print("medcast: combined {} inputs (tree {}) into {}\n", inputs.size(), tree.layout(),
               out_path.string());
    return 0;
}

int cmd_medcast(const std::string& checkpoint, const std::vector<std::string>& inputs,
                const std::string& tree_layout, const std::string& out_name,
                const std::string& replay, const CommonOpts& common) {
    if (!replay.empty()) {
        const Config m = Config::parse_file(replay);
        std::vector<std::string> rin;
        for (int i = 0;; ++i) {
            const std::string key = fmt::format("input.{}", i);
            if (!m.has(key)) break;
            rin.push_back(m.get_string(key));
        }
        return run_medcast_job(m.get_string("checkpoint"), rin, m.get_string("tree", ""),
                               m.get_string("out", ""), common);
    }
    if (checkpoint.empty()) {
        throw Error(Error::Kind::config, "medcast requires --checkpoint (or --replay)");
    }
    return run_medcast_job(checkpoint, inputs, tree_layout, out_name, common);
}

// A system is "name=prefix[,prefix...]", one prefix per verification time;
// prefix expands to <prefix>_<var>_ft<LLL>.mfd1 as written by synth.
struct SystemSpec {
    std::string name;
    std::vector<std::string> prefixes;
};

SystemSpec parse_system_spec(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
        throw Error(Error::Kind::config,
                    fmt::format("system spec '{}' must be name=prefix[,prefix...]", spec));
    }
    SystemSpec out;
    out.name = spec.substr(0, eq);
    std::string rest = spec.substr(eq + 1);
    std::size_t pos = 0;
    while (pos != std::string::npos) {
        const auto comma = rest.find(',', pos);
        out.prefixes.push_back(rest.substr(pos, comma == std::string::npos ? comma : comma - pos));
        pos = comma == std::string::npos ? comma : comma + 1;
    }
    if (out.prefixes.empty()) {
        throw Error(Error::Kind::config, fmt::format("system spec '{}' has no runs", spec));
    }
    return out;
}

int cmd_verify(const std::string& truth_spec, const std::vector<std::string>& system_specs,
               const std::string& stations_path, const std::vector<int>& leads, double sigma,
               const CommonOpts& common) {
    const SystemSpec truth = parse_system_spec("truth=" + truth_spec);
    std::vector<SystemSpec> systems;
    for (const std::string& s : system_specs) systems.push_back(parse_system_spec(s));
    const std::vector<Station> stations = read_stations(stations_path);
    const int n_times = static_cast<int>(truth.prefixes.size());
    for (const SystemSpec& s : systems) {
        if (static_cast<int>(s.prefixes.size()) != n_times) {
            throw Error(Error::Kind::config,
                        fmt::format("system '{}' has {} runs, truth has {}", s.name,
                                    s.prefixes.size(), n_times));
        }
    }

    // Load everything up front; (system, time, lead) -> (u, v).
    struct Loaded {
        std::map<std::pair<int, int>, std::pair<Field2D, Field2D>> fields;
    };
    auto load_system = [&](const SystemSpec& spec) {
        Loaded l;
        for (int t = 0; t < n_times; ++t) {
            for (int lead : leads) {
                const auto stem = [&](VariableKind var) {
                    const fs::path base(spec.prefixes[t]);
                    return base.parent_path() /
                           lead_file_name(base.filename().string(), var, lead);
                };
                Field2D u = read_field_file(stem(VariableKind::u10)).field;
                Field2D v = read_field_file(stem(VariableKind::v10)).field;
                l.fields.emplace(std::make_pair(t, lead),
                                 std::make_pair(std::move(u), std::move(v)));
            }
        }
        return l;
    };

    const Loaded truth_fields = load_system(truth);
    std::vector<Loaded> system_fields;
    for (const SystemSpec& s : systems) system_fields.push_back(load_system(s));

    auto accessor = [](const Loaded& l) {
        return [&l](int t, int lead) {
            const auto& pr = l.fields.at({t, lead});
            return std::make_pair(&pr.first, &pr.second);
        };
    };

    const std::uint64_t seed = common.seed.value_or(0);
    const ObsSet obs =
        make_observations(accessor(truth_fields), n_times, leads, stations, sigma, seed);

    std::vector<WindSystem> wind_systems;
    for (std::size_t i = 0; i < systems.size(); ++i) {
        wind_systems.push_back(WindSystem{systems[i].name, accessor(system_fields[i])});
    }
    const VerificationResult result =
        verify_against_stations(wind_systems, obs, stations, n_times, leads);

    fs::create_directories(common.out_dir);
    const fs::path csv = fs::path(common.out_dir) / "verification.csv";
    write_verification_csv(csv, result);

    KeyValues manifest;
    manifest.emplace_back("record.command", "verify");
    manifest.emplace_back("record.tool_version", kToolVersion);
    manifest.emplace_back("record.truth", truth_spec);
    for (std::size_t i = 0; i < system_specs.size(); ++i) {
        manifest.emplace_back(fmt::format("record.system.{}", i), system_specs[i]);
    }
    manifest.emplace_back("record.stations", stations_path);
    manifest.emplace_back("record.noise_sigma", fmt::format("{:.17g}", sigma));
    manifest.emplace_back("record.seed", std::to_string(seed));
    manifest.emplace_back("record.calm_threshold", fmt::format("{:.17g}", obs.calm_threshold));
    manifest.emplace_back("record.calm_note",
                          "stations with observed speed below calm_threshold are excluded "
                          "from wind_dir rows");
    manifest.emplace_back("record.output", csv.string());
    manifest.emplace_back("record.output_digest", file_digest_hex(csv));
    write_kv_file(manifest_target(common, "verify"), manifest);

    fmt::print("verify: wrote {} rows to {}\n", result.rows.size(), csv.string());
    return 0;
}

int cmd_render(const std::string& input, const std::string& out, const std::string& contour,
               double contour_interval, int upscale, const CommonOpts& common) {
    if (upscale < 1) {
        throw Error(Error::Kind::config, "upscale must be >= 1");
    }
    const FieldFile ff = read_field_file(input);
    const Field2D& f = ff.field;
    const auto [lo, hi] = f.min_max();

    std::optional<Field2D> cf;
    double interval = contour_interval;
    if (!contour.empty()) {
        cf = read_field_file(contour).field;
        if (!(cf->grid == f.grid)) {
            throw Error(Error::Kind::format, "contour field is on a different grid");
        }
        if (interval <= 0.0) {
            const auto [clo, chi] = cf->min_max();
            interval = (chi - clo) > 0.0 ? (chi - clo) / 10.0 : 1.0;
        }
    }

    const int ny = f.grid.n_y;
    const int nx = f.grid.n_x;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(nx) * ny);
    const double range = hi - lo;
    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            // Image row 0 is the northernmost grid row.
            const double v = f.at(ny - 1 - i, j);
            const double t = range > 0.0 ? (v - lo) / range : 0.5;
            pixels[static_cast<std::size_t>(i) * nx + j] =
                static_cast<unsigned char>(std::lround(t * 255.0));
        }
    }
    if (cf) {
        auto level = [&](int gi, int gj) {
            return static_cast<long>(std::floor(cf->at(gi, gj) / interval));
        };
        for (int i = 0; i < ny; ++i) {
            for (int j = 0; j < nx; ++j) {
                const int gi = ny - 1 - i;
                const bool edge = (j + 1 < nx && level(gi, j) != level(gi, j + 1)) ||
                                  (gi - 1 >= 0 && level(gi, j) != level(gi - 1, j));
                if (edge) pixels[static_cast<std::size_t>(i) * nx + j] = 0;
            }
        }
    }

    std::ofstream img(out, std::ios::binary);
    if (!img) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", out));
    }
    img << "P5\n" << nx * upscale << " " << ny * upscale << "\n255\n";
    for (int i = 0; i < ny * upscale; ++i) {
        for (int j = 0; j < nx * upscale; ++j) {
            img.put(static_cast<char>(
                pixels[static_cast<std::size_t>(i / upscale) * nx + j / upscale]));
        }
    }
    img.close();

    KeyValues sidecar;
    sidecar.emplace_back("source", input);
    sidecar.emplace_back("variable", variable_name(f.variable));
    sidecar.emplace_back("units", variable_units(f.variable));
    sidecar.emplace_back("black_value", fmt::format("{:.17g}", lo));
    sidecar.emplace_back("white_value", fmt::format("{:.17g}", hi));
    sidecar.emplace_back("upscale", std::to_string(upscale));
    sidecar.emplace_back("orientation", "row 0 is the northernmost grid row");
    if (cf) {
        sidecar.emplace_back("contour_source", contour);
        sidecar.emplace_back("contour_interval", fmt::format("{:.17g}", interval));
    }
    write_kv_file(out + ".txt", sidecar);

    KeyValues manifest;
    manifest.emplace_back("record.command", "render");
    manifest.emplace_back("record.tool_version", kToolVersion);
    manifest.emplace_back("record.input", input);
    manifest.emplace_back("record.input_digest", file_digest_hex(input));
    manifest.emplace_back("record.output", out);
    manifest.emplace_back("record.output_digest", file_digest_hex(out));
    const fs::path mpath = common.manifest_path.empty() ? fs::path(out + ".manifest.txt")
                                                        : fs::path(common.manifest_path);
    write_kv_file(mpath, manifest);

    fmt::print("render: wrote {}\n", out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Intermediate-forecast toolkit: generates a blend of two or more NWP "
                 "fields whose features sit midway between the inputs"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate synthetic model runs as MFD1 files");
    std::string synth_config;
    CommonOpts synth_common;
    synth->add_option("--config", synth_config, "Scenario config file")->required();
    add_common(synth, synth_common);

    // train
    auto* train = app.add_subcommand("train", "Train a per-variable network from a plan");
    std::string train_plan;
    CommonOpts train_common;
    train->add_option("--plan", train_plan,
                      "Training plan (a train manifest also works)")->required();
    add_common(train, train_common);

    // medcast
    auto* med = app.add_subcommand("medcast", "Produce an intermediate forecast from 2^k inputs");
    std::string med_ckpt, med_tree, med_out, med_replay;
    std::vector<std::string> med_inputs;
    CommonOpts med_common;
    med->add_option("--checkpoint", med_ckpt, "MWT1 weights file");
    med->add_option("--tree", med_tree, "Combination layout, e.g. ((0,1),(2,3))");
    med->add_option("--out", med_out, "Output file name (inside --out-dir)");
    med->add_option("--replay", med_replay, "Re-run a recorded medcast manifest");
    med->add_option("inputs", med_inputs, "Input MFD1 files (2^k of one variable)");
    add_common(med, med_common, false);

    // verify
    auto* verify = app.add_subcommand("verify", "Station RMSE verification against a truth run");
    std::string verify_truth, verify_stations;
    std::vector<std::string> verify_systems;
    std::vector<int> verify_leads;
    double verify_sigma = 0.5;
    CommonOpts verify_common;
    verify->add_option("--truth", verify_truth, "Truth prefix[,prefix...] (one per time)")
        ->required();
    verify->add_option("--system", verify_systems, "name=prefix[,prefix...] (repeatable)")
        ->required();
    verify->add_option("--stations", verify_stations, "Stations file (id lat lon)")->required();
    verify->add_option("--leads", verify_leads, "Lead hours to verify")->required();
    verify->add_option("--sigma", verify_sigma, "Observation noise sigma, m/s");
    add_common(verify, verify_common);

    // render
    auto* render = app.add_subcommand("render", "Render an MFD1 field to a PGM image");
    std::string render_in, render_out, render_contour;
    double render_interval = 0.0;
    int render_upscale = 4;
    CommonOpts render_common;
    render->add_option("--input", render_in, "MFD1 field file")->required();
    render->add_option("--out", render_out, "Output PGM path")->required();
    render->add_option("--contour", render_contour, "Second MFD1 field drawn as contours");
    render->add_option("--contour-interval", render_interval, "Contour spacing in field units");
    render->add_option("--upscale", render_upscale, "Integer pixel upscale");
    add_common(render, render_common, false);

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(synth_config, synth_common);
        if (train->parsed()) return cmd_train(train_plan, train_common);
        if (med->parsed()) {
            return cmd_medcast(med_ckpt, med_inputs, med_tree, med_out, med_replay, med_common);
        }
        if (verify->parsed()) {
            return cmd_verify(verify_truth, verify_systems, verify_stations, verify_leads,
                              verify_sigma, verify_common);
        }
        if (render->parsed()) {
            return cmd_render(render_in, render_out, render_contour, render_interval,
                              render_upscale, render_common);
        }
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}
