#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medcast/diagnostics.hpp"
#include "medcast/grid.hpp"
#include "medcast/synth.hpp"
#include "medcast/train.hpp"
#include "medcast/unet.hpp"

namespace medcast {

inline constexpr const char* kToolVersion = "0.1.0";

// Line-oriented "key = value" files: full-line # comments, one key per
// file. Getters record which keys were consumed so loaders can reject
// unknown keys with their line number.
class Config {
public:
    static Config parse_file(const std::filesystem::path& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_int(const std::string& key) const;
    long get_int(const std::string& key, long fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    // Comma-separated integers, or "start:stop:step" (inclusive stop).
    std::vector<int> get_int_list(const std::string& key) const;

    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
    // Error::config naming the first never-consumed key and its line.
    void reject_unconsumed() const;
    const std::string& origin() const { return origin_; }

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool consumed = false;
    };
    const Entry& entry(const std::string& key) const;

    std::string origin_;
    std::vector<std::pair<std::string, Entry>> entries_;  // insertion order
};

// Gridded field files, format tag MFD1: a text header terminated by a
// blank line, then row-major 32-bit little-endian floats.
struct FieldFile {
    std::string model_id;
    Field2D field;
};

void write_field_file(const std::filesystem::path& path, const FieldFile& ff);
FieldFile read_field_file(const std::filesystem::path& path);

// Network checkpoint, format tag MWT1: text header with the config and a
// tensor directory, then 32-bit little-endian float payloads in directory
// order. Loading validates every shape against the config.
void save_weights(const std::filesystem::path& path, const NetworkWeights& w,
                  const std::map<std::string, std::string>& meta = {});
std::pair<NetworkWeights, std::map<std::string, std::string>> load_weights(
    const std::filesystem::path& path);

// Station list: "id lat lon" per line, # comments.
std::vector<Station> read_stations(const std::filesystem::path& path);
void write_stations(const std::filesystem::path& path, const std::vector<Station>& stations);

// Ordered key=value writer used for manifests and reports.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
void write_kv_file(const std::filesystem::path& path, const KeyValues& kv);

std::string file_digest_hex(const std::filesystem::path& path);

void write_train_report_csv(const std::filesystem::path& path, const TrainReport& report);
void write_verification_csv(const std::filesystem::path& path, const VerificationResult& result);

// Loaders shared by the CLI and tests.
GridSpec grid_from_config(const Config& cfg, const std::string& prefix, const GridSpec& fallback);
TrainPlan load_train_plan(const std::filesystem::path& path);
KeyValues train_plan_manifest(const TrainPlan& plan);

struct SynthJob {
    GridSpec grid;
    Scenario scenario;
    std::vector<ModelPerturbation> models;
    std::vector<int> lead_hours;
    std::vector<VariableKind> variables;
    std::string init_time = "2026-01-01T00Z";
};

SynthJob load_synth_job(const std::filesystem::path& path);
KeyValues synth_job_manifest(const SynthJob& job);

}  // namespace medcast
