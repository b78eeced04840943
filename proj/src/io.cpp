#include "medcast/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace medcast {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void write_f32_le(std::ostream& out, const std::vector<float>& vals) {
    for (float f : vals) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        const unsigned char bytes[4] = {
            static_cast<unsigned char>(bits & 0xff),
            static_cast<unsigned char>((bits >> 8) & 0xff),
            static_cast<unsigned char>((bits >> 16) & 0xff),
            static_cast<unsigned char>((bits >> 24) & 0xff),
        };
        out.write(reinterpret_cast<const char*>(bytes), 4);
    }
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count, const std::string& what) {
    std::vector<float> vals(count);
    std::vector<unsigned char> buf(count * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
        throw Error(Error::Kind::format, fmt::format("{}: truncated float payload", what));
    }
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(buf[4 * i]) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                                   (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
        std::memcpy(&vals[i], &bits, sizeof(float));
    }
    return vals;
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

// Reads "key = value" lines up to a blank line; returns them in order.
std::vector<std::pair<std::string, std::string>> read_header_block(std::istream& in,
                                                                   const std::string& what) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) return kv;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(Error::Kind::format,
                        fmt::format("{}: header line without '=': '{}'", what, line));
        }
        kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    throw Error(Error::Kind::format, fmt::format("{}: header not terminated by blank line", what));
}

std::string header_value(const std::vector<std::pair<std::string, std::string>>& kv,
                         const std::string& key, const std::string& what) {
    for (const auto& [k, v] : kv) {
        if (k == key) return v;
    }
    throw Error(Error::Kind::format, fmt::format("{}: missing header field '{}'", what, key));
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(Error::Kind::config, fmt::format("{}: not a number: '{}'", context, s));
    }
}

long parse_long(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        const long v = std::stol(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(Error::Kind::config, fmt::format("{}: not an integer: '{}'", context, s));
    }
}

}  // namespace

Config Config::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Error::Kind::io, fmt::format("cannot open config file '{}'", path.string()));
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path.string());
}

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(Error::Kind::config,
                        fmt::format("{}:{}: expected 'key = value', got '{}'", origin, line_no, t));
        }
        const std::string key = trim(t.substr(0, eq));
        if (key.empty()) {
            throw Error(Error::Kind::config,
                        fmt::format("{}:{}: empty key", origin, line_no));
        }
        for (const auto& [k, e] : cfg.entries_) {
            if (k == key) {
                throw Error(Error::Kind::config,
                            fmt::format("{}:{}: duplicate key '{}' (first on line {})", origin,
                                        line_no, key, e.line));
            }
        }
        Entry e;
        e.value = trim(t.substr(eq + 1));
        e.line = line_no;
        cfg.entries_.emplace_back(key, std::move(e));
    }
    return cfg;
}

const Config::Entry& Config::entry(const std::string& key) const {
    for (const auto& [k, e] : entries_) {
        if (k == key) {
            e.consumed = true;
            return e;
        }
    }
    throw Error(Error::Kind::config,
                fmt::format("{}: missing required key '{}'", origin_, key));
}

bool Config::has(const std::string& key) const {
    for (const auto& [k, e] : entries_) {
        if (k == key) return true;
    }
    return false;
}

std::string Config::get_string(const std::string& key) const { return entry(key).value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? entry(key).value : fallback;
}

double Config::get_double(const std::string& key) const {
    const Entry& e = entry(key);
    return parse_double(e.value, fmt::format("{}:{}: key '{}'", origin_, e.line, key));
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long Config::get_int(const std::string& key) const {
    const Entry& e = entry(key);
    return parse_long(e.value, fmt::format("{}:{}: key '{}'", origin_, e.line, key));
}

long Config::get_int(const std::string& key, long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const Entry& e = entry(key);
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument(e.value);
        return v;
    } catch (const std::exception&) {
        throw Error(Error::Kind::config,
                    fmt::format("{}:{}: key '{}': not an unsigned integer: '{}'", origin_, e.line,
                                key, e.value));
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    const Entry& e = entry(key);
    const std::string ctx = fmt::format("{}:{}: key '{}'", origin_, e.line, key);
    std::vector<int> out;
    if (e.value.find(':') != std::string::npos) {
        // start:stop[:step]
        std::vector<long> parts;
        std::stringstream ss(e.value);
        std::string tok;
        while (std::getline(ss, tok, ':')) parts.push_back(parse_long(trim(tok), ctx));
        if (parts.size() < 2 || parts.size() > 3) {
            throw Error(Error::Kind::config, fmt::format("{}: expected start:stop[:step]", ctx));
        }
        const long step = parts.size() == 3 ? parts[2] : 1;
        if (step <= 0 || parts[1] < parts[0]) {
            throw Error(Error::Kind::config, fmt::format("{}: bad range", ctx));
        }
        for (long v = parts[0]; v <= parts[1]; v += step) out.push_back(static_cast<int>(v));
        return out;
    }
    std::stringstream ss(e.value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const std::string t = trim(tok);
        if (!t.empty()) out.push_back(static_cast<int>(parse_long(t, ctx)));
    }
    if (out.empty()) {
        throw Error(Error::Kind::config, fmt::format("{}: empty list", ctx));
    }
    return out;
}

std::vector<std::string> Config::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries_) {
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    }
    return out;
}

void Config::reject_unconsumed() const {
    for (const auto& [k, e] : entries_) {
        if (!e.consumed) {
            throw Error(Error::Kind::config,
                        fmt::format("{}:{}: unknown key '{}'", origin_, e.line, k));
        }
    }
}

void write_field_file(const std::filesystem::path& path, const FieldFile& ff) {
    ff.field.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", path.string()));
    }
    const Field2D& f = ff.field;
    out << "MFD1\n";
    out << "variable = " << variable_name(f.variable) << "\n";
    out << "units = " << variable_units(f.variable) << "\n";
    out << "n_x = " << f.grid.n_x << "\n";
    out << "n_y = " << f.grid.n_y << "\n";
    out << "lat0 = " << fmt_double(f.grid.lat0) << "\n";
    out << "lon0 = " << fmt_double(f.grid.lon0) << "\n";
    out << "d_lat = " << fmt_double(f.grid.d_lat) << "\n";
    out << "d_lon = " << fmt_double(f.grid.d_lon) << "\n";
    out << "model_id = " << ff.model_id << "\n";
    out << "init_time = " << f.init_time << "\n";
    out << "lead_hours = " << f.lead_hours << "\n";
    out << "norm_class = "
        << (norm_class_of(f.variable) == NormClass::symmetric ? "symmetric" : "minmax") << "\n";
    out << "\n";
    std::vector<float> payload(f.values.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        payload[i] = static_cast<float>(f.values[i]);
    }
    write_f32_le(out, payload);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("write failed for '{}'", path.string()));
    }
}

FieldFile read_field_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Error::Kind::io, fmt::format("cannot open '{}'", path.string()));
    }
    std::string magic;
    if (!std::getline(in, magic)) {
        throw Error(Error::Kind::format, fmt::format("'{}': empty file", path.string()));
    }
    if (!magic.empty() && magic.back() == '\r') magic.pop_back();
    if (magic != "MFD1") {
        throw Error(Error::Kind::format,
                    fmt::format("'{}': bad magic '{}', expected MFD1", path.string(), magic));
    }
    const std::string what = path.string();
    const auto kv = read_header_block(in, what);

    FieldFile ff;
    Field2D& f = ff.field;
    f.variable = variable_from_name(header_value(kv, "variable", what));
    f.grid.n_x = static_cast<int>(parse_long(header_value(kv, "n_x", what), what));
    f.grid.n_y = static_cast<int>(parse_long(header_value(kv, "n_y", what), what));
    f.grid.lat0 = parse_double(header_value(kv, "lat0", what), what);
    f.grid.lon0 = parse_double(header_value(kv, "lon0", what), what);
    f.grid.d_lat = parse_double(header_value(kv, "d_lat", what), what);
    f.grid.d_lon = parse_double(header_value(kv, "d_lon", what), what);
    ff.model_id = header_value(kv, "model_id", what);
    f.init_time = header_value(kv, "init_time", what);
    f.lead_hours = static_cast<int>(parse_long(header_value(kv, "lead_hours", what), what));
    f.grid.validate();

    const std::vector<float> payload = read_f32_le(in, f.grid.size(), what);
    // Exactly the declared payload, nothing more.
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0) {
        throw Error(Error::Kind::format,
                    fmt::format("'{}': trailing bytes after payload", path.string()));
    }
    f.values.assign(payload.begin(), payload.end());
    f.validate();
    return ff;
}

void save_weights(const std::filesystem::path& path, const NetworkWeights& w,
                  const std::map<std::string, std::string>& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", path.string()));
    }
    out << "MWT1\n";
    out << "base_channels = " << w.cfg.base_channels << "\n";
    out << "depth = " << w.cfg.depth << "\n";
    out << "convs_per_stage = " << w.cfg.convs_per_stage << "\n";
    out << "input_channels = " << w.cfg.input_channels << "\n";
    out << "output_channels = " << w.cfg.output_channels << "\n";
    out << "seed = " << w.cfg.seed << "\n";
    out << "tensor_count = " << w.tensors.size() << "\n";
    for (std::size_t i = 0; i < w.tensors.size(); ++i) {
        const auto& t = w.tensors[i];
        out << "tensor." << i << ".name = " << t.name << "\n";
        out << "tensor." << i << ".shape = " << t.shape[0] << " " << t.shape[1] << " "
            << t.shape[2] << " " << t.shape[3] << "\n";
    }
    for (const auto& [k, v] : meta) {
        out << "meta." << k << " = " << v << "\n";
    }
    out << "\n";
    for (const auto& t : w.tensors) {
        write_f32_le(out, t.data);
    }
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("write failed for '{}'", path.string()));
    }
}

std::pair<NetworkWeights, std::map<std::string, std::string>> load_weights(
    const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Error::Kind::io, fmt::format("cannot open '{}'", path.string()));
    }
    std::string magic;
    std::getline(in, magic);
    if (!magic.empty() && magic.back() == '\r') magic.pop_back();
    if (magic != "MWT1") {
        throw Error(Error::Kind::format,
                    fmt::format("'{}': bad magic '{}', expected MWT1", path.string(), magic));
    }
    const std::string what = path.string();
    const auto kv = read_header_block(in, what);

    NetworkWeights w;
    w.cfg.base_channels = static_cast<int>(parse_long(header_value(kv, "base_channels", what), what));
    w.cfg.depth = static_cast<int>(parse_long(header_value(kv, "depth", what), what));
    w.cfg.convs_per_stage =
        static_cast<int>(parse_long(header_value(kv, "convs_per_stage", what), what));
    w.cfg.input_channels =
        static_cast<int>(parse_long(header_value(kv, "input_channels", what), what));
    w.cfg.output_channels =
        static_cast<int>(parse_long(header_value(kv, "output_channels", what), what));
    w.cfg.seed = std::stoull(header_value(kv, "seed", what));
    const long count = parse_long(header_value(kv, "tensor_count", what), what);

    const auto layout = weight_layout(w.cfg);
    if (count != static_cast<long>(layout.size())) {
        throw Error(Error::Kind::format,
                    fmt::format("'{}': tensor count {} does not match config ({} expected)",
                                path.string(), count, layout.size()));
    }

    std::map<std::string, std::string> meta;
    for (const auto& [k, v] : kv) {
        if (k.rfind("meta.", 0) == 0) meta[k.substr(5)] = v;
    }

    for (long i = 0; i < count; ++i) {
        const std::string name = header_value(kv, fmt::format("tensor.{}.name", i), what);
        const std::string shape_s = header_value(kv, fmt::format("tensor.{}.shape", i), what);
        std::array<int, 4> shape{};
        std::stringstream ss(shape_s);
        for (int d = 0; d < 4; ++d) {
            if (!(ss >> shape[d])) {
                throw Error(Error::Kind::format,
                            fmt::format("'{}': bad shape for tensor {}", path.string(), i));
            }
        }
        if (name != layout[i].first || shape != layout[i].second) {
            throw Error(Error::Kind::format,
                        fmt::format("'{}': tensor {} is '{}' {}x{}x{}x{}, expected '{}' "
                                    "{}x{}x{}x{}",
                                    path.string(), i, name, shape[0], shape[1], shape[2], shape[3],
                                    layout[i].first, layout[i].second[0], layout[i].second[1],
                                    layout[i].second[2], layout[i].second[3]));
        }
        NamedTensor<float> t;
        t.name = name;
        t.shape = shape;
        const std::size_t n =
            static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] * shape[3];
        t.data.reserve(n);
        w.tensors.push_back(std::move(t));
    }
    for (auto& t : w.tensors) {
        const std::size_t n = static_cast<std::size_t>(t.shape[0]) * t.shape[1] * t.shape[2] *
                              t.shape[3];
        t.data = read_f32_le(in, n, what);
        for (float v : t.data) {
            if (!std::isfinite(v)) {
                throw Error(Error::Kind::format,
                            fmt::format("'{}': non-finite weight in '{}'", path.string(), t.name));
            }
        }
    }
    return {std::move(w), std::move(meta)};
}

std::vector<Station> read_stations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Error::Kind::io, fmt::format("cannot open stations file '{}'", path.string()));
    }
    std::vector<Station> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::stringstream ss(t);
        Station s;
        if (!(ss >> s.id >> s.lat >> s.lon)) {
            throw Error(Error::Kind::config,
                        fmt::format("{}:{}: expected 'id lat lon'", path.string(), line_no));
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) {
        throw Error(Error::Kind::config,
                    fmt::format("stations file '{}' has no stations", path.string()));
    }
    return out;
}

void write_stations(const std::filesystem::path& path, const std::vector<Station>& stations) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", path.string()));
    }
    out << "# id lat lon\n";
    for (const Station& s : stations) {
        out << s.id << " " << fmt_double(s.lat) << " " << fmt_double(s.lon) << "\n";
    }
}

void write_kv_file(const std::filesystem::path& path, const KeyValues& kv) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", path.string()));
    }
    for (const auto& [k, v] : kv) {
        out << k << " = " << v << "\n";
    }
}

std::string file_digest_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Error::Kind::io, fmt::format("cannot open '{}'", path.string()));
    }
    std::uint64_t h = 14695981039346656037ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
        if (!in) break;
    }
    return fmt::format("{:016x}", h);
}

void write_train_report_csv(const std::filesystem::path& path, const TrainReport& report) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", path.string()));
    }
    out << "epoch,train_loss,val_loss,best\n";
    for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
        out << (i + 1) << "," << fmt_double(report.train_loss[i]) << ","
            << fmt_double(report.val_loss[i]) << ","
            << (static_cast<int>(i + 1) == report.best_epoch ? 1 : 0) << "\n";
    }
}

void write_verification_csv(const std::filesystem::path& path, const VerificationResult& result) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Error::Kind::io, fmt::format("cannot write '{}'", path.string()));
    }
    out << "system,lead_hours,variable,rmse,n_stations,n_times\n";
    for (const VerificationRow& r : result.rows) {
        out << r.system << "," << r.lead_hours << "," << r.variable << "," << fmt_double(r.rmse)
            << "," << r.n_stations << "," << r.n_times << "\n";
    }
}

GridSpec grid_from_config(const Config& cfg, const std::string& prefix, const GridSpec& fallback) {
    GridSpec g = fallback;
    if (cfg.has(prefix + "preset")) {
        const std::string preset = cfg.get_string(prefix + "preset");
        if (preset == "desk") {
            g = GridSpec::desk();
        } else if (preset == "japan") {
            g = GridSpec::japan_target();
        } else {
            throw Error(Error::Kind::config,
                        fmt::format("unknown grid preset '{}' (desk, japan)", preset));
        }
    }
    g.n_x = static_cast<int>(cfg.get_int(prefix + "n_x", g.n_x));
    g.n_y = static_cast<int>(cfg.get_int(prefix + "n_y", g.n_y));
    g.lat0 = cfg.get_double(prefix + "lat0", g.lat0);
    g.lon0 = cfg.get_double(prefix + "lon0", g.lon0);
    g.d_lat = cfg.get_double(prefix + "d_lat", g.d_lat);
    g.d_lon = cfg.get_double(prefix + "d_lon", g.d_lon);
    g.validate();
    return g;
}

namespace {

ScenarioPool pool_from_config(const Config& cfg, const std::string& prefix) {
    ScenarioPool p;
    const std::string kind = cfg.get_string(prefix + "kind", "vortex");
    if (kind == "vortex") {
        p.kind = ScenarioPool::Kind::vortex;
    } else if (kind == "front") {
        p.kind = ScenarioPool::Kind::front;
    } else {
        throw Error(Error::Kind::config,
                    fmt::format("unknown pool kind '{}' (vortex, front)", kind));
    }
    p.count = static_cast<int>(cfg.get_int(prefix + "count"));
    p.base_seed = cfg.get_u64(prefix + "base_seed");
    p.dp_min = cfg.get_double(prefix + "dp_min", p.dp_min);
    p.dp_max = cfg.get_double(prefix + "dp_max", p.dp_max);
    p.r_max_min = cfg.get_double(prefix + "r_max_min", p.r_max_min);
    p.r_max_max = cfg.get_double(prefix + "r_max_max", p.r_max_max);
    p.v_max_min = cfg.get_double(prefix + "v_max_min", p.v_max_min);
    p.v_max_max = cfg.get_double(prefix + "v_max_max", p.v_max_max);
    p.contrast_min = cfg.get_double(prefix + "contrast_min", p.contrast_min);
    p.contrast_max = cfg.get_double(prefix + "contrast_max", p.contrast_max);
    p.width_min = cfg.get_double(prefix + "width_min", p.width_min);
    p.width_max = cfg.get_double(prefix + "width_max", p.width_max);
    p.speed_cells_min = cfg.get_double(prefix + "speed_cells_min", p.speed_cells_min);
    p.speed_cells_max = cfg.get_double(prefix + "speed_cells_max", p.speed_cells_max);
    p.background_wind_max = cfg.get_double(prefix + "background_wind_max", p.background_wind_max);
    p.noise_amplitude = cfg.get_double(prefix + "noise_amplitude", p.noise_amplitude);
    p.margin_cells = cfg.get_double(prefix + "margin_cells", p.margin_cells);
    return p;
}

KeyValues pool_manifest(const ScenarioPool& p, const std::string& prefix) {
    KeyValues kv;
    kv.emplace_back(prefix + "kind", p.kind == ScenarioPool::Kind::vortex ? "vortex" : "front");
    kv.emplace_back(prefix + "count", std::to_string(p.count));
    kv.emplace_back(prefix + "base_seed", std::to_string(p.base_seed));
    kv.emplace_back(prefix + "dp_min", fmt_double(p.dp_min));
    kv.emplace_back(prefix + "dp_max", fmt_double(p.dp_max));
    kv.emplace_back(prefix + "r_max_min", fmt_double(p.r_max_min));
    kv.emplace_back(prefix + "r_max_max", fmt_double(p.r_max_max));
    kv.emplace_back(prefix + "v_max_min", fmt_double(p.v_max_min));
    kv.emplace_back(prefix + "v_max_max", fmt_double(p.v_max_max));
    kv.emplace_back(prefix + "contrast_min", fmt_double(p.contrast_min));
    kv.emplace_back(prefix + "contrast_max", fmt_double(p.contrast_max));
    kv.emplace_back(prefix + "width_min", fmt_double(p.width_min));
    kv.emplace_back(prefix + "width_max", fmt_double(p.width_max));
    kv.emplace_back(prefix + "speed_cells_min", fmt_double(p.speed_cells_min));
    kv.emplace_back(prefix + "speed_cells_max", fmt_double(p.speed_cells_max));
    kv.emplace_back(prefix + "background_wind_max", fmt_double(p.background_wind_max));
    kv.emplace_back(prefix + "noise_amplitude", fmt_double(p.noise_amplitude));
    kv.emplace_back(prefix + "margin_cells", fmt_double(p.margin_cells));
    return kv;
}

std::string ints_csv(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

TrainPlan load_train_plan(const std::filesystem::path& path) {
    const Config cfg = Config::parse_file(path);
    TrainPlan plan;
    plan.variable = variable_from_name(cfg.get_string("variable"));
    plan.grid = grid_from_config(cfg, "grid.", GridSpec::desk());
    if (cfg.has("pairing.t_list")) plan.pairing.t_list = cfg.get_int_list("pairing.t_list");
    if (cfg.has("pairing.dt_list")) plan.pairing.dt_list = cfg.get_int_list("pairing.dt_list");
    plan.net.base_channels = static_cast<int>(cfg.get_int("net.base_channels", 32));
    plan.net.depth = static_cast<int>(cfg.get_int("net.depth", 3));
    plan.net.convs_per_stage = static_cast<int>(cfg.get_int("net.convs_per_stage", 2));
    plan.net.seed = cfg.get_u64("net.seed", 1);
    plan.adam.lr = cfg.get_double("adam.lr", plan.adam.lr);
    plan.adam.beta1 = cfg.get_double("adam.beta1", plan.adam.beta1);
    plan.adam.beta2 = cfg.get_double("adam.beta2", plan.adam.beta2);
    plan.adam.eps = cfg.get_double("adam.eps", plan.adam.eps);
    plan.batch_size = static_cast<int>(cfg.get_int("batch_size", plan.batch_size));
    plan.max_epochs = static_cast<int>(cfg.get_int("max_epochs", plan.max_epochs));
    plan.patience = static_cast<int>(cfg.get_int("patience", plan.patience));
    plan.seed = cfg.get_u64("seed", 0);
    plan.train_pool = pool_from_config(cfg, "train_pool.");
    plan.val_pool = pool_from_config(cfg, "val_pool.");
    // Replay support: manifests carry extra record.* keys.
    for (const std::string& k : cfg.keys_with_prefix("record.")) {
        cfg.get_string(k);
    }
    cfg.reject_unconsumed();
    plan.validate();
    return plan;
}

KeyValues train_plan_manifest(const TrainPlan& plan) {
    KeyValues kv;
    kv.emplace_back("variable", variable_name(plan.variable));
    kv.emplace_back("grid.n_x", std::to_string(plan.grid.n_x));
    kv.emplace_back("grid.n_y", std::to_string(plan.grid.n_y));
    kv.emplace_back("grid.lat0", fmt_double(plan.grid.lat0));
    kv.emplace_back("grid.lon0", fmt_double(plan.grid.lon0));
    kv.emplace_back("grid.d_lat", fmt_double(plan.grid.d_lat));
    kv.emplace_back("grid.d_lon", fmt_double(plan.grid.d_lon));
    kv.emplace_back("pairing.t_list", ints_csv(plan.pairing.t_list));
    kv.emplace_back("pairing.dt_list", ints_csv(plan.pairing.dt_list));
    kv.emplace_back("net.base_channels", std::to_string(plan.net.base_channels));
    kv.emplace_back("net.depth", std::to_string(plan.net.depth));
    kv.emplace_back("net.convs_per_stage", std::to_string(plan.net.convs_per_stage));
    kv.emplace_back("net.seed", std::to_string(plan.net.seed));
    kv.emplace_back("adam.lr", fmt_double(plan.adam.lr));
    kv.emplace_back("adam.beta1", fmt_double(plan.adam.beta1));
    kv.emplace_back("adam.beta2", fmt_double(plan.adam.beta2));
    kv.emplace_back("adam.eps", fmt_double(plan.adam.eps));
    kv.emplace_back("batch_size", std::to_string(plan.batch_size));
    kv.emplace_back("max_epochs", std::to_string(plan.max_epochs));
    kv.emplace_back("patience", std::to_string(plan.patience));
    kv.emplace_back("seed", std::to_string(plan.seed));
    const KeyValues train_kv = pool_manifest(plan.train_pool, "train_pool.");
    const KeyValues val_kv = pool_manifest(plan.val_pool, "val_pool.");
    kv.insert(kv.end(), train_kv.begin(), train_kv.end());
    kv.insert(kv.end(), val_kv.begin(), val_kv.end());
    return kv;
}

SynthJob load_synth_job(const std::filesystem::path& path) {
    const Config cfg = Config::parse_file(path);
    SynthJob job;
    job.grid = grid_from_config(cfg, "grid.", GridSpec::desk());
    job.scenario.seed = cfg.get_u64("scenario.seed", 0);
    job.scenario.noise_amplitude =
        cfg.get_double("scenario.noise_amplitude", job.scenario.noise_amplitude);
    job.scenario.background_u = cfg.get_double("scenario.background_u", 0.0);
    job.scenario.background_v = cfg.get_double("scenario.background_v", 0.0);
    job.scenario.track_east_kmh = cfg.get_double("scenario.track_east_kmh", 0.0);
    job.scenario.track_north_kmh = cfg.get_double("scenario.track_north_kmh", 0.0);
    job.scenario.base_pressure = cfg.get_double("scenario.base_pressure", 1012.0);
    job.scenario.base_t2m = cfg.get_double("scenario.base_t2m", 20.0);
    job.scenario.base_rh2m = cfg.get_double("scenario.base_rh2m", 60.0);

    for (int i = 0;; ++i) {
        const std::string p = fmt::format("vortex.{}.", i);
        if (!cfg.has(p + "lat")) break;
        VortexParams vp;
        vp.lat = cfg.get_double(p + "lat");
        vp.lon = cfg.get_double(p + "lon");
        vp.p_env = cfg.get_double(p + "p_env", vp.p_env);
        vp.dp = cfg.get_double(p + "dp", vp.dp);
        vp.r_max_km = cfg.get_double(p + "r_max_km", vp.r_max_km);
        vp.v_max = cfg.get_double(p + "v_max", vp.v_max);
        vp.validate();
        job.scenario.features.emplace_back(vp);
    }
    for (int i = 0;; ++i) {
        const std::string p = fmt::format("front.{}.", i);
        if (!cfg.has(p + "lat")) break;
        FrontParams fp;
        fp.anchor_lat = cfg.get_double(p + "lat");
        fp.anchor_lon = cfg.get_double(p + "lon");
        fp.orientation_deg = cfg.get_double(p + "orientation_deg", fp.orientation_deg);
        fp.t_mid = cfg.get_double(p + "t_mid", fp.t_mid);
        fp.contrast_c = cfg.get_double(p + "contrast_c", fp.contrast_c);
        fp.width_km = cfg.get_double(p + "width_km", fp.width_km);
        fp.warm_u = cfg.get_double(p + "warm_u", fp.warm_u);
        fp.warm_v = cfg.get_double(p + "warm_v", fp.warm_v);
        fp.cold_u = cfg.get_double(p + "cold_u", fp.cold_u);
        fp.cold_v = cfg.get_double(p + "cold_v", fp.cold_v);
        fp.validate();
        job.scenario.features.emplace_back(fp);
    }

    for (int i = 0;; ++i) {
        const std::string p = fmt::format("model.{}.", i);
        if (!cfg.has(p + "id")) break;
        ModelPerturbation m;
        m.model_id = cfg.get_string(p + "id");
        m.track_displacement_km = cfg.get_double(p + "displacement_km", 0.0);
        m.displacement_bearing_deg = cfg.get_double(p + "bearing_deg", 0.0);
        m.ref_lead_h = cfg.get_double(p + "ref_lead_h", m.ref_lead_h);
        m.intensity_scale = cfg.get_double(p + "intensity_scale", 1.0);
        m.timing_offset_h = cfg.get_double(p + "timing_offset_h", 0.0);
        m.validate();
        job.models.push_back(std::move(m));
    }
    if (job.models.empty()) {
        job.models.push_back(ModelPerturbation{});
    }

    job.lead_hours = cfg.get_int_list("lead_hours");
    if (cfg.has("variables")) {
        std::stringstream ss(cfg.get_string("variables"));
        std::string tok;
        job.variables.clear();
        while (std::getline(ss, tok, ',')) {
            const auto b = tok.find_first_not_of(" \t");
            const auto e = tok.find_last_not_of(" \t");
            if (b == std::string::npos) continue;
            job.variables.push_back(variable_from_name(tok.substr(b, e - b + 1)));
        }
    } else {
        job.variables = {VariableKind::psea, VariableKind::u10, VariableKind::v10,
                         VariableKind::t2m, VariableKind::rh2m};
    }
    job.init_time = cfg.get_string("init_time", job.init_time);
    for (const std::string& k : cfg.keys_with_prefix("record.")) {
        cfg.get_string(k);
    }
    cfg.reject_unconsumed();
    return job;
}

KeyValues synth_job_manifest(const SynthJob& job) {
    KeyValues kv;
    kv.emplace_back("grid.n_x", std::to_string(job.grid.n_x));
    kv.emplace_back("grid.n_y", std::to_string(job.grid.n_y));
    kv.emplace_back("grid.lat0", fmt_double(job.grid.lat0));
    kv.emplace_back("grid.lon0", fmt_double(job.grid.lon0));
    kv.emplace_back("grid.d_lat", fmt_double(job.grid.d_lat));
    kv.emplace_back("grid.d_lon", fmt_double(job.grid.d_lon));
    kv.emplace_back("scenario.seed", std::to_string(job.scenario.seed));
    kv.emplace_back("scenario.noise_amplitude", fmt_double(job.scenario.noise_amplitude));
    kv.emplace_back("scenario.background_u", fmt_double(job.scenario.background_u));
    kv.emplace_back("scenario.background_v", fmt_double(job.scenario.background_v));
    kv.emplace_back("scenario.track_east_kmh", fmt_double(job.scenario.track_east_kmh));
    kv.emplace_back("scenario.track_north_kmh", fmt_double(job.scenario.track_north_kmh));
    kv.emplace_back("scenario.base_pressure", fmt_double(job.scenario.base_pressure));
    kv.emplace_back("scenario.base_t2m", fmt_double(job.scenario.base_t2m));
    kv.emplace_back("scenario.base_rh2m", fmt_double(job.scenario.base_rh2m));
    int vi = 0, fi = 0;
    for (const FeatureParams& f : job.scenario.features) {
        if (std::holds_alternative<VortexParams>(f)) {
            const VortexParams& vp = std::get<VortexParams>(f);
            const std::string p = fmt::format("vortex.{}.", vi++);
            kv.emplace_back(p + "lat", fmt_double(vp.lat));
            kv.emplace_back(p + "lon", fmt_double(vp.lon));
            kv.emplace_back(p + "p_env", fmt_double(vp.p_env));
            kv.emplace_back(p + "dp", fmt_double(vp.dp));
            kv.emplace_back(p + "r_max_km", fmt_double(vp.r_max_km));
            kv.emplace_back(p + "v_max", fmt_double(vp.v_max));
        } else {
            const FrontParams& fp = std::get<FrontParams>(f);
            const std::string p = fmt::format("front.{}.", fi++);
            kv.emplace_back(p + "lat", fmt_double(fp.anchor_lat));
            kv.emplace_back(p + "lon", fmt_double(fp.anchor_lon));
            kv.emplace_back(p + "orientation_deg", fmt_double(fp.orientation_deg));
            kv.emplace_back(p + "t_mid", fmt_double(fp.t_mid));
            kv.emplace_back(p + "contrast_c", fmt_double(fp.contrast_c));
            kv.emplace_back(p + "width_km", fmt_double(fp.width_km));
            kv.emplace_back(p + "warm_u", fmt_double(fp.warm_u));
            kv.emplace_back(p + "warm_v", fmt_double(fp.warm_v));
            kv.emplace_back(p + "cold_u", fmt_double(fp.cold_u));
            kv.emplace_back(p + "cold_v", fmt_double(fp.cold_v));
        }
    }
    for (std::size_t i = 0; i < job.models.size(); ++i) {
        const ModelPerturbation& m = job.models[i];
        const std::string p = fmt::format("model.{}.", i);
        kv.emplace_back(p + "id", m.model_id);
        kv.emplace_back(p + "displacement_km", fmt_double(m.track_displacement_km));
        kv.emplace_back(p + "bearing_deg", fmt_double(m.displacement_bearing_deg));
        kv.emplace_back(p + "ref_lead_h", fmt_double(m.ref_lead_h));
        kv.emplace_back(p + "intensity_scale", fmt_double(m.intensity_scale));
        kv.emplace_back(p + "timing_offset_h", fmt_double(m.timing_offset_h));
    }
    kv.emplace_back("lead_hours", ints_csv(job.lead_hours));
    std::string vars;
    for (std::size_t i = 0; i < job.variables.size(); ++i) {
        if (i) vars += ",";
        vars += variable_name(job.variables[i]);
    }
    kv.emplace_back("variables", vars);
    kv.emplace_back("init_time", job.init_time);
    return kv;
}

}  // namespace medcast
