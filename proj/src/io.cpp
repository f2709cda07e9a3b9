#include "stull/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace stull {

static_assert(std::endian::native == std::endian::little,
              "the index container is written in host order and assumes little-endian");

namespace {

using Clock = std::chrono::steady_clock;
constexpr std::size_t kMaxReasons = 10;
constexpr char kMagic[8] = {'S', 'T', 'U', 'L', 'L', 'I', 'D', 'X'};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

// Returns an empty string on success, the rejection reason otherwise.
std::string parse_csv_row(std::string_view line, GeoPoint& out) {
    std::string_view fields[4];
    std::size_t n = 0;
    while (n < 4) {
        const auto comma = line.find(',');
        fields[n++] = line.substr(0, comma);
        if (comma == std::string_view::npos) break;
        line.remove_prefix(comma + 1);
    }
    if (n < 4) return "expected at least 4 columns, found " + std::to_string(n);
    std::uint64_t id;
    double x;
    double y;
    std::int64_t t;
    if (!parse_number(fields[0], id)) return "id is not an unsigned integer";
    if (!parse_number(fields[1], x)) return "x is not a number";
    if (!parse_number(fields[2], y)) return "y is not a number";
    if (!parse_number(fields[3], t)) return "t is not an integer";
    if (!std::isfinite(x) || !std::isfinite(y)) return "non-finite coordinate";
    out = GeoPoint(id, x, y, t);
    return {};
}

std::string parse_ndjson_row(std::string_view line, GeoPoint& out) {
    const auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return "not a JSON object";
    for (const char* key : {"id", "x", "y", "t"}) {
        if (!doc.contains(key)) return std::string("missing key '") + key + "'";
    }
    if (!doc["id"].is_number_unsigned() && !(doc["id"].is_number_integer() && doc["id"].get<std::int64_t>() >= 0)) {
        return "id is not an unsigned integer";
    }
    if (!doc["x"].is_number() || !doc["y"].is_number()) return "coordinate is not a number";
    if (!doc["t"].is_number_integer()) return "t is not an integer";
    const double x = doc["x"].get<double>();
    const double y = doc["y"].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y)) return "non-finite coordinate";
    out = GeoPoint(doc["id"].get<std::uint64_t>(), x, y, doc["t"].get<std::int64_t>());
    return {};
}

template <typename T>
void append_number(std::string& out, T value) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    out.append(buf, ptr);
}

// ---- binary container

class Writer {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        char raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        bytes_.append(raw, sizeof(T));
    }
    void put_point(const GeoPoint& p) {
        put(p.id);
        put(p.x);
        put(p.y);
        put(p.t);
    }
    void raw(const char* data, std::size_t n) { bytes_.append(data, n); }
    std::string& bytes() { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    GeoPoint get_point() {
        const auto id = get<std::uint64_t>();
        const auto x = get<double>();
        const auto y = get<double>();
        const auto t = get<std::int64_t>();
        return GeoPoint(id, x, y, t);
    }
    /// Guards reservations against counts a truncated file cannot back.
    void need(std::size_t n) const {
        if (n > bytes_.size() - pos_) throw FormatError("index file is truncated");
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::size_t kPointBytes = 32;

}  // namespace

PointFormat format_for_path(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    return ext == ".ndjson" || ext == ".jsonl" ? PointFormat::ndjson : PointFormat::csv;
}

IngestResult parse_points(std::istream& in, PointFormat format) {
    const auto start = Clock::now();
    IngestResult result;
    auto& rep = result.report;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = trim(line);
        if (text.empty()) continue;
        if (first && format == PointFormat::csv) {
            first = false;
            if (trim(text.substr(0, text.find(','))) == "id") continue;
        }
        first = false;
        ++rep.rows;
        GeoPoint p;
        const std::string why =
            format == PointFormat::csv ? parse_csv_row(text, p) : parse_ndjson_row(text, p);
        if (why.empty()) {
            result.points.push_back(p);
            ++rep.accepted;
        } else {
            ++rep.rejected;
            if (rep.reasons.size() < kMaxReasons) {
                rep.reasons.push_back("line " + std::to_string(line_no) + ": " + why);
            }
        }
    }
    rep.elapsed = Clock::now() - start;
    return result;
}

IngestResult read_points(const std::filesystem::path& path, PointFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return parse_points(in, format);
}

void write_points(std::ostream& out, std::span<const GeoPoint> points, PointFormat format) {
    std::string buf;
    if (format == PointFormat::csv) buf = "id,x,y,t\n";
    for (const GeoPoint& p : points) {
        if (format == PointFormat::csv) {
            append_number(buf, p.id);
            buf += ',';
            append_number(buf, p.x);
            buf += ',';
            append_number(buf, p.y);
            buf += ',';
            append_number(buf, p.t);
        } else {
            buf += "{\"id\":";
            append_number(buf, p.id);
            buf += ",\"x\":";
            append_number(buf, p.x);
            buf += ",\"y\":";
            append_number(buf, p.y);
            buf += ",\"t\":";
            append_number(buf, p.t);
            buf += '}';
        }
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_points(const std::filesystem::path& path, std::span<const GeoPoint> points,
                  PointFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    write_points(out, points, format);
    if (!out) throw Error("write failed for " + path.string());
}

std::string serialize_index(const StullIndex& index) {
    const IndexConfig& cfg = index.config();
    const std::uint32_t h = cfg.height;
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.put(kIndexFormatVersion);
    w.put(std::uint32_t{0});
    w.put(h);
    w.put(cfg.bin_interval);
    w.put(cfg.origin_time);
    w.put(cfg.extent.min_x);
    w.put(cfg.extent.min_y);
    w.put(cfg.extent.max_x);
    w.put(cfg.extent.max_y);
    w.put(static_cast<std::uint64_t>(index.bins().size()));
    for (const auto& [bin_index, bin] : index.bins()) {
        w.put(bin_index);
        w.put(static_cast<std::uint64_t>(bin.count));
        for (const CircularArray& leaf : bin.pyramid.leaves()) {
            w.put(static_cast<std::uint64_t>(leaf.size()));
            for (std::uint32_t b : leaf.segment_bounds) w.put(b);
            for (const GeoPoint& p : leaf.data) w.put_point(p);
        }
        for (std::uint32_t level = 1; level < h; ++level) {
            for (std::uint32_t cell = 0; cell < index.geometry().cells_at(level); ++cell) {
                const auto& buf = bin.pyramid.buffer(level, cell);
                w.put(static_cast<std::uint64_t>(buf.size()));
                for (const GeoPoint& p : buf) w.put_point(p);
            }
        }
    }
    w.put(fnv1a(w.bytes()));
    return std::move(w.bytes());
}

StullIndex deserialize_index(std::string_view bytes) {
    if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw VersionError("not an index container (bad magic)");
    }
    Reader r(bytes.substr(sizeof kMagic));
    const auto version = r.get<std::uint32_t>();
    if (version != kIndexFormatVersion) {
        throw VersionError("unsupported index format version " + std::to_string(version) +
                           " (expected " + std::to_string(kIndexFormatVersion) + ")");
    }
    if (bytes.size() < 8 + sizeof kMagic + 8) throw FormatError("index file is truncated");
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, bytes.data() + bytes.size() - 8, 8);
    if (fnv1a(bytes.substr(0, bytes.size() - 8)) != stored_sum) {
        throw FormatError("index file checksum mismatch (truncated or corrupt)");
    }
    r = Reader(bytes.substr(sizeof kMagic + 4, bytes.size() - sizeof kMagic - 4 - 8));
    r.get<std::uint32_t>();  // flags, reserved

    IndexConfig cfg;
    cfg.height = r.get<std::uint32_t>();
    cfg.bin_interval = r.get<std::int64_t>();
    cfg.origin_time = r.get<std::int64_t>();
    cfg.extent.min_x = r.get<double>();
    cfg.extent.min_y = r.get<double>();
    cfg.extent.max_x = r.get<double>();
    cfg.extent.max_y = r.get<double>();
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("stored configuration is invalid: ") + e.what());
    }
    StullIndex index(cfg);
    const std::uint32_t h = cfg.height;
    const auto& geo = index.geometry();

    const auto bins = r.get<std::uint64_t>();
    for (std::uint64_t b = 0; b < bins; ++b) {
        const auto bin_index = r.get<std::int64_t>();
        if (index.bins().contains(bin_index)) throw FormatError("duplicate bin in index file");
        TemporalBin& bin = index.bin_for_write(bin_index);
        bin.count = static_cast<std::size_t>(r.get<std::uint64_t>());
        std::size_t total = 0;
        for (CircularArray& leaf : bin.pyramid.leaves()) {
            const auto size = r.get<std::uint64_t>();
            r.need((h + 1) * 4);
            leaf.segment_bounds.resize(h + 1);
            for (auto& bound : leaf.segment_bounds) bound = r.get<std::uint32_t>();
            if (leaf.segment_bounds.front() != 0 || leaf.segment_bounds.back() != size ||
                !std::is_sorted(leaf.segment_bounds.begin(), leaf.segment_bounds.end())) {
                throw FormatError("inconsistent segment bounds in index file");
            }
            r.need(size * kPointBytes);
            leaf.data.reserve(size);
            for (std::uint64_t i = 0; i < size; ++i) leaf.data.push_back(r.get_point());
            total += size;
        }
        if (total != bin.count) throw FormatError("bin count does not match its leaves");
        for (std::uint32_t level = 1; level < h; ++level) {
            for (std::uint32_t cell = 0; cell < geo.cells_at(level); ++cell) {
                auto& buf = bin.pyramid.buffer(level, cell);
                const auto size = r.get<std::uint64_t>();
                r.need(size * kPointBytes);
                buf.reserve(size);
                for (std::uint64_t i = 0; i < size; ++i) buf.push_back(r.get_point());
            }
        }
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes in index file");
    return index;
}

void save_index(const StullIndex& index, const std::filesystem::path& path) {
    const std::string bytes = serialize_index(index);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

StullIndex load_index(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_index(buf.str());
}

// ---- configuration

namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known,
                    const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_key(const nlohmann::json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

AppConfig parse_config(std::string_view json_text) {
    AppConfig cfg;
    try {
        const auto doc = nlohmann::json::parse(json_text);
        reject_unknown(doc, {"index", "sampling", "evaluation", "build_seed"}, "config");
        read_key(doc, "build_seed", cfg.build_seed);
        if (doc.contains("index")) {
            const auto& ix = doc["index"];
            reject_unknown(ix, {"height", "bin_interval", "origin_time", "extent"}, "index");
            read_key(ix, "height", cfg.index.height);
            read_key(ix, "bin_interval", cfg.index.bin_interval);
            read_key(ix, "origin_time", cfg.index.origin_time);
            if (ix.contains("extent")) {
                const auto e = ix["extent"].get<std::vector<double>>();
                if (e.size() != 4) throw ConfigError("extent must be [min_x, min_y, max_x, max_y]");
                cfg.index.extent = {e[0], e[1], e[2], e[3]};
            }
        }
        if (doc.contains("sampling")) {
            const auto& s = doc["sampling"];
            reject_unknown(s, {"updates_per_level", "master_seed"}, "sampling");
            read_key(s, "updates_per_level", cfg.sampling.updates_per_level);
            read_key(s, "master_seed", cfg.sampling.master_seed);
        }
        if (doc.contains("evaluation")) {
            const auto& ev = doc["evaluation"];
            reject_unknown(ev, {"grid_rows", "grid_cols", "bandwidth", "mask_threshold", "buffer_size", "seeds"},
                           "evaluation");
            read_key(ev, "grid_rows", cfg.evaluation.grid_rows);
            read_key(ev, "grid_cols", cfg.evaluation.grid_cols);
            read_key(ev, "bandwidth", cfg.evaluation.bandwidth);
            read_key(ev, "mask_threshold", cfg.evaluation.mask_threshold);
            read_key(ev, "buffer_size", cfg.evaluation.buffer_size);
            read_key(ev, "seeds", cfg.evaluation.seeds);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    cfg.index.validate();
    cfg.sampling.validate();
    return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string dump_config(const AppConfig& cfg) {
    const auto& e = cfg.index.extent;
    const nlohmann::json doc = {
        {"index",
         {{"height", cfg.index.height},
          {"bin_interval", cfg.index.bin_interval},
          {"origin_time", cfg.index.origin_time},
          {"extent", {e.min_x, e.min_y, e.max_x, e.max_y}}}},
        {"sampling",
         {{"updates_per_level", cfg.sampling.updates_per_level},
          {"master_seed", cfg.sampling.master_seed}}},
        {"evaluation",
         {{"grid_rows", cfg.evaluation.grid_rows},
          {"grid_cols", cfg.evaluation.grid_cols},
          {"bandwidth", cfg.evaluation.bandwidth},
          {"mask_threshold", cfg.evaluation.mask_threshold},
          {"buffer_size", cfg.evaluation.buffer_size},
          {"seeds", cfg.evaluation.seeds}}},
        {"build_seed", cfg.build_seed}};
    return doc.dump(2);
}

}  // namespace stull
