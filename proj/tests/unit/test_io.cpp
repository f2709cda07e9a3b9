#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

#include "helpers.hpp"
#include "stull/invariants.hpp"
#include "stull/io.hpp"

using namespace stull;

namespace {

IngestResult parse(const std::string& text, PointFormat format) {
    std::istringstream in(text);
    return parse_points(in, format);
}

std::filesystem::path scratch(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("stull_test_" + name);
}

}  // namespace

TEST_CASE("format_for_path") {
    CHECK(format_for_path("a/b.ndjson") == PointFormat::ndjson);
    CHECK(format_for_path("b.jsonl") == PointFormat::ndjson);
    CHECK(format_for_path("b.csv") == PointFormat::csv);
    CHECK(format_for_path("b") == PointFormat::csv);
}

TEST_CASE("points round-trip through both text formats bit-exactly") {
    auto pts = testing::uniform_points(2000, 3, {-180, -90, 180, 90}, -500, 10 * kSecondsPerDay);
    pts.emplace_back(std::numeric_limits<std::uint64_t>::max(), 1e-300, -0.1, std::numeric_limits<std::int64_t>::min());
    for (PointFormat f : {PointFormat::csv, PointFormat::ndjson}) {
        std::ostringstream out;
        write_points(out, pts, f);
        const IngestResult back = parse(out.str(), f);
        CHECK(back.report.rows == pts.size());
        CHECK(back.report.accepted == pts.size());
        CHECK(back.report.rejected == 0);
        CHECK(back.points == pts);
    }
}

TEST_CASE("csv ingest: header, trailing columns and rejections") {
    const std::string text =
        "id,x,y,t,label\n"
        "1,0.5,0.25,100,foo\n"
        "2, 0.1 ,0.2,3\n"
        "\n"
        "3,0.1\n"
        "x,0.1,0.2,3\n"
        "4,0.1,0.2,3.5\n"
        "5,nan,0.2,3\n"
        "6,0.3,0.4,-7\n";
    const IngestResult r = parse(text, PointFormat::csv);
    CHECK(r.report.accepted == 3);
    CHECK(r.report.rejected == 4);
    CHECK(r.report.rows == r.report.accepted + r.report.rejected);
    CHECK(r.points.at(0) == GeoPoint(1, 0.5, 0.25, 100));
    CHECK(r.points.at(2) == GeoPoint(6, 0.3, 0.4, -7));
    REQUIRE(r.report.reasons.size() == 4);
    CHECK(r.report.reasons[0].rfind("line 5: ", 0) == 0);
    CHECK(r.report.reasons[1].rfind("line 6: ", 0) == 0);
}

TEST_CASE("only the first ten rejection reasons are kept") {
    std::string text;
    for (int i = 0; i < 25; ++i) text += "bad row\n";
    text += "1,0,0,0\n";
    const IngestResult r = parse(text, PointFormat::csv);
    CHECK(r.report.rejected == 25);
    CHECK(r.report.accepted == 1);
    CHECK(r.report.reasons.size() == 10);
}

TEST_CASE("ndjson ingest rejections") {
    const std::string text =
        "{\"id\":1,\"x\":0.5,\"y\":0.5,\"t\":9}\n"
        "{\"id\":2,\"x\":0.5,\"y\":0.5}\n"
        "[1,2,3]\n"
        "{\"id\":-3,\"x\":0.5,\"y\":0.5,\"t\":9}\n"
        "{\"id\":4,\"x\":\"a\",\"y\":0.5,\"t\":9}\n"
        "{not json\n";
    const IngestResult r = parse(text, PointFormat::ndjson);
    CHECK(r.report.accepted == 1);
    CHECK(r.report.rejected == 5);
    CHECK(r.report.reasons.front().find("missing key 't'") != std::string::npos);
}

TEST_CASE("empty inputs") {
    CHECK(parse("", PointFormat::csv).points.empty());
    CHECK(parse("id,x,y,t\n", PointFormat::csv).report.rows == 0);
    CHECK(parse("", PointFormat::ndjson).report.rejected == 0);
    CHECK_THROWS_AS(read_points(scratch("does_not_exist.csv"), PointFormat::csv), Error);
}

TEST_CASE("index container round trip is byte-identical and exact") {
    IndexConfig cfg;
    cfg.height = 5;
    cfg.bin_interval = 3600;
    cfg.origin_time = -7200;
    cfg.extent = {-10, -5, 10, 5};
    const auto pts = testing::uniform_points(20000, 11, cfg.extent, -7200, 5 * 3600);
    const StullIndex index = build_index(pts, cfg, 11);
    const std::string bytes = serialize_index(index);
    const StullIndex back = deserialize_index(bytes);
    CHECK(back == index);
    CHECK(serialize_index(back) == bytes);
    CHECK(check_invariants(back).ok());

    const StullIndex empty = build_index({}, cfg, 1);
    CHECK(deserialize_index(serialize_index(empty)) == empty);
}

TEST_CASE("corrupt containers are refused") {
    const auto pts = testing::uniform_points(3000, 12);
    const StullIndex index = build_index(pts, IndexConfig{}, 12);
    const std::string good = serialize_index(index);

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize_index(bad), VersionError);
    }
    SUBCASE("newer version") {
        std::string bad = good;
        const std::uint32_t v = kIndexFormatVersion + 1;
        std::memcpy(bad.data() + 8, &v, sizeof v);
        CHECK_THROWS_AS(deserialize_index(bad), VersionError);
    }
    SUBCASE("truncated") {
        for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
            CHECK_THROWS_AS(deserialize_index(std::string_view(good).substr(0, keep)), FormatError);
        }
    }
    SUBCASE("flipped payload byte") {
        for (std::size_t at : {std::size_t{30}, good.size() / 3, good.size() - 9}) {
            std::string bad = good;
            bad[at] = static_cast<char>(bad[at] ^ 0x40);
            CHECK_THROWS_AS(deserialize_index(bad), FormatError);
        }
    }
}

TEST_CASE("save, load and resume sampling on 10^5 points") {
    IndexConfig cfg;
    const auto pts = testing::uniform_points(100000, 13, cfg.extent, 0, 3 * kSecondsPerDay);
    const StullIndex index = build_index(pts, cfg, 13);
    const auto path = scratch("roundtrip.stl");
    save_index(index, path);
    const StullIndex loaded = load_index(path);
    std::filesystem::remove(path);
    CHECK(loaded == index);
    CHECK(check_invariants(loaded).ok());

    const Query q{{0.2, 0.3, 0.7, 0.9}, {3600, 2 * kSecondsPerDay}};
    const SamplingConfig sc{4, 99};
    const auto before = run_to_completion(index, q, sc);
    const auto after = run_to_completion(loaded, q, sc);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].points == after[i].points);
}

TEST_CASE("application config") {
    const AppConfig defaults = parse_config("{}");
    CHECK(defaults.index == IndexConfig{});
    CHECK(defaults.sampling.updates_per_level == 5);
    CHECK(defaults.build_seed == 42);
    CHECK(defaults.evaluation.grid_rows == 256);

    const AppConfig c = parse_config(R"({
        "index": {"height": 6, "bin_interval": 3600, "extent": [-180, -90, 180, 90]},
        "sampling": {"updates_per_level": 3, "master_seed": 8},
        "evaluation": {"seeds": [7, 8]},
        "build_seed": 1
    })");
    CHECK(c.index.height == 6);
    CHECK(c.index.bin_interval == 3600);
    CHECK(c.index.extent == SpatialRect{-180, -90, 180, 90});
    CHECK(c.sampling.updates_per_level == 3);
    CHECK(c.sampling.master_seed == 8);
    CHECK(c.evaluation.seeds == std::vector<std::uint64_t>{7, 8});
    CHECK(c.build_seed == 1);

    const AppConfig again = parse_config(dump_config(c));
    CHECK(again.index == c.index);
    CHECK(dump_config(again) == dump_config(c));

    CHECK_THROWS_AS(parse_config(R"({"index": {"heigth": 4}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"extra": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"index": {"extent": [1, 2, 3]}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"index": {"height": "four"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
}
