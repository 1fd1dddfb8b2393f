#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"
#include "visage/errors.hpp"
#include "visage/manifest.hpp"

using namespace visage;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace

TEST_CASE("image manifest round trip") {
    std::string dir = vtest::scratch_dir("manifest_img");
    std::vector<ImageRecord> records(2);
    records[0].id = "id000_img00";
    records[0].identity = "id000";
    records[0].path = "images/id000/img00.png";
    records[0].attrs.set("eyeglasses", 1.0);
    records[0].attrs.set("smiling", 0.0);
    records[1].id = "id001_img00";
    records[1].identity = "id001";
    records[1].path = "images/id001/img00.png";

    std::string path = dir + "/dataset.jsonl";
    write_image_manifest(path, records);

    // Header first, one record per line, trailing newline.
    std::string text = slurp(path);
    CHECK(text.find("\"schema_version\":1") != std::string::npos);
    CHECK(text.find("\"kind\":\"images\"") != std::string::npos);
    CHECK(text.back() == '\n');

    auto back = read_image_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == records[0].id);
    CHECK(back[0].identity == records[0].identity);
    CHECK(back[0].path == records[0].path);
    CHECK(back[0].attrs.get("eyeglasses") == 1.0);
    CHECK(back[0].attrs.get("smiling") == 0.0);
    CHECK(back[0].attrs.get("bangs") == 0.5);
    CHECK(back[1].id == records[1].id);
}

TEST_CASE("group manifest round trip") {
    std::string dir = vtest::scratch_dir("manifest_grp");
    std::vector<GroupRecord> groups(1);
    groups[0].identity = "id007";
    groups[0].image_ids = {"id007_img00", "id007_img01"};
    groups[0].paths = {"a.png", "b.png"};
    std::string path = dir + "/groups.jsonl";
    write_group_manifest(path, groups);
    auto back = read_group_manifest(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].identity == "id007");
    CHECK(back[0].image_ids == groups[0].image_ids);
    CHECK(back[0].paths == groups[0].paths);
}

TEST_CASE("sample manifest round trip preserves every field") {
    std::string dir = vtest::scratch_dir("manifest_smp");
    SampleRecord s;
    s.id = "id000_img00_v0";
    s.identity = "id000";
    s.hq_path = "images/id000/img00.png";
    s.lq_path = "lq/id000_img00_v0.jpg";
    s.ref_path = "images/id000/img01.png";
    s.ref_id = "id000_img01";
    s.swap_set = true;
    s.attrs.set("male", 1.0);
    s.prompts.pos = "positive prompt.";
    s.prompts.na = "negative attribute prompt.";
    s.prompts.nq = "negative quality prompt.";
    s.degradation.blur_sigma = 1.25;
    s.degradation.scale_factor = 8;
    s.degradation.noise_sigma = 0.02;
    s.degradation.jpeg_quality = 60;

    std::string path = dir + "/samples.jsonl";
    write_sample_manifest(path, {s});
    auto back = read_sample_manifest(path);
    REQUIRE(back.size() == 1);
    const SampleRecord& b = back[0];
    CHECK(b.id == s.id);
    CHECK(b.identity == s.identity);
    CHECK(b.hq_path == s.hq_path);
    CHECK(b.lq_path == s.lq_path);
    CHECK(b.ref_path == s.ref_path);
    CHECK(b.ref_id == s.ref_id);
    CHECK(b.swap_set == true);
    CHECK(b.attrs.get("male") == 1.0);
    CHECK(b.prompts.pos == s.prompts.pos);
    CHECK(b.prompts.na == s.prompts.na);
    CHECK(b.prompts.nq == s.prompts.nq);
    CHECK(b.degradation.blur_sigma == doctest::Approx(1.25));
    CHECK(b.degradation.scale_factor == 8);
    CHECK(b.degradation.noise_sigma == doctest::Approx(0.02));
    CHECK(b.degradation.jpeg_quality == 60);
}

TEST_CASE("negative manifest round trip") {
    std::string dir = vtest::scratch_dir("manifest_neg");
    std::vector<NegativeQualityRecord> recs(2);
    recs[0].path = "negatives/n0.jpg";
    recs[0].prompt = "A low quality image.";
    recs[1].path = "negatives/n1.jpg";
    recs[1].prompt = "A low quality image.";
    std::string path = dir + "/negatives.jsonl";
    write_negative_manifest(path, recs);
    auto back = read_negative_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].path == recs[0].path);
    CHECK(back[1].prompt == recs[1].prompt);
}

TEST_CASE("empty record lists round trip") {
    std::string dir = vtest::scratch_dir("manifest_empty");
    std::string path = dir + "/empty.jsonl";
    write_image_manifest(path, {});
    CHECK(read_image_manifest(path).empty());
}

TEST_CASE("manifest error taxonomy") {
    std::string dir = vtest::scratch_dir("manifest_err");
    std::vector<ImageRecord> records(1);
    records[0].id = "x";
    records[0].identity = "idx";
    records[0].path = "p.png";
    std::string path = dir + "/m.jsonl";
    write_image_manifest(path, records);
    std::string good = slurp(path);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_image_manifest(dir + "/nope.jsonl"), IoError);
    }

    SUBCASE("truncated final line (missing trailing newline)") {
        spit(path, good.substr(0, good.size() - 1));
        try {
            read_image_manifest(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 2);  // the record line is incomplete
        }
    }

    SUBCASE("malformed json line reports its 1-based number") {
        spit(path, good + "{this is not json}\n");
        try {
            read_image_manifest(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 3);
        }
    }

    SUBCASE("missing field") {
        spit(path, good + "{\"id\":\"y\",\"identity\":\"idy\"}\n");
        CHECK_THROWS_AS(read_image_manifest(path), ParseError);
    }

    SUBCASE("empty file") {
        spit(path, "");
        try {
            read_image_manifest(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line == 1);
        }
    }

    SUBCASE("header must come first") {
        // Strip the header line entirely.
        std::string no_header = good.substr(good.find('\n') + 1);
        spit(path, no_header);
        CHECK_THROWS_AS(read_image_manifest(path), ParseError);
    }

    SUBCASE("wrong kind") {
        GroupRecord g;
        g.identity = "idg";
        g.image_ids = {"a"};
        g.paths = {"p"};
        write_group_manifest(path, {g});
        CHECK_THROWS_AS(read_image_manifest(path), InvalidState);
    }

    SUBCASE("unsupported schema version") {
        std::string bumped = good;
        auto at = bumped.find("\"schema_version\":1");
        REQUIRE(at != std::string::npos);
        bumped.replace(at, 18, "\"schema_version\":2");
        spit(path, bumped);
        CHECK_THROWS_AS(read_image_manifest(path), InvalidState);
    }

    SUBCASE("unwritable destination") {
        CHECK_THROWS_AS(write_image_manifest(dir + "/no_dir/m.jsonl", records), IoError);
    }
}
