#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spectrum/scan.hpp"
#include "spectrum/synth.hpp"
#include "support.hpp"

using namespace spectrum;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

fs::path simple_fixture(const std::string& tag) {
    const fs::path dir = temp_dir("scan_" + tag);
    const fs::path file = dir / "model.safetensors";
    std::vector<TensorRecord> records;
    for (int layer = 0; layer < 2; ++layer) {
        const std::string base = "model.layers." + std::to_string(layer) + ".";
        records.push_back(matrix_to_record(base + "mlp.down_proj.weight",
                                           gen_noise(12, 10, 0.1, 100 + layer)));
        records.push_back(matrix_to_record(base + "self_attn.q_proj.weight",
                                           gen_spiked({10, 10, 0.05, {5.0}, 200u + layer})));
    }
    records.push_back(make_record("model.norm.weight", {10}, std::vector<float>(10, 1.0f)));
    records.push_back(matrix_to_record("model.embed_tokens.weight", gen_noise(32, 10, 0.1, 7)));
    write_fixture(records, file);
    return file;
}

} // namespace

TEST_CASE("group keys elide the layer index") {
    std::string key;
    int layer = 0;
    CHECK(split_group_key("model.layers.3.self_attn.q_proj.weight", key, layer));
    CHECK(key == "self_attn.q_proj");
    CHECK(layer == 3);

    CHECK(split_group_key("transformer.h.11.attn.c_attn.weight", key, layer));
    CHECK(key == "attn.c_attn");
    CHECK(layer == 11);

    CHECK_FALSE(split_group_key("model.embed_tokens.weight", key, layer));
    CHECK(key == "model.embed_tokens");
    CHECK(layer == -1);
}

TEST_CASE("same-role tensors across layers share a group") {
    const fs::path file = simple_fixture("groups");
    const CheckpointManifest manifest = open_checkpoint(file);
    const auto groups = discover_groups(manifest, {});

    REQUIRE(groups.size() == 2);
    CHECK(groups[0].group_key == "mlp.down_proj");
    REQUIRE(groups[0].members.size() == 2);
    CHECK(groups[0].members[0].name == "model.layers.0.mlp.down_proj.weight");
    CHECK(groups[0].members[1].name == "model.layers.1.mlp.down_proj.weight");
    CHECK(groups[1].group_key == "self_attn.q_proj");
}

TEST_CASE("non-2-D tensors are not grouped or skipped") {
    const fs::path file = simple_fixture("one_d");
    const CheckpointManifest manifest = open_checkpoint(file);
    const ScanConfig config;
    const auto report = scan(manifest, discover_groups(manifest, config), config);

    for (const auto& s : report.skipped) CHECK(s.name != "model.norm.weight");
    for (const auto& [key, entries] : report.groups) {
        for (const auto& e : entries) CHECK(e.name != "model.norm.weight");
    }
}

TEST_CASE("embedding matrices are excluded by default but overridable") {
    const fs::path file = simple_fixture("embed");
    const CheckpointManifest manifest = open_checkpoint(file);

    const ScanConfig config;
    const auto report = scan(manifest, discover_groups(manifest, config), config);
    REQUIRE(report.skipped.size() == 1);
    CHECK(report.skipped[0].name == "model.embed_tokens.weight");
    CHECK(report.skipped[0].reason == "excluded-by-default");

    ScanConfig open_config;
    open_config.default_excludes = false;
    const auto groups = discover_groups(manifest, open_config);
    bool found = false;
    for (const auto& g : groups) {
        for (const auto& m : g.members) found |= m.name == "model.embed_tokens.weight";
    }
    CHECK(found);
}

TEST_CASE("user patterns include and exclude") {
    const fs::path file = simple_fixture("patterns");
    const CheckpointManifest manifest = open_checkpoint(file);

    ScanConfig config;
    config.include = {"q_proj"};
    auto groups = discover_groups(manifest, config);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].group_key == "self_attn.q_proj");

    config = {};
    config.exclude = {"down_proj"};
    const auto report = scan(manifest, discover_groups(manifest, config), config);
    CHECK(report.groups.count("mlp.down_proj") == 0);
    bool excluded_listed = false;
    for (const auto& s : report.skipped) {
        excluded_listed |= s.name == "model.layers.0.mlp.down_proj.weight" &&
                           s.reason == "excluded-by-pattern";
    }
    CHECK(excluded_listed);

    config = {};
    config.include = {"(unclosed"};
    CHECK_THROWS_AS(discover_groups(manifest, config), PatternError);
}

TEST_CASE("coverage: every include-matching 2-D tensor is scanned or skipped") {
    const fs::path file = simple_fixture("coverage");
    const CheckpointManifest manifest = open_checkpoint(file);
    const ScanConfig config;
    const auto report = scan(manifest, discover_groups(manifest, config), config);

    std::size_t scanned = 0;
    for (const auto& [key, entries] : report.groups) scanned += entries.size();
    std::size_t two_d = 0;
    for (const auto& [name, entry] : manifest.tensors) {
        if (entry.shape.size() == 2) ++two_d;
    }
    CHECK(scanned + report.skipped.size() == two_d);
}

TEST_CASE("report is identical for any batch size") {
    const fs::path file = simple_fixture("batch");
    const CheckpointManifest manifest = open_checkpoint(file);

    std::string reference;
    for (std::size_t batch : {1u, 4u, 16u}) {
        ScanConfig config;
        config.batch_size = batch;
        const auto report = scan(manifest, discover_groups(manifest, config), config);
        const std::string bytes = serialize_report(report);
        if (reference.empty()) {
            reference = bytes;
        } else {
            CHECK(bytes == reference);
        }
    }
}

TEST_CASE("a tensor with missing bytes is skipped, the rest are scanned") {
    const fs::path dir = temp_dir("scan_missing");
    write_fixture({matrix_to_record("model.layers.0.mlp.w.weight", gen_noise(8, 8, 0.1, 1))},
                  dir / "shard-a.safetensors");
    write_fixture({matrix_to_record("model.layers.1.mlp.w.weight", gen_noise(8, 8, 0.1, 2))},
                  dir / "shard-b.safetensors");
    spit(dir / "model.safetensors.index.json",
         R"({"weight_map": {"model.layers.0.mlp.w.weight": "shard-a.safetensors",)"
         R"( "model.layers.1.mlp.w.weight": "shard-b.safetensors"}})");

    const CheckpointManifest manifest = open_checkpoint(dir);
    fs::resize_file(dir / "shard-b.safetensors", 24); // header survives, data gone

    const ScanConfig config;
    const auto report = scan(manifest, discover_groups(manifest, config), config);
    REQUIRE(report.groups.count("mlp.w") == 1);
    CHECK(report.groups.at("mlp.w").size() == 1);
    CHECK(report.groups.at("mlp.w")[0].name == "model.layers.0.mlp.w.weight");
    REQUIRE(report.skipped.size() == 1);
    CHECK(report.skipped[0].name == "model.layers.1.mlp.w.weight");
    CHECK(report.skipped[0].reason.find("truncated") != std::string::npos);
}

TEST_CASE("non-finite tensors are skipped with a reason") {
    const fs::path dir = temp_dir("scan_nan");
    auto bad = matrix_to_record("model.layers.0.mlp.w.weight", gen_noise(6, 6, 0.1, 3));
    bad.values[7] = std::numeric_limits<float>::quiet_NaN();
    write_fixture({bad, matrix_to_record("model.layers.1.mlp.w.weight", gen_noise(6, 6, 0.1, 4))},
                  dir / "m.safetensors");

    const CheckpointManifest manifest = open_checkpoint(dir / "m.safetensors");
    const ScanConfig config;
    const auto report = scan(manifest, discover_groups(manifest, config), config);
    REQUIRE(report.skipped.size() == 1);
    CHECK(report.skipped[0].reason == "non-finite-values");
    CHECK(report.groups.at("mlp.w").size() == 1);
}

TEST_CASE("within-group order: sentinel first, then descending, ties by layer") {
    const fs::path dir = temp_dir("scan_order");
    std::vector<TensorRecord> records;
    // layer 0: identity (infinite snr), layer 1: zero matrix (snr 0),
    // layers 2-3: spiked with growing rank
    std::vector<float> eye(64, 0.0f);
    for (int i = 0; i < 8; ++i) eye[static_cast<std::size_t>(9 * i)] = 1.0f;
    records.push_back(make_record("model.layers.0.mlp.w.weight", {8, 8}, eye));
    records.push_back(make_record("model.layers.1.mlp.w.weight", {8, 8},
                                  std::vector<float>(64, 0.0f)));
    records.push_back(matrix_to_record("model.layers.2.mlp.w.weight",
                                       gen_spiked({32, 32, 1e-3, {10.0}, 5})));
    records.push_back(matrix_to_record("model.layers.3.mlp.w.weight",
                                       gen_spiked({32, 32, 1e-3, {10.0, 10.0}, 5})));
    write_fixture(records, dir / "m.safetensors");

    const CheckpointManifest manifest = open_checkpoint(dir / "m.safetensors");
    const ScanConfig config;
    const auto report = scan(manifest, discover_groups(manifest, config), config);
    const auto& entries = report.groups.at("mlp.w");
    REQUIRE(entries.size() == 4);
    CHECK(entries[0].layer == 0); // +inf sentinel leads
    CHECK(std::isinf(entries[0].snr_raw));
    CHECK(entries[1].layer == 3); // rank 2 beats rank 1
    CHECK(entries[2].layer == 2);
    CHECK(entries[3].layer == 1); // zero matrix trails
    CHECK(entries[3].snr_raw == 0.0);
}

TEST_CASE("report file round-trip") {
    const fs::path dir = temp_dir("report_rt");
    const fs::path file = simple_fixture("report_rt_fixture");
    const CheckpointManifest manifest = open_checkpoint(file);
    const ScanConfig config;
    ScanReport report = scan(manifest, discover_groups(manifest, config), config);

    const fs::path out = dir / "snr_report.json";
    write_report(report, out);
    const ScanReport back = read_report(out);
    CHECK(back == report);

    write_report(back, dir / "again.json");
    CHECK(slurp(out) == slurp(dir / "again.json"));
}

TEST_CASE("infinite snr survives the file round-trip") {
    const fs::path dir = temp_dir("report_inf");
    std::vector<float> eye(36, 0.0f);
    for (int i = 0; i < 6; ++i) eye[static_cast<std::size_t>(7 * i)] = 1.0f;
    write_fixture({make_record("model.layers.0.mlp.w.weight", {6, 6}, eye)},
                  dir / "m.safetensors");

    const CheckpointManifest manifest = open_checkpoint(dir / "m.safetensors");
    const ScanConfig config;
    const ScanReport report = scan(manifest, discover_groups(manifest, config), config);
    REQUIRE(std::isinf(report.groups.at("mlp.w")[0].snr_raw));

    write_report(report, dir / "r.json");
    const std::string bytes = slurp(dir / "r.json");
    CHECK(bytes.find("\"inf\"") != std::string::npos);
    const ScanReport back = read_report(dir / "r.json");
    CHECK(std::isinf(back.groups.at("mlp.w")[0].snr_raw));
    CHECK(back == report);
}

TEST_CASE("malformed report files are rejected") {
    const fs::path dir = temp_dir("report_bad");
    CHECK_THROWS_AS(read_report(dir / "absent.json"), ReportError);

    spit(dir / "garbage.json", "{not json");
    CHECK_THROWS_AS(read_report(dir / "garbage.json"), ReportError);

    spit(dir / "wrong.json", R"({"model_id": "x"})");
    CHECK_THROWS_AS(read_report(dir / "wrong.json"), ReportError);

    spit(dir / "badentry.json",
         R"({"model_id": "x", "groups": {"g": [{"name": "t"}]}, "skipped": []})");
    CHECK_THROWS_AS(read_report(dir / "badentry.json"), ReportError);
}
