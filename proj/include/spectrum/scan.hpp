#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spectrum/checkpoint.hpp"

namespace spectrum {

// Same-role weight matrices across layers (all q_proj, all down_proj, ...).
struct ModuleGroup {
    std::string group_key;
    struct Member {
        std::string name;
        int layer = -1; // -1 for tensors without a layer-index segment
    };
    std::vector<Member> members;
};

struct ScanConfig {
    std::vector<std::string> include; // regexes; empty -> everything
    std::vector<std::string> exclude; // regexes, searched unanchored
    bool default_excludes = true;     // embedding / output-head matrices
    std::size_t batch_size = 8;       // runtime-only; never serialized
};

// One scanned matrix; exactly the fields the report file carries.
struct ScanEntry {
    std::string name;
    int layer = -1;
    std::size_t rows = 0;
    std::size_t cols = 0;
    double snr_raw = 0.0;
    double snr_normalized = 0.0;
    double sigma = 0.0;
    double epsilon = 0.0;
    std::size_t signal_count = 0;
    double signal_sum = 0.0;
    double noise_sum = 0.0;

    bool operator==(const ScanEntry&) const = default;
};

struct SkipEntry {
    std::string name;
    std::string reason;
    bool operator==(const SkipEntry&) const = default;
};

struct ScanReport {
    std::string model_id;
    std::vector<std::string> include; // canonical: sorted, deduplicated
    std::vector<std::string> exclude;
    // group_key -> entries sorted by (normalized snr desc, layer asc, name asc),
    // with the +inf sentinel ahead of every finite value.
    std::map<std::string, std::vector<ScanEntry>> groups;
    std::vector<SkipEntry> skipped; // sorted by name

    bool operator==(const ScanReport&) const = default;
};

// Derives the module-group key and layer index from a parameter path:
// the first all-numeric path segment is elided together with everything
// before it, and a trailing "weight" segment is dropped. Returns false
// when the name has no layer-index segment.
bool split_group_key(const std::string& name, std::string& key, int& layer);

// Groups every scannable 2-D tensor that matches the config patterns.
std::vector<ModuleGroup> discover_groups(const CheckpointManifest& manifest,
                                         const ScanConfig& config);

// Analyzes every group member, at most config.batch_size tensors in
// flight; load or decode failures land in `skipped` and the scan
// continues. The report is a pure function of (checkpoint bytes, config).
ScanReport scan(const CheckpointManifest& manifest, const std::vector<ModuleGroup>& groups,
                const ScanConfig& config);

// Canonical JSON bytes of a report: sorted keys, floats at 17
// significant digits, +inf as the string "inf", no timestamps.
std::string serialize_report(const ScanReport& report);

void write_report(const ScanReport& report, const std::filesystem::path& path);
ScanReport read_report(const std::filesystem::path& path);

} // namespace spectrum
