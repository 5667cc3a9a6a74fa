#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spectrum/scan.hpp"

namespace spectrum {

// Per-group top-fraction choice of tensors to leave unfrozen.
struct SelectionPlan {
    double top_fraction = 0.25;
    // group_key -> selected tensor names, in the group's ranking order.
    std::map<std::string, std::vector<std::string>> selected;
    // Anchored, regex-escaped patterns, sorted and duplicate-free.
    std::vector<std::string> patterns;
};

struct CoverageStats {
    std::size_t total_tensors = 0;
    std::size_t selected_tensors = 0;
    std::size_t total_parameters = 0;
    std::size_t selected_parameters = 0;
    double parameter_fraction = 0.0; // selected / total, in [0, 1]
};

// Picks the top max(1, round-half-up(g * top_fraction)) members of each
// group, capped at the group size, following the report's ranking order.
SelectionPlan select(const ScanReport& report, double top_fraction);

// "^name$" with regex metacharacters escaped.
std::string anchored_pattern(const std::string& name);

// YAML document: "unfrozen_parameters:" followed by the sorted pattern
// list. Byte-deterministic. Returns the emitted bytes.
std::string serialize_plan(const SelectionPlan& plan);
void emit_plan(const SelectionPlan& plan, const std::filesystem::path& path);

CoverageStats coverage_stats(const SelectionPlan& plan, const ScanReport& report);

// Named presets: "spectrum-25"/"spectrum-45"/"spectrum-50" -> fraction.
bool preset_fraction(const std::string& preset, double& fraction);

} // namespace spectrum
