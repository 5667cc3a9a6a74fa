#include "spectrum/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "spectrum/errors.hpp"

namespace fs = std::filesystem;

namespace spectrum {

std::string anchored_pattern(const std::string& name) {
    static const std::string meta = R"(\^$.|?*+()[]{})";
    std::string out = "^";
    for (char c : name) {
        if (meta.find(c) != std::string::npos) out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('$');
    return out;
}

SelectionPlan select(const ScanReport& report, double top_fraction) {
    if (!(top_fraction > 0.0) || top_fraction > 1.0) {
        throw UsageError("top fraction must be in (0, 1]");
    }
    std::size_t total = 0;
    for (const auto& [key, entries] : report.groups) total += entries.size();
    if (total == 0) throw ReportError("report has no scanned tensors");

    SelectionPlan plan;
    plan.top_fraction = top_fraction;
    for (const auto& [key, entries] : report.groups) {
        const std::size_t g = entries.size();
        if (g == 0) continue;
        // round-half-up, at least one member, capped at the group size
        std::size_t count = static_cast<std::size_t>(
            std::floor(static_cast<double>(g) * top_fraction + 0.5));
        count = std::clamp<std::size_t>(count, 1, g);

        auto& names = plan.selected[key];
        for (std::size_t i = 0; i < count; ++i) names.push_back(entries[i].name);
        for (std::size_t i = 0; i < count; ++i) {
            plan.patterns.push_back(anchored_pattern(entries[i].name));
        }
    }
    std::sort(plan.patterns.begin(), plan.patterns.end());
    plan.patterns.erase(std::unique(plan.patterns.begin(), plan.patterns.end()),
                        plan.patterns.end());
    return plan;
}

std::string serialize_plan(const SelectionPlan& plan) {
    if (plan.patterns.empty()) return "unfrozen_parameters: []\n";
    std::string out = "unfrozen_parameters:\n";
    for (const auto& p : plan.patterns) {
        out += "- " + p + "\n";
    }
    return out;
}

void emit_plan(const SelectionPlan& plan, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write plan: " + path.string());
    const std::string body = serialize_plan(plan);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) throw Error("write failed: " + path.string());
}

CoverageStats coverage_stats(const SelectionPlan& plan, const ScanReport& report) {
    std::map<std::string, const ScanEntry*> by_name;
    CoverageStats stats;
    for (const auto& [key, entries] : report.groups) {
        for (const auto& e : entries) {
            by_name.emplace(e.name, &e);
            ++stats.total_tensors;
            stats.total_parameters += e.rows * e.cols;
        }
    }

    std::set<std::string> seen;
    for (const auto& [key, names] : plan.selected) {
        for (const auto& name : names) {
            const auto it = by_name.find(name);
            if (it == by_name.end()) {
                throw UsageError("plan names tensor absent from report: '" + name + "'");
            }
            if (!seen.insert(name).second) continue;
            ++stats.selected_tensors;
            stats.selected_parameters += it->second->rows * it->second->cols;
        }
    }
    stats.parameter_fraction =
        stats.total_parameters == 0
            ? 0.0
            : static_cast<double>(stats.selected_parameters) /
                  static_cast<double>(stats.total_parameters);
    return stats;
}

bool preset_fraction(const std::string& preset, double& fraction) {
    if (preset == "spectrum-25") { fraction = 0.25; return true; }
    if (preset == "spectrum-45") { fraction = 0.45; return true; }
    if (preset == "spectrum-50") { fraction = 0.50; return true; }
    return false;
}

} // namespace spectrum
