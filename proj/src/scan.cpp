#include "spectrum/scan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spectrum/spectral.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace spectrum {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Embedding and output-head matrices have extreme aspect ratios that
// distort the Marchenko-Pastur assumptions; excluded unless overridden.
const std::vector<std::string>& builtin_excludes() {
    static const std::vector<std::string> patterns = {"embed", "lm_head"};
    return patterns;
}

std::vector<std::regex> compile_patterns(const std::vector<std::string>& patterns) {
    std::vector<std::regex> out;
    out.reserve(patterns.size());
    for (const auto& p : patterns) {
        try {
            out.emplace_back(p, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw PatternError("bad pattern '" + p + "': " + e.what());
        }
    }
    return out;
}

bool matches_any(const std::string& name, const std::vector<std::regex>& patterns) {
    for (const auto& re : patterns) {
        if (std::regex_search(name, re)) return true;
    }
    return false;
}

struct Classified {
    // (group_key, name, layer) for every tensor that should be analyzed
    struct Item {
        std::string group_key;
        std::string name;
        int layer;
    };
    std::vector<Item> scannable;
    std::vector<SkipEntry> skipped;
};

Classified classify(const CheckpointManifest& manifest, const ScanConfig& config) {
    const auto include = compile_patterns(config.include);
    const auto exclude = compile_patterns(config.exclude);
    const auto defaults =
        config.default_excludes ? compile_patterns(builtin_excludes()) : std::vector<std::regex>{};

    Classified result;
    for (const auto& [name, entry] : manifest.tensors) {
        if (entry.shape.size() != 2) continue; // only 2-D tensors are rankable
        if (!config.include.empty() && !matches_any(name, include)) continue;
        if (matches_any(name, exclude)) {
            result.skipped.push_back({name, "excluded-by-pattern"});
            continue;
        }
        if (matches_any(name, defaults)) {
            result.skipped.push_back({name, "excluded-by-default"});
            continue;
        }
        if (entry.shape[0] < 2 || entry.shape[1] < 2) {
            result.skipped.push_back({name, "degenerate-dimension"});
            continue;
        }
        std::string key;
        int layer;
        split_group_key(name, key, layer);
        result.scannable.push_back({key, name, layer});
    }
    return result;
}

std::vector<std::string> canonical_patterns(std::vector<std::string> patterns) {
    std::sort(patterns.begin(), patterns.end());
    patterns.erase(std::unique(patterns.begin(), patterns.end()), patterns.end());
    return patterns;
}

bool entry_order(const ScanEntry& a, const ScanEntry& b) {
    if (a.snr_normalized != b.snr_normalized) return a.snr_normalized > b.snr_normalized;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.name < b.name;
}

// --- canonical JSON emission ------------------------------------------

void append_escaped(std::string& out, const std::string& s) {
    out.push_back('"');
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(c);
                }
        }
    }
    out.push_back('"');
}

// 17 significant digits round-trips any double exactly.
void append_double(std::string& out, double v) {
    if (std::isinf(v)) {
        out += "\"inf\"";
        return;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void append_entry(std::string& out, const ScanEntry& e, const std::string& pad) {
    out += pad + "{\n";
    out += pad + "  \"cols\": " + std::to_string(e.cols) + ",\n";
    out += pad + "  \"epsilon\": ";
    append_double(out, e.epsilon);
    out += ",\n";
    out += pad + "  \"layer\": " + std::to_string(e.layer) + ",\n";
    out += pad + "  \"name\": ";
    append_escaped(out, e.name);
    out += ",\n";
    out += pad + "  \"noise_sum\": ";
    append_double(out, e.noise_sum);
    out += ",\n";
    out += pad + "  \"rows\": " + std::to_string(e.rows) + ",\n";
    out += pad + "  \"sigma\": ";
    append_double(out, e.sigma);
    out += ",\n";
    out += pad + "  \"signal_count\": " + std::to_string(e.signal_count) + ",\n";
    out += pad + "  \"signal_sum\": ";
    append_double(out, e.signal_sum);
    out += ",\n";
    out += pad + "  \"snr_normalized\": ";
    append_double(out, e.snr_normalized);
    out += ",\n";
    out += pad + "  \"snr_raw\": ";
    append_double(out, e.snr_raw);
    out += "\n" + pad + "}";
}

void append_string_array(std::string& out, const std::vector<std::string>& items,
                         const std::string& pad) {
    if (items.empty()) {
        out += "[]";
        return;
    }
    out += "[\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += pad + "  ";
        append_escaped(out, items[i]);
        out += i + 1 < items.size() ? ",\n" : "\n";
    }
    out += pad + "]";
}

} // namespace

bool split_group_key(const std::string& name, std::string& key, int& layer) {
    std::vector<std::string> segments;
    std::string current;
    for (char c : name) {
        if (c == '.') {
            segments.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    segments.push_back(current);

    std::size_t index_pos = segments.size();
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const std::string& s = segments[i];
        if (!s.empty() && std::all_of(s.begin(), s.end(),
                                      [](unsigned char c) { return std::isdigit(c); })) {
            index_pos = i;
            break;
        }
    }

    std::vector<std::string> tail;
    bool has_layer = index_pos < segments.size();
    if (has_layer) {
        layer = std::stoi(segments[index_pos]);
        tail.assign(segments.begin() + static_cast<std::ptrdiff_t>(index_pos) + 1,
                    segments.end());
    } else {
        layer = -1;
        tail = segments;
    }
    if (tail.size() > 1 && tail.back() == "weight") tail.pop_back();

    key.clear();
    for (std::size_t i = 0; i < tail.size(); ++i) {
        if (i) key.push_back('.');
        key += tail[i];
    }
    if (key.empty()) key = name;
    return has_layer;
}

std::vector<ModuleGroup> discover_groups(const CheckpointManifest& manifest,
                                         const ScanConfig& config) {
    const Classified classified = classify(manifest, config);

    std::map<std::string, ModuleGroup> by_key;
    for (const auto& item : classified.scannable) {
        auto& group = by_key[item.group_key];
        group.group_key = item.group_key;
        group.members.push_back({item.name, item.layer});
    }

    std::vector<ModuleGroup> groups;
    groups.reserve(by_key.size());
    for (auto& [key, group] : by_key) {
        std::sort(group.members.begin(), group.members.end(),
                  [](const ModuleGroup::Member& a, const ModuleGroup::Member& b) {
                      return a.layer != b.layer ? a.layer < b.layer : a.name < b.name;
                  });
        groups.push_back(std::move(group));
    }
    return groups;
}

ScanReport scan(const CheckpointManifest& manifest, const std::vector<ModuleGroup>& groups,
                const ScanConfig& config) {
    if (config.batch_size < 1) throw UsageError("scan: batch_size must be >= 1");

    ScanReport report;
    report.model_id = manifest.model_id;
    report.include = canonical_patterns(config.include);
    report.exclude = canonical_patterns(config.exclude);
    report.skipped = classify(manifest, config).skipped;

    struct WorkItem {
        std::string group_key;
        std::string name;
        int layer;
    };
    std::vector<WorkItem> work;
    for (const auto& g : groups) {
        for (const auto& m : g.members) {
            work.push_back({g.group_key, m.name, m.layer});
        }
    }

    struct Outcome {
        bool ok = false;
        ScanEntry entry;
        std::string fail_reason;
    };
    std::vector<Outcome> outcomes(work.size());

    auto run_one = [&](std::size_t idx) {
        const WorkItem& item = work[idx];
        Outcome& out = outcomes[idx];
        try {
            const TensorRecord record = load_tensor(manifest, item.name);
            if (record.is_flagged()) {
                out.fail_reason = "non-finite-values";
                return;
            }
            const SnrResult r = analyze_matrix(record);
            out.entry = {item.name,          item.layer,
                         r.rows,             r.cols,
                         r.raw_snr,          r.normalized_snr,
                         r.bounds.sigma_estimate, r.bounds.epsilon,
                         r.signal_count,     r.signal_sum,
                         r.noise_sum};
            out.ok = true;
        } catch (const Error& e) {
            out.fail_reason = e.what();
        }
    };

    // At most batch_size tensors are resident at once; results land in
    // index order, so scheduling never changes the report.
    for (std::size_t base = 0; base < work.size(); base += config.batch_size) {
        const std::size_t end = std::min(base + config.batch_size, work.size());
        std::vector<std::future<void>> batch;
        for (std::size_t i = base + 1; i < end; ++i) {
            batch.push_back(std::async(std::launch::async, run_one, i));
        }
        run_one(base);
        for (auto& f : batch) f.get();
    }

    for (std::size_t i = 0; i < work.size(); ++i) {
        if (outcomes[i].ok) {
            report.groups[work[i].group_key].push_back(std::move(outcomes[i].entry));
        } else {
            report.skipped.push_back({work[i].name, outcomes[i].fail_reason});
        }
    }

    for (auto& [key, entries] : report.groups) {
        std::sort(entries.begin(), entries.end(), entry_order);
    }
    std::sort(report.skipped.begin(), report.skipped.end(),
              [](const SkipEntry& a, const SkipEntry& b) { return a.name < b.name; });
    return report;
}

std::string serialize_report(const ScanReport& report) {
    std::string out;
    out += "{\n";
    out += "  \"config\": {\n";
    out += "    \"exclude\": ";
    append_string_array(out, report.exclude, "    ");
    out += ",\n";
    out += "    \"include\": ";
    append_string_array(out, report.include, "    ");
    out += "\n  },\n";

    out += "  \"groups\": {";
    bool first_group = true;
    for (const auto& [key, entries] : report.groups) {
        out += first_group ? "\n" : ",\n";
        first_group = false;
        out += "    ";
        append_escaped(out, key);
        out += ": [\n";
        for (std::size_t i = 0; i < entries.size(); ++i) {
            append_entry(out, entries[i], "      ");
            out += i + 1 < entries.size() ? ",\n" : "\n";
        }
        out += "    ]";
    }
    out += report.groups.empty() ? "},\n" : "\n  },\n";

    out += "  \"model_id\": ";
    append_escaped(out, report.model_id);
    out += ",\n";

    out += "  \"skipped\": ";
    if (report.skipped.empty()) {
        out += "[]";
    } else {
        out += "[\n";
        for (std::size_t i = 0; i < report.skipped.size(); ++i) {
            out += "    {\"name\": ";
            append_escaped(out, report.skipped[i].name);
            out += ", \"reason\": ";
            append_escaped(out, report.skipped[i].reason);
            out += "}";
            out += i + 1 < report.skipped.size() ? ",\n" : "\n";
        }
        out += "  ]";
    }
    out += "\n}\n";
    return out;
}

void write_report(const ScanReport& report, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ReportError("cannot write report: " + path.string());
    const std::string body = serialize_report(report);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.flush();
    if (!out) throw ReportError("write failed: " + path.string());
}

namespace {

double read_double(const json& v, const std::string& what) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string() && v.get<std::string>() == "inf") return kInf;
    throw ReportError("malformed report: bad number for " + what);
}

template <typename T>
T read_field(const json& obj, const char* key) {
    if (!obj.contains(key)) {
        throw ReportError("malformed report: missing field '" + std::string(key) + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ReportError("malformed report: bad field '" + std::string(key) + "'");
    }
}

} // namespace

ScanReport read_report(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ReportError("cannot read report: " + path.string());

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ReportError("malformed report: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw ReportError("malformed report: not a JSON object");

    ScanReport report;
    report.model_id = read_field<std::string>(doc, "model_id");

    const json config = doc.contains("config") ? doc.at("config") : json::object();
    if (!config.is_object()) throw ReportError("malformed report: bad config");
    if (config.contains("include")) report.include = read_field<std::vector<std::string>>(config, "include");
    if (config.contains("exclude")) report.exclude = read_field<std::vector<std::string>>(config, "exclude");

    if (!doc.contains("groups") || !doc.at("groups").is_object()) {
        throw ReportError("malformed report: missing groups");
    }
    for (const auto& [key, entries] : doc.at("groups").items()) {
        if (!entries.is_array()) throw ReportError("malformed report: group '" + key + "' not an array");
        auto& dest = report.groups[key];
        for (const auto& e : entries) {
            if (!e.is_object()) throw ReportError("malformed report: entry not an object");
            ScanEntry entry;
            entry.name = read_field<std::string>(e, "name");
            entry.layer = read_field<int>(e, "layer");
            entry.rows = read_field<std::size_t>(e, "rows");
            entry.cols = read_field<std::size_t>(e, "cols");
            entry.signal_count = read_field<std::size_t>(e, "signal_count");
            entry.snr_raw = read_double(e.contains("snr_raw") ? e.at("snr_raw") : json(), "snr_raw");
            entry.snr_normalized =
                read_double(e.contains("snr_normalized") ? e.at("snr_normalized") : json(),
                            "snr_normalized");
            entry.sigma = read_field<double>(e, "sigma");
            entry.epsilon = read_field<double>(e, "epsilon");
            entry.signal_sum = read_field<double>(e, "signal_sum");
            entry.noise_sum = read_field<double>(e, "noise_sum");
            dest.push_back(std::move(entry));
        }
    }

    if (doc.contains("skipped")) {
        if (!doc.at("skipped").is_array()) throw ReportError("malformed report: bad skipped");
        for (const auto& s : doc.at("skipped")) {
            report.skipped.push_back(
                {read_field<std::string>(s, "name"), read_field<std::string>(s, "reason")});
        }
    }
    return report;
}

} // namespace spectrum
