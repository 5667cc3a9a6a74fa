#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spectrum/scan.hpp"
#include "spectrum/selection.hpp"

namespace fs = std::filesystem;
using namespace spectrum;

namespace {

// Exit codes: 0 ok, 1 internal, 2 unreadable checkpoint,
// 3 no scannable tensors, 4 malformed report, 64 usage.
enum ExitCode {
    kOk = 0,
    kInternal = 1,
    kBadCheckpoint = 2,
    kNothingToScan = 3,
    kBadReport = 4,
    kUsage = 64,
};

struct Options {
    std::string model_path;
    std::string out_dir;
    std::string report_path;
    std::string plan_path;
    double top_fraction = 0.25;
    std::string preset;
    bool scan_if_missing = false;
    std::string format = "table";
    ScanConfig scan_config;
};

fs::path report_location(const Options& opt) {
    return opt.report_path.empty() ? fs::path(opt.out_dir) / "snr_report.json"
                                   : fs::path(opt.report_path);
}

fs::path plan_location(const Options& opt) {
    return opt.plan_path.empty() ? fs::path(opt.out_dir) / "unfrozen_parameters.yaml"
                                 : fs::path(opt.plan_path);
}

int run_scan(const Options& opt) {
    const CheckpointManifest manifest = open_checkpoint(opt.model_path);
    const std::vector<ModuleGroup> groups = discover_groups(manifest, opt.scan_config);

    std::size_t scannable = 0;
    for (const auto& g : groups) scannable += g.members.size();
    if (scannable == 0) {
        std::fprintf(stderr, "error: no scannable 2-D tensors in %s\n", opt.model_path.c_str());
        return kNothingToScan;
    }

    std::fprintf(stderr, "scanning %zu tensors in %zu groups (batch size %zu)\n", scannable,
                 groups.size(), opt.scan_config.batch_size);
    const ScanReport report = scan(manifest, groups, opt.scan_config);

    if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
    const fs::path out = report_location(opt);
    write_report(report, out);
    std::fprintf(stderr, "wrote %s (%zu scanned, %zu skipped)\n", out.string().c_str(), scannable,
                 report.skipped.size());
    return kOk;
}

int run_select(const Options& opt) {
    const fs::path report_file = report_location(opt);
    if (!fs::exists(report_file)) {
        if (opt.scan_if_missing && !opt.model_path.empty()) {
            const int rc = run_scan(opt);
            if (rc != kOk) return rc;
        } else {
            std::fprintf(stderr, "error: report not found: %s (run `spectrum scan` first)\n",
                         report_file.string().c_str());
            return kBadReport;
        }
    }

    const ScanReport report = read_report(report_file);
    const SelectionPlan plan = select(report, opt.top_fraction);

    if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
    const fs::path plan_file = plan_location(opt);
    emit_plan(plan, plan_file);
    if (plan.patterns.empty()) {
        std::fprintf(stderr, "warning: empty selection plan\n");
    }

    const CoverageStats stats = coverage_stats(plan, report);
    std::printf("top fraction: %g\n", plan.top_fraction);
    for (const auto& [key, names] : plan.selected) {
        const std::size_t group_size = report.groups.at(key).size();
        std::printf("group %-32s %zu of %zu selected\n", key.c_str(), names.size(), group_size);
    }
    std::printf("unfrozen tensors: %zu of %zu\n", stats.selected_tensors, stats.total_tensors);
    std::printf("unfrozen parameter fraction: %.4f\n", stats.parameter_fraction);
    std::fprintf(stderr, "wrote %s\n", plan_file.string().c_str());
    return kOk;
}

int run_report(const Options& opt) {
    const ScanReport report = read_report(report_location(opt));

    if (opt.format == "json") {
        std::fputs(serialize_report(report).c_str(), stdout);
        return kOk;
    }

    for (const auto& [key, entries] : report.groups) {
        std::printf("group %s\n", key.c_str());
        std::printf("  %5s  %14s  %12s  %s\n", "layer", "norm_snr", "signal_count", "shape");
        for (const auto& e : entries) {
            std::printf("  %5d  %14.6g  %12zu  %zux%zu\n", e.layer, e.snr_normalized,
                        e.signal_count, e.rows, e.cols);
        }
    }
    if (!report.skipped.empty()) {
        std::printf("skipped:\n");
        for (const auto& s : report.skipped) {
            std::printf("  %s  (%s)\n", s.name.c_str(), s.reason.c_str());
        }
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Marchenko-Pastur SNR scanner and layer-selection planner for "
                 "transformer checkpoints"};
    app.require_subcommand(1);

    Options opt;

    auto add_scan_flags = [&](CLI::App* cmd) {
        cmd->add_option("--model", opt.model_path, "checkpoint file or sharded directory");
        cmd->add_option("--out", opt.out_dir, "output directory");
        cmd->add_option("--batch-size", opt.scan_config.batch_size, "tensors in flight at once")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--include", opt.scan_config.include,
                        "regex; only matching tensors are scanned (repeatable)");
        cmd->add_option("--exclude", opt.scan_config.exclude,
                        "regex; matching tensors are skipped (repeatable)");
        cmd->add_flag_callback(
            "--no-default-excludes",
            [&] { opt.scan_config.default_excludes = false; },
            "also scan embedding/output-head matrices");
        cmd->add_option("--report", opt.report_path, "report path override");
    };

    CLI::App* scan_cmd = app.add_subcommand("scan", "compute per-matrix SNRs into a report");
    add_scan_flags(scan_cmd);
    scan_cmd->get_option("--model")->required();
    scan_cmd->get_option("--out")->required();

    CLI::App* select_cmd =
        app.add_subcommand("select", "turn a report into an unfrozen-parameters plan");
    add_scan_flags(select_cmd);
    select_cmd->get_option("--out")->required();
    select_cmd->add_option("-p,--top-fraction", opt.top_fraction,
                           "fraction of layers to keep per group, in (0, 1]");
    select_cmd->add_option("--preset", opt.preset,
                           "spectrum-25, spectrum-45 or spectrum-50");
    select_cmd->add_option("--plan", opt.plan_path, "plan path override");
    select_cmd->add_flag("--scan-if-missing", opt.scan_if_missing,
                         "run a scan first when the report is absent");

    CLI::App* report_cmd = app.add_subcommand("report", "print a scanned report");
    report_cmd->add_option("--out", opt.out_dir, "directory holding snr_report.json");
    report_cmd->add_option("--report", opt.report_path, "report path override");
    report_cmd->add_option("--format", opt.format, "table or json")
        ->check(CLI::IsMember({"table", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (select_cmd->parsed()) {
            if (!opt.preset.empty()) {
                if (select_cmd->count("-p") > 0) {
                    std::fprintf(stderr, "error: --preset and -p are mutually exclusive\n");
                    return kUsage;
                }
                if (!preset_fraction(opt.preset, opt.top_fraction)) {
                    std::fprintf(stderr, "error: unknown preset '%s'\n", opt.preset.c_str());
                    return kUsage;
                }
            }
            if (!(opt.top_fraction > 0.0) || opt.top_fraction > 1.0) {
                std::fprintf(stderr, "error: top fraction must be in (0, 1]\n");
                return kUsage;
            }
            if (opt.report_path.empty() && opt.out_dir.empty()) {
                std::fprintf(stderr, "error: need --out or --report\n");
                return kUsage;
            }
            return run_select(opt);
        }
        if (scan_cmd->parsed()) return run_scan(opt);
        if (report_cmd->parsed()) {
            if (opt.report_path.empty() && opt.out_dir.empty()) {
                std::fprintf(stderr, "error: need --out or --report\n");
                return kUsage;
            }
            return run_report(opt);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const PatternError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    } catch (const CheckpointError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadCheckpoint;
    } catch (const ReportError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadReport;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInternal;
    }
    return kUsage;
}
