#pragma once

// Consolidation of run directories into labeled datasets, and report rendering.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nsb/common/error.hpp"

namespace nsb::dataset {

inline constexpr int dataset_schema_version = 1;

inline constexpr std::string_view probe_dataset_header =
    "cell_id,service_id,attack_id,level,repetition,phase,t_s,success,latency_ms,censored_latency_ms,error_kind,"
    "aborted,run_digest";

/// Label prefix, the native flow feature columns, then aborted and run_digest.
std::string flow_dataset_header();

struct ExcludedRun {
    std::string run;
    std::string reason;  // manifest_missing, manifest_invalid, integrity_failure
    nlohmann::json detail;
};

struct Consolidation {
    std::size_t probe_rows = 0;
    std::size_t flow_rows = 0;
    std::vector<std::string> included;  // run directory names, ordered by cell id
    std::vector<ExcludedRun> excluded;
    nlohmann::json index;
};

/// Writes probe_dataset.csv, flow_dataset.csv, index.json and summary.json under `out_dir`.
/// Runs whose artifacts fail verification are excluded and listed under `integrity_failures`.
Consolidation consolidate(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

/// Every directory directly under `root` that holds a meta.json.
std::vector<std::filesystem::path> find_runs(const std::filesystem::path& root);

class MissingSummary : public Error {
public:
    explicit MissingSummary(const std::filesystem::path& dir)
        : Error("no summary.json in " + dir.string() + " (run the metrics stage first)") {}
};

struct RunReport {
    std::filesystem::path dir;            // <input>/report
    std::vector<std::string> files;       // relative to dir, sorted
    std::vector<std::string> notes;
};

/// Renders `<dir>/report/` from a run directory or a consolidated dataset directory.
/// Output depends only on the input files.
RunReport render_report(const std::filesystem::path& dir);

inline constexpr std::string_view summary_table_header =
    "level,phase,samples,success_pct,failure_pct,p50_ms,p95_ms,p99_ms,cell_id";

} // namespace nsb::dataset
