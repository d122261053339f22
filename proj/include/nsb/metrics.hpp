#pragma once

// Per-phase success rates, censored latency percentiles, CDFs and resource
// aggregates.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsb/phases.hpp"
#include "nsb/probe.hpp"
#include "nsb/runtime.hpp"

namespace nsb::metrics {

class EmptyInput : public Error {
public:
    EmptyInput() : Error("empty input") {}
};

/// Nearest rank: the element at 1-based index ceil(q/100 * n) of the sorted values.
double percentile(std::vector<double> values, double q);

struct PhaseSummary {
    std::string cell_id;
    std::string level;
    Phase phase = Phase::warmup;
    std::size_t samples = 0;
    // absent when samples == 0
    std::optional<double> success_rate;  // percent
    std::optional<double> failure_rate;
    std::optional<double> p50_ms;
    std::optional<double> p95_ms;
    std::optional<double> p99_ms;
};

/// Percentiles run over the censored latency of every sample, failures included.
PhaseSummary summarize_phase(const std::vector<probe::ProbeSample>& samples, const std::string& level, Phase phase);

struct CdfPoint {
    double latency_ms = 0;
    double fraction = 0;
};

/// (v_(i), i/n) over the sorted values.
std::vector<CdfPoint> cdf(std::vector<double> values);

struct ResourceAggregate {
    std::size_t samples = 0;
    // absent for phases without samples
    std::optional<double> cpu_mean, cpu_max, load1_max, mem_mean, mem_max;
};

struct PhaseResources {
    Phase phase = Phase::warmup;
    ResourceAggregate aggregate;
};

std::vector<PhaseResources> resource_summary(const std::vector<runtime::ResourceSample>& samples,
                                             const std::vector<PhaseWindow>& windows);

inline constexpr std::string_view resources_csv_header = "t_s,cpu_pct,load1,load5,load15,mem_pct";
std::vector<std::string> csv_fields(const runtime::ResourceSample& s);
std::vector<runtime::ResourceSample> read_resources_csv(const std::filesystem::path& path);

/// One object per phase: rates to 1 decimal, latencies to 2, with a `resources` member.
nlohmann::json summary_json(const std::vector<PhaseSummary>& phases, const std::vector<PhaseResources>& resources);

/// Recomputes summary.json content for a run directory from probes.csv and resources.csv.
nlohmann::json summarize_run(const std::filesystem::path& run_dir);

/// Writes `<run_dir>/summary.json` and returns its content.
nlohmann::json write_summary(const std::filesystem::path& run_dir);

} // namespace nsb::metrics
