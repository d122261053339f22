#pragma once

// Experiment formalisation (scenario, parameters, baseline, instrumentation,
// repetition plan) and its expansion into an ordered execution matrix.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsb/catalog.hpp"
#include "nsb/common/duration.hpp"

namespace nsb::planner {

struct IntensityLevel {
    std::string label;                // L0..L3
    std::optional<double> rate_limit; // per second; nullopt = unlimited

    bool unlimited() const { return !rate_limit.has_value(); }
    std::string rate_text() const;    // "100" or "unlimited"
    bool operator==(const IntensityLevel&) const = default;
};

/// L0 100/s, L1 1000/s, L2 10000/s, L3 unlimited.
std::vector<IntensityLevel> default_levels();

/// Looks a label up in default_levels().
IntensityLevel level_by_label(std::string_view label);

struct ProbeSettings {
    Duration interval = std::chrono::milliseconds(100);
    Duration timeout = std::chrono::milliseconds(2000);
    std::string path = "/";
    int max_in_flight = 64;
};

struct Instrumentation {
    bool capture = true;
    // `${target_port}` is replaced with the target's port at run time; empty captures everything.
    std::string capture_filter = "tcp port ${target_port}";
    std::string iface = "lo";
    unsigned snaplen = 256;
    bool extract_features = true;
    ProbeSettings probe;
    Duration resource_interval = std::chrono::milliseconds(250);
};

struct RepetitionPlan {
    int repetitions = 1;
    Duration warmup = std::chrono::seconds(5);
    Duration attack = std::chrono::seconds(10);
    Duration cooldown = std::chrono::seconds(5);
};

struct ExperimentSpec {
    std::vector<std::string> services;                                 // scenario
    std::vector<std::string> attacks;                                  // scenario
    std::map<std::string, std::map<std::string, std::string>> params;  // attack -> name -> value text
    std::vector<IntensityLevel> levels = default_levels();
    std::optional<std::string> baseline;                               // benign profile id
    Instrumentation instrumentation;
    RepetitionPlan repetition;
};

nlohmann::json to_json(const ExperimentSpec& spec);

/// Canonical digest: SHA-256 of the compact JSON form.
std::string spec_digest(const ExperimentSpec& spec);

struct ExperimentFile {
    ExperimentSpec spec;
    std::optional<std::filesystem::path> catalog;  // resolved against the file's directory
};

/// Reads an experiment YAML file. Unknown keys are errors.
ExperimentFile load_experiment(const std::filesystem::path& path);

struct PhaseDurations {
    Duration warmup{};
    Duration attack{};
    Duration cooldown{};

    Duration total() const { return warmup + attack + cooldown; }
    bool operator==(const PhaseDurations&) const = default;
};

struct MatrixCell {
    std::string cell_id;  // svc/attack/level/repN
    std::string service_id;
    std::string attack_id;
    IntensityLevel level;
    int repetition = 1;   // 1-based
    catalog::ParamSet params;
    PhaseDurations phases;

    bool operator==(const MatrixCell&) const = default;
};

std::string make_cell_id(std::string_view service, std::string_view attack, std::string_view level, int repetition);

struct ExecutionMatrix {
    std::vector<MatrixCell> cells;
    std::string spec_digest;
    ExperimentSpec spec;
};

class PlanError : public Error {
public:
    enum class Kind { unresolved_reference, empty_selection, invalid_spec };
    PlanError(Kind k, const std::string& what) : Error(what), kind(k) {}
    Kind kind;
};

/// Checks the experiment's own invariants and its references against the catalog.
void validate(const ExperimentSpec& spec, const catalog::Catalog& catalog);

/// Nesting order service -> attack -> level -> repetition.
ExecutionMatrix expand_matrix(const ExperimentSpec& spec, const catalog::Catalog& catalog);

struct PlanReport {
    std::string table;
    std::size_t cells = 0;
    double total_seconds = 0;
};

PlanReport plan_summary(const ExecutionMatrix& matrix);

} // namespace nsb::planner
