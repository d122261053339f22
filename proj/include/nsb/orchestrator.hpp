#pragma once

// Executes matrix cells through the warmup/attack/cooldown lifecycle and
// writes one self-describing run directory per cell.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsb/capture/flows.hpp"
#include "nsb/catalog.hpp"
#include "nsb/planner.hpp"
#include "nsb/runtime.hpp"

namespace nsb::orchestrator {

inline constexpr int manifest_schema_version = 1;

struct RunOptions {
    std::filesystem::path out_root = "runs";
    bool ephemeral_ports = false;   // pick a free host port per cell instead of the catalog port
    std::vector<capture::ExtractorTrack> tracks;
    nlohmann::json invocation = nlohmann::json::object();  // normalized flag set of the caller
};

struct RunResult {
    std::filesystem::path run_dir;
    nlohmann::json manifest;
    bool completed = false;
    std::string reason;  // set when aborted
};

/// `<compact timestamp>_<cell id with '/' replaced by '.'>`, with `-N` appended on collision.
std::filesystem::path make_run_dir(const std::filesystem::path& out_root, const std::string& cell_id,
                                   std::chrono::system_clock::time_point now);

RunResult execute_cell(const planner::MatrixCell& cell, const planner::ExecutionMatrix& matrix,
                       const catalog::Catalog& catalog, runtime::RuntimeAdapter& adapter, const RunOptions& options);

/// Sequential, in matrix order. An aborted cell never stops the matrix.
std::vector<RunResult> execute_matrix(const planner::ExecutionMatrix& matrix, const catalog::Catalog& catalog,
                                      runtime::RuntimeAdapter& adapter, const RunOptions& options);

// Files that belong in a run's inventory: everything except the manifest itself
// and the derived summary.json and report/.
std::vector<std::filesystem::path> inventory_files(const std::filesystem::path& run_dir);
bool is_derived(const std::filesystem::path& relative);

nlohmann::json read_manifest(const std::filesystem::path& run_dir);

/// SHA-256 of meta.json as stored.
std::string run_digest(const std::filesystem::path& run_dir);

struct IntegrityProblem {
    std::string file;
    std::string reason;  // missing, size_mismatch, digest_mismatch, unlisted
};

/// Recomputes the artifact inventory of `manifest` and rewrites meta.json.
void rewrite_manifest(const std::filesystem::path& run_dir, nlohmann::json manifest);

/// Re-hashes every inventoried artifact against the manifest.
std::vector<IntegrityProblem> verify_run(const std::filesystem::path& run_dir);

} // namespace nsb::orchestrator
