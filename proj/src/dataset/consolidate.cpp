#include <algorithm>
#include <fstream>
#include <future>

#include <spdlog/spdlog.h>

#include "nsb/capture/flows.hpp"
#include "nsb/common/csv.hpp"
#include "nsb/common/text.hpp"
#include "nsb/dataset.hpp"
#include "nsb/metrics.hpp"
#include "nsb/orchestrator.hpp"
#include "nsb/probe.hpp"

namespace nsb::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> flow_label_columns = {"cell_id", "service_id", "attack_id", "level", "repetition", "phase"};
// native columns that are carried by the label prefix instead
const std::vector<std::string> flow_native_labels = {"cell_id", "attack_id", "level", "phase"};

std::vector<std::string> native_feature_columns()
{
    std::vector<std::string> out;
    for (auto& c : split(capture::native_csv_header, ',')) {
        if (std::find(flow_native_labels.begin(), flow_native_labels.end(), c) == flow_native_labels.end()) {
            out.push_back(c);
        }
    }
    return out;
}

struct Checked {
    fs::path dir;
    std::optional<json> manifest;
    std::string digest;
    std::optional<ExcludedRun> excluded;
};

Checked check_run(const fs::path& dir)
{
    Checked c;
    c.dir = dir;
    auto name = dir.filename().string();
    if (!fs::exists(dir / "meta.json")) {
        c.excluded = ExcludedRun{name, "manifest_missing", json{{"path", dir.string()}}};
        return c;
    }
    try {
        c.manifest = orchestrator::read_manifest(dir);
        c.digest = orchestrator::run_digest(dir);
        auto problems = orchestrator::verify_run(dir);
        if (!problems.empty()) {
            json detail = json::array();
            for (const auto& p : problems) {
                detail.push_back({{"file", p.file}, {"reason", p.reason}});
            }
            c.excluded = ExcludedRun{name, "integrity_failure", detail};
        }
    } catch (const std::exception& e) {
        c.excluded = ExcludedRun{name, "manifest_invalid", json{{"error", e.what()}}};
    }
    return c;
}

std::string rep_text(const json& m)
{
    return std::to_string(m.at("repetition").get<int>());
}

} // namespace

std::string flow_dataset_header()
{
    std::vector<std::string> cols = flow_label_columns;
    for (auto& c : native_feature_columns()) {
        cols.push_back(c);
    }
    cols.push_back("aborted");
    cols.push_back("run_digest");
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        out += (i ? "," : "") + cols[i];
    }
    return out;
}

std::vector<fs::path> find_runs(const fs::path& root)
{
    std::vector<fs::path> out;
    if (!fs::is_directory(root)) {
        return out;
    }
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory() && fs::exists(e.path() / "meta.json")) {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Consolidation consolidate(const std::vector<fs::path>& run_dirs, const fs::path& out_dir)
{
    fs::create_directories(out_dir);
    std::vector<std::future<Checked>> jobs;
    for (const auto& d : run_dirs) {
        jobs.push_back(std::async(std::launch::async, check_run, d));
    }
    std::vector<Checked> ok;
    Consolidation result;
    for (auto& j : jobs) {
        auto c = j.get();
        if (c.excluded) {
            spdlog::warn("excluding run {}: {}", c.excluded->run, c.excluded->reason);
            result.excluded.push_back(*c.excluded);
        } else {
            ok.push_back(std::move(c));
        }
    }
    std::sort(ok.begin(), ok.end(), [](const Checked& a, const Checked& b) {
        auto ka = std::pair(a.manifest->at("cell_id").get<std::string>(), a.dir.filename().string());
        auto kb = std::pair(b.manifest->at("cell_id").get<std::string>(), b.dir.filename().string());
        return ka < kb;
    });

    CsvWriter probes(out_dir / "probe_dataset.csv");
    probes.row(split(probe_dataset_header, ','));
    CsvWriter flows(out_dir / "flow_dataset.csv");
    flows.row(split(flow_dataset_header(), ','));
    const auto feature_cols = native_feature_columns();

    json runs = json::array();
    json summary = json::array();
    for (const auto& c : ok) {
        const auto& m = *c.manifest;
        bool aborted = m.at("outcome").at("status") != "completed";
        std::vector<std::string> prefix = {m.at("cell_id"), m.at("service_id"), m.at("attack_id"),
                                           m.at("level").at("label"), rep_text(m)};
        std::size_t probe_rows = 0, flow_rows = 0;
        if (fs::exists(c.dir / "probes.csv")) {
            auto table = read_csv(c.dir / "probes.csv");
            for (const auto& r : table.rows) {
                auto row = prefix;
                row.push_back(r.at(1));  // phase
                row.push_back(r.at(0));  // t_s
                row.insert(row.end(), r.begin() + 2, r.end());
                row.push_back(aborted ? "true" : "false");
                row.push_back(c.digest);
                probes.row(row);
                ++probe_rows;
            }
        }
        if (fs::exists(c.dir / "features" / "native.csv")) {
            auto table = read_csv(c.dir / "features" / "native.csv");
            auto phase_col = table.column("phase");
            std::vector<std::size_t> idx;
            for (const auto& col : feature_cols) {
                idx.push_back(table.column(col));
            }
            for (const auto& r : table.rows) {
                auto row = prefix;
                row.push_back(r.at(phase_col));
                for (auto i : idx) {
                    row.push_back(r.at(i));
                }
                row.push_back(aborted ? "true" : "false");
                row.push_back(c.digest);
                flows.row(row);
                ++flow_rows;
            }
        }
        result.probe_rows += probe_rows;
        result.flow_rows += flow_rows;
        result.included.push_back(c.dir.filename().string());
        runs.push_back({{"run", c.dir.filename().string()},
                        {"path", c.dir.string()},
                        {"cell_id", m.at("cell_id")},
                        {"service_id", m.at("service_id")},
                        {"attack_id", m.at("attack_id")},
                        {"level", m.at("level").at("label")},
                        {"repetition", m.at("repetition")},
                        {"run_digest", c.digest},
                        {"outcome", m.at("outcome")},
                        {"aborted", aborted},
                        {"windows", m.at("windows")},
                        {"probe_timeout_ms", m.contains("probe") ? m["probe"].value("timeout_ms", json(nullptr)) : json(nullptr)},
                        {"capture", m.value("capture", json::object()).value("status", "")},
                        {"probe_rows", probe_rows},
                        {"flow_rows", flow_rows}});
        for (auto& row : metrics::summarize_run(c.dir)) {
            summary.push_back(row);
        }
    }
    probes.flush();
    flows.flush();

    json excluded = json::array();
    json integrity = json::array();
    for (const auto& e : result.excluded) {
        excluded.push_back({{"run", e.run}, {"reason", e.reason}, {"detail", e.detail}});
        if (e.reason == "integrity_failure") {
            integrity.push_back({{"run", e.run}, {"problems", e.detail}});
        }
    }
    result.index = {{"schema_version", dataset_schema_version},
                    {"files", {"probe_dataset.csv", "flow_dataset.csv", "summary.json"}},
                    {"probe_rows", result.probe_rows},
                    {"flow_rows", result.flow_rows},
                    {"flow_track", "native"},
                    {"runs", runs},
                    {"excluded", excluded},
                    {"integrity_failures", integrity}};
    std::ofstream idx(out_dir / "index.json", std::ios::binary | std::ios::trunc);
    idx << result.index.dump(2) << "\n";
    std::ofstream sum(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
    sum << summary.dump(2) << "\n";
    if (!idx || !sum) {
        throw Error("cannot write consolidation index in " + out_dir.string());
    }
    return result;
}

} // namespace nsb::dataset
