#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "nsb/capture/live.hpp"
#include "nsb/common/csv.hpp"
#include "nsb/common/digest.hpp"
#include "nsb/common/text.hpp"
#include "nsb/metrics.hpp"
#include "nsb/orchestrator.hpp"
#include "nsb/probe.hpp"

#ifndef NSB_VERSION
#define NSB_VERSION "0.0.0"
#endif

namespace nsb::orchestrator {

using nlohmann::json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

std::string slug(std::string_view cell_id, char sep)
{
    std::string s(cell_id);
    std::replace(s.begin(), s.end(), '/', sep);
    return s;
}

double since(Clock::time_point t0, Clock::time_point t)
{
    return std::chrono::duration<double>(t - t0).count();
}

json windows_json(const std::vector<PhaseWindow>& windows)
{
    json out = json::array();
    for (const auto& w : windows) {
        out.push_back({{"phase", std::string(to_string(w.phase))}, {"start", w.start}, {"end", w.end}});
    }
    return out;
}

json exit_json(const std::optional<ExitInfo>& e)
{
    if (!e) {
        return nullptr;
    }
    return {{"code", e->code}, {"signal", e->signal}, {"success", e->success()}, {"text", e->describe()}};
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << "\n";
    out.close();
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

// Fixed-rate resource sampling of one workload into resources.csv.
class ResourceSampler {
public:
    ResourceSampler(runtime::RuntimeAdapter& adapter, runtime::RuntimeHandle handle, Duration interval,
                    Clock::time_point t0, double total_s, const fs::path& out)
        : writer_(out)
    {
        writer_.row(split(metrics::resources_csv_header, ','));
        writer_.flush();
        thread_ = std::jthread([this, &adapter, handle, interval, t0, total_s](std::stop_token stop) {
            std::mutex mu;
            std::condition_variable_any cv;
            for (long i = 0;; ++i) {
                auto at = t0 + std::chrono::duration_cast<Clock::duration>(interval * i);
                if (since(t0, at) >= total_s) {
                    break;
                }
                {
                    std::unique_lock lock(mu);
                    cv.wait_until(lock, stop, at, [] { return false; });
                }
                if (stop.stop_requested()) {
                    break;
                }
                try {
                    auto s = adapter.sample_resources(handle);
                    s.t = since(t0, Clock::now());
                    writer_.row(metrics::csv_fields(s));
                    writer_.flush();
                    ++count_;
                } catch (const std::exception& e) {
                    error_ = e.what();
                    break;
                }
            }
        });
    }

    void stop()
    {
        thread_.request_stop();
        if (thread_.joinable()) {
            thread_.join();
        }
    }

    std::size_t count() const { return count_; }
    const std::string& error() const { return error_; }

private:
    CsvWriter writer_;
    std::jthread thread_;
    std::atomic<std::size_t> count_{0};
    std::string error_;
};

struct CellState {
    json manifest;
    std::vector<std::string> notes;
};

std::string describe(const std::exception& e)
{
    if (auto* r = dynamic_cast<const runtime::RuntimeError*>(&e)) {
        return std::string(runtime::to_string(r->kind)) + ": " + r->what();
    }
    if (dynamic_cast<const capture::CaptureUnavailable*>(&e) != nullptr) {
        return std::string("CaptureError: ") + e.what();
    }
    if (dynamic_cast<const probe::ProbeError*>(&e) != nullptr) {
        return std::string("ProbeError: ") + e.what();
    }
    return e.what();
}

} // namespace

fs::path make_run_dir(const fs::path& out_root, const std::string& cell_id, std::chrono::system_clock::time_point now)
{
    fs::create_directories(out_root);
    auto base = compact_utc(now) + "_" + slug(cell_id, '.');
    auto dir = out_root / base;
    for (int n = 2; !fs::create_directory(dir); ++n) {
        dir = out_root / (base + "-" + std::to_string(n));
    }
    return dir;
}

bool is_derived(const fs::path& relative)
{
    auto first = relative.begin() == relative.end() ? fs::path() : *relative.begin();
    return relative == "summary.json" || first == "report";
}

std::vector<fs::path> inventory_files(const fs::path& run_dir)
{
    std::vector<fs::path> out;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        auto rel = fs::relative(entry.path(), run_dir);
        if (rel == "meta.json" || is_derived(rel)) {
            continue;
        }
        out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
}

json read_manifest(const fs::path& run_dir)
{
    std::ifstream in(run_dir / "meta.json");
    if (!in) {
        throw Error("missing manifest in " + run_dir.string());
    }
    return json::parse(in);
}

std::string run_digest(const fs::path& run_dir)
{
    return sha256_file(run_dir / "meta.json");
}

std::vector<IntegrityProblem> verify_run(const fs::path& run_dir)
{
    auto manifest = read_manifest(run_dir);
    std::vector<IntegrityProblem> problems;
    const auto& artifacts = manifest.at("artifacts");
    for (const auto& [name, info] : artifacts.items()) {
        auto path = run_dir / name;
        if (!fs::exists(path)) {
            problems.push_back({name, "missing"});
            continue;
        }
        if (fs::file_size(path) != info.at("size").get<std::uintmax_t>()) {
            problems.push_back({name, "size_mismatch"});
            continue;
        }
        if (sha256_file(path) != info.at("sha256").get<std::string>()) {
            problems.push_back({name, "digest_mismatch"});
        }
    }
    for (const auto& rel : inventory_files(run_dir)) {
        if (!artifacts.contains(rel.generic_string())) {
            problems.push_back({rel.generic_string(), "unlisted"});
        }
    }
    return problems;
}

RunResult execute_cell(const planner::MatrixCell& cell, const planner::ExecutionMatrix& matrix,
                       const catalog::Catalog& catalog, runtime::RuntimeAdapter& adapter, const RunOptions& options)
{
    const auto& spec = matrix.spec;
    const auto& instr = spec.instrumentation;
    RunResult result;
    result.run_dir = make_run_dir(options.out_root, cell.cell_id, std::chrono::system_clock::now());
    const fs::path dir = result.run_dir;
    fs::create_directories(dir / "logs");
    spdlog::info("cell {} -> {}", cell.cell_id, dir.string());

    auto windows = phase_schedule(cell.phases.warmup, cell.phases.attack, cell.phases.cooldown);
    const double total_s = windows.back().end;
    const double attack_start = windows[1].start;
    const double attack_end = windows[1].end;

    json params = json::object();
    for (const auto& [k, v] : cell.params) {
        params[k] = catalog::render(v);
    }
    json m;
    m["schema_version"] = manifest_schema_version;
    m["cell_id"] = cell.cell_id;
    m["service_id"] = cell.service_id;
    m["attack_id"] = cell.attack_id;
    m["level"] = {{"label", cell.level.label}, {"rate_limit", cell.level.rate_text()}};
    m["repetition"] = cell.repetition;
    m["params"] = params;
    m["phases"] = {{"warmup_s", to_seconds(cell.phases.warmup)},
                   {"attack_s", to_seconds(cell.phases.attack)},
                   {"cooldown_s", to_seconds(cell.phases.cooldown)}};
    m["catalog_digest"] = catalog.source_digest;
    m["spec_digest"] = matrix.spec_digest;
    m["experiment"] = planner::to_json(spec);
    m["t0"] = nullptr;
    m["t0_epoch_s"] = nullptr;
    m["windows"] = windows_json(windows);
    m["adapter"] = adapter.name();
    m["invocation"] = options.invocation;
    m["baseline"] = spec.baseline ? json(*spec.baseline) : json(nullptr);
    m["capture"] = {{"enabled", instr.capture}, {"status", instr.capture ? "pending" : "disabled"}};
    m["tracks"] = json::array();
    std::vector<std::string> notes;

    std::optional<runtime::RuntimeHandle> target, benign, attacker;
    std::unique_ptr<capture::CaptureSession> cap;
    std::unique_ptr<ResourceSampler> sampler;
    std::jthread probe_thread;
    std::exception_ptr probe_error;
    std::string abort_reason;
    json attacker_info = {{"hook", nullptr}, {"command", nullptr}, {"hook_started_s", nullptr},
                          {"hook_started_at", nullptr}, {"stop_issued_s", nullptr}, {"stopped_s", nullptr},
                          {"hook_exit", nullptr}, {"stdout_digest", nullptr}};

    try {
        json versions = {{"nsb", NSB_VERSION}, {"compiler", __VERSION__}};
        adapter.ping();
        for (const auto& [k, v] : adapter.versions()) {
            versions[k] = v;
        }
        m["tool_versions"] = versions;

        const auto& service = catalog.service(cell.service_id);
        const auto& attack = catalog.attack(cell.attack_id);
        std::uint16_t port = options.ephemeral_ports ? net::pick_free_port() : service.port;
        const std::string prefix = "nsb-" + slug(cell.cell_id, '-');
        const std::string network = prefix + "-net";

        runtime::WorkloadSpec tw;
        tw.name = prefix + "-target";
        tw.image = service.image;
        tw.args = {"--port", std::to_string(port)};
        if (service.capacity_limit) {
            tw.args.insert(tw.args.end(), {"--capacity", std::to_string(*service.capacity_limit)});
        }
        auto extra = runtime::expand_args(service.args, {{"port", std::to_string(port)}});
        tw.args.insert(tw.args.end(), extra.begin(), extra.end());
        tw.network = network;
        tw.published_port = port;
        tw.role = runtime::Role::target;
        tw.cell_id = cell.cell_id;
        tw.readiness = runtime::ReadinessCheck{service.readiness.protocol, service.readiness.path, service.readiness.timeout};
        tw.log = dir / "logs" / "target.log";
        m["target"] = {{"name", tw.name}, {"image", tw.image}, {"args", tw.args}, {"port", port}};
        target = adapter.start_workload(tw);
        m["target"]["address"] = target->address.str();

        std::map<std::string, std::string> target_env = {{"NSB_TARGET_HOST", target->peer_address.host},
                                                         {"NSB_TARGET_PORT", std::to_string(target->peer_address.port)}};
        if (spec.baseline) {
            const auto& profile = catalog.benign_profile(*spec.baseline);
            runtime::WorkloadSpec bw;
            bw.name = prefix + "-benign";
            bw.image = profile.image;
            bw.env = target_env;
            bw.env["NSB_CLIENTS"] = std::to_string(profile.client_count);
            bw.env["NSB_INTERARRIVAL"] = catalog::render(profile.interarrival);
            bw.env["NSB_DURATION"] = catalog::render(profile.duration);
            bw.env["NSB_PATH"] = service.readiness.path;
            bw.network = network;
            bw.role = runtime::Role::benign;
            bw.cell_id = cell.cell_id;
            bw.log = dir / "logs" / "benign.log";
            m["benign"] = {{"profile", profile.id}, {"image", bw.image}, {"env", bw.env}};
            benign = adapter.start_workload(bw);
        }

        runtime::WorkloadSpec aw;
        aw.name = prefix + "-attacker";
        aw.image = attack.image;
        aw.env = target_env;
        aw.network = network;
        aw.role = runtime::Role::attacker;
        aw.cell_id = cell.cell_id;
        aw.hook = attack.hook;
        aw.hook_args = attack.hook_args;
        aw.log = dir / "logs" / "attacker.log";
        attacker = adapter.start_workload(aw);
        attacker_info["hook"] = attack.hook;

        if (instr.capture) {
            capture::CaptureOptions co;
            co.iface = instr.iface;
            co.filter = capture::expand_filter(instr.capture_filter, port);
            co.snaplen = instr.snaplen;
            m["capture"]["iface"] = co.iface;
            m["capture"]["filter"] = co.filter;
            m["capture"]["snaplen"] = co.snaplen;
            try {
                cap = capture::CaptureSession::start(co, dir / "capture.pcap");
                m["capture"]["status"] = "running";
            } catch (const capture::CaptureUnavailable& e) {
                m["capture"]["status"] = "skipped";
                m["capture"]["reason"] = std::string(capture::to_string(e.kind)) + ": " + e.what();
                notes.push_back("capture_skipped: " + std::string(capture::to_string(e.kind)));
                spdlog::warn("capture skipped: {}", e.what());
            }
        }

        probe::ProbeConfig pc;
        pc.protocol = service.protocol;
        pc.address = target->address;
        pc.path = instr.probe.path;
        pc.interval = instr.probe.interval;
        pc.timeout = instr.probe.timeout;
        pc.max_in_flight = instr.probe.max_in_flight;
        m["probe"] = {{"protocol", std::string(catalog::to_string(pc.protocol))},
                      {"address", pc.address.str()},
                      {"path", pc.path},
                      {"interval_ms", to_millis(pc.interval)},
                      {"timeout_ms", to_millis(pc.timeout)},
                      {"max_in_flight", pc.max_in_flight}};

        const auto t0 = Clock::now();
        const auto t0_wall = std::chrono::system_clock::now();
        m["t0"] = iso8601_utc(t0_wall);
        m["t0_epoch_s"] = std::chrono::duration<double>(t0_wall.time_since_epoch()).count();

        probe_thread = std::jthread([&, pc, t0](std::stop_token stop) {
            try {
                probe::run_probe_loop(pc, windows, t0, dir / "probes.csv", stop);
            } catch (...) {
                probe_error = std::current_exception();
            }
        });
        sampler = std::make_unique<ResourceSampler>(adapter, *target, instr.resource_interval, t0, total_s,
                                                    dir / "resources.csv");

        auto at = [&](double s) { return t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s)); };

        std::this_thread::sleep_until(at(attack_start));
        auto hook_params = cell.params;
        if (!attack.parameter("duration")) {
            hook_params["duration"] = cell.phases.attack;
        }
        auto hook = adapter.exec_hook(*attacker, attack.hook, hook_params);
        attacker_info["command"] = hook.command;
        attacker_info["hook_started_s"] = since(t0, hook.started_at);
        attacker_info["hook_started_at"] = iso8601_utc(hook.started_wall);
        attacker_info["env"] = runtime::hook_environment(hook_params);

        std::this_thread::sleep_until(at(attack_end));
        attacker_info["stop_issued_s"] = since(t0, Clock::now());
        auto stopped = adapter.stop_workload(*attacker);
        attacker_info["stopped_s"] = since(t0, stopped.stopped_at);
        if (auto status = adapter.hook_status(*attacker)) {
            attacker_info["hook_exit"] = exit_json(status->exit);
            attacker_info["stdout_digest"] = status->stdout_digest ? json(*status->stdout_digest) : json(nullptr);
        }

        std::this_thread::sleep_until(at(total_s));
        probe_thread.join();
        sampler->stop();
        if (!sampler->error().empty()) {
            abort_reason = "resource sampling failed: " + sampler->error();
        }
        if (probe_error) {
            std::rethrow_exception(probe_error);
        }
    } catch (const std::exception& e) {
        abort_reason = describe(e);
        spdlog::error("cell {} aborted: {}", cell.cell_id, abort_reason);
    }

    // wind down whatever is still running, in reverse start order
    if (probe_thread.joinable()) {
        probe_thread.request_stop();
        probe_thread.join();
    }
    if (sampler) {
        sampler->stop();
        m["resources"] = {{"interval_ms", to_millis(instr.resource_interval)}, {"samples", sampler->count()},
                          {"workload", "target"}};
    }
    if (cap) {
        auto stats = cap->stop();
        m["capture"]["status"] = "captured";
        m["capture"]["packets"] = stats.packet_count;
        m["capture"]["seen"] = stats.seen;
    }
    for (auto* h : {&attacker, &benign, &target}) {
        if (!*h) {
            continue;
        }
        try {
            auto r = adapter.stop_workload(**h);
            if ((*h)->role == runtime::Role::target) {
                m["target"]["exit"] = exit_json(r.exit);
            }
        } catch (const std::exception& e) {
            notes.push_back("stop " + (*h)->name + " failed: " + e.what());
        }
    }
    try {
        adapter.cleanup(cell.cell_id);
        auto leaked = adapter.live_workloads(cell.cell_id);
        if (!leaked.empty()) {
            notes.push_back("workloads still running after cleanup: " + std::to_string(leaked.size()));
        }
    } catch (const std::exception& e) {
        notes.push_back(std::string("cleanup failed: ") + e.what());
    }
    m["attacker"] = attacker_info;

    if (fs::exists(dir / "probes.csv")) {
        try {
            auto samples = probe::read_probes_csv(dir / "probes.csv");
            m["probe"]["samples"] = samples.size();
        } catch (const std::exception& e) {
            notes.push_back(std::string("probes.csv unreadable: ") + e.what());
        }
    }

    if (instr.extract_features && fs::exists(dir / "capture.pcap")) {
        capture::FlowLabels labels{cell.cell_id, cell.attack_id, cell.level.label,
                                   m["t0_epoch_s"].is_number() ? m["t0_epoch_s"].get<double>() : 0.0, windows};
        for (const auto& t : capture::run_extraction(dir / "capture.pcap", dir / "features", labels, options.tracks)) {
            json tj = {{"name", t.name},
                       {"status", t.status},
                       {"exit_code", t.exit_code ? json(*t.exit_code) : json(nullptr)},
                       {"detail", t.detail},
                       {"output", fs::relative(t.output, dir).generic_string()},
                       {"rows", t.rows}};
            m["tracks"].push_back(tj);
        }
    }

    result.completed = abort_reason.empty();
    result.reason = abort_reason;
    m["outcome"] = result.completed ? json{{"status", "completed"}, {"reason", nullptr}}
                                    : json{{"status", "aborted"}, {"reason", abort_reason}};
    m["notes"] = notes;

    rewrite_manifest(dir, m);
    result.manifest = read_manifest(dir);
    return result;
}

void rewrite_manifest(const fs::path& run_dir, json manifest)
{
    json artifacts = json::object();
    for (const auto& rel : inventory_files(run_dir)) {
        artifacts[rel.generic_string()] = {{"size", fs::file_size(run_dir / rel)}, {"sha256", sha256_file(run_dir / rel)}};
    }
    manifest["artifacts"] = artifacts;
    write_json(run_dir / "meta.json", manifest);
}

std::vector<RunResult> execute_matrix(const planner::ExecutionMatrix& matrix, const catalog::Catalog& catalog,
                                      runtime::RuntimeAdapter& adapter, const RunOptions& options)
{
    std::vector<RunResult> out;
    out.reserve(matrix.cells.size());
    for (const auto& cell : matrix.cells) {
        out.push_back(execute_cell(cell, matrix, catalog, adapter, options));
    }
    return out;
}

} // namespace nsb::orchestrator
