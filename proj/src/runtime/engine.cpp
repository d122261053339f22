#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "nsb/common/digest.hpp"
#include "nsb/probe.hpp"
#include "nsb/runtime.hpp"

namespace nsb::runtime {

namespace {

using nlohmann::json;

// Attackers idle until their hook is executed inside them.
const std::vector<std::string> idle_entrypoint = {"/bin/sh", "-c", "trap 'exit 0' TERM; while :; do sleep 1; done"};

struct Response {
    int status = 0;
    std::string body;
};

struct Entry {
    WorkloadSpec spec;
    RuntimeHandle handle;
    std::optional<std::string> exec_id;
    std::optional<HookResult> hook;
    bool stopped = false;
};

/// Demultiplexes the engine's framed log stream (8-byte headers) when present.
std::string demux_logs(const std::string& raw)
{
    std::string out;
    std::size_t i = 0;
    while (i + 8 <= raw.size()) {
        auto stream = static_cast<unsigned char>(raw[i]);
        if (stream > 2 || raw[i + 1] != 0 || raw[i + 2] != 0 || raw[i + 3] != 0) {
            return raw;
        }
        std::size_t n = (static_cast<std::size_t>(static_cast<unsigned char>(raw[i + 4])) << 24) |
                        (static_cast<std::size_t>(static_cast<unsigned char>(raw[i + 5])) << 16) |
                        (static_cast<std::size_t>(static_cast<unsigned char>(raw[i + 6])) << 8) |
                        static_cast<unsigned char>(raw[i + 7]);
        if (i + 8 + n > raw.size()) {
            return raw;
        }
        out.append(raw, i + 8, n);
        i += 8 + n;
    }
    return i == raw.size() ? out : raw;
}

class EngineAdapter final : public RuntimeAdapter {
public:
    explicit EngineAdapter(EngineOptions options) : options_(std::move(options)) {}

    ~EngineAdapter() override
    {
        std::vector<std::string> cells;
        {
            std::lock_guard lock(mu_);
            for (auto& [_, e] : entries_) {
                cells.push_back(e->spec.cell_id);
            }
        }
        for (const auto& c : cells) {
            try {
                cleanup(c);
            } catch (const std::exception& e) {
                spdlog::warn("engine cleanup for {} failed: {}", c, e.what());
            }
        }
    }

    std::string name() const override { return "engine"; }

    void ping() override
    {
        auto r = request("GET", "/_ping");
        if (r.status != 200) {
            throw RuntimeError(RuntimeError::Kind::adapter_unreachable, "engine ping returned " + std::to_string(r.status));
        }
    }

    RuntimeHandle start_workload(const WorkloadSpec& spec) override
    {
        if (!spec.network.empty()) {
            ensure_network(spec.network, spec.cell_id);
        }
        json body;
        body["Image"] = spec.image;
        json env = json::array();
        for (const auto& [k, v] : spec.env) {
            env.push_back(k + "=" + v);
        }
        body["Env"] = env;
        body["Labels"] = {{"nsb.cell", spec.cell_id}, {"nsb.role", std::string(to_string(spec.role))}, {"nsb.name", spec.name}};
        json host = json::object();
        if (!spec.network.empty()) {
            host["NetworkMode"] = spec.network;
        }
        if (spec.role == Role::attacker) {
            body["Entrypoint"] = idle_entrypoint;
            body["Cmd"] = json::array();
        } else if (!spec.args.empty()) {
            body["Cmd"] = spec.args;
        }
        if (spec.published_port) {
            auto key = std::to_string(*spec.published_port) + "/tcp";
            body["ExposedPorts"] = {{key, json::object()}};
            host["PortBindings"] = {{key, json::array({{{"HostIp", options_.publish_host},
                                                         {"HostPort", std::to_string(*spec.published_port)}}})}};
        }
        body["HostConfig"] = host;

        auto created = request("POST", "/containers/create?name=" + spec.name, body.dump());
        if (created.status == 404) {
            throw RuntimeError(RuntimeError::Kind::image_unavailable, "image not available: " + spec.image);
        }
        if (created.status != 201) {
            throw RuntimeError(RuntimeError::Kind::start_timeout,
                               "container create failed (" + std::to_string(created.status) + "): " + created.body);
        }
        auto e = std::make_shared<Entry>();
        e->spec = spec;
        e->handle.name = spec.name;
        e->handle.role = spec.role;
        e->handle.cell_id = spec.cell_id;
        e->handle.id = json::parse(created.body).at("Id").get<std::string>();
        if (spec.published_port) {
            e->handle.address = {options_.publish_host, *spec.published_port};
            e->handle.peer_address = {spec.name, *spec.published_port};
        }
        {
            std::lock_guard lock(mu_);
            entries_[spec.name] = e;
        }
        e->handle.started_at = Clock::now();
        auto started = request("POST", "/containers/" + e->handle.id + "/start");
        if (started.status != 204 && started.status != 304) {
            throw RuntimeError(RuntimeError::Kind::start_timeout,
                               "container start failed (" + std::to_string(started.status) + "): " + started.body);
        }
        {
            std::lock_guard lock(mu_);
            entries_[spec.name]->handle.started_at = e->handle.started_at;
        }
        if (spec.readiness) {
            wait_ready(*e);
        }
        return e->handle;
    }

    StopReport stop_workload(const RuntimeHandle& handle) override
    {
        auto e = find(handle);
        StopReport r;
        {
            std::lock_guard lock(mu_);
            if (e->stopped) {
                r.already_stopped = true;
                r.stopped_at = Clock::now();
                return r;
            }
        }
        refresh_hook(*e);
        auto resp = request("POST", "/containers/" + handle.id + "/stop?t=" + std::to_string(options_.stop_timeout_s));
        r.stopped_at = Clock::now();
        if (resp.status == 404) {
            r.already_stopped = true;
        } else if (resp.status != 204 && resp.status != 304) {
            throw RuntimeError(RuntimeError::Kind::adapter_unreachable,
                               "container stop failed (" + std::to_string(resp.status) + ")");
        }
        auto info = request("GET", "/containers/" + handle.id + "/json");
        if (info.status == 200) {
            auto state = json::parse(info.body).value("State", json::object());
            ExitInfo exit;
            exit.code = state.value("ExitCode", 0);
            r.exit = exit;
        }
        save_logs(*e);
        refresh_hook(*e);
        r.duration = std::chrono::duration_cast<Duration>(r.stopped_at - e->handle.started_at);
        std::lock_guard lock(mu_);
        e->stopped = true;
        return r;
    }

    HookResult exec_hook(const RuntimeHandle& handle, const std::string& hook, const catalog::ParamSet& params) override
    {
        auto e = find(handle);
        if (e->spec.hook.empty() || hook != e->spec.hook) {
            throw RuntimeError(RuntimeError::Kind::hook_not_found,
                               "hook '" + hook + "' is not declared for workload " + e->spec.name);
        }
        std::map<std::string, std::string> rendered;
        for (const auto& [k, v] : params) {
            rendered[k] = catalog::render(v);
        }
        json cmd = json::array({hook});
        for (auto& a : expand_args(e->spec.hook_args, rendered)) {
            cmd.push_back(a);
        }
        json env = json::array();
        auto vars = e->spec.env;
        for (auto& [k, v] : hook_environment(params)) {
            vars[k] = v;
        }
        for (const auto& [k, v] : vars) {
            env.push_back(k + "=" + v);
        }
        HookResult result;
        result.started_at = Clock::now();
        result.started_wall = std::chrono::system_clock::now();
        for (const auto& a : cmd) {
            result.command += (result.command.empty() ? "" : " ") + a.get<std::string>();
        }
        json body = {{"Cmd", cmd}, {"Env", env}, {"AttachStdout", false}, {"AttachStderr", false}};
        auto created = request("POST", "/containers/" + handle.id + "/exec", body.dump());
        if (created.status == 404 || created.status == 409) {
            throw RuntimeError(RuntimeError::Kind::hook_launch_failure, "attacker container not running: " + handle.name);
        }
        if (created.status != 201) {
            throw RuntimeError(RuntimeError::Kind::hook_launch_failure,
                               "exec create failed (" + std::to_string(created.status) + "): " + created.body);
        }
        auto exec_id = json::parse(created.body).at("Id").get<std::string>();
        auto started = request("POST", "/exec/" + exec_id + "/start", json{{"Detach", true}, {"Tty", false}}.dump());
        if (started.status != 200 && started.status != 204) {
            throw RuntimeError(RuntimeError::Kind::hook_launch_failure,
                               "exec start failed (" + std::to_string(started.status) + "): " + started.body);
        }
        std::lock_guard lock(mu_);
        e->exec_id = exec_id;
        e->hook = result;
        return result;
    }

    std::optional<HookResult> hook_status(const RuntimeHandle& handle) override
    {
        auto e = find(handle);
        refresh_hook(*e);
        std::lock_guard lock(mu_);
        return e->hook;
    }

    ResourceSample sample_resources(const RuntimeHandle& handle) override
    {
        auto e = find(handle);
        {
            std::lock_guard lock(mu_);
            if (e->stopped) {
                throw RuntimeError(RuntimeError::Kind::workload_gone, "workload stopped: " + handle.name);
            }
        }
        auto r = request("GET", "/containers/" + handle.id + "/stats?stream=false");
        if (r.status == 404 || r.status == 409) {
            throw RuntimeError(RuntimeError::Kind::workload_gone, "workload gone: " + handle.name);
        }
        if (r.status != 200) {
            throw RuntimeError(RuntimeError::Kind::adapter_unreachable, "stats returned " + std::to_string(r.status));
        }
        auto stats = json::parse(r.body);
        ResourceSample s;
        auto cpu = stats.value("cpu_stats", json::object());
        auto pre = stats.value("precpu_stats", json::object());
        double total = cpu.value("cpu_usage", json::object()).value("total_usage", 0.0);
        double pre_total = pre.value("cpu_usage", json::object()).value("total_usage", 0.0);
        double system = cpu.value("system_cpu_usage", 0.0);
        double pre_system = pre.value("system_cpu_usage", 0.0);
        double cpus = cpu.value("online_cpus", 1.0);
        if (system > pre_system && total >= pre_total) {
            s.cpu_pct = (total - pre_total) / (system - pre_system) * cpus * 100.0;
        }
        auto mem = stats.value("memory_stats", json::object());
        double usage = mem.value("usage", 0.0);
        double limit = mem.value("limit", 0.0);
        s.mem_pct = limit > 0 ? std::clamp(100.0 * usage / limit, 0.0, 100.0) : read_mem_pct();
        auto load = read_loadavg();
        s.load1 = load.load1;
        s.load5 = load.load5;
        s.load15 = load.load15;
        return s;
    }

    std::vector<std::string> live_workloads(const std::string& cell_id) override
    {
        json filters = {{"label", json::array({"nsb.cell=" + cell_id})}};
        auto r = request("GET", "/containers/json?filters=" + httplib::detail::encode_query_param(filters.dump()));
        if (r.status != 200) {
            throw RuntimeError(RuntimeError::Kind::adapter_unreachable, "container list returned " + std::to_string(r.status));
        }
        std::vector<std::string> out;
        for (const auto& c : json::parse(r.body)) {
            auto labels = c.value("Labels", json::object());
            out.push_back(labels.value("nsb.name", c.value("Id", std::string())));
        }
        return out;
    }

    void cleanup(const std::string& cell_id) override
    {
        std::vector<std::shared_ptr<Entry>> mine;
        {
            std::lock_guard lock(mu_);
            for (auto& [_, e] : entries_) {
                if (e->spec.cell_id == cell_id) {
                    mine.push_back(e);
                }
            }
        }
        for (auto& e : mine) {
            try {
                stop_workload(e->handle);
            } catch (const std::exception&) {
            }
            request("DELETE", "/containers/" + e->handle.id + "?force=true");
        }
        std::set<std::string> networks;
        {
            std::lock_guard lock(mu_);
            std::erase_if(entries_, [&](const auto& kv) { return kv.second->spec.cell_id == cell_id; });
            for (auto it = networks_.begin(); it != networks_.end();) {
                if (it->second == cell_id) {
                    networks.insert(it->first);
                    it = networks_.erase(it);
                } else {
                    ++it;
                }
            }
        }
        for (const auto& n : networks) {
            request("DELETE", "/networks/" + n);
        }
    }

    std::map<std::string, std::string> versions() override
    {
        std::map<std::string, std::string> out{{"adapter", "engine"}, {"api", options_.api_version}};
        try {
            auto r = request("GET", "/version");
            if (r.status == 200) {
                auto v = json::parse(r.body);
                out["engine"] = v.value("Version", "");
                out["engine_api"] = v.value("ApiVersion", "");
            }
        } catch (const std::exception&) {
        }
        return out;
    }

private:
    Response request(const std::string& method, const std::string& path, const std::string& body = {})
    {
        httplib::Client cli(options_.socket.string());
        cli.set_address_family(AF_UNIX);
        cli.set_connection_timeout(std::chrono::seconds(2));
        cli.set_read_timeout(std::chrono::seconds(options_.stop_timeout_s + 10));
        std::string full = "/" + options_.api_version + path;
        httplib::Result res;
        if (method == "GET") {
            res = cli.Get(full);
        } else if (method == "POST") {
            res = cli.Post(full, body, "application/json");
        } else {
            res = cli.Delete(full);
        }
        if (!res) {
            throw RuntimeError(RuntimeError::Kind::adapter_unreachable,
                               "engine at " + options_.socket.string() + " unreachable: " + httplib::to_string(res.error()));
        }
        return {res->status, res->body};
    }

    std::shared_ptr<Entry> find(const RuntimeHandle& handle)
    {
        std::lock_guard lock(mu_);
        auto it = entries_.find(handle.name);
        if (it == entries_.end() || it->second->handle.id != handle.id) {
            throw RuntimeError(RuntimeError::Kind::workload_gone, "unknown workload: " + handle.name);
        }
        return it->second;
    }

    void ensure_network(const std::string& network, const std::string& cell_id)
    {
        {
            std::lock_guard lock(mu_);
            if (networks_.count(network)) {
                return;
            }
        }
        json body = {{"Name", network}, {"CheckDuplicate", true}, {"Labels", {{"nsb.cell", cell_id}}}};
        auto r = request("POST", "/networks/create", body.dump());
        if (r.status != 201 && r.status != 409) {
            throw RuntimeError(RuntimeError::Kind::adapter_unreachable,
                               "network create failed (" + std::to_string(r.status) + "): " + r.body);
        }
        std::lock_guard lock(mu_);
        networks_[network] = cell_id;
    }

    void refresh_hook(Entry& e)
    {
        std::string exec_id;
        {
            std::lock_guard lock(mu_);
            if (!e.exec_id || !e.hook || e.hook->exit) {
                return;
            }
            exec_id = *e.exec_id;
        }
        auto r = request("GET", "/exec/" + exec_id + "/json");
        if (r.status != 200) {
            return;
        }
        auto info = json::parse(r.body);
        if (!info.value("Running", false)) {
            ExitInfo exit;
            exit.code = info.contains("ExitCode") && info["ExitCode"].is_number() ? info["ExitCode"].get<int>() : 0;
            std::lock_guard lock(mu_);
            e.hook->exit = exit;
        }
    }

    void save_logs(Entry& e)
    {
        if (!e.spec.log) {
            return;
        }
        auto r = request("GET", "/containers/" + e.handle.id + "/logs?stdout=true&stderr=true");
        if (r.status != 200) {
            return;
        }
        auto text = demux_logs(r.body);
        std::ofstream out(*e.spec.log, std::ios::binary | std::ios::app);
        out << text;
        out.close();
        std::lock_guard lock(mu_);
        if (e.hook) {
            e.hook->stdout_digest = sha256_hex(text);
        }
    }

    void wait_ready(Entry& e)
    {
        const auto& rc = *e.spec.readiness;
        probe::ProbeConfig pc;
        pc.protocol = rc.protocol;
        pc.address = e.handle.address;
        pc.path = rc.path;
        pc.timeout = std::chrono::milliseconds(500);
        auto deadline = Clock::now() + rc.timeout;
        while (Clock::now() < deadline) {
            if (probe::probe_once(pc).latency_ms) {
                return;
            }
            std::this_thread::sleep_for(options_.readiness_poll);
        }
        try {
            stop_workload(e.handle);
        } catch (const std::exception&) {
        }
        throw RuntimeError(RuntimeError::Kind::start_timeout,
                           e.spec.name + " not ready within " + format_duration(rc.timeout));
    }

    EngineOptions options_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> entries_;
    std::map<std::string, std::string> networks_;  // name -> cell
};

} // namespace

std::unique_ptr<RuntimeAdapter> make_engine_adapter(EngineOptions options)
{
    return std::make_unique<EngineAdapter>(std::move(options));
}

} // namespace nsb::runtime
