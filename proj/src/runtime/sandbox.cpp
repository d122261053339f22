#include <algorithm>
#include <fstream>
#include <sstream>
#include <mutex>
#include <thread>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "nsb/common/digest.hpp"
#include "nsb/probe.hpp"
#include "nsb/runtime.hpp"

namespace nsb::runtime {

namespace {

struct CpuTimes {
    double cpu_s = 0;
    double wall_s = 0;
};

std::optional<double> process_cpu_seconds(pid_t pid)
{
    std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
    std::string line;
    if (!std::getline(in, line)) {
        return std::nullopt;
    }
    auto close = line.rfind(')');
    if (close == std::string::npos) {
        return std::nullopt;
    }
    std::istringstream rest(line.substr(close + 2));
    std::string field;
    // after the command name: state is field 3, utime 14, stime 15
    double utime = 0, stime = 0;
    for (int i = 3; i <= 15 && rest >> field; ++i) {
        if (i == 14) {
            utime = std::stod(field);
        } else if (i == 15) {
            stime = std::stod(field);
        }
    }
    return (utime + stime) / static_cast<double>(::sysconf(_SC_CLK_TCK));
}

double seconds_since(Clock::time_point t)
{
    return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Entry {
    std::mutex mu;
    WorkloadSpec spec;
    RuntimeHandle handle;
    std::filesystem::path program;
    std::optional<ChildProcess> process;
    std::optional<ChildProcess> hook;
    std::optional<HookResult> hook_result;
    bool stopped = false;
    std::optional<CpuTimes> last_cpu;
};

class SandboxAdapter final : public RuntimeAdapter {
public:
    explicit SandboxAdapter(SandboxOptions options) : options_(std::move(options)) {}

    ~SandboxAdapter() override
    {
        std::lock_guard lock(mu_);
        for (auto& [_, e] : entries_) {
            std::lock_guard el(e->mu);
            if (e->hook) {
                e->hook->terminate(std::chrono::milliseconds(200));
            }
            if (e->process) {
                e->process->terminate(std::chrono::milliseconds(200));
            }
        }
    }

    std::string name() const override { return "sandbox"; }

    void ping() override {}

    RuntimeHandle start_workload(const WorkloadSpec& spec) override
    {
        auto program = find_program(spec.image, options_.program_dirs);
        if (!program) {
            throw RuntimeError(RuntimeError::Kind::image_unavailable, "program not found: " + spec.image);
        }
        auto e = std::make_shared<Entry>();
        e->spec = spec;
        e->program = *program;
        e->handle.name = spec.name;
        e->handle.role = spec.role;
        e->handle.cell_id = spec.cell_id;
        if (spec.published_port) {
            e->handle.address = {options_.host, *spec.published_port};
            e->handle.peer_address = e->handle.address;
        }
        {
            std::lock_guard lock(mu_);
            auto it = entries_.find(spec.name);
            if (it != entries_.end() && !it->second->stopped) {
                throw RuntimeError(RuntimeError::Kind::start_timeout, "workload name already in use: " + spec.name);
            }
        }
        e->handle.started_at = Clock::now();
        if (spec.role != Role::attacker) {
            // attackers stay armed until their hook is executed
            SpawnOptions opts;
            opts.argv.push_back(program->string());
            opts.argv.insert(opts.argv.end(), spec.args.begin(), spec.args.end());
            opts.env = spec.env;
            opts.output = spec.log;
            try {
                e->process.emplace(opts);
            } catch (const SpawnError& err) {
                throw RuntimeError(RuntimeError::Kind::image_unavailable, err.what());
            }
            e->handle.id = std::to_string(e->process->pid());
        } else {
            e->handle.id = "armed:" + spec.name;
        }
        {
            std::lock_guard lock(mu_);
            entries_[spec.name] = e;
        }
        if (spec.readiness) {
            wait_ready(*e);
        }
        return e->handle;
    }

    StopReport stop_workload(const RuntimeHandle& handle) override
    {
        auto e = find(handle);
        std::lock_guard lock(e->mu);
        StopReport r;
        if (e->stopped) {
            r.already_stopped = true;
            r.stopped_at = Clock::now();
            return r;
        }
        auto grace = std::chrono::duration_cast<std::chrono::milliseconds>(options_.stop_grace);
        if (e->hook) {
            r.exit = e->hook->terminate(grace);
            finish_hook(*e);
        }
        if (e->process) {
            r.exit = e->process->terminate(grace);
        }
        r.stopped_at = Clock::now();
        r.duration = std::chrono::duration_cast<Duration>(r.stopped_at - e->handle.started_at);
        e->stopped = true;
        return r;
    }

    HookResult exec_hook(const RuntimeHandle& handle, const std::string& hook, const catalog::ParamSet& params) override
    {
        auto e = find(handle);
        std::lock_guard lock(e->mu);
        if (e->spec.hook.empty() || hook != e->spec.hook) {
            throw RuntimeError(RuntimeError::Kind::hook_not_found,
                               "hook '" + hook + "' is not declared for workload " + e->spec.name);
        }
        if (e->stopped) {
            throw RuntimeError(RuntimeError::Kind::workload_gone, "workload stopped: " + e->spec.name);
        }
        if (e->hook) {
            throw RuntimeError(RuntimeError::Kind::hook_launch_failure, "hook already running on " + e->spec.name);
        }
        std::map<std::string, std::string> rendered;
        for (const auto& [k, v] : params) {
            rendered[k] = catalog::render(v);
        }
        SpawnOptions opts;
        opts.argv.push_back(e->program.string());
        auto extra = expand_args(e->spec.hook_args, rendered);
        opts.argv.insert(opts.argv.end(), extra.begin(), extra.end());
        opts.env = e->spec.env;
        for (auto& [k, v] : hook_environment(params)) {
            opts.env[k] = v;
        }
        opts.output = e->spec.log;
        HookResult result;
        result.started_at = Clock::now();
        result.started_wall = std::chrono::system_clock::now();
        for (const auto& a : opts.argv) {
            result.command += (result.command.empty() ? "" : " ") + a;
        }
        try {
            e->hook.emplace(opts);
        } catch (const SpawnError& err) {
            throw RuntimeError(RuntimeError::Kind::hook_launch_failure, err.what());
        }
        e->hook_result = result;
        return result;
    }

    std::optional<HookResult> hook_status(const RuntimeHandle& handle) override
    {
        auto e = find(handle);
        std::lock_guard lock(e->mu);
        if (e->hook && !e->hook_result->exit) {
            if (e->hook->poll()) {
                finish_hook(*e);
            }
        }
        return e->hook_result;
    }

    ResourceSample sample_resources(const RuntimeHandle& handle) override
    {
        auto e = find(handle);
        std::lock_guard lock(e->mu);
        ChildProcess* proc = e->process ? &*e->process : (e->hook ? &*e->hook : nullptr);
        if (e->stopped || proc == nullptr || !proc->running()) {
            throw RuntimeError(RuntimeError::Kind::workload_gone, "workload not running: " + e->spec.name);
        }
        auto cpu = process_cpu_seconds(proc->pid());
        if (!cpu) {
            throw RuntimeError(RuntimeError::Kind::workload_gone, "workload not running: " + e->spec.name);
        }
        CpuTimes now{*cpu, seconds_since(e->handle.started_at)};
        CpuTimes prev = e->last_cpu.value_or(CpuTimes{0, 0});
        e->last_cpu = now;
        ResourceSample s;
        double wall = now.wall_s - prev.wall_s;
        s.cpu_pct = wall > 0 ? std::max(0.0, 100.0 * (now.cpu_s - prev.cpu_s) / wall) : 0.0;
        auto load = read_loadavg();
        s.load1 = load.load1;
        s.load5 = load.load5;
        s.load15 = load.load15;
        s.mem_pct = read_mem_pct();
        return s;
    }

    std::vector<std::string> live_workloads(const std::string& cell_id) override
    {
        std::vector<std::shared_ptr<Entry>> all;
        {
            std::lock_guard lock(mu_);
            for (auto& [_, e] : entries_) {
                all.push_back(e);
            }
        }
        std::vector<std::string> out;
        for (auto& e : all) {
            std::lock_guard el(e->mu);
            if (e->spec.cell_id != cell_id) {
                continue;
            }
            bool live = (e->process && e->process->running()) || (e->hook && e->hook->running()) ||
                        (!e->stopped && e->spec.role == Role::attacker);
            if (live) {
                out.push_back(e->spec.name);
            }
        }
        return out;
    }

    void cleanup(const std::string& cell_id) override
    {
        std::vector<RuntimeHandle> handles;
        {
            std::lock_guard lock(mu_);
            for (auto& [_, e] : entries_) {
                if (e->spec.cell_id == cell_id) {
                    handles.push_back(e->handle);
                }
            }
        }
        for (const auto& h : handles) {
            stop_workload(h);
        }
        std::lock_guard lock(mu_);
        std::erase_if(entries_, [&](const auto& kv) { return kv.second->spec.cell_id == cell_id; });
    }

    std::map<std::string, std::string> versions() override { return {{"adapter", "sandbox"}}; }

private:
    std::shared_ptr<Entry> find(const RuntimeHandle& handle)
    {
        std::lock_guard lock(mu_);
        auto it = entries_.find(handle.name);
        if (it == entries_.end() || it->second->handle.id != handle.id) {
            throw RuntimeError(RuntimeError::Kind::workload_gone, "unknown workload: " + handle.name);
        }
        return it->second;
    }

    void finish_hook(Entry& e)
    {
        if (!e.hook_result || e.hook_result->exit) {
            return;
        }
        e.hook_result->exit = e.hook->poll();
        if (e.spec.log && std::filesystem::exists(*e.spec.log)) {
            e.hook_result->stdout_digest = sha256_file(*e.spec.log);
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
            {
                std::lock_guard lock(e.mu);
                if (e.process && !e.process->running()) {
                    auto info = e.process->poll();
                    e.stopped = true;
                    throw RuntimeError(RuntimeError::Kind::start_timeout,
                                       e.spec.name + " exited before becoming ready (" + info->describe() + ")");
                }
            }
            auto raw = probe::probe_once(pc);
            if (raw.latency_ms) {
                return;
            }
            std::this_thread::sleep_for(options_.readiness_poll);
        }
        stop_workload(e.handle);
        throw RuntimeError(RuntimeError::Kind::start_timeout,
                           e.spec.name + " not ready within " + format_duration(rc.timeout));
    }

    SandboxOptions options_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Entry>> entries_;
};

} // namespace

std::unique_ptr<RuntimeAdapter> make_sandbox_adapter(SandboxOptions options)
{
    return std::make_unique<SandboxAdapter>(std::move(options));
}

} // namespace nsb::runtime
