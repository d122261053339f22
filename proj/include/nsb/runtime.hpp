#pragma once

// Workload control behind a runtime adapter: a container-engine HTTP API client
// and a local process sandbox.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nsb/catalog.hpp"
#include "nsb/common/error.hpp"
#include "nsb/common/net.hpp"
#include "nsb/common/process.hpp"

namespace nsb::runtime {

using Clock = std::chrono::steady_clock;

enum class Role { target, attacker, benign, capture };

std::string_view to_string(Role role);

struct ReadinessCheck {
    catalog::Protocol protocol = catalog::Protocol::tcp;
    std::string path = "/";
    Duration timeout = std::chrono::seconds(30);
};

struct WorkloadSpec {
    std::string name;
    std::string image;                  // sandbox: program name; engine: image reference
    std::vector<std::string> args;
    std::map<std::string, std::string> env;
    std::string network;                // experiment network id
    std::optional<std::uint16_t> published_port;
    Role role = Role::target;
    std::string cell_id;                // workloads are tagged with their cell
    std::optional<ReadinessCheck> readiness;
    // attacker only: the declared hook and its argument list
    std::string hook;
    std::vector<std::string> hook_args;
    std::optional<std::filesystem::path> log;  // sandbox: stdout+stderr of the workload
};

struct RuntimeHandle {
    std::string name;
    std::string id;
    Role role = Role::target;
    std::string cell_id;
    Clock::time_point started_at{};
    net::Endpoint address;       // reachable from the host (probes)
    net::Endpoint peer_address;  // reachable from other workloads
};

struct ResourceSample {
    double t = 0;
    double cpu_pct = 0;
    double load1 = 0;
    double load5 = 0;
    double load15 = 0;
    double mem_pct = 0;
};

struct StopReport {
    bool already_stopped = false;
    std::optional<ExitInfo> exit;  // absent when the adapter cannot tell
    Duration duration{};
    Clock::time_point stopped_at{};
};

struct HookResult {
    Clock::time_point started_at{};
    std::chrono::system_clock::time_point started_wall{};
    std::optional<ExitInfo> exit;         // set once the hook finished
    std::optional<std::string> stdout_digest;
    std::string command;                  // as launched, for the manifest
};

class RuntimeError : public Error {
public:
    enum class Kind {
        image_unavailable,
        start_timeout,
        adapter_unreachable,
        hook_not_found,
        hook_launch_failure,
        workload_gone,
    };
    RuntimeError(Kind k, const std::string& what) : Error(what), kind(k) {}
    Kind kind;
};

std::string_view to_string(RuntimeError::Kind kind);

/// Hook parameters as environment: `NSB_<UPPERNAME>` with decimal values.
std::map<std::string, std::string> hook_environment(const catalog::ParamSet& params);

/// Substitutes `${name}` references with rendered parameter values.
std::vector<std::string> expand_args(const std::vector<std::string>& args, const std::map<std::string, std::string>& values);

// All methods may be called concurrently.
class RuntimeAdapter {
public:
    virtual ~RuntimeAdapter() = default;

    virtual std::string name() const = 0;
    /// Throws RuntimeError(adapter_unreachable).
    virtual void ping() = 0;
    virtual RuntimeHandle start_workload(const WorkloadSpec& spec) = 0;
    virtual StopReport stop_workload(const RuntimeHandle& handle) = 0;
    virtual HookResult exec_hook(const RuntimeHandle& handle, const std::string& hook, const catalog::ParamSet& params) = 0;
    /// Latest state of the hook launched on `handle`, if any.
    virtual std::optional<HookResult> hook_status(const RuntimeHandle& handle) = 0;
    /// `t` is left at zero; the caller stamps it.
    virtual ResourceSample sample_resources(const RuntimeHandle& handle) = 0;
    /// Names of running workloads tagged with `cell_id`.
    virtual std::vector<std::string> live_workloads(const std::string& cell_id) = 0;
    /// Removes whatever is left for `cell_id` (best effort).
    virtual void cleanup(const std::string& cell_id) = 0;
    virtual std::map<std::string, std::string> versions() = 0;
};

struct SandboxOptions {
    std::vector<std::filesystem::path> program_dirs;  // searched before PATH
    Duration stop_grace = std::chrono::seconds(1);
    Duration readiness_poll = std::chrono::milliseconds(50);
    std::string host = "127.0.0.1";
};

std::unique_ptr<RuntimeAdapter> make_sandbox_adapter(SandboxOptions options);

struct EngineOptions {
    std::filesystem::path socket = "/var/run/docker.sock";
    std::string api_version = "v1.41";
    int stop_timeout_s = 1;
    Duration readiness_poll = std::chrono::milliseconds(100);
    std::string publish_host = "127.0.0.1";
};

std::unique_ptr<RuntimeAdapter> make_engine_adapter(EngineOptions options);

// Host counters shared by both adapters.
struct HostLoad {
    double load1 = 0, load5 = 0, load15 = 0;
};
HostLoad read_loadavg();
double read_mem_pct();

} // namespace nsb::runtime
