#include <algorithm>
#include <fstream>
#include <sstream>

#include "nsb/common/text.hpp"
#include "nsb/runtime.hpp"

namespace nsb::runtime {

std::string_view to_string(Role role)
{
    switch (role) {
    case Role::target:
        return "target";
    case Role::attacker:
        return "attacker";
    case Role::benign:
        return "benign";
    case Role::capture:
        return "capture";
    }
    return "target";
}

std::string_view to_string(RuntimeError::Kind kind)
{
    switch (kind) {
    case RuntimeError::Kind::image_unavailable:
        return "ImageUnavailable";
    case RuntimeError::Kind::start_timeout:
        return "StartTimeout";
    case RuntimeError::Kind::adapter_unreachable:
        return "AdapterUnreachable";
    case RuntimeError::Kind::hook_not_found:
        return "HookNotFound";
    case RuntimeError::Kind::hook_launch_failure:
        return "HookLaunchFailure";
    case RuntimeError::Kind::workload_gone:
        return "WorkloadGone";
    }
    return "RuntimeError";
}

std::map<std::string, std::string> hook_environment(const catalog::ParamSet& params)
{
    std::map<std::string, std::string> env;
    for (const auto& [name, value] : params) {
        env["NSB_" + to_upper(name)] = catalog::render(value);
    }
    return env;
}

std::vector<std::string> expand_args(const std::vector<std::string>& args, const std::map<std::string, std::string>& values)
{
    std::vector<std::string> out;
    out.reserve(args.size());
    for (auto arg : args) {
        for (const auto& [name, value] : values) {
            const std::string key = "${" + name + "}";
            for (auto pos = arg.find(key); pos != std::string::npos; pos = arg.find(key, pos + value.size())) {
                arg.replace(pos, key.size(), value);
            }
        }
        out.push_back(std::move(arg));
    }
    return out;
}

HostLoad read_loadavg()
{
    HostLoad l;
    std::ifstream in("/proc/loadavg");
    in >> l.load1 >> l.load5 >> l.load15;
    return l;
}

double read_mem_pct()
{
    std::ifstream in("/proc/meminfo");
    std::string key;
    double value = 0;
    std::string unit;
    double total = 0, available = -1;
    while (in >> key >> value) {
        std::getline(in, unit);
        if (key == "MemTotal:") {
            total = value;
        } else if (key == "MemAvailable:") {
            available = value;
        }
    }
    if (total <= 0 || available < 0) {
        return 0;
    }
    double pct = 100.0 * (total - available) / total;
    return std::clamp(pct, 0.0, 100.0);
}

} // namespace nsb::runtime
