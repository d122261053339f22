#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

#include "nsb/common/error.hpp"

namespace nsb {

class SpawnError : public Error {
public:
    SpawnError(std::string message, int err) : Error(std::move(message)), errno_value(err) {}
    int errno_value;
};

struct ExitInfo {
    int code = 0;      // valid when signal == 0
    int signal = 0;    // terminating signal, 0 if exited normally

    bool success() const { return signal == 0 && code == 0; }
    std::string describe() const;
};

struct SpawnOptions {
    std::vector<std::string> argv;
    std::map<std::string, std::string> env;  // merged over the parent environment
    std::optional<std::filesystem::path> output;  // stdout+stderr, appended
    bool own_process_group = true;
};

// A supervised child process. Destruction kills and reaps it.
class ChildProcess {
public:
    ChildProcess() = default;
    explicit ChildProcess(const SpawnOptions& options);
    ~ChildProcess();
    ChildProcess(ChildProcess&& other) noexcept;
    ChildProcess& operator=(ChildProcess&& other) noexcept;
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    pid_t pid() const { return pid_; }
    bool started() const { return pid_ > 0; }

    /// Non-blocking reap.
    std::optional<ExitInfo> poll();
    ExitInfo wait();
    bool running() { return started() && !poll(); }

    /// SIGTERM, then SIGKILL once `grace` has elapsed.
    ExitInfo terminate(std::chrono::milliseconds grace);

private:
    void signal_all(int sig);

    pid_t pid_ = -1;
    bool own_group_ = true;
    std::optional<ExitInfo> exit_;
};

/// Locates `name` in `dirs`, then on PATH. Names containing '/' are checked as paths.
std::optional<std::filesystem::path> find_program(const std::string& name,
                                                  const std::vector<std::filesystem::path>& dirs);

} // namespace nsb
