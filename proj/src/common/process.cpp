#include "nsb/common/process.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <thread>
#include <utility>
#include <unistd.h>

extern char** environ;

namespace nsb {

namespace {

ExitInfo decode(int status)
{
    ExitInfo info;
    if (WIFEXITED(status)) {
        info.code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        info.signal = WTERMSIG(status);
    }
    return info;
}

} // namespace

std::string ExitInfo::describe() const
{
    if (signal != 0) {
        return std::string("signal ") + std::to_string(signal) + " (" + ::strsignal(signal) + ")";
    }
    return "exit " + std::to_string(code);
}

ChildProcess::ChildProcess(const SpawnOptions& options) : own_group_(options.own_process_group)
{
    if (options.argv.empty()) {
        throw SpawnError("empty command line", EINVAL);
    }
    std::map<std::string, std::string> env;
    for (char** e = environ; *e != nullptr; ++e) {
        std::string_view kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string_view::npos) {
            env.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
        }
    }
    for (const auto& [k, v] : options.env) {
        env[k] = v;
    }
    std::vector<std::string> env_strings;
    env_strings.reserve(env.size());
    for (const auto& [k, v] : env) {
        env_strings.push_back(k + "=" + v);
    }
    std::vector<char*> envp;
    for (auto& s : env_strings) {
        envp.push_back(s.data());
    }
    envp.push_back(nullptr);
    std::vector<std::string> args = options.argv;
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    if (options.output) {
        posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, options.output->c_str(),
                                         O_WRONLY | O_CREAT | O_APPEND, 0644);
        posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
    }
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    short flags = POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF;
    sigset_t none;
    sigemptyset(&none);
    posix_spawnattr_setsigmask(&attr, &none);
    sigset_t defaults;
    sigemptyset(&defaults);
    sigaddset(&defaults, SIGTERM);
    sigaddset(&defaults, SIGINT);
    sigaddset(&defaults, SIGPIPE);
    posix_spawnattr_setsigdefault(&attr, &defaults);
    if (own_group_) {
        flags |= POSIX_SPAWN_SETPGROUP;
        posix_spawnattr_setpgroup(&attr, 0);
    }
    posix_spawnattr_setflags(&attr, flags);

    pid_t pid = -1;
    int rc = ::posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    if (rc != 0) {
        throw SpawnError("cannot start '" + options.argv[0] + "': " + std::strerror(rc), rc);
    }
    pid_ = pid;
}

ChildProcess::~ChildProcess()
{
    if (started() && !exit_) {
        signal_all(SIGKILL);
        wait();
    }
}

ChildProcess::ChildProcess(ChildProcess&& other) noexcept
    : pid_(std::exchange(other.pid_, -1)), own_group_(other.own_group_), exit_(std::move(other.exit_))
{
}

ChildProcess& ChildProcess::operator=(ChildProcess&& other) noexcept
{
    if (this != &other) {
        if (started() && !exit_) {
            signal_all(SIGKILL);
            wait();
        }
        pid_ = std::exchange(other.pid_, -1);
        own_group_ = other.own_group_;
        exit_ = std::move(other.exit_);
    }
    return *this;
}

std::optional<ExitInfo> ChildProcess::poll()
{
    if (exit_ || !started()) {
        return exit_;
    }
    int status = 0;
    pid_t rc = ::waitpid(pid_, &status, WNOHANG);
    if (rc == pid_) {
        exit_ = decode(status);
    }
    return exit_;
}

ExitInfo ChildProcess::wait()
{
    if (exit_) {
        return *exit_;
    }
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0) {
        if (errno != EINTR) {
            exit_ = ExitInfo{};
            return *exit_;
        }
    }
    exit_ = decode(status);
    return *exit_;
}

void ChildProcess::signal_all(int sig)
{
    if (own_group_) {
        ::kill(-pid_, sig);
    }
    ::kill(pid_, sig);
}

ExitInfo ChildProcess::terminate(std::chrono::milliseconds grace)
{
    if (auto done = poll()) {
        if (own_group_) {
            ::kill(-pid_, SIGKILL);  // stragglers in the group
        }
        return *done;
    }
    signal_all(SIGTERM);
    auto deadline = std::chrono::steady_clock::now() + grace;
    while (std::chrono::steady_clock::now() < deadline) {
        if (auto done = poll()) {
            if (own_group_) {
                ::kill(-pid_, SIGKILL);
            }
            return *done;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    signal_all(SIGKILL);
    return wait();
}

std::optional<std::filesystem::path> find_program(const std::string& name,
                                                  const std::vector<std::filesystem::path>& dirs)
{
    auto executable = [](const std::filesystem::path& p) {
        return std::filesystem::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0;
    };
    if (name.find('/') != std::string::npos) {
        if (executable(name)) {
            return std::filesystem::path(name);
        }
        return std::nullopt;
    }
    for (const auto& d : dirs) {
        if (executable(d / name)) {
            return d / name;
        }
    }
    if (const char* path = std::getenv("PATH")) {
        std::string_view rest(path);
        while (!rest.empty()) {
            auto colon = rest.find(':');
            std::filesystem::path dir(std::string(rest.substr(0, colon)));
            if (!dir.empty() && executable(dir / name)) {
                return dir / name;
            }
            if (colon == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(colon + 1);
        }
    }
    return std::nullopt;
}

} // namespace nsb
