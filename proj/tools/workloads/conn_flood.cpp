// nsb-conn-flood: TCP connect flood (open, then reset) against NSB_TARGET_HOST:NSB_TARGET_PORT.
//
// NSB_RATE        connection attempts per second across all workers, or `unlimited`
// NSB_CONCURRENCY parallel connectors (default 32)
// NSB_DURATION    seconds to run, 0 = until terminated
// NSB_HOLD        seconds each connection is held open before the reset (default 0)

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <thread>
#include <vector>

#include "workload_env.hpp"

int main()
{
    using namespace nsb;
    std::signal(SIGPIPE, SIG_IGN);
    auto target = workload::target_from_env();
    auto rate = workload::rate_from_env();
    int concurrency = static_cast<int>(workload::env_real("NSB_CONCURRENCY", 32));
    double duration = workload::env_real("NSB_DURATION", 0);
    auto hold = std::chrono::milliseconds(std::lround(workload::env_real("NSB_HOLD", 0) * 1000));
    if (concurrency < 1) {
        concurrency = 1;
    }
    std::printf("nsb-conn-flood target=%s rate=%s concurrency=%d duration=%g\n", target.str().c_str(),
                rate ? std::to_string(*rate).c_str() : "unlimited", concurrency, duration);
    std::fflush(stdout);

    workload::Pacer pacer(rate);
    auto start = std::chrono::steady_clock::now();
    auto end = duration > 0 ? start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                          std::chrono::duration<double>(duration))
                            : std::chrono::steady_clock::time_point::max();
    std::atomic<unsigned long long> ok{0}, failed{0};
    std::vector<std::thread> workers;
    for (int i = 0; i < concurrency; ++i) {
        workers.emplace_back([&] {
            while (std::chrono::steady_clock::now() < end) {
                if (pacer.limited()) {
                    std::this_thread::sleep_until(pacer.next_slot());
                }
                auto c = net::connect_tcp(target, std::chrono::steady_clock::now() + std::chrono::seconds(2));
                if (c.failure) {
                    failed.fetch_add(1, std::memory_order_relaxed);
                    continue;
                }
                ok.fetch_add(1, std::memory_order_relaxed);
                if (hold.count() > 0) {
                    std::this_thread::sleep_for(hold);
                }
                c.socket.abort();
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
    std::printf("nsb-conn-flood done ok=%llu failed=%llu\n", ok.load(), failed.load());
    return 0;
}
