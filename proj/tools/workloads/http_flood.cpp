// nsb-http-flood: closed-loop HTTP GET flood against NSB_TARGET_HOST:NSB_TARGET_PORT.
//
// NSB_RATE        requests per second across all workers, or `unlimited`
// NSB_CONCURRENCY worker connections (default 32)
// NSB_DURATION    seconds to run, 0 = until terminated
// NSB_PATH        request path (default /)

#include <atomic>
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
    auto path = workload::env_or("NSB_PATH", "/");
    if (concurrency < 1) {
        concurrency = 1;
    }
    std::printf("nsb-http-flood target=%s rate=%s concurrency=%d duration=%g\n", target.str().c_str(),
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
                auto r = net::http_get(target, path, std::chrono::steady_clock::now() + std::chrono::seconds(2));
                (r.failure ? failed : ok).fetch_add(1, std::memory_order_relaxed);
            }
        });
    }
    for (auto& w : workers) {
        w.join();
    }
    std::printf("nsb-http-flood done ok=%llu failed=%llu\n", ok.load(), failed.load());
    return 0;
}
