// nsb-benign-client: paced background HTTP clients.
//
// NSB_CLIENTS      number of independent clients (default 1)
// NSB_INTERARRIVAL seconds between requests of one client (default 1)
// NSB_DURATION     seconds to run, 0 = until terminated
// NSB_PATH         request path (default /)

#include <atomic>
#include <csignal>
#include <cstdio>
#include <thread>
#include <vector>

#include "workload_env.hpp"

int main()
{
    using namespace nsb;
    using Clock = std::chrono::steady_clock;
    std::signal(SIGPIPE, SIG_IGN);
    auto target = workload::target_from_env();
    int clients = static_cast<int>(workload::env_real("NSB_CLIENTS", 1));
    double interarrival = workload::env_real("NSB_INTERARRIVAL", 1);
    double duration = workload::env_real("NSB_DURATION", 0);
    auto path = workload::env_or("NSB_PATH", "/");
    if (clients < 1 || interarrival <= 0) {
        std::fprintf(stderr, "NSB_CLIENTS must be >= 1 and NSB_INTERARRIVAL > 0\n");
        return 2;
    }
    std::printf("nsb-benign-client target=%s clients=%d interarrival=%g duration=%g\n", target.str().c_str(),
                clients, interarrival, duration);
    std::fflush(stdout);

    auto step = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(interarrival));
    auto start = Clock::now();
    auto end = duration > 0
                   ? start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(duration))
                   : Clock::time_point::max();
    std::atomic<unsigned long long> ok{0}, failed{0};
    std::vector<std::thread> threads;
    for (int c = 0; c < clients; ++c) {
        threads.emplace_back([&, c] {
            // stagger clients across one interval
            auto next = start + step * c / clients;
            while (next < end) {
                std::this_thread::sleep_until(next);
                auto r = net::http_get(target, path, Clock::now() + std::chrono::seconds(2));
                (r.failure ? failed : ok).fetch_add(1, std::memory_order_relaxed);
                next += step;
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    std::printf("nsb-benign-client done ok=%llu failed=%llu\n", ok.load(), failed.load());
    return 0;
}
