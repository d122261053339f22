#include "nsb/probe.hpp"

#include <cmath>
#include <condition_variable>
#include <mutex>
#include <semaphore>
#include <thread>

#include "nsb/common/csv.hpp"
#include "nsb/common/text.hpp"

namespace nsb::probe {

using Clock = std::chrono::steady_clock;

void validate(const ProbeConfig& config)
{
    if (config.interval.count() <= 0) {
        throw ProbeError("probe interval must be > 0");
    }
    if (config.timeout.count() <= 0) {
        throw ProbeError("probe timeout must be > 0");
    }
    if (config.max_in_flight < 1 || config.max_in_flight > 1024) {
        throw ProbeError("probe max_in_flight must be in [1, 1024]");
    }
    if (config.address.port == 0) {
        throw ProbeError("probe address has no port");
    }
}

RawResult probe_once(const ProbeConfig& config)
{
    RawResult r;
    auto start = Clock::now();
    auto deadline = start + config.timeout;
    if (config.protocol == catalog::Protocol::http) {
        auto outcome = net::http_get(config.address, config.path, deadline);
        if (outcome.failure) {
            r.failure = outcome.failure;
            return r;
        }
    } else {
        auto outcome = net::connect_tcp(config.address, deadline);
        if (outcome.failure) {
            r.failure = outcome.failure;
            return r;
        }
    }
    r.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    return r;
}

Censored censor(const RawResult& raw, double timeout_ms)
{
    if (!raw.failure && raw.latency_ms && *raw.latency_ms <= timeout_ms) {
        return Censored{true, *raw.latency_ms};
    }
    return Censored{false, timeout_ms};
}

ProbeSample make_sample(double t_s, Phase phase, const RawResult& raw, double timeout_ms)
{
    auto c = censor(raw, timeout_ms);
    ProbeSample s;
    s.t_s = t_s;
    s.phase = phase;
    s.success = c.success;
    s.censored_latency_ms = c.censored_latency_ms;
    if (c.success) {
        s.latency_ms = raw.latency_ms;
    } else {
        // a late success counts as a timeout
        s.error_kind = raw.failure.value_or(net::FailureKind::timeout);
    }
    return s;
}

std::vector<std::string> csv_fields(const ProbeSample& s)
{
    return {
        fixed(s.t_s, 2),
        std::string(to_string(s.phase)),
        s.success ? "true" : "false",
        s.latency_ms ? fixed(*s.latency_ms, 2) : "",
        fixed(s.censored_latency_ms, 2),
        s.error_kind ? std::string(net::to_string(*s.error_kind)) : "",
    };
}

std::vector<ProbeSample> read_probes_csv(const std::filesystem::path& path)
{
    auto table = read_csv(path);
    auto bad = [&](std::size_t row, const std::string& why) {
        return ProbeError(path.string() + " row " + std::to_string(row + 2) + ": " + why);
    };
    if (csv_line(table.header) != std::string(probes_csv_header) + "\n") {
        throw ProbeError(path.string() + ": unexpected header");
    }
    std::vector<ProbeSample> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& r = table.rows[i];
        if (r.size() != 6) {
            throw bad(i, "expected 6 fields");
        }
        ProbeSample s;
        auto t = parse_real(r[0]);
        auto phase = phase_from_string(r[1]);
        auto censored = parse_real(r[4]);
        if (!t || !phase || !censored || (r[2] != "true" && r[2] != "false")) {
            throw bad(i, "malformed field");
        }
        s.t_s = *t;
        s.phase = *phase;
        s.success = r[2] == "true";
        s.censored_latency_ms = *censored;
        if (!r[3].empty()) {
            auto l = parse_real(r[3]);
            if (!l) {
                throw bad(i, "malformed latency");
            }
            s.latency_ms = *l;
        }
        if (!r[5].empty()) {
            s.error_kind = net::failure_kind_from_string(r[5]);
            if (!s.error_kind) {
                throw bad(i, "unknown error kind '" + r[5] + "'");
            }
        }
        out.push_back(s);
    }
    return out;
}

std::vector<ProbeSample> run_probe_loop(const ProbeConfig& config, const std::vector<PhaseWindow>& windows,
                                        Clock::time_point t0, const std::filesystem::path& out,
                                        std::stop_token stop)
{
    validate(config);
    if (windows.empty()) {
        throw ProbeError("no phase windows");
    }
    const double total = windows.back().end;
    const double timeout_ms = to_millis(config.timeout);
    const auto slots = static_cast<std::size_t>(std::ceil(total / to_seconds(config.interval))) + 1;

    CsvWriter writer(out);
    writer.row(split(probes_csv_header, ','));
    writer.flush();

    std::mutex mu;
    std::condition_variable_any cv;
    std::vector<std::optional<ProbeSample>> results(slots);
    std::counting_semaphore<1024> in_flight(config.max_in_flight);
    std::vector<std::jthread> workers;
    std::size_t launched = 0;
    std::size_t written = 0;

    auto flush_completed = [&](bool final) {
        std::vector<ProbeSample> ready;
        {
            std::lock_guard lock(mu);
            while (written < launched && results[written]) {
                ready.push_back(*results[written]);
                ++written;
            }
        }
        for (const auto& s : ready) {
            writer.row(csv_fields(s));
        }
        if (final || !ready.empty()) {
            writer.flush();
        }
    };

    for (std::size_t i = 0; i < slots; ++i) {
        auto target = t0 + std::chrono::duration_cast<Clock::duration>(config.interval * static_cast<long>(i));
        if (std::chrono::duration<double>(target - t0).count() >= total) {
            break;
        }
        {
            std::unique_lock lock(mu);
            cv.wait_until(lock, stop, target, [] { return false; });
        }
        if (stop.stop_requested()) {
            break;
        }
        while (!in_flight.try_acquire_for(std::chrono::milliseconds(50))) {
            if (stop.stop_requested()) {
                break;
            }
        }
        if (stop.stop_requested()) {
            break;
        }
        // label the time as written so the file is self-consistent at phase boundaries
        double t = round_to(std::chrono::duration<double>(Clock::now() - t0).count(), 2);
        auto phase = label_phase(t, windows);
        if (!phase) {
            in_flight.release();
            break;
        }
        {
            std::lock_guard lock(mu);
            launched = i + 1;
        }
        workers.emplace_back([&, i, t, phase = *phase] {
            auto raw = probe_once(config);
            auto sample = make_sample(t, phase, raw, timeout_ms);
            {
                std::lock_guard lock(mu);
                results[i] = sample;
            }
            in_flight.release();
        });
        flush_completed(false);
    }
    for (auto& w : workers) {
        w.join();
    }
    flush_completed(true);

    std::vector<ProbeSample> samples;
    samples.reserve(launched);
    for (std::size_t i = 0; i < launched; ++i) {
        samples.push_back(*results[i]);
    }
    return samples;
}

} // namespace nsb::probe
