#pragma once

// Availability/latency probing with timeout censoring.

#include <filesystem>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "nsb/catalog.hpp"
#include "nsb/common/duration.hpp"
#include "nsb/common/net.hpp"
#include "nsb/phases.hpp"

namespace nsb::probe {

struct ProbeConfig {
    catalog::Protocol protocol = catalog::Protocol::http;
    net::Endpoint address;
    std::string path = "/";
    Duration interval = std::chrono::milliseconds(100);
    Duration timeout = std::chrono::milliseconds(2000);
    int max_in_flight = 64;
};

class ProbeError : public Error {
public:
    using Error::Error;
};

void validate(const ProbeConfig& config);

struct RawResult {
    std::optional<double> latency_ms;           // set on success
    std::optional<net::FailureKind> failure;    // set on failure
};

/// One probe. HTTP succeeds on a complete 2xx/3xx response, TCP on a completed connect.
RawResult probe_once(const ProbeConfig& config);

struct Censored {
    bool success = false;
    double censored_latency_ms = 0;
};

/// Successful results at or below the timeout keep their latency; everything
/// else becomes a failure valued at exactly `timeout_ms`.
Censored censor(const RawResult& raw, double timeout_ms);

struct ProbeSample {
    double t_s = 0;
    Phase phase = Phase::warmup;
    bool success = false;
    std::optional<double> latency_ms;
    double censored_latency_ms = 0;
    std::optional<net::FailureKind> error_kind;
};

ProbeSample make_sample(double t_s, Phase phase, const RawResult& raw, double timeout_ms);

inline constexpr std::string_view probes_csv_header = "t_s,phase,success,latency_ms,censored_latency_ms,error_kind";

std::vector<std::string> csv_fields(const ProbeSample& s);
std::vector<ProbeSample> read_probes_csv(const std::filesystem::path& path);

/// Fixed-rate loop: probe i is launched at t0 + i*interval until the last window
/// ends, with at most `max_in_flight` probes outstanding. Samples are written to
/// `out` in launch order. Throws on write failure.
std::vector<ProbeSample> run_probe_loop(const ProbeConfig& config, const std::vector<PhaseWindow>& windows,
                                        std::chrono::steady_clock::time_point t0,
                                        const std::filesystem::path& out, std::stop_token stop = {});

} // namespace nsb::probe
