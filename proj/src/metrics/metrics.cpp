#include "nsb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "nsb/common/csv.hpp"
#include "nsb/common/text.hpp"

namespace nsb::metrics {

using nlohmann::json;

double percentile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw EmptyInput();
    }
    if (!(q > 0 && q <= 100)) {
        throw Error("percentile rank must be in (0, 100]");
    }
    auto n = values.size();
    // smallest rank k with 100k >= q*n; the division alone can round across a whole rank
    double qn = q * static_cast<double>(n);
    // decimal ranks such as 99.9 are inexact in binary; snap products that sit on a rank boundary
    double boundary = std::round(qn / 100.0) * 100.0;
    if (std::abs(qn - boundary) <= 1e-9 * std::max(1.0, qn)) {
        qn = boundary;
    }
    auto rank = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(qn / 100.0)), 1, n);
    while (rank > 1 && 100.0 * static_cast<double>(rank - 1) >= qn) {
        --rank;
    }
    while (rank < n && 100.0 * static_cast<double>(rank) < qn) {
        ++rank;
    }
    auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(values.begin(), nth, values.end());
    return *nth;
}

PhaseSummary summarize_phase(const std::vector<probe::ProbeSample>& samples, const std::string& level, Phase phase)
{
    PhaseSummary s;
    s.level = level;
    s.phase = phase;
    s.samples = samples.size();
    if (samples.empty()) {
        return s;
    }
    std::vector<double> values;
    values.reserve(samples.size());
    std::size_t ok = 0;
    for (const auto& p : samples) {
        values.push_back(p.censored_latency_ms);
        ok += p.success ? 1 : 0;
    }
    double n = static_cast<double>(samples.size());
    s.success_rate = 100.0 * static_cast<double>(ok) / n;
    s.failure_rate = 100.0 * static_cast<double>(samples.size() - ok) / n;
    std::sort(values.begin(), values.end());
    s.p50_ms = percentile(values, 50);
    s.p95_ms = percentile(values, 95);
    s.p99_ms = percentile(values, 99);
    return s;
}

std::vector<CdfPoint> cdf(std::vector<double> values)
{
    if (values.empty()) {
        throw EmptyInput();
    }
    std::sort(values.begin(), values.end());
    std::vector<CdfPoint> out;
    out.reserve(values.size());
    auto n = values.size();
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({values[i], i + 1 == n ? 1.0 : static_cast<double>(i + 1) / static_cast<double>(n)});
    }
    return out;
}

std::vector<PhaseResources> resource_summary(const std::vector<runtime::ResourceSample>& samples,
                                             const std::vector<PhaseWindow>& windows)
{
    std::vector<PhaseResources> out;
    for (const auto& w : windows) {
        PhaseResources pr;
        pr.phase = w.phase;
        double cpu_sum = 0, mem_sum = 0;
        auto& a = pr.aggregate;
        for (const auto& s : samples) {
            auto label = label_phase(s.t, windows);
            if (!label || *label != w.phase) {
                continue;
            }
            ++a.samples;
            cpu_sum += s.cpu_pct;
            mem_sum += s.mem_pct;
            a.cpu_max = std::max(a.cpu_max.value_or(s.cpu_pct), s.cpu_pct);
            a.load1_max = std::max(a.load1_max.value_or(s.load1), s.load1);
            a.mem_max = std::max(a.mem_max.value_or(s.mem_pct), s.mem_pct);
        }
        if (a.samples > 0) {
            a.cpu_mean = cpu_sum / static_cast<double>(a.samples);
            a.mem_mean = mem_sum / static_cast<double>(a.samples);
        }
        out.push_back(pr);
    }
    return out;
}

std::vector<std::string> csv_fields(const runtime::ResourceSample& s)
{
    return {fixed(s.t, 3), fixed(s.cpu_pct, 2), fixed(s.load1, 2), fixed(s.load5, 2), fixed(s.load15, 2),
            fixed(s.mem_pct, 2)};
}

std::vector<runtime::ResourceSample> read_resources_csv(const std::filesystem::path& path)
{
    auto table = read_csv(path);
    if (table.header != split(resources_csv_header, ',')) {
        throw Error(path.string() + ": unexpected resources header");
    }
    std::vector<runtime::ResourceSample> out;
    for (const auto& row : table.rows) {
        auto get = [&](std::size_t i) {
            auto v = i < row.size() ? parse_real(row[i]) : std::nullopt;
            if (!v) {
                throw Error(path.string() + ": malformed resources row");
            }
            return *v;
        };
        out.push_back({get(0), get(1), get(2), get(3), get(4), get(5)});
    }
    return out;
}

namespace {

json opt(const std::optional<double>& v, int digits)
{
    return v ? json(round_to(*v, digits)) : json(nullptr);
}

} // namespace

json summary_json(const std::vector<PhaseSummary>& phases, const std::vector<PhaseResources>& resources)
{
    json out = json::array();
    for (const auto& p : phases) {
        json row = {{"cell_id", p.cell_id},
                    {"level", p.level},
                    {"phase", std::string(to_string(p.phase))},
                    {"samples", p.samples},
                    {"success_rate", opt(p.success_rate, 1)},
                    {"failure_rate", opt(p.failure_rate, 1)},
                    {"p50_ms", opt(p.p50_ms, 2)},
                    {"p95_ms", opt(p.p95_ms, 2)},
                    {"p99_ms", opt(p.p99_ms, 2)}};
        json res = {{"samples", 0}, {"cpu_mean", nullptr}, {"cpu_max", nullptr}, {"load1_max", nullptr},
                    {"mem_mean", nullptr}, {"mem_max", nullptr}};
        for (const auto& r : resources) {
            if (r.phase == p.phase) {
                const auto& a = r.aggregate;
                res = {{"samples", a.samples},           {"cpu_mean", opt(a.cpu_mean, 2)},
                       {"cpu_max", opt(a.cpu_max, 2)},   {"load1_max", opt(a.load1_max, 2)},
                       {"mem_mean", opt(a.mem_mean, 2)}, {"mem_max", opt(a.mem_max, 2)}};
            }
        }
        row["resources"] = res;
        out.push_back(row);
    }
    return out;
}

json summarize_run(const std::filesystem::path& run_dir)
{
    auto meta_path = run_dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) {
        throw Error("missing manifest: " + meta_path.string());
    }
    auto meta = json::parse(in);
    std::vector<PhaseWindow> windows;
    for (const auto& w : meta.at("windows")) {
        auto phase = phase_from_string(w.at("phase").get<std::string>());
        if (!phase) {
            throw Error(meta_path.string() + ": unknown phase in windows");
        }
        windows.push_back({*phase, w.at("start").get<double>(), w.at("end").get<double>()});
    }
    std::string cell_id = meta.at("cell_id");
    std::string level = meta.at("level").at("label");

    std::vector<probe::ProbeSample> samples;
    if (std::filesystem::exists(run_dir / "probes.csv")) {
        samples = probe::read_probes_csv(run_dir / "probes.csv");
    }
    std::vector<runtime::ResourceSample> resources;
    if (std::filesystem::exists(run_dir / "resources.csv")) {
        resources = read_resources_csv(run_dir / "resources.csv");
    }
    std::vector<PhaseSummary> phases;
    for (const auto& w : windows) {
        std::vector<probe::ProbeSample> mine;
        std::copy_if(samples.begin(), samples.end(), std::back_inserter(mine),
                     [&](const auto& s) { return s.phase == w.phase; });
        auto summary = summarize_phase(mine, level, w.phase);
        summary.cell_id = cell_id;
        phases.push_back(summary);
    }
    return summary_json(phases, resource_summary(resources, windows));
}

json write_summary(const std::filesystem::path& run_dir)
{
    auto summary = summarize_run(run_dir);
    std::ofstream out(run_dir / "summary.json", std::ios::binary | std::ios::trunc);
    out << summary.dump(2) << "\n";
    if (!out) {
        throw Error("cannot write " + (run_dir / "summary.json").string());
    }
    return summary;
}

} // namespace nsb::metrics
