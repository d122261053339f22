#include <doctest.h>

#include <random>

#include "nsb/common/csv.hpp"
#include "nsb/common/text.hpp"
#include "nsb/metrics.hpp"
#include "properties.hpp"

using namespace nsb;
using namespace nsb::metrics;
using namespace std::chrono_literals;

namespace {

probe::ProbeSample ok(double ms, Phase p = Phase::warmup)
{
    return probe::make_sample(0, p, probe::RawResult{ms, std::nullopt}, 2000);
}

probe::ProbeSample failed(Phase p = Phase::warmup)
{
    return probe::make_sample(0, p, probe::RawResult{std::nullopt, net::FailureKind::timeout}, 2000);
}

} // namespace

TEST_CASE("percentile examples")
{
    CHECK(percentile({3.0}, 50) == 3.0);
    std::vector<double> hundred;
    for (int i = 1; i <= 100; ++i) hundred.push_back(i);
    CHECK(percentile(hundred, 95) == 95.0);
    CHECK(percentile(hundred, 100) == 100.0);
    CHECK(percentile(hundred, 0.5) == 1.0);
    CHECK(percentile({5, 1, 3}, 50) == 3.0);
    CHECK(percentile({5, 1, 3}, 100) == 5.0);
    CHECK_THROWS_AS(percentile({}, 50), EmptyInput);
    CHECK_THROWS_AS(percentile({1.0}, 0), Error);
    CHECK_THROWS_AS(percentile({1.0}, 100.5), Error);
}

TEST_CASE("percentile agrees with the sort-and-index oracle")
{
    auto r = test::check_percentile(1, 300);
    CHECK_MESSAGE(r.ok, r.detail);
}

TEST_CASE("phase summary of nine samples")
{
    std::vector<probe::ProbeSample> s;
    for (int i = 0; i < 5; ++i) s.push_back(ok(10));
    for (int i = 0; i < 4; ++i) s.push_back(failed());
    auto sum = summarize_phase(s, "L3", Phase::warmup);
    CHECK(sum.samples == 9);
    CHECK(*sum.success_rate == doctest::Approx(100.0 * 5 / 9));
    CHECK(*sum.failure_rate == doctest::Approx(100.0 * 4 / 9));
    // sorted: five 10s then four 2000s; rank ceil(4.5) = 5
    CHECK(sum.p50_ms == 10.0);
    CHECK(sum.p95_ms == 2000.0);
    CHECK(sum.p99_ms == 2000.0);
    auto j = summary_json({sum}, {});
    CHECK(j[0]["success_rate"] == 55.6);
    CHECK(j[0]["failure_rate"] == 44.4);
}

TEST_CASE("all-success phase clustered near 3 ms")
{
    std::vector<probe::ProbeSample> s;
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> d(2.8, 3.2);
    for (int i = 0; i < 47; ++i) s.push_back(ok(std::round(d(rng) * 100) / 100));
    s.push_back(ok(7.6));
    auto sum = summarize_phase(s, "L0", Phase::warmup);
    CHECK(sum.samples == 48);
    CHECK(sum.success_rate == 100.0);
    CHECK(sum.failure_rate == 0.0);
    CHECK(*sum.p50_ms == doctest::Approx(3.0).epsilon(0.1));
    CHECK(*sum.p95_ms < 3.3);
    CHECK(sum.p99_ms == 7.6);
}

TEST_CASE("empty phase summary")
{
    auto sum = summarize_phase({}, "L0", Phase::cooldown);
    CHECK(sum.samples == 0);
    CHECK_FALSE(sum.success_rate.has_value());
    CHECK_FALSE(sum.p50_ms.has_value());
    auto j = summary_json({sum}, {});
    CHECK(j[0]["samples"] == 0);
    CHECK(j[0]["p50_ms"].is_null());
}

TEST_CASE("summary invariants on random phases")
{
    std::mt19937_64 rng(9);
    for (int c = 0; c < 200; ++c) {
        std::vector<probe::ProbeSample> s;
        int n = 1 + static_cast<int>(rng() % 80);
        for (int i = 0; i < n; ++i) {
            if (rng() % 3 == 0) {
                s.push_back(failed());
            } else {
                s.push_back(ok(static_cast<double>(rng() % 300000) / 100.0));  // some beyond the ceiling
            }
        }
        auto a = summarize_phase(s, "L1", Phase::attack);
        CHECK(*a.success_rate + *a.failure_rate == doctest::Approx(100.0));
        CHECK(*a.p50_ms <= *a.p95_ms);
        CHECK(*a.p95_ms <= *a.p99_ms);
        CHECK(*a.p99_ms <= 2000.0);
        std::shuffle(s.begin(), s.end(), rng);
        auto b = summarize_phase(s, "L1", Phase::attack);
        CHECK(a.success_rate == b.success_rate);
        CHECK(a.p50_ms == b.p50_ms);
        CHECK(a.p95_ms == b.p95_ms);
        CHECK(a.p99_ms == b.p99_ms);
    }
}

TEST_CASE("cdf")
{
    auto c = cdf({4, 2, 1, 3});
    REQUIRE(c.size() == 4);
    CHECK(c[0].latency_ms == 1);
    CHECK(c[0].fraction == 0.25);
    CHECK(c[1].fraction == 0.5);
    CHECK(c[2].fraction == 0.75);
    CHECK(c[3].latency_ms == 4);
    CHECK(c[3].fraction == 1.0);

    auto ties = cdf({5, 5, 5});
    CHECK(ties[0].fraction == doctest::Approx(1.0 / 3));
    CHECK(ties[1].fraction == doctest::Approx(2.0 / 3));
    CHECK(ties[2].fraction == 1.0);
    CHECK_THROWS_AS(cdf({}), EmptyInput);

    std::mt19937_64 rng(2);
    for (int n : {1, 3, 7, 49, 1000, 9999}) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = static_cast<double>(rng() % 1000);
        auto pts = cdf(v);
        CHECK(pts.back().fraction == 1.0);
        for (std::size_t i = 1; i < pts.size(); ++i) {
            CHECK(pts[i].fraction >= pts[i - 1].fraction);
            CHECK(pts[i].latency_ms >= pts[i - 1].latency_ms);
        }
    }
}

TEST_CASE("resource aggregates per phase")
{
    auto windows = phase_schedule(5s, 10s, 5s);
    SUBCASE("constant cpu")
    {
        std::vector<runtime::ResourceSample> s;
        for (int i = 0; i < 80; ++i) s.push_back({i * 0.25, 10, 0.5, 0.4, 0.3, 50});
        for (const auto& p : resource_summary(s, windows)) {
            CHECK(p.aggregate.cpu_mean == doctest::Approx(10.0));
            CHECK(p.aggregate.cpu_max == 10.0);
        }
    }
    SUBCASE("memory rising during the attack")
    {
        std::vector<runtime::ResourceSample> s;
        for (int i = 0; i < 80; ++i) {
            double t = i * 0.25;
            double mem = t < 5 ? 75 + t * 0.4 : t < 15 ? 77 + (t - 5) * 1.3 : 90;
            s.push_back({t, 5, 1, 1, 1, mem});
        }
        auto r = resource_summary(s, windows);
        CHECK(*r[1].aggregate.mem_max > *r[0].aggregate.mem_max);
    }
    SUBCASE("no cooldown samples")
    {
        std::vector<runtime::ResourceSample> s = {{1, 1, 1, 1, 1, 1}, {6, 2, 2, 2, 2, 2}};
        auto r = resource_summary(s, windows);
        REQUIRE(r.size() == 3);
        CHECK(r[2].phase == Phase::cooldown);
        CHECK(r[2].aggregate.samples == 0);
        CHECK_FALSE(r[2].aggregate.cpu_mean.has_value());
        CHECK(r[1].aggregate.load1_max == 2.0);
    }
}

TEST_CASE("resources CSV round-trip")
{
    test::TempDir dir;
    {
        CsvWriter w(dir / "resources.csv");
        w.row(split(resources_csv_header, ','));
        w.row(csv_fields(runtime::ResourceSample{0.25, 12.345, 0.5, 0.25, 0.125, 40.004}));
    }
    auto back = read_resources_csv(dir / "resources.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].t == 0.25);
    CHECK(back[0].cpu_pct == doctest::Approx(12.35));
    CHECK(back[0].mem_pct == doctest::Approx(40.0));
}
