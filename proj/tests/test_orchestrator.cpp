#include <doctest.h>

#include "nsb/common/digest.hpp"
#include "nsb/orchestrator.hpp"
#include "nsb/probe.hpp"
#include "support.hpp"

using namespace nsb;
using namespace nsb::orchestrator;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

struct Setup {
    catalog::Catalog cat = catalog::load_catalog(test::bundled_catalog());
    planner::ExperimentSpec spec;

    Setup()
    {
        spec = planner::load_experiment(test::source_dir() / "experiments" / "reference_l0_l3.yaml").spec;
        spec.levels = {planner::level_by_label("L3")};
        spec.repetition = {1, 1s, 1s, 1s};
        spec.instrumentation.probe.interval = 100ms;
        spec.instrumentation.probe.timeout = 500ms;
    }

    planner::ExecutionMatrix matrix() const { return planner::expand_matrix(spec, cat); }
};

std::unique_ptr<runtime::RuntimeAdapter> sandbox()
{
    runtime::SandboxOptions o;
    o.program_dirs = {test::bin_dir()};
    return runtime::make_sandbox_adapter(o);
}

RunOptions options(const fs::path& root)
{
    RunOptions o;
    o.out_root = root;
    o.ephemeral_ports = true;
    o.invocation = {{"command", "nsb run --levels L3"}};
    return o;
}

} // namespace

TEST_CASE("run directory names")
{
    test::TempDir dir;
    auto now = std::chrono::system_clock::time_point{} + std::chrono::seconds(1'700'000'000);
    auto a = make_run_dir(dir.path(), "web/http_flood/L3/rep1", now);
    auto b = make_run_dir(dir.path(), "web/http_flood/L3/rep1", now);
    auto c = make_run_dir(dir.path(), "web/http_flood/L3/rep1", now);
    CHECK(a.filename().string().find("web.http_flood.L3.rep1") != std::string::npos);
    CHECK(a.filename().string().rfind("20231114", 0) == 0);
    CHECK(b.filename().string() == a.filename().string() + "-2");
    CHECK(c.filename().string() == a.filename().string() + "-3");
    CHECK(fs::is_directory(a));
    CHECK(fs::is_directory(c));
}

TEST_CASE("derived files stay out of the inventory")
{
    CHECK(is_derived("summary.json"));
    CHECK(is_derived("report/latency_cdf.csv"));
    CHECK_FALSE(is_derived("probes.csv"));
    CHECK_FALSE(is_derived("features/native.csv"));
}

TEST_CASE("a short cell produces a complete, verifiable run")
{
    test::TempDir dir;
    Setup s;
    auto m = s.matrix();
    REQUIRE(m.cells.size() == 1);
    auto adapter = sandbox();
    auto r = execute_cell(m.cells[0], m, s.cat, *adapter, options(dir.path()));
    INFO(r.reason);
    REQUIRE(r.completed);

    for (const char* f : {"meta.json", "probes.csv", "resources.csv", "logs/target.log", "logs/attacker.log"}) {
        CAPTURE(f);
        CHECK(fs::exists(r.run_dir / f));
    }
    CHECK(verify_run(r.run_dir).empty());
    CHECK(adapter->live_workloads(m.cells[0].cell_id).empty());

    const auto& man = r.manifest;
    CHECK(man["schema_version"] == manifest_schema_version);
    CHECK(man["cell_id"] == "web/http_flood/L3/rep1");
    CHECK(man["level"]["label"] == "L3");
    CHECK(man["level"]["rate_limit"] == "unlimited");
    CHECK(man["params"]["rate"] == "unlimited");
    CHECK(man["outcome"]["status"] == "completed");
    CHECK(man["invocation"]["command"] == "nsb run --levels L3");
    CHECK(man["catalog_digest"] == s.cat.source_digest);
    CHECK(man["spec_digest"] == m.spec_digest);
    CHECK(man["adapter"] == "sandbox");
    REQUIRE(man["windows"].size() == 3);
    CHECK(man["windows"][1]["start"] == 1.0);
    CHECK(man["windows"][2]["end"] == 3.0);

    double hook = man["attacker"]["hook_started_s"];
    CHECK(hook >= 1.0);
    CHECK(hook <= 1.2);
    double stopped = man["attacker"]["stopped_s"];
    CHECK(stopped >= 2.0);
    CHECK(stopped <= 3.0);
    CHECK(man["attacker"]["env"]["NSB_DURATION"] == "1");
    CHECK(man["attacker"]["env"]["NSB_RATE"] == "unlimited");

    auto samples = probe::read_probes_csv(r.run_dir / "probes.csv");
    CHECK(samples.size() >= 28);
    CHECK(samples.size() <= 31);
    CHECK(man["probe"]["samples"] == samples.size());

    // every artifact listed with size and digest
    for (const auto& [name, info] : man["artifacts"].items()) {
        CAPTURE(name);
        CHECK(info["sha256"] == sha256_file(r.run_dir / name));
    }
    CHECK(run_digest(r.run_dir) == sha256_file(r.run_dir / "meta.json"));

    const auto& capture = man["capture"];
    if (capture["status"] == "captured") {
        CHECK(fs::exists(r.run_dir / "capture.pcap"));
        CHECK(fs::exists(r.run_dir / "features" / "native.csv"));
    } else {
        CHECK(capture["status"] == "skipped");
        CHECK_FALSE(fs::exists(r.run_dir / "capture.pcap"));
    }

    SUBCASE("tampering is detected")
    {
        {
            std::fstream f(r.run_dir / "probes.csv", std::ios::in | std::ios::out | std::ios::binary);
            f.seekp(0);
            f.put('T');
        }
        auto problems = verify_run(r.run_dir);
        REQUIRE(problems.size() == 1);
        CHECK(problems[0].file == "probes.csv");
        CHECK(problems[0].reason == "digest_mismatch");
    }
    SUBCASE("stray files are reported")
    {
        test::write_text(r.run_dir / "stray.txt", "x");
        auto problems = verify_run(r.run_dir);
        REQUIRE(problems.size() == 1);
        CHECK(problems[0].reason == "unlisted");
        test::write_text(r.run_dir / "summary.json", "{}");  // derived, never inventoried
        CHECK(verify_run(r.run_dir).size() == 1);
    }
}

TEST_CASE("capture disabled still yields probes and resources")
{
    test::TempDir dir;
    Setup s;
    s.spec.instrumentation.capture = false;
    s.spec.levels = {planner::level_by_label("L0")};
    auto m = s.matrix();
    auto adapter = sandbox();
    auto r = execute_cell(m.cells[0], m, s.cat, *adapter, options(dir.path()));
    REQUIRE(r.completed);
    CHECK_FALSE(fs::exists(r.run_dir / "capture.pcap"));
    CHECK_FALSE(fs::exists(r.run_dir / "features"));
    CHECK(fs::exists(r.run_dir / "probes.csv"));
    CHECK(r.manifest["capture"]["status"] == "disabled");
    CHECK(r.manifest["params"]["rate"] == "100");
    CHECK(verify_run(r.run_dir).empty());
}

TEST_CASE("an unreachable engine aborts the cell with a manifest")
{
    test::TempDir dir;
    Setup s;
    auto m = s.matrix();
    runtime::EngineOptions eo;
    eo.socket = dir / "nothing.sock";
    auto adapter = runtime::make_engine_adapter(eo);
    auto r = execute_cell(m.cells[0], m, s.cat, *adapter, options(dir / "runs"));
    CHECK_FALSE(r.completed);
    CHECK(r.reason.find("AdapterUnreachable") != std::string::npos);
    CHECK(r.manifest["outcome"]["status"] == "aborted");
    CHECK(fs::exists(r.run_dir / "meta.json"));
    CHECK(verify_run(r.run_dir).empty());
}

TEST_CASE("an aborted cell does not stop the matrix")
{
    test::TempDir dir;
    Setup s;
    s.spec.instrumentation.capture = false;
    s.spec.levels = {planner::level_by_label("L0"), planner::level_by_label("L3")};
    s.spec.repetition = {1, 500ms, 500ms, 500ms};
    auto m = s.matrix();
    REQUIRE(m.cells.size() == 2);

    class FlakyAdapter : public runtime::RuntimeAdapter {
    public:
        explicit FlakyAdapter(std::unique_ptr<runtime::RuntimeAdapter> inner) : inner_(std::move(inner)) {}
        std::string name() const override { return inner_->name(); }
        void ping() override { inner_->ping(); }
        runtime::RuntimeHandle start_workload(const runtime::WorkloadSpec& spec) override
        {
            if (spec.cell_id.find("/L0/") != std::string::npos) {
                throw runtime::RuntimeError(runtime::RuntimeError::Kind::image_unavailable, "no image for " + spec.name);
            }
            return inner_->start_workload(spec);
        }
        runtime::StopReport stop_workload(const runtime::RuntimeHandle& h) override { return inner_->stop_workload(h); }
        runtime::HookResult exec_hook(const runtime::RuntimeHandle& h, const std::string& hook,
                                      const catalog::ParamSet& p) override
        {
            return inner_->exec_hook(h, hook, p);
        }
        std::optional<runtime::HookResult> hook_status(const runtime::RuntimeHandle& h) override
        {
            return inner_->hook_status(h);
        }
        runtime::ResourceSample sample_resources(const runtime::RuntimeHandle& h) override
        {
            return inner_->sample_resources(h);
        }
        std::vector<std::string> live_workloads(const std::string& c) override { return inner_->live_workloads(c); }
        void cleanup(const std::string& c) override { inner_->cleanup(c); }
        std::map<std::string, std::string> versions() override { return inner_->versions(); }

    private:
        std::unique_ptr<runtime::RuntimeAdapter> inner_;
    };

    FlakyAdapter adapter(sandbox());
    auto results = execute_matrix(m, s.cat, adapter, options(dir.path()));
    REQUIRE(results.size() == 2);
    CHECK_FALSE(results[0].completed);
    CHECK(results[0].reason.find("ImageUnavailable") != std::string::npos);
    CHECK(results[1].completed);
    CHECK(results[0].run_dir != results[1].run_dir);
    for (const auto& r : results) {
        CHECK(fs::exists(r.run_dir / "meta.json"));
        CHECK(verify_run(r.run_dir).empty());
    }
}
