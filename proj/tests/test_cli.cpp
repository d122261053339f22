#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "nsb/cli.hpp"
#include "nsb/dataset.hpp"
#include "nsb/orchestrator.hpp"
#include "support.hpp"

using namespace nsb;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result nsb_cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "nsb");
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string experiment()
{
    return (test::source_dir() / "experiments" / "reference_l0_l3.yaml").string();
}

bool contains(const std::string& text, const std::string& needle)
{
    return text.find(needle) != std::string::npos;
}

} // namespace

TEST_CASE("validate")
{
    auto r = nsb_cli({"validate", "--catalog", test::bundled_catalog().string()});
    CHECK(r.code == cli::exit_ok);
    CHECK(contains(r.out, "attacks: 2\n"));
    CHECK(contains(r.out, "services: 1\n"));
    CHECK(contains(r.out, "benign: 1\n"));

    auto with_exp = nsb_cli({"validate", "--experiment", experiment()});
    CHECK(with_exp.code == cli::exit_ok);

    test::TempDir dir;
    test::write_text(dir / "attacks" / "bad.yaml", "id: bad\nimage: x\n");
    auto bad = nsb_cli({"validate", "--catalog", dir.path().string()});
    CHECK(bad.code == cli::exit_validation);
    CHECK(contains(bad.err, "hook"));
}

TEST_CASE("plan")
{
    auto r = nsb_cli({"plan", "--experiment", experiment()});
    CHECK(r.code == cli::exit_ok);
    CHECK(contains(r.out, "cells: 4\n"));
    CHECK(contains(r.out, "estimated: 80.0 s\n"));
    CHECK(contains(r.out, "web/http_flood/L0/rep1"));
    CHECK(contains(r.out, "web/http_flood/L3/rep2"));

    auto flags = nsb_cli({"plan", "--catalog", test::bundled_catalog().string(), "--service", "web", "--attack",
                          "conn_flood", "--levels", "L1,L2", "--reps", "3", "--attack", "30s"});
    CHECK(flags.code == cli::exit_ok);
    CHECK(contains(flags.out, "cells: 6\n"));
    CHECK(contains(flags.out, "estimated: 240.0 s\n"));
}

TEST_CASE("usage errors exit with the validation code")
{
    CHECK(nsb_cli({"plan", "--experiment", experiment(), "--frobnicate"}).code == cli::exit_validation);
    CHECK(nsb_cli({}).code == cli::exit_validation);
    CHECK(nsb_cli({"plan", "--experiment", experiment(), "--levels", "L9"}).code == cli::exit_validation);
    CHECK(nsb_cli({"plan", "--experiment", experiment(), "--warmup", "soon"}).code == cli::exit_validation);
    CHECK(nsb_cli({"plan", "--experiment", experiment(), "--param", "rate=-5"}).code == cli::exit_validation);
    CHECK(nsb_cli({"plan", "--experiment", experiment(), "--filter", "tcp port"}).code == cli::exit_validation);
    auto help = nsb_cli({"--help"});
    CHECK(help.code == cli::exit_ok);
    CHECK(contains(help.out, "consolidate"));
}

TEST_CASE("a run with an unavailable service image is partial")
{
    test::TempDir dir;
    fs::copy(test::bundled_catalog(), dir / "catalog", fs::copy_options::recursive);
    auto web = test::slurp(dir / "catalog" / "services" / "web.yaml");
    auto pos = web.find("image: nsb-http-target");
    REQUIRE(pos != std::string::npos);
    web.replace(pos, 22, "image: nsb-missing-target");
    test::write_text(dir / "catalog" / "services" / "web.yaml", web);

    auto r = nsb_cli({"run", "--catalog", (dir / "catalog").string(), "--service", "web", "--attack", "http_flood",
                      "--levels", "L0", "--warmup", "500ms", "--attack-duration", "500ms", "--cooldown", "500ms",
                      "--no-capture", "--adapter", "sandbox", "--workload-dir", test::bin_dir().string(),
                      "--ephemeral-ports", "--out", (dir / "runs").string()});
    CHECK(r.code == cli::exit_partial);
    CHECK(contains(r.err, "ImageUnavailable"));
    auto runs = dataset::find_runs(dir / "runs");
    REQUIRE(runs.size() == 1);
    auto m = orchestrator::read_manifest(runs[0]);
    CHECK(m["outcome"]["status"] == "aborted");
    CHECK(fs::exists(runs[0] / "summary.json"));
    CHECK(fs::exists(dir / "runs" / "dataset" / "index.json"));
}

TEST_CASE("run, report and consolidate end to end")
{
    test::TempDir dir;
    auto out = dir / "runs";
    auto r = nsb_cli({"run", "--catalog", test::bundled_catalog().string(), "--service", "web", "--attack",
                      "http_flood", "--levels", "L0", "--warmup", "1s", "--attack", "1s", "--cooldown", "1s",
                      "--no-capture", "--adapter", "sandbox", "--workload-dir", test::bin_dir().string(),
                      "--ephemeral-ports", "--out", out.string()});
    INFO(r.err);
    REQUIRE(r.code == cli::exit_ok);
    auto runs = dataset::find_runs(out);
    REQUIRE(runs.size() == 1);
    auto run = runs[0];
    CHECK(fs::exists(run / "summary.json"));
    CHECK(fs::exists(run / "report" / "summary_table.csv"));
    CHECK(orchestrator::verify_run(run).empty());

    // the recorded command line reproduces the same matrix
    auto m = orchestrator::read_manifest(run);
    std::string command = m["invocation"]["command"];
    CHECK(contains(command, "--levels L0"));
    CHECK(contains(command, "--attack-duration 1s"));
    CHECK(m["invocation"]["flags"]["capture"] == false);

    auto before = test::slurp(run / "report" / "summary_table.csv");
    fs::remove_all(run / "report");
    fs::remove(run / "summary.json");
    auto rep = nsb_cli({"report", run.string()});
    CHECK(rep.code == cli::exit_ok);
    CHECK(test::slurp(run / "report" / "summary_table.csv") == before);

    auto cons = nsb_cli({"consolidate", out.string(), "--out", (dir / "ds").string()});
    CHECK(cons.code == cli::exit_ok);
    CHECK(contains(cons.err, "1 included, 0 excluded"));
    auto again = nsb_cli({"report", (dir / "ds").string()});
    CHECK(again.code == cli::exit_ok);
    CHECK(fs::exists(dir / "ds" / "report" / "summary_table.csv"));

    auto ex = nsb_cli({"extract", run.string()});
    CHECK(ex.code == cli::exit_runtime);  // nothing captured
}
