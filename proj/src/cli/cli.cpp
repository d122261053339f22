#include "nsb/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "nsb/capture/filter.hpp"
#include "nsb/capture/flows.hpp"
#include "nsb/capture/live.hpp"
#include "nsb/catalog.hpp"
#include "nsb/common/logging.hpp"
#include "nsb/common/text.hpp"
#include "nsb/dataset.hpp"
#include "nsb/metrics.hpp"
#include "nsb/orchestrator.hpp"
#include "nsb/planner.hpp"
#include "nsb/runtime.hpp"

namespace nsb::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Thrown for problems with the user's input; maps to exit code 1.
class UsageError : public Error {
public:
    using Error::Error;
};

struct ExperimentFlags {
    std::string catalog;
    std::string experiment;
    std::vector<std::string> services;
    std::vector<std::string> attacks;  // ids, or the attack-phase duration
    std::string attack_duration;
    std::string levels;
    int reps = 0;
    std::string warmup, cooldown;
    std::vector<std::string> params;
    std::string baseline;
    std::optional<bool> capture;
    std::optional<std::string> filter;
    std::string iface;
    std::optional<bool> extract;
    std::string probe_interval, probe_timeout, probe_path;
    std::string resource_interval;
};

struct RunFlags {
    std::string adapter = "sandbox";
    std::string engine_socket = "/var/run/docker.sock";
    std::string workload_dir;
    bool ephemeral_ports = false;
    std::string out = "runs";
    std::vector<std::string> tracks;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f)
{
    cmd->add_option("--catalog", f.catalog, "Catalog root directory (default: ./catalog or the experiment's)");
    cmd->add_option("--experiment", f.experiment, "Experiment file; flags given here override its values");
    cmd->add_option("--service", f.services, "Target service id (repeatable)");
    cmd->add_option("--attack", f.attacks,
                    "Attack id (repeatable). A duration value such as 10s sets the attack phase length instead");
    cmd->add_option("--attack-duration", f.attack_duration, "Attack phase length");
    cmd->add_option("--levels", f.levels, "Comma-separated intensity levels, e.g. L0,L3");
    cmd->add_option("--reps", f.reps, "Repetitions per level")->check(CLI::PositiveNumber);
    cmd->add_option("--warmup", f.warmup, "Warmup phase length (e.g. 5s, 500ms)");
    cmd->add_option("--cooldown", f.cooldown, "Cooldown phase length");
    cmd->add_option("--param", f.params, "Parameter override [attack.]name=value (repeatable)");
    cmd->add_option("--baseline", f.baseline, "Benign profile id run across all phases");
    auto* cap = cmd->add_flag_callback("--capture", [&f] { f.capture = true; }, "Record capture.pcap");
    auto* nocap = cmd->add_flag_callback("--no-capture", [&f] { f.capture = false; }, "Disable packet capture");
    cap->excludes(nocap);
    cmd->add_option_function<std::string>("--filter", [&f](const std::string& v) { f.filter = v; },
                                          "Capture filter; ${target_port} expands to the target port");
    cmd->add_option("--iface", f.iface, "Capture interface");
    auto* ex = cmd->add_flag_callback("--extract", [&f] { f.extract = true; }, "Extract flow features");
    auto* noex = cmd->add_flag_callback("--no-extract", [&f] { f.extract = false; }, "Skip feature extraction");
    ex->excludes(noex);
    cmd->add_option("--probe-interval", f.probe_interval, "Probe launch interval");
    cmd->add_option("--probe-timeout", f.probe_timeout, "Probe timeout and censoring threshold");
    cmd->add_option("--probe-path", f.probe_path, "HTTP probe path");
    cmd->add_option("--resource-interval", f.resource_interval, "Resource sampling interval");
}

Duration parse_flag_duration(const std::string& flag, const std::string& text)
{
    try {
        return parse_duration(text);
    } catch (const DurationParseError& e) {
        throw UsageError(flag + ": " + e.what());
    }
}

bool looks_like_duration(const std::string& text)
{
    try {
        parse_duration(text);
        return true;
    } catch (const DurationParseError&) {
        return false;
    }
}

struct Resolved {
    planner::ExperimentSpec spec;
    fs::path catalog_root;
    catalog::Catalog catalog;
    json normalized;  // effective flag set
};

Resolved resolve(const ExperimentFlags& f)
{
    Resolved r;
    std::optional<fs::path> file_catalog;
    if (!f.experiment.empty()) {
        auto file = planner::load_experiment(f.experiment);
        r.spec = file.spec;
        file_catalog = file.catalog;
    }
    auto& s = r.spec;
    if (!f.services.empty()) {
        s.services = f.services;
    }
    std::vector<std::string> attack_ids;
    std::string attack_duration = f.attack_duration;
    for (const auto& a : f.attacks) {
        if (looks_like_duration(a)) {
            attack_duration = a;
        } else {
            attack_ids.push_back(a);
        }
    }
    if (!attack_ids.empty()) {
        s.attacks = attack_ids;
    }
    if (!f.levels.empty()) {
        s.levels.clear();
        for (auto label : split(f.levels, ',')) {
            auto l = std::string(trim(label));
            try {
                s.levels.push_back(planner::level_by_label(l));
            } catch (const std::exception& e) {
                throw UsageError("--levels: " + std::string(e.what()));
            }
        }
    }
    if (f.reps > 0) {
        s.repetition.repetitions = f.reps;
    }
    if (!f.warmup.empty()) {
        s.repetition.warmup = parse_flag_duration("--warmup", f.warmup);
    }
    if (!attack_duration.empty()) {
        s.repetition.attack = parse_flag_duration("--attack-duration", attack_duration);
    }
    if (!f.cooldown.empty()) {
        s.repetition.cooldown = parse_flag_duration("--cooldown", f.cooldown);
    }
    for (const auto& p : f.params) {
        auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("--param expects [attack.]name=value, got '" + p + "'");
        }
        auto name = p.substr(0, eq);
        auto value = p.substr(eq + 1);
        auto dot = name.find('.');
        if (dot != std::string::npos) {
            s.params[name.substr(0, dot)][name.substr(dot + 1)] = value;
        } else {
            if (s.attacks.empty()) {
                throw UsageError("--param " + p + ": no attack selected to apply it to");
            }
            for (const auto& a : s.attacks) {
                s.params[a][name] = value;
            }
        }
    }
    if (!f.baseline.empty()) {
        s.baseline = f.baseline;
    }
    auto& in = s.instrumentation;
    if (f.capture) {
        in.capture = *f.capture;
    }
    if (f.filter) {
        in.capture_filter = *f.filter;
    }
    if (!f.iface.empty()) {
        in.iface = f.iface;
    }
    if (f.extract) {
        in.extract_features = *f.extract;
    }
    if (!f.probe_interval.empty()) {
        in.probe.interval = parse_flag_duration("--probe-interval", f.probe_interval);
    }
    if (!f.probe_timeout.empty()) {
        in.probe.timeout = parse_flag_duration("--probe-timeout", f.probe_timeout);
    }
    if (!f.probe_path.empty()) {
        in.probe.path = f.probe_path;
    }
    if (!f.resource_interval.empty()) {
        in.resource_interval = parse_flag_duration("--resource-interval", f.resource_interval);
    }
    try {
        capture::PacketFilter::compile(capture::expand_filter(in.capture_filter, 1));
    } catch (const capture::FilterSyntaxError& e) {
        throw UsageError("--filter: " + std::string(e.what()));
    }

    if (!f.catalog.empty()) {
        r.catalog_root = f.catalog;
    } else if (file_catalog) {
        r.catalog_root = *file_catalog;
    } else {
        r.catalog_root = "catalog";
    }
    r.catalog = catalog::load_catalog(r.catalog_root);

    std::string levels;
    for (const auto& l : s.levels) {
        levels += (levels.empty() ? "" : ",") + l.label;
    }
    json params = json::array();
    for (const auto& [attack, kv] : s.params) {
        for (const auto& [k, v] : kv) {
            params.push_back(attack + "." + k + "=" + v);
        }
    }
    r.normalized = {{"catalog", fs::absolute(r.catalog_root).lexically_normal().string()},
                    {"experiment", f.experiment.empty() ? json(nullptr) : json(fs::absolute(f.experiment).string())},
                    {"service", s.services},
                    {"attack", s.attacks},
                    {"levels", levels},
                    {"levels_given", !f.levels.empty()},
                    {"reps", s.repetition.repetitions},
                    {"warmup", format_duration(s.repetition.warmup)},
                    {"attack_duration", format_duration(s.repetition.attack)},
                    {"cooldown", format_duration(s.repetition.cooldown)},
                    {"param", params},
                    {"baseline", s.baseline ? json(*s.baseline) : json(nullptr)},
                    {"capture", in.capture},
                    {"filter", in.capture_filter},
                    {"iface", in.iface},
                    {"extract", in.extract_features},
                    {"probe_interval", format_duration(in.probe.interval)},
                    {"probe_timeout", format_duration(in.probe.timeout)},
                    {"probe_path", in.probe.path},
                    {"resource_interval", format_duration(in.resource_interval)}};
    return r;
}

std::string shell_word(const std::string& s)
{
    if (!s.empty() && s.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-./:=,@") ==
                          std::string::npos) {
        return s;
    }
    std::string out = "'";
    for (char c : s) {
        out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    }
    return out + "'";
}

/// The command line equivalent to a normalized flag set.
std::string command_line(const json& n)
{
    std::vector<std::string> words = {"nsb", "run"};
    auto flag = [&](const std::string& name, const std::string& value) {
        words.push_back(name);
        words.push_back(value);
    };
    if (!n["experiment"].is_null()) {
        flag("--experiment", n["experiment"]);
    }
    flag("--catalog", n["catalog"]);
    for (const auto& s : n["service"]) {
        flag("--service", s);
    }
    for (const auto& a : n["attack"]) {
        flag("--attack", a);
    }
    // experiment files may carry custom rates that only the file can express
    if (n["experiment"].is_null() || n.value("levels_given", false)) {
        flag("--levels", n["levels"]);
    }
    flag("--reps", std::to_string(n["reps"].get<int>()));
    flag("--warmup", n["warmup"]);
    flag("--attack-duration", n["attack_duration"]);
    flag("--cooldown", n["cooldown"]);
    for (const auto& p : n["param"]) {
        flag("--param", p);
    }
    if (!n["baseline"].is_null()) {
        flag("--baseline", n["baseline"]);
    }
    words.push_back(n["capture"].get<bool>() ? "--capture" : "--no-capture");
    flag("--filter", n["filter"]);
    flag("--iface", n["iface"]);
    words.push_back(n["extract"].get<bool>() ? "--extract" : "--no-extract");
    flag("--probe-interval", n["probe_interval"]);
    flag("--probe-timeout", n["probe_timeout"]);
    flag("--probe-path", n["probe_path"]);
    flag("--resource-interval", n["resource_interval"]);
    if (n.contains("adapter")) {
        flag("--adapter", n["adapter"]);
        if (n["adapter"] == "engine") {
            flag("--engine-socket", n["engine_socket"]);
        }
        if (!n["workload_dir"].is_null()) {
            flag("--workload-dir", n["workload_dir"]);
        }
        if (n["ephemeral_ports"].get<bool>()) {
            words.push_back("--ephemeral-ports");
        }
        flag("--out", n["out"]);
        for (const auto& t : n["track"]) {
            flag("--track", t);
        }
    }
    std::string out;
    for (const auto& w : words) {
        out += (out.empty() ? "" : " ") + shell_word(w);
    }
    return out;
}

fs::path self_dir()
{
    std::error_code ec;
    auto exe = fs::read_symlink("/proc/self/exe", ec);
    return ec ? fs::current_path() : exe.parent_path();
}

int cmd_validate(const ExperimentFlags& f, std::ostream& out)
{
    fs::path root = f.catalog.empty() ? fs::path("catalog") : fs::path(f.catalog);
    if (!f.experiment.empty()) {
        auto r = resolve(f);
        planner::expand_matrix(r.spec, r.catalog);
        root = r.catalog_root;
    }
    auto c = catalog::load_catalog(root);
    out << "attacks: " << c.attacks.size() << "\n"
        << "services: " << c.services.size() << "\n"
        << "benign: " << c.benign.size() << "\n"
        << "source_digest: " << c.source_digest << "\n";
    return exit_ok;
}

int cmd_plan(const ExperimentFlags& f, std::ostream& out)
{
    auto r = resolve(f);
    auto matrix = planner::expand_matrix(r.spec, r.catalog);
    auto report = planner::plan_summary(matrix);
    out << report.table;
    out << "cells: " << report.cells << "\n"
        << "estimated: " << fixed(report.total_seconds, 1) << " s\n"
        << "spec_digest: " << matrix.spec_digest << "\n";
    return exit_ok;
}

std::vector<capture::ExtractorTrack> parse_tracks(const std::vector<std::string>& specs)
{
    std::vector<capture::ExtractorTrack> out;
    for (const auto& t : specs) {
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError("--track expects name=command, got '" + t + "'");
        }
        try {
            out.push_back(capture::register_extractor_track(t.substr(0, eq), t.substr(eq + 1)));
        } catch (const capture::TrackError& e) {
            throw UsageError(std::string("--track: ") + e.what());
        }
    }
    return out;
}

void render_run(const fs::path& dir)
{
    metrics::write_summary(dir);
    dataset::render_report(dir);
}

int cmd_run(const ExperimentFlags& f, const RunFlags& rf, std::ostream& out, std::ostream& err)
{
    auto r = resolve(f);
    auto matrix = planner::expand_matrix(r.spec, r.catalog);
    auto tracks = parse_tracks(rf.tracks);

    std::unique_ptr<runtime::RuntimeAdapter> adapter;
    fs::path workload_dir = rf.workload_dir.empty() ? self_dir() : fs::path(rf.workload_dir);
    if (rf.adapter == "sandbox") {
        runtime::SandboxOptions so;
        so.program_dirs = {workload_dir};
        adapter = runtime::make_sandbox_adapter(so);
    } else {
        runtime::EngineOptions eo;
        eo.socket = rf.engine_socket;
        adapter = runtime::make_engine_adapter(eo);
    }

    auto normalized = r.normalized;
    normalized["adapter"] = rf.adapter;
    normalized["engine_socket"] = rf.engine_socket;
    normalized["workload_dir"] = rf.adapter == "sandbox" ? json(fs::absolute(workload_dir).string()) : json(nullptr);
    normalized["ephemeral_ports"] = rf.ephemeral_ports;
    normalized["out"] = fs::absolute(rf.out).lexically_normal().string();
    normalized["track"] = rf.tracks;

    orchestrator::RunOptions options;
    options.out_root = rf.out;
    options.ephemeral_ports = rf.ephemeral_ports;
    options.tracks = tracks;
    options.invocation = {{"flags", normalized}, {"command", command_line(normalized)}};

    auto plan = planner::plan_summary(matrix);
    spdlog::info("executing {} cells, estimated {:.1f} s", plan.cells, plan.total_seconds);
    auto results = orchestrator::execute_matrix(matrix, r.catalog, *adapter, options);

    int aborted = 0;
    std::vector<fs::path> dirs;
    for (const auto& res : results) {
        dirs.push_back(res.run_dir);
        if (!res.completed) {
            ++aborted;
            err << "aborted: " << res.manifest.value("cell_id", "") << ": " << res.reason << "\n";
        }
        render_run(res.run_dir);
        out << res.run_dir.string() << "\n";
    }
    auto ds = fs::path(rf.out) / "dataset";
    dataset::consolidate(dirs, ds);
    dataset::render_report(ds);
    out << ds.string() << "\n";
    return aborted > 0 ? exit_partial : exit_ok;
}

int cmd_extract(const std::vector<std::string>& runs, const std::vector<std::string>& track_specs, std::ostream& out,
                std::ostream& err)
{
    auto tracks = parse_tracks(track_specs);
    int failures = 0;
    for (const auto& d : runs) {
        fs::path dir(d);
        auto m = orchestrator::read_manifest(dir);
        if (!fs::exists(dir / "capture.pcap")) {
            err << dir.string() << ": no capture.pcap, nothing to extract\n";
            ++failures;
            continue;
        }
        std::vector<PhaseWindow> windows;
        for (const auto& w : m.at("windows")) {
            windows.push_back({*phase_from_string(w.at("phase").get<std::string>()), w.at("start").get<double>(),
                               w.at("end").get<double>()});
        }
        capture::FlowLabels labels{m.at("cell_id"), m.at("attack_id"), m.at("level").at("label"),
                                   m.value("t0_epoch_s", json(0.0)).is_number() ? m["t0_epoch_s"].get<double>() : 0.0,
                                   windows};
        json tj = json::array();
        for (const auto& t : capture::run_extraction(dir / "capture.pcap", dir / "features", labels, tracks)) {
            tj.push_back({{"name", t.name},
                          {"status", t.status},
                          {"exit_code", t.exit_code ? json(*t.exit_code) : json(nullptr)},
                          {"detail", t.detail},
                          {"output", fs::relative(t.output, dir).generic_string()},
                          {"rows", t.rows}});
            if (t.status != "ok") {
                err << dir.string() << ": track " << t.name << " " << t.status << ": " << t.detail << "\n";
            }
            out << t.output.string() << "\n";
        }
        m["tracks"] = tj;
        orchestrator::rewrite_manifest(dir, m);
    }
    return failures > 0 ? exit_runtime : exit_ok;
}

int cmd_report(const std::vector<std::string>& dirs, std::ostream& out)
{
    for (const auto& d : dirs) {
        fs::path dir(d);
        if (fs::exists(dir / "meta.json")) {
            render_run(dir);
        } else if (fs::exists(dir / "index.json") && !fs::exists(dir / "summary.json")) {
            // rebuild the pooled summary from the runs the index points at
            std::ifstream in(dir / "index.json");
            auto index = json::parse(in);
            json summary = json::array();
            for (const auto& r : index.at("runs")) {
                for (auto& row : metrics::summarize_run(r.at("path").get<std::string>())) {
                    summary.push_back(row);
                }
            }
            std::ofstream s(dir / "summary.json", std::ios::binary | std::ios::trunc);
            s << summary.dump(2) << "\n";
            s.close();
            dataset::render_report(dir);
        } else {
            dataset::render_report(dir);
        }
        out << (dir / "report").string() << "\n";
    }
    return exit_ok;
}

int cmd_consolidate(const std::vector<std::string>& inputs, const std::string& out_dir, std::ostream& out,
                    std::ostream& err)
{
    std::vector<fs::path> runs;
    for (const auto& i : inputs) {
        if (fs::exists(fs::path(i) / "meta.json")) {
            runs.emplace_back(i);
        } else if (fs::is_directory(i)) {
            auto found = dataset::find_runs(i);
            if (found.empty()) {
                err << "warning: no runs found under " << i << "\n";
            }
            runs.insert(runs.end(), found.begin(), found.end());
        } else {
            throw dataset::MissingSummary(i);
        }
    }
    auto c = dataset::consolidate(runs, out_dir);
    for (const auto& e : c.excluded) {
        err << "excluded " << e.run << ": " << e.reason << "\n";
    }
    out << (fs::path(out_dir) / "probe_dataset.csv").string() << "\n"
        << (fs::path(out_dir) / "flow_dataset.csv").string() << "\n"
        << (fs::path(out_dir) / "index.json").string() << "\n";
    err << "runs: " << c.included.size() << " included, " << c.excluded.size() << " excluded; probe rows "
        << c.probe_rows << ", flow rows " << c.flow_rows << "\n";
    return exit_ok;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    init_logging();
    CLI::App app{"Phase-segmented network attack experiments: plan, run, extract, report, consolidate", "nsb"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(NSB_VERSION));

    ExperimentFlags vf, pf, rfx;
    RunFlags rf;
    auto* validate = app.add_subcommand("validate", "Load and validate a catalog (and optionally an experiment)");
    validate->add_option("--catalog", vf.catalog, "Catalog root directory");
    validate->add_option("--experiment", vf.experiment, "Experiment file to check against the catalog");

    auto* plan = app.add_subcommand("plan", "Print the execution matrix and its estimated duration");
    add_experiment_flags(plan, pf);

    auto* runcmd = app.add_subcommand("run", "Execute the matrix, then summarize, report and consolidate");
    add_experiment_flags(runcmd, rfx);
    runcmd->add_option("--adapter", rf.adapter, "Runtime adapter")->check(CLI::IsMember({"sandbox", "engine"}));
    runcmd->add_option("--engine-socket", rf.engine_socket, "Container engine API socket");
    runcmd->add_option("--workload-dir", rf.workload_dir, "Directory holding the bundled workload programs");
    runcmd->add_flag("--ephemeral-ports", rf.ephemeral_ports, "Use a free host port per cell");
    runcmd->add_option("--out", rf.out, "Output root for run directories");
    runcmd->add_option("--track", rf.tracks, "External extractor track name='command {pcap} {out}' (repeatable)");

    std::vector<std::string> extract_runs, extract_tracks;
    auto* extract = app.add_subcommand("extract", "Re-run feature extraction tracks on recorded runs");
    extract->add_option("runs", extract_runs, "Run directories")->required();
    extract->add_option("--track", extract_tracks, "External extractor track name='command {pcap} {out}'");

    std::vector<std::string> report_dirs;
    auto* report = app.add_subcommand("report", "Recompute summaries and render reports");
    report->add_option("dirs", report_dirs, "Run or dataset directories")->required();

    std::vector<std::string> cons_inputs;
    std::string cons_out = "dataset";
    auto* cons = app.add_subcommand("consolidate", "Merge runs into labeled probe and flow datasets");
    cons->add_option("inputs", cons_inputs, "Run directories or roots containing them")->required();
    cons->add_option("--out", cons_out, "Output directory");

    std::vector<std::string> owned(args.begin(), args.end());
    if (owned.empty()) {
        owned.push_back("nsb");
    }
    std::vector<char*> argv;
    for (auto& a : owned) {
        argv.push_back(a.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return exit_ok;
        }
        app.exit(e, err, err);
        return exit_validation;
    }

    try {
        if (*validate) {
            return cmd_validate(vf, out);
        }
        if (*plan) {
            return cmd_plan(pf, out);
        }
        if (*runcmd) {
            return cmd_run(rfx, rf, out, err);
        }
        if (*extract) {
            return cmd_extract(extract_runs, extract_tracks, out, err);
        }
        if (*report) {
            return cmd_report(report_dirs, out);
        }
        if (*cons) {
            return cmd_consolidate(cons_inputs, cons_out, out, err);
        }
    } catch (const catalog::ValidationError& e) {
        err << "catalog validation failed:\n";
        for (const auto& v : e.violations) {
            err << "  " << v.describe() << "\n";
        }
        return exit_validation;
    } catch (const catalog::CatalogError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const planner::PlanError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return exit_validation;
    } catch (const DurationParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    err << app.help();
    return exit_validation;
}

} // namespace nsb::cli
