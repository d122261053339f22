#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "nsb/common/csv.hpp"
#include "nsb/common/text.hpp"
#include "nsb/dataset.hpp"
#include "nsb/metrics.hpp"
#include "nsb/phases.hpp"

namespace nsb::dataset {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Point {
    double t = 0;
    std::string phase;
    bool success = false;
    double latency = 0;  // censored
};

struct Series {
    std::string cell_id;
    std::string level;
    std::vector<PhaseWindow> windows;
    double timeout_ms = 2000;
    std::vector<Point> points;
};

json load_json(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) {
        throw Error("cannot read " + p.string());
    }
    return json::parse(in);
}

std::vector<PhaseWindow> parse_windows(const json& j)
{
    std::vector<PhaseWindow> out;
    for (const auto& w : j) {
        if (auto p = phase_from_string(w.at("phase").get<std::string>())) {
            out.push_back({*p, w.at("start").get<double>(), w.at("end").get<double>()});
        }
    }
    return out;
}

int phase_rank(const std::string& p)
{
    auto ph = phase_from_string(p);
    return ph ? static_cast<int>(*ph) : 99;
}

std::string num(const json& v, int digits)
{
    return v.is_number() ? fixed(v.get<double>(), digits) : std::string();
}

std::string slug(std::string s)
{
    for (auto& c : s) {
        if (c == '/' || c == ' ') {
            c = '.';
        }
    }
    return s;
}

std::string svg_plot(const Series& s)
{
    const double w = 800, h = 320, left = 60, right = 20, top = 30, bottom = 40;
    const double total = s.windows.empty() ? 1.0 : std::max(s.windows.back().end, 1e-9);
    double ymax = s.timeout_ms;
    for (const auto& p : s.points) {
        ymax = std::max(ymax, p.latency);
    }
    auto x = [&](double t) { return left + (w - left - right) * std::clamp(t / total, 0.0, 1.0); };
    auto y = [&](double v) { return top + (h - top - bottom) * (1.0 - std::clamp(v / ymax, 0.0, 1.0)); };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
      << " " << h << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" << s.cell_id
      << " censored latency (ms)</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << y(0) << "\" x2=\"" << w - right << "\" y2=\"" << y(0)
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << y(0)
      << "\" stroke=\"black\"/>\n";
    for (double frac : {0.0, 0.5, 1.0}) {
        o << "<text x=\"" << left - 5 << "\" y=\"" << fixed(y(ymax * frac) + 4, 1)
          << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << fixed(ymax * frac, 0)
          << "</text>\n";
    }
    for (const auto& win : s.windows) {
        o << "<line x1=\"" << fixed(x(win.start), 1) << "\" y1=\"" << top << "\" x2=\"" << fixed(x(win.start), 1)
          << "\" y2=\"" << y(0) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
        o << "<text x=\"" << fixed(x(win.start) + 4, 1) << "\" y=\"" << top + 12
          << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"gray\">" << to_string(win.phase) << "</text>\n";
    }
    o << "<text x=\"" << w - right << "\" y=\"" << h - 10
      << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">t (s) 0.." << fixed(total, 1)
      << "</text>\n";
    if (!s.points.empty()) {
        o << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
        for (std::size_t i = 0; i < s.points.size(); ++i) {
            o << (i ? " " : "") << fixed(x(s.points[i].t), 1) << "," << fixed(y(s.points[i].latency), 1);
        }
        o << "\"/>\n";
        for (const auto& p : s.points) {
            if (!p.success) {
                o << "<circle cx=\"" << fixed(x(p.t), 1) << "\" cy=\"" << fixed(y(p.latency), 1)
                  << "\" r=\"2\" fill=\"crimson\"/>\n";
            }
        }
    }
    o << "</svg>\n";
    return o.str();
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw Error("cannot write " + p.string());
    }
}

} // namespace

RunReport render_report(const fs::path& dir)
{
    if (!fs::exists(dir / "summary.json")) {
        throw MissingSummary(dir);
    }
    auto summary = load_json(dir / "summary.json");
    const bool consolidated = fs::exists(dir / "probe_dataset.csv") && fs::exists(dir / "index.json");

    RunReport report;
    report.dir = dir / "report";
    fs::remove_all(report.dir);
    fs::create_directories(report.dir);
    std::vector<std::string> files;
    auto add = [&](const std::string& name) { files.push_back(name); };

    // collect per-cell latency series
    std::vector<Series> series;
    std::map<std::string, std::size_t> by_cell;
    bool have_flows = false;
    std::vector<std::vector<std::string>> flow_rows;  // phase-grouped input: cell_id, phase, packets, bytes, syn, rst
    if (consolidated) {
        auto index = load_json(dir / "index.json");
        for (const auto& r : index.at("runs")) {
            Series s;
            s.cell_id = r.at("cell_id");
            s.level = r.at("level");
            s.windows = parse_windows(r.at("windows"));
            if (r.value("probe_timeout_ms", json()).is_number()) {
                s.timeout_ms = r["probe_timeout_ms"].get<double>();
            }
            if (!by_cell.count(s.cell_id)) {
                by_cell[s.cell_id] = series.size();
                series.push_back(s);
            }
        }
        auto table = read_csv(dir / "probe_dataset.csv");
        auto c_cell = table.column("cell_id"), c_t = table.column("t_s"), c_phase = table.column("phase"),
             c_ok = table.column("success"), c_lat = table.column("censored_latency_ms");
        for (const auto& r : table.rows) {
            auto it = by_cell.find(r[c_cell]);
            if (it == by_cell.end()) {
                continue;
            }
            series[it->second].points.push_back(
                {parse_real(r[c_t]).value_or(0), r[c_phase], r[c_ok] == "true", parse_real(r[c_lat]).value_or(0)});
        }
        if (fs::exists(dir / "flow_dataset.csv")) {
            auto flows = read_csv(dir / "flow_dataset.csv");
            have_flows = !flows.rows.empty();
            auto fc = flows.column("cell_id"), fp = flows.column("phase"), ff = flows.column("fwd_packets"),
                 fb = flows.column("bwd_packets"), fbf = flows.column("fwd_bytes"), fbb = flows.column("bwd_bytes"),
                 fs_ = flows.column("syn_count"), fr = flows.column("rst_count");
            for (const auto& r : flows.rows) {
                flow_rows.push_back({r[fc], r[fp], r[ff], r[fb], r[fbf], r[fbb], r[fs_], r[fr]});
            }
        }
    } else {
        auto meta = load_json(dir / "meta.json");
        Series s;
        s.cell_id = meta.at("cell_id");
        s.level = meta.at("level").at("label");
        s.windows = parse_windows(meta.at("windows"));
        if (meta.contains("probe") && meta["probe"].value("timeout_ms", json()).is_number()) {
            s.timeout_ms = meta["probe"]["timeout_ms"].get<double>();
        }
        if (fs::exists(dir / "probes.csv")) {
            for (const auto& p : probe::read_probes_csv(dir / "probes.csv")) {
                s.points.push_back({p.t_s, std::string(to_string(p.phase)), p.success, p.censored_latency_ms});
            }
        }
        series.push_back(s);
        if (fs::exists(dir / "features" / "native.csv")) {
            auto flows = read_csv(dir / "features" / "native.csv");
            have_flows = !flows.rows.empty();
            auto fp = flows.column("phase"), ff = flows.column("fwd_packets"), fb = flows.column("bwd_packets"),
                 fbf = flows.column("fwd_bytes"), fbb = flows.column("bwd_bytes"), fs_ = flows.column("syn_count"),
                 fr = flows.column("rst_count");
            for (const auto& r : flows.rows) {
                flow_rows.push_back({s.cell_id, r[fp], r[ff], r[fb], r[fbf], r[fbb], r[fs_], r[fr]});
            }
        }
        if (fs::exists(dir / "resources.csv")) {
            auto res = metrics::read_resources_csv(dir / "resources.csv");
            CsvWriter cpu(report.dir / "timeseries_cpu.csv"), load(report.dir / "timeseries_load.csv"),
                mem(report.dir / "timeseries_mem.csv");
            cpu.row({"cell_id", "level", "t_s", "phase", "cpu_pct"});
            load.row({"cell_id", "level", "t_s", "phase", "load1", "load5", "load15"});
            mem.row({"cell_id", "level", "t_s", "phase", "mem_pct"});
            for (const auto& r : res) {
                auto ph = label_phase(r.t, s.windows);
                std::string phase = ph ? std::string(to_string(*ph)) : "out_of_window";
                auto f = metrics::csv_fields(r);
                cpu.row({s.cell_id, s.level, f[0], phase, f[1]});
                load.row({s.cell_id, s.level, f[0], phase, f[2], f[3], f[4]});
                mem.row({s.cell_id, s.level, f[0], phase, f[5]});
            }
            cpu.flush();
            load.flush();
            mem.flush();
            add("timeseries_cpu.csv");
            add("timeseries_load.csv");
            add("timeseries_mem.csv");
        } else {
            report.notes.push_back("no resources.csv: resource series omitted");
        }
    }
    if (consolidated) {
        report.notes.push_back("resource series are rendered per run");
    }

    // summary table ordered by level, then cell, then phase
    std::vector<json> rows(summary.begin(), summary.end());
    std::stable_sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
        auto ka = std::tuple(a.at("level").get<std::string>(), a.at("cell_id").get<std::string>(),
                             phase_rank(a.at("phase").get<std::string>()));
        auto kb = std::tuple(b.at("level").get<std::string>(), b.at("cell_id").get<std::string>(),
                             phase_rank(b.at("phase").get<std::string>()));
        return ka < kb;
    });
    {
        CsvWriter table(report.dir / "summary_table.csv");
        table.row(split(summary_table_header, ','));
        for (const auto& r : rows) {
            table.row({r.at("level"), r.at("phase"), std::to_string(r.at("samples").get<std::size_t>()),
                       num(r.at("success_rate"), 1), num(r.at("failure_rate"), 1), num(r.at("p50_ms"), 2),
                       num(r.at("p95_ms"), 2), num(r.at("p99_ms"), 2), r.at("cell_id")});
        }
        table.flush();
        add("summary_table.csv");
    }

    {
        CsvWriter ts(report.dir / "timeseries_latency.csv");
        ts.row({"cell_id", "level", "t_s", "phase", "success", "censored_latency_ms"});
        for (const auto& s : series) {
            for (const auto& p : s.points) {
                ts.row({s.cell_id, s.level, fixed(p.t, 2), p.phase, p.success ? "true" : "false", fixed(p.latency, 2)});
            }
        }
        ts.flush();
        add("timeseries_latency.csv");
    }

    // pooled CDFs per (level, phase)
    std::map<std::pair<std::string, int>, std::vector<double>> pools;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            pools[{s.level, phase_rank(p.phase)}].push_back(p.latency);
        }
    }
    for (const auto& [key, values] : pools) {
        if (values.empty() || key.second > 2) {
            continue;
        }
        auto name = "cdf_" + key.first + "_" + std::string(to_string(static_cast<Phase>(key.second))) + ".csv";
        CsvWriter w(report.dir / name);
        w.row({"latency_ms", "fraction"});
        for (const auto& pt : metrics::cdf(values)) {
            w.row({fixed(pt.latency_ms, 2), fixed(pt.fraction, 6)});
        }
        w.flush();
        add(name);
    }

    for (const auto& s : series) {
        auto name = "latency_" + slug(s.cell_id) + ".svg";
        write_text(report.dir / name, svg_plot(s));
        add(name);
    }

    if (have_flows) {
        std::map<std::pair<std::string, int>, std::array<unsigned long long, 4>> agg;  // flows, packets, bytes, syn
        std::map<std::pair<std::string, int>, unsigned long long> rst;
        std::map<std::pair<std::string, int>, std::string> phase_names;
        for (const auto& r : flow_rows) {
            auto key = std::pair(r[0], phase_rank(r[1]));
            phase_names[key] = r[1];
            auto v = [&](std::size_t i) { return static_cast<unsigned long long>(parse_int(r[i]).value_or(0)); };
            auto& a = agg[key];
            a[0] += 1;
            a[1] += v(2) + v(3);
            a[2] += v(4) + v(5);
            a[3] += v(6);
            rst[key] += v(7);
        }
        CsvWriter w(report.dir / "flow_summary.csv");
        w.row({"cell_id", "phase", "flows", "packets", "bytes", "syn_count", "rst_count"});
        for (const auto& [key, a] : agg) {
            w.row({key.first, phase_names[key], std::to_string(a[0]), std::to_string(a[1]), std::to_string(a[2]),
                   std::to_string(a[3]), std::to_string(rst[key])});
        }
        w.flush();
        add("flow_summary.csv");
    } else {
        report.notes.push_back("no flow features (capture disabled or empty): flow sections omitted");
    }

    std::sort(files.begin(), files.end());
    report.files = files;
    json index = {{"source", consolidated ? "dataset" : "run"}, {"files", files}, {"notes", report.notes}};
    write_text(report.dir / "index.json", index.dump(2) + "\n");
    return report;
}

} // namespace nsb::dataset
