#include "nsb/capture/flows.hpp"

#include <cmath>
#include <future>
#include <regex>

#include "nsb/capture/packet.hpp"
#include "nsb/common/csv.hpp"
#include "nsb/common/process.hpp"
#include "nsb/common/text.hpp"

namespace nsb::capture {

FlowKey FlowKey::make(std::uint8_t proto, std::uint32_t src, std::uint16_t sport, std::uint32_t dst,
                      std::uint16_t dport)
{
    FlowKey k;
    k.proto = proto;
    if (std::pair(src, sport) <= std::pair(dst, dport)) {
        k.addr_lo = src;
        k.port_lo = sport;
        k.addr_hi = dst;
        k.port_hi = dport;
    } else {
        k.addr_lo = dst;
        k.port_lo = dport;
        k.addr_hi = src;
        k.port_hi = sport;
    }
    return k;
}

std::string proto_name(std::uint8_t proto)
{
    switch (proto) {
    case ip_proto_tcp:
        return "tcp";
    case ip_proto_udp:
        return "udp";
    default:
        return std::to_string(proto);
    }
}

namespace {

struct Accumulator {
    FlowRecord rec;
    std::uint32_t fwd_src = 0;
    std::uint16_t fwd_sport = 0;
    std::int64_t last_us = 0;
    // Welford over inter-arrival gaps in ms
    std::uint64_t gaps = 0;
    double mean = 0;
    double m2 = 0;
};

} // namespace

FlowExtraction extract_flows(const PcapContents& pcap, const FlowLabels& labels)
{
    FlowExtraction out;
    out.truncated = pcap.truncated;
    std::map<FlowKey, std::size_t> index;
    std::vector<Accumulator> accs;

    for (const auto& r : pcap.records) {
        auto p = decode_ipv4(pcap.header.linktype, r.data);
        if (!p || !p->has_ports || (p->proto != ip_proto_tcp && p->proto != ip_proto_udp)) {
            ++out.skipped;
            continue;
        }
        ++out.ip_packets;
        auto key = FlowKey::make(p->proto, p->src, p->sport, p->dst, p->dport);
        auto [it, inserted] = index.try_emplace(key, accs.size());
        if (inserted) {
            Accumulator a;
            a.rec.key = key;
            a.rec.first_ts = r.timestamp();
            a.fwd_src = p->src;
            a.fwd_sport = p->sport;
            a.last_us = r.micros();
            a.rec.cell_id = labels.cell_id;
            a.rec.attack_id = labels.attack_id;
            a.rec.level = labels.level;
            auto phase = label_phase(r.timestamp() - labels.t0_epoch_s, labels.windows);
            a.rec.phase = phase ? std::string(to_string(*phase)) : "out_of_window";
            accs.push_back(std::move(a));
        } else {
            auto& a = accs[it->second];
            double gap = static_cast<double>(r.micros() - a.last_us) / 1000.0;
            a.last_us = r.micros();
            ++a.gaps;
            double delta = gap - a.mean;
            a.mean += delta / static_cast<double>(a.gaps);
            a.m2 += delta * (gap - a.mean);
        }
        auto& a = accs[it->second];
        a.rec.last_ts = r.timestamp();
        bool forward = p->src == a.fwd_src && p->sport == a.fwd_sport;
        if (forward) {
            ++a.rec.fwd_packets;
            a.rec.fwd_bytes += r.original_len;
        } else {
            ++a.rec.bwd_packets;
            a.rec.bwd_bytes += r.original_len;
        }
        if (p->proto == ip_proto_tcp) {
            a.rec.syn_count += (p->tcp_flags & tcp_flag::syn) ? 1 : 0;
            a.rec.fin_count += (p->tcp_flags & tcp_flag::fin) ? 1 : 0;
            a.rec.rst_count += (p->tcp_flags & tcp_flag::rst) ? 1 : 0;
            a.rec.ack_count += (p->tcp_flags & tcp_flag::ack) ? 1 : 0;
        }
    }

    out.flows.reserve(accs.size());
    for (auto& a : accs) {
        if (a.gaps > 0) {
            a.rec.iat_mean_ms = a.mean;
            a.rec.iat_std_ms = std::sqrt(a.m2 / static_cast<double>(a.gaps));
        }
        out.flows.push_back(std::move(a.rec));
    }
    return out;
}

FlowExtraction extract_flows(const std::filesystem::path& pcap_path, const FlowLabels& labels)
{
    return extract_flows(read_pcap(pcap_path), labels);
}

std::vector<std::string> csv_fields(const FlowRecord& f)
{
    auto opt = [](const std::optional<double>& v) { return v ? fixed(*v, 3) : std::string(); };
    return {proto_name(f.key.proto),
            format_ipv4(f.key.addr_lo),
            std::to_string(f.key.port_lo),
            format_ipv4(f.key.addr_hi),
            std::to_string(f.key.port_hi),
            fixed(f.first_ts, 6),
            fixed(f.last_ts, 6),
            fixed(f.duration_s(), 6),
            std::to_string(f.fwd_packets),
            std::to_string(f.bwd_packets),
            std::to_string(f.fwd_bytes),
            std::to_string(f.bwd_bytes),
            std::to_string(f.syn_count),
            std::to_string(f.fin_count),
            std::to_string(f.rst_count),
            std::to_string(f.ack_count),
            opt(f.iat_mean_ms),
            opt(f.iat_std_ms),
            f.cell_id,
            f.attack_id,
            f.level,
            f.phase};
}

void write_flows_csv(const std::filesystem::path& path, const std::vector<FlowRecord>& flows)
{
    CsvWriter w(path);
    w.row(split(native_csv_header, ','));
    for (const auto& f : flows) {
        w.row(csv_fields(f));
    }
    w.flush();
}

ExtractorTrack register_extractor_track(std::string name, std::string command_template)
{
    static const std::regex name_re("^[a-z0-9_-]+$");
    if (!std::regex_match(name, name_re)) {
        throw TrackError("invalid track name '" + name + "'");
    }
    if (name == "native") {
        throw TrackError("track name 'native' is reserved");
    }
    if (command_template.find("{pcap}") == std::string::npos || command_template.find("{out}") == std::string::npos) {
        throw TrackError("track '" + name + "' command must contain {pcap} and {out}");
    }
    return {std::move(name), std::move(command_template)};
}

namespace {

std::string shell_quote(const std::string& s)
{
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

std::string substitute(std::string text, const std::string& key, const std::string& value)
{
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

std::uint64_t count_rows(const std::filesystem::path& path)
{
    try {
        return read_csv(path).rows.size();
    } catch (const std::exception&) {
        return 0;
    }
}

TrackOutcome run_native(const std::filesystem::path& pcap, const std::filesystem::path& out, const FlowLabels& labels)
{
    TrackOutcome o{"native", "ok", std::nullopt, {}, out, 0};
    try {
        auto ex = extract_flows(pcap, labels);
        write_flows_csv(out, ex.flows);
        o.rows = ex.flows.size();
        o.detail = std::to_string(ex.ip_packets) + " packets in flows, " + std::to_string(ex.skipped) + " skipped";
        if (ex.truncated) {
            o.detail += ", capture truncated at offset " + std::to_string(ex.truncated->offset);
        }
    } catch (const std::exception& e) {
        o.status = "failed";
        o.detail = e.what();
    }
    return o;
}

TrackOutcome run_external(const ExtractorTrack& track, const std::filesystem::path& pcap, const std::filesystem::path& out,
                          const std::filesystem::path& log)
{
    TrackOutcome o{track.name, "ok", std::nullopt, {}, out, 0};
    std::string cmd = substitute(substitute(track.command, "{pcap}", shell_quote(pcap.string())), "{out}",
                                 shell_quote(out.string()));
    try {
        SpawnOptions opts;
        opts.argv = {"/bin/sh", "-c", cmd};
        opts.output = log;
        ChildProcess child(opts);
        auto info = child.wait();
        o.exit_code = info.signal == 0 ? std::optional<int>(info.code) : std::nullopt;
        if (info.signal == 0 && info.code == 127) {
            o.status = "command_not_found";
            o.detail = "command not found: " + track.command;
        } else if (!info.success()) {
            o.status = "failed";
            o.detail = info.describe();
        } else if (!std::filesystem::exists(out)) {
            o.status = "failed";
            o.detail = "track produced no output file";
        } else {
            o.rows = count_rows(out);
        }
    } catch (const std::exception& e) {
        o.status = "failed";
        o.detail = e.what();
    }
    return o;
}

} // namespace

std::vector<TrackOutcome> run_extraction(const std::filesystem::path& pcap_path, const std::filesystem::path& features_dir,
                                         const FlowLabels& labels, const std::vector<ExtractorTrack>& tracks)
{
    std::filesystem::create_directories(features_dir);
    std::vector<std::future<TrackOutcome>> jobs;
    jobs.push_back(std::async(std::launch::async, run_native, pcap_path, features_dir / "native.csv", labels));
    for (const auto& t : tracks) {
        auto log = features_dir.parent_path() / "logs" / ("track_" + t.name + ".log");
        std::filesystem::create_directories(log.parent_path());
        jobs.push_back(std::async(std::launch::async, run_external, t, pcap_path, features_dir / (t.name + ".csv"), log));
    }
    std::vector<TrackOutcome> out;
    for (auto& j : jobs) {
        out.push_back(j.get());
    }
    return out;
}

} // namespace nsb::capture
