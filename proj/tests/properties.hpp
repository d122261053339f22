#pragma once

// Randomised property checks with independent brute-force oracles. Used by the
// unit tests and by the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nsb/capture/flows.hpp"
#include "nsb/capture/pcap.hpp"
#include "nsb/metrics.hpp"
#include "nsb/phases.hpp"
#include "nsb/planner.hpp"
#include "support.hpp"

namespace nsb::test {

struct Outcome {
    bool ok = true;
    std::string detail;

    void fail(const std::string& why)
    {
        if (ok) {
            detail = why;
        }
        ok = false;
    }
};

// ---------------------------------------------------------------------------
// percentile

// Sort-and-index: rank ceil(qh * n / 10000) over integers, q in hundredths of a percent.
inline double percentile_of_sorted(const std::vector<double>& values, std::int64_t q_hundredths)
{
    auto n = static_cast<std::int64_t>(values.size());
    std::int64_t rank = (q_hundredths * n + 9999) / 10000;
    rank = std::max<std::int64_t>(rank, 1);
    return values[static_cast<std::size_t>(rank - 1)];
}

inline Outcome check_percentile(std::uint64_t seed, int cases)
{
    Outcome out;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> size_dist(1, 10000);
    std::uniform_int_distribution<std::int64_t> q_dist(1, 10000);
    const std::int64_t fixed_q[] = {100, 5000, 9000, 9500, 9900, 9990, 10000};
    for (int c = 0; c < cases && out.ok; ++c) {
        int n = c < 20 ? 1 + c : size_dist(rng);
        std::vector<double> values(static_cast<std::size_t>(n));
        // mix of heavy ties and continuous values
        if (c % 3 == 0) {
            std::uniform_int_distribution<int> small(0, 9);
            for (auto& v : values) v = small(rng);
        } else {
            std::uniform_real_distribution<double> real(0, 2000);
            for (auto& v : values) v = std::round(real(rng) * 100) / 100;
        }
        std::vector<std::int64_t> qs(std::begin(fixed_q), std::end(fixed_q));
        for (int i = 0; i < 8; ++i) qs.push_back(q_dist(rng));
        std::sort(qs.begin(), qs.end());
        auto sorted = values;
        std::sort(sorted.begin(), sorted.end());
        double previous = -1;
        for (auto qh : qs) {
            double q = static_cast<double>(qh) / 100.0;
            double got = metrics::percentile(values, q);
            double want = percentile_of_sorted(sorted, qh);
            if (got != want) {
                std::ostringstream s;
                s << "n=" << n << " q=" << q << " got " << got << " want " << want;
                out.fail(s.str());
                break;
            }
            if (got < previous) {
                std::ostringstream s;
                s << "not monotone in q at n=" << n << " q=" << q;
                out.fail(s.str());
                break;
            }
            previous = got;
        }
    }
    if (out.ok) {
        out.detail = std::to_string(cases) + " random inputs match the sort-and-index oracle";
    }
    return out;
}

// ---------------------------------------------------------------------------
// matrix

inline catalog::Catalog synthetic_catalog(int services, int attacks)
{
    catalog::Catalog cat;
    for (int i = 0; i < services; ++i) {
        catalog::ServiceSpec s;
        s.id = "svc" + std::to_string(i);
        s.image = "nsb-http-target";
        s.port = 8080;
        cat.services[s.id] = s;
    }
    for (int i = 0; i < attacks; ++i) {
        catalog::AttackSpec a;
        a.id = "atk" + std::to_string(i);
        a.image = "nsb-http-flood";
        a.hook = "entrypoint.sh";
        catalog::ParameterSpec rate;
        rate.name = "rate";
        rate.kind = catalog::ParamKind::integer;
        rate.default_value = std::int64_t{100};
        rate.min = 1;
        rate.max = 100000;
        rate.allow_unlimited = true;
        a.parameters.push_back(rate);
        cat.attacks[a.id] = a;
    }
    return cat;
}

inline Outcome check_matrix(std::uint64_t seed, int cases)
{
    Outcome out;
    std::mt19937_64 rng(seed);
    const auto all_levels = planner::default_levels();
    int done = 0;
    while (done < cases && out.ok) {
        int s = std::uniform_int_distribution<int>(1, 30)(rng);
        int a = std::uniform_int_distribution<int>(1, 30)(rng);
        int l = std::uniform_int_distribution<int>(1, 4)(rng);
        int r = std::uniform_int_distribution<int>(1, 50)(rng);
        if (static_cast<long>(s) * a * l * r > 10000) {
            continue;
        }
        ++done;
        auto cat = synthetic_catalog(s, a);
        planner::ExperimentSpec spec;
        // shuffled selection order: the matrix must follow the selection, not catalog order
        for (int i = 0; i < s; ++i) spec.services.push_back("svc" + std::to_string(i));
        for (int i = 0; i < a; ++i) spec.attacks.push_back("atk" + std::to_string(i));
        std::shuffle(spec.services.begin(), spec.services.end(), rng);
        std::shuffle(spec.attacks.begin(), spec.attacks.end(), rng);
        std::vector<planner::IntensityLevel> levels(all_levels.begin(), all_levels.end());
        std::shuffle(levels.begin(), levels.end(), rng);
        levels.resize(static_cast<std::size_t>(l));
        spec.levels = levels;
        spec.repetition.repetitions = r;
        auto m = planner::expand_matrix(spec, cat);
        std::size_t expected = static_cast<std::size_t>(s) * a * l * r;
        if (m.cells.size() != expected) {
            out.fail("|cells| = " + std::to_string(m.cells.size()) + ", product = " + std::to_string(expected));
            break;
        }
        // brute-force nesting, compared position by position
        std::size_t k = 0;
        for (const auto& svc : spec.services) {
            for (const auto& atk : spec.attacks) {
                for (const auto& lvl : spec.levels) {
                    for (int rep = 1; rep <= r; ++rep, ++k) {
                        const auto& c = m.cells[k];
                        std::string id = svc + "/" + atk + "/" + lvl.label + "/rep" + std::to_string(rep);
                        if (c.service_id != svc || c.attack_id != atk || !(c.level == lvl) || c.repetition != rep ||
                            c.cell_id != id) {
                            out.fail("cell " + std::to_string(k) + " is " + c.cell_id + ", expected " + id);
                            goto next;
                        }
                    }
                }
            }
        }
    next:;
    }
    if (out.ok) {
        out.detail = std::to_string(cases) + " random (S,A,L,R) tuples, cardinality and nesting exact";
    }
    return out;
}

// ---------------------------------------------------------------------------
// phases

inline Outcome check_phase_partition(std::uint64_t seed, int triples, int times)
{
    Outcome out;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> dur(1, 120'000'000);  // up to 120 s in microseconds
    for (int c = 0; c < triples && out.ok; ++c) {
        std::int64_t w = dur(rng), a = dur(rng), cd = dur(rng);
        if (c % 4 == 0) {
            // small whole seconds make boundary hits frequent
            w = std::uniform_int_distribution<std::int64_t>(1, 5)(rng) * 1'000'000;
            a = std::uniform_int_distribution<std::int64_t>(1, 5)(rng) * 1'000'000;
            cd = std::uniform_int_distribution<std::int64_t>(1, 5)(rng) * 1'000'000;
        }
        auto windows = phase_schedule(Duration(w), Duration(a), Duration(cd));
        std::int64_t total = w + a + cd;
        std::vector<std::int64_t> ts = {0, w - 1, w, w + a - 1, w + a, total - 1};
        std::uniform_int_distribution<std::int64_t> tdist(0, total - 1);
        for (int i = 0; i < times; ++i) ts.push_back(tdist(rng));
        for (auto t_us : ts) {
            double t = static_cast<double>(t_us) / 1e6;
            Phase want = t_us < w ? Phase::warmup : t_us < w + a ? Phase::attack : Phase::cooldown;
            int containing = 0;
            for (const auto& win : windows) {
                containing += (t >= win.start && t < win.end) ? 1 : 0;
            }
            auto got = label_phase(t, windows);
            if (containing != 1 || !got || *got != want) {
                std::ostringstream s;
                s << "t=" << t << " with (" << w << "," << a << "," << cd << ")us: windows containing t = " << containing
                  << ", label = " << (got ? std::string(to_string(*got)) : "out_of_window")
                  << ", expected " << to_string(want);
                out.fail(s.str());
                break;
            }
        }
        if (out.ok && label_phase(static_cast<double>(total) / 1e6, windows)) {
            out.fail("t = total must be out of window");
        }
        if (out.ok && label_phase(-1e-6, windows)) {
            out.fail("negative t must be out of window");
        }
    }
    if (out.ok) {
        out.detail = std::to_string(triples) + " triples x " + std::to_string(times) +
                     " times plus boundaries, one phase each, starts resolve to the later window";
    }
    return out;
}

// ---------------------------------------------------------------------------
// pcap

inline std::vector<capture::PacketRecord> random_records(std::mt19937_64& rng, std::uint32_t snaplen, std::size_t max_count)
{
    std::vector<capture::PacketRecord> out(std::uniform_int_distribution<std::size_t>(0, max_count)(rng));
    std::uint32_t sec = std::uniform_int_distribution<std::uint32_t>(0, 2'000'000'000)(rng);
    for (auto& r : out) {
        sec += std::uniform_int_distribution<std::uint32_t>(0, 3)(rng);
        r.ts_sec = sec;
        r.ts_usec = std::uniform_int_distribution<std::uint32_t>(0, 999'999)(rng);
        std::uint32_t len = std::uniform_int_distribution<std::uint32_t>(0, std::min<std::uint32_t>(snaplen, 400))(rng);
        r.data.resize(len);
        for (auto& b : r.data) b = static_cast<std::uint8_t>(rng());
        r.original_len = std::uniform_int_distribution<std::uint32_t>(len, snaplen)(rng);
    }
    return out;
}

inline Outcome check_pcap_roundtrip(std::uint64_t seed, int sets, const std::filesystem::path& dir)
{
    Outcome out;
    std::mt19937_64 rng(seed);
    const std::uint32_t linktypes[] = {0, 1, 101};
    for (int c = 0; c < sets && out.ok; ++c) {
        capture::PcapHeader h;
        h.snaplen = std::uniform_int_distribution<std::uint32_t>(64, 65535)(rng);
        h.linktype = linktypes[c % 3];
        h.thiszone = 0;
        auto records = random_records(rng, h.snaplen, 40);
        auto path = dir / ("rt" + std::to_string(c) + ".pcap");
        capture::write_pcap(path, h, records);
        auto back = capture::read_pcap(path);
        if (!(back.header == h) || back.records != records || back.truncated) {
            out.fail("set " + std::to_string(c) + ": read(write(R)) != R");
            break;
        }
        // cut inside a randomly chosen record: prior records survive, the cut is reported at its offset
        if (!records.empty()) {
            auto bytes = slurp(path);
            std::size_t victim = std::uniform_int_distribution<std::size_t>(0, records.size() - 1)(rng);
            std::uint64_t offset = capture::pcap_global_header_size;
            for (std::size_t i = 0; i < victim; ++i) {
                offset += capture::pcap_record_header_size + records[i].data.size();
            }
            std::uint64_t rec_size = capture::pcap_record_header_size + records[victim].data.size();
            std::uint64_t cut = offset + std::uniform_int_distribution<std::uint64_t>(1, rec_size - 1)(rng);
            std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
            auto partial = capture::parse_pcap(prefix);
            std::vector<capture::PacketRecord> expected(records.begin(),
                                                        records.begin() + static_cast<std::ptrdiff_t>(victim));
            if (partial.records != expected || !partial.truncated || partial.truncated->offset != offset) {
                out.fail("set " + std::to_string(c) + ": truncation at byte " + std::to_string(cut) +
                         " not reported as TruncatedRecord(" + std::to_string(offset) + ")");
            }
        }
        std::filesystem::remove(path);
    }
    if (out.ok) {
        out.detail = std::to_string(sets) + " random sets byte-exact; truncations keep prior records";
    }
    return out;
}

// ---------------------------------------------------------------------------
// flows

struct OracleKey {
    std::uint8_t proto;
    std::pair<std::uint32_t, std::uint16_t> lo, hi;
    auto operator<=>(const OracleKey&) const = default;
};

struct OracleFlow {
    std::uint64_t packets = 0;
    std::uint64_t fwd = 0;
    std::pair<std::uint32_t, std::uint16_t> first_src;
};

// Per-packet classification straight from the Ethernet bytes.
inline std::optional<std::pair<OracleKey, std::pair<std::uint32_t, std::uint16_t>>>
classify(const std::vector<std::uint8_t>& f)
{
    auto u16 = [&](std::size_t o) { return static_cast<std::uint16_t>(f[o] << 8 | f[o + 1]); };
    auto u32 = [&](std::size_t o) { return static_cast<std::uint32_t>(u16(o)) << 16 | u16(o + 2); };
    if (f.size() < 34 || u16(12) != 0x0800 || (f[14] >> 4) != 4) {
        return std::nullopt;
    }
    std::size_t ihl = (f[14] & 0x0f) * 4u;
    std::uint8_t proto = f[23];
    if ((proto != 6 && proto != 17) || (u16(20) & 0x1fff) != 0) {
        return std::nullopt;
    }
    std::size_t l4 = 14 + ihl;
    if (f.size() < l4 + (proto == 6 ? 14u : 4u)) {
        return std::nullopt;
    }
    std::pair<std::uint32_t, std::uint16_t> src{u32(26), u16(l4)}, dst{u32(30), u16(l4 + 2)};
    OracleKey k{proto, std::min(src, dst), std::max(src, dst)};
    return std::make_pair(k, src);
}

struct RandomPcap {
    std::vector<capture::PacketRecord> records;
    std::uint64_t eligible = 0;
    std::map<OracleKey, OracleFlow> flows;
};

inline RandomPcap random_flow_pcap(std::mt19937_64& rng)
{
    RandomPcap p;
    const std::uint32_t hosts[] = {ip(10, 0, 0, 1), ip(10, 0, 0, 2), ip(192, 168, 1, 9)};
    const std::uint16_t ports[] = {80, 443, 1000, 40000};
    int n = std::uniform_int_distribution<int>(0, 60)(rng);
    std::uint32_t usec = 0;
    for (int i = 0; i < n; ++i) {
        FrameSpec s;
        s.src = hosts[rng() % 3];
        s.dst = hosts[rng() % 3];
        s.sport = ports[rng() % 4];
        s.dport = ports[rng() % 4];
        s.flags = static_cast<std::uint8_t>(rng() & 0x3f);
        s.payload = rng() % 40;
        std::size_t cut = 0;
        switch (rng() % 9) {
        case 0: s.proto = 1; break;                      // ICMP
        case 1: s.ethertype = 0x0806; break;             // ARP-typed frame
        case 2: s.ethertype = 0x86dd; break;             // IPv6-typed frame
        case 3: s.frag_offset = 100; break;              // non-first fragment
        case 4: cut = 14 + 20 + (rng() % 4); break;      // L4 header cut by the snap length
        case 5: case 6: s.proto = 17; break;
        default: s.proto = 6; break;
        }
        auto bytes = frame(s);
        capture::PacketRecord r;
        usec += 1 + static_cast<std::uint32_t>(rng() % 5000);
        r.ts_sec = 1'700'000'000 + usec / 1'000'000;
        r.ts_usec = usec % 1'000'000;
        r.original_len = static_cast<std::uint32_t>(bytes.size());
        if (cut > 0 && cut < bytes.size()) {
            bytes.resize(cut);
        }
        r.data = bytes;
        if (auto c = classify(bytes)) {
            ++p.eligible;
            auto& f = p.flows[c->first];
            if (f.packets == 0) {
                f.first_src = c->second;
            }
            ++f.packets;
            f.fwd += c->second == f.first_src ? 1 : 0;
        }
        p.records.push_back(std::move(r));
    }
    return p;
}

inline Outcome check_flow_conservation(std::uint64_t seed, int pcaps, const std::filesystem::path& dir)
{
    Outcome out;
    std::mt19937_64 rng(seed);
    capture::FlowLabels labels{"svc/atk/L0/rep1", "atk", "L0", 1'700'000'000.0,
                               phase_schedule(std::chrono::seconds(5), std::chrono::seconds(10), std::chrono::seconds(5))};
    for (int c = 0; c < pcaps && out.ok; ++c) {
        auto p = random_flow_pcap(rng);
        auto path = dir / ("flows" + std::to_string(c) + ".pcap");
        capture::write_pcap(path, capture::PcapHeader{}, p.records);
        auto ex = capture::extract_flows(path, labels);
        std::uint64_t sum = 0;
        for (const auto& f : ex.flows) sum += f.packets();
        std::string where = "pcap " + std::to_string(c) + ": ";
        if (sum != p.eligible || ex.ip_packets != p.eligible || ex.skipped != p.records.size() - p.eligible) {
            out.fail(where + "flow packets " + std::to_string(sum) + ", oracle " + std::to_string(p.eligible));
            break;
        }
        if (ex.flows.size() != p.flows.size()) {
            out.fail(where + std::to_string(ex.flows.size()) + " flows, oracle " + std::to_string(p.flows.size()));
            break;
        }
        for (const auto& f : ex.flows) {
            OracleKey k{f.key.proto, {f.key.addr_lo, f.key.port_lo}, {f.key.addr_hi, f.key.port_hi}};
            auto it = p.flows.find(k);
            if (it == p.flows.end() || it->second.packets != f.packets() || it->second.fwd != f.fwd_packets) {
                out.fail(where + "flow counts disagree with the per-packet oracle");
                break;
            }
        }
        std::filesystem::remove(path);
    }
    if (out.ok) {
        out.detail = std::to_string(pcaps) + " random pcaps conserve IPv4 TCP/UDP packets";
    }
    return out;
}

// Three SYNs 10.0.0.1:1000 -> 10.0.0.2:80, header fields written by hand.
inline std::vector<capture::PacketRecord> three_syn_records()
{
    std::vector<capture::PacketRecord> out;
    for (int i = 0; i < 3; ++i) {
        std::vector<std::uint8_t> b = {
            0x02, 0x00, 0x00, 0x00, 0x00, 0x02,  // dst mac
            0x02, 0x00, 0x00, 0x00, 0x00, 0x01,  // src mac
            0x08, 0x00,                          // IPv4
            0x45, 0x00, 0x00, 0x28,              // v4 ihl5, total length 40
            0x00, 0x01, 0x40, 0x00,              // id 1, DF
            0x40, 0x06, 0x00, 0x00,              // ttl 64, TCP, checksum unchecked
            0x0a, 0x00, 0x00, 0x01,              // 10.0.0.1
            0x0a, 0x00, 0x00, 0x02,              // 10.0.0.2
            0x03, 0xe8, 0x00, 0x50,              // 1000 -> 80
            0x00, 0x00, 0x00, 0x01,              // seq
            0x00, 0x00, 0x00, 0x00,              // ack
            0x50, 0x02, 0xff, 0xff,              // offset 5, SYN, window
            0x00, 0x00, 0x00, 0x00,              // checksum, urgent
        };
        capture::PacketRecord r;
        r.ts_sec = 1'700'000'006;
        r.ts_usec = static_cast<std::uint32_t>(i) * 1000;  // 1 ms apart
        r.original_len = static_cast<std::uint32_t>(b.size());
        r.data = std::move(b);
        out.push_back(std::move(r));
    }
    return out;
}

inline Outcome check_three_syn(const std::filesystem::path& dir)
{
    Outcome out;
    auto path = dir / "three_syn.pcap";
    capture::write_pcap(path, capture::PcapHeader{}, three_syn_records());
    capture::FlowLabels labels{"web/http_flood/L3/rep1", "http_flood", "L3", 1'700'000'000.0,
                               phase_schedule(std::chrono::seconds(5), std::chrono::seconds(10), std::chrono::seconds(5))};
    auto ex = capture::extract_flows(path, labels);
    if (ex.flows.size() != 1) {
        out.fail(std::to_string(ex.flows.size()) + " flows instead of 1");
        return out;
    }
    const auto& f = ex.flows[0];
    if (f.fwd_packets != 3 || f.bwd_packets != 0 || f.syn_count != 3 || f.ack_count != 0 || f.fwd_bytes != 162) {
        out.fail("fwd=" + std::to_string(f.fwd_packets) + " bwd=" + std::to_string(f.bwd_packets) +
                 " syn=" + std::to_string(f.syn_count));
        return out;
    }
    out.detail = "1 flow, fwd_packets=3, bwd_packets=0, syn_count=3";
    return out;
}

} // namespace nsb::test
