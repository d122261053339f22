#include "nsb/planner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <yaml-cpp/yaml.h>

#include "nsb/common/digest.hpp"
#include "nsb/common/text.hpp"

namespace nsb::planner {

using nlohmann::json;

std::string IntensityLevel::rate_text() const
{
    return rate_limit ? catalog::render(*rate_limit) : "unlimited";
}

std::vector<IntensityLevel> default_levels()
{
    return {
        {"L0", 100.0},
        {"L1", 1000.0},
        {"L2", 10000.0},
        {"L3", std::nullopt},
    };
}

IntensityLevel level_by_label(std::string_view label)
{
    for (auto& l : default_levels()) {
        if (l.label == label) {
            return l;
        }
    }
    throw PlanError(PlanError::Kind::invalid_spec, "unknown intensity level '" + std::string(label) + "'");
}

std::string make_cell_id(std::string_view service, std::string_view attack, std::string_view level, int repetition)
{
    return std::string(service) + "/" + std::string(attack) + "/" + std::string(level) + "/rep" +
           std::to_string(repetition);
}

json to_json(const ExperimentSpec& spec)
{
    json levels = json::array();
    for (const auto& l : spec.levels) {
        levels.push_back({{"label", l.label}, {"rate_limit", l.rate_text()}});
    }
    const auto& in = spec.instrumentation;
    const auto& rp = spec.repetition;
    return json{
        {"scenario", {{"services", spec.services}, {"attacks", spec.attacks}}},
        {"parameters", {{"overrides", spec.params}, {"levels", levels}}},
        {"baseline", spec.baseline ? json(*spec.baseline) : json(nullptr)},
        {"instrumentation",
         {{"capture", in.capture},
          {"capture_filter", in.capture_filter},
          {"iface", in.iface},
          {"snaplen", in.snaplen},
          {"extract_features", in.extract_features},
          {"resource_interval", format_duration(in.resource_interval)},
          {"probe",
           {{"interval", format_duration(in.probe.interval)},
            {"timeout", format_duration(in.probe.timeout)},
            {"path", in.probe.path},
            {"max_in_flight", in.probe.max_in_flight}}}}},
        {"repetition",
         {{"repetitions", rp.repetitions},
          {"warmup", format_duration(rp.warmup)},
          {"attack", format_duration(rp.attack)},
          {"cooldown", format_duration(rp.cooldown)}}},
    };
}

std::string spec_digest(const ExperimentSpec& spec)
{
    return sha256_hex(to_json(spec).dump());
}

namespace {

void validate_levels(const std::vector<IntensityLevel>& levels)
{
    std::set<std::string> seen;
    std::vector<std::pair<std::string, double>> finite;
    for (const auto& l : levels) {
        if (l.label.size() != 2 || l.label[0] != 'L' || l.label[1] < '0' || l.label[1] > '3') {
            throw PlanError(PlanError::Kind::invalid_spec, "level label '" + l.label + "' is not one of L0..L3");
        }
        if (!seen.insert(l.label).second) {
            throw PlanError(PlanError::Kind::invalid_spec, "duplicate level " + l.label);
        }
        if (l.unlimited() && l.label != "L3") {
            throw PlanError(PlanError::Kind::invalid_spec, l.label + " needs a finite rate limit");
        }
        if (l.rate_limit) {
            if (!(*l.rate_limit > 0) || !std::isfinite(*l.rate_limit)) {
                throw PlanError(PlanError::Kind::invalid_spec, l.label + " rate limit must be > 0");
            }
            finite.emplace_back(l.label, *l.rate_limit);
        }
    }
    std::sort(finite.begin(), finite.end());
    for (std::size_t i = 1; i < finite.size(); ++i) {
        if (finite[i].second < finite[i - 1].second) {
            throw PlanError(PlanError::Kind::invalid_spec,
                            "rate limits must be non-decreasing from L0 to L2 (" + finite[i - 1].first + " > " +
                                finite[i].first + ")");
        }
    }
}

catalog::ParamSet cell_params(const ExperimentSpec& spec, const catalog::AttackSpec& attack,
                              const IntensityLevel& level)
{
    catalog::ParamSet overrides;
    if (auto it = spec.params.find(attack.id); it != spec.params.end()) {
        for (const auto& [name, text] : it->second) {
            const auto* p = attack.parameter(name);
            if (p == nullptr) {
                throw catalog::ParameterError(catalog::ParameterError::Kind::unknown_parameter, name,
                                              "attack '" + attack.id + "' has no parameter '" + name + "'");
            }
            overrides[name] = catalog::parse_param_value(*p, text);
        }
    }
    // The intensity level drives the attack's `rate` parameter when it declares one.
    if (const auto* rate = attack.parameter("rate")) {
        if (level.unlimited()) {
            overrides["rate"] = catalog::Unlimited{};
        } else if (rate->kind == catalog::ParamKind::integer) {
            overrides["rate"] = static_cast<std::int64_t>(std::llround(*level.rate_limit));
        } else {
            overrides["rate"] = *level.rate_limit;
        }
    }
    return catalog::resolve_parameters(attack, overrides);
}

} // namespace

void validate(const ExperimentSpec& spec, const catalog::Catalog& catalog)
{
    if (spec.services.empty() || spec.attacks.empty() || spec.levels.empty()) {
        throw PlanError(PlanError::Kind::empty_selection,
                        "experiment selects no " +
                            std::string(spec.services.empty() ? "services" : spec.attacks.empty() ? "attacks" : "levels"));
    }
    for (const auto& s : spec.services) {
        if (!catalog.services.contains(s)) {
            throw PlanError(PlanError::Kind::unresolved_reference, "service '" + s + "' is not in the catalog");
        }
    }
    for (const auto& a : spec.attacks) {
        if (!catalog.attacks.contains(a)) {
            throw PlanError(PlanError::Kind::unresolved_reference, "attack '" + a + "' is not in the catalog");
        }
    }
    for (const auto& [a, overrides] : spec.params) {
        if (std::find(spec.attacks.begin(), spec.attacks.end(), a) == spec.attacks.end()) {
            throw PlanError(PlanError::Kind::unresolved_reference,
                            "parameter overrides given for unselected attack '" + a + "'");
        }
        if (overrides.contains("rate")) {
            throw PlanError(PlanError::Kind::invalid_spec,
                            "'rate' of attack '" + a + "' is set by the intensity level, not by overrides");
        }
    }
    if (spec.baseline && !catalog.benign.contains(*spec.baseline)) {
        throw PlanError(PlanError::Kind::unresolved_reference,
                        "benign profile '" + *spec.baseline + "' is not in the catalog");
    }
    validate_levels(spec.levels);
    const auto& rp = spec.repetition;
    if (rp.repetitions < 1) {
        throw PlanError(PlanError::Kind::invalid_spec, "repetitions must be >= 1");
    }
    if (rp.warmup.count() <= 0 || rp.attack.count() <= 0 || rp.cooldown.count() <= 0) {
        throw PlanError(PlanError::Kind::invalid_spec, "warmup, attack and cooldown durations must be > 0");
    }
    const auto& probe = spec.instrumentation.probe;
    if (probe.interval.count() <= 0 || probe.timeout.count() <= 0) {
        throw PlanError(PlanError::Kind::invalid_spec, "probe interval and timeout must be > 0");
    }
    if (probe.max_in_flight < 1) {
        throw PlanError(PlanError::Kind::invalid_spec, "probe max_in_flight must be >= 1");
    }
    if (spec.instrumentation.resource_interval.count() <= 0) {
        throw PlanError(PlanError::Kind::invalid_spec, "resource interval must be > 0");
    }
}

ExecutionMatrix expand_matrix(const ExperimentSpec& spec, const catalog::Catalog& catalog)
{
    validate(spec, catalog);
    ExecutionMatrix m;
    m.spec = spec;
    m.spec_digest = spec_digest(spec);
    PhaseDurations phases{spec.repetition.warmup, spec.repetition.attack, spec.repetition.cooldown};
    m.cells.reserve(spec.services.size() * spec.attacks.size() * spec.levels.size() *
                    static_cast<std::size_t>(spec.repetition.repetitions));
    for (const auto& service : spec.services) {
        for (const auto& attack_id : spec.attacks) {
            const auto& attack = catalog.attack(attack_id);
            for (const auto& level : spec.levels) {
                auto params = cell_params(spec, attack, level);
                for (int rep = 1; rep <= spec.repetition.repetitions; ++rep) {
                    m.cells.push_back(MatrixCell{make_cell_id(service, attack_id, level.label, rep), service,
                                                 attack_id, level, rep, params, phases});
                }
            }
        }
    }
    return m;
}

PlanReport plan_summary(const ExecutionMatrix& matrix)
{
    PlanReport r;
    r.cells = matrix.cells.size();
    Duration total{};
    std::string table;
    if (!matrix.cells.empty()) {
        table = "#    cell                                      rate        warmup  attack  cooldown\n";
    }
    for (std::size_t i = 0; i < matrix.cells.size(); ++i) {
        const auto& c = matrix.cells[i];
        total += c.phases.total();
        char line[256];
        std::snprintf(line, sizeof line, "%-4zu %-41s %-11s %-7s %-7s %s\n", i + 1, c.cell_id.c_str(),
                      c.level.rate_text().c_str(), format_duration(c.phases.warmup).c_str(),
                      format_duration(c.phases.attack).c_str(), format_duration(c.phases.cooldown).c_str());
        table += line;
    }
    r.total_seconds = to_seconds(total);
    r.table = std::move(table);
    return r;
}

// ---------------------------------------------------------------------------
// experiment files

namespace {

class ExperimentReader {
public:
    explicit ExperimentReader(std::filesystem::path file) : file_(std::move(file)) {}

    [[noreturn]] void fail(const YAML::Node& node, const std::string& what) const
    {
        int line = node ? node.Mark().line + 1 : 0;
        throw PlanError(PlanError::Kind::invalid_spec, file_.string() + ":" + std::to_string(line) + ": " + what);
    }

    void keys(const YAML::Node& node, std::initializer_list<const char*> allowed, const std::string& where) const
    {
        if (!node.IsMap()) {
            fail(node, where + " must be a mapping");
        }
        for (const auto& kv : node) {
            auto k = kv.first.Scalar();
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
                fail(kv.first, "unknown key '" + (where.empty() ? k : where + "." + k) + "'");
            }
        }
    }

    std::string scalar(const YAML::Node& node, const std::string& what) const
    {
        if (!node.IsScalar()) {
            fail(node, what + " must be a scalar");
        }
        return node.Scalar();
    }

    std::vector<std::string> list(const YAML::Node& node, const std::string& what) const
    {
        std::vector<std::string> out;
        if (node.IsScalar()) {
            out.push_back(node.Scalar());
            return out;
        }
        if (!node.IsSequence()) {
            fail(node, what + " must be a list");
        }
        for (const auto& n : node) {
            out.push_back(scalar(n, what));
        }
        return out;
    }

    Duration duration(const YAML::Node& node, const std::string& what) const
    {
        try {
            return parse_duration(scalar(node, what));
        } catch (const DurationParseError& e) {
            fail(node, e.what());
        }
    }

    long long integer(const YAML::Node& node, const std::string& what) const
    {
        auto v = parse_int(scalar(node, what));
        if (!v) {
            fail(node, what + " must be an integer");
        }
        return *v;
    }

    bool boolean(const YAML::Node& node, const std::string& what) const
    {
        auto s = scalar(node, what);
        if (s == "true") {
            return true;
        }
        if (s == "false") {
            return false;
        }
        fail(node, what + " must be true or false");
    }

private:
    std::filesystem::path file_;
};

} // namespace

ExperimentFile load_experiment(const std::filesystem::path& path)
{
    YAML::Node doc;
    try {
        doc = YAML::Load(read_file(path.string()));
    } catch (const YAML::Exception& e) {
        throw PlanError(PlanError::Kind::invalid_spec,
                        path.string() + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    } catch (const Error& e) {
        throw PlanError(PlanError::Kind::invalid_spec, e.what());
    }
    ExperimentReader r(path);
    r.keys(doc, {"catalog", "services", "attacks", "levels", "params", "baseline", "instrumentation", "repetition"},
           "");
    ExperimentFile out;
    auto& spec = out.spec;
    if (doc["catalog"]) {
        std::filesystem::path c = r.scalar(doc["catalog"], "catalog");
        out.catalog = c.is_absolute() ? c : (path.parent_path() / c).lexically_normal();
    }
    if (doc["services"]) {
        spec.services = r.list(doc["services"], "services");
    }
    if (doc["attacks"]) {
        spec.attacks = r.list(doc["attacks"], "attacks");
    }
    if (const auto& levels = doc["levels"]) {
        spec.levels.clear();
        if (!levels.IsSequence()) {
            r.fail(levels, "levels must be a list");
        }
        for (const auto& l : levels) {
            if (l.IsScalar()) {
                spec.levels.push_back(level_by_label(l.Scalar()));
                continue;
            }
            r.keys(l, {"label", "rate"}, "levels[]");
            IntensityLevel level{r.scalar(l["label"], "levels[].label"), std::nullopt};
            auto rate = r.scalar(l["rate"], "levels[].rate");
            if (rate != "unlimited") {
                auto v = parse_real(rate);
                if (!v) {
                    r.fail(l["rate"], "rate must be a number or 'unlimited'");
                }
                level.rate_limit = *v;
            }
            spec.levels.push_back(level);
        }
    }
    if (const auto& params = doc["params"]) {
        if (!params.IsMap()) {
            r.fail(params, "params must map attack ids to parameter overrides");
        }
        for (const auto& kv : params) {
            auto attack = kv.first.Scalar();
            if (!kv.second.IsMap()) {
                r.fail(kv.second, "params." + attack + " must be a mapping");
            }
            for (const auto& p : kv.second) {
                spec.params[attack][p.first.Scalar()] = r.scalar(p.second, "params." + attack + "." + p.first.Scalar());
            }
        }
    }
    if (doc["baseline"] && !doc["baseline"].IsNull()) {
        spec.baseline = r.scalar(doc["baseline"], "baseline");
    }
    if (const auto& in = doc["instrumentation"]) {
        r.keys(in, {"capture", "filter", "iface", "snaplen", "extract_features", "probe", "resource_interval"},
               "instrumentation");
        auto& i = spec.instrumentation;
        if (in["capture"]) {
            i.capture = r.boolean(in["capture"], "instrumentation.capture");
        }
        if (in["filter"]) {
            i.capture_filter = in["filter"].IsNull() ? "" : r.scalar(in["filter"], "instrumentation.filter");
        }
        if (in["iface"]) {
            i.iface = r.scalar(in["iface"], "instrumentation.iface");
        }
        if (in["snaplen"]) {
            auto v = r.integer(in["snaplen"], "instrumentation.snaplen");
            if (v < 64 || v > 262144) {
                r.fail(in["snaplen"], "snaplen must be in [64, 262144]");
            }
            i.snaplen = static_cast<unsigned>(v);
        }
        if (in["extract_features"]) {
            i.extract_features = r.boolean(in["extract_features"], "instrumentation.extract_features");
        }
        if (in["resource_interval"]) {
            i.resource_interval = r.duration(in["resource_interval"], "instrumentation.resource_interval");
        }
        if (const auto& probe = in["probe"]) {
            r.keys(probe, {"interval", "timeout", "path", "max_in_flight"}, "instrumentation.probe");
            if (probe["interval"]) {
                i.probe.interval = r.duration(probe["interval"], "probe.interval");
            }
            if (probe["timeout"]) {
                i.probe.timeout = r.duration(probe["timeout"], "probe.timeout");
            }
            if (probe["path"]) {
                i.probe.path = r.scalar(probe["path"], "probe.path");
            }
            if (probe["max_in_flight"]) {
                i.probe.max_in_flight = static_cast<int>(r.integer(probe["max_in_flight"], "probe.max_in_flight"));
            }
        }
    }
    if (const auto& rep = doc["repetition"]) {
        r.keys(rep, {"repetitions", "warmup", "attack", "cooldown"}, "repetition");
        auto& rp = spec.repetition;
        if (rep["repetitions"]) {
            rp.repetitions = static_cast<int>(r.integer(rep["repetitions"], "repetition.repetitions"));
        }
        if (rep["warmup"]) {
            rp.warmup = r.duration(rep["warmup"], "repetition.warmup");
        }
        if (rep["attack"]) {
            rp.attack = r.duration(rep["attack"], "repetition.attack");
        }
        if (rep["cooldown"]) {
            rp.cooldown = r.duration(rep["cooldown"], "repetition.cooldown");
        }
    }
    return out;
}

} // namespace nsb::planner
