#include "nsb/catalog.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <yaml-cpp/yaml.h>

#include "check.hpp"
#include "nsb/common/digest.hpp"
#include "nsb/common/text.hpp"

namespace nsb::catalog {

namespace fs = std::filesystem;

namespace {

const std::regex id_pattern("^[a-z0-9_-]+$");
const std::regex tactic_pattern("^TA[0-9]{4}$");
const std::regex technique_pattern("^T[0-9]{4}(\\.[0-9]{3})?$");
const std::regex placeholder_pattern("\\$\\{([^}]*)\\}");

// Collects violations for one file while walking its YAML tree.
class FileReader {
public:
    FileReader(fs::path file, std::vector<Violation>& sink) : file_(std::move(file)), sink_(sink) {}

    void fail(const std::string& field, const std::string& reason)
    {
        sink_.push_back(Violation{file_, id_, field, reason});
    }

    void set_id(std::string id) { id_ = std::move(id); }

    void check_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& prefix)
    {
        for (const auto& kv : node) {
            auto key = kv.first.Scalar();
            if (!allowed.contains(key)) {
                fail(prefix + key, "unknown key");
            }
        }
    }

    std::optional<std::string> scalar(const YAML::Node& node, const std::string& field, bool required)
    {
        if (!node || node.IsNull()) {
            if (required) {
                fail(field, "required key missing");
            }
            return std::nullopt;
        }
        if (!node.IsScalar()) {
            fail(field, "expected a scalar value");
            return std::nullopt;
        }
        return node.Scalar();
    }

    std::optional<std::string> identifier(const YAML::Node& node, const std::string& field)
    {
        auto s = scalar(node, field, true);
        if (s && !std::regex_match(*s, id_pattern)) {
            fail(field, "'" + *s + "' does not match [a-z0-9_-]+");
            return std::nullopt;
        }
        return s;
    }

    std::optional<long long> integer(const YAML::Node& node, const std::string& field, bool required,
                                     long long lo, long long hi)
    {
        auto s = scalar(node, field, required);
        if (!s) {
            return std::nullopt;
        }
        auto v = parse_int(*s);
        if (!v) {
            fail(field, "expected an integer, got '" + *s + "'");
            return std::nullopt;
        }
        if (*v < lo || *v > hi) {
            fail(field, std::to_string(*v) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            return std::nullopt;
        }
        return v;
    }

    std::optional<Duration> positive_duration(const YAML::Node& node, const std::string& field, bool required)
    {
        auto s = scalar(node, field, required);
        if (!s) {
            return std::nullopt;
        }
        try {
            auto d = parse_duration(*s);
            if (d.count() <= 0) {
                fail(field, "must be > 0");
                return std::nullopt;
            }
            return d;
        } catch (const DurationParseError& e) {
            fail(field, e.what());
            return std::nullopt;
        }
    }

    std::vector<std::string> string_list(const YAML::Node& node, const std::string& field)
    {
        std::vector<std::string> out;
        if (!node || node.IsNull()) {
            return out;
        }
        if (!node.IsSequence()) {
            fail(field, "expected a list");
            return out;
        }
        for (std::size_t i = 0; i < node.size(); ++i) {
            if (auto s = scalar(node[i], field + "[" + std::to_string(i) + "]", true)) {
                out.push_back(*s);
            }
        }
        return out;
    }

    const fs::path& file() const { return file_; }

private:
    fs::path file_;
    std::string id_;
    std::vector<Violation>& sink_;
};

std::optional<ParamKind> kind_from(std::string_view s)
{
    for (auto k : {ParamKind::integer, ParamKind::real, ParamKind::string, ParamKind::duration,
                   ParamKind::enumeration}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    return std::nullopt;
}

std::optional<Protocol> protocol_from(std::string_view s)
{
    if (s == "http") {
        return Protocol::http;
    }
    if (s == "tcp") {
        return Protocol::tcp;
    }
    return std::nullopt;
}

std::optional<ParameterSpec> read_parameter(FileReader& r, const YAML::Node& node, const std::string& field)
{
    if (!node.IsMap()) {
        r.fail(field, "expected a mapping");
        return std::nullopt;
    }
    r.check_keys(node, {"name", "kind", "default", "min", "max", "choices", "unlimited", "description"},
                 field + ".");
    ParameterSpec p;
    bool ok = true;
    if (auto name = r.identifier(node["name"], field + ".name")) {
        p.name = *name;
    } else {
        ok = false;
    }
    if (auto kind = r.scalar(node["kind"], field + ".kind", true)) {
        if (auto k = kind_from(*kind)) {
            p.kind = *k;
        } else {
            r.fail(field + ".kind", "unknown kind '" + *kind + "'");
            ok = false;
        }
    } else {
        ok = false;
    }
    auto bound = [&](const char* key) -> std::optional<double> {
        auto s = r.scalar(node[key], field + "." + key, false);
        if (!s) {
            return std::nullopt;
        }
        if (p.kind == ParamKind::duration) {
            try {
                return to_seconds(parse_duration(*s));
            } catch (const DurationParseError&) {
            }
        } else if (auto v = parse_real(*s)) {
            return v;
        }
        r.fail(field + "." + key, "expected a number, got '" + *s + "'");
        ok = false;
        return std::nullopt;
    };
    p.min = bound("min");
    p.max = bound("max");
    bool numeric = p.kind == ParamKind::integer || p.kind == ParamKind::real || p.kind == ParamKind::duration;
    if ((p.min || p.max) && !numeric) {
        r.fail(field + (p.min ? ".min" : ".max"), "bounds only apply to numeric kinds");
        ok = false;
    }
    if (p.min && p.max && *p.min > *p.max) {
        r.fail(field + ".min", "min exceeds max");
        ok = false;
    }
    p.choices = r.string_list(node["choices"], field + ".choices");
    if (p.kind == ParamKind::enumeration && p.choices.empty()) {
        r.fail(field + ".choices", "enum parameters need a non-empty choices list");
        ok = false;
    }
    if (p.kind != ParamKind::enumeration && !p.choices.empty()) {
        r.fail(field + ".choices", "choices only apply to enum parameters");
        ok = false;
    }
    if (auto u = r.scalar(node["unlimited"], field + ".unlimited", false)) {
        if (*u == "true") {
            p.allow_unlimited = true;
        } else if (*u != "false") {
            r.fail(field + ".unlimited", "expected true or false");
            ok = false;
        }
    }
    auto def = r.scalar(node["default"], field + ".default", true);
    if (!ok || !def) {
        return std::nullopt;
    }
    try {
        p.default_value = parse_param_value(p, *def);
    } catch (const ParameterError& e) {
        r.fail(field + ".default", e.what());
        return std::nullopt;
    }
    if (auto failure = check_value(p, p.default_value)) {
        r.fail(field + ".default", failure->reason);
        return std::nullopt;
    }
    return p;
}

std::optional<AttackSpec> read_attack(FileReader& r, const YAML::Node& doc)
{
    r.check_keys(doc, {"id", "description", "image", "hook", "hook_args", "params", "services", "mitre", "notes"},
                 "");
    AttackSpec a;
    a.source = r.file();
    auto id = r.identifier(doc["id"], "id");
    if (id) {
        a.id = *id;
        r.set_id(*id);
    }
    a.description = r.scalar(doc["description"], "description", true).value_or("");
    a.image = r.scalar(doc["image"], "image", true).value_or("");
    a.hook = r.scalar(doc["hook"], "hook", true).value_or("");
    a.hook_args = r.string_list(doc["hook_args"], "hook_args");
    a.services = r.string_list(doc["services"], "services");
    a.notes = r.scalar(doc["notes"], "notes", false).value_or("");

    const auto& params = doc["params"];
    if (!params) {
        r.fail("params", "required key missing");
    } else if (!params.IsNull() && !params.IsSequence()) {
        r.fail("params", "expected a list");
    } else if (params.IsSequence()) {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::string field = "params[" + std::to_string(i) + "]";
            if (auto p = read_parameter(r, params[i], field)) {
                if (!seen.insert(p->name).second) {
                    r.fail(field + ".name", "duplicate parameter '" + p->name + "'");
                    continue;
                }
                a.parameters.push_back(std::move(*p));
            }
        }
    }
    for (std::size_t i = 0; i < a.hook_args.size(); ++i) {
        const auto& arg = a.hook_args[i];
        for (std::sregex_iterator it(arg.begin(), arg.end(), placeholder_pattern), end; it != end; ++it) {
            auto name = (*it)[1].str();
            bool declared = std::any_of(params.begin(), params.end(), [&](const YAML::Node& n) {
                return n.IsMap() && n["name"] && n["name"].IsScalar() && n["name"].Scalar() == name;
            });
            if (!declared) {
                r.fail("hook_args[" + std::to_string(i) + "]", "references undeclared parameter '" + name + "'");
            }
        }
    }
    const auto& mitre = doc["mitre"];
    if (mitre && !mitre.IsNull()) {
        if (!mitre.IsMap()) {
            r.fail("mitre", "expected a mapping");
        } else {
            r.check_keys(mitre, {"tactics", "techniques"}, "mitre.");
            a.mitre_tactics = r.string_list(mitre["tactics"], "mitre.tactics");
            a.mitre_techniques = r.string_list(mitre["techniques"], "mitre.techniques");
            for (std::size_t i = 0; i < a.mitre_tactics.size(); ++i) {
                if (!std::regex_match(a.mitre_tactics[i], tactic_pattern)) {
                    r.fail("mitre.tactics[" + std::to_string(i) + "]",
                           "'" + a.mitre_tactics[i] + "' does not match TA####");
                }
            }
            for (std::size_t i = 0; i < a.mitre_techniques.size(); ++i) {
                if (!std::regex_match(a.mitre_techniques[i], technique_pattern)) {
                    r.fail("mitre.techniques[" + std::to_string(i) + "]",
                           "'" + a.mitre_techniques[i] + "' does not match T#### or T####.###");
                }
            }
        }
    }
    if (!id) {
        return std::nullopt;
    }
    return a;
}

std::optional<ServiceSpec> read_service(FileReader& r, const YAML::Node& doc)
{
    r.check_keys(doc, {"id", "description", "image", "protocol", "port", "readiness", "capacity_limit", "args"}, "");
    ServiceSpec s;
    s.source = r.file();
    auto id = r.identifier(doc["id"], "id");
    if (id) {
        s.id = *id;
        r.set_id(*id);
    }
    s.description = r.scalar(doc["description"], "description", false).value_or("");
    s.image = r.scalar(doc["image"], "image", true).value_or("");
    if (auto p = r.scalar(doc["protocol"], "protocol", true)) {
        if (auto proto = protocol_from(*p)) {
            s.protocol = *proto;
        } else {
            r.fail("protocol", "unknown protocol '" + *p + "' (expected http or tcp)");
        }
    }
    if (auto port = r.integer(doc["port"], "port", true, 1, 65535)) {
        s.port = static_cast<std::uint16_t>(*port);
    }
    if (auto cap = r.integer(doc["capacity_limit"], "capacity_limit", false, 1, 1 << 20)) {
        s.capacity_limit = static_cast<int>(*cap);
    }
    s.args = r.string_list(doc["args"], "args");
    s.readiness.protocol = s.protocol;
    const auto& ready = doc["readiness"];
    if (ready && !ready.IsNull()) {
        if (!ready.IsMap()) {
            r.fail("readiness", "expected a mapping");
        } else {
            r.check_keys(ready, {"protocol", "path", "timeout"}, "readiness.");
            if (auto p = r.scalar(ready["protocol"], "readiness.protocol", false)) {
                if (auto proto = protocol_from(*p)) {
                    s.readiness.protocol = *proto;
                } else {
                    r.fail("readiness.protocol", "unknown protocol '" + *p + "'");
                }
            }
            s.readiness.path = r.scalar(ready["path"], "readiness.path", false).value_or("/");
            if (auto t = r.positive_duration(ready["timeout"], "readiness.timeout", false)) {
                s.readiness.timeout = *t;
            }
        }
    }
    if (!id) {
        return std::nullopt;
    }
    return s;
}

std::optional<BenignProfile> read_benign(FileReader& r, const YAML::Node& doc)
{
    r.check_keys(doc, {"id", "description", "image", "service", "clients", "interarrival", "duration"}, "");
    BenignProfile b;
    b.source = r.file();
    auto id = r.identifier(doc["id"], "id");
    if (id) {
        b.id = *id;
        r.set_id(*id);
    }
    b.description = r.scalar(doc["description"], "description", false).value_or("");
    b.image = r.scalar(doc["image"], "image", false).value_or("nsb-benign-client");
    b.service_ref = r.scalar(doc["service"], "service", true).value_or("");
    if (auto c = r.integer(doc["clients"], "clients", true, 1, 100000)) {
        b.client_count = static_cast<int>(*c);
    }
    if (auto d = r.positive_duration(doc["interarrival"], "interarrival", true)) {
        b.interarrival = *d;
    }
    if (auto d = r.positive_duration(doc["duration"], "duration", true)) {
        b.duration = *d;
    }
    if (!id) {
        return std::nullopt;
    }
    return b;
}

std::vector<fs::path> spec_files(const fs::path& dir)
{
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) {
        return out;
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".yaml" || ext == ".yml")) {
            out.push_back(entry.path());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

YAML::Node parse_file(const fs::path& file, const std::string& content)
{
    YAML::Node doc;
    try {
        doc = YAML::Load(content);
    } catch (const YAML::Exception& e) {
        throw ParseError(file, e.mark.line + 1, e.msg);
    }
    if (!doc || doc.IsNull()) {
        throw ParseError(file, 1, "empty document");
    }
    if (!doc.IsMap()) {
        throw ParseError(file, doc.Mark().line + 1, "top level must be a mapping");
    }
    return doc;
}

} // namespace

std::string Violation::describe() const
{
    std::string out = file.string();
    if (!id.empty()) {
        out += " [" + id + "]";
    }
    return out + " " + field + ": " + reason;
}

static std::string join_violations(const std::vector<Violation>& v)
{
    std::string out = std::to_string(v.size()) + " validation error(s)";
    for (const auto& x : v) {
        out += "\n  " + x.describe();
    }
    return out;
}

ValidationError::ValidationError(std::vector<Violation> v) : CatalogError(join_violations(v)), violations(std::move(v))
{
}

bool ValidationError::mentions(std::string_view field) const
{
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& x) { return x.field == field; });
}

std::string_view to_string(Protocol p)
{
    return p == Protocol::http ? "http" : "tcp";
}

const AttackSpec& Catalog::attack(const std::string& id) const
{
    auto it = attacks.find(id);
    if (it == attacks.end()) {
        throw CatalogError("unknown attack '" + id + "'");
    }
    return it->second;
}

const ServiceSpec& Catalog::service(const std::string& id) const
{
    auto it = services.find(id);
    if (it == services.end()) {
        throw CatalogError("unknown service '" + id + "'");
    }
    return it->second;
}

const BenignProfile& Catalog::benign_profile(const std::string& id) const
{
    auto it = benign.find(id);
    if (it == benign.end()) {
        throw CatalogError("unknown benign profile '" + id + "'");
    }
    return it->second;
}

std::string digest_files(const fs::path& root, const std::vector<fs::path>& files)
{
    std::vector<std::pair<std::string, fs::path>> entries;
    for (const auto& f : files) {
        entries.emplace_back(fs::relative(f, root).generic_string(), f);
    }
    std::sort(entries.begin(), entries.end());
    Sha256 h;
    for (const auto& [rel, path] : entries) {
        auto bytes = read_file(path.string());
        h.update(rel);
        h.update(std::string_view("\0", 1));
        h.update(std::to_string(bytes.size()));
        h.update(std::string_view("\0", 1));
        h.update(bytes);
    }
    return h.hex_digest();
}

Catalog load_catalog(const fs::path& root)
{
    if (!fs::is_directory(root)) {
        throw MissingFile(root);
    }
    auto attack_files = spec_files(root / "attacks");
    auto service_files = spec_files(root / "services");
    auto benign_files = spec_files(root / "benign");
    std::vector<fs::path> all;
    all.insert(all.end(), attack_files.begin(), attack_files.end());
    all.insert(all.end(), service_files.begin(), service_files.end());
    all.insert(all.end(), benign_files.begin(), benign_files.end());
    if (all.empty()) {
        throw MissingFile(root / "attacks");
    }

    Catalog cat;
    cat.root = root;
    std::vector<Violation> violations;
    std::map<fs::path, std::string> contents;
    for (const auto& f : all) {
        contents[f] = read_file(f.string());
    }

    auto load_group = [&](const std::vector<fs::path>& files, auto read, auto& target, const char* what) {
        for (const auto& f : files) {
            auto doc = parse_file(f, contents[f]);
            FileReader r(f, violations);
            auto spec = read(r, doc);
            if (!spec) {
                continue;
            }
            auto id = spec->id;
            if (!target.emplace(id, std::move(*spec)).second) {
                r.fail("id", std::string("duplicate ") + what + " id '" + id + "'");
            }
        }
    };
    load_group(attack_files, read_attack, cat.attacks, "attack");
    load_group(service_files, read_service, cat.services, "service");
    load_group(benign_files, read_benign, cat.benign, "benign");

    for (const auto& [id, a] : cat.attacks) {
        for (std::size_t i = 0; i < a.services.size(); ++i) {
            if (!cat.services.contains(a.services[i])) {
                violations.push_back(Violation{a.source, id, "services[" + std::to_string(i) + "]",
                                               "dangling reference to service '" + a.services[i] + "'"});
            }
        }
    }
    for (const auto& [id, b] : cat.benign) {
        if (!b.service_ref.empty() && !cat.services.contains(b.service_ref)) {
            violations.push_back(
                Violation{b.source, id, "service", "dangling reference to service '" + b.service_ref + "'"});
        }
    }
    if (!violations.empty()) {
        throw ValidationError(std::move(violations));
    }
    cat.source_digest = digest_files(root, all);
    return cat;
}

} // namespace nsb::catalog
