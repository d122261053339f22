#include <doctest.h>

#include <algorithm>

#include "nsb/catalog.hpp"
#include "support.hpp"

using namespace nsb;
using namespace nsb::catalog;
using nsb::test::TempDir;
using nsb::test::write_text;

namespace {

const std::string attack_yaml = R"(id: flood
description: test flood
image: nsb-http-flood
hook: entrypoint.sh
hook_args: ["--rate", "${rate}"]
params:
  - {name: rate, kind: integer, default: 100, min: 1, max: 100000}
  - {name: mode, kind: enum, default: syn, choices: [syn, conn]}
  - {name: hold, kind: duration, default: 1s, min: 0s, max: 10s}
  - {name: ratio, kind: real, default: 0.5, min: 0, max: 1}
services: [web]
mitre: {tactics: [TA0040], techniques: [T1499.002]}
notes: n
)";

const std::string service_yaml = R"(id: web
description: d
image: nsb-http-target
protocol: http
port: 8080
capacity_limit: 8
readiness: {protocol: http, path: /, timeout: 30s}
)";

const std::string benign_yaml = R"(id: bg
service: web
clients: 2
interarrival: 500ms
duration: 20s
)";

struct Files {
    std::string attack = attack_yaml;
    std::string service = service_yaml;
    std::string benign = benign_yaml;
};

std::filesystem::path write_catalog(const std::filesystem::path& root, const Files& f)
{
    write_text(root / "attacks" / "flood.yaml", f.attack);
    write_text(root / "services" / "web.yaml", f.service);
    write_text(root / "benign" / "bg.yaml", f.benign);
    return root;
}

std::string replaced(std::string text, const std::string& from, const std::string& to)
{
    auto pos = text.find(from);
    REQUIRE_MESSAGE(pos != std::string::npos, "corruption anchor not found: " << from);
    return text.replace(pos, from.size(), to);
}

struct Corruption {
    char file;  // a, s, b
    std::string from;
    std::string to;
    std::string field;
};

// Every entry breaks exactly one field of an otherwise valid catalog.
const std::vector<Corruption> corruptions = {
    {'a', "id: flood", "id: Flood!", "id"},
    {'a', "description: test flood\n", "", "description"},
    {'a', "image: nsb-http-flood\n", "", "image"},
    {'a', "hook: entrypoint.sh\n", "", "hook"},
    {'a', "kind: integer", "kind: float", "params[0].kind"},
    {'a', "default: 100,", "default: 0,", "params[0].default"},
    {'a', "min: 1, max: 100000", "min: 500000, max: 100000", "params[0].min"},
    {'a', "name: rate,", "name: Rate Limit,", "params[0].name"},
    {'a', "choices: [syn, conn]", "choices: []", "params[1].choices"},
    {'a', "default: syn", "default: ack", "params[1].default"},
    {'a', "default: 1s", "default: 1 parsec", "params[2].default"},
    {'a', "default: 0.5", "default: half", "params[3].default"},
    {'a', "\"${rate}\"", "\"${speed}\"", "hook_args[1]"},
    {'a', "services: [web]", "services: [nope]", "services[0]"},
    {'a', "tactics: [TA0040]", "tactics: [TA40]", "mitre.tactics[0]"},
    {'a', "techniques: [T1499.002]", "techniques: [T1499.2]", "mitre.techniques[0]"},
    {'a', "notes: n", "colour: red", "colour"},
    {'s', "id: web", "id: W E B", "id"},
    {'s', "image: nsb-http-target\n", "", "image"},
    {'s', "port: 8080", "port: 70000", "port"},
    {'s', "port: 8080", "port: 0", "port"},
    {'s', "protocol: http\nport", "protocol: udp\nport", "protocol"},
    {'s', "capacity_limit: 8", "capacity_limit: 0", "capacity_limit"},
    {'s', "timeout: 30s", "timeout: 0s", "readiness.timeout"},
    {'b', "clients: 2", "clients: 0", "clients"},
    {'b', "interarrival: 500ms", "interarrival: 0ms", "interarrival"},
    {'b', "duration: 20s", "duration: -1s", "duration"},
    {'b', "service: web", "service: nope", "service"},
};

std::string fields_of(const ValidationError& e)
{
    std::string out;
    for (const auto& v : e.violations) {
        out += v.field + "; ";
    }
    return out;
}

} // namespace

TEST_CASE("minimal well-formed catalog loads")
{
    TempDir dir;
    write_text(dir / "attacks/http_flood.yaml", R"(id: http_flood
description: flood
image: nsb-http-flood
hook: entrypoint.sh
params:
  - {name: rate, kind: integer, default: 100, min: 1, max: 100000}
)");
    write_text(dir / "services/web.yaml", "id: web\nimage: nsb-http-target\nprotocol: http\nport: 8080\n");
    auto cat = load_catalog(dir.path());
    CHECK(cat.attacks.size() == 1);
    CHECK(cat.services.size() == 1);
    CHECK(cat.benign.empty());
    CHECK(cat.service("web").port == 8080);
    CHECK(cat.service("web").protocol == Protocol::http);
    CHECK(cat.attack("http_flood").parameter("rate") != nullptr);
    CHECK(cat.source_digest.size() == 64);
}

TEST_CASE("bundled catalog loads with its scenarios")
{
    auto cat = load_catalog(test::bundled_catalog());
    CHECK(cat.attacks.contains("http_flood"));
    CHECK(cat.attacks.contains("conn_flood"));
    CHECK(cat.services.contains("web"));
    CHECK(cat.service("web").capacity_limit == 8);
    CHECK(cat.benign.contains("benign_http"));
    CHECK(cat.benign_profile("benign_http").service_ref == "web");
}

TEST_CASE("dangling service reference is a validation error")
{
    TempDir dir;
    Files f;
    f.attack = replaced(f.attack, "services: [web]", "services: [nope]");
    write_catalog(dir.path(), f);
    try {
        load_catalog(dir.path());
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.mentions("services[0]"));
        CHECK(std::string(e.what()).find("dangling") != std::string::npos);
    }
}

TEST_CASE("duplicate attack id is a validation error")
{
    TempDir dir;
    write_catalog(dir.path(), Files{});
    write_text(dir / "attacks/flood_copy.yaml", attack_yaml);
    try {
        load_catalog(dir.path());
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(e.mentions("id"));
        CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
    }
}

TEST_CASE("every violation is reported, not just the first")
{
    TempDir dir;
    Files f;
    f.attack = replaced(f.attack, "tactics: [TA0040]", "tactics: [TA40]");
    f.service = replaced(f.service, "port: 8080", "port: 0");
    f.benign = replaced(f.benign, "clients: 2", "clients: 0");
    write_catalog(dir.path(), f);
    try {
        load_catalog(dir.path());
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.mentions("mitre.tactics[0]"));
        CHECK(e.mentions("port"));
        CHECK(e.mentions("clients"));
        CHECK(e.violations.size() == 3);
    }
}

TEST_CASE("any single-field corruption is reported against that field")
{
    {
        TempDir dir;
        write_catalog(dir.path(), Files{});
        REQUIRE_NOTHROW(load_catalog(dir.path()));
    }
    for (const auto& c : corruptions) {
        CAPTURE(c.from);
        CAPTURE(c.to);
        TempDir dir;
        Files f;
        std::string& target = c.file == 'a' ? f.attack : c.file == 's' ? f.service : f.benign;
        target = replaced(target, c.from, c.to);
        write_catalog(dir.path(), f);
        try {
            load_catalog(dir.path());
            FAIL("corruption was accepted");
        } catch (const ValidationError& e) {
            CHECK_MESSAGE(e.mentions(c.field), "expected " << c.field << ", got " << fields_of(e));
        }
    }
}

TEST_CASE("malformed YAML reports file and line")
{
    TempDir dir;
    write_catalog(dir.path(), Files{});
    write_text(dir / "services/web.yaml", "id: web\nimage: x\nport: [8080\nprotocol: http\n");
    try {
        load_catalog(dir.path());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.file.filename() == "web.yaml");
        CHECK(e.line >= 3);
    }
}

TEST_CASE("missing or empty root is MissingFile")
{
    TempDir dir;
    CHECK_THROWS_AS(load_catalog(dir / "absent"), MissingFile);
    CHECK_THROWS_AS(load_catalog(dir.path()), MissingFile);
}

TEST_CASE("loading identical bytes is deterministic")
{
    TempDir a, b;
    write_catalog(a.path(), Files{});
    write_catalog(b.path(), Files{});
    auto ca = load_catalog(a.path());
    auto cb = load_catalog(b.path());
    auto again = load_catalog(a.path());
    CHECK(ca.source_digest == cb.source_digest);
    CHECK(ca.source_digest == again.source_digest);
    const auto& x = ca.attack("flood");
    const auto& y = cb.attack("flood");
    CHECK(x.hook_args == y.hook_args);
    CHECK(x.mitre_techniques == y.mitre_techniques);
    REQUIRE(x.parameters.size() == y.parameters.size());
    for (std::size_t i = 0; i < x.parameters.size(); ++i) {
        CHECK(x.parameters[i].name == y.parameters[i].name);
        CHECK(x.parameters[i].default_value == y.parameters[i].default_value);
        CHECK(x.parameters[i].min == y.parameters[i].min);
        CHECK(x.parameters[i].max == y.parameters[i].max);
        CHECK(x.parameters[i].choices == y.parameters[i].choices);
    }

    write_text(b / "benign/bg.yaml", benign_yaml + "description: changed\n");
    CHECK(load_catalog(b.path()).source_digest != ca.source_digest);
}

TEST_CASE("resolve_parameters")
{
    TempDir dir;
    write_catalog(dir.path(), Files{});
    auto cat = load_catalog(dir.path());
    const auto& spec = cat.attack("flood");

    SUBCASE("defaults only")
    {
        auto p = resolve_parameters(spec, {});
        CHECK(std::get<std::int64_t>(p.at("rate")) == 100);
        CHECK(std::get<std::string>(p.at("mode")) == "syn");
        CHECK(std::get<Duration>(p.at("hold")) == std::chrono::seconds(1));
        CHECK(std::get<double>(p.at("ratio")) == 0.5);
    }
    SUBCASE("bound check")
    {
        try {
            resolve_parameters(spec, {{"rate", std::int64_t{0}}});
            FAIL("expected OutOfBounds");
        } catch (const ParameterError& e) {
            CHECK(e.kind == ParameterError::Kind::out_of_bounds);
            CHECK(e.name == "rate");
        }
    }
    SUBCASE("override applied, others defaulted")
    {
        auto p = resolve_parameters(spec, {{"mode", std::string("conn")}});
        CHECK(std::get<std::string>(p.at("mode")) == "conn");
        CHECK(std::get<std::int64_t>(p.at("rate")) == 100);
    }
    SUBCASE("unknown parameter")
    {
        try {
            resolve_parameters(spec, {{"speed", std::int64_t{1}}});
            FAIL("expected UnknownParameter");
        } catch (const ParameterError& e) {
            CHECK(e.kind == ParameterError::Kind::unknown_parameter);
        }
    }
    SUBCASE("type mismatch")
    {
        try {
            resolve_parameters(spec, {{"rate", std::string("fast")}});
            FAIL("expected TypeMismatch");
        } catch (const ParameterError& e) {
            CHECK(e.kind == ParameterError::Kind::type_mismatch);
        }
        try {
            resolve_parameters(spec, {{"rate", Unlimited{}}});
            FAIL("unlimited must be opt-in");
        } catch (const ParameterError& e) {
            CHECK(e.kind == ParameterError::Kind::type_mismatch);
        }
        CHECK_THROWS_AS(parse_param_value(*spec.parameter("rate"), "12x"), ParameterError);
    }
    SUBCASE("enum choice outside the list")
    {
        CHECK_THROWS_AS(resolve_parameters(spec, {{"mode", std::string("ack")}}), ParameterError);
    }
}

TEST_CASE("resolve with no overrides equals the declared defaults")
{
    auto cat = load_catalog(test::bundled_catalog());
    for (const auto& [id, spec] : cat.attacks) {
        CAPTURE(id);
        auto resolved = resolve_parameters(spec, {});
        ParamSet defaults;
        for (const auto& p : spec.parameters) {
            defaults[p.name] = p.default_value;
        }
        CHECK(resolved == defaults);
    }
}

TEST_CASE("opt-in unlimited and textual overrides")
{
    auto cat = load_catalog(test::bundled_catalog());
    const auto& flood = cat.attack("http_flood");
    const auto& rate = *flood.parameter("rate");
    CHECK(rate.allow_unlimited);
    CHECK(parse_param_value(rate, "unlimited") == ParamValue{Unlimited{}});
    CHECK(parse_param_value(rate, "250") == ParamValue{std::int64_t{250}});
    auto p = resolve_parameters(flood, {{"rate", Unlimited{}}});
    CHECK(std::holds_alternative<Unlimited>(p.at("rate")));
}

TEST_CASE("render uses plain decimal text")
{
    CHECK(render(ParamValue{std::int64_t{100}}) == "100");
    CHECK(render(ParamValue{0.5}) == "0.5");
    CHECK(render(ParamValue{100.0}) == "100");
    CHECK(render(ParamValue{Duration{std::chrono::seconds(10)}}) == "10");
    CHECK(render(ParamValue{Duration{std::chrono::milliseconds(1500)}}) == "1.5");
    CHECK(render(ParamValue{std::string("/x")}) == "/x");
    CHECK(render(ParamValue{Unlimited{}}) == "unlimited");
}
