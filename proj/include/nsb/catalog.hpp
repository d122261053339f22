#pragma once

// Declarative scenario catalog: attacks, target services and benign profiles
// loaded from one YAML file per scenario.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nsb/common/duration.hpp"
#include "nsb/common/error.hpp"

namespace nsb::catalog {

enum class ParamKind { integer, real, string, duration, enumeration };

std::string_view to_string(ParamKind kind);

// Marker value meaning "no rate limit"; only accepted by parameters that opt in.
struct Unlimited {
    bool operator==(const Unlimited&) const = default;
};

using ParamValue = std::variant<std::int64_t, double, std::string, Duration, Unlimited>;
using ParamSet = std::map<std::string, ParamValue>;

/// Decimal rendering used for hook environment variables and manifests.
/// Durations render in seconds, Unlimited as `unlimited`.
std::string render(const ParamValue& value);

struct ParameterSpec {
    std::string name;
    ParamKind kind = ParamKind::string;
    ParamValue default_value;
    std::optional<double> min;
    std::optional<double> max;
    std::vector<std::string> choices;
    bool allow_unlimited = false;
};

struct AttackSpec {
    std::string id;
    std::string description;
    std::string image;
    std::string hook;
    std::vector<std::string> hook_args;  // may reference parameters as ${name}
    std::vector<ParameterSpec> parameters;
    std::vector<std::string> services;   // compatible targets; empty = any
    std::vector<std::string> mitre_tactics;
    std::vector<std::string> mitre_techniques;
    std::string notes;
    std::filesystem::path source;

    const ParameterSpec* parameter(std::string_view name) const;
};

enum class Protocol { http, tcp };

std::string_view to_string(Protocol p);

struct Readiness {
    Protocol protocol = Protocol::tcp;
    std::string path = "/";
    Duration timeout = std::chrono::seconds(30);
};

struct ServiceSpec {
    std::string id;
    std::string image;
    Protocol protocol = Protocol::http;
    std::uint16_t port = 0;
    Readiness readiness;
    std::optional<int> capacity_limit;
    std::vector<std::string> args;
    std::string description;
    std::filesystem::path source;
};

struct BenignProfile {
    std::string id;
    std::string image = "nsb-benign-client";
    std::string service_ref;
    int client_count = 1;
    Duration interarrival{};
    Duration duration{};
    std::string description;
    std::filesystem::path source;
};

struct Catalog {
    std::map<std::string, AttackSpec> attacks;
    std::map<std::string, ServiceSpec> services;
    std::map<std::string, BenignProfile> benign;
    std::string source_digest;
    std::filesystem::path root;

    const AttackSpec& attack(const std::string& id) const;
    const ServiceSpec& service(const std::string& id) const;
    const BenignProfile& benign_profile(const std::string& id) const;
};

class CatalogError : public Error {
public:
    using Error::Error;
};

class MissingFile : public CatalogError {
public:
    explicit MissingFile(const std::filesystem::path& p)
        : CatalogError("missing catalog input: " + p.string()), path(p) {}
    std::filesystem::path path;
};

class ParseError : public CatalogError {
public:
    ParseError(std::filesystem::path f, int l, const std::string& what)
        : CatalogError(f.string() + ":" + std::to_string(l) + ": " + what), file(std::move(f)), line(l) {}
    std::filesystem::path file;
    int line;  // 1-based
};

struct Violation {
    std::filesystem::path file;
    std::string id;
    std::string field;
    std::string reason;

    std::string describe() const;
};

// Carries every violation found, not just the first.
class ValidationError : public CatalogError {
public:
    explicit ValidationError(std::vector<Violation> v);
    std::vector<Violation> violations;

    bool mentions(std::string_view field) const;
};

class ParameterError : public CatalogError {
public:
    enum class Kind { unknown_parameter, out_of_bounds, type_mismatch };
    ParameterError(Kind k, std::string param, const std::string& what)
        : CatalogError(what), kind(k), name(std::move(param)) {}
    Kind kind;
    std::string name;
};

/// Loads `<root>/attacks`, `<root>/services` and `<root>/benign` (*.yaml, *.yml).
Catalog load_catalog(const std::filesystem::path& root);

/// Overrides where given, declared defaults elsewhere. Every value is checked
/// against its kind, bounds and choices.
ParamSet resolve_parameters(const AttackSpec& spec, const ParamSet& overrides);

/// Parses textual overrides (CLI, experiment files) into the parameter's kind.
ParamValue parse_param_value(const ParameterSpec& spec, std::string_view text);

/// SHA-256 over the sorted (relative path, bytes) sequence.
std::string digest_files(const std::filesystem::path& root, const std::vector<std::filesystem::path>& files);

} // namespace nsb::catalog
