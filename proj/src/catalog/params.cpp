#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cmath>

#include "nsb/catalog.hpp"
#include "nsb/common/text.hpp"
#include "check.hpp"

namespace nsb::catalog {

std::string_view to_string(ParamKind kind)
{
    switch (kind) {
    case ParamKind::integer:
        return "integer";
    case ParamKind::real:
        return "real";
    case ParamKind::string:
        return "string";
    case ParamKind::duration:
        return "duration";
    case ParamKind::enumeration:
        return "enum";
    }
    return "string";
}

std::string render(const ParamValue& value)
{
    struct Visitor {
        std::string operator()(std::int64_t v) const { return std::to_string(v); }
        std::string operator()(double v) const
        {
            // shortest round-trip form, always in plain decimal notation
            char buf[400];
            auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
            return std::string(buf, r.ptr);
        }
        std::string operator()(const std::string& v) const { return v; }
        std::string operator()(Duration d) const
        {
            auto us = d.count();
            if (us % 1'000'000 == 0) {
                return std::to_string(us / 1'000'000);
            }
            return (*this)(to_seconds(d));
        }
        std::string operator()(Unlimited) const { return "unlimited"; }
    };
    return std::visit(Visitor{}, value);
}

std::optional<CheckFailure> check_value(const ParameterSpec& spec, const ParamValue& value)
{
    using K = ParameterError::Kind;
    auto mismatch = [&](const char* expected) {
        return CheckFailure{K::type_mismatch, std::string("expected ") + expected + " value"};
    };
    if (std::holds_alternative<Unlimited>(value)) {
        if (!spec.allow_unlimited) {
            return CheckFailure{K::type_mismatch, "parameter does not accept 'unlimited'"};
        }
        return std::nullopt;
    }
    std::optional<double> numeric;
    switch (spec.kind) {
    case ParamKind::integer:
        if (!std::holds_alternative<std::int64_t>(value)) {
            return mismatch("integer");
        }
        numeric = static_cast<double>(std::get<std::int64_t>(value));
        break;
    case ParamKind::real:
        if (std::holds_alternative<std::int64_t>(value)) {
            numeric = static_cast<double>(std::get<std::int64_t>(value));
        } else if (std::holds_alternative<double>(value)) {
            numeric = std::get<double>(value);
        } else {
            return mismatch("real");
        }
        break;
    case ParamKind::duration:
        if (!std::holds_alternative<Duration>(value)) {
            return mismatch("duration");
        }
        numeric = to_seconds(std::get<Duration>(value));
        break;
    case ParamKind::string:
        if (!std::holds_alternative<std::string>(value)) {
            return mismatch("string");
        }
        break;
    case ParamKind::enumeration: {
        if (!std::holds_alternative<std::string>(value)) {
            return mismatch("enum");
        }
        const auto& s = std::get<std::string>(value);
        if (std::find(spec.choices.begin(), spec.choices.end(), s) == spec.choices.end()) {
            std::string allowed;
            for (const auto& c : spec.choices) {
                allowed += (allowed.empty() ? "" : "|") + c;
            }
            return CheckFailure{K::out_of_bounds, "'" + s + "' not in {" + allowed + "}"};
        }
        break;
    }
    }
    if (numeric) {
        if ((spec.min && *numeric < *spec.min) || (spec.max && *numeric > *spec.max)) {
            std::string bounds = "[" + (spec.min ? render(*spec.min) : std::string("-inf")) + ", " +
                                 (spec.max ? render(*spec.max) : std::string("inf")) + "]";
            return CheckFailure{K::out_of_bounds, render(value) + " outside " + bounds};
        }
    }
    return std::nullopt;
}

ParamValue parse_param_value(const ParameterSpec& spec, std::string_view text)
{
    auto fail = [&](const std::string& why) {
        return ParameterError(ParameterError::Kind::type_mismatch, spec.name,
                              "parameter '" + spec.name + "': " + why);
    };
    text = trim(text);
    if (text == "unlimited" && spec.allow_unlimited) {
        return Unlimited{};
    }
    switch (spec.kind) {
    case ParamKind::integer:
        if (auto v = parse_int(text)) {
            return static_cast<std::int64_t>(*v);
        }
        throw fail("expected integer, got '" + std::string(text) + "'");
    case ParamKind::real:
        if (auto v = parse_real(text)) {
            return *v;
        }
        throw fail("expected real, got '" + std::string(text) + "'");
    case ParamKind::duration:
        try {
            return parse_duration(text);
        } catch (const DurationParseError& e) {
            throw fail(e.what());
        }
    case ParamKind::string:
    case ParamKind::enumeration:
        return std::string(text);
    }
    throw fail("unsupported kind");
}

ParamSet resolve_parameters(const AttackSpec& spec, const ParamSet& overrides)
{
    ParamSet out;
    for (const auto& [name, value] : overrides) {
        const auto* p = spec.parameter(name);
        if (p == nullptr) {
            throw ParameterError(ParameterError::Kind::unknown_parameter, name,
                                 "attack '" + spec.id + "' has no parameter '" + name + "'");
        }
        ParamValue v = value;
        if (p->kind == ParamKind::real && std::holds_alternative<std::int64_t>(v)) {
            v = static_cast<double>(std::get<std::int64_t>(v));
        }
        if (auto failure = check_value(*p, v)) {
            throw ParameterError(failure->kind, name, "parameter '" + name + "': " + failure->reason);
        }
        out[name] = std::move(v);
    }
    for (const auto& p : spec.parameters) {
        out.try_emplace(p.name, p.default_value);
    }
    return out;
}

const ParameterSpec* AttackSpec::parameter(std::string_view name) const
{
    for (const auto& p : parameters) {
        if (p.name == name) {
            return &p;
        }
    }
    return nullptr;
}

} // namespace nsb::catalog
