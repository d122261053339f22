#pragma once

#include <optional>
#include <string>

#include "nsb/catalog.hpp"

namespace nsb::catalog {

struct CheckFailure {
    ParameterError::Kind kind;
    std::string reason;
};

std::optional<CheckFailure> check_value(const ParameterSpec& spec, const ParamValue& value);

} // namespace nsb::catalog
