#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nsb/common/duration.hpp"
#include "nsb/common/error.hpp"

namespace nsb {

enum class Phase { warmup, attack, cooldown };

std::string_view to_string(Phase p);
std::optional<Phase> phase_from_string(std::string_view s);

// Half-open interval [start, end) in seconds relative to the run's t0.
struct PhaseWindow {
    Phase phase = Phase::warmup;
    double start = 0;
    double end = 0;

    bool operator==(const PhaseWindow&) const = default;
};

class NonPositiveDuration : public Error {
public:
    using Error::Error;
};

/// [warmup[0,w), attack[w,w+a), cooldown[w+a,w+a+c)]
std::vector<PhaseWindow> phase_schedule(Duration warmup, Duration attack, Duration cooldown);

/// The window containing t, start-inclusive and end-exclusive; nullopt means out of window.
std::optional<Phase> label_phase(double t, const std::vector<PhaseWindow>& windows);

const PhaseWindow& window_of(Phase p, const std::vector<PhaseWindow>& windows);

} // namespace nsb
