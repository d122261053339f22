#include "nsb/phases.hpp"

namespace nsb {

std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::warmup:
        return "warmup";
    case Phase::attack:
        return "attack";
    case Phase::cooldown:
        return "cooldown";
    }
    return "warmup";
}

std::optional<Phase> phase_from_string(std::string_view s)
{
    for (auto p : {Phase::warmup, Phase::attack, Phase::cooldown}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    return std::nullopt;
}

std::vector<PhaseWindow> phase_schedule(Duration warmup, Duration attack, Duration cooldown)
{
    if (warmup.count() <= 0 || attack.count() <= 0 || cooldown.count() <= 0) {
        throw NonPositiveDuration("phase durations must be > 0 (got " + format_duration(warmup) + ", " +
                                  format_duration(attack) + ", " + format_duration(cooldown) + ")");
    }
    // Boundaries are computed from integer microseconds so that adjacent windows share exact values.
    double w = to_seconds(warmup);
    double wa = to_seconds(warmup + attack);
    double total = to_seconds(warmup + attack + cooldown);
    return {
        {Phase::warmup, 0.0, w},
        {Phase::attack, w, wa},
        {Phase::cooldown, wa, total},
    };
}

std::optional<Phase> label_phase(double t, const std::vector<PhaseWindow>& windows)
{
    for (const auto& w : windows) {
        if (t >= w.start && t < w.end) {
            return w.phase;
        }
    }
    return std::nullopt;
}

const PhaseWindow& window_of(Phase p, const std::vector<PhaseWindow>& windows)
{
    for (const auto& w : windows) {
        if (w.phase == p) {
            return w;
        }
    }
    throw Error("no window for phase " + std::string(to_string(p)));
}

} // namespace nsb
