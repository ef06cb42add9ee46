#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace synesthete::image {

using Micros = std::int64_t;

enum class CadenceKind { fixed, bar_aligned, manual };

const char* to_string(CadenceKind kind);
CadenceKind cadence_from_string(const std::string& name);

struct Cadence {
    CadenceKind kind = CadenceKind::fixed;
    double interval_s = 10.0;  // fixed
    int bars = 4;              // bar_aligned

    static Cadence fixed(double seconds) { return {CadenceKind::fixed, seconds, 4}; }
    static Cadence bar_aligned(int bars) { return {CadenceKind::bar_aligned, 10.0, bars}; }
    static Cadence manual() { return {CadenceKind::manual, 10.0, 4}; }
    bool operator==(const Cadence&) const = default;
};

void to_json(nlohmann::json& j, const Cadence& c);
void from_json(const nlohmann::json& j, Cadence& c);

struct PacingContext {
    double tempo_bpm = 96;
    double beats_per_bar = 4;    // quarter-note beats per bar
    Micros origin = 0;           // bar 0 starts here
    Micros tolerance = 50'000;   // slack around a bar line
    bool advance = false;        // user pressed "next" (manual cadence)
};

enum class Decision { display, hold };

/// Bar length in µs for the context's tempo and meter.
Micros bar_length(const PacingContext& ctx);

Decision pacing_decide(Micros now, std::optional<Micros> last_display, const Cadence& cadence, bool paused,
                       const PacingContext& ctx = {});

/// Earliest time >= now at which pacing_decide would display, assuming no
/// pause. Manual cadence has none.
std::optional<Micros> next_display_time(Micros now, std::optional<Micros> last_display, const Cadence& cadence,
                                        const PacingContext& ctx = {});

}  // namespace synesthete::image
