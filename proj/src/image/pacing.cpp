#include "synesthete/image/pacing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace synesthete::image {

const char* to_string(CadenceKind kind)
{
    switch (kind) {
    case CadenceKind::fixed: return "fixed";
    case CadenceKind::bar_aligned: return "bar_aligned";
    case CadenceKind::manual: return "manual";
    }
    return "fixed";
}

CadenceKind cadence_from_string(const std::string& name)
{
    if (name == "fixed") return CadenceKind::fixed;
    if (name == "bar_aligned") return CadenceKind::bar_aligned;
    if (name == "manual") return CadenceKind::manual;
    throw std::invalid_argument("unknown cadence '" + name + "'");
}

void to_json(nlohmann::json& j, const Cadence& c)
{
    j = nlohmann::json{{"kind", to_string(c.kind)}};
    if (c.kind == CadenceKind::fixed) j["interval_s"] = c.interval_s;
    if (c.kind == CadenceKind::bar_aligned) j["bars"] = c.bars;
}

void from_json(const nlohmann::json& j, Cadence& c)
{
    for (const auto& [k, v] : j.items()) {
        if (k != "kind" && k != "interval_s" && k != "bars") throw std::invalid_argument("unknown cadence field '" + k + "'");
    }
    c = Cadence{};
    c.kind = cadence_from_string(j.at("kind").get<std::string>());
    if (j.contains("interval_s")) c.interval_s = j.at("interval_s").get<double>();
    if (j.contains("bars")) c.bars = j.at("bars").get<int>();
    if (!(c.interval_s > 0) || c.bars < 1) throw std::invalid_argument("cadence interval and bars must be positive");
}

Micros bar_length(const PacingContext& ctx)
{
    return static_cast<Micros>(std::llround(ctx.beats_per_bar * 60'000'000.0 / ctx.tempo_bpm));
}

namespace {

bool on_bar_line(Micros now, const PacingContext& ctx)
{
    const Micros bar = bar_length(ctx);
    const Micros rel = now - ctx.origin;
    if (rel < -ctx.tolerance) return false;
    Micros off = rel % bar;
    if (off < 0) off += bar;
    return off <= ctx.tolerance || bar - off <= ctx.tolerance;
}

Micros interval_us(const Cadence& c)
{
    return static_cast<Micros>(std::llround(c.interval_s * 1e6));
}

}  // namespace

Decision pacing_decide(Micros now, std::optional<Micros> last_display, const Cadence& cadence, bool paused,
                       const PacingContext& ctx)
{
    if (paused) return Decision::hold;
    switch (cadence.kind) {
    case CadenceKind::fixed:
        return !last_display || now - *last_display >= interval_us(cadence) ? Decision::display : Decision::hold;
    case CadenceKind::bar_aligned: {
        if (!on_bar_line(now, ctx)) return Decision::hold;
        if (!last_display) return Decision::display;
        const Micros need = cadence.bars * bar_length(ctx) - ctx.tolerance;
        return now - *last_display >= need ? Decision::display : Decision::hold;
    }
    case CadenceKind::manual:
        return ctx.advance ? Decision::display : Decision::hold;
    }
    return Decision::hold;
}

std::optional<Micros> next_display_time(Micros now, std::optional<Micros> last_display, const Cadence& cadence,
                                        const PacingContext& ctx)
{
    switch (cadence.kind) {
    case CadenceKind::fixed:
        if (!last_display) return now;
        return std::max(now, *last_display + interval_us(cadence));
    case CadenceKind::bar_aligned: {
        const Micros bar = bar_length(ctx);
        Micros earliest = now;
        if (last_display) earliest = std::max(earliest, *last_display + cadence.bars * bar - ctx.tolerance);
        // First bar line inside the tolerance window, snapped to the line.
        const Micros rel = earliest - ctx.origin - ctx.tolerance;
        const Micros k = rel <= 0 ? 0 : (rel + bar - 1) / bar;
        return std::max(now, ctx.origin + k * bar);
    }
    case CadenceKind::manual:
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace synesthete::image
