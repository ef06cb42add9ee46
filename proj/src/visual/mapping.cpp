#include "synesthete/visual/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace synesthete::visual {

namespace {

double step(double prev, double target, double alpha, double lo, double hi)
{
    if (!std::isfinite(prev)) prev = std::clamp(0.0, lo, hi);
    if (!std::isfinite(target)) return std::clamp(prev, lo, hi);
    return std::clamp(prev + alpha * (target - prev), lo, hi);
}

double value_of(const VisualParams& p, const std::string& name)
{
    if (name == "brightness") return p.brightness;
    if (name == "warmth") return p.warmth;
    if (name == "motion") return p.motion;
    if (name == "openness") return p.openness;
    throw std::invalid_argument("unknown visual parameter '" + name + "'");
}

}  // namespace

VisualParams targets(const analysis::MusicFeatures& f, const analysis::EmotionEstimate& e, const MappingConfig& config)
{
    VisualParams t;
    t.brightness = f.dynamics.mean_velocity / 127.0 * 2.0 - 1.0;
    if (f.key.mode == Mode::minor) t.brightness -= config.minor_delta;
    t.warmth = e.valence;
    t.motion = (e.arousal + 1.0) / 2.0;
    t.openness = f.register_span / config.full_span;
    return t;
}

VisualParams clamp(const VisualParams& p)
{
    auto c = [](double v, double lo, double hi) { return std::isfinite(v) ? std::clamp(v, lo, hi) : std::clamp(0.0, lo, hi); };
    return VisualParams{c(p.brightness, -1, 1), c(p.warmth, -1, 1), c(p.motion, 0, 1), c(p.openness, 0, 1)};
}

VisualParams map_features(const analysis::MusicFeatures& features, const analysis::EmotionEstimate& emotion,
                          const VisualParams& prev, const MappingConfig& config)
{
    const VisualParams t = targets(features, emotion, config);
    const double a = std::isfinite(config.smoothing) ? std::clamp(config.smoothing, 0.0, 1.0) : 0.5;
    VisualParams out;
    out.brightness = step(prev.brightness, t.brightness, a, -1, 1);
    out.warmth = step(prev.warmth, t.warmth, a, -1, 1);
    out.motion = step(prev.motion, t.motion, a, 0, 1);
    out.openness = step(prev.openness, t.openness, a, 0, 1);
    return out;
}

ClauseTable ClauseTable::defaults()
{
    ClauseTable t;
    t.rules_ = {
        {"brightness", false, -0.33, "dimly lit"},
        {"brightness", true, 0.33, "brilliantly lit"},
        {"warmth", false, -0.33, "cool blue tones"},
        {"warmth", true, 0.33, "warm golden tones"},
        {"motion", true, 0.66, "swirling with dynamic motion"},
        {"openness", true, 0.66, "wide open vista"},
    };
    return t;
}

ClauseTable ClauseTable::from_json(const nlohmann::json& j)
{
    ClauseTable t;
    for (const auto& r : j) {
        ClauseRule rule;
        rule.param = r.at("param").get<std::string>();
        const auto when = r.at("when").get<std::string>();
        if (when != "above" && when != "below") throw std::invalid_argument("clause 'when' must be above or below");
        rule.above = when == "above";
        rule.threshold = r.at("threshold").get<double>();
        rule.clause = r.at("clause").get<std::string>();
        value_of(VisualParams{}, rule.param);
        t.rules_.push_back(std::move(rule));
    }
    return t;
}

ClauseTable ClauseTable::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open clause table " + path.string());
    return from_json(nlohmann::json::parse(in));
}

std::vector<std::string> ClauseTable::clauses(const VisualParams& params) const
{
    std::vector<std::string> out;
    for (const auto& r : rules_) {
        const double v = value_of(params, r.param);
        if (r.above ? v > r.threshold : v < r.threshold) out.push_back(r.clause);
    }
    return out;
}

std::vector<std::string> params_to_prompt_clauses(const VisualParams& params, const ClauseTable& table)
{
    return table.clauses(params);
}

void to_json(nlohmann::json& j, const VisualParams& p)
{
    j = nlohmann::json{{"brightness", p.brightness}, {"warmth", p.warmth}, {"motion", p.motion}, {"openness", p.openness}};
}

void from_json(const nlohmann::json& j, VisualParams& p)
{
    p.brightness = j.at("brightness").get<double>();
    p.warmth = j.at("warmth").get<double>();
    p.motion = j.at("motion").get<double>();
    p.openness = j.at("openness").get<double>();
}

}  // namespace synesthete::visual
