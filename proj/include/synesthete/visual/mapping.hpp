#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "synesthete/analysis/analysis.hpp"

namespace synesthete::visual {

struct VisualParams {
    double brightness = 0;  // [-1, 1]
    double warmth = 0;      // [-1, 1]
    double motion = 0;      // [0, 1]
    double openness = 0;    // [0, 1]

    bool operator==(const VisualParams&) const = default;
};

struct MappingConfig {
    double smoothing = 0.5;      // share of the step toward the target taken per clip
    double minor_delta = 0.3;    // brightness pulled down in minor keys
    double full_span = 48;       // register span (semitones) that maps to openness 1
};

/// Raw per-clip targets before smoothing. Brightness may fall below -1 in a
/// minor key; clamping happens on the smoothed output.
VisualParams targets(const analysis::MusicFeatures& features, const analysis::EmotionEstimate& emotion,
                     const MappingConfig& config = {});

/// One smoothing step from `prev` toward the targets. Non-finite inputs
/// keep the previous value; the result is always in range.
VisualParams map_features(const analysis::MusicFeatures& features, const analysis::EmotionEstimate& emotion,
                          const VisualParams& prev, const MappingConfig& config = {});

VisualParams clamp(const VisualParams& params);

struct ClauseRule {
    std::string param;  // brightness | warmth | motion | openness
    bool above = true;  // fires when value > threshold, else when value < threshold
    double threshold = 0;
    std::string clause;

    bool operator==(const ClauseRule&) const = default;
};

class ClauseTable {
public:
    /// Built-in rules, identical to data/visual_clauses.json.
    static ClauseTable defaults();
    static ClauseTable load(const std::filesystem::path& path);
    static ClauseTable from_json(const nlohmann::json& j);

    std::vector<std::string> clauses(const VisualParams& params) const;
    const std::vector<ClauseRule>& rules() const { return rules_; }

private:
    std::vector<ClauseRule> rules_;
};

std::vector<std::string> params_to_prompt_clauses(const VisualParams& params,
                                                  const ClauseTable& table = ClauseTable::defaults());

void to_json(nlohmann::json& j, const VisualParams& p);
void from_json(const nlohmann::json& j, VisualParams& p);

}  // namespace synesthete::visual
