#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "synesthete/abc/codec.hpp"
#include "synesthete/midi/events.hpp"
#include "synesthete/music.hpp"

namespace synesthete::analysis {

class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AnalysisConfig {
    double default_tempo = 96;
    double tempo_min = 40;
    double tempo_max = 208;
    double contour_slope_threshold = 0.5;  // semitones per second
    double contour_wavering_std = 2.0;     // semitones
    int accent_velocity = 100;
    abc::Meter meter;
};

enum class Contour { ascending, descending, arched, flat, wavering };

const char* to_string(Contour contour);
Contour contour_from_string(const std::string& name);

/// Krumhansl-Kessler probe-tone ratings (Krumhansl & Kessler 1982), index 0
/// is the tonic.
inline constexpr std::array<double, 12> kMajorProfile = {6.35, 2.23, 3.48, 2.33, 4.38, 4.09,
                                                         2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
inline constexpr std::array<double, 12> kMinorProfile = {6.33, 2.68, 3.52, 5.38, 2.60, 3.53,
                                                         2.54, 4.75, 3.98, 2.69, 3.34, 3.17};

using PitchClassHistogram = std::array<double, 12>;

struct KeyEstimate {
    Key key;
    double confidence = 0;
    /// Index tonic for major, 12 + tonic for minor.
    std::array<double, 24> correlations{};
};

struct TempoEstimate {
    double bpm = 96;
    bool low_confidence = false;
};

struct RepetitionEstimate {
    double score = 0;
    bool insufficient = false;  // fewer than two bars with notes
};

struct Dynamics {
    double mean_velocity = 0;
    int velocity_range = 0;
    bool operator==(const Dynamics&) const = default;
};

struct MusicFeatures {
    Key key;
    double key_confidence = 0;
    double tempo_bpm = 96;
    bool tempo_low_confidence = false;
    abc::Meter meter;
    Contour contour = Contour::flat;
    double repetition = 0;
    bool repetition_insufficient = false;
    Dynamics dynamics;
    double note_density = 0;  // notes per second over the clip window
    int register_span = 0;    // semitones

    bool operator==(const MusicFeatures&) const = default;
};

struct EmotionEstimate {
    double valence = 0;
    double arousal = 0;
    std::array<std::string, 3> words;
    std::string quadrant;  // lexicon cell the words came from

    bool operator==(const EmotionEstimate&) const = default;
};

struct Analysis {
    MusicFeatures features;
    EmotionEstimate emotion;

    bool operator==(const Analysis&) const = default;
};

/// Duration-weighted (microseconds) pitch-class histogram.
PitchClassHistogram pitch_class_histogram(const midi::Clip& clip);

/// Pearson correlation of the histogram, read from `tonic` upward, against
/// a profile.
double profile_correlation(const PitchClassHistogram& histogram, const std::array<double, 12>& profile, int tonic);

KeyEstimate estimate_key(const PitchClassHistogram& histogram);
KeyEstimate estimate_key(const midi::Clip& clip);

TempoEstimate estimate_tempo(const midi::Clip& clip, const AnalysisConfig& config = {});

/// Onset time (microseconds) and highest sounding pitch at that time.
struct SkylinePoint {
    midi::Micros time = 0;
    int pitch = 0;
    bool operator==(const SkylinePoint&) const = default;
};

/// The top line: at each onset, the highest pitch sounding, counting notes
/// held over from earlier onsets.
std::vector<SkylinePoint> skyline(const midi::Clip& clip);

Contour melodic_contour(const midi::Clip& clip, const AnalysisConfig& config = {});

RepetitionEstimate repetition_score(const midi::Clip& clip, double tempo_bpm, const AnalysisConfig& config = {});

/// Three distinct words from the lexicon cell of (valence, arousal), picked
/// by a generator seeded from the quantized cell coordinates.
std::array<std::string, 3> emotion_words(double valence, double arousal);

/// Name of the lexicon cell for a valence/arousal point.
std::string emotion_quadrant(double valence, double arousal);

/// Every word of one lexicon cell.
const std::vector<std::string>& lexicon(const std::string& quadrant);
std::vector<std::string> lexicon_quadrants();

EmotionEstimate infer_emotion(const MusicFeatures& features, const AnalysisConfig& config = {});

Analysis analyze(const midi::Clip& clip, const AnalysisConfig& config = {});

/// Parallel over clips with OpenMP.
std::vector<Analysis> analyze_batch(std::span<const midi::Clip> clips, const AnalysisConfig& config = {});

/// Reference loop with the same results as analyze_batch.
std::vector<Analysis> analyze_batch_serial(std::span<const midi::Clip> clips, const AnalysisConfig& config = {});

/// Rebuilds a performance from score notes at `bpm`, e.g. to analyze ABC text.
midi::Clip clip_from_score(const std::vector<abc::ScoreNote>& notes, int bpm, int velocity = 80);

void to_json(nlohmann::json& j, const MusicFeatures& f);
void from_json(const nlohmann::json& j, MusicFeatures& f);
void to_json(nlohmann::json& j, const EmotionEstimate& e);
void from_json(const nlohmann::json& j, EmotionEstimate& e);

}  // namespace synesthete::analysis
