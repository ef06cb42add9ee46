#include "synesthete/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace synesthete::analysis {

const char* to_string(Contour contour)
{
    switch (contour) {
    case Contour::ascending: return "ascending";
    case Contour::descending: return "descending";
    case Contour::arched: return "arched";
    case Contour::flat: return "flat";
    case Contour::wavering: return "wavering";
    }
    return "flat";
}

Contour contour_from_string(const std::string& name)
{
    for (Contour c : {Contour::ascending, Contour::descending, Contour::arched, Contour::flat, Contour::wavering}) {
        if (name == to_string(c)) return c;
    }
    throw AnalysisError("unknown contour '" + name + "'");
}

namespace {

constexpr midi::Micros kOnsetMergeUs = 30'000;

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

/// Onset times with near-simultaneous attacks (chords played by hand)
/// collapsed onto the first of the group.
std::vector<midi::Micros> onset_clusters(const midi::Clip& clip)
{
    std::vector<midi::Micros> onsets;
    onsets.reserve(clip.notes.size());
    for (const auto& n : clip.notes) onsets.push_back(n.onset);
    std::sort(onsets.begin(), onsets.end());
    std::vector<midi::Micros> out;
    for (midi::Micros t : onsets) {
        if (out.empty() || t - out.back() > kOnsetMergeUs) out.push_back(t);
    }
    return out;
}

}  // namespace

PitchClassHistogram pitch_class_histogram(const midi::Clip& clip)
{
    // Integer accumulation keeps the histogram exact, so transposing a clip
    // permutes it without any rounding difference.
    std::array<std::int64_t, 12> acc{};
    for (const auto& n : clip.notes) acc[static_cast<std::size_t>(pitch_class(n.pitch))] += n.duration;
    PitchClassHistogram h{};
    for (std::size_t i = 0; i < 12; ++i) h[i] = static_cast<double>(acc[i]);
    return h;
}

double profile_correlation(const PitchClassHistogram& histogram, const std::array<double, 12>& profile, int tonic)
{
    std::array<double, 12> x{};
    for (int i = 0; i < 12; ++i) x[static_cast<std::size_t>(i)] = histogram[static_cast<std::size_t>(pitch_class(tonic + i))];
    double mx = 0, my = 0;
    for (int i = 0; i < 12; ++i) {
        mx += x[static_cast<std::size_t>(i)];
        my += profile[static_cast<std::size_t>(i)];
    }
    mx /= 12;
    my /= 12;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < 12; ++i) {
        const double dx = x[i] - mx;
        const double dy = profile[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) return 0;
    return sxy / std::sqrt(sxx * syy);
}

KeyEstimate estimate_key(const PitchClassHistogram& histogram)
{
    KeyEstimate est;
    for (int t = 0; t < 12; ++t) {
        est.correlations[static_cast<std::size_t>(t)] = profile_correlation(histogram, kMajorProfile, t);
        est.correlations[static_cast<std::size_t>(12 + t)] = profile_correlation(histogram, kMinorProfile, t);
    }
    // Ties go to the lower tonic, then to major.
    int best = -1;
    for (int t = 0; t < 12; ++t) {
        for (int m = 0; m < 2; ++m) {
            const int idx = m * 12 + t;
            if (best < 0 || est.correlations[static_cast<std::size_t>(idx)] > est.correlations[static_cast<std::size_t>(best)]) best = idx;
        }
    }
    est.key = Key{best % 12, best < 12 ? Mode::major : Mode::minor};

    std::array<double, 24> sorted = est.correlations;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double spread = sorted.front() - sorted.back();
    est.confidence = spread > 0 ? std::clamp((sorted[0] - sorted[1]) / spread, 0.0, 1.0) : 0.0;
    return est;
}

KeyEstimate estimate_key(const midi::Clip& clip)
{
    if (clip.notes.empty()) throw AnalysisError("key estimation needs at least one note");
    return estimate_key(pitch_class_histogram(clip));
}

TempoEstimate estimate_tempo(const midi::Clip& clip, const AnalysisConfig& config)
{
    const auto onsets = onset_clusters(clip);
    if (onsets.size() < 4) return TempoEstimate{config.default_tempo, true};

    // Beat periods in whole milliseconds spanning the tempo range; every
    // pair of onsets (not only neighbours) votes for the periods near its
    // distance, with a tolerance proportional to the period.
    const int p_min = static_cast<int>(std::floor(60'000.0 / config.tempo_max));
    const int p_max = static_cast<int>(std::ceil(60'000.0 / config.tempo_min));
    constexpr double kRelSigma = 0.025;
    std::vector<double> score(static_cast<std::size_t>(p_max - p_min + 1), 0.0);

    auto gauss = [](double d, double p) {
        const double z = (d - p) / (kRelSigma * p);
        return std::exp(-0.5 * z * z);
    };

    for (std::size_t i = 0; i < onsets.size(); ++i) {
        for (std::size_t j = i + 1; j < onsets.size(); ++j) {
            const double d = static_cast<double>(onsets[j] - onsets[i]) / 1000.0;
            if (d > p_max * (1 + 3 * kRelSigma)) break;
            const int lo = std::max(p_min, static_cast<int>(std::floor(d / (1 + 3 * kRelSigma))));
            const int hi = std::min(p_max, static_cast<int>(std::ceil(d / (1 - 3 * kRelSigma))));
            for (int p = lo; p <= hi; ++p) score[static_cast<std::size_t>(p - p_min)] += gauss(d, p);
        }
    }

    // Prefer periods near 500 ms, one octave either side.
    int best = -1;
    double best_score = 0;
    for (int p = p_min; p <= p_max; ++p) {
        const double octaves = std::log2(p / 500.0);
        const double w = score[static_cast<std::size_t>(p - p_min)] * std::exp(-0.5 * octaves * octaves);
        if (w > best_score) {
            best_score = w;
            best = p;
        }
    }
    if (best < 0) return TempoEstimate{config.default_tempo, true};

    double num = 0, den = 0;
    for (std::size_t i = 0; i < onsets.size(); ++i) {
        for (std::size_t j = i + 1; j < onsets.size(); ++j) {
            const double d = static_cast<double>(onsets[j] - onsets[i]) / 1000.0;
            if (d > best * (1 + 3 * kRelSigma)) break;
            if (std::abs(d - best) > 2 * kRelSigma * best) continue;
            const double w = gauss(d, best);
            num += w * d;
            den += w;
        }
    }
    const double period = den > 0 ? num / den : best;
    return TempoEstimate{std::clamp(60'000.0 / period, config.tempo_min, config.tempo_max), false};
}

std::vector<SkylinePoint> skyline(const midi::Clip& clip)
{
    std::vector<SkylinePoint> out;
    const auto onsets = onset_clusters(clip);
    for (std::size_t c = 0; c < onsets.size(); ++c) {
        const midi::Micros t = onsets[c];
        const midi::Micros cluster_end = t + kOnsetMergeUs;
        int top = -1;
        for (const auto& n : clip.notes) {
            if (n.onset > cluster_end) break;
            const bool starts_here = n.onset >= t && n.onset <= cluster_end;
            const bool held = n.onset < t && n.end() > t;
            if (starts_here || held) top = std::max(top, n.pitch);
        }
        if (top >= 0) out.push_back(SkylinePoint{t, top});
    }
    return out;
}

namespace {

struct Fit {
    double slope = 0;
    double residual_std = 0;
};

Fit fit_line(const std::vector<SkylinePoint>& pts, std::size_t begin, std::size_t end)
{
    const double t0 = static_cast<double>(pts[begin].time);
    const int p0 = pts[begin].pitch;
    const double n = static_cast<double>(end - begin);
    double mx = 0, my = 0;
    for (std::size_t i = begin; i < end; ++i) {
        mx += (static_cast<double>(pts[i].time) - t0) / 1e6;
        my += pts[i].pitch - p0;
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = begin; i < end; ++i) {
        const double dx = (static_cast<double>(pts[i].time) - t0) / 1e6 - mx;
        sxy += dx * (pts[i].pitch - p0 - my);
        sxx += dx * dx;
    }
    Fit f;
    f.slope = sxx > 0 ? sxy / sxx : 0;
    double ss = 0;
    for (std::size_t i = begin; i < end; ++i) {
        const double x = (static_cast<double>(pts[i].time) - t0) / 1e6;
        const double r = pts[i].pitch - p0 - (my + f.slope * (x - mx));
        ss += r * r;
    }
    f.residual_std = std::sqrt(ss / n);
    return f;
}

}  // namespace

Contour melodic_contour(const midi::Clip& clip, const AnalysisConfig& config)
{
    const auto pts = skyline(clip);
    if (pts.size() < 2) return Contour::flat;
    const double thr = config.contour_slope_threshold;

    if (pts.size() >= 3) {
        const std::size_t mid = pts.size() / 2;
        const Fit rise = fit_line(pts, 0, mid + 1);
        const Fit fall = fit_line(pts, mid, pts.size());
        if (rise.slope >= thr && fall.slope <= -thr) return Contour::arched;
    }
    const Fit all = fit_line(pts, 0, pts.size());
    if (all.slope >= thr) return Contour::ascending;
    if (all.slope <= -thr) return Contour::descending;
    return all.residual_std > config.contour_wavering_std ? Contour::wavering : Contour::flat;
}

namespace {

using BarToken = std::pair<int, int>;  // (interval from previous note, sixteenth position)

std::size_t edit_distance(const std::vector<BarToken>& a, const std::vector<BarToken>& b)
{
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

RepetitionEstimate repetition_score(const midi::Clip& clip, double tempo_bpm, const AnalysisConfig& config)
{
    if (!(tempo_bpm > 0)) throw AnalysisError("tempo must be positive");
    const double beats_per_bar = boost::rational_cast<double>(config.meter.beats());
    const double bar_us = beats_per_bar * 60e6 / tempo_bpm;
    const double sixteenth_us = 60e6 / tempo_bpm / 4;

    std::map<std::int64_t, std::vector<BarToken>> bars;
    std::map<std::int64_t, int> last_pitch;
    constexpr int kBarStart = 1000;
    for (const SkylinePoint& p : skyline(clip)) {
        const double offset = static_cast<double>(p.time - clip.window_start);
        const auto bar = static_cast<std::int64_t>(std::floor(offset / bar_us));
        const double in_bar = offset - static_cast<double>(bar) * bar_us;
        const int pos = static_cast<int>(std::llround(in_bar / sixteenth_us));
        auto it = last_pitch.find(bar);
        const int interval = it == last_pitch.end() ? kBarStart : p.pitch - it->second;
        bars[bar].emplace_back(interval, pos);
        last_pitch[bar] = p.pitch;
    }

    std::vector<const std::vector<BarToken>*> list;
    for (const auto& [idx, tokens] : bars) list.push_back(&tokens);
    if (list.size() < 2) return RepetitionEstimate{0, true};

    double total = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        for (std::size_t j = i + 1; j < list.size(); ++j) {
            const std::size_t longest = std::max(list[i]->size(), list[j]->size());
            total += 1.0 - static_cast<double>(edit_distance(*list[i], *list[j])) / static_cast<double>(longest);
            ++pairs;
        }
    }
    return RepetitionEstimate{std::clamp(total / static_cast<double>(pairs), 0.0, 1.0), false};
}

namespace {

const std::map<std::string, std::vector<std::string>>& lexicon_table()
{
    static const std::map<std::string, std::vector<std::string>> table = {
        {"positive_high", {"energetic", "lively", "joyful", "upbeat", "vibrant", "exciting"}},
        {"negative_low", {"melancholic", "reflective", "somber", "introspective", "pensive", "tranquil"}},
        {"positive_low", {"serene", "soothing", "harmonious", "graceful", "elegant", "uplifting"}},
        {"negative_high", {"urgent", "intense", "dramatic", "turbulent", "restless", "stormy"}},
        {"center", {"calm", "balanced", "meditative", "gentle", "steady", "contemplative"}},
    };
    return table;
}

constexpr double kCenterRadius = 0.3;

}  // namespace

std::string emotion_quadrant(double valence, double arousal)
{
    if (std::max(std::abs(valence), std::abs(arousal)) < kCenterRadius) return "center";
    return std::string(valence >= 0 ? "positive" : "negative") + (arousal >= 0 ? "_high" : "_low");
}

const std::vector<std::string>& lexicon(const std::string& quadrant)
{
    const auto& table = lexicon_table();
    auto it = table.find(quadrant);
    if (it == table.end()) throw AnalysisError("unknown lexicon cell '" + quadrant + "'");
    return it->second;
}

std::vector<std::string> lexicon_quadrants()
{
    std::vector<std::string> out;
    for (const auto& [name, words] : lexicon_table()) out.push_back(name);
    return out;
}

std::array<std::string, 3> emotion_words(double valence, double arousal)
{
    std::vector<std::string> words = lexicon(emotion_quadrant(valence, arousal));
    const auto qv = static_cast<std::uint32_t>(std::lround(clamp1(valence) * 4) + 8);
    const auto qa = static_cast<std::uint32_t>(std::lround(clamp1(arousal) * 4) + 8);
    std::mt19937 rng(qv * 17 + qa);
    // Fisher-Yates with plain modulo so the pick does not depend on the
    // standard library's distribution implementation.
    for (std::size_t i = words.size() - 1; i > 0; --i) {
        std::swap(words[i], words[rng() % (i + 1)]);
    }
    return {words[0], words[1], words[2]};
}

EmotionEstimate infer_emotion(const MusicFeatures& f, const AnalysisConfig& config)
{
    EmotionEstimate e;
    const double loudness = clamp1((f.dynamics.mean_velocity - 64.0) / 63.0);
    e.valence = clamp1((f.key.mode == Mode::major ? 0.5 : -0.5) + 0.25 * loudness);
    const double pace = -1.0 + 2.0 * (f.tempo_bpm - config.tempo_min) / (config.tempo_max - config.tempo_min);
    const double busyness = clamp1((f.note_density - 4.0) / 4.0);
    e.arousal = clamp1(clamp1(pace) + 0.15 * busyness);
    e.words = emotion_words(e.valence, e.arousal);
    e.quadrant = emotion_quadrant(e.valence, e.arousal);
    return e;
}

Analysis analyze(const midi::Clip& clip, const AnalysisConfig& config)
{
    if (clip.notes.empty()) throw AnalysisError("cannot analyze an empty clip");
    Analysis a;
    MusicFeatures& f = a.features;
    const KeyEstimate key = estimate_key(clip);
    f.key = key.key;
    f.key_confidence = key.confidence;
    const TempoEstimate tempo = estimate_tempo(clip, config);
    f.tempo_bpm = tempo.bpm;
    f.tempo_low_confidence = tempo.low_confidence;
    f.meter = config.meter;
    f.contour = melodic_contour(clip, config);
    const RepetitionEstimate rep = repetition_score(clip, tempo.bpm, config);
    f.repetition = rep.score;
    f.repetition_insufficient = rep.insufficient;

    int vmin = 127, vmax = 0, pmin = 127, pmax = 0;
    std::int64_t vsum = 0;
    midi::Micros last_end = clip.window_start;
    for (const auto& n : clip.notes) {
        vmin = std::min(vmin, n.velocity);
        vmax = std::max(vmax, n.velocity);
        pmin = std::min(pmin, n.pitch);
        pmax = std::max(pmax, n.pitch);
        vsum += n.velocity;
        last_end = std::max(last_end, n.end());
    }
    const auto count = static_cast<double>(clip.notes.size());
    f.dynamics.mean_velocity = static_cast<double>(vsum) / count;
    f.dynamics.velocity_range = vmax - vmin;
    const midi::Micros span = clip.window_end > clip.window_start ? clip.window_end - clip.window_start
                                                                  : std::max<midi::Micros>(1, last_end - clip.window_start);
    f.note_density = count / (static_cast<double>(span) / 1e6);
    f.register_span = pmax - pmin;

    a.emotion = infer_emotion(f, config);
    return a;
}

std::vector<Analysis> analyze_batch_serial(std::span<const midi::Clip> clips, const AnalysisConfig& config)
{
    std::vector<Analysis> out;
    out.reserve(clips.size());
    for (const auto& clip : clips) out.push_back(analyze(clip, config));
    return out;
}

std::vector<Analysis> analyze_batch(std::span<const midi::Clip> clips, const AnalysisConfig& config)
{
    std::vector<Analysis> out(clips.size());
    std::vector<std::exception_ptr> errors(clips.size());
    const auto n = static_cast<std::int64_t>(clips.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = analyze(clips[static_cast<std::size_t>(i)], config);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

midi::Clip clip_from_score(const std::vector<abc::ScoreNote>& notes, int bpm, int velocity)
{
    if (bpm <= 0) throw AnalysisError("tempo must be positive");
    midi::Clip clip;
    const Rational us_per_beat(60'000'000, bpm);
    auto to_us = [&](const Rational& beats) {
        const Rational v = beats * us_per_beat;
        return static_cast<midi::Micros>(std::llround(boost::rational_cast<double>(v)));
    };
    midi::Micros end = 0;
    for (const auto& n : notes) {
        midi::NoteEvent e;
        e.pitch = n.pitch;
        e.velocity = velocity;
        e.onset = to_us(n.onset);
        e.duration = std::max<midi::Micros>(1, to_us(n.onset + n.duration) - e.onset);
        e.voice = n.voice;
        end = std::max(end, e.end());
        clip.notes.push_back(e);
    }
    midi::sort_notes(clip.notes);
    clip.window_start = 0;
    clip.window_end = end;
    return clip;
}

void to_json(nlohmann::json& j, const MusicFeatures& f)
{
    j = nlohmann::json{
        {"key", {{"tonic", tonic_name(f.key)}, {"pitch_class", f.key.tonic}, {"mode", mode_name(f.key.mode)},
                 {"confidence", f.key_confidence}}},
        {"tempo_bpm", f.tempo_bpm},
        {"tempo_low_confidence", f.tempo_low_confidence},
        {"meter", abc::to_string(f.meter)},
        {"contour", to_string(f.contour)},
        {"repetition", f.repetition},
        {"repetition_insufficient", f.repetition_insufficient},
        {"dynamics", {{"mean_velocity", f.dynamics.mean_velocity}, {"velocity_range", f.dynamics.velocity_range}}},
        {"note_density", f.note_density},
        {"register_span", f.register_span},
    };
}

void from_json(const nlohmann::json& j, MusicFeatures& f)
{
    const auto& key = j.at("key");
    f.key.tonic = key.at("pitch_class").get<int>();
    f.key.mode = mode_from_name(key.at("mode").get<std::string>());
    f.key_confidence = key.at("confidence").get<double>();
    f.tempo_bpm = j.at("tempo_bpm").get<double>();
    f.tempo_low_confidence = j.at("tempo_low_confidence").get<bool>();
    f.meter = abc::parse_meter(j.at("meter").get<std::string>());
    f.contour = contour_from_string(j.at("contour").get<std::string>());
    f.repetition = j.at("repetition").get<double>();
    f.repetition_insufficient = j.at("repetition_insufficient").get<bool>();
    f.dynamics.mean_velocity = j.at("dynamics").at("mean_velocity").get<double>();
    f.dynamics.velocity_range = j.at("dynamics").at("velocity_range").get<int>();
    f.note_density = j.at("note_density").get<double>();
    f.register_span = j.at("register_span").get<int>();
}

void to_json(nlohmann::json& j, const EmotionEstimate& e)
{
    j = nlohmann::json{{"valence", e.valence}, {"arousal", e.arousal}, {"words", e.words}, {"quadrant", e.quadrant}};
}

void from_json(const nlohmann::json& j, EmotionEstimate& e)
{
    e.valence = j.at("valence").get<double>();
    e.arousal = j.at("arousal").get<double>();
    e.words = j.at("words").get<std::array<std::string, 3>>();
    e.quadrant = j.at("quadrant").get<std::string>();
}

}  // namespace synesthete::analysis
