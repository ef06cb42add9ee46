#include "synesthete/llm/backend.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "synesthete/abc/codec.hpp"
#include "synesthete/llm/prompts.hpp"

namespace synesthete::llm {

const char* to_string(ModeKind kind)
{
    return kind == ModeKind::divergent ? "divergent" : "convergent";
}

ModeKind mode_kind_from_string(const std::string& name)
{
    if (name == "divergent") return ModeKind::divergent;
    if (name == "convergent") return ModeKind::convergent;
    throw std::invalid_argument("unknown mode '" + name + "'");
}

namespace {

struct Family {
    std::string scene;
    std::vector<std::string> details;
};

const std::map<std::string, Family>& families()
{
    static const std::map<std::string, Family> table = {
        {"rain_room",
         {"A dimly lit, quiet room with rain streaking down a tall window",
          {"a single candle flickers on the sill", "an old upright piano waits in the corner",
           "a cup of tea cools beside an open book", "shadows gather beneath a worn armchair"}}},
        {"autumn_path",
         {"A lonely path through bare autumn trees under a low grey sky",
          {"fallen leaves drift across the stones", "a distant lamp glows through the fog",
           "an empty bench faces the hills", "crows circle slowly overhead"}}},
        {"moonlit_lake",
         {"A still lake beneath a full moon, silver light resting on the water",
          {"willows lean toward the shore", "a small boat rests by a wooden jetty",
           "mist curls above the reeds", "stars reflect between slow ripples"}}},
        {"enchanted_forest",
         {"An ancient forest clearing where soft light falls through the canopy",
          {"fireflies drift between the ferns", "moss covers a fallen oak",
           "a narrow stream murmurs over pebbles", "petals float down from flowering branches"}}},
        {"stormy_sea",
         {"A storm over a dark sea, waves breaking against black cliffs",
          {"lightning splits the clouds", "a lighthouse beam sweeps the spray",
           "a lone ship strains against the wind", "rain lashes the rocky shore"}}},
        {"night_city",
         {"A city at night seen from a rooftop, traffic racing below",
          {"neon signs buzz in the rain", "a train rushes across an iron bridge",
           "searchlights sweep the low clouds", "windows flicker on and off in tall towers"}}},
        {"festival_street",
         {"A bustling festival street strung with paper lanterns",
          {"dancers spin past a brass band", "confetti drifts through the warm air",
           "children chase each other between market stalls", "fireworks burst above the rooftops"}}},
        {"sunlit_meadow",
         {"A sunlit meadow rolling toward distant mountains",
          {"kites climb into a bright blue sky", "wildflowers sway in a light breeze",
           "a river sparkles beside the hills", "swallows dart above the grass"}}},
        {"twilight_harbor",
         {"A quiet harbor at twilight under a sky of soft pastel colours",
          {"sailboats rock gently at their moorings", "gulls rest on the weathered posts",
           "lanterns come on along the pier", "the tide laps at the stone steps"}}},
    };
    return table;
}

const std::map<std::string, std::vector<std::string>>& family_cells()
{
    static const std::map<std::string, std::vector<std::string>> cells = {
        {"negative_low", {"rain_room", "autumn_path"}},
        {"positive_low", {"moonlit_lake", "enchanted_forest"}},
        {"negative_high", {"stormy_sea", "night_city"}},
        {"positive_high", {"festival_street", "sunlit_meadow"}},
        {"center", {"twilight_harbor", "moonlit_lake"}},
    };
    return cells;
}

// The neighbouring cell divergent mode may borrow from.
std::string neighbour(const std::string& quadrant)
{
    if (quadrant == "negative_low") return "center";
    if (quadrant == "positive_low") return "center";
    if (quadrant == "negative_high") return "negative_low";
    if (quadrant == "positive_high") return "positive_low";
    return "positive_low";
}

std::string setting(analysis::Contour contour)
{
    switch (contour) {
    case analysis::Contour::ascending: return "a path climbing toward a brightening horizon";
    case analysis::Contour::descending: return "mist sinking slowly into the valley below";
    case analysis::Contour::arched: return "a stone bridge arching over quiet water";
    case analysis::Contour::flat: return "a level horizon stretching far away";
    case analysis::Contour::wavering: return "reflections trembling on the surface";
    }
    return "a level horizon stretching far away";
}

std::string lighting(double mean_velocity)
{
    if (mean_velocity < 50) return "bathed in soft, muted light";
    if (mean_velocity < 90) return "in gentle, even light";
    return "in vivid, striking light";
}

std::string capitalized(std::string s)
{
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

analysis::Analysis analyze_prompt(const std::string& prompt)
{
    const std::string abc_text = abc_from_prompt(prompt);
    try {
        const abc::AbcScore score = abc::parse_abc(abc_text);
        const auto notes = abc::score_to_notes(score);
        if (!notes.empty()) {
            const auto& q = score.header.tempo;
            const Rational quarter_bpm = q.beat_unit * 4 * q.bpm;
            const int bpm = std::max<int>(1, static_cast<int>(boost::rational_cast<double>(quarter_bpm) + 0.5));
            analysis::AnalysisConfig config;
            config.meter = score.header.meter;
            auto a = analysis::analyze(analysis::clip_from_score(notes, bpm), config);
            // The score carries the key explicitly; trust it over the estimate.
            a.features.key = score.header.key;
            a.emotion = analysis::infer_emotion(a.features, config);
            return a;
        }
    } catch (const std::exception&) {
        // Unparseable payloads get the neutral description below.
    }
    analysis::Analysis neutral;
    neutral.features.dynamics.mean_velocity = 64;
    neutral.emotion.words = analysis::emotion_words(0, 0);
    neutral.emotion.quadrant = "center";
    return neutral;
}

}  // namespace

const std::vector<std::string>& scene_families(const std::string& quadrant)
{
    const auto& cells = family_cells();
    auto it = cells.find(quadrant);
    if (it == cells.end()) throw std::invalid_argument("unknown lexicon cell '" + quadrant + "'");
    return it->second;
}

MockText mock_completion(const analysis::MusicFeatures& features, const analysis::EmotionEstimate& emotion,
                         ModeKind mode, int clip_index, const std::string* previous_family)
{
    const std::string quadrant =
        emotion.quadrant.empty() ? analysis::emotion_quadrant(emotion.valence, emotion.arousal) : emotion.quadrant;
    std::mt19937_64 rng(static_cast<std::uint64_t>(clip_index) * 2 + (mode == ModeKind::convergent ? 1 : 0));

    std::string family;
    if (mode == ModeKind::convergent) {
        family = previous_family != nullptr && families().contains(*previous_family) ? *previous_family
                                                                                       : scene_families(quadrant).front();
    } else {
        std::vector<std::string> pool = scene_families(quadrant);
        const auto& extra = scene_families(neighbour(quadrant));
        pool.insert(pool.end(), extra.begin(), extra.end());
        family = pool[rng() % pool.size()];
    }

    const Family& f = families().at(family);
    const std::size_t detail = mode == ModeKind::convergent ? static_cast<std::size_t>(clip_index) % f.details.size()
                                                            : rng() % f.details.size();
    MockText out;
    out.family = family;
    out.text = f.scene + ", " + setting(features.contour) + ", " + lighting(features.dynamics.mean_velocity) + "; " +
               f.details[detail] + ".";
    return out;
}

CompletionResult MockBackend::complete(const CompletionRequest& request)
{
    const auto start = std::chrono::steady_clock::now();
    TemplateId tid = TemplateId::imagery;
    abc_from_prompt(request.prompt, &tid);
    const analysis::Analysis a = analyze_prompt(request.prompt);

    CompletionResult result;
    result.backend_id = id();
    switch (tid) {
    case TemplateId::imagery: {
        std::lock_guard lock(mutex_);
        const MockText m = mock_completion(a.features, a.emotion, request.mode, request.clip_index,
                                           last_family_ ? &*last_family_ : nullptr);
        last_family_ = m.family;
        result.text = m.text;
        result.scene_family = m.family;
        break;
    }
    case TemplateId::emotion3:
        result.text = capitalized(a.emotion.words[0]) + ", " + capitalized(a.emotion.words[1]) + ", " +
                      capitalized(a.emotion.words[2]);
        break;
    case TemplateId::emotion: {
        std::ostringstream os;
        os << "The piece sounds " << a.emotion.words[0] << " and " << a.emotion.words[1] << ". The "
           << mode_name(a.features.key.mode) << " key and a tempo near " << static_cast<int>(a.features.tempo_bpm + 0.5)
           << " beats per minute give it a " << a.emotion.words[2] << " character.";
        result.text = os.str();
        break;
    }
    case TemplateId::features: {
        std::ostringstream os;
        os << "Key: " << tonic_name(a.features.key) << ' ' << mode_name(a.features.key.mode)
           << ". Tempo: about " << static_cast<int>(a.features.tempo_bpm + 0.5) << " quarter notes per minute. Meter: "
           << abc::to_string(a.features.meter) << ". Melodic contour: " << analysis::to_string(a.features.contour)
           << ". Register span: " << a.features.register_span << " semitones.";
        result.text = os.str();
        break;
    }
    }
    result.latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::optional<std::string> MockBackend::last_family() const
{
    std::lock_guard lock(mutex_);
    return last_family_;
}

void MockBackend::reset()
{
    std::lock_guard lock(mutex_);
    last_family_.reset();
}

FixtureBackend::FixtureBackend(std::vector<Entry> entries) : entries_(std::move(entries)) {}

FixtureBackend FixtureBackend::from_json(const nlohmann::json& j)
{
    std::vector<Entry> entries;
    for (const auto& pair : j) {
        Entry e;
        const auto& req = pair.at("request");
        if (req.contains("prompt")) {
            e.prompt = req.at("prompt").get<std::string>();
        } else {
            e.prompt = build_prompt(req.at("template").get<std::string>(), req.at("abc").get<std::string>());
        }
        e.text = pair.at("response").at("text").get<std::string>();
        e.latency_ms = pair.at("response").value("latency_ms", 0.0);
        entries.push_back(std::move(e));
    }
    return FixtureBackend(std::move(entries));
}

FixtureBackend FixtureBackend::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw LlmError("cannot open fixture file " + path.string());
    return from_json(nlohmann::json::parse(in));
}

CompletionResult FixtureBackend::complete(const CompletionRequest& request)
{
    for (const auto& e : entries_) {
        if (e.prompt == request.prompt) return CompletionResult{e.text, e.latency_ms, id(), {}};
    }
    throw LlmError("no recorded response for this prompt");
}

}  // namespace synesthete::llm
