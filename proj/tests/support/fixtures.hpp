#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "synesthete/midi/events.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& name)
{
    return std::filesystem::path(SYNESTHETE_FIXTURE_DIR) / name;
}

inline std::filesystem::path golden(const std::string& name)
{
    return std::filesystem::path(SYNESTHETE_GOLDEN_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline nlohmann::json load_json(const std::filesystem::path& path)
{
    return nlohmann::json::parse(slurp(path));
}

/// Expected reader output written by make_fixtures.py.
inline std::vector<synesthete::midi::RawMidiEvent> expected_events(const std::string& name)
{
    std::vector<synesthete::midi::RawMidiEvent> out;
    for (const auto& j : load_json(fixture(name))) {
        synesthete::midi::RawMidiEvent e;
        e.kind = synesthete::midi::event_kind_from_string(j.at("kind").get<std::string>());
        e.pitch = j.at("pitch").get<int>();
        e.velocity = j.at("velocity").get<int>();
        e.timestamp = j.at("timestamp_us").get<std::int64_t>();
        out.push_back(e);
    }
    return out;
}

/// Monophonic or chordal line as (pitch, beats) pairs laid end to end.
inline synesthete::midi::Clip clip_from_line(const std::vector<std::pair<int, double>>& line, double bpm,
                                             int velocity = 80, int clip_index = 0)
{
    synesthete::midi::Clip clip;
    const double beat_us = 60'000'000.0 / bpm;
    double t = 0;
    for (const auto& [pitch, beats] : line) {
        synesthete::midi::NoteEvent n;
        n.pitch = pitch;
        n.velocity = velocity;
        n.onset = static_cast<std::int64_t>(std::llround(t));
        n.duration = static_cast<std::int64_t>(std::llround(beats * beat_us));
        clip.notes.push_back(n);
        t += beats * beat_us;
    }
    clip.window_start = 0;
    clip.window_end = static_cast<std::int64_t>(std::llround(t)) + 1;
    clip.clip_index = clip_index;
    synesthete::midi::sort_notes(clip.notes);
    return clip;
}

/// Random polyphonic clip: arbitrary onsets, durations and overlaps inside a
/// 10 s window.
inline synesthete::midi::Clip random_clip(std::mt19937_64& rng, int max_notes = 40)
{
    std::uniform_int_distribution<int> count(1, max_notes);
    std::uniform_int_distribution<int> pitch(21, 108);
    std::uniform_int_distribution<int> velocity(1, 127);
    std::uniform_int_distribution<std::int64_t> onset(0, 9'999'999);
    std::uniform_int_distribution<std::int64_t> duration(1, 3'000'000);
    synesthete::midi::Clip clip;
    clip.window_start = 0;
    clip.window_end = 10'000'000;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
        synesthete::midi::NoteEvent e;
        e.pitch = pitch(rng);
        e.velocity = velocity(rng);
        e.onset = onset(rng);
        e.duration = duration(rng);
        clip.notes.push_back(e);
    }
    synesthete::midi::sort_notes(clip.notes);
    return clip;
}

}  // namespace testing_support

#include "synesthete/midi/ingest_buffer.hpp"
#include "synesthete/midi/smf_reader.hpp"

namespace testing_support {

/// The whole file as a single clip.
inline synesthete::midi::Clip clip_from_midi(const std::filesystem::path& path,
                                             synesthete::midi::Micros window = 60'000'000)
{
    synesthete::midi::IngestBuffer buf(window);
    for (const auto& e : synesthete::midi::replay_midi_file(path)) buf.push_event(e);
    auto clip = buf.flush();
    return clip ? *clip : synesthete::midi::Clip{};
}

/// One octave of a major or harmonic-minor scale, quarter notes.
inline synesthete::midi::Clip scale_clip(int tonic_pc, bool major, double bpm = 120)
{
    static const int kMajor[] = {0, 2, 4, 5, 7, 9, 11, 12};
    static const int kMinor[] = {0, 2, 3, 5, 7, 8, 11, 12};
    std::vector<std::pair<int, double>> line;
    for (int step : major ? kMajor : kMinor) line.emplace_back(60 + tonic_pc + step, 1.0);
    return clip_from_line(line, bpm);
}

struct Melody {
    std::string name;
    int tonic = 0;
    bool major = true;
    synesthete::midi::Clip clip;
};

inline std::vector<Melody> melodies(double bpm = 120)
{
    std::vector<Melody> out;
    const nlohmann::json all = load_json(fixture("melodies.json"));
    for (const auto& [name, m] : all.items()) {
        std::vector<std::pair<int, double>> line;
        for (const auto& n : m.at("notes")) line.emplace_back(n.at(0).get<int>(), n.at(1).get<double>());
        out.push_back(Melody{name, m.at("tonic").get<int>(), m.at("mode").get<std::string>() == "major",
                             clip_from_line(line, bpm)});
    }
    return out;
}

inline synesthete::midi::Clip transpose(synesthete::midi::Clip clip, int k)
{
    for (auto& n : clip.notes) n.pitch += k;
    synesthete::midi::sort_notes(clip.notes);
    return clip;
}

/// Fresh empty directory under the system temp dir, unique per process.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("synesthete_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing_support
