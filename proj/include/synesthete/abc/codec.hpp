#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "synesthete/midi/events.hpp"
#include "synesthete/music.hpp"

namespace synesthete::abc {

class AbcError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parse failure with a 1-based source position.
class AbcParseError : public AbcError {
public:
    AbcParseError(const std::string& what, int line, int column);
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

struct Meter {
    int numerator = 4;
    int denominator = 4;

    /// Bar length in quarter-note beats.
    Rational beats() const { return Rational(4 * numerator, denominator); }
    bool operator==(const Meter&) const = default;
};

Meter parse_meter(std::string_view text);
std::string to_string(const Meter& meter);

struct Tempo {
    Rational beat_unit{1, 4};
    int bpm = 120;
    bool operator==(const Tempo&) const = default;
};

struct VoiceDef {
    std::string id;
    std::string label;
    int channel = 1;
    int program = 0;
    bool bass_clef = false;
    bool operator==(const VoiceDef&) const = default;
};

struct AbcHeader {
    int index = 1;
    Meter meter;
    Rational unit_note_length{1, 8};
    Tempo tempo;
    Key key;
    std::vector<VoiceDef> voices;
    bool operator==(const AbcHeader&) const = default;
};

enum class TokenKind { note, rest, chord, bar, accent };

struct AbcNote {
    int pitch = 60;
    Rational length{1};  // in units of L
    bool operator==(const AbcNote&) const = default;
};

/// One body token. Notes carry a single entry in `notes`; chords carry one
/// per bracketed note and advance time by the first note's length. Rests
/// use `length`. Bars keep their source text ("|", "||", "|]").
struct AbcToken {
    TokenKind kind = TokenKind::note;
    std::vector<AbcNote> notes;
    Rational length{1};
    std::string bar;
    int line = 0;
    int column = 0;

    /// Time advanced by this token, in units of L.
    Rational advance() const;
    bool same_content(const AbcToken& other) const;
};

struct AbcScore {
    AbcHeader header;
    std::vector<std::string> voice_order;
    std::map<std::string, std::vector<AbcToken>> voices;

    const VoiceDef* voice(std::string_view id) const;
};

/// A note in absolute beat time (quarter = 1) as carried by a score.
struct ScoreNote {
    int pitch = 0;
    Rational onset{0};
    Rational duration{1};
    int voice = 1;
    bool operator==(const ScoreNote&) const = default;
};

bool score_note_less(const ScoreNote& a, const ScoreNote& b);

struct EncodeOptions {
    Rational grid{1, 16};             // quantization step as a fraction of a whole note
    Rational unit_note_length{1, 8};  // L: field
    int voice_split = 60;             // pitches below go to the bass voice
    int accent_velocity = 100;
    int index = 1;
    int bars_per_line = 4;
};

inline constexpr int kUpperVoice = 1;
inline constexpr int kBassVoice = 2;

/// Spelling of a single pitch in `key` with no bar-local accidentals in
/// effect, e.g. 60 -> "C", 72 -> "c", 63 in E minor -> "_E".
std::string pitch_to_abc(int pitch, const Key& key);

/// Length suffix for `beats` relative to `unit_note_length`, after snapping
/// to `grid`: "" for one unit, "2", "/2", "3/2", ...
std::string duration_to_abc(double beats, Rational unit_note_length, Rational grid = Rational(1, 16));

/// Suffix for an exact multiple of L.
std::string length_suffix(Rational multiplier);

struct QuantizedNote {
    ScoreNote note;
    int velocity = 0;
};

/// The representable form of a clip: onsets and durations snapped to the
/// grid (minimum one step), voices split by register, duplicate
/// (voice, onset, pitch) merged, and each note clipped so it ends no later
/// than the next onset in its voice or the end of its bar. This is exactly
/// what a rendered score carries.
std::vector<QuantizedNote> quantize_clip(const midi::Clip& clip, int bpm, const Meter& meter,
                                         const EncodeOptions& options = {});

std::vector<ScoreNote> quantized_notes(const midi::Clip& clip, int bpm, const Meter& meter,
                                       const EncodeOptions& options = {});

struct EncodedClip {
    AbcScore score;
    std::string text;
    std::vector<ScoreNote> notes;  // quantized, sorted by score_note_less
};

/// Throws AbcError for an empty clip.
EncodedClip encode_clip(const midi::Clip& clip, int bpm, const Meter& meter, const Key& key,
                        const EncodeOptions& options = {});

/// Byte-stable text rendering. Accidentals are spelled per key signature and
/// bar-local accidental state.
std::string render(const AbcScore& score, int bars_per_line = 4);

/// Parses the supported subset: X/T/M/L/Q/K/V fields, %%MIDI program
/// directives, notes, rests, chords, bar lines and accent decorations.
AbcScore parse_abc(std::string_view text);

/// Absolute note list; each voice keeps its own clock, chords expand to
/// simultaneous notes. Sorted by score_note_less.
std::vector<ScoreNote> score_to_notes(const AbcScore& score);

/// Numeric voice number for a voice id: the id itself when numeric,
/// otherwise its 1-based position in the score.
int voice_number(const AbcScore& score, const std::string& id);

}  // namespace synesthete::abc
