#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <boost/rational.hpp>

namespace synesthete {

/// Exact beat arithmetic for notation (quarter note = 1 beat).
using Rational = boost::rational<std::int64_t>;

std::string to_string(const Rational& r);

enum class Mode { major, minor };

struct Key {
    int tonic = 0;  // pitch class, C = 0
    Mode mode = Mode::major;

    bool operator==(const Key&) const = default;
};

const char* mode_name(Mode mode);
Mode mode_from_name(std::string_view name);

/// Conventional tonic spelling ("F#", "Bb", ...) for the key.
std::string tonic_name(const Key& key);

/// ABC K: field value, e.g. "C", "Em", "F#m", "Bb".
std::string key_to_abc(const Key& key);

/// Parses a K: field value. Accepts the major/minor spellings of the
/// supported subset ("Em", "Emin", "E minor", "Cmaj", "C").
Key key_from_abc(std::string_view text);

/// Sharps (> 0) or flats (< 0) in the key signature.
int key_signature(const Key& key);

/// Signature alteration (-1, 0, +1) for each letter C D E F G A B.
std::array<int, 7> letter_alterations(const Key& key);

/// Semitone offset of each letter C..B above C.
inline constexpr std::array<int, 7> kLetterSemitones = {0, 2, 4, 5, 7, 9, 11};

inline int pitch_class(int pitch) { return ((pitch % 12) + 12) % 12; }

}  // namespace synesthete
