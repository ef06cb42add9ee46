#include "synesthete/music.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace synesthete {

std::string to_string(const Rational& r)
{
    if (r.denominator() == 1) return std::to_string(r.numerator());
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

const char* mode_name(Mode mode)
{
    return mode == Mode::major ? "major" : "minor";
}

Mode mode_from_name(std::string_view name)
{
    if (name == "major") return Mode::major;
    if (name == "minor") return Mode::minor;
    throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

namespace {

constexpr std::array<const char*, 12> kMajorTonics = {"C", "Db", "D", "Eb", "E", "F",
                                                      "F#", "G", "Ab", "A", "Bb", "B"};
constexpr std::array<const char*, 12> kMinorTonics = {"C", "C#", "D", "Eb", "E", "F",
                                                      "F#", "G", "G#", "A", "Bb", "B"};
constexpr std::array<int, 12> kMajorSignature = {0, -5, 2, -3, 4, -1, 6, 1, -4, 3, -2, 5};
constexpr std::array<int, 12> kMinorSignature = {-3, 4, -1, -6, 1, -4, 3, -2, 5, 0, -5, 2};

// Letter indices (C=0 .. B=6) in order of sharps and of flats.
constexpr std::array<int, 7> kSharpOrder = {3, 0, 4, 1, 5, 2, 6};
constexpr std::array<int, 7> kFlatOrder = {6, 2, 5, 1, 4, 0, 3};

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

std::string tonic_name(const Key& key)
{
    const int pc = pitch_class(key.tonic);
    return key.mode == Mode::major ? kMajorTonics[pc] : kMinorTonics[pc];
}

std::string key_to_abc(const Key& key)
{
    return tonic_name(key) + (key.mode == Mode::minor ? "m" : "");
}

Key key_from_abc(std::string_view text)
{
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    std::string_view s = trim(text);
    if (s.empty()) throw std::invalid_argument("empty key");

    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front())));
    if (letter < 'A' || letter > 'G') throw std::invalid_argument("bad key tonic in '" + std::string(text) + "'");
    static constexpr std::string_view kLetters = "CDEFGAB";
    int pc = kLetterSemitones[kLetters.find(letter)];
    s.remove_prefix(1);
    if (!s.empty() && s.front() == '#') {
        pc += 1;
        s.remove_prefix(1);
    } else if (!s.empty() && s.front() == 'b') {
        pc -= 1;
        s.remove_prefix(1);
    }

    // Mode names are matched on their first three letters, as ABC does.
    const std::string mode = lower(trim(s));
    Key key{pitch_class(pc), Mode::major};
    if (mode.empty() || mode.starts_with("maj") || mode.starts_with("ion")) {
        key.mode = Mode::major;
    } else if (mode == "m" || mode.starts_with("min") || mode.starts_with("aeo")) {
        key.mode = Mode::minor;
    } else {
        throw std::invalid_argument("unsupported key mode in '" + std::string(text) + "'");
    }
    return key;
}

int key_signature(const Key& key)
{
    const int pc = pitch_class(key.tonic);
    return key.mode == Mode::major ? kMajorSignature[pc] : kMinorSignature[pc];
}

std::array<int, 7> letter_alterations(const Key& key)
{
    std::array<int, 7> alt{};
    const int sig = key_signature(key);
    for (int i = 0; i < std::abs(sig); ++i) {
        if (sig > 0) alt[kSharpOrder[i]] = 1;
        else alt[kFlatOrder[i]] = -1;
    }
    return alt;
}

}  // namespace synesthete
