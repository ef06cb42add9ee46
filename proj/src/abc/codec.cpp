#include "synesthete/abc/codec.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

namespace synesthete::abc {

using synesthete::to_string;

AbcParseError::AbcParseError(const std::string& what, int line, int column)
    : AbcError("ABC parse error at line " + std::to_string(line) + ", column " + std::to_string(column) + ": "
               + what),
      line_(line), column_(column)
{
}

Meter parse_meter(std::string_view text)
{
    std::string s(text);
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
    if (s == "C") return {4, 4};
    if (s == "C|") return {2, 2};
    const auto slash = s.find('/');
    if (slash == std::string::npos) throw AbcError("bad meter '" + std::string(text) + "'");
    Meter m;
    auto [p1, e1] = std::from_chars(s.data(), s.data() + slash, m.numerator);
    auto [p2, e2] = std::from_chars(s.data() + slash + 1, s.data() + s.size(), m.denominator);
    if (e1 != std::errc{} || e2 != std::errc{} || p1 != s.data() + slash || p2 != s.data() + s.size()
        || m.numerator <= 0 || m.denominator <= 0) {
        throw AbcError("bad meter '" + std::string(text) + "'");
    }
    return m;
}

std::string to_string(const Meter& meter)
{
    return std::to_string(meter.numerator) + "/" + std::to_string(meter.denominator);
}

Rational AbcToken::advance() const
{
    switch (kind) {
    case TokenKind::note:
    case TokenKind::chord: return notes.empty() ? Rational(0) : notes.front().length;
    case TokenKind::rest: return length;
    default: return Rational(0);
    }
}

bool AbcToken::same_content(const AbcToken& other) const
{
    return kind == other.kind && notes == other.notes && length == other.length && bar == other.bar;
}

const VoiceDef* AbcScore::voice(std::string_view id) const
{
    for (const VoiceDef& v : header.voices) {
        if (v.id == id) return &v;
    }
    return nullptr;
}

bool score_note_less(const ScoreNote& a, const ScoreNote& b)
{
    return std::tie(a.onset, a.pitch, a.voice, a.duration) < std::tie(b.onset, b.pitch, b.voice, b.duration);
}

namespace {

constexpr std::string_view kLetters = "CDEFGAB";

std::int64_t floor_div(std::int64_t a, std::int64_t b)
{
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

struct Spelling {
    int letter = 0;
    int alteration = 0;
    int octave = 0;  // 5 is the octave starting at middle C
};

Spelling spell(int pitch, const std::array<int, 7>& key_alts)
{
    const int pc = pitch_class(pitch);
    Spelling s;
    bool found = false;
    for (int l = 0; l < 7 && !found; ++l) {
        if (pitch_class(kLetterSemitones[l] + key_alts[l]) == pc) {
            s.letter = l;
            s.alteration = key_alts[l];
            found = true;
        }
    }
    // Chromatic notes: the natural letter when there is one, else a flat.
    for (int l = 0; l < 7 && !found; ++l) {
        if (kLetterSemitones[l] == pc) {
            s.letter = l;
            s.alteration = 0;
            found = true;
        }
    }
    for (int l = 0; l < 7 && !found; ++l) {
        if (kLetterSemitones[l] == pitch_class(pc + 1)) {
            s.letter = l;
            s.alteration = -1;
            found = true;
        }
    }
    s.octave = static_cast<int>(floor_div(pitch - s.alteration - kLetterSemitones[s.letter], 12));
    return s;
}

/// Accidentals written in a bar apply to the same letter and octave until
/// the next bar line.
class AccidentalState {
public:
    explicit AccidentalState(const Key& key) : key_alts_(letter_alterations(key)) {}

    int effective(int letter, int octave) const
    {
        auto it = bar_.find(slot(letter, octave));
        return it != bar_.end() ? it->second : key_alts_[letter];
    }
    void set(int letter, int octave, int alteration) { bar_[slot(letter, octave)] = alteration; }
    void new_bar() { bar_.clear(); }
    void set_key(const Key& key)
    {
        key_alts_ = letter_alterations(key);
        bar_.clear();
    }
    const std::array<int, 7>& key_alts() const { return key_alts_; }

private:
    static int slot(int letter, int octave) { return octave * 7 + letter; }

    std::array<int, 7> key_alts_;
    std::map<int, int> bar_;
};

std::string accidental_text(int alteration)
{
    switch (alteration) {
    case -2: return "__";
    case -1: return "_";
    case 0: return "=";
    case 1: return "^";
    case 2: return "^^";
    }
    throw AbcError("unsupported alteration " + std::to_string(alteration));
}

std::string letter_text(int letter, int octave)
{
    std::string out;
    if (octave >= 6) {
        out += static_cast<char>(std::tolower(kLetters[letter]));
        out.append(static_cast<std::size_t>(octave - 6), '\'');
    } else {
        out += kLetters[letter];
        out.append(static_cast<std::size_t>(5 - octave), ',');
    }
    return out;
}

std::string render_pitch(int pitch, AccidentalState& state)
{
    const Spelling s = spell(pitch, state.key_alts());
    std::string out;
    if (state.effective(s.letter, s.octave) != s.alteration) {
        out += accidental_text(s.alteration);
        state.set(s.letter, s.octave, s.alteration);
    }
    return out + letter_text(s.letter, s.octave);
}

std::string render_tokens(const std::vector<AbcToken>& tokens, const Key& key, int bars_per_line)
{
    AccidentalState state(key);
    std::string out;
    bool glue = true;  // no separator before the next token
    int bars_on_line = 0;
    auto sep = [&] {
        if (!glue) out += ' ';
        glue = false;
    };
    for (const AbcToken& tok : tokens) {
        switch (tok.kind) {
        case TokenKind::accent:
            sep();
            out += '>';
            glue = true;
            break;
        case TokenKind::note:
            sep();
            out += render_pitch(tok.notes.front().pitch, state) + length_suffix(tok.notes.front().length);
            break;
        case TokenKind::chord: {
            sep();
            const bool uniform = std::all_of(tok.notes.begin(), tok.notes.end(),
                                             [&](const AbcNote& n) { return n.length == tok.notes.front().length; });
            out += '[';
            for (const AbcNote& n : tok.notes) {
                out += render_pitch(n.pitch, state);
                if (!uniform) out += length_suffix(n.length);
            }
            out += ']';
            if (uniform) out += length_suffix(tok.notes.front().length);
            break;
        }
        case TokenKind::rest:
            sep();
            out += 'z' + length_suffix(tok.length);
            break;
        case TokenKind::bar:
            sep();
            out += tok.bar;
            state.new_bar();
            if (bars_per_line > 0 && ++bars_on_line == bars_per_line) {
                out += '\n';
                glue = true;
                bars_on_line = 0;
            }
            break;
        }
    }
    if (!out.empty() && out.back() != '\n') out += '\n';
    return out;
}

}  // namespace

std::string pitch_to_abc(int pitch, const Key& key)
{
    if (pitch < 0 || pitch > 127) throw AbcError("pitch out of range: " + std::to_string(pitch));
    AccidentalState state(key);
    return render_pitch(pitch, state);
}

std::string length_suffix(Rational multiplier)
{
    if (multiplier <= 0) throw AbcError("non-positive note length " + to_string(multiplier));
    const auto num = multiplier.numerator();
    const auto den = multiplier.denominator();
    if (den == 1) return num == 1 ? std::string() : std::to_string(num);
    return (num == 1 ? std::string() : std::to_string(num)) + "/" + std::to_string(den);
}

std::string duration_to_abc(double beats, Rational unit_note_length, Rational grid)
{
    if (!(beats > 0)) throw AbcError("duration must be positive");
    const Rational grid_beats = grid * 4;
    const double steps = beats / boost::rational_cast<double>(grid_beats);
    const std::int64_t ticks = std::max<std::int64_t>(1, std::llround(steps));
    return length_suffix(grid_beats * ticks / (unit_note_length * 4));
}

std::vector<QuantizedNote> quantize_clip(const midi::Clip& clip, int bpm, const Meter& meter,
                                         const EncodeOptions& options)
{
    if (bpm <= 0) throw AbcError("tempo must be positive");
    const Rational grid_beats = options.grid * 4;
    const Rational bar_in_steps = meter.beats() / grid_beats;
    if (bar_in_steps.denominator() != 1) {
        throw AbcError("meter " + to_string(meter) + " is not a whole number of grid steps");
    }
    const std::int64_t bar_steps = bar_in_steps.numerator();

    // steps = micros * bpm / 60e6 / grid_beats, rounded half up
    const std::int64_t num = static_cast<std::int64_t>(bpm) * grid_beats.denominator();
    const std::int64_t den = 60'000'000LL * grid_beats.numerator();
    auto to_steps = [&](std::int64_t micros) {
        const std::int64_t n = micros * num;
        return floor_div(2 * n + den, 2 * den);
    };

    struct Cell {
        std::int64_t onset;
        std::int64_t length;
        int pitch;
        int voice;
        int velocity;
    };
    std::vector<Cell> cells;
    cells.reserve(clip.notes.size());
    for (const midi::NoteEvent& n : clip.notes) {
        Cell c;
        c.onset = std::max<std::int64_t>(0, to_steps(n.onset - clip.window_start));
        c.length = std::max<std::int64_t>(1, to_steps(n.duration));
        c.pitch = n.pitch;
        c.voice = n.pitch < options.voice_split ? kBassVoice : kUpperVoice;
        c.velocity = n.velocity;
        cells.push_back(c);
    }
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        return std::tie(a.voice, a.onset, a.pitch) < std::tie(b.voice, b.onset, b.pitch);
    });

    std::vector<Cell> merged;
    for (const Cell& c : cells) {
        if (!merged.empty() && merged.back().voice == c.voice && merged.back().onset == c.onset
            && merged.back().pitch == c.pitch) {
            merged.back().length = std::max(merged.back().length, c.length);
            merged.back().velocity = std::max(merged.back().velocity, c.velocity);
        } else {
            merged.push_back(c);
        }
    }

    for (std::size_t i = 0; i < merged.size(); ++i) {
        Cell& c = merged[i];
        std::size_t j = i + 1;
        while (j < merged.size() && merged[j].voice == c.voice && merged[j].onset == c.onset) ++j;
        if (j < merged.size() && merged[j].voice == c.voice) {
            c.length = std::min(c.length, merged[j].onset - c.onset);
        }
        const std::int64_t bar_end = (c.onset / bar_steps + 1) * bar_steps;
        c.length = std::min(c.length, bar_end - c.onset);
    }

    std::vector<QuantizedNote> out;
    out.reserve(merged.size());
    for (const Cell& c : merged) {
        QuantizedNote q;
        q.note.pitch = c.pitch;
        q.note.onset = grid_beats * c.onset;
        q.note.duration = grid_beats * c.length;
        q.note.voice = c.voice;
        q.velocity = c.velocity;
        out.push_back(q);
    }
    std::sort(out.begin(), out.end(),
              [](const QuantizedNote& a, const QuantizedNote& b) { return score_note_less(a.note, b.note); });
    return out;
}

std::vector<ScoreNote> quantized_notes(const midi::Clip& clip, int bpm, const Meter& meter,
                                       const EncodeOptions& options)
{
    std::vector<ScoreNote> out;
    for (const QuantizedNote& q : quantize_clip(clip, bpm, meter, options)) out.push_back(q.note);
    return out;
}

namespace {

std::vector<AbcToken> build_voice(std::vector<QuantizedNote> notes, const Meter& meter, const EncodeOptions& options)
{
    const Rational unit_beats = options.unit_note_length * 4;
    const Rational bar_beats = meter.beats();
    std::vector<AbcToken> tokens;

    auto at_barline = [&](Rational t) {
        const Rational bars = t / bar_beats;
        return t > 0 && bars.denominator() == 1;
    };
    auto push_bar = [&] {
        AbcToken bar;
        bar.kind = TokenKind::bar;
        bar.bar = "|";
        tokens.push_back(bar);
    };

    std::sort(notes.begin(), notes.end(), [](const QuantizedNote& a, const QuantizedNote& b) {
        return std::tie(a.note.onset, a.note.pitch) < std::tie(b.note.onset, b.note.pitch);
    });

    Rational t{0};
    std::size_t i = 0;
    while (i < notes.size()) {
        const Rational onset = notes[i].note.onset;
        std::size_t j = i;
        while (j < notes.size() && notes[j].note.onset == onset) ++j;

        while (t < onset) {
            const Rational next_bar = bar_beats * (boost::rational_cast<std::int64_t>(t / bar_beats) + 1);
            const Rational seg_end = std::min(onset, next_bar);
            AbcToken rest;
            rest.kind = TokenKind::rest;
            rest.length = (seg_end - t) / unit_beats;
            tokens.push_back(rest);
            t = seg_end;
            if (at_barline(t)) push_bar();
        }

        std::vector<QuantizedNote> group(notes.begin() + static_cast<std::ptrdiff_t>(i),
                                         notes.begin() + static_cast<std::ptrdiff_t>(j));
        // The first note of a chord sets its advance, so the longest leads.
        std::stable_sort(group.begin(), group.end(), [](const QuantizedNote& a, const QuantizedNote& b) {
            if (a.note.duration != b.note.duration) return a.note.duration > b.note.duration;
            return a.note.pitch < b.note.pitch;
        });
        const bool accented = std::any_of(group.begin(), group.end(), [&](const QuantizedNote& q) {
            return q.velocity >= options.accent_velocity;
        });
        if (accented) {
            AbcToken accent;
            accent.kind = TokenKind::accent;
            tokens.push_back(accent);
        }
        AbcToken tok;
        tok.kind = group.size() == 1 ? TokenKind::note : TokenKind::chord;
        for (const QuantizedNote& q : group) {
            tok.notes.push_back(AbcNote{q.note.pitch, q.note.duration / unit_beats});
        }
        tokens.push_back(tok);
        t += group.front().note.duration;
        if (at_barline(t)) push_bar();
        i = j;
    }
    return tokens;
}

}  // namespace

EncodedClip encode_clip(const midi::Clip& clip, int bpm, const Meter& meter, const Key& key,
                        const EncodeOptions& options)
{
    if (clip.notes.empty()) throw AbcError("cannot encode an empty clip");
    const std::vector<QuantizedNote> quantized = quantize_clip(clip, bpm, meter, options);

    EncodedClip out;
    AbcHeader& h = out.score.header;
    h.index = options.index;
    h.meter = meter;
    h.unit_note_length = options.unit_note_length;
    h.tempo = Tempo{Rational(1, 4), bpm};
    h.key = key;

    for (int voice : {kUpperVoice, kBassVoice}) {
        std::vector<QuantizedNote> part;
        for (const QuantizedNote& q : quantized) {
            if (q.note.voice == voice) part.push_back(q);
        }
        if (part.empty()) continue;
        const std::string id = std::to_string(voice);
        VoiceDef def;
        def.id = id;
        def.label = voice == kBassVoice ? "bass" : "melody";
        def.bass_clef = voice == kBassVoice;
        h.voices.push_back(def);
        out.score.voice_order.push_back(id);
        out.score.voices[id] = build_voice(std::move(part), meter, options);
    }

    out.text = render(out.score, options.bars_per_line);
    for (const QuantizedNote& q : quantized) out.notes.push_back(q.note);
    return out;
}

std::string render(const AbcScore& score, int bars_per_line)
{
    const AbcHeader& h = score.header;
    std::ostringstream os;
    os << "X:" << h.index << '\n';
    os << "M:" << to_string(h.meter) << '\n';
    os << "L:" << to_string(h.unit_note_length) << '\n';
    os << "Q:" << to_string(h.tempo.beat_unit) << '=' << h.tempo.bpm << '\n';
    for (const VoiceDef& v : h.voices) {
        os << "V:" << v.id;
        if (!v.label.empty()) os << " name=\"" << v.label << '"';
        if (v.bass_clef) os << " clef=bass";
        os << '\n';
        os << "%%MIDI program " << v.channel << ' ' << v.program << '\n';
    }
    os << "K:" << key_to_abc(h.key) << '\n';

    const bool single_implicit = h.voices.empty() && score.voice_order.size() == 1;
    for (const std::string& id : score.voice_order) {
        if (!single_implicit) os << "V:" << id << '\n';
        auto it = score.voices.find(id);
        if (it != score.voices.end()) os << render_tokens(it->second, h.key, bars_per_line);
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class BodyParser {
public:
    BodyParser(AbcScore& score, int line_no) : score_(score), line_no_(line_no) {}

    void parse_line(std::string_view line, std::string& voice, std::map<std::string, AccidentalState>& states)
    {
        line_ = line;
        pos_ = 0;
        while (pos_ < line_.size()) {
            const char c = line_[pos_];
            const int col = static_cast<int>(pos_) + 1;
            if (c == ' ' || c == '\t' || c == '`' || c == '\r') {
                ++pos_;
            } else if (c == '%') {
                return;
            } else if (c == '\\') {
                ++pos_;
            } else if (c == '>') {
                ++pos_;
                if (!at_note_start()) fail("broken rhythm is not supported; '>' must precede a note", col);
                push(voice, accent_token(col));
            } else if (c == '!') {
                parse_decoration(voice, col);
            } else if (c == '|') {
                ++pos_;
                std::string text = "|";
                if (pos_ < line_.size() && (line_[pos_] == '|' || line_[pos_] == ']')) text += line_[pos_++];
                if (pos_ < line_.size() && line_[pos_] == ':') fail("repeat bar lines are not supported", col);
                push_bar(voice, text, col, states);
            } else if (c == '[') {
                if (pos_ + 1 < line_.size() && line_[pos_ + 1] == '|') {
                    pos_ += 2;
                    push_bar(voice, "[|", col, states);
                } else if (pos_ + 2 < line_.size() && std::isalpha(static_cast<unsigned char>(line_[pos_ + 1]))
                           && line_[pos_ + 2] == ':') {
                    parse_inline_field(voice, col, states);
                } else {
                    parse_chord(voice, col, state_for(voice, states));
                }
            } else if (c == ']') {
                fail("unbalanced chord bracket ']'", col);
            } else if (c == 'z' || c == 'x') {
                ++pos_;
                AbcToken rest;
                rest.kind = TokenKind::rest;
                rest.length = parse_length();
                rest.line = line_no_;
                rest.column = col;
                push(voice, rest);
            } else if (is_note_char(c)) {
                AbcToken tok;
                tok.kind = TokenKind::note;
                tok.line = line_no_;
                tok.column = col;
                tok.notes.push_back(parse_note(state_for(voice, states)));
                push(voice, tok);
            } else {
                fail(std::string("unknown token '") + c + "'", col);
            }
        }
    }

    void switch_voice(const std::string& spec, std::string& voice, int col)
    {
        std::istringstream is(spec);
        std::string id;
        is >> id;
        if (id.empty()) fail("V: field without an id", col);
        define_voice(score_, spec);
        voice = id;
        ensure_voice(voice);
    }

    static void define_voice(AbcScore& score, const std::string& spec)
    {
        std::istringstream is(spec);
        std::string id;
        is >> id;
        VoiceDef* def = nullptr;
        for (VoiceDef& v : score.header.voices) {
            if (v.id == id) def = &v;
        }
        if (def == nullptr) {
            score.header.voices.push_back(VoiceDef{id, "", 1, 0, false});
            def = &score.header.voices.back();
        }
        const std::string rest = spec.substr(std::min(spec.size(), spec.find(id) + id.size()));
        for (const char* prop : {"name=", "nm="}) {
            const auto at = rest.find(prop);
            if (at == std::string::npos) continue;
            auto begin = at + std::char_traits<char>::length(prop);
            if (begin < rest.size() && rest[begin] == '"') {
                const auto close = rest.find('"', begin + 1);
                def->label = rest.substr(begin + 1, close == std::string::npos ? std::string::npos : close - begin - 1);
            } else {
                auto end = rest.find(' ', begin);
                def->label = rest.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
            }
            break;
        }
        if (rest.find("clef=bass") != std::string::npos) def->bass_clef = true;
    }

    void ensure_voice(const std::string& voice)
    {
        if (!score_.voices.contains(voice)) {
            score_.voices[voice];
            score_.voice_order.push_back(voice);
        }
    }

    static bool is_note_char(char c)
    {
        return c == '^' || c == '_' || c == '=' || (c >= 'A' && c <= 'G') || (c >= 'a' && c <= 'g');
    }

private:
    [[noreturn]] void fail(const std::string& what, int col) const { throw AbcParseError(what, line_no_, col); }

    bool at_note_start() const
    {
        if (pos_ >= line_.size()) return false;
        return is_note_char(line_[pos_]) || line_[pos_] == '[';
    }

    AccidentalState& state_for(const std::string& voice, std::map<std::string, AccidentalState>& states)
    {
        auto it = states.find(voice);
        if (it == states.end()) it = states.emplace(voice, AccidentalState(score_.header.key)).first;
        return it->second;
    }

    AbcToken accent_token(int col) const
    {
        AbcToken tok;
        tok.kind = TokenKind::accent;
        tok.line = line_no_;
        tok.column = col;
        return tok;
    }

    void push(const std::string& voice, AbcToken tok)
    {
        ensure_voice(voice);
        score_.voices[voice].push_back(std::move(tok));
    }

    void push_bar(const std::string& voice, const std::string& text, int col,
                  std::map<std::string, AccidentalState>& states)
    {
        AbcToken bar;
        bar.kind = TokenKind::bar;
        bar.bar = text;
        bar.line = line_no_;
        bar.column = col;
        push(voice, bar);
        state_for(voice, states).new_bar();
    }

    void parse_decoration(const std::string& voice, int col)
    {
        const auto close = line_.find('!', pos_ + 1);
        if (close == std::string_view::npos) fail("unterminated decoration", col);
        const std::string_view name = line_.substr(pos_ + 1, close - pos_ - 1);
        pos_ = close + 1;
        if (name == ">" || name == "accent" || name == "emphasis") {
            if (!at_note_start()) fail("accent must precede a note", col);
            push(voice, accent_token(col));
            return;
        }
        fail("unsupported decoration !" + std::string(name) + "!", col);
    }

    void parse_inline_field(std::string& voice, int col, std::map<std::string, AccidentalState>& states)
    {
        const auto close = line_.find(']', pos_);
        if (close == std::string_view::npos) fail("unbalanced inline field bracket", col);
        const char field = line_[pos_ + 1];
        const std::string value(line_.substr(pos_ + 3, close - pos_ - 3));
        pos_ = close + 1;
        switch (field) {
        case 'V': switch_voice(value, voice, col); break;
        case 'K':
            score_.header.key = key_from_abc(value);
            for (auto& [id, st] : states) st.set_key(score_.header.key);
            break;
        case 'L': score_.header.unit_note_length = parse_fraction(value, col); break;
        case 'M': score_.header.meter = parse_meter(value); break;
        default: break;
        }
    }

    Rational parse_fraction(const std::string& value, int col) const
    {
        const auto slash = value.find('/');
        try {
            if (slash == std::string::npos) return Rational(std::stoll(value));
            return Rational(std::stoll(value.substr(0, slash)), std::stoll(value.substr(slash + 1)));
        } catch (const std::exception&) {
            fail("bad fraction '" + value + "'", col);
        }
    }

    std::int64_t read_int()
    {
        std::int64_t v = 0;
        const std::size_t start = pos_;
        while (pos_ < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_]))) {
            v = v * 10 + (line_[pos_] - '0');
            if (v > 1'000'000) fail("number too large", static_cast<int>(start) + 1);
            ++pos_;
        }
        return v;
    }

    Rational parse_length()
    {
        const int col = static_cast<int>(pos_) + 1;
        std::int64_t num = 1;
        if (pos_ < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_]))) num = read_int();
        std::int64_t den = 1;
        if (pos_ < line_.size() && line_[pos_] == '/') {
            ++pos_;
            if (pos_ < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_]))) {
                den = read_int();
            } else {
                den = 2;
                while (pos_ < line_.size() && line_[pos_] == '/') {
                    den *= 2;
                    ++pos_;
                }
            }
        }
        if (num == 0 || den == 0) fail("zero note length", col);
        return Rational(num, den);
    }

    AbcNote parse_note(AccidentalState& state)
    {
        const int col = static_cast<int>(pos_) + 1;
        bool explicit_acc = false;
        int alteration = 0;
        while (pos_ < line_.size() && (line_[pos_] == '^' || line_[pos_] == '_' || line_[pos_] == '=')) {
            const char a = line_[pos_++];
            if (a == '=') {
                alteration = 0;
            } else {
                alteration += a == '^' ? 1 : -1;
            }
            explicit_acc = true;
        }
        if (pos_ >= line_.size()) fail("accidental without a note", col);
        const char c = line_[pos_];
        const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        const auto letter_pos = kLetters.find(upper);
        if (letter_pos == std::string_view::npos || !std::isalpha(static_cast<unsigned char>(c))) {
            fail(std::string("expected a note letter, got '") + c + "'", static_cast<int>(pos_) + 1);
        }
        const int letter = static_cast<int>(letter_pos);
        int octave = std::islower(static_cast<unsigned char>(c)) ? 6 : 5;
        ++pos_;
        while (pos_ < line_.size() && (line_[pos_] == '\'' || line_[pos_] == ',')) {
            octave += line_[pos_] == '\'' ? 1 : -1;
            ++pos_;
        }
        if (explicit_acc) {
            if (alteration < -2 || alteration > 2) fail("too many accidentals", col);
            state.set(letter, octave, alteration);
        } else {
            alteration = state.effective(letter, octave);
        }
        const int pitch = octave * 12 + kLetterSemitones[letter] + alteration;
        if (pitch < 0 || pitch > 127) fail("note outside MIDI range", col);
        AbcNote note;
        note.pitch = pitch;
        note.length = parse_length();
        return note;
    }

    void parse_chord(const std::string& voice, int col, AccidentalState& state)
    {
        ++pos_;
        AbcToken tok;
        tok.kind = TokenKind::chord;
        tok.line = line_no_;
        tok.column = col;
        for (;;) {
            if (pos_ >= line_.size()) fail("unbalanced chord bracket '['", col);
            const char c = line_[pos_];
            if (c == ']') {
                ++pos_;
                break;
            }
            if (c == ' ' || c == '\t') {
                ++pos_;
                continue;
            }
            if (!is_note_char(c)) fail(std::string("unexpected '") + c + "' inside chord", static_cast<int>(pos_) + 1);
            tok.notes.push_back(parse_note(state));
        }
        if (tok.notes.empty()) fail("empty chord", col);
        const Rational outer = parse_length();
        for (AbcNote& n : tok.notes) n.length *= outer;
        if (tok.notes.size() == 1) tok.kind = TokenKind::note;
        push(voice, std::move(tok));
    }

    AbcScore& score_;
    int line_no_;
    std::string_view line_;
    std::size_t pos_ = 0;
};

Tempo parse_tempo(const std::string& value, const Rational& unit, int line)
{
    // "1/4=96", "96", or with a quoted label: "\"Largo\" 1/4=96"
    std::string s = value;
    for (auto q = s.find('"'); q != std::string::npos; q = s.find('"')) {
        const auto close = s.find('"', q + 1);
        s.erase(q, close == std::string::npos ? std::string::npos : close - q + 1);
    }
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
    try {
        Tempo t;
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            t.beat_unit = unit;
            t.bpm = std::stoi(s);
        } else {
            const std::string unit_text = s.substr(0, eq);
            const auto slash = unit_text.find('/');
            if (slash == std::string::npos) throw AbcError("bad beat unit");
            t.beat_unit = Rational(std::stoll(unit_text.substr(0, slash)), std::stoll(unit_text.substr(slash + 1)));
            t.bpm = std::stoi(s.substr(eq + 1));
        }
        if (t.bpm <= 0 || t.beat_unit <= 0) throw AbcError("non-positive tempo");
        return t;
    } catch (const std::exception&) {
        throw AbcParseError("bad tempo field 'Q:" + value + "'", line, 1);
    }
}

bool is_field_line(std::string_view line)
{
    return line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) && line[1] == ':';
}

}  // namespace

AbcScore parse_abc(std::string_view text)
{
    AbcScore score;
    bool in_header = true;
    std::string current_voice = "1";
    std::string last_defined;
    std::map<std::string, AccidentalState> states;

    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        std::string_view trimmed = line;
        while (!trimmed.empty() && (trimmed.front() == ' ' || trimmed.front() == '\t')) trimmed.remove_prefix(1);
        if (trimmed.empty()) {
            if (end == text.size()) break;
            continue;
        }

        if (trimmed.starts_with("%%")) {
            std::istringstream is{std::string(trimmed.substr(2))};
            std::string word, sub;
            is >> word >> sub;
            if (word == "MIDI" && sub == "program") {
                std::vector<int> nums;
                int v = 0;
                while (is >> v) nums.push_back(v);
                const std::string target = last_defined.empty() ? current_voice : last_defined;
                for (VoiceDef& def : score.header.voices) {
                    if (def.id != target) continue;
                    if (nums.size() >= 2) {
                        def.channel = nums[0];
                        def.program = nums[1];
                    } else if (nums.size() == 1) {
                        def.program = nums[0];
                    }
                }
            }
        } else if (trimmed.front() == '%') {
            // comment
        } else if (is_field_line(trimmed)) {
            const char field = trimmed[0];
            std::string value(trimmed.substr(2));
            while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front()))) value.erase(0, 1);
            while (!value.empty() && std::isspace(static_cast<unsigned char>(value.back()))) value.pop_back();
            try {
                switch (field) {
                case 'X': score.header.index = std::stoi(value); break;
                case 'M': score.header.meter = parse_meter(value); break;
                case 'L': {
                    const auto slash = value.find('/');
                    if (slash == std::string::npos) throw AbcError("bad unit note length");
                    score.header.unit_note_length =
                        Rational(std::stoll(value.substr(0, slash)), std::stoll(value.substr(slash + 1)));
                    break;
                }
                case 'Q': score.header.tempo = parse_tempo(value, score.header.unit_note_length, line_no); break;
                case 'K':
                    score.header.key = key_from_abc(value);
                    for (auto& [id, st] : states) st.set_key(score.header.key);
                    in_header = false;
                    break;
                case 'V': {
                    if (in_header) {
                        BodyParser::define_voice(score, value);
                        std::istringstream is(value);
                        is >> last_defined;
                    } else {
                        BodyParser body(score, line_no);
                        body.switch_voice(value, current_voice, 1);
                        last_defined = current_voice;
                    }
                    break;
                }
                default: break;  // T:, C:, and other informational fields
                }
            } catch (const AbcParseError&) {
                throw;
            } catch (const std::exception& e) {
                throw AbcParseError(e.what(), line_no, 1);
            }
        } else {
            in_header = false;
            last_defined.clear();
            BodyParser body(score, line_no);
            body.parse_line(line, current_voice, states);
        }
        if (end == text.size()) break;
    }
    return score;
}

int voice_number(const AbcScore& score, const std::string& id)
{
    int value = 0;
    auto [p, ec] = std::from_chars(id.data(), id.data() + id.size(), value);
    if (ec == std::errc{} && p == id.data() + id.size()) return value;
    const auto it = std::find(score.voice_order.begin(), score.voice_order.end(), id);
    return static_cast<int>(it - score.voice_order.begin()) + 1;
}

std::vector<ScoreNote> score_to_notes(const AbcScore& score)
{
    std::vector<ScoreNote> out;
    const Rational unit_beats = score.header.unit_note_length * 4;
    for (const std::string& id : score.voice_order) {
        const int voice = voice_number(score, id);
        Rational t{0};
        auto it = score.voices.find(id);
        if (it == score.voices.end()) continue;
        for (const AbcToken& tok : it->second) {
            if (tok.kind == TokenKind::note || tok.kind == TokenKind::chord) {
                for (const AbcNote& n : tok.notes) {
                    out.push_back(ScoreNote{n.pitch, t, n.length * unit_beats, voice});
                }
            }
            t += tok.advance() * unit_beats;
        }
    }
    std::sort(out.begin(), out.end(), score_note_less);
    return out;
}

}  // namespace synesthete::abc
