#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace synesthete::midi {

/// Microseconds since session start.
using Micros = std::int64_t;

enum class EventKind { note_on, note_off, control_change };

/// One raw message as captured from a device or replayed from a file.
/// For control_change, `pitch` carries the controller number and `velocity`
/// the controller value.
struct RawMidiEvent {
    EventKind kind = EventKind::note_on;
    int pitch = 0;
    int velocity = 0;
    Micros timestamp = 0;

    bool operator==(const RawMidiEvent&) const = default;
};

struct NoteEvent {
    int pitch = 0;
    int velocity = 0;
    Micros onset = 0;
    Micros duration = 0;
    int voice = 0;

    Micros end() const { return onset + duration; }
    bool operator==(const NoteEvent&) const = default;
};

/// A closed analysis window. Notes are sorted by (onset, pitch) and every
/// onset lies in [window_start, window_end).
struct Clip {
    std::vector<NoteEvent> notes;
    Micros window_start = 0;
    Micros window_end = 0;
    int clip_index = 0;

    Micros length() const { return window_end - window_start; }
    bool operator==(const Clip&) const = default;
};

class MidiError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

const char* to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& name);

/// Throws MidiError when pitch or velocity fall outside 0..127.
void validate(const RawMidiEvent& event);

/// Sorts by (onset, pitch, voice) to restore the Clip ordering invariant.
void sort_notes(std::vector<NoteEvent>& notes);

}  // namespace synesthete::midi
