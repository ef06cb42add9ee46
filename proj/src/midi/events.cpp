#include "synesthete/midi/events.hpp"

#include <algorithm>
#include <tuple>

namespace synesthete::midi {

const char* to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::note_on: return "note_on";
    case EventKind::note_off: return "note_off";
    case EventKind::control_change: return "control_change";
    }
    return "unknown";
}

EventKind event_kind_from_string(const std::string& name)
{
    if (name == "note_on") return EventKind::note_on;
    if (name == "note_off") return EventKind::note_off;
    if (name == "control_change") return EventKind::control_change;
    throw MidiError("unknown MIDI event kind '" + name + "'");
}

void validate(const RawMidiEvent& event)
{
    if (event.pitch < 0 || event.pitch > 127) {
        throw MidiError("MIDI " + std::string(to_string(event.kind)) + " data byte 1 out of range: "
                        + std::to_string(event.pitch));
    }
    if (event.velocity < 0 || event.velocity > 127) {
        throw MidiError("MIDI " + std::string(to_string(event.kind)) + " data byte 2 out of range: "
                        + std::to_string(event.velocity));
    }
}

void sort_notes(std::vector<NoteEvent>& notes)
{
    std::stable_sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
        return std::tie(a.onset, a.pitch, a.voice) < std::tie(b.onset, b.pitch, b.voice);
    });
}

}  // namespace synesthete::midi
