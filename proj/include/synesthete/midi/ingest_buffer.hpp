#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include "synesthete/midi/events.hpp"

namespace synesthete::midi {

inline constexpr Micros kDefaultWindowLength = 10'000'000;
inline constexpr int kSustainController = 64;

struct IngestStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t clamped = 0;            // timestamps raised to the stream clock
    std::size_t unmatched_note_offs = 0;
    std::size_t truncated_notes = 0;    // cut at a window boundary
};

/// Pairs note-on/note-off messages and cuts the stream into fixed,
/// non-overlapping windows.
///
/// One producer may call push_event() while another thread calls
/// close_window(); all state sits behind a single mutex.
class IngestBuffer {
public:
    explicit IngestBuffer(Micros window_length = kDefaultWindowLength, Micros session_start = 0);

    /// Rejects out-of-range data with MidiError and leaves the buffer untouched.
    /// Timestamps older than the stream clock are clamped forward.
    void push_event(const RawMidiEvent& event);

    /// Closes the current window if `now` has reached its end. Returns the
    /// window's notes, or nothing when the window is not yet due or was empty.
    std::optional<Clip> close_window(Micros now);

    /// Closes every window that is due at `now`, skipping empty ones.
    std::vector<Clip> close_due_windows(Micros now);

    /// Closes the window in progress at its natural end regardless of the clock;
    /// used at end of stream.
    std::optional<Clip> flush();

    bool window_due(Micros now) const;
    Micros window_start() const;
    Micros window_end() const;
    Micros window_length() const { return window_length_; }
    Micros clock() const;
    std::size_t pending_count() const;
    IngestStats stats() const;

private:
    struct Pending {
        Micros onset = 0;
        int velocity = 0;
        bool held_by_pedal = false;
    };

    void complete_locked(int pitch, Micros end);
    std::optional<Clip> close_locked();

    const Micros window_length_;
    mutable std::mutex mutex_;
    Micros window_start_;
    int window_index_ = 0;
    Micros clock_;
    bool sustain_down_ = false;
    std::map<int, Pending> pending_;
    std::set<int> cut_at_boundary_;
    std::vector<NoteEvent> completed_;
    IngestStats stats_;
};

}  // namespace synesthete::midi
