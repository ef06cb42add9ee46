#include "synesthete/midi/ingest_buffer.hpp"

#include <algorithm>

namespace synesthete::midi {

IngestBuffer::IngestBuffer(Micros window_length, Micros session_start)
    : window_length_(window_length), window_start_(session_start), clock_(session_start)
{
    if (window_length <= 0) {
        throw MidiError("window length must be positive");
    }
}

void IngestBuffer::push_event(const RawMidiEvent& event)
{
    std::lock_guard lock(mutex_);
    try {
        validate(event);
    } catch (const MidiError&) {
        ++stats_.rejected;
        throw;
    }

    Micros t = event.timestamp;
    if (t < clock_) {
        t = clock_;
        ++stats_.clamped;
    }
    clock_ = t;
    ++stats_.accepted;

    EventKind kind = event.kind;
    if (kind == EventKind::note_on && event.velocity == 0) {
        kind = EventKind::note_off;
    }

    switch (kind) {
    case EventKind::note_on: {
        if (pending_.contains(event.pitch)) {
            // Re-struck before release: the old sounding note ends here.
            complete_locked(event.pitch, t);
        }
        cut_at_boundary_.erase(event.pitch);
        pending_[event.pitch] = Pending{t, event.velocity, false};
        break;
    }
    case EventKind::note_off: {
        auto it = pending_.find(event.pitch);
        if (it == pending_.end() || it->second.held_by_pedal) {
            if (it == pending_.end() && !cut_at_boundary_.erase(event.pitch)) {
                ++stats_.unmatched_note_offs;
            }
            break;
        }
        if (sustain_down_) {
            it->second.held_by_pedal = true;
        } else {
            complete_locked(event.pitch, t);
        }
        break;
    }
    case EventKind::control_change: {
        if (event.pitch != kSustainController) {
            break;
        }
        const bool down = event.velocity >= 64;
        if (sustain_down_ && !down) {
            std::vector<int> released;
            for (const auto& [pitch, p] : pending_) {
                if (p.held_by_pedal) released.push_back(pitch);
            }
            for (int pitch : released) complete_locked(pitch, t);
        }
        sustain_down_ = down;
        break;
    }
    }
}

void IngestBuffer::complete_locked(int pitch, Micros end)
{
    auto it = pending_.find(pitch);
    const Pending p = it->second;
    pending_.erase(it);
    NoteEvent note;
    note.pitch = pitch;
    note.velocity = p.velocity;
    note.onset = p.onset;
    note.duration = std::max<Micros>(1, end - p.onset);
    completed_.push_back(note);
}

std::optional<Clip> IngestBuffer::close_locked()
{
    const Micros start = window_start_;
    const Micros end = window_start_ + window_length_;

    Clip clip;
    clip.window_start = start;
    clip.window_end = end;
    clip.clip_index = window_index_;

    std::vector<NoteEvent> later;
    for (NoteEvent& note : completed_) {
        if (note.onset >= end) {
            later.push_back(note);
            continue;
        }
        if (note.end() > end) {
            note.duration = end - note.onset;
            ++stats_.truncated_notes;
        }
        clip.notes.push_back(note);
    }
    completed_ = std::move(later);

    for (auto it = pending_.begin(); it != pending_.end();) {
        if (it->second.onset >= end) {
            ++it;
            continue;
        }
        NoteEvent note;
        note.pitch = it->first;
        note.velocity = it->second.velocity;
        note.onset = it->second.onset;
        note.duration = end - it->second.onset;
        clip.notes.push_back(note);
        cut_at_boundary_.insert(it->first);
        ++stats_.truncated_notes;
        it = pending_.erase(it);
    }

    window_start_ = end;
    ++window_index_;
    clock_ = std::max(clock_, end);

    if (clip.notes.empty()) {
        return std::nullopt;
    }
    sort_notes(clip.notes);
    return clip;
}

std::optional<Clip> IngestBuffer::close_window(Micros now)
{
    std::lock_guard lock(mutex_);
    if (now < window_start_ + window_length_) {
        return std::nullopt;
    }
    return close_locked();
}

std::vector<Clip> IngestBuffer::close_due_windows(Micros now)
{
    std::lock_guard lock(mutex_);
    std::vector<Clip> clips;
    while (now >= window_start_ + window_length_) {
        if (auto clip = close_locked()) {
            clips.push_back(std::move(*clip));
        }
    }
    return clips;
}

std::optional<Clip> IngestBuffer::flush()
{
    std::lock_guard lock(mutex_);
    return close_locked();
}

bool IngestBuffer::window_due(Micros now) const
{
    std::lock_guard lock(mutex_);
    return now >= window_start_ + window_length_;
}

Micros IngestBuffer::window_start() const
{
    std::lock_guard lock(mutex_);
    return window_start_;
}

Micros IngestBuffer::window_end() const
{
    std::lock_guard lock(mutex_);
    return window_start_ + window_length_;
}

Micros IngestBuffer::clock() const
{
    std::lock_guard lock(mutex_);
    return clock_;
}

std::size_t IngestBuffer::pending_count() const
{
    std::lock_guard lock(mutex_);
    return pending_.size();
}

IngestStats IngestBuffer::stats() const
{
    std::lock_guard lock(mutex_);
    return stats_;
}

}  // namespace synesthete::midi
