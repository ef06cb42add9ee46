#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "synesthete/midi/events.hpp"

namespace synesthete::midi {

/// Malformed Standard MIDI File. `offset()` is the byte position where
/// decoding failed.
class SmfParseError : public MidiError {
public:
    SmfParseError(const std::string& what, std::size_t offset);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

struct SmfInfo {
    int format = 0;
    int track_count = 0;
    int division = 0;  // ticks per quarter, or raw SMPTE word when negative
};

/// Decodes an SMF (format 0 or 1) into note and controller events with
/// absolute microsecond timestamps resolved through the tempo map. Events
/// from all tracks are merged by (time, track, position in track).
std::vector<RawMidiEvent> read_smf(std::span<const std::uint8_t> bytes, SmfInfo* info = nullptr);

std::vector<RawMidiEvent> replay_midi_file(const std::filesystem::path& path, SmfInfo* info = nullptr);

}  // namespace synesthete::midi
