#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <vector>

#include "synesthete/midi/events.hpp"

namespace synesthete::midi {

/// Where performance events come from. Sources without hardware (file
/// replay) and live devices share this interface so the session loop does
/// not care which one it is fed by.
class MidiSource {
public:
    virtual ~MidiSource() = default;

    /// Blocks until the next event is available. Returns nothing at end of
    /// stream or after stop().
    virtual std::optional<RawMidiEvent> next() = 0;

    /// True when timestamps follow the wall clock (live input).
    virtual bool realtime() const = 0;

    virtual void stop() {}
};

class FileReplaySource : public MidiSource {
public:
    explicit FileReplaySource(const std::filesystem::path& path);
    explicit FileReplaySource(std::vector<RawMidiEvent> events);

    std::optional<RawMidiEvent> next() override;
    bool realtime() const override { return false; }

    const std::vector<RawMidiEvent>& events() const { return events_; }

private:
    std::vector<RawMidiEvent> events_;
    std::size_t pos_ = 0;
};

/// Incremental decoder for a raw MIDI byte stream (running status,
/// interleaved real-time bytes, sysex). Only note and controller messages
/// are surfaced.
class RawMidiDecoder {
public:
    /// Feeds bytes stamped with `timestamp`; decoded events are appended to `out`.
    void feed(std::uint8_t byte, Micros timestamp, std::vector<RawMidiEvent>& out);

private:
    std::uint8_t status_ = 0;
    std::uint8_t data_[2] = {0, 0};
    int have_ = 0;
    bool in_sysex_ = false;
};

/// Reads a raw MIDI character device (e.g. /dev/snd/midiC1D0 or /dev/midi1)
/// and stamps events with elapsed wall-clock time since construction.
class DeviceSource : public MidiSource {
public:
    explicit DeviceSource(const std::filesystem::path& device);
    ~DeviceSource() override;
    DeviceSource(const DeviceSource&) = delete;
    DeviceSource& operator=(const DeviceSource&) = delete;

    std::optional<RawMidiEvent> next() override;
    bool realtime() const override { return true; }
    void stop() override { stopped_ = true; }

private:
    int fd_ = -1;
    std::atomic<bool> stopped_{false};
    std::chrono::steady_clock::time_point started_;
    RawMidiDecoder decoder_;
    std::deque<RawMidiEvent> ready_;
};

}  // namespace synesthete::midi
