#include "synesthete/midi/sources.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include "synesthete/midi/smf_reader.hpp"

namespace synesthete::midi {

FileReplaySource::FileReplaySource(const std::filesystem::path& path)
    : events_(replay_midi_file(path))
{
}

FileReplaySource::FileReplaySource(std::vector<RawMidiEvent> events) : events_(std::move(events)) {}

std::optional<RawMidiEvent> FileReplaySource::next()
{
    if (pos_ >= events_.size()) return std::nullopt;
    return events_[pos_++];
}

void RawMidiDecoder::feed(std::uint8_t byte, Micros timestamp, std::vector<RawMidiEvent>& out)
{
    if (byte >= 0xF8) {
        return;  // real-time bytes may appear anywhere, even mid-message
    }
    if (byte & 0x80) {
        if (byte == 0xF0) {
            in_sysex_ = true;
            status_ = 0;
        } else if (byte == 0xF7) {
            in_sysex_ = false;
        } else if (byte >= 0xF0) {
            in_sysex_ = false;
            status_ = 0;  // system common cancels running status
        } else {
            in_sysex_ = false;
            status_ = byte;
        }
        have_ = 0;
        return;
    }
    if (in_sysex_ || status_ == 0) {
        return;
    }

    const std::uint8_t type = status_ & 0xF0;
    const int needed = (type == 0xC0 || type == 0xD0) ? 1 : 2;
    data_[have_++] = byte;
    if (have_ < needed) return;
    have_ = 0;

    if (type == 0x80 || type == 0x90 || type == 0xB0) {
        RawMidiEvent e;
        e.kind = type == 0x80 ? EventKind::note_off
               : type == 0x90 ? EventKind::note_on
                              : EventKind::control_change;
        e.pitch = data_[0];
        e.velocity = data_[1];
        e.timestamp = timestamp;
        out.push_back(e);
    }
}

DeviceSource::DeviceSource(const std::filesystem::path& device)
    : started_(std::chrono::steady_clock::now())
{
    fd_ = ::open(device.c_str(), O_RDONLY | O_NONBLOCK);
    if (fd_ < 0) {
        throw MidiError("cannot open MIDI device " + device.string() + ": " + std::strerror(errno));
    }
}

DeviceSource::~DeviceSource()
{
    if (fd_ >= 0) ::close(fd_);
}

std::optional<RawMidiEvent> DeviceSource::next()
{
    std::vector<RawMidiEvent> decoded;
    while (ready_.empty()) {
        if (stopped_) return std::nullopt;
        pollfd pfd{fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, 100);
        if (rc < 0) {
            if (errno == EINTR) continue;
            return std::nullopt;
        }
        if (rc == 0) continue;
        if (pfd.revents & (POLLERR | POLLHUP)) return std::nullopt;

        std::uint8_t buf[256];
        const ssize_t n = ::read(fd_, buf, sizeof buf);
        if (n <= 0) {
            if (n < 0 && (errno == EAGAIN || errno == EINTR)) continue;
            return std::nullopt;
        }
        const auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                             std::chrono::steady_clock::now() - started_)
                             .count();
        decoded.clear();
        for (ssize_t i = 0; i < n; ++i) decoder_.feed(buf[i], now, decoded);
        ready_.insert(ready_.end(), decoded.begin(), decoded.end());
    }
    RawMidiEvent e = ready_.front();
    ready_.pop_front();
    return e;
}

}  // namespace synesthete::midi
