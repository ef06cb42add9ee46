#include "synesthete/midi/smf_reader.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <string_view>
#include <tuple>

namespace synesthete::midi {

SmfParseError::SmfParseError(const std::string& what, std::size_t offset)
    : MidiError("SMF parse error at byte " + std::to_string(offset) + ": " + what), offset_(offset)
{
}

namespace {

class Cursor {
public:
    Cursor(std::span<const std::uint8_t> bytes, std::size_t begin, std::size_t end)
        : bytes_(bytes), pos_(begin), end_(end)
    {
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= end_; }

    std::uint8_t u8()
    {
        if (pos_ >= end_) throw SmfParseError("unexpected end of data", pos_);
        return bytes_[pos_++];
    }

    std::uint8_t peek() const
    {
        if (pos_ >= end_) throw SmfParseError("unexpected end of data", pos_);
        return bytes_[pos_];
    }

    std::uint32_t be(int n)
    {
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) v = (v << 8) | u8();
        return v;
    }

    std::uint32_t vlq()
    {
        const std::size_t start = pos_;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8();
            v = (v << 7) | (b & 0x7F);
            if ((b & 0x80) == 0) return v;
        }
        throw SmfParseError("variable-length quantity longer than 4 bytes", start);
    }

    void skip(std::size_t n)
    {
        if (n > end_ - pos_) throw SmfParseError("length runs past end of chunk", pos_);
        pos_ += n;
    }

    std::uint8_t data_byte()
    {
        const std::size_t at = pos_;
        const std::uint8_t b = u8();
        if (b & 0x80) throw SmfParseError("status byte where data byte expected", at);
        return b;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
    std::size_t end_;
};

struct TimedEvent {
    std::uint64_t tick = 0;
    int track = 0;
    int seq = 0;
    RawMidiEvent event;
};

struct TempoChange {
    std::uint64_t tick = 0;
    std::uint32_t us_per_quarter = 500000;
};

void parse_track(Cursor& c, int track, std::vector<TimedEvent>& out, std::vector<TempoChange>& tempi)
{
    std::uint64_t tick = 0;
    std::uint8_t running = 0;
    int seq = 0;
    while (!c.done()) {
        tick += c.vlq();
        const std::size_t status_at = c.pos();
        std::uint8_t status = c.peek();
        if (status & 0x80) {
            c.u8();
        } else {
            if (running == 0) throw SmfParseError("data byte without running status", status_at);
            status = running;
        }

        if (status == 0xFF) {
            const std::uint8_t type = c.u8();
            const std::uint32_t len = c.vlq();
            if (type == 0x2F) {
                c.skip(len);
                return;
            }
            if (type == 0x51) {
                if (len != 3) throw SmfParseError("tempo meta event must have length 3", status_at);
                tempi.push_back({tick, c.be(3)});
            } else {
                c.skip(len);
            }
            running = 0;
            continue;
        }
        if (status == 0xF0 || status == 0xF7) {
            c.skip(c.vlq());
            running = 0;
            continue;
        }
        if (status >= 0xF1) {
            throw SmfParseError("system message not allowed in track data", status_at);
        }

        running = status;
        const std::uint8_t type = status & 0xF0;
        switch (type) {
        case 0x80:
        case 0x90:
        case 0xB0: {
            const int a = c.data_byte();
            const int b = c.data_byte();
            RawMidiEvent e;
            e.kind = type == 0x80 ? EventKind::note_off
                   : type == 0x90 ? EventKind::note_on
                                  : EventKind::control_change;
            e.pitch = a;
            e.velocity = b;
            out.push_back({tick, track, seq++, e});
            break;
        }
        case 0xA0:
        case 0xE0:
            c.data_byte();
            c.data_byte();
            break;
        case 0xC0:
        case 0xD0:
            c.data_byte();
            break;
        default:
            throw SmfParseError("invalid status byte", status_at);
        }
    }
}

}  // namespace

std::vector<RawMidiEvent> read_smf(std::span<const std::uint8_t> bytes, SmfInfo* info)
{
    Cursor c(bytes, 0, bytes.size());
    if (bytes.size() < 14) {
        throw SmfParseError("file shorter than an MThd header", bytes.size());
    }
    if (std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != "MThd") {
        throw SmfParseError("missing MThd signature", 0);
    }
    c.skip(4);
    const std::uint32_t header_len = c.be(4);
    if (header_len < 6) throw SmfParseError("MThd length below 6", 4);
    const int format = static_cast<int>(c.be(2));
    const int ntracks = static_cast<int>(c.be(2));
    const std::uint16_t division_word = static_cast<std::uint16_t>(c.be(2));
    c.skip(header_len - 6);
    if (format > 1) throw SmfParseError("unsupported SMF format " + std::to_string(format), 8);
    if (format == 0 && ntracks != 1) throw SmfParseError("format 0 file must have one track", 10);

    double smpte_us_per_tick = 0.0;
    int ppq = 0;
    if (division_word & 0x8000) {
        const int fps = -static_cast<int>(static_cast<std::int8_t>(division_word >> 8));
        const int tpf = division_word & 0xFF;
        if (tpf == 0 || (fps != 24 && fps != 25 && fps != 29 && fps != 30)) {
            throw SmfParseError("invalid SMPTE division", 12);
        }
        const double rate = fps == 29 ? 29.97 : fps;
        smpte_us_per_tick = 1e6 / (rate * tpf);
    } else {
        ppq = division_word;
        if (ppq == 0) throw SmfParseError("division of zero ticks per quarter", 12);
    }

    std::vector<TimedEvent> events;
    std::vector<TempoChange> tempi;
    int found = 0;
    while (found < ntracks) {
        const std::size_t chunk_at = c.pos();
        if (bytes.size() - chunk_at < 8) {
            throw SmfParseError("expected " + std::to_string(ntracks) + " tracks, found "
                                    + std::to_string(found),
                                chunk_at);
        }
        const std::string_view id(reinterpret_cast<const char*>(bytes.data() + chunk_at), 4);
        c.skip(4);
        const std::uint32_t len = c.be(4);
        if (len > bytes.size() - c.pos()) throw SmfParseError("chunk length runs past end of file", chunk_at + 4);
        if (id == "MTrk") {
            Cursor track(bytes, c.pos(), c.pos() + len);
            parse_track(track, found, events, tempi);
            ++found;
        }
        c.skip(len);
    }

    std::stable_sort(events.begin(), events.end(), [](const TimedEvent& a, const TimedEvent& b) {
        return std::tie(a.tick, a.track, a.seq) < std::tie(b.tick, b.track, b.seq);
    });
    std::stable_sort(tempi.begin(), tempi.end(),
                     [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });

    // Tick -> microseconds. Accumulates in units of (us * ppq) to stay exact.
    std::vector<RawMidiEvent> result;
    result.reserve(events.size());
    std::size_t ti = 0;
    std::uint64_t seg_tick = 0;
    std::uint64_t seg_tempo = 500000;
    std::uint64_t seg_acc = 0;
    for (const TimedEvent& te : events) {
        RawMidiEvent e = te.event;
        if (ppq > 0) {
            while (ti < tempi.size() && tempi[ti].tick <= te.tick) {
                seg_acc += (tempi[ti].tick - seg_tick) * seg_tempo;
                seg_tick = tempi[ti].tick;
                seg_tempo = tempi[ti].us_per_quarter;
                ++ti;
            }
            const std::uint64_t acc = seg_acc + (te.tick - seg_tick) * seg_tempo;
            e.timestamp = static_cast<Micros>((acc + static_cast<std::uint64_t>(ppq) / 2) / ppq);
        } else {
            e.timestamp = static_cast<Micros>(te.tick * smpte_us_per_tick + 0.5);
        }
        result.push_back(e);
    }

    if (info != nullptr) {
        info->format = format;
        info->track_count = ntracks;
        info->division = ppq > 0 ? ppq : -static_cast<int>(division_word);
    }
    return result;
}

std::vector<RawMidiEvent> replay_midi_file(const std::filesystem::path& path, SmfInfo* info)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw MidiError("cannot open MIDI file " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_smf(bytes, info);
}

}  // namespace synesthete::midi
