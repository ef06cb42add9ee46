#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "fixtures.hpp"
#include "synesthete/midi/ingest_buffer.hpp"
#include "synesthete/midi/smf_reader.hpp"
#include "synesthete/midi/sources.hpp"

using namespace synesthete::midi;
using testing_support::expected_events;
using testing_support::fixture;

namespace {

RawMidiEvent on(int pitch, int vel, Micros t) { return {EventKind::note_on, pitch, vel, t}; }
RawMidiEvent off(int pitch, Micros t) { return {EventKind::note_off, pitch, 64, t}; }
RawMidiEvent cc(int ctl, int value, Micros t) { return {EventKind::control_change, ctl, value, t}; }

std::vector<std::uint8_t> vlq(std::uint32_t v)
{
    std::vector<std::uint8_t> out{static_cast<std::uint8_t>(v & 0x7F)};
    while (v >>= 7) out.insert(out.begin(), static_cast<std::uint8_t>((v & 0x7F) | 0x80));
    return out;
}

// Minimal format-0 writer, ticks per quarter 480 at the default tempo.
std::vector<std::uint8_t> smf0(const std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>>& events)
{
    std::vector<std::uint8_t> trk;
    std::uint32_t last = 0;
    for (const auto& [tick, bytes] : events) {
        auto d = vlq(tick - last);
        trk.insert(trk.end(), d.begin(), d.end());
        trk.insert(trk.end(), bytes.begin(), bytes.end());
        last = tick;
    }
    for (std::uint8_t b : {0x00, 0xFF, 0x2F, 0x00}) trk.push_back(b);
    std::vector<std::uint8_t> f = {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0, 'M', 'T', 'r', 'k'};
    const auto n = static_cast<std::uint32_t>(trk.size());
    for (int s = 24; s >= 0; s -= 8) f.push_back(static_cast<std::uint8_t>(n >> s));
    f.insert(f.end(), trk.begin(), trk.end());
    return f;
}

std::vector<NoteEvent> drain(IngestBuffer& buf, const std::vector<RawMidiEvent>& events)
{
    std::vector<NoteEvent> notes;
    for (const auto& e : events) {
        for (const Clip& c : buf.close_due_windows(e.timestamp)) notes.insert(notes.end(), c.notes.begin(), c.notes.end());
        buf.push_event(e);
    }
    while (auto c = buf.flush()) notes.insert(notes.end(), c->notes.begin(), c->notes.end());
    return notes;
}

}  // namespace

TEST(IngestBuffer, PairsNoteOnAndOff)
{
    IngestBuffer buf;
    buf.push_event(on(60, 80, 0));
    buf.push_event(off(60, 500'000));
    auto clip = buf.close_window(10'000'000);
    ASSERT_TRUE(clip);
    ASSERT_EQ(clip->notes.size(), 1u);
    EXPECT_EQ(clip->notes[0].pitch, 60);
    EXPECT_EQ(clip->notes[0].velocity, 80);
    EXPECT_EQ(clip->notes[0].onset, 0);
    EXPECT_EQ(clip->notes[0].duration, 500'000);
}

TEST(IngestBuffer, RejectsOutOfRangeAndStaysUnchanged)
{
    IngestBuffer buf;
    buf.push_event(on(60, 80, 100));
    EXPECT_THROW(buf.push_event(on(200, 80, 200)), MidiError);
    EXPECT_THROW(buf.push_event(on(60, 128, 200)), MidiError);
    EXPECT_THROW(buf.push_event(on(-1, 10, 200)), MidiError);
    EXPECT_EQ(buf.pending_count(), 1u);
    EXPECT_EQ(buf.clock(), 100);
    EXPECT_EQ(buf.stats().rejected, 3u);
    EXPECT_EQ(buf.stats().accepted, 1u);
}

TEST(IngestBuffer, OverlappingNotesMatchFileReader)
{
    // The same performance goes through an SMF round trip (500000 us per
    // quarter, 480 ticks) and is paired by the buffer. Expected spans are
    // worked out by hand from the tick values.
    const auto bytes = smf0({{0, {0x90, 64, 70}},
                             {240, {0x90, 67, 90}},
                             {720, {0x80, 64, 0}},
                             {960, {0x80, 67, 0}}});
    const auto events = read_smf(bytes);
    ASSERT_EQ(events.size(), 4u);
    IngestBuffer buf;
    const auto notes = drain(buf, events);
    ASSERT_EQ(notes.size(), 2u);
    EXPECT_EQ(notes[0], (NoteEvent{64, 70, 0, 750'000, 0}));
    EXPECT_EQ(notes[1], (NoteEvent{67, 90, 250'000, 750'000, 0}));
    EXPECT_LT(notes[1].onset, notes[0].end());
}

TEST(IngestBuffer, EmptyWindowYieldsNothing)
{
    IngestBuffer buf;
    EXPECT_FALSE(buf.close_window(10'000'000));
    EXPECT_EQ(buf.window_start(), 10'000'000);
}

TEST(IngestBuffer, WindowNotDueYieldsNothing)
{
    IngestBuffer buf;
    buf.push_event(on(60, 80, 0));
    buf.push_event(off(60, 100));
    EXPECT_FALSE(buf.close_window(9'999'999));
    EXPECT_TRUE(buf.close_window(10'000'000));
}

TEST(IngestBuffer, FourNotesInOneWindow)
{
    IngestBuffer buf;
    for (int i = 0; i < 4; ++i) {
        buf.push_event(on(60 + i, 80, i * 1'000'000));
        buf.push_event(off(60 + i, i * 1'000'000 + 500'000));
    }
    auto clip = buf.close_window(10'000'000);
    ASSERT_TRUE(clip);
    EXPECT_EQ(clip->notes.size(), 4u);
    EXPECT_EQ(clip->window_end - clip->window_start, 10'000'000);
    EXPECT_EQ(clip->clip_index, 0);
}

TEST(IngestBuffer, DanglingNoteTruncatedAtBoundaryAndNotReemitted)
{
    // note-on at 9.5 s, window ends at 10 s: truncated to 9.5 -> 10, i.e. 0.5 s.
    IngestBuffer buf;
    buf.push_event(on(60, 80, 9'500'000));
    auto first = buf.close_window(10'000'000);
    ASSERT_TRUE(first);
    ASSERT_EQ(first->notes.size(), 1u);
    EXPECT_EQ(first->notes[0].duration, 10'000'000 - 9'500'000);
    EXPECT_EQ(buf.stats().truncated_notes, 1u);

    buf.push_event(off(60, 10'200'000));
    EXPECT_FALSE(buf.close_window(20'000'000));
    EXPECT_EQ(buf.stats().unmatched_note_offs, 0u);
}

TEST(IngestBuffer, VelocityZeroNoteOnActsAsNoteOff)
{
    IngestBuffer buf;
    buf.push_event(on(62, 90, 0));
    buf.push_event(on(62, 0, 300'000));
    auto clip = buf.close_window(10'000'000);
    ASSERT_TRUE(clip);
    ASSERT_EQ(clip->notes.size(), 1u);
    EXPECT_EQ(clip->notes[0].duration, 300'000);
}

TEST(IngestBuffer, SustainPedalHoldsReleasedNotes)
{
    IngestBuffer buf;
    buf.push_event(cc(kSustainController, 127, 0));
    buf.push_event(on(60, 80, 0));
    buf.push_event(off(60, 200'000));
    buf.push_event(cc(7, 100, 250'000));  // volume: ignored
    buf.push_event(cc(kSustainController, 0, 800'000));
    auto clip = buf.close_window(10'000'000);
    ASSERT_TRUE(clip);
    ASSERT_EQ(clip->notes.size(), 1u);
    EXPECT_EQ(clip->notes[0].duration, 800'000);
}

TEST(IngestBuffer, OutOfOrderTimestampsAreClamped)
{
    IngestBuffer buf;
    buf.push_event(on(60, 80, 1'000'000));
    buf.push_event(off(60, 900'000));
    EXPECT_EQ(buf.stats().clamped, 1u);
    auto clip = buf.close_window(10'000'000);
    ASSERT_TRUE(clip);
    EXPECT_EQ(clip->notes[0].onset, 1'000'000);
    EXPECT_GT(clip->notes[0].duration, 0);
}

TEST(IngestBuffer, UnmatchedNoteOffIsCounted)
{
    IngestBuffer buf;
    buf.push_event(off(60, 10));
    EXPECT_EQ(buf.stats().unmatched_note_offs, 1u);
    EXPECT_FALSE(buf.close_window(10'000'000));
}

TEST(IngestBuffer, ClipIndexCountsWindows)
{
    IngestBuffer buf(1'000'000);
    buf.push_event(on(60, 80, 100));
    buf.push_event(off(60, 200));
    auto clips = buf.close_due_windows(2'500'000);
    ASSERT_EQ(clips.size(), 1u);
    EXPECT_EQ(clips[0].clip_index, 0);
    buf.push_event(on(61, 80, 2'600'000));
    buf.push_event(off(61, 2'700'000));
    clips = buf.close_due_windows(3'000'000);
    ASSERT_EQ(clips.size(), 1u);
    EXPECT_EQ(clips[0].clip_index, 2);
    EXPECT_EQ(clips[0].window_start, 2'000'000);
}

// Every paired note lands in exactly one clip, cut at its window's end.
TEST(IngestBuffer, WindowPartitionProperty)
{
    std::mt19937_64 rng(11);
    for (int round = 0; round < 50; ++round) {
        const Micros window = 1'000'000;
        std::vector<RawMidiEvent> events;
        Micros t = 0;
        std::uniform_int_distribution<int> pitch(60, 66), gap(0, 300'000), coin(0, 2);
        for (int i = 0; i < 200; ++i) {
            t += gap(rng);
            const int p = pitch(rng);
            events.push_back(coin(rng) == 0 ? off(p, t) : on(p, 1 + coin(rng) * 40, t));
        }

        // Independent pairing oracle.
        std::vector<NoteEvent> expected;
        std::map<int, std::pair<Micros, int>> open;
        auto finish = [&](int p, Micros end) {
            auto [onset, vel] = open.at(p);
            const Micros cap = (onset / window + 1) * window;
            expected.push_back(NoteEvent{p, vel, onset, std::max<Micros>(1, std::min(end, cap) - onset), 0});
            open.erase(p);
        };
        for (const auto& e : events) {
            // Notes still sounding when their window closes are cut there.
            for (auto it = open.begin(); it != open.end();) {
                const Micros cap = (it->second.first / window + 1) * window;
                if (e.timestamp >= cap) {
                    const int p = it->first;
                    ++it;
                    finish(p, cap);
                } else {
                    ++it;
                }
            }
            if (e.kind == EventKind::note_on) {
                if (open.contains(e.pitch)) finish(e.pitch, e.timestamp);
                open[e.pitch] = {e.timestamp, e.velocity};
            } else if (open.contains(e.pitch)) {
                finish(e.pitch, e.timestamp);
            }
        }
        while (!open.empty()) {
            const int p = open.begin()->first;
            finish(p, (open.begin()->second.first / window + 1) * window);
        }

        IngestBuffer buf(window);
        auto got = drain(buf, events);
        sort_notes(expected);
        sort_notes(got);
        ASSERT_EQ(got, expected) << "round " << round;
    }
}

TEST(IngestBuffer, DeterministicClipSequence)
{
    auto events = replay_midi_file(fixture("prelude_e_minor.mid"));
    IngestBuffer a, b;
    EXPECT_EQ(drain(a, events), drain(b, events));
}

TEST(SmfReader, QuarterNoteAt120)
{
    SmfInfo info;
    auto events = replay_midi_file(fixture("c4_quarter_120.mid"), &info);
    EXPECT_EQ(info.format, 0);
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(events[0].kind, EventKind::note_on);
    EXPECT_EQ(events[0].pitch, 60);
    EXPECT_EQ(events[0].timestamp, 0);
    EXPECT_EQ(events[1].kind, EventKind::note_off);
    EXPECT_EQ(events[1].timestamp, 500'000);
}

TEST(SmfReader, MatchesIndependentWriter)
{
    for (const char* name : {"c4_quarter_120", "two_track_tempo_change", "prelude_e_minor"}) {
        SCOPED_TRACE(name);
        auto got = replay_midi_file(fixture(std::string(name) + ".mid"));
        auto want = expected_events(std::string(name) + ".events.json");
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], want[i]) << "event " << i;
    }
}

TEST(SmfReader, FormatOneMergesTracksByTime)
{
    SmfInfo info;
    auto events = replay_midi_file(fixture("two_track_tempo_change.mid"), &info);
    EXPECT_EQ(info.format, 1);
    EXPECT_GE(info.track_count, 2);
    EXPECT_TRUE(std::is_sorted(events.begin(), events.end(),
                               [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
}

TEST(SmfReader, TruncatedHeaderReportsOffset)
{
    try {
        replay_midi_file(fixture("truncated_header.mid"));
        FAIL() << "expected a parse error";
    } catch (const SmfParseError& e) {
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
        EXPECT_LE(e.offset(), 9u);
    }
}

TEST(SmfReader, RunningStatusAndTruncatedTrack)
{
    auto bytes = smf0({{0, {0x90, 60, 80}}, {480, {62, 80}}, {960, {60, 0}}, {960, {62, 0}}});
    auto events = read_smf(bytes);
    ASSERT_EQ(events.size(), 4u);
    EXPECT_EQ(events[1].pitch, 62);
    EXPECT_EQ(events[1].timestamp, 500'000);

    bytes.resize(bytes.size() - 6);
    EXPECT_THROW(read_smf(bytes), SmfParseError);
}

TEST(SmfReader, RejectsGarbage)
{
    std::vector<std::uint8_t> junk(32, 0x42);
    EXPECT_THROW(read_smf(junk), SmfParseError);
    EXPECT_THROW(replay_midi_file(fixture("does_not_exist.mid")), MidiError);
}

TEST(RawMidiDecoder, RunningStatusAndRealtimeBytes)
{
    RawMidiDecoder dec;
    std::vector<RawMidiEvent> out;
    for (std::uint8_t b : {0x90, 60, 0xF8, 100, 64, 90, 0xF0, 1, 2, 0xF7, 0x80, 60, 0, 0xB0, 64, 127}) dec.feed(b, 7, out);
    ASSERT_EQ(out.size(), 4u);
    EXPECT_EQ(out[0], (RawMidiEvent{EventKind::note_on, 60, 100, 7}));
    EXPECT_EQ(out[1], (RawMidiEvent{EventKind::note_on, 64, 90, 7}));
    EXPECT_EQ(out[2].kind, EventKind::note_off);
    EXPECT_EQ(out[3], (RawMidiEvent{EventKind::control_change, 64, 127, 7}));
}

TEST(FileReplaySource, YieldsEventsInOrder)
{
    FileReplaySource src(fixture("c4_quarter_120.mid"));
    EXPECT_FALSE(src.realtime());
    int n = 0;
    while (src.next()) ++n;
    EXPECT_EQ(n, 2);
}
