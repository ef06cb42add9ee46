#!/usr/bin/env python3
"""Writes the MIDI fixtures used by the test suites.

Standalone (stdlib only) so it doubles as an independent SMF writer: each
.mid file is accompanied by a .events.json listing the absolute-time events
the reader is expected to produce, computed here from ticks and the tempo map
without going through the C++ code.

Run from this directory:  python3 make_fixtures.py
"""

import json
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def vlq(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def track_chunk(events):
    """events: list of (abs_tick, bytes) already in order."""
    data = bytearray()
    last = 0
    for tick, payload in events:
        data += vlq(tick - last)
        data += payload
        last = tick
    data += vlq(0) + b"\xff\x2f\x00"
    return b"MTrk" + struct.pack(">I", len(data)) + bytes(data)


def header_chunk(fmt, ntracks, division):
    return b"MThd" + struct.pack(">IHHH", 6, fmt, ntracks, division)


def tempo_meta(us_per_quarter):
    return b"\xff\x51\x03" + us_per_quarter.to_bytes(3, "big")


def timesig_meta(num, den_pow):
    return bytes([0xFF, 0x58, 0x04, num, den_pow, 24, 8])


def note_events(notes, channel=0):
    """notes: (start_tick, dur_tick, pitch, velocity). Offs sort before ons at
    equal ticks so re-struck pitches pair correctly."""
    evs = []
    for start, dur, pitch, vel in notes:
        evs.append((start, 1, bytes([0x90 | channel, pitch, vel]), ("note_on", pitch, vel)))
        evs.append((start + dur, 0, bytes([0x80 | channel, pitch, 64]), ("note_off", pitch, 64)))
    evs.sort(key=lambda e: (e[0], e[1], e[3][1]))
    return evs


def ticks_to_us(tick, tempo_map, division):
    """tempo_map: sorted list of (tick, us_per_quarter)."""
    us = 0.0
    cur_tick, cur_tempo = 0, 500000
    for t, tempo in tempo_map:
        if t >= tick:
            break
        us += (t - cur_tick) * cur_tempo / division
        cur_tick, cur_tempo = t, tempo
    us += (tick - cur_tick) * cur_tempo / division
    return int(round(us))


def write_smf(name, fmt, division, tracks, tempo_map):
    """tracks: list of lists of (tick, order, raw_bytes, info|None)."""
    blob = header_chunk(fmt, len(tracks), division)
    merged = []
    for ti, track in enumerate(tracks):
        blob += track_chunk([(t, raw) for t, _, raw, _ in track])
        for seq, (t, _, _, info) in enumerate(track):
            if info is not None:
                merged.append((t, ti, seq, info))
    merged.sort(key=lambda e: (e[0], e[1], e[2]))
    expected = [
        {"kind": info[0], "pitch": info[1], "velocity": info[2],
         "timestamp_us": ticks_to_us(t, tempo_map, division)}
        for t, _, _, info in merged
    ]
    (HERE / f"{name}.mid").write_bytes(blob)
    (HERE / f"{name}.events.json").write_text(json.dumps(expected, indent=1) + "\n")
    return blob


# --- Prelude in E minor, Op. 28 No. 4 (opening 12 bars, simplified) ---------
# Melody over repeated eighth-note chords in the left hand; 4/4 at 96 BPM.


MELODY = [  # per bar: (pitch, eighths, velocity)
    [(71, 6, 104), (72, 1, 70), (71, 1, 66)],
    [(71, 6, 72), (72, 1, 70), (71, 1, 66)],
    [(71, 6, 104), (70, 1, 70), (71, 1, 66)],
    [(72, 6, 72), (71, 2, 68)],
    [(71, 6, 104), (72, 1, 70), (71, 1, 66)],
    [(71, 6, 72), (72, 1, 70), (71, 1, 66)],
    [(71, 6, 104), (69, 1, 70), (71, 1, 66)],
    [(72, 6, 72), (71, 1, 68), (69, 1, 66)],
    [(69, 6, 104), (67, 1, 70), (69, 1, 66)],
    [(71, 6, 72), (67, 1, 70), (66, 1, 66)],
    [(67, 6, 72), (66, 1, 68), (64, 1, 66)],
    [(64, 8, 104)],
]

CHORDS = [
    (52, 55, 59), (52, 55, 59), (52, 55, 58), (52, 54, 57),
    (51, 54, 57), (51, 54, 57), (52, 55, 59), (52, 55, 59),
    (48, 52, 57), (48, 52, 57), (47, 51, 57), (52, 55, 59),
]


def prelude_notes(division):
    eighth = division // 2
    melody, bass = [], []
    for bar, cells in enumerate(MELODY):
        t = bar * 8 * eighth
        for pitch, n, vel in cells:
            melody.append((t, n * eighth, pitch, vel))
            t += n * eighth
    for bar, chord in enumerate(CHORDS):
        for k in range(8):
            t = (bar * 8 + k) * eighth
            for pitch in chord:
                bass.append((t, eighth, pitch, 48))
    return melody, bass


def make_prelude():
    division = 480
    tempo = 625000  # 96 BPM
    melody, bass = prelude_notes(division)
    conductor = [(0, 0, timesig_meta(4, 2), None), (0, 0, tempo_meta(tempo), None)]
    rh = [(t, o, raw, info) for t, o, raw, info in note_events(melody, 0)]
    lh = [(t, o, raw, info) for t, o, raw, info in note_events(bass, 1)]
    write_smf("prelude_e_minor", 1, division, [conductor, rh, lh], [(0, tempo)])


def make_single_quarter():
    division = 96
    tempo = 500000  # 120 BPM
    track = [(0, 0, tempo_meta(tempo), None)] + note_events([(0, division, 60, 80)])
    write_smf("c4_quarter_120", 0, division, [track], [(0, tempo)])


def make_two_track():
    """Format 1 with a mid-file tempo change and interleaved tracks."""
    division = 120
    tempo_map = [(0, 500000), (480, 400000)]
    conductor = [(0, 0, tempo_meta(500000), None), (480, 0, tempo_meta(400000), None)]
    upper = note_events([(0, 120, 72, 90), (120, 120, 74, 90), (480, 240, 76, 100), (720, 60, 77, 90)])
    lower = note_events([(0, 480, 48, 70), (240, 480, 55, 70), (600, 300, 43, 60)], channel=1)
    write_smf("two_track_tempo_change", 1, division, [conductor, upper, lower], tempo_map)


def make_truncated():
    blob = (HERE / "c4_quarter_120.mid").read_bytes()
    (HERE / "truncated_header.mid").write_bytes(blob[:9])


# --- Melodies for key estimation (pitch, beats) -----------------------------

def seq(pairs):
    return [[p, d] for p, d in pairs]


MELODIES = {
    "ode_to_joy": {"tonic": 2, "mode": "major", "notes": seq([
        (66, 1), (66, 1), (67, 1), (69, 1), (69, 1), (67, 1), (66, 1), (64, 1),
        (62, 1), (62, 1), (64, 1), (66, 1), (66, 1.5), (64, 0.5), (64, 2),
        (66, 1), (66, 1), (67, 1), (69, 1), (69, 1), (67, 1), (66, 1), (64, 1),
        (62, 1), (62, 1), (64, 1), (66, 1), (64, 1.5), (62, 0.5), (62, 2)])},
    "twinkle": {"tonic": 0, "mode": "major", "notes": seq([
        (60, 1), (60, 1), (67, 1), (67, 1), (69, 1), (69, 1), (67, 2),
        (65, 1), (65, 1), (64, 1), (64, 1), (62, 1), (62, 1), (60, 2),
        (67, 1), (67, 1), (65, 1), (65, 1), (64, 1), (64, 1), (62, 2),
        (67, 1), (67, 1), (65, 1), (65, 1), (64, 1), (64, 1), (62, 2),
        (60, 1), (60, 1), (67, 1), (67, 1), (69, 1), (69, 1), (67, 2),
        (65, 1), (65, 1), (64, 1), (64, 1), (62, 1), (62, 1), (60, 2)])},
    "frere_jacques": {"tonic": 5, "mode": "major", "notes": seq([
        (65, 1), (67, 1), (69, 1), (65, 1), (65, 1), (67, 1), (69, 1), (65, 1),
        (69, 1), (70, 1), (72, 2), (69, 1), (70, 1), (72, 2),
        (72, 0.5), (74, 0.5), (72, 0.5), (70, 0.5), (69, 1), (65, 1),
        (72, 0.5), (74, 0.5), (72, 0.5), (70, 0.5), (69, 1), (65, 1),
        (65, 1), (60, 1), (65, 2), (65, 1), (60, 1), (65, 2)])},
    "minuet_in_g": {"tonic": 7, "mode": "major", "notes": seq([
        (74, 1), (67, 0.5), (69, 0.5), (71, 0.5), (72, 0.5), (74, 1), (67, 1), (67, 1),
        (76, 1), (72, 0.5), (74, 0.5), (76, 0.5), (78, 0.5), (79, 1), (67, 1), (67, 1),
        (72, 1), (74, 0.5), (72, 0.5), (71, 0.5), (69, 0.5), (71, 1), (72, 0.5), (71, 0.5),
        (69, 0.5), (67, 0.5), (66, 1), (67, 0.5), (69, 0.5), (71, 0.5), (67, 0.5), (69, 3)])},
    "greensleeves": {"tonic": 9, "mode": "minor", "notes": seq([
        (69, 1), (72, 2), (74, 1), (76, 1.5), (77, 0.5), (76, 1), (74, 2), (71, 1),
        (67, 1.5), (69, 0.5), (71, 1), (72, 2), (69, 1), (69, 1.5), (68, 0.5), (69, 1),
        (71, 2), (68, 1), (64, 2), (69, 1), (72, 2), (74, 1), (76, 1.5), (77, 0.5),
        (76, 1), (74, 2), (71, 1), (67, 1.5), (69, 0.5), (71, 1), (72, 1.5), (71, 0.5),
        (69, 1), (68, 1.5), (66, 0.5), (68, 1), (69, 3)])},
    "god_rest_ye": {"tonic": 4, "mode": "minor", "notes": seq([
        (64, 1), (64, 1), (71, 1), (71, 1), (69, 1), (67, 1), (66, 1), (64, 1),
        (62, 1), (64, 1), (66, 1), (67, 1), (69, 1), (71, 3),
        (64, 1), (64, 1), (71, 1), (71, 1), (69, 1), (67, 1), (66, 1), (64, 1),
        (62, 1), (64, 1), (66, 1), (67, 1), (69, 1), (71, 3),
        (71, 1), (72, 1), (69, 1), (71, 1), (72, 1), (74, 1), (71, 1), (69, 1),
        (67, 1), (64, 1), (66, 1), (67, 1), (69, 2), (67, 1), (69, 1), (71, 2),
        (72, 1), (71, 1), (69, 1), (67, 1), (66, 1), (64, 1), (67, 1), (66, 0.5),
        (64, 0.5), (66, 1), (64, 3)])},
}


def make_melodies():
    (HERE / "melodies.json").write_text(json.dumps(MELODIES, indent=1) + "\n")


if __name__ == "__main__":
    make_prelude()
    make_single_quarter()
    make_two_track()
    make_truncated()
    make_melodies()
