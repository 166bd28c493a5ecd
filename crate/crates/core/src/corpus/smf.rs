//! Minimal Standard MIDI File reader: note intervals on the motion-frame grid.
//!
//! Supports format 0 and 1 files with metrical (ticks per quarter note)
//! division. Set-tempo events from every track form one global tempo map;
//! 120 BPM applies until the first one.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use log::warn;

use super::label::FingerLabel;
use super::track::NoteRecord;
use crate::error::{Error, Result};

pub const LOWEST_PITCH: u8 = 21;
pub const HIGHEST_PITCH: u8 = 108;
pub const DEFAULT_TEMPO_US_PER_QN: u32 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmfHeader {
    pub format: u16,
    pub num_tracks: u16,
    pub ticks_per_quarter: u16,
}

/// A note interval in ticks, before conversion to frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickNote {
    pub channel: u8,
    pub pitch: u8,
    pub on_tick: u64,
    pub off_tick: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmfContents {
    pub notes: Vec<TickNote>,
    /// `(tick, microseconds per quarter note)`, sorted by tick.
    pub tempos: Vec<(u64, u32)>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Midi {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        if self.pos >= self.end {
            return Err(self.err("unexpected end of data"));
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.end - self.pos < n {
            return Err(self.err(format!("need {n} bytes, {} left", self.end - self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity: at most four bytes, seven bits each.
    fn vlq(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            if self.pos >= self.end {
                return Err(Error::Midi {
                    offset: start,
                    message: "truncated variable-length quantity".into(),
                });
            }
            let b = self.bytes[self.pos];
            self.pos += 1;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::Midi {
            offset: start,
            message: "variable-length quantity longer than 4 bytes".into(),
        })
    }
}

/// Decodes the chunks of an SMF into tick-level notes and tempo changes.
pub fn read_smf(bytes: &[u8]) -> Result<(SmfHeader, SmfContents)> {
    let mut r = Reader {
        bytes,
        pos: 0,
        end: bytes.len(),
    };
    if r.take(4).map_err(|_| r.err("missing MThd chunk"))? != b"MThd" {
        return Err(Error::Midi {
            offset: 0,
            message: "bad header chunk id".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err(format!("header chunk length {header_len} < 6")));
    }
    let header_start = r.pos;
    let format = r.u16()?;
    let num_tracks = r.u16()?;
    let division = r.u16()?;
    r.pos = header_start;
    r.take(header_len)?;
    if format > 1 {
        return Err(r.err(format!("unsupported SMF format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(r.err("SMPTE time division is not supported"));
    }
    if division == 0 {
        return Err(r.err("zero ticks per quarter note"));
    }
    let header = SmfHeader {
        format,
        num_tracks,
        ticks_per_quarter: division,
    };

    let mut contents = SmfContents::default();
    let mut tracks_seen = 0u16;
    while r.pos < bytes.len() && tracks_seen < num_tracks {
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        if bytes.len() - r.pos < len {
            return Err(r.err(format!("chunk length {len} runs past end of file")));
        }
        if id != b"MTrk" {
            r.pos += len;
            continue;
        }
        let mut track = Reader {
            bytes,
            pos: r.pos,
            end: r.pos + len,
        };
        read_track(&mut track, &mut contents)?;
        r.pos += len;
        tracks_seen += 1;
    }
    if tracks_seen < num_tracks {
        return Err(r.err(format!(
            "header announces {num_tracks} tracks, found {tracks_seen}"
        )));
    }
    contents.tempos.sort_by_key(|&(tick, _)| tick);
    Ok((header, contents))
}

fn read_track(r: &mut Reader<'_>, out: &mut SmfContents) -> Result<()> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<u64>> = HashMap::new();

    while r.pos < r.end {
        tick += u64::from(r.vlq()?);
        let first = r.u8()?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| r.err("data byte without running status"))?
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        out.tempos.push((tick, us));
                    }
                    0x2f => break,
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x80 | 0x90 => {
                        let pitch = r.u8()? & 0x7f;
                        let velocity = r.u8()? & 0x7f;
                        let queue = open.entry((channel, pitch)).or_default();
                        if status & 0xf0 == 0x90 && velocity > 0 {
                            queue.push_back(tick);
                        } else if let Some(on_tick) = queue.pop_front() {
                            out.notes.push(TickNote {
                                channel,
                                pitch,
                                on_tick,
                                off_tick: tick,
                            });
                        }
                    }
                    0xc0 | 0xd0 => {
                        r.u8()?;
                    }
                    _ => {
                        r.take(2)?;
                    }
                }
            }
            other => return Err(r.err(format!("unexpected status byte {other:#04x}"))),
        }
    }

    // Notes still sounding at the end of the track close there.
    let mut dangling: Vec<_> = open.into_iter().collect();
    dangling.sort_by_key(|&(k, _)| k);
    for ((channel, pitch), queue) in dangling {
        for on_tick in queue {
            out.notes.push(TickNote {
                channel,
                pitch,
                on_tick,
                off_tick: tick,
            });
        }
    }
    Ok(())
}

/// Converts absolute ticks to seconds through a tempo map.
#[derive(Debug, Clone)]
pub struct TempoMap {
    ticks_per_quarter: f64,
    /// `(start tick, seconds at start, microseconds per quarter)`.
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    pub fn new(ticks_per_quarter: u16, tempos: &[(u64, u32)]) -> Self {
        let tpq = f64::from(ticks_per_quarter);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_TEMPO_US_PER_QN)];
        for &(tick, us) in tempos {
            let &(start, secs, cur) = segments.last().expect("non-empty");
            let at = secs + (tick - start) as f64 * f64::from(cur) / 1e6 / tpq;
            if tick == start {
                segments.pop();
            }
            segments.push((tick, at, us));
        }
        TempoMap {
            ticks_per_quarter: tpq,
            segments,
        }
    }

    pub fn seconds(&self, tick: u64) -> f64 {
        let idx = self.segments.partition_point(|&(start, _, _)| start <= tick) - 1;
        let (start, secs, us) = self.segments[idx];
        secs + (tick - start) as f64 * f64::from(us) / 1e6 / self.ticks_per_quarter
    }
}

fn to_frame(seconds: f64, frame_rate_hz: f64) -> u32 {
    (seconds * frame_rate_hz).round() as u32
}

/// Parses SMF bytes into unlabeled note records on a `frame_rate_hz` grid.
///
/// Pitches outside 21..=108 are skipped with a warning. A note that rounds
/// to zero length is extended to one frame; a second note landing on an
/// occupied `(key, onset)` slot is dropped with a warning. Records are
/// sorted by onset then key and numbered `n00000`, `n00001`, ...
pub fn parse_smf_bytes(bytes: &[u8], frame_rate_hz: f64) -> Result<Vec<NoteRecord>> {
    super::track::validate_frame_rate(frame_rate_hz)?;
    let (header, contents) = read_smf(bytes)?;
    let tempo = TempoMap::new(header.ticks_per_quarter, &contents.tempos);

    let mut frames: Vec<(u32, u8, u32)> = Vec::with_capacity(contents.notes.len());
    for note in &contents.notes {
        if !(LOWEST_PITCH..=HIGHEST_PITCH).contains(&note.pitch) {
            warn!("skipping pitch {} outside the 88-key range", note.pitch);
            continue;
        }
        let onset = to_frame(tempo.seconds(note.on_tick), frame_rate_hz);
        let offset = to_frame(tempo.seconds(note.off_tick), frame_rate_hz).max(onset + 1);
        frames.push((onset, note.pitch - LOWEST_PITCH, offset));
    }
    frames.sort_unstable();
    frames.dedup_by(|later, first| {
        let dup = later.0 == first.0 && later.1 == first.1;
        if dup {
            warn!("dropping duplicate note at key {} frame {}", later.1, later.0);
        }
        dup
    });
    Ok(frames
        .into_iter()
        .enumerate()
        .map(|(i, (onset, key, offset))| {
            NoteRecord::new(format!("n{i:05}"), key, onset, offset, FingerLabel::MISSING)
        })
        .collect())
}

pub fn parse_smf(path: impl AsRef<Path>, frame_rate_hz: f64) -> Result<Vec<NoteRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_smf_bytes(&bytes, frame_rate_hz)
}

/// Small SMF writer, used to build fixtures and synthetic MIDI exports.
pub mod write {
    /// Encodes `value` as a variable-length quantity.
    pub fn vlq(mut value: u32) -> Vec<u8> {
        let mut out = vec![(value & 0x7f) as u8];
        value >>= 7;
        while value > 0 {
            out.push(((value & 0x7f) as u8) | 0x80);
            value >>= 7;
        }
        out.reverse();
        out
    }

    pub fn header(format: u16, num_tracks: u16, ticks_per_quarter: u16) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&format.to_be_bytes());
        out.extend_from_slice(&num_tracks.to_be_bytes());
        out.extend_from_slice(&ticks_per_quarter.to_be_bytes());
        out
    }

    /// Wraps `(delta, event bytes)` pairs into an `MTrk` chunk and appends
    /// an end-of-track meta event.
    pub fn track(events: &[(u32, Vec<u8>)]) -> Vec<u8> {
        let mut body = Vec::new();
        for (delta, event) in events {
            body.extend(vlq(*delta));
            body.extend_from_slice(event);
        }
        body.extend([0x00, 0xff, 0x2f, 0x00]);
        let mut out = b"MTrk".to_vec();
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend(body);
        out
    }

    pub fn tempo(us_per_quarter: u32) -> Vec<u8> {
        let b = us_per_quarter.to_be_bytes();
        vec![0xff, 0x51, 0x03, b[1], b[2], b[3]]
    }
}

#[cfg(test)]
mod tests {
    use super::write::*;
    use super::*;

    fn one_note(off: Vec<u8>) -> Vec<u8> {
        let mut smf = header(0, 1, 480);
        smf.extend(track(&[(0, vec![0x90, 60, 100]), (480, off)]));
        smf
    }

    #[test]
    fn middle_c_half_second_at_30fps() {
        let notes = parse_smf_bytes(&one_note(vec![0x80, 60, 0]), 30.0).unwrap();
        assert_eq!(notes.len(), 1);
        assert_eq!(
            (notes[0].key_index, notes[0].onset_frame, notes[0].offset_frame),
            (39, 0, 15)
        );
        assert!(notes[0].label.is_missing());
    }

    #[test]
    fn velocity_zero_note_on_closes_the_note() {
        let a = parse_smf_bytes(&one_note(vec![0x80, 60, 0]), 30.0).unwrap();
        let b = parse_smf_bytes(&one_note(vec![0x90, 60, 0]), 30.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn chord_shares_onset() {
        let mut smf = header(0, 1, 96);
        // Running status on the second note-on and both note-offs.
        smf.extend(track(&[
            (0, vec![0x90, 60, 90]),
            (0, vec![64, 90]),
            (96, vec![60, 0]),
            (0, vec![64, 0]),
        ]));
        let notes = parse_smf_bytes(&smf, 30.0).unwrap();
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[0].onset_frame, notes[1].onset_frame);
        assert_ne!(notes[0].key_index, notes[1].key_index);
    }

    #[test]
    fn unclosed_note_ends_at_track_end() {
        let mut smf = header(0, 1, 480);
        smf.extend(track(&[(0, vec![0x90, 60, 100]), (960, vec![0xb0, 64, 0])]));
        let notes = parse_smf_bytes(&smf, 30.0).unwrap();
        assert_eq!(notes[0].offset_frame, 30);
    }

    #[test]
    fn out_of_range_pitch_is_skipped() {
        let mut smf = header(0, 1, 480);
        smf.extend(track(&[
            (0, vec![0x90, 10, 100]),
            (0, vec![0x90, 60, 100]),
            (480, vec![0x80, 10, 0]),
            (0, vec![0x80, 60, 0]),
        ]));
        let notes = parse_smf_bytes(&smf, 30.0).unwrap();
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].key_index, 39);
    }

    #[test]
    fn bad_header_and_truncated_vlq() {
        assert!(matches!(
            parse_smf_bytes(b"MThx\0\0\0\x06\0\0\0\x01\x01\xe0", 30.0),
            Err(Error::Midi { .. })
        ));
        let mut smf = header(0, 1, 480);
        smf.extend(b"MTrk\0\0\0\x02\x81\x80");
        match parse_smf_bytes(&smf, 30.0) {
            Err(Error::Midi { message, .. }) => assert!(message.contains("truncated")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn format_one_tempo_track_applies_to_all_tracks() {
        let mut smf = header(1, 2, 480);
        // 60 BPM: one quarter note lasts one second.
        smf.extend(track(&[(0, tempo(1_000_000))]));
        smf.extend(track(&[(480, vec![0x90, 69, 80]), (480, vec![0x80, 69, 0])]));
        let notes = parse_smf_bytes(&smf, 30.0).unwrap();
        assert_eq!((notes[0].onset_frame, notes[0].offset_frame), (30, 60));
        assert_eq!(notes[0].key_index, 48);
    }

    #[test]
    fn vlq_encoding_matches_reference_values() {
        assert_eq!(vlq(0), [0x00]);
        assert_eq!(vlq(0x7f), [0x7f]);
        assert_eq!(vlq(0x80), [0x81, 0x00]);
        assert_eq!(vlq(0x0fff_ffff), [0xff, 0xff, 0xff, 0x7f]);
    }
}
