//! Per-detector click streams and the event-dump file formats.
//!
//! Binary dumps are a bare sequence of 9-byte records: the detector index
//! (`0` = A', `1` = A'', `2` = B', `3` = B'') followed by the timestamp in
//! picoseconds as a little-endian `u64`. Text dumps hold one
//! `<label> <timestamp_ps>` record per line, e.g. `A'' 1200`; blank lines and
//! lines starting with `#` are ignored. Both are written in global time order.

use std::io::{self, BufRead, Read, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::detector::{DetectionEvent, DetectorId};

pub const BINARY_RECORD_BYTES: usize = 9;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("detector {detector} stream is not time-ordered at position {position}")]
    Unordered {
        detector: DetectorId,
        position: usize,
    },
    #[error("malformed event record {record}: {reason}")]
    Malformed { record: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Event-dump encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Binary,
    Text,
}

impl EventFormat {
    pub fn name(self) -> &'static str {
        match self {
            EventFormat::Binary => "binary",
            EventFormat::Text => "text",
        }
    }
}

impl FromStr for EventFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(EventFormat::Binary),
            "text" => Ok(EventFormat::Text),
            other => Err(format!(
                "unknown event format '{other}' (expected binary or text)"
            )),
        }
    }
}

/// Time-ordered timestamps for each of the four detectors, together with the
/// length of time they cover.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStreams {
    per_detector: [Vec<u64>; 4],
    span_ps: u64,
}

impl EventStreams {
    /// Rejects any stream that is not non-decreasing in time.
    pub fn new(per_detector: [Vec<u64>; 4], span_ps: u64) -> Result<Self, EventError> {
        for detector in DetectorId::ALL {
            let stream = &per_detector[detector.index()];
            if let Some(position) = stream.windows(2).position(|w| w[1] < w[0]) {
                return Err(EventError::Unordered {
                    detector,
                    position: position + 1,
                });
            }
        }
        Ok(Self {
            per_detector,
            span_ps,
        })
    }

    /// Builds streams from events in any order.
    pub fn from_events(events: impl IntoIterator<Item = DetectionEvent>, span_ps: u64) -> Self {
        let mut per_detector: [Vec<u64>; 4] = Default::default();
        for e in events {
            per_detector[e.detector.index()].push(e.timestamp_ps);
        }
        for stream in per_detector.iter_mut() {
            stream.sort_unstable();
        }
        Self {
            per_detector,
            span_ps,
        }
    }

    pub fn stream(&self, detector: DetectorId) -> &[u64] {
        &self.per_detector[detector.index()]
    }

    pub fn span_ps(&self) -> u64 {
        self.span_ps
    }

    pub fn len(&self) -> usize {
        self.per_detector.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All events merged in time order, ties broken by detector index.
    pub fn merged(&self) -> Vec<DetectionEvent> {
        let mut all: Vec<DetectionEvent> = DetectorId::ALL
            .into_iter()
            .flat_map(|d| {
                self.stream(d)
                    .iter()
                    .map(move |&t| DetectionEvent::new(d, t))
            })
            .collect();
        all.sort_unstable();
        all
    }
}

/// Writes events one record at a time.
pub trait EventSink {
    fn record(&mut self, event: &DetectionEvent) -> io::Result<()>;
    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub struct DumpWriter<W: Write> {
    out: W,
    format: EventFormat,
}

impl<W: Write> DumpWriter<W> {
    pub fn new(out: W, format: EventFormat) -> Self {
        Self { out, format }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> EventSink for DumpWriter<W> {
    fn record(&mut self, event: &DetectionEvent) -> io::Result<()> {
        match self.format {
            EventFormat::Binary => {
                let mut record = [0u8; BINARY_RECORD_BYTES];
                record[0] = event.detector as u8;
                record[1..].copy_from_slice(&event.timestamp_ps.to_le_bytes());
                self.out.write_all(&record)
            }
            EventFormat::Text => writeln!(
                self.out,
                "{} {}",
                event.detector.label(),
                event.timestamp_ps
            ),
        }
    }

    fn finish(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

pub fn write_events<W: Write>(
    out: W,
    format: EventFormat,
    events: &[DetectionEvent],
) -> io::Result<W> {
    let mut writer = DumpWriter::new(out, format);
    for e in events {
        writer.record(e)?;
    }
    writer.finish()?;
    Ok(writer.into_inner())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<DetectionEvent>, EventError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % BINARY_RECORD_BYTES != 0 {
        return Err(EventError::Malformed {
            record: bytes.len() / BINARY_RECORD_BYTES,
            reason: format!("{} trailing bytes", bytes.len() % BINARY_RECORD_BYTES),
        });
    }
    bytes
        .chunks_exact(BINARY_RECORD_BYTES)
        .enumerate()
        .map(|(record, chunk)| {
            let detector =
                DetectorId::from_index(chunk[0] as usize).ok_or_else(|| EventError::Malformed {
                    record,
                    reason: format!("detector index {}", chunk[0]),
                })?;
            let timestamp = u64::from_le_bytes(chunk[1..].try_into().expect("8 bytes"));
            Ok(DetectionEvent::new(detector, timestamp))
        })
        .collect()
}

pub fn read_text<R: BufRead>(input: R) -> Result<Vec<DetectionEvent>, EventError> {
    let mut events = Vec::new();
    for (record, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| EventError::Malformed { record, reason };
        let mut fields = line.split_whitespace();
        let (Some(label), Some(ts), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(malformed(format!(
                "expected '<detector> <timestamp_ps>', got '{line}'"
            )));
        };
        let detector = label
            .parse::<DetectorId>()
            .map_err(|e| malformed(e.to_string()))?;
        let timestamp = ts
            .parse::<u64>()
            .map_err(|e| malformed(format!("timestamp '{ts}': {e}")))?;
        events.push(DetectionEvent::new(detector, timestamp));
    }
    Ok(events)
}

pub fn read_events<R: BufRead>(
    input: R,
    format: EventFormat,
) -> Result<Vec<DetectionEvent>, EventError> {
    match format {
        EventFormat::Binary => read_binary(input),
        EventFormat::Text => read_text(input),
    }
}

/// Reads a dump and checks that each detector's events are time-ordered.
pub fn load_streams<R: BufRead>(
    input: R,
    format: EventFormat,
    span_ps: u64,
) -> Result<EventStreams, EventError> {
    let mut per_detector: [Vec<u64>; 4] = Default::default();
    for e in read_events(input, format)? {
        per_detector[e.detector.index()].push(e.timestamp_ps);
    }
    EventStreams::new(per_detector, span_ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unordered_stream_is_rejected() {
        let err = EventStreams::new([vec![5, 3], vec![], vec![], vec![]], 10).unwrap_err();
        assert!(matches!(
            err,
            EventError::Unordered {
                detector: DetectorId::APrime,
                position: 1
            }
        ));
        assert!(EventStreams::new([vec![3, 3, 5], vec![], vec![], vec![]], 10).is_ok());
    }

    #[test]
    fn text_format_layout() {
        let events = [
            DetectionEvent::new(DetectorId::APrime, 1000),
            DetectionEvent::new(DetectorId::BDoublePrime, 1200),
        ];
        let text = String::from_utf8(write_events(Vec::new(), EventFormat::Text, &events).unwrap())
            .unwrap();
        assert_eq!(text, "A' 1000\nB'' 1200\n");
        let bytes = write_events(Vec::new(), EventFormat::Binary, &events).unwrap();
        assert_eq!(bytes.len(), 18);
        assert_eq!(&bytes[..9], &[0, 0xe8, 0x03, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes[9], 3);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            read_binary(&[0u8; 10][..]),
            Err(EventError::Malformed { .. })
        ));
        assert!(matches!(
            read_binary(&[7u8, 0, 0, 0, 0, 0, 0, 0, 0][..]),
            Err(EventError::Malformed { .. })
        ));
        assert!(matches!(
            read_text("A' x\n".as_bytes()),
            Err(EventError::Malformed { .. })
        ));
        assert!(matches!(
            read_text("Q 5\n".as_bytes()),
            Err(EventError::Malformed { .. })
        ));
        assert_eq!(read_text("# header\n\nB' 7\n".as_bytes()).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn dumps_round_trip(raw in proptest::collection::vec((0usize..4, any::<u64>()), 0..200), binary in any::<bool>()) {
            let format = if binary { EventFormat::Binary } else { EventFormat::Text };
            let events: Vec<DetectionEvent> = raw
                .into_iter()
                .map(|(d, t)| DetectionEvent::new(DetectorId::from_index(d).unwrap(), t))
                .collect();
            let bytes = write_events(Vec::new(), format, &events).unwrap();
            prop_assert_eq!(read_events(&bytes[..], format).unwrap(), events);
        }
    }
}
