//! Event streams and track snapshots on disk.
//!
//! Binary event layout (`EVS0`), all integers little-endian:
//!
//! ```text
//! header (16 bytes): b"EVS0" | width: u16 | height: u16 | reserved: u32 = 0 | count: u32
//! record (16 bytes): t_us: u64 | x: u16 | y: u16 | p: u8 | 3 zero bytes
//! ```
//!
//! Event CSV has the header `t_us,x,y,p`; track CSV has
//! `track_id,t_us,x,y,w,h,state,vx,vy` with four-decimal floats.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eot::{TrackSnapshot, TrackState};
use crate::error::{Error, Result};
use crate::geometry::BoxF;

pub const MAGIC: &[u8; 4] = b"EVS0";
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16;
pub const EVENT_CSV_HEADER: &str = "t_us,x,y,p";
pub const TRACK_CSV_HEADER: &str = "track_id,t_us,x,y,w,h,state,vx,vy";
pub const BOX_CSV_HEADER: &str = "track_id,t_us,x,y,w,h";

/// One sensor event. `t` is in microseconds relative to the stream start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: u8,
}

impl Event {
    pub const fn new(t: u64, x: u16, y: u16, p: u8) -> Self {
        Self { t, x, y, p }
    }

    /// Continuous coordinates of the pixel center.
    #[inline]
    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub width: u16,
    pub height: u16,
}

impl SensorGeometry {
    pub fn new(width: u16, height: u16) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSpec(format!(
                "sensor geometry must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width as u32 && y < self.height as u32
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// A validated, time-ordered event sequence on a known sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates bounds, polarity, and timestamp order.
    pub fn new(geometry: SensorGeometry, events: Vec<Event>) -> Result<Self> {
        let mut prev = 0u64;
        for (index, e) in events.iter().enumerate() {
            check_event(&geometry, index, e, prev)?;
            prev = e.t;
        }
        Ok(Self { geometry, events })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

fn check_event(geometry: &SensorGeometry, index: usize, e: &Event, prev: u64) -> Result<()> {
    if !geometry.contains(e.x as u32, e.y as u32) {
        return Err(Error::OutOfBoundsEvent {
            index,
            x: e.x as u32,
            y: e.y as u32,
            width: geometry.width,
            height: geometry.height,
        });
    }
    if e.p > 1 {
        return Err(Error::MalformedRecord {
            index,
            reason: format!("polarity {} is not 0 or 1", e.p),
        });
    }
    if index > 0 && e.t < prev {
        return Err(Error::NonMonotoneTimestamp { index, prev, t: e.t });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Binary,
    Csv,
}

impl EventFormat {
    /// `.csv` maps to CSV, anything else to binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Binary,
        }
    }
}

/// Reads a whole event stream. CSV input carries no geometry, so
/// `geometry_override` is required for it; for binary input it replaces the
/// header geometry when given.
pub fn read_events<R: Read>(
    mut source: R,
    format: EventFormat,
    geometry_override: Option<SensorGeometry>,
) -> Result<EventStream> {
    match format {
        EventFormat::Binary => {
            let mut bytes = Vec::new();
            source.read_to_end(&mut bytes)?;
            decode_binary(&bytes, geometry_override)
        }
        EventFormat::Csv => {
            let geometry = geometry_override.ok_or_else(|| {
                Error::MalformedHeader("CSV event input requires an explicit sensor geometry".into())
            })?;
            read_events_csv(BufReader::new(source), geometry)
        }
    }
}

pub fn write_events<W: Write>(stream: &EventStream, sink: W, format: EventFormat) -> Result<()> {
    let mut sink = BufWriter::new(sink);
    match format {
        EventFormat::Binary => sink.write_all(&encode_binary(stream)?)?,
        EventFormat::Csv => {
            writeln!(sink, "{EVENT_CSV_HEADER}")?;
            for e in stream.events() {
                writeln!(sink, "{},{},{},{}", e.t, e.x, e.y, e.p)?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn encode_binary(stream: &EventStream) -> Result<Vec<u8>> {
    let count = u32::try_from(stream.len()).map_err(|_| {
        Error::InvalidSpec(format!("{} events exceed the u32 record count", stream.len()))
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * stream.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&stream.geometry.width.to_le_bytes());
    out.extend_from_slice(&stream.geometry.height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.extend_from_slice(&[e.p, 0, 0, 0]);
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8], geometry_override: Option<SensorGeometry>) -> Result<EventStream> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let (header, body) = bytes.split_at(HEADER_LEN);
    if &header[0..4] != MAGIC {
        return Err(Error::MalformedHeader(format!("bad magic {:?}", &header[0..4])));
    }
    let width = u16::from_le_bytes([header[4], header[5]]);
    let height = u16::from_le_bytes([header[6], header[7]]);
    let reserved = u32::from_le_bytes(header[8..12].try_into().unwrap());
    let count = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    if reserved != 0 {
        return Err(Error::MalformedHeader(format!(
            "unsupported version: reserved field is {reserved}"
        )));
    }
    let geometry = match geometry_override {
        Some(g) => g,
        None => SensorGeometry::new(width, height)
            .map_err(|_| Error::MalformedHeader(format!("degenerate geometry {width}x{height}")))?,
    };

    let expected = count
        .checked_mul(RECORD_LEN)
        .ok_or_else(|| Error::MalformedHeader(format!("record count {count} overflows")))?;
    if body.len() < expected {
        return Err(Error::TruncatedRecord {
            expected,
            found: body.len(),
        });
    }
    if body.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after {count} records",
            body.len() - expected
        )));
    }

    let mut events = Vec::with_capacity(count);
    let mut prev = 0u64;
    for (index, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        if rec[13..16] != [0, 0, 0] {
            return Err(Error::MalformedRecord {
                index,
                reason: "reserved bytes are not zero".into(),
            });
        }
        let e = Event {
            t: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            x: u16::from_le_bytes([rec[8], rec[9]]),
            y: u16::from_le_bytes([rec[10], rec[11]]),
            p: rec[12],
        };
        check_event(&geometry, index, &e, prev)?;
        prev = e.t;
        events.push(e);
    }
    Ok(EventStream { geometry, events })
}

fn read_events_csv<R: BufRead>(source: R, geometry: SensorGeometry) -> Result<EventStream> {
    let mut lines = source.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim_end) != Some(EVENT_CSV_HEADER) {
        return Err(Error::MalformedHeader(format!(
            "event CSV must start with '{EVENT_CSV_HEADER}'"
        )));
    }

    let mut events = Vec::new();
    let mut prev = 0u64;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let row = i as u64 + 2;
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<u64> {
            let field = fields.next().ok_or_else(|| Error::MalformedRow {
                line: row,
                reason: format!("missing field {name}"),
            })?;
            field.trim().parse::<u64>().map_err(|err| Error::MalformedRow {
                line: row,
                reason: format!("{name}: {err}"),
            })
        };
        let t = next("t_us")?;
        let x = next("x")?;
        let y = next("y")?;
        let p = next("p")?;
        if fields.next().is_some() {
            return Err(Error::MalformedRow {
                line: row,
                reason: "too many fields".into(),
            });
        }
        let index = events.len();
        if !geometry.contains(x.min(u32::MAX as u64) as u32, y.min(u32::MAX as u64) as u32) {
            return Err(Error::OutOfBoundsEvent {
                index,
                x: x.min(u32::MAX as u64) as u32,
                y: y.min(u32::MAX as u64) as u32,
                width: geometry.width,
                height: geometry.height,
            });
        }
        let p = u8::try_from(p).unwrap_or(u8::MAX);
        let e = Event::new(t, x as u16, y as u16, p);
        check_event(&geometry, index, &e, prev)?;
        prev = t;
        events.push(e);
    }
    Ok(EventStream { geometry, events })
}

/// Formats a float with four decimals, never emitting `-0.0000`.
pub(crate) fn fmt4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

pub fn write_tracks<W: Write>(tracks: &[TrackSnapshot], sink: W) -> Result<()> {
    let mut sink = BufWriter::new(sink);
    writeln!(sink, "{TRACK_CSV_HEADER}")?;
    for s in tracks {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{}",
            s.id,
            s.t,
            fmt4(s.bbox.x),
            fmt4(s.bbox.y),
            fmt4(s.bbox.w),
            fmt4(s.bbox.h),
            s.state.as_str(),
            fmt4(s.vx),
            fmt4(s.vy)
        )?;
    }
    sink.flush()?;
    Ok(())
}

/// Writes `(track_id, t, box)` rows, as produced by interpolation.
pub fn write_boxes<W: Write>(rows: &[(u64, u64, BoxF)], sink: W) -> Result<()> {
    let mut sink = BufWriter::new(sink);
    writeln!(sink, "{BOX_CSV_HEADER}")?;
    for (id, t, b) in rows {
        writeln!(sink, "{id},{t},{},{},{},{}", fmt4(b.x), fmt4(b.y), fmt4(b.w), fmt4(b.h))?;
    }
    sink.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TrackRow {
    track_id: u64,
    t_us: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    state: String,
    vx: f64,
    vy: f64,
}

pub fn read_tracks<R: Read>(source: R) -> Result<Vec<TrackSnapshot>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != TRACK_CSV_HEADER {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("track CSV header must be '{TRACK_CSV_HEADER}'"),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<TrackRow>() {
        let row = row?;
        let state = TrackState::parse(&row.state).ok_or_else(|| Error::MalformedRow {
            line: out.len() as u64 + 2,
            reason: format!("unknown state '{}'", row.state),
        })?;
        out.push(TrackSnapshot {
            id: row.track_id,
            t: row.t_us,
            bbox: BoxF::new(row.x, row.y, row.w, row.h),
            state,
            vx: row.vx,
            vy: row.vy,
        });
    }
    Ok(out)
}
