//! Binary frame formation and histogram-based region proposals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_io::{Event, EventStream, SensorGeometry};
use crate::geometry::BoxF;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramerConfig {
    pub frame_period_us: u64,
    pub median_kernel: usize,
    /// Minimum histogram count for a column or row to belong to a run.
    pub hist_threshold: u32,
    pub min_box_side: u32,
    /// Minimum fraction of set pixels inside a kept proposal.
    pub min_density: f64,
}

impl Default for FramerConfig {
    fn default() -> Self {
        Self {
            frame_period_us: 66_000,
            median_kernel: 3,
            hist_threshold: 2,
            min_box_side: 3,
            min_density: 0.05,
        }
    }
}

impl FramerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_period_us == 0 {
            return Err(Error::InvalidConfig("frame_period_us must be positive".into()));
        }
        if self.median_kernel == 0 || self.median_kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "median_kernel must be odd and >= 1, got {}",
                self.median_kernel
            )));
        }
        if !(0.0..=1.0).contains(&self.min_density) {
            return Err(Error::InvalidConfig(format!(
                "min_density must lie in [0, 1], got {}",
                self.min_density
            )));
        }
        Ok(())
    }
}

/// One-bit activity image over `[t_start, t_end)`, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryFrame {
    pub t_start: u64,
    pub t_end: u64,
    pub geometry: SensorGeometry,
    pixels: Vec<bool>,
}

impl BinaryFrame {
    pub fn new(t_start: u64, t_end: u64, geometry: SensorGeometry) -> Self {
        Self {
            t_start,
            t_end,
            geometry,
            pixels: vec![false; geometry.pixel_count()],
        }
    }

    #[inline]
    fn index(&self, x: usize, y: usize) -> usize {
        y * self.geometry.width as usize + x
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[self.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let i = self.index(x, y);
        self.pixels[i] = value;
    }

    pub fn width(&self) -> usize {
        self.geometry.width as usize
    }

    pub fn height(&self) -> usize {
        self.geometry.height as usize
    }

    pub fn count_set(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Number of set pixels inside the pixel-aligned box.
    pub fn count_in(&self, x0: usize, y0: usize, w: usize, h: usize) -> usize {
        (y0..y0 + h)
            .map(|y| (x0..x0 + w).filter(|&x| self.get(x, y)).count())
            .sum()
    }

    /// Writes the frame as a binary PGM (`P5`), set pixels at 255.
    pub fn write_pgm<W: Write>(&self, mut sink: W) -> Result<()> {
        write!(sink, "P5\n{} {}\n255\n", self.width(), self.height())?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| if p { 255 } else { 0 }).collect();
        sink.write_all(&bytes)?;
        Ok(())
    }
}

/// Candidate object box extracted from one frame, stamped with the frame end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionProposal {
    pub bbox: BoxF,
    pub t: u64,
}

/// Sets every pixel hit by at least one event, regardless of polarity.
pub fn accumulate_frame(events: &[Event], t_start: u64, t_end: u64, geometry: SensorGeometry) -> BinaryFrame {
    let mut frame = BinaryFrame::new(t_start, t_end, geometry);
    for e in events {
        frame.set(e.x as usize, e.y as usize, true);
    }
    frame
}

/// Splits a stream into back-to-back windows `[k * period, (k + 1) * period)`
/// from time zero through the window holding the last event. Empty windows
/// are yielded too.
pub fn frame_windows(stream: &EventStream, period_us: u64) -> FrameWindows<'_> {
    assert!(period_us > 0, "frame period must be positive");
    let end = stream
        .events()
        .last()
        .map(|e| (e.t / period_us + 1) * period_us)
        .unwrap_or(0);
    FrameWindows {
        events: stream.events(),
        period: period_us,
        next_start: 0,
        end,
    }
}

pub struct FrameWindows<'a> {
    events: &'a [Event],
    period: u64,
    next_start: u64,
    end: u64,
}

impl<'a> Iterator for FrameWindows<'a> {
    /// `(t_start, t_end, events in window)`
    type Item = (u64, u64, &'a [Event]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_start >= self.end {
            return None;
        }
        let t_start = self.next_start;
        let t_end = t_start + self.period;
        let n = self.events.partition_point(|e| e.t < t_end);
        let (window, rest) = self.events.split_at(n);
        self.events = rest;
        self.next_start = t_end;
        Some((t_start, t_end, window))
    }
}

/// Majority filter over a `kernel x kernel` neighborhood with zero padding.
/// For a binary image this equals the median of the neighborhood.
pub fn median_filter(frame: &BinaryFrame, kernel: usize) -> BinaryFrame {
    assert!(kernel % 2 == 1, "median kernel must be odd");
    if kernel == 1 {
        return frame.clone();
    }
    let (w, h) = (frame.width(), frame.height());
    let stride = w + 1;
    // integral[(y) * stride + x] = set pixels in [0, x) x [0, y)
    let mut integral = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            row += frame.get(x, y) as u32;
            integral[(y + 1) * stride + x + 1] = integral[y * stride + x + 1] + row;
        }
    }
    let r = kernel / 2;
    let majority = (kernel * kernel / 2) as u32;
    let mut out = BinaryFrame::new(frame.t_start, frame.t_end, frame.geometry);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let count = integral[y1 * stride + x1] + integral[y0 * stride + x0]
                - integral[y0 * stride + x1]
                - integral[y1 * stride + x0];
            if count > majority {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Maximal runs `[start, end)` where `hist >= threshold`.
fn runs(hist: &[u32], threshold: u32) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &v) in hist.iter().enumerate() {
        match (v >= threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, hist.len()));
    }
    out
}

/// Column and row set-pixel counts of the region `[x0, x1) x [y0, y1)`.
fn histograms(frame: &BinaryFrame, x0: usize, x1: usize, y0: usize, y1: usize) -> (Vec<u32>, Vec<u32>) {
    let mut hx = vec![0u32; x1 - x0];
    let mut hy = vec![0u32; y1 - y0];
    for y in y0..y1 {
        for x in x0..x1 {
            if frame.get(x, y) {
                hx[x - x0] += 1;
                hy[y - y0] += 1;
            }
        }
    }
    (hx, hy)
}

/// First and one-past-last index whose value reaches `threshold`.
fn span(hist: &[u32], threshold: u32) -> Option<(usize, usize)> {
    let first = hist.iter().position(|&v| v >= threshold)?;
    let last = hist.iter().rposition(|&v| v >= threshold)?;
    Some((first, last + 1))
}

/// Region proposals from the frame's X and Y projection histograms.
///
/// Runs of columns (rows) whose count reaches `hist_threshold` are crossed
/// into candidate boxes; each candidate is tightened to the span of its own
/// qualifying columns and rows, then dropped if a side is shorter than
/// `min_box_side` or it holds fewer than `ceil(min_density * area)` set
/// pixels. Output is sorted by top-left `(y, x)`.
pub fn extract_proposals(frame: &BinaryFrame, cfg: &FramerConfig) -> Vec<RegionProposal> {
    let (w, h) = (frame.width(), frame.height());
    let (hx, hy) = histograms(frame, 0, w, 0, h);
    let x_runs = runs(&hx, cfg.hist_threshold);
    let y_runs = runs(&hy, cfg.hist_threshold);

    let mut out = Vec::new();
    for &(ya, yb) in &y_runs {
        for &(xa, xb) in &x_runs {
            let (lx, ly) = histograms(frame, xa, xb, ya, yb);
            let (Some((sx0, sx1)), Some((sy0, sy1))) =
                (span(&lx, cfg.hist_threshold), span(&ly, cfg.hist_threshold))
            else {
                continue;
            };
            let (x0, x1, y0, y1) = (xa + sx0, xa + sx1, ya + sy0, ya + sy1);
            let (bw, bh) = (x1 - x0, y1 - y0);
            if bw < cfg.min_box_side as usize || bh < cfg.min_box_side as usize {
                continue;
            }
            let needed = (cfg.min_density * (bw * bh) as f64).ceil() as usize;
            let set = frame.count_in(x0, y0, bw, bh);
            if set == 0 || set < needed {
                continue;
            }
            out.push(RegionProposal {
                bbox: BoxF::new(x0 as f64, y0 as f64, bw as f64, bh as f64),
                t: frame.t_end,
            });
        }
    }
    out.sort_by(|a, b| {
        (a.bbox.y, a.bbox.x)
            .partial_cmp(&(b.bbox.y, b.bbox.x))
            .expect("proposal coordinates are finite")
    });
    out
}

/// Accumulate, filter, and extract for one window.
pub fn propose(events: &[Event], t_start: u64, t_end: u64, geometry: SensorGeometry, cfg: &FramerConfig) -> Vec<RegionProposal> {
    let frame = accumulate_frame(events, t_start, t_end, geometry);
    let filtered = median_filter(&frame, cfg.median_kernel);
    extract_proposals(&filtered, cfg)
}
