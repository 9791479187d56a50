//! Frame-based Events Overlap Tracker.
//!
//! Each frame the tracker predicts every non-free track forward by its
//! velocity, assigns region proposals by overlap ratio, merges proposals
//! that fall on one track, resolves proposals shared by an occluding pair,
//! updates tracks with a weighted average, and finally releases tracks that
//! stayed unmatched for too long or left the sensor.

use std::fmt;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_io::SensorGeometry;
use crate::framer::RegionProposal;
use crate::geometry::{overlap_area, BoxF};

const US_PER_S: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EotConfig {
    pub max_trackers: usize,
    /// A proposal is assigned to a track when overlap / min(area) exceeds this.
    pub overlap_ratio_threshold: f64,
    /// Weight of the prediction against the new measurement.
    pub alpha: f64,
    pub max_unlocks: u32,
    /// Drop the size-delta term from the velocity update.
    pub velocity_position_only: bool,
}

impl Default for EotConfig {
    fn default() -> Self {
        Self {
            max_trackers: 8,
            overlap_ratio_threshold: 0.2,
            alpha: 0.5,
            max_unlocks: 3,
            velocity_position_only: false,
        }
    }
}

impl EotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_trackers == 0 {
            return Err(Error::InvalidConfig("max_trackers must be >= 1".into()));
        }
        if !(self.overlap_ratio_threshold > 0.0 && self.overlap_ratio_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "overlap_ratio_threshold must lie in (0, 1), got {}",
                self.overlap_ratio_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackState {
    Free,
    Tracking,
    Locked,
}

impl TrackState {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackState::Free => "free",
            TrackState::Tracking => "tracking",
            TrackState::Locked => "locked",
        }
    }

    /// Parses a serialized state; `free` never appears in output.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tracking" => Some(TrackState::Tracking),
            "locked" => Some(TrackState::Locked),
            _ => None,
        }
    }
}

impl fmt::Display for TrackState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One output row: a non-free track at a frame boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSnapshot {
    pub id: u64,
    pub t: u64,
    pub bbox: BoxF,
    pub state: TrackState,
    pub vx: f64,
    pub vy: f64,
}

/// Anything carrying a timestamped box, for interpolation.
pub trait Timed {
    fn time(&self) -> u64;
    fn bbox(&self) -> BoxF;
}

impl Timed for TrackSnapshot {
    fn time(&self) -> u64 {
        self.t
    }
    fn bbox(&self) -> BoxF {
        self.bbox
    }
}

impl<T: Timed> Timed for &T {
    fn time(&self) -> u64 {
        (*self).time()
    }
    fn bbox(&self) -> BoxF {
        (*self).bbox()
    }
}

impl Timed for (u64, BoxF) {
    fn time(&self) -> u64 {
        self.0
    }
    fn bbox(&self) -> BoxF {
        self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionLink {
    pub partner: u64,
    /// Width of the shared proposal on the previous occluded frame.
    pub prev_shared_w: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Track {
    /// Zero while free.
    pub id: u64,
    pub bbox: BoxF,
    /// Pixels per second.
    pub vx: f64,
    pub vy: f64,
    pub state: TrackState,
    pub t_last: u64,
    pub unlock_count: u32,
    pub pre_occlusion_size: Option<(f64, f64)>,
    pub occlusion: Option<OcclusionLink>,
}

impl Track {
    pub fn free() -> Self {
        Self {
            id: 0,
            bbox: BoxF::default(),
            vx: 0.0,
            vy: 0.0,
            state: TrackState::Free,
            t_last: 0,
            unlock_count: 0,
            pre_occlusion_size: None,
            occlusion: None,
        }
    }

    /// A fresh track sitting on a proposal.
    pub fn spawn(id: u64, bbox: BoxF, t: u64) -> Self {
        Self {
            id,
            bbox,
            state: TrackState::Tracking,
            t_last: t,
            ..Self::free()
        }
    }

    pub fn is_free(&self) -> bool {
        self.state == TrackState::Free
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Box shifted by velocity from `t_last` to `t`.
    pub fn predict(&self, t: u64) -> BoxF {
        let dt = (t as f64 - self.t_last as f64) / US_PER_S;
        self.bbox.translated(self.vx * dt, self.vy * dt)
    }

    pub fn snapshot(&self, t: u64) -> TrackSnapshot {
        TrackSnapshot {
            id: self.id,
            t,
            bbox: if t == self.t_last { self.bbox } else { self.predict(t) },
            state: self.state,
            vx: self.vx,
            vy: self.vy,
        }
    }
}

/// `overlap / min(area(a), area(b))`, zero for degenerate boxes.
pub fn overlap_ratio(a: &BoxF, b: &BoxF) -> f64 {
    let denom = a.area().min(b.area());
    if denom <= 0.0 {
        0.0
    } else {
        overlap_area(a, b) / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub slot: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedProposal {
    pub proposal: usize,
    /// Sorted by ratio descending, then track id ascending.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentPlan {
    /// Per tracker slot, proposals that matched only that track. Two or more
    /// entries form a merge group.
    pub exclusive: Vec<Vec<usize>>,
    /// Proposals matched by several tracks: occlusion-check groups.
    pub shared: Vec<SharedProposal>,
    /// `(proposal, free slot)` for proposals that matched no track.
    pub spawned: Vec<(usize, usize)>,
    /// Unmatched proposals left over once free slots ran out.
    pub dropped: Vec<usize>,
}

/// Matches proposals against velocity-predicted track boxes.
pub fn assign_proposals(tracks: &[Track], proposals: &[RegionProposal], t: u64, cfg: &EotConfig) -> AssignmentPlan {
    let predicted: Vec<Option<BoxF>> = tracks
        .iter()
        .map(|tr| (!tr.is_free()).then(|| tr.predict(t)))
        .collect();

    let mut plan = AssignmentPlan {
        exclusive: vec![Vec::new(); tracks.len()],
        ..Default::default()
    };
    let mut free_slots = tracks.iter().enumerate().filter(|(_, tr)| tr.is_free()).map(|(i, _)| i);

    for (pi, proposal) in proposals.iter().enumerate() {
        let mut candidates: Vec<Candidate> = predicted
            .iter()
            .enumerate()
            .filter_map(|(slot, pred)| {
                let ratio = overlap_ratio(pred.as_ref()?, &proposal.bbox);
                (ratio > cfg.overlap_ratio_threshold).then_some(Candidate { slot, ratio })
            })
            .collect();
        match candidates.len() {
            0 => match free_slots.next() {
                Some(slot) => plan.spawned.push((pi, slot)),
                None => plan.dropped.push(pi),
            },
            1 => plan.exclusive[candidates[0].slot].push(pi),
            _ => {
                candidates.sort_by(|a, b| {
                    b.ratio
                        .total_cmp(&a.ratio)
                        .then(tracks[a.slot].id.cmp(&tracks[b.slot].id))
                });
                plan.shared.push(SharedProposal { proposal: pi, candidates });
            }
        }
    }
    plan
}

/// Weighted-average update of a matched track.
///
/// Position blends the proposal with the velocity prediction; size blends
/// with no rate term. The velocity blends the measured displacement (plus
/// the size change, unless `velocity_position_only`) with the previous
/// velocity.
pub fn update_track(track: &Track, r_new: &BoxF, t: u64, cfg: &EotConfig) -> Result<Track> {
    if t <= track.t_last {
        return Err(Error::NonPositiveDt { t, t_last: track.t_last });
    }
    let dt = (t - track.t_last) as f64 / US_PER_S;
    let a = cfg.alpha;
    let prev = track.bbox;

    let bbox = BoxF::new(
        (1.0 - a) * r_new.x + a * (prev.x + track.vx * dt),
        (1.0 - a) * r_new.y + a * (prev.y + track.vy * dt),
        (1.0 - a) * r_new.w + a * prev.w,
        (1.0 - a) * r_new.h + a * prev.h,
    );
    let (dw, dh) = if cfg.velocity_position_only {
        (0.0, 0.0)
    } else {
        (r_new.w - prev.w, r_new.h - prev.h)
    };
    let vx = (1.0 - a) * ((r_new.x - prev.x) + dw) / dt + a * track.vx;
    let vy = (1.0 - a) * ((r_new.y - prev.y) + dh) / dt + a * track.vy;

    let state = match track.state {
        TrackState::Free => TrackState::Tracking,
        // Locking needs a match on the previous frame as well.
        TrackState::Tracking if track.unlock_count == 0 => TrackState::Locked,
        other => other,
    };
    Ok(Track {
        bbox,
        vx,
        vy,
        state,
        t_last: t,
        unlock_count: 0,
        ..*track
    })
}

/// Groups several proposals that fell on one track: the union of the
/// proposals and the track's predicted box. A single proposal is returned
/// as is.
pub fn merge_shared_proposals(group: &[BoxF], predicted: &BoxF) -> BoxF {
    match group {
        [] => *predicted,
        [only] => *only,
        [first, rest @ ..] => rest.iter().fold(first.union(predicted), |acc, b| acc.union(b)),
    }
}

/// Pairwise occlusion flags for track `a` against partner `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OcclusionContext {
    /// Both move in a common direction.
    pub cd: bool,
    /// The shared region grew since the previous occluded frame.
    pub wi: bool,
    /// `a` is the faster of the two.
    pub hvo: bool,
}

impl OcclusionContext {
    /// `prev_shared_w` is the shared width on the previous occluded frame;
    /// at occlusion onset there is none and `wi` is false.
    pub fn evaluate(a: &Track, b: &Track, shared: &BoxF, prev_shared_w: Option<f64>) -> Self {
        let sum = (a.vx + b.vx).hypot(a.vy + b.vy);
        Self {
            cd: sum > a.speed().max(b.speed()),
            wi: prev_shared_w.is_some_and(|w| shared.w > w),
            hvo: a.speed() > b.speed(),
        }
    }
}

/// Box for one occluded track. When the region is shrinking the track takes
/// the whole region; when it grows the track keeps its pre-occlusion size,
/// anchored at the leading end of the region along its own motion when it
/// moves opposite to its partner or is the faster one, otherwise at the
/// trailing end.
fn occluded_box(track: &Track, shared: &BoxF, ctx: &OcclusionContext) -> Result<BoxF> {
    let (wo, ho) = track.pre_occlusion_size.ok_or(Error::MissingPreOcclusionSize(track.id))?;
    if !ctx.wi {
        return Ok(*shared);
    }
    let leading = !ctx.cd || ctx.hvo;
    let far_x = shared.x + shared.w - wo;
    let far_y = shared.y + shared.h - ho;
    // "Far" is the leading end for a track moving toward +x (+y).
    let pick = |v: f64, near: f64, far: f64| if (v >= 0.0) == leading { far } else { near };
    Ok(BoxF::new(
        pick(track.vx, shared.x, far_x),
        pick(track.vy, shared.y, far_y),
        wo,
        ho,
    ))
}

/// Boxes for both tracks of an occluding pair sharing one proposal. `ctx`
/// is evaluated for `a`; `b` uses the same flags with the speed comparison
/// reversed.
pub fn resolve_occlusion(a: &Track, b: &Track, shared: &BoxF, ctx: &OcclusionContext) -> Result<(BoxF, BoxF)> {
    let ctx_b = OcclusionContext {
        hvo: b.speed() > a.speed(),
        ..*ctx
    };
    Ok((occluded_box(a, shared, ctx)?, occluded_box(b, shared, &ctx_b)?))
}

/// Per-frame release of lost tracks. Unmatched tracks accumulate unlocks
/// and are freed once past `max_unlocks`; any track whose predicted center
/// leaves the sensor is freed at once.
pub fn cleanup(tracks: &mut [Track], matched: &[bool], t: u64, geometry: &SensorGeometry, cfg: &EotConfig) {
    for (track, &hit) in tracks.iter_mut().zip(matched) {
        if track.is_free() {
            continue;
        }
        if hit {
            track.unlock_count = 0;
        } else {
            track.unlock_count += 1;
        }
        let (cx, cy) = track.predict(t).center();
        let outside = !(cx >= 0.0 && cy >= 0.0 && cx < geometry.width as f64 && cy < geometry.height as f64);
        if track.unlock_count > cfg.max_unlocks || outside {
            debug!("releasing track {} at t={t} (outside={outside})", track.id);
            *track = Track::free();
        }
    }
}

/// Linear interpolation of a time-ordered history at `t`: with `j` the first
/// entry later than `t`, returns `T[j-1] + λ (T[j] - T[j-1])` where
/// `λ = (t - t[j-1]) / (t[j] - t[j-1])`. Endpoints return stored boxes.
pub fn interpolate<H: Timed>(history: &[H], t: u64) -> Result<BoxF> {
    let (Some(first), Some(last)) = (history.first(), history.last()) else {
        return Err(Error::OutOfRange { t, start: 0, end: 0 });
    };
    let out_of_range = || Error::OutOfRange {
        t,
        start: first.time(),
        end: last.time(),
    };
    let j = history.partition_point(|h| h.time() <= t);
    if j == 0 {
        return Err(out_of_range());
    }
    if j == history.len() {
        return if t == last.time() { Ok(last.bbox()) } else { Err(out_of_range()) };
    }
    let (prev, next) = (&history[j - 1], &history[j]);
    let lambda = (t - prev.time()) as f64 / (next.time() - prev.time()) as f64;
    let (p, n) = (prev.bbox(), next.bbox());
    Ok(BoxF::new(
        p.x + lambda * (n.x - p.x),
        p.y + lambda * (n.y - p.y),
        p.w + lambda * (n.w - p.w),
        p.h + lambda * (n.h - p.h),
    ))
}

/// Full EOT state: a fixed pool of track slots.
#[derive(Debug, Clone)]
pub struct EotTracker {
    cfg: EotConfig,
    geometry: SensorGeometry,
    tracks: Vec<Track>,
    next_id: u64,
    last_t: Option<u64>,
}

impl EotTracker {
    pub fn new(cfg: EotConfig, geometry: SensorGeometry) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            geometry,
            tracks: vec![Track::free(); cfg.max_trackers],
            next_id: 1,
            last_t: None,
        })
    }

    pub fn config(&self) -> &EotConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn active_count(&self) -> usize {
        self.tracks.iter().filter(|t| !t.is_free()).count()
    }

    /// Whether a pair entering a shared proposal counts as occluding: either
    /// already linked, or their predicted boxes overlap one or two frame
    /// steps ahead.
    fn occlusion_onset(&self, a: &Track, b: &Track, t: u64, step_us: u64) -> bool {
        if a.occlusion.is_some_and(|l| l.partner == b.id) && b.occlusion.is_some_and(|l| l.partner == a.id) {
            return true;
        }
        (1..=2u64).any(|n| {
            let ahead = t + n * step_us;
            overlap_area(&a.predict(ahead), &b.predict(ahead)) > 0.0
        })
    }

    /// Processes the proposals of the frame ending at `t` and returns one
    /// snapshot per non-free track, ordered by id.
    pub fn step(&mut self, proposals: &[RegionProposal], t: u64) -> Result<Vec<TrackSnapshot>> {
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(Error::NonPositiveDt { t, t_last: prev });
            }
        }
        let step_us = self.last_t.map_or(0, |prev| t - prev);
        self.last_t = Some(t);

        let plan = assign_proposals(&self.tracks, proposals, t, &self.cfg);
        let n = self.tracks.len();
        let mut groups = plan.exclusive.clone();
        let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
        let mut claimed = vec![false; n];

        for shared in &plan.shared {
            let open: Vec<Candidate> = shared.candidates.iter().copied().filter(|c| !claimed[c.slot]).collect();
            match open.as_slice() {
                [] => {}
                [only] => groups[only.slot].push(shared.proposal),
                [a, b] if self.occlusion_onset(&self.tracks[a.slot], &self.tracks[b.slot], t, step_us) => {
                    claimed[a.slot] = true;
                    claimed[b.slot] = true;
                    pairs.push((shared.proposal, a.slot, b.slot));
                }
                [best, rest @ ..] => {
                    if rest.len() > 1 {
                        warn!(
                            "proposal {} shared by {} tracks at t={t}; kept as one track {}",
                            shared.proposal,
                            open.len(),
                            self.tracks[best.slot].id
                        );
                    }
                    groups[best.slot].push(shared.proposal);
                }
            }
        }

        let mut matched = vec![false; n];

        for &(pi, sa, sb) in &pairs {
            let shared = proposals[pi].bbox;
            let (mut a, mut b) = (self.tracks[sa], self.tracks[sb]);
            let linked = a.occlusion.is_some_and(|l| l.partner == b.id);
            let prev_w = if linked { a.occlusion.and_then(|l| l.prev_shared_w) } else { None };
            if !linked {
                debug!("occlusion onset between {} and {} at t={t}", a.id, b.id);
                a.pre_occlusion_size = Some((a.bbox.w, a.bbox.h));
                b.pre_occlusion_size = Some((b.bbox.w, b.bbox.h));
            }
            let ctx = OcclusionContext::evaluate(&a, &b, &shared, prev_w);
            let (box_a, box_b) = resolve_occlusion(&a, &b, &shared, &ctx)?;
            let (id_a, id_b) = (a.id, b.id);
            for (track, bbox, partner) in [(&mut a, box_a, id_b), (&mut b, box_b, id_a)] {
                track.state = match track.state {
                    TrackState::Tracking if track.unlock_count == 0 => TrackState::Locked,
                    s => s,
                };
                track.bbox = bbox;
                track.t_last = t;
                track.unlock_count = 0;
                track.occlusion = Some(OcclusionLink {
                    partner,
                    prev_shared_w: Some(shared.w),
                });
            }
            self.tracks[sa] = a;
            self.tracks[sb] = b;
            matched[sa] = true;
            matched[sb] = true;
        }

        for slot in 0..n {
            if claimed[slot] {
                continue;
            }
            let track = &mut self.tracks[slot];
            if track.occlusion.take().is_some() {
                track.pre_occlusion_size = None;
            }
            if track.is_free() || groups[slot].is_empty() {
                continue;
            }
            let boxes: Vec<BoxF> = groups[slot].iter().map(|&pi| proposals[pi].bbox).collect();
            let r_new = merge_shared_proposals(&boxes, &track.predict(t));
            *track = update_track(track, &r_new, t, &self.cfg)?;
            matched[slot] = true;
        }

        for &(pi, slot) in &plan.spawned {
            self.tracks[slot] = Track::spawn(self.next_id, proposals[pi].bbox, t);
            self.next_id += 1;
            matched[slot] = true;
        }

        cleanup(&mut self.tracks, &matched, t, &self.geometry, &self.cfg);

        let mut out: Vec<TrackSnapshot> = self
            .tracks
            .iter()
            .filter(|tr| !tr.is_free())
            .map(|tr| tr.snapshot(t))
            .collect();
        out.sort_by_key(|s| s.id);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn locked(id: u64, bbox: BoxF, vx: f64, t: u64) -> Track {
        Track {
            id,
            bbox,
            vx,
            state: TrackState::Locked,
            t_last: t,
            ..Track::free()
        }
    }

    fn prop(x: f64, y: f64, w: f64, h: f64, t: u64) -> RegionProposal {
        RegionProposal { bbox: BoxF::new(x, y, w, h), t }
    }

    fn geom() -> SensorGeometry {
        SensorGeometry::new(240, 180).unwrap()
    }

    #[test]
    fn bootstrap_assigns_free_tracker() {
        let tracks = vec![Track::free(); 2];
        let plan = assign_proposals(&tracks, &[prop(1.0, 1.0, 5.0, 5.0, 0)], 0, &EotConfig::default());
        assert_eq!(plan.spawned, vec![(0, 0)]);
        assert!(plan.dropped.is_empty());
    }

    #[test]
    fn drops_when_pool_is_full() {
        let tracks = vec![locked(1, BoxF::new(100.0, 100.0, 5.0, 5.0), 0.0, 0)];
        let plan = assign_proposals(&tracks, &[prop(1.0, 1.0, 5.0, 5.0, 10)], 10, &EotConfig::default());
        assert_eq!(plan.dropped, vec![0]);
    }

    #[test]
    fn coincident_stationary_track_is_assigned() {
        let b = BoxF::new(10.0, 10.0, 8.0, 8.0);
        let tracks = vec![locked(1, b, 0.0, 0)];
        let plan = assign_proposals(&tracks, &[RegionProposal { bbox: b, t: 66_000 }], 66_000, &EotConfig::default());
        assert_eq!(plan.exclusive[0], vec![0]);
    }

    #[test]
    fn velocity_prediction_drives_assignment() {
        let track = locked(1, BoxF::new(0.0, 0.0, 10.0, 10.0), 100.0, 0);
        let proposal = BoxF::new(6.6, 0.0, 10.0, 10.0);
        let predicted = track.predict(66_000);
        assert!((overlap_ratio(&predicted, &proposal) - 1.0).abs() < 1e-12);
        // Without prediction the overlap is a 3.4 x 10 strip.
        let still = overlap_ratio(&track.bbox, &proposal);
        assert!((still - 34.0 / 100.0).abs() < 1e-12);

        let cfg = EotConfig {
            overlap_ratio_threshold: 0.5,
            ..Default::default()
        };
        let plan = assign_proposals(&[track], &[RegionProposal { bbox: proposal, t: 66_000 }], 66_000, &cfg);
        assert_eq!(plan.exclusive[0], vec![0]);
        let mut stopped = track;
        stopped.vx = 0.0;
        let plan = assign_proposals(&[stopped], &[RegionProposal { bbox: proposal, t: 66_000 }], 66_000, &cfg);
        assert_eq!(plan.spawned.len() + plan.dropped.len(), 1);
    }

    #[test]
    fn update_with_zero_alpha_copies_proposal() {
        let cfg = EotConfig { alpha: 0.0, ..Default::default() };
        let track = locked(1, BoxF::new(3.0, 4.0, 5.0, 6.0), 40.0, 0);
        let r = BoxF::new(7.25, 1.5, 9.0, 2.0);
        assert_eq!(update_track(&track, &r, 1000, &cfg).unwrap().bbox, r);
    }

    #[test]
    fn update_hand_evaluated() {
        let cfg = EotConfig::default();
        let track = locked(1, BoxF::new(0.0, 0.0, 10.0, 10.0), 0.0, 0);
        let out = update_track(&track, &BoxF::new(2.0, 0.0, 10.0, 10.0), 66_000, &cfg).unwrap();
        assert!((out.bbox.x - 1.0).abs() < 1e-12);
        assert!((out.vx - 0.5 * 2.0 / 0.066).abs() < 1e-9);
        assert!((out.vx - 15.1515).abs() < 1e-3);
        assert_eq!(out.vy, 0.0);
    }

    #[test]
    fn update_size_term_and_opt_out() {
        let track = locked(1, BoxF::new(0.0, 0.0, 10.0, 10.0), 0.0, 0);
        let r = BoxF::new(0.0, 0.0, 14.0, 10.0);
        let literal = update_track(&track, &r, 100_000, &EotConfig::default()).unwrap();
        assert!((literal.vx - 0.5 * 4.0 / 0.1).abs() < 1e-9);
        let cfg = EotConfig { velocity_position_only: true, ..Default::default() };
        assert_eq!(update_track(&track, &r, 100_000, &cfg).unwrap().vx, 0.0);
    }

    #[test]
    fn update_fixed_point_and_errors() {
        let cfg = EotConfig::default();
        let b = BoxF::new(5.0, 6.0, 7.0, 8.0);
        let track = locked(1, b, 0.0, 10);
        let out = update_track(&track, &b, 20, &cfg).unwrap();
        assert_eq!(out.bbox, b);
        assert_eq!((out.vx, out.vy), (0.0, 0.0));
        assert!(matches!(update_track(&track, &b, 10, &cfg), Err(Error::NonPositiveDt { .. })));
    }

    #[test]
    fn update_state_transitions() {
        let cfg = EotConfig::default();
        let b = BoxF::new(0.0, 0.0, 4.0, 4.0);
        let t = Track::spawn(1, b, 0);
        let t = update_track(&t, &b, 1, &cfg).unwrap();
        assert_eq!(t.state, TrackState::Locked);
        let t = update_track(&t, &b, 2, &cfg).unwrap();
        assert_eq!(t.state, TrackState::Locked);
        let coasted = Track { unlock_count: 1, ..Track::spawn(2, b, 0) };
        assert_eq!(update_track(&coasted, &b, 1, &cfg).unwrap().state, TrackState::Tracking);
    }

    #[test]
    fn merge_examples() {
        let a = BoxF::new(0.0, 0.0, 10.0, 10.0);
        let b = BoxF::new(5.0, 5.0, 10.0, 10.0);
        let inside = BoxF::new(2.0, 2.0, 4.0, 4.0);
        assert_eq!(merge_shared_proposals(&[a], &BoxF::new(50.0, 50.0, 1.0, 1.0)), a);
        assert_eq!(merge_shared_proposals(&[a, b], &inside), BoxF::new(0.0, 0.0, 15.0, 15.0));
    }

    #[test]
    fn merge_matches_corner_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.random_range(2..6);
            let mut r = || BoxF::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
            let group: Vec<BoxF> = (0..k).map(|_| r()).collect();
            let pred = r();
            let all: Vec<&BoxF> = group.iter().chain(std::iter::once(&pred)).collect();
            let x0 = all.iter().map(|b| b.x).fold(f64::INFINITY, f64::min);
            let y0 = all.iter().map(|b| b.y).fold(f64::INFINITY, f64::min);
            let x1 = all.iter().map(|b| b.x + b.w).fold(f64::NEG_INFINITY, f64::max);
            let y1 = all.iter().map(|b| b.y + b.h).fold(f64::NEG_INFINITY, f64::max);
            let m = merge_shared_proposals(&group, &pred);
            assert_eq!((m.x, m.y), (x0, y0));
            assert!((m.right() - x1).abs() < 1e-12 && (m.bottom() - y1).abs() < 1e-12);
        }
    }

    fn occluding(id: u64, vx: f64, size: (f64, f64)) -> Track {
        Track {
            pre_occlusion_size: Some(size),
            ..locked(id, BoxF::new(0.0, 0.0, size.0, size.1), vx, 0)
        }
    }

    #[test]
    fn occlusion_shrinking_region_takes_proposal() {
        let a = occluding(1, 50.0, (10.0, 10.0));
        let b = occluding(2, -50.0, (12.0, 10.0));
        let shared = BoxF::new(3.0, 4.0, 20.0, 10.0);
        let ctx = OcclusionContext { cd: false, wi: false, hvo: false };
        assert_eq!(resolve_occlusion(&a, &b, &shared, &ctx).unwrap(), (shared, shared));
    }

    #[test]
    fn occlusion_growing_region_opposite_directions() {
        let a = occluding(1, 50.0, (10.0, 10.0));
        let b = occluding(2, -50.0, (10.0, 10.0));
        let shared = BoxF::new(0.0, 0.0, 30.0, 10.0);
        let ctx = OcclusionContext { cd: false, wi: true, hvo: false };
        let (ba, bb) = resolve_occlusion(&a, &b, &shared, &ctx).unwrap();
        assert_eq!(ba, BoxF::new(20.0, 0.0, 10.0, 10.0));
        // The left-moving partner leads at the left end.
        assert_eq!(bb, BoxF::new(0.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn occlusion_growing_region_common_direction() {
        let fast = occluding(1, 80.0, (10.0, 10.0));
        let slow = occluding(2, 20.0, (10.0, 10.0));
        let shared = BoxF::new(0.0, 0.0, 25.0, 10.0);
        let ctx = OcclusionContext::evaluate(&fast, &slow, &shared, Some(20.0));
        assert_eq!(ctx, OcclusionContext { cd: true, wi: true, hvo: true });
        let (bf, bs) = resolve_occlusion(&fast, &slow, &shared, &ctx).unwrap();
        assert_eq!(bf, BoxF::new(15.0, 0.0, 10.0, 10.0));
        assert_eq!(bs, BoxF::new(0.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn occlusion_context_flags() {
        let a = occluding(1, 30.0, (10.0, 10.0));
        let b = occluding(2, -40.0, (10.0, 10.0));
        let s = BoxF::new(0.0, 0.0, 20.0, 10.0);
        let ctx = OcclusionContext::evaluate(&a, &b, &s, None);
        assert!(!ctx.cd && !ctx.wi && !ctx.hvo);
        assert!(!OcclusionContext::evaluate(&a, &b, &s, Some(20.0)).wi);
        assert!(OcclusionContext::evaluate(&a, &b, &s, Some(19.0)).wi);
    }

    #[test]
    fn occlusion_requires_pre_size() {
        let a = locked(1, BoxF::new(0.0, 0.0, 1.0, 1.0), 0.0, 0);
        let b = occluding(2, 0.0, (1.0, 1.0));
        let ctx = OcclusionContext::default();
        assert!(matches!(
            resolve_occlusion(&a, &b, &BoxF::default(), &ctx),
            Err(Error::MissingPreOcclusionSize(1))
        ));
    }

    #[test]
    fn cleanup_frees_after_max_unlocks() {
        let cfg = EotConfig::default();
        let mut tracks = vec![locked(1, BoxF::new(50.0, 50.0, 10.0, 10.0), 0.0, 0)];
        for frame in 1..=cfg.max_unlocks {
            cleanup(&mut tracks, &[false], frame as u64, &geom(), &cfg);
            assert_eq!(tracks[0].state, TrackState::Locked);
            assert_eq!(tracks[0].unlock_count, frame);
        }
        cleanup(&mut tracks, &[false], 10, &geom(), &cfg);
        assert!(tracks[0].is_free());
        assert_eq!(tracks[0].unlock_count, 0);
        assert_eq!(tracks[0].pre_occlusion_size, None);
    }

    #[test]
    fn cleanup_keeps_matched_tracks() {
        let cfg = EotConfig::default();
        let mut tracks = vec![locked(1, BoxF::new(50.0, 50.0, 10.0, 10.0), 0.0, 0)];
        for t in 1..100 {
            cleanup(&mut tracks, &[true], t, &geom(), &cfg);
        }
        assert_eq!(tracks[0].state, TrackState::Locked);
    }

    #[test]
    fn cleanup_releases_track_leaving_scene() {
        let cfg = EotConfig::default();
        // Center at x = 235, moving right at 100 px/s: past 240 after 66 ms.
        let mut tracks = vec![locked(1, BoxF::new(230.0, 50.0, 10.0, 10.0), 100.0, 0)];
        cleanup(&mut tracks, &[false], 33_000, &geom(), &cfg);
        assert!(!tracks[0].is_free());
        cleanup(&mut tracks, &[false], 66_000, &geom(), &cfg);
        assert!(tracks[0].is_free());
    }

    #[test]
    fn interpolation_examples() {
        let h = vec![(0u64, BoxF::new(0.0, 0.0, 10.0, 10.0)), (100, BoxF::new(10.0, 0.0, 10.0, 10.0))];
        assert_eq!(interpolate(&h, 25).unwrap(), BoxF::new(2.5, 0.0, 10.0, 10.0));
        assert_eq!(interpolate(&h, 50).unwrap(), BoxF::new(5.0, 0.0, 10.0, 10.0));
        assert_eq!(interpolate(&h, 0).unwrap(), h[0].1);
        assert_eq!(interpolate(&h, 100).unwrap(), h[1].1);
        let near = interpolate(&h, 1).unwrap();
        assert!((near.x - 0.1).abs() < 1e-12);
        assert!(matches!(interpolate(&h, 101), Err(Error::OutOfRange { .. })));
        assert!(matches!(interpolate(&h[..0], 0), Err(Error::OutOfRange { .. })));
        let later = vec![(10u64, BoxF::default()), (20, BoxF::default())];
        assert!(matches!(interpolate(&later, 5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn step_empty_and_lock() {
        let mut tr = EotTracker::new(EotConfig::default(), geom()).unwrap();
        assert!(tr.step(&[], 66_000).unwrap().is_empty());
        assert_eq!(tr.active_count(), 0);

        let b = BoxF::new(40.0, 40.0, 20.0, 20.0);
        let s1 = tr.step(&[RegionProposal { bbox: b, t: 132_000 }], 132_000).unwrap();
        assert_eq!(s1.len(), 1);
        assert_eq!(s1[0].state, TrackState::Tracking);
        let s2 = tr.step(&[RegionProposal { bbox: b, t: 198_000 }], 198_000).unwrap();
        assert_eq!(s2.len(), 1);
        assert_eq!(s2[0].id, s1[0].id);
        assert_eq!(s2[0].state, TrackState::Locked);

        assert!(matches!(tr.step(&[], 198_000), Err(Error::NonPositiveDt { .. })));
    }

    #[test]
    fn step_merges_fragments_on_one_track() {
        let mut tr = EotTracker::new(EotConfig::default(), geom()).unwrap();
        tr.step(&[prop(40.0, 40.0, 30.0, 20.0, 66_000)], 66_000).unwrap();
        let out = tr
            .step(&[prop(40.0, 40.0, 8.0, 20.0, 132_000), prop(62.0, 40.0, 8.0, 20.0, 132_000)], 132_000)
            .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, BoxF::new(40.0, 40.0, 30.0, 20.0));
    }

    #[test]
    fn step_never_exceeds_pool() {
        let cfg = EotConfig { max_trackers: 3, ..Default::default() };
        let mut tr = EotTracker::new(cfg, geom()).unwrap();
        let props: Vec<_> = (0..6).map(|i| prop(5.0 + 35.0 * i as f64, 10.0, 20.0, 20.0, 66_000)).collect();
        let out = tr.step(&props, 66_000).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(tr.active_count(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(EotConfig::default().validate().is_ok());
        assert!(EotConfig { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(EotConfig { overlap_ratio_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(EotConfig { max_trackers: 0, ..Default::default() }.validate().is_err());
    }
}
