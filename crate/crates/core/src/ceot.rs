//! Continuous-time EOT: every event updates one tracker from a fixed pool.
//!
//! Trackers are centers with half extents. An event goes to the first active
//! tracker whose rectangle contains it, else to the nearest inactive tracker,
//! else it is dropped. Activity is gated on `isi * dx * dy`. A periodic
//! cleanup injects a false event at every tracker center, merges overlapping
//! active trackers, and emits snapshots.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eot::{TrackSnapshot, TrackState};
use crate::error::{Error, Result};
use crate::event_io::{Event, EventStream, SensorGeometry};
use crate::geometry::BoxF;
use crate::synth::{self, SceneObject, SceneSpec};

/// ISI of a fresh tracker, large enough to keep it inactive.
pub const INITIAL_ISI_US: f64 = 1e9;
pub const MIN_HALF_SIZE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionAxis {
    XOnly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeAdapt {
    Ema,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeotConfig {
    pub pool_size: usize,
    pub alpha: f64,
    pub alpha_t: f64,
    /// µs·px²
    pub theta_active: f64,
    pub cleanup_period_us: u64,
    /// px/s, same-sign velocity difference gate
    pub v_alpha: f64,
    /// px/s, opposite-sign velocity difference gate
    pub v_beta: f64,
    /// px², bound on the covariance trace
    pub p_threshold: f64,
    pub occlusion_timestep_us: u64,
    pub init_half_size: f64,
    pub rng_seed: u64,
    pub occlusion_axis: OcclusionAxis,
    pub size_adapt: SizeAdapt,
    pub size_gain: f64,
    /// Velocity is measured between means of consecutive windows of this
    /// length, then smoothed with `velocity_alpha`.
    pub velocity_window_us: u64,
    pub velocity_alpha: f64,
    /// Velocity samples needed after activation before a tracker takes part
    /// in occlusion handling.
    pub min_velocity_samples: u32,
    /// Active trackers capture events within their rectangle scaled by this
    /// factor; ISI, merging and output use the unscaled rectangle.
    pub gate_scale: f64,
}

impl Default for CeotConfig {
    fn default() -> Self {
        Self {
            pool_size: 8,
            alpha: 0.95,
            alpha_t: 0.9,
            theta_active: 1e6,
            cleanup_period_us: 25_000,
            v_alpha: 20.0,
            v_beta: 10.0,
            p_threshold: 400.0,
            occlusion_timestep_us: 25_000,
            init_half_size: 15.0,
            rng_seed: 7,
            occlusion_axis: OcclusionAxis::Both,
            size_adapt: SizeAdapt::Ema,
            size_gain: 1.8,
            velocity_window_us: 25_000,
            velocity_alpha: 0.8,
            min_velocity_samples: 3,
            gate_scale: 1.5,
        }
    }
}

impl CeotConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        unit("alpha", self.alpha)?;
        unit("alpha_t", self.alpha_t)?;
        unit("velocity_alpha", self.velocity_alpha)?;
        if self.pool_size == 0 {
            return Err(Error::InvalidConfig("pool_size must be at least 1".into()));
        }
        if self.cleanup_period_us == 0 || self.velocity_window_us == 0 {
            return Err(Error::InvalidConfig("periods must be positive".into()));
        }
        for (name, v) in [
            ("theta_active", self.theta_active),
            ("init_half_size", self.init_half_size),
            ("size_gain", self.size_gain),
            ("p_threshold", self.p_threshold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gate_scale.is_finite() && self.gate_scale >= 1.0) {
            return Err(Error::InvalidConfig(format!("gate_scale must be >= 1, got {}", self.gate_scale)));
        }
        if !(self.v_alpha >= 0.0 && self.v_beta >= 0.0) {
            return Err(Error::InvalidConfig("velocity gates must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CTracker {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub active: bool,
    pub isi: f64,
    pub t_last: u64,
}

impl CTracker {
    pub fn new(x: f64, y: f64, half_size: f64) -> Self {
        Self {
            x,
            y,
            dx: half_size,
            dy: half_size,
            active: false,
            isi: INITIAL_ISI_US,
            t_last: 0,
        }
    }

    /// Inclusive rectangle test.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.contains_scaled(px, py, 1.0)
    }

    pub fn contains_scaled(&self, px: f64, py: f64, scale: f64) -> bool {
        (px - self.x).abs() <= scale * self.dx && (py - self.y).abs() <= scale * self.dy
    }

    pub fn bbox(&self) -> BoxF {
        BoxF::from_center(self.x, self.y, self.dx, self.dy)
    }

    pub fn activity(&self) -> f64 {
        self.isi * self.dx * self.dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct VelocityWindow {
    start: u64,
    n: u32,
    sum_x: f64,
    sum_y: f64,
    sum_t: f64,
    prev: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CTrackerMotion {
    /// px/s
    pub vx: f64,
    pub vy: f64,
    /// Residual covariance `[[xx, xy], [xy, yy]]`, px².
    pub cov: [[f64; 2]; 2],
    /// Pool index of the occlusion partner.
    pub occluding_with: Option<usize>,
    pub frozen_velocity: Option<(f64, f64)>,
    pub frozen_size: Option<(f64, f64)>,
    /// Center and time at occlusion onset, for dead reckoning.
    onset: Option<(f64, f64, u64)>,
    velocity_samples: u32,
    window: VelocityWindow,
}

impl CTrackerMotion {
    pub fn with_velocity(vx: f64, vy: f64) -> Self {
        Self {
            vx,
            vy,
            velocity_samples: u32::MAX,
            ..Self::default()
        }
    }

    pub fn trace(&self) -> f64 {
        self.cov[0][0] + self.cov[1][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentOutcome {
    /// Update target; every containing active tracker is in the match buffer.
    MatchedActive(usize),
    NearestInactive(usize),
    Dropped,
}

/// Routes an event at `(px, py)`. `matches` receives the indices of all
/// active trackers whose gate (rectangle scaled by `gate_scale`) contains
/// the point, in pool order.
pub fn assign_event(
    pool: &[CTracker],
    px: f64,
    py: f64,
    gate_scale: f64,
    matches: &mut Vec<usize>,
) -> AssignmentOutcome {
    matches.clear();
    let mut nearest: Option<(usize, f64)> = None;
    for (i, tr) in pool.iter().enumerate() {
        if tr.active {
            if tr.contains_scaled(px, py, gate_scale) {
                matches.push(i);
            }
        } else {
            let d = (tr.x - px).powi(2) + (tr.y - py).powi(2);
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((i, d));
            }
        }
    }
    match (matches.first(), nearest) {
        (Some(&i), _) => AssignmentOutcome::MatchedActive(i),
        (None, Some((i, _))) => AssignmentOutcome::NearestInactive(i),
        (None, None) => AssignmentOutcome::Dropped,
    }
}

/// How an update was triggered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Real,
    /// Cleanup event at the tracker's own center. It feeds the time since
    /// the last real event into the ISI and changes nothing else, so the ISI
    /// of a starved tracker grows without bound.
    False,
}

/// Applies one event to a tracker outside occlusion.
pub fn update_ctracker(
    tr: &mut CTracker,
    motion: &mut CTrackerMotion,
    (px, py): (f64, f64),
    t: u64,
    kind: EventKind,
    cfg: &CeotConfig,
    geometry: SensorGeometry,
) -> Result<()> {
    if t < tr.t_last {
        return Err(Error::NonPositiveDt { t, t_last: tr.t_last });
    }
    let inside = tr.contains(px, py);
    let (rx, ry) = (px - tr.x, py - tr.y);
    let a = cfg.alpha;
    tr.x = a * tr.x + (1.0 - a) * px;
    tr.y = a * tr.y + (1.0 - a) * py;
    if inside {
        tr.isi = cfg.alpha_t * tr.isi + (1.0 - cfg.alpha_t) * (t - tr.t_last) as f64;
    }

    if kind == EventKind::Real {
        tr.t_last = t;
        if cfg.size_adapt == SizeAdapt::Ema {
            let max_dx = (geometry.width as f64 / 2.0).max(MIN_HALF_SIZE);
            let max_dy = (geometry.height as f64 / 2.0).max(MIN_HALF_SIZE);
            tr.dx = (a * tr.dx + (1.0 - a) * cfg.size_gain * rx.abs()).clamp(MIN_HALF_SIZE, max_dx);
            tr.dy = (a * tr.dy + (1.0 - a) * cfg.size_gain * ry.abs()).clamp(MIN_HALF_SIZE, max_dy);
        }
        let c = &mut motion.cov;
        c[0][0] = a * c[0][0] + (1.0 - a) * rx * rx;
        c[1][1] = a * c[1][1] + (1.0 - a) * ry * ry;
        c[0][1] = a * c[0][1] + (1.0 - a) * rx * ry;
        c[1][0] = c[0][1];
        update_velocity(tr, motion, t, cfg);
    }
    tr.active = tr.activity() < cfg.theta_active;
    Ok(())
}

fn update_velocity(tr: &CTracker, motion: &mut CTrackerMotion, t: u64, cfg: &CeotConfig) {
    let w = &mut motion.window;
    if w.n > 0 && t - w.start >= cfg.velocity_window_us {
        let n = w.n as f64;
        let mean = (w.sum_x / n, w.sum_y / n, w.sum_t / n);
        if let Some((px, py, pt)) = w.prev {
            let dt = (mean.2 - pt) / 1e6;
            if dt > 0.0 {
                let (ivx, ivy) = ((mean.0 - px) / dt, (mean.1 - py) / dt);
                if motion.velocity_samples > 0 {
                    let b = cfg.velocity_alpha;
                    motion.vx = b * motion.vx + (1.0 - b) * ivx;
                    motion.vy = b * motion.vy + (1.0 - b) * ivy;
                } else {
                    (motion.vx, motion.vy) = (ivx, ivy);
                }
                motion.velocity_samples = motion.velocity_samples.saturating_add(1);
            }
        }
        *w = VelocityWindow {
            prev: Some(mean),
            ..VelocityWindow::default()
        };
    }
    if w.n == 0 {
        w.start = t;
    }
    w.n += 1;
    w.sum_x += tr.x;
    w.sum_y += tr.y;
    w.sum_t += t as f64;
}

/// The velocity/covariance gate: occlusion is only considered when the
/// trackers are both confident and moving differently.
pub fn occlusion_gate(d_alpha: bool, d_beta: bool, p_d: bool) -> bool {
    p_d && (d_alpha || d_beta)
}

fn velocity_difference_gates(va: f64, vb: f64, cfg: &CeotConfig) -> (bool, bool) {
    let diff = (va - vb).abs();
    if va.signum() == vb.signum() {
        (diff > cfg.v_alpha, false)
    } else {
        (false, diff > cfg.v_beta)
    }
}

/// True when the capture gates, each advanced by `n` occlusion timesteps of
/// its velocity, overlap for `n` in `{1, 2}`.
pub fn projected_overlap(a: (&CTracker, &CTrackerMotion), b: (&CTracker, &CTrackerMotion), cfg: &CeotConfig) -> bool {
    let step = cfg.occlusion_timestep_us as f64 / 1e6;
    let g = cfg.gate_scale;
    (1..=2).any(|n| {
        let s = step * n as f64;
        let (ax, ay) = (a.0.x + a.1.vx * s, a.0.y + a.1.vy * s);
        let (bx, by) = (b.0.x + b.1.vx * s, b.0.y + b.1.vy * s);
        (ax - bx).abs() <= g * (a.0.dx + b.0.dx) && (ay - by).abs() <= g * (a.0.dy + b.0.dy)
    })
}

/// `(D_alpha, D_beta, P_d)` for a pair: velocity-difference gates for same
/// and opposite directions, and the covariance-trace bound on both.
pub fn occlusion_gates(a: &CTrackerMotion, b: &CTrackerMotion, cfg: &CeotConfig) -> (bool, bool, bool) {
    let (mut d_alpha, mut d_beta) = velocity_difference_gates(a.vx, b.vx, cfg);
    if cfg.occlusion_axis == OcclusionAxis::Both {
        let (ya, yb) = velocity_difference_gates(a.vy, b.vy, cfg);
        d_alpha |= ya;
        d_beta |= yb;
    }
    let p_d = a.trace() < cfg.p_threshold && b.trace() < cfg.p_threshold;
    (d_alpha, d_beta, p_d)
}

/// Distinct, confidently estimated motions.
pub fn moving_apart_or_together(a: &CTrackerMotion, b: &CTrackerMotion, cfg: &CeotConfig) -> bool {
    let (d_alpha, d_beta, p_d) = occlusion_gates(a, b, cfg);
    occlusion_gate(d_alpha, d_beta, p_d)
}

pub fn detect_occlusion(a: (&CTracker, &CTrackerMotion), b: (&CTracker, &CTrackerMotion), cfg: &CeotConfig) -> bool {
    moving_apart_or_together(a.1, b.1, cfg) && projected_overlap(a, b, cfg)
}

/// Proximity test for merging: centers closer than the summed half extents on
/// both axes, inclusive.
pub fn should_merge(a: &CTracker, b: &CTracker) -> bool {
    (a.x - b.x).abs() <= a.dx + b.dx && (a.y - b.y).abs() <= a.dy + b.dy
}

/// Merged center and size of two trackers; the larger one keeps its size
/// when the smaller one's center lies inside it, otherwise sizes add.
pub fn merged(a: &CTracker, b: &CTracker, geometry: SensorGeometry) -> (f64, f64, f64, f64) {
    let (big, small) = if b.dx * b.dy > a.dx * a.dy { (b, a) } else { (a, b) };
    let (x, y) = ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
    if big.contains(small.x, small.y) {
        (x, y, big.dx, big.dy)
    } else {
        let max_dx = (geometry.width as f64 / 2.0).max(MIN_HALF_SIZE);
        let max_dy = (geometry.height as f64 / 2.0).max(MIN_HALF_SIZE);
        (x, y, (a.dx + b.dx).min(max_dx), (a.dy + b.dy).min(max_dy))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    pub t: u64,
    pub survivor: usize,
    pub absorbed: usize,
    /// Both trackers as they were just before merging.
    pub before: (CTracker, CTracker),
}

#[derive(Debug, Clone)]
pub struct CeotTracker {
    cfg: CeotConfig,
    geometry: SensorGeometry,
    pool: Vec<CTracker>,
    motion: Vec<CTrackerMotion>,
    ids: Vec<Option<u64>>,
    next_id: u64,
    next_tick: u64,
    rng: ChaCha8Rng,
    matches: Vec<usize>,
    merges: Vec<MergeRecord>,
    snapshots: Vec<TrackSnapshot>,
    dropped: u64,
}

impl CeotTracker {
    /// Pool of inactive trackers at seeded random positions.
    pub fn new(cfg: CeotConfig, geometry: SensorGeometry) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let pool = (0..cfg.pool_size)
            .map(|_| random_tracker(&mut rng, geometry, cfg.init_half_size))
            .collect();
        Self::build(cfg, geometry, pool, rng)
    }

    /// Tracker with an explicit initial pool; `cfg.pool_size` is ignored.
    pub fn with_pool(cfg: CeotConfig, geometry: SensorGeometry, pool: Vec<CTracker>) -> Result<Self> {
        cfg.validate()?;
        if pool.is_empty() {
            return Err(Error::InvalidConfig("pool must not be empty".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Self::build(cfg, geometry, pool, rng)
    }

    fn build(mut cfg: CeotConfig, geometry: SensorGeometry, pool: Vec<CTracker>, rng: ChaCha8Rng) -> Result<Self> {
        cfg.pool_size = pool.len();
        let n = pool.len();
        let mut tracker = Self {
            next_tick: cfg.cleanup_period_us,
            cfg,
            geometry,
            ids: vec![None; n],
            motion: vec![CTrackerMotion::default(); n],
            pool,
            next_id: 1,
            rng,
            matches: Vec::with_capacity(n),
            merges: Vec::new(),
            snapshots: Vec::new(),
            dropped: 0,
        };
        for i in 0..n {
            tracker.refresh_id(i);
        }
        Ok(tracker)
    }

    pub fn config(&self) -> &CeotConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &[CTracker] {
        &self.pool
    }

    pub fn motions(&self) -> &[CTrackerMotion] {
        &self.motion
    }

    pub fn motion_mut(&mut self, i: usize) -> &mut CTrackerMotion {
        &mut self.motion[i]
    }

    /// Current track id of pool slot `i`, if active.
    pub fn id_of(&self, i: usize) -> Option<u64> {
        self.ids[i]
    }

    pub fn merges(&self) -> &[MergeRecord] {
        &self.merges
    }

    pub fn snapshots(&self) -> &[TrackSnapshot] {
        &self.snapshots
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn take_snapshots(&mut self) -> Vec<TrackSnapshot> {
        std::mem::take(&mut self.snapshots)
    }

    /// Assigns an id on activation and drops it on deactivation. Motion
    /// gathered while the tracker was being pulled in is discarded.
    fn refresh_id(&mut self, i: usize) {
        match (self.pool[i].active, self.ids[i]) {
            (true, None) => {
                self.ids[i] = Some(self.next_id);
                self.next_id += 1;
                let m = &mut self.motion[i];
                if m.occluding_with.is_none() {
                    (m.vx, m.vy) = (0.0, 0.0);
                    m.velocity_samples = 0;
                    m.window = VelocityWindow::default();
                }
            }
            (false, Some(_)) => self.ids[i] = None,
            _ => {}
        }
    }

    /// Runs every cleanup tick up to and including `t`.
    pub fn advance_to(&mut self, t: u64) {
        while self.next_tick <= t {
            let tick = self.next_tick;
            self.cleanup(tick);
            self.next_tick += self.cfg.cleanup_period_us;
        }
    }

    pub fn process_event(&mut self, e: &Event) -> Result<()> {
        self.advance_to(e.t);
        let (px, py) = e.center();
        let outcome = assign_event(&self.pool, px, py, self.cfg.gate_scale, &mut self.matches);
        match outcome {
            AssignmentOutcome::Dropped => {
                self.dropped += 1;
                Ok(())
            }
            AssignmentOutcome::NearestInactive(i) => self.apply(i, (px, py), e.t, EventKind::Real),
            AssignmentOutcome::MatchedActive(i) => {
                if self.matches.len() > 1 && self.occlusion_ready(i) {
                    for k in 1..self.matches.len() {
                        let j = self.matches[k];
                        if self.occlusion_ready(j) && detect_occlusion(self.pair(i), self.pair(j), &self.cfg)
                        {
                            self.start_occlusion(i, j, e.t);
                            break;
                        }
                    }
                }
                self.apply(i, (px, py), e.t, EventKind::Real)
            }
        }
    }

    /// Occlusion needs a settled velocity on a tracker not already occluding.
    fn occlusion_ready(&self, i: usize) -> bool {
        let m = &self.motion[i];
        m.velocity_samples >= self.cfg.min_velocity_samples && m.occluding_with.is_none()
    }

    fn pair(&self, i: usize) -> (&CTracker, &CTrackerMotion) {
        (&self.pool[i], &self.motion[i])
    }

    /// Updates tracker `i`, or both partners when it is occluding.
    fn apply(&mut self, i: usize, p: (f64, f64), t: u64, kind: EventKind) -> Result<()> {
        match self.motion[i].occluding_with {
            None => {
                update_ctracker(&mut self.pool[i], &mut self.motion[i], p, t, kind, &self.cfg, self.geometry)?;
                self.refresh_id(i);
            }
            Some(j) => {
                self.occluded_update(i, p, t, kind)?;
                self.occluded_update(j, p, t, kind)?;
            }
        }
        Ok(())
    }

    /// During occlusion the center is dead-reckoned with the frozen velocity
    /// and the event only refreshes timing.
    fn occluded_update(&mut self, i: usize, (px, py): (f64, f64), t: u64, kind: EventKind) -> Result<()> {
        let tr = &mut self.pool[i];
        let m = &self.motion[i];
        if t < tr.t_last {
            return Err(Error::NonPositiveDt { t, t_last: tr.t_last });
        }
        let (x0, y0, t0) = m.onset.expect("occluding tracker has an onset");
        let (vx, vy) = m.frozen_velocity.expect("occluding tracker has a frozen velocity");
        let dt = t.saturating_sub(t0) as f64 / 1e6;
        tr.x = x0 + vx * dt;
        tr.y = y0 + vy * dt;
        if kind == EventKind::False || tr.contains(px, py) {
            tr.isi = self.cfg.alpha_t * tr.isi + (1.0 - self.cfg.alpha_t) * (t - tr.t_last) as f64;
        }
        if kind == EventKind::Real {
            tr.t_last = t;
        }
        tr.active = tr.activity() < self.cfg.theta_active;
        self.refresh_id(i);
        Ok(())
    }

    fn start_occlusion(&mut self, i: usize, j: usize, t: u64) {
        debug!("t={t}: occlusion between trackers {i} and {j}");
        for (k, partner) in [(i, j), (j, i)] {
            let tr = self.pool[k];
            let m = &mut self.motion[k];
            m.occluding_with = Some(partner);
            m.frozen_velocity = Some((m.vx, m.vy));
            m.frozen_size = Some((tr.dx, tr.dy));
            m.onset = Some((tr.x, tr.y, t.max(tr.t_last)));
        }
    }

    fn end_occlusion(&mut self, i: usize) {
        let m = &mut self.motion[i];
        m.occluding_with = None;
        m.frozen_velocity = None;
        m.frozen_size = None;
        m.onset = None;
        m.window = VelocityWindow::default();
    }

    fn reinitialize(&mut self, i: usize) {
        self.pool[i] = random_tracker(&mut self.rng, self.geometry, self.cfg.init_half_size);
        self.motion[i] = CTrackerMotion::default();
        self.ids[i] = None;
    }

    /// Cleanup tick: false events, occlusion exits, merges, snapshots.
    pub fn cleanup(&mut self, t: u64) {
        for i in 0..self.pool.len() {
            let center = (self.pool[i].x, self.pool[i].y);
            if self.motion[i].occluding_with.is_some() {
                // Timing only; the partner gets its own false event.
                self.occluded_update(i, center, t, EventKind::False).expect("cleanup ticks are monotone");
            } else {
                update_ctracker(&mut self.pool[i], &mut self.motion[i], center, t, EventKind::False, &self.cfg, self.geometry)
                    .expect("cleanup ticks are monotone");
                self.refresh_id(i);
            }
        }

        for i in 0..self.pool.len() {
            if let Some(j) = self.motion[i].occluding_with {
                if j > i {
                    let both_active = self.pool[i].active && self.pool[j].active;
                    if !both_active || !projected_overlap(self.pair(i), self.pair(j), &self.cfg) {
                        self.end_occlusion(i);
                        self.end_occlusion(j);
                    }
                }
            }
        }

        'restart: loop {
            let n = self.pool.len();
            for i in 0..n {
                for j in i + 1..n {
                    let (a, b) = (&self.pool[i], &self.pool[j]);
                    if !(a.active && b.active)
                        || self.motion[i].occluding_with.is_some()
                        || self.motion[j].occluding_with.is_some()
                        || !should_merge(a, b)
                    {
                        continue;
                    }
                    // Trackers with clearly different motion are separate
                    // objects: either about to occlude or moving apart.
                    if self.occlusion_ready(i)
                        && self.occlusion_ready(j)
                        && moving_apart_or_together(&self.motion[i], &self.motion[j], &self.cfg)
                    {
                        if projected_overlap(self.pair(i), self.pair(j), &self.cfg) {
                            self.start_occlusion(i, j, t);
                        }
                        continue;
                    }
                    // The older track keeps its identity.
                    let (survivor, absorbed) = if self.ids[j] < self.ids[i] { (j, i) } else { (i, j) };
                    let (x, y, dx, dy) = merged(a, b, self.geometry);
                    debug!("t={t}: tracker {absorbed} merged into {survivor}");
                    self.merges.push(MergeRecord {
                        t,
                        survivor,
                        absorbed,
                        before: (*a, *b),
                    });
                    let s = &mut self.pool[survivor];
                    (s.x, s.y, s.dx, s.dy) = (x, y, dx, dy);
                    s.active = s.activity() < self.cfg.theta_active;
                    self.refresh_id(survivor);
                    self.reinitialize(absorbed);
                    continue 'restart;
                }
            }
            break;
        }

        let mut emitted: Vec<TrackSnapshot> = (0..self.pool.len())
            .filter_map(|i| {
                let tr = &self.pool[i];
                let id = self.ids[i]?;
                Some(TrackSnapshot {
                    id,
                    t,
                    bbox: tr.bbox(),
                    state: TrackState::Locked,
                    vx: self.motion[i].vx,
                    vy: self.motion[i].vy,
                })
            })
            .collect();
        emitted.sort_by_key(|s| s.id);
        debug!("tick t={t}: {} active trackers, {} events dropped so far", emitted.len(), self.dropped);
        self.snapshots.extend(emitted);
    }
}

fn random_tracker(rng: &mut ChaCha8Rng, geometry: SensorGeometry, half_size: f64) -> CTracker {
    let x = rng.random::<f64>() * geometry.width as f64;
    let y = rng.random::<f64>() * geometry.height as f64;
    CTracker::new(x, y, half_size)
}

/// Runs the tracker over a whole stream; snapshots are emitted at every
/// cleanup tick up to the last event.
pub fn process(stream: &EventStream, cfg: &CeotConfig) -> Result<Vec<TrackSnapshot>> {
    let mut tracker = CeotTracker::new(cfg.clone(), stream.geometry())?;
    for e in stream.events() {
        tracker.process_event(e)?;
    }
    Ok(tracker.take_snapshots())
}

/// Bounds found when calibrating the activity threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCalibration {
    /// Smallest threshold at which the reference object activates a tracker.
    pub low: f64,
    /// Largest threshold at which pure noise activates nothing.
    pub high: f64,
    /// Geometric mean of the bounds.
    pub theta: f64,
}

/// Calibration scenes: a static 30x30 object at 1000 ev/s, and uniform
/// noise at 100 ev/s, each for two seconds on a 240x180 sensor.
pub fn calibration_scenes(seed: u64) -> (SceneSpec, SceneSpec) {
    let geometry = SensorGeometry { width: 240, height: 180 };
    let object = SceneSpec {
        geometry,
        duration_us: 2_000_000,
        objects: vec![SceneObject::new(BoxF::new(105.0, 75.0, 30.0, 30.0), 0.0, 0.0, 1000.0, 0, 2_000_000)],
        noise_rate: 0.0,
        rng_seed: seed,
    };
    let noise = SceneSpec {
        objects: Vec::new(),
        noise_rate: 100.0,
        ..object.clone()
    };
    (object, noise)
}

fn ever_active(stream: &EventStream, cfg: &CeotConfig) -> Result<bool> {
    Ok(!process(stream, cfg)?.is_empty())
}

/// Log-space bisection for the activity threshold window.
pub fn calibrate_theta_active(base: &CeotConfig) -> Result<ThetaCalibration> {
    let (object, noise) = calibration_scenes(base.rng_seed);
    let (object, _) = synth::generate(&object)?;
    let (noise, _) = synth::generate(&noise)?;
    let with = |theta: f64| CeotConfig {
        theta_active: theta,
        ..base.clone()
    };
    let bisect = |stream: &EventStream, want_active_above: bool| -> Result<f64> {
        let (mut lo, mut hi) = (1e1f64.ln(), 1e12f64.ln());
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if ever_active(stream, &with(mid.exp()))? == want_active_above {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(if want_active_above { hi.exp() } else { lo.exp() })
    };
    let low = bisect(&object, true)?;
    // Noise activates above some threshold; the largest safe value is the
    // lower end of that bisection.
    let high = bisect(&noise, true).map(|v| v / (1.0 + 1e-9))?;
    if low >= high {
        return Err(Error::InvalidConfig(format!(
            "no activity threshold separates object ({low:.3e}) from noise ({high:.3e})"
        )));
    }
    Ok(ThetaCalibration {
        low,
        high,
        theta: (low * high).sqrt(),
    })
}
