//! End-to-end runs over a whole stream and the combined run configuration.

use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::ceot::{self, CeotConfig};
use crate::eot::{self, EotConfig, EotTracker, TrackSnapshot};
use crate::error::Result;
use crate::evaluation::EvalConfig;
use crate::event_io::EventStream;
use crate::framer::{self, FramerConfig};
use crate::geometry::BoxF;

/// Every tunable of a run in one JSON document. Missing sections take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub framer: FramerConfig,
    pub eot: EotConfig,
    pub ceot: CeotConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.framer.validate()?;
        self.eot.validate()?;
        self.ceot.validate()?;
        self.eval.validate()
    }
}

/// Frames the stream and runs EOT on every window, stamping each frame's
/// snapshots with the window end.
pub fn track_eot(stream: &EventStream, framer_cfg: &FramerConfig, eot_cfg: &EotConfig) -> Result<Vec<TrackSnapshot>> {
    framer_cfg.validate()?;
    let geometry = stream.geometry();
    let mut tracker = EotTracker::new(*eot_cfg, geometry)?;
    let mut out = Vec::new();
    for (t_start, t_end, events) in framer::frame_windows(stream, framer_cfg.frame_period_us) {
        let proposals = framer::propose(events, t_start, t_end, geometry, framer_cfg);
        let snaps = tracker.step(&proposals, t_end)?;
        debug!(
            "frame [{t_start}, {t_end}): {} events, {} proposals, {} tracks",
            events.len(),
            proposals.len(),
            snaps.len()
        );
        out.extend(snaps);
    }
    Ok(out)
}

/// Runs C-EOT event by event.
pub fn track_ceot(stream: &EventStream, cfg: &CeotConfig) -> Result<Vec<TrackSnapshot>> {
    ceot::process(stream, cfg)
}

/// Box of every track whose snapshot span contains `t`, ordered by id.
/// Snapshots of one id must be in time order.
pub fn interpolate_tracks(tracks: &[TrackSnapshot], t: u64) -> Result<Vec<(u64, u64, BoxF)>> {
    let mut by_id: BTreeMap<u64, Vec<&TrackSnapshot>> = BTreeMap::new();
    for s in tracks {
        by_id.entry(s.id).or_default().push(s);
    }
    let mut out = Vec::new();
    for (id, history) in by_id {
        let (first, last) = (history[0].t, history[history.len() - 1].t);
        if (first..=last).contains(&t) {
            out.push((id, t, eot::interpolate(&history, t)?));
        }
    }
    Ok(out)
}
