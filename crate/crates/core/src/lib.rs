//! Multi-object tracking for event-camera streams.
//!
//! Two trackers share one box model ([`BoxF`]): the frame-based Events
//! Overlap Tracker ([`eot`](crate::eot)) working on histogram region proposals from
//! binary frames ([`framer`](crate::framer)), and its event-by-event continuous-time
//! variant ([`ceot`]). [`evaluation`] scores tracker output against ground
//! truth and [`synth`] generates reproducible scenes with exact ground truth.

pub mod ceot;
pub mod error;
pub mod evaluation;
pub mod event_io;
pub mod eot;
pub mod framer;
pub mod geometry;
pub mod pipeline;
pub mod synth;

pub use ceot::{CTracker, CeotConfig, CeotTracker};
pub use error::{Error, Result};
pub use event_io::{Event, EventFormat, EventStream, SensorGeometry};
pub use eot::{EotConfig, EotTracker, Track, TrackSnapshot, TrackState};
pub use framer::{BinaryFrame, FramerConfig, RegionProposal};
pub use evaluation::{EvalConfig, EvalReport, GroundTruthRecord};
pub use geometry::{iou, overlap_area, BoxF};
pub use pipeline::RunConfig;
pub use synth::{SceneObject, SceneSpec};
