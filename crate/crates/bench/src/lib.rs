//! Shared inputs for the benchmarks.

use eotrack_core::synth::{self, standard_scene};
use eotrack_core::{EventStream, SceneSpec};

/// Eight static objects plus background noise, roughly 100k events per
/// second of `duration_s`.
pub fn dense_scene(duration_s: u64) -> SceneSpec {
    let mut spec = standard_scene("S5").expect("built-in scene");
    spec.duration_us = duration_s * 1_000_000;
    spec.noise_rate = 2_000.0;
    for o in &mut spec.objects {
        o.vx = 0.0;
        o.vy = 0.0;
        o.edge_event_rate = 12_250.0;
        o.disappear_t = spec.duration_us;
    }
    spec
}

pub fn stream(spec: &SceneSpec) -> EventStream {
    synth::generate(spec).expect("scene generates").0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_scene_rate() {
        let n = stream(&dense_scene(1)).len() as f64;
        assert!((90_000.0..110_000.0).contains(&n), "{n}");
    }
}
