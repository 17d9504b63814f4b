//! Paired agents moving under scripted kinematics. Each pair lives in its
//! own region, so spatial edges only ever join partners. A primitive event
//! is a fixed number of frames of one motion pattern; a composite is two
//! primitives of the same pair in a given order, both inside a horizon.
//! Scripts plant both orders of a composite's constituents, so the reversed
//! pair (a decoy, or a category of its own) can only be told apart by
//! seeing which primitive came first.
//!
//! Node features per frame are `[vx, vy, ux, uy, r, |r|, |v|]`: the
//! displacement taken into the frame, the unit vector toward the partner
//! before moving, the speed toward the partner `r = v·u`, its magnitude,
//! and the speed. The scalars are rotation invariant and keep their meaning
//! when partners are averaged together.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSequence};
use crate::config::config_hash;
use crate::error::{Error, Result};
use crate::graph::{SnapshotEdge, SnapshotGraph, SnapshotNode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    Converge,
    Disperse,
    Pass,
    Chase,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [
        Primitive::Converge,
        Primitive::Disperse,
        Primitive::Pass,
        Primitive::Chase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Converge => "converge",
            Primitive::Disperse => "disperse",
            Primitive::Pass => "pass",
            Primitive::Chase => "chase",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown primitive {s:?}")))
    }
}

/// `first` followed later by `second`, on the same pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composite {
    pub first: Primitive,
    pub second: Primitive,
}

impl Composite {
    pub fn name(&self) -> String {
        format!("{}_then_{}", self.first, self.second)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub sequences: usize,
    /// Must be even; agents are paired in order.
    pub agents: usize,
    /// Frames per labelled window. Every composite fits inside one.
    pub window: usize,
    /// Extra frames after the first window, for future-offset labels.
    pub future_frames: usize,
    /// Distance between neighbouring pair regions.
    pub arena_spacing: f64,
    pub proximity: f64,
    pub frame_rate: f64,
    pub event_frames: usize,
    pub speed: f64,
    /// Uniform noise added to every displacement component.
    pub jitter: f64,
    /// Partner distance at the start, drawn uniformly.
    pub separation: [f64; 2],
    /// Frames between the two primitives of a two-step script.
    pub gap: [usize; 2],
    /// Minimum still frames between scripts of one pair; larger than the
    /// maximum gap so separate scripts never form a composite.
    pub idle_min: usize,
    /// Weights of a still / one-primitive / two-primitive script.
    pub script_weights: [f64; 3],
    pub composites: Vec<Composite>,
    /// Allowed positive rate of every category over first windows.
    pub prevalence: [f64; 2],
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            sequences: 600,
            agents: 4,
            window: 16,
            future_frames: 8,
            arena_spacing: 150.0,
            proximity: 30.0,
            frame_rate: 1.0,
            event_frames: 3,
            speed: 0.8,
            jitter: 0.15,
            separation: [12.0, 14.0],
            gap: [4, 6],
            idle_min: 7,
            script_weights: [0.15, 0.35, 0.5],
            composites: [
                (Primitive::Converge, Primitive::Disperse),
                (Primitive::Disperse, Primitive::Converge),
                (Primitive::Pass, Primitive::Chase),
                (Primitive::Chase, Primitive::Pass),
            ]
            .into_iter()
            .map(|(first, second)| Composite { first, second })
            .collect(),
            prevalence: [0.02, 0.98],
            max_attempts: 20,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Longest span a composite may cover.
    pub fn horizon(&self) -> usize {
        2 * self.event_frames + self.gap[1]
    }

    pub fn frames(&self) -> usize {
        self.window + self.future_frames
    }

    pub fn categories(&self) -> Vec<String> {
        Primitive::ALL
            .iter()
            .map(|p| p.name().to_string())
            .chain(self.composites.iter().map(Composite::name))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("simulator: {m}")));
        if self.agents < 2 || self.agents % 2 != 0 {
            return fail("agent count must be even and at least 2");
        }
        if self.event_frames == 0 || self.window == 0 {
            return fail("event length and window must be positive");
        }
        if self.gap[0] > self.gap[1] {
            return fail("gap range is reversed");
        }
        if self.horizon() > self.window {
            return fail("composite horizon exceeds the window");
        }
        if self.idle_min <= self.gap[1] {
            return fail("idle_min must exceed the largest gap");
        }
        if !(self.separation[0] > 0.0 && self.separation[0] <= self.separation[1]) {
            return fail("separation range is invalid");
        }
        if self.script_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.script_weights.iter().sum::<f64>() <= 0.0
        {
            return fail("script weights must be non-negative with a positive sum");
        }
        if !(self.frame_rate > 0.0 && self.proximity > 0.0 && self.speed > 0.0 && self.jitter >= 0.0) {
            return fail("frame rate, proximity and speed must be positive");
        }
        if self.arena_spacing <= 2.0 * self.proximity {
            return fail("pair regions overlap within the proximity threshold");
        }
        if self.composites.iter().any(|c| c.first == c.second) {
            return fail("composites need two different primitives");
        }
        if !(0.0..=1.0).contains(&self.prevalence[0]) || self.prevalence[0] > self.prevalence[1] {
            return fail("prevalence bounds are invalid");
        }
        if self.max_attempts == 0 {
            return fail("max_attempts must be positive");
        }
        Ok(())
    }
}

/// A planted primitive on pair `pair`, frames `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveEvent {
    pub pair: usize,
    pub kind: Primitive,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub config: SimConfig,
    pub config_hash: String,
    pub categories: Vec<String>,
    pub sequences: usize,
    pub frames: usize,
    pub window: usize,
    /// Positive rate of each category over first windows.
    pub prevalence: Vec<f64>,
    pub attempts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub dataset: Dataset,
    /// Planted primitives per sequence.
    pub events: Vec<Vec<PrimitiveEvent>>,
    pub manifest: SimManifest,
}

pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let categories = config.categories();
    for attempt in 0..config.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(attempt as u64);
        let mut sequences = Vec::with_capacity(config.sequences);
        let mut events = Vec::with_capacity(config.sequences);
        for _ in 0..config.sequences {
            let (seq, ev) = simulate_sequence(config, &mut rng);
            sequences.push(seq);
            events.push(ev);
        }
        let prevalence = first_window_prevalence(&sequences, config.window, categories.len());
        let ok = config.sequences == 0
            || prevalence
                .iter()
                .all(|&p| p >= config.prevalence[0] && p <= config.prevalence[1]);
        if ok {
            let manifest = SimManifest {
                config: config.clone(),
                config_hash: config_hash(config)?,
                categories: categories.clone(),
                sequences: config.sequences,
                frames: config.frames(),
                window: config.window,
                prevalence,
                attempts: attempt + 1,
            };
            return Ok(SimOutput {
                dataset: Dataset {
                    categories,
                    sequences,
                },
                events,
                manifest,
            });
        }
    }
    Err(Error::Config(format!(
        "simulator: label prevalence stayed outside {:?} after {} attempts",
        config.prevalence, config.max_attempts
    )))
}

fn first_window_prevalence(sequences: &[LabeledSequence], window: usize, c: usize) -> Vec<f64> {
    let mut counts = vec![0.0; c];
    for s in sequences {
        for (k, y) in s.labels[window - 1].iter().enumerate() {
            counts[k] += y;
        }
    }
    counts.iter().map(|n| n / sequences.len().max(1) as f64).collect()
}

/// Primitives in order of appearance.
type Script = Vec<Primitive>;

fn draw_script(config: &SimConfig, rng: &mut ChaCha8Rng) -> Script {
    let w = config.script_weights;
    let r = rng.gen::<f64>() * w.iter().sum::<f64>();
    if r < w[0] {
        Vec::new()
    } else if r < w[0] + w[1] {
        vec![*Primitive::ALL.choose(rng).expect("non-empty")]
    } else if config.composites.is_empty() {
        let mut two: Vec<Primitive> = Primitive::ALL.choose_multiple(rng, 2).copied().collect();
        two.shuffle(rng);
        two
    } else {
        let c = config.composites.choose(rng).expect("non-empty");
        if rng.gen_bool(0.5) {
            vec![c.first, c.second]
        } else {
            vec![c.second, c.first]
        }
    }
}

/// Places a script starting at `start`; returns its events and last frame.
fn place(config: &SimConfig, pair: usize, script: &Script, start: usize, gap: usize) -> Vec<PrimitiveEvent> {
    let mut t = start;
    script
        .iter()
        .map(|&kind| {
            let e = PrimitiveEvent {
                pair,
                kind,
                start: t,
                end: t + config.event_frames - 1,
            };
            t = e.end + 1 + gap;
            e
        })
        .collect()
}

fn span(config: &SimConfig, script: &Script, gap: usize) -> usize {
    match script.len() {
        0 => 0,
        n => n * config.event_frames + (n - 1) * gap,
    }
}

fn plan_pair(config: &SimConfig, pair: usize, rng: &mut ChaCha8Rng) -> Vec<PrimitiveEvent> {
    let mut events = Vec::new();
    // First script inside the first window, second one anywhere after it.
    let gap = rng.gen_range(config.gap[0]..=config.gap[1]);
    let first = draw_script(config, rng);
    let len = span(config, &first, gap);
    let mut next_free = 0;
    if len > 0 {
        let start = rng.gen_range(0..=config.window - len);
        events.extend(place(config, pair, &first, start, gap));
        next_free = start + len + config.idle_min;
    }
    let gap = rng.gen_range(config.gap[0]..=config.gap[1]);
    let second = draw_script(config, rng);
    let len = span(config, &second, gap);
    if len > 0 && next_free + len <= config.frames() {
        let start = rng.gen_range(next_free..=config.frames() - len);
        events.extend(place(config, pair, &second, start, gap));
    }
    events
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n > 0.0 {
        [v[0] / n, v[1] / n]
    } else {
        [1.0, 0.0]
    }
}

fn simulate_sequence(config: &SimConfig, rng: &mut ChaCha8Rng) -> (LabeledSequence, Vec<PrimitiveEvent>) {
    let pairs = config.agents / 2;
    let frames = config.frames();
    let mut pos = vec![[0.0; 2]; config.agents];
    for p in 0..pairs {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let axis = [theta.cos(), theta.sin()];
        let sep = rng.gen_range(config.separation[0]..=config.separation[1]);
        let centre = [p as f64 * config.arena_spacing, 0.0];
        pos[2 * p] = [centre[0] - axis[0] * sep / 2.0, centre[1] - axis[1] * sep / 2.0];
        pos[2 * p + 1] = [centre[0] + axis[0] * sep / 2.0, centre[1] + axis[1] * sep / 2.0];
    }
    let events: Vec<PrimitiveEvent> = (0..pairs).flat_map(|p| plan_pair(config, p, rng)).collect();

    let mut activity: Vec<Vec<Option<Primitive>>> = vec![vec![None; frames]; pairs];
    for e in &events {
        for slot in &mut activity[e.pair][e.start..=e.end] {
            *slot = Some(e.kind);
        }
    }

    let s = config.speed;
    let mut snapshots = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut features = vec![[0.0; 7]; config.agents];
        for p in 0..pairs {
            let (a, b) = (2 * p, 2 * p + 1);
            let u = unit([pos[b][0] - pos[a][0], pos[b][1] - pos[a][1]]);
            let n = [-u[1], u[0]];
            let (da, db) = match activity[p][t] {
                None => ([0.0; 2], [0.0; 2]),
                Some(Primitive::Converge) => ([s * u[0], s * u[1]], [-s * u[0], -s * u[1]]),
                Some(Primitive::Disperse) => ([-s * u[0], -s * u[1]], [s * u[0], s * u[1]]),
                Some(Primitive::Pass) => ([s * n[0], s * n[1]], [-s * n[0], -s * n[1]]),
                Some(Primitive::Chase) => ([s * u[0], s * u[1]], [s * u[0], s * u[1]]),
            };
            for (agent, d, toward) in [(a, da, u), (b, db, [-u[0], -u[1]])] {
                let j = config.jitter;
                let v = [
                    d[0] + rng.gen_range(-j..=j),
                    d[1] + rng.gen_range(-j..=j),
                ];
                pos[agent][0] += v[0];
                pos[agent][1] += v[1];
                let radial = v[0] * toward[0] + v[1] * toward[1];
                let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
                features[agent] = [v[0], v[1], toward[0], toward[1], radial, radial.abs(), speed];
            }
        }
        let mut g = SnapshotGraph::new(t as f64 / config.frame_rate);
        for (i, f) in features.iter().enumerate() {
            g.nodes.push(SnapshotNode {
                entity_id: format!("agent{i}"),
                node_type: "agent".into(),
                features: f.to_vec(),
            });
        }
        for i in 0..config.agents {
            for j in i + 1..config.agents {
                let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
                if d <= config.proximity {
                    g.edges.push(SnapshotEdge {
                        src: i,
                        dst: j,
                        edge_type: "near".into(),
                        features: None,
                    });
                }
            }
        }
        snapshots.push(g);
    }

    let labels = frame_labels(config, &events, frames);
    (LabeledSequence { snapshots, labels }, events)
}

/// Category spans: primitives as planted, composites wherever `first` ends
/// before `second` starts on the same pair within the horizon.
fn labelled_spans(config: &SimConfig, events: &[PrimitiveEvent]) -> Vec<(usize, usize, usize)> {
    let mut spans: Vec<(usize, usize, usize)> = events
        .iter()
        .map(|e| {
            let k = Primitive::ALL.iter().position(|p| *p == e.kind).expect("known primitive");
            (k, e.start, e.end)
        })
        .collect();
    for (ci, c) in config.composites.iter().enumerate() {
        for a in events.iter().filter(|e| e.kind == c.first) {
            for b in events.iter().filter(|e| e.kind == c.second && e.pair == a.pair) {
                if b.start > a.end && b.end + 1 - a.start <= config.horizon() {
                    spans.push((Primitive::ALL.len() + ci, a.start, b.end));
                }
            }
        }
    }
    spans
}

/// A category is positive at frame `f` when one of its spans lies entirely
/// in the window ending at `f`.
fn frame_labels(config: &SimConfig, events: &[PrimitiveEvent], frames: usize) -> Vec<Vec<f64>> {
    let c = Primitive::ALL.len() + config.composites.len();
    let spans = labelled_spans(config, events);
    (0..frames)
        .map(|f| {
            let lo = (f + 1).saturating_sub(config.window);
            let mut row = vec![0.0; c];
            for &(k, s, e) in &spans {
                if s >= lo && e <= f {
                    row[k] = 1.0;
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::wire::sequences_to_text;

    fn small() -> SimConfig {
        SimConfig {
            sequences: 40,
            seed: 5,
            ..SimConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        let text = |o: &SimOutput| {
            let seqs: Vec<_> = o.dataset.sequences.iter().map(|s| s.snapshots.clone()).collect();
            sequences_to_text(&seqs).unwrap() + &super::super::labels_to_text(&o.dataset).unwrap()
        };
        assert_eq!(text(&a), text(&b));
        assert_eq!(a.manifest, b.manifest);
        let c = simulate(&SimConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(text(&a), text(&c));
        assert_ne!(a.manifest.config_hash, c.manifest.config_hash);
    }

    #[test]
    fn no_composites_means_primitive_labels_only() {
        let cfg = SimConfig {
            composites: Vec::new(),
            ..small()
        };
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.dataset.categories, vec!["converge", "disperse", "pass", "chase"]);
        assert!(out.dataset.sequences.iter().all(|s| s.labels.iter().all(|r| r.len() == 4)));
    }

    #[test]
    fn shapes_and_edges() {
        let cfg = small();
        let out = simulate(&cfg).unwrap();
        for s in &out.dataset.sequences {
            assert_eq!(s.len(), cfg.frames());
            for g in &s.snapshots {
                assert_eq!(g.nodes.len(), cfg.agents);
                // Partners are always close, other agents never are.
                let pairs: Vec<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
                assert_eq!(pairs, (0..cfg.agents / 2).map(|p| (2 * p, 2 * p + 1)).collect::<Vec<_>>());
            }
        }
        assert!(out.manifest.prevalence.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            SimConfig { agents: 3, ..small() },
            SimConfig { window: 8, ..small() },
            SimConfig { idle_min: 5, ..small() },
            SimConfig { gap: [4, 3], ..small() },
            SimConfig { arena_spacing: 40.0, ..small() },
        ] {
            assert!(matches!(simulate(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn impossible_prevalence_bounds_fail() {
        let cfg = SimConfig {
            prevalence: [0.99, 1.0],
            max_attempts: 2,
            ..small()
        };
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
    }
}
