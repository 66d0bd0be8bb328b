//! Raw scenario records: timestamped obstacle states, road segments and
//! optional multi-label sets, plus ingestion (JSONL), validation, a
//! deterministic train/test split and a synthetic scenario generator.

mod jsonl;
pub mod synth;

pub use jsonl::{load_scenarios, write_scenarios};

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the "static obstacles do not move" invariant, in meters.
pub const STATIC_POSE_TOLERANCE: f64 = 1e-6;

/// Label vocabulary used by the synthetic generator and the downstream
/// multi-label evaluation. Ten labels, so label-set combinatorics stay in
/// the 2^10 regime.
pub const DEFAULT_LABEL_VOCAB: [&str; 10] = [
    "behind_long_vehicle",
    "changing_lane",
    "following_lane",
    "high_magnitude_speed",
    "near_pedestrian_on_crosswalk",
    "on_stopline_traffic_light",
    "stationary",
    "starting_left_turn",
    "starting_right_turn",
    "traversing_intersection",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleType {
    Vehicle,
    Pedestrian,
    Cyclist,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleRole {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadType {
    Lanelet,
    Walkway,
    Other,
}

/// Subtypes of road-to-road connections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadRelation {
    Predecessor,
    Successor,
    AdjLeft,
    AdjRight,
    Merging,
    Diverging,
    Intersecting,
    Other,
}

impl RoadRelation {
    pub const ALL: [RoadRelation; 8] = [
        RoadRelation::Predecessor,
        RoadRelation::Successor,
        RoadRelation::AdjLeft,
        RoadRelation::AdjRight,
        RoadRelation::Merging,
        RoadRelation::Diverging,
        RoadRelation::Intersecting,
        RoadRelation::Other,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|r| *r == self).unwrap()
    }
}

/// Reason attached to a yield annotation: right-of-way or traffic light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YieldReason {
    Row,
    Tl,
}

/// One obstacle pose/state sample at a timestep.
///
/// Serialized on the wire as the array
/// `[t, x, y, heading, vx, vy, length, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "StateTuple", into = "StateTuple")]
pub struct ObstacleState {
    pub t: u32,
    pub x: f64,
    pub y: f64,
    /// Radians, normalized to (-pi, pi].
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
    pub width: f64,
}

type StateTuple = (u32, f64, f64, f64, f64, f64, f64, f64);

impl From<StateTuple> for ObstacleState {
    fn from(v: StateTuple) -> Self {
        ObstacleState {
            t: v.0,
            x: v.1,
            y: v.2,
            heading: v.3,
            vx: v.4,
            vy: v.5,
            length: v.6,
            width: v.7,
        }
    }
}

impl From<ObstacleState> for StateTuple {
    fn from(s: ObstacleState) -> Self {
        (s.t, s.x, s.y, s.heading, s.vx, s.vy, s.length, s.width)
    }
}

impl ObstacleState {
    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub obstacle_id: String,
    #[serde(rename = "type")]
    pub obstacle_type: ObstacleType,
    pub role: ObstacleRole,
    pub is_ego: bool,
    pub states: Vec<ObstacleState>,
}

impl Obstacle {
    pub fn state_at(&self, t: u32) -> Option<&ObstacleState> {
        self.states
            .binary_search_by_key(&t, |s| s.t)
            .ok()
            .map(|i| &self.states[i])
    }
}

/// Connection from one road segment to another, with a typed relation.
/// Serialized as `[target_segment_id, relation]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, RoadRelation)", into = "(String, RoadRelation)")]
pub struct RoadConnection {
    pub target: String,
    pub relation: RoadRelation,
}

impl From<(String, RoadRelation)> for RoadConnection {
    fn from(v: (String, RoadRelation)) -> Self {
        RoadConnection {
            target: v.0,
            relation: v.1,
        }
    }
}

impl From<RoadConnection> for (String, RoadRelation) {
    fn from(c: RoadConnection) -> Self {
        (c.target, c.relation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSegment {
    pub segment_id: String,
    #[serde(rename = "type")]
    pub road_type: RoadType,
    /// Polyline of (x, y) points in meters, at least two points.
    pub centerline: Vec<(f64, f64)>,
    /// Per-centerline-point width in meters.
    pub widths: Vec<f64>,
    pub connections: Vec<RoadConnection>,
}

/// Yield annotation: at timestep `t`, `yielding` must yield to `yielded_to`.
/// Serialized as `[t, yielding_id, yielded_to_id, reason]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u32, String, String, YieldReason)", into = "(u32, String, String, YieldReason)")]
pub struct YieldAnnotation {
    pub t: u32,
    pub yielding: String,
    pub yielded_to: String,
    pub reason: YieldReason,
}

impl From<(u32, String, String, YieldReason)> for YieldAnnotation {
    fn from(v: (u32, String, String, YieldReason)) -> Self {
        YieldAnnotation {
            t: v.0,
            yielding: v.1,
            yielded_to: v.2,
            reason: v.3,
        }
    }
}

impl From<YieldAnnotation> for (u32, String, String, YieldReason) {
    fn from(a: YieldAnnotation) -> Self {
        (a.t, a.yielding, a.yielded_to, a.reason)
    }
}

/// A complete traffic scenario: obstacles with per-timestep states, optional
/// road segments, an optional multi-label set and optional yield annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario_id: String,
    /// Seconds per timestep.
    pub dt: f64,
    pub num_timesteps: u32,
    pub labels: BTreeSet<String>,
    pub obstacles: Vec<Obstacle>,
    pub road_segments: Vec<RoadSegment>,
    pub yield_annotations: Option<Vec<YieldAnnotation>>,
}

impl Scenario {
    pub fn ego(&self) -> Option<&Obstacle> {
        self.obstacles.iter().find(|o| o.is_ego)
    }

    /// Validates every structural invariant. `vocab`, when non-empty,
    /// restricts the allowed label strings.
    pub fn validate(&self, vocab: &[&str]) -> Result<()> {
        let id = &self.scenario_id;
        let fail = |field: &str, msg: String| Err(Error::validation(id.clone(), field, msg));

        if self.dt <= 0.0 || !self.dt.is_finite() {
            return fail("dt", format!("must be a positive finite number, got {}", self.dt));
        }
        if self.num_timesteps < 1 {
            return fail("num_timesteps", "must be >= 1".into());
        }
        if self.obstacles.is_empty() {
            return fail("obstacles", "scenario must contain at least one obstacle".into());
        }
        if !vocab.is_empty() {
            for l in &self.labels {
                if !vocab.contains(&l.as_str()) {
                    return fail("labels", format!("label `{l}` not in vocabulary"));
                }
            }
        }

        let mut ego_count = 0usize;
        let mut obstacle_ids = HashSet::new();
        for o in &self.obstacles {
            if !obstacle_ids.insert(o.obstacle_id.as_str()) {
                return fail("obstacles", format!("duplicate obstacle_id `{}`", o.obstacle_id));
            }
            if o.is_ego {
                ego_count += 1;
            }
            if o.states.is_empty() {
                return fail(
                    "obstacles",
                    format!("obstacle `{}` has no states", o.obstacle_id),
                );
            }
            let mut prev_t: Option<u32> = None;
            for s in &o.states {
                if let Some(p) = prev_t {
                    if s.t <= p {
                        return fail(
                            "states",
                            format!(
                                "obstacle `{}`: states not strictly ascending by t ({} after {})",
                                o.obstacle_id, s.t, p
                            ),
                        );
                    }
                }
                prev_t = Some(s.t);
                if s.t >= self.num_timesteps {
                    return fail(
                        "states",
                        format!(
                            "obstacle `{}`: state t={} >= num_timesteps={}",
                            o.obstacle_id, s.t, self.num_timesteps
                        ),
                    );
                }
                for (name, v) in [
                    ("x", s.x),
                    ("y", s.y),
                    ("heading", s.heading),
                    ("vx", s.vx),
                    ("vy", s.vy),
                    ("length", s.length),
                    ("width", s.width),
                ] {
                    if !v.is_finite() {
                        return fail(
                            "states",
                            format!("obstacle `{}`: non-finite {name} at t={}", o.obstacle_id, s.t),
                        );
                    }
                }
                if s.heading <= -std::f64::consts::PI || s.heading > std::f64::consts::PI {
                    return fail(
                        "states",
                        format!(
                            "obstacle `{}`: heading {} outside (-pi, pi] at t={}",
                            o.obstacle_id, s.heading, s.t
                        ),
                    );
                }
                if s.length <= 0.0 || s.width <= 0.0 {
                    return fail(
                        "states",
                        format!("obstacle `{}`: non-positive extent at t={}", o.obstacle_id, s.t),
                    );
                }
            }
            if o.role == ObstacleRole::Static {
                let first = &o.states[0];
                for s in &o.states[1..] {
                    if (s.x - first.x).abs() > STATIC_POSE_TOLERANCE
                        || (s.y - first.y).abs() > STATIC_POSE_TOLERANCE
                        || (s.heading - first.heading).abs() > STATIC_POSE_TOLERANCE
                    {
                        return fail(
                            "states",
                            format!("static obstacle `{}` moves at t={}", o.obstacle_id, s.t),
                        );
                    }
                }
            }
        }
        if ego_count > 1 {
            return fail("obstacles", format!("{ego_count} obstacles have is_ego = true"));
        }

        let mut segment_ids = HashSet::new();
        for r in &self.road_segments {
            if !segment_ids.insert(r.segment_id.as_str()) {
                return fail(
                    "road_segments",
                    format!("duplicate segment_id `{}`", r.segment_id),
                );
            }
            if r.centerline.len() < 2 {
                return fail(
                    "road_segments",
                    format!("segment `{}`: centerline needs >= 2 points", r.segment_id),
                );
            }
            if r.widths.len() != r.centerline.len() {
                return fail(
                    "road_segments",
                    format!(
                        "segment `{}`: {} widths for {} centerline points",
                        r.segment_id,
                        r.widths.len(),
                        r.centerline.len()
                    ),
                );
            }
            if r.widths.iter().any(|w| *w <= 0.0 || !w.is_finite()) {
                return fail(
                    "road_segments",
                    format!("segment `{}`: widths must be positive and finite", r.segment_id),
                );
            }
            if r.centerline
                .iter()
                .any(|(x, y)| !x.is_finite() || !y.is_finite())
            {
                return fail(
                    "road_segments",
                    format!("segment `{}`: non-finite centerline point", r.segment_id),
                );
            }
        }
        for r in &self.road_segments {
            for c in &r.connections {
                if !segment_ids.contains(c.target.as_str()) {
                    return fail(
                        "connections",
                        format!(
                            "segment `{}` connects to unknown segment `{}`",
                            r.segment_id, c.target
                        ),
                    );
                }
            }
        }

        if let Some(anns) = &self.yield_annotations {
            for a in anns {
                if a.t >= self.num_timesteps {
                    return fail(
                        "yield_annotations",
                        format!("annotation t={} >= num_timesteps", a.t),
                    );
                }
                for who in [&a.yielding, &a.yielded_to] {
                    if !obstacle_ids.contains(who.as_str()) {
                        return fail(
                            "yield_annotations",
                            format!("annotation references unknown obstacle `{who}`"),
                        );
                    }
                }
            }
        }
        Ok(())
    }
}

/// Wraps an angle to (-pi, pi].
pub fn normalize_heading(h: f64) -> f64 {
    let mut r = h.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    r
}

/// Deterministic shuffled split into `(train, test)` with
/// `train.len() == floor(N * train_ratio)`.
pub fn split(
    scenarios: Vec<Scenario>,
    train_ratio: f64,
    seed: u64,
) -> Result<(Vec<Scenario>, Vec<Scenario>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!(
            "train_ratio must lie strictly between 0 and 1, got {train_ratio}"
        )));
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut items = scenarios;
    items.shuffle(&mut rng);
    let train_n = (items.len() as f64 * train_ratio).floor() as usize;
    let test = items.split_off(train_n);
    Ok((items, test))
}
