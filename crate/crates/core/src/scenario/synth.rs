//! Synthetic scenario families for desk-scale experiments.
//!
//! Six families with distinct ego maneuvers and multi-label sets. Generation
//! is deterministic per `(family, count, seed)`; scenario `i` draws from an
//! rng derived from `seed + i`, so families can be generated in parallel.

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scenario::{
    normalize_heading, Obstacle, ObstacleRole, ObstacleState, ObstacleType, RoadConnection,
    RoadRelation, RoadSegment, RoadType, Scenario, YieldAnnotation, YieldReason,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    StraightHighSpeed,
    LeftTurn,
    RightTurn,
    StopAtLight,
    Overtake,
    PedestrianCrossing,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::StraightHighSpeed,
        Family::LeftTurn,
        Family::RightTurn,
        Family::StopAtLight,
        Family::Overtake,
        Family::PedestrianCrossing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::StraightHighSpeed => "straight_high_speed",
            Family::LeftTurn => "left_turn",
            Family::RightTurn => "right_turn",
            Family::StopAtLight => "stop_at_light",
            Family::Overtake => "overtake",
            Family::PedestrianCrossing => "pedestrian_crossing",
        }
    }

    /// Multi-label set attached to every scenario of the family.
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Family::StraightHighSpeed => &["high_magnitude_speed", "following_lane"],
            Family::LeftTurn => &["starting_left_turn", "traversing_intersection"],
            Family::RightTurn => &["starting_right_turn", "traversing_intersection"],
            Family::StopAtLight => &["on_stopline_traffic_light"],
            Family::Overtake => &["changing_lane", "behind_long_vehicle"],
            Family::PedestrianCrossing => &["near_pedestrian_on_crosswalk", "stationary"],
        }
    }

    fn salt(self) -> u64 {
        match self {
            Family::StraightHighSpeed => 0x5357_4946_5400_0001,
            Family::LeftTurn => 0x5357_4946_5400_0002,
            Family::RightTurn => 0x5357_4946_5400_0003,
            Family::StopAtLight => 0x5357_4946_5400_0004,
            Family::Overtake => 0x5357_4946_5400_0005,
            Family::PedestrianCrossing => 0x5357_4946_5400_0006,
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario family `{s}`")))
    }
}

/// Timestep spacing for generated data, seconds.
pub const GENERATED_DT: f64 = 0.5;

/// Pairwise family-separation margins checked by the generator contract
/// test: two families are distinguishable when the per-family means of at
/// least one statistic differ by more than its margin.
pub const NET_HEADING_MARGIN: f64 = 0.5; // radians
pub const ABS_HEADING_MARGIN: f64 = 0.2; // radians
pub const TERMINAL_SPEED_MARGIN: f64 = 1.0; // m/s

/// Ego-trajectory statistics used by the family-separability contract.
#[derive(Debug, Clone, Copy)]
pub struct EgoStats {
    /// Sum of wrapped heading increments (signed curvature proxy).
    pub net_heading_change: f64,
    /// Sum of absolute wrapped heading increments.
    pub abs_heading_change: f64,
    pub terminal_speed: f64,
}

pub fn ego_stats(s: &Scenario) -> Option<EgoStats> {
    let ego = s.ego()?;
    let mut net = 0.0;
    let mut abs = 0.0;
    for w in ego.states.windows(2) {
        let d = normalize_heading(w[1].heading - w[0].heading);
        net += d;
        abs += d.abs();
    }
    Some(EgoStats {
        net_heading_change: net,
        abs_heading_change: abs,
        terminal_speed: ego.states.last()?.speed(),
    })
}

/// Generates `count` scenarios of one family. Deterministic in all arguments.
pub fn generate_synthetic(family: Family, count: usize, seed: u64) -> Result<Vec<Scenario>> {
    if count < 1 {
        return Err(Error::Config("count must be >= 1".into()));
    }
    (0..count)
        .map(|i| {
            let sub = splitmix64(seed.wrapping_add(i as u64)) ^ family.salt();
            let mut rng = ChaCha8Rng::seed_from_u64(sub);
            let s = generate_one(family, seed, i, &mut rng);
            s.validate(&crate::scenario::DEFAULT_LABEL_VOCAB)?;
            Ok(s)
        })
        .collect()
}

/// Convenience: an equal mix of all six families.
pub fn generate_mix(per_family: usize, seed: u64) -> Result<Vec<Scenario>> {
    let mut out = Vec::with_capacity(per_family * Family::ALL.len());
    for f in Family::ALL {
        out.extend(generate_synthetic(f, per_family, seed)?);
    }
    Ok(out)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Rigid scene transform applied to every generated primitive so that
/// families appear at arbitrary positions and orientations.
#[derive(Debug, Clone, Copy)]
struct Frame {
    rot: f64,
    tx: f64,
    ty: f64,
}

impl Frame {
    fn sample(rng: &mut ChaCha8Rng) -> Frame {
        Frame {
            rot: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            tx: rng.random_range(-60.0..60.0),
            ty: rng.random_range(-60.0..60.0),
        }
    }

    fn pt(&self, p: (f64, f64)) -> (f64, f64) {
        let (c, s) = (self.rot.cos(), self.rot.sin());
        (p.0 * c - p.1 * s + self.tx, p.0 * s + p.1 * c + self.ty)
    }

    fn heading(&self, h: f64) -> f64 {
        normalize_heading(h + self.rot)
    }
}

/// Derives per-timestep states from a transformed position sequence.
/// Velocities are finite differences; stationary steps keep the previous
/// heading (or `init_heading` when stationary from the start).
fn states_from_positions(
    positions: &[(f64, f64)],
    dt: f64,
    (length, width): (f64, f64),
    init_heading: f64,
) -> Vec<ObstacleState> {
    assert!(positions.len() >= 2, "need at least two positions");
    let n = positions.len();
    let mut states = Vec::with_capacity(n);
    let mut heading = normalize_heading(init_heading);
    for t in 0..n {
        let (from, to) = if t + 1 < n {
            (positions[t], positions[t + 1])
        } else {
            (positions[n - 2], positions[n - 1])
        };
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let dist = dx.hypot(dy);
        let (vx, vy) = if dist > 1e-9 {
            heading = normalize_heading(dy.atan2(dx));
            (dx / dt, dy / dt)
        } else {
            (0.0, 0.0)
        };
        states.push(ObstacleState {
            t: t as u32,
            x: positions[t].0,
            y: positions[t].1,
            heading,
            vx,
            vy,
            length,
            width,
        });
    }
    states
}

/// Linear interpolation across `(timestep, speed)` keyframes.
fn speed_at(keys: &[(usize, f64)], t: usize) -> f64 {
    if t <= keys[0].0 {
        return keys[0].1;
    }
    for w in keys.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        if t <= t1 {
            let u = (t - t0) as f64 / (t1 - t0).max(1) as f64;
            return v0 + (v1 - v0) * u;
        }
    }
    keys.last().unwrap().1
}

/// Integrates a speed profile into distances along a path, one per timestep.
fn arclengths(keys: &[(usize, f64)], n: usize, dt: f64) -> Vec<f64> {
    let mut s = 0.0;
    (0..n)
        .map(|t| {
            let here = s;
            s += speed_at(keys, t) * dt;
            here
        })
        .collect()
}

enum PathSeg {
    Straight { len: f64 },
    Arc { radius: f64, sweep: f64 },
}

struct MotionPath {
    start: (f64, f64),
    start_heading: f64,
    segs: Vec<PathSeg>,
}

impl MotionPath {
    fn pose_at(&self, mut s: f64) -> (f64, f64, f64) {
        let (mut x, mut y) = self.start;
        let mut h = self.start_heading;
        for seg in &self.segs {
            match seg {
                PathSeg::Straight { len } => {
                    let d = s.min(*len);
                    x += d * h.cos();
                    y += d * h.sin();
                    if s <= *len {
                        return (x, y, h);
                    }
                    s -= len;
                }
                PathSeg::Arc { radius, sweep } => {
                    let arc_len = radius * sweep.abs();
                    let frac = (s / arc_len).min(1.0);
                    let theta = sweep * frac;
                    let sigma = sweep.signum();
                    let cx = x - sigma * radius * h.sin();
                    let cy = y + sigma * radius * h.cos();
                    let nx = cx + sigma * radius * (h + theta).sin();
                    let ny = cy - sigma * radius * (h + theta).cos();
                    if s <= arc_len {
                        return (nx, ny, h + theta);
                    }
                    x = nx;
                    y = ny;
                    h += sweep;
                    s -= arc_len;
                }
            }
        }
        (x, y, h)
    }
}

fn straight_centerline(from: (f64, f64), to: (f64, f64), points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|i| {
            let u = i as f64 / (points - 1) as f64;
            (from.0 + (to.0 - from.0) * u, from.1 + (to.1 - from.1) * u)
        })
        .collect()
}

fn make_segment(
    frame: &Frame,
    id: &str,
    road_type: RoadType,
    local_line: Vec<(f64, f64)>,
    width: f64,
    connections: Vec<RoadConnection>,
) -> RoadSegment {
    let centerline: Vec<(f64, f64)> = local_line.iter().map(|p| frame.pt(*p)).collect();
    let widths = vec![width; centerline.len()];
    RoadSegment {
        segment_id: id.to_string(),
        road_type,
        centerline,
        widths,
        connections,
    }
}

fn vehicle_dims(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(4.2..5.2), rng.random_range(1.8..2.1))
}

struct Builder {
    frame: Frame,
    dt: f64,
    n: usize,
    obstacles: Vec<Obstacle>,
    roads: Vec<RoadSegment>,
    yields: Vec<YieldAnnotation>,
}

impl Builder {
    fn new(frame: Frame, n: usize) -> Builder {
        Builder {
            frame,
            dt: GENERATED_DT,
            n,
            obstacles: Vec::new(),
            roads: Vec::new(),
            yields: Vec::new(),
        }
    }

    /// Adds a moving obstacle from local-frame positions.
    fn add_moving(
        &mut self,
        id: &str,
        obstacle_type: ObstacleType,
        is_ego: bool,
        local_positions: &[(f64, f64)],
        dims: (f64, f64),
        init_heading_local: f64,
    ) {
        let positions: Vec<(f64, f64)> =
            local_positions.iter().map(|p| self.frame.pt(*p)).collect();
        let states =
            states_from_positions(&positions, self.dt, dims, self.frame.heading(init_heading_local));
        self.obstacles.push(Obstacle {
            obstacle_id: id.to_string(),
            obstacle_type,
            role: ObstacleRole::Dynamic,
            is_ego,
            states,
        });
    }

    /// Adds a static obstacle with identical states at every timestep.
    fn add_static(
        &mut self,
        id: &str,
        obstacle_type: ObstacleType,
        local_pos: (f64, f64),
        heading_local: f64,
        dims: (f64, f64),
    ) {
        let (x, y) = self.frame.pt(local_pos);
        let heading = self.frame.heading(heading_local);
        let states = (0..self.n)
            .map(|t| ObstacleState {
                t: t as u32,
                x,
                y,
                heading,
                vx: 0.0,
                vy: 0.0,
                length: dims.0,
                width: dims.1,
            })
            .collect();
        self.obstacles.push(Obstacle {
            obstacle_id: id.to_string(),
            obstacle_type,
            role: ObstacleRole::Static,
            is_ego: false,
            states,
        });
    }

    fn finish(self, family: Family, seed: u64, index: usize) -> Scenario {
        let labels: BTreeSet<String> = family.labels().iter().map(|s| s.to_string()).collect();
        Scenario {
            scenario_id: format!("{}-{}-{:05}", family.name(), seed, index),
            dt: self.dt,
            num_timesteps: self.n as u32,
            labels,
            obstacles: self.obstacles,
            road_segments: self.roads,
            yield_annotations: if self.yields.is_empty() {
                None
            } else {
                Some(self.yields)
            },
        }
    }
}

fn generate_one(family: Family, seed: u64, index: usize, rng: &mut ChaCha8Rng) -> Scenario {
    match family {
        Family::StraightHighSpeed => gen_straight(seed, index, rng),
        Family::LeftTurn => gen_turn(seed, index, rng, true),
        Family::RightTurn => gen_turn(seed, index, rng, false),
        Family::StopAtLight => gen_stop_at_light(seed, index, rng),
        Family::Overtake => gen_overtake(seed, index, rng),
        Family::PedestrianCrossing => gen_pedestrian_crossing(seed, index, rng),
    }
}

fn gen_straight(seed: u64, index: usize, rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(14..=22);
    let frame = Frame::sample(rng);
    let mut b = Builder::new(frame, n);
    let dt = b.dt;

    let v0 = rng.random_range(12.0..16.5);
    let x0 = -v0 * n as f64 * dt / 2.0;
    let ego_pos: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            (
                x0 + v0 * t as f64 * dt,
                rng.random_range(-0.005..0.005),
            )
        })
        .collect();
    b.add_moving("ego", ObstacleType::Vehicle, true, &ego_pos, vehicle_dims(rng), 0.0);

    let two_lanes = rng.random_bool(0.5);
    let lane0 = make_segment(
        &frame,
        "lane-0",
        RoadType::Lanelet,
        straight_centerline((-140.0, 0.0), (140.0, 0.0), 10),
        3.7,
        if two_lanes {
            vec![RoadConnection {
                target: "lane-1".into(),
                relation: RoadRelation::AdjLeft,
            }]
        } else {
            vec![]
        },
    );
    b.roads.push(lane0);
    if two_lanes {
        b.roads.push(make_segment(
            &frame,
            "lane-1",
            RoadType::Lanelet,
            straight_centerline((-140.0, 3.7), (140.0, 3.7), 10),
            3.7,
            vec![RoadConnection {
                target: "lane-0".into(),
                relation: RoadRelation::AdjRight,
            }],
        ));
    }

    let n_bg = rng.random_range(1..=3);
    for k in 0..n_bg {
        let lane_y = if two_lanes && rng.random_bool(0.4) { 3.7 } else { 0.0 };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let gap = sign * rng.random_range(25.0..60.0);
        let v = (v0 + rng.random_range(-2.5..2.5)).max(6.0);
        let pos: Vec<(f64, f64)> = (0..n)
            .map(|t| (x0 + gap + v * t as f64 * dt, lane_y))
            .collect();
        b.add_moving(
            &format!("veh-{k}"),
            ObstacleType::Vehicle,
            false,
            &pos,
            vehicle_dims(rng),
            0.0,
        );
    }
    if rng.random_bool(0.3) {
        b.add_static(
            "parked-0",
            ObstacleType::Vehicle,
            (rng.random_range(-40.0..40.0), -5.6),
            0.0,
            vehicle_dims(rng),
        );
    }
    b.finish(Family::StraightHighSpeed, seed, index)
}

fn gen_turn(seed: u64, index: usize, rng: &mut ChaCha8Rng, left: bool) -> Scenario {
    let n = rng.random_range(18..=26);
    let frame = Frame::sample(rng);
    let mut b = Builder::new(frame, n);
    let dt = b.dt;

    let v0 = rng.random_range(6.5..8.5);
    let v_turn = rng.random_range(3.8..4.8);
    let v_exit = rng.random_range(5.2..6.5);
    let t1 = (0.33 * n as f64) as usize;
    let t2 = (0.62 * n as f64) as usize;
    let keys = [(0, v0), (t1, v_turn), (t2, v_turn), (n - 1, v_exit)];
    let s = arclengths(&keys, n, dt);
    let d_approach = s[t1];
    let arc_len = (s[t2] - s[t1]).max(1.0);
    let radius = arc_len / std::f64::consts::FRAC_PI_2;
    let sweep = if left {
        std::f64::consts::FRAC_PI_2
    } else {
        -std::f64::consts::FRAC_PI_2
    };
    let path = MotionPath {
        start: (-d_approach, 0.0),
        start_heading: 0.0,
        segs: vec![
            PathSeg::Straight { len: d_approach },
            PathSeg::Arc { radius, sweep },
            PathSeg::Straight { len: 300.0 },
        ],
    };
    let ego_pos: Vec<(f64, f64)> = s
        .iter()
        .map(|si| {
            let (x, y, _) = path.pose_at(*si);
            (x, y)
        })
        .collect();
    b.add_moving("ego", ObstacleType::Vehicle, true, &ego_pos, vehicle_dims(rng), 0.0);

    // Crossing road runs through the turn exit.
    let cross_x = radius;
    b.roads.push(make_segment(
        &frame,
        "road-ew",
        RoadType::Lanelet,
        straight_centerline((-90.0, 0.0), (90.0, 0.0), 10),
        3.7,
        vec![RoadConnection {
            target: "road-ns".into(),
            relation: RoadRelation::Intersecting,
        }],
    ));
    b.roads.push(make_segment(
        &frame,
        "road-ns",
        RoadType::Lanelet,
        straight_centerline((cross_x, -90.0), (cross_x, 90.0), 10),
        3.7,
        vec![RoadConnection {
            target: "road-ew".into(),
            relation: RoadRelation::Intersecting,
        }],
    ));

    // One vehicle already on the exit road, moving away from the junction.
    let dir = if left { 1.0 } else { -1.0 };
    let y_b0 = dir * rng.random_range(15.0..30.0);
    let v_b = rng.random_range(5.0..8.0);
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|t| (cross_x, y_b0 + dir * v_b * t as f64 * dt))
        .collect();
    b.add_moving("veh-exit", ObstacleType::Vehicle, false, &pos, vehicle_dims(rng), 0.0);

    if rng.random_bool(0.6) {
        let gap = rng.random_range(12.0..25.0);
        let v = v0 * rng.random_range(0.75..0.95);
        let pos: Vec<(f64, f64)> = (0..n)
            .map(|t| (-d_approach - gap + v * t as f64 * dt, 0.0))
            .collect();
        b.add_moving("veh-follow", ObstacleType::Vehicle, false, &pos, vehicle_dims(rng), 0.0);
    }
    if rng.random_bool(0.3) {
        b.add_static(
            "parked-0",
            ObstacleType::Vehicle,
            (rng.random_range(-35.0..-12.0), -6.0),
            0.0,
            vehicle_dims(rng),
        );
    }
    let family = if left { Family::LeftTurn } else { Family::RightTurn };
    b.finish(family, seed, index)
}

fn gen_stop_at_light(seed: u64, index: usize, rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(20..=30);
    let frame = Frame::sample(rng);
    let mut b = Builder::new(frame, n);
    let dt = b.dt;

    let v0 = rng.random_range(7.0..10.0);
    let t_stop = ((0.45 * n as f64) as usize).max(4);
    let keys = [(0, v0), (t_stop, 0.0), (n - 1, 0.0)];
    let s = arclengths(&keys, n, dt);
    let stop_x = -3.0;
    let x0 = stop_x - s[n - 1];
    let ego_pos: Vec<(f64, f64)> = s.iter().map(|si| (x0 + si, 0.0)).collect();
    b.add_moving("ego", ObstacleType::Vehicle, true, &ego_pos, vehicle_dims(rng), 0.0);

    b.roads.push(make_segment(
        &frame,
        "road-ew",
        RoadType::Lanelet,
        straight_centerline((-90.0, 0.0), (90.0, 0.0), 10),
        3.7,
        vec![RoadConnection {
            target: "road-ns".into(),
            relation: RoadRelation::Intersecting,
        }],
    ));
    b.roads.push(make_segment(
        &frame,
        "road-ns",
        RoadType::Lanelet,
        straight_centerline((0.0, -90.0), (0.0, 90.0), 10),
        3.7,
        vec![RoadConnection {
            target: "road-ew".into(),
            relation: RoadRelation::Intersecting,
        }],
    ));

    let n_cross = rng.random_range(1..=2);
    for k in 0..n_cross {
        let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let y0 = -dir * rng.random_range(20.0..50.0);
        let v = rng.random_range(6.0..9.0);
        let pos: Vec<(f64, f64)> = (0..n)
            .map(|t| (0.0, y0 + dir * v * t as f64 * dt))
            .collect();
        b.add_moving(
            &format!("cross-{k}"),
            ObstacleType::Vehicle,
            false,
            &pos,
            vehicle_dims(rng),
            dir * std::f64::consts::FRAC_PI_2,
        );
        if k == 0 {
            for t in t_stop..n {
                let y = y0 + dir * v * t as f64 * dt;
                if y.abs() < 45.0 {
                    b.yields.push(YieldAnnotation {
                        t: t as u32,
                        yielding: "ego".into(),
                        yielded_to: "cross-0".into(),
                        reason: YieldReason::Tl,
                    });
                }
            }
        }
    }
    if rng.random_bool(0.3) {
        b.add_static(
            "parked-0",
            ObstacleType::Vehicle,
            (rng.random_range(-45.0..-15.0), 5.8),
            std::f64::consts::PI,
            vehicle_dims(rng),
        );
    }
    b.finish(Family::StopAtLight, seed, index)
}

fn gen_overtake(seed: u64, index: usize, rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(18..=26);
    let frame = Frame::sample(rng);
    let mut b = Builder::new(frame, n);
    let dt = b.dt;

    let v0 = rng.random_range(12.5..16.0);
    let v_truck = rng.random_range(5.0..7.0);
    let gap0 = rng.random_range(18.0..26.0);
    let x0 = -v0 * n as f64 * dt / 2.0;

    let closing = (v0 - v_truck).max(1.0);
    let t_lc = (((gap0 - 12.0) / (closing * dt)).floor() as usize).clamp(2, n.saturating_sub(10));
    let lc_steps = 5usize;
    let lane_offset = 3.7;
    let ego_pos: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            let x = x0 + v0 * t as f64 * dt;
            let y = if t <= t_lc {
                0.0
            } else if t < t_lc + lc_steps {
                let u = (t - t_lc) as f64 / lc_steps as f64;
                lane_offset * (3.0 * u * u - 2.0 * u * u * u)
            } else {
                lane_offset
            };
            (x, y)
        })
        .collect();
    b.add_moving("ego", ObstacleType::Vehicle, true, &ego_pos, vehicle_dims(rng), 0.0);

    let truck_dims = (rng.random_range(12.0..16.0), rng.random_range(2.5..2.7));
    let truck_pos: Vec<(f64, f64)> = (0..n)
        .map(|t| (x0 + gap0 + v_truck * t as f64 * dt, 0.0))
        .collect();
    b.add_moving("truck", ObstacleType::Vehicle, false, &truck_pos, truck_dims, 0.0);

    b.roads.push(make_segment(
        &frame,
        "lane-0",
        RoadType::Lanelet,
        straight_centerline((-140.0, 0.0), (140.0, 0.0), 10),
        3.7,
        vec![RoadConnection {
            target: "lane-1".into(),
            relation: RoadRelation::AdjLeft,
        }],
    ));
    b.roads.push(make_segment(
        &frame,
        "lane-1",
        RoadType::Lanelet,
        straight_centerline((-140.0, 3.7), (140.0, 3.7), 10),
        3.7,
        vec![RoadConnection {
            target: "lane-0".into(),
            relation: RoadRelation::AdjRight,
        }],
    ));

    if rng.random_bool(0.4) {
        let v = v0 + rng.random_range(-1.0..1.0);
        let pos: Vec<(f64, f64)> = (0..n)
            .map(|t| (x0 - rng.random_range(0.0..0.1) - 45.0 + v * t as f64 * dt, 3.7))
            .collect();
        b.add_moving("veh-rear", ObstacleType::Vehicle, false, &pos, vehicle_dims(rng), 0.0);
    }
    b.finish(Family::Overtake, seed, index)
}

fn gen_pedestrian_crossing(seed: u64, index: usize, rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.random_range(24..=34);
    let frame = Frame::sample(rng);
    let mut b = Builder::new(frame, n);
    let dt = b.dt;

    let v_ped = rng.random_range(1.2..1.5);
    let t_ped_start = (0.1 * n as f64) as usize;
    let ped_y0 = -7.0;
    let ped_travel = 14.0;
    let ped_pos: Vec<(f64, f64)> = (0..n)
        .map(|t| {
            let walked = if t <= t_ped_start {
                0.0
            } else {
                (v_ped * (t - t_ped_start) as f64 * dt).min(ped_travel)
            };
            (0.0, ped_y0 + walked)
        })
        .collect();
    // Pedestrian clears the ego lane once past y = +2.5.
    let t_clear = (0..n)
        .find(|t| ped_pos[*t].1 > 2.5)
        .unwrap_or(n - 1)
        .min(n - 8);

    let v0 = rng.random_range(7.0..9.0);
    let t_stop = ((0.3 * n as f64) as usize).max(4);
    let accel = 1.1;
    let v_cap = 5.2;
    let mut speeds = Vec::with_capacity(n);
    for t in 0..n {
        let v = if t <= t_stop {
            v0 * (1.0 - t as f64 / t_stop as f64)
        } else if t < t_clear {
            0.0
        } else {
            (accel * (t - t_clear) as f64 * dt).min(v_cap)
        };
        speeds.push(v.max(0.0));
    }
    let mut s_acc = 0.0;
    let s: Vec<f64> = (0..n)
        .map(|t| {
            let here = s_acc;
            s_acc += speeds[t] * dt;
            here
        })
        .collect();
    let stop_x = -5.0;
    let x0 = stop_x - s[t_stop];
    let ego_pos: Vec<(f64, f64)> = s.iter().map(|si| (x0 + si, 0.0)).collect();
    b.add_moving("ego", ObstacleType::Vehicle, true, &ego_pos, vehicle_dims(rng), 0.0);
    b.add_moving(
        "ped-0",
        ObstacleType::Pedestrian,
        false,
        &ped_pos,
        (0.6, 0.6),
        std::f64::consts::FRAC_PI_2,
    );

    b.roads.push(make_segment(
        &frame,
        "road-ew",
        RoadType::Lanelet,
        straight_centerline((-90.0, 0.0), (90.0, 0.0), 10),
        3.7,
        vec![],
    ));
    b.roads.push(make_segment(
        &frame,
        "crosswalk",
        RoadType::Walkway,
        straight_centerline((0.0, -9.0), (0.0, 9.0), 6),
        2.5,
        vec![],
    ));

    if rng.random_bool(0.5) {
        b.add_static(
            "parked-0",
            ObstacleType::Vehicle,
            (rng.random_range(-40.0..-14.0), -5.8),
            0.0,
            vehicle_dims(rng),
        );
    }
    if rng.random_bool(0.4) {
        b.add_static(
            "ped-waiting",
            ObstacleType::Pedestrian,
            (2.5, 8.5),
            -std::f64::consts::FRAC_PI_2,
            (0.6, 0.6),
        );
    }
    b.finish(Family::PedestrianCrossing, seed, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::DEFAULT_LABEL_VOCAB;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(Family::LeftTurn, 1, 7).unwrap();
        let b = generate_synthetic(Family::LeftTurn, 1, 7).unwrap();
        let ja = serde_json::to_vec(&a).unwrap();
        let jb = serde_json::to_vec(&b).unwrap();
        assert_eq!(ja, jb, "same (family, count, seed) must be byte-identical");
    }

    #[test]
    fn all_families_generate_valid_scenarios_within_bounds() {
        for family in Family::ALL {
            let scenarios = generate_synthetic(family, 12, 42).unwrap();
            for s in &scenarios {
                s.validate(&DEFAULT_LABEL_VOCAB).unwrap();
                assert!((10..=40).contains(&(s.num_timesteps as usize)), "{}", s.scenario_id);
                assert!((2..=12).contains(&s.obstacles.len()), "{}", s.scenario_id);
                assert!((1..=6).contains(&s.road_segments.len()), "{}", s.scenario_id);
                assert!(s.ego().is_some());
                let expected: BTreeSet<String> =
                    family.labels().iter().map(|l| l.to_string()).collect();
                assert_eq!(s.labels, expected);
            }
        }
    }

    #[test]
    fn stop_at_light_contract() {
        let scenarios = generate_synthetic(Family::StopAtLight, 5, 0).unwrap();
        for s in &scenarios {
            let expected: BTreeSet<String> =
                ["on_stopline_traffic_light".to_string()].into_iter().collect();
            assert_eq!(s.labels, expected);
            let ego = s.ego().unwrap();
            assert!(
                ego.states.last().unwrap().speed() < 0.5,
                "ego should be stopped at the end of {}",
                s.scenario_id
            );
            assert!(s.yield_annotations.as_ref().is_some_and(|y| !y.is_empty()));
        }
    }

    #[test]
    fn straight_high_speed_contract() {
        let scenarios = generate_synthetic(Family::StraightHighSpeed, 1, 3).unwrap();
        let ego = scenarios[0].ego().unwrap();
        let headings: Vec<f64> = ego.states.iter().map(|s| s.heading).collect();
        let base = headings[0];
        let max_dev = headings
            .iter()
            .map(|h| normalize_heading(h - base).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 5f64.to_radians(), "heading deviation {max_dev}");
        let mean_speed: f64 =
            ego.states.iter().map(|s| s.speed()).sum::<f64>() / ego.states.len() as f64;
        assert!(mean_speed > 10.0, "mean speed {mean_speed}");
    }

    #[test]
    fn families_separate_on_contract_statistics() {
        let mut means = Vec::new();
        for family in Family::ALL {
            let scenarios = generate_synthetic(family, 50, 11).unwrap();
            let stats: Vec<EgoStats> =
                scenarios.iter().map(|s| ego_stats(s).unwrap()).collect();
            let k = stats.len() as f64;
            means.push((
                family,
                stats.iter().map(|s| s.net_heading_change).sum::<f64>() / k,
                stats.iter().map(|s| s.abs_heading_change).sum::<f64>() / k,
                stats.iter().map(|s| s.terminal_speed).sum::<f64>() / k,
            ));
        }
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                let (fa, net_a, abs_a, term_a) = means[i];
                let (fb, net_b, abs_b, term_b) = means[j];
                let separated = (net_a - net_b).abs() > NET_HEADING_MARGIN
                    || (abs_a - abs_b).abs() > ABS_HEADING_MARGIN
                    || (term_a - term_b).abs() > TERMINAL_SPEED_MARGIN;
                assert!(
                    separated,
                    "{} vs {} not separated: net {net_a:.2}/{net_b:.2} abs {abs_a:.2}/{abs_b:.2} term {term_a:.2}/{term_b:.2}",
                    fa.name(),
                    fb.name()
                );
            }
        }
    }

    #[test]
    fn unknown_family_name_is_an_error() {
        assert!("zig_zag".parse::<Family>().is_err());
        assert_eq!("overtake".parse::<Family>().unwrap(), Family::Overtake);
    }

    #[test]
    fn count_zero_is_rejected() {
        assert!(generate_synthetic(Family::LeftTurn, 0, 0).is_err());
    }
}
