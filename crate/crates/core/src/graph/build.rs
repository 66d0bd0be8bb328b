//! Scenario -> heterogeneous graph conversion.

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::geom;
use crate::graph::{
    BuilderConfig, EdgeTable, HeteroGraph, O2oSubtype, O2rSubtype, O2R_EDGE_DIM, O2O_EDGE_DIM,
    R2R_EDGE_DIM, TEMPORAL_EDGE_DIM,
};
use crate::scenario::{
    normalize_heading, ObstacleRole, ObstacleState, ObstacleType, RoadType, Scenario, YieldReason,
};

/// Extra slack beyond half the local width for `is_close` edges, meters.
const IS_CLOSE_MARGIN: f64 = 5.0;

/// Component-wise median of all obstacle positions across all timesteps.
/// For even counts the mean of the two middle values is used.
pub fn reference_point(scenario: &Scenario) -> Result<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for o in &scenario.obstacles {
        for s in &o.states {
            xs.push(s.x);
            ys.push(s.y);
        }
    }
    if xs.is_empty() {
        return Err(Error::Graph(format!(
            "{}: no obstacle states",
            scenario.scenario_id
        )));
    }
    Ok((median(&mut xs), median(&mut ys)))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Sinusoidal positional encoding of a timestep:
/// `pe[2i] = sin(t / 10000^(2i/dim))`, `pe[2i+1] = cos(t / 10000^(2i/dim))`.
pub fn sinusoidal_pe(t: u32, dim: usize) -> Vec<f64> {
    assert!(dim % 2 == 0, "pe dim must be even");
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
        let arg = t as f64 / freq;
        out.push(arg.sin());
        out.push(arg.cos());
    }
    out
}

/// Inputs for classifying one obstacle-to-obstacle edge.
pub struct O2oContext<'a> {
    pub src: &'a ObstacleState,
    pub dst: &'a ObstacleState,
    /// Road nodes (by index) the endpoints are `is_on`.
    pub src_on: &'a [u32],
    pub dst_on: &'a [u32],
    /// Yield reason when an annotation says src yields to dst at this t.
    pub yield_reason: Option<YieldReason>,
    pub o2o_radius: f64,
}

/// Subtype precedence: yield annotations, then shared lane, then the
/// no-road-context far-pair rule, then bearing.
pub fn classify_o2o_subtype(ctx: &O2oContext) -> O2oSubtype {
    match ctx.yield_reason {
        Some(YieldReason::Tl) => return O2oSubtype::MustYieldTl,
        Some(YieldReason::Row) => return O2oSubtype::MustYieldRow,
        None => {}
    }
    if ctx.src_on.iter().any(|s| ctx.dst_on.contains(s)) {
        return O2oSubtype::SameLane;
    }
    let dx = ctx.dst.x - ctx.src.x;
    let dy = ctx.dst.y - ctx.src.y;
    let dist = dx.hypot(dy);
    if ctx.src_on.is_empty() && ctx.dst_on.is_empty() && dist > ctx.o2o_radius / 2.0 {
        return O2oSubtype::Other;
    }
    // Bearing of dst in src's heading frame, in (-pi, pi].
    let beta = normalize_heading(dy.atan2(dx) - ctx.src.heading);
    let abs = beta.abs();
    if abs <= std::f64::consts::FRAC_PI_4 {
        O2oSubtype::InFront
    } else if abs >= 3.0 * std::f64::consts::FRAC_PI_4 {
        O2oSubtype::Behind
    } else if beta > 0.0 {
        O2oSubtype::Left
    } else {
        O2oSubtype::Right
    }
}

fn onehot_into(row: &mut [f64], offset: usize, index: usize) {
    row[offset + index] = 1.0;
}

fn obstacle_type_index(t: ObstacleType) -> usize {
    match t {
        ObstacleType::Vehicle => 0,
        ObstacleType::Pedestrian => 1,
        ObstacleType::Cyclist => 2,
        ObstacleType::Other => 3,
    }
}

fn role_index(r: ObstacleRole) -> usize {
    match r {
        ObstacleRole::Static => 0,
        ObstacleRole::Dynamic => 1,
    }
}

fn road_type_index(t: RoadType) -> usize {
    match t {
        RoadType::Lanelet => 0,
        RoadType::Walkway => 1,
        RoadType::Other => 2,
    }
}

/// Rotates a vector into the frame of a heading.
fn into_heading_frame(dx: f64, dy: f64, heading: f64) -> (f64, f64) {
    let (c, s) = (heading.cos(), heading.sin());
    (dx * c + dy * s, -dx * s + dy * c)
}

/// Builds the heterogeneous spatio-temporal graph for a scenario.
///
/// Node order is canonical: obstacle nodes sorted by (obstacle_id, t), road
/// nodes by segment_id; edge enumeration follows node order, so rebuilding
/// a scenario yields identical tables.
pub fn build_graph(scenario: &Scenario, config: &BuilderConfig) -> Result<HeteroGraph> {
    config.validate()?;
    let (ref_x, ref_y) = reference_point(scenario)?;

    // ---- obstacle nodes -------------------------------------------------
    let mut obstacle_order: Vec<usize> = (0..scenario.obstacles.len()).collect();
    obstacle_order.sort_by(|a, b| {
        scenario.obstacles[*a]
            .obstacle_id
            .cmp(&scenario.obstacles[*b].obstacle_id)
    });

    let obs_dim = config.obstacle_feature_dim();
    let mut obs_rows: Vec<f64> = Vec::new();
    let mut obstacle_ids = Vec::new();
    let mut obstacle_ts = Vec::new();
    // (obstacle vec index, t) -> node index
    let mut node_of: HashMap<(usize, u32), u32> = HashMap::new();
    // node index -> index into scenario.obstacles + state ref
    let mut node_state: Vec<(usize, ObstacleState)> = Vec::new();

    for &oi in &obstacle_order {
        let o = &scenario.obstacles[oi];
        for s in &o.states {
            let node = obstacle_ids.len() as u32;
            node_of.insert((oi, s.t), node);
            node_state.push((oi, *s));
            obstacle_ids.push(o.obstacle_id.clone());
            obstacle_ts.push(s.t);

            let mut row = vec![0.0; obs_dim];
            row[0] = s.x - ref_x;
            row[1] = s.y - ref_y;
            row[2] = s.heading.cos();
            row[3] = s.heading.sin();
            row[4] = s.vx;
            row[5] = s.vy;
            row[6] = s.speed();
            row[7] = s.length;
            row[8] = s.width;
            onehot_into(&mut row, 9, obstacle_type_index(o.obstacle_type));
            onehot_into(&mut row, 13, role_index(o.role));
            row[15..15 + config.pe_dim].copy_from_slice(&sinusoidal_pe(s.t, config.pe_dim));
            obs_rows.extend_from_slice(&row);
        }
    }
    let n_obs = obstacle_ids.len();
    if n_obs == 0 {
        return Err(Error::Graph(format!(
            "{}: no obstacle states",
            scenario.scenario_id
        )));
    }
    let obstacle_features = Array2::from_shape_vec((n_obs, obs_dim), obs_rows)
        .expect("row count matches");

    // ---- road nodes ------------------------------------------------------
    let mut bbox = geom::Aabb {
        min: (f64::INFINITY, f64::INFINITY),
        max: (f64::NEG_INFINITY, f64::NEG_INFINITY),
    };
    for (_, s) in &node_state {
        bbox.min.0 = bbox.min.0.min(s.x);
        bbox.min.1 = bbox.min.1.min(s.y);
        bbox.max.0 = bbox.max.0.max(s.x);
        bbox.max.1 = bbox.max.1.max(s.y);
    }
    let search_box = bbox.dilate(config.road_buffer);

    let mut segment_order: Vec<usize> = (0..scenario.road_segments.len()).collect();
    segment_order.sort_by(|a, b| {
        scenario.road_segments[*a]
            .segment_id
            .cmp(&scenario.road_segments[*b].segment_id)
    });

    let road_dim = config.road_feature_dim();
    let mut road_rows: Vec<f64> = Vec::new();
    let mut road_ids = Vec::new();
    // segment vec index -> road node index (only for included segments)
    let mut road_node_of: HashMap<usize, u32> = HashMap::new();
    let mut included_segments: Vec<usize> = Vec::new();

    for &si in &segment_order {
        let seg = &scenario.road_segments[si];
        if !geom::polyline_intersects_aabb(&seg.centerline, &search_box) {
            continue;
        }
        let node = road_ids.len() as u32;
        road_node_of.insert(si, node);
        included_segments.push(si);
        road_ids.push(seg.segment_id.clone());

        let (points, widths) =
            geom::resample_polyline(&seg.centerline, &seg.widths, config.centerline_points);
        let mut row = vec![0.0; road_dim];
        for (k, p) in points.iter().enumerate() {
            row[2 * k] = p.0 - ref_x;
            row[2 * k + 1] = p.1 - ref_y;
        }
        let woff = 2 * config.centerline_points;
        row[woff..woff + config.centerline_points].copy_from_slice(&widths);
        onehot_into(
            &mut row,
            3 * config.centerline_points,
            road_type_index(seg.road_type),
        );
        road_rows.extend_from_slice(&row);
    }
    let n_road = road_ids.len();
    let road_features =
        Array2::from_shape_vec((n_road, road_dim), road_rows).expect("row count matches");

    // ---- obstacle-to-road edges ------------------------------------------
    let mut o2r = EdgeTable::empty(O2R_EDGE_DIM);
    let mut o2r_feats: Vec<f64> = Vec::new();
    // Road nodes each obstacle node is is_on; feeds same_lane classification.
    let mut is_on_sets: Vec<Vec<u32>> = vec![Vec::new(); n_obs];

    for (node, (_, state)) in node_state.iter().enumerate() {
        for &si in &included_segments {
            let seg = &scenario.road_segments[si];
            let road_node = road_node_of[&si];
            let proj = geom::project_to_polyline((state.x, state.y), &seg.centerline, &seg.widths);
            let half_width = proj.value / 2.0;
            let subtype = if proj.distance < half_width {
                Some(O2rSubtype::IsOn)
            } else if proj.distance < half_width + IS_CLOSE_MARGIN {
                Some(O2rSubtype::IsClose)
            } else {
                None
            };
            let Some(subtype) = subtype else { continue };
            if subtype == O2rSubtype::IsOn {
                is_on_sets[node].push(road_node);
            }
            let total_len = geom::cumulative_arclengths(&seg.centerline)
                .last()
                .copied()
                .unwrap_or(0.0);
            let frac = if total_len > 1e-12 {
                (proj.arclength / total_len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            o2r.src.push(node as u32);
            o2r.dst.push(road_node);
            o2r.subtypes.push(subtype.index() as u8);
            let mut row = [0.0; O2R_EDGE_DIM];
            row[0] = proj.signed_lateral;
            row[1] = frac;
            onehot_into(&mut row, 2, subtype.index());
            o2r_feats.extend_from_slice(&row);
        }
    }
    o2r.features =
        Array2::from_shape_vec((o2r.src.len(), O2R_EDGE_DIM), o2r_feats).expect("rows match");

    // ---- obstacle-to-obstacle edges ---------------------------------------
    // Yield annotations indexed by (t, yielding id, yielded-to id); traffic
    // light takes precedence when both reasons are annotated.
    let mut yields: HashMap<(u32, &str, &str), YieldReason> = HashMap::new();
    if let Some(anns) = &scenario.yield_annotations {
        for a in anns {
            let key = (a.t, a.yielding.as_str(), a.yielded_to.as_str());
            match yields.get(&key) {
                Some(YieldReason::Tl) => {}
                _ => {
                    yields.insert(key, a.reason);
                }
            }
        }
    }

    let max_t = scenario.num_timesteps;
    let mut nodes_at_t: Vec<Vec<u32>> = vec![Vec::new(); max_t as usize];
    for (node, (_, s)) in node_state.iter().enumerate() {
        nodes_at_t[s.t as usize].push(node as u32);
    }

    let mut o2o = EdgeTable::empty(O2O_EDGE_DIM);
    let mut o2o_feats: Vec<f64> = Vec::new();
    for nodes in &nodes_at_t {
        for &a in nodes {
            for &b in nodes {
                if a == b {
                    continue;
                }
                let (oa, sa) = &node_state[a as usize];
                let (ob, sb) = &node_state[b as usize];
                let dx = sb.x - sa.x;
                let dy = sb.y - sa.y;
                let dist = dx.hypot(dy);
                if dist > config.o2o_radius {
                    continue;
                }
                let yield_reason = yields
                    .get(&(
                        sa.t,
                        scenario.obstacles[*oa].obstacle_id.as_str(),
                        scenario.obstacles[*ob].obstacle_id.as_str(),
                    ))
                    .copied();
                let subtype = classify_o2o_subtype(&O2oContext {
                    src: sa,
                    dst: sb,
                    src_on: &is_on_sets[a as usize],
                    dst_on: &is_on_sets[b as usize],
                    yield_reason,
                    o2o_radius: config.o2o_radius,
                });
                let (rx, ry) = into_heading_frame(dx, dy, sa.heading);
                let (rvx, rvy) = into_heading_frame(sb.vx - sa.vx, sb.vy - sa.vy, sa.heading);
                let dh = normalize_heading(sb.heading - sa.heading);
                o2o.src.push(a);
                o2o.dst.push(b);
                o2o.subtypes.push(subtype.index() as u8);
                let mut row = [0.0; O2O_EDGE_DIM];
                row[0] = rx;
                row[1] = ry;
                row[2] = rvx;
                row[3] = rvy;
                row[4] = dist;
                row[5] = dh.cos();
                row[6] = dh.sin();
                onehot_into(&mut row, 7, subtype.index());
                o2o_feats.extend_from_slice(&row);
            }
        }
    }
    o2o.features =
        Array2::from_shape_vec((o2o.src.len(), O2O_EDGE_DIM), o2o_feats).expect("rows match");

    // ---- road-to-road edges -----------------------------------------------
    let mut r2r = EdgeTable::empty(R2R_EDGE_DIM);
    let mut r2r_feats: Vec<f64> = Vec::new();
    let midpoints: HashMap<usize, (f64, f64)> = included_segments
        .iter()
        .map(|&si| (si, geom::polyline_midpoint(&scenario.road_segments[si].centerline)))
        .collect();

    let mut declared: HashMap<(u32, u32), Vec<crate::scenario::RoadRelation>> = HashMap::new();
    for &si in &included_segments {
        let seg = &scenario.road_segments[si];
        let src_node = road_node_of[&si];
        for conn in &seg.connections {
            let Some(ti) = scenario
                .road_segments
                .iter()
                .position(|r| r.segment_id == conn.target)
            else {
                continue;
            };
            let Some(&dst_node) = road_node_of.get(&ti) else {
                continue;
            };
            declared
                .entry((src_node, dst_node))
                .or_default()
                .push(conn.relation);
        }
    }
    let mut push_r2r = |src_node: u32, dst_node: u32, rel_index: usize,
                        feats: &mut Vec<f64>, table: &mut EdgeTable,
                        mids: &HashMap<usize, (f64, f64)>,
                        segs: &[usize]| {
        let src_mid = mids[&segs[src_node as usize]];
        let dst_mid = mids[&segs[dst_node as usize]];
        table.src.push(src_node);
        table.dst.push(dst_node);
        table.subtypes.push(rel_index as u8);
        let mut row = [0.0; R2R_EDGE_DIM];
        row[0] = dst_mid.0 - src_mid.0;
        row[1] = dst_mid.1 - src_mid.1;
        onehot_into(&mut row, 2, rel_index);
        feats.extend_from_slice(&row);
    };
    let intersecting_idx = crate::scenario::RoadRelation::Intersecting.index();
    for a in 0..n_road as u32 {
        for b in 0..n_road as u32 {
            if a == b {
                continue;
            }
            if let Some(rels) = declared.get(&(a, b)) {
                for rel in rels {
                    push_r2r(a, b, rel.index(), &mut r2r_feats, &mut r2r, &midpoints,
                             &included_segments);
                }
            } else {
                // Geometric fallback: unannotated crossing centerlines.
                let sa = &scenario.road_segments[included_segments[a as usize]];
                let sb = &scenario.road_segments[included_segments[b as usize]];
                if geom::polylines_cross(&sa.centerline, &sb.centerline) {
                    push_r2r(a, b, intersecting_idx, &mut r2r_feats, &mut r2r, &midpoints,
                             &included_segments);
                }
            }
        }
    }
    r2r.features =
        Array2::from_shape_vec((r2r.src.len(), R2R_EDGE_DIM), r2r_feats).expect("rows match");

    // ---- temporal edges ----------------------------------------------------
    let mut temporal = EdgeTable::empty(TEMPORAL_EDGE_DIM);
    let mut temporal_feats: Vec<f64> = Vec::new();
    for &oi in &obstacle_order {
        let o = &scenario.obstacles[oi];
        for s in &o.states {
            let dst_node = node_of[&(oi, s.t)];
            for delta in 1..=config.temporal_reach.min(s.t) {
                let t_src = s.t - delta;
                let Some(&src_node) = node_of.get(&(oi, t_src)) else {
                    continue;
                };
                let src_state = node_state[src_node as usize].1;
                temporal.src.push(src_node);
                temporal.dst.push(dst_node);
                temporal_feats.extend_from_slice(&[
                    delta as f64 / config.temporal_reach as f64,
                    s.x - src_state.x,
                    s.y - src_state.y,
                ]);
            }
        }
    }
    temporal.features =
        Array2::from_shape_vec((temporal.src.len(), TEMPORAL_EDGE_DIM), temporal_feats)
            .expect("rows match");

    let graph = HeteroGraph {
        scenario_id: scenario.scenario_id.clone(),
        reference_point: (ref_x, ref_y),
        config: config.clone(),
        obstacle_features,
        obstacle_ids,
        obstacle_ts,
        road_features,
        road_ids,
        o2o,
        r2r,
        o2r,
        temporal,
    };
    graph.check_invariants()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::synth::{generate_synthetic, Family};
    use crate::scenario::Obstacle;
    use std::collections::BTreeSet;

    fn state(t: u32, x: f64, y: f64, heading: f64, vx: f64, vy: f64) -> ObstacleState {
        ObstacleState {
            t,
            x,
            y,
            heading,
            vx,
            vy,
            length: 4.5,
            width: 1.9,
        }
    }

    fn two_obstacle_scenario() -> Scenario {
        let a = Obstacle {
            obstacle_id: "a".into(),
            obstacle_type: ObstacleType::Vehicle,
            role: ObstacleRole::Dynamic,
            is_ego: true,
            states: (0..3).map(|t| state(t, t as f64 * 5.0, 0.0, 0.0, 10.0, 0.0)).collect(),
        };
        let b = Obstacle {
            obstacle_id: "b".into(),
            obstacle_type: ObstacleType::Vehicle,
            role: ObstacleRole::Dynamic,
            is_ego: false,
            states: (0..3).map(|t| state(t, t as f64 * 5.0 + 12.0, 2.0, 0.0, 10.0, 0.0)).collect(),
        };
        Scenario {
            scenario_id: "two-obstacles".into(),
            dt: 0.5,
            num_timesteps: 3,
            labels: BTreeSet::new(),
            obstacles: vec![a, b],
            road_segments: vec![],
            yield_annotations: None,
        }
    }

    #[test]
    fn reference_point_is_componentwise_median() {
        let mut s = two_obstacle_scenario();
        s.obstacles[1].states = vec![state(0, 2.0, 0.0, 0.0, 0.0, 0.0), state(1, 10.0, 0.0, 0.0, 0.0, 0.0)];
        s.obstacles[0].states = vec![state(0, 0.0, 0.0, 0.0, 0.0, 0.0)];
        let (x, y) = reference_point(&s).unwrap();
        assert_eq!((x, y), (2.0, 0.0));
    }

    #[test]
    fn reference_point_even_count_uses_middle_mean() {
        let mut s = two_obstacle_scenario();
        s.obstacles[0].states = vec![state(0, 0.0, 1.0, 0.0, 0.0, 0.0)];
        s.obstacles[1].states = vec![state(0, 10.0, 3.0, 0.0, 0.0, 0.0)];
        let (x, y) = reference_point(&s).unwrap();
        assert_eq!(x, 5.0);
        assert_eq!(y, 2.0);
    }

    #[test]
    fn reference_point_shifts_with_translation() {
        let s = two_obstacle_scenario();
        let (x0, y0) = reference_point(&s).unwrap();
        let mut shifted = s.clone();
        for o in &mut shifted.obstacles {
            for st in &mut o.states {
                st.x += 100.0;
                st.y += -40.0;
            }
        }
        let (x1, y1) = reference_point(&shifted).unwrap();
        assert_eq!((x1, y1), (x0 + 100.0, y0 - 40.0));
    }

    #[test]
    fn pe_at_zero_alternates_sin_cos() {
        let pe = sinusoidal_pe(0, 8);
        assert_eq!(pe, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pe_in_unit_range_and_matches_direct_formula() {
        for t in [0u32, 1, 7, 35, 1000] {
            let pe = sinusoidal_pe(t, 16);
            assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
        // Independent scalar recomputation at t=1, dim=4.
        let pe = sinusoidal_pe(1, 4);
        let expected = [
            (1.0f64).sin(),
            (1.0f64).cos(),
            (1.0 / 10000f64.powf(0.5)).sin(),
            (1.0 / 10000f64.powf(0.5)).cos(),
        ];
        for (a, b) in pe.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn subtype_ahead_is_in_front() {
        let src = state(0, 0.0, 0.0, 0.0, 5.0, 0.0);
        let dst = state(0, 10.0, 0.0, 0.0, 5.0, 0.0);
        let got = classify_o2o_subtype(&O2oContext {
            src: &src,
            dst: &dst,
            src_on: &[0],
            dst_on: &[1],
            yield_reason: None,
            o2o_radius: 50.0,
        });
        assert_eq!(got, O2oSubtype::InFront);
    }

    #[test]
    fn subtype_yield_annotation_beats_bearing() {
        let src = state(0, 0.0, 0.0, 0.0, 5.0, 0.0);
        let dst = state(0, -10.0, 0.0, 0.0, 5.0, 0.0); // directly behind
        let got = classify_o2o_subtype(&O2oContext {
            src: &src,
            dst: &dst,
            src_on: &[],
            dst_on: &[],
            yield_reason: Some(YieldReason::Tl),
            o2o_radius: 50.0,
        });
        assert_eq!(got, O2oSubtype::MustYieldTl);
    }

    #[test]
    fn subtype_bearing_grid_matches_piecewise_definition() {
        // Sweep bearings over a 1 degree grid and compare against a direct
        // evaluation of the piecewise rule, including the 90 degree boundary.
        let heading = 0.7;
        let src = state(0, 0.0, 0.0, heading, 1.0, 0.0);
        for deg in -179..=180 {
            let beta = (deg as f64).to_radians();
            let r = 10.0; // below o2o_radius/2 so the bearing branch applies
            let dst = state(
                0,
                r * (heading + beta).cos(),
                r * (heading + beta).sin(),
                0.3,
                0.0,
                0.0,
            );
            let got = classify_o2o_subtype(&O2oContext {
                src: &src,
                dst: &dst,
                src_on: &[],
                dst_on: &[],
                yield_reason: None,
                o2o_radius: 50.0,
            });
            let abs = beta.abs();
            let expected = if abs <= 45f64.to_radians() + 1e-9 {
                O2oSubtype::InFront
            } else if abs >= 135f64.to_radians() - 1e-9 {
                O2oSubtype::Behind
            } else if beta > 0.0 {
                O2oSubtype::Left
            } else {
                O2oSubtype::Right
            };
            assert_eq!(got, expected, "bearing {deg} deg");
        }
    }

    #[test]
    fn subtype_exact_90_degrees_is_left() {
        let src = state(0, 0.0, 0.0, 0.0, 1.0, 0.0);
        let dst = state(0, 0.0, 8.0, 0.0, 0.0, 0.0);
        let got = classify_o2o_subtype(&O2oContext {
            src: &src,
            dst: &dst,
            src_on: &[],
            dst_on: &[],
            yield_reason: None,
            o2o_radius: 50.0,
        });
        assert_eq!(got, O2oSubtype::Left);
    }

    #[test]
    fn hand_counted_small_graph() {
        // 2 dynamic obstacles, 3 timesteps, within radius:
        // 6 obstacle nodes, 2 o2o edges per timestep, temporal edges
        // t=1 -> 1 and t=2 -> 2 per obstacle.
        let s = two_obstacle_scenario();
        let g = build_graph(&s, &BuilderConfig::default()).unwrap();
        assert_eq!(g.n_obstacle_nodes(), 6);
        assert_eq!(g.o2o.len(), 6);
        assert_eq!(g.temporal.len(), 6);
        assert_eq!(g.n_road_nodes(), 0);
        assert!(g.r2r.is_empty() && g.o2r.is_empty());
        g.check_onehot_sums().unwrap();
    }

    #[test]
    fn temporal_edge_count_matches_reach_formula() {
        for family in [Family::LeftTurn, Family::Overtake] {
            let s = generate_synthetic(family, 1, 5).unwrap().pop().unwrap();
            let config = BuilderConfig::default();
            let g = build_graph(&s, &config).unwrap();
            let expected: u64 = g
                .obstacle_ts
                .iter()
                .map(|t| (*t).min(config.temporal_reach) as u64)
                .sum();
            assert_eq!(g.temporal.len() as u64, expected);
        }
    }

    #[test]
    fn rebuild_is_identical() {
        let s = generate_synthetic(Family::StopAtLight, 1, 8).unwrap().pop().unwrap();
        let config = BuilderConfig::default();
        let a = build_graph(&s, &config).unwrap();
        let b = build_graph(&s, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn obstacle_nodes_are_sorted_canonically() {
        let s = generate_synthetic(Family::StraightHighSpeed, 1, 4).unwrap().pop().unwrap();
        let g = build_graph(&s, &BuilderConfig::default()).unwrap();
        for i in 1..g.n_obstacle_nodes() {
            let key_prev = (&g.obstacle_ids[i - 1], g.obstacle_ts[i - 1]);
            let key_here = (&g.obstacle_ids[i], g.obstacle_ts[i]);
            assert!(key_prev < key_here);
        }
        for i in 1..g.n_road_nodes() {
            assert!(g.road_ids[i - 1] < g.road_ids[i]);
        }
    }

    #[test]
    fn off_road_scenario_builds_with_empty_road_tables() {
        let s = two_obstacle_scenario();
        let g = build_graph(&s, &BuilderConfig::default()).unwrap();
        assert_eq!(g.n_road_nodes(), 0);
        assert_eq!(g.road_features.nrows(), 0);
        g.check_invariants().unwrap();
    }

    #[test]
    fn is_on_and_is_close_are_mutually_exclusive() {
        let s = generate_synthetic(Family::PedestrianCrossing, 3, 6).unwrap();
        for sc in &s {
            let g = build_graph(sc, &BuilderConfig::default()).unwrap();
            let mut seen = std::collections::HashSet::new();
            for i in 0..g.o2r.len() {
                assert!(
                    seen.insert((g.o2r.src[i], g.o2r.dst[i])),
                    "duplicate obstacle/road pair in o2r"
                );
            }
        }
    }

    #[test]
    fn translation_leaves_features_nearly_identical() {
        let scenarios = generate_synthetic(Family::LeftTurn, 3, 21).unwrap();
        let config = BuilderConfig::default();
        for s in &scenarios {
            let g0 = build_graph(s, &config).unwrap();
            let mut shifted = s.clone();
            for o in &mut shifted.obstacles {
                for st in &mut o.states {
                    st.x += 500.0;
                    st.y += 500.0;
                }
            }
            for r in &mut shifted.road_segments {
                for p in &mut r.centerline {
                    p.0 += 500.0;
                    p.1 += 500.0;
                }
            }
            let g1 = build_graph(&shifted, &config).unwrap();
            assert_eq!(g0.obstacle_ids, g1.obstacle_ids);
            assert_eq!(g0.o2o.src, g1.o2o.src);
            assert_eq!(g0.o2o.subtypes, g1.o2o.subtypes);
            let max_diff = (&g0.obstacle_features - &g1.obstacle_features)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_diff < 1e-9, "obstacle features moved by {max_diff}");
            let road_diff = (&g0.road_features - &g1.road_features)
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(road_diff < 1e-9, "road features moved by {road_diff}");
        }
    }

    #[test]
    fn translation_with_dyadic_inputs_is_bit_exact() {
        // Coordinates that are exactly representable keep the subtraction
        // exact, so the graphs match bit for bit.
        let mut s = two_obstacle_scenario();
        for o in &mut s.obstacles {
            for st in &mut o.states {
                st.x = st.x.round(); // integers
                st.y = st.y.round();
            }
        }
        let config = BuilderConfig::default();
        let g0 = build_graph(&s, &config).unwrap();
        let mut shifted = s.clone();
        for o in &mut shifted.obstacles {
            for st in &mut o.states {
                st.x += 512.0;
                st.y += 512.0;
            }
        }
        let g1 = build_graph(&shifted, &config).unwrap();
        assert_eq!(g0.obstacle_features, g1.obstacle_features);
        assert_eq!(g0.o2o, g1.o2o);
        assert_eq!(g0.temporal, g1.temporal);
    }

    #[test]
    fn generated_graphs_pass_invariants_and_onehot_checks() {
        for family in Family::ALL {
            let scenarios = generate_synthetic(family, 4, 77).unwrap();
            for s in &scenarios {
                let g = build_graph(s, &BuilderConfig::default()).unwrap();
                g.check_invariants().unwrap();
                g.check_onehot_sums().unwrap();
                assert!(g.n_road_nodes() > 0, "{} should include roads", s.scenario_id);
            }
        }
    }
}
