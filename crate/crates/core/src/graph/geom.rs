//! Small 2-D geometry helpers for polyline roads.

/// Cumulative arclength at every polyline vertex (starts at 0).
pub fn cumulative_arclengths(points: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in points.windows(2) {
        acc += (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        out.push(acc);
    }
    out
}

/// Point and interpolated scalar value at arclength `s` along a polyline.
pub fn point_at_arclength(
    points: &[(f64, f64)],
    cum: &[f64],
    values: &[f64],
    s: f64,
) -> ((f64, f64), f64) {
    let total = *cum.last().unwrap();
    let s = s.clamp(0.0, total);
    // Find the segment containing s.
    let mut i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    if i >= points.len() - 1 {
        i = points.len() - 2;
    }
    let seg_len = cum[i + 1] - cum[i];
    let u = if seg_len > 1e-12 { (s - cum[i]) / seg_len } else { 0.0 };
    let p = (
        points[i].0 + (points[i + 1].0 - points[i].0) * u,
        points[i].1 + (points[i + 1].1 - points[i].1) * u,
    );
    let v = values[i] + (values[i + 1] - values[i]) * u;
    (p, v)
}

/// Resamples a polyline (with per-vertex widths) to `k` points equally
/// spaced in arclength.
pub fn resample_polyline(
    points: &[(f64, f64)],
    widths: &[f64],
    k: usize,
) -> (Vec<(f64, f64)>, Vec<f64>) {
    let cum = cumulative_arclengths(points);
    let total = *cum.last().unwrap();
    let mut ps = Vec::with_capacity(k);
    let mut ws = Vec::with_capacity(k);
    for i in 0..k {
        let s = if k > 1 { total * i as f64 / (k - 1) as f64 } else { 0.0 };
        let (p, w) = point_at_arclength(points, &cum, widths, s);
        ps.push(p);
        ws.push(w);
    }
    (ps, ws)
}

/// Projection of a point onto a polyline.
#[derive(Debug, Clone, Copy)]
pub struct PolylineProjection {
    /// Unsigned distance to the closest point on the polyline.
    pub distance: f64,
    /// Signed lateral offset: positive when the point lies left of the
    /// polyline direction at the projection.
    pub signed_lateral: f64,
    /// Arclength position of the projection.
    pub arclength: f64,
    /// Interpolated per-vertex value (width) at the projection.
    pub value: f64,
}

pub fn project_to_polyline(
    p: (f64, f64),
    points: &[(f64, f64)],
    values: &[f64],
) -> PolylineProjection {
    let cum = cumulative_arclengths(points);
    let mut best = PolylineProjection {
        distance: f64::INFINITY,
        signed_lateral: 0.0,
        arclength: 0.0,
        value: values[0],
    };
    for i in 0..points.len() - 1 {
        let a = points[i];
        let b = points[i + 1];
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let u = if len2 > 1e-18 {
            (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = (a.0 + dx * u, a.1 + dy * u);
        let d = (p.0 - q.0).hypot(p.1 - q.1);
        if d < best.distance {
            let cross = dx * (p.1 - a.1) - dy * (p.0 - a.0);
            let side = if cross >= 0.0 { 1.0 } else { -1.0 };
            best = PolylineProjection {
                distance: d,
                signed_lateral: side * d,
                arclength: cum[i] + (cum[i + 1] - cum[i]) * u,
                value: values[i] + (values[i + 1] - values[i]) * u,
            };
        }
    }
    best
}

/// Axis-aligned box given by min/max corners.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl Aabb {
    pub fn dilate(&self, r: f64) -> Aabb {
        Aabb {
            min: (self.min.0 - r, self.min.1 - r),
            max: (self.max.0 + r, self.max.1 + r),
        }
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= self.min.0 && p.0 <= self.max.0 && p.1 >= self.min.1 && p.1 <= self.max.1
    }
}

/// Liang-Barsky style segment vs. box test.
pub fn segment_intersects_aabb(a: (f64, f64), b: (f64, f64), rect: &Aabb) -> bool {
    if rect.contains(a) || rect.contains(b) {
        return true;
    }
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.0 - rect.min.0),
        (dx, rect.max.0 - a.0),
        (-dy, a.1 - rect.min.1),
        (dy, rect.max.1 - a.1),
    ] {
        if p.abs() < 1e-18 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

pub fn polyline_intersects_aabb(points: &[(f64, f64)], rect: &Aabb) -> bool {
    points
        .windows(2)
        .any(|w| segment_intersects_aabb(w[0], w[1], rect))
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Whether two polylines properly cross each other anywhere.
pub fn polylines_cross(a: &[(f64, f64)], b: &[(f64, f64)]) -> bool {
    for wa in a.windows(2) {
        for wb in b.windows(2) {
            if segments_cross(wa[0], wa[1], wb[0], wb[1]) {
                return true;
            }
        }
    }
    false
}

/// Arclength midpoint of a polyline.
pub fn polyline_midpoint(points: &[(f64, f64)]) -> (f64, f64) {
    let cum = cumulative_arclengths(points);
    let zeros = vec![0.0; points.len()];
    let (p, _) = point_at_arclength(points, &cum, &zeros, cum.last().unwrap() / 2.0);
    p
}
