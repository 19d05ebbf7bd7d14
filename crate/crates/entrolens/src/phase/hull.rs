//! Incremental 3D convex hull (quickhull) and its volume.
//!
//! The hull is grown from an initial tetrahedron by repeatedly inserting
//! the farthest outside point, removing the faces it sees, and re-covering
//! the horizon. The volume is the fan decomposition around the hull
//! centroid: outward-oriented faces contribute positive tetrahedron
//! volumes, so the sum is the enclosed volume.
//!
//! Inputs with fewer than four points, or whose points are affinely
//! dependent (identical, collinear, coplanar) within tolerance, yield a
//! degenerate result with volume zero rather than an error — a flat phase
//! trajectory is a legitimate, reportable outcome.

use crate::{Error, Result};

/// A computed hull: volume, the vertices that support it (in input order),
/// and outward-oriented triangular faces indexing into `vertices`.
#[derive(Debug, Clone, PartialEq)]
pub struct HullGeometry {
    pub volume: f64,
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub degenerate: bool,
}

impl HullGeometry {
    fn degenerate() -> Self {
        Self {
            volume: 0.0,
            vertices: Vec::new(),
            faces: Vec::new(),
            degenerate: true,
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: [f64; 3],
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(points: &[[f64; 3]], a: usize, b: usize, c: usize) -> Self {
        let n = cross(sub(points[b], points[a]), sub(points[c], points[a]));
        let len = norm(n);
        let normal = if len > 0.0 {
            [n[0] / len, n[1] / len, n[2] / len]
        } else {
            [0.0; 3]
        };
        Self {
            v: [a, b, c],
            normal,
            offset: dot(normal, points[a]),
            outside: Vec::new(),
            alive: true,
        }
    }

    fn dist(&self, p: [f64; 3]) -> f64 {
        dot(self.normal, p) - self.offset
    }
}

/// Computes the convex hull and its volume.
///
/// Properties the tests pin down: exact volumes on axis-aligned fixtures,
/// containment of every input point within every facet half-space,
/// monotonicity under point addition, and invariance under rotation and
/// translation (volume scales as `s^3` under scaling by `s`).
// Index loops are deliberate here: the indices are point/face identities
// (conflict queues, horizon bookkeeping), not mere element access.
#[allow(clippy::needless_range_loop)]
pub fn convex_hull_volume(points: &[[f64; 3]]) -> Result<HullGeometry> {
    for p in points {
        for &value in p {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    what: "hull point coordinate",
                    value,
                });
            }
        }
    }
    if points.len() < 4 {
        return Ok(HullGeometry::degenerate());
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for axis in 0..3 {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    let span = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    if span <= 0.0 {
        return Ok(HullGeometry::degenerate());
    }
    let tol = span * 1e-10;

    let Some(simplex) = initial_simplex(points, tol) else {
        return Ok(HullGeometry::degenerate());
    };
    let [a, b, c, d] = simplex;

    // With signed_vol(a, b, c, d) > 0 these four windings all face outward.
    let mut faces = vec![
        Face::new(points, a, c, b),
        Face::new(points, a, b, d),
        Face::new(points, b, c, d),
        Face::new(points, a, d, c),
    ];

    let mut queue: Vec<usize> = Vec::new();
    for idx in 0..points.len() {
        if idx == a || idx == b || idx == c || idx == d {
            continue;
        }
        for (fi, face) in faces.iter_mut().enumerate() {
            if face.dist(points[idx]) > tol {
                face.outside.push(idx);
                if !queue.contains(&fi) {
                    queue.push(fi);
                }
                break;
            }
        }
    }

    while let Some(fi) = queue.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        // Farthest outside point of this face; lower index on ties.
        let mut best = faces[fi].outside[0];
        let mut best_d = faces[fi].dist(points[best]);
        for &q in &faces[fi].outside[1..] {
            let dq = faces[fi].dist(points[q]);
            if dq > best_d || (dq == best_d && q < best) {
                best = q;
                best_d = dq;
            }
        }
        let apex = best;

        let visible: Vec<usize> = (0..faces.len())
            .filter(|&i| faces[i].alive && faces[i].dist(points[apex]) > tol)
            .collect();
        debug_assert!(visible.contains(&fi));

        let mut edge_set = std::collections::BTreeSet::new();
        for &vi in &visible {
            let [u, v, w] = faces[vi].v;
            edge_set.insert((u, v));
            edge_set.insert((v, w));
            edge_set.insert((w, u));
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        let mut orphans: Vec<usize> = Vec::new();
        for &vi in &visible {
            let [u, v, w] = faces[vi].v;
            for (x, y) in [(u, v), (v, w), (w, u)] {
                if !edge_set.contains(&(y, x)) {
                    horizon.push((x, y));
                }
            }
            for &q in &faces[vi].outside {
                if q != apex {
                    orphans.push(q);
                }
            }
            faces[vi].alive = false;
            faces[vi].outside.clear();
        }

        let first_new = faces.len();
        for &(x, y) in &horizon {
            faces.push(Face::new(points, x, y, apex));
        }
        for q in orphans {
            for fi in first_new..faces.len() {
                if faces[fi].dist(points[q]) > tol {
                    faces[fi].outside.push(q);
                    break;
                }
            }
        }
        for fi in first_new..faces.len() {
            if !faces[fi].outside.is_empty() {
                queue.push(fi);
            }
        }
    }

    let alive: Vec<&Face> = faces.iter().filter(|f| f.alive).collect();
    let mut ids = std::collections::BTreeSet::new();
    for f in &alive {
        ids.extend(f.v);
    }
    let ids: Vec<usize> = ids.into_iter().collect();
    let centroid = {
        let mut g = [0.0f64; 3];
        for &i in &ids {
            for axis in 0..3 {
                g[axis] += points[i][axis];
            }
        }
        for axis in &mut g {
            *axis /= ids.len() as f64;
        }
        g
    };
    let mut volume = 0.0;
    for f in &alive {
        let [pa, pb, pc] = [points[f.v[0]], points[f.v[1]], points[f.v[2]]];
        volume += dot(sub(pa, centroid), cross(sub(pb, pa), sub(pc, pa))) / 6.0;
    }
    let remap: std::collections::BTreeMap<usize, usize> =
        ids.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    Ok(HullGeometry {
        volume: volume.max(0.0),
        vertices: ids.iter().map(|&i| points[i]).collect(),
        faces: alive
            .iter()
            .map(|f| [remap[&f.v[0]], remap[&f.v[1]], remap[&f.v[2]]])
            .collect(),
        degenerate: false,
    })
}

/// Four affinely independent points, ordered so their signed volume is
/// positive; `None` when the set is degenerate within tolerance.
fn initial_simplex(points: &[[f64; 3]], tol: f64) -> Option<[usize; 4]> {
    let mut candidates = Vec::new();
    for axis in 0..3 {
        let lo = (0..points.len()).min_by(|&i, &j| {
            points[i][axis].partial_cmp(&points[j][axis]).unwrap().then(i.cmp(&j))
        })?;
        let hi = (0..points.len()).max_by(|&i, &j| {
            points[i][axis]
                .partial_cmp(&points[j][axis])
                .unwrap()
                .then(j.cmp(&i))
        })?;
        candidates.push(lo);
        candidates.push(hi);
    }
    candidates.sort_unstable();
    candidates.dedup();

    let mut p0 = candidates[0];
    let mut p1 = candidates[0];
    let mut best = -1.0;
    for (ci, &i) in candidates.iter().enumerate() {
        for &j in &candidates[ci + 1..] {
            let d = dot(sub(points[j], points[i]), sub(points[j], points[i]));
            if d > best {
                best = d;
                p0 = i;
                p1 = j;
            }
        }
    }
    if best.sqrt() <= tol {
        return None;
    }

    let u = sub(points[p1], points[p0]);
    let ulen = norm(u);
    let mut p2 = 0;
    let mut best = -1.0;
    for i in 0..points.len() {
        let d = norm(cross(sub(points[i], points[p0]), u)) / ulen;
        if d > best {
            best = d;
            p2 = i;
        }
    }
    if best <= tol {
        return None;
    }

    let n = cross(sub(points[p1], points[p0]), sub(points[p2], points[p0]));
    let nlen = norm(n);
    let nhat = [n[0] / nlen, n[1] / nlen, n[2] / nlen];
    let mut p3 = 0;
    let mut best = 0.0;
    let mut best_abs = -1.0;
    for i in 0..points.len() {
        let h = dot(nhat, sub(points[i], points[p0]));
        if h.abs() > best_abs {
            best_abs = h.abs();
            best = h;
            p3 = i;
        }
    }
    if best_abs <= tol {
        return None;
    }
    if best < 0.0 {
        // Flip the base so the apex lies on the positive side.
        std::mem::swap(&mut p0, &mut p1);
    }
    Some([p0, p1, p2, p3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> Vec<[f64; 3]> {
        let mut pts = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    pts.push([x, y, z]);
                }
            }
        }
        pts
    }

    #[test]
    fn unit_cube_has_volume_one_exactly() {
        let hull = convex_hull_volume(&unit_cube()).unwrap();
        assert!(!hull.degenerate);
        assert!((hull.volume - 1.0).abs() <= 1e-12, "volume {}", hull.volume);
        assert_eq!(hull.vertices.len(), 8);
        assert_eq!(hull.faces.len(), 12);
    }

    #[test]
    fn unit_tetrahedron_has_volume_one_sixth() {
        let pts = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let hull = convex_hull_volume(&pts).unwrap();
        assert!((hull.volume - 1.0 / 6.0).abs() <= 1e-12);
        assert_eq!(hull.vertices.len(), 4);
        assert_eq!(hull.faces.len(), 4);
    }

    #[test]
    fn interior_points_do_not_change_the_hull() {
        let mut pts = unit_cube();
        pts.push([0.5, 0.5, 0.5]);
        pts.push([0.25, 0.75, 0.5]);
        pts.push([0.9, 0.1, 0.2]);
        let hull = convex_hull_volume(&pts).unwrap();
        assert!((hull.volume - 1.0).abs() <= 1e-12);
        assert_eq!(hull.vertices.len(), 8);
    }

    #[test]
    fn fewer_than_four_points_is_degenerate() {
        for n in 0..4 {
            let pts: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
            let hull = convex_hull_volume(&pts).unwrap();
            assert!(hull.degenerate);
            assert_eq!(hull.volume, 0.0);
            assert!(hull.vertices.is_empty());
        }
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let pts: Vec<[f64; 3]> = (0..10)
            .map(|i| {
                let x = (i % 4) as f64 * 0.3;
                let y = (i / 4) as f64 * 0.5;
                // A tilted plane, not axis-aligned.
                [x, y, 0.25 * x - 0.5 * y + 2.0]
            })
            .collect();
        let hull = convex_hull_volume(&pts).unwrap();
        assert!(hull.degenerate);
        assert_eq!(hull.volume, 0.0);
    }

    #[test]
    fn collinear_and_identical_points_are_degenerate() {
        let line: Vec<[f64; 3]> = (0..6).map(|i| [i as f64, 2.0 * i as f64, 0.5]).collect();
        assert!(convex_hull_volume(&line).unwrap().degenerate);
        let same = vec![[1.0, 2.0, 3.0]; 7];
        assert!(convex_hull_volume(&same).unwrap().degenerate);
    }

    #[test]
    fn non_finite_points_are_rejected() {
        let pts = [[0.0, 0.0, 0.0], [1.0, f64::NAN, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            convex_hull_volume(&pts),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn every_input_point_is_inside_every_facet() {
        // Deterministic pseudo-random cloud.
        let mut pts = Vec::new();
        let mut state = 0x2545f491_4f6cdd1du64;
        for _ in 0..60 {
            let mut coord = [0.0; 3];
            for c in &mut coord {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *c = (state >> 11) as f64 / (1u64 << 53) as f64;
            }
            pts.push(coord);
        }
        let hull = convex_hull_volume(&pts).unwrap();
        for face in &hull.faces {
            let [a, b, c] = [
                hull.vertices[face[0]],
                hull.vertices[face[1]],
                hull.vertices[face[2]],
            ];
            let n = cross(sub(b, a), sub(c, a));
            let len = norm(n);
            let nhat = [n[0] / len, n[1] / len, n[2] / len];
            for p in &pts {
                let d = dot(nhat, sub(*p, a));
                assert!(d <= 1e-9, "point {p:?} is {d} outside a facet");
            }
        }
    }

    #[test]
    fn adding_points_never_shrinks_the_volume() {
        let base = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.2, 0.1],
            [0.3, 1.0, 0.0],
            [0.1, 0.2, 1.0],
            [0.8, 0.9, 0.7],
        ];
        let v0 = convex_hull_volume(&base).unwrap().volume;
        let mut extended = base.clone();
        extended.push([1.5, 1.5, 1.5]);
        let v1 = convex_hull_volume(&extended).unwrap().volume;
        assert!(v1 >= v0 * (1.0 - 1e-9));
        assert!(v1 > v0, "a strictly outside point must grow the hull");
        // An interior point changes nothing; the vertex centroid is always
        // interior.
        let mut interior = base.clone();
        let mut mean = [0.0f64; 3];
        for p in &base {
            for axis in 0..3 {
                mean[axis] += p[axis] / base.len() as f64;
            }
        }
        interior.push(mean);
        let v2 = convex_hull_volume(&interior).unwrap().volume;
        assert!((v2 - v0).abs() <= 1e-9 * v0.max(1.0));
    }

    #[test]
    fn rigid_motions_preserve_volume_and_scaling_cubes_it() {
        let pts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.1, 0.0],
            [0.2, 1.1, 0.1],
            [0.0, 0.3, 0.9],
            [1.0, 1.0, 1.0],
            [0.7, 0.2, 0.8],
        ];
        let v = convex_hull_volume(&pts).unwrap().volume;
        // Rotation about a skew axis by 0.7 rad (Rodrigues formula).
        let axis = {
            let raw = [1.0, 2.0, 3.0];
            let l = norm(raw);
            [raw[0] / l, raw[1] / l, raw[2] / l]
        };
        let (s, c) = 0.7f64.sin_cos();
        let rotate = |p: [f64; 3]| -> [f64; 3] {
            let kxp = cross(axis, p);
            let kdp = dot(axis, p);
            [
                p[0] * c + kxp[0] * s + axis[0] * kdp * (1.0 - c),
                p[1] * c + kxp[1] * s + axis[1] * kdp * (1.0 - c),
                p[2] * c + kxp[2] * s + axis[2] * kdp * (1.0 - c),
            ]
        };
        let rotated: Vec<[f64; 3]> = pts.iter().map(|&p| rotate(p)).collect();
        let vr = convex_hull_volume(&rotated).unwrap().volume;
        assert!((vr - v).abs() <= 1e-9 * v);

        let shifted: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + 5.0, p[1] - 3.0, p[2] + 0.5]).collect();
        let vt = convex_hull_volume(&shifted).unwrap().volume;
        assert!((vt - v).abs() <= 1e-9 * v);

        let s = 2.5f64;
        let scaled: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] * s, p[1] * s, p[2] * s]).collect();
        let vs = convex_hull_volume(&scaled).unwrap().volume;
        assert!((vs - v * s.powi(3)).abs() <= 1e-9 * vs.max(1.0));
    }
}
