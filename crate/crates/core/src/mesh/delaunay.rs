//! Incremental (Bowyer-Watson) Delaunay triangulation with deterministic
//! handling of cocircular ties.

use std::collections::{BTreeMap, HashSet};

use super::{MeshError, Point2};

/// Signed in-circumcircle predicate. For a counter-clockwise triangle
/// `(a, b, c)`, a positive value means `d` lies strictly inside the
/// circumcircle. The caller compares against a tolerance scaled like the
/// determinant (length^4).
fn incircle(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

/// Scale factor for incircle tolerances: (max coordinate delta)^4.
fn incircle_scale(a: Point2, b: Point2, c: Point2, d: Point2) -> f64 {
    let m = [a, b, c]
        .iter()
        .map(|p| (p.x - d.x).abs().max((p.y - d.y).abs()))
        .fold(1e-3, f64::max);
    m * m * m * m
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

pub(crate) fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * orient(a, b, c)
}

/// Delaunay triangulation of `points`, followed by removal of every triangle
/// whose centroid fails the `inside` predicate (this carves holes and
/// cutouts). Returned triangles are counter-clockwise, reference distinct
/// valid indices and have signed area above 1e-12. Exact cocircular ties are
/// canonicalized to the lexicographically smallest diagonal.
pub fn triangulate<F>(points: &[Point2], inside: F) -> Result<Vec<[usize; 3]>, MeshError>
where
    F: Fn(f64, f64) -> bool,
{
    if points.len() < 3 {
        return Err(MeshError::CollinearInput);
    }
    if !has_noncollinear_triple(points) {
        return Err(MeshError::CollinearInput);
    }

    // Working point list: input points followed by the three super-triangle
    // vertices, placed far enough out that their circumcircles cannot create
    // spurious ties among real points.
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1e-6);
    let (cx, cy) = (0.5 * (min_x + max_x), 0.5 * (min_y + max_y));
    let n = points.len();
    let mut pts = points.to_vec();
    pts.push(Point2::new(cx - 30.0 * span, cy - 20.0 * span));
    pts.push(Point2::new(cx + 30.0 * span, cy - 20.0 * span));
    pts.push(Point2::new(cx, cy + 30.0 * span));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];

    for p_idx in 0..n {
        let p = pts[p_idx];
        // Skip exact duplicates; the caller is expected to dedupe, and an
        // orphaned node is caught by the connectivity validation upstream.
        if (0..p_idx).any(|q| (pts[q].x - p.x).abs() < 1e-12 && (pts[q].y - p.y).abs() < 1e-12) {
            continue;
        }

        let mut bad = Vec::new();
        for (ti, t) in tris.iter().enumerate() {
            let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
            let det = incircle(a, b, c, p);
            if det > 1e-12 * incircle_scale(a, b, c, p) {
                bad.push(ti);
            }
        }
        if bad.is_empty() {
            // Exactly cocircular with everything around it; treat as
            // undistinguishable duplicate geometry.
            continue;
        }

        // Cavity boundary: directed edges of bad triangles whose reverse is
        // not itself a bad-triangle edge.
        let mut bad_edges: HashSet<(usize, usize)> = HashSet::new();
        for &ti in &bad {
            let t = tris[ti];
            for k in 0..3 {
                bad_edges.insert((t[k], t[(k + 1) % 3]));
            }
        }
        let mut cavity: Vec<(usize, usize)> = Vec::new();
        for &ti in &bad {
            let t = tris[ti];
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                if !bad_edges.contains(&(e.1, e.0)) {
                    cavity.push(e);
                }
            }
        }

        let bad_set: HashSet<usize> = bad.iter().copied().collect();
        let mut next = Vec::with_capacity(tris.len() + 2);
        for (ti, t) in tris.iter().enumerate() {
            if !bad_set.contains(&ti) {
                next.push(*t);
            }
        }
        for (a, b) in cavity {
            next.push([a, b, p_idx]);
        }
        tris = next;
    }

    tris.retain(|t| t.iter().all(|&v| v < n));

    canonicalize(&pts[..n], &mut tris);

    // Carve holes/cutouts, then normalize orientation and drop slivers.
    let mut out = Vec::with_capacity(tris.len());
    for t in tris {
        let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
        let centroid = Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
        if !inside(centroid.x, centroid.y) {
            continue;
        }
        let area = signed_area(a, b, c);
        if area.abs() <= 1e-12 {
            continue;
        }
        if area > 0.0 {
            out.push(t);
        } else {
            out.push([t[0], t[2], t[1]]);
        }
    }
    Ok(out)
}

fn has_noncollinear_triple(points: &[Point2]) -> bool {
    if points.len() < 3 {
        return false;
    }
    let p0 = points[0];
    let p1 = match points.iter().find(|p| {
        (p.x - p0.x).abs() > 1e-12 || (p.y - p0.y).abs() > 1e-12
    }) {
        Some(&p) => p,
        None => return false,
    };
    points.iter().any(|&p| orient(p0, p1, p).abs() > 1e-12)
}

/// Edge-flip pass: restores the Delaunay condition where floating point left
/// it violated, and breaks exact cocircular ties toward the lexicographically
/// smallest diagonal so that symmetric inputs triangulate identically on
/// every run.
fn canonicalize(pts: &[Point2], tris: &mut Vec<[usize; 3]>) {
    for _pass in 0..100 {
        let mut edge_map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edge_map.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        let mut flipped_any = false;
        let mut dirty: HashSet<usize> = HashSet::new();
        for (&(p, q), owners) in &edge_map {
            if owners.len() != 2 {
                continue;
            }
            let (t1, t2) = (owners[0], owners[1]);
            if dirty.contains(&t1) || dirty.contains(&t2) {
                continue;
            }
            let c1 = opposite_vertex(tris[t1], p, q);
            let c2 = opposite_vertex(tris[t2], p, q);
            let (pa, pb, v1, v2) = (pts[p], pts[q], pts[c1], pts[c2]);
            let tri1 = ccw_triple(pts, tris[t1]);
            let det = incircle(pts[tri1[0]], pts[tri1[1]], pts[tri1[2]], v2);
            let scale = incircle_scale(pts[tri1[0]], pts[tri1[1]], pts[tri1[2]], v2);

            let violates = det > 1e-12 * scale;
            let tie = det.abs() <= 1e-9 * scale
                && (c1.min(c2), c1.max(c2)) < (p, q);
            if !violates && !tie {
                continue;
            }
            // The quad must be strictly convex for the flip to be valid.
            if orient(v1, v2, pa) * orient(v1, v2, pb) >= 0.0
                || orient(pa, pb, v1) * orient(pa, pb, v2) >= 0.0
            {
                continue;
            }
            let na = ccw(pts, [c1, c2, p]);
            let nb = ccw(pts, [c2, c1, q]);
            if signed_area(pts[na[0]], pts[na[1]], pts[na[2]]).abs() <= 1e-12
                || signed_area(pts[nb[0]], pts[nb[1]], pts[nb[2]]).abs() <= 1e-12
            {
                continue;
            }
            tris[t1] = na;
            tris[t2] = nb;
            dirty.insert(t1);
            dirty.insert(t2);
            flipped_any = true;
        }
        if !flipped_any {
            break;
        }
    }
}

fn opposite_vertex(t: [usize; 3], p: usize, q: usize) -> usize {
    *t.iter().find(|&&v| v != p && v != q).unwrap()
}

fn ccw(pts: &[Point2], t: [usize; 3]) -> [usize; 3] {
    if signed_area(pts[t[0]], pts[t[1]], pts[t[2]]) >= 0.0 {
        t
    } else {
        [t[0], t[2], t[1]]
    }
}

fn ccw_triple(pts: &[Point2], t: [usize; 3]) -> [usize; 3] {
    ccw(pts, t)
}
