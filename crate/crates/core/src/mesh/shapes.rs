//! Candidate point layouts, inside predicates and boundary classifiers for
//! the five mesh families. All coordinates are normalized to [0,1].

use super::{MeshError, Point2, ShapeSpec, ShapeTag};

pub(crate) const BOUNDARY_TOL: f64 = 1e-9;

const DISK_CENTER: (f64, f64) = (0.5, 0.5);
const DISK_RADIUS: f64 = 0.5;

// U-mesh slot: width 0.4 centered horizontally, from y=0.4 to the top edge.
const U_SLOT_X0: f64 = 0.3;
const U_SLOT_X1: f64 = 0.7;
const U_SLOT_Y0: f64 = 0.4;

pub(crate) struct Geometry {
    pub points: Vec<Point2>,
    pub inside: Box<dyn Fn(f64, f64) -> bool>,
    pub is_boundary: Box<dyn Fn(f64, f64) -> bool>,
    pub analytic_area: f64,
}

pub(crate) fn build_geometry(spec: &ShapeSpec) -> Result<Geometry, MeshError> {
    match spec.shape {
        ShapeTag::Square => square_geometry(spec.node_budget),
        ShapeTag::Disk => disk_geometry(spec.node_budget),
        ShapeTag::DiskHole => disk_hole_geometry(spec),
        ShapeTag::LMesh => l_geometry(spec),
        ShapeTag::UMesh => u_geometry(spec.node_budget),
    }
}

fn dist(x: f64, y: f64, cx: f64, cy: f64) -> f64 {
    ((x - cx) * (x - cx) + (y - cy) * (y - cy)).sqrt()
}

fn on_unit_square_edge(x: f64, y: f64) -> bool {
    x.abs() <= BOUNDARY_TOL
        || (x - 1.0).abs() <= BOUNDARY_TOL
        || y.abs() <= BOUNDARY_TOL
        || (y - 1.0).abs() <= BOUNDARY_TOL
}

fn square_geometry(budget: usize) -> Result<Geometry, MeshError> {
    let n_side = (budget as f64).sqrt().round().max(3.0) as usize;
    let s = 1.0 / (n_side - 1) as f64;
    let mut points = Vec::with_capacity(n_side * n_side);
    for j in 0..n_side {
        for i in 0..n_side {
            points.push(Point2::new(i as f64 * s, j as f64 * s));
        }
    }
    Ok(Geometry {
        points,
        inside: Box::new(|_, _| true),
        is_boundary: Box::new(on_unit_square_edge),
        analytic_area: 1.0,
    })
}

/// Ring layout for the disk: ring count ~ sqrt(budget/pi), per-ring counts
/// proportional to circumference with largest-remainder rounding so the total
/// lands exactly on the budget.
fn disk_points(budget: usize) -> (Vec<Point2>, f64) {
    let rings = ((budget as f64 / std::f64::consts::PI).sqrt().round() as usize).max(1);
    let per_ring = allocate_by_weight(budget - 1, rings);
    let mut points = vec![Point2::new(DISK_CENTER.0, DISK_CENTER.1)];
    for (k, &count) in per_ring.iter().enumerate() {
        let r = DISK_RADIUS * (k + 1) as f64 / rings as f64;
        for i in 0..count {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
            points.push(Point2::new(
                DISK_CENTER.0 + r * theta.cos(),
                DISK_CENTER.1 + r * theta.sin(),
            ));
        }
    }
    let spacing = DISK_RADIUS / rings as f64;
    (points, spacing)
}

/// Split `total` across rings 1..=rings with weight k (circumference),
/// floor + largest remainder. Ties go to the outer ring first.
fn allocate_by_weight(total: usize, rings: usize) -> Vec<usize> {
    let sum_w: f64 = (rings * (rings + 1) / 2) as f64;
    let mut counts = Vec::with_capacity(rings);
    let mut fracs = Vec::with_capacity(rings);
    let mut assigned = 0usize;
    for k in 1..=rings {
        let target = total as f64 * k as f64 / sum_w;
        let fl = target.floor() as usize;
        counts.push(fl);
        fracs.push((target - fl as f64, k));
        assigned += fl;
    }
    let mut order: Vec<usize> = (0..rings).collect();
    order.sort_by(|&a, &b| {
        fracs[b]
            .partial_cmp(&fracs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for &idx in order.iter().take(total.saturating_sub(assigned)) {
        counts[idx] += 1;
    }
    // Rings below 3 points triangulate poorly; fold them into neighbors.
    for k in 0..rings {
        if counts[k] > 0 && counts[k] < 3 {
            counts[k] = 3;
        }
    }
    counts
}

fn disk_geometry(budget: usize) -> Result<Geometry, MeshError> {
    let (points, _) = disk_points(budget);
    Ok(Geometry {
        points,
        inside: Box::new(|x, y| dist(x, y, DISK_CENTER.0, DISK_CENTER.1) <= DISK_RADIUS + 1e-9),
        is_boundary: Box::new(|x, y| {
            (dist(x, y, DISK_CENTER.0, DISK_CENTER.1) - DISK_RADIUS).abs() <= BOUNDARY_TOL
        }),
        analytic_area: std::f64::consts::PI * DISK_RADIUS * DISK_RADIUS,
    })
}

fn disk_hole_geometry(spec: &ShapeSpec) -> Result<Geometry, MeshError> {
    let hc = spec
        .hole_center
        .ok_or_else(|| MeshError::InvalidSpec("disk_hole requires hole_center".into()))?;
    let hr = spec
        .hole_radius
        .ok_or_else(|| MeshError::InvalidSpec("disk_hole requires hole_radius".into()))?;
    if hr <= 0.0 {
        return Err(MeshError::InvalidSpec(format!(
            "hole_radius must be positive, got {hr}"
        )));
    }
    // Geometric feasibility takes precedence over the documented parameter
    // ranges: a hole that swallows or touches the outer boundary is reported
    // as degenerate regardless of where its parameters fall.
    let off_center = dist(hc.x, hc.y, DISK_CENTER.0, DISK_CENTER.1);
    if off_center + hr >= DISK_RADIUS - BOUNDARY_TOL {
        return Err(MeshError::DegenerateGeometry(format!(
            "hole (center offset {off_center:.3}, radius {hr:.3}) reaches the disk boundary"
        )));
    }
    if !(0.35..=0.65).contains(&hc.x) || !(0.35..=0.65).contains(&hc.y) {
        return Err(MeshError::InvalidSpec(format!(
            "hole_center {:?} outside [0.35, 0.65]^2",
            (hc.x, hc.y)
        )));
    }
    if !(0.05..=0.25).contains(&hr) {
        return Err(MeshError::InvalidSpec(format!(
            "hole_radius {hr} outside [0.05, 0.25]"
        )));
    }

    let (parent, spacing) = disk_points(spec.node_budget);
    let mut points: Vec<Point2> = parent
        .into_iter()
        .filter(|p| dist(p.x, p.y, hc.x, hc.y) >= hr + 0.45 * spacing)
        .collect();
    let n_h = ((2.0 * std::f64::consts::PI * hr / spacing).round() as usize).max(8);
    for i in 0..n_h {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n_h as f64;
        points.push(Point2::new(hc.x + hr * theta.cos(), hc.y + hr * theta.sin()));
    }
    let (hcx, hcy, hrr) = (hc.x, hc.y, hr);
    Ok(Geometry {
        points,
        inside: Box::new(move |x, y| {
            dist(x, y, DISK_CENTER.0, DISK_CENTER.1) <= DISK_RADIUS + 1e-9
                && dist(x, y, hcx, hcy) >= hrr - 1e-12
        }),
        is_boundary: Box::new(move |x, y| {
            (dist(x, y, DISK_CENTER.0, DISK_CENTER.1) - DISK_RADIUS).abs() <= BOUNDARY_TOL
                || (dist(x, y, hcx, hcy) - hrr).abs() <= BOUNDARY_TOL
        }),
        analytic_area: std::f64::consts::PI * (DISK_RADIUS * DISK_RADIUS - hr * hr),
    })
}

/// Evenly spaced points along a segment, endpoints included.
fn segment_points(a: Point2, b: Point2, spacing: f64) -> Vec<Point2> {
    let len = dist(a.x, a.y, b.x, b.y);
    let k = (len / spacing).round().max(1.0) as usize;
    (0..=k)
        .map(|i| {
            let t = i as f64 / k as f64;
            Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        })
        .collect()
}

fn push_dedup(points: &mut Vec<Point2>, p: Point2) {
    if !points
        .iter()
        .any(|q| (q.x - p.x).abs() <= 1e-9 && (q.y - p.y).abs() <= 1e-9)
    {
        points.push(p);
    }
}

fn l_candidates(nx: usize, ny: usize, w: f64, h: f64) -> Vec<Point2> {
    let sx = 1.0 / (nx - 1) as f64;
    let sy = 1.0 / (ny - 1) as f64;
    let (x0, y0) = (1.0 - w, 1.0 - h);
    let mut points = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 * sx, j as f64 * sy);
            if x > x0 - 0.4 * sx && y > y0 - 0.4 * sy {
                continue;
            }
            points.push(Point2::new(x, y));
        }
    }
    for p in segment_points(Point2::new(x0, y0), Point2::new(1.0, y0), sx) {
        push_dedup(&mut points, p);
    }
    for p in segment_points(Point2::new(x0, y0), Point2::new(x0, 1.0), sy) {
        push_dedup(&mut points, p);
    }
    points
}

fn l_geometry(spec: &ShapeSpec) -> Result<Geometry, MeshError> {
    let w = spec
        .cut_width
        .ok_or_else(|| MeshError::InvalidSpec("l_mesh requires cut_width".into()))?;
    let h = spec
        .cut_height
        .ok_or_else(|| MeshError::InvalidSpec("l_mesh requires cut_height".into()))?;
    for (name, v) in [("cut_width", w), ("cut_height", h)] {
        if !(0.2..=0.8).contains(&v) {
            return Err(MeshError::InvalidSpec(format!(
                "{name} {v} outside [0.2, 0.8]"
            )));
        }
    }
    let points = search_grid(spec.node_budget, |nx, ny| l_candidates(nx, ny, w, h));
    let (x0, y0) = (1.0 - w, 1.0 - h);
    Ok(Geometry {
        points,
        inside: Box::new(move |x, y| !(x > x0 + 1e-12 && y > y0 + 1e-12)),
        is_boundary: Box::new(move |x, y| {
            on_unit_square_edge(x, y)
                || ((y - y0).abs() <= BOUNDARY_TOL && x >= x0 - BOUNDARY_TOL)
                || ((x - x0).abs() <= BOUNDARY_TOL && y >= y0 - BOUNDARY_TOL)
        }),
        analytic_area: 1.0 - w * h,
    })
}

fn u_candidates(nx: usize, ny: usize) -> Vec<Point2> {
    let sx = 1.0 / (nx - 1) as f64;
    let sy = 1.0 / (ny - 1) as f64;
    let mut points = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 * sx, j as f64 * sy);
            if x > U_SLOT_X0 - 0.4 * sx && x < U_SLOT_X1 + 0.4 * sx && y > U_SLOT_Y0 - 0.4 * sy {
                continue;
            }
            points.push(Point2::new(x, y));
        }
    }
    for p in segment_points(Point2::new(U_SLOT_X0, U_SLOT_Y0), Point2::new(U_SLOT_X0, 1.0), sy) {
        push_dedup(&mut points, p);
    }
    for p in segment_points(Point2::new(U_SLOT_X1, U_SLOT_Y0), Point2::new(U_SLOT_X1, 1.0), sy) {
        push_dedup(&mut points, p);
    }
    for p in segment_points(
        Point2::new(U_SLOT_X0, U_SLOT_Y0),
        Point2::new(U_SLOT_X1, U_SLOT_Y0),
        sx,
    ) {
        push_dedup(&mut points, p);
    }
    points
}

fn u_geometry(budget: usize) -> Result<Geometry, MeshError> {
    let points = search_grid(budget, u_candidates);
    Ok(Geometry {
        points,
        inside: Box::new(|x, y| {
            !(x > U_SLOT_X0 + 1e-12 && x < U_SLOT_X1 - 1e-12 && y > U_SLOT_Y0 + 1e-12)
        }),
        is_boundary: Box::new(|x, y| {
            on_unit_square_edge(x, y)
                || ((x - U_SLOT_X0).abs() <= BOUNDARY_TOL && y >= U_SLOT_Y0 - BOUNDARY_TOL)
                || ((x - U_SLOT_X1).abs() <= BOUNDARY_TOL && y >= U_SLOT_Y0 - BOUNDARY_TOL)
                || ((y - U_SLOT_Y0).abs() <= BOUNDARY_TOL
                    && (U_SLOT_X0 - BOUNDARY_TOL..=U_SLOT_X1 + BOUNDARY_TOL).contains(&x))
        }),
        analytic_area: 1.0 - (U_SLOT_X1 - U_SLOT_X0) * (1.0 - U_SLOT_Y0),
    })
}

/// Pick the base grid resolution whose candidate count lands closest to the
/// node budget. Cutout shapes have no closed-form count, and the search is
/// cheap and deterministic. Near-square grids (|nx - ny| <= 2) keep element
/// aspect ratios sane while giving fine count granularity.
fn search_grid<F>(budget: usize, build: F) -> Vec<Point2>
where
    F: Fn(usize, usize) -> Vec<Point2>,
{
    let mut best: Option<(usize, Vec<Point2>)> = None;
    'outer: for nx in 4usize..=96 {
        for ny in nx.saturating_sub(2).max(4)..=nx + 2 {
            let pts = build(nx, ny);
            let count = pts.len();
            let diff = count.abs_diff(budget);
            let better = match &best {
                None => true,
                Some((bd, _)) => diff < *bd,
            };
            if better {
                best = Some((diff, pts));
            }
            if ny == nx.saturating_sub(2).max(4) && count > 2 * budget + 16 {
                break 'outer;
            }
        }
    }
    best.expect("grid search range is non-empty").1
}
