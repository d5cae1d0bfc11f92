//! P1 finite elements on triangulated meshes: Poisson solvers for the
//! electrostatics/magnetostatics problems, plane-strain linear elasticity,
//! and nodal gradient recovery for the derived vector fields.
//!
//! All boundary conditions are homogeneous Dirichlet; boundary unknowns are
//! eliminated symmetrically so the reduced systems stay symmetric positive
//! definite.

use thiserror::Error;

use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// Relative tolerance used when producing ground-truth solutions.
pub const CG_TOL: f64 = 1e-10;

/// Lame coefficients and body force for the elasticity datasets. Fixed so
/// generated data is reproducible; normalization absorbs the scale.
pub const ELASTICITY_LAMBDA: f64 = 1.25;
pub const ELASTICITY_MU: f64 = 1.0;
pub const ELASTICITY_BODY_FORCE: (f64, f64) = (0.0, -0.4);

#[derive(Debug, Error)]
pub enum FemError {
    #[error("singular system: no free unknowns")]
    SingularSystem,
    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Per-node vector quantity (E, B or displacement).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        VectorField {
            vx: vec![0.0; n],
            vy: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.vx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vx.is_empty()
    }
}

/// P1 element stiffness for a single triangle: (a(phi_s, phi_t)) over the
/// element, i.e. area * (grad phi_s . grad phi_t).
pub fn element_stiffness(p: [(f64, f64); 3]) -> [[f64; 3]; 3] {
    let (b, c, area) = basis_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = area * (b[i] * b[j] + c[i] * c[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Gradients of the three P1 basis functions and the (positive) triangle
/// area.
fn basis_gradients(p: [(f64, f64); 3]) -> ([f64; 3], [f64; 3], f64) {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let two_a = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    let area = 0.5 * two_a;
    let b = [(y1 - y2) / two_a, (y2 - y0) / two_a, (y0 - y1) / two_a];
    let c = [(x2 - x1) / two_a, (x0 - x2) / two_a, (x1 - x0) / two_a];
    (b, c, area)
}

fn tri_coords(mesh: &Mesh, t: [usize; 3]) -> [(f64, f64); 3] {
    [
        (mesh.nodes[t[0]].x, mesh.nodes[t[0]].y),
        (mesh.nodes[t[1]].x, mesh.nodes[t[1]].y),
        (mesh.nodes[t[2]].x, mesh.nodes[t[2]].y),
    ]
}

/// Assembled Poisson stiffness operator on a mesh, reusable across many
/// right-hand sides (dataset generation solves thousands of sources on the
/// same mesh).
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    matrix: CsrMatrix,
    interior: Vec<usize>,
    n_nodes: usize,
}

impl PoissonOperator {
    pub fn new(mesh: &Mesh) -> Result<Self, FemError> {
        let interior = mesh.interior_nodes();
        if interior.is_empty() {
            return Err(FemError::SingularSystem);
        }
        let mut reduced = vec![usize::MAX; mesh.n_nodes()];
        for (ri, &node) in interior.iter().enumerate() {
            reduced[node] = ri;
        }
        let mut triplets = Vec::with_capacity(mesh.triangles.len() * 9);
        for t in &mesh.triangles {
            let k = element_stiffness(tri_coords(mesh, *t));
            for i in 0..3 {
                let ri = reduced[t[i]];
                if ri == usize::MAX {
                    continue;
                }
                for j in 0..3 {
                    let rj = reduced[t[j]];
                    if rj == usize::MAX {
                        continue;
                    }
                    triplets.push((ri, rj, k[i][j]));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(interior.len(), interior.len(), &triplets);
        Ok(PoissonOperator {
            matrix,
            interior,
            n_nodes: mesh.n_nodes(),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Reduced load vector h(phi_t) = integral of the P1 interpolant of the
    /// nodal source against each interior basis function (consistent mass,
    /// not lumped).
    pub fn load(&self, mesh: &Mesh, source: &[f64]) -> Vec<f64> {
        let full = apply_mass(mesh, source);
        self.interior.iter().map(|&n| full[n]).collect()
    }

    /// Solve with zero Dirichlet data; returns the full-length nodal
    /// solution (zeros on the boundary).
    pub fn solve(&self, mesh: &Mesh, source: &[f64]) -> Result<Vec<f64>, FemError> {
        assert_eq!(source.len(), self.n_nodes);
        let rhs = self.load(mesh, source);
        let max_iter = (10 * self.interior.len()).max(100);
        let reduced = solve_cg(&self.matrix, &rhs, CG_TOL, max_iter)?;
        let mut full = vec![0.0; self.n_nodes];
        for (ri, &node) in self.interior.iter().enumerate() {
            full[node] = reduced[ri];
        }
        Ok(full)
    }
}

/// Consistent-mass application: out = M q with M the P1 mass matrix.
pub fn apply_mass(mesh: &Mesh, q: &[f64]) -> Vec<f64> {
    assert_eq!(q.len(), mesh.n_nodes());
    let mut out = vec![0.0; mesh.n_nodes()];
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(ti);
        let s = q[t[0]] + q[t[1]] + q[t[2]];
        for i in 0..3 {
            // Row of the element mass matrix: area/12 * (1 + delta_ij).
            out[t[i]] += area / 12.0 * (s + q[t[i]]);
        }
    }
    out
}

/// Stiffness matrix and reduced right-hand side for the Poisson problem with
/// homogeneous Dirichlet data, plus the interior node ids the reduced system
/// is expressed in.
pub struct PoissonSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub interior: Vec<usize>,
}

pub fn assemble_poisson(mesh: &Mesh, source: &[f64]) -> Result<PoissonSystem, FemError> {
    let op = PoissonOperator::new(mesh)?;
    let rhs = op.load(mesh, source);
    Ok(PoissonSystem {
        matrix: op.matrix,
        rhs,
        interior: op.interior,
    })
}

/// Jacobi-preconditioned conjugate gradients for SPD systems. Deterministic;
/// converges when ||Ax - b|| <= tol * ||b|| (verified on the true residual).
pub fn solve_cg(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, FemError> {
    let n = b.len();
    assert_eq!(a.n_rows(), n);
    assert!(tol > 0.0);
    let norm_b = norm(b);
    let mut x = vec![0.0; n];
    if norm_b == 0.0 {
        return Ok(x);
    }
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];

    for iter in 0..max_iter {
        if norm(&r) <= tol * norm_b {
            // Guard against drift in the recursive residual.
            a.mul_vec(&x, &mut q);
            let true_res = (0..n).map(|i| (q[i] - b[i]).powi(2)).sum::<f64>().sqrt();
            if true_res <= tol * norm_b {
                return Ok(x);
            }
            r = (0..n).map(|i| b[i] - q[i]).collect();
            z = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
            p = z.clone();
            rz = dot(&r, &z);
        }
        a.mul_vec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(FemError::NotConverged {
                iterations: iter,
                residual: norm(&r) / norm_b,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        z = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) <= tol * norm_b {
        return Ok(x);
    }
    Err(FemError::NotConverged {
        iterations: max_iter,
        residual: norm(&r) / norm_b,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Nodal gradient of the P1 interpolant: the (constant) per-triangle gradient
/// averaged to nodes with triangle-area weights. Reproduces linear fields
/// exactly. The caller applies signs (E = -grad U; B rotates grad A_z).
pub fn recover_gradient(mesh: &Mesh, u: &[f64]) -> VectorField {
    assert_eq!(u.len(), mesh.n_nodes());
    let n = mesh.n_nodes();
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for t in &mesh.triangles {
        let (b, c, area) = basis_gradients(tri_coords(mesh, *t));
        let tx = u[t[0]] * b[0] + u[t[1]] * b[1] + u[t[2]] * b[2];
        let ty = u[t[0]] * c[0] + u[t[1]] * c[1] + u[t[2]] * c[2];
        for &v in t {
            gx[v] += area * tx;
            gy[v] += area * ty;
            weight[v] += area;
        }
    }
    for i in 0..n {
        if weight[i] > 0.0 {
            gx[i] /= weight[i];
            gy[i] /= weight[i];
        }
    }
    VectorField { vx: gx, vy: gy }
}

/// Electrostatics: -lap U = rho (unit permittivity), U = 0 on the boundary,
/// E = -grad U.
pub fn solve_electrostatics(
    mesh: &Mesh,
    charge: &[f64],
) -> Result<(Vec<f64>, VectorField), FemError> {
    let op = PoissonOperator::new(mesh)?;
    solve_electrostatics_with(&op, mesh, charge)
}

pub fn solve_electrostatics_with(
    op: &PoissonOperator,
    mesh: &Mesh,
    charge: &[f64],
) -> Result<(Vec<f64>, VectorField), FemError> {
    let u = op.solve(mesh, charge)?;
    let g = recover_gradient(mesh, &u);
    let e = VectorField {
        vx: g.vx.iter().map(|&v| -v).collect(),
        vy: g.vy.iter().map(|&v| -v).collect(),
    };
    Ok((u, e))
}

/// Magnetostatics: -lap A_z = I_z (unit permeability), A_z = 0 on the
/// boundary, B = (dA_z/dy, -dA_z/dx).
pub fn solve_magnetostatics(
    mesh: &Mesh,
    current: &[f64],
) -> Result<(Vec<f64>, VectorField), FemError> {
    let op = PoissonOperator::new(mesh)?;
    solve_magnetostatics_with(&op, mesh, current)
}

pub fn solve_magnetostatics_with(
    op: &PoissonOperator,
    mesh: &Mesh,
    current: &[f64],
) -> Result<(Vec<f64>, VectorField), FemError> {
    let a_z = op.solve(mesh, current)?;
    let g = recover_gradient(mesh, &a_z);
    let b = VectorField {
        vx: g.vy.clone(),
        vy: g.vx.iter().map(|&v| -v).collect(),
    };
    Ok((a_z, b))
}

/// Reduced plane-strain elasticity system: stiffness over the free degrees
/// of freedom (x/y interleaved), consistent-mass load vector, and the global
/// dof index of each unknown.
pub struct ElasticitySystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub free_dofs: Vec<usize>,
}

/// Plane-strain linear elasticity: a(u,v) = integral sigma(u):eps(v) with
/// sigma = lambda tr(eps) I + 2 mu eps, traction-free boundary except the
/// given fixed nodes where u = 0.
pub fn assemble_elasticity(
    mesh: &Mesh,
    body_force: &VectorField,
    fixed_nodes: &[usize],
) -> Result<ElasticitySystem, FemError> {
    assert_eq!(body_force.len(), mesh.n_nodes());
    if fixed_nodes.is_empty() {
        return Err(FemError::SingularSystem);
    }
    let n = mesh.n_nodes();
    let mut is_fixed = vec![false; n];
    for &f in fixed_nodes {
        is_fixed[f] = true;
    }
    let mut free_dofs = Vec::with_capacity(2 * n);
    let mut reduced = vec![usize::MAX; 2 * n];
    for node in 0..n {
        if !is_fixed[node] {
            for comp in 0..2 {
                reduced[2 * node + comp] = free_dofs.len();
                free_dofs.push(2 * node + comp);
            }
        }
    }
    if free_dofs.is_empty() {
        return Err(FemError::SingularSystem);
    }

    let (la, mu) = (ELASTICITY_LAMBDA, ELASTICITY_MU);
    let d = [
        [la + 2.0 * mu, la, 0.0],
        [la, la + 2.0 * mu, 0.0],
        [0.0, 0.0, mu],
    ];
    let mut triplets = Vec::with_capacity(mesh.triangles.len() * 36);
    for t in &mesh.triangles {
        let (bg, cg, area) = basis_gradients(tri_coords(mesh, *t));
        // Strain-displacement matrix rows: eps_xx, eps_yy, gamma_xy.
        let mut bmat = [[0.0; 6]; 3];
        for i in 0..3 {
            bmat[0][2 * i] = bg[i];
            bmat[1][2 * i + 1] = cg[i];
            bmat[2][2 * i] = cg[i];
            bmat[2][2 * i + 1] = bg[i];
        }
        let mut ke = [[0.0; 6]; 6];
        for a in 0..6 {
            for b in a..6 {
                let mut acc = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        acc += bmat[i][a] * d[i][j] * bmat[j][b];
                    }
                }
                let v = area * acc;
                ke[a][b] = v;
                ke[b][a] = v;
            }
        }
        for a in 0..6 {
            let ga = 2 * t[a / 2] + a % 2;
            let ra = reduced[ga];
            if ra == usize::MAX {
                continue;
            }
            for b in 0..6 {
                let gb = 2 * t[b / 2] + b % 2;
                let rb = reduced[gb];
                if rb == usize::MAX {
                    continue;
                }
                triplets.push((ra, rb, ke[a][b]));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(free_dofs.len(), free_dofs.len(), &triplets);

    let fx = apply_mass(mesh, &body_force.vx);
    let fy = apply_mass(mesh, &body_force.vy);
    let rhs: Vec<f64> = free_dofs
        .iter()
        .map(|&dof| if dof % 2 == 0 { fx[dof / 2] } else { fy[dof / 2] })
        .collect();
    Ok(ElasticitySystem {
        matrix,
        rhs,
        free_dofs,
    })
}

/// Solve the elasticity problem, returning the full nodal displacement field
/// (zeros at fixed nodes).
pub fn solve_elasticity(
    mesh: &Mesh,
    body_force: &VectorField,
    fixed_nodes: &[usize],
) -> Result<VectorField, FemError> {
    let system = assemble_elasticity(mesh, body_force, fixed_nodes)?;
    let max_iter = (10 * system.free_dofs.len()).max(100);
    let sol = solve_cg(&system.matrix, &system.rhs, CG_TOL, max_iter)?;
    let mut out = VectorField::zeros(mesh.n_nodes());
    for (ri, &dof) in system.free_dofs.iter().enumerate() {
        if dof % 2 == 0 {
            out.vx[dof / 2] = sol[ri];
        } else {
            out.vy[dof / 2] = sol[ri];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_mesh, ShapeSpec, ShapeTag};

    #[test]
    fn element_stiffness_right_triangle() {
        // Hand-integrated P1 element matrix for legs of length h; the result
        // is independent of h.
        for h in [1.0, 0.25] {
            let k = element_stiffness([(0.0, 0.0), (h, 0.0), (0.0, h)]);
            let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (k[i][j] - expected[i][j]).abs() < 1e-12,
                        "k[{i}][{j}]={}",
                        k[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::Square)).unwrap();
        let (u, e) = solve_electrostatics(&mesh, &vec![0.0; mesh.n_nodes()]).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
        assert!(e.vx.iter().all(|&v| v == 0.0));
        assert!(e.vy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_identity_and_zero_rhs() {
        let a = CsrMatrix::identity(5);
        let b = vec![3.0, -1.0, 0.5, 2.0, 0.0];
        let x = solve_cg(&a, &b, 1e-12, 100).unwrap();
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-10);
        }
        let x = solve_cg(&a, &[0.0; 5], 1e-12, 100).unwrap();
        assert_eq!(x, vec![0.0; 5]);
    }

    #[test]
    fn gradient_reproduces_linear_fields() {
        let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::Disk)).unwrap();
        let u: Vec<f64> = mesh.nodes.iter().map(|p| p.x + 2.0 * p.y).collect();
        let g = recover_gradient(&mesh, &u);
        for i in 0..mesh.n_nodes() {
            assert!((g.vx[i] - 1.0).abs() < 1e-10, "vx[{i}] = {}", g.vx[i]);
            assert!((g.vy[i] - 2.0).abs() < 1e-10, "vy[{i}] = {}", g.vy[i]);
        }
    }

    #[test]
    fn es_and_ms_share_the_discrete_system() {
        let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::LMesh)).unwrap();
        let source: Vec<f64> = (0..mesh.n_nodes()).map(|i| (i % 5) as f64 * 0.2).collect();
        let (u, _) = solve_electrostatics(&mesh, &source).unwrap();
        let (a_z, b) = solve_magnetostatics(&mesh, &source).unwrap();
        assert_eq!(u, a_z);
        // B is the 90-degree rotation of -grad(A_z) = E.
        let g = recover_gradient(&mesh, &a_z);
        for i in 0..mesh.n_nodes() {
            assert_eq!(b.vx[i], g.vy[i]);
            assert_eq!(b.vy[i], -g.vx[i]);
        }
    }

    #[test]
    fn elasticity_errors_and_linearity() {
        let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::Square)).unwrap();
        let n = mesh.n_nodes();
        let f = VectorField {
            vx: vec![0.0; n],
            vy: vec![-0.4; n],
        };
        assert!(matches!(
            solve_elasticity(&mesh, &f, &[]),
            Err(FemError::SingularSystem)
        ));

        let fixed: Vec<usize> = (0..n).filter(|&i| mesh.nodes[i].x < 0.03).collect();
        let u1 = solve_elasticity(&mesh, &f, &fixed).unwrap();
        let f2 = VectorField {
            vx: vec![0.0; n],
            vy: vec![-0.8; n],
        };
        let u2 = solve_elasticity(&mesh, &f2, &fixed).unwrap();
        let max1 = u1.vy.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(max1 > 0.0);
        for i in 0..n {
            assert!((u2.vy[i] - 2.0 * u1.vy[i]).abs() < 1e-6 * max1.max(1e-12));
        }

        let zero = VectorField::zeros(n);
        let u0 = solve_elasticity(&mesh, &zero, &fixed).unwrap();
        assert!(u0.vx.iter().all(|&v| v == 0.0));
        assert!(u0.vy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_interior_nodes_is_singular() {
        let mut mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::Square)).unwrap();
        for b in mesh.boundary.iter_mut() {
            *b = true;
        }
        assert!(matches!(
            PoissonOperator::new(&mesh),
            Err(FemError::SingularSystem)
        ));
    }
}
