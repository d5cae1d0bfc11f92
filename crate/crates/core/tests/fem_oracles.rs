//! FEM verification against independent oracles: dense LU, manufactured
//! solutions, analytic gradients, and the structural properties of the
//! assembled systems.

mod common;

use fieldop::fem::{
    assemble_poisson, recover_gradient, solve_cg, solve_elasticity, solve_electrostatics,
    PoissonOperator, VectorField,
};
use fieldop::mesh::{generate_mesh, ShapeSpec, ShapeTag};
use fieldop::CsrMatrix;

fn square_mesh(n_side: usize) -> fieldop::mesh::Mesh {
    generate_mesh(&ShapeSpec {
        node_budget: n_side * n_side,
        ..ShapeSpec::default_for(ShapeTag::Square)
    })
    .unwrap()
}

#[test]
fn cg_matches_dense_lu_on_random_spd() {
    // A = M^T M + n I is SPD; dense LU is the oracle.
    let n = 50;
    let mut state = 123456789u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let m: Vec<f64> = (0..n * n).map(|_| next()).collect();
    let mut a_dense = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += m[k * n + i] * m[k * n + j];
            }
            a_dense[i * n + j] = acc + if i == j { n as f64 } else { 0.0 };
        }
    }
    let b: Vec<f64> = (0..n).map(|_| next()).collect();

    let triplets: Vec<(usize, usize, f64)> = (0..n * n)
        .map(|idx| (idx / n, idx % n, a_dense[idx]))
        .collect();
    let a = CsrMatrix::from_triplets(n, n, &triplets);
    let x_cg = solve_cg(&a, &b, 1e-12, 10 * n).unwrap();
    let x_lu = common::lu_solve(&a_dense, n, &b);
    for (c, l) in x_cg.iter().zip(&x_lu) {
        assert!((c - l).abs() < 1e-8, "cg {c} vs lu {l}");
    }
}

#[test]
fn poisson_cg_matches_dense_lu_on_small_mesh() {
    let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::LMesh)).unwrap();
    let source: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + p.x + p.y * p.y).collect();
    let system = assemble_poisson(&mesh, &source).unwrap();
    let n = system.interior.len();
    assert!(n <= 200, "oracle bound");
    let x_cg = solve_cg(&system.matrix, &system.rhs, 1e-12, 10 * n.max(10)).unwrap();
    let x_lu = common::lu_solve(&system.matrix.to_dense(), n, &system.rhs);
    for (c, l) in x_cg.iter().zip(&x_lu) {
        assert!((c - l).abs() < 1e-8);
    }
}

#[test]
fn stiffness_is_exactly_symmetric_and_spd() {
    for tag in ShapeTag::ALL {
        let mesh = generate_mesh(&ShapeSpec::default_for(tag)).unwrap();
        let source = vec![0.0; mesh.n_nodes()];
        let system = assemble_poisson(&mesh, &source).unwrap();
        let n = system.interior.len();
        let dense = system.matrix.to_dense();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(
                    dense[i * n + j].to_bits(),
                    dense[j * n + i].to_bits(),
                    "{tag:?}: A[{i}][{j}] != A[{j}][{i}] bitwise"
                );
            }
        }
        // x^T A x > 0 for random x.
        let mut state = 42u64;
        for _ in 0..100 {
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let mut ax = vec![0.0; n];
            system.matrix.mul_vec(&x, &mut ax);
            let quad: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            assert!(quad > 0.0, "{tag:?}: x^T A x = {quad}");
        }
    }
}

/// L2 error of the P1 interpolant against the analytic solution, by 3-point
/// (edge midpoint) quadrature, exact for quadratics.
fn l2_error(mesh: &fieldop::mesh::Mesh, u: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let area = mesh.triangle_area(ti);
        for k in 0..3 {
            let (a, b) = (mesh.nodes[t[k]], mesh.nodes[t[(k + 1) % 3]]);
            let (mx, my) = (0.5 * (a.x + b.x), 0.5 * (a.y + b.y));
            let uh = 0.5 * (u[t[k]] + u[t[(k + 1) % 3]]);
            acc += area / 3.0 * (uh - exact(mx, my)).powi(2);
        }
    }
    acc.sqrt()
}

#[test]
fn manufactured_solution_converges_second_order() {
    // -lap u = 2 pi^2 sin(pi x) sin(pi y) has u = sin(pi x) sin(pi y).
    let pi = std::f64::consts::PI;
    let mut errors = Vec::new();
    for n_side in [9, 17, 33] {
        let mesh = square_mesh(n_side);
        let f: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| 2.0 * pi * pi * (pi * p.x).sin() * (pi * p.y).sin())
            .collect();
        let (u, _) = solve_electrostatics(&mesh, &f).unwrap();
        errors.push(l2_error(&mesh, &u, |x, y| (pi * x).sin() * (pi * y).sin()));
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            (3.5..=4.5).contains(&ratio),
            "L2 error ratio {ratio:.2} outside [3.5, 4.5] (errors {errors:?})"
        );
    }
}

#[test]
fn gradient_recovery_tracks_analytic_gradient() {
    let pi = std::f64::consts::PI;
    let mut max_errs = Vec::new();
    for n_side in [17, 33] {
        let mesh = square_mesh(n_side);
        let u: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| (pi * p.x).sin() * (pi * p.y).sin())
            .collect();
        let g = recover_gradient(&mesh, &u);
        let mut max_err = 0.0f64;
        for (i, p) in mesh.nodes.iter().enumerate() {
            if mesh.boundary[i] {
                // One-sided averaging at the boundary is first order with a
                // larger constant; the interior drives the check.
                continue;
            }
            let gx = pi * (pi * p.x).cos() * (pi * p.y).sin();
            let gy = pi * (pi * p.x).sin() * (pi * p.y).cos();
            max_err = max_err.max((g.vx[i] - gx).abs().max((g.vy[i] - gy).abs()));
        }
        max_errs.push(max_err);
    }
    assert!(
        max_errs[1] <= 0.05,
        "33x33 interior gradient error {} > 0.05",
        max_errs[1]
    );
    assert!(
        max_errs[1] < 0.75 * max_errs[0],
        "gradient error does not shrink under refinement: {max_errs:?}"
    );
}

#[test]
fn discrete_maximum_principle_on_delaunay_meshes() {
    for tag in ShapeTag::ALL {
        let mesh = generate_mesh(&ShapeSpec::default_for(tag)).unwrap();
        let source: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|p| if p.x > 0.3 && p.y > 0.3 { 1.0 } else { 0.0 })
            .collect();
        let (u, _) = solve_electrostatics(&mesh, &source).unwrap();
        let min = u.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min >= -1e-10, "{tag:?}: min potential {min}");
    }
}

#[test]
fn solver_is_linear_in_the_source() {
    let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::Disk)).unwrap();
    let f: Vec<f64> = mesh.nodes.iter().map(|p| (3.0 * p.x).sin()).collect();
    let g: Vec<f64> = mesh.nodes.iter().map(|p| p.y * p.y).collect();
    let (alpha, beta) = (1.7, -0.4);
    let combined: Vec<f64> = f
        .iter()
        .zip(&g)
        .map(|(&fv, &gv)| alpha * fv + beta * gv)
        .collect();
    let (uf, _) = solve_electrostatics(&mesh, &f).unwrap();
    let (ug, _) = solve_electrostatics(&mesh, &g).unwrap();
    let (uc, _) = solve_electrostatics(&mesh, &combined).unwrap();
    for i in 0..mesh.n_nodes() {
        assert!((uc[i] - (alpha * uf[i] + beta * ug[i])).abs() < 1e-8);
    }
}

#[test]
fn elasticity_matches_dense_oracle_and_bends_like_a_cantilever() {
    let mesh = square_mesh(6);
    let n = mesh.n_nodes();
    let body = VectorField {
        vx: vec![0.0; n],
        vy: vec![-0.4; n],
    };
    let fixed: Vec<usize> = (0..n).filter(|&i| mesh.nodes[i].x < 1e-9).collect();
    let disp = solve_elasticity(&mesh, &body, &fixed).unwrap();

    // Dense LU on the reduced system (60 unknowns here); the LU path shares
    // no code with the CG solver.
    let system = fieldop::fem::assemble_elasticity(&mesh, &body, &fixed).unwrap();
    let n_free = system.free_dofs.len();
    assert!(n_free <= 200);
    let lu = common::lu_solve(&system.matrix.to_dense(), n_free, &system.rhs);
    for (ri, &dof) in system.free_dofs.iter().enumerate() {
        let cg = if dof % 2 == 0 {
            disp.vx[dof / 2]
        } else {
            disp.vy[dof / 2]
        };
        assert!((cg - lu[ri]).abs() < 1e-8, "dof {dof}: cg {cg} vs lu {}", lu[ri]);
    }

    let mut max_mag = 0.0;
    let mut argmax = 0;
    for i in 0..n {
        let mag = (disp.vx[i].powi(2) + disp.vy[i].powi(2)).sqrt();
        if mag > max_mag {
            max_mag = mag;
            argmax = i;
        }
    }
    assert!(max_mag > 0.0);
    assert!(
        mesh.nodes[argmax].x > 0.99,
        "max displacement at x={} (expected the free right edge)",
        mesh.nodes[argmax].x
    );
    // Downward load bends downward.
    assert!(disp.vy[argmax] < 0.0);
}

#[test]
fn superposition_of_sources_matches_summed_solutions() {
    use fieldop::dataset::sample_sources;
    for tag in ShapeTag::ALL {
        let mesh = generate_mesh(&ShapeSpec::default_for(tag)).unwrap();
        let mut r1 = fieldop::rng::rng_for(10, &[fieldop::rng::tag(tag.as_str())]);
        let mut r2 = fieldop::rng::rng_for(11, &[fieldop::rng::tag(tag.as_str())]);
        let (rho1, _) = sample_sources(&mesh, (1, 3), &mut r1).unwrap();
        let (rho2, _) = sample_sources(&mesh, (1, 3), &mut r2).unwrap();
        let sum: Vec<f64> = rho1.iter().zip(&rho2).map(|(&a, &b)| a + b).collect();
        let (u1, _) = solve_electrostatics(&mesh, &rho1).unwrap();
        let (u2, _) = solve_electrostatics(&mesh, &rho2).unwrap();
        let (us, _) = solve_electrostatics(&mesh, &sum).unwrap();
        let max_diff = (0..mesh.n_nodes())
            .map(|i| (us[i] - (u1[i] + u2[i])).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-8, "{tag:?}: max abs deviation {max_diff:.3e}");
    }
}

#[test]
fn operator_reuse_is_bitwise_identical_to_fresh_assembly() {
    let mesh = generate_mesh(&ShapeSpec::default_for(ShapeTag::DiskHole)).unwrap();
    let op = PoissonOperator::new(&mesh).unwrap();
    let source: Vec<f64> = mesh.nodes.iter().map(|p| p.x).collect();
    let a = op.solve(&mesh, &source).unwrap();
    let (b, _) = solve_electrostatics(&mesh, &source).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
