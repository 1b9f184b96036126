use std::f64::consts::PI;

use num_complex::Complex64;
use qcit::cgo::{BoundaryIntegral, CgoOptions, TraceEntry};
use qcit::fields::{Domain, Grid2D};
use qcit::forward::{dtn_assemble, dtn_laplace, dtn_perturbation, BoundaryDiscretization, MeshOptions};
use qcit::phantom;
use qcit::sigma::*;
use rand::{Rng, SeedableRng};

mod common;
use common::Interior;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn bump(z: Complex64) -> f64 {
    phantom::radial_bump(z)[0]
}

fn small_opts() -> SigmaOptions {
    SigmaOptions { rings: 12, min_ring: 32, max_iter: 25, ..SigmaOptions::default() }
}

fn unit_grid(n: usize) -> Grid2D {
    Grid2D::square(c(0.0, 0.0), 1.0, n, Domain::unit_disk()).unwrap()
}

#[test]
fn identity_has_no_scattering() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let lam0 = dtn_laplace(&bd, MeshOptions::default()).unwrap();
    let lambda = c(3.0, 1.0);
    let psi = TraceEntry { lambda, param: 0, psi: bd.nodes.iter().map(|z| (lambda * z).exp()).collect(), cond: 1.0 };
    let s = scattering_data(&lam0, &lam0, &psi).unwrap();
    assert!(s.value.norm() < 1e-8);
}

#[test]
fn scattering_is_linear_in_the_trace() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let d = dtn_perturbation(&phantom::radial_bump, &bd, MeshOptions { rings: 24, min_ring: 64 }).unwrap();
    let lambda = Complex64::from_polar(4.0, 0.7);
    let psi: Vec<Complex64> = bd.nodes.iter().map(|z| (lambda * z).exp() * (1.0 + 0.1 * z)).collect();
    let one = TraceEntry { lambda, param: 0, psi: psi.clone(), cond: 1.0 };
    let two = TraceEntry { psi: psi.iter().map(|p| 2.0 * p).collect(), ..one.clone() };
    let a = scattering_from_difference(&bd, &d, &one).unwrap().value;
    let b = scattering_from_difference(&bd, &d, &two).unwrap().value;
    assert!((b - 2.0 * a).norm() <= 1e-12 * a.norm());
}

#[test]
fn bump_scattering_matches_interior_solution() {
    let nb = 256;
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, nb);
    let d = dtn_perturbation(&phantom::radial_bump, &bd, MeshOptions::default()).unwrap();
    let bi = BoundaryIntegral::from_difference(bd.clone(), d.clone()).unwrap();
    let sqrt_sigma = |r: f64| bump(c(r, 0.0)).sqrt();
    for lambda in [c(4.0, 0.0), Complex64::from_polar(4.0, 2.0)] {
        let psi = bi.solve(lambda, &CgoOptions::default()).unwrap();
        let got = scattering_from_difference(&bd, &d, &psi).unwrap().value;
        // ∮ e^{−λ̄z̄} ∂̄ψ dz̄ with dz̄ = −i z̄ dt on the unit circle
        let dbar = Interior::solve(&sqrt_sigma, lambda).dbar_psi(&bd.nodes);
        let h = 2.0 * PI / nb as f64;
        let want: Complex64 = bd
            .nodes
            .iter()
            .zip(&dbar)
            .map(|(z, f)| (-(lambda * z).conj()).exp() * f * c(0.0, -1.0) * z.conj() * h)
            .sum();
        let err = (got - want).norm() / want.norm();
        assert!(err < 5e-3, "λ = {lambda}: {got} vs {want} ({err:e})");
    }
}

fn bump_problem() -> (SigmaProblem, qcit::DtnMatrix) {
    let opts = small_opts();
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 32);
    let lam = dtn_assemble(&phantom::radial_bump, &bd, opts.mesh()).unwrap();
    (SigmaProblem::new(&lam, &unit_grid(12), &opts).unwrap(), lam)
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let (prob, _) = bump_problem();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let x: Vec<f64> = (0..prob.len()).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let alpha = 1e-3;
    let st = prob.state(&x).unwrap();
    let g = prob.gradient(&st, alpha);
    let q = |x: &[f64]| prob.objective(&prob.state(x).unwrap(), alpha);
    let eps = 1e-5;
    for _ in 0..20 {
        let d: Vec<f64> = (0..prob.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let plus: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + eps * d).collect();
        let minus: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x - eps * d).collect();
        let fd = (q(&plus) - q(&minus)) / (2.0 * eps);
        let an: f64 = g.iter().zip(&d).map(|(g, d)| g * d).sum();
        assert!((fd - an).abs() <= 1e-5 * an.abs().max(fd.abs()), "{an} vs {fd}");
    }
}

#[test]
fn jvp_is_the_transpose_of_vjp() {
    let (prob, _) = bump_problem();
    let st = prob.state(&vec![0.1; prob.len()]).unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let v: Vec<f64> = (0..prob.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = st.residual.nrows();
    let r = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 + ((j * 7 + i * 3) % 11) as f64);
    let lhs = prob.jvp(&st, &v).component_mul(&r).sum();
    let rhs: f64 = prob.vjp(&st, &r).iter().zip(&v).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
}

#[test]
fn identity_data_is_fitted_immediately() {
    let opts = small_opts();
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 32);
    let lam0 = dtn_laplace(&bd, opts.mesh()).unwrap();
    let rec = reconstruct_sigma(&lam0, &unit_grid(12), &opts).unwrap();
    assert!(rec.report.converged && rec.report.initial_misfit < 1e-10);
    assert!(rec.s.iter().all(|s| (s - 1.0).abs() < 1e-6));
}

#[test]
fn bump_reconstruction_reduces_the_misfit_monotonically() {
    let (_, lam) = bump_problem();
    let rec = reconstruct_sigma(&lam, &unit_grid(12), &small_opts()).unwrap();
    let h = &rec.report.history;
    assert!(!h.is_empty());
    for w in h.windows(2) {
        if w[0].alpha == w[1].alpha {
            assert!(w[1].objective <= w[0].objective);
        }
    }
    assert!(rec.report.final_misfit() < 0.1 * rec.report.initial_misfit);
    let err = rec.relative_l2(&bump);
    assert!(err < 0.1, "{err}");
}

#[test]
fn refined_data_gives_a_reasonable_bump() {
    let opts = small_opts();
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 32);
    let grid = unit_grid(12);
    let lam0 = dtn_refined(&phantom::identity, &bd, opts.mesh()).unwrap();
    let clean = dtn_refined(&phantom::radial_bump, &bd, opts.mesh()).unwrap();
    let e0 = reconstruct_sigma_difference(&clean, &lam0, &grid, &opts).unwrap().relative_l2(&bump);
    let noisy = clean.with_noise(1e-4, 11);
    let e1 = reconstruct_sigma_difference(&noisy, &lam0, &grid, &opts).unwrap().relative_l2(&bump);
    assert!(e0 < 0.15, "{e0}");
    assert!(e1 <= 2.0 * e0, "{e1} vs {e0}");
}

#[test]
fn empty_ladder_is_rejected() {
    let (_, lam) = bump_problem();
    let opts = SigmaOptions { alpha_ladder: vec![], ..small_opts() };
    assert!(reconstruct_sigma(&lam, &unit_grid(12), &opts).is_err());
}

#[test]
fn hessian_diagonal_matches_unit_jvps() {
    let (prob, _) = bump_problem();
    let st = prob.state(&vec![0.05; prob.len()]).unwrap();
    let diag = prob.hessian_diagonal(&st, 0.0);
    let scale = st.residual.norm() / prob.relative_misfit(&st);
    for v in (0..prob.len()).step_by(7) {
        let mut e = vec![0.0; prob.len()];
        e[v] = 1.0;
        let want = prob.jvp(&st, &e).norm_squared() / (scale * scale);
        assert!((diag[v] - want).abs() <= 1e-10 * want, "{v}: {} vs {want}", diag[v]);
    }
}
