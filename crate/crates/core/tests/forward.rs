use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qcit::forward::*;
use qcit::phantom;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn identity(_: Complex64) -> [f64; 3] {
    [1.0, 0.0, 1.0]
}

fn opts(rings: usize) -> MeshOptions {
    MeshOptions { rings, min_ring: 64 }
}

fn fourier_mode(bd: &BoundaryDiscretization, n: i32) -> Vec<Complex64> {
    (0..bd.len()).map(|k| Complex64::from_polar(1.0, n as f64 * 2.0 * PI * k as f64 / bd.len() as f64)).collect()
}

#[test]
fn disk_spectrum_matches_separation_of_variables() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 256);
    let lam = dtn_laplace(&bd, MeshOptions::for_spacing(1.0, 2.2 / 256.0)).unwrap();
    for n in -8i32..=8 {
        let e = fourier_mode(&bd, n);
        let le = lam.apply_complex(&e);
        let err = le.iter().zip(&e).map(|(a, b)| (a - b * n.abs() as f64).norm()).fold(0.0, f64::max);
        assert!(err <= 0.01 * (n.abs() as f64).max(1.0), "mode {n}: {err}");
    }
}

#[test]
fn constants_are_in_the_kernel() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let lam = dtn_assemble(&phantom::aniso_disk, &bd, opts(16)).unwrap();
    assert!(lam.kernel_defect() <= 1e-8, "{}", lam.kernel_defect());
    assert!(lam.asymmetry() <= 1e-12);
}

#[test]
fn scaling_by_a_constant_conductivity() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let l1 = dtn_laplace(&bd, opts(16)).unwrap();
    let l3 = dtn_assemble(&|_z: Complex64| [3.0, 0.0, 3.0], &bd, opts(16)).unwrap();
    let d = (&l3.data - &l1.data * 3.0).amax() / l3.data.amax();
    assert!(d < 1e-12, "{d}");
}

#[test]
fn linear_data_is_reproduced_for_constant_tensors() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let f: Vec<f64> = bd.nodes.iter().map(|z| z.re).collect();
    let sigma = |_z: Complex64| [4.0, 0.0, 1.0];
    let sol = solve_dirichlet(&sigma, &bd, &f, opts(16)).unwrap();
    for (p, u) in sol.fem.mesh.points.iter().zip(&sol.u) {
        assert!((p.re - u).abs() < 1e-11);
    }
    assert!(sol.residual(&sigma) < 1e-12);
}

#[test]
fn quadratic_harmonic_converges_at_second_order() {
    let mut errs = Vec::new();
    for (nb, k) in [(128, 24), (256, 48)] {
        let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, nb);
        let f: Vec<f64> = bd.nodes.iter().map(|z| (z * z).re).collect();
        let sol = solve_dirichlet(&identity, &bd, &f, opts(k)).unwrap();
        let e = sol.fem.mesh.points.iter().zip(&sol.u).map(|(p, u)| ((p * p).re - u).abs()).fold(0.0, f64::max);
        errs.push(e);
    }
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
}

#[test]
fn maximum_principle_for_isotropic_bump() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let f: Vec<f64> = bd.nodes.iter().map(|z| (3.0 * z.arg()).sin()).collect();
    let sol = solve_dirichlet(&phantom::radial_bump, &bd, &f, opts(16)).unwrap();
    let (lo, hi) = f.iter().fold((f64::MAX, f64::MIN), |a, &v| (a.0.min(v), a.1.max(v)));
    for u in &sol.u {
        assert!(*u <= hi + 1e-9 && *u >= lo - 1e-9);
    }
}

#[test]
fn square_domain_linear_flux() {
    let mut nodes = Vec::new();
    let m = 16;
    for k in 0..m {
        nodes.push(c(-1.0 + 2.0 * k as f64 / m as f64, -1.0));
    }
    for k in 0..m {
        nodes.push(c(1.0, -1.0 + 2.0 * k as f64 / m as f64));
    }
    for k in 0..m {
        nodes.push(c(1.0 - 2.0 * k as f64 / m as f64, 1.0));
    }
    for k in 0..m {
        nodes.push(c(-1.0, 1.0 - 2.0 * k as f64 / m as f64));
    }
    let bd = BoundaryDiscretization::polygonal(nodes).unwrap();
    let lam = dtn_laplace(&bd, opts(16)).unwrap();
    let f: Vec<f64> = bd.nodes.iter().map(|z| z.re).collect();
    let flux = lam.apply(&f);
    for k in 0..bd.len() {
        let z = bd.nodes[k];
        // skip corners, where the lumped normal is an average
        if (z.re.abs() - 1.0).abs() < 1e-12 && (z.im.abs() - 1.0).abs() < 1e-12 {
            continue;
        }
        let expect = if (z.re.abs() - 1.0).abs() < 1e-12 { z.re.signum() } else { 0.0 };
        let next = bd.nodes[(k + 1) % bd.len()];
        let prev = bd.nodes[(k + bd.len() - 1) % bd.len()];
        let near_corner = [next, prev].iter().any(|p| (p.re.abs() - 1.0).abs() < 1e-12 && (p.im.abs() - 1.0).abs() < 1e-12);
        if near_corner {
            continue;
        }
        assert!((flux[k] - expect).abs() < 1e-10, "node {k}: {} vs {expect}", flux[k]);
    }
}

#[test]
fn transport_identity_and_rotation() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let lam = dtn_laplace(&bd, opts(16)).unwrap();
    let same = dtn_transport(&lam, &bd.nodes).unwrap();
    assert!((&same.data - &lam.data).amax() < 1e-12);
    let rot = Complex64::from_polar(1.0, 0.3);
    let img: Vec<Complex64> = bd.nodes.iter().map(|z| z * rot).collect();
    let t = dtn_transport(&lam, &img).unwrap();
    for n in 1..6 {
        let e = fourier_mode(&t.bd, n);
        let le = t.apply_complex(&e);
        let ratio = le[3] / e[3];
        assert!((ratio.re - lam.apply_complex(&fourier_mode(&bd, n))[3].re / e[3].re).abs() < 1e-9);
    }
}

#[test]
fn transport_scaling_matches_direct_assembly() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 128);
    let lam = dtn_laplace(&bd, opts(24)).unwrap();
    let img: Vec<Complex64> = bd.nodes.iter().map(|z| z * 2.0).collect();
    let t = dtn_transport(&lam, &img).unwrap();
    let bd2 = BoundaryDiscretization::circle(c(0.0, 0.0), 2.0, 128);
    let direct = dtn_laplace(&bd2, opts(24)).unwrap();
    let rel = (&t.data - &direct.data).norm() / direct.data.norm();
    assert!(rel < 1e-10, "{rel}");
    for n in 1..5 {
        let e = fourier_mode(&bd2, n);
        let ratio = (t.apply_complex(&e)[0] / e[0]).re;
        assert!((ratio - n as f64 / 2.0).abs() < 0.01 * n as f64, "{ratio}");
    }
}

#[test]
fn transport_rejects_reversed_maps() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 32);
    let lam = dtn_laplace(&bd, opts(8)).unwrap();
    let mut img = bd.nodes.clone();
    img.swap(3, 4);
    assert!(matches!(dtn_transport(&lam, &img), Err(qcit::Error::NonMonotone { .. })));
}

fn glue_case(sigma: &dyn qcit::fields::TensorField) -> f64 {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 128);
    let o = opts(32);
    let b = annulus_blocks(sigma, &bd, o).unwrap();
    let inner = interface_dtn(sigma, &b, o).unwrap();
    let glued = dtn_glue(&b.l11, &b.l12, &b.l21, &b.l22, &inner.data).unwrap();
    let direct = dtn_assemble(sigma, &bd, o).unwrap();
    (&glued - &direct.data).norm() / direct.data.norm()
}

#[test]
fn gluing_reproduces_direct_assembly() {
    assert!(glue_case(&identity) < 1e-6);
    assert!(glue_case(&phantom::concentric_disks) < 1e-6);
}

#[test]
fn gluing_rejects_degenerate_blocks() {
    let z = DMatrix::<f64>::zeros(0, 0);
    assert!(dtn_glue(&z, &z, &z, &z, &z).is_err());
    let a = DMatrix::<f64>::zeros(4, 4);
    assert!(matches!(dtn_glue(&a, &a, &a, &a, &a), Err(qcit::Error::SingularGlue { .. })));
}

#[test]
fn perturbation_matches_difference_of_operators() {
    let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 64);
    let o = opts(16);
    let d = dtn_perturbation(&phantom::aniso_disk, &bd, o).unwrap();
    let l = dtn_assemble(&phantom::aniso_disk, &bd, o).unwrap();
    let l0 = dtn_laplace(&bd, o).unwrap();
    let diff = &l.data - &l0.data;
    assert!((&d - &diff).amax() < 1e-10 * l0.data.amax());
}

#[test]
fn tartar_gauge_converges_under_refinement() {
    let mut errs = Vec::new();
    for (nb, k) in [(64, 16), (128, 32)] {
        let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, nb);
        let o = opts(k);
        let a = dtn_assemble(&phantom::radial_bump, &bd, o).unwrap();
        let b = dtn_assemble(&phantom::gauge_partner, &bd, o).unwrap();
        errs.push((&a.data - &b.data).norm() / a.data.norm());
    }
    assert!(errs[1] < errs[0] * 0.75, "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn energy_form_is_symmetric(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 32);
        let lam = dtn_assemble(&phantom::sheared_bump, &bd, opts(8)).unwrap();
        let s = lam.energy();
        let f: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fv = nalgebra::DVector::from_vec(f);
        let gv = nalgebra::DVector::from_vec(g);
        let d = (fv.dot(&(&s * &gv)) - gv.dot(&(&s * &fv))).abs();
        prop_assert!(d <= 1e-8 * fv.norm() * gv.norm());
    }

    #[test]
    fn monotone_in_conductivity(seed in 0u64..1000, bump in 0.1f64..2.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let bd = BoundaryDiscretization::circle(c(0.0, 0.0), 1.0, 32);
        let lo = dtn_assemble(&phantom::radial_bump, &bd, opts(8)).unwrap();
        let hi = dtn_assemble(&|z: Complex64| { let [a, b, c] = phantom::radial_bump(z); [a + bump, b, c + bump] }, &bd, opts(8)).unwrap();
        let f = nalgebra::DVector::from_vec((0..32).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        let qlo = f.dot(&(lo.energy() * &f));
        let qhi = f.dot(&(hi.energy() * &f));
        prop_assert!(qhi >= qlo - 1e-10);
    }
}
