use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;
use qcit::fields::*;
use qcit::phantom;
use qcit::Error;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn grid(n: usize) -> Grid2D {
    Grid2D::square(c(0.0, 0.0), 1.5, n, Domain::unit_disk()).unwrap()
}

fn close(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() < 1e-14
}

fn spd() -> impl Strategy<Value = [f64; 3]> {
    (0.1..5.0f64, 0.1..5.0f64, -0.99..0.99f64).prop_map(|(a, d, r)| [a, r * (a * d).sqrt(), d])
}

#[test]
fn complex_coefficients_of_simple_tensors() {
    assert_eq!(coeffs_of([1.0, 0.0, 1.0]), (1.0, c(0.0, 0.0)));
    assert_eq!(coeffs_of([4.0, 0.0, 1.0]), (2.5, c(1.5, 0.0)));
    assert_eq!(coeffs_of([2.0, 1.0, 2.0]), (2.0, c(0.0, -1.0)));
}

#[test]
fn dilatation_of_simple_tensors() {
    assert!(close(mu_of_tensor([1.0, 0.0, 1.0]), c(0.0, 0.0)));
    assert!(close(mu_of_tensor([4.0, 0.0, 1.0]), c(-1.0 / 3.0, 0.0)));
    assert!(close(mu_of_tensor([1.0, 0.0, 4.0]), c(1.0 / 3.0, 0.0)));
    let g = grid(16);
    let b = beltrami_of_conductivity(&ConductivityField::identity(&g)).unwrap();
    assert_eq!(b.k, 0.0);
}

#[test]
fn dilatation_vanishes_outside_the_mask() {
    let g = grid(24);
    let s = ConductivityField::from_fn(&g, |_| [4.0, 0.0, 1.0]);
    let b = beltrami_of_conductivity(&s).unwrap();
    for k in 0..g.len() {
        let want = if g.in_mask(k) { c(-1.0 / 3.0, 0.0) } else { c(0.0, 0.0) };
        assert!(close(b.mu[k], want));
    }
    assert!((b.k - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn indefinite_tensors_are_rejected() {
    let g = grid(16);
    let s = ConductivityField::from_fn(&g, |z| if z.norm() < 0.3 { [1.0, 2.0, 1.0] } else { [1.0, 0.0, 1.0] });
    assert!(matches!(beltrami_of_conductivity(&s), Err(Error::NonSpd { .. })));
    assert!(matches!(s.validate(), Err(Error::NonSpd { .. })));
}

#[test]
fn metric_structure_of_simple_metrics() {
    let g = grid(16);
    let n = g.len();
    let mu = |e: f64, f: f64, gg: f64| metric_to_beltrami(&g, &vec![e; n], &vec![f; n], &vec![gg; n]).unwrap().mu[0];
    assert!(close(mu(1.0, 0.0, 1.0), c(0.0, 0.0)));
    assert!(close(mu(4.0, 0.0, 1.0), c(1.0 / 3.0, 0.0)));
    assert!(close(mu(1.0, 0.5, 1.0), c(0.0, 0.5 / (1.0 + 0.75f64.sqrt()))));
    let degenerate = metric_to_beltrami(&g, &vec![1.0; n], &vec![1.0; n], &vec![1.0; n]);
    assert!(matches!(degenerate, Err(Error::DegenerateMetric { .. })));
}

#[test]
fn isotropic_value_is_the_root_determinant() {
    let g = grid(16);
    let z = [c(0.1, 0.2)];
    let v = |t: [f64; 3]| isotropize_value(&ConductivityField::from_fn(&g, |_| t), &z).unwrap()[0];
    assert!((v([1.0, 0.0, 1.0]) - 1.0).abs() < 1e-14);
    assert!((v([4.0, 0.0, 1.0]) - 2.0).abs() < 1e-14);
    // (σ⁰, σ¹) = (2, −i)
    assert!((v(tensor_of(2.0, c(0.0, -1.0))) - 3f64.sqrt()).abs() < 1e-14);
    let far = isotropize_value(&ConductivityField::identity(&g), &[c(5.0, 0.0)]);
    assert!(matches!(far, Err(Error::NonInvertible { .. })));
}

#[test]
fn identity_map_leaves_the_field_alone() {
    let g = grid(32);
    let s = ConductivityField::from_fn(&g, phantom::aniso_disk);
    let id = Diffeomorphism::conformal(&g, |z| z, |_| c(1.0, 0.0)).unwrap();
    let out = push_forward(&s, &id, &g).unwrap();
    for k in 0..g.len() {
        for (a, b) in out.at(k).iter().zip(s.at(k)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn scaling_keeps_the_identity() {
    let g = grid(32);
    let target = Grid2D::square(c(0.0, 0.0), 3.0, 32, Domain::disk(c(0.0, 0.0), 2.0)).unwrap();
    let phi = Diffeomorphism::conformal(&g, |z| 2.0 * z, |_| c(2.0, 0.0)).unwrap();
    let out = push_forward(&ConductivityField::identity(&g), &phi, &target).unwrap();
    for k in 0..target.len() {
        if target.in_mask(k) {
            assert_eq!(out.at(k), [1.0, 0.0, 1.0]);
        }
    }
}

#[test]
fn shear_matches_a_finite_difference_jacobian() {
    let g = grid(32);
    let shear = |z: Complex64| c(z.re + 0.3 * z.im, z.im);
    let phi = Diffeomorphism::from_samples(&g, g.centers().iter().map(|&z| shear(z)).collect()).unwrap();
    let target = Grid2D::square(c(0.0, 0.0), 0.6, 24, Domain::disk(c(0.0, 0.0), 0.3)).unwrap();
    let out = push_forward(&ConductivityField::identity(&g), &phi, &target).unwrap();
    // oracle: J from differences of the map, then J Jᵀ / det J
    let h = 1e-6;
    let dx = (shear(c(h, 0.0)) - shear(c(-h, 0.0))) / (2.0 * h);
    let dy = (shear(c(0.0, h)) - shear(c(0.0, -h))) / (2.0 * h);
    let j = Matrix2::new(dx.re, dy.re, dx.im, dy.im);
    let want = j * j.transpose() / j.determinant();
    for k in 0..target.len() {
        if target.in_mask(k) {
            let [a, b, d] = out.at(k);
            assert!((a - want[(0, 0)]).abs() < 1e-8 && (b - want[(0, 1)]).abs() < 1e-8 && (d - want[(1, 1)]).abs() < 1e-8);
        }
    }
}

#[test]
fn rotation_multiplies_the_dilatation_by_its_phase() {
    for phi in [0.3, PI / 2.0, 2.0] {
        let rot = Complex64::from_polar(1.0, phi);
        let j = [rot.re, -rot.im, rot.im, rot.re];
        for t in [[4.0, 0.0, 1.0], [2.0, 0.5, 1.0], [1.0, -0.3, 3.0]] {
            // dz_α/dz_β = e^{−iφ}, so μ_β = μ_α · e^{2iφ}
            let want = mu_of_tensor(t) * Complex64::from_polar(1.0, 2.0 * phi);
            assert!((mu_of_tensor(push_tensor(t, j)) - want).norm() < 1e-14);
        }
    }
}

#[test]
fn push_forward_and_back_converges_with_refinement() {
    let err = |n: usize| {
        let g = grid(n);
        let s = ConductivityField::from_fn(&g, phantom::radial_bump);
        let fwd = Diffeomorphism::from_map(&g, phantom::shear_map, phantom::shear_jacobian).unwrap();
        let there = push_forward(&s, &fwd, &g).unwrap();
        let back = Diffeomorphism::from_samples(&g, g.centers().iter().map(|&w| phantom::shear_inverse(w)).collect()).unwrap();
        let again = push_forward(&there, &back, &g).unwrap();
        (0..g.len())
            .filter(|&k| g.in_mask(k))
            .flat_map(|k| again.at(k).into_iter().zip(s.at(k)).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (err(32), err(64));
    assert!(fine < 0.1, "{fine}");
    assert!(coarse / fine > 1.8, "{coarse} -> {fine}");
}

#[test]
fn grid_round_trips_through_json() {
    let g = Grid2D::square(c(0.2, -0.1), 1.3, 20, Domain::polygon(&[c(-1.0, -1.0), c(1.0, -1.0), c(0.0, 1.0)])).unwrap();
    let back: Grid2D = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
    assert_eq!(back.mask(), g.mask());
    assert_eq!((back.origin, back.h, back.nx, back.ny), (g.origin, g.h, g.nx, g.ny));
}

#[test]
fn grids_without_a_band_are_invalid() {
    let tight = Grid2D::square(c(0.0, 0.0), 1.05, 32, Domain::unit_disk()).unwrap();
    assert!(tight.validate().is_err());
    assert!(grid(32).validate().is_ok());
}

#[test]
fn bilinear_weights_reproduce_linear_functions() {
    let g = grid(16);
    let f = |z: Complex64| 0.3 + 2.0 * z.re - 0.7 * z.im;
    let vals: Vec<f64> = g.centers().iter().map(|&z| f(z)).collect();
    for z in [c(0.1, 0.2), c(-0.55, 0.31), c(0.9, -0.9)] {
        let w = g.interp_weights(z).unwrap();
        let v: f64 = w.iter().map(|(k, t)| t * vals[*k]).sum();
        assert!((v - f(z)).abs() < 1e-13);
    }
}

proptest! {
    #[test]
    fn coefficients_round_trip(t in spd()) {
        let (s0, s1) = coeffs_of(t);
        let back = tensor_of(s0, s1);
        for (a, b) in back.iter().zip(t) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        prop_assert!(s0 > s1.norm());
    }

    #[test]
    fn dilatation_modulus_identity(t in spd()) {
        let [a, _, d] = t;
        let sq = (a * d - t[1] * t[1]).sqrt();
        let want = (a + d - 2.0 * sq) / (a + d + 2.0 * sq);
        prop_assert!((mu_of_tensor(t).norm_sqr() - want).abs() < 1e-12);
    }

    #[test]
    fn conformal_maps_preserve_isotropy(s in 0.1..5.0f64, a in 0.5..2.0f64, th in 0.0..6.0f64, z in (-0.5..0.5f64, -0.5..0.5f64)) {
        // f(z) = A z + 0.2 z²  with A = a e^{iθ}
        let z = c(z.0, z.1);
        let d = Complex64::from_polar(a, th) + 0.4 * z;
        let out = push_tensor([s, 0.0, s], [d.re, -d.im, d.im, d.re]);
        let (s0, s1) = coeffs_of(out);
        prop_assert!(s1.norm() < 1e-10 * s0);
        prop_assert!((s0 - s).abs() < 1e-12 * s);
    }

    #[test]
    fn push_forward_keeps_tensors_positive(t in spd(), j in (0.2..2.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.2..2.0f64)) {
        let j = [j.0, j.1, j.2, j.3];
        prop_assume!(j[0] * j[3] - j[1] * j[2] > 0.05);
        let [a, b, d] = push_tensor(t, j);
        prop_assert!(a > 0.0 && a * d - b * b > 0.0);
        // determinant is preserved by the |det J| normalization
        let det0 = t[0] * t[2] - t[1] * t[1];
        prop_assert!((a * d - b * b - det0).abs() < 1e-10 * det0.max(1.0));
    }
}
