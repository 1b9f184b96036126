use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qcit::beltrami::*;
use qcit::fields::{BeltramiField, ConductivityField, Domain};
use qcit::phantom;
use rand::{Rng, SeedableRng};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn zero() -> Complex64 {
    c(0.0, 0.0)
}

/// Mean-zero density with random Fourier coefficients for `0 < |k| ≤ band`.
fn band_limited(sg: &SpectralGrid, band: i64, seed: u64) -> Vec<Complex64> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let n = sg.n;
    let mut buf = vec![zero(); n * n];
    for j in -band..=band {
        for i in -band..=band {
            if i == 0 && j == 0 {
                continue;
            }
            let (a, b) = ((i.rem_euclid(n as i64)) as usize, (j.rem_euclid(n as i64)) as usize);
            buf[b * n + a] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    // synthesize through the public transform: ∂̄ of a periodic field is mean-zero
    sg.dbar(&buf)
}

/// Indicator of a centred disk, averaged over 8×8 sub-samples per cell.
fn disk_indicator(sg: &SpectralGrid, radius: f64) -> Vec<Complex64> {
    let h = sg.h();
    (0..sg.len())
        .map(|k| {
            let z = sg.point(k);
            if (z.norm() - radius).abs() > h {
                return c(if z.norm() < radius { 1.0 } else { 0.0 }, 0.0);
            }
            let mut inside = 0;
            for a in 0..8 {
                for b in 0..8 {
                    let p = z + c((a as f64 + 0.5) / 8.0 - 0.5, (b as f64 + 0.5) / 8.0 - 0.5) * h;
                    inside += (p.norm() < radius) as usize;
                }
            }
            c(inside as f64 / 64.0, 0.0)
        })
        .collect()
}

fn l2(sg: &SpectralGrid, f: &[Complex64]) -> f64 {
    f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * sg.h()
}

#[test]
fn beurling_is_an_isometry_on_mean_zero_densities() {
    let sg = SpectralGrid::new(256, 4.0, zero()).unwrap();
    for seed in 0..10 {
        let f = band_limited(&sg, 20, seed);
        let p = sg.beurling(&f);
        let r = l2(&sg, &p) / l2(&sg, &f);
        assert!((r - 1.0).abs() <= 1e-10, "{r}");
    }
}

#[test]
fn beurling_of_the_unit_disk() {
    let sg = SpectralGrid::new(1024, 6.0, zero()).unwrap();
    let f = disk_indicator(&sg, 1.0);
    let p = sg.beurling(&f);
    let n = sg.n;
    for k in 0..sg.len() {
        let z = sg.point(k);
        let r = z.norm();
        if (r - 2.0).abs() < sg.h() {
            let exact = -1.0 / (z * z);
            assert!((p[k] - exact).norm() < 1e-3, "{z}: {} vs {exact}", p[k]);
        }
    }
    // inside, away from the jump
    let centre = (n / 2) * n + n / 2;
    assert!(p[centre].norm() < 1e-2);
}

#[test]
fn cauchy_transform_of_zero_and_linearity() {
    let sg = SpectralGrid::new(64, 4.0, zero()).unwrap();
    let z = vec![zero(); sg.len()];
    assert!(sg.cauchy(&z).iter().all(|v| v.norm() == 0.0));
    let f = band_limited(&sg, 6, 1);
    let g = band_limited(&sg, 6, 2);
    let (a, b) = (c(0.3, -1.2), c(2.0, 0.5));
    let lhs = sg.cauchy(&f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect::<Vec<_>>());
    let rf = sg.cauchy(&f);
    let rg = sg.cauchy(&g);
    for k in 0..sg.len() {
        assert!((lhs[k] - a * rf[k] - b * rg[k]).norm() < 1e-12);
    }
}

#[test]
fn cauchy_transform_inverts_dbar() {
    let sg = SpectralGrid::new(128, 4.0, zero()).unwrap();
    let f = band_limited(&sg, 12, 7);
    let r = sg.periodic_cauchy(&f);
    let back = sg.dbar(&r);
    let err = f.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn cauchy_transform_of_a_disk_indicator() {
    let sg = SpectralGrid::new(512, 8.0, zero()).unwrap();
    let f: Vec<Complex64> = (0..sg.len()).map(|k| if sg.point(k).norm() < 1.0 { c(1.0, 0.0) } else { zero() }).collect();
    let r = sg.cauchy(&f);
    let mut worst: f64 = 0.0;
    for k in 0..sg.len() {
        let z = sg.point(k);
        let d = z.norm();
        if (d - 1.0).abs() < 0.1 || d > 2.0 {
            continue;
        }
        let exact = if d < 1.0 { z.conj() } else { 1.0 / z };
        worst = worst.max((r[k] - exact).norm());
    }
    assert!(worst < 5e-3, "{worst}");
}

#[test]
fn support_outside_the_central_half_is_rejected() {
    let sg = SpectralGrid::new(64, 4.0, zero()).unwrap();
    let mut mu = vec![zero(); sg.len()];
    mu[0] = c(0.1, 0.0);
    assert!(matches!(solve_on(&sg, &mu, 0.1, BeltramiOptions::default()), Err(qcit::Error::Alias(_))));
}

#[test]
fn zero_coefficient_gives_the_identity() {
    let sg = SpectralGrid::new(64, 4.0, zero()).unwrap();
    let s = solve_on(&sg, &vec![zero(); sg.len()], 0.0, BeltramiOptions::default()).unwrap();
    for k in 0..sg.len() {
        assert_eq!(s.w[k], sg.point(k));
    }
}

#[test]
fn radial_stretch_closed_form() {
    let sg = SpectralGrid::new(256, 4.0, zero()).unwrap();
    let kk = 2.0;
    let mu: Vec<Complex64> = (0..sg.len())
        .map(|q| {
            let z = sg.point(q);
            if z.norm() < 1.0 { (kk - 1.0) / (kk + 1.0) * z / z.conj() } else { zero() }
        })
        .collect();
    let s = solve_on(&sg, &mu, 1.0 / 3.0, BeltramiOptions::default()).unwrap();
    let err = (0..sg.len())
        .map(|q| {
            let z = sg.point(q);
            let exact = if z.norm() < 1.0 { z * z.norm() } else { z };
            (s.w[q] - exact).norm()
        })
        .fold(0.0, f64::max);
    assert!(err < 2e-2, "{err}");
    assert!(s.max_ratio() <= 1.0 / 3.0 + 0.05, "{}", s.max_ratio());
}

#[test]
fn constant_coefficient_on_a_disk() {
    let sg = SpectralGrid::new(256, 4.0, zero()).unwrap();
    let (mu0, a) = (c(-1.0 / 3.0, 0.0), 0.6);
    let mu: Vec<Complex64> = (0..sg.len()).map(|q| if sg.point(q).norm() < a { mu0 } else { zero() }).collect();
    let s = solve_on(&sg, &mu, 1.0 / 3.0, BeltramiOptions::default()).unwrap();
    let err = (0..sg.len())
        .filter(|&q| (sg.point(q).norm() - a).abs() > 0.05)
        .map(|q| {
            let z = sg.point(q);
            let exact = if z.norm() < a { z + mu0 * z.conj() } else { z + mu0 * a * a / z };
            (s.w[q] - exact).norm()
        })
        .fold(0.0, f64::max);
    assert!(err < 5e-3, "{err}");
}

#[test]
fn residual_oracle_for_a_disk_coefficient() {
    let sg = SpectralGrid::new(128, 4.0, zero()).unwrap();
    let mu: Vec<Complex64> = (0..sg.len()).map(|q| if sg.point(q).norm() < 0.7 { c(0.3, 0.0) } else { zero() }).collect();
    let s = solve_on(&sg, &mu, 0.3, BeltramiOptions::default()).unwrap();
    let norm_mu = mu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * sg.h();
    assert!(s.residual <= 1e-8 * norm_mu);
    // ∂̄w − μ∂w from the spectral quantities
    let worst = (0..sg.len()).map(|q| (s.dbar_w()[q] - mu[q] * s.dw[q]).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
    // decays like |∫f₀|/(π|z|) towards the margin
    let mass = sg.integral(&s.f0).norm();
    assert!(s.margin_defect() <= 1.5 * mass / (PI * 2.0) + 1e-6);
}

#[test]
fn isothermal_map_makes_the_smooth_phantom_isotropic() {
    let sg = SpectralGrid::new(256, 4.0, zero()).unwrap();
    let grid = sg.grid(Domain::disk(zero(), 0.6));
    let s = ConductivityField::from_fn(&grid, phantom::aniso_disk);
    let map = isothermal_map(&s, BeltramiOptions::default()).unwrap();
    let d = map.isotropy_defect().unwrap();
    assert!(d < 2e-2, "{d}");
    // √det on the plateau
    let centre = grid.index(128, 128);
    assert!((map.sigma_at_source[centre] - 2.0).abs() < 1e-12);
}

#[test]
fn manufactured_gauge_solution_is_the_inverse_shear() {
    let sg = SpectralGrid::new(256, 4.0, zero()).unwrap();
    let grid = sg.grid(Domain::unit_disk());
    let s = ConductivityField::from_fn(&grid, phantom::sheared_bump);
    let map = isothermal_map(&s, BeltramiOptions::default()).unwrap();
    let w = &map.solution.w;
    let err = (0..sg.len()).map(|q| (w[q] - phantom::shear_inverse(sg.point(q))).norm()).fold(0.0, f64::max);
    assert!(err < 5e-3, "{err}");
    let target = qcit::fields::Grid2D::square(zero(), 0.5, 16, Domain::disk(zero(), 0.4)).unwrap();
    let iso = map.sigma_on(&target).unwrap();
    for (k, z) in target.centers().into_iter().enumerate() {
        let truth = phantom::radial_bump(z)[0];
        assert!((iso[k] - truth).abs() < 1e-2, "{z}: {} vs {truth}", iso[k]);
    }
}

#[test]
fn p_norm_constants_grow_with_p() {
    // f = conj(Π h) for h = r^a on a disk: ‖Πf‖_p/‖f‖_p tends to p − 1 as a → −2/p
    let sg = SpectralGrid::new(256, 4.0, zero()).unwrap();
    let ps = [2.0, 2.5, 3.0, 4.0];
    let mut cp = [0.0f64; 4];
    for (slot, &p) in ps.iter().enumerate() {
        for frac in [0.5, 0.7, 0.85] {
            let a = -frac * 2.0 / p;
            let h: Vec<Complex64> = (0..sg.len())
                .map(|q| {
                    let r = sg.point(q).norm();
                    c(if r < 0.8 { r.powf(a) } else { 0.0 }, 0.0)
                })
                .collect();
            let f: Vec<Complex64> = sg.beurling(&h).iter().map(|v| v.conj()).collect();
            let pf = sg.beurling(&f);
            let n = |v: &[Complex64]| v.iter().map(|z| z.norm().powf(p)).sum::<f64>().powf(1.0 / p);
            cp[slot] = cp[slot].max(n(&pf) / n(&f));
        }
    }
    assert!((cp[0] - 1.0).abs() < 1e-2, "{cp:?}");
    assert!(cp.windows(2).all(|w| w[0] < w[1]), "{cp:?}");
}

#[test]
fn beltrami_field_rejects_unit_dilatation() {
    let sg = SpectralGrid::new(16, 4.0, zero()).unwrap();
    let grid = sg.grid(Domain::unit_disk());
    assert!(BeltramiField::new(&grid, vec![c(1.0, 0.0); grid.len()]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn isometry_holds_for_random_bands(seed in 0u64..10_000, band in 1i64..30) {
        let sg = SpectralGrid::new(128, 4.0, zero()).unwrap();
        let f = band_limited(&sg, band, seed);
        let r = l2(&sg, &sg.beurling(&f)) / l2(&sg, &f);
        prop_assert!((r - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn contraction_ratio_is_bounded_by_k(k in 0.05f64..0.8, phase in 0.0f64..6.28) {
        let sg = SpectralGrid::new(64, 4.0, zero()).unwrap();
        let mu: Vec<Complex64> = (0..sg.len())
            .map(|q| if sg.point(q).norm() < 0.8 { Complex64::from_polar(k, phase) * (1.0 - sg.point(q).norm_sqr()) } else { zero() })
            .collect();
        let kk = mu.iter().map(|m| m.norm()).fold(0.0, f64::max);
        let s = solve_on(&sg, &mu, kk, BeltramiOptions::default()).unwrap();
        prop_assert!(s.max_ratio() <= kk + 0.05);
    }
}
