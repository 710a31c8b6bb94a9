//! Periodic-box spatial discretization: grids, complex fields, spectral
//! differentiation, inner products, norms and binary snapshots.

mod fft;
mod field;
mod grid;
pub mod snapshot;

pub use field::{ComplexField, Norms};
pub use grid::{same_grid, Grid};

use std::sync::Arc;

use crate::error::Result;

/// Build a periodic grid on `[-L, L)^d` with `n` points per axis.
pub fn make_grid(d: usize, l: f64, n: usize) -> Result<Arc<Grid>> {
    Grid::new(d, l, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid1() -> Arc<Grid> {
        make_grid(1, 10.0, 256).unwrap()
    }

    #[test]
    fn make_grid_spacing() {
        let g = make_grid(1, 10.0, 2048).unwrap();
        assert_relative_eq!(g.spacing(), 20.0 / 2048.0, max_relative = 1e-15);
        let g2 = make_grid(2, 10.0, 256).unwrap();
        assert_eq!(g2.len(), 65536);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(make_grid(1, 10.0, 100).is_err());
        assert!(make_grid(3, 10.0, 128).is_err());
        assert!(make_grid(1, -1.0, 128).is_err());
        assert!(make_grid(1, 10.0, 32).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = grid1();
        let f = ComplexField::from_fn(&g, |_| Complex64::new(2.5, -1.0));
        let grad = f.gradient().unwrap();
        assert!(grad[0].max_abs() < 1e-13);
    }

    #[test]
    fn gradient_of_resolved_modes_is_exact() {
        let g = grid1();
        let l = g.half_width();
        // f = sin(pi x / L) -> (pi/L) cos(pi x / L)
        let f = ComplexField::from_fn(&g, |p| Complex64::new((PI * p[0] / l).sin(), 0.0));
        let grad = f.gradient().unwrap();
        let mut err: f64 = 0.0;
        for (idx, z) in grad[0].values().iter().enumerate() {
            let x = g.coord(idx);
            err = err.max((z.re - (PI / l) * (PI * x / l).cos()).abs());
            err = err.max(z.im.abs());
        }
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn gradient_of_plane_wave_matches_ik() {
        let g = grid1();
        let l = g.half_width();
        let k = PI / l;
        let f = ComplexField::from_fn(&g, |p| Complex64::from_polar(1.0, k * p[0]));
        let grad = f.gradient().unwrap();
        let mut err: f64 = 0.0;
        for (idx, z) in grad[0].values().iter().enumerate() {
            let x = g.coord(idx);
            let want = Complex64::new(0.0, k) * Complex64::from_polar(1.0, k * x);
            err = err.max((z - want).norm());
        }
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn gradient_of_gaussian_matches_analytic() {
        let g = make_grid(1, 10.0, 2048).unwrap();
        let f = ComplexField::from_fn(&g, |p| Complex64::new((-p[0] * p[0]).exp(), 0.0));
        let grad = f.gradient().unwrap();
        let mut err: f64 = 0.0;
        for (idx, z) in grad[0].values().iter().enumerate() {
            let x = g.coord(idx);
            err = err.max((z.re - (-2.0 * x * (-x * x).exp())).abs());
        }
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn gradient_2d_gaussian() {
        let g = make_grid(2, 10.0, 128).unwrap();
        let f = ComplexField::from_fn(&g, |p| {
            Complex64::new((-(p[0] * p[0] + p[1] * p[1])).exp(), 0.0)
        });
        let grad = f.gradient().unwrap();
        let mut err: f64 = 0.0;
        for (idx, z) in grad[1].values().iter().enumerate() {
            let p = g.point(idx);
            let want = -2.0 * p[1] * (-(p[0] * p[0] + p[1] * p[1])).exp();
            err = err.max((z.re - want).abs());
        }
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn inner_product_box_volume() {
        let g = grid1();
        let one = ComplexField::from_fn(&g, |_| Complex64::new(1.0, 0.0));
        let ip = one.inner_product(&one).unwrap();
        assert_relative_eq!(ip.re, 20.0, max_relative = 1e-13);
        assert!(ip.im.abs() < 1e-13);
    }

    #[test]
    fn inner_product_rejects_grid_mismatch() {
        let a = ComplexField::zeros(&grid1());
        let b = ComplexField::zeros(&make_grid(1, 10.0, 128).unwrap());
        assert!(a.inner_product(&b).is_err());
    }

    #[test]
    fn norms_of_zero_field() {
        let f = ComplexField::zeros(&grid1());
        let n = f.norms(4.0).unwrap();
        assert_eq!(n.l2, 0.0);
        assert_eq!(n.h1, 0.0);
        assert_eq!(n.sigma, 0.0);
        assert_eq!(n.lp, 0.0);
    }

    #[test]
    fn l2_matches_quadrature_oracle() {
        // Independent oracle: composite Simpson on the analytic |f|^2.
        let g = make_grid(1, 10.0, 2048).unwrap();
        let f = ComplexField::from_fn(&g, |p| Complex64::new((-p[0] * p[0] / 2.0).exp(), 0.0));
        let m = 200001;
        let h = 20.0 / (m - 1) as f64;
        let mut simpson = 0.0;
        for i in 0..m {
            let x = -10.0 + i as f64 * h;
            let w = if i == 0 || i == m - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            simpson += w * (-x * x).exp();
        }
        simpson *= h / 3.0;
        assert_relative_eq!(f.l2_norm_sq(), simpson, max_relative = 1e-10);
    }

    #[test]
    fn shift_is_unitary_and_exact_on_modes() {
        let g = grid1();
        let l = g.half_width();
        let k = 3.0 * PI / l;
        let f = ComplexField::from_fn(&g, |p| Complex64::from_polar(1.0, k * p[0]));
        let delta = 0.37;
        let s = f.shift(&[delta]).unwrap();
        assert_relative_eq!(s.l2_norm(), f.l2_norm(), max_relative = 1e-13);
        let mut err: f64 = 0.0;
        for (idx, z) in s.values().iter().enumerate() {
            let x = g.coord(idx);
            err = err.max((z - Complex64::from_polar(1.0, k * (x + delta))).norm());
        }
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn fourier_eval_tensor_matches_samples() {
        let g = grid1();
        let f = ComplexField::from_fn(&g, |p| {
            Complex64::new((-p[0] * p[0] / 4.0).exp() * (0.9 * p[0]).cos(), 0.3 * (-p[0] * p[0] / 5.0).exp())
        });
        let xs: Vec<f64> = g.coords().to_vec();
        let vals = f.fourier_eval_tensor(&[xs]).unwrap();
        let mut err: f64 = 0.0;
        for (a, b) in vals.iter().zip(f.values()) {
            err = err.max((a - b).norm());
        }
        assert!(err < 1e-12, "max error {err}");
    }

    #[test]
    fn snapshot_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.nlsf");
        let g = grid1();
        let f = ComplexField::from_fn(&g, |p| Complex64::new(p[0].sin(), p[0].cos() * 0.1));
        snapshot::save_field(&path, &f, 0.625).unwrap();
        let (f2, t) = snapshot::load_field(&path).unwrap();
        assert_eq!(t.to_bits(), 0.625f64.to_bits());
        for (a, b) in f.values().iter().zip(f2.values()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // Plancherel: physical-space L2 equals Fourier-space L2.
        #[test]
        fn plancherel(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let g = make_grid(1, 10.0, 128).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = ComplexField::from_values(
                &g,
                (0..g.len())
                    .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect(),
            ).unwrap();
            let phys = f.l2_norm_sq();
            let spec: f64 = f.spectral().iter().map(|c| c.norm_sqr()).sum::<f64>()
                * g.len() as f64 * g.cell_volume();
            prop_assert!((phys - spec).abs() <= 1e-12 * phys.max(1e-300));
        }

        // Conjugate symmetry of the inner product.
        #[test]
        fn inner_product_conjugate_symmetric(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let g = make_grid(1, 10.0, 64).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut mk = || ComplexField::from_values(
                &g,
                (0..g.len())
                    .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect(),
            ).unwrap();
            let f = mk();
            let h = mk();
            let a = f.inner_product(&h).unwrap();
            let b = h.inner_product(&f).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1e-300));
        }

        // Derivative then antiderivative is the identity on pure modes.
        #[test]
        fn gradient_inverts_antiderivative(m in 1i64..20) {
            let g = make_grid(1, 10.0, 128).unwrap();
            let k = PI * m as f64 / g.half_width();
            // antiderivative of cos(kx) is sin(kx)/k
            let anti = ComplexField::from_fn(&g, |p| Complex64::new((k * p[0]).sin() / k, 0.0));
            let der = anti.gradient().unwrap().remove(0);
            let mut err: f64 = 0.0;
            for (idx, z) in der.values().iter().enumerate() {
                err = err.max((z.re - (k * g.coord(idx)).cos()).abs());
            }
            prop_assert!(err < 1e-10);
        }
    }
}
