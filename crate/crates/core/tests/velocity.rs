use proptest::prelude::*;

use radseg::stage2::{estimate_velocity, Ray, SolverConfig};

fn rays(v: (f64, f64), bearings: &[f64]) -> Vec<Ray> {
    bearings
        .iter()
        .map(|&b| Ray {
            bearing: b,
            radial_velocity: v.0 * b.cos() + v.1 * b.sin(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn recovers_noise_free_velocity(
        vx in -20.0f64..20.0,
        vy in -20.0f64..20.0,
        start in -3.0f64..3.0,
        spread in 0.5f64..3.0,
        n in 3usize..30,
    ) {
        let bearings: Vec<f64> = (0..n).map(|i| start + spread * i as f64 / (n - 1) as f64).collect();
        let est = estimate_velocity(&rays((vx, vy), &bearings), &SolverConfig::default()).unwrap();
        prop_assert!((est.vx - vx).abs() <= 1e-9 && (est.vy - vy).abs() <= 1e-9, "{est:?}");
        prop_assert_eq!(est.inliers, n);
    }

    #[test]
    fn trims_offset_outliers(
        vx in -15.0f64..15.0,
        vy in -15.0f64..15.0,
        start in -3.0f64..3.0,
        fifths in 2usize..8,
    ) {
        // every fifth ray reads 3 m/s too fast
        let n = 5 * fifths;
        let bearings: Vec<f64> = (0..n).map(|i| start + 1.5 * i as f64 / (n - 1) as f64).collect();
        let mut rs = rays((vx, vy), &bearings);
        for r in rs.iter_mut().step_by(5) {
            r.radial_velocity += 3.0;
        }
        let cfg = SolverConfig { inlier_threshold: 0.5, ..SolverConfig::default() };
        let est = estimate_velocity(&rs, &cfg).unwrap();
        prop_assert!((est.vx - vx).abs() <= 1e-6 && (est.vy - vy).abs() <= 1e-6, "{est:?}");
        prop_assert_eq!(est.inliers, n - fifths);
    }
}

#[test]
fn parallel_rays_have_no_solution() {
    let rs = rays((3.0, 1.0), &[0.4; 6]);
    assert!(estimate_velocity(&rs, &SolverConfig::default()).is_none());
}

#[test]
fn too_few_inliers_is_none() {
    let rs = rays((3.0, 1.0), &[0.0, 1.0]);
    assert!(estimate_velocity(&rs, &SolverConfig::default()).is_none());
}
