mod common;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcps_core::plant::{
    estimate, local_control, self_control, spectral_radius, step_plant, EstimatorMode, PlantModel, PlantState,
};
use sdcps_core::topology::NodeId;

use common::{consensus_direct, consensus_run, max_degree, random_connected_graph, spectral_radius_2x2};

#[test]
fn consensus_conserves_sum_and_reaches_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(2..=12);
        let extra = rng.gen_range(0..n);
        let g = random_connected_graph(&mut rng, n, extra, 1);
        let eps = 0.9 / max_degree(&g) as f64 * rng.gen_range(0.2..1.0);
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let sum0: f64 = x0.iter().sum();
        let mut worst = 0.0f64;
        let x = consensus_run(&g, eps, &x0, 10_000, |_, xs| {
            worst = worst.max((xs.iter().sum::<f64>() - sum0).abs());
        });
        assert!(worst <= 1e-9, "sum drift {worst}");
        let avg = sum0 / n as f64;
        let oracle = consensus_direct(&g, eps, &x0, 10_000);
        for (a, b) in x.iter().zip(&oracle) {
            assert!((a - avg).abs() <= 1e-6, "state {a} vs average {avg}");
            assert!((a - b).abs() <= 1e-9, "state {a} vs direct iteration {b}");
        }
    }
}

#[test]
fn closed_loop_decay_follows_spectral_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 100 {
        let a: [[f64; 2]; 2] = [
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        ];
        let k: [[f64; 2]; 2] = [
            [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
            [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        ];
        let closed = [
            [a[0][0] + k[0][0], a[0][1] + k[0][1]],
            [a[1][0] + k[1][0], a[1][1] + k[1][1]],
        ];
        let rho = spectral_radius_2x2(closed);
        if !(0.3..=1.2).contains(&rho) {
            continue;
        }
        checked += 1;
        let am = DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]);
        let km = DMatrix::from_row_slice(2, 2, &[k[0][0], k[0][1], k[1][0], k[1][1]]);
        let model = PlantModel::full_state(am.clone(), DMatrix::identity(2, 2)).unwrap();
        assert!((spectral_radius(&(am + &km)) - rho).abs() < 1e-9);
        let mut s = PlantState::new(
            &model,
            DVector::from_vec(vec![rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)]),
        )
        .unwrap();
        let norm = |x: &DVector<f64>| x[0].hypot(x[1]);
        let mut norms = vec![norm(&s.x)];
        for _ in 0..400 {
            let x_hat = estimate(&model, &EstimatorMode::FullObs, &s.x_hat, &s.y, &s.u).unwrap();
            let u = self_control(&km, &x_hat).unwrap();
            s = step_plant(&model, &s, &u, None).unwrap();
            norms.push(norm(&s.x));
        }
        let rate = (norms[400] / norms[200]).powf(1.0 / 200.0);
        assert!((rate - rho).abs() <= 0.03, "observed rate {rate}, radius {rho}");
        if rho < 0.97 {
            assert!(norms[400] < norms[0]);
        }
    }
}

proptest! {
    #[test]
    fn full_observation_estimate_is_exact(
        a in prop::collection::vec(-1.5f64..1.5, 4),
        x0 in prop::collection::vec(-5.0f64..5.0, 2),
        k in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let model = PlantModel::full_state(DMatrix::from_row_slice(2, 2, &a), DMatrix::identity(2, 2)).unwrap();
        let km = DMatrix::from_row_slice(2, 2, &k);
        let mut s = PlantState::new(&model, DVector::from_vec(x0)).unwrap();
        for _ in 0..30 {
            let x_hat = estimate(&model, &EstimatorMode::FullObs, &s.x_hat, &s.y, &s.u).unwrap();
            prop_assert_eq!(&x_hat, &s.x);
            let u = self_control(&km, &x_hat).unwrap();
            s = step_plant(&model, &s, &u, None).unwrap();
            s.x_hat = x_hat;
        }
    }

    #[test]
    fn empty_neighborhood_equals_self_control(
        k in prop::collection::vec(-3.0f64..3.0, 6),
        x in prop::collection::vec(-1e3f64..1e3, 3),
    ) {
        let km = DMatrix::from_row_slice(2, 3, &k);
        let xv = DVector::from_vec(x);
        let me = NodeId(4);
        let gains = BTreeMap::from([(me, km.clone())]);
        let est = BTreeMap::from([(me, xv.clone())]);
        let a = local_control(&gains, &est).unwrap();
        let b = self_control(&km, &xv).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
