mod common;

use fedspike_core::protocol::{decode, encode, Message};
use fedspike_core::rates::{cov_bound, pca_bound, RateInputs};
use fedspike_core::server::{cov_weights, pca_weights};
use fedspike_core::{
    projection_distance, random_orthonormal, sample_symmetric_noise, svd_r, ClientParams, ModelConstants, PrivacyBudget,
    ProjectorMessage, Server, ServerConfig, WeightScheme,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{oracle_projector, projector};

fn client() -> impl Strategy<Value = (usize, f64, f64)> {
    (10usize..100_000, 0.05f64..5.0, 0.01f64..0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_rotation_invariant_metric(p in 2usize..9, r in 1usize..3, s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        prop_assume!(r < p);
        let a = random_orthonormal(p, r, s1).unwrap();
        let b = random_orthonormal(p, r, s2).unwrap();
        let c = random_orthonormal(p, r, s3).unwrap();
        let dab = projection_distance(&a, &b).unwrap();
        prop_assert!((dab - projection_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(dab <= (2.0 * r as f64).sqrt() + 1e-12);
        prop_assert!(dab <= projection_distance(&a, &c).unwrap() + projection_distance(&c, &b).unwrap() + 1e-10);
        let q = random_orthonormal(r, r, s3).unwrap();
        prop_assert!(projection_distance(&a, &(&a * &q)).unwrap() < 1e-6);
        let o = random_orthonormal(p, p, s3 ^ 1).unwrap();
        prop_assert!((projection_distance(&(&o * &a), &(&o * &b)).unwrap() - dab).abs() < 1e-9);
        let direct = (projector(&a) - projector(&b)).norm();
        prop_assert!((direct - dab).abs() < 1e-6);
    }

    #[test]
    fn svd_r_matches_oracle_and_is_orthonormal(p in 2usize..7, r in 1usize..3, seed in any::<u64>()) {
        prop_assume!(r < p);
        let mut g = common::rng(seed);
        let m = common::random_symmetric(&mut g, p);
        let u = svd_r(&m, r).unwrap();
        prop_assert!((u.transpose() * &u - DMatrix::identity(r, r)).amax() < 1e-10);
        prop_assert!((projector(&u) - oracle_projector(&m, r)).amax() < 1e-8);
    }

    #[test]
    fn aggregation_ignores_message_order(seed in any::<u64>(), m in 2usize..6) {
        let server = Server::new(ServerConfig {
            model: ModelConstants { p: 6, r: 2, lambda: 5.0, sigma2: 1.0 },
            scheme: WeightScheme::Optimal,
            rate_proportional_weights: false,
            psd_clip: false,
        }).unwrap();
        let msgs: Vec<ProjectorMessage> = (0..m).map(|j| ProjectorMessage {
            client_id: format!("c{j}"),
            u_hat: random_orthonormal(6, 2, seed.wrapping_add(j as u64)).unwrap(),
            n: 100 * (j + 1),
            epsilon: 0.2 + 0.1 * j as f64,
            delta: 0.1,
            warnings: Vec::new(),
            reported_weight: None,
        }).collect();
        let forward = server.aggregate(&msgs).unwrap();
        let mut rev = msgs.clone();
        rev.reverse();
        let backward = server.aggregate(&rev).unwrap();
        prop_assert_eq!(forward.u_hat, backward.u_hat);
        prop_assert_eq!(forward.weights, backward.weights);
    }

    #[test]
    fn weights_are_a_probability_vector(clients in prop::collection::vec(client(), 1..8)) {
        let params: Vec<ClientParams> = clients.iter()
            .map(|&(n, e, d)| ClientParams::new(n, PrivacyBudget::new(e, d).unwrap()))
            .collect();
        let model = ModelConstants { p: 50, r: 2, lambda: 10.0, sigma2: 1.0 };
        for scheme in [WeightScheme::Optimal, WeightScheme::DataIndependent, WeightScheme::Equal] {
            let w = pca_weights(&params, &model, scheme).unwrap();
            prop_assert!(w.iter().all(|&x| x > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let v = cov_weights(&params, &model).unwrap();
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn federated_bound_beats_every_client(clients in prop::collection::vec(client(), 1..8)) {
        let inputs: Vec<RateInputs> = clients.iter()
            .map(|&(n, e, d)| RateInputs::new(n, PrivacyBudget::new(e, d).unwrap(), 50, 2, 10.0, 1.0))
            .collect();
        let all = pca_bound(&inputs).unwrap();
        let all_cov = cov_bound(&inputs, 10.0).unwrap();
        for inp in &inputs {
            prop_assert!(all <= pca_bound(std::slice::from_ref(inp)).unwrap() * (1.0 + 1e-12));
            prop_assert!(all_cov <= cov_bound(std::slice::from_ref(inp), 10.0).unwrap() * (1.0 + 1e-12));
        }
        let mut more = inputs.clone();
        more.push(inputs[0]);
        prop_assert!(pca_bound(&more).unwrap() <= all * (1.0 + 1e-12));
    }

    #[test]
    fn projector_messages_round_trip(p in 2usize..12, r in 1usize..4, seed in any::<u64>(), n in 2usize..1_000_000, eps in 1e-3f64..50.0) {
        prop_assume!(r <= p);
        let msg = Message::Projector(ProjectorMessage {
            client_id: format!("site_{seed}"),
            u_hat: random_orthonormal(p, r, seed).unwrap(),
            n,
            epsilon: eps,
            delta: 0.05,
            warnings: Vec::new(),
            reported_weight: None,
        });
        prop_assert_eq!(decode(&encode(&msg).unwrap()).unwrap(), msg);
    }
}

#[test]
fn symmetric_noise_moments() {
    // E tr(Z²) = p·2α² + p(p−1)·α² and E Z = 0.
    let (p, alpha2, draws) = (5, 0.8, 20_000);
    let mut trace_sq = 0.0;
    let mut sum = DMatrix::<f64>::zeros(p, p);
    for k in 0..draws {
        let z = sample_symmetric_noise(p, alpha2, 7_000 + k).unwrap();
        assert_eq!(z, z.transpose());
        trace_sq += (&z * &z).trace();
        sum += z;
    }
    let expected = alpha2 * (2 * p + p * (p - 1)) as f64;
    let got = trace_sq / draws as f64;
    assert!((got / expected - 1.0).abs() < 0.03, "{got} vs {expected}");
    assert!((sum / draws as f64).amax() < 0.05);
}
