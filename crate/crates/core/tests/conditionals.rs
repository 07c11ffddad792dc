mod common;

use std::sync::Arc;

use common::*;
use geolatent::geo::UnitVec3;
use geolatent::sampler::{sample_s, sample_t, sample_z};
use geolatent::state::{AssignmentState, Dataset, GlobalSticks, State};
use geolatent::vmf::VmfPrior;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DRAWS: usize = 100_000;

#[test]
fn cluster_frequencies_match_joint() {
    let st = frozen_toy();
    let probs = t_oracle(&st, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let counts = tally(probs.len(), DRAWS, || {
        let mut s = st.clone();
        s.unassign_t(0).unwrap();
        sample_t(&mut s, 0, false, &mut rng).unwrap()
    });
    let p = chi_square_p(&counts, &probs);
    assert!(p > 0.01, "p = {p}, counts {counts:?}, probs {probs:?}");
}

#[test]
fn location_frequencies_match_joint() {
    let st = frozen_toy();
    let probs = s_oracle(&st, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counts = tally(probs.len(), DRAWS, || {
        let mut s = st.clone();
        s.unassign_s(1).unwrap();
        sample_s(&mut s, 1, None, &mut rng).unwrap()
    });
    let p = chi_square_p(&counts, &probs);
    assert!(p > 0.01, "p = {p}, counts {counts:?}, probs {probs:?}");
}

#[test]
fn topic_frequencies_match_joint() {
    let st = frozen_toy();
    let probs = z_oracle(&st, 3, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let counts = tally(probs.len(), DRAWS, || {
        let mut s = st.clone();
        s.remove_view(3, 0).unwrap();
        sample_z(&mut s, 3, 0, &mut rng).unwrap()
    });
    let p = chi_square_p(&counts, &probs);
    assert!(p > 0.01, "p = {p}, counts {counts:?}, probs {probs:?}");
}

/// Three customers, two clusters, three items.
fn three_customers() -> State {
    let customers = vec![customer(0, 10.0, 20.0, &[0, 1]), customer(1, 12.0, 22.0, &[1]), customer(2, -40.0, 60.0, &[2, 2])];
    let data = Arc::new(Dataset::new(customers, 3).unwrap());
    let prior = VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 2.0, sigma_c: 0.5 };
    let assign = AssignmentState { t: vec![0, 0, 1], s: vec![0, 0, 1], z: vec![0, 0, 0, 1, 1], c: vec![8.0, 8.0] };
    State::from_assignments(
        data,
        hyper(3, 1.0, prior),
        assign,
        GlobalSticks { weights: vec![0.4, 0.4], remainder: 0.2 },
        GlobalSticks { weights: vec![0.5, 0.3], remainder: 0.2 },
    )
    .unwrap()
}

#[test]
fn three_customer_cluster_draws_within_three_sigma() {
    let st = three_customers();
    let probs = t_oracle(&st, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let counts = tally(probs.len(), DRAWS, || {
        let mut s = st.clone();
        s.unassign_t(1).unwrap();
        sample_t(&mut s, 1, false, &mut rng).unwrap()
    });
    for (c, p) in counts.iter().zip(&probs) {
        let sd = (DRAWS as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - DRAWS as f64 * p).abs() <= 3.0 * sd.max(1.0), "{counts:?} vs {probs:?}");
    }
}

#[test]
fn antipodal_customer_prefers_new_factor() {
    // one tight factor at the north pole holding two customers, and a third
    // customer at the south pole
    let customers = vec![customer(0, 90.0, 0.0, &[]), customer(1, 90.0, 0.0, &[]), customer(2, -90.0, 0.0, &[])];
    let data = Arc::new(Dataset::new(customers, 1).unwrap());
    let prior = VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 50f64.ln(), sigma_c: 0.3 };
    let assign = AssignmentState { t: vec![0, 0, 0], s: vec![0, 0, 0], z: vec![], c: vec![50.0] };
    let st = State::from_assignments(
        data,
        hyper(1, 1.0, prior),
        assign,
        GlobalSticks { weights: vec![0.8], remainder: 0.2 },
        GlobalSticks::default(),
    )
    .unwrap();
    let probs = s_oracle(&st, 2);
    assert!(probs[1] > 0.999, "{probs:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 10_000;
    let counts = tally(probs.len(), draws, || {
        let mut s = st.clone();
        s.unassign_s(2).unwrap();
        sample_s(&mut s, 2, None, &mut rng).unwrap()
    });
    let expected_old = draws as f64 * probs[0];
    assert!((counts[0] as f64 - expected_old).abs() <= 3.0 * expected_old.sqrt().max(1.0), "{counts:?} vs {probs:?}");
}

#[test]
fn view_follows_item_support() {
    // topic 0 owns items 0 and 1, topic 1 owns items 2 and 3
    let customers = vec![customer(0, 0.0, 0.0, &[0, 1, 0, 1]), customer(1, 0.0, 0.0, &[2, 3, 2, 3]), customer(2, 0.0, 0.0, &[0])];
    let data = Arc::new(Dataset::new(customers, 4).unwrap());
    let prior = VmfPrior { mu0: UnitVec3::NORTH_POLE, c0: 1.0, m_c: 1.0, sigma_c: 1.0 };
    let assign = AssignmentState { t: vec![0, 0, 0], s: vec![0, 0, 0], z: vec![0, 0, 0, 0, 1, 1, 1, 1, 0], c: vec![1.0] };
    let st = State::from_assignments(
        data,
        hyper(4, 0.1, prior),
        assign,
        GlobalSticks { weights: vec![0.9], remainder: 0.1 },
        GlobalSticks { weights: vec![0.45, 0.45], remainder: 0.1 },
    )
    .unwrap();
    let probs = z_oracle(&st, 2, 0);
    assert!(probs[0] > probs[1] && probs[0] > probs[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let counts = tally(probs.len(), DRAWS, || {
        let mut s = st.clone();
        s.remove_view(2, 0).unwrap();
        sample_z(&mut s, 2, 0, &mut rng).unwrap()
    });
    for (c, p) in counts.iter().zip(&probs) {
        let sd = (DRAWS as f64 * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - DRAWS as f64 * p).abs() <= 3.0 * sd.max(1.0), "{counts:?} vs {probs:?}");
    }
}
