use gcsl_core::buffer::RelabeledExample;
use gcsl_core::policy::{
    argmax, encode_horizon, softmax, Adam, MlpPolicy, Policy, StateEncoder, TabularPolicy,
};
use gcsl_core::rng::{RngStreams, StreamRng};
use proptest::prelude::*;
use rand::Rng;

fn small_net(rng: &mut StreamRng, horizon: Option<usize>) -> MlpPolicy {
    MlpPolicy::new(StateEncoder::Identity { dim: 2 }, &[8, 6], 3, horizon, rng).unwrap()
}

fn random_batch(rng: &mut StreamRng, n: usize, horizon: Option<usize>) -> Vec<RelabeledExample> {
    (0..n)
        .map(|_| RelabeledExample {
            state: vec![rng.random(), rng.random()],
            action: rng.random_range(0..3),
            goal: vec![rng.random(), rng.random()],
            horizon: horizon.map_or(1, |t| rng.random_range(1..=t)),
        })
        .collect()
}

/// Largest relative error between the analytic gradient and central
/// differences of the loss, skipping coordinates where the two one-sided
/// slopes disagree (a ReLU kink lies inside the probe interval). Returns the
/// error and the number of skipped coordinates.
fn max_gradient_error(net: &MlpPolicy, batch: &[RelabeledExample]) -> (f64, usize) {
    let (center, grad) = net.nll_loss_and_gradient(batch).unwrap();
    let delta = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (i, &g) in grad.iter().enumerate() {
        let p = probe.params()[i];
        probe.params_mut()[i] = p + delta;
        let up = probe.nll_loss(batch).unwrap();
        probe.params_mut()[i] = p - delta;
        let down = probe.nll_loss(batch).unwrap();
        probe.params_mut()[i] = p;
        let (right, left) = ((up - center) / delta, (center - down) / delta);
        if (right - left).abs() > 1e-3 * (right.abs() + left.abs()) + 1e-8 {
            skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * delta);
        let err = (g - numeric).abs() / (g.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    (worst, skipped)
}

#[test]
fn gradients_match_finite_differences() {
    let streams = RngStreams::new(100);
    let (mut total, mut total_skipped) = (0, 0);
    for trial in 0..100 {
        let mut rng = streams.indexed("grad", trial);
        let horizon = (trial % 2 == 1).then_some(4);
        let net = small_net(&mut rng, horizon);
        let batch = random_batch(&mut rng, 1 + trial as usize % 5, horizon);
        let (err, skipped) = max_gradient_error(&net, &batch);
        assert!(err < 1e-4, "trial {trial}: relative error {err}");
        total_skipped += skipped;
        total += net.parameter_count();
    }
    assert!(
        total_skipped * 100 < total,
        "{total_skipped} of {total} coordinates straddled a kink"
    );
}

#[test]
fn one_adam_step_lowers_the_loss() {
    let streams = RngStreams::new(7);
    for trial in 0..50 {
        let mut rng = streams.indexed("descent", trial);
        let mut net = small_net(&mut rng, None);
        let batch = random_batch(&mut rng, 8, None);
        let lr = [1e-3, 5e-4, 1e-4][trial as usize % 3];
        let mut adam = Adam::new(net.parameter_count(), lr);
        let (before, grad) = net.nll_loss_and_gradient(&batch).unwrap();
        adam.step(net.params_mut(), &grad).unwrap();
        let after = net.nll_loss(&batch).unwrap();
        assert!(after < before, "trial {trial}: {before} -> {after}");
    }
}

#[test]
fn zero_network_is_uniform() {
    let net = MlpPolicy::zeros(StateEncoder::Identity { dim: 2 }, &[400, 300], 9, None).unwrap();
    let p = net
        .action_probabilities(&[0.3, 0.1], &[0.9, 0.9], None)
        .unwrap();
    assert!(p.iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
    let mut rng = RngStreams::new(1).stream("b");
    let batch: Vec<_> = random_batch(&mut rng, 5, None)
        .into_iter()
        .map(|mut e| {
            e.action *= 3;
            e
        })
        .collect();
    assert!((net.nll_loss(&batch).unwrap() - 9f64.ln()).abs() < 1e-12);
    assert!(net.nll_loss_and_gradient(&[]).is_err());
}

#[test]
fn tabular_examples() {
    let mut p = TabularPolicy::new(2, 2, None, 0.0).unwrap();
    let (s0, g1) = ([0.0], [1.0]);
    for _ in 0..3 {
        p.observe(&s0, 0, &g1, 1, 1.0).unwrap();
    }
    p.observe(&s0, 1, &g1, 1, 1.0).unwrap();
    assert_eq!(
        p.action_probabilities(&s0, &g1, None).unwrap(),
        vec![0.75, 0.25]
    );

    let smooth = TabularPolicy::new(2, 2, None, 0.1).unwrap();
    assert_eq!(
        smooth.action_probabilities(&s0, &g1, None).unwrap(),
        vec![0.5, 0.5]
    );

    let mut tv = TabularPolicy::new(2, 2, Some(3), 0.0).unwrap();
    let ex = |a| RelabeledExample {
        state: vec![0.0],
        action: a,
        goal: vec![1.0],
        horizon: 1,
    };
    tv.fit(&[ex(0), ex(0), ex(1)]).unwrap();
    let probs = tv.action_probabilities(&s0, &g1, Some(1)).unwrap();
    assert!((probs[0] - 2.0 / 3.0).abs() < 1e-15 && (probs[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn tabular_mle_reproduces_frequencies() {
    let streams = RngStreams::new(3);
    for trial in 0..20 {
        let mut rng = streams.indexed("table", trial);
        let mut p = TabularPolicy::new(3, 4, None, 0.0).unwrap();
        let mut counts = vec![[0usize; 4]; 9];
        for _ in 0..200 {
            let (s, g, a) = (
                rng.random_range(0..3),
                rng.random_range(0..3),
                rng.random_range(0..4),
            );
            counts[s * 3 + g][a] += 1;
            p.observe(&[s as f64], a, &[g as f64], 1, 1.0).unwrap();
        }
        for s in 0..3 {
            for g in 0..3 {
                let c = counts[s * 3 + g];
                let total: usize = c.iter().sum();
                let probs = p
                    .action_probabilities(&[s as f64], &[g as f64], None)
                    .unwrap();
                assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                if total > 0 {
                    for a in 0..4 {
                        assert!((probs[a] - c[a] as f64 / total as f64).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn sampling_frequencies() {
    let p = TabularPolicy::new(1, 9, None, 1.0).unwrap();
    let mut rng = RngStreams::new(9).stream("s");
    let mut counts = [0usize; 9];
    for _ in 0..100_000 {
        counts[p.sample_action(&[0.0], &[0.0], None, &mut rng).unwrap()] += 1;
    }
    for c in counts {
        assert!((c as f64 / 1e5 - 1.0 / 9.0).abs() < 0.005, "{counts:?}");
    }
    let mut one_hot = TabularPolicy::new(1, 3, None, 0.0).unwrap();
    one_hot.observe(&[0.0], 0, &[0.0], 1, 1.0).unwrap();
    assert!((0..1000).all(|_| one_hot
        .sample_action(&[0.0], &[0.0], None, &mut rng)
        .unwrap()
        == 0));

    let draw = |seed| {
        let mut rng = RngStreams::new(seed).stream("s");
        (0..50)
            .map(|_| p.sample_action(&[0.0], &[0.0], None, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(4), draw(4));
}

#[test]
fn greedy_tie_break_and_horizon_encoding() {
    assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
    assert_eq!(argmax(&[0.5, 0.5]), 0);
    assert_eq!(encode_horizon(0, 4).unwrap(), vec![0.0; 4]);
    assert_eq!(encode_horizon(4, 4).unwrap(), vec![1.0; 4]);
    assert_eq!(encode_horizon(2, 4).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
    assert!(encode_horizon(5, 4).is_err());
}

#[test]
fn adam_examples() {
    let mut adam = Adam::new(1, Adam::DEFAULT_LR);
    let mut x = [0.0];
    adam.step(&mut x, &[1.0]).unwrap();
    assert!((x[0] - (-5e-4 / (1.0 + 1e-8))).abs() < 1e-15);

    let mut fresh = Adam::new(2, Adam::DEFAULT_LR);
    let mut y = [0.3, -0.2];
    fresh.step(&mut y, &[0.0, 0.0]).unwrap();
    assert_eq!(y, [0.3, -0.2]);
    assert!(fresh.step(&mut y, &[1.0]).is_err());
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f64..50.0, 2..12)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn argmax_ignores_positive_rescaling(logits in proptest::collection::vec(-10.0f64..10.0, 2..12), scale in 0.01f64..100.0) {
        let scaled: Vec<f64> = logits.iter().map(|x| x * scale).collect();
        prop_assert_eq!(argmax(&softmax(&logits)), argmax(&softmax(&scaled)));
        let cubed: Vec<f64> = logits.iter().map(|x| x * x * x).collect();
        prop_assert_eq!(argmax(&logits), argmax(&cubed));
    }

    #[test]
    fn adam_is_odd_in_the_gradient(g in -10.0f64..10.0, steps in 1usize..5) {
        let mut a = Adam::new(1, 1e-3);
        let mut b = Adam::new(1, 1e-3);
        let (mut x, mut y) = ([0.0], [0.0]);
        for _ in 0..steps {
            a.step(&mut x, &[g]).unwrap();
            b.step(&mut y, &[-g]).unwrap();
            prop_assert_eq!(x[0], -y[0]);
        }
    }

    #[test]
    fn tabular_fit_is_order_free(examples in proptest::collection::vec((0usize..3, 0usize..3, 0usize..2, 1usize..3), 0..40), seed in any::<u64>()) {
        let batch: Vec<RelabeledExample> = examples.iter().map(|&(s, g, a, h)| RelabeledExample {
            state: vec![s as f64], action: a, goal: vec![g as f64], horizon: h,
        }).collect();
        let mut shuffled = batch.clone();
        let mut rng = RngStreams::new(seed).stream("shuffle");
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let mut p = TabularPolicy::new(3, 2, Some(2), 0.1).unwrap();
        let mut q = p.clone();
        p.fit(&batch).unwrap();
        q.fit(&shuffled).unwrap();
        prop_assert_eq!(p.raw_counts(), q.raw_counts());
    }

    #[test]
    fn duplicated_batches_give_the_same_loss_and_gradient(seed in any::<u64>()) {
        let mut rng = RngStreams::new(seed).stream("dup");
        let net = small_net(&mut rng, None);
        let batch = random_batch(&mut rng, 4, None);
        let doubled: Vec<_> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = net.nll_loss_and_gradient(&batch).unwrap();
        let (l2, g2) = net.nll_loss_and_gradient(&doubled).unwrap();
        prop_assert!((l1 - l2).abs() < 1e-12);
        prop_assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
