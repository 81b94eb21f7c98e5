use gcsl_core::buffer::{relabel_all, BufferConfig, BufferMode, ReplayBuffer, Trajectory};
use gcsl_core::rng::RngStreams;
use proptest::prelude::*;
use std::collections::HashMap;

fn line(len: usize, offset: f64) -> Trajectory {
    Trajectory {
        states: (0..=len).map(|i| vec![offset + i as f64]).collect(),
        actions: (0..len).map(|i| (i * 7 + offset as usize) % 5).collect(),
        commanded_goal: vec![-1.0],
        seed: 0,
        iteration: 0,
    }
}

fn buffer(mode: BufferMode) -> ReplayBuffer {
    ReplayBuffer::new(BufferConfig {
        mode,
        capacity: None,
    })
    .unwrap()
}

/// Exact probability of `(trajectory, t, h)` under the sampling scheme,
/// written out independently of the buffer code.
fn expected_mass(lens: &[usize], h_max: usize) -> HashMap<(usize, usize, usize), f64> {
    let mut out = HashMap::new();
    for (k, &len) in lens.iter().enumerate() {
        for t in 0..len {
            let choices = (len - t).min(h_max);
            for h in 1..=choices {
                out.insert(
                    (k, t, h),
                    1.0 / lens.len() as f64 / len as f64 / choices as f64,
                );
            }
        }
    }
    out
}

fn empirical_tv(buf: &ReplayBuffer, lens: &[usize], h_max: usize, seed: u64) -> f64 {
    let n = 1_000_000;
    let mut rng = RngStreams::new(seed).stream("marginals");
    let mut counts: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for _ in 0..n {
        let i = buf.sample_index(&mut rng).unwrap();
        *counts.entry((i.trajectory, i.t, i.horizon)).or_default() += 1;
    }
    let expected = expected_mass(lens, h_max);
    assert!(
        counts.keys().all(|k| expected.contains_key(k)),
        "sampled outside the support"
    );
    expected
        .iter()
        .map(|(k, p)| (counts.get(k).copied().unwrap_or(0) as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0
}

#[test]
fn sampled_indices_match_the_exact_marginals() {
    let lens = [3, 5, 1];
    let mut buf = buffer(BufferMode::Full);
    for (k, &len) in lens.iter().enumerate() {
        buf.append(line(len, 100.0 * k as f64)).unwrap();
    }
    let tv = empirical_tv(&buf, &lens, usize::MAX, 1);
    assert!(tv < 0.01, "tv {tv}");
}

#[test]
fn limited_marginals_and_support() {
    let lens = [6, 4];
    let mut buf = buffer(BufferMode::Limited { h_max: 2 });
    for (k, &len) in lens.iter().enumerate() {
        buf.append(line(len, 100.0 * k as f64)).unwrap();
    }
    let tv = empirical_tv(&buf, &lens, 2, 2);
    assert!(tv < 0.01, "tv {tv}");
}

#[test]
fn limited_one_step_reproduces_transitions() {
    let mut buf = buffer(BufferMode::Limited { h_max: 1 });
    let tr = line(5, 0.0);
    buf.append(tr.clone()).unwrap();
    let mut rng = RngStreams::new(3).stream("b");
    for ex in buf.sample_batch(500, &mut rng).unwrap() {
        assert_eq!(ex.horizon, 1);
        assert_eq!(ex.goal[0], ex.state[0] + 1.0);
        assert_eq!(ex.action, tr.actions[ex.state[0] as usize]);
    }
}

#[test]
fn relabel_all_counts_and_contents() {
    for len in [1usize, 2, 3, 10, 50] {
        let tr = line(len, 0.0);
        let all = relabel_all(&tr);
        assert_eq!(all.len(), len * (len + 1) / 2);
        for ex in &all {
            let t = ex.state[0] as usize;
            assert_eq!(ex.goal[0] as usize, t + ex.horizon);
            assert_eq!(ex.action, tr.actions[t]);
        }
    }
}

#[test]
fn sampling_is_reproducible() {
    let mut buf = buffer(BufferMode::Full);
    for k in 0..10 {
        buf.append(line(7, 10.0 * k as f64)).unwrap();
    }
    let draw = |seed| {
        buf.sample_batch(64, &mut RngStreams::new(seed).stream("b"))
            .unwrap()
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

#[test]
fn on_policy_window_keeps_recent_transitions() {
    let mut buf = buffer(BufferMode::OnPolicy {
        window_transitions: 10,
    });
    let mut evicted = 0;
    for k in 0..7 {
        evicted += buf.append(line(3, 10.0 * k as f64)).unwrap().len();
        assert!(buf.transitions() <= 10);
    }
    assert_eq!(buf.len(), 3);
    assert_eq!(evicted, 4);
    assert_eq!(buf.trajectories().next().unwrap().states[0], vec![40.0]);
    assert!(buf.append(line(11, 0.0)).is_err());
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(ReplayBuffer::new(BufferConfig {
        mode: BufferMode::Limited { h_max: 0 },
        capacity: None
    })
    .is_err());
    assert!(ReplayBuffer::new(BufferConfig {
        mode: BufferMode::OnPolicy {
            window_transitions: 0
        },
        capacity: None
    })
    .is_err());
    assert!(ReplayBuffer::new(BufferConfig {
        mode: BufferMode::Full,
        capacity: Some(0)
    })
    .is_err());
    let mut buf = buffer(BufferMode::Full);
    let mut bad = line(3, 0.0);
    bad.states[1] = vec![f64::NAN];
    assert!(buf.append(bad).is_err());
    let mut bad = line(3, 0.0);
    bad.commanded_goal = vec![0.0, 0.0];
    assert!(buf.append(bad).is_err());
}

proptest! {
    #[test]
    fn every_sample_is_a_real_future_state(
        lens in proptest::collection::vec(1usize..12, 1..6),
        h_max in 1usize..6,
        limited in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mode = if limited { BufferMode::Limited { h_max } } else { BufferMode::Full };
        let mut buf = buffer(mode);
        let trajectories: Vec<_> = lens.iter().enumerate().map(|(k, &n)| line(n, 1000.0 * k as f64)).collect();
        for tr in &trajectories {
            buf.append(tr.clone()).unwrap();
        }
        let mut rng = RngStreams::new(seed).stream("prop");
        for _ in 0..50 {
            let i = buf.sample_index(&mut rng).unwrap();
            let tr = &trajectories[i.trajectory];
            prop_assert!(i.t < tr.horizon());
            prop_assert!(i.horizon >= 1 && i.t + i.horizon <= tr.horizon());
            if limited {
                prop_assert!(i.horizon <= h_max);
            }
            let ex = buf.example(i);
            prop_assert_eq!(&ex.state, &tr.states[i.t]);
            prop_assert_eq!(ex.action, tr.actions[i.t]);
            prop_assert_eq!(&ex.goal, &tr.states[i.t + i.horizon]);
        }
    }

    #[test]
    fn relabel_weights_cover_the_support_once(len in 1usize..20, h_max in 1usize..25) {
        let buf = buffer(BufferMode::Limited { h_max });
        let w = buf.relabel_weights(&line(len, 0.0));
        let expected = expected_mass(&[len], h_max);
        prop_assert_eq!(w.len(), expected.len());
        for (t, h, weight) in w {
            let p = expected[&(0, t, h)];
            prop_assert!((weight / len as f64 - p).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_bounds_the_buffer(cap in 1usize..8, n in 1usize..20) {
        let mut buf = ReplayBuffer::new(BufferConfig { mode: BufferMode::Full, capacity: Some(cap) }).unwrap();
        for k in 0..n {
            buf.append(line(2, k as f64)).unwrap();
        }
        prop_assert_eq!(buf.len(), n.min(cap));
        prop_assert_eq!(buf.latest().unwrap().states[0][0], (n - 1) as f64);
    }
}
