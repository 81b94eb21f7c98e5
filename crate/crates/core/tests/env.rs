use gcsl_core::env::{
    action_grid, FiniteMdp, FourRooms, FourRoomsConfig, GoalEnv, GridLayout, GRID_ROOMS_LAYOUT,
};
use gcsl_core::rng::RngStreams;
use proptest::prelude::*;

fn four_rooms() -> FourRooms {
    FourRooms::new(FourRoomsConfig::default()).unwrap()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

#[test]
fn open_space_translation() {
    let env = four_rooms();
    let mut rng = RngStreams::new(0).stream("t");
    let right = action_grid(2)
        .iter()
        .position(|v| v == &[1.0, 0.0])
        .unwrap();
    let next = env.step(&[0.25, 0.25], right, &mut rng).unwrap();
    assert!(close(&next, &[0.30, 0.25]));
}

#[test]
fn wall_blocks_only_the_pushing_axis() {
    let env = four_rooms();
    let mut rng = RngStreams::new(0).stream("t");
    let up_right = action_grid(2)
        .iter()
        .position(|v| v == &[1.0, 1.0])
        .unwrap();
    // x = 0.48 next to the vertical wall, y = 0.1 away from both doors.
    let next = env.step(&[0.48, 0.1], up_right, &mut rng).unwrap();
    assert!(close(&next, &[0.48, 0.15]), "{next:?}");
}

#[test]
fn chain_lookup_and_indicator_distance() {
    let chain = FiniteMdp::chain(4, 3).unwrap();
    let mut rng = RngStreams::new(0).stream("t");
    assert_eq!(chain.step(&[1.0], 2, &mut rng).unwrap(), vec![2.0]);
    assert_eq!(chain.distance(&[2.0], &[3.0]).unwrap(), 1.0);
    assert_eq!(chain.distance(&[2.0], &[2.0]).unwrap(), 0.0);
    assert_eq!(
        four_rooms().distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
        5.0
    );
    assert!(four_rooms().distance(&[0.0], &[0.0, 1.0]).is_err());
}

#[test]
fn action_grids() {
    let g = action_grid(2);
    assert_eq!(g.len(), 9);
    assert_eq!(g[0], vec![-1.0, -1.0]);
    assert_eq!(g[4], vec![0.0, 0.0]);
    assert_eq!(g[8], vec![1.0, 1.0]);
    assert_eq!(g.iter().filter(|v| v.iter().all(|&x| x == 0.0)).count(), 1);
    assert_eq!(FiniteMdp::grid_rooms(30).unwrap().spec().action_count, 5);
    assert!(four_rooms()
        .step(&[0.5, 0.25], 9, &mut RngStreams::new(0).stream("t"))
        .is_err());
}

#[test]
fn goals_fill_the_rooms_evenly() {
    // Walls are lines, so each room holds a quarter of the free area.
    let env = four_rooms();
    let mut rng = RngStreams::new(11).stream("goal");
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let g = env.sample_goal(&mut rng);
        assert!(!env.on_wall(g[0], g[1]));
        counts[FourRooms::room(g[0], g[1])] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 3 degrees of freedom, 0.999 quantile.
    assert!(chi2 < 16.27, "chi2 {chi2}, counts {counts:?}");
    for c in counts {
        assert!((c as f64 / n as f64 - 0.25).abs() < 0.01);
    }
}

#[test]
fn chain_goals_are_uniform() {
    let chain = FiniteMdp::chain(4, 3).unwrap();
    let mut rng = RngStreams::new(5).stream("goal");
    let mut counts = [0usize; 4];
    for _ in 0..100_000 {
        counts[chain.sample_goal(&mut rng)[0] as usize] += 1;
    }
    for c in counts {
        assert!((c as f64 / 1e5 - 0.25).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn grid_goals_avoid_walls() {
    let layout = GridLayout::parse(&GRID_ROOMS_LAYOUT).unwrap();
    let grid = FiniteMdp::grid_rooms(30).unwrap();
    let mut rng = RngStreams::new(6).stream("goal");
    for _ in 0..100_000 {
        let g = grid.sample_goal(&mut rng);
        let (r, c) = layout.coords(g[0] as usize);
        assert!(!layout.is_wall(r, c));
    }
}

#[test]
fn resets_are_fixed() {
    let env = four_rooms();
    let grid = FiniteMdp::grid_rooms(30).unwrap();
    let mut a = RngStreams::new(1).stream("x");
    let mut b = RngStreams::new(2).stream("y");
    assert_eq!(env.reset(&mut a), vec![0.25, 0.25]);
    assert_eq!(env.reset(&mut a), env.reset(&mut b));
    assert_eq!(grid.reset(&mut a), grid.reset(&mut b));
    assert_eq!(
        grid.reset(&mut a),
        grid.state_vec(grid.start_state().unwrap())
    );
}

#[test]
fn finite_step_matches_table_exhaustively() {
    let mut rng = RngStreams::new(0).stream("t");
    for mdp in [
        FiniteMdp::grid_rooms(30).unwrap(),
        FiniteMdp::chain(4, 3).unwrap(),
        FiniteMdp::open_grid(3, 3, 4).unwrap(),
    ] {
        for s in 0..mdp.state_count() {
            for a in 0..mdp.action_count() {
                let next = mdp.step(&mdp.state_vec(s), a, &mut rng).unwrap();
                assert_eq!(next, mdp.state_vec(mdp.next_state(s, a).unwrap()));
            }
        }
    }
}

fn crosses(a: f64, b: f64) -> bool {
    (a < 0.5 && b > 0.5) || (a > 0.5 && b < 0.5)
}

fn in_door(c: f64) -> bool {
    (c - 0.25).abs() <= 0.06 || (c - 0.75).abs() <= 0.06
}

proptest! {
    #[test]
    fn four_rooms_stays_inside_and_off_walls(actions in proptest::collection::vec(0usize..9, 1..200), seed in any::<u64>()) {
        let env = four_rooms();
        let mut rng = RngStreams::new(seed).stream("t");
        let mut s = env.reset(&mut rng);
        for a in actions {
            let next = env.step(&s, a, &mut rng).unwrap();
            prop_assert!(next.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(!env.on_wall(next[0], next[1]));
            // x moves first (at height s[1]), then y (at x = next[0]).
            if crosses(s[0], next[0]) {
                prop_assert!(in_door(s[1]), "crossed x = 0.5 at y = {}", s[1]);
            }
            if crosses(s[1], next[1]) {
                prop_assert!(in_door(next[0]), "crossed y = 0.5 at x = {}", next[0]);
            }
            s = next;
        }
    }

    #[test]
    fn stepping_is_deterministic(actions in proptest::collection::vec(0usize..9, 1..100)) {
        let env = four_rooms();
        let run = |seed| {
            let mut rng = RngStreams::new(seed).stream("t");
            let mut s = env.reset(&mut rng);
            let mut all = vec![s.clone()];
            for &a in &actions {
                s = env.step(&s, a, &mut rng).unwrap();
                all.push(s.clone());
            }
            all
        };
        prop_assert_eq!(run(1), run(2));
    }
}
