use proptest::prelude::*;
use rwpmlab_core::estimate::mean_se;
use rwpmlab_core::kernels::{JumpKernel, KernelTable, Site, DEFAULT_TOL};
use rwpmlab_core::lattice_walk::*;
use rwpmlab_core::quad::integrate;
use rwpmlab_core::{Error, Stream};

fn srw3() -> JumpKernel {
    JumpKernel::simple(3).unwrap()
}

/// Midpoint Riemann sum of the coincidence indicator on a fine grid.
fn riemann_local_time(x: &WalkPath, y: &WalkPath, t: f64, dt: f64) -> f64 {
    let n = (t / dt).round() as usize;
    (0..n)
        .filter(|&k| {
            let s = (k as f64 + 0.5) * dt;
            x.position_unchecked(s) == y.position_unchecked(s)
        })
        .count() as f64
        * dt
}

#[test]
fn zero_rate_is_constant() {
    let k = srw3();
    let mut rng = Stream::new(1).rng();
    let p = sample_path(&k, 0.0, 10.0, &mut rng);
    assert_eq!(p.n_jumps(), 0);
    assert_eq!(p.position_at(7.0).unwrap(), Site::origin());
}

#[test]
fn jump_count_concentrates() {
    let k = srw3();
    let mut rng = Stream::new(2).rng();
    let p = sample_path(&k, 1.0, 1000.0, &mut rng);
    assert!((p.n_jumps() as f64 - 1000.0).abs() < 3.0 * 1000f64.sqrt());
}

#[test]
fn endpoint_mean_is_zero() {
    let k = srw3();
    let n = 10_000;
    let ends: Vec<Site> = (0..n)
        .map(|i| sample_path(&k, 1.0, 5.0, &mut Stream::new(3).child(i).rng()).final_site())
        .collect();
    for axis in 0..3 {
        let xs: Vec<f64> = ends.iter().map(|s| s.0[axis] as f64).collect();
        let (m, se) = mean_se(&xs);
        assert!(m.abs() < 3.0 * se, "axis {axis}: {m} ± {se}");
    }
}

#[test]
fn right_continuity_and_horizon() {
    let k = srw3();
    let jumps = [(1.0, Site::unit(0)), (2.5, Site::unit(1))];
    let p = WalkPath::from_jumps(&k, 1.0, 4.0, &jumps).unwrap();
    assert_eq!(p.position_at(0.0).unwrap(), Site::origin());
    assert_eq!(p.position_at(1.0 - 1e-12).unwrap(), Site::origin());
    assert_eq!(p.position_at(1.0).unwrap(), Site::unit(0));
    assert_eq!(p.position_at(2.5).unwrap(), Site::unit(0) + Site::unit(1));
    assert!(matches!(p.position_at(4.5), Err(Error::OutOfHorizon { .. })));
    assert!(WalkPath::from_jumps(&k, 1.0, 4.0, &[(1.0, Site::from_slice(&[2, 0, 0]))]).is_err());
}

#[test]
fn local_time_simple_cases() {
    let k = srw3();
    let mut rng = Stream::new(4).rng();
    let x = sample_path(&k, 1.0, 20.0, &mut rng);
    assert_eq!(collision_local_time(&x, &x, 20.0).unwrap().value, 20.0);
    let c = WalkPath::constant(&k, 5.0);
    let y = WalkPath::from_jumps(&k, 1.0, 5.0, &[(1.0, Site::unit(0)), (2.0, Site::unit(1))]).unwrap();
    assert_eq!(collision_local_time(&c, &y, 5.0).unwrap().value, 1.0);
    assert!(matches!(collision_local_time(&c, &y, 6.0), Err(Error::OutOfHorizon { .. })));
}

#[test]
fn local_time_matches_fine_grid() {
    let k = srw3();
    let dt = 1e-4;
    for i in 0..5u64 {
        let s = Stream::new(5).child(i);
        let x = sample_path(&k, 1.0, 50.0, &mut s.child(0).rng());
        let y = sample_path(&k, 0.2, 50.0, &mut s.child(1).rng());
        let exact = collision_local_time(&x, &y, 50.0).unwrap().value;
        let grid = riemann_local_time(&x, &y, 50.0, dt);
        let jumps = (x.n_jumps() + y.n_jumps()) as f64;
        assert!((exact - grid).abs() <= 2.0 * dt * jumps, "{exact} vs {grid}");
    }
}

#[test]
fn annealed_mean_local_time() {
    let k = srw3();
    let (rho, t, n) = (1.0, 10.0, 20_000u64);
    let ls: Vec<f64> = (0..n)
        .map(|i| {
            let mut r = Stream::new(6).child(i).rng();
            let x = sample_path(&k, 1.0, t, &mut r);
            let y = sample_path(&k, rho, t, &mut r);
            collision_local_time(&x, &y, t).unwrap().value
        })
        .collect();
    let (m, se) = mean_se(&ls);
    let table = KernelTable::new(&k, 1.0 + rho, t, DEFAULT_TOL).unwrap();
    let exact = integrate(|s| table.prob(s, &Site::origin()).unwrap(), 0.0, t, 1e-10, 1e-10);
    assert!((m - exact).abs() < 3.0 * se, "{m} ± {se} vs {exact}");
}

#[test]
fn difference_walk_matches_kernel() {
    let k = srw3();
    for (rho, probe) in [(0.0, 2.0), (1.0, 4.0), (0.25, 10.0)] {
        let rep = difference_walk_check(&k, rho, &[1.0, probe], 20_000, Stream::new(7)).unwrap();
        for p in &rep {
            assert!(p.pass, "{p:?}");
        }
    }
}

#[test]
fn deterministic_paths() {
    let k = srw3();
    let a = sample_path(&k, 1.0, 100.0, &mut Stream::new(8).child(3).rng());
    let b = sample_path(&k, 1.0, 100.0, &mut Stream::new(8).child(3).rng());
    assert_eq!(a, b);
}

#[test]
fn dump_round_trip() {
    let k = srw3();
    let p = sample_path(&k, 0.7, 30.0, &mut Stream::new(9).rng());
    let mut buf = Vec::new();
    p.write_text(&mut buf, 9).unwrap();
    let (q, seed) = WalkPath::read_text(&buf[..]).unwrap();
    assert_eq!(seed, 9);
    assert_eq!(p, q);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn local_time_symmetric_additive(seed in any::<u64>(), s_frac in 0.0f64..1.0, rho in 0.0f64..2.0) {
        let k = srw3();
        let t = 30.0;
        let st = Stream::new(seed);
        let x = sample_path(&k, 1.0, t, &mut st.child(0).rng());
        let y = sample_path(&k, rho, t, &mut st.child(1).rng());
        let s = s_frac * t;
        let full = collision_local_time(&x, &y, t).unwrap().value;
        prop_assert_eq!(full, collision_local_time(&y, &x, t).unwrap().value);
        let split = collision_local_time(&x, &y, s).unwrap().value + local_time_window(&x, &y, s, t).unwrap().value;
        prop_assert!((full - split).abs() < 1e-12);
        prop_assert!(full >= 0.0 && full <= t);
    }
}
