use rwpmlab_core::kernels::*;
use rwpmlab_core::Error;
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

fn srw3() -> JumpKernel {
    JumpKernel::simple(3).unwrap()
}

/// Exact q^{*2n}(0) for the simple walk on ℤ³ from the multinomial count.
fn srw3_return(n2: usize) -> f64 {
    if n2 % 2 == 1 {
        return 0.0;
    }
    let n = n2 / 2;
    let lf = |k: usize| ln_gamma(k as f64 + 1.0);
    let mut s = 0.0;
    for j in 0..=n {
        for k in 0..=n - j {
            let l = n - j - k;
            s += (2.0 * (lf(n) - lf(j) - lf(k) - lf(l)) + lf(2 * n) - 2.0 * lf(n) - (2 * n) as f64 * 6f64.ln()).exp();
        }
    }
    s
}

/// Closed form of Watson's integral for the simple cubic lattice.
fn watson() -> f64 {
    6f64.sqrt() / (32.0 * PI.powi(3)) * gamma(1.0 / 24.0) * gamma(5.0 / 24.0) * gamma(7.0 / 24.0) * gamma(11.0 / 24.0)
}

#[test]
fn build_rejects_bad_input() {
    assert!(matches!(build_kernel(&[(vec![1], 0.5)], 1), Err(Error::NotAProbability { .. })));
    assert!(matches!(build_kernel(&[(vec![1], 1.0)], 1), Err(Error::NotSymmetric { .. })));
    assert!(matches!(build_kernel(&[(vec![2], 0.5), (vec![-2], 0.5)], 1), Err(Error::NotIrreducible)));
    assert!(matches!(
        build_kernel(&[(vec![1, 0], 0.5), (vec![-1, 0], 0.5)], 2),
        Err(Error::NotIrreducible)
    ));
    assert!(matches!(build_kernel(&[(vec![1, 0], 0.5), (vec![-1], 0.5)], 2), Err(Error::BadDimension(_))));
    assert!(matches!(build_kernel(&[(vec![1], 0.5), (vec![-1], 0.5)], 5), Err(Error::BadDimension(_))));
    // Checkerboard moves generate an index-2 sublattice.
    let diag = [(vec![1, 1], 0.25), (vec![-1, -1], 0.25), (vec![1, -1], 0.25), (vec![-1, 1], 0.25)];
    assert!(matches!(build_kernel(&diag, 2), Err(Error::NotIrreducible)));
}

#[test]
fn covariance_of_simple_walks() {
    let k = srw3();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 / 3.0 } else { 0.0 };
            assert!((k.cov(i, j) - want).abs() < 1e-15);
        }
    }
    let k2 = JumpKernel::simple(2).unwrap();
    assert!((k2.det_cov() - 0.25).abs() < 1e-15);
    assert!(k.axes().is_some());
}

#[test]
fn text_format_round_trip() {
    let k = srw3();
    let back = parse_kernel(&k.to_text()).unwrap();
    assert_eq!(k, back);
    assert_eq!(k.id(), back.id());
    let txt = "# nearest neighbour\n1 0 0 0.1666666666666667\n-1 0 0 0.1666666666666667\n0 1 0 0.1666666666666667\n\
               0 -1 0 0.1666666666666667\n0 0 1 0.1666666666666666\n0 0 -1 0.1666666666666666\n";
    assert!(parse_kernel(txt).is_ok());
    assert!(matches!(parse_kernel("1 0 x\n"), Err(Error::Parse(_))));
}

#[test]
fn trivial_times() {
    let t = KernelTable::new(&srw3(), 1.0, 10.0, DEFAULT_TOL).unwrap();
    assert_eq!(transition_prob(&t, 0.0, &Site::origin()).unwrap(), 1.0);
    assert_eq!(transition_prob(&t, 0.0, &Site::unit(0)).unwrap(), 0.0);
    assert!(matches!(transition_prob(&t, 11.0, &Site::origin()), Err(Error::HorizonExceeded { .. })));
}

#[test]
fn series_matches_integer_convolution_oracle() {
    // q^{*n}(0) by exact integer path counting on a box, n ≤ 40.
    let r = 21i32;
    let side = (2 * r + 1) as usize;
    let idx = |x: i32, y: i32, z: i32| (((x + r) as usize * side) + (y + r) as usize) * side + (z + r) as usize;
    let mut cur = vec![0u128; side * side * side];
    cur[idx(0, 0, 0)] = 1;
    let mut ret = vec![1.0f64];
    for n in 1..=40 {
        let mut next = vec![0u128; cur.len()];
        for x in -r + 1..r {
            for y in -r + 1..r {
                for z in -r + 1..r {
                    let c = cur[idx(x, y, z)];
                    if c == 0 {
                        continue;
                    }
                    for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                        next[idx(x + dx, y + dy, z + dz)] += c;
                    }
                }
            }
        }
        cur = next;
        ret.push(cur[idx(0, 0, 0)] as f64 / 6f64.powi(n));
    }
    let oracle: f64 = (0..=40).map(|n| (-1.0f64 + n as f64 * 1f64.ln() - ln_gamma(n as f64 + 1.0)).exp() * ret[n]).sum();
    let t = KernelTable::new(&srw3(), 1.0, 2.0, DEFAULT_TOL).unwrap();
    let p = transition_prob(&t, 1.0, &Site::origin()).unwrap();
    assert!((p - oracle).abs() < 1e-13, "{p} vs {oracle}");
    // The discrete return sequence agrees with the multinomial formula too.
    let seq = origin_sequence(&srw3(), 40);
    for n in 0..=40 {
        assert!((seq[n] - ret[n]).abs() < 1e-15 * (1.0 + ret[n]) + 1e-300);
        assert!((seq[n] - srw3_return(n)).abs() < 1e-13 * ret[n].max(1e-300));
    }
}

#[test]
fn product_and_dense_backends_agree() {
    // A kernel with a diagonal move forces the dense backend; compare two
    // axis-only kernels computed both ways by perturbing the support order.
    let k = srw3();
    let prod = KernelTable::new(&k, 1.0, 6.0, DEFAULT_TOL).unwrap();
    assert!(prod.is_product());
    let dense_k = build_kernel(
        &[
            (vec![1, 0, 0], 1.0 / 6.0),
            (vec![-1, 0, 0], 1.0 / 6.0),
            (vec![0, 1, 0], 1.0 / 6.0),
            (vec![0, -1, 0], 1.0 / 6.0),
            (vec![0, 0, 1], 1.0 / 6.0 - 1e-9),
            (vec![0, 0, -1], 1.0 / 6.0 - 1e-9),
            (vec![1, 1, 1], 1e-9),
            (vec![-1, -1, -1], 1e-9),
        ],
        3,
    )
    .unwrap();
    let dense = KernelTable::new(&dense_k, 1.0, 6.0, DEFAULT_TOL).unwrap();
    assert!(!dense.is_product());
    for t in [0.3, 1.0, 2.5, 6.0] {
        for x in [[0, 0, 0], [1, 0, 0], [2, -1, 0], [1, 1, 1], [0, 3, -2]] {
            let s = Site::from_slice(&x);
            let a = prod.prob(t, &s).unwrap();
            let b = dense.prob(t, &s).unwrap();
            assert!((a - b).abs() < 1e-7, "t={t} x={x:?}: {a} vs {b}");
        }
    }
}

/// 1D Fourier oracle p_t(x) = (1/π)∫_0^π e^{−wt(1−cos k)} cos(kx) dk,
/// trapezoid rule (spectrally accurate for periodic integrands).
fn fourier_1d(w: f64, t: f64, x: i32) -> f64 {
    let m = 4096;
    let mut s = 0.0;
    for j in 0..m {
        let k = 2.0 * PI * j as f64 / m as f64;
        s += (-w * t * (1.0 - k.cos())).exp() * (k * x as f64).cos();
    }
    s / m as f64
}

#[test]
fn fourier_cross_check() {
    let t = KernelTable::new(&srw3(), 1.0, 50.0, DEFAULT_TOL).unwrap();
    for time in [0.5, 3.0, 17.0, 50.0] {
        for x in [[0, 0, 0], [1, 2, 0], [4, -3, 1]] {
            let want: f64 = x.iter().map(|&c| fourier_1d(1.0 / 3.0, time, c)).product();
            let got = t.prob(time, &Site::from_slice(&x)).unwrap();
            assert!((got - want).abs() < 1e-12, "t={time} x={x:?}");
        }
    }
    // Genuinely two-dimensional kernel with diagonal moves: 2D torus trapezoid.
    let k = build_kernel(
        &[
            (vec![1, 0], 0.2),
            (vec![-1, 0], 0.2),
            (vec![0, 1], 0.2),
            (vec![0, -1], 0.2),
            (vec![1, 1], 0.1),
            (vec![-1, -1], 0.1),
        ],
        2,
    )
    .unwrap();
    let tab = KernelTable::new(&k, 1.0, 8.0, DEFAULT_TOL).unwrap();
    let m = 256;
    for time in [1.0, 8.0] {
        for x in [[0, 0], [1, 1], [2, -1]] {
            let mut s = 0.0;
            for a in 0..m {
                for b in 0..m {
                    let k1 = 2.0 * PI * a as f64 / m as f64;
                    let k2 = 2.0 * PI * b as f64 / m as f64;
                    let phi = 0.4 * k1.cos() + 0.4 * k2.cos() + 0.2 * (k1 + k2).cos();
                    s += (-time * (1.0 - phi)).exp() * (k1 * x[0] as f64 + k2 * x[1] as f64).cos();
                }
            }
            let want = s / (m * m) as f64;
            let got = tab.prob(time, &Site::from_slice(&x)).unwrap();
            assert!((got - want).abs() < 1e-12, "t={time} x={x:?}: {got} vs {want}");
        }
    }
}

#[test]
fn probabilities_bounded_by_return_probability_and_sum_to_one() {
    let t = KernelTable::new(&srw3(), 1.0, 30.0, DEFAULT_TOL).unwrap();
    for time in [0.1, 1.0, 5.0, 30.0] {
        let m = t.measure(time).unwrap();
        let total = m.total();
        assert!((1.0 - 1e-10..=1.0 + 1e-12).contains(&total));
        let p0 = t.prob(time, &Site::origin()).unwrap();
        for (_, v) in m.sites_above(3, 0.0) {
            assert!(v <= p0 + 1e-15);
        }
    }
}

#[test]
fn green_function_srw() {
    let k = srw3();
    let rep = green_function_report(&k, 1.0, GreenOptions::default()).unwrap();
    assert!((rep.value - 1.516_386_0).abs() < 1e-4);
    assert!((rep.value - watson()).abs() < 1e-5, "{} vs {}", rep.value, watson());
    // Independent oracle: multinomial partial sum with the max-based LCLT bound.
    let n = rep.n_terms;
    let partial: f64 = (0..=n).map(srw3_return).sum();
    assert!((partial - rep.partial_sum).abs() < 1e-12);
    assert!(rep.value >= partial && rep.value <= partial + rep.tail_bound);
    let half = green_function(&k, 2.0).unwrap();
    assert!((half - rep.value / 2.0).abs() < 1e-15);
    assert!(matches!(green_function(&JumpKernel::simple(2).unwrap(), 1.0), Err(Error::RecurrentWalk { .. })));
}

#[test]
fn green_function_quadrature_consistency() {
    // ∫_0^T p_s(0) ds by quadrature plus the LCLT tail ∫_T^∞ c s^{-3/2} ds.
    let k = srw3();
    let g = green_function(&k, 1.0).unwrap();
    let big_t = 200.0;
    let t = KernelTable::new(&k, 1.0, big_t, DEFAULT_TOL).unwrap();
    let head = rwpmlab_core::quad::integrate(|s| t.prob(s, &Site::origin()).unwrap(), 0.0, big_t, 1e-12, 1e-12);
    let c = (2.0 * PI).powf(-1.5) / k.det_cov().sqrt();
    let tail = 2.0 * c / big_t.sqrt();
    assert!(((head + tail) - g).abs() < 2e-4 * g);
}

#[test]
fn local_clt() {
    let t = KernelTable::new(&srw3(), 1.0, 400.0, DEFAULT_TOL).unwrap();
    let r200 = lclt_ratio(&t, 200.0).unwrap();
    assert!((r200 - 1.0).abs() < 0.02);
    assert!(lclt_ratio(&t, 1.0).unwrap() > 1.0);
    let mut last = f64::INFINITY;
    for tt in [50.0, 100.0, 200.0, 400.0] {
        let r = lclt_ratio(&t, tt).unwrap();
        assert!((r - 1.0).abs() <= 5.0 / tt);
        assert!((r - 1.0).abs() < last);
        last = (r - 1.0).abs();
    }
}

/// Calibrate the constant of a kernel inequality on one grid, then check it on
/// a disjoint grid with a fixed safety factor.
fn calibrate(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

#[test]
fn triple_return_sum_bound() {
    let t = KernelTable::new(&srw3(), 1.0, 60.0, DEFAULT_TOL).unwrap();
    assert!((triple_return_sum(&t, 0.0, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
    let norm = |a: f64, b: f64, c: f64| (1.0 + a * b + b * c + c * a).powf(1.5);
    let calib = [0.5, 2.0, 6.0, 18.0];
    let mut pts = Vec::new();
    for &a in &calib {
        for &b in &calib {
            for &c in &calib {
                pts.push((a, b, c));
            }
        }
    }
    let c = calibrate(pts.iter().map(|&(a, b, c)| triple_return_sum(&t, a, b, c).unwrap() * norm(a, b, c)));
    let test = [1.0, 4.0, 10.0, 25.0];
    for &a in &test {
        for &b in &test {
            for &cc in &test {
                assert!(triple_return_sum(&t, a, b, cc).unwrap() * norm(a, b, cc) <= 2.0 * c);
            }
        }
    }
    assert!(triple_return_sum(&t, 4.0, 4.0, 4.0).unwrap() <= 2.0 * c / 49f64.powf(1.5));
    // With c tiny the sum is dominated by the origin term.
    let v = triple_return_sum(&t, 10.0, 10.0, 0.01).unwrap();
    let p10 = t.prob(10.0, &Site::origin()).unwrap();
    let p001 = t.prob(0.01, &Site::origin()).unwrap();
    assert!(v >= p10 * p10 * p001);
    assert!((v - p10 * p10 * p001) / v < 0.02);
}

#[test]
fn kernel_diff_bounds() {
    let t = KernelTable::new(&srw3(), 1.0, 1100.0, DEFAULT_TOL).unwrap();
    let scaled = |tt: f64, r: f64| kernel_diff(&t, tt, r).unwrap() * tt.powf(1.5) * (tt + r) / r;
    let calib = [(1.0, 1.0), (3.0, 10.0), (10.0, 3.0), (30.0, 30.0), (50.0, 200.0), (100.0, 5.0)];
    let hi = calib.iter().map(|&(a, b)| scaled(a, b)).fold(0.0, f64::max);
    let lo = calib.iter().map(|&(a, b)| scaled(a, b)).fold(f64::INFINITY, f64::min);
    for (tt, r) in [(20.0, 5.0), (2.0, 7.0), (7.0, 70.0), (60.0, 15.0), (15.0, 400.0)] {
        let v = scaled(tt, r);
        assert!(v > 0.0);
        assert!(v <= 2.0 * hi && v >= 0.5 * lo, "t={tt} r={r}: {v} [{lo}, {hi}]");
    }
    // Small r: difference quotient matches the generator derivative.
    let o = Site::origin();
    let h = 1e-5;
    let dq = kernel_diff(&t, 3.0, h).unwrap() / h;
    let der = -(t.prob(3.0 + h / 2.0, &o).unwrap() - t.prob(3.0 - h / 2.0, &o).unwrap()) / h;
    assert!((dq - der).abs() < 1e-4 * der.abs());
    assert!((t.prob_dt(3.0, &o).unwrap() + der).abs() < 1e-7);
    // Large r: the second term is negligible.
    let d = kernel_diff(&t, 2.0, 1000.0).unwrap();
    let p2 = t.prob(2.0, &o).unwrap();
    assert!((d - p2).abs() < 1e-3 * p2);
}

#[test]
fn second_difference() {
    let t = KernelTable::new(&srw3(), 1.0, 200.0, DEFAULT_TOL).unwrap();
    assert_eq!(second_diff(&t, 5.0, 0.0, 3.0).unwrap(), 0.0);
    assert_eq!(second_diff(&t, 5.0, 3.0, 0.0).unwrap(), 0.0);
    let scaled = |tt: f64, a: f64, b: f64| {
        second_diff(&t, tt, a, b).unwrap().abs() * tt.powi(3) * (tt + a) * (tt + b) / (a * b)
    };
    let calib = [(2.0, 1.0, 1.0), (5.0, 2.0, 9.0), (20.0, 20.0, 4.0), (40.0, 10.0, 50.0), (8.0, 30.0, 30.0)];
    let c = calib.iter().map(|&(a, b, cc)| scaled(a, b, cc)).fold(0.0, f64::max);
    assert!(scaled(10.0, 3.0, 7.0) <= 2.0 * c);
    for (tt, a, b) in [(10.0, 3.0, 7.0), (3.0, 5.0, 5.0), (30.0, 1.0, 60.0), (15.0, 40.0, 2.0)] {
        assert!(scaled(tt, a, b) <= 2.0 * c);
    }
    for tt in [0.5, 2.0, 10.0, 50.0] {
        for a in [0.5, 5.0, 40.0] {
            for b in [1.0, 20.0] {
                assert!(second_diff_positivity(&t, tt, a, b).unwrap() >= -1e-12);
            }
        }
    }
}

#[test]
fn bridge_comparison_examples() {
    let t = KernelTable::new(&srw3(), 1.0, 210.0, DEFAULT_TOL).unwrap();
    let (l, r) = bridge_return_compare(&t, &[(1.0, 1.0)]).unwrap();
    assert!(l > r);
    let (l, r) = bridge_return_compare(&t, &[(1.0, 1.0), (1.0, 1.0)]).unwrap();
    assert!(l > r);
    let p2 = t.prob(2.0, &Site::origin()).unwrap();
    assert!((r - p2).abs() < 1e-15);
    let gap = |b: f64| {
        let (l, r) = bridge_return_compare(&t, &[(2.0, b), (3.0, b)]).unwrap();
        l - r
    };
    let (g1, g10, g100) = (gap(1.0), gap(10.0), gap(100.0));
    assert!(g1 > g10 && g10 > g100 && g100 > 0.0);
}

#[test]
fn w_constant_limits() {
    let t = KernelTable::new(&srw3(), 1.0, 2000.0, DEFAULT_TOL).unwrap();
    let c = w_bound_constant(&t, 1.0).unwrap();
    assert!(c >= 2f64.powf(1.5) - 1e-12);
    let o = Site::origin();
    let w500 = t.prob(500.0, &o).unwrap() / t.prob(1000.0, &o).unwrap();
    assert!((w500 / 2f64.powf(1.5) - 1.0).abs() < 0.01);
    assert!((w_bound_constant(&t, 0.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn transition_grid_matches_exact() {
    use std::sync::Arc;
    let table = Arc::new(KernelTable::new(&srw3(), 1.0, 120.0, DEFAULT_TOL).unwrap());
    let grid = TransitionGrid::new(table.clone(), 0.05, 50.0, 12, 100.0).unwrap();
    for &tt in &[0.0, 0.013, 0.05, 0.777, 3.3333, 12.5, 49.99] {
        for x in [[0, 0, 0], [1, 0, 0], [2, -3, 1], [0, 0, 5], [13, 0, 0]] {
            let s = Site::from_slice(&x);
            let want = table.prob(tt, &s).unwrap();
            assert!((grid.prob(tt, &s) - want).abs() < 5e-9, "t={tt} x={x:?}");
        }
        let o = table.prob(2.0 * tt, &Site::origin()).unwrap();
        assert!((grid.origin(2.0 * tt) - o).abs() < 5e-9, "origin t={tt}: {} vs {o}", grid.origin(2.0 * tt));
    }
}

#[test]
fn binary_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let k = srw3();
    let a = KernelTable::load_or_build(&k, 1.0, 20.0, DEFAULT_TOL, Some(dir.path())).unwrap();
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    let b = KernelTable::load_or_build(&k, 1.0, 20.0, DEFAULT_TOL, Some(dir.path())).unwrap();
    for tt in [0.5, 7.0, 20.0] {
        let s = Site::from_slice(&[1, -2, 0]);
        assert_eq!(a.prob(tt, &s).unwrap(), b.prob(tt, &s).unwrap());
    }
}
