//! Return probabilities q^{*n}(0) and the Green function.

use super::measure::{BoxArray, Line};
use super::JumpKernel;
use crate::error::{invalid, Error, Result};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

/// Binomial(n, p) probabilities, skipping negligible tails: (first k, weights).
fn binomial_row(n: usize, p: f64) -> (usize, Vec<f64>) {
    if p >= 1.0 {
        return (n, vec![1.0]);
    }
    if p <= 0.0 {
        return (0, vec![1.0]);
    }
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let ln_nf = ln_gamma(n as f64 + 1.0);
    let logpmf = |k: usize| ln_nf - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0) + k as f64 * lp + (n - k) as f64 * lq;
    let pm = logpmf(mode).exp();
    let ratio = p / (1.0 - p);
    let cut = pm * 1e-20;
    let mut up = Vec::new();
    let mut v = pm;
    let mut k = mode;
    while k < n {
        v *= (n - k) as f64 / (k + 1) as f64 * ratio;
        k += 1;
        if v < cut {
            break;
        }
        up.push(v);
    }
    let mut down = Vec::new();
    v = pm;
    k = mode;
    while k > 0 {
        v *= k as f64 / (n - k + 1) as f64 / ratio;
        k -= 1;
        if v < cut {
            break;
        }
        down.push(v);
    }
    let lo = mode - down.len();
    let mut w: Vec<f64> = down.into_iter().rev().collect();
    w.push(pm);
    w.extend(up);
    (lo, w)
}

/// q^{*n}(0) for n = 0..=n_max.
///
/// Axis-only kernels fold the coordinates one at a time: with p_j the share
/// of axis j among the axes folded so far, S_j(n) = Σ_k Bin(n,k;p_j) r_j(k) S_{j−1}(n−k)
/// where r_j is the one-dimensional return sequence. General kernels use
/// q^{*2m}(0) = Σ_x q^{*m}(x)² and q^{*2m+1}(0) = Σ_x q^{*m}(x) q^{*m+1}(x),
/// so only powers up to n_max/2 + 1 are formed.
pub fn origin_sequence(kernel: &JumpKernel, n_max: usize) -> Vec<f64> {
    match kernel.axes() {
        Some(laws) => {
            let hold: f64 = 1.0 - laws.iter().map(|l| l.weight).sum::<f64>();
            let mut seq = vec![1.0; n_max + 1];
            let mut folded = hold.max(0.0);
            for law in laws {
                let mut r = Vec::with_capacity(n_max + 1);
                let mut line = Line::delta();
                for _ in 0..=n_max {
                    r.push(line.get(0));
                    line = line.convolve_law(&law.steps);
                    line.trim(1e-300);
                }
                folded += law.weight;
                let p = law.weight / folded;
                let mut next = vec![0.0; n_max + 1];
                for (n, slot) in next.iter_mut().enumerate() {
                    let (lo, w) = binomial_row(n, p);
                    *slot = w.iter().enumerate().map(|(i, wk)| wk * r[lo + i] * seq[n - lo - i]).sum();
                }
                seq = next;
            }
            seq
        }
        None => {
            let half = n_max / 2 + 1;
            let mut powers = vec![BoxArray::delta(kernel.dim())];
            for _ in 0..half {
                let mut next = powers.last().unwrap().convolve_law(kernel.support());
                next.trim_shells(1e-30);
                powers.push(next);
            }
            (0..=n_max)
                .map(|n| {
                    let m = n / 2;
                    let (a, b) = (&powers[m], &powers[n - m]);
                    a.iter().map(|(x, v)| v * b.get(&x)).sum()
                })
                .collect()
        }
    }
}

/// Controls for [`green_function_report`].
#[derive(Clone, Copy, Debug)]
pub struct GreenOptions {
    /// Target relative error.
    pub rel_tol: f64,
    /// First partial-sum length tried; doubled until converged.
    pub n_start: usize,
    /// Largest partial-sum length.
    pub n_max: usize,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions { rel_tol: 1e-6, n_start: 100, n_max: 6400 }
    }
}

/// Partial sum, tail and error accounting of a Green-function evaluation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenReport {
    /// ∫_0^∞ p_s(0) ds at the requested rate.
    pub value: f64,
    /// Σ_{n≤N} q^{*n}(0).
    pub partial_sum: f64,
    /// Richardson-corrected tail estimate Σ_{n>N}.
    pub tail: f64,
    /// |G(N) − G(N/2)| with both tails corrected, unit rate.
    pub error_estimate: f64,
    /// Conservative tail bound c_max Σ_{n>N} n^{−d/2}, c_max the largest
    /// n^{d/2} q^{*n}(0) among the last ten terms.
    pub tail_bound: f64,
    pub n_terms: usize,
    pub period: usize,
}

fn window_mean(seq: &[f64], end: usize, d: f64) -> (f64, f64) {
    let start = end - 9;
    let m = (start..=end).map(|n| seq[n] * (n as f64).powf(d / 2.0)).sum::<f64>() / 10.0;
    (m, 0.5 * (start + end) as f64)
}

/// Tail Σ_{n>N} from the local CLT profile c(n) ≈ c∞ + b/n fitted on two
/// windows, integrated from the half-period point beyond the last term.
fn corrected_sum(seq: &[f64], n: usize, d: f64, period: usize) -> (f64, f64) {
    let partial: f64 = seq[..=n].iter().sum();
    let (c1, n1) = window_mean(seq, n, d);
    let (c2, n2) = window_mean(seq, n / 2, d);
    let c_inf = (n1 * c1 - n2 * c2) / (n1 - n2);
    let b = n1 * (c1 - c_inf);
    let last = n - n % period;
    let x0 = last as f64 + period as f64 / 2.0;
    let e = d / 2.0;
    let tail = c_inf * x0.powf(1.0 - e) / (e - 1.0) + b * x0.powf(-e) / e;
    (partial, tail)
}

/// Hurwitz-type sum Σ_{n>N} n^{−s} by Euler–Maclaurin.
fn zeta_tail(n: usize, s: f64) -> f64 {
    let x = n as f64 + 1.0;
    x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s) + s / 12.0 * x.powf(-s - 1.0)
}

/// G = ∫_0^∞ p_s(0) ds for the walk with the given jump rate.
pub fn green_function(kernel: &JumpKernel, rate: f64) -> Result<f64> {
    green_function_report(kernel, rate, GreenOptions::default()).map(|r| r.value)
}

pub fn green_function_report(kernel: &JumpKernel, rate: f64, opts: GreenOptions) -> Result<GreenReport> {
    let d = kernel.dim();
    if d <= 2 {
        return Err(Error::RecurrentWalk { dim: d });
    }
    if !(rate > 0.0) {
        return invalid("rate must be positive");
    }
    if opts.n_start < 40 || opts.n_max < opts.n_start {
        return invalid("green options need 40 ≤ n_start ≤ n_max");
    }
    let df = d as f64;
    let mut n = opts.n_start;
    let mut seq = origin_sequence(kernel, n);
    loop {
        let odd_zero = seq.iter().skip(1).step_by(2).all(|&v| v == 0.0);
        let period = if odd_zero { 2 } else { 1 };
        let (s1, t1) = corrected_sum(&seq, n, df, period);
        let (s0, t0) = corrected_sum(&seq, n / 2, df, period);
        let g1 = s1 + t1;
        let err = (g1 - (s0 + t0)).abs();
        let c_max = (n - 9..=n).map(|k| seq[k] * (k as f64).powf(df / 2.0)).fold(0.0, f64::max);
        let report = GreenReport {
            value: g1 / rate,
            partial_sum: s1,
            tail: t1,
            error_estimate: err,
            tail_bound: c_max * zeta_tail(n, df / 2.0),
            n_terms: n,
            period,
        };
        if err <= opts.rel_tol * g1 {
            return Ok(report);
        }
        if 2 * n > opts.n_max {
            return Err(Error::TailBoundFailed { estimate: err / g1, tol: opts.rel_tol, terms: n });
        }
        n *= 2;
        seq = origin_sequence(kernel, n);
    }
}
