//! The heavy-tailed waiting-time law K, renewal sampling and the renewal density P.
//!
//! For the pinning model K(t) = (1+ρ) p_{(1+ρ)t}(0) / G. Below a switch time the
//! density is tabulated exactly from the kernel; above it the power tail
//! c t^{−1−α} takes over, with c fixed so the total mass is exactly one.

use crate::error::{invalid, Error, Result};
use crate::kernels::{green_function, JumpKernel, KernelTable, Site, DEFAULT_TOL};
use crate::quad::{gk15, hermite, integrate};
use crate::rng::Stream;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use std::f64::consts::PI;
use std::sync::Arc;

/// Largest time at which the exact density is tabulated while locating the switch.
pub const SCAN_HORIZON: f64 = 4000.0;
/// Relative tolerance for declaring the tail regime.
pub const SWITCH_TOL: f64 = 0.005;
/// Node spacing is this fraction of max(1, t).
const NODE_REL: f64 = 0.01;

#[derive(Clone, Debug)]
struct Tabulated {
    nodes: Vec<f64>,
    k: Vec<f64>,
    dk: Vec<f64>,
    f: Vec<f64>,
    m: Vec<f64>,
    exact: Arc<KernelTable>,
    scale: f64,
}

#[derive(Clone, Debug)]
enum Shape {
    Tabulated(Box<Tabulated>),
    /// K(t) = (α/s)(1 + t/s)^{−1−α}.
    Lomax { scale: f64 },
}

/// Waiting-time law with density K(t) ~ c_K t^{−1−α}.
#[derive(Clone, Debug)]
pub struct RenewalLaw {
    kernel_id: Option<String>,
    rho: f64,
    green: Option<f64>,
    alpha: f64,
    c_k: f64,
    c_tail: f64,
    t_switch: f64,
    shape: Shape,
}

/// Metadata emitted alongside renewal output.
#[derive(Clone, Debug, Serialize)]
pub struct LawInfo {
    pub kernel_id: Option<String>,
    pub rho: f64,
    pub green: Option<f64>,
    pub alpha: f64,
    pub c_k: f64,
    pub c_tail: f64,
    pub t_switch: f64,
}

/// Monotone evaluation position for increasing arguments.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cursor(usize);

impl RenewalLaw {
    /// The return-time law of X − Y with Y at rate ρ (d = 3 only, α = 1/2).
    pub fn pinning(kernel: &JumpKernel, rho: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return invalid(format!("ρ must be non-negative, got {rho}"));
        }
        let d = kernel.dim();
        let alpha = d as f64 / 2.0 - 1.0;
        if d != 3 {
            return Err(Error::UnsupportedAlpha { alpha });
        }
        let g = green_function(kernel, 1.0)?;
        let r = 1.0 + rho;
        let table = Arc::new(KernelTable::new(kernel, r, SCAN_HORIZON, DEFAULT_TOL)?);
        let scale = r / g;
        let c_k = kernel.det_cov().powf(-0.5) * (2.0 * PI).powf(-(d as f64) / 2.0) * r.powf(1.0 - d as f64 / 2.0) / g;
        let exact = |t: f64| scale * table.prob(t, &Site::origin()).unwrap();
        let off = |t: f64| exact(t) * t.powf(1.0 + alpha) / c_k - 1.0;

        // Walk down from the scan horizon to the last crossing of the band.
        if off(SCAN_HORIZON).abs() >= SWITCH_TOL {
            return Err(Error::NotConverged { change: off(SCAN_HORIZON).abs(), allowed: SWITCH_TOL });
        }
        let mut hi = SCAN_HORIZON;
        let mut lo = hi / 1.01;
        while off(lo).abs() < SWITCH_TOL {
            hi = lo;
            lo /= 1.01;
            if lo < 1e-3 {
                break;
            }
        }
        let t_switch = crate::quad::bisect(|t| off(t).abs() - SWITCH_TOL, lo, hi, 1e-9 * hi);

        let mut nodes = vec![0.0];
        while *nodes.last().unwrap() < t_switch {
            let t = *nodes.last().unwrap();
            nodes.push((t + NODE_REL * t.max(1.0)).min(t_switch));
        }
        let origin = Site::origin();
        let k: Vec<f64> = nodes.iter().map(|&t| exact(t)).collect();
        let dk: Vec<f64> = nodes.iter().map(|&t| scale * table.prob_dt(t, &origin).unwrap()).collect();
        let mut f = vec![0.0];
        let mut m = vec![0.0];
        for w in nodes.windows(2) {
            let (i0, _) = gk15(&mut |u| exact(u), w[0], w[1]);
            let (i1, _) = gk15(&mut |u| u * exact(u), w[0], w[1]);
            f.push(f.last().unwrap() + i0);
            m.push(m.last().unwrap() + i1);
        }
        let f_t = *f.last().unwrap();
        let c_tail = alpha * t_switch.powf(alpha) * (1.0 - f_t);
        Ok(RenewalLaw {
            kernel_id: Some(kernel.id().to_string()),
            rho,
            green: Some(g),
            alpha,
            c_k,
            c_tail,
            t_switch,
            shape: Shape::Tabulated(Box::new(Tabulated { nodes, k, dk, f, m, exact: table, scale })),
        })
    }

    /// Lomax law K(t) = (α/s)(1+t/s)^{−1−α}: exact for every α ∈ (0,1).
    pub fn lomax(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::UnsupportedAlpha { alpha });
        }
        if !(scale > 0.0) {
            return invalid("Lomax scale must be positive");
        }
        let c_k = alpha * scale.powf(alpha);
        let t_switch = scale / ((1.0 - SWITCH_TOL).powf(-1.0 / (1.0 + alpha)) - 1.0);
        Ok(RenewalLaw {
            kernel_id: None,
            rho: 0.0,
            green: None,
            alpha,
            c_k,
            c_tail: c_k,
            t_switch,
            shape: Shape::Lomax { scale },
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Asymptotic tail constant c_K.
    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    /// Constant actually used beyond the switch (mass-normalised).
    pub fn c_tail(&self) -> f64 {
        self.c_tail
    }

    pub fn t_switch(&self) -> f64 {
        self.t_switch
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn green(&self) -> Option<f64> {
        self.green
    }

    pub fn info(&self) -> LawInfo {
        LawInfo {
            kernel_id: self.kernel_id.clone(),
            rho: self.rho,
            green: self.green,
            alpha: self.alpha,
            c_k: self.c_k,
            c_tail: self.c_tail,
            t_switch: self.t_switch,
        }
    }

    /// (t, CDF) pairs of the tabulated body (empty for closed-form laws).
    pub fn cdf_table(&self) -> Vec<(f64, f64)> {
        match &self.shape {
            Shape::Tabulated(tb) => tb.nodes.iter().copied().zip(tb.f.iter().copied()).collect(),
            Shape::Lomax { .. } => Vec::new(),
        }
    }

    /// Exact K from the kernel table (tabulated laws, t ≤ SCAN_HORIZON).
    pub fn exact_density(&self, t: f64) -> Result<f64> {
        match &self.shape {
            Shape::Tabulated(tb) => Ok(tb.scale * tb.exact.prob(t, &Site::origin())?),
            Shape::Lomax { .. } => Ok(self.density(t)),
        }
    }

    fn cell(tb: &Tabulated, t: f64) -> usize {
        tb.nodes.partition_point(|&x| x <= t).saturating_sub(1).min(tb.nodes.len() - 2)
    }

    fn eval_cell(tb: &Tabulated, c: usize, t: f64) -> (f64, f64, f64) {
        let (a, b) = (tb.nodes[c], tb.nodes[c + 1]);
        let w = b - a;
        let th = (t - a) / w;
        let k = hermite(th, tb.k[c], tb.k[c + 1], tb.dk[c] * w, tb.dk[c + 1] * w);
        let f = hermite(th, tb.f[c], tb.f[c + 1], tb.k[c] * w, tb.k[c + 1] * w);
        let m = hermite(th, tb.m[c], tb.m[c + 1], a * tb.k[c] * w, b * tb.k[c + 1] * w);
        (k, f, m)
    }

    /// (K, F, M) at t where F is the CDF and M(t) = ∫_0^t u K(u) du.
    fn kfm_from(&self, cell: Option<usize>, t: f64) -> (f64, f64, f64) {
        let a = self.alpha;
        match &self.shape {
            Shape::Tabulated(tb) => {
                if t < self.t_switch {
                    let c = cell.unwrap_or_else(|| Self::cell(tb, t));
                    Self::eval_cell(tb, c, t)
                } else {
                    let ts = self.t_switch;
                    let c = self.c_tail;
                    let m0 = tb.m.last().unwrap();
                    if a == 0.5 {
                        let s = t.sqrt();
                        return (c / (t * s), 1.0 - 2.0 * c / s, m0 + 2.0 * c * (s - ts.sqrt()));
                    }
                    let k = c * t.powf(-1.0 - a);
                    let f = 1.0 - c / a * t.powf(-a);
                    let m = m0 + c / (1.0 - a) * (t.powf(1.0 - a) - ts.powf(1.0 - a));
                    (k, f, m)
                }
            }
            Shape::Lomax { scale } => {
                let v = 1.0 + t / scale;
                let k = a / scale * v.powf(-1.0 - a);
                let f = 1.0 - v.powf(-a);
                let m = scale * a * ((v.powf(1.0 - a) - 1.0) / (1.0 - a) + (v.powf(-a) - 1.0) / a);
                (k, f, m)
            }
        }
    }

    /// K(t).
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        self.kfm_from(None, t).0
    }

    /// ∫_0^t K.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.kfm_from(None, t).1
    }

    /// ∫_0^t u K(u) du.
    pub fn first_moment(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.kfm_from(None, t).2
    }

    /// (F, M) at t, for non-decreasing t along one cursor.
    #[inline]
    pub fn fm_at(&self, cur: &mut Cursor, t: f64) -> (f64, f64) {
        if let Shape::Tabulated(tb) = &self.shape {
            if t < self.t_switch {
                let last = tb.nodes.len() - 2;
                while cur.0 < last && tb.nodes[cur.0 + 1] <= t {
                    cur.0 += 1;
                }
                let c = cur.0;
                let (x0, x1) = (tb.nodes[c], tb.nodes[c + 1]);
                let w = x1 - x0;
                let th = (t - x0) / w;
                let f = hermite(th, tb.f[c], tb.f[c + 1], tb.k[c] * w, tb.k[c + 1] * w);
                let m = hermite(th, tb.m[c], tb.m[c + 1], x0 * tb.k[c] * w, x1 * tb.k[c + 1] * w);
                return (f, m);
            }
        }
        let (_, f, m) = self.kfm_from(None, t);
        (f, m)
    }

    /// Relative jump of K at the switch time.
    pub fn switch_jump(&self) -> f64 {
        match &self.shape {
            Shape::Tabulated(tb) => {
                let below = *tb.k.last().unwrap();
                let above = self.c_tail * self.t_switch.powf(-1.0 - self.alpha);
                (above / below - 1.0).abs()
            }
            Shape::Lomax { .. } => 0.0,
        }
    }

    /// Gap with CDF u, by inversion.
    pub fn quantile(&self, u: f64) -> f64 {
        let a = self.alpha;
        match &self.shape {
            Shape::Lomax { scale } => scale * ((1.0 - u).powf(-1.0 / a) - 1.0),
            Shape::Tabulated(tb) => {
                let f_t = *tb.f.last().unwrap();
                if u >= f_t {
                    return (self.c_tail / (a * (1.0 - u))).powf(1.0 / a);
                }
                let c = tb.f.partition_point(|&x| x <= u).saturating_sub(1).min(tb.nodes.len() - 2);
                let (lo, hi) = (tb.nodes[c], tb.nodes[c + 1]);
                let (mut l, mut h) = (lo, hi);
                let mut t = lo + (hi - lo) * (u - tb.f[c]) / (tb.f[c + 1] - tb.f[c]);
                for _ in 0..60 {
                    let (k, f, _) = Self::eval_cell(tb, c, t);
                    let g = f - u;
                    if g > 0.0 {
                        h = t;
                    } else {
                        l = t;
                    }
                    if g.abs() <= 1e-15 || h - l <= 1e-14 * hi {
                        break;
                    }
                    let nt = t - g / k;
                    t = if nt > l && nt < h { nt } else { 0.5 * (l + h) };
                }
                t
            }
        }
    }

    /// One waiting time.
    pub fn sample_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Mass check: body quadrature plus the closed-form nominal tail, and an
    /// independent version integrating the exact density to the scan horizon.
    pub fn normalization(&self) -> Result<Normalization> {
        let a = self.alpha;
        let body = self.cdf(self.t_switch);
        let nominal = body + self.c_k / a * self.t_switch.powf(-a) - 1.0;
        let independent = match &self.shape {
            Shape::Lomax { .. } => 0.0,
            Shape::Tabulated(_) => {
                let t2 = SCAN_HORIZON;
                let dens = |t: f64| self.exact_density(t).unwrap();
                let mid = integrate(dens, self.t_switch, t2, 1e-13, 1e-12);
                // Tail c t^{−1−α}(1 + b/t), b read off at t2.
                let b = t2 * (dens(t2) * t2.powf(1.0 + a) / self.c_k - 1.0);
                let tail = self.c_k * (t2.powf(-a) / a + b * t2.powf(-a - 1.0) / (a + 1.0));
                body + mid + tail - 1.0
            }
        };
        Ok(Normalization { body, nominal_residual: nominal, independent_residual: independent })
    }
}

/// Output of [`RenewalLaw::normalization`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Normalization {
    pub body: f64,
    pub nominal_residual: f64,
    pub independent_residual: f64,
}

/// K(t).
pub fn waiting_density(law: &RenewalLaw, t: f64) -> f64 {
    law.density(t)
}

/// One gap drawn from `stream`.
pub fn sample_gap(law: &RenewalLaw, stream: Stream) -> f64 {
    law.sample_gap(&mut stream.rng())
}

/// Renewal epochs σ_0 = origin < σ_1 < ⋯ up to `until`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalSample {
    pub origin: f64,
    pub epochs: Vec<f64>,
}

impl RenewalSample {
    pub fn new(origin: f64, epochs: Vec<f64>) -> Result<Self> {
        if epochs.first() != Some(&origin) || epochs.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("renewal epochs must start at the origin and increase strictly");
        }
        Ok(RenewalSample { origin, epochs })
    }

    /// Number of epochs in [origin, t], σ_0 included.
    pub fn count_until(&self, t: f64) -> usize {
        self.epochs.partition_point(|&s| s <= t)
    }
}

/// Sample epochs of the renewal started at `origin`, keeping those ≤ `until`.
pub fn sample_renewal<R: Rng + ?Sized>(law: &RenewalLaw, origin: f64, until: f64, rng: &mut R) -> RenewalSample {
    let mut epochs = vec![origin];
    let mut s = origin;
    loop {
        s += law.sample_gap(rng);
        if s > until {
            break;
        }
        epochs.push(s);
    }
    RenewalSample { origin, epochs }
}

/// Ascending time nodes starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(h: f64, t: f64) -> Result<Self> {
        if !(h > 0.0 && t > 0.0) {
            return invalid("grid step and horizon must be positive");
        }
        let n = (t / h).ceil() as usize;
        Ok(TimeGrid { points: (0..=n).map(|i| (i as f64 * h).min(t)).collect() })
    }

    /// Step h up to `t_lin`, then geometric with ratio 1 + h/t_lin up to `t_max`.
    pub fn hybrid(h: f64, t_lin: f64, t_max: f64) -> Result<Self> {
        let mut g = TimeGrid::uniform(h, t_lin.min(t_max))?;
        let r = 1.0 + h / t_lin;
        while *g.points.last().unwrap() < t_max {
            let next = (g.points.last().unwrap() * r).min(t_max);
            g.points.push(next);
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.points.last().unwrap()
    }
}

/// Piecewise-linear function on a [`TimeGrid`].
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridFunction {
    /// Linear interpolation; clamps outside the grid.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let th = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.values[k] + th * (self.values[k + 1] - self.values[k])
    }

    /// ∫_0^t of the interpolant.
    pub fn integral(&self, t: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..self.times.len() - 1 {
            let (a, b) = (self.times[k], self.times[k + 1]);
            if a >= t {
                break;
            }
            let bb = b.min(t);
            s += 0.5 * (bb - a) * (self.values[k] + self.at(bb));
        }
        s
    }
}

/// Weights of ∫_0^{t_i} f(s) K(t_i − s) ds for f piecewise linear on `t`:
/// returns (w_j on f(t_j), j = 0..=i). Each cell is integrated exactly against K.
fn row_weights(law: &RenewalLaw, t: &[f64], i: usize, fb: &mut [f64], mb: &mut [f64], w: &mut [f64]) {
    let mut cur = Cursor::default();
    for j in (0..=i).rev() {
        let (f, m) = law.fm_at(&mut cur, t[i] - t[j]);
        fb[j] = f;
        mb[j] = m;
    }
    w[..=i].iter_mut().for_each(|x| *x = 0.0);
    for j in 0..i {
        let h = t[j + 1] - t[j];
        let b = t[i] - t[j];
        let i0 = fb[j] - fb[j + 1];
        let i1 = (b * i0 - (mb[j] - mb[j + 1])) / h;
        w[j] += i0 - i1;
        w[j + 1] += i1;
    }
}

/// Solve P = K + K∗P on `grid` by linear product integration.
pub fn renewal_function(law: &RenewalLaw, grid: &TimeGrid) -> Result<GridFunction> {
    let t = &grid.points;
    let n = t.len();
    if n < 2 || t[0] != 0.0 {
        return invalid("renewal grid must start at 0 and have two points");
    }
    let mut p = vec![0.0; n];
    let (mut fb, mut mb, mut w) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    p[0] = law.density(0.0);
    for i in 1..n {
        row_weights(law, t, i, &mut fb, &mut mb, &mut w);
        let rest: f64 = law.density(t[i]) + (0..i).map(|j| w[j] * p[j]).sum::<f64>();
        p[i] = rest / (1.0 - w[i]);
    }
    Ok(GridFunction { times: t.clone(), values: p })
}

/// Largest relative gap between two grid functions over `a`'s nodes in [t_min, ∞).
pub fn relative_change(a: &GridFunction, b: &GridFunction, t_min: f64) -> f64 {
    a.times
        .iter()
        .zip(&a.values)
        .filter(|(t, _)| **t >= t_min && **t <= *b.times.last().unwrap())
        .map(|(&t, &v)| ((b.at(t) - v) / v).abs())
        .fold(0.0, f64::max)
}

/// Renewal density with a step-halving check.
#[derive(Clone, Debug)]
pub struct CheckedRenewal {
    pub coarse: GridFunction,
    pub fine: GridFunction,
    pub change: f64,
}

/// Solve on the hybrid grid at step h and h/2; GridTooCoarse past 1 % change.
pub fn renewal_function_checked(law: &RenewalLaw, h: f64, t_max: f64) -> Result<CheckedRenewal> {
    let t_lin = 100f64.min(t_max);
    let coarse = renewal_function(law, &TimeGrid::hybrid(h, t_lin, t_max)?)?;
    let fine = renewal_function(law, &TimeGrid::hybrid(h / 2.0, t_lin, t_max)?)?;
    let change = relative_change(&coarse, &fine, 0.0);
    if change > 0.01 {
        return Err(Error::GridTooCoarse { change });
    }
    Ok(CheckedRenewal { coarse, fine, change })
}

/// Max |P − K − K∗P| on the grid, with K∗P recomputed by the same product rule.
pub fn renewal_residual(law: &RenewalLaw, p: &GridFunction) -> f64 {
    let t = &p.times;
    let n = t.len();
    let (mut fb, mut mb, mut w) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut worst = 0.0f64;
    for i in 1..n {
        row_weights(law, t, i, &mut fb, &mut mb, &mut w);
        let conv: f64 = (0..=i).map(|j| w[j] * p.values[j]).sum();
        let r = (p.values[i] - law.density(t[i]) - conv).abs() / p.values[i];
        worst = worst.max(r);
    }
    worst
}

/// Limit constant α sin(απ)/π of c_K t^{1−α} P(t).
pub fn llt_constant(alpha: f64) -> f64 {
    alpha * (alpha * PI).sin() / PI
}

/// One threshold of [`count_distribution_check`].
#[derive(Clone, Debug, Serialize)]
pub struct CountRow {
    pub a: f64,
    pub frequency: f64,
    pub std_err: f64,
    pub expected: f64,
    pub pass: bool,
}

/// P(|σ ∩ [0,t]| ≥ a t^α) against the one-sided ½-stable limit.
pub fn count_distribution_check(
    law: &RenewalLaw,
    t: f64,
    thresholds: &[f64],
    n_samples: usize,
    stream: Stream,
) -> Result<Vec<CountRow>> {
    if (law.alpha - 0.5).abs() > 1e-12 {
        return Err(Error::UnsupportedAlpha { alpha: law.alpha });
    }
    if n_samples == 0 {
        return invalid("need samples");
    }
    let counts: Vec<usize> = (0..n_samples)
        .into_par_iter()
        .map(|i| sample_renewal(law, 0.0, t, &mut stream.child(i as u64).rng()).count_until(t))
        .collect();
    Ok(thresholds
        .iter()
        .map(|&a| {
            let k = counts.iter().filter(|&&c| c as f64 >= a * t.sqrt()).count();
            let freq = k as f64 / n_samples as f64;
            let expected = count_tail_limit(law.c_k, a);
            let se = (expected * (1.0 - expected) / n_samples as f64).sqrt();
            CountRow { a, frequency: freq, std_err: se, expected, pass: (freq - expected).abs() <= 3.0 * se }
        })
        .collect())
}

/// Limit of P(|σ ∩ [0,t]| ≥ a√t) for α = 1/2: erfc(a c_K √π).
pub fn count_tail_limit(c_k: f64, a: f64) -> f64 {
    erfc(a * c_k * PI.sqrt())
}

/// Result of [`convolution_ld_check`].
#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionReport {
    pub n: usize,
    /// (t, K^{*n}(t) / (n K(t))).
    pub ratios: Vec<(f64, f64)>,
    pub max_deviation: f64,
    pub last_deviation: f64,
    pub grid_change: f64,
    pub pass: bool,
}

/// K^{*n} on a hybrid grid by repeated product-integration convolution.
pub fn convolution_power(law: &RenewalLaw, n: usize, grid: &TimeGrid) -> Result<GridFunction> {
    if n == 0 {
        return invalid("convolution order must be at least 1");
    }
    let t = &grid.points;
    let len = t.len();
    let mut cur: Vec<f64> = t.iter().map(|&s| law.density(s)).collect();
    let (mut fb, mut mb, mut w) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for _ in 1..n {
        let mut next = vec![0.0; len];
        for i in 1..len {
            row_weights(law, t, i, &mut fb, &mut mb, &mut w);
            next[i] = (0..=i).map(|j| w[j] * cur[j]).sum();
        }
        cur = next;
    }
    Ok(GridFunction { times: t.clone(), values: cur })
}

/// sup over `t_list` of |K^{*n}(t)/(nK(t)) − 1|, with a step-halving guard.
pub fn convolution_ld_check(law: &RenewalLaw, n: usize, t_list: &[f64], h: f64) -> Result<ConvolutionReport> {
    if t_list.is_empty() {
        return invalid("need probe times");
    }
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let t_lin = 100f64.min(t_max);
    let coarse = convolution_power(law, n, &TimeGrid::hybrid(h, t_lin, t_max)?)?;
    let fine = convolution_power(law, n, &TimeGrid::hybrid(h / 2.0, t_lin, t_max)?)?;
    let grid_change = t_list.iter().map(|&t| (coarse.at(t) / fine.at(t) - 1.0).abs()).fold(0.0, f64::max);
    if grid_change > 0.01 {
        return Err(Error::GridTooCoarse { change: grid_change });
    }
    let value = |t: f64| if n == 1 { law.density(t) } else { fine.at(t) };
    let ratios: Vec<(f64, f64)> = t_list.iter().map(|&t| (t, value(t) / (n as f64 * law.density(t)))).collect();
    let max_deviation = ratios.iter().map(|r| (r.1 - 1.0).abs()).fold(0.0, f64::max);
    let last = ratios.iter().max_by(|a, b| a.0.total_cmp(&b.0)).unwrap();
    let last_deviation = (last.1 - 1.0).abs();
    Ok(ConvolutionReport { n, ratios, max_deviation, last_deviation, grid_change, pass: last_deviation <= 0.1 })
}
