//! The disorder-relevance machinery at desk scale.
//!
//! The central object is the weighted self-intersection statistic
//!
//! H_L(Y) = ∬_{0<r<s<L, A1<s−r<A2} 1{Y_r = Y_s} (log(s−r))^{−ξ} dr ds,
//!
//! evaluated exactly on piecewise-constant paths. Around it sit the tilted
//! disorder Y^σ (whose law is reweighted by ∏ W over renewal gaps), the test
//! function f used in the change of measure, the fractional moments of Z and
//! the block decomposition Z = Σ_I Z^I used by coarse graining.

use crate::error::{invalid, Error, Result};
use crate::estimate::{mean_se, sample_variance, Estimate};
use crate::kernels::{JumpKernel, KernelTable, Site, DEFAULT_TOL};
use crate::lattice_walk::{sample_path, WalkPath};
use crate::pinning_model::{volterra_partition, PinningModel, VolterraGrid};
use crate::quad::{golden_min, integrate};
use crate::renewal::{renewal_function, RenewalLaw, RenewalSample, TimeGrid};
use crate::rng::Stream;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::HashMap;
use std::sync::Arc;

/// Parameters of the coarse-graining scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoarseGrainConfig {
    /// Block length L.
    pub l: f64,
    pub zeta: f64,
    /// ξ = 1 − 1/ζ.
    pub xi: f64,
    pub a1: f64,
    pub a2: f64,
    pub gamma: f64,
    /// Threshold M of the test function.
    pub m_threshold: f64,
    pub eps_m: f64,
}

impl CoarseGrainConfig {
    /// A1 = e, A2 = L^{1/8}, γ = 3/4, no threshold yet (M = ∞, ε_M = 1).
    pub fn new(l: f64, zeta: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return invalid("block length must be positive and finite");
        }
        if !(zeta > 2.0) {
            return invalid("ζ must exceed 2");
        }
        Ok(CoarseGrainConfig {
            l,
            zeta,
            xi: 1.0 - 1.0 / zeta,
            a1: std::f64::consts::E,
            a2: l.powf(0.125),
            gamma: 0.75,
            m_threshold: f64::INFINITY,
            eps_m: 1.0,
        })
    }

    /// Override the upper lag cutoff. At desk L the default L^{1/8} lies
    /// below e and the band would be empty.
    pub fn with_a2(self, a2: f64) -> Result<Self> {
        if !(a2 > 0.0) {
            return invalid("A2 must be positive");
        }
        Ok(CoarseGrainConfig { a2, ..self })
    }

    pub fn with_l(self, l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return invalid("block length must be positive and finite");
        }
        Ok(CoarseGrainConfig { l, ..self })
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        if !(gamma > 2.0 / 3.0 && gamma < 1.0) {
            return invalid("γ must lie in (2/3, 1)");
        }
        Ok(CoarseGrainConfig { gamma, ..self })
    }

    pub fn with_threshold(self, m_threshold: f64, eps_m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps_m) {
            return invalid("ε_M must lie in [0, 1]");
        }
        Ok(CoarseGrainConfig { m_threshold, eps_m, ..self })
    }

    pub fn band_is_empty(&self) -> bool {
        self.a2 <= self.a1
    }

    /// (log u)^{−ξ}.
    #[inline]
    pub fn lag_weight(&self, u: f64) -> f64 {
        (-self.xi * u.ln().ln()).exp()
    }
}

/// ε_M = P(H > M)^{(1−γ)/γ}.
pub fn eps_from_tail(tail: f64, gamma: f64) -> f64 {
    tail.powf((1.0 - gamma) / gamma)
}

/// Unit-rate kernel table plus the disorder rate, shared by the tilted
/// sampler and the exact mean formulas.
#[derive(Clone, Debug)]
pub struct DisorderContext {
    kernel: JumpKernel,
    rho: f64,
    table: Arc<KernelTable>,
}

impl DisorderContext {
    /// `horizon` bounds every time at which p_t is needed.
    pub fn new(kernel: &JumpKernel, rho: f64, horizon: f64) -> Result<Self> {
        if rho < 0.0 {
            return invalid("ρ must be non-negative");
        }
        let table = Arc::new(KernelTable::new(kernel, 1.0, horizon, DEFAULT_TOL)?);
        Ok(DisorderContext { kernel: kernel.clone(), rho, table })
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn table(&self) -> &KernelTable {
        &self.table
    }

    fn p0(&self, t: f64) -> Result<f64> {
        self.table.prob(t, &Site::origin())
    }
}

// ---------------------------------------------------------------------------
// Exact band integrals

/// ∫ ω(u) (log u)^{−ξ} du over the band, where ω(u) is the length of
/// {r ∈ [a1, b1) : r + u ∈ [a2, b2)}.
fn rect_weight(a1: f64, b1: f64, a2: f64, b2: f64, cfg: &CoarseGrainConfig) -> f64 {
    if b1 <= a1 || b2 <= a2 {
        return 0.0;
    }
    let lo = (a2 - b1).max(cfg.a1);
    let hi = (b2 - a1).min(cfg.a2);
    if hi <= lo {
        return 0.0;
    }
    let omega = |u: f64| ((b1).min(b2 - u) - (a1).max(a2 - u)).max(0.0);
    let mut cuts = [a2 - b1, a2 - a1, b2 - b1, b2 - a1, lo, hi];
    cuts.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0].max(lo), w[1].min(hi));
        if q > p {
            total += integrate(|u| omega(u) * cfg.lag_weight(u), p, q, 1e-10, 1e-12);
        }
    }
    total
}

/// ∬ 1{Y_{s1} = Y_{s2}} (log(s2−s1))^{−ξ} over r_lo < s1 < r_hi,
/// s_lo < s2 < s_hi, A1 < s2 − s1 < A2.
pub fn band_integral(y: &WalkPath, cfg: &CoarseGrainConfig, r_lo: f64, r_hi: f64, s_lo: f64, s_hi: f64) -> Result<f64> {
    if cfg.band_is_empty() || r_hi <= r_lo || s_hi <= s_lo {
        return Ok(0.0);
    }
    let end = s_hi.min(r_hi + cfg.a2);
    if y.horizon < end * (1.0 - 1e-12) {
        return Err(Error::OutOfHorizon { s: end, horizon: y.horizon });
    }
    let mut iv = y.intervals(end);
    iv.sort_by(|p, q| p.2.cmp(&q.2).then(p.0.total_cmp(&q.0)));
    let mut total = 0.0;
    let mut g0 = 0;
    while g0 < iv.len() {
        let mut g1 = g0;
        while g1 < iv.len() && iv[g1].2 == iv[g0].2 {
            g1 += 1;
        }
        for i in g0..g1 {
            let (a, b, _) = iv[i];
            let (ra, rb) = (a.max(r_lo), b.min(r_hi));
            if rb <= ra {
                continue;
            }
            for &(c, d, _) in &iv[i..g1] {
                if c - b >= cfg.a2 {
                    break;
                }
                total += rect_weight(ra, rb, c.max(s_lo), d.min(s_hi), cfg);
            }
        }
        g0 = g1;
    }
    Ok(total)
}

/// H_L(Y) by exact rectangle decomposition.
pub fn h_functional(y: &WalkPath, cfg: &CoarseGrainConfig) -> Result<f64> {
    if y.horizon < cfg.l * (1.0 - 1e-12) {
        return Err(Error::OutOfHorizon { s: cfg.l, horizon: y.horizon });
    }
    band_integral(y, cfg, 0.0, cfg.l, 0.0, cfg.l)
}

/// H^int over [s, t]: both times inside the window.
pub fn h_int(y: &WalkPath, cfg: &CoarseGrainConfig, s: f64, t: f64) -> Result<f64> {
    band_integral(y, cfg, s, t, s, t)
}

/// H^ext over [s, t]: s1 inside, s2 past t.
pub fn h_ext(y: &WalkPath, cfg: &CoarseGrainConfig, s: f64, t: f64) -> Result<f64> {
    band_integral(y, cfg, s, t, t, f64::INFINITY)
}

/// ∫_{A1}^{min(A2,Δ)} (Δ−u) p_{ρu}(0) (log u)^{−ξ} du: the mean of H^int
/// over a window of length Δ for untilted Y.
pub fn h_window_mean(delta: f64, cfg: &CoarseGrainConfig, ctx: &DisorderContext) -> Result<f64> {
    let hi = cfg.a2.min(delta);
    if hi <= cfg.a1 {
        return Ok(0.0);
    }
    let rho = ctx.rho;
    ctx.table.prob(rho * hi, &Site::origin())?;
    Ok(integrate(
        |u| (delta - u) * ctx.p0(rho * u).unwrap() * cfg.lag_weight(u),
        cfg.a1,
        hi,
        1e-12,
        1e-12,
    ))
}

/// E[H_L(Y)] by its one-dimensional reduction; never above (A2−A1)·L.
pub fn h_mean_exact(cfg: &CoarseGrainConfig, ctx: &DisorderContext) -> Result<f64> {
    h_window_mean(cfg.l, cfg, ctx)
}

/// The crude band-area bound (A2 − A1)·L.
pub fn h_mean_bound(cfg: &CoarseGrainConfig) -> f64 {
    (cfg.a2 - cfg.a1).max(0.0) * cfg.l
}

/// H_L of `n` independent disorders of length `cfg.l`.
pub fn h_samples(kernel: &JumpKernel, rho: f64, cfg: &CoarseGrainConfig, n: usize, stream: Stream) -> Result<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let y = sample_path(kernel, rho, cfg.l, &mut stream.child(i as u64).rng());
            h_functional(&y, cfg)
        })
        .collect()
}

/// Variance of H_L at one (ρ, L).
#[derive(Clone, Debug, Serialize)]
pub struct VarianceRow {
    pub rho: f64,
    pub l: f64,
    pub variance: f64,
    /// Var·ρ³/L, the implied constant of the ρ^{−3}L envelope.
    pub coefficient: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VarianceReport {
    pub at_l: VarianceRow,
    pub at_2l: VarianceRow,
    pub ratio: f64,
    pub ratio_pass: bool,
    pub rho_grid: Vec<VarianceRow>,
    /// Least-squares slope of log Var against log ρ.
    pub exponent: f64,
    pub exponent_pass: bool,
}

fn variance_row(kernel: &JumpKernel, rho: f64, cfg: &CoarseGrainConfig, n: usize, stream: Stream) -> Result<VarianceRow> {
    let h = h_samples(kernel, rho, cfg, n, stream)?;
    let variance = sample_variance(&h);
    Ok(VarianceRow { rho, l: cfg.l, variance, coefficient: variance * rho.powi(3) / cfg.l })
}

/// Var(H_L) at L and 2L for `rho`, and across `rho_grid` at L.
/// Passes when the doubling ratio lies in [1.3, 2.5] and the fitted
/// ρ-exponent in [−3.8, −1.5].
pub fn h_variance_check(
    kernel: &JumpKernel,
    cfg: &CoarseGrainConfig,
    rho: f64,
    rho_grid: &[f64],
    n: usize,
    stream: Stream,
) -> Result<VarianceReport> {
    if n < 2 {
        return invalid("variance needs at least two samples");
    }
    let at_l = variance_row(kernel, rho, cfg, n, stream.child(0))?;
    let at_2l = variance_row(kernel, rho, &cfg.with_l(2.0 * cfg.l)?, n, stream.child(1))?;
    let ratio = at_2l.variance / at_l.variance;
    let rows = rho_grid
        .iter()
        .enumerate()
        .map(|(k, &r)| variance_row(kernel, r, cfg, n, stream.child(2 + k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.variance > 0.0 && r.rho > 0.0).map(|r| (r.rho.ln(), r.variance.ln())).collect();
    let exponent = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(VarianceReport {
        at_l,
        at_2l,
        ratio,
        ratio_pass: (1.3..=2.5).contains(&ratio),
        rho_grid: rows,
        exponent,
        exponent_pass: (-3.8..=-1.5).contains(&exponent),
    })
}

// ---------------------------------------------------------------------------
// Tilted disorder

/// A realisation of Y^σ.
#[derive(Clone, Debug)]
pub struct TiltedDisorder {
    pub sigma: RenewalSample,
    pub path: WalkPath,
    /// Proposals drawn per renewal gap before acceptance.
    pub attempts: Vec<u64>,
}

impl TiltedDisorder {
    pub fn acceptance_rate(&self) -> f64 {
        let total: u64 = self.attempts.iter().sum();
        if total == 0 {
            1.0
        } else {
            self.attempts.len() as f64 / total as f64
        }
    }
}

/// Y^σ on [0, horizon]: untilted before σ_0 and after σ_k, and on each gap
/// of length Δ an untilted proposal accepted with probability
/// p_Δ(ΔY)/p_Δ(0) ≤ 1.
fn tilted_path<R: Rng + ?Sized>(ctx: &DisorderContext, epochs: &[f64], horizon: f64, rng: &mut R) -> Result<(WalkPath, Vec<u64>)> {
    let (k, rho) = (&ctx.kernel, ctx.rho);
    let mut path = sample_path(k, rho, epochs[0], rng);
    let mut attempts = Vec::with_capacity(epochs.len().saturating_sub(1));
    for w in epochs.windows(2) {
        let d = w[1] - w[0];
        let top = ctx.p0(d)?;
        let mut tries = 0u64;
        loop {
            tries += 1;
            let seg = sample_path(k, rho, d, rng);
            let acc = ctx.table.prob(d, &seg.final_site())? / top;
            if acc > 1.0 + 1e-9 {
                return Err(Error::EnvelopeViolated { prob: acc });
            }
            if rng.random::<f64>() < acc {
                path.append(&seg);
                break;
            }
        }
        attempts.push(tries);
    }
    let last = *epochs.last().unwrap();
    if horizon > last {
        path.append(&sample_path(k, rho, horizon - last, rng));
    }
    Ok((path, attempts))
}

/// Sample Y^σ up to L + A2 so that every band pair touching [0, L] is visible.
pub fn sample_tilted_disorder(
    ctx: &DisorderContext,
    sigma: &RenewalSample,
    cfg: &CoarseGrainConfig,
    stream: Stream,
) -> Result<TiltedDisorder> {
    let e = &sigma.epochs;
    if e.is_empty() || e[0] < 0.0 || *e.last().unwrap() > cfg.l {
        return invalid("renewal epochs must lie in [0, L]");
    }
    if e.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("renewal gaps must be positive");
    }
    let (path, attempts) = tilted_path(ctx, e, cfg.l + cfg.a2.max(0.0), &mut stream.rng())?;
    Ok(TiltedDisorder { sigma: sigma.clone(), path, attempts })
}

/// Histogram test of one-gap increments against p_{ρΔ}(y)p_Δ(y)/p_{(1+ρ)Δ}(0).
#[derive(Clone, Debug, Serialize)]
pub struct TiltedLawReport {
    pub delta: f64,
    pub n: usize,
    pub point_mass: f64,
    pub point_mass_observed: f64,
    pub point_mass_se: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub acceptance_rate: f64,
    pub pass: bool,
}

/// Bins with expected count ≥ 5 are kept separate; the rest is pooled.
pub fn tilted_increment_check(ctx: &DisorderContext, delta: f64, n: usize, stream: Stream) -> Result<TiltedLawReport> {
    if !(delta > 0.0) || n == 0 {
        return invalid("need Δ > 0 and at least one sample");
    }
    let rho = ctx.rho;
    let dim = ctx.kernel.dim();
    let norm = ctx.p0((1.0 + rho) * delta)?;
    let mut law = ctx.table.measure(rho * delta)?.pointwise(&ctx.table.measure(delta)?);
    law.scale(1.0 / norm);
    let point_mass = law.get(&Site::origin());

    let draws: Vec<(Site, u64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (p, a) = tilted_path(ctx, &[0.0, delta], delta, &mut stream.child(i as u64).rng())?;
            Ok((p.final_site(), a[0]))
        })
        .collect::<Result<_>>()?;
    let mut counts: HashMap<Site, u64> = HashMap::new();
    for (s, _) in &draws {
        *counts.entry(*s).or_default() += 1;
    }
    let tries: u64 = draws.iter().map(|d| d.1).sum();
    let nf = n as f64;

    let mut sites = law.sites_above(dim, 1e-12);
    sites.sort_by_key(|a| a.0);
    let (mut chi2, mut bins) = (0.0, 0usize);
    let (mut pooled_e, mut kept_o) = (1.0, 0u64);
    for (s, q) in &sites {
        let e = nf * q;
        if e >= 5.0 {
            let o = *counts.get(s).unwrap_or(&0) as f64;
            chi2 += (o - e).powi(2) / e;
            bins += 1;
            pooled_e -= q;
            kept_o += o as u64;
        }
    }
    let pooled_e = nf * pooled_e.max(0.0);
    let pooled_o = (n as u64 - kept_o) as f64;
    if pooled_e >= 1e-9 {
        chi2 += (pooled_o - pooled_e).powi(2) / pooled_e;
        bins += 1;
    }
    let dof = bins.saturating_sub(1);
    let p_value = if dof == 0 { 1.0 } else { 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2) };
    let observed = *counts.get(&Site::origin()).unwrap_or(&0) as f64 / nf;
    Ok(TiltedLawReport {
        delta,
        n,
        point_mass,
        point_mass_observed: observed,
        point_mass_se: (point_mass * (1.0 - point_mass) / nf).sqrt(),
        chi2,
        dof,
        p_value,
        acceptance_rate: nf / tries as f64,
        pass: p_value > 0.01,
    })
}

/// The terms of the H_L(Y^σ) decomposition.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub lhs: f64,
    pub interior: f64,
    pub exterior: f64,
    pub crossing: f64,
    pub rhs: f64,
    pub residual: f64,
    pub max_exterior: f64,
    /// C ≤ A2² and every H^ext ≤ A2².
    pub bounds_hold: bool,
}

/// H_L(Y^σ) against H^int on [0,a], [b,L] and every gap, plus H^ext on [0,a]
/// and every gap, minus the crossing term C over s1 < b < L < s2.
pub fn h_decomposition_check(tilted: &TiltedDisorder, cfg: &CoarseGrainConfig) -> Result<DecompositionReport> {
    let y = &tilted.path;
    let e = &tilted.sigma.epochs;
    let (a, b, l) = (e[0], *e.last().unwrap(), cfg.l);
    if y.horizon < l + cfg.a2 * (1.0 - 1e-12) {
        return Err(Error::OutOfHorizon { s: l + cfg.a2, horizon: y.horizon });
    }
    let lhs = h_functional(y, cfg)?;
    let mut interior = h_int(y, cfg, 0.0, a)? + h_int(y, cfg, b, l)?;
    let mut exterior = h_ext(y, cfg, 0.0, a)?;
    let mut max_exterior = exterior;
    for w in e.windows(2) {
        interior += h_int(y, cfg, w[0], w[1])?;
        let x = h_ext(y, cfg, w[0], w[1])?;
        max_exterior = max_exterior.max(x);
        exterior += x;
    }
    let crossing = band_integral(y, cfg, 0.0, b, l, f64::INFINITY)?;
    let rhs = interior + exterior - crossing;
    let cap = cfg.a2 * cfg.a2;
    Ok(DecompositionReport {
        lhs,
        interior,
        exterior,
        crossing,
        rhs,
        residual: (lhs - rhs).abs(),
        max_exterior,
        bounds_hold: crossing <= cap && max_exterior <= cap,
    })
}

// ---------------------------------------------------------------------------
// Mean gaps under the tilt

/// E[H^int_{[0,Δ]}(Y^σ)] − E[H^int_{[0,Δ]}(Y)] for σ = {0, Δ}:
/// ∫ (Δ−u) p_{ρu}(0) [p_{(1+ρ)Δ−ρu}(0)/p_{(1+ρ)Δ}(0) − 1] (log u)^{−ξ} du.
pub fn h_int_gap_exact(delta: f64, cfg: &CoarseGrainConfig, ctx: &DisorderContext) -> Result<f64> {
    if !(delta > 0.0) {
        return invalid("Δ must be positive");
    }
    let hi = cfg.a2.min(delta);
    if hi <= cfg.a1 {
        return Ok(0.0);
    }
    let rho = ctx.rho;
    let full = ctx.p0((1.0 + rho) * delta)?;
    ctx.p0(rho * hi)?;
    Ok(integrate(
        |u| {
            let lift = ctx.p0((1.0 + rho) * delta - rho * u).unwrap() / full - 1.0;
            (delta - u) * ctx.p0(rho * u).unwrap() * lift * cfg.lag_weight(u)
        },
        cfg.a1,
        hi,
        1e-14,
        1e-11,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub delta: f64,
    pub gap: f64,
    /// gap / (√Δ / (√ρ (log Δ)^ξ)).
    pub scaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapSweep {
    pub rows: Vec<GapRow>,
    pub all_positive: bool,
    /// Smallest scaled gap over 2A1 < Δ < A2: the calibrated constant c.
    pub c_min: f64,
}

/// Gaps at every Δ of `deltas` (each must exceed A1).
pub fn h_int_gap_sweep(deltas: &[f64], cfg: &CoarseGrainConfig, ctx: &DisorderContext) -> Result<GapSweep> {
    let rho = ctx.rho;
    let rows = deltas
        .iter()
        .map(|&d| {
            let gap = h_int_gap_exact(d, cfg, ctx)?;
            let scale = d.sqrt() / (rho.sqrt() * d.ln().powf(cfg.xi));
            Ok(GapRow { delta: d, gap, scaled: gap / scale })
        })
        .collect::<Result<Vec<_>>>()?;
    let all_positive = rows.iter().filter(|r| r.delta > cfg.a1).all(|r| r.gap > 0.0);
    let c_min = rows
        .iter()
        .filter(|r| r.delta > 2.0 * cfg.a1 && r.delta < cfg.a2)
        .map(|r| r.scaled)
        .fold(f64::INFINITY, f64::min);
    Ok(GapSweep { rows, all_positive, c_min })
}

/// Monte Carlo version of [`h_int_gap_exact`].
#[derive(Clone, Debug, Serialize)]
pub struct GapMc {
    pub delta: f64,
    pub exact: f64,
    pub tilted: Estimate,
    pub untilted: Estimate,
    pub difference: f64,
    pub std_err: f64,
    pub z_score: f64,
    pub pass: bool,
}

pub fn h_int_gap_mc(delta: f64, cfg: &CoarseGrainConfig, ctx: &DisorderContext, n: usize, stream: Stream) -> Result<GapMc> {
    let exact = h_int_gap_exact(delta, cfg, ctx)?;
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = stream.child(i as u64);
            let (yt, _) = tilted_path(ctx, &[0.0, delta], delta, &mut s.child(0).rng())?;
            let yu = sample_path(&ctx.kernel, ctx.rho, delta, &mut s.child(1).rng());
            Ok((h_int(&yt, cfg, 0.0, delta)?, h_int(&yu, cfg, 0.0, delta)?))
        })
        .collect::<Result<_>>()?;
    let t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let u: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let tilted = Estimate::from_samples(&t, stream.master);
    let untilted = Estimate::from_samples(&u, stream.master);
    let difference = tilted.value - untilted.value;
    let std_err = tilted.std_err.hypot(untilted.std_err);
    let z_score = if std_err > 0.0 { (difference - exact).abs() / std_err } else { (difference - exact).abs() * f64::INFINITY };
    Ok(GapMc { delta, exact, tilted, untilted, difference, std_err, z_score, pass: z_score.is_nan() || z_score < 3.0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtGapRow {
    pub start: f64,
    pub end: f64,
    pub tilted: f64,
    pub untilted: f64,
    pub difference: f64,
    pub std_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtGapReport {
    pub rows: Vec<ExtGapRow>,
    pub pass: bool,
}

/// Per gap of σ, E[H^ext(Y^σ)] − E[H^ext(Y)] by Monte Carlo; each row
/// passes when the difference is above −3 SE.
pub fn h_ext_gap_sign_check(
    sigma: &RenewalSample,
    cfg: &CoarseGrainConfig,
    ctx: &DisorderContext,
    n: usize,
    stream: Stream,
) -> Result<ExtGapReport> {
    let e = &sigma.epochs;
    let k = e.len().saturating_sub(1);
    if k == 0 {
        return invalid("σ needs at least one gap");
    }
    let horizon = cfg.l + cfg.a2;
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = stream.child(i as u64);
            let yt = sample_tilted_disorder(ctx, sigma, cfg, s.child(0))?.path;
            let yu = sample_path(&ctx.kernel, ctx.rho, horizon, &mut s.child(1).rng());
            let mut a = Vec::with_capacity(k);
            let mut b = Vec::with_capacity(k);
            for w in e.windows(2) {
                a.push(h_ext(&yt, cfg, w[0], w[1])?);
                b.push(h_ext(&yu, cfg, w[0], w[1])?);
            }
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ExtGapRow> = (0..k)
        .map(|j| {
            let t: Vec<f64> = samples.iter().map(|s| s.0[j]).collect();
            let u: Vec<f64> = samples.iter().map(|s| s.1[j]).collect();
            let (mt, st) = mean_se(&t);
            let (mu, su) = mean_se(&u);
            let difference = mt - mu;
            let std_err = st.hypot(su);
            ExtGapRow { start: e[j], end: e[j + 1], tilted: mt, untilted: mu, difference, std_err, pass: difference >= -3.0 * std_err }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(ExtGapReport { rows, pass })
}

// ---------------------------------------------------------------------------
// Test function and change of measure

/// f = 1 if H ≤ M, else ε_M.
pub fn f_of_h(h: f64, cfg: &CoarseGrainConfig) -> f64 {
    if h <= cfg.m_threshold {
        1.0
    } else {
        cfg.eps_m
    }
}

pub fn test_function_f(y: &WalkPath, cfg: &CoarseGrainConfig) -> Result<f64> {
    Ok(f_of_h(h_functional(y, cfg)?, cfg))
}

/// M = E[H_L] + D ρ^{−3/2} √L.
pub fn default_threshold(cfg: &CoarseGrainConfig, ctx: &DisorderContext, d: f64) -> Result<f64> {
    Ok(h_mean_exact(cfg, ctx)? + d * ctx.rho.powf(-1.5) * cfg.l.sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureCost {
    pub m_threshold: f64,
    pub tail: f64,
    pub eps_m: f64,
    pub cost: Estimate,
    pub pass: bool,
}

/// Calibrate ε_M on one sample of H_L, then estimate E[f^{−γ/(1−γ)}] on a
/// fresh sample; passes when the estimate is ≤ 2 + 3 SE. A calibration set
/// without exceedances uses the tail estimate 1/n.
pub fn measure_cost_check(
    kernel: &JumpKernel,
    rho: f64,
    cfg: &CoarseGrainConfig,
    n_calib: usize,
    n_eval: usize,
    stream: Stream,
) -> Result<MeasureCost> {
    let calib = h_samples(kernel, rho, cfg, n_calib, stream.child(0))?;
    let over = calib.iter().filter(|&&h| h > cfg.m_threshold).count().max(1);
    let tail = over as f64 / n_calib as f64;
    let eps_m = eps_from_tail(tail, cfg.gamma);
    let cfg = cfg.with_threshold(cfg.m_threshold, eps_m)?;
    let power = -cfg.gamma / (1.0 - cfg.gamma);
    let vals: Vec<f64> = h_samples(kernel, rho, &cfg, n_eval, stream.child(1))?
        .into_iter()
        .map(|h| f_of_h(h, &cfg).powf(power))
        .collect();
    let cost = Estimate::from_samples(&vals, stream.master);
    Ok(MeasureCost { m_threshold: cfg.m_threshold, tail, eps_m, pass: cost.value <= 2.0 + 3.0 * cost.std_err, cost })
}

// ---------------------------------------------------------------------------
// Fractional moments

#[derive(Clone, Debug, Serialize)]
pub struct LadderRow {
    pub t: f64,
    pub moment: Estimate,
}

/// E[(Z^z_{t,Y})^γ] at t, 2t and 4t from the same disorders.
#[derive(Clone, Debug, Serialize)]
pub struct FractionalLadder {
    pub z: f64,
    pub gamma: f64,
    pub rows: Vec<LadderRow>,
}

/// Volterra inner solves (Richardson over one bisection) per disorder;
/// GridTooCoarse if the bisection moves Z at 4t by more than 1 %.
pub fn fractional_moment_estimate(
    model: &PinningModel,
    z: f64,
    gamma: f64,
    t: f64,
    n_disorder: usize,
    h: f64,
    stream: Stream,
) -> Result<FractionalLadder> {
    if !(gamma > 2.0 / 3.0 && gamma < 1.0) {
        return invalid("γ must lie in (2/3, 1)");
    }
    if n_disorder < 2 {
        return invalid("need at least two disorder samples");
    }
    let times = [t, 2.0 * t, 4.0 * t];
    let params = model.params_z(z, 4.0 * t)?;
    let logs: Vec<[f64; 3]> = (0..n_disorder)
        .into_par_iter()
        .map(|i| {
            if z == 0.0 {
                return Ok([0.0; 3]);
            }
            let y = model.sample_disorder(4.0 * t, stream.child(i as u64));
            let coarse = VolterraGrid::new(h, 4.0 * t, &y)?;
            let fine = coarse.bisected();
            let a = volterra_partition(model, &params, &coarse)?;
            let b = volterra_partition(model, &params, &fine)?;
            let mut out = [0.0; 3];
            for (k, &s) in times.iter().enumerate() {
                let (la, lb) = (a.log_partition_at(s), b.log_partition_at(s));
                let (Some(la), Some(lb)) = (la, lb) else {
                    return invalid("ladder times must be multiples of the step");
                };
                let change = ((lb - la).exp() - 1.0).abs();
                if change > 0.01 {
                    return Err(Error::GridTooCoarse { change });
                }
                out[k] = lb + ((4.0 - (la - lb).exp()) / 3.0).ln();
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows = times
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let v: Vec<f64> = logs.iter().map(|l| (gamma * l[k]).exp()).collect();
            LadderRow { t: s, moment: Estimate::from_samples(&v, stream.master) }
        })
        .collect();
    Ok(FractionalLadder { z, gamma, rows })
}

// ---------------------------------------------------------------------------
// Coarse-grain split

#[derive(Clone, Debug, Serialize)]
pub struct PatternValue {
    pub blocks: Vec<usize>,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitReport {
    pub patterns: Vec<PatternValue>,
    pub total: f64,
    pub direct: f64,
    pub residual: f64,
    pub frac_lhs: f64,
    pub frac_rhs: f64,
    pub subadditive: bool,
}

/// Block of a Volterra node: Λ_i = ((i−1)L, iL], with boundary nodes in the
/// left block and node 0 (which carries the mass of renewals just after 0)
/// in block 1.
fn node_block(s: f64, l: f64, m: usize) -> usize {
    ((s / l - 1e-9).ceil() as usize).clamp(1, m)
}

/// Z^{z,I} for every I ⊆ {1..m} from the same discrete scheme as
/// [`volterra_partition`], with each chain filed under the set of blocks its
/// nodes visit. Σ_I Z^{z,I} reproduces the unrestricted solve up to rounding.
pub fn coarse_grain_split_check(
    model: &PinningModel,
    z: f64,
    y: &WalkPath,
    m: usize,
    l: f64,
    h: f64,
    gamma: f64,
) -> Result<SplitReport> {
    if !(1..=4).contains(&m) {
        return invalid("subset enumeration is limited to 1 ≤ m ≤ 4");
    }
    let t = m as f64 * l;
    let params = model.params_z(z, t)?;
    let grid = VolterraGrid::new(h, t, y)?;
    let direct = volterra_partition(model, &params, &grid)?;
    if direct.log_scale != 0.0 {
        return invalid("partition function too large for the block split");
    }
    let direct = direct.partition();

    let pts = &grid.points;
    let n = pts.len();
    let nm = 1usize << m;
    let beta = params.beta;
    let g = model.grid();
    let (yl, yr) = (&grid.y_left, &grid.y_right);
    let jump: Vec<bool> = (0..n).map(|j| yl[j] != yr[j]).collect();
    let bit: Vec<usize> = pts.iter().map(|&s| 1 << (node_block(s, l, m) - 1)).collect();
    let width = |j: usize| pts[j + 1] - pts[j];

    let mut dl = vec![0.0; n * nm];
    let mut dr = vec![0.0; n * nm];
    let mut zs = vec![0.0; nm];
    zs[0] = 1.0;
    dl[bit[0]] = beta;
    dr[bit[0]] = beta;
    if beta != 0.0 {
        let history = |i: usize, y: Site, mask: usize, dl: &[f64], dr: &[f64]| -> f64 {
            let s = pts[i];
            let prev = mask ^ bit[i];
            let mut acc = if prev == 0 { g.prob(s, &y) } else { 0.0 };
            for j in 0..i {
                let dt = s - pts[j];
                let loc = g.locate(dt);
                let wr = 0.5 * width(j);
                let wl = if j > 0 { 0.5 * width(j - 1) } else { 0.0 };
                let r = dr[j * nm + mask] + dr[j * nm + prev];
                if jump[j] {
                    let lft = dl[j * nm + mask] + dl[j * nm + prev];
                    acc += wr * r * g.prob_at(dt, loc, &(y - yr[j]));
                    acc += wl * lft * g.prob_at(dt, loc, &(y - yl[j]));
                } else if r != 0.0 {
                    acc += (wr + wl) * r * g.prob_at(dt, loc, &(y - yr[j]));
                }
            }
            acc
        };
        for i in 1..n {
            let top = bit[i];
            let h_prev = width(i - 1);
            for lower in 0..top {
                let mask = top | lower;
                let left = beta * history(i, yl[i], mask, &dl, &dr);
                let v = left / (1.0 - beta * 0.5 * h_prev);
                dl[i * nm + mask] = v;
                dr[i * nm + mask] = if jump[i] { beta * history(i, yr[i], mask, &dl, &dr) } else { v };
            }
            for mask in 1..nm {
                zs[mask] += 0.5 * h_prev * (dr[(i - 1) * nm + mask] + dl[i * nm + mask]);
            }
        }
    }
    if zs.iter().any(|v| !v.is_finite()) {
        return Err(Error::GridTooCoarse { change: f64::INFINITY });
    }
    let patterns: Vec<PatternValue> = (0..nm)
        .map(|mask| PatternValue { blocks: (1..=m).filter(|b| mask & (1 << (b - 1)) != 0).collect(), z: zs[mask] })
        .collect();
    let total: f64 = zs.iter().sum();
    let frac_lhs = total.powf(gamma);
    let frac_rhs: f64 = zs.iter().map(|v| v.max(0.0).powf(gamma)).sum();
    Ok(SplitReport {
        patterns,
        total,
        direct,
        residual: (total / direct - 1.0).abs(),
        frac_lhs,
        frac_rhs,
        subadditive: zs.iter().all(|&v| v >= 0.0) && frac_lhs <= frac_rhs + 1e-9,
    })
}

// ---------------------------------------------------------------------------
// Block pattern weights

#[derive(Clone, Debug, Serialize)]
pub struct PatternWeight {
    pub blocks: Vec<usize>,
    pub value: f64,
    pub value_half: f64,
    pub change: f64,
}

fn check_blocks(blocks: &[usize]) -> Result<()> {
    if blocks.len() > 4 {
        return invalid("patterns are limited to four blocks");
    }
    if blocks.first().is_some_and(|&b| b == 0) || blocks.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("block indices must be increasing and start at 1");
    }
    Ok(())
}

/// Trapezoid sum of v over its nodes.
fn trap(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

fn pattern_weight_at(blocks: &[usize], l: f64, law: &RenewalLaw, h: f64) -> Result<f64> {
    if blocks.is_empty() {
        return Ok(1.0);
    }
    let n = (l / h).round() as usize;
    if n < 2 || (n as f64 * h - l).abs() > 1e-9 * l {
        return invalid("the step must divide the block length");
    }
    let p = renewal_function(law, &TimeGrid::uniform(h, l)?)?.values;
    let last = *blocks.last().unwrap();
    let kv: Vec<f64> = (0..=last * n).map(|k| law.density(k as f64 * h)).collect();
    let mut prev: Vec<f64> = Vec::new();
    let mut prev_block = 0usize;
    let mut buf = vec![0.0; n + 1];
    for &b in blocks {
        // A(a): density of the first renewal in the block at a.
        let a: Vec<f64> = (0..=n)
            .map(|k| {
                if prev_block == 0 {
                    kv[(b - 1) * n + k]
                } else {
                    let off = (b - prev_block) * n + k;
                    for (k2, v) in prev.iter().enumerate() {
                        buf[k2] = v * kv[off - k2];
                    }
                    trap(&buf, h)
                }
            })
            .collect();
        // G(b): density of the last renewal in the block at b.
        let mut cur = vec![0.0; n + 1];
        for k in 1..=n {
            let w: Vec<f64> = (0..=k).map(|k2| a[k2] * p[k - k2]).collect();
            cur[k] = trap(&w, h);
        }
        prev = cur;
        prev_block = b;
    }
    Ok(trap(&prev, h))
}

/// P_L(I) = ∫ ∏ K(a_j − b_{j−1}) P(b_j − a_j) with a_j < b_j in Λ_{i_j},
/// on a uniform grid of step h and of step h/2.
pub fn p_pattern_weight(blocks: &[usize], l: f64, law: &RenewalLaw, h: f64) -> Result<PatternWeight> {
    check_blocks(blocks)?;
    let value = pattern_weight_at(blocks, l, law, h)?;
    let value_half = pattern_weight_at(blocks, l, law, h / 2.0)?;
    let change = if value == 0.0 { 0.0 } else { (value_half / value - 1.0).abs() };
    if change > 0.01 {
        return Err(Error::GridTooCoarse { change });
    }
    Ok(PatternWeight { blocks: blocks.to_vec(), value, value_half, change })
}

#[derive(Clone, Debug, Serialize)]
pub struct PatternBoundRow {
    pub blocks: Vec<usize>,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PatternBound {
    pub c_l: f64,
    pub c: f64,
    pub rows: Vec<PatternBoundRow>,
    pub pass: bool,
}

fn gap_product(blocks: &[usize]) -> f64 {
    let mut prev = 0usize;
    let mut prod = 1.0;
    for &b in blocks {
        prod *= ((b - prev) as f64).powf(-1.5);
        prev = b;
    }
    prod
}

/// With C_L = L^{3/2}, calibrate C = max_I (P_L(I)/(C_L ∏ gap^{−3/2}))^{1/|I|}
/// on `calibration`, then check P_L(I) ≤ C_L ∏ 2C gap^{−3/2} on `held_out`.
pub fn pattern_bound_check(
    calibration: &[Vec<usize>],
    held_out: &[Vec<usize>],
    l: f64,
    law: &RenewalLaw,
    h: f64,
) -> Result<PatternBound> {
    let c_l = l.powf(1.5);
    let mut c = 0.0f64;
    for b in calibration.iter().filter(|b| !b.is_empty()) {
        let v = p_pattern_weight(b, l, law, h)?.value_half;
        c = c.max((v / (c_l * gap_product(b))).powf(1.0 / b.len() as f64));
    }
    let rows = held_out
        .iter()
        .map(|b| {
            let value = p_pattern_weight(b, l, law, h)?.value_half;
            let bound = c_l * (2.0 * c).powi(b.len() as i32) * gap_product(b);
            Ok(PatternBoundRow { blocks: b.clone(), value, bound, pass: value <= bound })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = rows.iter().all(|r| r.pass);
    Ok(PatternBound { c_l, c, rows, pass })
}

// ---------------------------------------------------------------------------
// Large deviations of Σ Z_i^L

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    MonteCarlo,
    Chernoff,
}

#[derive(Clone, Debug, Serialize)]
pub struct LargeDevReport {
    pub l: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_terms: u64,
    pub mu_mc: Estimate,
    pub mu_quadrature: f64,
    pub z_score: f64,
    /// B̂_2 (log L)^{1−ξ} = μ̂/4, the per-term threshold.
    pub threshold: f64,
    pub tail_probability: f64,
    pub ln_tail_probability: f64,
    pub method: TailMethod,
}

/// Direct simulation of the sum is used while n_terms·replicates stays
/// below this; past it the tail is bounded by Chernoff.
const DIRECT_WORK: f64 = 5e7;
const TAIL_REPLICATES: usize = 2000;

/// Z = √Δ (log Δ)^{−ξ} 1{2A1 < Δ < A2} for Δ ~ K; N = ⌈h√L⌉ terms.
/// Estimates μ_L by `n` draws and by quadrature against K, then the
/// probability that Σ Z_i < N μ̂/4.
pub fn z_sum_large_dev(h: f64, cfg: &CoarseGrainConfig, law: &RenewalLaw, n: usize, stream: Stream) -> Result<LargeDevReport> {
    if !(h > 0.0) || n < 2 {
        return invalid("need h > 0 and at least two draws");
    }
    let (lo, hi) = (2.0 * cfg.a1, cfg.a2);
    let zfun = |d: f64| if d > lo && d < hi { d.sqrt() * cfg.lag_weight(d) } else { 0.0 };
    let n_terms = (h * cfg.l.sqrt()).ceil() as u64;
    if hi <= lo {
        return Ok(LargeDevReport {
            l: cfg.l,
            lower: lo,
            upper: hi,
            n_terms,
            mu_mc: Estimate::exact(0.0, stream.master),
            mu_quadrature: 0.0,
            z_score: 0.0,
            threshold: 0.0,
            tail_probability: 0.0,
            ln_tail_probability: f64::NEG_INFINITY,
            method: TailMethod::MonteCarlo,
        });
    }
    let draws: Vec<f64> = (0..n).into_par_iter().map(|i| zfun(law.sample_gap(&mut stream.child(i as u64).rng()))).collect();
    let mu_mc = Estimate::from_samples(&draws, stream.master);
    let mu_quadrature = integrate(|d| zfun(d) * law.density(d), lo, hi, 1e-13, 1e-11);
    let z_score = mu_mc.z_score(mu_quadrature, 0.0);
    let threshold = mu_mc.value / 4.0;

    let (tail_probability, ln_tail_probability, method) = if (n_terms as f64) * TAIL_REPLICATES as f64 <= DIRECT_WORK {
        let hits = (0..TAIL_REPLICATES)
            .into_par_iter()
            .filter(|&r| {
                let mut rng = stream.path(&[u64::MAX, r as u64]).rng();
                let s: f64 = (0..n_terms).map(|_| zfun(law.sample_gap(&mut rng))).sum();
                s < threshold * n_terms as f64
            })
            .count();
        let p = hits as f64 / TAIL_REPLICATES as f64;
        (p, p.ln(), TailMethod::MonteCarlo)
    } else {
        // P(Σ Z < Nθ) ≤ exp(N inf_λ [λθ + log E e^{−λZ}]).
        let mass = law.cdf(hi) - law.cdf(lo);
        let log_laplace = |lam: f64| {
            let drop = integrate(|d| (1.0 - (-lam * zfun(d)).exp()) * law.density(d), lo, hi, 1e-14, 1e-12);
            (1.0 - drop.min(mass)).ln()
        };
        let (_, rate) = golden_min(|lam| lam * threshold + log_laplace(lam), 0.0, 50.0 / threshold, 1e-8);
        let ln_p = n_terms as f64 * rate.min(0.0);
        (ln_p.exp(), ln_p, TailMethod::Chernoff)
    };
    Ok(LargeDevReport {
        l: cfg.l,
        lower: lo,
        upper: hi,
        n_terms,
        mu_mc,
        mu_quadrature,
        z_score,
        threshold,
        tail_probability,
        ln_tail_probability,
        method,
    })
}
