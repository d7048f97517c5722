//! Quenched and annealed partition functions of the pinning model.
//!
//! Expanding e^{βL_t} in powers of β gives the renewal representation
//! Z_t = 1 + ∫_0^t D(b) db, where the pinned density solves
//! D(b) = β p_b(Y_b) + β ∫_0^b D(a) p_{b−a}(Y_b − Y_a) da.
//! Since β p_Δ(y) = zK(Δ)W(Δ, y), this is the weighted renewal equation.

use crate::error::{invalid, Error, Result};
use crate::estimate::{mean_se, Estimate, Scale};
use crate::kernels::{green_function, JumpKernel, KernelTable, Site, TransitionGrid, DEFAULT_TOL};
use crate::lattice_walk::{collision_local_time, resample_path, sample_path, WalkPath};
use crate::rng::Stream;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Rescale the pinned density once it passes this size.
const RESCALE_AT: f64 = 1e200;

/// Physical parameters. β and z = βG/(1+ρ) are interchangeable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub rho: f64,
    pub beta: f64,
    pub t: f64,
    pub green: f64,
}

impl ModelParams {
    pub fn new(rho: f64, beta: f64, t: f64, green: f64) -> Result<Self> {
        if !(rho >= 0.0 && t > 0.0 && green > 0.0 && beta.is_finite()) {
            return invalid("need ρ ≥ 0, t > 0, G > 0 and finite β");
        }
        Ok(ModelParams { rho, beta, t, green })
    }

    pub fn from_z(rho: f64, z: f64, t: f64, green: f64) -> Result<Self> {
        Self::new(rho, z * (1.0 + rho) / green, t, green)
    }

    pub fn z(&self) -> f64 {
        self.beta * self.green / (1.0 + self.rho)
    }

    pub fn with_t(self, t: f64) -> Self {
        ModelParams { t, ..self }
    }
}

/// β_c^ann = (1+ρ)/G.
pub fn annealed_critical_point(kernel: &JumpKernel, rho: f64) -> Result<f64> {
    if rho < 0.0 {
        return invalid("ρ must be non-negative");
    }
    Ok((1.0 + rho) / green_function(kernel, 1.0)?)
}

/// W(Δ, y) = p_Δ(y)/p_{(1+ρ)Δ}(0) from a unit-rate table.
pub fn weight_w(table: &KernelTable, rho: f64, delta: f64, y: &Site) -> Result<f64> {
    if !(delta > 0.0) {
        return invalid("Δ must be positive");
    }
    Ok(table.prob(delta, y)? / table.prob((1.0 + rho) * delta, &Site::origin())?)
}

/// Shared read-only state for one kernel, disorder rate and horizon.
#[derive(Clone, Debug)]
pub struct PinningModel {
    kernel: JumpKernel,
    rho: f64,
    green: f64,
    t_max: f64,
    grid: Arc<TransitionGrid>,
}

impl PinningModel {
    /// Tabulate p_Δ(x) for Δ ≤ t_max; `lookup_step` is the interpolation
    /// step of that table, independent of any Volterra step.
    pub fn new(kernel: &JumpKernel, rho: f64, t_max: f64, lookup_step: f64) -> Result<Self> {
        let step = lookup_step;
        if rho < 0.0 {
            return invalid("ρ must be non-negative");
        }
        let green = green_function(kernel, 1.0)?;
        let horizon = t_max + 2.0 * step;
        let table = Arc::new(KernelTable::new(kernel, 1.0, horizon, DEFAULT_TOL)?);
        let cap = 8 * kernel.radius() * (((1.0 + rho) * t_max).sqrt().ceil() as i32 + 2);
        let grid = Arc::new(TransitionGrid::new(table, step, t_max, cap, t_max)?);
        Ok(PinningModel { kernel: kernel.clone(), rho, green, t_max, grid })
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn green(&self) -> f64 {
        self.green
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn lookup_step(&self) -> f64 {
        self.grid.step()
    }

    pub fn grid(&self) -> &TransitionGrid {
        &self.grid
    }

    pub fn params_beta(&self, beta: f64, t: f64) -> Result<ModelParams> {
        ModelParams::new(self.rho, beta, t, self.green)
    }

    pub fn params_z(&self, z: f64, t: f64) -> Result<ModelParams> {
        ModelParams::from_z(self.rho, z, t, self.green)
    }

    /// A disorder path on [0, t].
    pub fn sample_disorder(&self, t: f64, stream: Stream) -> WalkPath {
        sample_path(&self.kernel, self.rho, t, &mut stream.rng())
    }
}

/// Time nodes for the Volterra solve: the uniform grid plus every jump of Y,
/// with Y just before (`y_left`) and at (`y_right`) each node.
#[derive(Clone, Debug)]
pub struct VolterraGrid {
    pub step: f64,
    pub points: Vec<f64>,
    pub y_left: Vec<Site>,
    pub y_right: Vec<Site>,
}

impl VolterraGrid {
    pub fn new(step: f64, t: f64, y: &WalkPath) -> Result<Self> {
        if !(step > 0.0 && t > 0.0) {
            return invalid("grid step and horizon must be positive");
        }
        if y.horizon < t {
            return Err(Error::OutOfHorizon { s: t, horizon: y.horizon });
        }
        let n = (t / step).ceil() as usize;
        let mut pts: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(t)).collect();
        pts.extend(y.jump_times.iter().copied().filter(|&s| s < t));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * step);
        let y_left = pts.iter().map(|&s| y.position_before(s)).collect();
        let y_right = pts.iter().map(|&s| y.position_unchecked(s)).collect();
        Ok(VolterraGrid { step, points: pts, y_left, y_right })
    }

    /// Grid for a disorder that never moves.
    pub fn constant(step: f64, t: f64) -> Result<Self> {
        if !(step > 0.0 && t > 0.0) {
            return invalid("grid step and horizon must be positive");
        }
        let n = (t / step).ceil() as usize;
        let pts: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(t)).collect();
        let o = vec![Site::origin(); pts.len()];
        Ok(VolterraGrid { step, points: pts, y_left: o.clone(), y_right: o })
    }

    /// Every cell split at its midpoint.
    pub fn bisected(&self) -> Self {
        let n = self.points.len();
        let mut g = VolterraGrid {
            step: self.step / 2.0,
            points: Vec::with_capacity(2 * n),
            y_left: Vec::with_capacity(2 * n),
            y_right: Vec::with_capacity(2 * n),
        };
        for i in 0..n {
            if i > 0 {
                g.points.push(0.5 * (self.points[i - 1] + self.points[i]));
                g.y_left.push(self.y_right[i - 1]);
                g.y_right.push(self.y_right[i - 1]);
            }
            g.points.push(self.points[i]);
            g.y_left.push(self.y_left[i]);
            g.y_right.push(self.y_right[i]);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Output of a Volterra solve.
#[derive(Clone, Debug)]
pub struct VolterraSolution {
    pub points: Vec<f64>,
    /// log Z on [0, points[i]] for every node (nested horizons).
    pub log_z: Vec<f64>,
    /// Pinned density just after each node, times e^{−log_scale}.
    pub pinned: Vec<f64>,
    pub log_scale: f64,
}

impl VolterraSolution {
    pub fn log_partition(&self) -> f64 {
        *self.log_z.last().unwrap()
    }

    pub fn partition(&self) -> f64 {
        self.log_partition().exp()
    }

    /// log Z at horizon s (s must be a node).
    pub fn log_partition_at(&self, s: f64) -> Option<f64> {
        let k = self.points.partition_point(|&x| x < s - 1e-9);
        (k < self.points.len() && (self.points[k] - s).abs() <= 1e-9).then(|| self.log_z[k])
    }

    /// Pinned density D(points[i]+).
    pub fn pinned_density(&self, i: usize) -> f64 {
        self.pinned[i] * self.log_scale.exp()
    }
}

/// Forward trapezoid solve of the pinned-density equation on `grid`.
///
/// The only discretisation error is quadrature in time: Y enters through its
/// exact positions at the nodes, which include every jump.
pub fn volterra_partition(model: &PinningModel, params: &ModelParams, grid: &VolterraGrid) -> Result<VolterraSolution> {
    let pts = &grid.points;
    let n = pts.len();
    if n < 2 || pts[0] != 0.0 {
        return invalid("grid must start at 0 with at least one cell");
    }
    if *pts.last().unwrap() > model.t_max * (1.0 + 1e-12) {
        return Err(Error::HorizonExceeded { requested: *pts.last().unwrap(), horizon: model.t_max });
    }
    let beta = params.beta;
    let g = &model.grid;
    let (yl, yr) = (&grid.y_left, &grid.y_right);
    let jump: Vec<bool> = (0..n).map(|j| yl[j] != yr[j]).collect();
    let width = |j: usize| pts[j + 1] - pts[j];

    let mut dl = vec![0.0; n];
    let mut dr = vec![0.0; n];
    let mut log_z = vec![0.0; n];
    let mut scale = 0.0f64;
    // Z̃ = e^{−scale} Z accumulated over closed cells.
    let mut z_acc = 1.0f64;
    dr[0] = beta;
    dl[0] = beta;
    if beta == 0.0 {
        return Ok(VolterraSolution { points: pts.clone(), log_z, pinned: vec![0.0; n], log_scale: 0.0 });
    }

    // Σ_j weight_j · D(j) · p_{s−s_j}(y − Y(j)) over nodes before i.
    let history = |i: usize, y: Site, dl: &[f64], dr: &[f64], unit: f64| -> f64 {
        let s = pts[i];
        let mut acc = unit * g.prob(s, &y);
        for j in 0..i {
            let dt = s - pts[j];
            let loc = g.locate(dt);
            let wr = 0.5 * width(j);
            let wl = if j > 0 { 0.5 * width(j - 1) } else { 0.0 };
            if jump[j] {
                acc += wr * dr[j] * g.prob_at(dt, loc, &(y - yr[j]));
                acc += wl * dl[j] * g.prob_at(dt, loc, &(y - yl[j]));
            } else {
                acc += (wr + wl) * dr[j] * g.prob_at(dt, loc, &(y - yr[j]));
            }
        }
        acc
    };

    for i in 1..n {
        let unit = (-scale).exp();
        let h_prev = width(i - 1);
        let left = beta * history(i, yl[i], &dl, &dr, unit);
        dl[i] = left / (1.0 - beta * 0.5 * h_prev);
        dr[i] = if jump[i] { beta * history(i, yr[i], &dl, &dr, unit) } else { dl[i] };
        z_acc += 0.5 * h_prev * (dr[i - 1] + dl[i]);
        if !(z_acc > 0.0) {
            return Err(Error::GridTooCoarse { change: f64::INFINITY });
        }
        log_z[i] = scale + z_acc.ln();
        if dl[i].abs().max(dr[i].abs()) > RESCALE_AT {
            let f = RESCALE_AT.ln();
            for v in dl[..=i].iter_mut().chain(dr[..=i].iter_mut()) {
                *v /= RESCALE_AT;
            }
            z_acc /= RESCALE_AT;
            scale += f;
        }
    }
    Ok(VolterraSolution { points: pts.clone(), log_z, pinned: dr, log_scale: scale })
}

/// Volterra value with the step-halving check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckedPartition {
    pub log_z: f64,
    pub log_z_half: f64,
    /// Richardson combination (4 Z_{h/2} − Z_h)/3, on log scale.
    pub log_z_extrapolated: f64,
    /// |Z_{h/2}/Z_h − 1|.
    pub change: f64,
}

/// Solve at step h and on the bisected grid; GridTooCoarse past 1 % change.
pub fn volterra_partition_checked(model: &PinningModel, params: &ModelParams, y: &WalkPath, h: f64) -> Result<CheckedPartition> {
    let coarse = VolterraGrid::new(h, params.t, y)?;
    let fine = coarse.bisected();
    let a = volterra_partition(model, params, &coarse)?.log_partition();
    let b = volterra_partition(model, params, &fine)?.log_partition();
    let change = ((b - a).exp() - 1.0).abs();
    if change > 0.01 {
        return Err(Error::GridTooCoarse { change });
    }
    let ex = b + ((4.0 - (a - b).exp()) / 3.0).ln();
    Ok(CheckedPartition { log_z: a, log_z_half: b, log_z_extrapolated: ex, change })
}

/// Monte Carlo Z^β_{t,Y} = E^X[e^{βL_t(X,Y)}] with exact local times.
pub fn quenched_partition_mc(
    kernel: &JumpKernel,
    params: &ModelParams,
    y: &WalkPath,
    n: usize,
    stream: Stream,
) -> Result<Estimate> {
    if y.horizon < params.t {
        return Err(Error::OutOfHorizon { s: params.t, horizon: y.horizon });
    }
    if n == 0 {
        return invalid("need at least one sample");
    }
    if params.beta == 0.0 {
        return Ok(Estimate { value: 1.0, std_err: 0.0, n, seed: stream.master, scale: Scale::Linear });
    }
    const CHUNK: usize = 1024;
    let n_chunks = n.div_ceil(CHUNK);
    let vals: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut x = WalkPath::constant(kernel, params.t);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi)
                .map(|i| {
                    let mut rng = stream.child(i as u64).rng();
                    resample_path(&mut x, kernel, 1.0, params.t, &mut rng);
                    let l = collision_local_time(&x, y, params.t).expect("horizons checked").value;
                    (params.beta * l).exp()
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = vals.concat();
    let (m, se) = mean_se(&flat);
    Ok(Estimate { value: m, std_err: se, n, seed: stream.master, scale: Scale::Linear })
}

/// Annealed log Z on a uniform grid: the Volterra solve with W ≡ 1, i.e.
/// kernel β p_{(1+ρ)Δ}(0). Returns log Z at every node.
pub fn annealed_partition(kernel: &JumpKernel, params: &ModelParams, step: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0) {
        return invalid("step must be positive");
    }
    let n = (params.t / step).round() as usize;
    if n < 1 || ((n as f64) * step - params.t).abs() > 1e-9 * params.t {
        return invalid("t must be a multiple of the step");
    }
    let beta = params.beta;
    if beta == 0.0 {
        return Ok((0..=n).map(|i| (i as f64 * step, 0.0)).collect());
    }
    let rate = 1.0 + params.rho;
    let table = KernelTable::new(kernel, rate, params.t, DEFAULT_TOL)?;
    let k: Vec<f64> = (0..=n).map(|i| table.prob(i as f64 * step, &Site::origin())).collect::<Result<_>>()?;
    let mut d = vec![0.0; n + 1];
    d[0] = beta;
    let mut out = Vec::with_capacity(n + 1);
    out.push((0.0, 0.0));
    let mut scale = 0.0f64;
    let mut z_acc = 1.0f64;
    let denom = 1.0 - beta * 0.5 * step * k[0];
    if denom <= 0.0 {
        return Err(Error::GridTooCoarse { change: f64::INFINITY });
    }
    for i in 1..=n {
        let unit = (-scale).exp();
        let mut acc = unit * k[i] + 0.5 * step * d[0] * k[i];
        acc += step * d[1..i].iter().zip(k[1..i].iter().rev()).map(|(a, b)| a * b).sum::<f64>();
        d[i] = beta * acc / denom;
        z_acc += 0.5 * step * (d[i - 1] + d[i]);
        out.push((i as f64 * step, scale + z_acc.ln()));
        if d[i].abs() > RESCALE_AT {
            d[..=i].iter_mut().for_each(|v| *v /= RESCALE_AT);
            z_acc /= RESCALE_AT;
            scale += RESCALE_AT.ln();
        }
    }
    Ok(out)
}

/// log Z_ann at horizon t.
pub fn annealed_log_partition(kernel: &JumpKernel, params: &ModelParams, step: f64) -> Result<f64> {
    Ok(annealed_partition(kernel, params, step)?.last().unwrap().1)
}

/// log Z^β_{t,Y} for one disorder: Volterra (n_inner = 0) or log of an
/// n_inner-sample Monte Carlo mean.
fn inner_log_z(model: &PinningModel, params: &ModelParams, y: &WalkPath, h: f64, n_inner: usize, stream: Stream) -> Result<Vec<f64>> {
    if n_inner == 0 {
        let sol = volterra_partition(model, params, &VolterraGrid::new(h, params.t, y)?)?;
        let half = sol.log_partition_at(params.t / 2.0).ok_or_else(|| Error::InvalidArgument("t/2 not on grid".into()))?;
        Ok(vec![half, sol.log_partition()])
    } else {
        let a = quenched_partition_mc(&model.kernel, &params.with_t(params.t / 2.0), y, n_inner, stream.child(0))?;
        let b = quenched_partition_mc(&model.kernel, params, y, n_inner, stream.child(1))?;
        Ok(vec![a.value.ln(), b.value.ln()])
    }
}

/// Mean over disorders of (1/s) log Z^β_{s,Y} at s = t/2 and s = t.
pub fn quenched_log_partitions(
    model: &PinningModel,
    params: &ModelParams,
    h: f64,
    n_disorder: usize,
    n_inner: usize,
    stream: Stream,
) -> Result<(Estimate, Estimate)> {
    if n_disorder < 2 {
        return invalid("need at least two disorder samples");
    }
    let rows: Vec<Vec<f64>> = (0..n_disorder)
        .into_par_iter()
        .map(|i| {
            let s = stream.child(i as u64);
            let y = model.sample_disorder(params.t, s.child(0));
            inner_log_z(model, params, &y, h, n_inner, s.child(1))
        })
        .collect::<Result<_>>()?;
    let t = params.t;
    let half: Vec<f64> = rows.iter().map(|r| r[0] / (t / 2.0)).collect();
    let full: Vec<f64> = rows.iter().map(|r| r[1] / t).collect();
    let est = |xs: &[f64]| {
        let (m, se) = mean_se(xs);
        Estimate { value: m, std_err: se, n: xs.len(), seed: stream.master, scale: Scale::Log }
    };
    Ok((est(&half), est(&full)))
}

/// Free-energy estimate with its doubling test.
#[derive(Clone, Debug, Serialize)]
pub struct FreeEnergy {
    pub at_t: Estimate,
    pub at_2t: Estimate,
    pub change: f64,
    pub allowed: f64,
}

/// F(β,ρ) ≈ mean of (1/t) log Z_{t,Y}; NotConverged unless
/// |F̂(2t) − F̂(t)| < max(0.005, SE).
pub fn free_energy_estimate(
    model: &PinningModel,
    params: &ModelParams,
    h: f64,
    n_disorder: usize,
    n_inner: usize,
    stream: Stream,
) -> Result<FreeEnergy> {
    let doubled = params.with_t(2.0 * params.t);
    let (at_t, at_2t) = quenched_log_partitions(model, &doubled, h, n_disorder, n_inner, stream)?;
    let change = (at_2t.value - at_t.value).abs();
    let allowed = 0.005f64.max(at_2t.std_err.max(at_t.std_err));
    if change >= allowed {
        return Err(Error::NotConverged { change, allowed });
    }
    Ok(FreeEnergy { at_t, at_2t, change, allowed })
}

/// Both sides of the rate-exchange identity in mean.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub annealed: f64,
    pub beta_rhs: f64,
    pub t_rhs: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Y′ = Y1 + Y2 with rates (1+ρ′)ρ/(1+ρ) and (ρ′−ρ)/(1+ρ): compare
/// E[E^{Y2}[Z^β_{t,Y′}]] with E[Z^{β(1+ρ)/(1+ρ′)}_{t(1+ρ′)/(1+ρ),Y}].
/// Each outer sample averages `n_inner` inner draws; the error bar comes
/// from the spread of the outer means.
#[allow(clippy::too_many_arguments)]
pub fn monotonicity_identity_check(
    kernel: &JumpKernel,
    rho: f64,
    rho_prime: f64,
    beta: f64,
    t: f64,
    n_outer: usize,
    n_inner: usize,
    stream: Stream,
) -> Result<MonotonicityReport> {
    if !(rho_prime > rho && rho >= 0.0) {
        return invalid("need ρ′ > ρ ≥ 0");
    }
    if n_outer < 2 || n_inner == 0 {
        return invalid("need n_outer ≥ 2 and n_inner ≥ 1");
    }
    let r1 = (1.0 + rho_prime) * rho / (1.0 + rho);
    let r2 = (rho_prime - rho) / (1.0 + rho);
    let beta_r = beta * (1.0 + rho) / (1.0 + rho_prime);
    let t_r = t * (1.0 + rho_prime) / (1.0 + rho);
    let lhs_s = stream.child(0);
    let rhs_s = stream.child(1);
    let outer = |i: usize| -> (f64, f64) {
        let ls = lhs_s.child(i as u64);
        let mut rng = ls.child(0).rng();
        let y1 = sample_path(kernel, r1, t, &mut rng);
        let mut inner_l = 0.0;
        let mut x = WalkPath::constant(kernel, t);
        let mut y2 = WalkPath::constant(kernel, t);
        for j in 0..n_inner {
            let mut r = ls.child(1 + j as u64).rng();
            resample_path(&mut y2, kernel, r2, t, &mut r);
            resample_path(&mut x, kernel, 1.0, t, &mut r);
            // L_t(X, Y1+Y2) = L_t(X − Y2, Y1) pathwise.
            let xp = difference(&x, &y2);
            inner_l += (beta * collision_local_time(&xp, &y1, t).unwrap().value).exp();
        }
        let rs = rhs_s.child(i as u64);
        let mut rng = rs.child(0).rng();
        let y = sample_path(kernel, rho, t_r, &mut rng);
        let mut inner_r = 0.0;
        let mut xr = WalkPath::constant(kernel, t_r);
        for j in 0..n_inner {
            let mut r = rs.child(1 + j as u64).rng();
            resample_path(&mut xr, kernel, 1.0, t_r, &mut r);
            inner_r += (beta_r * collision_local_time(&xr, &y, t_r).unwrap().value).exp();
        }
        (inner_l / n_inner as f64, inner_r / n_inner as f64)
    };
    let pairs: Vec<(f64, f64)> = (0..n_outer).into_par_iter().map(outer).collect();
    let l: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let lhs = Estimate::from_samples(&l, stream.master);
    let rhs = Estimate::from_samples(&r, stream.master);
    let step = annealed_step(t);
    let annealed = annealed_log_partition(kernel, &ModelParams::new(rho_prime, beta, t, 1.0)?, step)?.exp();
    let z = lhs.z_score(rhs.value, rhs.std_err);
    Ok(MonotonicityReport { lhs, rhs, annealed, beta_rhs: beta_r, t_rhs: t_r, z_score: z, pass: z <= 3.0 })
}

fn annealed_step(t: f64) -> f64 {
    let n = (t / 0.01).ceil();
    t / n
}

/// The path s ↦ X_s − Y_s on the union of jump epochs.
pub fn difference(x: &WalkPath, y: &WalkPath) -> WalkPath {
    let horizon = x.horizon.min(y.horizon);
    let mut out = WalkPath {
        kernel_id: x.kernel_id.clone(),
        dim: x.dim,
        rate: x.rate + y.rate,
        horizon,
        jump_times: Vec::with_capacity(x.jump_times.len() + y.jump_times.len()),
        sites: vec![Site::origin()],
    };
    let (mut i, mut j) = (0, 0);
    loop {
        let tx = x.jump_times.get(i).copied().unwrap_or(f64::INFINITY);
        let ty = y.jump_times.get(j).copied().unwrap_or(f64::INFINITY);
        let t = tx.min(ty);
        if t > horizon {
            break;
        }
        if tx <= t {
            i += 1;
        }
        if ty <= t {
            j += 1;
        }
        out.jump_times.push(t);
        out.sites.push(x.sites[i] - y.sites[j]);
    }
    out
}
