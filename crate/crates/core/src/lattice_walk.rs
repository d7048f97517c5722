//! Continuous-time lattice walks as exact piecewise-constant paths.

use crate::error::{invalid, Error, Result};
use crate::kernels::{JumpKernel, KernelTable, Site, DEFAULT_TOL};
use crate::rng::Stream;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{BufRead, Write};

/// A right-continuous path: `sites[k]` is occupied on
/// `[jump_times[k-1], jump_times[k])`, with `sites[0]` the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    pub kernel_id: String,
    pub dim: usize,
    pub rate: f64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    pub sites: Vec<Site>,
}

/// Collision local time ∫_0^t 1{X_s = Y_s} ds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalTime {
    pub value: f64,
    pub horizon: f64,
}

impl WalkPath {
    /// The path that never leaves the origin.
    pub fn constant(kernel: &JumpKernel, horizon: f64) -> Self {
        WalkPath {
            kernel_id: kernel.id().to_string(),
            dim: kernel.dim(),
            rate: 0.0,
            horizon,
            jump_times: Vec::new(),
            sites: vec![Site::origin()],
        }
    }

    /// Build a path from explicit jumps, checking the invariants.
    pub fn from_jumps(kernel: &JumpKernel, rate: f64, horizon: f64, jumps: &[(f64, Site)]) -> Result<Self> {
        let mut p = WalkPath::constant(kernel, horizon);
        p.rate = rate;
        let mut last = 0.0;
        for &(t, dx) in jumps {
            if !(t > last && t <= horizon) {
                return invalid(format!("jump time {t} out of order or beyond horizon"));
            }
            if !kernel.support().iter().any(|e| e.0 == dx) {
                return invalid(format!("displacement {dx:?} not in kernel support"));
            }
            last = t;
            p.jump_times.push(t);
            let cur = *p.sites.last().unwrap();
            p.sites.push(cur + dx);
        }
        Ok(p)
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Position at time s (right-continuous at jump epochs).
    pub fn position_at(&self, s: f64) -> Result<Site> {
        if !(s >= 0.0 && s <= self.horizon) {
            return Err(Error::OutOfHorizon { s, horizon: self.horizon });
        }
        Ok(self.position_unchecked(s))
    }

    #[inline]
    pub fn position_unchecked(&self, s: f64) -> Site {
        let k = self.jump_times.partition_point(|&t| t <= s);
        self.sites[k]
    }

    /// Position just before s.
    #[inline]
    pub fn position_before(&self, s: f64) -> Site {
        let k = self.jump_times.partition_point(|&t| t < s);
        self.sites[k]
    }

    pub fn final_site(&self) -> Site {
        *self.sites.last().unwrap()
    }

    /// Largest |coordinate| visited.
    pub fn max_coord(&self) -> i32 {
        self.sites.iter().map(|s| s.norm_inf()).max().unwrap_or(0)
    }

    /// Constancy intervals `(start, end, site)` clipped to [0, t].
    pub fn intervals(&self, t: f64) -> Vec<(f64, f64, Site)> {
        let mut out = Vec::with_capacity(self.jump_times.len() + 1);
        let mut start = 0.0;
        for (k, &tau) in self.jump_times.iter().enumerate() {
            if tau >= t {
                break;
            }
            out.push((start, tau, self.sites[k]));
            start = tau;
        }
        let k = out.len();
        if start < t {
            out.push((start, t, self.sites[k]));
        }
        out
    }

    /// Concatenate: follow `self` up to its horizon, then the increments of `next`.
    pub fn append(&mut self, next: &WalkPath) {
        let base = self.final_site();
        let t0 = self.horizon;
        for (k, &tau) in next.jump_times.iter().enumerate() {
            self.jump_times.push(t0 + tau);
            self.sites.push(base + next.sites[k + 1]);
        }
        self.horizon += next.horizon;
    }

    /// Text dump: a header line, then one line "t dx dy dz" per jump.
    pub fn write_text<W: Write>(&self, mut w: W, seed: u64) -> Result<()> {
        writeln!(w, "# kernel {} rate {:.17e} seed {} horizon {:.17e} dim {}", self.kernel_id, self.rate, seed, self.horizon, self.dim)?;
        for k in 0..self.jump_times.len() {
            let d = self.sites[k + 1] - self.sites[k];
            let coords: Vec<String> = d.0[..self.dim].iter().map(|c| c.to_string()).collect();
            writeln!(w, "{:.17e} {}", self.jump_times[k], coords.join(" "))?;
        }
        Ok(())
    }

    /// Inverse of [`WalkPath::write_text`]; returns the path and its seed.
    pub fn read_text<R: BufRead>(r: R) -> Result<(WalkPath, u64)> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty path dump".into()))??;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 11 || f[0] != "#" || f[1] != "kernel" {
            return Err(Error::Parse(format!("bad path header: {header}")));
        }
        let perr = |e: std::num::ParseFloatError| Error::Parse(e.to_string());
        let ierr = |e: std::num::ParseIntError| Error::Parse(e.to_string());
        let rate: f64 = f[4].parse().map_err(perr)?;
        let seed: u64 = f[6].parse().map_err(ierr)?;
        let horizon: f64 = f[8].parse().map_err(perr)?;
        let dim: usize = f[10].parse().map_err(ierr)?;
        let mut path = WalkPath {
            kernel_id: f[2].to_string(),
            dim,
            rate,
            horizon,
            jump_times: Vec::new(),
            sites: vec![Site::origin()],
        };
        for line in lines {
            let line = line?;
            let g: Vec<&str> = line.split_whitespace().collect();
            if g.is_empty() {
                continue;
            }
            if g.len() != dim + 1 {
                return Err(Error::Parse(format!("bad jump line: {line}")));
            }
            let t: f64 = g[0].parse().map_err(perr)?;
            let d: Vec<i32> = g[1..].iter().map(|x| x.parse().map_err(ierr)).collect::<Result<_>>()?;
            let cur = *path.sites.last().unwrap();
            path.jump_times.push(t);
            path.sites.push(cur + Site::from_slice(&d));
        }
        Ok((path, seed))
    }
}

/// Sample a path with Poisson(rate) jump epochs on (0, horizon] and i.i.d.
/// displacements from the kernel.
pub fn sample_path<R: Rng + ?Sized>(kernel: &JumpKernel, rate: f64, horizon: f64, rng: &mut R) -> WalkPath {
    let mut p = WalkPath::constant(kernel, horizon);
    p.rate = rate;
    resample_path(&mut p, kernel, rate, horizon, rng);
    p
}

/// Refill `path` in place (reuses its buffers).
pub fn resample_path<R: Rng + ?Sized>(path: &mut WalkPath, kernel: &JumpKernel, rate: f64, horizon: f64, rng: &mut R) {
    path.rate = rate;
    path.horizon = horizon;
    path.jump_times.clear();
    path.sites.clear();
    path.sites.push(Site::origin());
    if rate <= 0.0 {
        return;
    }
    let mut t = 0.0;
    let mut cur = Site::origin();
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap / rate;
        if t > horizon {
            break;
        }
        cur = cur + kernel.sample_jump(rng);
        path.jump_times.push(t);
        path.sites.push(cur);
    }
}

/// Local time of X and Y on [s, t] by merging jump epochs.
pub fn local_time_window(x: &WalkPath, y: &WalkPath, s: f64, t: f64) -> Result<LocalTime> {
    if x.dim != y.dim {
        return invalid("paths live in different dimensions");
    }
    for p in [x, y] {
        if t > p.horizon {
            return Err(Error::OutOfHorizon { s: t, horizon: p.horizon });
        }
    }
    if !(s >= 0.0 && s <= t) {
        return invalid("need 0 ≤ s ≤ t");
    }
    let mut i = x.jump_times.partition_point(|&u| u <= s);
    let mut j = y.jump_times.partition_point(|&u| u <= s);
    let mut cur = s;
    let mut total = 0.0;
    while cur < t {
        let nx = x.jump_times.get(i).copied().unwrap_or(f64::INFINITY);
        let ny = y.jump_times.get(j).copied().unwrap_or(f64::INFINITY);
        let next = nx.min(ny).min(t);
        if x.sites[i] == y.sites[j] {
            total += next - cur;
        }
        if nx <= next {
            i += 1;
        }
        if ny <= next {
            j += 1;
        }
        cur = next;
    }
    Ok(LocalTime { value: total, horizon: t })
}

/// L_t(X, Y) = ∫_0^t 1{X_s = Y_s} ds, exact.
pub fn collision_local_time(x: &WalkPath, y: &WalkPath, t: f64) -> Result<LocalTime> {
    local_time_window(x, y, 0.0, t)
}

/// One probe of [`difference_walk_check`].
#[derive(Clone, Debug, Serialize)]
pub struct DifferenceProbe {
    pub t: f64,
    pub frequency: f64,
    pub std_err: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Compare the empirical return frequency of X − Y with p^{(1+ρ)}_t(0).
pub fn difference_walk_check(
    kernel: &JumpKernel,
    rho: f64,
    probes: &[f64],
    n_samples: usize,
    stream: Stream,
) -> Result<Vec<DifferenceProbe>> {
    if rho < 0.0 || probes.is_empty() || n_samples == 0 {
        return invalid("need ρ ≥ 0, probes and samples");
    }
    let t_max = probes.iter().cloned().fold(0.0, f64::max);
    let table = KernelTable::new(kernel, 1.0 + rho, t_max, DEFAULT_TOL)?;
    let hits: Vec<Vec<bool>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            let x = sample_path(kernel, 1.0, t_max, &mut rng);
            let y = sample_path(kernel, rho, t_max, &mut rng);
            probes.iter().map(|&t| x.position_unchecked(t) == y.position_unchecked(t)).collect()
        })
        .collect();
    probes
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let count = hits.iter().filter(|h| h[k]).count();
            let f = count as f64 / n_samples as f64;
            let expected = table.prob(t, &Site::origin())?;
            let se = (expected * (1.0 - expected) / n_samples as f64).sqrt();
            Ok(DifferenceProbe { t, frequency: f, std_err: se, expected, pass: (f - expected).abs() <= 3.0 * se })
        })
        .collect()
}
