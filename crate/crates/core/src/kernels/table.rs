//! Uniformised transition tables p_t(x) = Σ_n Pois(n; rate·t) q^{*n}(x).

use super::measure::{BoxArray, Line, SiteMeasure};
use super::{AxisLaw, JumpKernel, Site};
use crate::error::{invalid, Error, Result};
use sha2::{Digest, Sha256};
use statrs::function::gamma::ln_gamma;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Poisson tail mass neglected by default.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Poisson(λ) weights covering all but `tol` of the mass: (first index, weights).
pub fn poisson_window(lam: f64, tol: f64) -> (usize, Vec<f64>) {
    if lam <= 0.0 {
        return (0, vec![1.0]);
    }
    let cut = tol * 1e-3;
    let mode = lam.floor() as usize;
    let log_pm = -lam + mode as f64 * lam.ln() - ln_gamma(mode as f64 + 1.0);
    let pm = log_pm.exp();
    let mut up = Vec::new();
    let mut p = pm;
    let mut n = mode;
    loop {
        n += 1;
        p *= lam / n as f64;
        if p < cut || p == 0.0 {
            break;
        }
        up.push(p);
    }
    let mut down = Vec::new();
    p = pm;
    n = mode;
    while n > 0 {
        p *= n as f64 / lam;
        n -= 1;
        if p < cut || p == 0.0 {
            break;
        }
        down.push(p);
    }
    let lo = mode - down.len();
    let mut w: Vec<f64> = down.into_iter().rev().collect();
    w.push(pm);
    w.extend(up);
    (lo, w)
}

#[derive(Clone, Debug)]
struct AxisConv {
    law: AxisLaw,
    conv: Vec<Line>,
}

#[derive(Clone, Debug)]
enum Backend {
    /// Independent coordinates (axis-only kernels); `map[i]` picks the factor.
    Axis { axes: Vec<AxisConv>, map: Vec<usize> },
    Dense { convs: Vec<BoxArray> },
}

/// Immutable transition table for one kernel, jump rate and time horizon.
#[derive(Clone, Debug)]
pub struct KernelTable {
    kernel: JumpKernel,
    rate: f64,
    horizon: f64,
    tol: f64,
    n_max: usize,
    lost_mass: f64,
    backend: Backend,
}

impl KernelTable {
    /// Build a table able to answer queries for 0 ≤ t ≤ `horizon`.
    pub fn new(kernel: &JumpKernel, rate: f64, horizon: f64, tol: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return invalid(format!("rate must be positive, got {rate}"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if !(tol > 0.0 && tol < 1e-3) {
            return invalid(format!("truncation tolerance {tol} out of range"));
        }
        let mut lost = 0.0f64;
        let (backend, n_max) = match kernel.axes() {
            Some(laws) => {
                let mut axes: Vec<AxisConv> = Vec::new();
                let mut map = Vec::new();
                let mut n_max = 0;
                for law in laws {
                    if let Some(k) = axes.iter().position(|a| a.law == *law) {
                        map.push(k);
                        continue;
                    }
                    let (lo, w) = poisson_window(rate * law.weight * horizon, tol);
                    let n = lo + w.len();
                    n_max = n_max.max(n);
                    let thresh = tol * 1e-3 / (n as f64 + 1.0);
                    let mut conv = vec![Line::delta()];
                    for _ in 1..=n {
                        let mut next = conv.last().unwrap().convolve_law(&law.steps);
                        lost = lost.max(next.trim(thresh).abs());
                        conv.push(next);
                    }
                    map.push(axes.len());
                    axes.push(AxisConv { law: law.clone(), conv });
                }
                (Backend::Axis { axes, map }, n_max)
            }
            None => {
                let (lo, w) = poisson_window(rate * horizon, tol);
                let n = lo + w.len();
                let thresh = tol * 1e-3 / (n as f64 + 1.0);
                let mut convs = vec![BoxArray::delta(kernel.dim())];
                let mut acc = 0.0;
                for _ in 1..=n {
                    let mut next = convs.last().unwrap().convolve_law(kernel.support());
                    acc += next.trim_shells(thresh);
                    convs.push(next);
                }
                lost = acc;
                (Backend::Dense { convs }, n)
            }
        };
        Ok(KernelTable { kernel: kernel.clone(), rate, horizon, tol, n_max, lost_mass: lost, backend })
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Largest stored convolution order.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Worst mass dropped from any stored convolution power by box trimming.
    pub fn lost_mass(&self) -> f64 {
        self.lost_mass
    }

    /// True when coordinates evolve independently (axis-only kernel).
    pub fn is_product(&self) -> bool {
        matches!(self.backend, Backend::Axis { .. })
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) || !t.is_finite() {
            return invalid(format!("time must be non-negative, got {t}"));
        }
        if t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::HorizonExceeded { requested: t, horizon: self.horizon });
        }
        Ok(())
    }

    fn window(&self, lam: f64, conv_len: usize) -> Result<(usize, Vec<f64>)> {
        let (lo, w) = poisson_window(lam, self.tol);
        if lo + w.len() > conv_len {
            return Err(Error::HorizonExceeded { requested: lam / self.rate, horizon: self.horizon });
        }
        Ok((lo, w))
    }

    /// One-dimensional marginal p^{(i)}_t(x) of coordinate `i` (axis kernels only).
    pub fn axis_prob(&self, i: usize, t: f64, x: i32) -> Result<f64> {
        self.check_time(t)?;
        let Backend::Axis { axes, map } = &self.backend else {
            return invalid("axis marginals need an axis-only kernel");
        };
        let ax = &axes[map[i]];
        let r = ax.law.steps.iter().map(|s| s.0.abs()).max().unwrap_or(1);
        let (lo, w) = self.window(self.rate * ax.law.weight * t, ax.conv.len())?;
        let mut s = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let n = lo + k;
            if (x.unsigned_abs() as usize) <= n * r as usize {
                s += wk * ax.conv[n].get(x);
            }
        }
        Ok(s)
    }

    /// Whole one-dimensional marginal law of coordinate `i` at time t.
    pub fn axis_line(&self, i: usize, t: f64) -> Result<Line> {
        self.check_time(t)?;
        let Backend::Axis { axes, map } = &self.backend else {
            return invalid("axis marginals need an axis-only kernel");
        };
        let ax = &axes[map[i]];
        let (lo, w) = self.window(self.rate * ax.law.weight * t, ax.conv.len())?;
        let mut line = Line::zero();
        for (k, wk) in w.iter().enumerate() {
            line.axpy(*wk, &ax.conv[lo + k]);
        }
        Ok(line)
    }

    /// Axis law and jump rate of coordinate `i`.
    pub fn axis_law(&self, i: usize) -> Option<(&AxisLaw, f64)> {
        match &self.backend {
            Backend::Axis { axes, map } => {
                let ax = &axes[map[i]];
                Some((&ax.law, self.rate * ax.law.weight))
            }
            Backend::Dense { .. } => None,
        }
    }

    /// Index of the distinct axis factor used by coordinate `i`.
    pub fn axis_factor(&self, i: usize) -> Option<usize> {
        match &self.backend {
            Backend::Axis { map, .. } => Some(map[i]),
            Backend::Dense { .. } => None,
        }
    }

    /// p_t(x).
    pub fn prob(&self, t: f64, x: &Site) -> Result<f64> {
        self.check_time(t)?;
        match &self.backend {
            Backend::Axis { .. } => {
                let mut p = 1.0;
                for i in 0..self.kernel.dim() {
                    p *= self.axis_prob(i, t, x.0[i])?;
                    if p == 0.0 {
                        break;
                    }
                }
                Ok(p)
            }
            Backend::Dense { convs } => {
                let (lo, w) = self.window(self.rate * t, convs.len())?;
                Ok(w.iter().enumerate().map(|(k, wk)| wk * convs[lo + k].get(x)).sum())
            }
        }
    }

    /// ∂_t p_t(x) from the generator: rate·(Σ_z q(z) p_t(x−z) − p_t(x)).
    pub fn prob_dt(&self, t: f64, x: &Site) -> Result<f64> {
        match &self.backend {
            Backend::Axis { .. } => {
                let d = self.kernel.dim();
                let mut vals = Vec::with_capacity(d);
                let mut ders = Vec::with_capacity(d);
                for i in 0..d {
                    let (law, r) = self.axis_law(i).unwrap();
                    let v = self.axis_prob(i, t, x.0[i])?;
                    let mut g = -v;
                    for &(z, q) in &law.steps {
                        g += q * self.axis_prob(i, t, x.0[i] - z)?;
                    }
                    vals.push(v);
                    ders.push(r * g);
                }
                let mut total = 0.0;
                for i in 0..d {
                    let mut term = ders[i];
                    for (j, v) in vals.iter().enumerate() {
                        if j != i {
                            term *= v;
                        }
                    }
                    total += term;
                }
                Ok(total)
            }
            Backend::Dense { .. } => {
                let mut g = -self.prob(t, x)?;
                for (z, q) in self.kernel.support() {
                    g += q * self.prob(t, &(*x - *z))?;
                }
                Ok(self.rate * g)
            }
        }
    }

    /// The full law p_t(·) as a measure.
    pub fn measure(&self, t: f64) -> Result<SiteMeasure> {
        self.check_time(t)?;
        match &self.backend {
            Backend::Axis { .. } => {
                let lines = (0..self.kernel.dim()).map(|i| self.axis_line(i, t)).collect::<Result<Vec<_>>>()?;
                Ok(SiteMeasure::Product(lines))
            }
            Backend::Dense { convs } => {
                let (lo, w) = self.window(self.rate * t, convs.len())?;
                let mut acc = BoxArray::delta(self.kernel.dim());
                acc.scale(0.0);
                for (k, wk) in w.iter().enumerate() {
                    acc.axpy(*wk, &convs[lo + k]);
                }
                Ok(SiteMeasure::Dense(acc))
            }
        }
    }

    /// Stored q^{*n} as a measure (product form for axis kernels is not
    /// available since the discrete-time walk does not factorise).
    pub fn dense_power(&self, n: usize) -> Option<&BoxArray> {
        match &self.backend {
            Backend::Dense { convs } => convs.get(n),
            Backend::Axis { .. } => None,
        }
    }

    fn cache_key(kernel: &JumpKernel, rate: f64, horizon: f64, tol: f64) -> String {
        format!("{}|{:.17e}|{:.17e}|{:.17e}", kernel.id(), rate, horizon, tol)
    }

    fn cache_file(dir: &Path, key: &str) -> PathBuf {
        let digest = Sha256::digest(key.as_bytes());
        let name: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
        dir.join(format!("table-{name}.bin"))
    }

    /// Build the table, going through a binary cache in `dir` when given.
    pub fn load_or_build(kernel: &JumpKernel, rate: f64, horizon: f64, tol: f64, dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Self::new(kernel, rate, horizon, tol);
        };
        let key = Self::cache_key(kernel, rate, horizon, tol);
        let path = Self::cache_file(dir, &key);
        if let Ok(t) = Self::read_cache(&path, kernel, &key) {
            return Ok(t);
        }
        let table = Self::new(kernel, rate, horizon, tol)?;
        std::fs::create_dir_all(dir)?;
        table.write_cache(&path, &key)?;
        Ok(table)
    }

    fn write_cache(&self, path: &Path, key: &str) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"RWPMTAB1");
        put_u64(&mut buf, key.len() as u64);
        buf.extend_from_slice(key.as_bytes());
        put_u64(&mut buf, self.n_max as u64);
        put_f64(&mut buf, self.lost_mass);
        match &self.backend {
            Backend::Axis { axes, map } => {
                buf.push(0);
                put_u64(&mut buf, map.len() as u64);
                map.iter().for_each(|&m| put_u64(&mut buf, m as u64));
                put_u64(&mut buf, axes.len() as u64);
                for ax in axes {
                    put_f64(&mut buf, ax.law.weight);
                    put_u64(&mut buf, ax.law.steps.len() as u64);
                    for &(z, q) in &ax.law.steps {
                        put_u64(&mut buf, z as i64 as u64);
                        put_f64(&mut buf, q);
                    }
                    put_u64(&mut buf, ax.conv.len() as u64);
                    for line in &ax.conv {
                        put_u64(&mut buf, line.lo as i64 as u64);
                        put_u64(&mut buf, line.vals.len() as u64);
                        line.vals.iter().for_each(|&v| put_f64(&mut buf, v));
                    }
                }
            }
            Backend::Dense { convs } => {
                buf.push(1);
                put_u64(&mut buf, convs.len() as u64);
                for b in convs {
                    put_u64(&mut buf, b.radius as u64);
                    put_u64(&mut buf, b.vals.len() as u64);
                    b.vals.iter().for_each(|&v| put_f64(&mut buf, v));
                }
            }
        }
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)?.write_all(&buf)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    fn read_cache(path: &Path, kernel: &JumpKernel, key: &str) -> Result<Self> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        let mut r = Reader { data: &data, pos: 0 };
        if r.bytes(8)? != b"RWPMTAB1" {
            return Err(Error::Parse("bad cache magic".into()));
        }
        let klen = r.u64()? as usize;
        if r.bytes(klen)? != key.as_bytes() {
            return Err(Error::Parse("cache key mismatch".into()));
        }
        let n_max = r.u64()? as usize;
        let lost_mass = r.f64()?;
        let tag = r.bytes(1)?[0];
        let backend = if tag == 0 {
            let nm = r.u64()? as usize;
            let map = (0..nm).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let na = r.u64()? as usize;
            let mut axes = Vec::with_capacity(na);
            for _ in 0..na {
                let weight = r.f64()?;
                let ns = r.u64()? as usize;
                let mut steps = Vec::with_capacity(ns);
                for _ in 0..ns {
                    steps.push((r.u64()? as i64 as i32, r.f64()?));
                }
                let nc = r.u64()? as usize;
                let mut conv = Vec::with_capacity(nc);
                for _ in 0..nc {
                    let lo = r.u64()? as i64 as i32;
                    let len = r.u64()? as usize;
                    conv.push(Line { lo, vals: r.f64s(len)? });
                }
                axes.push(AxisConv { law: AxisLaw { weight, steps }, conv });
            }
            Backend::Axis { axes, map }
        } else {
            let nc = r.u64()? as usize;
            let mut convs = Vec::with_capacity(nc);
            for _ in 0..nc {
                let radius = r.u64()? as i32;
                let len = r.u64()? as usize;
                convs.push(BoxArray { dim: kernel.dim(), radius, vals: r.f64s(len)? });
            }
            Backend::Dense { convs }
        };
        let parts: Vec<&str> = key.split('|').collect();
        let num = |i: usize| parts[i].parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        Ok(KernelTable {
            kernel: kernel.clone(),
            rate: num(1)?,
            horizon: num(2)?,
            tol: num(3)?,
            n_max,
            lost_mass,
            backend,
        })
    }
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse("truncated cache file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// p_t(x) from a table.
pub fn transition_prob(table: &KernelTable, t: f64, x: &Site) -> Result<f64> {
    table.prob(t, x)
}

/// (2π·rate·t)^{d/2} √det Q · p_t(0); tends to 1 as t grows.
pub fn lclt_ratio(table: &KernelTable, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid("lclt_ratio needs t > 0");
    }
    let d = table.kernel().dim() as f64;
    let p = table.prob(t, &Site::origin())?;
    Ok((2.0 * std::f64::consts::PI * table.rate() * t).powf(d / 2.0) * table.kernel().det_cov().sqrt() * p)
}

/// Σ_x p_a(x) p_b(x) p_c(x).
pub fn triple_return_sum(table: &KernelTable, a: f64, b: f64, c: f64) -> Result<f64> {
    if a < 0.0 || b < 0.0 || c < 0.0 {
        return invalid("times must be non-negative");
    }
    let ma = table.measure(a)?;
    let mb = table.measure(b)?;
    let mc = table.measure(c)?;
    Ok(ma.pointwise(&mb).dot(&mc))
}

/// p_t(0) − p_{t+r}(0).
pub fn kernel_diff(table: &KernelTable, t: f64, r: f64) -> Result<f64> {
    if !(t > 0.0 && r > 0.0) {
        return invalid("kernel_diff needs t > 0 and r > 0");
    }
    let o = Site::origin();
    Ok(table.prob(t, &o)? - table.prob(t + r, &o)?)
}

/// p_t(0)p_{t+a+b}(0) − p_{t+a}(0)p_{t+b}(0).
pub fn second_diff(table: &KernelTable, t: f64, a: f64, b: f64) -> Result<f64> {
    if !(t > 0.0 && a >= 0.0 && b >= 0.0) {
        return invalid("second_diff needs t > 0 and a, b ≥ 0");
    }
    let o = Site::origin();
    let p = |s: f64| table.prob(s, &o);
    Ok(p(t)? * p(t + a + b)? - p(t + a)? * p(t + b)?)
}

/// p_t(0) − p_{t+a}(0) − p_{t+b}(0) + p_{t+a+b}(0), non-negative by convexity.
pub fn second_diff_positivity(table: &KernelTable, t: f64, a: f64, b: f64) -> Result<f64> {
    if !(t > 0.0 && a >= 0.0 && b >= 0.0) {
        return invalid("second_diff needs t > 0 and a, b ≥ 0");
    }
    let o = Site::origin();
    let p = |s: f64| table.prob(s, &o);
    Ok(p(t)? - p(t + a)? - p(t + b)? + p(t + a + b)?)
}

/// Return probability of Z_1+⋯+Z_n versus p_{Σa_i}(0), where Z_i has the
/// bridge marginal p_{a_i}(x)p_{b_i}(x)/p_{a_i+b_i}(0).
pub fn bridge_return_compare(table: &KernelTable, pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return invalid("need at least one (a, b) pair");
    }
    let o = Site::origin();
    let mut acc: Option<SiteMeasure> = None;
    let mut a_sum = 0.0;
    for &(a, b) in pairs {
        if !(a > 0.0 && b > 0.0) {
            return invalid("bridge times must be positive");
        }
        let mut m = table.measure(a)?.pointwise(&table.measure(b)?);
        let norm = table.prob(a + b, &o)?;
        m.scale(1.0 / norm);
        let mass = m.total();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::BoxTooSmall(format!("bridge marginal carries mass {mass}")));
        }
        acc = Some(match acc {
            None => m,
            Some(prev) => prev.convolve(&m),
        });
        a_sum += a;
    }
    let lhs = acc.unwrap().get(&o);
    let rhs = table.prob(a_sum, &o)?;
    Ok((lhs, rhs))
}

/// sup_t p_t(0)/p_{(1+ρ)t}(0) over the table range, together with the
/// large-t limit (1+ρ)^{d/2}.
pub fn w_bound_constant(table: &KernelTable, rho: f64) -> Result<f64> {
    if rho < 0.0 {
        return invalid("rho must be non-negative");
    }
    let o = Site::origin();
    let t_max = table.horizon() / (1.0 + rho);
    let d = table.kernel().dim() as f64;
    let mut best = (1.0 + rho).powf(d / 2.0);
    let n = 400;
    for k in 0..=n {
        let t = 1e-3 * (t_max / 1e-3).powf(k as f64 / n as f64);
        let r = table.prob(t, &o)? / table.prob((1.0 + rho) * t, &o)?;
        best = best.max(r);
    }
    Ok(best)
}
