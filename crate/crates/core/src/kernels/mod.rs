//! Jump kernels on ℤ^d and the transition probabilities of the associated
//! continuous-time walks.

mod green;
mod grid;
mod measure;
mod table;

pub use green::{green_function, green_function_report, origin_sequence, GreenOptions, GreenReport};
pub use grid::TransitionGrid;
pub use measure::{BoxArray, Line, SiteMeasure};
pub use table::{
    bridge_return_compare, kernel_diff, lclt_ratio, poisson_window, second_diff, second_diff_positivity,
    transition_prob, triple_return_sum, w_bound_constant, KernelTable, DEFAULT_TOL,
};

use crate::error::{Error, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use sha2::{Digest, Sha256};
use std::fmt;
use std::ops::{Add, Neg, Sub};

pub const MAX_DIM: usize = 4;

/// A lattice point of ℤ^d, d ≤ 4; unused coordinates stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub fn origin() -> Self {
        Site([0; MAX_DIM])
    }

    pub fn from_slice(c: &[i32]) -> Self {
        let mut s = [0; MAX_DIM];
        s[..c.len()].copy_from_slice(c);
        Site(s)
    }

    pub fn unit(i: usize) -> Self {
        let mut s = [0; MAX_DIM];
        s[i] = 1;
        Site(s)
    }

    pub fn is_origin(&self) -> bool {
        self.0 == [0; MAX_DIM]
    }

    pub fn norm_inf(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, o: Site) -> Site {
        Site(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, o: Site) -> Site {
        Site(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site(self.0.map(|c| -c))
    }
}

/// Marginal law of one coordinate when the kernel only jumps along axes.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisLaw {
    /// Total probability of jumps along this axis.
    pub weight: f64,
    /// Normalised one-dimensional step law.
    pub steps: Vec<(i32, f64)>,
}

/// A validated symmetric, irreducible jump law with finite support.
#[derive(Clone, Debug)]
pub struct JumpKernel {
    dim: usize,
    support: Vec<(Site, f64)>,
    cov: [[f64; MAX_DIM]; MAX_DIM],
    axes: Option<Vec<AxisLaw>>,
    id: String,
    sampler: WeightedIndex<f64>,
}

impl PartialEq for JumpKernel {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.support == other.support
    }
}

impl fmt::Display for JumpKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kernel[{} d={} |supp|={}]", self.id, self.dim, self.support.len())
    }
}

const SUM_TOL: f64 = 1e-12;

/// Validate a list of (site, probability) pairs and build the kernel.
pub fn build_kernel(spec: &[(Vec<i32>, f64)], d: usize) -> Result<JumpKernel> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::BadDimension(format!("d = {d} not in 1..={MAX_DIM}")));
    }
    if spec.is_empty() {
        return Err(Error::NotAProbability { sum: 0.0 });
    }
    let mut merged: Vec<(Site, f64)> = Vec::new();
    for (x, p) in spec {
        if x.len() != d {
            return Err(Error::BadDimension(format!("site {x:?} has length {} but d = {d}", x.len())));
        }
        if !(p.is_finite() && *p > 0.0) {
            return Err(Error::NotAProbability { sum: *p });
        }
        let s = Site::from_slice(x);
        match merged.iter_mut().find(|e| e.0 == s) {
            Some(e) => e.1 += p,
            None => merged.push((s, *p)),
        }
    }
    merged.sort_by_key(|a| a.0);
    let sum: f64 = merged.iter().map(|e| e.1).sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::NotAProbability { sum });
    }
    for (s, p) in &merged {
        let ok = merged.iter().any(|(t, q)| *t == -*s && (q - p).abs() <= SUM_TOL);
        if !ok {
            return Err(Error::NotSymmetric { site: s.0[..d].to_vec() });
        }
    }
    if lattice_index(&merged, d) != Some(1) {
        return Err(Error::NotIrreducible);
    }
    let mut cov = [[0.0; MAX_DIM]; MAX_DIM];
    for (s, p) in &merged {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += s.0[i] as f64 * s.0[j] as f64 * p;
            }
        }
    }
    let axes = axis_laws(&merged, d);
    let id = kernel_hash(&merged, d);
    let sampler = WeightedIndex::new(merged.iter().map(|e| e.1)).expect("positive weights");
    Ok(JumpKernel { dim: d, support: merged, cov, axes, id, sampler })
}

/// Index of the subgroup generated by `support` in ℤ^d (None if rank < d),
/// by integer row reduction.
fn lattice_index(support: &[(Site, f64)], d: usize) -> Option<i64> {
    let mut rows: Vec<Vec<i64>> =
        support.iter().map(|(s, _)| s.0[..d].iter().map(|&c| c as i64).collect()).collect();
    let mut index = 1i64;
    let mut start = 0;
    for col in 0..d {
        loop {
            let nz: Vec<usize> = (start..rows.len()).filter(|&r| rows[r][col] != 0).collect();
            if nz.is_empty() {
                return None;
            }
            let piv = *nz.iter().min_by_key(|&&r| rows[r][col].abs()).unwrap();
            rows.swap(start, piv);
            let mut done = true;
            for r in start + 1..rows.len() {
                if rows[r][col] != 0 {
                    let q = rows[r][col] / rows[start][col];
                    for c in 0..d {
                        rows[r][c] -= q * rows[start][c];
                    }
                    if rows[r][col] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        index *= rows[start][col].abs();
        start += 1;
    }
    Some(index)
}

fn axis_laws(support: &[(Site, f64)], d: usize) -> Option<Vec<AxisLaw>> {
    let mut laws: Vec<AxisLaw> = (0..d).map(|_| AxisLaw { weight: 0.0, steps: Vec::new() }).collect();
    for (s, p) in support {
        let nz: Vec<usize> = (0..d).filter(|&i| s.0[i] != 0).collect();
        match nz.len() {
            0 => {}
            1 => {
                let i = nz[0];
                laws[i].weight += p;
                laws[i].steps.push((s.0[i], *p));
            }
            _ => return None,
        }
    }
    for law in &mut laws {
        let w = law.weight;
        law.steps.iter_mut().for_each(|e| e.1 /= w);
        law.steps.sort_by_key(|e| e.0);
    }
    Some(laws)
}

fn kernel_hash(support: &[(Site, f64)], d: usize) -> String {
    let mut h = Sha256::new();
    h.update(format!("d={d};"));
    for (s, p) in support {
        h.update(format!("{:?}:{:.17e};", &s.0[..d], p));
    }
    let digest = h.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl JumpKernel {
    /// Nearest-neighbour simple random walk on ℤ^d.
    pub fn simple(d: usize) -> Result<Self> {
        let p = 1.0 / (2 * d) as f64;
        let mut spec = Vec::new();
        for i in 0..d {
            for sign in [1, -1] {
                let mut x = vec![0; d];
                x[i] = sign;
                spec.push((x, p));
            }
        }
        build_kernel(&spec, d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[(Site, f64)] {
        &self.support
    }

    /// Covariance entry Q_ij.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.cov[i][j]
    }

    pub fn cov_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.cov[i][..self.dim].to_vec()).collect()
    }

    pub fn det_cov(&self) -> f64 {
        let n = self.dim;
        let mut a = self.cov_matrix();
        let mut det = 1.0;
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
            if a[piv][c] == 0.0 {
                return 0.0;
            }
            if piv != c {
                a.swap(piv, c);
                det = -det;
            }
            det *= a[c][c];
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        det
    }

    /// Per-axis laws when every jump moves a single coordinate.
    pub fn axes(&self) -> Option<&[AxisLaw]> {
        self.axes.as_deref()
    }

    /// Largest |x|_∞ over the support.
    pub fn radius(&self) -> i32 {
        self.support.iter().map(|e| e.0.norm_inf()).max().unwrap_or(0)
    }

    /// Short content hash identifying the kernel.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.support[self.sampler.sample(rng)].0
    }

    /// Text form: one line "dx dy dz prob" per support point.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (s, p) in &self.support {
            let coords: Vec<String> = s.0[..self.dim].iter().map(|c| c.to_string()).collect();
            out.push_str(&format!("{} {:.17e}\n", coords.join(" "), p));
        }
        out
    }
}

/// Parse the text kernel format. Blank lines and `#` comments are ignored;
/// the dimension is the number of integer columns.
pub fn parse_kernel(text: &str) -> Result<JumpKernel> {
    let mut spec = Vec::new();
    let mut dim = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::Parse(format!("line {}: expected coordinates and a probability", lineno + 1)));
        }
        let d = fields.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::BadDimension(format!("line {} has {d} coordinates", lineno + 1)));
        }
        let coords = fields[..d]
            .iter()
            .map(|f| f.parse::<i32>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1))))
            .collect::<Result<Vec<_>>>()?;
        let p = fields[d].parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        spec.push((coords, p));
    }
    let d = dim.ok_or_else(|| Error::Parse("empty kernel file".into()))?;
    build_kernel(&spec, d)
}
