//! Finite measures on ℤ and on boxes of ℤ^d.

use super::{Site, MAX_DIM};

/// A finitely supported function on ℤ stored as a contiguous window.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub lo: i32,
    pub vals: Vec<f64>,
}

impl Line {
    pub fn delta() -> Self {
        Line { lo: 0, vals: vec![1.0] }
    }

    pub fn zero() -> Self {
        Line { lo: 0, vals: Vec::new() }
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.vals.len() as i32 - 1
    }

    #[inline]
    pub fn get(&self, x: i32) -> f64 {
        let i = x as i64 - self.lo as i64;
        if i < 0 || i >= self.vals.len() as i64 {
            0.0
        } else {
            self.vals[i as usize]
        }
    }

    pub fn sum(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.vals.iter().enumerate().map(move |(i, &v)| (self.lo + i as i32, v))
    }

    /// Convolution with a finitely supported step law.
    pub fn convolve_law(&self, law: &[(i32, f64)]) -> Line {
        if self.vals.is_empty() {
            return Line::zero();
        }
        let zmin = law.iter().map(|s| s.0).min().unwrap_or(0);
        let zmax = law.iter().map(|s| s.0).max().unwrap_or(0);
        let lo = self.lo + zmin;
        let len = self.vals.len() + (zmax - zmin) as usize;
        let mut out = vec![0.0; len];
        for &(z, p) in law {
            let off = (z - zmin) as usize;
            for (i, &v) in self.vals.iter().enumerate() {
                out[i + off] += p * v;
            }
        }
        Line { lo, vals: out }
    }

    pub fn convolve(&self, other: &Line) -> Line {
        if self.vals.is_empty() || other.vals.is_empty() {
            return Line::zero();
        }
        let mut out = vec![0.0; self.vals.len() + other.vals.len() - 1];
        for (i, &a) in self.vals.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.vals.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Line { lo: self.lo + other.lo, vals: out }
    }

    pub fn pointwise(&self, other: &Line) -> Line {
        let lo = self.lo.max(other.lo);
        let hi = self.hi().min(other.hi());
        if hi < lo {
            return Line::zero();
        }
        let vals = (lo..=hi).map(|x| self.get(x) * other.get(x)).collect();
        Line { lo, vals }
    }

    pub fn dot(&self, other: &Line) -> f64 {
        let lo = self.lo.max(other.lo);
        let hi = self.hi().min(other.hi());
        (lo..=hi).map(|x| self.get(x) * other.get(x)).sum()
    }

    /// `self += a · other`, growing the window as needed.
    pub fn axpy(&mut self, a: f64, other: &Line) {
        if other.vals.is_empty() {
            return;
        }
        if self.vals.is_empty() {
            self.lo = other.lo;
            self.vals = other.vals.iter().map(|v| a * v).collect();
            return;
        }
        let lo = self.lo.min(other.lo);
        let hi = self.hi().max(other.hi());
        if lo < self.lo || hi > self.hi() {
            let mut grown = vec![0.0; (hi - lo + 1) as usize];
            let off = (self.lo - lo) as usize;
            grown[off..off + self.vals.len()].copy_from_slice(&self.vals);
            self.vals = grown;
            self.lo = lo;
        }
        let off = (other.lo - self.lo) as usize;
        for (i, &v) in other.vals.iter().enumerate() {
            self.vals[off + i] += a * v;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.vals.iter_mut().for_each(|v| *v *= c);
    }

    /// Drop edge entries below `thresh`; returns the removed mass.
    pub fn trim(&mut self, thresh: f64) -> f64 {
        let mut removed = 0.0;
        let start = self.vals.iter().position(|&v| v.abs() >= thresh);
        let Some(start) = start else {
            removed = self.sum();
            *self = Line::zero();
            return removed;
        };
        let end = self.vals.iter().rposition(|&v| v.abs() >= thresh).unwrap();
        removed += self.vals[..start].iter().sum::<f64>();
        removed += self.vals[end + 1..].iter().sum::<f64>();
        self.vals = self.vals[start..=end].to_vec();
        self.lo += start as i32;
        removed
    }
}

/// A function on the cube [−radius, radius]^d.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxArray {
    pub dim: usize,
    pub radius: i32,
    pub vals: Vec<f64>,
}

impl BoxArray {
    pub fn delta(dim: usize) -> Self {
        BoxArray { dim, radius: 0, vals: vec![1.0] }
    }

    fn zeros(dim: usize, radius: i32) -> Self {
        let side = (2 * radius + 1) as usize;
        BoxArray { dim, radius, vals: vec![0.0; side.pow(dim as u32)] }
    }

    #[inline]
    fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    #[inline]
    pub fn index(&self, x: &Site) -> Option<usize> {
        let side = self.side();
        let mut idx = 0usize;
        for i in (0..self.dim).rev() {
            let c = x.0[i];
            if c.abs() > self.radius {
                return None;
            }
            idx = idx * side + (c + self.radius) as usize;
        }
        Some(idx)
    }

    pub fn site_of(&self, mut idx: usize) -> Site {
        let side = self.side();
        let mut s = [0i32; MAX_DIM];
        for c in s.iter_mut().take(self.dim) {
            *c = (idx % side) as i32 - self.radius;
            idx /= side;
        }
        Site(s)
    }

    #[inline]
    pub fn get(&self, x: &Site) -> f64 {
        self.index(x).map_or(0.0, |i| self.vals[i])
    }

    pub fn sum(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.vals.iter().enumerate().map(move |(i, &v)| (self.site_of(i), v))
    }

    fn regrid(&self, radius: i32) -> BoxArray {
        let mut out = BoxArray::zeros(self.dim, radius);
        for (i, &v) in self.vals.iter().enumerate() {
            if v != 0.0 {
                if let Some(j) = out.index(&self.site_of(i)) {
                    out.vals[j] = v;
                }
            }
        }
        out
    }

    pub fn convolve_law(&self, law: &[(Site, f64)]) -> BoxArray {
        let r = law.iter().map(|(s, _)| s.norm_inf()).max().unwrap_or(0);
        self.convolve_sparse(law, r)
    }

    fn convolve_sparse(&self, law: &[(Site, f64)], r: i32) -> BoxArray {
        let mut out = BoxArray::zeros(self.dim, self.radius + r);
        for (i, &v) in self.vals.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let x = self.site_of(i);
            for (z, p) in law {
                let j = out.index(&(x + *z)).expect("box sized for support");
                out.vals[j] += p * v;
            }
        }
        out
    }

    pub fn convolve(&self, other: &BoxArray) -> BoxArray {
        let sparse: Vec<(Site, f64)> = other.iter().filter(|e| e.1 != 0.0).collect();
        self.convolve_sparse(&sparse, other.radius)
    }

    pub fn pointwise(&self, other: &BoxArray) -> BoxArray {
        let r = self.radius.min(other.radius);
        let mut out = BoxArray::zeros(self.dim, r);
        for i in 0..out.vals.len() {
            let x = out.site_of(i);
            out.vals[i] = self.get(&x) * other.get(&x);
        }
        out
    }

    pub fn axpy(&mut self, a: f64, other: &BoxArray) {
        if other.radius > self.radius {
            *self = self.regrid(other.radius);
        }
        for (i, &v) in other.vals.iter().enumerate() {
            if v != 0.0 {
                let j = self.index(&other.site_of(i)).expect("grown box");
                self.vals[j] += a * v;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.vals.iter_mut().for_each(|v| *v *= c);
    }

    /// Peel outer shells while their total mass stays below `thresh`.
    pub fn trim_shells(&mut self, thresh: f64) -> f64 {
        let mut removed = 0.0;
        while self.radius > 0 {
            let shell: f64 = self
                .iter()
                .filter(|(x, _)| x.norm_inf() == self.radius)
                .map(|e| e.1.abs())
                .sum();
            if shell >= thresh {
                break;
            }
            removed += shell;
            *self = self.regrid(self.radius - 1);
        }
        removed
    }
}

/// A measure on ℤ^d, either a product of one-dimensional factors or a dense box.
#[derive(Clone, Debug)]
pub enum SiteMeasure {
    Product(Vec<Line>),
    Dense(BoxArray),
}

impl SiteMeasure {
    pub fn get(&self, x: &Site) -> f64 {
        match self {
            SiteMeasure::Product(lines) => {
                lines.iter().enumerate().map(|(i, l)| l.get(x.0[i])).product()
            }
            SiteMeasure::Dense(b) => b.get(x),
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            SiteMeasure::Product(lines) => lines.iter().map(Line::sum).product(),
            SiteMeasure::Dense(b) => b.sum(),
        }
    }

    pub fn pointwise(&self, other: &SiteMeasure) -> SiteMeasure {
        match (self, other) {
            (SiteMeasure::Product(a), SiteMeasure::Product(b)) => {
                SiteMeasure::Product(a.iter().zip(b).map(|(x, y)| x.pointwise(y)).collect())
            }
            (SiteMeasure::Dense(a), SiteMeasure::Dense(b)) => SiteMeasure::Dense(a.pointwise(b)),
            _ => panic!("measures from different backends"),
        }
    }

    pub fn convolve(&self, other: &SiteMeasure) -> SiteMeasure {
        match (self, other) {
            (SiteMeasure::Product(a), SiteMeasure::Product(b)) => {
                SiteMeasure::Product(a.iter().zip(b).map(|(x, y)| x.convolve(y)).collect())
            }
            (SiteMeasure::Dense(a), SiteMeasure::Dense(b)) => SiteMeasure::Dense(a.convolve(b)),
            _ => panic!("measures from different backends"),
        }
    }

    /// Σ_x self(x)·other(x).
    pub fn dot(&self, other: &SiteMeasure) -> f64 {
        match (self, other) {
            (SiteMeasure::Product(a), SiteMeasure::Product(b)) => {
                a.iter().zip(b).map(|(x, y)| x.dot(y)).product()
            }
            (SiteMeasure::Dense(a), SiteMeasure::Dense(b)) => a.pointwise(b).sum(),
            _ => panic!("measures from different backends"),
        }
    }

    pub fn scale(&mut self, c: f64) {
        match self {
            SiteMeasure::Product(lines) => lines[0].scale(c),
            SiteMeasure::Dense(b) => b.scale(c),
        }
    }

    /// Every site with non-negligible mass, used for histogram tests.
    pub fn sites_above(&self, dim: usize, thresh: f64) -> Vec<(Site, f64)> {
        match self {
            SiteMeasure::Dense(b) => b.iter().filter(|e| e.1 >= thresh).collect(),
            SiteMeasure::Product(lines) => {
                let mut out = vec![(Site::origin(), 1.0)];
                for (i, line) in lines.iter().enumerate().take(dim) {
                    let mut next = Vec::new();
                    for (s, w) in &out {
                        for (x, v) in line.iter() {
                            let p = w * v;
                            if p >= thresh {
                                let mut t = *s;
                                t.0[i] = x;
                                next.push((t, p));
                            }
                        }
                    }
                    out = next;
                }
                out
            }
        }
    }
}
