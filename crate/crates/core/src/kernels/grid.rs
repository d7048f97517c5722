//! Fast cubic-Hermite lookup of p_t(x) on a uniform time grid.
//!
//! Rows p_{kh}(·) are exact uniformised values; slopes come from the generator,
//! so interpolation between rows is fourth-order in the step.

use super::measure::Line;
use super::table::KernelTable;
use super::Site;
use crate::error::{invalid, Result};
use crate::quad::hermite;
use std::sync::Arc;

/// The origin grid carries the full jump rate, so it is refined further.
const ORIGIN_REFINE: f64 = 4.0;

#[derive(Clone, Debug)]
struct AxisRows {
    rows: Vec<Line>,
    slopes: Vec<Line>,
}

/// Kernel values on the grid {k·step}, shared read-only by solvers.
#[derive(Clone, Debug)]
pub struct TransitionGrid {
    table: Arc<KernelTable>,
    step: f64,
    t_max: f64,
    cap: i32,
    factors: Vec<AxisRows>,
    map: Vec<usize>,
    origin: Vec<f64>,
    origin_slope: Vec<f64>,
    origin_max: f64,
}

/// Position of a time inside the grid.
#[derive(Clone, Copy, Debug)]
pub struct GridLoc {
    k: usize,
    theta: f64,
}

fn generator_slope(row: &Line, steps: &[(i32, f64)], rate: f64) -> Line {
    let mut g = row.convolve_law(steps);
    g.axpy(-1.0, row);
    g.scale(rate);
    g
}

impl TransitionGrid {
    /// Grid for sites with |x_i| ≤ `radius_cap` up to time `t_max`, plus a
    /// origin-only grid up to `origin_max`. Queries outside the cap fall back
    /// to exact evaluation.
    pub fn new(table: Arc<KernelTable>, step: f64, t_max: f64, radius_cap: i32, origin_max: f64) -> Result<Self> {
        if !(step > 0.0 && t_max > 0.0 && origin_max >= 0.0) {
            return invalid("grid needs positive step and horizon");
        }
        let n_rows = (t_max / step).ceil() as usize + 2;
        let o_step = step / ORIGIN_REFINE;
        let n_orig = (origin_max / o_step).ceil() as usize + 2;
        table.check_time((n_rows - 1) as f64 * step)?;
        table.check_time((n_orig - 1) as f64 * o_step)?;
        let d = table.kernel().dim();
        let mut factors = Vec::new();
        let mut map = Vec::new();
        if table.is_product() {
            for i in 0..d {
                let f = table.axis_factor(i).unwrap();
                if let Some(pos) = (0..i).find(|&j| table.axis_factor(j) == Some(f)) {
                    map.push(map[pos]);
                    continue;
                }
                let (law, rate) = table.axis_law(i).unwrap();
                let steps = law.steps.clone();
                let mut rows = Vec::with_capacity(n_rows);
                let mut slopes = Vec::with_capacity(n_rows);
                for k in 0..n_rows {
                    let mut line = table.axis_line(i, k as f64 * step)?;
                    line.trim(1e-300);
                    let slope = generator_slope(&line, &steps, rate);
                    rows.push(clip(line, radius_cap));
                    slopes.push(clip(slope, radius_cap));
                }
                map.push(factors.len());
                factors.push(AxisRows { rows, slopes });
            }
        }
        let o = Site::origin();
        let mut origin = Vec::with_capacity(n_orig);
        let mut origin_slope = Vec::with_capacity(n_orig);
        for k in 0..n_orig {
            let s = k as f64 * o_step;
            origin.push(table.prob(s, &o)?);
            origin_slope.push(table.prob_dt(s, &o)?);
        }
        Ok(TransitionGrid { table, step, t_max, cap: radius_cap, factors, map, origin, origin_slope, origin_max })
    }

    pub fn table(&self) -> &KernelTable {
        &self.table
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn origin_max(&self) -> f64 {
        self.origin_max
    }

    #[inline]
    pub fn locate(&self, t: f64) -> GridLoc {
        locate(t, self.step)
    }

    /// p_t(x) with t already located.
    #[inline]
    pub fn prob_at(&self, t: f64, loc: GridLoc, x: &Site) -> f64 {
        if self.factors.is_empty() || loc.k + 1 >= self.factors[0].rows.len() {
            return self.table.prob(t, x).expect("time inside the table horizon");
        }
        let mut p = 1.0;
        for (i, &f) in self.map.iter().enumerate() {
            let xi = x.0[i];
            if xi.abs() > self.cap {
                return self.table.prob(t, x).expect("time inside the table horizon");
            }
            let ax = &self.factors[f];
            let v = if loc.theta == 0.0 {
                ax.rows[loc.k].get(xi)
            } else {
                let h = self.step;
                hermite(
                    loc.theta,
                    ax.rows[loc.k].get(xi),
                    ax.rows[loc.k + 1].get(xi),
                    ax.slopes[loc.k].get(xi) * h,
                    ax.slopes[loc.k + 1].get(xi) * h,
                )
            };
            p *= v;
            if p == 0.0 {
                break;
            }
        }
        p
    }

    #[inline]
    pub fn prob(&self, t: f64, x: &Site) -> f64 {
        self.prob_at(t, self.locate(t), x)
    }

    /// p_s(0) on the origin grid.
    #[inline]
    pub fn origin(&self, s: f64) -> f64 {
        let loc = locate(s, self.step / ORIGIN_REFINE);
        if loc.k + 1 >= self.origin.len() {
            return self.table.prob(s, &Site::origin()).expect("time inside the table horizon");
        }
        if loc.theta == 0.0 {
            return self.origin[loc.k];
        }
        let h = self.step / ORIGIN_REFINE;
        hermite(
            loc.theta,
            self.origin[loc.k],
            self.origin[loc.k + 1],
            self.origin_slope[loc.k] * h,
            self.origin_slope[loc.k + 1] * h,
        )
    }
}

#[inline]
fn locate(t: f64, step: f64) -> GridLoc {
    let u = t / step;
    let k = u.floor();
    let theta = u - k;
    if theta < 1e-12 {
        GridLoc { k: k as usize, theta: 0.0 }
    } else if theta > 1.0 - 1e-12 {
        GridLoc { k: k as usize + 1, theta: 0.0 }
    } else {
        GridLoc { k: k as usize, theta }
    }
}

fn clip(line: Line, cap: i32) -> Line {
    if line.lo >= -cap && line.hi() <= cap {
        return line;
    }
    let lo = line.lo.max(-cap);
    let hi = line.hi().min(cap);
    if hi < lo {
        return Line::zero();
    }
    Line { lo, vals: (lo..=hi).map(|x| line.get(x)).collect() }
}
