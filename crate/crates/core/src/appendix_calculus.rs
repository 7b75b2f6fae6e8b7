//! Discrete space-time calculus on uniform grids: summation by parts for
//! finite differences against `d_t`, the symmetric-difference limit, and the
//! null-set property of nondifferentiability points under `|d_t g| dx`.
//!
//! Shifts `a` are restricted to multiples of the `x` step so that the
//! summation-by-parts identity holds exactly up to rounding.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::call_identity::{theta, TestFunction};
use crate::error::{domain, Result};
use crate::function_space::{NondiffRegion, PathFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction2D {
    t_grid: Vec<f64>,
    x_grid: Vec<f64>,
    /// `values[i][j] = f(t_i, x_j)`.
    values: Vec<Vec<f64>>,
    /// Width in `x` cells of the zero border; also implies zero first and
    /// last time slices.
    support_band: Option<usize>,
}

fn uniform_step(name: &str, g: &[f64]) -> Result<f64> {
    if g.len() < 2 {
        return domain(format!("{name} needs at least two points"));
    }
    let h = g[1] - g[0];
    let ok = h > 0.0
        && g.windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    if !ok {
        return domain(format!("{name} must be uniform and increasing"));
    }
    Ok(h)
}

/// `exp(−1/(1 − u²))` on `(−1, 1)`, zero outside.
fn window(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

impl GridFunction2D {
    pub fn new(t_grid: Vec<f64>, x_grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        uniform_step("t_grid", &t_grid)?;
        uniform_step("x_grid", &x_grid)?;
        if values.len() != t_grid.len() || values.iter().any(|r| r.len() != x_grid.len()) {
            return domain("values must have one row per time and one entry per x");
        }
        Ok(Self {
            t_grid,
            x_grid,
            values,
            support_band: None,
        })
    }

    pub fn sample(f: &dyn PathFunction, t_grid: &[f64], x_grid: &[f64]) -> Result<Self> {
        let values = t_grid
            .iter()
            .map(|&t| x_grid.iter().map(|&x| f.eval(t, x)).collect())
            .collect();
        Self::new(t_grid.to_vec(), x_grid.to_vec(), values)
    }

    /// Multiplies by a smooth window that vanishes on a border of `band`
    /// cells in `x` and at both end times, and records the support.
    pub fn windowed(mut self, band: usize) -> Result<Self> {
        let (nt, nx) = (self.t_grid.len() - 1, self.x_grid.len() - 1);
        if 2 * band >= nx || nt < 2 {
            return domain(format!("band of {band} cells leaves no interior"));
        }
        let inner = (nx - 2 * band) as f64;
        for (i, row) in self.values.iter_mut().enumerate() {
            let wt = window(2.0 * i as f64 / nt as f64 - 1.0);
            for (j, v) in row.iter_mut().enumerate() {
                let u = 2.0 * (j as f64 - band as f64) / inner - 1.0;
                *v *= wt * window(u);
            }
        }
        self.support_band = Some(band);
        Ok(self)
    }

    /// Declares an existing zero border; errors if the values disagree.
    pub fn with_support_band(mut self, band: usize) -> Result<Self> {
        let (nt, nx) = (self.t_grid.len() - 1, self.x_grid.len() - 1);
        let outside = |i: usize, j: usize| i == 0 || i == nt || j < band || j > nx - band.min(nx);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if outside(i, j) && *v != 0.0 {
                    return domain(format!("nonzero value at ({i}, {j}) inside the support band"));
                }
            }
        }
        self.support_band = Some(band);
        Ok(self)
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn x_step(&self) -> f64 {
        self.x_grid[1] - self.x_grid[0]
    }

    pub fn support_band(&self) -> Option<usize> {
        self.support_band
    }

    fn n_t(&self) -> usize {
        self.t_grid.len()
    }

    fn n_x(&self) -> usize {
        self.x_grid.len()
    }

    /// `d_t f` charged at `t_i`, `i ≥ 1`.
    fn dt(&self, i: usize, j: usize) -> f64 {
        self.values[i][j] - self.values[i - 1][j]
    }

    /// `∇_a f(t_i, x_j)` with `a = m·h`; the caller keeps `j + m` in range.
    fn nabla(&self, i: usize, j: usize, m: isize, h: f64) -> f64 {
        let k = (j as isize + m) as usize;
        (self.values[i][k] - self.values[i][j]) / (m as f64 * h)
    }

    /// `∇̂_a f = ∇_a f − ∇_{−a} f`.
    fn nabla_hat(&self, i: usize, j: usize, m: isize, h: f64) -> f64 {
        let (up, dn) = ((j as isize + m) as usize, (j as isize - m) as usize);
        let r = &self.values[i];
        ((r[up] - r[j]) - (r[j] - r[dn])) / (m as f64 * h)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.t_grid != other.t_grid || self.x_grid != other.x_grid {
            return domain("grid functions must share their grids");
        }
        Ok(())
    }

    fn shift_cells(&self, a: f64) -> Result<isize> {
        let h = self.x_step();
        let m = (a / h).round();
        if a == 0.0 || !a.is_finite() || (a / h - m).abs() > 1e-9 * (1.0 + m.abs()) {
            return domain(format!("shift {a} is not a nonzero multiple of the x step {h}"));
        }
        Ok(m as isize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbpReport {
    /// `Σ∇_a f · d_t g · h`
    pub lhs: f64,
    /// `Σ∇_{−a} g⁻ · d_t f · h`
    pub rhs: f64,
    pub residual: f64,
    /// Largest single summand on either side.
    pub magnitude: f64,
    pub n_cells: usize,
}

impl IbpReport {
    /// Residual bound `K·ε·n_cells·magnitude` for summation-by-parts exactness.
    pub fn within_roundoff(&self, k: f64) -> bool {
        self.residual <= k * f64::EPSILON * self.n_cells as f64 * self.magnitude.max(f64::MIN_POSITIVE)
    }
}

/// Both sides of `∫∫ ∇_a f d_t g dx = ∫∫ ∇_{−a} g⁻ d_t f dx` with `f`
/// compactly supported, computed independently.
pub fn ibp_residual(f: &GridFunction2D, g: &GridFunction2D, a: f64) -> Result<IbpReport> {
    f.same_grid(g)?;
    let m = f.shift_cells(a)?;
    let Some(band) = f.support_band else {
        return domain("f must carry a compact-support band");
    };
    if band < m.unsigned_abs() {
        return domain(format!("support band {band} is narrower than the shift of {} cells", m.abs()));
    }
    let (nt, nx) = (f.n_t(), f.n_x() as isize);
    let h = f.x_step();
    let mut magnitude = 0.0f64;

    let mut lhs = 0.0;
    for i in 1..nt {
        for j in 0..nx {
            if !(0..nx).contains(&(j + m)) {
                continue;
            }
            let term = f.nabla(i, j as usize, m, h) * g.dt(i, j as usize) * h;
            magnitude = magnitude.max(term.abs());
            lhs += term;
        }
    }

    // ∇_{−a} g⁻ at t_i uses the previous slice.
    let mut rhs = 0.0;
    for i in 1..nt {
        for j in 0..nx {
            if !(0..nx).contains(&(j - m)) {
                continue;
            }
            let term = g.nabla(i - 1, j as usize, -m, h) * f.dt(i, j as usize) * h;
            magnitude = magnitude.max(term.abs());
            rhs += term;
        }
    }
    Ok(IbpReport {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        magnitude,
        n_cells: (nt - 1) * nx as usize,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub a: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub entries: Vec<TraceEntry>,
    /// Least-squares slope of `ln|value|` on `ln a` over nonzero entries.
    pub slope: Option<f64>,
}

impl TraceReport {
    /// `|value|` nonincreasing as `a` shrinks.
    pub fn is_decreasing(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].value.abs() <= w[0].value.abs())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["a", "limit_value"])?;
        for e in &self.entries {
            w.write_record([e.a.to_string(), e.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `a_k = h·2^{count−1−k}`, coarsest first, ending at the grid step.
pub fn dyadic_shift_ladder(h: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| h * 2f64.powi((count - 1 - k) as i32))
        .collect()
}

/// `∫∫ θ ∇̂_a f d_t g dx + ∫∫ θ ∇̂_a g d_t f dx` for each `a` in the ladder.
pub fn symmetric_difference_trace<T: TestFunction + ?Sized>(
    f: &GridFunction2D,
    g: &GridFunction2D,
    th: &T,
    a_ladder: &[f64],
) -> Result<TraceReport> {
    f.same_grid(g)?;
    if a_ladder.is_empty() {
        return domain("empty shift ladder");
    }
    let shifts = a_ladder
        .iter()
        .map(|&a| f.shift_cells(a).map(|m| m.abs()))
        .collect::<Result<Vec<_>>>()?;
    let (nt, nx) = (f.n_t(), f.n_x() as isize);
    let h = f.x_step();
    let entries: Vec<TraceEntry> = shifts
        .par_iter()
        .map(|&m| {
            let mut acc = 0.0;
            for i in 1..nt {
                let t = f.t_grid[i];
                for j in m..nx - m {
                    let w = theta(th, t, f.x_grid[j as usize]);
                    if w == 0.0 {
                        continue;
                    }
                    let j = j as usize;
                    acc += w
                        * (f.nabla_hat(i, j, m, h) * g.dt(i, j) + g.nabla_hat(i, j, m, h) * f.dt(i, j))
                        * h;
                }
            }
            TraceEntry {
                a: m as f64 * h,
                value: acc,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .filter(|e| e.value != 0.0)
        .map(|e| (e.a.ln(), e.value.abs().ln()))
        .collect();
    Ok(TraceReport {
        entries,
        slope: crate::decomposition::least_squares_slope(&pts),
    })
}

/// Cells of the midpoint rule for band contributions.
const BAND_CELLS: usize = 4096;

/// `∫∫ 1{(t, x) ∉ diff(f)} |d_t g| dx` over `(0, horizon]` from the two
/// functions' metadata. `None` when either lacks it.
pub fn nondiff_variation_check(f: &dyn PathFunction, g: &dyn PathFunction, horizon: f64) -> Option<f64> {
    let regions = f.nondiff_regions(horizon)?;
    g.dt_measure(0.0, 0.0, horizon)?;
    let mut total = 0.0;
    for r in regions {
        match r {
            // a single x has Lebesgue measure zero
            NondiffRegion::Graph { .. } => {}
            NondiffRegion::Band { t0, t1, x0, x1 } => {
                let dx = (x1 - x0) / BAND_CELLS as f64;
                for k in 0..BAND_CELLS {
                    let x = x0 + (k as f64 + 0.5) * dx;
                    total += g.dt_measure(x, t0, t1)?.total * dx;
                }
            }
        }
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call_identity::BoxIndicator;
    use crate::function_space::Builtin;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
    }

    fn gf(vals: [[f64; 4]; 4]) -> GridFunction2D {
        GridFunction2D::new(grid(0.0, 1.0, 3), grid(0.0, 3.0, 3), vals.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// Literal double sums over every (i, j) with out-of-grid values zero.
    fn brute_force(f: &[Vec<f64>], g: &[Vec<f64>], m: isize, h: f64) -> (f64, f64) {
        let at = |v: &[Vec<f64>], i: usize, j: isize| -> f64 {
            if (0..v[0].len() as isize).contains(&j) { v[i][j as usize] } else { 0.0 }
        };
        let (mut l, mut r) = (0.0, 0.0);
        for i in 1..f.len() {
            for j in 0..f[0].len() as isize {
                let a = m as f64 * h;
                l += (at(f, i, j + m) - at(f, i, j)) / a * (at(g, i, j) - at(g, i - 1, j)) * h;
                if (0..f[0].len() as isize).contains(&(j - m)) {
                    r += (at(g, i - 1, j - m) - at(g, i - 1, j)) / (-a) * (at(f, i, j) - at(f, i - 1, j)) * h;
                }
            }
        }
        (l, r)
    }

    #[test]
    fn four_by_four_matches_brute_force() {
        let f = gf([[0.0; 4], [0.0, 1.5, -2.0, 0.0], [0.0, 0.5, 3.0, 0.0], [0.0; 4]])
            .with_support_band(1)
            .unwrap();
        let g = gf([[1.0, 2.0, 0.0, -1.0], [0.5, 4.0, 1.0, 2.0], [3.0, -1.0, 2.0, 0.0], [1.0, 1.0, 5.0, 2.0]]);
        for m in [1isize, -1] {
            let rep = ibp_residual(&f, &g, m as f64).unwrap();
            let (l, r) = brute_force(f.values(), g.values(), m, 1.0);
            assert!((rep.lhs - l).abs() < 1e-14 && (rep.rhs - r).abs() < 1e-14, "{rep:?} {l} {r}");
            // hand expansion for m = 1 agrees both ways
            assert!(rep.within_roundoff(10.0), "{rep:?}");
        }
    }

    #[test]
    fn zero_f_gives_zero() {
        let f = gf([[0.0; 4]; 4]).with_support_band(1).unwrap();
        let g = gf([[1.0, 2.0, 3.0, 4.0]; 4]);
        let r = ibp_residual(&f, &g, 1.0).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_misaligned_and_unsupported() {
        let f = gf([[0.0; 4]; 4]).with_support_band(1).unwrap();
        let g = gf([[0.0; 4]; 4]);
        assert!(ibp_residual(&f, &g, 0.5).is_err());
        assert!(ibp_residual(&f, &g, 2.0).is_err());
        assert!(ibp_residual(&g, &f, 1.0).is_err());
        assert!(gf([[1.0; 4]; 4]).with_support_band(1).is_err());
    }

    #[test]
    fn windowed_builtins_satisfy_summation_by_parts() {
        let tg = grid(0.0, 1.0, 64);
        let xg = grid(-2.0, 2.0, 128);
        let h = xg[1] - xg[0];
        let f = GridFunction2D::sample(&Builtin::Abs, &tg, &xg).unwrap().windowed(8).unwrap();
        for g in [Builtin::Square, Builtin::MovingKink { k0: 0.0, k1: 1.0, k_jump: 0.5 }] {
            let g = GridFunction2D::sample(&g, &tg, &xg).unwrap();
            for m in [1.0, -3.0, 8.0] {
                let r = ibp_residual(&f, &g, m * h).unwrap();
                assert!(r.within_roundoff(1e3), "{r:?}");
            }
        }
    }

    #[test]
    fn trace_vanishes_for_zero_theta_and_shrinks_for_kinks() {
        let tg = grid(0.0, 1.0, 32);
        let xg = grid(-2.0, 2.0, 1024);
        let h = xg[1] - xg[0];
        let f = GridFunction2D::sample(&Builtin::Abs, &tg, &xg).unwrap();
        let g = GridFunction2D::sample(&Builtin::MovingKink { k0: 0.0, k1: 1.0, k_jump: 0.5 }, &tg, &xg).unwrap();
        let ladder = dyadic_shift_ladder(h, 8);
        let zero = BoxIndicator::new(0.0, 1.0, -1.0, 1.0, 0.0).unwrap();
        let z = symmetric_difference_trace(&f, &g, &zero, &ladder).unwrap();
        assert!(z.entries.iter().all(|e| e.value == 0.0));
        let one = BoxIndicator::new(0.0, 1.0, -1.0, 1.0, 1.0).unwrap();
        let tr = symmetric_difference_trace(&f, &g, &one, &ladder).unwrap();
        assert!(tr.is_decreasing(), "{tr:?}");
        assert!((tr.slope.unwrap() - 1.0).abs() < 0.05, "{tr:?}");
    }

    #[test]
    fn graph_nondiff_sets_are_null() {
        assert_eq!(nondiff_variation_check(&Builtin::Abs, &Builtin::MovingKink { k0: 0.0, k1: 1.0, k_jump: 0.5 }, 1.0), Some(0.0));
        assert_eq!(nondiff_variation_check(&Builtin::Square, &Builtin::TimeRamp { scale: 2.0 }, 1.0), Some(0.0));
    }
}
