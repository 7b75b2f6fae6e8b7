//! Monte Carlo call surface `C(t, x) = E[(X_t − x)_+]` and the identities
//! tying its time increments to the continuous quadratic variation, drift and
//! jumps of `X`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::function_space::{BoxDomain, Differentiability, PathFunction};
use crate::path_model::{PathEnsemble, SamplePath};

/// Paths per deterministic reduction block.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct CallSurface {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// `values[i][j] ≈ C(t_i, x_j)`.
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub n_paths: usize,
}

fn check_sorted(name: &str, g: &[f64]) -> Result<()> {
    if g.len() < 2 || g.windows(2).any(|w| !(w[0] < w[1])) || g.iter().any(|v| !v.is_finite()) {
        return domain(format!("{name} must have at least two strictly increasing finite points"));
    }
    Ok(())
}

/// `(X − x_j)_+` averaged over `[x_j, x_{j+1}]` by the trapezoid rule.
#[inline]
fn cell_hinge(x: f64, lo: f64, hi: f64) -> f64 {
    0.5 * ((x - lo).max(0.0) + (x - hi).max(0.0))
}

pub fn estimate_call_surface(
    ensemble: &PathEnsemble,
    t_grid: &[f64],
    x_grid: &[f64],
) -> Result<CallSurface> {
    if ensemble.is_empty() {
        return domain("cannot estimate a call surface from an empty ensemble");
    }
    check_sorted("t_grid", t_grid)?;
    check_sorted("x_grid", x_grid)?;
    let horizon = ensemble.horizon().unwrap();
    if t_grid[0] < 0.0 || *t_grid.last().unwrap() > horizon {
        return domain(format!("t_grid must lie inside [0, {horizon}]"));
    }
    let (nt, nx) = (t_grid.len(), x_grid.len());
    let partial: Vec<(Vec<f64>, Vec<f64>)> = ensemble
        .paths
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = vec![0.0; nt * nx];
            let mut s2 = vec![0.0; nt * nx];
            for p in chunk {
                for (i, &t) in t_grid.iter().enumerate() {
                    let xt = p.eval_stopped(t);
                    for (j, &x) in x_grid.iter().enumerate() {
                        let v = (xt - x).max(0.0);
                        s[i * nx + j] += v;
                        s2[i * nx + j] += v * v;
                    }
                }
            }
            (s, s2)
        })
        .collect();
    let mut s = vec![0.0; nt * nx];
    let mut s2 = vec![0.0; nt * nx];
    for (a, b) in &partial {
        for k in 0..nt * nx {
            s[k] += a[k];
            s2[k] += b[k];
        }
    }
    let n = ensemble.len() as f64;
    let mut values = vec![vec![0.0; nx]; nt];
    let mut stderr = vec![vec![0.0; nx]; nt];
    for i in 0..nt {
        for j in 0..nx {
            let m = s[i * nx + j] / n;
            values[i][j] = m;
            stderr[i][j] = if n > 1.0 {
                ((s2[i * nx + j] / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
        }
    }
    Ok(CallSurface {
        t_grid: t_grid.to_vec(),
        x_grid: x_grid.to_vec(),
        values,
        stderr,
        n_paths: ensemble.len(),
    })
}

impl CallSurface {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "C", "stderr"])?;
        for (i, t) in self.t_grid.iter().enumerate() {
            for (j, x) in self.x_grid.iter().enumerate() {
                w.write_record([
                    t.to_string(),
                    x.to_string(),
                    self.values[i][j].to_string(),
                    self.stderr[i][j].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Largest violation of discrete convexity in `x`, relative to the
    /// slice's largest value; nonpositive up to rounding.
    pub fn convexity_defect(&self) -> f64 {
        let x = &self.x_grid;
        let mut worst = f64::NEG_INFINITY;
        for row in &self.values {
            let scale = row.iter().fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
            for j in 1..x.len() - 1 {
                let (h0, h1) = (x[j] - x[j - 1], x[j + 1] - x[j]);
                // slope(j, j+1) − slope(j−1, j) ≥ 0
                let d = (row[j + 1] - row[j]) / h1 - (row[j] - row[j - 1]) / h0;
                worst = worst.max(-d * h0.min(h1) / scale);
            }
        }
        worst
    }

    /// `max_j Σ_i |C(t_{i+1}, x_j) − C(t_i, x_j)|`.
    pub fn max_time_variation(&self) -> f64 {
        (0..self.x_grid.len())
            .map(|j| {
                self.values
                    .windows(2)
                    .map(|w| (w[1][j] - w[0][j]).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Nonnegative bounded test function `θ(t, x)` with bounded support. The
/// checks only ever look at `θ` inside `support()`.
pub trait TestFunction: Send + Sync {
    fn eval(&self, t: f64, x: f64) -> f64;
    fn support(&self) -> BoxDomain;
    fn bound(&self) -> f64;
    /// Bound for the total variation of `t ↦ θ(t, x)`, uniform in `x`.
    fn time_variation_bound(&self) -> f64;

    /// `∫_a^b θ(t, y) dy` (composite Simpson on the support by default).
    fn x_integral(&self, t: f64, a: f64, b: f64) -> f64 {
        simpson_on_support(self, t, a, b, |_| 1.0)
    }

    /// `∫_a^b (c − y) θ(t, y) dy`.
    fn weighted_x_integral(&self, t: f64, a: f64, b: f64, c: f64) -> f64 {
        simpson_on_support(self, t, a, b, |y| c - y)
    }
}

fn simpson_on_support<T: TestFunction + ?Sized>(
    th: &T,
    t: f64,
    a: f64,
    b: f64,
    w: impl Fn(f64) -> f64,
) -> f64 {
    let (sign, a, b) = if a <= b { (1.0, a, b) } else { (-1.0, b, a) };
    let s = th.support();
    let (lo, hi) = (a.max(s.x0), b.min(s.x1));
    if !(lo < hi) {
        return 0.0;
    }
    let n = 256;
    let h = (hi - lo) / n as f64;
    let f = |y: f64| w(y) * th.eval(t, y);
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let y = lo + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(y);
    }
    sign * acc * h / 3.0
}

/// Restriction of `θ` to its declared support.
pub(crate) fn theta<T: TestFunction + ?Sized>(th: &T, t: f64, x: f64) -> f64 {
    if th.support().contains(t, x) {
        th.eval(t, x)
    } else {
        0.0
    }
}

/// `height · 1{t0 ≤ t ≤ t1, x0 ≤ x ≤ x1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxIndicator {
    pub area: BoxDomain,
    pub height: f64,
}

impl BoxIndicator {
    pub fn new(t0: f64, t1: f64, x0: f64, x1: f64, height: f64) -> Result<Self> {
        if !(height >= 0.0 && height.is_finite()) {
            return domain("test function height must be nonnegative");
        }
        Ok(Self {
            area: BoxDomain::new(t0, t1, x0, x1)?,
            height,
        })
    }
}

impl TestFunction for BoxIndicator {
    fn eval(&self, t: f64, x: f64) -> f64 {
        if self.area.contains(t, x) {
            self.height
        } else {
            0.0
        }
    }
    fn support(&self) -> BoxDomain {
        self.area
    }
    fn bound(&self) -> f64 {
        self.height
    }
    fn time_variation_bound(&self) -> f64 {
        2.0 * self.height
    }
    fn x_integral(&self, t: f64, a: f64, b: f64) -> f64 {
        let (sign, a, b) = if a <= b { (1.0, a, b) } else { (-1.0, b, a) };
        if !(self.area.t0..=self.area.t1).contains(&t) {
            return 0.0;
        }
        sign * self.height * (b.min(self.area.x1) - a.max(self.area.x0)).max(0.0)
    }
    fn weighted_x_integral(&self, t: f64, a: f64, b: f64, c: f64) -> f64 {
        let (sign, a, b) = if a <= b { (1.0, a, b) } else { (-1.0, b, a) };
        if !(self.area.t0..=self.area.t1).contains(&t) {
            return 0.0;
        }
        let (lo, hi) = (a.max(self.area.x0), b.min(self.area.x1));
        if !(lo < hi) {
            return 0.0;
        }
        // ∫ (c − y) dy = c(hi − lo) − (hi² − lo²)/2
        sign * self.height * (hi - lo) * (c - 0.5 * (hi + lo))
    }
}

/// `amp · ψ((t − tc)/tw) · ψ((x − xc)/xw)` with `ψ(u) = exp(−1/(1 − u²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothBump {
    pub tc: f64,
    pub tw: f64,
    pub xc: f64,
    pub xw: f64,
    pub amp: f64,
}

fn psi(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

impl TestFunction for SmoothBump {
    fn eval(&self, t: f64, x: f64) -> f64 {
        self.amp * psi((t - self.tc) / self.tw) * psi((x - self.xc) / self.xw)
    }
    fn support(&self) -> BoxDomain {
        BoxDomain {
            t0: self.tc - self.tw,
            t1: self.tc + self.tw,
            x0: self.xc - self.xw,
            x1: self.xc + self.xw,
        }
    }
    fn bound(&self) -> f64 {
        self.amp * (-2.0f64).exp()
    }
    fn time_variation_bound(&self) -> f64 {
        2.0 * self.bound()
    }
}

/// Pointwise sum of test functions.
pub struct SumTest(pub Vec<Box<dyn TestFunction>>);

impl TestFunction for SumTest {
    fn eval(&self, t: f64, x: f64) -> f64 {
        self.0.iter().map(|f| theta(f.as_ref(), t, x)).sum()
    }
    fn support(&self) -> BoxDomain {
        self.0
            .iter()
            .map(|f| f.support())
            .reduce(|a, b| BoxDomain {
                t0: a.t0.min(b.t0),
                t1: a.t1.max(b.t1),
                x0: a.x0.min(b.x0),
                x1: a.x1.max(b.x1),
            })
            .expect("nonempty sum")
    }
    fn bound(&self) -> f64 {
        self.0.iter().map(|f| f.bound()).sum()
    }
    fn time_variation_bound(&self) -> f64 {
        self.0.iter().map(|f| f.time_variation_bound()).sum()
    }
    fn x_integral(&self, t: f64, a: f64, b: f64) -> f64 {
        self.0.iter().map(|f| f.x_integral(t, a, b)).sum()
    }
    fn weighted_x_integral(&self, t: f64, a: f64, b: f64, c: f64) -> f64 {
        self.0.iter().map(|f| f.weighted_x_integral(t, a, b, c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub skipped: bool,
    pub violations: usize,
    /// Largest drop of `C + Â` between consecutive times, in units of the
    /// pooled standard error.
    pub worst_drop_in_stderr: f64,
    pub pass: bool,
}

/// `E ∫_0^t |dA|` at each surface time, from the ensemble's dynamics.
pub fn drift_variation_on(ensemble: &PathEnsemble, t_grid: &[f64]) -> Option<Vec<f64>> {
    let per_grid = crate::generators::mean_drift_variation(ensemble)?;
    let path = ensemble.paths.first()?;
    Some(t_grid.iter().map(|&t| per_grid[path.index_at(t)]).collect())
}

/// `C(t, x) + E ∫_0^t |dA|` is nondecreasing in `t` for every `x`, up to
/// three pooled standard errors.
pub fn monotonicity_check(
    surface: &CallSurface,
    a_variation: Option<&[f64]>,
) -> Result<MonotonicityReport> {
    let Some(a) = a_variation else {
        return Ok(MonotonicityReport {
            skipped: true,
            violations: 0,
            worst_drop_in_stderr: 0.0,
            pass: true,
        });
    };
    if a.len() != surface.t_grid.len() {
        return domain("drift variation must be given at every surface time");
    }
    let mut violations = 0;
    let mut worst = 0.0f64;
    for j in 0..surface.x_grid.len() {
        for i in 1..surface.t_grid.len() {
            let drop = (surface.values[i - 1][j] + a[i - 1]) - (surface.values[i][j] + a[i]);
            if drop <= 0.0 {
                continue;
            }
            let se = (surface.stderr[i - 1][j].powi(2) + surface.stderr[i][j].powi(2)).sqrt();
            let tol = 3.0 * se + 1e-12 * (1.0 + surface.values[i][j].abs());
            if drop > tol {
                violations += 1;
            }
            worst = worst.max(if se > 0.0 { drop / se } else if drop > tol { f64::INFINITY } else { 0.0 });
        }
    }
    Ok(MonotonicityReport {
        skipped: false,
        violations,
        worst_drop_in_stderr: worst,
        pass: violations == 0,
    })
}

/// Identity report: `lhs` from the surface, the three right-hand terms from
/// the paths and their model increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs_qv_term: f64,
    pub rhs_drift_term: f64,
    pub rhs_jump_term: f64,
    /// Standard error of the per-path difference `lhs_p − rhs_p`.
    pub stderr: f64,
    pub budget: f64,
    pub pass: bool,
    /// Mean of the path-wise left-hand sides (equals `lhs` up to rounding).
    pub lhs_from_paths: f64,
    pub n_paths: usize,
}

impl IdentityReport {
    pub fn rhs(&self) -> f64 {
        self.rhs_qv_term + self.rhs_drift_term + self.rhs_jump_term
    }
}

/// Per-cell rate bound `½ sup σ² + sup |b| + ½ (jump QV per unit time)` read
/// off the ensemble's dynamics.
fn rate_bound(ensemble: &PathEnsemble) -> Result<f64> {
    let Some(dynamics) = &ensemble.dynamics else {
        return domain("ensemble carries no model dynamics");
    };
    let mut s2 = 0.0f64;
    let mut b = 0.0f64;
    let mut jump_qv = 0.0;
    for (p, d) in ensemble.paths.iter().zip(dynamics) {
        let t = p.times();
        for i in 1..p.len() {
            let dt = t[i] - t[i - 1];
            s2 = s2.max(d.cqv[i] / dt);
            b = b.max(d.drift[i].abs() / dt);
            if p.jump_marks()[i] {
                jump_qv += p.increment(i).powi(2);
            }
        }
    }
    let horizon = ensemble.horizon().unwrap();
    Ok(0.5 * s2 + b + 0.5 * jump_qv / ensemble.len() as f64 / horizon)
}

fn x_cells<T: TestFunction + ?Sized>(th: &T, x_grid: &[f64]) -> Vec<(usize, f64, f64)> {
    let s = th.support();
    (0..x_grid.len() - 1)
        .filter(|&j| x_grid[j + 1] > s.x0 && x_grid[j] < s.x1)
        .map(|j| (j, 0.5 * (x_grid[j] + x_grid[j + 1]), x_grid[j + 1] - x_grid[j]))
        .collect()
}

fn lhs_path<T: TestFunction + ?Sized>(
    th: &T,
    p: &SamplePath,
    t_grid: &[f64],
    x_grid: &[f64],
    cells: &[(usize, f64, f64)],
) -> f64 {
    let xs: Vec<f64> = t_grid.iter().map(|&t| p.eval_stopped(t)).collect();
    let mut acc = 0.0;
    for &(j, xm, dx) in cells {
        let (lo, hi) = (x_grid[j], x_grid[j + 1]);
        for i in 0..t_grid.len() - 1 {
            let w = theta(th, t_grid[i + 1], xm);
            if w != 0.0 {
                acc += dx * w * (cell_hinge(xs[i + 1], lo, hi) - cell_hinge(xs[i], lo, hi));
            }
        }
    }
    acc
}

/// Checks `∫∫ θ d_tC dx = ½E∫θ(t,X_t)d[X]^c + E∫∫_{−∞}^{X_{t−}}θ dy dA_t
/// + E Σ ∫_{X_{t−}}^{X_t}(X_t − x)θ dx` to `3·stderr + budget`.
pub fn call_surface_identity_check<T: TestFunction + ?Sized>(
    ensemble: &PathEnsemble,
    th: &T,
    surface: &CallSurface,
) -> Result<IdentityReport> {
    let s = th.support();
    let (tg, xg) = (&surface.t_grid, &surface.x_grid);
    if s.t0 < tg[0] || s.t1 > *tg.last().unwrap() || s.x0 < xg[0] || s.x1 > *xg.last().unwrap() {
        return domain("test function support exceeds the surface box");
    }
    let Some(dynamics) = &ensemble.dynamics else {
        return domain("ensemble carries no model dynamics");
    };
    if ensemble.len() != surface.n_paths {
        return domain("surface was estimated from a different ensemble");
    }
    let cells = x_cells(th, xg);

    let mut lhs = 0.0;
    for &(j, xm, dx) in &cells {
        for i in 0..tg.len() - 1 {
            let w = theta(th, tg[i + 1], xm);
            if w != 0.0 {
                let c = |k: usize| 0.5 * (surface.values[k][j] + surface.values[k][j + 1]);
                lhs += dx * w * (c(i + 1) - c(i));
            }
        }
    }

    // per path: (lhs_p, qv_p, drift_p, jump_p)
    let rows: Vec<[f64; 4]> = ensemble
        .paths
        .par_iter()
        .zip(dynamics.par_iter())
        .map(|(p, d)| {
            let t = p.times();
            let v = p.values();
            let (mut qv, mut dr, mut jp) = (0.0, 0.0, 0.0);
            for i in 1..p.len() {
                let (s0, x0) = (t[i - 1], v[i - 1]);
                if d.cqv[i] != 0.0 {
                    qv += 0.5 * theta(th, s0, x0) * d.cqv[i];
                }
                if d.drift[i] != 0.0 && (s.t0..=s.t1).contains(&s0) {
                    dr += th.x_integral(s0, s.x0, x0) * d.drift[i];
                }
                if p.jump_marks()[i] {
                    jp += th.weighted_x_integral(t[i], x0, v[i], v[i]);
                }
            }
            [lhs_path(th, p, tg, xg, &cells), qv, dr, jp]
        })
        .collect();

    let n = rows.len() as f64;
    let mut sums = [0.0; 4];
    for r in &rows {
        for k in 0..4 {
            sums[k] += r[k];
        }
    }
    let means = sums.map(|v| v / n);
    let mean_diff = means[0] - means[1] - means[2] - means[3];
    let var = rows
        .iter()
        .map(|r| (r[0] - r[1] - r[2] - r[3] - mean_diff).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let stderr = (var / n).sqrt();

    let path_dt = ensemble.paths[0]
        .times()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    let surf_dt = tg.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let dx = xg.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let dt = path_dt.max(surf_dt);
    let (bound, tv) = (th.bound(), th.time_variation_bound());
    let budget = 2.0 * dt * rate_bound(ensemble)? * (s.x1 - s.x0) * (bound + tv)
        + (tv + 2.0 * bound) * dx * dx / 8.0;

    let rhs = means[1] + means[2] + means[3];
    Ok(IdentityReport {
        lhs,
        rhs_qv_term: means[1],
        rhs_drift_term: means[2],
        rhs_jump_term: means[3],
        stderr,
        budget,
        pass: (lhs - rhs).abs() <= 3.0 * stderr + budget,
        lhs_from_paths: means[0],
        n_paths: rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondiffReport {
    pub skipped: bool,
    /// `E Σ 1{(t, X_t) ∉ diff(f)} δ[X]^c`.
    pub lhs: f64,
    /// `2 ∫∫ 1{(t, x) ∉ diff(f)} |d_t C| dx`.
    pub rhs: f64,
    pub stderr: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Both sides of the nondifferentiability identity; each must be within
/// `3·stderr + budget` of zero for locally Lipschitz `f` and continuous laws.
pub fn nondiff_identity_check(
    ensemble: &PathEnsemble,
    f: &dyn PathFunction,
    surface: &CallSurface,
) -> Result<NondiffReport> {
    let Some(dynamics) = &ensemble.dynamics else {
        return domain("ensemble carries no model dynamics");
    };
    let (tg, xg) = (&surface.t_grid, &surface.x_grid);
    let mut unknown = false;
    let mut is_kink = |t: f64, x: f64| match f.nondiff(t, x) {
        Differentiability::NotDifferentiable => true,
        Differentiability::Differentiable => false,
        Differentiability::Unknown => {
            unknown = true;
            false
        }
    };
    let mut rhs = 0.0;
    for j in 0..xg.len() {
        let w = 0.5
            * (if j + 1 < xg.len() { xg[j + 1] - xg[j] } else { 0.0 }
                + if j > 0 { xg[j] - xg[j - 1] } else { 0.0 });
        for i in 0..tg.len() - 1 {
            if is_kink(tg[i + 1], xg[j]) {
                rhs += 2.0 * w * (surface.values[i + 1][j] - surface.values[i][j]).abs();
            }
        }
    }
    let per_path: Vec<f64> = ensemble
        .paths
        .iter()
        .zip(dynamics)
        .map(|(p, d)| {
            let (t, v) = (p.times(), p.values());
            (1..p.len())
                .filter(|&i| d.cqv[i] != 0.0 && is_kink(t[i - 1], v[i - 1]))
                .fold(0.0, |acc, i| acc + d.cqv[i])
        })
        .collect();
    if unknown {
        return Ok(NondiffReport {
            skipped: true,
            lhs: 0.0,
            rhs: 0.0,
            stderr: 0.0,
            budget: 0.0,
            pass: true,
        });
    }
    let n = per_path.len() as f64;
    let lhs = per_path.iter().sum::<f64>() / n;
    let var = per_path.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let stderr = (var / n).sqrt();
    let mut s2max = 0.0f64;
    let mut dt = 0.0f64;
    for (p, d) in ensemble.paths.iter().zip(dynamics) {
        for i in 1..p.len() {
            let h = p.times()[i] - p.times()[i - 1];
            dt = dt.max(h);
            s2max = s2max.max(d.cqv[i] / h);
        }
    }
    let dx = xg.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let budget = 2.0 * (s2max * dt + dx * surface.max_time_variation());
    Ok(NondiffReport {
        skipped: false,
        lhs,
        rhs,
        stderr,
        budget,
        pass: lhs <= 3.0 * stderr + budget && rhs <= budget,
    })
}

/// Uniform grid `lo, lo + h, ..., hi` with `n` cells.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function_space::Builtin;
    use crate::path_model::PathDynamics;

    fn deterministic(values: impl Fn(f64) -> f64, n: usize, drift: bool) -> PathEnsemble {
        let times = SamplePath::uniform_grid(1.0, n);
        let vals: Vec<f64> = times.iter().map(|&t| values(t)).collect();
        let mut d = PathDynamics::zero(n + 1);
        if drift {
            for i in 1..=n {
                d.drift[i] = vals[i] - vals[i - 1];
            }
        }
        let p = SamplePath::unmarked(times, vals).unwrap();
        PathEnsemble::new(
            vec![p],
            vec![crate::path_model::PathSeed { master: 0, stream: 0 }],
            "deterministic",
            Some(vec![d]),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_law_gives_the_hinge() {
        let e = deterministic(|_| 0.3, 16, false);
        let s = estimate_call_surface(&e, &[0.0, 0.5, 1.0], &[-1.0, 0.0, 0.3, 1.0]).unwrap();
        for row in &s.values {
            assert_eq!(row, &vec![1.3, 0.3, 0.0, 0.0]);
        }
        assert!(estimate_call_surface(&PathEnsemble::from_paths(vec![], "").unwrap(), &[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn deterministic_paths_give_zero_identity_terms() {
        let e = deterministic(|_| 0.25, 64, false);
        let tg = SamplePath::uniform_grid(1.0, 64);
        let s = estimate_call_surface(&e, &tg, &uniform_grid(-2.0, 2.0, 64)).unwrap();
        let th = BoxIndicator::new(0.0, 1.0, -1.0, 0.5, 2.0).unwrap();
        let r = call_surface_identity_check(&e, &th, &s).unwrap();
        assert_eq!((r.lhs, r.rhs()), (0.0, 0.0));
        assert!(r.pass);
    }

    #[test]
    fn pure_drift_identity_is_one_half() {
        let n = 256;
        let e = deterministic(|t| t, n, true);
        let tg = SamplePath::uniform_grid(1.0, n);
        let s = estimate_call_surface(&e, &tg, &uniform_grid(-1.0, 2.0, 96)).unwrap();
        let th = BoxIndicator::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let r = call_surface_identity_check(&e, &th, &s).unwrap();
        assert!((r.lhs - 0.5).abs() < 1e-12, "{}", r.lhs);
        assert!((r.rhs_drift_term - 0.5).abs() <= 1.0 / n as f64);
        assert!(r.pass);
        let mono = monotonicity_check(&s, drift_variation_on(&e, &tg).as_deref()).unwrap();
        assert!(mono.pass && !mono.skipped);
    }

    #[test]
    fn support_exceeding_the_surface_is_rejected() {
        let e = deterministic(|_| 0.0, 8, false);
        let s = estimate_call_surface(&e, &SamplePath::uniform_grid(1.0, 8), &uniform_grid(-1.0, 1.0, 8)).unwrap();
        let th = BoxIndicator::new(0.0, 1.0, -2.0, 0.0, 1.0).unwrap();
        assert!(call_surface_identity_check(&e, &th, &s).is_err());
    }

    #[test]
    fn box_integrals_match_quadrature() {
        let b = BoxIndicator::new(0.0, 1.0, -1.0, 0.5, 1.5).unwrap();
        let pieces: [(f64, f64, f64); 4] = [(-3.0, 0.2, 0.2), (0.2, -3.0, -3.0), (0.0, 0.3, 1.0), (-0.5, 2.0, 2.0)];
        for (a, hi, c) in pieces {
            let exact = b.weighted_x_integral(0.5, a, hi, c);
            let numeric = simpson_on_support(&b, 0.5, a, hi, |y| c - y);
            assert!((exact - numeric).abs() < 1e-2, "{exact} {numeric}");
            assert!((b.x_integral(0.5, a, hi) - simpson_on_support(&b, 0.5, a, hi, |_| 1.0)).abs() < 1e-2);
        }
        assert_eq!(b.x_integral(1.5, -1.0, 1.0), 0.0);
    }

    #[test]
    fn square_has_no_nondifferentiability() {
        let e = deterministic(|t| t - 0.5, 32, true);
        let tg = SamplePath::uniform_grid(1.0, 32);
        let s = estimate_call_surface(&e, &tg, &uniform_grid(-1.0, 1.0, 32)).unwrap();
        let r = nondiff_identity_check(&e, &Builtin::Square, &s).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.pass);
    }

    #[test]
    fn degenerate_kink_sitter_has_zero_lhs() {
        let e = deterministic(|_| 0.0, 32, false);
        let tg = SamplePath::uniform_grid(1.0, 32);
        let s = estimate_call_surface(&e, &tg, &uniform_grid(-1.0, 1.0, 32)).unwrap();
        let r = nondiff_identity_check(&e, &Builtin::Abs, &s).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.rhs, 0.0);
    }
}
