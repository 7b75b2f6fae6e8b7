//! Càdlàg sample paths on a finite time grid.
//!
//! A path is piecewise constant between grid times: `X_t = values[i]` for
//! `t` in `[times[i], times[i+1])`, and the left limit at a grid time is the
//! previous grid value. Every increment is therefore located at a grid time,
//! which keeps partition sums, left limits and jump bookkeeping exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    times: Vec<f64>,
    values: Vec<f64>,
    jump_marks: Vec<bool>,
}

impl SamplePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, jump_marks: Vec<bool>) -> Result<Self> {
        if times.is_empty() {
            return domain("a path needs at least one grid time");
        }
        if times.len() != values.len() || times.len() != jump_marks.len() {
            return domain(format!(
                "length mismatch: {} times, {} values, {} jump marks",
                times.len(),
                values.len(),
                jump_marks.len()
            ));
        }
        if times[0] != 0.0 {
            return domain(format!("path must start at t = 0, got {}", times[0]));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return domain(format!(
                "times must be strictly increasing (index {} -> {})",
                i,
                i + 1
            ));
        }
        Ok(Self {
            times,
            values,
            jump_marks,
        })
    }

    /// Path without jump marks.
    pub fn unmarked(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = times.len();
        Self::new(times, values, vec![false; n])
    }

    pub fn constant(times: Vec<f64>, value: f64) -> Result<Self> {
        let n = times.len();
        Self::unmarked(times, vec![value; n])
    }

    /// Uniform grid `i * horizon / n_steps`, `i = 0..=n_steps`.
    pub fn uniform_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
        (0..=n_steps)
            .map(|i| horizon * i as f64 / n_steps as f64)
            .collect()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn jump_marks(&self) -> &[bool] {
        &self.jump_marks
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty by construction")
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return domain(format!("t = {} outside [0, {}]", t, self.horizon()));
        }
        Ok(())
    }

    /// Index of the grid cell containing `t`: the largest `i` with `times[i] <= t`.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// `X_t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.values[self.index_at(t)])
    }

    /// `X_{t-}`, with `X_{0-} = X_0`.
    pub fn eval_left(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.left_unchecked(t))
    }

    /// `X_{t ∧ T}` for any `t >= 0`; used for stopped-value partition sums.
    pub(crate) fn eval_stopped(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    pub(crate) fn left_unchecked(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        self.values[k.saturating_sub(1)]
    }

    /// `ΔX` at grid index `i` (zero at `i = 0`).
    pub fn increment(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.values[i] - self.values[i - 1]
        }
    }

    /// Grid times that are marked as jumps or whose increment exceeds `threshold`.
    pub fn jump_times(&self, threshold: f64) -> Vec<f64> {
        (1..self.len())
            .filter(|&i| self.jump_marks[i] || self.increment(i).abs() > threshold)
            .map(|i| self.times[i])
            .collect()
    }

    /// Same grid, values transformed pointwise by `f(t, x)`; marks are kept.
    pub fn map(&self, mut f: impl FnMut(f64, f64) -> f64) -> SamplePath {
        let values = self
            .times
            .iter()
            .zip(&self.values)
            .map(|(&t, &x)| f(t, x))
            .collect();
        SamplePath {
            times: self.times.clone(),
            values,
            jump_marks: self.jump_marks.clone(),
        }
    }

    pub fn scale(&self, c: f64) -> SamplePath {
        self.map(|_, x| c * x)
    }

    /// Pointwise sum of two paths on the same grid; marks are merged.
    pub fn add(&self, other: &SamplePath) -> Result<SamplePath> {
        if self.times != other.times {
            return domain("paths must share a grid to be added");
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        let jump_marks = self
            .jump_marks
            .iter()
            .zip(&other.jump_marks)
            .map(|(a, b)| *a || *b)
            .collect();
        Ok(SamplePath {
            times: self.times.clone(),
            values,
            jump_marks,
        })
    }

    pub fn with_marks(mut self, marks: Vec<bool>) -> Result<SamplePath> {
        if marks.len() != self.times.len() {
            return domain("jump mark count must match the grid");
        }
        self.jump_marks = marks;
        Ok(self)
    }

    /// Writes the `t,x,jump` CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "x", "jump"])?;
        for i in 0..self.len() {
            w.write_record([
                self.times[i].to_string(),
                self.values[i].to_string(),
                u8::from(self.jump_marks[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `t,x,jump` CSV format exactly as written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(reader: R) -> Result<SamplePath> {
        let rows = read_rows(reader)?;
        let mut times = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        let mut marks = Vec::with_capacity(rows.len());
        for (t, x, j) in rows {
            times.push(t);
            values.push(x);
            marks.push(j.unwrap_or(false));
        }
        SamplePath::new(times, values, marks)
    }
}

/// Parsed CSV rows `(t, x, jump)`; rows are numbered from 1 (header is row 0).
/// Validates finiteness and strict monotonicity of `t`.
pub(crate) fn read_rows<R: Read>(reader: R) -> Result<Vec<(f64, f64, Option<bool>)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ti), Some(xi)) = (col("t"), col("x")) else {
        return Err(Error::Parse {
            row: 0,
            msg: "header must contain columns t and x".into(),
        });
    };
    let ji = col("jump");
    let mut out: Vec<(f64, f64, Option<bool>)> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec?;
        let num = |idx: usize, what: &str| -> Result<f64> {
            let raw = rec.get(idx).ok_or_else(|| Error::Parse {
                row,
                msg: format!("missing {what}"),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                msg: format!("cannot parse {what} = {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    msg: format!("{what} is not finite"),
                });
            }
            Ok(v)
        };
        let t = num(ti, "t")?;
        let x = num(xi, "x")?;
        let jump = match ji.and_then(|j| rec.get(j)) {
            None => None,
            Some("0") => Some(false),
            Some("1") => Some(true),
            Some(other) => {
                return Err(Error::Parse {
                    row,
                    msg: format!("jump must be 0 or 1, got {other:?}"),
                })
            }
        };
        if let Some(&(prev, _, _)) = out.last() {
            if !(t > prev) {
                return Err(Error::Parse {
                    row,
                    msg: format!("time {t} does not increase (previous {prev})"),
                });
            }
        }
        out.push((t, x, jump));
    }
    if out.is_empty() {
        return Err(Error::Parse {
            row: 0,
            msg: "no data rows".into(),
        });
    }
    Ok(out)
}

/// Replay record for one generated path: a counter-based RNG stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSeed {
    pub master: u64,
    pub stream: u64,
}

/// Model-side bookkeeping a generator knows about each path, per grid cell
/// `(t_{i-1}, t_i]` (entry 0 is always zero).
#[derive(Debug, Clone, PartialEq)]
pub struct PathDynamics {
    /// Increment of the continuous quadratic variation `[X]^c`.
    pub cqv: Vec<f64>,
    /// Increment of the finite-variation part `A` of `X = M + A`.
    pub drift: Vec<f64>,
}

impl PathDynamics {
    pub fn zero(n: usize) -> Self {
        Self {
            cqv: vec![0.0; n],
            drift: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub paths: Vec<SamplePath>,
    pub seeds: Vec<PathSeed>,
    pub meta: String,
    pub dynamics: Option<Vec<PathDynamics>>,
}

impl PathEnsemble {
    pub fn new(
        paths: Vec<SamplePath>,
        seeds: Vec<PathSeed>,
        meta: impl Into<String>,
        dynamics: Option<Vec<PathDynamics>>,
    ) -> Result<Self> {
        if paths.len() != seeds.len() {
            return domain("one seed record per path is required");
        }
        if let Some(d) = &dynamics {
            if d.len() != paths.len() {
                return domain("one dynamics record per path is required");
            }
            for (p, dy) in paths.iter().zip(d) {
                if dy.cqv.len() != p.len() || dy.drift.len() != p.len() {
                    return domain("dynamics records must match the path grid");
                }
            }
        }
        if let Some(first) = paths.first() {
            let h = first.horizon();
            if paths.iter().any(|p| p.horizon() != h) {
                return domain("all paths in an ensemble must share a horizon");
            }
        }
        Ok(Self {
            paths,
            seeds,
            meta: meta.into(),
            dynamics,
        })
    }

    /// Deterministic paths without seeds or dynamics (tests, ingested data).
    pub fn from_paths(paths: Vec<SamplePath>, meta: impl Into<String>) -> Result<Self> {
        let seeds = (0..paths.len() as u64)
            .map(|stream| PathSeed { master: 0, stream })
            .collect();
        Self::new(paths, seeds, meta, None)
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn horizon(&self) -> Option<f64> {
        self.paths.first().map(SamplePath::horizon)
    }
}
