//! Reproducible path simulators.
//!
//! Path `i` of an ensemble draws from ChaCha8 seeded with the master seed on
//! stream `i`, so ensembles do not depend on worker count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::function_space::{parse_call, Bound};
use crate::path_model::{PathDynamics, PathEnsemble, PathSeed, SamplePath};

/// Largest allowed expected number of jumps per grid cell.
pub const MAX_JUMPS_PER_CELL: f64 = 0.5;

pub fn path_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Named coefficient `c(t, x)`: `const(c)`, `step(lo, hi, k)` (`lo` below
/// `k`, `hi` from `k` on), `linear(a, b)` (`a + b·x`), or a bare number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Const(f64),
    Step { lo: f64, hi: f64, k: f64 },
    Linear { a: f64, b: f64 },
}

impl Coefficient {
    pub fn parse(expr: &str) -> Result<Self> {
        if let Ok(c) = expr.trim().parse::<f64>() {
            return Ok(Coefficient::Const(c));
        }
        let call = parse_call(expr)?;
        let c = match call.name.as_str() {
            "const" => {
                let b = Bound::new(&call, &["c"])?;
                Coefficient::Const(b.num("c", None)?)
            }
            "step" => {
                let b = Bound::new(&call, &["lo", "hi", "k"])?;
                Coefficient::Step {
                    lo: b.num("lo", None)?,
                    hi: b.num("hi", None)?,
                    k: b.num("k", Some(0.0))?,
                }
            }
            "linear" => {
                let b = Bound::new(&call, &["a", "b"])?;
                Coefficient::Linear {
                    a: b.num("a", Some(0.0))?,
                    b: b.num("b", Some(1.0))?,
                }
            }
            other => return Err(Error::Lookup(format!("coefficient '{other}'"))),
        };
        Ok(c)
    }

    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Coefficient::Const(c) => c,
            Coefficient::Step { lo, hi, k } => {
                if x < k {
                    lo
                } else {
                    hi
                }
            }
            Coefficient::Linear { a, b } => a + b * x,
        }
    }

    /// Points where the coefficient may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Coefficient::Step { k, .. } => vec![k],
            _ => Vec::new(),
        }
    }
}

/// Jump-size law: `normal(mean, sd)`, `constant(v)`, `uniform(lo, hi)`,
/// `rademacher(v)` (`±v` with equal probability).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpLaw {
    Normal { mean: f64, sd: f64 },
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    Rademacher(f64),
}

impl JumpLaw {
    pub fn parse(expr: &str) -> Result<Self> {
        let call = parse_call(expr)?;
        let law = match call.name.as_str() {
            "normal" => {
                let b = Bound::new(&call, &["mean", "sd"])?;
                let sd = b.num("sd", Some(1.0))?;
                if !(sd >= 0.0) {
                    return config("normal jump law needs sd >= 0");
                }
                JumpLaw::Normal {
                    mean: b.num("mean", Some(0.0))?,
                    sd,
                }
            }
            "constant" => JumpLaw::Constant(Bound::new(&call, &["v"])?.num("v", Some(1.0))?),
            "uniform" => {
                let b = Bound::new(&call, &["lo", "hi"])?;
                let (lo, hi) = (b.num("lo", None)?, b.num("hi", None)?);
                if !(lo < hi) {
                    return config("uniform jump law needs lo < hi");
                }
                JumpLaw::Uniform { lo, hi }
            }
            "rademacher" => JumpLaw::Rademacher(Bound::new(&call, &["v"])?.num("v", Some(1.0))?),
            other => return Err(Error::Lookup(format!("jump law '{other}'"))),
        };
        Ok(law)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, .. } => mean,
            JumpLaw::Constant(v) => v,
            JumpLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            JumpLaw::Rademacher(_) => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            JumpLaw::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
            JumpLaw::Constant(v) => v,
            JumpLaw::Uniform { lo, hi } => Uniform::new(lo, hi).expect("lo < hi").sample(rng),
            JumpLaw::Rademacher(v) => {
                if rng.random::<bool>() {
                    v
                } else {
                    -v
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Brownian,
    EulerSde,
    CompoundPoisson,
    JumpDiffusion,
    LampertiDirichlet,
}

impl GeneratorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GeneratorKind::Brownian => "brownian",
            GeneratorKind::EulerSde => "euler_sde",
            GeneratorKind::CompoundPoisson => "compound_poisson",
            GeneratorKind::JumpDiffusion => "jump_diffusion",
            GeneratorKind::LampertiDirichlet => "lamperti_dirichlet",
        }
    }
}

fn default_n_steps() -> usize {
    1 << 12
}
fn default_horizon() -> f64 {
    1.0
}
fn default_one() -> String {
    "const(1)".into()
}
fn default_zero() -> String {
    "const(0)".into()
}
fn default_jump_law() -> String {
    "normal(0,1)".into()
}
fn default_alpha() -> f64 {
    1.0
}
fn default_quadrature_points() -> usize {
    10_000
}

/// Simulator description. `sigma`/`drift` drive `euler_sde` and
/// `jump_diffusion`; `sigma_of_x` and `alpha` drive `lamperti_dirichlet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_one")]
    pub sigma: String,
    #[serde(default = "default_zero")]
    pub drift: String,
    #[serde(default)]
    pub jump_rate: f64,
    #[serde(default = "default_jump_law")]
    pub jump_law: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_one")]
    pub sigma_of_x: String,
    #[serde(default = "default_quadrature_points")]
    pub quadrature_points: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        Self {
            kind,
            n_steps: default_n_steps(),
            horizon: default_horizon(),
            x0: 0.0,
            sigma: default_one(),
            drift: default_zero(),
            jump_rate: 0.0,
            jump_law: default_jump_law(),
            alpha: default_alpha(),
            sigma_of_x: default_one(),
            quadrature_points: default_quadrature_points(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return config("n_steps must be at least 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return config("horizon must be positive and finite");
        }
        if !self.x0.is_finite() {
            return config("x0 must be finite");
        }
        if !(self.jump_rate >= 0.0 && self.jump_rate.is_finite()) {
            return config("jump_rate must be nonnegative");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return config("alpha must lie in (0, 1]");
        }
        match self.kind {
            GeneratorKind::CompoundPoisson | GeneratorKind::JumpDiffusion => {
                if self.kind == GeneratorKind::CompoundPoisson && !(self.jump_rate > 0.0) {
                    return config("compound_poisson needs jump_rate > 0");
                }
                let per_cell = self.jump_rate * self.step();
                if per_cell > MAX_JUMPS_PER_CELL {
                    return config(format!(
                        "expected {per_cell:.3} jumps per cell exceeds {MAX_JUMPS_PER_CELL}; use n_steps >= {}",
                        (self.jump_rate * self.horizon / MAX_JUMPS_PER_CELL).ceil()
                    ));
                }
                JumpLaw::parse(&self.jump_law)?;
            }
            GeneratorKind::LampertiDirichlet => {
                Coefficient::parse(&self.sigma_of_x)?;
                if self.quadrature_points < 2 {
                    return config("quadrature_points must be at least 2");
                }
            }
            GeneratorKind::Brownian | GeneratorKind::EulerSde => {}
        }
        if matches!(self.kind, GeneratorKind::EulerSde | GeneratorKind::JumpDiffusion) {
            Coefficient::parse(&self.sigma)?;
            Coefficient::parse(&self.drift)?;
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    fn times(&self) -> Vec<f64> {
        SamplePath::uniform_grid(self.horizon, self.n_steps)
    }
}

type OnePath = (SamplePath, PathDynamics);

fn build_ensemble(
    spec: &GeneratorSpec,
    n_paths: usize,
    one: impl Fn(&mut ChaCha8Rng) -> Result<OnePath> + Sync,
) -> Result<PathEnsemble> {
    let results: Vec<OnePath> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| one(&mut path_rng(spec.seed, i)))
        .collect::<Result<_>>()?;
    let seeds = (0..n_paths as u64)
        .map(|stream| PathSeed {
            master: spec.seed,
            stream,
        })
        .collect();
    let (paths, dynamics) = results.into_iter().unzip();
    PathEnsemble::new(paths, seeds, spec.kind.as_str(), Some(dynamics))
}

fn expect_kind(spec: &GeneratorSpec, kinds: &[GeneratorKind]) -> Result<()> {
    spec.validate()?;
    if !kinds.contains(&spec.kind) {
        return config(format!("generator kind {} not accepted here", spec.kind.as_str()));
    }
    Ok(())
}

/// Standard Brownian motion started at `x0`.
pub fn gen_brownian(spec: &GeneratorSpec, n_paths: usize) -> Result<PathEnsemble> {
    expect_kind(spec, &[GeneratorKind::Brownian])?;
    let dt = spec.step();
    let sd = dt.sqrt();
    let times = spec.times();
    build_ensemble(spec, n_paths, |rng| {
        let n = times.len();
        let mut values = Vec::with_capacity(n);
        let mut x = spec.x0;
        values.push(x);
        for _ in 1..n {
            x += sd * rng.sample::<f64, _>(StandardNormal);
            values.push(x);
        }
        let mut dyn_ = PathDynamics::zero(n);
        dyn_.cqv[1..].fill(dt);
        Ok((SamplePath::unmarked(times.clone(), values)?, dyn_))
    })
}

/// Explicit Euler–Maruyama for `dX = σ(t,X) dW + b(t,X) dt`.
pub fn gen_euler_sde(spec: &GeneratorSpec, n_paths: usize) -> Result<PathEnsemble> {
    expect_kind(spec, &[GeneratorKind::EulerSde])?;
    let sigma = Coefficient::parse(&spec.sigma)?;
    let drift = Coefficient::parse(&spec.drift)?;
    let dt = spec.step();
    let sd = dt.sqrt();
    let times = spec.times();
    build_ensemble(spec, n_paths, |rng| {
        let n = times.len();
        let mut values = Vec::with_capacity(n);
        let mut dyn_ = PathDynamics::zero(n);
        let mut x = spec.x0;
        values.push(x);
        for i in 1..n {
            let t = times[i - 1];
            let (s, b) = (sigma.eval(t, x), drift.eval(t, x));
            if !s.is_finite() || !b.is_finite() {
                return Err(Error::Generation(format!(
                    "non-finite coefficient at (t, x) = ({t}, {x})"
                )));
            }
            x += s * sd * rng.sample::<f64, _>(StandardNormal) + b * dt;
            if !x.is_finite() {
                return Err(Error::Generation(format!("path blew up after (t, x) = ({t}, {x})")));
            }
            dyn_.cqv[i] = s * s * dt;
            dyn_.drift[i] = b * dt;
            values.push(x);
        }
        Ok((SamplePath::unmarked(times.clone(), values)?, dyn_))
    })
}

/// Jump indicator per cell: Poisson counts, with collision cells redrawn
/// until they carry at most one event.
fn draw_jump_cells(rng: &mut ChaCha8Rng, n_cells: usize, mean: f64) -> Vec<bool> {
    if mean == 0.0 {
        return vec![false; n_cells];
    }
    let pois = Poisson::new(mean).expect("positive mean");
    (0..n_cells)
        .map(|_| loop {
            let k: f64 = pois.sample(rng);
            if k <= 1.0 {
                break k == 1.0;
            }
        })
        .collect()
}

/// Piecewise-constant path with jumps at the right end of their cell.
pub fn gen_compound_poisson(spec: &GeneratorSpec, n_paths: usize) -> Result<PathEnsemble> {
    expect_kind(spec, &[GeneratorKind::CompoundPoisson])?;
    let law = JumpLaw::parse(&spec.jump_law)?;
    let dt = spec.step();
    let compensator = spec.jump_rate * law.mean() * dt;
    let times = spec.times();
    build_ensemble(spec, n_paths, |rng| {
        let n = times.len();
        let cells = draw_jump_cells(rng, n - 1, spec.jump_rate * dt);
        let mut values = Vec::with_capacity(n);
        let mut marks = vec![false; n];
        let mut x = spec.x0;
        values.push(x);
        for (i, &jump) in cells.iter().enumerate() {
            if jump {
                x += law.sample(rng);
                marks[i + 1] = true;
            }
            values.push(x);
        }
        let mut dyn_ = PathDynamics::zero(n);
        dyn_.drift[1..].fill(compensator);
        Ok((SamplePath::new(times.clone(), values, marks)?, dyn_))
    })
}

/// Euler diffusion plus compound-Poisson jumps; jump cells are marked and
/// carry no continuous quadratic variation in the dynamics record.
pub fn gen_jump_diffusion(spec: &GeneratorSpec, n_paths: usize) -> Result<PathEnsemble> {
    expect_kind(spec, &[GeneratorKind::JumpDiffusion])?;
    let sigma = Coefficient::parse(&spec.sigma)?;
    let drift = Coefficient::parse(&spec.drift)?;
    let law = JumpLaw::parse(&spec.jump_law)?;
    let dt = spec.step();
    let sd = dt.sqrt();
    let jump_drift = spec.jump_rate * law.mean() * dt;
    let times = spec.times();
    build_ensemble(spec, n_paths, |rng| {
        let n = times.len();
        let cells = draw_jump_cells(rng, n - 1, spec.jump_rate * dt);
        let mut values = Vec::with_capacity(n);
        let mut marks = vec![false; n];
        let mut dyn_ = PathDynamics::zero(n);
        let mut x = spec.x0;
        values.push(x);
        for i in 1..n {
            let t = times[i - 1];
            let (s, b) = (sigma.eval(t, x), drift.eval(t, x));
            if !s.is_finite() || !b.is_finite() {
                return Err(Error::Generation(format!(
                    "non-finite coefficient at (t, x) = ({t}, {x})"
                )));
            }
            x += s * sd * rng.sample::<f64, _>(StandardNormal) + b * dt;
            dyn_.drift[i] = b * dt + jump_drift;
            if cells[i - 1] {
                x += law.sample(rng);
                marks[i] = true;
            } else {
                dyn_.cqv[i] = s * s * dt;
            }
            values.push(x);
        }
        Ok((SamplePath::new(times.clone(), values, marks)?, dyn_))
    })
}

/// Tabulation of `h(x) = ∫_0^x σ(y)^{-2α} dy` on a uniform grid with 0 as a node.
#[derive(Debug, Clone)]
pub struct ScaleFunction {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
}

impl ScaleFunction {
    /// Composite midpoint rule; the grid covers `[lo, hi]` and has 0 as a node.
    pub fn tabulate(sigma: &Coefficient, alpha: f64, lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo < hi) || points < 2 {
            return config("scale-function range must be nonempty with at least two points");
        }
        let dx = (hi - lo) / (points - 1) as f64;
        let j0 = (lo.min(0.0) / dx).floor() as i64;
        let j1 = (hi.max(0.0) / dx).ceil() as i64;
        let density = |y: f64| -> Result<f64> {
            let s = sigma.eval(0.0, y);
            let v = s.powf(-2.0 * alpha);
            if !(s > 0.0) || !v.is_finite() {
                return Err(Error::Generation(format!(
                    "sigma_of_x({y}) = {s} gives a non-integrable scale density"
                )));
            }
            Ok(v)
        };
        let x: Vec<f64> = (j0..=j1).map(|j| j as f64 * dx).collect();
        let mut h = vec![0.0; x.len()];
        let zero = (-j0) as usize;
        for i in zero + 1..x.len() {
            h[i] = h[i - 1] + dx * density(x[i] - 0.5 * dx)?;
        }
        for i in (0..zero).rev() {
            h[i] = h[i + 1] - dx * density(x[i] + 0.5 * dx)?;
        }
        if h.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Generation(
                "scale function is not strictly increasing on the tabulation grid".into(),
            ));
        }
        Ok(Self { x, h })
    }

    fn interp(xs: &[f64], ys: &[f64], v: f64) -> Option<f64> {
        if !(xs[0] <= v && v <= *xs.last().unwrap()) {
            return None;
        }
        let i = xs.partition_point(|&a| a <= v).clamp(1, xs.len() - 1);
        let (a, b) = (xs[i - 1], xs[i]);
        let w = (v - a) / (b - a);
        Some(ys[i - 1] + w * (ys[i] - ys[i - 1]))
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        Self::interp(&self.x, &self.h, x)
    }

    /// Monotone inverse by linear interpolation of the table.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        Self::interp(&self.h, &self.x, y)
    }

    pub fn step(&self) -> f64 {
        self.x[1] - self.x[0]
    }
}

#[derive(Debug, Clone)]
pub struct DirichletEnsembles {
    /// The local martingale `Y = h(X)` (a Brownian motion started at `h(x0)`).
    pub y: PathEnsemble,
    pub x: PathEnsemble,
    pub scale: ScaleFunction,
}

/// The Dirichlet process `X = h^{-1}(Y)` for Brownian `Y`.
pub fn gen_lamperti_dirichlet(spec: &GeneratorSpec, n_paths: usize) -> Result<DirichletEnsembles> {
    expect_kind(spec, &[GeneratorKind::LampertiDirichlet])?;
    let sigma = Coefficient::parse(&spec.sigma_of_x)?;
    let reach = 6.0 * spec.horizon.sqrt();
    // widen the x-range until the table covers h(x0) ± reach
    let mut half = reach;
    let scale = loop {
        let table = ScaleFunction::tabulate(
            &sigma,
            spec.alpha,
            spec.x0 - half,
            spec.x0 + half,
            spec.quadrature_points,
        )?;
        let centre = table.eval(spec.x0).expect("x0 inside table");
        if table.h[0] <= centre - reach && *table.h.last().unwrap() >= centre + reach {
            break table;
        }
        half *= 2.0;
        if !half.is_finite() || half > 1e12 {
            return Err(Error::Generation("cannot size the scale-function table".into()));
        }
    };
    let y0 = scale.eval(spec.x0).expect("x0 inside table");
    let mut bm = spec.clone();
    bm.kind = GeneratorKind::Brownian;
    bm.x0 = y0;
    let y = gen_brownian(&bm, n_paths)?;
    let mut y = PathEnsemble::new(y.paths, y.seeds, "lamperti_dirichlet:y", y.dynamics)?;
    let xs = y
        .paths
        .par_iter()
        .map(|p| {
            let mut err = None;
            let x = p.map(|t, v| {
                scale.inverse(v).unwrap_or_else(|| {
                    err.get_or_insert(Error::Generation(format!(
                        "Y left the tabulated range at t = {t}"
                    )));
                    f64::NAN
                })
            });
            match err {
                Some(e) => Err(e),
                None => Ok(x),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let x = PathEnsemble::new(xs, y.seeds.clone(), "lamperti_dirichlet", None)?;
    y.meta = "lamperti_dirichlet:y".into();
    Ok(DirichletEnsembles { y, x, scale })
}

/// Dispatches on `spec.kind`; for `lamperti_dirichlet` returns the `X` ensemble.
pub fn generate(spec: &GeneratorSpec, n_paths: usize) -> Result<PathEnsemble> {
    match spec.kind {
        GeneratorKind::Brownian => gen_brownian(spec, n_paths),
        GeneratorKind::EulerSde => gen_euler_sde(spec, n_paths),
        GeneratorKind::CompoundPoisson => gen_compound_poisson(spec, n_paths),
        GeneratorKind::JumpDiffusion => gen_jump_diffusion(spec, n_paths),
        GeneratorKind::LampertiDirichlet => gen_lamperti_dirichlet(spec, n_paths).map(|d| d.x),
    }
}

/// Finite-variation part `E ∫_0^t |dA|` per grid time, averaged over the
/// ensemble's dynamics records.
pub fn mean_drift_variation(ensemble: &PathEnsemble) -> Option<Vec<f64>> {
    let dynamics = ensemble.dynamics.as_ref()?;
    let n = dynamics.first()?.drift.len();
    let mut out = vec![0.0; n];
    for d in dynamics {
        let mut acc = 0.0;
        for (o, a) in out.iter_mut().zip(&d.drift) {
            acc += a.abs();
            *o += acc;
        }
    }
    let m = dynamics.len() as f64;
    out.iter_mut().for_each(|v| *v /= m);
    Some(out)
}
