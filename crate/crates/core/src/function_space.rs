//! Functions `f(t, x)` of the classes 𝒟₀ (locally Lipschitz in `x`, càdlàg
//! in `t` with integrable time variation) and 𝒟 (additionally with one-sided
//! `x`-derivatives everywhere), with their analytic metadata.
//!
//! Class membership is declared by each implementation, not inferred.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Differentiability {
    Differentiable,
    NotDifferentiable,
    Unknown,
}

/// Piece of the complement of `diff(f)` over a time window `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NondiffRegion {
    /// The vertical line `x = x` (Lebesgue-null in `x`).
    Graph { t0: f64, t1: f64, x: f64 },
    /// A set of positive `x`-measure.
    Band { t0: f64, t1: f64, x0: f64, x1: f64 },
}

/// `∫_{(t0, t1]} d_t f(t, x)` and `∫_{(t0, t1]} |d_t f(t, x)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMeasure {
    pub signed: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxDomain {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl BoxDomain {
    pub fn new(t0: f64, t1: f64, x0: f64, x1: f64) -> Result<Self> {
        if !(t0 <= t1 && x0 <= x1) || ![t0, t1, x0, x1].iter().all(|v| v.is_finite()) {
            return domain(format!("invalid box [{t0}, {t1}] x [{x0}, {x1}]"));
        }
        Ok(Self { t0, t1, x0, x1 })
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        (self.t0..=self.t1).contains(&t) && (self.x0..=self.x1).contains(&x)
    }
}

pub trait PathFunction: Send + Sync + fmt::Debug {
    /// Canonical registry expression, parseable by [`parse_function`].
    fn name(&self) -> String;

    fn eval(&self, t: f64, x: f64) -> f64;

    /// `f(t−, x)`; differs from `eval` only at declared time jumps.
    fn eval_left_t(&self, t: f64, x: f64) -> f64 {
        self.eval(t, x)
    }

    fn dx_left(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    fn dx_right(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    /// Closed-form `x`-derivative where one exists.
    fn dx_exact(&self, t: f64, x: f64) -> Option<f64> {
        match (self.dx_left(t, x), self.dx_right(t, x)) {
            (Some(l), Some(r)) if l == r => Some(l),
            _ => None,
        }
    }

    /// A Lipschitz constant of `f(t, ·)` on the box, uniform in `t`.
    fn lipschitz_bound(&self, _b: &BoxDomain) -> Option<f64> {
        None
    }

    /// Times at which `f(·, x)` may jump.
    fn time_jumps(&self) -> Vec<f64> {
        Vec::new()
    }

    fn dt_measure(&self, _x: f64, _t0: f64, _t1: f64) -> Option<TimeMeasure> {
        None
    }

    fn nondiff(&self, _t: f64, _x: f64) -> Differentiability {
        Differentiability::Unknown
    }

    /// Exact description of the nondifferentiability set on `[0, horizon]`.
    fn nondiff_regions(&self, _horizon: f64) -> Option<Vec<NondiffRegion>> {
        None
    }

    /// Declares one-sided derivatives everywhere (class 𝒟).
    fn in_class_d(&self) -> bool {
        false
    }

    /// `f(t, x)` does not depend on `t`.
    fn time_independent(&self) -> bool {
        false
    }

    /// Declared `|f(t,x+a) − f(t,x) − a·D^±f(t,x)| ≤ modulus · a²`-type
    /// constant for the one-sided difference quotients, when known.
    fn difference_modulus(&self) -> Option<f64> {
        None
    }
}

pub type SharedFunction = Arc<dyn PathFunction>;

/// `x ↦ exp(-1/(1-u²))` on `|u| < 1`.
fn bump_profile(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

fn bump_profile_derivative(u: f64) -> f64 {
    if u.abs() < 1.0 {
        let d = 1.0 - u * u;
        bump_profile(u) * (-2.0 * u / (d * d))
    } else {
        0.0
    }
}

/// Upper bound for `sup |ψ'|`; the true value is about 0.7984.
const BUMP_SLOPE_BOUND: f64 = 0.8;
/// Upper bound for `sup |ψ''|`; the true value is about 7.7497.
const BUMP_CURVATURE_BOUND: f64 = 7.8;

/// Registry functions. See [`builtin_library`].
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Abs,
    Relu { k: f64 },
    /// Continuous, `f(0) = 0`, slope `slopes[i]` between consecutive `kinks`.
    PiecewiseLinear { kinks: Vec<f64>, slopes: Vec<f64> },
    Square,
    Identity,
    /// `|x − k(t)|`, `k = k0` before `k_jump` and `k1` from it on.
    MovingKink { k0: f64, k1: f64, k_jump: f64 },
    /// `scale·|x|·1{t ≥ t1}`.
    ScaledStep { t1: f64, scale: f64 },
    /// `scale·t·|x|`.
    TimeRamp { scale: f64 },
    /// `amp·ψ((t−tc)/tw)·ψ((x−xc)/xw)`, compactly supported and smooth.
    Bump { tc: f64, tw: f64, xc: f64, xw: f64, amp: f64 },
    /// `x·sin(log|x|)`: Lipschitz, no one-sided derivatives at 0 (𝒟₀ but not 𝒟).
    LogOscillation,
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(","))
}

impl Builtin {
    fn moving_kink_at(k0: f64, k1: f64, k_jump: f64, t: f64) -> f64 {
        if t < k_jump {
            k0
        } else {
            k1
        }
    }

    fn pwl_segment(kinks: &[f64], x: f64, right: bool) -> usize {
        if right {
            kinks.partition_point(|&k| k <= x)
        } else {
            kinks.partition_point(|&k| k < x)
        }
    }

    fn pwl_eval(kinks: &[f64], slopes: &[f64], x: f64) -> f64 {
        // integrate the slope from 0 to x segment by segment
        let seg_of = |y: f64| kinks.partition_point(|&k| k <= y);
        let (lo, hi, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
        let mut acc = 0.0;
        let mut a = lo;
        let mut i = seg_of(lo);
        while a < hi {
            let b = if i < kinks.len() { kinks[i].min(hi) } else { hi };
            if b > a {
                acc += slopes[i] * (b - a);
                a = b;
            }
            i += 1;
        }
        sign * acc
    }

    fn bump_time_factor(&self, t: f64) -> f64 {
        match *self {
            Builtin::Bump { tc, tw, .. } => bump_profile((t - tc) / tw),
            _ => unreachable!(),
        }
    }
}

impl PathFunction for Builtin {
    fn name(&self) -> String {
        match self {
            Builtin::Abs => "abs".into(),
            Builtin::Relu { k } => format!("relu(k={k})"),
            Builtin::PiecewiseLinear { kinks, slopes } => format!(
                "piecewise_linear(kinks={},slopes={})",
                fmt_list(kinks),
                fmt_list(slopes)
            ),
            Builtin::Square => "square".into(),
            Builtin::Identity => "identity".into(),
            Builtin::MovingKink { k0, k1, k_jump } => {
                format!("moving_kink(k0={k0},k1={k1},k_jump={k_jump})")
            }
            Builtin::ScaledStep { t1, scale } => format!("scaled_step(t1={t1},scale={scale})"),
            Builtin::TimeRamp { scale } => format!("time_ramp(scale={scale})"),
            Builtin::Bump { tc, tw, xc, xw, amp } => {
                format!("bump(tc={tc},tw={tw},xc={xc},xw={xw},amp={amp})")
            }
            Builtin::LogOscillation => "log_oscillation".into(),
        }
    }

    fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Builtin::Abs => x.abs(),
            Builtin::Relu { k } => (x - k).max(0.0),
            Builtin::PiecewiseLinear { kinks, slopes } => Self::pwl_eval(kinks, slopes, x),
            Builtin::Square => x * x,
            Builtin::Identity => x,
            Builtin::MovingKink { k0, k1, k_jump } => {
                (x - Self::moving_kink_at(*k0, *k1, *k_jump, t)).abs()
            }
            Builtin::ScaledStep { t1, scale } => {
                if t >= *t1 {
                    scale * x.abs()
                } else {
                    0.0
                }
            }
            Builtin::TimeRamp { scale } => scale * t * x.abs(),
            Builtin::Bump { xc, xw, amp, .. } => {
                amp * self.bump_time_factor(t) * bump_profile((x - xc) / xw)
            }
            Builtin::LogOscillation => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.abs().ln().sin()
                }
            }
        }
    }

    fn eval_left_t(&self, t: f64, x: f64) -> f64 {
        match self {
            Builtin::MovingKink { k0, k_jump, .. } if t == *k_jump => (x - k0).abs(),
            Builtin::ScaledStep { t1, .. } if t == *t1 => 0.0,
            _ => self.eval(t, x),
        }
    }

    fn dx_left(&self, t: f64, x: f64) -> Option<f64> {
        let sgn_left = |y: f64| if y > 0.0 { 1.0 } else { -1.0 };
        Some(match self {
            Builtin::Abs => sgn_left(x),
            Builtin::Relu { k } => {
                if x > *k {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::PiecewiseLinear { kinks, slopes } => slopes[Self::pwl_segment(kinks, x, false)],
            Builtin::Square => 2.0 * x,
            Builtin::Identity => 1.0,
            Builtin::MovingKink { k0, k1, k_jump } => {
                sgn_left(x - Self::moving_kink_at(*k0, *k1, *k_jump, t))
            }
            Builtin::ScaledStep { t1, scale } => {
                if t >= *t1 {
                    scale * sgn_left(x)
                } else {
                    0.0
                }
            }
            Builtin::TimeRamp { scale } => scale * t * sgn_left(x),
            Builtin::Bump { xc, xw, amp, .. } => {
                amp * self.bump_time_factor(t) * bump_profile_derivative((x - xc) / xw) / xw
            }
            Builtin::LogOscillation => {
                if x == 0.0 {
                    return None;
                }
                let l = x.abs().ln();
                l.sin() + l.cos()
            }
        })
    }

    fn dx_right(&self, t: f64, x: f64) -> Option<f64> {
        let sgn_right = |y: f64| if y >= 0.0 { 1.0 } else { -1.0 };
        Some(match self {
            Builtin::Abs => sgn_right(x),
            Builtin::Relu { k } => {
                if x >= *k {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::PiecewiseLinear { kinks, slopes } => slopes[Self::pwl_segment(kinks, x, true)],
            Builtin::MovingKink { k0, k1, k_jump } => {
                sgn_right(x - Self::moving_kink_at(*k0, *k1, *k_jump, t))
            }
            Builtin::ScaledStep { t1, scale } => {
                if t >= *t1 {
                    scale * sgn_right(x)
                } else {
                    0.0
                }
            }
            Builtin::TimeRamp { scale } => scale * t * sgn_right(x),
            _ => return self.dx_left(t, x),
        })
    }

    fn lipschitz_bound(&self, b: &BoxDomain) -> Option<f64> {
        Some(match self {
            Builtin::Abs | Builtin::Identity | Builtin::MovingKink { .. } | Builtin::Relu { .. } => 1.0,
            Builtin::PiecewiseLinear { slopes, .. } => slopes.iter().fold(0.0, |m, s| f64::max(m, s.abs())),
            Builtin::Square => 2.0 * b.x0.abs().max(b.x1.abs()),
            Builtin::ScaledStep { scale, .. } => scale.abs(),
            Builtin::TimeRamp { scale } => (scale * b.t0).abs().max((scale * b.t1).abs()),
            Builtin::Bump { xw, amp, .. } => amp.abs() * BUMP_SLOPE_BOUND / xw,
            Builtin::LogOscillation => std::f64::consts::SQRT_2,
        })
    }

    fn time_jumps(&self) -> Vec<f64> {
        match self {
            Builtin::MovingKink { k0, k1, k_jump } if k0 != k1 => vec![*k_jump],
            Builtin::ScaledStep { t1, scale } if *scale != 0.0 => vec![*t1],
            _ => Vec::new(),
        }
    }

    fn dt_measure(&self, x: f64, t0: f64, t1: f64) -> Option<TimeMeasure> {
        if !(t0 <= t1) {
            return None;
        }
        let jump_in = |s: f64| t0 < s && s <= t1;
        Some(match self {
            Builtin::MovingKink { k_jump, .. } | Builtin::ScaledStep { t1: k_jump, .. }
                if jump_in(*k_jump) =>
            {
                let profile = self.eval(*k_jump, x) - self.eval_left_t(*k_jump, x);
                TimeMeasure {
                    signed: profile,
                    total: profile.abs(),
                }
            }
            Builtin::TimeRamp { scale } => {
                let v = scale * x.abs() * (t1 - t0);
                TimeMeasure { signed: v, total: v.abs() }
            }
            Builtin::Bump { tc, .. } => {
                // unimodal in t: the variation splits at the peak
                let (a, b) = (self.eval(t0, x), self.eval(t1, x));
                let total = if t0 < *tc && *tc < t1 {
                    let peak = self.eval(*tc, x);
                    (peak - a).abs() + (peak - b).abs()
                } else {
                    (b - a).abs()
                };
                TimeMeasure { signed: b - a, total }
            }
            _ => TimeMeasure {
                signed: 0.0,
                total: 0.0,
            },
        })
    }

    fn nondiff(&self, t: f64, x: f64) -> Differentiability {
        use Differentiability::*;
        match self {
            Builtin::LogOscillation => {
                if x == 0.0 {
                    NotDifferentiable
                } else {
                    Differentiable
                }
            }
            _ => match (self.dx_left(t, x), self.dx_right(t, x)) {
                (Some(l), Some(r)) if l != r => NotDifferentiable,
                (Some(_), Some(_)) => Differentiable,
                _ => Unknown,
            },
        }
    }

    fn nondiff_regions(&self, horizon: f64) -> Option<Vec<NondiffRegion>> {
        let line = |t0: f64, t1: f64, x: f64| NondiffRegion::Graph { t0, t1, x };
        Some(match self {
            Builtin::Abs | Builtin::LogOscillation => vec![line(0.0, horizon, 0.0)],
            Builtin::Relu { k } => vec![line(0.0, horizon, *k)],
            Builtin::PiecewiseLinear { kinks, slopes } => kinks
                .iter()
                .enumerate()
                .filter(|(i, _)| slopes[*i] != slopes[i + 1])
                .map(|(_, &k)| line(0.0, horizon, k))
                .collect(),
            Builtin::MovingKink { k0, k1, k_jump } => {
                let split = k_jump.clamp(0.0, horizon);
                let mut v = Vec::new();
                if split > 0.0 {
                    v.push(line(0.0, split, *k0));
                }
                v.push(line(split, horizon, *k1));
                v
            }
            Builtin::ScaledStep { t1, scale } if *scale != 0.0 => {
                vec![line(t1.clamp(0.0, horizon), horizon, 0.0)]
            }
            Builtin::TimeRamp { scale } if *scale != 0.0 => vec![line(0.0, horizon, 0.0)],
            _ => Vec::new(),
        })
    }

    fn in_class_d(&self) -> bool {
        !matches!(self, Builtin::LogOscillation)
    }

    fn time_independent(&self) -> bool {
        matches!(
            self,
            Builtin::Abs
                | Builtin::Relu { .. }
                | Builtin::PiecewiseLinear { .. }
                | Builtin::Square
                | Builtin::Identity
                | Builtin::LogOscillation
        )
    }

    fn difference_modulus(&self) -> Option<f64> {
        match self {
            Builtin::Square => Some(1.0),
            Builtin::Bump { xw, amp, .. } => Some(amp.abs() * BUMP_CURVATURE_BOUND / (2.0 * xw * xw)),
            Builtin::LogOscillation => None,
            _ => Some(0.0),
        }
    }
}

/// Parsed argument value of a registry expression.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgValue {
    Num(f64),
    List(Vec<f64>),
}

/// `name`, `name(1, 2)`, `name(k=0.5, list=[1,2])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CallExpr {
    pub name: String,
    pub positional: Vec<ArgValue>,
    pub named: Vec<(String, ArgValue)>,
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn parse_number(s: &str, whole: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s {
        "inf" | "+inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => s
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number '{s}' in '{whole}'")))?,
    };
    if v.is_nan() {
        return Err(Error::Config(format!("NaN argument in '{whole}'")));
    }
    Ok(v)
}

fn parse_value(s: &str, whole: &str) -> Result<ArgValue> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| Error::Config(format!("unclosed list in '{whole}'")))?;
        if inner.trim().is_empty() {
            return Ok(ArgValue::List(Vec::new()));
        }
        let items = inner
            .split(',')
            .map(|x| parse_number(x, whole))
            .collect::<Result<_>>()?;
        Ok(ArgValue::List(items))
    } else {
        parse_number(s, whole).map(ArgValue::Num)
    }
}

pub fn parse_call(expr: &str) -> Result<CallExpr> {
    let e = expr.trim();
    let (name, args) = match e.find('(') {
        Some(i) => {
            let rest = e[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::Config(format!("missing ')' in '{expr}'")))?;
            (e[..i].trim(), Some(rest))
        }
        None => (e, None),
    };
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::Config(format!("bad name in '{expr}'")));
    }
    let mut call = CallExpr {
        name: name.to_string(),
        positional: Vec::new(),
        named: Vec::new(),
    };
    if let Some(args) = args.filter(|a| !a.trim().is_empty()) {
        for part in split_top_level(args) {
            match part.split_once('=') {
                Some((k, v)) => {
                    let k = k.trim();
                    if call.named.iter().any(|(n, _)| n == k) {
                        return Err(Error::Config(format!("repeated argument '{k}' in '{expr}'")));
                    }
                    call.named.push((k.to_string(), parse_value(v, expr)?));
                }
                None => {
                    if !call.named.is_empty() {
                        return Err(Error::Config(format!(
                            "positional argument after named one in '{expr}'"
                        )));
                    }
                    call.positional.push(parse_value(part, expr)?);
                }
            }
        }
    }
    Ok(call)
}

/// Binds a call's arguments to parameter names with defaults.
pub(crate) struct Bound<'a> {
    call: &'a CallExpr,
    params: &'a [&'a str],
}

impl<'a> Bound<'a> {
    pub(crate) fn new(call: &'a CallExpr, params: &'a [&'a str]) -> Result<Self> {
        if call.positional.len() > params.len() {
            return Err(Error::Config(format!(
                "'{}' takes at most {} arguments",
                call.name,
                params.len()
            )));
        }
        for (k, _) in &call.named {
            if !params.contains(&k.as_str()) {
                return Err(Error::Config(format!("'{}' has no parameter '{k}'", call.name)));
            }
        }
        Ok(Self { call, params })
    }

    fn raw(&self, key: &str) -> Option<&'a ArgValue> {
        let pos = self.params.iter().position(|p| *p == key)?;
        if let Some(v) = self.call.positional.get(pos) {
            return Some(v);
        }
        self.call.named.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub(crate) fn num(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.raw(key) {
            Some(ArgValue::Num(v)) => Ok(*v),
            Some(ArgValue::List(_)) => Err(Error::Config(format!(
                "'{}': parameter '{key}' must be a number",
                self.call.name
            ))),
            None => default.ok_or_else(|| {
                Error::Config(format!("'{}': missing parameter '{key}'", self.call.name))
            }),
        }
    }

    pub(crate) fn list(&self, key: &str) -> Result<Vec<f64>> {
        match self.raw(key) {
            Some(ArgValue::List(v)) => Ok(v.clone()),
            Some(ArgValue::Num(v)) => Ok(vec![*v]),
            None => Err(Error::Config(format!(
                "'{}': missing parameter '{key}'",
                self.call.name
            ))),
        }
    }
}

/// Registered function names with their parameters.
pub fn builtin_library() -> Vec<(&'static str, &'static [&'static str])> {
    vec![
        ("abs", &[]),
        ("relu", &["k"]),
        ("piecewise_linear", &["kinks", "slopes"]),
        ("square", &[]),
        ("identity", &[]),
        ("moving_kink", &["k0", "k1", "k_jump"]),
        ("scaled_step", &["t1", "scale"]),
        ("time_ramp", &["scale"]),
        ("bump", &["tc", "tw", "xc", "xw", "amp"]),
        ("log_oscillation", &[]),
    ]
}

/// Parses a registry expression such as `moving_kink(k_jump=0.5)`.
pub fn parse_builtin(expr: &str) -> Result<Builtin> {
    let call = parse_call(expr)?;
    let params = builtin_library()
        .into_iter()
        .find(|(n, _)| *n == call.name)
        .map(|(_, p)| p)
        .ok_or_else(|| Error::Lookup(format!("function '{}'", call.name)))?;
    let b = Bound::new(&call, params)?;
    let positive = |name: &str, v: f64| -> Result<f64> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Config(format!("'{}': {name} must be positive", call.name)))
        }
    };
    let f = match call.name.as_str() {
        "abs" => Builtin::Abs,
        "relu" => Builtin::Relu { k: b.num("k", Some(0.0))? },
        "piecewise_linear" => {
            let kinks = b.list("kinks")?;
            let slopes = b.list("slopes")?;
            if slopes.len() != kinks.len() + 1 {
                return Err(Error::Config("piecewise_linear needs one more slope than kinks".into()));
            }
            if kinks.windows(2).any(|w| !(w[0] < w[1])) || kinks.iter().chain(&slopes).any(|v| !v.is_finite()) {
                return Err(Error::Config("piecewise_linear kinks must be finite and increasing".into()));
            }
            Builtin::PiecewiseLinear { kinks, slopes }
        }
        "square" => Builtin::Square,
        "identity" => Builtin::Identity,
        "moving_kink" => Builtin::MovingKink {
            k0: b.num("k0", Some(0.0))?,
            k1: b.num("k1", Some(1.0))?,
            k_jump: b.num("k_jump", Some(0.5))?,
        },
        "scaled_step" => Builtin::ScaledStep {
            t1: b.num("t1", Some(0.5))?,
            scale: b.num("scale", Some(1.0))?,
        },
        "time_ramp" => Builtin::TimeRamp {
            scale: b.num("scale", Some(1.0))?,
        },
        "bump" => Builtin::Bump {
            tc: b.num("tc", Some(0.5))?,
            tw: positive("tw", b.num("tw", Some(0.25))?)?,
            xc: b.num("xc", Some(0.0))?,
            xw: positive("xw", b.num("xw", Some(1.0))?)?,
            amp: b.num("amp", Some(1.0))?,
        },
        "log_oscillation" => Builtin::LogOscillation,
        _ => unreachable!(),
    };
    Ok(f)
}

pub fn parse_function(expr: &str) -> Result<SharedFunction> {
    parse_builtin(expr).map(|b| Arc::new(b) as SharedFunction)
}

/// `(f(t, x+a) − f(t, x)) / a`.
pub fn nabla_a(f: &dyn PathFunction, a: f64, t: f64, x: f64) -> Result<f64> {
    if a == 0.0 || !a.is_finite() {
        return domain(format!("finite-difference step must be nonzero, got {a}"));
    }
    Ok((f.eval(t, x + a) - f.eval(t, x)) / a)
}

/// `∇_a f − ∇_{−a} f`.
pub fn nabla_hat_a(f: &dyn PathFunction, a: f64, t: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) {
        return domain(format!("symmetric difference step must be positive, got {a}"));
    }
    Ok(nabla_a(f, a, t, x)? - nabla_a(f, -a, t, x)?)
}

pub fn default_limsup_ladder() -> Vec<f64> {
    (4..=20).map(|j| 2f64.powi(-j)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimsupTrace {
    /// Value at the finest rung.
    pub value: f64,
    /// `(|a|, max(∇_a f, ∇_{−a} f))` per rung.
    pub trace: Vec<(f64, f64)>,
    /// Whether the trace is monotone across rungs.
    pub monotone: bool,
}

/// Finite-difference limsup derivative over a ladder of step sizes.
pub fn dx_limsup(f: &dyn PathFunction, t: f64, x: f64, ladder: &[f64]) -> Result<LimsupTrace> {
    if ladder.is_empty() {
        return domain("limsup ladder is empty");
    }
    let trace = ladder
        .iter()
        .map(|&a| {
            let a = a.abs();
            Ok((a, nabla_a(f, a, t, x)?.max(nabla_a(f, -a, t, x)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    let inc = trace.windows(2).all(|w| w[1].1 >= w[0].1);
    let dec = trace.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(LimsupTrace {
        value: trace.last().unwrap().1,
        trace,
        monotone: inc || dec,
    })
}

/// The limsup-convention derivative: exact `max(D⁻f, D⁺f)` when both are
/// declared, otherwise the finest rung of the default ladder.
pub fn dx_limsup_value(f: &dyn PathFunction, t: f64, x: f64) -> f64 {
    match (f.dx_left(t, x), f.dx_right(t, x)) {
        (Some(l), Some(r)) => l.max(r),
        _ => {
            let a = *default_limsup_ladder().last().unwrap();
            let up = (f.eval(t, x + a) - f.eval(t, x)) / a;
            let down = (f.eval(t, x - a) - f.eval(t, x)) / -a;
            up.max(down)
        }
    }
}

/// `∫_{(0, T]} |d_t f(t, x)|`.
pub fn time_variation(f: &dyn PathFunction, x: f64, horizon: f64) -> Result<f64> {
    f.dt_measure(x, 0.0, horizon)
        .map(|m| m.total)
        .ok_or_else(|| Error::Unsupported(format!("'{}' declares no time measure", f.name())))
}

/// Midpoint rule for `∫_{x0}^{x1} ∫_{(0, T]} |d_t f| dx` with `n` cells.
pub fn time_variation_integral(
    f: &dyn PathFunction,
    x0: f64,
    x1: f64,
    horizon: f64,
    n: usize,
) -> Result<f64> {
    if n == 0 || !(x0 < x1) {
        return domain("need a nonempty x-range and at least one cell");
    }
    let h = (x1 - x0) / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        acc += time_variation(f, x0 + (i as f64 + 0.5) * h, horizon)?;
    }
    Ok(acc * h)
}
