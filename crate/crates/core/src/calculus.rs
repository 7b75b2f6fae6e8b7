//! Partition sums: quadratic covariation approximants, jump sums, the
//! excluded-cell statistic and left-point (Itô) sums.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::partitions::{ExclusionSet, Partition, RefinementLadder};
use crate::path_model::SamplePath;

/// Partitions with at least this many cells are summed with compensation.
pub const COMPENSATED_MIN_TERMS: usize = 1 << 14;

/// Ascending-order accumulator; Neumaier-compensated when `compensated`.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator {
    sum: f64,
    carry: f64,
    compensated: bool,
}

impl Accumulator {
    pub fn new(compensated: bool) -> Self {
        Self {
            sum: 0.0,
            carry: 0.0,
            compensated,
        }
    }

    pub fn for_terms(n: usize) -> Self {
        Self::new(n >= COMPENSATED_MIN_TERMS)
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        if self.compensated {
            let t = self.sum + x;
            if self.sum.abs() >= x.abs() {
                self.carry += (self.sum - t) + x;
            } else {
                self.carry += (x - t) + self.sum;
            }
            self.sum = t;
        } else {
            self.sum += x;
        }
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn check_pair(x: &SamplePath, y: &SamplePath, t: f64) -> Result<()> {
    if x.horizon() != y.horizon() {
        return domain(format!(
            "mismatched horizons {} and {}",
            x.horizon(),
            y.horizon()
        ));
    }
    check_t(x, t)
}

fn check_t(x: &SamplePath, t: f64) -> Result<()> {
    if !(0.0..=x.horizon()).contains(&t) {
        return domain(format!("t = {t} outside [0, {}]", x.horizon()));
    }
    Ok(())
}

/// `[X, Y]^P_t = Σ_k (X_{τ_k∧t} − X_{τ_{k−1}∧t})(Y_{τ_k∧t} − Y_{τ_{k−1}∧t})`.
pub fn qv_partition(x: &SamplePath, y: &SamplePath, p: &Partition, t: f64) -> Result<f64> {
    check_pair(x, y, t)?;
    let cuts = p.cut_times();
    let mut acc = Accumulator::for_terms(p.n_cells());
    for k in 1..cuts.len() {
        if !(cuts[k - 1] < t) {
            break;
        }
        let (a, b) = (cuts[k - 1], cuts[k].min(t));
        acc.add((x.eval_stopped(b) - x.eval_stopped(a)) * (y.eval_stopped(b) - y.eval_stopped(a)));
    }
    Ok(acc.value())
}

/// `Σ_{s ∈ S, s ≤ t} ΔX_s ΔY_s`.
pub fn jump_sum_over(x: &SamplePath, y: &SamplePath, s: &ExclusionSet, t: f64) -> Result<f64> {
    check_pair(x, y, t)?;
    let mut acc = Accumulator::for_terms(s.times().len());
    for &u in s.times().iter().take_while(|&&u| u <= t) {
        let dx = x.eval_stopped(u) - x.left_unchecked(u);
        let dy = y.eval_stopped(u) - y.left_unchecked(u);
        acc.add(dx * dy);
    }
    Ok(acc.value())
}

/// Sum of simultaneous jump products over the jump times of `x` and `y`.
pub fn jump_sum(x: &SamplePath, y: &SamplePath, t: f64, threshold: f64) -> Result<f64> {
    let s = ExclusionSet::from_jumps(&[x, y], threshold, &[]);
    jump_sum_over(x, y, &s, t)
}

/// `Σ_{k ∈ [P,S,t]} δ_k X δ_k Y`.
pub fn included_covariation(
    x: &SamplePath,
    y: &SamplePath,
    p: &Partition,
    s: &ExclusionSet,
    t: f64,
) -> Result<f64> {
    included_sum(x, y, p, s, t, |dx, dy| dx * dy)
}

/// `Σ_{k ∈ [P,S,t]} |δ_k X δ_k Y|`, the cross-sum diagnostic for covariation
/// with a zero-continuous-variation process.
pub fn included_abs_covariation(
    x: &SamplePath,
    y: &SamplePath,
    p: &Partition,
    s: &ExclusionSet,
    t: f64,
) -> Result<f64> {
    included_sum(x, y, p, s, t, |dx, dy| (dx * dy).abs())
}

/// `Σ_{k ∈ [P,S,t]} (δ_k X)^2`; vanishes in the limit exactly for
/// zero-continuous-quadratic-variation processes.
pub fn zcqv_statistic(x: &SamplePath, p: &Partition, s: &ExclusionSet, t: f64) -> Result<f64> {
    included_sum(x, x, p, s, t, |dx, _| dx * dx)
}

fn included_sum(
    x: &SamplePath,
    y: &SamplePath,
    p: &Partition,
    s: &ExclusionSet,
    t: f64,
    term: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    check_pair(x, y, t)?;
    let cuts = p.cut_times();
    let mut acc = Accumulator::for_terms(p.n_cells());
    for k in crate::partitions::index_set(p, s, t) {
        let dx = x.eval_stopped(cuts[k]) - x.eval_stopped(cuts[k - 1]);
        let dy = y.eval_stopped(cuts[k]) - y.eval_stopped(cuts[k - 1]);
        acc.add(term(dx, dy));
    }
    Ok(acc.value())
}

/// Left-point sum `Σ_k η_{k−1} (Y_{τ_k∧t} − Y_{τ_{k−1}∧t})`; `integrand[k-1]`
/// is the integrand on cell `k`.
pub fn ito_integral(integrand: &[f64], y: &SamplePath, p: &Partition, t: f64) -> Result<f64> {
    check_integrand(integrand, p)?;
    check_t(y, t)?;
    let cuts = p.cut_times();
    let mut acc = Accumulator::for_terms(p.n_cells());
    for k in 1..cuts.len() {
        if !(cuts[k - 1] < t) {
            break;
        }
        let (a, b) = (cuts[k - 1], cuts[k].min(t));
        acc.add(integrand[k - 1] * (y.eval_stopped(b) - y.eval_stopped(a)));
    }
    Ok(acc.value())
}

/// Running left-point sums at every cut time (entry 0 is zero).
pub fn ito_integral_path(integrand: &[f64], y: &SamplePath, p: &Partition) -> Result<Vec<f64>> {
    check_integrand(integrand, p)?;
    let cuts = p.cut_times();
    let mut acc = Accumulator::for_terms(p.n_cells());
    let mut out = Vec::with_capacity(cuts.len());
    out.push(0.0);
    for k in 1..cuts.len() {
        let (a, b) = (cuts[k - 1], cuts[k]);
        acc.add(integrand[k - 1] * (y.eval_stopped(b) - y.eval_stopped(a)));
        out.push(acc.value());
    }
    Ok(out)
}

fn check_integrand(integrand: &[f64], p: &Partition) -> Result<()> {
    if integrand.len() != p.n_cells() {
        return domain(format!(
            "integrand has {} values but the partition has {} cells",
            integrand.len(),
            p.n_cells()
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariationRow {
    pub level: u32,
    pub mesh: f64,
    pub t: f64,
    pub full_sum: f64,
    pub jump_sum: f64,
    pub continuous_part: f64,
    pub zcqv_stat: f64,
}

/// Per-level partition statistics of one path pair over a grid of times.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariationReport {
    pub rows: Vec<CovariationRow>,
    pub t_grid: Vec<f64>,
    pub levels: Vec<u32>,
}

impl CovariationReport {
    pub fn level_rows(&self, level: u32) -> impl Iterator<Item = &CovariationRow> {
        self.rows.iter().filter(move |r| r.level == level)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Cellwise mean over reports sharing levels and times.
    pub fn mean(reports: &[CovariationReport]) -> Result<CovariationReport> {
        let Some(first) = reports.first() else {
            return domain("cannot average zero reports");
        };
        if reports
            .iter()
            .any(|r| r.rows.len() != first.rows.len() || r.t_grid != first.t_grid)
        {
            return domain("reports have different shapes");
        }
        let n = reports.len() as f64;
        let rows = (0..first.rows.len())
            .map(|i| {
                let mut fs = 0.0;
                let mut js = 0.0;
                let mut cp = 0.0;
                let mut zs = 0.0;
                for r in reports {
                    fs += r.rows[i].full_sum;
                    js += r.rows[i].jump_sum;
                    cp += r.rows[i].continuous_part;
                    zs += r.rows[i].zcqv_stat;
                }
                CovariationRow {
                    full_sum: fs / n,
                    jump_sum: js / n,
                    continuous_part: cp / n,
                    zcqv_stat: zs / n,
                    ..first.rows[i].clone()
                }
            })
            .collect();
        Ok(CovariationReport {
            rows,
            t_grid: first.t_grid.clone(),
            levels: first.levels.clone(),
        })
    }
}

/// `t_grid` equally spaced points on `(0, horizon]`.
pub fn uniform_t_grid(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

/// Full sum, jump sum over `s`, their difference and the included-cell sum,
/// per ladder level and per time in `t_grid` (sorted, inside the horizon).
pub fn covariation_ladder(
    x: &SamplePath,
    y: &SamplePath,
    ladder: &RefinementLadder,
    s: &ExclusionSet,
    t_grid: &[f64],
) -> Result<CovariationReport> {
    if t_grid.is_empty() {
        return domain("evaluation grid is empty");
    }
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return domain("evaluation grid must be sorted");
    }
    for &t in t_grid {
        check_pair(x, y, t)?;
    }
    let jump_times = s.times();
    let mut rows = Vec::with_capacity(ladder.len() * t_grid.len());
    for (level, p) in ladder.iter() {
        let cuts = p.cut_times();
        let increments: Vec<(f64, f64)> = cuts
            .windows(2)
            .map(|w| {
                (
                    x.eval_stopped(w[1]) - x.eval_stopped(w[0]),
                    y.eval_stopped(w[1]) - y.eval_stopped(w[0]),
                )
            })
            .collect();

        let excluded: Vec<bool> = cuts.windows(2).map(|w| s.meets(w[0], w[1])).collect();
        let mut full = Accumulator::for_terms(p.n_cells());
        let mut included = Accumulator::for_terms(p.n_cells());
        let mut jumps = Accumulator::for_terms(jump_times.len());
        let (mut k, mut kz, mut j) = (1usize, 1usize, 0usize);
        for &t in t_grid {
            // cells inside [0, t]
            while k < cuts.len() && cuts[k] <= t {
                let (dx, dy) = increments[k - 1];
                full.add(dx * dy);
                k += 1;
            }
            // cells of [P, S, t] need tau_k < t strictly
            while kz < cuts.len() && cuts[kz] < t {
                if !excluded[kz - 1] {
                    let (dx, dy) = increments[kz - 1];
                    included.add(dx * dy);
                }
                kz += 1;
            }
            let mut full_t = full;
            if k < cuts.len() && cuts[k - 1] < t {
                let a = cuts[k - 1];
                full_t.add((x.eval_stopped(t) - x.eval_stopped(a)) * (y.eval_stopped(t) - y.eval_stopped(a)));
            }
            while j < jump_times.len() && jump_times[j] <= t {
                let u = jump_times[j];
                jumps.add((x.eval_stopped(u) - x.left_unchecked(u)) * (y.eval_stopped(u) - y.left_unchecked(u)));
                j += 1;
            }
            let full_sum = full_t.value();
            let jump_sum = jumps.value();
            rows.push(CovariationRow {
                level,
                mesh: p.mesh(),
                t,
                full_sum,
                jump_sum,
                continuous_part: full_sum - jump_sum,
                zcqv_stat: included.value(),
            });
        }
    }
    Ok(CovariationReport {
        rows,
        t_grid: t_grid.to_vec(),
        levels: ladder.levels().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UcpLevel {
    pub level: u32,
    pub mesh: f64,
    /// Fraction of paths with `sup_t |[X,Y]^P_t − reference_t| > eps`,
    /// reference being the finest level.
    pub exceedance: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleCovariation {
    pub reports: Vec<CovariationReport>,
    pub ucp: Vec<UcpLevel>,
    pub eps: f64,
}

/// [`covariation_ladder`] for every path pair, computed in parallel and
/// merged in path order, plus the ucp exceedance summary.
pub fn ensemble_covariation(
    xs: &[SamplePath],
    ys: &[SamplePath],
    ladder: &RefinementLadder,
    exclusions: &[ExclusionSet],
    t_grid: &[f64],
    eps: f64,
) -> Result<EnsembleCovariation> {
    if xs.len() != ys.len() || xs.len() != exclusions.len() {
        return domain("need one Y path and one exclusion set per X path");
    }
    if xs.is_empty() {
        return domain("empty ensemble");
    }
    let reports = xs
        .par_iter()
        .zip(ys.par_iter())
        .zip(exclusions.par_iter())
        .map(|((x, y), s)| covariation_ladder(x, y, ladder, s, t_grid))
        .collect::<Result<Vec<_>>>()?;
    let finest = *ladder.levels().last().unwrap();
    let ucp = ladder
        .iter()
        .map(|(level, p)| {
            let exceed = reports
                .iter()
                .filter(|r| {
                    let sup = r
                        .level_rows(level)
                        .zip(r.level_rows(finest))
                        .map(|(a, b)| (a.full_sum - b.full_sum).abs())
                        .fold(0.0, f64::max);
                    sup > eps
                })
                .count();
            UcpLevel {
                level,
                mesh: p.mesh(),
                exceedance: exceed as f64 / reports.len() as f64,
            }
        })
        .collect();
    Ok(EnsembleCovariation { reports, ucp, eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::dyadic_partition;
    use proptest::prelude::*;

    fn path(times: &[f64], values: &[f64]) -> SamplePath {
        SamplePath::unmarked(times.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn constant_paths_have_zero_covariation() {
        let x = SamplePath::constant(SamplePath::uniform_grid(1.0, 8), 2.0).unwrap();
        let p = dyadic_partition(1.0, 3);
        assert_eq!(qv_partition(&x, &x, &p, 1.0).unwrap(), 0.0);
        assert_eq!(zcqv_statistic(&x, &p, &ExclusionSet::empty(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn direct_arithmetic_example() {
        let x = path(&[0.0, 1.0, 2.0], &[0.0, 1.0, 3.0]);
        let y = path(&[0.0, 1.0, 2.0], &[0.0, 2.0, 5.0]);
        let p = Partition::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(qv_partition(&x, &y, &p, 2.0).unwrap(), 8.0);
    }

    #[test]
    fn stopped_values_inside_a_cell() {
        let x = path(&[0.0, 0.5, 1.0, 2.0], &[0.0, 1.0, 3.0, 4.0]);
        let p = Partition::new(vec![0.0, 2.0]).unwrap();
        // X_{1.5 ∧ ...} = 3, X_0 = 0
        assert_eq!(qv_partition(&x, &x, &p, 1.5).unwrap(), 9.0);
        assert_eq!(qv_partition(&x, &x, &p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_horizons_are_rejected() {
        let x = path(&[0.0, 1.0], &[0.0, 1.0]);
        let y = path(&[0.0, 2.0], &[0.0, 1.0]);
        let p = Partition::new(vec![0.0, 1.0]).unwrap();
        assert!(qv_partition(&x, &y, &p, 1.0).is_err());
    }

    #[test]
    fn jump_sum_examples() {
        let x = SamplePath::new(vec![0.0, 0.5, 1.0], vec![0.0, 2.0, 2.0], vec![false, true, false]).unwrap();
        let y = SamplePath::new(vec![0.0, 0.5, 1.0], vec![1.0, 4.0, 4.0], vec![false, true, false]).unwrap();
        assert_eq!(jump_sum(&x, &y, 1.0, f64::INFINITY).unwrap(), 6.0);
        assert_eq!(jump_sum(&x, &y, 0.4, f64::INFINITY).unwrap(), 0.0);

        let z = SamplePath::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1.0], vec![false, false, true]).unwrap();
        assert_eq!(jump_sum(&x, &z, 1.0, f64::INFINITY).unwrap(), 0.0);

        let smooth = path(&[0.0, 0.5, 1.0], &[0.0, 0.01, 0.02]);
        assert_eq!(jump_sum(&smooth, &smooth, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn ito_sums_telescope_and_scale() {
        let y = path(&[0.0, 0.25, 0.5, 0.75, 1.0], &[1.0, 2.0, -1.0, 0.5, 3.0]);
        let p = dyadic_partition(1.0, 2);
        assert_eq!(ito_integral(&[1.0; 4], &y, &p, 1.0).unwrap(), 2.0);
        assert_eq!(ito_integral(&[3.0; 4], &y, &p, 1.0).unwrap(), 6.0);
        assert_eq!(ito_integral(&[1.0; 4], &y, &p, 0.6).unwrap(), -2.0);
        assert!(ito_integral(&[1.0; 3], &y, &p, 1.0).is_err());
        let running = ito_integral_path(&[1.0; 4], &y, &p).unwrap();
        assert_eq!(running, vec![0.0, 1.0, -2.0, -0.5, 2.0]);
    }

    #[test]
    fn compensated_accumulation_beats_plain() {
        let mut plain = Accumulator::new(false);
        let mut comp = Accumulator::new(true);
        plain.add(1.0);
        comp.add(1.0);
        for _ in 0..10_000 {
            plain.add(1e-16);
            comp.add(1e-16);
        }
        assert_eq!(plain.value(), 1.0);
        assert!((comp.value() - (1.0 + 1e-12)).abs() < 1e-20);
    }

    #[test]
    fn ladder_report_matches_direct_sums() {
        let times = SamplePath::uniform_grid(1.0, 64);
        let xv: Vec<f64> = (0..=64).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let yv: Vec<f64> = (0..=64).map(|i| ((i * 13) % 7) as f64).collect();
        let x = SamplePath::unmarked(times.clone(), xv).unwrap();
        let y = SamplePath::unmarked(times, yv).unwrap();
        let ladder = RefinementLadder::dyadic(1.0, 2, 6).unwrap();
        let s = ExclusionSet::new(vec![0.3, 0.71]).unwrap();
        let grid = uniform_t_grid(1.0, 10);
        let rep = covariation_ladder(&x, &y, &ladder, &s, &grid).unwrap();
        for r in &rep.rows {
            let p = dyadic_partition(1.0, r.level);
            assert_eq!(r.full_sum, qv_partition(&x, &y, &p, r.t).unwrap());
            assert_eq!(r.zcqv_stat, included_covariation(&x, &y, &p, &s, r.t).unwrap());
            assert_eq!(r.jump_sum, jump_sum_over(&x, &y, &s, r.t).unwrap());
        }
    }

    fn int_path() -> impl Strategy<Value = (SamplePath, SamplePath)> {
        prop::collection::vec((-50i32..50, -50i32..50), 2..65).prop_map(|v| {
            let n = v.len() - 1;
            let times = SamplePath::uniform_grid(1.0, n);
            let xs = v.iter().map(|p| p.0 as f64).collect();
            let ys = v.iter().map(|p| p.1 as f64).collect();
            (
                SamplePath::unmarked(times.clone(), xs).unwrap(),
                SamplePath::unmarked(times, ys).unwrap(),
            )
        })
    }

    proptest! {
        #[test]
        fn polarization_and_bilinearity_are_exact_on_integer_paths(
            (x, y) in int_path(), a in -7i32..7, b in -7i32..7, level in 0u32..7, t in 0.0f64..1.0,
        ) {
            let p = dyadic_partition(1.0, level);
            let xy = qv_partition(&x, &y, &p, t).unwrap();
            let sum = x.add(&y).unwrap();
            let lhs = qv_partition(&sum, &sum, &p, t).unwrap()
                - qv_partition(&x, &x, &p, t).unwrap()
                - qv_partition(&y, &y, &p, t).unwrap();
            prop_assert_eq!(lhs, 2.0 * xy);
            let scaled = qv_partition(&x.scale(a as f64), &y.scale(b as f64), &p, t).unwrap();
            prop_assert_eq!(scaled, (a * b) as f64 * xy);
        }

        #[test]
        fn quadratic_variation_is_nonnegative((x, _y) in int_path(), level in 0u32..8, t in 0.0f64..1.0) {
            let p = dyadic_partition(1.0, level);
            prop_assert!(qv_partition(&x, &x, &p, t).unwrap() >= 0.0);
        }

        #[test]
        fn full_sum_splits_into_included_and_excluded_cells(
            (x, y) in int_path(),
            ex in prop::collection::vec(0.0f64..1.0, 0..5),
            level in 0u32..7,
        ) {
            let p = dyadic_partition(1.0, level);
            let s = ExclusionSet::new(ex).unwrap();
            let cuts = p.cut_times();
            let t = 1.0;
            let included = included_covariation(&x, &y, &p, &s, t).unwrap();
            let kept = crate::partitions::index_set(&p, &s, 1.0);
            let mut excluded = 0.0;
            for k in 1..cuts.len() {
                if !kept.contains(&k) {
                    excluded += (x.eval_stopped(cuts[k]) - x.eval_stopped(cuts[k-1]))
                        * (y.eval_stopped(cuts[k]) - y.eval_stopped(cuts[k-1]));
                }
            }
            prop_assert_eq!(included + excluded, qv_partition(&x, &y, &p, t).unwrap());
        }
    }
}
