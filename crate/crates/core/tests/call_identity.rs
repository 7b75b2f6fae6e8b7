use pathwise::call_identity::*;
use pathwise::function_space::{BoxDomain, Builtin};
use pathwise::generators::{generate, GeneratorKind, GeneratorSpec};
use pathwise::path_model::{PathEnsemble, SamplePath};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    return (x, 2.0 / ((1.0 - x * x) * dp * dp));
                }
            }
        })
        .collect()
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    gauss_legendre(40).iter().map(|&(x, w)| w * h * f(m + h * x)).sum()
}

fn bachelier(t: f64, x: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let s = t.sqrt();
    s * n.pdf(x / s) - x * (1.0 - n.cdf(x / s))
}

fn brownian(n_steps: usize, n_paths: usize, seed: u64) -> PathEnsemble {
    let spec = GeneratorSpec {
        n_steps,
        seed,
        ..GeneratorSpec::new(GeneratorKind::Brownian)
    };
    generate(&spec, n_paths).unwrap()
}

#[test]
fn quadrature_oracle_is_sane() {
    // ∫_0^1 x^7 dx and the Bachelier value at the money
    assert!((integrate(|x| x.powi(7), 0.0, 1.0) - 0.125).abs() < 1e-14);
    assert!((bachelier(1.0, 0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
}

#[test]
fn brownian_surface_matches_bachelier() {
    let e = brownian(64, 10_000, 11);
    let s = estimate_call_surface(&e, &[0.25, 0.5, 1.0], &uniform_grid(-2.0, 2.0, 8)).unwrap();
    for (i, &t) in s.t_grid.iter().enumerate() {
        for (j, &x) in s.x_grid.iter().enumerate() {
            let err = (s.values[i][j] - bachelier(t, x)).abs();
            // tail values below 1/N are unresolvable: no sample reaches them
            assert!(err <= 4.0 * s.stderr[i][j] + 1.0 / e.len() as f64, "t={t} x={x} err={err}");
        }
    }
    // vanishes beyond the largest sample
    let top = e.paths.iter().map(|p| p.values().iter().cloned().fold(f64::MIN, f64::max)).fold(f64::MIN, f64::max);
    let far = estimate_call_surface(&e, &[0.5, 1.0], &[top, top + 1.0]).unwrap();
    assert!(far.values.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn surface_structure() {
    let e = brownian(128, 2_000, 5);
    let tg = SamplePath::uniform_grid(1.0, 128);
    let s = estimate_call_surface(&e, &tg, &uniform_grid(-3.0, 3.0, 96)).unwrap();
    assert!(s.convexity_defect() <= 8.0 * f64::EPSILON, "{}", s.convexity_defect());
    for (i, row) in s.values.iter().enumerate() {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!(row.windows(2).all(|w| w[1] <= w[0]));
        let mean: f64 = e.paths.iter().map(|p| p.eval(tg[i]).unwrap()).sum::<f64>() / e.len() as f64;
        for (j, &x) in s.x_grid.iter().enumerate() {
            assert!(row[j] >= mean - x - 3.0 * s.stderr[i][j] - 1e-12);
        }
    }
    let mono = monotonicity_check(&s, drift_variation_on(&e, &tg).as_deref()).unwrap();
    assert!(mono.pass, "{mono:?}");
    let skipped = monotonicity_check(&s, None).unwrap();
    assert!(skipped.skipped);
}

#[test]
fn compound_poisson_martingale_is_monotone() {
    let spec = GeneratorSpec {
        n_steps: 256,
        jump_rate: 4.0,
        seed: 9,
        ..GeneratorSpec::new(GeneratorKind::CompoundPoisson)
    };
    let e = generate(&spec, 4_000).unwrap();
    let tg = SamplePath::uniform_grid(1.0, 64);
    let s = estimate_call_surface(&e, &tg, &uniform_grid(-3.0, 3.0, 24)).unwrap();
    let mono = monotonicity_check(&s, drift_variation_on(&e, &tg).as_deref()).unwrap();
    assert!(mono.pass && !mono.skipped, "{mono:?}");
}

#[test]
fn identity_on_brownian_box() {
    let n = 256;
    let e = brownian(n, 10_000, 2025);
    let tg = SamplePath::uniform_grid(1.0, n);
    let s = estimate_call_surface(&e, &tg, &uniform_grid(-2.5, 2.5, 160)).unwrap();
    let th = BoxIndicator::new(0.0, 1.0, -1.0, 1.0, 1.0).unwrap();
    let r = call_surface_identity_check(&e, &th, &s).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.rhs_drift_term, 0.0);
    assert_eq!(r.rhs_jump_term, 0.0);
    assert!((r.lhs - r.lhs_from_paths).abs() < 1e-10);

    let oracle_lhs = integrate(|x| bachelier(1.0, x) - (-x).max(0.0), -1.0, 0.0)
        + integrate(|x| bachelier(1.0, x), 0.0, 1.0);
    assert!((r.lhs - oracle_lhs).abs() <= 3.0 * r.stderr.max(1e-3) + r.budget, "{} vs {oracle_lhs}", r.lhs);

    let n01 = Normal::new(0.0, 1.0).unwrap();
    let half_occupation = 0.5 * integrate(|t| 2.0 * n01.cdf(1.0 / t.sqrt()) - 1.0, 0.0, 1.0);
    assert!((r.rhs_qv_term - half_occupation).abs() <= 3.0 * r.stderr + r.budget);
    assert!((oracle_lhs - half_occupation).abs() < 1e-6);

    // independent occupation-time Monte Carlo on a finer grid
    let fine = brownian(1024, 2_000, 77);
    let occ: f64 = fine
        .paths
        .iter()
        .map(|p| p.values()[..1024].iter().filter(|v| v.abs() <= 1.0).count() as f64 / 1024.0)
        .sum::<f64>()
        / fine.len() as f64;
    assert!((0.5 * occ - half_occupation).abs() < 0.01, "{occ}");
}

/// Box indicator that returns garbage outside its declared support.
struct Leaky(BoxIndicator, f64);

impl TestFunction for Leaky {
    fn eval(&self, t: f64, x: f64) -> f64 {
        if self.0.area.contains(t, x) { self.0.height } else { self.1 }
    }
    fn support(&self) -> BoxDomain {
        self.0.area
    }
    fn bound(&self) -> f64 {
        self.0.height
    }
    fn time_variation_bound(&self) -> f64 {
        2.0 * self.0.height
    }
}

#[test]
fn support_discipline_and_linearity() {
    let e = brownian(128, 1_000, 3);
    let tg = SamplePath::uniform_grid(1.0, 128);
    let s = estimate_call_surface(&e, &tg, &uniform_grid(-2.0, 2.0, 64)).unwrap();
    let a = BoxIndicator::new(0.0, 0.5, -1.0, 0.5, 1.0).unwrap();
    let clean = call_surface_identity_check(&e, &Leaky(a, 0.0), &s).unwrap();
    let dirty = call_surface_identity_check(&e, &Leaky(a, 7.5), &s).unwrap();
    assert!((clean.lhs - dirty.lhs).abs() < 1e-3 && (clean.rhs() - dirty.rhs()).abs() < 1e-3);
    let exact = call_surface_identity_check(&e, &a, &s).unwrap();
    assert!((clean.lhs - exact.lhs).abs() < 1e-12);

    let b = SmoothBump { tc: 0.6, tw: 0.3, xc: 0.2, xw: 0.8, amp: 3.0 };
    let ra = call_surface_identity_check(&e, &a, &s).unwrap();
    let rb = call_surface_identity_check(&e, &b, &s).unwrap();
    let sum = SumTest(vec![Box::new(a), Box::new(b)]);
    let rs = call_surface_identity_check(&e, &sum, &s).unwrap();
    assert!((rs.lhs - ra.lhs - rb.lhs).abs() < 1e-10);
    assert!((rs.rhs() - ra.rhs() - rb.rhs()).abs() < 1e-10);
    assert!(ra.pass && rb.pass && rs.pass, "{ra:?} {rb:?} {rs:?}");
}

#[test]
fn refinement_changes_lhs_within_budget() {
    let e = brownian(256, 2_000, 13);
    let th = BoxIndicator::new(0.0, 1.0, -1.0, 1.0, 1.0).unwrap();
    let coarse_s = estimate_call_surface(&e, &SamplePath::uniform_grid(1.0, 128), &uniform_grid(-2.0, 2.0, 64)).unwrap();
    let fine_s = estimate_call_surface(&e, &SamplePath::uniform_grid(1.0, 256), &uniform_grid(-2.0, 2.0, 128)).unwrap();
    let coarse = call_surface_identity_check(&e, &th, &coarse_s).unwrap();
    let fine = call_surface_identity_check(&e, &th, &fine_s).unwrap();
    assert!((coarse.lhs - fine.lhs).abs() <= coarse.budget, "{} {} {}", coarse.lhs, fine.lhs, coarse.budget);
}

#[test]
fn nondifferentiability_identity() {
    let e = brownian(256, 2_000, 21);
    let tg = SamplePath::uniform_grid(1.0, 256);
    let s = estimate_call_surface(&e, &tg, &uniform_grid(-2.0, 2.0, 128)).unwrap();
    let abs = nondiff_identity_check(&e, &Builtin::Abs, &s).unwrap();
    assert!(abs.pass && abs.lhs <= abs.budget && abs.rhs <= abs.budget, "{abs:?}");
    let sq = nondiff_identity_check(&e, &Builtin::Square, &s).unwrap();
    assert_eq!((sq.lhs, sq.rhs), (0.0, 0.0));
}

#[test]
fn surface_is_worker_independent() {
    let e = brownian(64, 700, 4);
    let tg = SamplePath::uniform_grid(1.0, 64);
    let xg = uniform_grid(-1.0, 1.0, 16);
    let run = |w| {
        rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap().install(|| {
            let mut buf = Vec::new();
            estimate_call_surface(&e, &tg, &xg).unwrap().write_csv(&mut buf).unwrap();
            buf
        })
    };
    assert_eq!(run(1), run(8));
}
