//! Acceptance checks at their stated tolerances and time budgets. Prints one
//! PASS/FAIL line per check and exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use locuslab::field::{clip_polylines, directed_hausdorff, hausdorff, phase_level_scan, BBox, Polyline};
use locuslab::rational::wrapped_residual;
use locuslab::report::{sweep, sweep_json, Command, Input, RunConfig, SweepConfig};
use locuslab::smale::{critical_points, extremal_search, limit_at_critical_point, smale_quotient, SmaleCase};
use locuslab::tracer::{trace_all, verify_monotone_gain_near_saddles, Terminus, TraceOptions};
use locuslab::{Polynomial, RationalMap};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Polynomial {
    loop {
        let coeffs: Vec<Complex64> = (0..=degree).map(|_| random_complex(rng)).collect();
        if coeffs[degree].norm() > 1e-3 {
            return Polynomial::new(coeffs);
        }
    }
}

/// `Σ a_k s^k` with explicit powers, independent of Horner.
fn naive_eval(p: &Polynomial, s: Complex64) -> Complex64 {
    p.coeffs().iter().enumerate().map(|(k, a)| a * s.powu(k as u32)).sum()
}

fn naive_derivative_eval(p: &Polynomial, s: Complex64) -> Complex64 {
    p.coeffs()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, a)| a * k as f64 * s.powu(k as u32 - 1))
        .sum()
}

/// `|f(s) − f(θ)| / (|s − θ| |f'(s)|)` straight from the definition.
fn direct_quotient(f: &Polynomial, s: Complex64, theta: Complex64) -> f64 {
    (naive_eval(f, s) - naive_eval(f, theta)).norm() / ((s - theta).norm() * naive_derivative_eval(f, s).norm())
}

fn monomial_minus_linear(d: usize) -> Polynomial {
    let mut coeffs = vec![c(0.0, 0.0); d + 1];
    coeffs[1] = c(-(d as f64), 0.0);
    coeffs[d] = c(1.0, 0.0);
    Polynomial::new(coeffs)
}

fn divided_difference_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let degree = rng.gen_range(1..=8);
        let f = random_poly(&mut rng, degree);
        let theta = random_complex(&mut rng) * 2.0;
        let q = f.divided_difference(theta);
        for _ in 0..20 {
            let s = random_complex(&mut rng) * 2.0;
            let fs = naive_eval(&f, s);
            let lhs = fs - naive_eval(&f, theta) - (s - theta) * q.eval(s);
            worst = worst.max(lhs.norm() / (1.0 + fs.norm()));
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max scaled residual {worst:.3e} (limit 1e-10)"),
    }
}

fn random_map(rng: &mut ChaCha8Rng, max_degree: usize) -> RationalMap {
    let dn = rng.gen_range(0..=max_degree);
    let dd = rng.gen_range(1..=max_degree);
    RationalMap::new(random_poly(rng, dn), random_poly(rng, dd)).unwrap()
}

fn phase_gradient_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut points = 0;
    while points < 1000 {
        let w = random_map(&mut rng, 6);
        let scale = w.scene_scale();
        let singular: Vec<Complex64> = w
            .zeros()
            .iter()
            .map(|z| z.value)
            .chain(w.poles().iter().map(|p| p.value))
            .chain(w.saddles().iter().copied())
            .collect();
        let mut taken = 0;
        while taken < 10 {
            let s = random_complex(&mut rng) * 2.0 * scale;
            if singular.iter().any(|&p| (p - s).norm() < 0.02 * scale) {
                continue;
            }
            let ph = |z: Complex64| w.phase(z).unwrap();
            let fd_sigma = wrapped_residual(ph(s + h), ph(s - h)) / (2.0 * h);
            let fd_t = wrapped_residual(ph(s + c(0.0, h)), ph(s - c(0.0, h))) / (2.0 * h);
            let l = w.log_derivative(s).unwrap();
            let (an_sigma, an_t) = (l.im, l.re);
            let g = w.phase_gradient(s).unwrap();
            assert_eq!((g.d_sigma, g.d_t), (an_sigma, an_t));
            let err = (fd_sigma - an_sigma).hypot(fd_t - an_t) / an_sigma.hypot(an_t);
            worst = worst.max(err);
            taken += 1;
        }
        points += taken;
    }
    Outcome {
        pass: worst <= 1e-5,
        detail: format!("{points} points, max relative error {worst:.3e} (limit 1e-5)"),
    }
}

fn tracer_closed_form() -> Outcome {
    let w = RationalMap::new(Polynomial::from_real(&[-1.0, 1.0]), Polynomial::from_real(&[1.0, 1.0])).unwrap();
    let opts = TraceOptions::for_map(&w);
    let traces = trace_all(&w, FRAC_PI_2, &opts).unwrap();
    if traces.len() != 1 {
        return Outcome {
            pass: false,
            detail: format!("expected one locus, got {}", traces.len()),
        };
    }
    let t = &traces[0];
    let deviation = t.points.iter().map(|p| (p.s.norm() - 1.0).abs()).fold(0.0f64, f64::max);
    let upper = t.points.iter().all(|p| p.s.im >= 0.0);
    let first = t.points[0];
    let last = *t.points.last().unwrap();
    let start = (first.s - c(-1.0, 0.0)).norm();
    let end = (last.s - c(1.0, 0.0)).norm();
    let reached = matches!(t.terminus, Terminus::Zero { .. });
    Outcome {
        pass: deviation <= 1e-6 && upper && start <= 1e-3 && end <= 1e-3 && last.gain >= 1e6 && reached,
        detail: format!(
            "max |s|-1 {deviation:.2e}, upper {upper}, start {start:.1e} from -1, end {end:.1e} from +1, final gain {:.2e}",
            last.gain
        ),
    }
}

struct OracleRun {
    map: RationalMap,
    traces: Vec<locuslab::tracer::LocusTrace>,
    singular_radius: f64,
}

fn tracer_vs_grid(runs: &mut Vec<OracleRun>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1024;
    let mut worst_cells = 0.0f64;
    let mut worst_single = 0.0f64;
    let mut total = 0;
    for _ in 0..10 {
        let w = random_map(&mut rng, 5);
        let alpha = rng.gen_range(-PI..PI);
        let scale = w.scene_scale();
        let grid_box = BBox::centered(c(0.0, 0.0), 2.0 * scale);
        // Traces run in a wider box so loci that leave and re-enter the grid
        // box are followed through; they are clipped before comparison.
        let opts = TraceOptions::for_map(&w).with_bbox(BBox::centered(c(0.0, 0.0), 50.0 * scale));
        let traces = trace_all(&w, alpha, &opts).unwrap();
        let lines: Vec<Polyline> = traces.iter().map(|t| t.polyline()).collect();
        let clipped = clip_polylines(&lines, &grid_box);
        let oracle = phase_level_scan(&w, alpha, grid_box, n, n);
        let cell = grid_box.width() / (n - 1) as f64;
        worst_cells = worst_cells.max(hausdorff(&clipped, &oracle) / cell);
        for line in &lines {
            let own = clip_polylines(std::slice::from_ref(line), &grid_box);
            worst_single = worst_single.max(directed_hausdorff(&own, &oracle) / cell);
        }
        total += traces.len();
        runs.push(OracleRun {
            map: w,
            traces,
            singular_radius: opts.singular_radius,
        });
    }
    Outcome {
        pass: worst_cells <= 2.0 && worst_single <= 2.0,
        detail: format!(
            "10 maps, {total} loci; symmetric distance {worst_cells:.3} cells, per-locus {worst_single:.3} cells (limit 2)"
        ),
    }
}

fn gain_monotonicity(runs: &[OracleRun]) -> Outcome {
    let (mut annotated, mut unannotated, mut traces) = (0, 0, 0);
    for run in runs {
        for t in &run.traces {
            let report = verify_monotone_gain_near_saddles(t, &run.map, run.singular_radius);
            unannotated += report.unannotated();
            annotated += report.violation_count - report.unannotated();
            traces += 1;
        }
    }
    Outcome {
        pass: traces > 0 && unannotated == 0,
        detail: format!("{traces} loci, {unannotated} unannotated violations, {annotated} near saddles"),
    }
}

fn quotient_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_monomial = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for d in 2..=8usize {
        let f = Polynomial::monomial(c(1.0, 0.0), d);
        let expected = 1.0 / d as f64;
        for _ in 0..100 {
            let s = random_complex(&mut rng) * 2.0;
            let q = smale_quotient(&f, s, c(0.0, 0.0));
            worst_monomial = worst_monomial.max((q - expected).abs() / expected);
            let direct = direct_quotient(&f, s, c(0.0, 0.0));
            worst_oracle = worst_oracle.max((direct - expected).abs() / expected);
        }
    }
    let mut worst_shifted = 0.0f64;
    let mut counts_ok = true;
    for d in 2..=8usize {
        let f = monomial_minus_linear(d);
        let expected = (d - 1) as f64 / d as f64;
        let found = critical_points(&f).unwrap();
        counts_ok &= found.len() == d - 1;
        // Critical points are the (d−1)-th roots of unity.
        for k in 0..d - 1 {
            let omega = Complex64::from_polar(1.0, TAU * k as f64 / (d - 1) as f64);
            let nearest = found
                .iter()
                .map(|p| (p.point - omega).norm())
                .fold(f64::INFINITY, f64::min);
            counts_ok &= nearest <= 1e-9;
            let direct = direct_quotient(&f, c(0.0, 0.0), omega);
            worst_oracle = worst_oracle.max((direct - expected).abs() / expected);
        }
        for p in &found {
            let q = smale_quotient(&f, c(0.0, 0.0), p.point);
            worst_shifted = worst_shifted.max((q - expected).abs() / expected);
        }
    }
    Outcome {
        pass: worst_monomial <= 1e-12 && worst_shifted <= 1e-12 && worst_oracle <= 1e-12 && counts_ok,
        detail: format!(
            "z^d: {worst_monomial:.2e}, z^d - dz at 0: {worst_shifted:.2e}, direct-formula oracle {worst_oracle:.2e} (limit 1e-12)"
        ),
    }
}

fn extremal_probe() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for d in 3..=5usize {
        let f = monomial_minus_linear(d);
        let case = SmaleCase::new(f.clone()).unwrap();
        let e = extremal_search(&f, case.default_bbox(), (512, 512)).unwrap();
        // Oracle: min over the roots of unity of the direct quotient at 0.
        let expected = (0..d - 1)
            .map(|k| {
                direct_quotient(
                    &f,
                    c(0.0, 0.0),
                    Complex64::from_polar(1.0, TAU * k as f64 / (d - 1) as f64),
                )
            })
            .fold(f64::INFINITY, f64::min);
        let ok = e.value >= expected - 1e-6 && e.s.norm() <= 1e-3;
        pass &= ok;
        parts.push(format!("d={d}: {:.9} at |s*|={:.1e}", e.value, e.s.norm()));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

/// `|f''(θ)| / |Q_θ'(θ)|` by L'Hôpital, with `Q_θ` built from the closed
/// form `b_j = Σ_{k>j} a_k θ^{k−1−j}` rather than synthetic division.
fn oracle_limit(f: &Polynomial, theta: Complex64) -> f64 {
    let a = f.coeffs();
    let d = a.len() - 1;
    let b: Vec<Complex64> = (0..d)
        .map(|j| (j + 1..=d).map(|k| a[k] * theta.powu((k - 1 - j) as u32)).sum())
        .collect();
    let q_prime: Complex64 = (1..d).map(|j| b[j] * j as f64 * theta.powu(j as u32 - 1)).sum();
    let f_second: Complex64 = (2..=d)
        .map(|k| a[k] * (k * (k - 1)) as f64 * theta.powu(k as u32 - 2))
        .sum();
    (f_second / q_prime).norm()
}

fn w_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut degrees_ok, mut worst_far, mut worst_limit, mut worst_oracle) = (true, 0.0f64, 0.0f64, 0.0f64);
    let mut simple = 0;
    for _ in 0..50 {
        let d = rng.gen_range(2..=6usize);
        let f = random_poly(&mut rng, d);
        let case = SmaleCase::new(f.clone()).unwrap();
        let leading = f.coeffs()[d];
        let expected_far = (leading * d as f64 / leading).norm();
        for (i, (cp, w)) in case.critical_points.iter().zip(&case.maps).enumerate() {
            degrees_ok &= w.num().degree() == d - 1 && w.den().degree() == d - 1;
            for k in 0..16 {
                let s = Complex64::from_polar(1e5, TAU * k as f64 / 16.0);
                worst_far = worst_far.max((w.modulus(s) - expected_far).abs() / expected_far);
            }
            if cp.multiplicity == 1 {
                let lim = limit_at_critical_point(&f, cp.point).unwrap();
                assert_eq!(lim, case.limit_at(i));
                let expected = oracle_limit(&f, cp.point);
                worst_oracle = worst_oracle.max((expected - 2.0).abs());
                worst_limit = worst_limit.max((lim - 2.0).abs());
                simple += 1;
            }
        }
    }
    Outcome {
        pass: degrees_ok && worst_far <= 1e-3 && worst_limit <= 1e-6 && simple > 0,
        detail: format!(
            "degrees ok {degrees_ok}, far-field deviation {worst_far:.2e}, limit error {worst_limit:.2e} over {simple} simple points (oracle vs 2: {worst_oracle:.1e})"
        ),
    }
}

fn sweep_config() -> RunConfig {
    let mut config = RunConfig::new(Command::Sweep, Input::None, "unused");
    config.sweep = SweepConfig {
        n: 50,
        degree_min: 2,
        degree_max: 6,
        coeff_half_width: 1.0,
    };
    config.seed = 7;
    config.resolution = (512, 512);
    config.n_samples = 2000;
    config
}

fn audit_integrity(first_json: &mut Option<String>) -> Outcome {
    let config = sweep_config();
    let a = sweep(&config);
    let b = sweep(&config);
    let (ja, jb) = (sweep_json(&a), sweep_json(&b));
    let identical = ja == jb;
    let verdicts = a.instances.iter().filter(|i| i.verdict.is_some()).count();
    let components_ok = a
        .instances
        .iter()
        .all(|i| i.per_theta.iter().all(|t| t.flagged == t.dismissed));
    let replays = a.totals.replay_failures;
    let regions = a.totals.regions;
    *first_json = Some(ja);
    Outcome {
        pass: verdicts == 50 && components_ok && replays == 0 && identical,
        detail: format!(
            "{verdicts}/50 verdicts, {regions} components (flagged {}, dismissed {}), {} counterexamples, {replays} replay failures, byte-identical {identical}",
            a.totals.flagged,
            a.totals.dismissed,
            a.totals.counterexamples.values().sum::<usize>()
        ),
    }
}

fn determinism_and_round_trip(first_json: &Option<String>) -> Outcome {
    let again = sweep_json(&sweep(&sweep_config()));
    let identical = first_json.as_deref() == Some(again.as_str());
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = 0;
    for _ in 0..1000 {
        let degree = rng.gen_range(0..=10);
        let coeffs: Vec<Complex64> = (0..=degree)
            .map(|_| {
                let scale = 10f64.powi(rng.gen_range(-8..=8));
                random_complex(&mut rng) * scale
            })
            .collect();
        let p = Polynomial::new(coeffs);
        let text = p.to_string();
        let back: Polynomial = text.parse().unwrap();
        let bits = |p: &Polynomial| {
            p.coeffs()
                .iter()
                .map(|c| (c.re.to_bits(), c.im.to_bits()))
                .collect::<Vec<_>>()
        };
        let json: Polynomial = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        if bits(&back) != bits(&p) || bits(&json) != bits(&p) || back.to_string() != text {
            failures += 1;
        }
    }
    Outcome {
        pass: identical && failures == 0,
        detail: format!("sweep JSON identical on rerun {identical}, {failures}/1000 round-trip failures"),
    }
}

fn report(id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = outcome.pass && in_time;
    println!(
        "[{id:02}] {} {name}: {} ({:.3} s, budget {} s{})",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs_f64;
    let mut runs = Vec::new();
    let mut sweep_output = None;
    let results = [
        report(1, "divided-difference identity", secs(1.0), divided_difference_identity),
        report(2, "phase-gradient identity", secs(1.0), phase_gradient_identity),
        report(3, "tracer closed form", secs(0.1), tracer_closed_form),
        report(4, "tracer vs grid oracle", secs(30.0), || tracer_vs_grid(&mut runs)),
        report(5, "gain monotonicity", secs(30.0), || gain_monotonicity(&runs)),
        report(6, "quotient closed forms", secs(10.0), quotient_closed_forms),
        report(7, "extremal probe", secs(10.0), extremal_probe),
        report(8, "W_i structure", secs(10.0), w_structure),
        report(9, "audit integrity", secs(300.0), || audit_integrity(&mut sweep_output)),
        report(10, "determinism and round-trip", secs(300.0), || {
            determinism_and_round_trip(&sweep_output)
        }),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
