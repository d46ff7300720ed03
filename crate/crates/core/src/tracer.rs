//! Predictor–corrector continuation of constant-phase loci
//! `{s : arg W(s) ≡ α (mod 2π)}`.
//!
//! Loci start at poles (gain 0) and run in the direction of increasing gain
//! until they reach a zero, leave the bounding box or exhaust the step budget.
//! With `L = W'/W`, the phase gradient is `(Im L, Re L)` and the unit tangent
//! `τ = −conj(L)/|L|` satisfies `d(log K)/dτ = |L| > 0`, so the orientation
//! needs no heuristics.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::TraceError;
use crate::field::{BBox, Polyline};
use crate::numfmt::fmt_f64;
use crate::poly::Polynomial;
use crate::rational::{wrapped_residual, RationalMap};

const MAX_NEWTON: usize = 12;
/// Step cap relative to the local length scale `|L|/|L'|`.
const RHO_FRACTION: f64 = 0.2;
/// Minimum cosine between tangents at consecutive points.
const TANGENT_COS: f64 = 0.8;
/// Doublings of the infinity seed radius before giving up.
const INFINITY_RETRIES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceOptions {
    /// Seed distance from a pole.
    pub eps: f64,
    pub h_init: f64,
    pub h_max: f64,
    /// Step halving on corrector failure stops here.
    pub h_min: f64,
    /// Gain treated as "received at a zero".
    pub gain_cap: f64,
    /// Corrector tolerance on the wrapped phase residual (radians).
    pub tol: f64,
    pub max_steps: usize,
    /// Radius around saddles of the phase field where crossings and
    /// monotonicity violations are annotated.
    pub singular_radius: f64,
    /// Pole seeds are moved closer to the pole until their gain is at most
    /// this value.
    pub seed_gain_threshold: f64,
    pub bbox: BBox,
    /// Radius of the seeds emitted for a pole at infinity.
    pub infinity_radius: f64,
}

impl TraceOptions {
    /// Defaults scaled by the map's scene scale `S`: `eps = 1e-3 S`,
    /// `h_init = 1e-2 S`, `h_max = 0.1 S`, `singular_radius = 1e-3 S`, bbox
    /// the square of half-width `2 S` around the origin.
    pub fn for_map(w: &RationalMap) -> Self {
        let scale = w.scene_scale();
        let bbox = BBox::centered(Complex64::new(0.0, 0.0), 2.0 * scale);
        TraceOptions {
            eps: 1e-3 * scale,
            h_init: 1e-2 * scale,
            h_max: 0.1 * scale,
            h_min: 1e-8,
            gain_cap: 1e6,
            tol: 1e-8,
            max_steps: 100_000,
            singular_radius: 1e-3 * scale,
            seed_gain_threshold: 0.1,
            bbox,
            infinity_radius: 1.5 * bbox.max_corner_norm(),
        }
    }

    /// Replaces the bbox and moves the infinity seeds just outside it.
    pub fn with_bbox(mut self, bbox: BBox) -> Self {
        self.bbox = bbox;
        self.infinity_radius = 1.5 * bbox.max_corner_norm();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    /// `index` into [`RationalMap::poles`]; one branch per unit of
    /// multiplicity.
    Pole { index: usize, branch: usize },
    /// Pole at infinity when `deg N > deg D`.
    Infinity { branch: usize },
    /// Caller-supplied starting point.
    Manual,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Seed {
    pub point: Complex64,
    pub origin: Origin,
}

impl Seed {
    pub fn manual(point: Complex64) -> Self {
        Seed {
            point,
            origin: Origin::Manual,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocusPoint {
    pub s: Complex64,
    pub gain: f64,
    /// Wrap-aware distance of `arg W(s)` from `α`.
    pub phase_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminus {
    /// Reached within `10 h_min` of zero `index` with gain at least the cap.
    Zero {
        index: usize,
    },
    BboxExit,
    StepLimit,
    /// Step halving fell below `h_min` without an acceptable corrector
    /// result; `near_saddle` names the saddle within `singular_radius`.
    CorrectorFailure {
        at: Complex64,
        step: f64,
        near_saddle: Option<usize>,
    },
}

/// The trace stepped across saddle `saddle` (index into
/// [`RationalMap::saddles`]), arriving at `points[point_index]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SaddleCrossing {
    pub saddle: usize,
    pub point_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainViolation {
    /// `points[index].gain` dropped below `points[index - 1].gain`.
    pub index: usize,
    pub near_saddle: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MonotoneReport {
    pub pass: bool,
    pub first_violation: Option<usize>,
    pub violation_count: usize,
    pub violations: Vec<GainViolation>,
}

impl MonotoneReport {
    /// Violations not explained by a nearby saddle.
    pub fn unannotated(&self) -> usize {
        self.violations.iter().filter(|v| v.near_saddle.is_none()).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocusTrace {
    pub alpha: f64,
    pub points: Vec<LocusPoint>,
    pub origin: Origin,
    pub terminus: Terminus,
    pub saddle_crossings: Vec<SaddleCrossing>,
    pub monotone: MonotoneReport,
}

impl LocusTrace {
    /// CSV with header `sigma,t,gain,phase_residual`, one row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,t,gain,phase_residual\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(p.s.re),
                fmt_f64(p.s.im),
                fmt_f64(p.gain),
                fmt_f64(p.phase_residual)
            );
        }
        out
    }

    pub fn polyline(&self) -> Polyline {
        Polyline {
            points: self.points.iter().map(|p| p.s).collect(),
        }
    }
}

/// Gain must not drop by more than `1e-9 · (1 + gain)` between consecutive
/// points.
pub fn verify_monotone_gain(trace: &LocusTrace) -> MonotoneReport {
    monotone_report(&trace.points, |_| None)
}

/// As [`verify_monotone_gain`], annotating each violation with the saddle of
/// `w` within `singular_radius`, if any.
pub fn verify_monotone_gain_near_saddles(trace: &LocusTrace, w: &RationalMap, singular_radius: f64) -> MonotoneReport {
    monotone_report(&trace.points, |k| {
        [trace.points[k - 1].s, trace.points[k].s]
            .into_iter()
            .filter_map(|s| nearest_saddle(w, s))
            .filter(|&(_, d)| d <= singular_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    })
}

fn monotone_report(points: &[LocusPoint], annotate: impl Fn(usize) -> Option<usize>) -> MonotoneReport {
    let mut violations = Vec::new();
    for k in 1..points.len() {
        let prev = points[k - 1].gain;
        if points[k].gain < prev - 1e-9 * (1.0 + prev) {
            violations.push(GainViolation {
                index: k,
                near_saddle: annotate(k),
            });
        }
    }
    MonotoneReport {
        pass: violations.is_empty(),
        first_violation: violations.first().map(|v| v.index),
        violation_count: violations.len(),
        violations,
    }
}

fn nearest_saddle(w: &RationalMap, s: Complex64) -> Option<(usize, f64)> {
    nearest(w.saddles().iter().copied(), s)
}

fn nearest_zero(w: &RationalMap, s: Complex64) -> Option<(usize, f64)> {
    nearest(w.zeros().iter().map(|z| z.value), s)
}

fn nearest(points: impl Iterator<Item = Complex64>, s: Complex64) -> Option<(usize, f64)> {
    points
        .enumerate()
        .map(|(i, p)| (i, (p - s).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Newton projection onto the level set along the phase gradient.
struct Corrector<'a> {
    w: &'a RationalMap,
    alpha: f64,
    tol: f64,
}

impl Corrector<'_> {
    fn residual(&self, s: Complex64) -> Option<f64> {
        self.w.phase(s).ok().map(|phi| wrapped_residual(phi, self.alpha))
    }

    /// Iterates `δ = −r ∇φ / |∇φ|²` to tolerance plus one polishing step.
    /// Fails if the iterate leaves the disc of radius `max_move`.
    fn correct(&self, start: Complex64, max_move: f64) -> Option<(Complex64, f64)> {
        let mut s = start;
        for _ in 0..MAX_NEWTON {
            let r = self.residual(s)?;
            let l = self.w.log_derivative(s).ok()?;
            // ∇φ = (Im L, Re L) as a complex number.
            let g = Complex64::i() * l.conj();
            let g2 = g.norm_sqr();
            if g2 == 0.0 || !g2.is_finite() {
                return None;
            }
            let next = s - g * (r / g2);
            if r.abs() <= self.tol {
                return match self.residual(next) {
                    Some(r2) if r2.abs() <= r.abs() && (next - start).norm() <= max_move => Some((next, r2.abs())),
                    _ => Some((s, r.abs())),
                };
            }
            s = next;
            if (s - start).norm() > max_move {
                return None;
            }
        }
        None
    }
}

fn tangent(l: Complex64) -> Complex64 {
    -l.conj() / l.norm()
}

/// `lim (s − p)^β W(s)` at pole `p` of multiplicity `β`, deflating the pole
/// cluster and any removable multiplicity registered at the same point.
fn pole_coefficient(w: &RationalMap, p: Complex64, beta: usize) -> Complex64 {
    let reach = 1e-6 * w.scene_scale();
    let k_rem: usize = w
        .removable()
        .iter()
        .filter(|r| (r.point - p).norm() <= reach)
        .map(|r| r.multiplicity)
        .sum();
    let deflate = |q: &Polynomial, k: usize| (0..k).fold(q.clone(), |acc, _| acc.deflate(p).0);
    deflate(w.num(), k_rem).eval(p) / deflate(w.den(), beta + k_rem).eval(p)
}

/// Seeds for every branch leaving a pole, corrected onto the locus.
///
/// A pole `p` of multiplicity `β` with `W ≈ C_p (s − p)^{−β}` gets `β` seeds
/// at `p + ε e^{iψ_k}`, `ψ_k = (arg C_p − α + 2πk)/β`. The radius is `eps`,
/// shrunk where needed so the seed gain stays below the threshold. A pole at
/// infinity (`deg N > deg D = r` excess) gets `r` seeds on the circle of
/// radius `opts.infinity_radius`, doubled until the corrector converges.
pub fn seed_points(w: &RationalMap, alpha: f64, opts: &TraceOptions) -> Result<Vec<Seed>, TraceError> {
    let cor = Corrector {
        w,
        alpha,
        tol: opts.tol,
    };
    let mut seeds = Vec::new();
    for (index, pole) in w.poles().iter().enumerate() {
        let beta = pole.multiplicity;
        let c_p = pole_coefficient(w, pole.value, beta);
        let eps = opts
            .eps
            .min((0.5 * opts.seed_gain_threshold * c_p.norm()).powf(1.0 / beta as f64));
        for branch in 0..beta {
            let psi = (c_p.arg() - alpha + TAU * branch as f64) / beta as f64;
            let guess = pole.value + Complex64::from_polar(eps, psi);
            let (point, _) = cor
                .correct(guess, 0.5 * eps)
                .ok_or(TraceError::SeedDiverged { pole: pole.value, eps })?;
            seeds.push(Seed {
                point,
                origin: Origin::Pole { index, branch },
            });
        }
    }
    let excess = w.degree_excess();
    if excess > 0 {
        let r = excess as usize;
        let c = w.num().leading() / w.den().leading();
        for branch in 0..r {
            let psi = (alpha - c.arg() + TAU * branch as f64) / r as f64;
            // The asymptotic form may not hold yet at the first radius; move
            // outward until the corrector settles.
            let mut radius = opts.infinity_radius;
            let mut found = None;
            for _ in 0..INFINITY_RETRIES {
                found = cor.correct(Complex64::from_polar(radius, psi), 0.1 * radius);
                if found.is_some() {
                    break;
                }
                radius *= 2.0;
            }
            let (point, _) = found.ok_or(TraceError::SeedDiverged {
                pole: Complex64::new(f64::INFINITY, 0.0),
                eps: radius,
            })?;
            seeds.push(Seed {
                point,
                origin: Origin::Infinity { branch },
            });
        }
    }
    Ok(seeds)
}

/// Continues the `α` locus from `seed` toward increasing gain.
///
/// Each step is an Euler predictor of length `h ≤ min(h_max, 0.2 |L|/|L'|)`
/// along the tangent followed by the Newton corrector. A step is accepted when
/// the corrector converges within `h/2` of the prediction, the point advances,
/// the tangent turns by less than ~37° and the gain increases; otherwise `h`
/// halves. Loci passing within a hair of a saddle of the phase field are
/// carried across it by the local quadratic model and the crossing recorded.
pub fn trace_locus(w: &RationalMap, alpha: f64, seed: &Seed, opts: &TraceOptions) -> Result<LocusTrace, TraceError> {
    let cor = Corrector {
        w,
        alpha,
        tol: opts.tol,
    };
    let r0 = cor.residual(seed.point).ok_or(TraceError::SeedOffLocus {
        seed: seed.point,
        residual: f64::NAN,
    })?;
    let (start, res) = if r0.abs() <= opts.tol {
        (seed.point, r0.abs())
    } else {
        cor.correct(seed.point, opts.h_init).ok_or(TraceError::SeedOffLocus {
            seed: seed.point,
            residual: r0.abs(),
        })?
    };
    let mut points = vec![LocusPoint {
        s: start,
        gain: w.gain(start),
        phase_residual: res,
    }];
    let mut crossings = Vec::new();
    let mut entered = opts.bbox.contains(start);
    let mut h = opts.h_init.min(opts.h_max);
    let floor = 1e-13 * w.scene_scale();

    let terminus = 'march: loop {
        if points.len() > opts.max_steps {
            break Terminus::StepLimit;
        }
        let cur = *points.last().unwrap();
        if let Some((index, dz)) = nearest_zero(w, cur.s) {
            if (cur.gain >= opts.gain_cap && dz <= 10.0 * opts.h_min) || dz <= floor {
                break Terminus::Zero { index };
            }
        }
        let failure = |step: f64| Terminus::CorrectorFailure {
            at: cur.s,
            step,
            near_saddle: nearest_saddle(w, cur.s)
                .filter(|&(_, d)| d <= opts.singular_radius)
                .map(|(i, _)| i),
        };
        let Ok(l) = w.log_derivative(cur.s) else {
            break failure(h);
        };
        let tau = tangent(l);
        let lp = w.log_derivative_prime(cur.s).unwrap_or_default();
        let rho = if lp.norm() > 0.0 {
            l.norm() / lp.norm()
        } else {
            f64::INFINITY
        };
        h = h.min(opts.h_max).min(RHO_FRACTION * rho);

        if let Some((next, saddle)) = saddle_jump(w, &cor, opts, cur, tau) {
            crossings.push(SaddleCrossing {
                saddle,
                point_index: points.len(),
            });
            points.push(next);
            continue;
        }

        // Halving below h_min is allowed only while the step is still within
        // three orders of the local scale, so approaches to zeros can go on.
        let h_floor = opts.h_min.min(1e-3 * h);
        let mut step = h;
        let next = loop {
            if step < h_floor {
                break 'march failure(step);
            }
            if let Some(p) = try_step(w, &cor, cur, tau, step) {
                break p;
            }
            step *= 0.5;
        };
        h = step;

        let inside = opts.bbox.contains(next.s);
        if entered && !inside {
            if let Some(exit) = clip_to_bbox(w, &cor, cur, next, &opts.bbox) {
                points.push(exit);
            }
            break Terminus::BboxExit;
        }
        entered |= inside;
        points.push(next);
        h = (h * 1.5).min(opts.h_max);
    };

    let mut trace = LocusTrace {
        alpha,
        points,
        origin: seed.origin,
        terminus,
        saddle_crossings: crossings,
        monotone: MonotoneReport::default(),
    };
    trace.monotone = verify_monotone_gain_near_saddles(&trace, w, opts.singular_radius);
    Ok(trace)
}

fn try_step(w: &RationalMap, cor: &Corrector, cur: LocusPoint, tau: Complex64, h: f64) -> Option<LocusPoint> {
    let (s, res) = cor.correct(cur.s + tau * h, 0.5 * h)?;
    if ((s - cur.s) * tau.conj()).re <= 0.0 {
        return None;
    }
    let l = w.log_derivative(s).ok()?;
    if (tangent(l) * tau.conj()).re < TANGENT_COS {
        return None;
    }
    let gain = w.gain(s);
    (gain > cur.gain).then_some(LocusPoint {
        s,
        gain,
        phase_residual: res,
    })
}

/// Steps across a saddle `c` the locus passes very close to.
///
/// Near `c`, `log W ≈ log W(c) + a (s − c)²` with `a = L'(c)/2`. In the frame
/// `z = u (s − c)`, `u = √a/|√a|`, constant-phase curves are the hyperbolae
/// `xy = const` and the gain grows where `|y| > |x|`. An incoming point with
/// `|x| > |y|` is reflected onto the outgoing arm of its own hyperbola; when
/// `xy = 0` exactly the left turn is taken.
fn saddle_jump(
    w: &RationalMap,
    cor: &Corrector,
    opts: &TraceOptions,
    cur: LocusPoint,
    tau: Complex64,
) -> Option<(LocusPoint, usize)> {
    let (index, dist) = nearest_saddle(w, cur.s)?;
    if dist > opts.singular_radius || dist == 0.0 {
        return None;
    }
    let c = w.saddles()[index];
    if ((c - cur.s) * tau.conj()).re <= 0.0 {
        return None;
    }
    let a = w.log_derivative_prime(c).ok()? / 2.0;
    if a.norm() == 0.0 {
        return None;
    }
    let root = a.sqrt();
    let u = root / root.norm();
    let z = u * (cur.s - c);
    let xy = z.re * z.im;
    if z.re.abs() <= z.im.abs() || (2.0 * xy.abs()).sqrt() >= 1e-2 * z.norm() {
        return None;
    }
    let z_out = if xy > 0.0 {
        Complex64::i() * z.conj()
    } else {
        -Complex64::i() * z.conj()
    };
    let (s, res) = cor.correct(c + z_out / u, 0.5 * dist)?;
    let gain = w.gain(s);
    (gain > cur.gain).then_some((
        LocusPoint {
            s,
            gain,
            phase_residual: res,
        },
        index,
    ))
}

/// The locus point on the bbox edge between `inside` and `outside`: a 1D
/// Newton solve along the crossed edge, started at the chord intersection.
fn clip_to_bbox(
    w: &RationalMap,
    cor: &Corrector,
    inside: LocusPoint,
    outside: LocusPoint,
    bbox: &BBox,
) -> Option<LocusPoint> {
    let d = outside.s - inside.s;
    let mut best: Option<(f64, bool, f64)> = None;
    let mut consider = |t: f64, vertical_edge: bool, coord: f64| {
        if (0.0..=1.0).contains(&t) && best.is_none_or(|(b, _, _)| t < b) {
            best = Some((t, vertical_edge, coord));
        }
    };
    if d.re != 0.0 {
        for x in [bbox.sigma_min, bbox.sigma_max] {
            consider((x - inside.s.re) / d.re, true, x);
        }
    }
    if d.im != 0.0 {
        for y in [bbox.t_min, bbox.t_max] {
            consider((y - inside.s.im) / d.im, false, y);
        }
    }
    let (t, vertical_edge, coord) = best?;
    let mut s = inside.s + d * t;
    for _ in 0..MAX_NEWTON {
        let r = cor.residual(s)?;
        if r.abs() <= cor.tol {
            break;
        }
        let l = w.log_derivative(s).ok()?;
        // Move along the edge: ∂φ/∂t on a vertical edge, ∂φ/∂σ otherwise.
        if vertical_edge {
            s = Complex64::new(coord, s.im - r / l.re);
        } else {
            s = Complex64::new(s.re - r / l.im, coord);
        }
    }
    let res = cor.residual(s)?.abs();
    let gain = w.gain(s);
    let on_segment = (s - inside.s).norm() <= d.norm();
    (res <= cor.tol && on_segment && gain > inside.gain).then_some(LocusPoint {
        s,
        gain,
        phase_residual: res,
    })
}

/// Seeds every branch and traces them in parallel, in seed order.
pub fn trace_all(w: &RationalMap, alpha: f64, opts: &TraceOptions) -> Result<Vec<LocusTrace>, TraceError> {
    let seeds = seed_points(w, alpha, opts)?;
    seeds.par_iter().map(|seed| trace_locus(w, alpha, seed, opts)).collect()
}
