//! Critical points, the mean-value quotient and its rational maps.
//!
//! For a polynomial `f` of degree `d ≥ 2` with critical point `θ`, the
//! divided difference `Q_θ(s) = (f(s) − f(θ))/(s − θ)` gives the quotient
//! `|f(s) − f(θ)| / (|s − θ| |f'(s)|) = |Q_θ(s)| / |f'(s)|`, and the map
//! `W_θ = f'/Q_θ` has `1/|W_θ|` equal to it everywhere. `θ` itself is a common
//! root of `f'` and `Q_θ` and is registered as a removable point of `W_θ`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SmaleError;
use crate::field::{
    connected_components, points_in_regions, sample_grid, BBox, GridField, Polyline, Region, Threshold,
};
use crate::poly::{Polynomial, RootCluster};
use crate::rational::RationalMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: Complex64,
    pub multiplicity: usize,
}

/// Clustered roots of `f'`; multiplicities sum to `deg f − 1`.
pub fn critical_points(f: &Polynomial) -> Result<Vec<CriticalPoint>, SmaleError> {
    let d = f.degree();
    if d < 2 {
        return Err(SmaleError::DegreeTooLow(d));
    }
    let clusters = f.derivative().clustered_roots()?;
    let found: usize = clusters.iter().map(|c| c.multiplicity).sum();
    if found != d - 1 {
        return Err(SmaleError::CriticalCount { found, expected: d - 1 });
    }
    Ok(clusters
        .into_iter()
        .map(|c| CriticalPoint {
            point: c.value,
            multiplicity: c.multiplicity,
        })
        .collect())
}

fn is_tiny(v: Complex64, bound: f64, p: &Polynomial) -> bool {
    v.norm() <= 4.0 * f64::EPSILON * bound * p.degree().max(1) as f64
}

/// `|q(s)| / |fp(s)|`, taking the limit by joint deflation when both vanish
/// at `s`, and `+∞` when only `fp` does.
fn quotient_from(q: &Polynomial, fp: &Polynomial, s: Complex64) -> f64 {
    let (qv, qb) = q.eval_with_bound(s);
    let (dv, db) = fp.eval_with_bound(s);
    if is_tiny(qv, qb, q) && is_tiny(dv, db, fp) {
        let (mut q, mut fp) = (q.clone(), fp.clone());
        while q.degree() > 0 && fp.degree() > 0 {
            q = q.deflate(s).0;
            fp = fp.deflate(s).0;
            let (qv, qb) = q.eval_with_bound(s);
            let (dv, db) = fp.eval_with_bound(s);
            if !(is_tiny(qv, qb, &q) && is_tiny(dv, db, &fp)) {
                return qv.norm() / dv.norm();
            }
        }
        return f64::NAN;
    }
    if dv.norm() == 0.0 {
        return f64::INFINITY;
    }
    qv.norm() / dv.norm()
}

/// `Q_θ` and `f'` with `m` common factors of `s − θ` divided out. The
/// reduced pair has the same ratio and stays accurate near `θ`, where the
/// expanded values are both rounding noise.
fn reduced_pair(f: &Polynomial, theta: Complex64, m: usize) -> (Polynomial, Polynomial) {
    let (mut q, mut fp) = (f.divided_difference(theta), f.derivative());
    for _ in 0..m {
        q = q.deflate(theta).0;
        fp = fp.deflate(theta).0;
    }
    (q, fp)
}

/// `|f(s) − f(θ)| / (|s − θ| |f'(s)|)` computed as `|Q_θ(s)| / |f'(s)|`
/// after cancelling the factors of `s − θ` they share when `θ` is a critical
/// point, so `s = θ` gives the limit.
pub fn smale_quotient(f: &Polynomial, s: Complex64, theta: Complex64) -> f64 {
    let m = f
        .derivative()
        .clustered_roots()
        .map_or(0, |clusters| multiplicity_at(&clusters, theta));
    let (q, fp) = reduced_pair(f, theta, m);
    quotient_from(&q, &fp, s)
}

/// Multiplicity of `theta` as a root of `fp`, from the root clusters.
fn multiplicity_at(clusters: &[RootCluster], theta: Complex64) -> usize {
    clusters
        .iter()
        .find(|c| {
            let reach = (1e-6 * c.value.norm().max(1.0)).max(4.0 * c.spread);
            (c.value - theta).norm() <= reach
        })
        .map_or(0, |c| c.multiplicity)
}

/// `W_θ = f'/Q_θ` with `θ` registered as removable when it is a critical
/// point.
pub fn build_w(f: &Polynomial, theta: Complex64) -> Result<RationalMap, SmaleError> {
    let d = f.degree();
    if d < 2 {
        return Err(SmaleError::DegreeTooLow(d));
    }
    let fp = f.derivative();
    let m = multiplicity_at(&fp.clustered_roots()?, theta);
    Ok(RationalMap::with_removable(
        fp,
        f.divided_difference(theta),
        &[(theta, m)],
    )?)
}

/// `lim_{s→θ} |W_θ(s)|` after deflating `m` factors of `s − θ` from `f'` and
/// `Q_θ`, `m` being the multiplicity of `θ` as a critical point.
pub fn limit_at_critical_point(f: &Polynomial, theta: Complex64) -> Result<f64, SmaleError> {
    let d = f.degree();
    if d < 2 {
        return Err(SmaleError::DegreeTooLow(d));
    }
    let m = multiplicity_at(&f.derivative().clustered_roots()?, theta);
    let (q, fp) = reduced_pair(f, theta, m);
    Ok((fp.eval(theta) / q.eval(theta)).norm())
}

/// A polynomial with its critical points and one map `W_i` per critical
/// point.
#[derive(Clone, Debug)]
pub struct SmaleCase {
    pub f: Polynomial,
    pub critical_points: Vec<CriticalPoint>,
    pub maps: Vec<RationalMap>,
    /// `(Q_i, f')` with the common factors at `θ_i` divided out.
    reduced: Vec<(Polynomial, Polynomial)>,
}

impl SmaleCase {
    pub fn new(f: Polynomial) -> Result<Self, SmaleError> {
        let critical_points = critical_points(&f)?;
        let fp = f.derivative();
        let maps = critical_points
            .iter()
            .map(|c| {
                RationalMap::with_removable(fp.clone(), f.divided_difference(c.point), &[(c.point, c.multiplicity)])
                    .map_err(SmaleError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let reduced = critical_points
            .iter()
            .map(|c| reduced_pair(&f, c.point, c.multiplicity))
            .collect();
        Ok(SmaleCase {
            f,
            critical_points,
            maps,
            reduced,
        })
    }

    pub fn degree(&self) -> usize {
        self.f.degree()
    }

    /// Largest scene scale among the maps.
    pub fn scene_scale(&self) -> f64 {
        self.maps.iter().map(|m| m.scene_scale()).fold(1.0, f64::max)
    }

    /// Square of half-width twice the scene scale around the origin.
    pub fn default_bbox(&self) -> BBox {
        BBox::centered(Complex64::new(0.0, 0.0), 2.0 * self.scene_scale())
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.critical_points.iter().map(|c| c.point).collect()
    }

    /// Quotient for critical point `i`; bit-identical to
    /// [`smale_quotient`] at the same arguments.
    pub fn quotient(&self, i: usize, s: Complex64) -> f64 {
        let (q, fp) = &self.reduced[i];
        quotient_from(q, fp, s)
    }

    /// `min_i` quotient and its minimizing index.
    pub fn min_quotient(&self, s: Complex64) -> (f64, usize) {
        (0..self.maps.len())
            .map(|i| (self.quotient(i, s), i))
            .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best })
    }

    pub fn limit_at(&self, i: usize) -> f64 {
        let (q, fp) = &self.reduced[i];
        let theta = self.critical_points[i].point;
        (fp.eval(theta) / q.eval(theta)).norm()
    }

    /// `|W_i|` sampled on the lattice of `bbox`.
    pub fn modulus_field(&self, i: usize, bbox: BBox, resolution: (usize, usize)) -> GridField {
        let map = &self.maps[i];
        sample_grid(|s| map.modulus(s), bbox, resolution.0, resolution.1)
    }
}

/// Components of `{|W_i| < 1}` in `bbox`; each region's `contains` lists the
/// critical points of `f` it holds.
pub fn adjacent_domains(case: &SmaleCase, i: usize, bbox: BBox, resolution: (usize, usize)) -> Vec<Region> {
    let field = case.modulus_field(i, bbox, resolution);
    adjacent_domains_in(case, &field)
}

/// [`adjacent_domains`] on an already sampled `|W_i|` field.
pub fn adjacent_domains_in(case: &SmaleCase, field: &GridField) -> Vec<Region> {
    let mut regions = connected_components(field, Threshold::Below(1.0));
    let hits = points_in_regions(field, &regions, &case.points());
    for (r, h) in regions.iter_mut().zip(hits) {
        r.contains = h;
    }
    regions
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremal {
    pub s: Complex64,
    pub value: f64,
}

const PATTERN_DIRECTIONS: usize = 16;
const PATTERN_ITERATIONS: usize = 60;

/// Maximizes `g(s) = min_i` quotient over `bbox`: grid scan at `resolution`,
/// then compass pattern search from the best node (16 directions, initial
/// step one cell, halving when no direction improves, 60 polls).
pub fn extremal_search(f: &Polynomial, bbox: BBox, resolution: (usize, usize)) -> Result<Extremal, SmaleError> {
    let case = SmaleCase::new(f.clone())?;
    Ok(extremal_of(&case, bbox, resolution))
}

fn extremal_of(case: &SmaleCase, bbox: BBox, resolution: (usize, usize)) -> Extremal {
    let g = |s: Complex64| {
        let v = case.min_quotient(s).0;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let field = sample_grid(g, bbox, resolution.0, resolution.1);
    // sample_grid maps non-finite values to +∞; those only occur where
    // every quotient is infinite, which cannot be a maximum of a min.
    let best = (0..field.values.len())
        .filter(|&n| field.values[n].is_finite())
        .fold(None, |best: Option<usize>, n| match best {
            Some(b) if field.values[b] >= field.values[n] => Some(b),
            _ => Some(n),
        })
        .unwrap_or(0);
    let mut s = field.node(best % field.nx, best / field.nx);
    let mut value = g(s);
    let mut step = field.dx().max(field.dy());
    let dirs: Vec<Complex64> = (0..PATTERN_DIRECTIONS)
        .map(|k| Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / PATTERN_DIRECTIONS as f64))
        .collect();
    for _ in 0..PATTERN_ITERATIONS {
        let (cand, v) = dirs
            .iter()
            .map(|&d| {
                let p = s + d * step;
                (p, g(p))
            })
            .fold((s, value), |best, cur| if cur.1 > best.1 { cur } else { best });
        if v > value {
            s = cand;
            value = v;
        } else {
            step *= 0.5;
        }
    }
    Extremal { s, value }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterexampleKind {
    /// A point near `θ_i` where the quotient is at most 1, against the claim
    /// that `|W_i| < 1` on a neighbourhood of `θ_i`.
    NeighborhoodClaim,
    /// `min_i` quotient exceeds 1: the mean-value inequality with constant 1
    /// fails; `i` is the minimizing index.
    SmaleInequality,
    /// A sample strictly inside a sublevel component with quotient at most 1.
    InsideQuotientLe1,
    /// A sample strictly outside every component with quotient above 1.
    OutsideQuotientGt1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub kind: CounterexampleKind,
    pub s: Complex64,
    pub i: usize,
    pub quotient: f64,
}

impl Counterexample {
    /// Recomputes the quotient from `f` alone and checks the defining
    /// inequality and the recorded value.
    pub fn replay(&self, f: &Polynomial, critical_points: &[CriticalPoint]) -> bool {
        let q = smale_quotient(f, self.s, critical_points[self.i].point);
        let holds = match self.kind {
            CounterexampleKind::NeighborhoodClaim | CounterexampleKind::InsideQuotientLe1 => q <= 1.0,
            CounterexampleKind::OutsideQuotientGt1 => q > 1.0,
            CounterexampleKind::SmaleInequality => {
                critical_points.iter().all(|c| smale_quotient(f, self.s, c.point) > 1.0)
            }
        };
        holds && q.to_bits() == self.quotient.to_bits()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub id: usize,
    pub cells: usize,
    pub area: f64,
    /// Indices of critical points of `f` in the region.
    pub critical_points: Vec<usize>,
    /// The region holds no zero of `W_i` at audit resolution.
    pub flagged: bool,
    /// A flagged region that vanished or merged into a component with a zero
    /// at twice the resolution.
    pub dismissed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boundary: Vec<Polyline>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaAudit {
    pub theta: Complex64,
    pub multiplicity: usize,
    /// Deflated limit of `|W_i|` at `θ_i`.
    pub limit_at_theta: f64,
    /// `m + 1` for a critical point of multiplicity `m`.
    pub analytic_limit: f64,
    /// Whether the cell around `θ_i` touches a sublevel component.
    pub theta_in_region: bool,
    pub regions: Vec<RegionSummary>,
    pub regions_without_critical_points: usize,
    /// Flagged regions that persisted at twice the resolution.
    pub flagged_confirmed: usize,
    pub samples_inside: usize,
    pub samples_outside: usize,
    pub samples_boundary_excluded: usize,
    /// Fraction of inside samples with quotient > 1; `None` when no sample
    /// fell strictly inside.
    pub quotient_gt1_inside: Option<f64>,
    pub quotient_le1_outside: Option<f64>,
}

/// Both readings of "for every critical point" over the same samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantifierStats {
    pub samples: usize,
    /// Fraction with quotient ≤ 1 for every `i`.
    pub all_theta_le1: f64,
    /// Fraction with `min_i` quotient ≤ 1.
    pub min_theta_le1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub bbox: BBox,
    pub resolution: (usize, usize),
    pub n_samples: usize,
    pub seed: u64,
    /// Keep region boundary polylines in the report.
    #[serde(default)]
    pub boundaries: bool,
}

impl AuditConfig {
    pub fn for_case(case: &SmaleCase) -> Self {
        AuditConfig {
            bbox: case.default_bbox(),
            resolution: (512, 512),
            n_samples: 2000,
            seed: 0,
            boundaries: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmaleAuditReport {
    pub schema_version: u32,
    pub polynomial: Polynomial,
    pub degree: usize,
    pub critical_points: Vec<CriticalPoint>,
    pub per_theta: Vec<ThetaAudit>,
    pub quantifiers: QuantifierStats,
    pub counterexamples: Vec<Counterexample>,
    pub extremal: Extremal,
    pub config: AuditConfig,
}

/// Points on the circle of this radius (relative to the scene scale) around
/// each `θ_i` probe the neighbourhood claim.
const NEIGHBORHOOD_RADIUS: f64 = 1e-3;
const NEIGHBORHOOD_PROBES: usize = 16;

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn uniform_point(rng: &mut ChaCha8Rng, bbox: &BBox) -> Complex64 {
    Complex64::new(
        rng.gen_range(bbox.sigma_min..=bbox.sigma_max),
        rng.gen_range(bbox.t_min..=bbox.t_max),
    )
}

/// Runs the per-critical-point audit: sublevel components of `|W_i|`,
/// minimum-modulus flags re-checked at twice the resolution, sampled
/// inside/outside fractions, neighbourhood probes around each `θ_i`, both
/// quantifier statistics and the extremal quotient. Findings are reported,
/// never asserted. Deterministic for a fixed config regardless of thread
/// count.
pub fn audit_theorems(case: &SmaleCase, config: &AuditConfig) -> SmaleAuditReport {
    let per: Vec<(ThetaAudit, Vec<Counterexample>)> = (0..case.maps.len())
        .into_par_iter()
        .map(|i| audit_theta(case, i, config))
        .collect();
    let mut per_theta = Vec::with_capacity(per.len());
    let mut counterexamples = Vec::new();
    for (audit, cx) in per {
        per_theta.push(audit);
        counterexamples.extend(cx);
    }

    let mut rng = sample_rng(config.seed, u64::MAX);
    let points: Vec<Complex64> = (0..config.n_samples)
        .map(|_| uniform_point(&mut rng, &config.bbox))
        .collect();
    let evaluated: Vec<(bool, f64, usize)> = points
        .par_iter()
        .map(|&s| {
            let all = (0..case.maps.len()).all(|i| case.quotient(i, s) <= 1.0);
            let (min, arg) = case.min_quotient(s);
            (all, min, arg)
        })
        .collect();
    let all_count = evaluated.iter().filter(|e| e.0).count();
    let min_count = evaluated.iter().filter(|e| e.1 <= 1.0).count();
    for (&s, &(_, min, arg)) in points.iter().zip(&evaluated) {
        if min > 1.0 {
            counterexamples.push(Counterexample {
                kind: CounterexampleKind::SmaleInequality,
                s,
                i: arg,
                quotient: min,
            });
        }
    }
    let n = config.n_samples.max(1) as f64;
    let quantifiers = QuantifierStats {
        samples: config.n_samples,
        all_theta_le1: all_count as f64 / n,
        min_theta_le1: min_count as f64 / n,
    };

    let extremal = extremal_of(case, config.bbox, config.resolution);
    let (q, arg) = case.min_quotient(extremal.s);
    if q > 1.0 {
        counterexamples.push(Counterexample {
            kind: CounterexampleKind::SmaleInequality,
            s: extremal.s,
            i: arg,
            quotient: q,
        });
    }

    SmaleAuditReport {
        schema_version: SCHEMA_VERSION,
        polynomial: case.f.clone(),
        degree: case.degree(),
        critical_points: case.critical_points.clone(),
        per_theta,
        quantifiers,
        counterexamples,
        extremal,
        config: config.clone(),
    }
}

fn audit_theta(case: &SmaleCase, i: usize, config: &AuditConfig) -> (ThetaAudit, Vec<Counterexample>) {
    let map = &case.maps[i];
    let crit = case.critical_points[i];
    let field = case.modulus_field(i, config.bbox, config.resolution);
    let regions = adjacent_domains_in(case, &field);
    let zeros: Vec<Complex64> = map.zeros().iter().map(|z| z.value).collect();
    let with_zero = points_in_regions(&field, &regions, &zeros);

    let flagged: Vec<bool> = with_zero.iter().map(|z| z.is_empty()).collect();
    let mut dismissed = vec![false; regions.len()];
    if flagged.iter().any(|&f| f) {
        let fine_res = (2 * config.resolution.0, 2 * config.resolution.1);
        let fine = case.modulus_field(i, config.bbox, fine_res);
        let fine_regions = connected_components(&fine, Threshold::Below(1.0));
        let fine_zero = points_in_regions(&fine, &fine_regions, &zeros);
        for (r, region) in regions.iter().enumerate() {
            if !flagged[r] {
                continue;
            }
            // Follow the region's deepest node to the fine grid.
            let deepest = *region
                .cells
                .iter()
                .min_by(|&&a, &&b| field.values[a].total_cmp(&field.values[b]))
                .unwrap();
            let p = field.node(deepest % field.nx, deepest / field.nx);
            let fine_hit = fine.cell_of(p).and_then(|(fi, fj)| {
                let corners = [
                    fj * fine.nx + fi,
                    fj * fine.nx + fi + 1,
                    (fj + 1) * fine.nx + fi,
                    (fj + 1) * fine.nx + fi + 1,
                ];
                fine_regions
                    .iter()
                    .position(|fr| corners.iter().any(|&c| fr.touches(c)))
            });
            dismissed[r] = match fine_hit {
                None => true,
                Some(fr) => !fine_zero[fr].is_empty(),
            };
        }
    }

    let theta_in_region = field.cell_of(crit.point).is_some_and(|(ci, cj)| {
        let corners = [
            cj * field.nx + ci,
            cj * field.nx + ci + 1,
            (cj + 1) * field.nx + ci,
            (cj + 1) * field.nx + ci + 1,
        ];
        regions.iter().any(|r| corners.iter().any(|&c| r.touches(c)))
    });

    let mut counterexamples = Vec::new();

    // Neighbourhood probes: the claim fails at θ_i when the quotient is at
    // most 1 all around it. Record the largest probe value.
    let radius = NEIGHBORHOOD_RADIUS * case.scene_scale();
    let probe = (0..NEIGHBORHOOD_PROBES)
        .map(|k| {
            let s = crit.point
                + Complex64::from_polar(radius, std::f64::consts::TAU * k as f64 / NEIGHBORHOOD_PROBES as f64);
            (s, case.quotient(i, s))
        })
        .fold(
            (crit.point, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    if probe.1 <= 1.0 {
        counterexamples.push(Counterexample {
            kind: CounterexampleKind::NeighborhoodClaim,
            s: probe.0,
            i,
            quotient: probe.1,
        });
    }

    // Samples: strictly inside (all corners of the enclosing cell in one
    // region), strictly outside (no corner in any region), else excluded.
    let mut label = vec![usize::MAX; field.values.len()];
    for (r, region) in regions.iter().enumerate() {
        for &c in &region.cells {
            label[c] = r;
        }
    }
    let mut rng = sample_rng(config.seed, i as u64);
    let (mut inside, mut outside, mut excluded, mut inside_ok, mut outside_ok) = (0, 0, 0, 0, 0);
    for _ in 0..config.n_samples {
        let s = uniform_point(&mut rng, &config.bbox);
        let Some((ci, cj)) = field.cell_of(s) else { continue };
        let corners = [
            cj * field.nx + ci,
            cj * field.nx + ci + 1,
            (cj + 1) * field.nx + ci,
            (cj + 1) * field.nx + ci + 1,
        ];
        let labels = corners.map(|c| label[c]);
        let q = case.quotient(i, s);
        if labels.iter().all(|&l| l != usize::MAX && l == labels[0]) {
            inside += 1;
            if q > 1.0 {
                inside_ok += 1;
            } else {
                counterexamples.push(Counterexample {
                    kind: CounterexampleKind::InsideQuotientLe1,
                    s,
                    i,
                    quotient: q,
                });
            }
        } else if labels.iter().all(|&l| l == usize::MAX) {
            outside += 1;
            if q <= 1.0 {
                outside_ok += 1;
            } else {
                counterexamples.push(Counterexample {
                    kind: CounterexampleKind::OutsideQuotientGt1,
                    s,
                    i,
                    quotient: q,
                });
            }
        } else {
            excluded += 1;
        }
    }
    let fraction = |ok: usize, total: usize| (total > 0).then(|| ok as f64 / total as f64);

    let cell_area = field.dx() * field.dy();
    let summaries: Vec<RegionSummary> = regions
        .into_iter()
        .enumerate()
        .map(|(r, region)| RegionSummary {
            id: region.id,
            cells: region.cells.len(),
            area: region.cells.len() as f64 * cell_area,
            critical_points: region.contains,
            flagged: flagged[r],
            dismissed: dismissed[r],
            boundary: if config.boundaries { region.boundary } else { Vec::new() },
        })
        .collect();
    let audit = ThetaAudit {
        theta: crit.point,
        multiplicity: crit.multiplicity,
        limit_at_theta: case.limit_at(i),
        analytic_limit: (crit.multiplicity + 1) as f64,
        theta_in_region,
        regions_without_critical_points: summaries.iter().filter(|r| r.critical_points.is_empty()).count(),
        flagged_confirmed: summaries.iter().filter(|r| r.flagged && !r.dismissed).count(),
        regions: summaries,
        samples_inside: inside,
        samples_outside: outside,
        samples_boundary_excluded: excluded,
        quotient_gt1_inside: fraction(inside_ok, inside),
        quotient_le1_outside: fraction(outside_ok, outside),
    };
    (audit, counterexamples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(coeffs: &[f64]) -> Polynomial {
        Polynomial::from_real(coeffs)
    }

    fn monomial(d: usize) -> Polynomial {
        Polynomial::monomial(c(1.0, 0.0), d)
    }

    #[test]
    fn critical_point_examples() {
        let cp = critical_points(&monomial(2)).unwrap();
        assert_eq!(cp.len(), 1);
        assert_eq!((cp[0].point, cp[0].multiplicity), (c(0.0, 0.0), 1));

        let cp = critical_points(&monomial(3)).unwrap();
        assert_eq!(cp.len(), 1);
        assert_eq!(cp[0].multiplicity, 2);
        assert!(cp[0].point.norm() < 1e-12);

        let cp = critical_points(&poly(&[0.0, -4.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(cp.len(), 3);
        for p in &cp {
            assert_eq!(p.multiplicity, 1);
            assert!((p.point.powi(3) - 1.0).norm() < 1e-12);
        }
        assert!(matches!(
            critical_points(&poly(&[1.0, 1.0])),
            Err(SmaleError::DegreeTooLow(1))
        ));
    }

    #[test]
    fn quotient_examples() {
        assert!((smale_quotient(&monomial(2), c(3.0, 0.0), c(0.0, 0.0)) - 0.5).abs() < 1e-15);
        let f = poly(&[0.0, -4.0, 0.0, 0.0, 1.0]);
        assert!((smale_quotient(&f, c(0.0, 0.0), c(1.0, 0.0)) - 0.75).abs() < 1e-15);
        // Direct formula oracle.
        let s = c(0.3, -0.7);
        let theta = c(1.0, 0.0);
        let direct = (f.eval(s) - f.eval(theta)).norm() / ((s - theta).norm() * f.derivative().eval(s).norm());
        assert!((smale_quotient(&f, s, theta) - direct).abs() < 1e-12 * direct);
        for d in 2..=8 {
            let q = smale_quotient(&monomial(d), c(0.4, 1.3), c(0.0, 0.0));
            assert!((q - 1.0 / d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn quotient_at_theta_is_the_limit() {
        let f = poly(&[0.0, -3.0, 0.0, 1.0]);
        let q = smale_quotient(&f, c(1.0, 0.0), c(1.0, 0.0));
        assert!((q - 0.5).abs() < 1e-14);
        // f' vanishes at -1 while Q_1(-1) = -2.
        assert_eq!(smale_quotient(&f, c(-1.0, 0.0), c(1.0, 0.0)), f64::INFINITY);
    }

    #[test]
    fn w_examples() {
        let w = build_w(&monomial(2), c(0.0, 0.0)).unwrap();
        assert_eq!(w.removable().len(), 1);
        for s in [c(0.0, 0.0), c(1.0, 2.0), c(-0.3, 0.1)] {
            assert!((w.modulus(s) - 2.0).abs() < 1e-12);
        }
        let w = build_w(&monomial(3), c(0.0, 0.0)).unwrap();
        assert!((w.modulus(c(0.7, -0.2)) - 3.0).abs() < 1e-12);
        assert!((w.modulus(c(0.0, 0.0)) - 3.0).abs() < 1e-12);

        let w = build_w(&poly(&[0.0, -3.0, 0.0, 1.0]), c(1.0, 0.0)).unwrap();
        assert_eq!(w.num().coeffs(), poly(&[-3.0, 0.0, 3.0]).coeffs());
        assert_eq!(w.den().coeffs(), poly(&[-2.0, 1.0, 1.0]).coeffs());
        assert_eq!(w.removable()[0].point, c(1.0, 0.0));
        assert_eq!(w.modulus(c(-1.0, 0.0)), 0.0);
    }

    #[test]
    fn limit_examples() {
        assert!((limit_at_critical_point(&monomial(2), c(0.0, 0.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((limit_at_critical_point(&monomial(3), c(0.0, 0.0)).unwrap() - 3.0).abs() < 1e-12);
        let f = poly(&[0.0, -4.0, 0.0, 0.0, 1.0]);
        assert!((limit_at_critical_point(&f, c(1.0, 0.0)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn domain_examples() {
        let bbox = BBox::centered(c(0.0, 0.0), 2.0);
        let case = SmaleCase::new(monomial(2)).unwrap();
        assert!(adjacent_domains(&case, 0, bbox, (64, 64)).is_empty());
        for d in 3..=5 {
            let case = SmaleCase::new(monomial(d)).unwrap();
            assert!(adjacent_domains(&case, 0, bbox, (64, 64)).is_empty());
        }

        let case = SmaleCase::new(poly(&[0.0, -3.0, 0.0, 1.0])).unwrap();
        let i = case
            .critical_points
            .iter()
            .position(|p| (p.point - 1.0).norm() < 1e-9)
            .unwrap();
        let j = 1 - i;
        let regions = adjacent_domains(&case, i, bbox, (128, 128));
        assert!(regions.iter().any(|r| r.contains.contains(&j)));
        assert!(regions.iter().all(|r| !r.contains.contains(&i)));
    }

    #[test]
    fn audit_of_square() {
        let case = SmaleCase::new(monomial(2)).unwrap();
        let mut config = AuditConfig::for_case(&case);
        config.resolution = (64, 64);
        config.n_samples = 200;
        let report = audit_theorems(&case, &config);
        assert_eq!(report.per_theta.len(), 1);
        let t = &report.per_theta[0];
        assert!(t.regions.is_empty());
        assert!((t.limit_at_theta - 2.0).abs() < 1e-12);
        assert_eq!(t.quotient_gt1_inside, None);
        assert_eq!(t.quotient_le1_outside, Some(1.0));
        assert!((report.extremal.value - 0.5).abs() < 1e-12);
        assert!(report
            .counterexamples
            .iter()
            .all(|cx| cx.replay(&case.f, &case.critical_points)));
        assert!(report
            .counterexamples
            .iter()
            .any(|cx| cx.kind == CounterexampleKind::NeighborhoodClaim));
    }

    #[test]
    fn audit_of_quartic() {
        let case = SmaleCase::new(poly(&[0.0, -4.0, 0.0, 0.0, 1.0])).unwrap();
        let mut config = AuditConfig::for_case(&case);
        config.resolution = (128, 128);
        config.n_samples = 500;
        let report = audit_theorems(&case, &config);
        assert_eq!(report.critical_points.len(), 3);
        for (i, t) in report.per_theta.iter().enumerate() {
            assert!(!t.theta_in_region);
            let mut held: Vec<usize> = t.regions.iter().flat_map(|r| r.critical_points.clone()).collect();
            held.sort_unstable();
            let others: Vec<usize> = (0..3).filter(|&j| j != i).collect();
            assert_eq!(held, others);
            assert!((t.limit_at_theta - 2.0).abs() < 1e-9);
        }
        assert!(report
            .counterexamples
            .iter()
            .all(|cx| cx.replay(&case.f, &case.critical_points)));
        let again = audit_theorems(&case, &config);
        assert_eq!(
            serde_json::to_string(&report).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn extremal_examples() {
        let bbox = BBox::centered(c(0.0, 0.0), 2.0);
        for d in 2..=5 {
            let e = extremal_search(&monomial(d), bbox, (64, 64)).unwrap();
            assert!((e.value - 1.0 / d as f64).abs() < 1e-12);
        }
        let mut f = monomial(4);
        f = &f - &Polynomial::monomial(c(4.0, 0.0), 1);
        let e = extremal_search(&f, BBox::centered(c(0.0, 0.0), 3.0), (128, 128)).unwrap();
        assert!(e.value >= 0.75 - 1e-6, "{e:?}");
        assert!(e.s.norm() <= 1e-3, "{e:?}");
    }

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quotient_is_reciprocal_modulus(
            coeffs in proptest::collection::vec(arb_complex(), 3..=7),
            s in arb_complex(),
        ) {
            let case = SmaleCase::new(Polynomial::new(coeffs)).unwrap();
            for (i, cp) in case.critical_points.iter().enumerate() {
                let q = smale_quotient(&case.f, s * 2.0, cp.point);
                let w = case.maps[i].modulus(s * 2.0);
                prop_assert!((q - 1.0 / w).abs() <= 1e-10 * (1.0 + q));
            }
        }

        #[test]
        fn simple_critical_points_have_limit_two(coeffs in proptest::collection::vec(arb_complex(), 3..=7)) {
            let case = SmaleCase::new(Polynomial::new(coeffs)).unwrap();
            for (i, cp) in case.critical_points.iter().enumerate() {
                if cp.multiplicity == 1 {
                    prop_assert!((case.limit_at(i) - 2.0).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn modulus_tends_to_degree(coeffs in proptest::collection::vec(arb_complex(), 3..=7)) {
            let case = SmaleCase::new(Polynomial::new(coeffs)).unwrap();
            let d = case.degree() as f64;
            for map in &case.maps {
                for k in 0..16 {
                    let s = Complex64::from_polar(1e5, std::f64::consts::TAU * k as f64 / 16.0);
                    prop_assert!((map.modulus(s) - d).abs() <= 1e-3 * d);
                }
            }
        }
    }

    #[test]
    fn multiple_critical_point_limit() {
        // f' = (z - c)^m h(z) with h(c) != 0, integrated term by term.
        let center = c(0.3, -0.2);
        for m in 2..=4 {
            let h = poly(&[1.5, -0.7, 0.4]);
            let mut fp = h.clone();
            for _ in 0..m {
                fp = &fp * &Polynomial::from_roots(&[center]);
            }
            let mut coeffs = vec![c(0.25, 0.1)];
            coeffs.extend(fp.coeffs().iter().enumerate().map(|(k, a)| a / (k + 1) as f64));
            let f = Polynomial::new(coeffs);
            let case = SmaleCase::new(f).unwrap();
            let i = case.critical_points.iter().position(|p| p.multiplicity == m).unwrap();
            assert!(
                (case.limit_at(i) - (m + 1) as f64).abs() < 1e-3,
                "m = {m}: {}",
                case.limit_at(i)
            );
        }
    }
}
