//! Rational maps `W(s) = N(s) / D(s)`: gain `K = 1/|W|`, principal phase,
//! logarithmic derivative and the analytic phase gradient.
//!
//! Common roots of `N` and `D` are never cancelled from the coefficients.
//! They are recorded as removable points and `eval_w` returns the limit there,
//! evaluating the locally deflated pair `N_k / D_k` inside a small disc.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MapError, SingularKind};
use crate::poly::{cluster_roots, Polynomial, RootCluster, RootOptions};

/// Inside this radius (relative to `max(1, |p|)`) of a removable point the
/// deflated pair is evaluated instead of `N / D`.
const LOCAL_FORM_RADIUS: f64 = 1e-4;
/// Radius (relative to `max(1, |c|)`, and at most a quarter of the distance
/// to the nearest other singular point) of the disc around a zero or pole `c`
/// where `W` is evaluated as `(s − c)^k N_k / D_k`. The factor `s − c` is
/// exact for nearby floats, so the phase stays accurate right up to `c`.
const FACTORED_RADIUS: f64 = 1e-2;
/// Points closer than this (relative to the scene scale) to a zero, pole or
/// removable point are treated as that point.
const SINGULAR_TOL: f64 = 1e-12;

/// Value of `W` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WValue {
    Finite(Complex64),
    /// `D(s)` vanished (or underflowed) relative to `N(s)`.
    AtInfinity,
}

impl WValue {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            WValue::Finite(w) => Some(w),
            WValue::AtInfinity => None,
        }
    }
}

/// `(∂φ/∂σ, ∂φ/∂t)` in radians per unit length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGradient {
    pub d_sigma: f64,
    pub d_t: f64,
}

impl PhaseGradient {
    pub fn norm(&self) -> f64 {
        self.d_sigma.hypot(self.d_t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovablePoint {
    pub point: Complex64,
    pub multiplicity: usize,
}

/// `W(s) = (s − center)^power · num(s) / den(s)`.
#[derive(Clone, Debug)]
struct Form {
    center: Complex64,
    power: i32,
    num: Polynomial,
    num_d: Polynomial,
    num_dd: Polynomial,
    den: Polynomial,
    den_d: Polynomial,
    den_dd: Polynomial,
}

impl Form {
    /// Contribution of the explicit factor to `W'/W` (`order` 1) or to its
    /// derivative (`order` 2).
    fn factor_term(&self, s: Complex64, order: i32) -> Complex64 {
        if self.power == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let k = self.power as f64;
        let inv = (s - self.center).inv();
        if order == 1 {
            inv * k
        } else {
            -inv * inv * k
        }
    }

    fn new(num: Polynomial, den: Polynomial) -> Self {
        Self::factored(Complex64::new(0.0, 0.0), 0, num, den)
    }

    fn factored(center: Complex64, power: i32, num: Polynomial, den: Polynomial) -> Self {
        let num_d = num.derivative();
        let den_d = den.derivative();
        Form {
            center,
            power,
            num_dd: num_d.derivative(),
            den_dd: den_d.derivative(),
            num,
            num_d,
            den,
            den_d,
        }
    }
}

/// Serialized shape: `{"num": [[re, im], ...], "den": [[re, im], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RationalMapSpec {
    pub num: Polynomial,
    pub den: Polynomial,
}

#[derive(Clone, Debug)]
pub struct RationalMap {
    num: Polynomial,
    den: Polynomial,
    zeros: Vec<RootCluster>,
    poles: Vec<RootCluster>,
    removable: Vec<RemovablePoint>,
    saddles: Vec<Complex64>,
    global: Form,
    local: Vec<Form>,
    /// Factored forms around zeros and poles with their disc radii.
    factored: Vec<(f64, Form)>,
    scale: f64,
}

fn roots_of(p: &Polynomial) -> Result<Vec<RootCluster>, MapError> {
    if p.degree() == 0 {
        return Ok(Vec::new());
    }
    Ok(p.clustered_roots()?)
}

/// Removes `k` multiplicity from the cluster nearest `point`.
fn take_multiplicity(clusters: &mut Vec<RootCluster>, point: Complex64, k: usize) {
    let mut remaining = k;
    while remaining > 0 {
        let Some(idx) = (0..clusters.len()).min_by(|&a, &b| {
            (clusters[a].value - point)
                .norm()
                .total_cmp(&(clusters[b].value - point).norm())
        }) else {
            return;
        };
        let take = remaining.min(clusters[idx].multiplicity);
        clusters[idx].multiplicity -= take;
        remaining -= take;
        if clusters[idx].multiplicity == 0 {
            clusters.remove(idx);
        }
    }
}

fn deflate_times(p: &Polynomial, point: Complex64, k: usize) -> Polynomial {
    (0..k).fold(p.clone(), |acc, _| acc.deflate(point).0)
}

impl RationalMap {
    /// Builds `N / D`, registering numerically coincident zero/pole clusters
    /// as removable points.
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, MapError> {
        Self::with_removable(num, den, &[])
    }

    /// Like [`RationalMap::new`], with `explicit` removable points
    /// `(point, multiplicity)` registered first.
    pub fn with_removable(num: Polynomial, den: Polynomial, explicit: &[(Complex64, usize)]) -> Result<Self, MapError> {
        let mut map = Self::build(num, den, explicit)?;
        map.register_coincident();
        map.finish()
    }

    /// Skips removable-point detection entirely. Evaluating at a common root
    /// of `N` and `D` then fails with [`MapError::Indeterminate`].
    pub fn new_unregistered(num: Polynomial, den: Polynomial) -> Result<Self, MapError> {
        Self::build(num, den, &[])?.finish()
    }

    pub fn from_spec(spec: RationalMapSpec) -> Result<Self, MapError> {
        Self::new(spec.num, spec.den)
    }

    pub fn spec(&self) -> RationalMapSpec {
        RationalMapSpec {
            num: self.num.clone(),
            den: self.den.clone(),
        }
    }

    fn build(num: Polynomial, den: Polynomial, explicit: &[(Complex64, usize)]) -> Result<Self, MapError> {
        if num.is_zero() || den.is_zero() {
            return Err(MapError::ZeroPolynomial);
        }
        let mut zeros = roots_of(&num)?;
        let mut poles = roots_of(&den)?;
        let mut removable = Vec::new();
        for &(point, k) in explicit {
            if k == 0 {
                continue;
            }
            take_multiplicity(&mut zeros, point, k);
            take_multiplicity(&mut poles, point, k);
            removable.push(RemovablePoint { point, multiplicity: k });
        }
        Ok(RationalMap {
            global: Form::new(num.clone(), den.clone()),
            num,
            den,
            zeros,
            poles,
            removable,
            saddles: Vec::new(),
            local: Vec::new(),
            factored: Vec::new(),
            scale: 1.0,
        })
    }

    fn register_coincident(&mut self) {
        let radius = RootOptions::default().cluster_radius;
        loop {
            let scale = self
                .zeros
                .iter()
                .chain(&self.poles)
                .map(|c| c.value.norm())
                .fold(1.0, f64::max);
            let hit = self.zeros.iter().enumerate().find_map(|(zi, z)| {
                self.poles.iter().enumerate().find_map(|(pi, p)| {
                    let d = (z.value - p.value).norm();
                    let reach = (radius * scale).max(4.0 * (z.spread + p.spread));
                    (d <= reach).then_some((zi, pi))
                })
            });
            let Some((zi, pi)) = hit else { break };
            let (z, p) = (self.zeros[zi].clone(), self.poles[pi].clone());
            let k = z.multiplicity.min(p.multiplicity);
            let point = (z.value * z.multiplicity as f64 + p.value * p.multiplicity as f64)
                / (z.multiplicity + p.multiplicity) as f64;
            take_multiplicity(&mut self.zeros, z.value, k);
            take_multiplicity(&mut self.poles, p.value, k);
            self.removable.push(RemovablePoint { point, multiplicity: k });
        }
    }

    fn finish(mut self) -> Result<Self, MapError> {
        self.scale = self
            .zeros
            .iter()
            .chain(&self.poles)
            .map(|c| c.value.norm())
            .fold(1.0, f64::max);
        self.local = self
            .removable
            .iter()
            .map(|r| {
                Form::new(
                    deflate_times(&self.num, r.point, r.multiplicity),
                    deflate_times(&self.den, r.point, r.multiplicity),
                )
            })
            .collect();
        self.factored = self.factored_forms();
        self.saddles = self.compute_saddles()?;
        Ok(self)
    }

    fn factored_forms(&self) -> Vec<(f64, Form)> {
        let singular: Vec<(Complex64, i32)> = self
            .zeros
            .iter()
            .map(|z| (z.value, z.multiplicity as i32))
            .chain(self.poles.iter().map(|p| (p.value, -(p.multiplicity as i32))))
            .collect();
        singular
            .iter()
            .enumerate()
            .map(|(idx, &(c, power))| {
                let sep = singular
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != idx)
                    .map(|(_, &(o, _))| o)
                    .chain(self.removable.iter().map(|r| r.point))
                    .map(|o| (o - c).norm())
                    .fold(f64::INFINITY, f64::min);
                let radius = (FACTORED_RADIUS * c.norm().max(1.0)).min(0.25 * sep);
                let k = power.unsigned_abs() as usize;
                let mut num = self.num.clone();
                let mut den = self.den.clone();
                for r in &self.removable {
                    num = deflate_times(&num, r.point, r.multiplicity);
                    den = deflate_times(&den, r.point, r.multiplicity);
                }
                if power > 0 {
                    num = deflate_times(&num, c, k);
                } else {
                    den = deflate_times(&den, c, k);
                }
                (radius, Form::factored(c, power, num, den))
            })
            .collect()
    }

    /// Zeros of `W'` away from zeros, poles and removable points of `W`:
    /// roots of `N'D - ND'` where loci of equal phase cross.
    fn compute_saddles(&self) -> Result<Vec<Complex64>, MapError> {
        // When deg N == deg D the top terms cancel exactly; drop the residue.
        let wr = (&(&self.global.num_d * &self.den) - &(&self.num * &self.global.den_d))
            .trimmed(1e-13 * (self.num.degree() + self.den.degree()).max(1) as f64);
        let size = self.num.max_abs_coeff() * self.den.max_abs_coeff();
        let deg = (self.num.degree() + self.den.degree()).max(1) as f64;
        if wr.degree() == 0 || wr.max_abs_coeff() <= 1e-13 * deg * size {
            return Ok(Vec::new());
        }
        let clusters = cluster_roots(&wr, &wr.roots()?, RootOptions::default().cluster_radius);
        let special: Vec<(Complex64, f64)> = self
            .zeros
            .iter()
            .chain(&self.poles)
            .map(|c| (c.value, c.spread))
            .chain(self.removable.iter().map(|r| (r.point, 0.0)))
            .collect();
        Ok(clusters
            .into_iter()
            .filter(|w| {
                special.iter().all(|&(p, sp)| {
                    let reach = (1e-6 * self.scale).max(4.0 * (w.spread + sp)).max(1e-9 * self.scale);
                    (w.value - p).norm() > reach
                })
            })
            .map(|w| w.value)
            .collect())
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// Zeros of `W` (roots of `N` net of removable points).
    pub fn zeros(&self) -> &[RootCluster] {
        &self.zeros
    }

    /// Finite poles of `W` (roots of `D` net of removable points).
    pub fn poles(&self) -> &[RootCluster] {
        &self.poles
    }

    pub fn removable(&self) -> &[RemovablePoint] {
        &self.removable
    }

    /// Zeros of `W'` that are not zeros, poles or removable points of `W`.
    pub fn saddles(&self) -> &[Complex64] {
        &self.saddles
    }

    /// `max(1, max |pole|, max |zero|)`.
    pub fn scene_scale(&self) -> f64 {
        self.scale
    }

    /// `deg N - deg D`; positive values mean poles at infinity.
    pub fn degree_excess(&self) -> isize {
        self.num.degree() as isize - self.den.degree() as isize
    }

    fn form_at(&self, s: Complex64) -> &Form {
        for (r, form) in self.removable.iter().zip(&self.local) {
            if (s - r.point).norm() <= LOCAL_FORM_RADIUS * r.point.norm().max(1.0) {
                return form;
            }
        }
        for (radius, form) in &self.factored {
            if (s - form.center).norm() < *radius {
                return form;
            }
        }
        &self.global
    }

    fn singular_kind(&self, s: Complex64) -> Option<SingularKind> {
        let tol = SINGULAR_TOL * self.scale;
        if self.zeros.iter().any(|z| (z.value - s).norm() <= tol) {
            Some(SingularKind::Zero)
        } else if self.poles.iter().any(|p| (p.value - s).norm() <= tol) {
            Some(SingularKind::Pole)
        } else if self.removable.iter().any(|r| (r.point - s).norm() <= tol) {
            Some(SingularKind::Removable)
        } else {
            None
        }
    }

    /// `N(s)/D(s)`, the limit at registered removable points, or
    /// [`WValue::AtInfinity`] at a pole.
    pub fn eval_w(&self, s: Complex64) -> Result<WValue, MapError> {
        let form = self.form_at(s);
        let (n, nb) = form.num.eval_with_bound(s);
        let (d, db) = form.den.eval_with_bound(s);
        let n_tiny = n.norm() <= 4.0 * f64::EPSILON * nb * form.num.degree().max(1) as f64;
        let d_tiny = d.norm() <= 4.0 * f64::EPSILON * db * form.den.degree().max(1) as f64;
        if n_tiny && d_tiny {
            return Err(MapError::Indeterminate { point: s });
        }
        let (n, d) = match form.power {
            0 => (n, d),
            k if k > 0 => (n * (s - form.center).powi(k), d),
            k => (n, d * (s - form.center).powi(-k)),
        };
        if d.norm() == 0.0 {
            return Ok(WValue::AtInfinity);
        }
        let w = n / d;
        if !w.re.is_finite() || !w.im.is_finite() {
            return Ok(WValue::AtInfinity);
        }
        Ok(WValue::Finite(w))
    }

    /// `K(s) = 1/|W(s)|`: `0` at poles, `+∞` at zeros. `NaN` only at an
    /// unregistered 0/0 point.
    pub fn gain(&self, s: Complex64) -> f64 {
        match self.eval_w(s) {
            Ok(WValue::AtInfinity) => 0.0,
            Ok(WValue::Finite(w)) => 1.0 / w.norm(),
            Err(_) => f64::NAN,
        }
    }

    /// `|W(s)|`, `+∞` at poles.
    pub fn modulus(&self, s: Complex64) -> f64 {
        match self.eval_w(s) {
            Ok(WValue::AtInfinity) => f64::INFINITY,
            Ok(WValue::Finite(w)) => w.norm(),
            Err(_) => f64::NAN,
        }
    }

    fn check_regular(&self, s: Complex64) -> Result<(), MapError> {
        match self.singular_kind(s) {
            Some(kind) => Err(MapError::Singular { point: s, kind }),
            None => Ok(()),
        }
    }

    /// Principal argument of `W(s)` in `(-π, π]`.
    pub fn phase(&self, s: Complex64) -> Result<f64, MapError> {
        self.check_regular(s)?;
        match self.eval_w(s)? {
            WValue::AtInfinity => Err(MapError::Singular {
                point: s,
                kind: SingularKind::Pole,
            }),
            WValue::Finite(w) if w.norm() == 0.0 => Err(MapError::Singular {
                point: s,
                kind: SingularKind::Zero,
            }),
            WValue::Finite(w) => Ok(four_quadrant_phase(w.re, w.im)),
        }
    }

    /// `W'(s)/W(s) = N'/N - D'/D`, never forming `W'` itself.
    pub fn log_derivative(&self, s: Complex64) -> Result<Complex64, MapError> {
        self.check_regular(s)?;
        let form = self.form_at(s);
        let n = form.num.eval(s);
        let d = form.den.eval(s);
        if n.norm() == 0.0 {
            return Err(MapError::Singular {
                point: s,
                kind: SingularKind::Zero,
            });
        }
        if d.norm() == 0.0 {
            return Err(MapError::Singular {
                point: s,
                kind: SingularKind::Pole,
            });
        }
        Ok(form.factor_term(s, 1) + form.num_d.eval(s) / n - form.den_d.eval(s) / d)
    }

    /// `d/ds (W'/W)`, used for local length scales along loci.
    pub fn log_derivative_prime(&self, s: Complex64) -> Result<Complex64, MapError> {
        self.check_regular(s)?;
        let form = self.form_at(s);
        let n = form.num.eval(s);
        let d = form.den.eval(s);
        if n.norm() == 0.0 || d.norm() == 0.0 {
            return Err(MapError::Singular {
                point: s,
                kind: if n.norm() == 0.0 {
                    SingularKind::Zero
                } else {
                    SingularKind::Pole
                },
            });
        }
        let ln = form.num_d.eval(s) / n;
        let ld = form.den_d.eval(s) / d;
        Ok(form.factor_term(s, 2) + (form.num_dd.eval(s) / n - ln * ln) - (form.den_dd.eval(s) / d - ld * ld))
    }

    /// `(∂φ/∂σ, ∂φ/∂t) = (Im(W'/W), Re(W'/W))`.
    pub fn phase_gradient(&self, s: Complex64) -> Result<PhaseGradient, MapError> {
        let l = self.log_derivative(s)?;
        Ok(PhaseGradient {
            d_sigma: l.im,
            d_t: l.re,
        })
    }
}

impl Serialize for RationalMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.spec().serialize(serializer)
    }
}

/// Argument of `u + iv` by explicit quadrant cases, principal value in
/// `(-π, π]`. The third quadrant uses `-π + atan(v/u)`; the imaginary axis
/// (`u = 0`) gives `±π/2`.
pub fn four_quadrant_phase(u: f64, v: f64) -> f64 {
    if u > 0.0 {
        if v >= 0.0 {
            (v / u).atan()
        } else {
            -(-v / u).atan()
        }
    } else if u < 0.0 {
        if v >= 0.0 {
            PI - (v / -u).atan()
        } else {
            -PI + (v / u).atan()
        }
    } else if v > 0.0 {
        PI / 2.0
    } else if v < 0.0 {
        -PI / 2.0
    } else {
        f64::NAN
    }
}

/// Signed phase residual `φ - α` wrapped into `[-π, π)`.
pub fn wrapped_residual(phi: f64, alpha: f64) -> f64 {
    (phi - alpha + PI).rem_euclid(2.0 * PI) - PI
}

/// Distance on the circle `|((φ - α + π) mod 2π) - π|`.
pub fn phase_distance(phi: f64, alpha: f64) -> f64 {
    wrapped_residual(phi, alpha).abs()
}
