//! Dense complex polynomials with ascending coefficients.
//!
//! Horner evaluation and synthetic division walk the coefficient vector in
//! the same direction, so the divided-difference polynomial
//! `Q_θ(s) = (f(s) - f(θ)) / (s - θ)` falls out of one pass.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ParseError, PolyError};
use crate::numfmt::fmt_f64;

/// A point of the complex plane, `σ + i t`.
pub type ComplexScalar = Complex64;

const EPS: f64 = f64::EPSILON;

/// Polynomial `a_0 + a_1 z + ... + a_n z^n`.
///
/// Trailing zero coefficients are trimmed on construction, so the leading
/// coefficient is nonzero unless the polynomial is identically zero (stored as
/// the single coefficient `0`).
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::new(0.0, 0.0));
        }
        Polynomial { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        Self::new(vec![])
    }

    pub fn constant(c: Complex64) -> Self {
        Self::new(vec![c])
    }

    /// `c z^k`
    pub fn monomial(c: Complex64, k: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k + 1];
        coeffs[k] = c;
        Self::new(coeffs)
    }

    /// Monic polynomial with the given roots, expanded.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut p = Self::constant(Complex64::new(1.0, 0.0));
        for &r in roots {
            p = &p * &Self::new(vec![-r, Complex64::new(1.0, 0.0)]);
        }
        p
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == Complex64::new(0.0, 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Horner evaluation.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
    }

    /// Horner evaluation together with `Σ |a_k| |s|^k`, the magnitude that
    /// bounds the rounding error of the evaluation.
    pub fn eval_with_bound(&self, s: Complex64) -> (Complex64, f64) {
        let r = s.norm();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut bound = 0.0;
        for &a in self.coeffs.iter().rev() {
            acc = acc * s + a;
            bound = bound * r + a.norm();
        }
        (acc, bound)
    }

    /// Coefficients `k a_k` shifted down one degree. A constant maps to the
    /// zero polynomial.
    pub fn derivative(&self) -> Self {
        if self.degree() == 0 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &a)| a * k as f64)
                .collect(),
        )
    }

    /// Synthetic division by `(z - root)`: returns the quotient and the
    /// remainder, which equals `p(root)`.
    pub fn deflate(&self, root: Complex64) -> (Self, Complex64) {
        let n = self.degree();
        if n == 0 {
            return (Self::zero(), self.coeffs[0]);
        }
        let mut q = vec![Complex64::new(0.0, 0.0); n];
        q[n - 1] = self.coeffs[n];
        for k in (1..n).rev() {
            q[k - 1] = self.coeffs[k] + root * q[k];
        }
        let rem = self.coeffs[0] + root * q[0];
        (Self::new(q), rem)
    }

    /// The divided-difference polynomial `Q_θ` of degree `n - 1`, satisfying
    /// `f(s) - f(θ) = (s - θ) Q_θ(s)` identically. Coefficients follow
    /// `b_{n-1} = a_n`, `b_{k-1} = a_k + θ b_k`.
    pub fn divided_difference(&self, theta: Complex64) -> Self {
        self.deflate(theta).0
    }

    /// Taylor coefficients `p^{(k)}(c) / k!` for `k = 0..count`.
    pub fn taylor_coefficients(&self, c: Complex64, count: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(count);
        let mut cur = self.clone();
        for _ in 0..count {
            let (q, r) = cur.deflate(c);
            out.push(r);
            cur = q;
        }
        out
    }

    /// Drops leading coefficients whose magnitude is at most
    /// `rel * max |a_k|`, for products where the top terms cancel in exact
    /// arithmetic.
    pub fn trimmed(&self, rel: f64) -> Self {
        let cutoff = rel * self.max_abs_coeff();
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && coeffs.last().unwrap().norm() <= cutoff {
            coeffs.pop();
        }
        Self::new(coeffs)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::new(self.coeffs.iter().map(|&a| a * c).collect())
    }

    /// `max |a_k| * max(1, |r|)^n`, the yardstick for root residuals.
    pub fn residual_scale(&self, r: Complex64) -> f64 {
        self.max_abs_coeff() * r.norm().max(1.0).powi(self.degree() as i32)
    }

    /// All `degree` roots with multiplicity, by Aberth–Ehrlich iteration.
    pub fn roots(&self) -> Result<Vec<Complex64>, PolyError> {
        self.roots_with(&RootOptions::default())
    }

    pub fn roots_with(&self, opts: &RootOptions) -> Result<Vec<Complex64>, PolyError> {
        aberth_ehrlich(self, opts)
    }

    /// Roots grouped into numerically coincident clusters.
    pub fn clustered_roots(&self) -> Result<Vec<RootCluster>, PolyError> {
        self.clustered_roots_with(&RootOptions::default())
    }

    pub fn clustered_roots_with(&self, opts: &RootOptions) -> Result<Vec<RootCluster>, PolyError> {
        let roots = self.roots_with(opts)?;
        Ok(cluster_roots(self, &roots, opts.cluster_radius))
    }
}

#[derive(Clone, Debug)]
pub struct RootOptions {
    /// Residual tolerance relative to [`Polynomial::residual_scale`].
    pub tol: f64,
    pub max_iters: usize,
    /// Clustering radius relative to `max(1, max |root|)`.
    pub cluster_radius: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            tol: 1e-9,
            max_iters: 200,
            cluster_radius: 1e-6,
        }
    }
}

/// A group of numerically coincident roots reported as one root of the given
/// multiplicity. `value` is the cluster centroid; `spread` the largest member
/// distance from it.
#[derive(Clone, Debug, PartialEq)]
pub struct RootCluster {
    pub value: Complex64,
    pub multiplicity: usize,
    pub spread: f64,
}

fn aberth_ehrlich(p: &Polynomial, opts: &RootOptions) -> Result<Vec<Complex64>, PolyError> {
    let n = p.degree();
    if n == 0 {
        return Err(PolyError::DegreeTooLow { degree: 0, required: 1 });
    }
    // Exact zero roots come straight from vanishing low-order coefficients.
    let zero = Complex64::new(0.0, 0.0);
    let n_zero = p.coeffs.iter().take_while(|&&c| c == zero).count();
    let mut roots = vec![zero; n_zero];
    let reduced = Polynomial::new(p.coeffs[n_zero..].to_vec());
    let m = reduced.degree();
    if m == 0 {
        return Ok(roots);
    }
    let lead = reduced.leading();
    let monic = reduced.scale(lead.inv());
    if m == 1 {
        roots.push(-monic.coeffs[0]);
        return Ok(roots);
    }
    let dmonic = monic.derivative();
    let radius = 1.0 + monic.coeffs[..m].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / m as f64 + 0.4 + 0.05 * (k as f64 / m as f64);
            Complex64::from_polar(radius, angle)
        })
        .collect();
    let abs_tol = 1e-15 * radius;
    let mut done = vec![false; m];
    let mut iterations = 0;
    while iterations < opts.max_iters && done.iter().any(|d| !d) {
        iterations += 1;
        for i in 0..m {
            if done[i] {
                continue;
            }
            let (pv, bound) = monic.eval_with_bound(z[i]);
            if pv.norm() <= 4.0 * m as f64 * EPS * bound {
                done[i] = true;
                continue;
            }
            let dv = dmonic.eval(z[i]);
            if dv.norm() == 0.0 {
                z[i] += Complex64::from_polar(abs_tol.max(1e-8), 0.7 * (i + 1) as f64);
                continue;
            }
            let ratio = pv / dv;
            let sum: Complex64 = (0..m)
                .filter(|&j| j != i && z[j] != z[i])
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * sum);
            if !w.re.is_finite() || !w.im.is_finite() {
                continue;
            }
            z[i] -= w;
            let stalled = w.norm() <= 2.0 * EPS * z[i].norm() || w.norm() <= abs_tol;
            // A tiny step alone is not convergence: the Cauchy radius can be
            // huge when the leading coefficient is small.
            if stalled && p.eval(z[i]).norm() <= opts.tol * p.residual_scale(z[i]) {
                done[i] = true;
            }
        }
    }
    let residuals: Vec<f64> = z.iter().map(|&r| p.eval(r).norm() / p.residual_scale(r)).collect();
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst.is_nan() || worst > opts.tol {
        return Err(PolyError::NoConvergence {
            iterations,
            iterates: z,
            residuals,
            worst_residual: worst,
        });
    }
    roots.extend(z);
    Ok(roots)
}

/// Groups `roots` of `p` into clusters.
///
/// Roots closer than `radius * max(1, max |root|)` are always merged. Larger
/// groups are merged when their spread is within the perturbation radius of an
/// `m`-fold root at working precision, `(noise / |p^{(m)}(c)/m!|)^{1/m}`.
pub fn cluster_roots(p: &Polynomial, roots: &[Complex64], radius: f64) -> Vec<RootCluster> {
    let scale = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    let r_abs = radius * scale;
    let n = p.degree().max(1) as f64;
    let mut groups: Vec<Vec<Complex64>> = roots.iter().map(|&r| vec![r]).collect();

    let centroid = |g: &[Complex64]| g.iter().sum::<Complex64>() / g.len() as f64;
    let spread = |g: &[Complex64], c: Complex64| g.iter().map(|z| (z - c).norm()).fold(0.0, f64::max);
    // Beyond `r_abs`, a group is an `m`-fold root only if the Taylor terms
    // below order `m` at its centroid are rounding noise over its spread.
    let allowed = |g: &[Complex64], c: Complex64, sp: f64| -> bool {
        let m = g.len();
        let taylor = p.taylor_coefficients(c, m + 1);
        let lead = taylor[m].norm();
        let (_, bound) = p.eval_with_bound(c);
        let noise = 4.0 * n * EPS * bound.max(f64::MIN_POSITIVE);
        if lead <= noise {
            return false;
        }
        let slack = 64.0 * 2f64.powi(m as i32) * noise;
        let lower_is_noise = (0..m).all(|k| taylor[k].norm() * sp.powi(k as i32) <= slack);
        lower_is_noise && sp <= 8.0 * (noise / lead).powf(1.0 / m as f64)
    };

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let ca = centroid(&groups[a]);
                let cb = centroid(&groups[b]);
                let d = (ca - cb).norm();
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    let mut merged = groups[a].clone();
                    merged.extend_from_slice(&groups[b]);
                    let c = centroid(&merged);
                    let sp = spread(&merged, c);
                    if sp <= r_abs || allowed(&merged, c, sp) {
                        best = Some((d, a, b));
                    }
                }
            }
        }
        match best {
            Some((_, a, b)) => {
                let gb = groups.remove(b);
                groups[a].extend(gb);
            }
            None => break,
        }
    }

    let mut clusters: Vec<RootCluster> = groups
        .iter()
        .map(|g| {
            let c = centroid(g);
            let sp = spread(g, c);
            RootCluster {
                value: refine_multiple_root(p, c, g.len(), sp.max(r_abs)),
                multiplicity: g.len(),
                spread: sp,
            }
        })
        .collect();
    clusters.sort_by(|x, y| {
        x.value
            .re
            .total_cmp(&y.value.re)
            .then(x.value.im.total_cmp(&y.value.im))
    });
    clusters
}

/// An `m`-fold root of `p` is a simple root of `p^{(m-1)}`; Newton on that
/// derivative sharpens the cluster centroid. Steps leaving the cluster
/// neighbourhood are rejected.
fn refine_multiple_root(p: &Polynomial, c: Complex64, m: usize, reach: f64) -> Complex64 {
    if m < 2 {
        return c;
    }
    let mut d = p.clone();
    for _ in 0..m - 1 {
        d = d.derivative();
    }
    let dd = d.derivative();
    let mut z = c;
    for _ in 0..8 {
        let den = dd.eval(z);
        if den.norm() == 0.0 {
            break;
        }
        let step = d.eval(z) / den;
        if step.norm().is_nan() || step.norm() >= reach || (z - step - c).norm() > 2.0 * reach {
            break;
        }
        z -= step;
        if step.norm() <= 4.0 * EPS * z.norm().max(1.0) {
            break;
        }
    }
    z
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = Complex64::new(0.0, 0.0);
        Polynomial::new(
            (0..n)
                .map(|k| *self.coeffs.get(k).unwrap_or(&zero) + *rhs.coeffs.get(k).unwrap_or(&zero))
                .collect(),
        )
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

fn fmt_coeff(c: Complex64) -> String {
    if c.im == 0.0 {
        fmt_f64(c.re)
    } else {
        let sign = if c.im.is_sign_negative() { "" } else { "+" };
        format!("{}{}{}i", fmt_f64(c.re), sign, fmt_f64(c.im))
    }
}

/// Comma-separated ascending coefficients, each `a` or `a±bi`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|&c| fmt_coeff(c)).collect();
        f.write_str(&parts.join(","))
    }
}

fn parse_real(text: &str, position: usize) -> Result<f64, ParseError> {
    let v: f64 = text.parse().map_err(|_| ParseError {
        position,
        message: format!("invalid number `{text}`"),
    })?;
    if !v.is_finite() {
        return Err(ParseError {
            position,
            message: format!("non-finite number `{text}`"),
        });
    }
    Ok(v)
}

fn parse_coeff(item: &str, position: usize) -> Result<Complex64, ParseError> {
    if item.is_empty() {
        return Err(ParseError {
            position,
            message: "empty coefficient".into(),
        });
    }
    let Some(body) = item.strip_suffix('i') else {
        return Ok(Complex64::new(parse_real(item, position)?, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re_text, im_text, im_pos) = match split {
        Some(k) => (&body[..k], &body[k..], position + k),
        None => ("", body, position),
    };
    let re = if re_text.is_empty() {
        0.0
    } else {
        parse_real(re_text, position)?
    };
    let im = match im_text {
        "" | "+" => 1.0,
        "-" => -1.0,
        t => parse_real(t, im_pos)?,
    };
    Ok(Complex64::new(re, im))
}

impl FromStr for Polynomial {
    type Err = ParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut coeffs = Vec::new();
        let mut offset = 0;
        for raw in text.split(',') {
            let lead = raw.len() - raw.trim_start().len();
            coeffs.push(parse_coeff(raw.trim(), offset + lead)?);
            offset += raw.len() + 1;
        }
        Ok(Polynomial::new(coeffs))
    }
}

/// JSON form: array of `[re, im]` pairs.
impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coeffs.iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(deserializer)?;
        Ok(Polynomial::new(
            pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect(),
        ))
    }
}
