//! Deterministic runs: one command, one input, artifacts written to an output
//! directory. Identical configs produce byte-identical JSON and CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{MapError, PolyError, SmaleError, TraceError};
use crate::field::{phase_level_contours, phase_residual_field, sample_grid, BBox, Polyline};
use crate::numfmt::fmt_f64;
use crate::poly::Polynomial;
use crate::rational::{RationalMap, RationalMapSpec};
use crate::smale::{
    adjacent_domains_in, audit_theorems, AuditConfig, CounterexampleKind, Extremal, QuantifierStats, SmaleAuditReport,
    SmaleCase, SCHEMA_VERSION,
};
use crate::svg::Figure;
use crate::tracer::{trace_all, TraceOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Roots,
    Trace,
    Field,
    SmaleAudit,
    SmaleRegions,
    SmaleExtremal,
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    None,
    Polynomial(Polynomial),
    Map(RationalMapSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub degree_min: usize,
    pub degree_max: usize,
    /// Coefficients are uniform in `[−b, b] + i[−b, b]`.
    pub coeff_half_width: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n: 50,
            degree_min: 2,
            degree_max: 6,
            coeff_half_width: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Input,
    /// Defaults to the square of half-width twice the scene scale.
    pub bbox: Option<BBox>,
    pub resolution: (usize, usize),
    pub alpha: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
    pub n_samples: usize,
    /// Restricts `smale-regions` to one critical point.
    pub index: Option<usize>,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn new(command: Command, input: Input, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            input,
            bbox: None,
            resolution: (512, 512),
            alpha: None,
            seed: 0,
            out_dir: out_dir.into(),
            formats: vec![Format::Json, Format::Csv, Format::Svg],
            n_samples: 2000,
            index: None,
            sweep: SweepConfig::default(),
        }
    }

    fn wants(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let input = |msg: &str| Err(RunError::Input(msg.to_string()));
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return input("resolution components must be at least 2");
        }
        if let Some(b) = self.bbox {
            if !b.is_valid() {
                return input("bbox must be finite with sigma_min < sigma_max and t_min < t_max");
            }
        }
        if let Some(a) = self.alpha {
            if !a.is_finite() {
                return input("alpha must be finite");
            }
        }
        match (self.command, &self.input) {
            (
                Command::Roots | Command::SmaleAudit | Command::SmaleRegions | Command::SmaleExtremal,
                Input::Polynomial(p),
            ) => {
                if self.command != Command::Roots && p.degree() < 2 {
                    return input("polynomial degree must be at least 2");
                }
                if self.command == Command::Roots && p.degree() < 1 {
                    return input("polynomial degree must be at least 1");
                }
            }
            (Command::Trace | Command::Field, Input::Map(_)) => {}
            (Command::Sweep, Input::None) => {
                let s = &self.sweep;
                if s.n == 0 {
                    return input("sweep needs n >= 1");
                }
                if s.degree_min < 2 || s.degree_min > s.degree_max {
                    return input("sweep degree range must satisfy 2 <= min <= max");
                }
                if !(s.coeff_half_width.is_finite() && s.coeff_half_width > 0.0) {
                    return input("sweep coefficient box must be positive and finite");
                }
            }
            (Command::Roots | Command::SmaleAudit | Command::SmaleRegions | Command::SmaleExtremal, _) => {
                return input("this command takes a polynomial");
            }
            (Command::Trace | Command::Field, _) => return input("this command takes a rational map"),
            (Command::Sweep, _) => return input("sweep takes no input polynomial"),
        }
        if self.command == Command::Trace && self.alpha.is_none() {
            return input("trace needs alpha");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Input(String),
    #[error("{message}")]
    Numeric { message: String, diagnostic: Value },
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 1 for input and I/O errors, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Input(_) | RunError::Io(_) => 1,
            RunError::Numeric { .. } => 2,
        }
    }
}

fn poly_details(e: &PolyError) -> Value {
    match e {
        PolyError::NoConvergence {
            iterations,
            iterates,
            residuals,
            worst_residual,
        } => json!({
            "iterations": iterations,
            "iterates": iterates,
            "residuals": residuals,
            "worst_residual": worst_residual,
        }),
        _ => Value::Null,
    }
}

fn map_details(e: &MapError) -> Value {
    match e {
        MapError::Poly(p) => poly_details(p),
        MapError::Indeterminate { point } => json!({ "point": point }),
        MapError::Singular { point, kind } => json!({ "point": point, "kind": kind.to_string() }),
        MapError::ZeroPolynomial => Value::Null,
    }
}

fn numeric(message: String, details: Value) -> RunError {
    RunError::Numeric {
        diagnostic: json!({ "schema_version": SCHEMA_VERSION, "error": message, "details": details }),
        message,
    }
}

impl From<PolyError> for RunError {
    fn from(e: PolyError) -> Self {
        numeric(e.to_string(), poly_details(&e))
    }
}

impl From<MapError> for RunError {
    fn from(e: MapError) -> Self {
        numeric(e.to_string(), map_details(&e))
    }
}

impl From<TraceError> for RunError {
    fn from(e: TraceError) -> Self {
        let details = match &e {
            TraceError::Map(m) => map_details(m),
            TraceError::SeedDiverged { pole, eps } => json!({ "pole": pole, "eps": eps }),
            TraceError::SeedOffLocus { seed, residual } => json!({ "seed": seed, "residual": residual }),
            TraceError::TooShort => Value::Null,
        };
        numeric(e.to_string(), details)
    }
}

impl From<SmaleError> for RunError {
    fn from(e: SmaleError) -> Self {
        let details = match &e {
            SmaleError::Poly(p) => poly_details(p),
            SmaleError::Map(m) => map_details(m),
            _ => Value::Null,
        };
        numeric(e.to_string(), details)
    }
}

/// Caps the global rayon pool at `LOCUSLAB_THREADS` when set.
pub fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LOCUSLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("LOCUSLAB_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, &text)
    }
}

/// Runs `config` and returns the written artifact paths. Numeric failures
/// also leave `diagnostic.json` in the output directory.
pub fn run(config: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let mut out = Artifacts {
        dir: config.out_dir.clone(),
        written: Vec::new(),
    };
    let result = match config.command {
        Command::Roots => run_roots(config, &mut out),
        Command::Trace => run_trace(config, &mut out),
        Command::Field => run_field(config, &mut out),
        Command::SmaleAudit => run_audit(config, &mut out),
        Command::SmaleRegions => run_regions(config, &mut out),
        Command::SmaleExtremal => run_extremal(config, &mut out),
        Command::Sweep => run_sweep(config, &mut out),
    };
    if let Err(RunError::Numeric { diagnostic, .. }) = &result {
        let mut diag = diagnostic.clone();
        diag["command"] = json!(config.command);
        out.json("diagnostic.json", &diag)?;
    }
    result.map(|()| out.written)
}

fn polynomial(config: &RunConfig) -> &Polynomial {
    match &config.input {
        Input::Polynomial(p) => p,
        _ => unreachable!("validated"),
    }
}

fn map_spec(config: &RunConfig) -> &RationalMapSpec {
    match &config.input {
        Input::Map(m) => m,
        _ => unreachable!("validated"),
    }
}

#[derive(Serialize)]
struct RootRow {
    value: Complex64,
    multiplicity: usize,
    spread: f64,
    residual: f64,
}

fn run_roots(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let p = polynomial(config);
    let rows: Vec<RootRow> = p
        .clustered_roots()?
        .into_iter()
        .map(|c| RootRow {
            value: c.value,
            multiplicity: c.multiplicity,
            spread: c.spread,
            residual: p.eval(c.value).norm(),
        })
        .collect();
    if config.wants(Format::Json) {
        out.json(
            "roots.json",
            &json!({ "schema_version": SCHEMA_VERSION, "polynomial": p, "degree": p.degree(), "roots": rows }),
        )?;
    }
    if config.wants(Format::Csv) {
        let mut csv = String::from("re,im,multiplicity,spread,residual\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                fmt_f64(r.value.re),
                fmt_f64(r.value.im),
                r.multiplicity,
                fmt_f64(r.spread),
                fmt_f64(r.residual)
            );
        }
        out.write("roots.csv", &csv)?;
    }
    Ok(())
}

fn markers(fig: &mut Figure, w: &RationalMap) {
    for (k, z) in w.zeros().iter().enumerate() {
        fig.marker("zero", z.value, &format!("zero {k}"));
    }
    for (k, p) in w.poles().iter().enumerate() {
        fig.marker("pole", p.value, &format!("pole {k}"));
    }
}

fn run_trace(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let spec = map_spec(config);
    let w = RationalMap::from_spec(spec.clone())?;
    let alpha = config.alpha.expect("validated");
    let mut opts = TraceOptions::for_map(&w);
    if let Some(b) = config.bbox {
        opts = opts.with_bbox(b);
    }
    let traces = trace_all(&w, alpha, &opts)?;
    if config.wants(Format::Json) {
        out.json(
            "traces.json",
            &json!({
                "schema_version": SCHEMA_VERSION,
                "map": spec,
                "alpha": alpha,
                "options": opts,
                "traces": traces,
            }),
        )?;
    }
    if config.wants(Format::Csv) {
        for (k, t) in traces.iter().enumerate() {
            out.write(&format!("trace_{k}.csv"), &t.to_csv())?;
        }
    }
    if config.wants(Format::Svg) {
        let mut fig = Figure::new(opts.bbox);
        for t in &traces {
            let points: Vec<Complex64> = t.points.iter().map(|p| p.s).collect();
            let shade: Vec<f64> = t.points.iter().map(|p| p.gain / (1.0 + p.gain)).collect();
            fig.graded_polyline("locus", &points, &shade, 16);
        }
        markers(&mut fig, &w);
        out.write("trace.svg", &fig.finish(&format!("loci of phase {}", fmt_f64(alpha))))?;
    }
    Ok(())
}

fn run_field(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let spec = map_spec(config);
    let w = RationalMap::from_spec(spec.clone())?;
    let bbox = config.bbox.unwrap_or_else(|| TraceOptions::for_map(&w).bbox);
    let (nx, ny) = config.resolution;
    let gain = sample_grid(|s| w.gain(s), bbox, nx, ny);
    let residual = config.alpha.map(|a| phase_residual_field(&w, a, bbox, nx, ny));
    let contours: Vec<Polyline> = residual.as_ref().map(phase_level_contours).unwrap_or_default();
    if config.wants(Format::Json) {
        out.json(
            "field.json",
            &json!({
                "schema_version": SCHEMA_VERSION,
                "map": spec,
                "bbox": bbox,
                "resolution": [nx, ny],
                "alpha": config.alpha,
                "contours": contours,
            }),
        )?;
    }
    if config.wants(Format::Csv) {
        out.write("gain.csv", &gain.to_csv())?;
        if let Some(r) = &residual {
            out.write("phase_residual.csv", &r.to_csv())?;
        }
    }
    if config.wants(Format::Svg) {
        let mut fig = Figure::new(bbox);
        for c in &contours {
            fig.polyline("contour", &c.points, "#204080");
        }
        markers(&mut fig, &w);
        out.write("field.svg", &fig.finish("phase-level contours"))?;
    }
    Ok(())
}

fn case_and_bbox(config: &RunConfig) -> Result<(SmaleCase, BBox), RunError> {
    let case = SmaleCase::new(polynomial(config).clone())?;
    let bbox = config.bbox.unwrap_or_else(|| case.default_bbox());
    Ok((case, bbox))
}

fn theta_colour(i: usize, n: usize) -> String {
    crate::svg::ramp(if n <= 1 { 0.5 } else { i as f64 / (n - 1) as f64 })
}

fn critical_markers(fig: &mut Figure, case: &SmaleCase) {
    for (i, c) in case.critical_points.iter().enumerate() {
        fig.marker(
            "critical-point",
            c.point,
            &format!("theta {i} (multiplicity {})", c.multiplicity),
        );
    }
}

fn run_audit(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let (case, bbox) = case_and_bbox(config)?;
    let audit_config = AuditConfig {
        bbox,
        resolution: config.resolution,
        n_samples: config.n_samples,
        seed: config.seed,
        boundaries: true,
    };
    let report = audit_theorems(&case, &audit_config);
    if config.wants(Format::Json) {
        out.json("audit.json", &report)?;
    }
    if config.wants(Format::Csv) {
        let mut csv = String::from(
            "i,theta_re,theta_im,multiplicity,limit_at_theta,theta_in_region,regions,regions_without_critical_points,flagged_confirmed,quotient_gt1_inside,quotient_le1_outside\n",
        );
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for (i, t) in report.per_theta.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{i},{},{},{},{},{},{},{},{},{},{}",
                fmt_f64(t.theta.re),
                fmt_f64(t.theta.im),
                t.multiplicity,
                fmt_f64(t.limit_at_theta),
                t.theta_in_region,
                t.regions.len(),
                t.regions_without_critical_points,
                t.flagged_confirmed,
                opt(t.quotient_gt1_inside),
                opt(t.quotient_le1_outside)
            );
        }
        out.write("audit.csv", &csv)?;
    }
    if config.wants(Format::Svg) {
        let mut fig = Figure::new(bbox);
        let n = report.per_theta.len();
        for (i, t) in report.per_theta.iter().enumerate() {
            for r in &t.regions {
                fig.region(&r.boundary, &theta_colour(i, n));
            }
        }
        critical_markers(&mut fig, &case);
        fig.marker(
            "extremal",
            report.extremal.s,
            &format!("extremal {}", fmt_f64(report.extremal.value)),
        );
        out.write("audit.svg", &fig.finish("sublevel components of |W_i| < 1"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RegionOut {
    id: usize,
    cells: usize,
    area: f64,
    critical_points: Vec<usize>,
    boundary: Vec<Polyline>,
}

fn run_regions(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let (case, bbox) = case_and_bbox(config)?;
    let n = case.critical_points.len();
    let indices: Vec<usize> = match config.index {
        Some(i) if i >= n => {
            return Err(RunError::Input(format!("index {i} out of range: {n} critical points")));
        }
        Some(i) => vec![i],
        None => (0..n).collect(),
    };
    let fields: Vec<_> = indices
        .iter()
        .map(|&i| case.modulus_field(i, bbox, config.resolution))
        .collect();
    let per: Vec<Vec<RegionOut>> = (0..indices.len())
        .map(|k| {
            let cell_area =
                bbox.width() * bbox.height() / ((config.resolution.0 - 1) * (config.resolution.1 - 1)) as f64;
            adjacent_domains_in(&case, &fields[k])
                .into_iter()
                .map(|r| RegionOut {
                    id: r.id,
                    cells: r.cells.len(),
                    area: r.cells.len() as f64 * cell_area,
                    critical_points: r.contains,
                    boundary: r.boundary,
                })
                .collect()
        })
        .collect();
    if config.wants(Format::Json) {
        let per_theta: Vec<Value> = indices
            .iter()
            .zip(&per)
            .map(|(&i, regions)| json!({ "i": i, "theta": case.critical_points[i].point, "regions": regions }))
            .collect();
        out.json(
            "regions.json",
            &json!({
                "schema_version": SCHEMA_VERSION,
                "polynomial": case.f,
                "critical_points": case.critical_points,
                "bbox": bbox,
                "resolution": config.resolution,
                "per_theta": per_theta,
            }),
        )?;
    }
    if config.wants(Format::Csv) {
        for (&i, field) in indices.iter().zip(&fields) {
            out.write(&format!("modulus_{i}.csv"), &field.to_csv())?;
        }
    }
    if config.wants(Format::Svg) {
        for (&i, regions) in indices.iter().zip(&per) {
            let mut fig = Figure::new(bbox);
            for r in regions {
                fig.region(&r.boundary, &theta_colour(i, n));
            }
            critical_markers(&mut fig, &case);
            out.write(&format!("regions_{i}.svg"), &fig.finish(&format!("|W_{i}| < 1")))?;
        }
    }
    Ok(())
}

fn run_extremal(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let (case, bbox) = case_and_bbox(config)?;
    let e = crate::smale::extremal_search(&case.f, bbox, config.resolution)?;
    let (_, arg) = case.min_quotient(e.s);
    if config.wants(Format::Json) {
        out.json(
            "extremal.json",
            &json!({
                "schema_version": SCHEMA_VERSION,
                "polynomial": case.f,
                "bbox": bbox,
                "resolution": config.resolution,
                "s": e.s,
                "value": e.value,
                "argmin": arg,
            }),
        )?;
    }
    if config.wants(Format::Csv) {
        out.write(
            "extremal.csv",
            &format!(
                "sigma,t,value,argmin\n{},{},{},{arg}\n",
                fmt_f64(e.s.re),
                fmt_f64(e.s.im),
                fmt_f64(e.value)
            ),
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaVerdict {
    pub theta: Complex64,
    pub multiplicity: usize,
    pub limit_at_theta: f64,
    pub theta_in_region: bool,
    pub regions: usize,
    pub regions_without_critical_points: usize,
    pub flagged: usize,
    pub dismissed: usize,
    pub quotient_gt1_inside: Option<f64>,
    pub quotient_le1_outside: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceVerdict {
    /// Every component holds a zero of `W_i` or was dismissed at 2×.
    pub minimum_modulus: bool,
    /// No sample or extremal point had `min_i` quotient above 1.
    pub mean_value_inequality: bool,
    /// No `θ_i` had a neighbourhood with quotient above 1.
    pub neighborhood_claim: bool,
    /// Strict inside/outside samples agreed with `quotient = 1/|W_i|`.
    pub tautology: bool,
    pub replay: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub index: usize,
    pub polynomial: Polynomial,
    pub degree: usize,
    pub audit_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<InstanceVerdict>,
    pub per_theta: Vec<ThetaVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantifiers: Option<QuantifierStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extremal: Option<Extremal>,
    pub counterexamples: Vec<crate::smale::Counterexample>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTotals {
    pub instances: usize,
    pub completed: usize,
    pub failed: usize,
    pub regions: usize,
    pub regions_without_critical_points: usize,
    pub flagged: usize,
    pub dismissed: usize,
    pub theta_in_region: usize,
    pub counterexamples: BTreeMap<String, usize>,
    pub replay_failures: usize,
    pub verdicts: BTreeMap<String, usize>,
    pub max_extremal: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub resolution: (usize, usize),
    pub n_samples: usize,
    pub totals: SweepTotals,
    pub instances: Vec<InstanceReport>,
}

fn kind_name(kind: CounterexampleKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Random polynomial and audit seed for instance `k`; independent of every
/// other instance.
pub fn sweep_instance(sweep: &SweepConfig, seed: u64, k: usize) -> (Polynomial, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let degree = rng.gen_range(sweep.degree_min..=sweep.degree_max);
    let b = sweep.coeff_half_width;
    let coeffs: Vec<Complex64> = (0..=degree)
        .map(|_| Complex64::new(rng.gen_range(-b..=b), rng.gen_range(-b..=b)))
        .collect();
    (Polynomial::new(coeffs), rng.next_u64())
}

fn audit_instance(k: usize, f: Polynomial, audit_seed: u64, config: &RunConfig) -> InstanceReport {
    let degree = f.degree();
    let failed = |f: Polynomial, e: String| InstanceReport {
        index: k,
        polynomial: f,
        degree,
        audit_seed,
        error: Some(e),
        verdict: None,
        per_theta: Vec::new(),
        quantifiers: None,
        extremal: None,
        counterexamples: Vec::new(),
    };
    let case = match SmaleCase::new(f.clone()) {
        Ok(c) => c,
        Err(e) => return failed(f, e.to_string()),
    };
    let audit_config = AuditConfig {
        bbox: config.bbox.unwrap_or_else(|| case.default_bbox()),
        resolution: config.resolution,
        n_samples: config.n_samples,
        seed: audit_seed,
        boundaries: false,
    };
    let report: SmaleAuditReport = audit_theorems(&case, &audit_config);
    let per_theta: Vec<ThetaVerdict> = report
        .per_theta
        .iter()
        .map(|t| ThetaVerdict {
            theta: t.theta,
            multiplicity: t.multiplicity,
            limit_at_theta: t.limit_at_theta,
            theta_in_region: t.theta_in_region,
            regions: t.regions.len(),
            regions_without_critical_points: t.regions_without_critical_points,
            flagged: t.regions.iter().filter(|r| r.flagged).count(),
            dismissed: t.regions.iter().filter(|r| r.dismissed).count(),
            quotient_gt1_inside: t.quotient_gt1_inside,
            quotient_le1_outside: t.quotient_le1_outside,
        })
        .collect();
    let has = |kind: CounterexampleKind| report.counterexamples.iter().any(|c| c.kind == kind);
    let verdict = InstanceVerdict {
        minimum_modulus: report.per_theta.iter().all(|t| t.flagged_confirmed == 0),
        mean_value_inequality: !has(CounterexampleKind::SmaleInequality),
        neighborhood_claim: !has(CounterexampleKind::NeighborhoodClaim),
        tautology: !has(CounterexampleKind::InsideQuotientLe1) && !has(CounterexampleKind::OutsideQuotientGt1),
        replay: report
            .counterexamples
            .iter()
            .all(|c| c.replay(&case.f, &case.critical_points)),
    };
    InstanceReport {
        index: k,
        polynomial: f,
        degree,
        audit_seed,
        error: None,
        verdict: Some(verdict),
        per_theta,
        quantifiers: Some(report.quantifiers),
        extremal: Some(report.extremal),
        counterexamples: report.counterexamples,
    }
}

/// Audits `sweep.n` seeded random polynomials. Instances run in parallel and
/// are aggregated in index order.
pub fn sweep(config: &RunConfig) -> SweepReport {
    let instances: Vec<InstanceReport> = (0..config.sweep.n)
        .into_par_iter()
        .map(|k| {
            let (f, audit_seed) = sweep_instance(&config.sweep, config.seed, k);
            audit_instance(k, f, audit_seed, config)
        })
        .collect();
    let mut totals = SweepTotals {
        instances: instances.len(),
        ..SweepTotals::default()
    };
    for inst in &instances {
        let Some(v) = &inst.verdict else {
            totals.failed += 1;
            continue;
        };
        totals.completed += 1;
        for t in &inst.per_theta {
            totals.regions += t.regions;
            totals.regions_without_critical_points += t.regions_without_critical_points;
            totals.flagged += t.flagged;
            totals.dismissed += t.dismissed;
            totals.theta_in_region += usize::from(t.theta_in_region);
        }
        for c in &inst.counterexamples {
            *totals.counterexamples.entry(kind_name(c.kind)).or_default() += 1;
        }
        totals.replay_failures += usize::from(!v.replay);
        for (name, held) in [
            ("minimum_modulus", v.minimum_modulus),
            ("mean_value_inequality", v.mean_value_inequality),
            ("neighborhood_claim", v.neighborhood_claim),
            ("tautology", v.tautology),
        ] {
            *totals.verdicts.entry(name.to_string()).or_default() += usize::from(held);
        }
        if let Some(e) = &inst.extremal {
            totals.max_extremal = Some(totals.max_extremal.map_or(e.value, |m: f64| m.max(e.value)));
        }
    }
    SweepReport {
        schema_version: SCHEMA_VERSION,
        sweep: config.sweep.clone(),
        seed: config.seed,
        resolution: config.resolution,
        n_samples: config.n_samples,
        totals,
        instances,
    }
}

fn run_sweep(config: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let report = sweep(config);
    if config.wants(Format::Json) {
        out.json("sweep.json", &report)?;
    }
    if config.wants(Format::Csv) {
        let mut csv = String::from("index,degree,status,regions,flagged,dismissed,counterexamples,extremal\n");
        for inst in &report.instances {
            let status = if inst.error.is_some() { "failed" } else { "ok" };
            let sum = |f: fn(&ThetaVerdict) -> usize| inst.per_theta.iter().map(f).sum::<usize>();
            let _ = writeln!(
                csv,
                "{},{},{status},{},{},{},{},{}",
                inst.index,
                inst.degree,
                sum(|t| t.regions),
                sum(|t| t.flagged),
                sum(|t| t.dismissed),
                inst.counterexamples.len(),
                inst.extremal.map(|e| fmt_f64(e.value)).unwrap_or_default()
            );
        }
        out.write("sweep.csv", &csv)?;
    }
    Ok(())
}

/// Serialized sweep report, the exact bytes `run` writes to `sweep.json`.
pub fn sweep_json(report: &SweepReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("sweep report serializes");
    text.push('\n');
    text
}

/// Reads a JSON artifact back, for tests and downstream tools.
pub fn read_json(path: &Path) -> std::io::Result<Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
