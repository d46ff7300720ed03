use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locuslab::field::BBox;
use locuslab::report::{configure_threads, run, Command, Format, Input, RunConfig, RunError, SweepConfig};
use locuslab::{ParseError, Polynomial, RationalMapSpec};

/// Constant-phase root loci of rational maps and the mean value audit.
#[derive(Parser)]
#[command(name = "locuslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Roots of a polynomial with multiplicities.
    Roots {
        #[command(flatten)]
        poly: PolyArg,
        #[command(flatten)]
        common: Common,
    },
    /// Trace every locus of phase alpha from its pole.
    Trace {
        #[command(flatten)]
        map: MapArgs,
        /// Target phase in radians.
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Sample the gain field and, with --alpha, the phase-level contours.
    Field {
        #[command(flatten)]
        map: MapArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Audit the per-critical-point maps W_i = f'/Q_i.
    SmaleAudit {
        #[command(flatten)]
        poly: PolyArg,
        /// Random samples per critical point.
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Components of {|W_i| < 1}.
    SmaleRegions {
        #[command(flatten)]
        poly: PolyArg,
        /// Only this critical point.
        #[arg(long)]
        index: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Maximize the smallest quotient over the critical points.
    SmaleExtremal {
        #[command(flatten)]
        poly: PolyArg,
        #[command(flatten)]
        common: Common,
    },
    /// Audit seeded random polynomials into one batch report.
    Sweep {
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Degree range `min,max`.
        #[arg(long, default_value = "2,6")]
        degrees: String,
        /// Coefficients are uniform in [-b, b] + i[-b, b].
        #[arg(long, default_value_t = 1.0)]
        coeff_box: f64,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct PolyArg {
    /// Ascending coefficients, e.g. `0,-4,0,0,1` for z^4 - 4z.
    #[arg(long, allow_hyphen_values = true)]
    poly: String,
}

#[derive(Args)]
struct MapArgs {
    /// Numerator coefficients, ascending.
    #[arg(long, allow_hyphen_values = true)]
    num: String,
    /// Denominator coefficients, ascending.
    #[arg(long, allow_hyphen_values = true)]
    den: String,
}

#[derive(Args)]
struct Common {
    /// `sigma_min,sigma_max,t_min,t_max`.
    #[arg(long, allow_hyphen_values = true)]
    bbox: Option<String>,
    /// Grid nodes `nx,ny`.
    #[arg(long, default_value = "512,512")]
    resolution: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json,csv,svg")]
    format: Vec<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

fn annotate(flag: &str, text: &str, e: &ParseError) -> String {
    format!(
        "--{flag} at position {}: {}\n  {text}\n  {}^",
        e.position,
        e.message,
        " ".repeat(e.position)
    )
}

fn parse_poly(flag: &str, text: &str) -> Result<Polynomial, String> {
    text.parse().map_err(|e| annotate(flag, text, &e))
}

fn parse_reals(flag: &str, text: &str, count: usize) -> Result<Vec<f64>, String> {
    let mut values = Vec::with_capacity(count);
    let mut offset = 0;
    for raw in text.split(',') {
        let lead = raw.len() - raw.trim_start().len();
        let v: f64 = raw.trim().parse().map_err(|_| {
            annotate(
                flag,
                text,
                &ParseError {
                    position: offset + lead,
                    message: format!("invalid number `{}`", raw.trim()),
                },
            )
        })?;
        values.push(v);
        offset += raw.len() + 1;
    }
    if values.len() != count {
        return Err(format!(
            "--{flag} needs {count} comma-separated values, got {}",
            values.len()
        ));
    }
    Ok(values)
}

fn parse_counts(flag: &str, text: &str) -> Result<(usize, usize), String> {
    let v = parse_reals(flag, text, 2)?;
    if v.iter().any(|x| x.fract() != 0.0 || *x < 0.0 || !x.is_finite()) {
        return Err(format!("--{flag} needs two non-negative integers, got `{text}`"));
    }
    Ok((v[0] as usize, v[1] as usize))
}

fn apply_common(config: &mut RunConfig, common: &Common) -> Result<(), String> {
    if let Some(b) = &common.bbox {
        let v = parse_reals("bbox", b, 4)?;
        config.bbox = Some(BBox::new(v[0], v[1], v[2], v[3]));
    }
    config.resolution = parse_counts("resolution", &common.resolution)?;
    config.seed = common.seed;
    let mut formats: Vec<Format> = common
        .format
        .iter()
        .map(|f| match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
        })
        .collect();
    formats.sort();
    formats.dedup();
    config.formats = formats;
    Ok(())
}

fn map_input(map: &MapArgs) -> Result<Input, String> {
    Ok(Input::Map(RationalMapSpec {
        num: parse_poly("num", &map.num)?,
        den: parse_poly("den", &map.den)?,
    }))
}

fn build_config(cmd: Cmd) -> Result<RunConfig, String> {
    let (config, common) = match cmd {
        Cmd::Roots { poly, common } => {
            let p = parse_poly("poly", &poly.poly)?;
            (
                RunConfig::new(Command::Roots, Input::Polynomial(p), &common.out),
                common,
            )
        }
        Cmd::Trace { map, alpha, common } => {
            let mut c = RunConfig::new(Command::Trace, map_input(&map)?, &common.out);
            c.alpha = Some(alpha);
            (c, common)
        }
        Cmd::Field { map, alpha, common } => {
            let mut c = RunConfig::new(Command::Field, map_input(&map)?, &common.out);
            c.alpha = alpha;
            (c, common)
        }
        Cmd::SmaleAudit { poly, samples, common } => {
            let p = parse_poly("poly", &poly.poly)?;
            let mut c = RunConfig::new(Command::SmaleAudit, Input::Polynomial(p), &common.out);
            c.n_samples = samples;
            (c, common)
        }
        Cmd::SmaleRegions { poly, index, common } => {
            let p = parse_poly("poly", &poly.poly)?;
            let mut c = RunConfig::new(Command::SmaleRegions, Input::Polynomial(p), &common.out);
            c.index = index;
            (c, common)
        }
        Cmd::SmaleExtremal { poly, common } => {
            let p = parse_poly("poly", &poly.poly)?;
            (
                RunConfig::new(Command::SmaleExtremal, Input::Polynomial(p), &common.out),
                common,
            )
        }
        Cmd::Sweep {
            n,
            degrees,
            coeff_box,
            samples,
            common,
        } => {
            let (degree_min, degree_max) = parse_counts("degrees", &degrees)?;
            let mut c = RunConfig::new(Command::Sweep, Input::None, &common.out);
            c.sweep = SweepConfig {
                n,
                degree_min,
                degree_max,
                coeff_half_width: coeff_box,
            };
            c.n_samples = samples;
            (c, common)
        }
    };
    let mut config = config;
    apply_common(&mut config, &common)?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let config = match build_config(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&config) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let RunError::Numeric { diagnostic, .. } = &e {
                eprintln!("{}", serde_json::to_string_pretty(diagnostic).unwrap_or_default());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
