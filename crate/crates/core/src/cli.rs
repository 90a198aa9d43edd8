//! Command-line front end. Exit codes: 0 pass, 2 usage or input error,
//! 3 a tolerance or geometric check failed, 4 a solver did not converge.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::pipeline::{self, ConfigFile, PipelineConfig, Report, Source, EXIT_PASS, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "minding-lab", version, about = "Numerical checks for K = -1 surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a Chebyshev net from an angle field.
    Synthesize(Common),
    /// First and second fundamental forms and Gauss curvature.
    Metric(Common),
    /// Conformal flattening to an isothermic chart.
    Flatten(Common),
    /// Weak Liouville residuals and the Poisson bootstrap.
    LiouvilleCheck(Common),
    /// Newton solve of the Dirichlet problem for Δu = e^{2u}.
    Solve(Common),
    /// Developing map into the Poincaré disk.
    Develop(Common),
    /// Whole chain: curvature, chart, Liouville, developing map, pullback.
    VerifyMinding(Common),
    /// CSV exports of field files found in the output directory.
    ExportPlots(Common),
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// JSON file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Catalog chart or built-in source (one_soliton, right_angle,
    /// flat_plane, sphere_patch, half_plane_pseudosphere,
    /// poincare_disk_patch, flat_constant_angle[:alpha]).
    #[arg(long)]
    pub source: Option<String>,
    /// Angle field file with channel `theta`.
    #[arg(long)]
    pub theta_file: Option<PathBuf>,
    /// Surface file with channels `f.x`, `f.y`, `f.z`.
    #[arg(long)]
    pub surface_file: Option<PathBuf>,
    /// Conformal factor file with channel `u`.
    #[arg(long)]
    pub u_file: Option<PathBuf>,
    /// Nodes per axis (default 128).
    #[arg(long)]
    pub n: Option<usize>,
    /// Multiplier on every tolerance.
    #[arg(long)]
    pub tol_scale: Option<f64>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the random test-function family.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite existing plot exports.
    #[arg(long)]
    pub force: bool,
    /// Constant added to the Dirichlet data (`solve`).
    #[arg(long, allow_hyphen_values = true)]
    pub boundary_shift: Option<f64>,
}

impl Common {
    /// Flags win over the config file.
    pub fn resolve(&self, default_source: &str) -> Result<PipelineConfig> {
        let file = match &self.config {
            Some(p) => ConfigFile::read(p)?,
            None => ConfigFile::default(),
        };
        let theta = self.theta_file.clone().or(file.theta_file);
        let surface = self.surface_file.clone().or(file.surface_file);
        let ufile = self.u_file.clone().or(file.u_file);
        let named = self.source.clone().or(file.source);
        let given = [theta.is_some(), surface.is_some(), ufile.is_some(), named.is_some()];
        if given.iter().filter(|b| **b).count() > 1 {
            return Err(Error::InvalidInput(
                "give at most one of --source, --theta-file, --surface-file, --u-file".into(),
            ));
        }
        let source = match (theta, surface, ufile, named) {
            (Some(p), ..) => Source::ThetaFile(p),
            (_, Some(p), ..) => Source::SurfaceFile(p),
            (_, _, Some(p), _) => Source::FactorFile(p),
            (_, _, _, Some(s)) => s.parse()?,
            _ => default_source.parse()?,
        };
        Ok(PipelineConfig {
            n: self.n.or(file.n).unwrap_or(128),
            source,
            tol_scale: self.tol_scale.or(file.tol_scale).unwrap_or(1.0),
            out: self.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            seed: self.seed.or(file.seed),
            force: self.force || file.force.unwrap_or(false),
            boundary_shift: self.boundary_shift.or(file.boundary_shift).unwrap_or(0.0),
        })
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("MINDING_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn summarize(r: &Report) {
    for s in &r.stages {
        let mark = if s.passed { "ok  " } else { "FAIL" };
        match &s.detail {
            Some(d) => println!("{mark} {:<22} {d}", s.stage),
            None => println!("{mark} {:<22} {:.3e} (tol {:.3e})", s.stage, s.value, s.tolerance),
        }
    }
    println!(
        "{}: {} [{} n={} h={:.4e}] exit {}",
        r.command,
        if r.passed { "passed" } else { "failed" },
        r.source,
        r.n,
        r.h,
        r.exit_code
    );
}

pub fn run(cli: Cli) -> Result<i32> {
    configure_threads();
    let (common, default_source, f): (&Common, &str, fn(&PipelineConfig) -> Result<Report>) = match &cli.command {
        Command::Synthesize(c) => (c, "one_soliton", pipeline::run_synthesize),
        Command::Metric(c) => (c, "one_soliton", pipeline::run_metric),
        Command::Flatten(c) => (c, "one_soliton", pipeline::run_flatten),
        Command::LiouvilleCheck(c) => (c, "half_plane_pseudosphere", pipeline::run_liouville_check),
        Command::Solve(c) => (c, "half_plane_pseudosphere", pipeline::run_solve),
        Command::Develop(c) => (c, "half_plane_pseudosphere", pipeline::run_develop),
        Command::VerifyMinding(c) => (c, "one_soliton", pipeline::run_verify_minding),
        Command::ExportPlots(c) => {
            let cfg = c.resolve("one_soliton")?;
            for p in pipeline::run_export_plots(&cfg)? {
                println!("{}", p.display());
            }
            return Ok(EXIT_PASS);
        }
    };
    let cfg = common.resolve(default_source)?;
    let report = f(&cfg)?;
    summarize(&report);
    Ok(report.exit_code)
}

pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            pipeline::exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(a: &[&str]) -> Vec<OsString> {
        std::iter::once("minding-lab").chain(a.iter().copied()).map(OsString::from).collect()
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(args(&["nonsense"])), EXIT_USAGE);
        assert_eq!(main_with_args(args(&["solve", "--n", "abc"])), EXIT_USAGE);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main_with_args(args(&["metric", "--source", "torus", "--out", out])), EXIT_USAGE);
        assert_eq!(main_with_args(args(&["export-plots", "--out", out])), EXIT_USAGE);
        assert_eq!(
            main_with_args(args(&["metric", "--source", "one_soliton", "--u-file", "x.json", "--out", out])),
            EXIT_USAGE
        );
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.json");
        std::fs::write(&cfg_path, r#"{"n": 40, "tol_scale": 2.0, "source": "poincare_disk_patch", "seed": 7}"#)
            .unwrap();
        let c = Common {
            config: Some(cfg_path.clone()),
            n: Some(20),
            ..Default::default()
        };
        let r = c.resolve("one_soliton").unwrap();
        assert_eq!(r.n, 20);
        assert_eq!(r.tol_scale, 2.0);
        assert_eq!(r.seed, Some(7));
        assert_eq!(r.source.to_string(), "poincare_disk_patch");
        std::fs::write(&cfg_path, r#"{"bogus": 1}"#).unwrap();
        assert!(c.resolve("one_soliton").is_err());
    }

    #[test]
    fn tolerance_failure_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(
            main_with_args(args(&["synthesize", "--source", "right_angle", "--n", "17", "--out", out])),
            3
        );
        assert_eq!(
            main_with_args(args(&["synthesize", "--n", "33", "--out", out, "--tol-scale", "1"])),
            0
        );
    }
}
