//! Batch front end for the MZI mesh toolkit: compile unitaries to phase
//! programs, simulate scattering under imperfections, synthesize and fit
//! calibration fringes, scan Hong-Ou-Mandel dips, and build fidelity
//! reports.
//!
//! Exit codes: 0 success, 2 input error, 3 validation error (non-unitary
//! matrix, with the worst deviation reported), 4 numerical error.

mod manifest;

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use meshsim::calibration::{
    extinction_ratio, fit_fringe, synthesize_fringe, CalibrationCurve, HeaterModel,
};
use meshsim::compiler::decompose;
use meshsim::matrix::{is_unitary, unitarity_deviation, ComplexMatrix, UnitaryMatrix};
use meshsim::mesh::{forward, mesh_layout, ImperfectionModel, PhaseConfig};
use meshsim::quantum::{
    average_visibility, default_delay_grid, hom_scan, HomCurve, SourceModel,
};
use meshsim::targets::{fidelity_report, BinaryMask, IntensityMatrix, TargetFamily};
use meshsim::Error as CoreError;

use manifest::{OutputSet, RunManifest};

/// Looser unitarity tolerance for matrices arriving from files.
const INGEST_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "meshsim", version, about = "Programmable MZI mesh compiler and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a unitary matrix (JSON) into a mesh phase program.
    Decompose(DecomposeArgs),
    /// Compute the scattering matrix and intensity pattern of a phase program.
    Simulate(SimulateArgs),
    /// Fit heater parameters to a calibration sweep (CSV).
    Calibrate(CalibrateArgs),
    /// Synthesize a calibration sweep from a heater model.
    SynthFringe(SynthFringeArgs),
    /// Scan Hong-Ou-Mandel dips on mesh cells.
    Hom(HomArgs),
    /// Monte Carlo fidelity report for a target family.
    Report(ReportArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    /// Unitary matrix JSON ({"rows", "cols", "entries": [[re, im], ...]}).
    matrix: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Phase program JSON (decompose output works directly).
    phases: PathBuf,
    /// Imperfection model JSON; absent fields default to ideal.
    #[arg(long)]
    imperfections: Option<PathBuf>,
    /// Seed for phase-noise sampling; omit for a noiseless mesh.
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration sweep CSV with header voltage,top[,bottom].
    curve: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthFringeArgs {
    /// Heater model JSON; flags below override individual fields.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    v_pi: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    background: Option<f64>,
    #[arg(long)]
    heater_id: Option<usize>,
    #[arg(long, default_value_t = 15.0)]
    v_max: f64,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Gaussian noise width on normalized transmission.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, env = "MESHSIM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct HomArgs {
    /// Scan a single cell by id.
    #[arg(long, conflicts_with = "all")]
    cell: Option<usize>,
    /// Scan every cell of the mesh.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 12)]
    modes: usize,
    /// Photon-pair source JSON; defaults to 0.94 overlap, 1 ps coherence.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    imperfections: Option<PathBuf>,
    /// Seed for phase-noise sampling; omit for a noiseless mesh.
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Target family: permutation, pauli_x, switching, haar, or mask.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 12)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Phase-noise sigma shortcut; overrides the file value when both given.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    imperfections: Option<PathBuf>,
    /// Optional mask CSV overriding the built-in letter bitmaps.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, env = "MESHSIM_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Failure with a process exit code per the command contract.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(err: CoreError) -> Self {
        let code = match err {
            CoreError::Parse(_)
            | CoreError::Config(_)
            | CoreError::Dimension(_)
            | CoreError::Domain(_)
            | CoreError::Range(_) => 2,
            CoreError::NotUnitary { .. } => 3,
            CoreError::Numerical(_)
            | CoreError::Singular
            | CoreError::PermanentTooLarge { .. }
            | CoreError::Underdetermined { .. }
            | CoreError::FitNotConverged { .. }
            | CoreError::DegenerateData(_) => 4,
        };
        Failure::new(code, err.to_string())
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::new(2, format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::new(2, format!("cannot parse {}: {e}", path.display())))
}

fn load_imperfections(path: Option<&PathBuf>) -> Result<ImperfectionModel, Failure> {
    match path {
        Some(p) => parse_json(p),
        None => Ok(ImperfectionModel::ideal()),
    }
}

fn commit(out: OutputSet, manifest: &RunManifest) -> Result<(), Failure> {
    let written = out
        .commit(manifest)
        .map_err(|e| Failure::new(1, format!("cannot write outputs: {e}")))?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn stage_json<T: serde::Serialize>(
    out: &mut OutputSet,
    name: &str,
    value: &T,
) -> Result<(), Failure> {
    out.stage_json(name, value)
        .map_err(|e| Failure::new(1, format!("cannot encode {name}: {e}")))
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<(), Failure> {
    let matrix: ComplexMatrix = parse_json(&args.matrix)?;
    let unitary = UnitaryMatrix::with_tolerance(matrix, INGEST_TOL).map_err(|e| {
        let failure: Failure = e.into();
        Failure::new(failure.code, format!("{}: {}", args.matrix.display(), failure.message))
    })?;
    let result = decompose(&unitary)?;
    println!("residual {:.3e}", result.residual);

    let mut out = OutputSet::new(&args.out);
    stage_json(&mut out, "phases.json", &result)?;
    let manifest = RunManifest::new("decompose", &args.out)
        .input(&args.matrix)
        .parameters(serde_json::json!({ "ingest_tolerance": INGEST_TOL }));
    commit(out, &manifest)?;

    if result.residual < 1e-9 {
        Ok(())
    } else {
        Err(Failure::new(
            4,
            format!("reconstruction residual {:.3e} exceeds 1e-9", result.residual),
        ))
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let config: PhaseConfig = parse_json(&args.phases)?;
    let imp = load_imperfections(args.imperfections.as_ref())?;
    let spec = mesh_layout(config.n_modes)?;
    let s = forward(&spec, &config, &imp, args.noise_seed)?;
    if !s.lossy() && !is_unitary(s.matrix(), 1e-10)? {
        eprintln!(
            "warning: lossless scattering matrix deviates from unitarity by {:.3e}",
            unitarity_deviation(s.matrix())
        );
    }
    let intensity = IntensityMatrix::from_scattering(&s);

    let mut out = OutputSet::new(&args.out);
    stage_json(&mut out, "smatrix.json", s.matrix())?;
    out.stage("intensity.csv", intensity.to_csv());
    let manifest = RunManifest::new("simulate", &args.out)
        .input(&args.phases)
        .parameters(serde_json::json!({
            "imperfections": args.imperfections.as_ref().map(|p| p.display().to_string()),
            "noise_seed": args.noise_seed,
        }));
    commit(out, &manifest)
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), Failure> {
    let text = read_file(&args.curve)?;
    let curve = CalibrationCurve::from_csv(&text)?;
    let fit = fit_fringe(&curve)?;
    println!(
        "v_pi {:.6} V, offset {:.6} rad, contrast {:.6}, background {:.6}, rms {:.3e}, \
         extinction {:.2} dB",
        fit.model.v_pi,
        fit.model.theta_offset,
        fit.model.contrast,
        fit.model.background,
        fit.rms_residual,
        extinction_ratio(&fit)
    );
    let mut out = OutputSet::new(&args.out);
    stage_json(&mut out, "fit.json", &fit)?;
    let manifest = RunManifest::new("calibrate", &args.out).input(&args.curve);
    commit(out, &manifest)
}

fn cmd_synth_fringe(args: &SynthFringeArgs) -> Result<(), Failure> {
    let mut model = match &args.model {
        Some(path) => parse_json::<HeaterModel>(path)?,
        None => HeaterModel {
            v_pi: 10.4,
            theta_offset: 0.0,
            contrast: 0.95,
            background: 0.02,
            heater_id: 0,
        },
    };
    if let Some(v) = args.v_pi {
        model.v_pi = v;
    }
    if let Some(v) = args.offset {
        model.theta_offset = v;
    }
    if let Some(v) = args.contrast {
        model.contrast = v;
    }
    if let Some(v) = args.background {
        model.background = v;
    }
    if let Some(v) = args.heater_id {
        model.heater_id = v;
    }
    let curve = synthesize_fringe(&model, args.v_max, args.samples, args.noise, args.seed)?;
    let mut out = OutputSet::new(&args.out);
    out.stage("curve.csv", curve.to_csv());
    let manifest = RunManifest::new("synth-fringe", &args.out)
        .parameters(serde_json::json!({
            "model_file": args.model.as_ref().map(|p| p.display().to_string()),
            "v_pi": model.v_pi,
            "offset": model.theta_offset,
            "contrast": model.contrast,
            "background": model.background,
            "heater_id": model.heater_id,
            "v_max": args.v_max,
            "samples": args.samples,
            "noise": args.noise,
        }))
        .seed(args.seed);
    let manifest = match &args.model {
        Some(path) => manifest.input(path),
        None => manifest,
    };
    commit(out, &manifest)
}

fn cmd_hom(args: &HomArgs) -> Result<(), Failure> {
    let spec = mesh_layout(args.modes)?;
    let source: SourceModel = match &args.source {
        Some(path) => parse_json(path)?,
        None => SourceModel::default(),
    };
    let imp = load_imperfections(args.imperfections.as_ref())?;
    let cells: Vec<usize> = if args.all {
        (0..spec.n_cells()).collect()
    } else {
        match args.cell {
            Some(cell) => vec![cell],
            None => return Err(Failure::new(2, "pass --cell <id> or --all")),
        }
    };
    let delays = default_delay_grid(source.coherence_time_sigma);
    let mut curves: Vec<HomCurve> = Vec::with_capacity(cells.len());
    for &cell in &cells {
        curves.push(hom_scan(&spec, cell, &source, &delays, &imp, args.noise_seed)?);
    }
    let stats = average_visibility(&curves)?;
    println!(
        "average visibility {:.6} over {} cells, {} outlier(s)",
        stats.average,
        curves.len(),
        stats.outliers.len()
    );

    let mut out = OutputSet::new(&args.out);
    for curve in &curves {
        out.stage(&format!("hom_cell_{:03}.csv", curve.cell_id), curve.to_csv());
    }
    stage_json(&mut out, "visibility.json", &stats)?;
    let manifest = RunManifest::new("hom", &args.out)
        .parameters(serde_json::json!({
            "modes": args.modes,
            "cells": cells,
            "source": args.source.as_ref().map(|p| p.display().to_string()),
            "imperfections": args.imperfections.as_ref().map(|p| p.display().to_string()),
            "noise_seed": args.noise_seed,
        }));
    let manifest = match &args.source {
        Some(path) => manifest.input(path),
        None => manifest,
    };
    commit(out, &manifest)
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let family: TargetFamily = args.family.parse()?;
    let mut imp = load_imperfections(args.imperfections.as_ref())?;
    if let Some(noise) = args.noise {
        imp.phase_noise_sigma = noise;
    }
    if let Some(mask_path) = &args.mask {
        // check the mask file early so report errors stay input errors
        let text = read_file(mask_path)?;
        let mask = BinaryMask::from_csv(&text)?;
        if mask.dim() != args.dim {
            return Err(Failure::new(
                2,
                format!("mask is {0}x{0} but --dim is {1}", mask.dim(), args.dim),
            ));
        }
        if family != TargetFamily::Mask {
            return Err(Failure::new(2, "--mask only applies to --family mask"));
        }
        let report = meshsim::targets::fidelity_report_with_mask(
            &mask,
            args.dim,
            args.samples,
            &imp,
            args.seed,
        )?;
        return finish_report(args, report);
    }
    let report = fidelity_report(family, args.dim, args.samples, &imp, args.seed)?;
    finish_report(args, report)
}

fn finish_report(
    args: &ReportArgs,
    report: meshsim::targets::FidelityReport,
) -> Result<(), Failure> {
    println!(
        "{} fidelity {:.6} +- {:.6} over {} samples",
        report.family, report.mean, report.std, report.n_samples
    );
    let mut out = OutputSet::new(&args.out);
    stage_json(&mut out, "report.json", &report)?;
    let manifest = RunManifest::new("report", &args.out)
        .parameters(serde_json::json!({
            "family": args.family,
            "dim": args.dim,
            "samples": args.samples,
            "noise": args.noise,
            "imperfections": args.imperfections.as_ref().map(|p| p.display().to_string()),
            "mask": args.mask.as_ref().map(|p| p.display().to_string()),
        }))
        .seed(args.seed);
    let manifest = match &args.mask {
        Some(path) => manifest.input(path),
        None => manifest,
    };
    commit(out, &manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(args) => cmd_decompose(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::SynthFringe(args) => cmd_synth_fringe(args),
        Command::Hom(args) => cmd_hom(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
