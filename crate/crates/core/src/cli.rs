//! The `weaktraj` command line: synthesize, reconstruct, bohm, compare, report.
//!
//! Every stage reads and writes the CSV formats in [`crate::io`] and drops a
//! JSON manifest beside its outputs. Output layout under the output
//! directory:
//!
//! ```text
//! frames/frame_000.csv ...          synthesize
//! ground_truth.csv                  synthesize
//! reconstruct/<mode>/...            reconstruct
//! bohm/...                          bohm
//! compare/...                       compare (default --out)
//! report/...                        report
//! ```

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bohm::{cvt_trajectories, phase_trajectories, seed_quantiles};
use crate::config::{unix_now, RunConfig, RunManifest};
use crate::density::DensityCurve;
use crate::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::io::{
    check_hashes, read_density, read_ensemble, read_frame, write_csv, write_density, write_ensemble,
    write_frame, write_kxk, Meta,
};
use crate::metrics::{
    ensemble_mean_r, with_congregation, ComparisonReport, CongregationStatistic, MIN_CONGREGATION_POSITIONS,
};
use crate::reconstruction::{reconstruct_from_frames, PipelineMode};
use crate::sensor::PixelImage;
use crate::synthetic::{ground_truth, synthesize};
use crate::wavefield::propagate_analytic;

#[derive(Debug, Parser)]
#[command(name = "weaktraj", version, about = "Average photon trajectories from weak-measurement frames")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// JSON run configuration; the built-in standard configuration if omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Pipeline mode: corrected, legacy, or custom:field=value,...
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides the noise RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Accept artifacts whose config hashes differ.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate one frame per z-plane plus the ground-truth Bohm ensemble.
    Synthesize,
    /// Reconstruct photon trajectories from frames.
    Reconstruct {
        /// Frame directory (default: <output>/frames).
        #[arg(long)]
        frames: Option<PathBuf>,
    },
    /// Reference Bohm ensembles from the exact field.
    Bohm {
        #[arg(long, value_enum, default_value_t = BohmMethod::All)]
        method: BohmMethod,
    },
    /// Compare two ensembles and write plot data.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Density for the congregation score (usually the final plane).
        #[arg(long)]
        density: Option<PathBuf>,
        /// Output directory (default: <output>/compare).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Statistic::Ks)]
        statistic: Statistic,
    },
    /// synthesize, reconstruct and compare in one invocation.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BohmMethod {
    CdfTransport,
    Phase,
    Cvt,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Statistic {
    Ks,
    L1,
}

impl From<Statistic> for CongregationStatistic {
    fn from(s: Statistic) -> Self {
        match s {
            Statistic::Ks => CongregationStatistic::Ks,
            Statistic::L1 => CongregationStatistic::L1Histogram,
        }
    }
}

/// Report file written by `compare`, `reconstruct` and `report`.
///
/// Holds no timestamps or paths, so identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: Option<String>,
    pub report: ComparisonReport,
}

/// Effective configuration after applying flags.
pub fn effective_config(opts: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::standard(),
    };
    if let Some(m) = &opts.mode {
        cfg.mode = m.clone();
    }
    if let Some(s) = opts.seed {
        cfg.sensor.noise.rng_seed = s;
    }
    cfg.output_dir = cfg.resolved_output_dir();
    cfg.validate()?;
    Ok(cfg)
}

/// Directory-safe form of a mode tag.
pub fn mode_dir(mode: &PipelineMode) -> String {
    mode.tag()
        .chars()
        .map(|c| match c {
            ':' => '_',
            '=' => '-',
            ',' => '+',
            c => c,
        })
        .collect()
}

pub fn frame_path(dir: &Path, j: usize) -> PathBuf {
    dir.join(format!("frame_{j:03}.csv"))
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn cmd_synthesize(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let started = unix_now();
    let out = &cfg.output_dir;
    let frames_dir = out.join("frames");
    create_dir(&frames_dir)?;
    let hash = cfg.hash();
    let data = synthesize(cfg)?;
    let mut written = Vec::new();
    for (j, f) in data.frames.iter().enumerate() {
        let p = frame_path(&frames_dir, j);
        write_frame(&p, f, Some(&hash))?;
        written.push(p);
    }
    let gt = out.join("ground_truth.csv");
    write_ensemble(&gt, &data.ground_truth, Meta::new().with("method", "cdf_transport").with_hash(Some(&hash)))?;
    written.push(gt);
    let mut manifest = RunManifest::new("synthesize", &hash, started);
    manifest.files = written.iter().map(|p| rel(out, p)).collect();
    manifest.diagnostics = serde_json::json!({
        "planes": data.frames.len(),
        "n_trajectories": cfg.n_trajectories,
        "noiseless": cfg.sensor.noiseless,
        "rng_seed": cfg.sensor.noise.rng_seed,
    });
    let mp = out.join("manifest_synthesize.json");
    manifest.write(&mp)?;
    written.push(mp);
    Ok(written)
}

/// Reads `frame_000.csv, frame_001.csv, ...` for every configured plane.
pub fn load_frames(dir: &Path, cfg: &RunConfig, force: bool) -> Result<Vec<PixelImage>> {
    let hash = cfg.hash();
    let mut frames = Vec::with_capacity(cfg.z_schedule.len());
    for (j, &z) in cfg.z_schedule.iter().enumerate() {
        let p = frame_path(dir, j);
        if !p.exists() {
            return Err(Error::Data(format!(
                "missing frame for z-index {j} (z={z} m): {} not found",
                p.display()
            )));
        }
        let (img, meta) = read_frame(&p)?;
        check_hashes(Some(&hash), [(p.as_path(), &meta)], force)?;
        if img.z_m != z {
            return Err(Error::schema(
                &p,
                format!("frame is at z={} m but z-index {j} is {z} m", img.z_m),
            ));
        }
        frames.push(img);
    }
    Ok(frames)
}

pub fn cmd_reconstruct(cfg: &RunConfig, frames_dir: Option<&Path>, force: bool) -> Result<PathBuf> {
    let started = unix_now();
    let out = &cfg.output_dir;
    let frames_dir = frames_dir.map(Path::to_path_buf).unwrap_or_else(|| out.join("frames"));
    let frames = load_frames(&frames_dir, cfg, force)?;
    let mode = cfg.pipeline_mode()?;
    let hash = cfg.hash();
    let rec = reconstruct_from_frames(
        &frames,
        cfg.sensor.noise.background_level,
        cfg.coupling()?,
        &mode,
        cfg.n_trajectories,
    )?;
    let dir = out.join("reconstruct").join(mode_dir(&mode));
    create_dir(&dir.join("slopes"))?;
    let mut written = Vec::new();
    let meta = || Meta::new().with("mode", mode.tag()).with_hash(Some(&hash));
    let traj = dir.join("trajectories.csv");
    write_ensemble(&traj, &rec.photons, meta())?;
    written.push(traj.clone());
    let bohm = dir.join("data_bohm.csv");
    write_ensemble(&bohm, &rec.data_bohm, meta())?;
    written.push(bohm);
    for (j, a) in rec.frames.iter().enumerate() {
        let p = dir.join("slopes").join(format!("slope_{j:03}.csv"));
        write_kxk(&p, &a.slope, Some(&hash))?;
        written.push(p);
    }
    let measured = dir.join("density_final.csv");
    write_density(&measured, &rec.frames[rec.frames.len() - 1].smoothed, Some(&hash))?;
    written.push(measured);

    let mut diagnostics = serde_json::to_value(&rec.diagnostics).map_err(|e| Error::Data(e.to_string()))?;
    diagnostics["seeds_mm"] = serde_json::json!(rec.seeds.positions);
    diagnostics["truncated"] = serde_json::json!(rec.photons.diagnostics.truncated);
    diagnostics["drifted_outside"] = serde_json::json!(rec.photons.diagnostics.drifted_outside);

    let gt = out.join("ground_truth.csv");
    if gt.exists() {
        let truth_density = dir.join("truth_density_final.csv");
        let z_last = cfg.z_schedule[cfg.z_schedule.len() - 1];
        let field = propagate_analytic(&cfg.slit, cfg.grid.grid()?, z_last)?;
        write_density(&truth_density, &crate::wavefield::intensity(&field)?, Some(&hash))?;
        written.push(truth_density.clone());
        let files = compare_files(&traj, &gt, Some(&truth_density), &dir, CongregationStatistic::Ks, force)?;
        written.extend(files);
    }
    let mut manifest = RunManifest::new("reconstruct", &hash, started);
    manifest.mode = Some(mode.tag());
    manifest.files = written.iter().map(|p| rel(out, p)).collect();
    manifest.diagnostics = diagnostics;
    manifest.write(&dir.join("manifest.json"))?;
    Ok(dir)
}

pub fn cmd_bohm(cfg: &RunConfig, method: BohmMethod) -> Result<PathBuf> {
    let started = unix_now();
    let out = &cfg.output_dir;
    let dir = out.join("bohm");
    create_dir(&dir)?;
    let hash = cfg.hash();
    let grid = cfg.grid.grid()?;
    let fields = cfg
        .z_schedule
        .iter()
        .map(|&z| propagate_analytic(&cfg.slit, grid, z))
        .collect::<Result<Vec<_>>>()?;
    let densities = fields
        .iter()
        .map(crate::wavefield::intensity)
        .collect::<Result<Vec<DensityCurve>>>()?;
    let mut written = Vec::new();
    let meta = |m: &str| Meta::new().with("method", m).with_hash(Some(&hash));
    let want = |m: BohmMethod| method == BohmMethod::All || method == m;
    let mut diagnostics = serde_json::Map::new();
    if want(BohmMethod::CdfTransport) {
        let ens = ground_truth(cfg, &densities)?;
        let p = dir.join("cdf_transport.csv");
        write_ensemble(&p, &ens, meta("cdf_transport"))?;
        written.push(p);
    }
    if want(BohmMethod::Phase) {
        let seeds = seed_quantiles(&densities[0], cfg.n_trajectories)?;
        let ens = phase_trajectories(&fields, &seeds)?;
        diagnostics.insert("phase_truncated".into(), serde_json::json!(ens.diagnostics.truncated));
        let p = dir.join("phase.csv");
        write_ensemble(&p, &ens, meta("phase"))?;
        written.push(p);
    }
    if want(BohmMethod::Cvt) {
        match cvt_trajectories(&densities, cfg.n_trajectories) {
            Ok(ens) => {
                diagnostics.insert(
                    "cvt_lloyd_iterations".into(),
                    serde_json::json!(ens.diagnostics.lloyd_iterations),
                );
                let p = dir.join("cvt.csv");
                write_ensemble(&p, &ens, meta("cvt"))?;
                written.push(p);
            }
            // with --method all the other ensembles are still useful
            Err(e @ Error::LloydNonConvergence { .. }) if method == BohmMethod::All => {
                eprintln!("weaktraj: warning: cvt skipped: {e}");
                diagnostics.insert("cvt_error".into(), serde_json::json!(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let p = dir.join("density_final.csv");
    write_density(&p, &densities[densities.len() - 1], Some(&hash))?;
    written.push(p);
    let mut manifest = RunManifest::new("bohm", &hash, started);
    manifest.files = written.iter().map(|p| rel(out, p)).collect();
    manifest.diagnostics = serde_json::Value::Object(diagnostics);
    manifest.write(&dir.join("manifest.json"))?;
    Ok(dir)
}

/// Comparison of ensemble files `a` (reconstructed) and `b` (reference).
///
/// Writes `report.json`, `per_pair_r.csv`, `overlay.csv` and `panel_c.csv`
/// into `out`.
pub fn compare_files(
    a: &Path,
    b: &Path,
    density: Option<&Path>,
    out: &Path,
    statistic: CongregationStatistic,
    force: bool,
) -> Result<Vec<PathBuf>> {
    let (ea, ma) = read_ensemble(a)?;
    let (eb, mb) = read_ensemble(b)?;
    let dens = density.map(read_density).transpose()?;
    let mut artifacts = vec![(a, &ma), (b, &mb)];
    if let (Some(p), Some((_, md))) = (density, &dens) {
        artifacts.push((p, md));
    }
    let hash = check_hashes(None, artifacts, force)?;
    if ea.z_levels != eb.z_levels {
        return Err(Error::Argument(format!(
            "{} and {} are sampled on different z-planes",
            a.display(),
            b.display()
        )));
    }
    let mut report = ensemble_mean_r(&ea, &eb)?;
    if let Some((d, _)) = &dens {
        let fewest = ea.final_positions().len().min(eb.final_positions().len());
        if fewest >= MIN_CONGREGATION_POSITIONS {
            report = with_congregation(report, &ea, &eb, d, statistic)?;
        } else {
            eprintln!("weaktraj: warning: congregation skipped: only {fewest} final positions");
        }
    }
    create_dir(out)?;
    let file = ReportFile {
        config_hash: hash.clone(),
        report,
    };
    let mut written = Vec::new();
    let rp = out.join("report.json");
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(&rp, text + "\n").map_err(|e| Error::io(&rp, e))?;
    written.push(rp);

    let meta = Meta::new().with_hash(hash.as_deref());
    let pp = out.join("per_pair_r.csv");
    write_csv(
        &pp,
        &meta,
        &["pair_index", "r"],
        file.report
            .per_pair_r
            .iter()
            .enumerate()
            .map(|(i, r)| [i.to_string(), r.map(|v| v.to_string()).unwrap_or_default()]),
    )?;
    written.push(pp);

    let ov = out.join("overlay.csv");
    write_csv(&ov, &meta, &["series", "trajectory", "z_m", "x_mm"], overlay_rows(&[&ea, &eb]))?;
    written.push(ov);

    if let Some((d, _)) = &dens {
        let pc = out.join("panel_c.csv");
        write_csv(&pc, &meta, &["kind", "series", "x_mm", "value"], panel_c_rows(&[&ea, &eb], d))?;
        written.push(pc);
    }
    Ok(written)
}

/// Long-format rows `series, trajectory, z_m, x_mm`; masked entries are skipped.
pub fn overlay_rows(ensembles: &[&TrajectoryEnsemble]) -> Vec<[String; 4]> {
    let mut rows = Vec::new();
    for e in ensembles {
        for (i, row) in e.rows.iter().enumerate() {
            for (z, x) in e.z_levels.iter().zip(row) {
                if let Some(x) = x {
                    rows.push([e.label.clone(), i.to_string(), z.to_string(), x.to_string()]);
                }
            }
        }
    }
    rows
}

/// One `final_position` row per trajectory end point, then `density` rows.
pub fn panel_c_rows(ensembles: &[&TrajectoryEnsemble], density: &DensityCurve) -> Vec<[String; 4]> {
    let mut rows = Vec::new();
    for e in ensembles {
        for x in e.final_positions() {
            rows.push(["final_position".into(), e.label.clone(), x.to_string(), "1".into()]);
        }
    }
    for (x, v) in density.xs().iter().zip(&density.values) {
        rows.push(["density".into(), "density".into(), x.to_string(), v.to_string()]);
    }
    rows
}

pub fn cmd_compare(
    cfg_out: &Path,
    a: &Path,
    b: &Path,
    density: Option<&Path>,
    out: Option<&Path>,
    statistic: CongregationStatistic,
    force: bool,
) -> Result<PathBuf> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg_out.join("compare"));
    compare_files(a, b, density, &out, statistic, force)?;
    Ok(out)
}

/// The three stages back to back; the final report lands in `<output>/report`.
pub fn cmd_report(cfg: &RunConfig, force: bool) -> Result<PathBuf> {
    cmd_synthesize(cfg)?;
    let dir = cmd_reconstruct(cfg, None, force)?;
    let out = cfg.output_dir.join("report");
    compare_files(
        &dir.join("trajectories.csv"),
        &cfg.output_dir.join("ground_truth.csv"),
        Some(&dir.join("truth_density_final.csv")),
        &out,
        CongregationStatistic::Ks,
        force,
    )?;
    Ok(out)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(Error::Argument("--jobs must be >= 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let force = cli.global.force;
    match &cli.command {
        Command::Synthesize => {
            let cfg = effective_config(&cli.global)?;
            let files = cmd_synthesize(&cfg)?;
            println!("wrote {} files to {}", files.len(), cfg.output_dir.display());
        }
        Command::Reconstruct { frames } => {
            let cfg = effective_config(&cli.global)?;
            let dir = cmd_reconstruct(&cfg, frames.as_deref(), force)?;
            println!("wrote {}", dir.display());
        }
        Command::Bohm { method } => {
            let cfg = effective_config(&cli.global)?;
            let dir = cmd_bohm(&cfg, *method)?;
            println!("wrote {}", dir.display());
        }
        Command::Compare {
            a,
            b,
            density,
            out,
            statistic,
        } => {
            let cfg = effective_config(&cli.global)?;
            let dir = cmd_compare(
                &cfg.output_dir,
                a,
                b,
                density.as_deref(),
                out.as_deref(),
                (*statistic).into(),
                force,
            )?;
            println!("wrote {}", dir.display());
        }
        Command::Report => {
            let cfg = effective_config(&cli.global)?;
            let dir = cmd_report(&cfg, force)?;
            let text = std::fs::read_to_string(dir.join("report.json")).map_err(|e| Error::io(&dir, e))?;
            let file: ReportFile = serde_json::from_str(&text).map_err(|e| Error::schema(&dir, e.to_string()))?;
            println!(
                "r_avg={} congregation={} (reference {})",
                file.report.r_avg,
                file.report.congregation.map(|c| c.to_string()).unwrap_or_default(),
                file.report.reference_congregation.map(|c| c.to_string()).unwrap_or_default(),
            );
        }
    }
    Ok(())
}
