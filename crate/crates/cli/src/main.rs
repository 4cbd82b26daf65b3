//! `hmmvi`: solve, benchmark and diagnose HMM discretisations of
//! variational inequalities.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use hmm_vi::bench::{bulkley_demo, obstacle_demo, run_dam_benchmark, run_refinement_study, MeshMetadata, StudyRow};
use hmm_vi::io::{mesh_hash, write_csv, write_mesh_file, write_vtk_file, CellField, RunArtifact};
use hmm_vi::solvers::{dam_problem, solve, Model};
use hmm_vi::{Discretisation, Mesh, Report, Vector};

use config::{resolve, Context, FileConfig, ModelArg, ProblemFlags, RunConfig, OUTPUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "hmmvi", version, about = "HMM schemes for Signorini, obstacle and Bulkley variational inequalities")]
struct Cli {
    /// TOML file supplying defaults for any flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $HMMVI_OUTPUT_DIR, else ./hmmvi-out]
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads for parallel assembly and studies
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem and write the solution, report and artifact
    Solve {
        /// Model [default: signorini]
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[command(flatten)]
        flags: ProblemFlags,
    },
    /// Gradient-discretisation diagnostics over a mesh sequence
    Diag {
        /// Generator specs, in order [default: cartesian:4,8,16,32]
        #[arg(long = "mesh", value_delimiter = ',')]
        meshes: Vec<String>,
    },
    /// Benchmarks and demo problems
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Generate a mesh and write it as JSON (and VTK)
    Mesh {
        #[command(flatten)]
        flags: ProblemFlags,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Dam seepage benchmark with seepage-point location
    Dam {
        #[command(flatten)]
        flags: ProblemFlags,
    },
    /// Diagnostics plus dam runs over a mesh sequence
    Refinement {
        /// Generator specs, in order
        #[arg(long = "meshes", value_delimiter = ',', default_value = "dam-hex:441,dam-hex:1681")]
        meshes: Vec<String>,
        #[command(flatten)]
        flags: ProblemFlags,
    },
    /// Obstacle demo with a paraboloid barrier
    Obstacle {
        #[command(flatten)]
        flags: ProblemFlags,
    },
    /// Bulkley demo
    Bulkley {
        #[command(flatten)]
        flags: ProblemFlags,
    },
}

/// Config problems exit with 2, run failures with 1.
enum Failure {
    Config(String),
    Run(String),
}

fn run_err<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Run(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Config)?,
        None => FileConfig::default(),
    };
    let env_output_dir = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let no_meshes: Vec<String> = Vec::new();
    let (command, model, flags, meshes): (&str, Option<Model>, ProblemFlags, &[String]) = match &cli.command {
        Command::Solve { model, flags } => ("solve", model.map(Into::into), flags.clone(), &no_meshes),
        Command::Diag { meshes } => ("diag", None, ProblemFlags::default(), meshes),
        Command::Mesh { flags } => ("mesh", None, flags.clone(), &no_meshes),
        Command::Bench { which } => match which {
            BenchCommand::Dam { flags } => ("bench dam", Some(Model::Signorini), flags.clone(), &no_meshes),
            BenchCommand::Refinement { meshes, flags } => ("bench refinement", Some(Model::Signorini), flags.clone(), meshes),
            BenchCommand::Obstacle { flags } => ("bench obstacle", Some(Model::Obstacle), with_generator(flags, "cartesian:16"), &no_meshes),
            BenchCommand::Bulkley { flags } => ("bench bulkley", Some(Model::Bulkley), with_generator(flags, "cartesian:16"), &no_meshes),
        },
    };
    let cfg = resolve(
        &flags,
        &file,
        Context {
            command,
            model,
            meshes,
            output_dir: cli.output_dir.clone(),
            jobs: cli.jobs,
            env_output_dir,
        },
    )
    .map_err(Failure::Config)?;
    if let Some(n) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(run_err)?;
    }
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    match command {
        "solve" => cmd_solve(&cfg),
        "diag" | "bench refinement" => cmd_study(&cfg),
        "mesh" => cmd_mesh(&cfg),
        "bench dam" => cmd_dam(&cfg),
        _ => cmd_solve(&cfg),
    }
}

fn with_generator(flags: &ProblemFlags, default: &str) -> ProblemFlags {
    let mut f = flags.clone();
    if f.mesh.is_none() && f.generator.is_none() {
        f.generator = Some(default.to_string());
    }
    f
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_json<S: Serialize>(v: &S) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(v).map_err(run_err)
}

fn write_artifact(cfg: &RunConfig, hash: String, solution: Option<&Vector>, report: serde_json::Value) -> Result<(), Failure> {
    let artifact = RunArtifact::new(to_json(cfg)?, hash, solution, report, timestamp());
    write_text(&cfg.output_dir, "artifact.json", &artifact.to_json())?;
    Ok(())
}

fn load_mesh(cfg: &RunConfig) -> Result<Mesh, Failure> {
    cfg.mesh.load().map_err(Failure::Config)
}

fn report_summary(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}  algorithm: {}", r.model, r.algorithm);
    let _ = writeln!(s, "converged: {}  outer iterations: {}  inner: {:?}", r.converged, r.outer_iterations, r.inner_iterations);
    if !r.relaxation_events.is_empty() {
        let at: Vec<usize> = r.relaxation_events.iter().map(|e| e.iteration).collect();
        let _ = writeln!(s, "relaxation events at outer steps {at:?}");
    }
    let k = &r.kkt;
    let _ = writeln!(
        s,
        "residuals: equilibrium {:.3e}  complementarity {:.3e}  sign {:.3e}  flux balance {:.3e}",
        k.equilibrium, k.complementarity, k.sign, k.flux_balance
    );
    if let Some(state) = &r.active_set {
        let _ = writeln!(s, "active set: {} of {} constrained unknowns", state.active_set().len(), state.constrained.len());
    }
    if let Some(p) = r.vi_probe_residual {
        let _ = writeln!(s, "VI probe residual: {p:.3e}");
    }
    let _ = writeln!(s, "wall time: {:.3} s", r.wall_time_seconds);
    s
}

fn write_solution_vtk(cfg: &RunConfig, mesh: &Mesh, u: &Vector, velocity: Option<&[hmm_vi::Point]>) -> Result<(), Failure> {
    let mut fields = vec![CellField::Scalar("u", &u.cells[..])];
    if let Some(v) = velocity {
        fields.push(CellField::Vector("darcy_velocity", v));
    }
    write_vtk_file(mesh, &fields, &cfg.output_dir.join("solution.vtk")).map_err(run_err)
}

fn finish(cfg: &RunConfig, summary: &str) -> Result<(), Failure> {
    write_text(&cfg.output_dir, "summary.txt", summary)?;
    print!("{summary}");
    println!("outputs written to {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_solve(cfg: &RunConfig) -> Result<(), Failure> {
    let mesh = load_mesh(cfg)?;
    let op = cfg.operator().map_err(Failure::Config)?;
    let report = match cfg.model {
        Model::Signorini => {
            if mesh.count_tag(hmm_vi::mesh::BoundaryTag::Gamma3) == 0 {
                return Err(Failure::Config("the signorini model needs a mesh with gamma3 faces, e.g. --generator dam-hex:441".into()));
            }
            let disc = Discretisation::new(&mesh, op.p);
            let problem = dam_problem(&disc, op).map_err(run_err)?;
            solve(&problem, &cfg.options).map_err(run_err)?
        }
        Model::Obstacle => obstacle_demo(&mesh, op, &cfg.options).map_err(run_err)?,
        Model::Bulkley => bulkley_demo(&mesh, op, cfg.yield_coefficient, &cfg.options).map_err(run_err)?,
    };
    write_text(&cfg.output_dir, "report.json", &pretty(&report)?)?;
    write_solution_vtk(cfg, &mesh, &report.solution, None)?;
    write_artifact(cfg, mesh_hash(&mesh), Some(&report.solution), to_json(&report)?)?;
    let head = format!("{} on {} ({} cells)\n", cfg.model, cfg.mesh.label(), mesh.num_cells());
    finish(cfg, &(head + &report_summary(&report)))
}

fn pretty<S: Serialize>(v: &S) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(run_err)?;
    s.push('\n');
    Ok(s)
}

fn cmd_dam(cfg: &RunConfig) -> Result<(), Failure> {
    let mesh = load_mesh(cfg)?;
    if mesh.count_tag(hmm_vi::mesh::BoundaryTag::Gamma3) == 0 {
        return Err(Failure::Config("the dam benchmark needs a dam-tagged mesh, e.g. --mesh dam-hex:441".into()));
    }
    if cfg.operator != config::OperatorKind::Seepage {
        return Err(Failure::Config("the dam benchmark uses the seepage operator".into()));
    }
    let result = run_dam_benchmark(&mesh, cfg.heaviside().map_err(Failure::Config)?, &cfg.options).map_err(run_err)?;
    write_text(&cfg.output_dir, "seepage.json", &pretty(&result)?)?;
    write_solution_vtk(cfg, &mesh, &result.report.solution, Some(&result.darcy.cells))?;
    write_artifact(cfg, mesh_hash(&mesh), Some(&result.report.solution), to_json(&result.report)?)?;
    let m: &MeshMetadata<f64> = &result.mesh;
    let mut s = format!(
        "dam benchmark on {} ({} cells, {} gamma3 faces, h = {:.3}, theta = {:.2})\n",
        cfg.mesh.label(),
        m.cells,
        m.gamma3_faces,
        m.h_mesh,
        m.theta
    );
    match result.seepage_interval {
        Some([lo, hi]) => {
            let _ = writeln!(s, "seepage point in [{lo:.4}, {hi:.4}], ordinate {:.4}", 0.5 * (lo + hi));
        }
        None => s.push_str("no active gamma3 face: seepage point not found\n"),
    }
    let _ = writeln!(s, "net flux across gamma2: {:.3e}", result.gamma2_net_flux);
    s.push_str(&report_summary(&result.report));
    finish(cfg, &s)
}

fn cmd_study(cfg: &RunConfig) -> Result<(), Failure> {
    let rows: Vec<StudyRow> = run_refinement_study(&cfg.meshes, cfg.heaviside().map_err(Failure::Config)?, &cfg.options);
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv).map_err(run_err)?;
    write_text(&cfg.output_dir, "study.csv", &String::from_utf8(csv).map_err(run_err)?)?;
    let hashes: Vec<String> = cfg
        .meshes
        .iter()
        .map(|m| m.build::<f64>().map(|mesh| mesh_hash(&mesh)).unwrap_or_else(|_| "unavailable".into()))
        .collect();
    write_artifact(cfg, hashes.join(","), None, to_json(&rows)?)?;
    let mut s = String::new();
    let _ = writeln!(s, "{:<18} {:>7} {:>8} {:>7} {:>10} {:>10} {:>6} {:>9}  status", "mesh", "cells", "h", "theta", "S_D", "W_D", "outer", "seepage");
    let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    for r in &rows {
        let _ = writeln!(
            s,
            "{:<18} {:>7} {:>8} {:>7} {:>10} {:>10} {:>6} {:>9}  {}",
            r.mesh_id,
            r.cells,
            opt(r.h_mesh, 4),
            opt(r.theta, 2),
            r.s_d.map_or("-".into(), |x| format!("{x:.3e}")),
            r.w_d.map_or("-".into(), |x| format!("{x:.3e}")),
            r.outer_iterations.map_or("-".into(), |x| x.to_string()),
            opt(r.seepage_ordinate, 4),
            r.status
        );
    }
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    finish(cfg, &s)?;
    if failed > 0 {
        return Err(Failure::Run(format!("{failed} of {} rows failed", rows.len())));
    }
    Ok(())
}

fn cmd_mesh(cfg: &RunConfig) -> Result<(), Failure> {
    let mesh = load_mesh(cfg)?;
    write_mesh_file(&mesh, &cfg.output_dir.join("mesh.json")).map_err(run_err)?;
    write_vtk_file::<f64>(&mesh, &[], &cfg.output_dir.join("mesh.vtk")).map_err(run_err)?;
    let meta = MeshMetadata::of(&mesh);
    write_artifact(cfg, mesh_hash(&mesh), None, to_json(&meta)?)?;
    let s = format!(
        "{}: {} cells, {} faces, {} gamma3 faces, h = {:.4}, theta = {:.3}\n",
        cfg.mesh.label(),
        meta.cells,
        meta.faces,
        meta.gamma3_faces,
        meta.h_mesh,
        meta.theta
    );
    finish(cfg, &s)
}
