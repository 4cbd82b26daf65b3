//! Flag and config-file resolution into a validated [`RunConfig`].

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use hmm_vi::bench::MeshSpec;
use hmm_vi::operators::{p_laplacian, seepage_operator, HeavisideParams};
use hmm_vi::solvers::{Model, RelaxationOptions, SolverOptions};
use hmm_vi::{Mesh, Operator, Tensor};

pub const OUTPUT_DIR_ENV: &str = "HMMVI_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "hmmvi-out";
pub const DEFAULT_GENERATOR: &str = "dam-hex:441";
pub const DEFAULT_STUDY: [&str; 4] = ["cartesian:4", "cartesian:8", "cartesian:16", "cartesian:32"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    /// `H(u - y) I`, the regularised Heaviside seepage coefficient.
    Seepage,
    /// `|ξ|^{p-2} ξ`.
    PLaplacian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn is_on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Signorini,
    Obstacle,
    Bulkley,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::Signorini => Model::Signorini,
            ModelArg::Obstacle => Model::Obstacle,
            ModelArg::Bulkley => Model::Bulkley,
        }
    }
}

/// Problem and solver flags shared by `solve` and `bench`.
#[derive(Args, Clone, Debug, Default)]
pub struct ProblemFlags {
    /// Mesh file (JSON) or generator spec such as `dam-hex:441`
    #[arg(long)]
    pub mesh: Option<String>,
    /// Generator spec: cartesian:N, triangular:N, dam-hex:CELLS or dam-kershaw:LEVEL [default: dam-hex:441]
    #[arg(long, conflicts_with = "mesh")]
    pub generator: Option<String>,
    /// Flux operator [default: seepage for signorini, p-laplacian otherwise]
    #[arg(long, value_enum)]
    pub operator: Option<OperatorKind>,
    /// Heaviside plateau value ε [default: 1e-3]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Heaviside ramp width λ [default: 1e-3]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// p-Laplacian exponent [default: 2]
    #[arg(long)]
    pub p: Option<f64>,
    /// Fixed-point stopping tolerance δ [default: 1e-2]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Under-relaxation factor in (0, 1] [default: 0.5]
    #[arg(long)]
    pub relax_factor: Option<f64>,
    /// Relaxation trigger on |uⁿ - uⁿ⁻²|/|uⁿ⁻²| [default: 1e-2]
    #[arg(long)]
    pub relax_trigger: Option<f64>,
    /// Enable under-relaxation [default: on]
    #[arg(long, value_enum)]
    pub relax: Option<OnOff>,
    /// Maximum outer iterations [default: 50]
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Carry the active set between outer iterations [default: on]
    #[arg(long, value_enum)]
    pub warm_start: Option<OnOff>,
    /// Bulkley yield coefficient β [default: 1]
    #[arg(long)]
    pub yield_coefficient: Option<f64>,
    /// Initial Bulkley regularisation η₀ [default: 1e-2]
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Number of Bulkley continuation steps [default: 4]
    #[arg(long)]
    pub eta_steps: Option<usize>,
}

/// TOML config file; every key is optional and flags take precedence.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<Model>,
    pub mesh: Option<String>,
    pub generator: Option<String>,
    pub meshes: Option<Vec<String>>,
    pub operator: Option<OperatorKind>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
    pub relax_factor: Option<f64>,
    pub relax_trigger: Option<f64>,
    pub relax: Option<OnOff>,
    pub max_outer: Option<usize>,
    pub warm_start: Option<OnOff>,
    pub yield_coefficient: Option<f64>,
    pub eta0: Option<f64>,
    pub eta_steps: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshSource {
    Generator(MeshSpec),
    File(PathBuf),
}

impl MeshSource {
    fn parse(s: &str) -> Self {
        match s.parse::<MeshSpec>() {
            Ok(spec) => MeshSource::Generator(spec),
            Err(_) => MeshSource::File(PathBuf::from(s)),
        }
    }

    pub fn load(&self) -> Result<Mesh, String> {
        match self {
            MeshSource::Generator(spec) => spec.build().map_err(|e| format!("generator {spec}: {e}")),
            MeshSource::File(p) => hmm_vi::io::read_mesh_file(p).map_err(|e| format!("mesh {}: {e}", p.display())),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeshSource::Generator(spec) => spec.to_string(),
            MeshSource::File(p) => p.display().to_string(),
        }
    }
}

/// Fully resolved run parameters, echoed into every artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model: Model,
    pub mesh: MeshSource,
    pub meshes: Vec<MeshSpec>,
    pub operator: OperatorKind,
    pub epsilon: f64,
    pub lambda: f64,
    pub p: f64,
    pub yield_coefficient: f64,
    pub options: SolverOptions<f64>,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn operator(&self) -> Result<Operator, String> {
        match self.operator {
            OperatorKind::Seepage => {
                let params = HeavisideParams::new(self.epsilon, self.lambda).map_err(|e| e.to_string())?;
                seepage_operator(params, Tensor::identity()).map_err(|e| e.to_string())
            }
            OperatorKind::PLaplacian => p_laplacian(self.p).map_err(|e| e.to_string()),
        }
    }

    pub fn heaviside(&self) -> Result<HeavisideParams<f64>, String> {
        HeavisideParams::new(self.epsilon, self.lambda).map_err(|e| e.to_string())
    }
}

/// Inputs to [`resolve`] besides the problem flags.
pub struct Context<'a> {
    pub command: &'a str,
    pub model: Option<Model>,
    pub meshes: &'a [String],
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub env_output_dir: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<f64, String> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("--{name} must be a positive number, got {v}"))
    }
}

/// Merges flags over the config file over defaults and validates the result.
pub fn resolve(flags: &ProblemFlags, file: &FileConfig, ctx: Context<'_>) -> Result<RunConfig, String> {
    let model = ctx.model.or(file.model).unwrap_or(Model::Signorini);
    let mesh_text = flags
        .mesh
        .clone()
        .or_else(|| flags.generator.clone())
        .or_else(|| file.mesh.clone())
        .or_else(|| file.generator.clone())
        .unwrap_or_else(|| DEFAULT_GENERATOR.to_string());
    if flags.generator.is_some() || (flags.mesh.is_none() && file.mesh.is_none() && file.generator.is_some()) {
        mesh_text.parse::<MeshSpec>().map_err(|e| format!("--generator: {e}"))?;
    }
    let mesh = MeshSource::parse(&mesh_text);
    let mesh_list: Vec<String> = if !ctx.meshes.is_empty() {
        ctx.meshes.to_vec()
    } else if let Some(m) = &file.meshes {
        m.clone()
    } else {
        DEFAULT_STUDY.iter().map(|s| s.to_string()).collect()
    };
    let meshes = mesh_list
        .iter()
        .map(|s| s.parse::<MeshSpec>().map_err(|e| format!("--mesh list: {e}")))
        .collect::<Result<Vec<_>, _>>()?;

    let default_op = if model == Model::Signorini { OperatorKind::Seepage } else { OperatorKind::PLaplacian };
    let operator = flags.operator.or(file.operator).unwrap_or(default_op);
    let epsilon = positive("epsilon", flags.epsilon.or(file.epsilon).unwrap_or(1e-3))?;
    let lambda = positive("lambda", flags.lambda.or(file.lambda).unwrap_or(1e-3))?;
    let p = flags.p.or(file.p).unwrap_or(2.0);
    if !(p > 1.0 && p.is_finite()) {
        return Err(format!("--p must lie in (1, ∞), got {p}"));
    }
    if operator == OperatorKind::Seepage && p != 2.0 {
        return Err("the seepage operator is quasi-linear and needs --p 2".into());
    }
    let yield_coefficient = flags.yield_coefficient.or(file.yield_coefficient).unwrap_or(1.0);
    if !(yield_coefficient >= 0.0 && yield_coefficient.is_finite()) {
        return Err(format!("--yield-coefficient must be non-negative, got {yield_coefficient}"));
    }

    let defaults = SolverOptions::<f64>::default();
    let relax_factor = flags.relax_factor.or(file.relax_factor).unwrap_or(defaults.relaxation.factor);
    if !(relax_factor > 0.0 && relax_factor <= 1.0) {
        return Err(format!("--relax-factor must lie in (0, 1], got {relax_factor}"));
    }
    let max_outer = flags.max_outer.or(file.max_outer).unwrap_or(defaults.max_outer);
    if max_outer == 0 {
        return Err("--max-outer must be at least 1".into());
    }
    let eta_steps = flags.eta_steps.or(file.eta_steps).unwrap_or(defaults.eta_steps);
    if eta_steps == 0 {
        return Err("--eta-steps must be at least 1".into());
    }
    let options = SolverOptions {
        delta: positive("delta", flags.delta.or(file.delta).unwrap_or(defaults.delta))?,
        max_outer,
        relaxation: RelaxationOptions {
            enabled: flags.relax.or(file.relax).map_or(defaults.relaxation.enabled, OnOff::is_on),
            trigger_tol: positive("relax-trigger", flags.relax_trigger.or(file.relax_trigger).unwrap_or(defaults.relaxation.trigger_tol))?,
            factor: relax_factor,
        },
        warm_start: flags.warm_start.or(file.warm_start).map_or(defaults.warm_start, OnOff::is_on),
        eta0: positive("eta0", flags.eta0.or(file.eta0).unwrap_or(defaults.eta0))?,
        eta_steps,
        ..defaults
    };
    let jobs = ctx.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err("--jobs must be at least 1".into());
    }
    let output_dir = ctx
        .output_dir
        .or_else(|| file.output_dir.clone())
        .or(ctx.env_output_dir)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    Ok(RunConfig {
        command: ctx.command.to_string(),
        model,
        mesh,
        meshes,
        operator,
        epsilon,
        lambda,
        p,
        yield_coefficient,
        options,
        output_dir,
        jobs,
    })
}
