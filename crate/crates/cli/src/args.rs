use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use youngflow::TagRule;

#[derive(Debug, Parser)]
#[command(
    name = "youngflow",
    version,
    about = "Young integration, Young ODE flows and first-order Young PDEs"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Random seed for generators and sample sets.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of dyadic refinement levels.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Pass threshold for checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// File of `key = value` lines; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a driving path.
    Gen(GenArgs),
    /// Grid p-variation of a path.
    Pvar(PvarArgs),
    /// Young integral of an operator path against a path.
    Integrate(IntegrateArgs),
    /// Euler solution of dY = f(Y) dX.
    Solve(SolveArgs),
    /// Flow of dY = f(Y) dX from several initial points.
    Flow(FlowArgs),
    /// Residual and symmetry checks.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Composition of two flows against the combined equation.
    Compose(ComposeArgs),
    /// First-order Young PDE by characteristics.
    #[command(subcommand)]
    Pde(PdeCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    Fbm,
    Linear,
    Power,
    Sine,
    Polygonal,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub kind: GenKind,
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Number of grid points.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub exponent: Option<f64>,
    /// Angular frequency.
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Vertices `t:v,t:v,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub vertices: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct PvarArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Print a JSON report instead of the bare value.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    /// Operator path CSV (`t,z` or `t,z11,...`).
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub tag: Option<TagRule>,
    /// Variation exponent of X for the certificate.
    #[arg(long)]
    pub p: Option<f64>,
    /// Variation exponent of Z for the certificate.
    #[arg(long)]
    pub q: Option<f64>,
    /// Write the indefinite integral here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Built-in vector field: zero, scaling, rotation, constant.
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub field_param: Option<f64>,
    /// State dimension.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long)]
    pub path: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long)]
    pub path: PathBuf,
    /// Initial points `a,b;c,d;...`.
    #[arg(long, allow_hyphen_values = true)]
    pub points: Option<String>,
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
    /// Number of sample points.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    /// Driver CSV; switches to the trajectory check.
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
    #[arg(long)]
    pub substeps: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum CheckCommand {
    /// Change of variable for g_t = g_0 + ∫ h dZ along X.
    Ito(ItoArgs),
    /// Chain rule dg(Z) = Dg(Z) dZ.
    Chain(ChainArgs),
    /// Substitution ∫ g dY = ∫ g∘f dZ with Y = ∫ f dZ.
    Substitution(SubstitutionArgs),
    /// Conserved quantity DF·f = 0, or F along trajectories.
    Conserved(ConservedArgs),
    /// Point symmetry f∘Φ = DΦ·f, or Φ along trajectories.
    Symmetry(SymmetryArgs),
    /// Infinitesimal symmetry [g, f] = 0 plus the flow of g.
    Infinitesimal(InfinitesimalArgs),
}

#[derive(Debug, Args)]
pub struct ItoArgs {
    /// Built-in map g_0.
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub map_param: Option<f64>,
    /// Built-in field h; omitted for time-independent g.
    #[arg(long)]
    pub rate: Option<String>,
    #[arg(long)]
    pub rate_param: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub tag: Option<TagRule>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub map_param: Option<f64>,
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub tag: Option<TagRule>,
}

#[derive(Debug, Args)]
pub struct SubstitutionArgs {
    /// Operator path CSV for g.
    #[arg(long)]
    pub g: PathBuf,
    /// Operator path CSV for f.
    #[arg(long)]
    pub f: PathBuf,
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub tag: Option<TagRule>,
}

#[derive(Debug, Args)]
pub struct ConservedArgs {
    /// Built-in observable F.
    #[arg(long)]
    pub obs: Option<String>,
    #[arg(long)]
    pub map_param: Option<f64>,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
}

#[derive(Debug, Args)]
pub struct SymmetryArgs {
    /// Built-in map Φ.
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub map_param: Option<f64>,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub trajectory: TrajectoryArgs,
}

#[derive(Debug, Args)]
pub struct InfinitesimalArgs {
    /// Built-in generator field g.
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub g_param: Option<f64>,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Flow times of g, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub flow_times: Option<String>,
    #[arg(long)]
    pub flow_tol: Option<f64>,
    #[arg(long)]
    pub flow_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Built-in field f, driven by U.
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub f_param: Option<f64>,
    #[arg(long)]
    pub u: PathBuf,
    /// Built-in field g, driven by X.
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub g_param: Option<f64>,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<String>,
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Directory for z_comp.csv and z_dir.csv.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PdeCommand {
    /// Assemble u = b̄∘ā⁻¹ on an evaluation grid.
    Solve(PdeSolveArgs),
    /// Ladder of the local-solution identity residual.
    Residual(PdeArgs),
    /// Caustic times per seed.
    Caustic(PdeArgs),
}

#[derive(Debug, Args)]
pub struct PdeArgs {
    /// Built-in Hamiltonian: transport-k, burgers-half-p-squared, linear-u, zero.
    #[arg(long)]
    pub hamiltonian: Option<String>,
    /// Transport speed for transport-k.
    #[arg(long)]
    pub k: Option<f64>,
    /// Built-in initial datum φ.
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub phi_param: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub seed_lower: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub seed_upper: Option<String>,
    /// Seeds per axis.
    #[arg(long)]
    pub seed_count: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub eval_lower: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eval_upper: Option<String>,
    /// Evaluation points per axis.
    #[arg(long)]
    pub eval_count: Option<usize>,
    #[arg(long)]
    pub substeps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PdeSolveArgs {
    #[command(flatten)]
    pub pde: PdeArgs,
    /// Assemble every k-th grid time.
    #[arg(long)]
    pub every: Option<usize>,
    /// Directory for one CSV per time slice and index.json.
    #[arg(short, long)]
    pub output: PathBuf,
}
