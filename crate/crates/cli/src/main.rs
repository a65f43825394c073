mod commands;
mod plot;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qgnn::ansatz::Family;
use qgnn::calibration::ShiftMode;
use qgnn::dataset::Cell;
use qgnn::objective::LossKind;
use qgnn::training::Selection;

#[derive(Parser, Debug)]
#[command(name = "qgnn", version, about = "Equivariant quantum circuits for clique problems")]
pub struct Cli {
    /// Master seed; every random stream of the command derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labelled dataset manifest.
    GenData(GenDataArgs),
    /// Train a model (or cross-validate with --folds).
    Train(TrainArgs),
    /// Evaluate a checkpoint per (n, p) cell.
    Eval(EvalArgs),
    /// Run the Pine recursive clique heuristic.
    Pine(PineArgs),
    /// Symmetry audit of a checkpoint.
    Audit(AuditArgs),
    /// Fit an observable-shift calibration.
    Calibrate(CalibrateArgs),
    /// Render metric CSVs as SVG.
    Plot(PlotArgs),
}

#[derive(Clone, Debug)]
pub struct CellList(pub Vec<Cell>);

fn parse_cells(s: &str) -> Result<CellList, String> {
    let cells = Cell::parse_many(s).map_err(|e| e.to_string())?;
    if cells.is_empty() {
        return Err(format!("cell `{s}` expands to nothing"));
    }
    Ok(CellList(cells))
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: qgnn::error::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: qgnn::error::Error| e.to_string())
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    s.parse().map_err(|e: qgnn::error::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ShiftMode, String> {
    s.parse().map_err(|e: qgnn::error::Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Cells such as `all:2-6` or `er:8:0.1-0.9@0.1:50`.
    #[arg(long, required = true, num_args = 1.., value_parser = parse_cells)]
    pub cells: Vec<CellList>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file of defaults; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// SIM4 blocks per gadget (MilleFeuille).
    #[arg(long)]
    pub inner_layers: Option<usize>,
    #[arg(long)]
    pub no_initial_state: bool,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_selection)]
    pub selection: Option<Selection>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Initialise from this checkpoint.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Separate manifest used for model selection.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Cross-validate with this many folds instead of a single run.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub cv_iterations: Option<usize>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_loss, default_value = "logwrong")]
    pub loss: LossKind,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeuristicArg {
    Quantum,
    Uniform,
    Degree,
}

#[derive(Args, Debug)]
pub struct PineArgs {
    #[arg(long, value_enum)]
    pub heuristic: HeuristicArg,
    /// Required for the quantum heuristic.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Entries for loss-invariance and accuracy-drop checks.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_loss, default_value = "logwrong")]
    pub loss: LossKind,
    #[arg(long, default_value_t = 5)]
    pub permutations: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Readout observable: mountain or crater.
    #[arg(long, value_parser = parse_loss, default_value = "mountain")]
    pub loss: LossKind,
    #[arg(long, value_parser = parse_mode, default_value = "linear_in_n")]
    pub mode: ShiftMode,
    /// Fit points per graph size, taken in manifest order; the rest are held out.
    #[arg(long, default_value_t = 1)]
    pub fit_per_size: usize,
    /// Calibration JSON.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Accuracy against n, one line per input.
    Generalisation,
    /// Gradient magnitude and loss against step.
    Training,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
