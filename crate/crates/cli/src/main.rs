//! `mtvar`: center-outward rank tests for VAR models from the command line.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical failure.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mtvar_core::gaussian::{gaussian_test_order, gaussian_test_specified};
use mtvar_core::order_id::{identify_order, IdentifyOptions, OrderTest};
use mtvar_core::rank_tests::{prepare_order, prepare_specified};
use mtvar_core::simulation::{
    contaminate, run_study, sample_innovations, ContaminationSpec, InnovationModel, StudyConfig,
};
use mtvar_core::var::{fit_constrained_ls, residuals, simulate_var, FitOptions, DEFAULT_BURN_IN};
use mtvar_core::{
    factorize, make_grid, make_sphere_grid, solve_coupling, BallGrid, Calibration, ScoreKind, ScoreSpec, SeriesMatrix,
    TestOutcome, VarModel,
};

use crate::io::{emit_json, ingest_csv, read_model, write_csv_rows, CsvOptions, ModelFile, Report, SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] mtvar_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mtvar", version, about = "Center-outward rank-based tests for VAR models")]
struct Cli {
    /// Worker threads (default: MTVAR_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the grid factorization and gridpoints for a sample size.
    Grid(GridCmd),
    /// Center-outward ranks, signs and F-values of model residuals.
    Ranks(RanksCmd),
    /// Least-squares VAR(p) fit.
    Fit(FitCmd),
    /// Test a fully specified VAR model.
    TestSpec(TestSpecCmd),
    /// Test VAR(p0) against VAR(p1).
    TestOrder(TestOrderCmd),
    /// Sequential order identification.
    Identify(IdentifyCmd),
    /// Simulate a VAR series.
    Simulate(SimulateCmd),
    /// Run a Monte Carlo study from a TOML config.
    Mc(McCmd),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Numeric CSV file, one observation per row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// First-difference the series.
    #[arg(long)]
    diff: bool,
    /// Subtract the column means (after differencing).
    #[arg(long)]
    demean: bool,
    /// Expected dimension; a mismatch is an input error.
    #[arg(long)]
    d: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> CliResult<SeriesMatrix> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::Input("delimiter must be a single ASCII character".into()));
        }
        let x = ingest_csv(
            &self.data,
            CsvOptions { delimiter: self.delimiter as u8, diff: self.diff, demean: self.demean },
        )?;
        if let Some(d) = self.d {
            if d != x.d() {
                return Err(CliError::Input(format!("--d {d} does not match the {} data columns", x.d())));
            }
        }
        Ok(x)
    }
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Grid factorization override `n_R,n_S,n_0`.
    #[arg(long, value_parser = parse_triple)]
    grid: Option<(usize, usize, usize)>,
    /// Use the sphere grid (`n_S = n`), meaningful for the sign score.
    #[arg(long)]
    sphere: bool,
}

impl GridArgs {
    fn build(&self, n: usize, d: usize, seed: u64) -> CliResult<BallGrid> {
        if self.sphere {
            if self.grid.is_some() {
                return Err(CliError::Input("--sphere and --grid are mutually exclusive".into()));
            }
            return Ok(make_sphere_grid(n, d, seed)?);
        }
        Ok(make_grid(factorize(n, d, self.grid)?, d, seed)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScoreArg {
    Sign,
    Spearman,
    Vdw,
    Gaussian,
}

impl ScoreArg {
    fn kind(self) -> Option<ScoreKind> {
        match self {
            ScoreArg::Sign => Some(ScoreKind::Sign),
            ScoreArg::Spearman => Some(ScoreKind::Spearman),
            ScoreArg::Vdw => Some(ScoreKind::Vdw),
            ScoreArg::Gaussian => None,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct TestArgs {
    #[arg(long, value_enum, default_value = "vdw")]
    score: ScoreArg,
    /// Score applied at the lagged time, when it differs from --score.
    #[arg(long, value_enum)]
    score2: Option<ScoreArg>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Permutations for permutational critical values.
    #[arg(long)]
    perm: Option<usize>,
    /// Enumerate all n! permutations (n <= 9).
    #[arg(long, conflicts_with = "perm")]
    exhaustive: bool,
    /// Seed for permutations and grids; drawn from entropy when absent.
    #[arg(long)]
    seed: Option<u64>,
}

impl TestArgs {
    fn spec(&self) -> CliResult<Option<ScoreSpec>> {
        match (self.score.kind(), self.score2.map(ScoreArg::kind)) {
            (None, None) => Ok(None),
            (Some(a), None) => Ok(Some(ScoreSpec::new(a))),
            (Some(a), Some(Some(b))) => Ok(Some(ScoreSpec::pair(a, b))),
            _ => Err(CliError::Input("the gaussian test cannot be combined with a rank score".into())),
        }
    }

    fn calibration(&self, seed: u64) -> Calibration {
        match (self.perm, self.exhaustive) {
            (_, true) => Calibration::Exhaustive,
            (Some(m), false) => Calibration::Permutation { m, seed },
            (None, false) => Calibration::Asymptotic,
        }
    }
}

#[derive(Args, Debug)]
struct GridCmd {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the gridpoints as CSV here; the JSON summary goes to stdout.
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RanksCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Model whose residuals are ranked (JSON); the data themselves when absent.
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Fitted order.
    #[arg(long)]
    p: usize,
    /// Keep the exact least-squares values instead of rounding to the lattice.
    #[arg(long)]
    no_discretize: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestSpecCmd {
    #[command(flatten)]
    data: DataArgs,
    /// Null model (JSON); white noise when absent.
    #[arg(long)]
    theta: Option<PathBuf>,
    /// Alternative order (default: the null model's order, at least 1).
    #[arg(long)]
    p1: Option<usize>,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestOrderCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    p0: usize,
    #[arg(long)]
    p1: usize,
    #[command(flatten)]
    test: TestArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IdentifyCmd {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "vdw")]
    score: ScoreArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    perm: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InnovationArg {
    Gaussian,
    Student,
    Mixture,
    SkewT,
}

#[derive(Args, Debug)]
struct SimulateCmd {
    #[arg(long)]
    n: usize,
    /// Dimension, required without --theta.
    #[arg(long)]
    d: Option<usize>,
    /// Model (JSON); white noise when absent.
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gaussian")]
    innovations: InnovationArg,
    /// Degrees of freedom of the Student innovations.
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
    /// Fraction of equally spaced additive outliers.
    #[arg(long)]
    contaminate: Option<f64>,
    /// Outlier size, comma separated.
    #[arg(long, value_delimiter = ',', requires = "contaminate")]
    outlier: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct McCmd {
    #[arg(long)]
    config: PathBuf,
    /// Output prefix; writes `<prefix>.csv` and `<prefix>.json`. Overrides
    /// the config's `out` key. Without either, the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> =
        s.split(',').map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}"))).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err("expected three comma-separated integers n_R,n_S,n_0".into()),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random)
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

fn report<T: Serialize>(config: serde_json::Value, seed: Option<u64>, result: T) -> Report<T> {
    Report { schema: SCHEMA.into(), command: argv(), config, seed, result }
}

fn data_echo(d: &DataArgs) -> serde_json::Value {
    json!({ "data": d.data, "diff": d.diff, "demean": d.demean, "delimiter": d.delimiter.to_string() })
}

fn grid_echo(g: &GridArgs) -> serde_json::Value {
    json!({ "grid": g.grid.map(|(a, b, c)| vec![a, b, c]), "sphere": g.sphere })
}

fn run_grid(c: GridCmd) -> CliResult<()> {
    let g = c.grid.build(c.n, c.d, c.seed)?;
    if let Some(path) = &c.points {
        let header: Vec<String> = (1..=c.d).map(|k| format!("u{k}")).chain(["rank".into()]).collect();
        let rows: Vec<Vec<String>> = (0..g.n())
            .map(|k| g.point(k).iter().map(|v| v.to_string()).chain([g.ranks[k].to_string()]).collect())
            .collect();
        write_csv_rows(Some(path), &header, &rows)?;
    }
    let config = json!({ "n": c.n, "d": c.d, "seed": c.seed, "grid": grid_echo(&c.grid), "points": c.points });
    let result = json!({ "factorization": g.factorization, "symmetric": g.symmetric });
    emit_json(&report(config, Some(c.seed), result), None)
}

fn run_ranks(c: RanksCmd) -> CliResult<()> {
    let x = c.data.load()?;
    let z = match &c.theta {
        Some(p) => {
            let m = read_model(p)?;
            residuals(&x, &m.to_model(m.p.max(1))?)?
        }
        None => x,
    };
    let g = c.grid.build(z.n(), z.d(), c.seed)?;
    let cp = solve_coupling(&z, &g)?;
    let d = z.d();
    let mut header = vec!["t".to_string(), "rank".to_string(), "n_r".to_string()];
    header.extend((1..=d).map(|k| format!("f{k}")));
    header.extend((1..=d).map(|k| format!("s{k}")));
    let rows: Vec<Vec<String>> = (0..z.n())
        .map(|t| {
            let mut r = vec![(t + 1).to_string(), cp.ranks[t].to_string(), cp.n_r.to_string()];
            r.extend(cp.f_values.row(t).iter().map(|v| v.to_string()));
            r.extend(cp.signs.row(t).iter().map(|v| v.to_string()));
            r
        })
        .collect();
    write_csv_rows(c.out.as_ref(), &header, &rows)
}

fn run_fit(c: FitCmd) -> CliResult<()> {
    let x = c.data.load()?;
    if c.p == 0 {
        return Err(CliError::Input("--p must be at least 1".into()));
    }
    let opts = FitOptions { discretize: !c.no_discretize, ..FitOptions::default() };
    let m = fit_constrained_ls(&x, c.p, c.p, opts)?;
    let config = json!({ "input": data_echo(&c.data), "p": c.p, "discretize": opts.discretize });
    let result = json!({
        "model": ModelFile::from_model(&m),
        "theta": m.theta,
        "spectral_radius": m.spectral_radius(),
        "stationary": m.check_stationary().is_ok(),
    });
    emit_json(&report(config, None, result), c.out.as_ref())
}

fn test_echo(t: &TestArgs, seed: u64) -> serde_json::Value {
    json!({
        "score": format!("{:?}", t.score).to_lowercase(),
        "score2": t.score2.map(|s| format!("{s:?}").to_lowercase()),
        "alpha": t.alpha,
        "perm": t.perm,
        "exhaustive": t.exhaustive,
        "seed": seed,
    })
}

fn run_test_spec(c: TestSpecCmd) -> CliResult<()> {
    let x = c.data.load()?;
    let seed = resolve_seed(c.test.seed);
    let model = match &c.theta {
        Some(p) => {
            let f = read_model(p)?;
            if f.d != x.d() {
                return Err(CliError::Input(format!(
                    "model dimension {} does not match the {} data columns",
                    f.d,
                    x.d()
                )));
            }
            f.to_model(c.p1.unwrap_or(f.p).max(1))?
        }
        None => VarModel::white_noise(x.d(), c.p1.unwrap_or(1).max(1))?,
    };
    let outcome: TestOutcome = match c.test.spec()? {
        None => gaussian_test_specified(&x, &model, c.test.alpha)?,
        Some(spec) => {
            let g = c.grid.build(x.n(), x.d(), seed)?;
            prepare_specified(&x, &model, spec, &g)?.outcome(c.test.alpha, c.test.calibration(seed))?
        }
    };
    let config = json!({
        "input": data_echo(&c.data),
        "theta": c.theta,
        "p1": model.p1,
        "test": test_echo(&c.test, seed),
        "grid": grid_echo(&c.grid),
    });
    emit_json(&report(config, Some(seed), outcome), c.out.as_ref())
}

fn run_test_order(c: TestOrderCmd) -> CliResult<()> {
    let x = c.data.load()?;
    let seed = resolve_seed(c.test.seed);
    let outcome = match c.test.spec()? {
        None => gaussian_test_order(&x, c.p0, c.p1, c.test.alpha)?,
        Some(spec) => {
            let g = c.grid.build(x.n(), x.d(), seed)?;
            prepare_order(&x, c.p0, c.p1, spec, &g)?.outcome(c.test.alpha, c.test.calibration(seed))?
        }
    };
    let config = json!({
        "input": data_echo(&c.data),
        "p0": c.p0,
        "p1": c.p1,
        "test": test_echo(&c.test, seed),
        "grid": grid_echo(&c.grid),
    });
    emit_json(&report(config, Some(seed), outcome), c.out.as_ref())
}

fn run_identify(c: IdentifyCmd) -> CliResult<()> {
    let x = c.data.load()?;
    let seed = resolve_seed(c.seed);
    let (test, grid) = match c.score.kind() {
        None => (OrderTest::Gaussian, None),
        Some(k) => (OrderTest::Rank { score: ScoreSpec::new(k) }, Some(c.grid.build(x.n(), x.d(), seed)?)),
    };
    let opts = IdentifyOptions { alpha: c.alpha, max_order: c.max_order, permutations: c.perm, seed };
    let config = json!({
        "input": data_echo(&c.data),
        "score": format!("{:?}", c.score).to_lowercase(),
        "alpha": c.alpha,
        "max_order": c.max_order,
        "perm": c.perm,
        "seed": seed,
        "grid": grid_echo(&c.grid),
    });
    match identify_order(&x, test, grid.as_ref(), opts) {
        Ok(trace) => emit_json(&report(config, Some(seed), trace), c.out.as_ref()),
        Err(failure) => {
            emit_json(&report(config, Some(seed), &failure.partial), c.out.as_ref())?;
            Err(CliError::Core(failure.error))
        }
    }
}

fn run_simulate(c: SimulateCmd) -> CliResult<()> {
    let seed = resolve_seed(c.seed);
    let model = match (&c.theta, c.d) {
        (Some(p), _) => {
            let f = read_model(p)?;
            f.to_model(f.p.max(1))?
        }
        (None, Some(d)) => VarModel::white_noise(d, 1)?,
        (None, None) => return Err(CliError::Input("either --theta or --d is required".into())),
    };
    if c.n == 0 {
        return Err(CliError::Input("--n must be positive".into()));
    }
    model.check_stationary()?;
    let d = model.d;
    let innov = match c.innovations {
        InnovationArg::Gaussian => InnovationModel::standard_gaussian(),
        InnovationArg::Student => InnovationModel::Student { nu: c.nu },
        InnovationArg::Mixture => InnovationModel::bivariate_mixture(),
        InnovationArg::SkewT => InnovationModel::bivariate_skew_t3(),
    };
    let eps = sample_innovations(&innov, c.n + DEFAULT_BURN_IN, d, seed)?;
    let mut x = simulate_var(&model, &eps, DEFAULT_BURN_IN)?;
    if let Some(fraction) = c.contaminate {
        let size = c.outlier.clone().unwrap_or_else(|| vec![9.0; d]);
        x = contaminate(&x, &ContaminationSpec { fraction, size, demean_after: true })?;
    }
    let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    let rows: Vec<Vec<String>> = x.rows().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    if c.out.is_some() {
        eprintln!("seed: {seed}");
    }
    write_csv_rows(c.out.as_ref(), &header, &rows)
}

fn run_mc(c: McCmd) -> CliResult<()> {
    let text =
        std::fs::read_to_string(&c.config).map_err(|e| CliError::Input(format!("{}: {e}", c.config.display())))?;
    let mut table: toml::Table = text.parse().map_err(|e| CliError::Input(format!("{}: {e}", c.config.display())))?;
    let out_key = table.remove("out").and_then(|v| v.as_str().map(PathBuf::from));
    if let Some(toml::Value::Table(inn)) = table.get_mut("innovations") {
        if let Some(preset) = inn.remove("preset") {
            let model = match preset.as_str() {
                Some("bivariate-mixture") => InnovationModel::bivariate_mixture(),
                Some("bivariate-skew-t3") => InnovationModel::bivariate_skew_t3(),
                _ => return Err(CliError::Input(format!("unknown innovations preset {preset}"))),
            };
            let v = toml::Value::try_from(&model).map_err(|e| CliError::Input(e.to_string()))?;
            *inn = v.as_table().cloned().unwrap_or_default();
        }
    }
    let cfg: StudyConfig = table.try_into().map_err(|e| CliError::Input(format!("{}: {e}", c.config.display())))?;
    let rep = run_study(&cfg)?;
    let prefix = c.out.or(out_key);
    let csv = rep.to_csv();
    match prefix {
        Some(p) => {
            let csv_path = p.with_extension("csv");
            let json_path = p.with_extension("json");
            std::fs::write(&csv_path, &csv).map_err(|e| CliError::Input(format!("{}: {e}", csv_path.display())))?;
            let config = serde_json::to_value(&cfg).map_err(|e| CliError::Input(e.to_string()))?;
            emit_json(&report(config, Some(cfg.seed), &rep), Some(&json_path))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn init_threads(requested: Option<usize>) -> CliResult<()> {
    let n = match requested {
        Some(n) => Some(n),
        None => match std::env::var("MTVAR_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| CliError::Input(format!("MTVAR_THREADS='{v}' is not a number")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Input("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Grid(c) => run_grid(c),
        Command::Ranks(c) => run_ranks(c),
        Command::Fit(c) => run_fit(c),
        Command::TestSpec(c) => run_test_spec(c),
        Command::TestOrder(c) => run_test_order(c),
        Command::Identify(c) => run_identify(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Mc(c) => run_mc(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
