//! `ipdb`: likelihood estimation, query compilation and conditional worlds
//! over incomplete numerical databases.
//!
//! Every command prints exactly one JSON document on stdout. Exit codes:
//! 0 success, 1 bad input or configuration, 2 sampling failure, 3 blowup
//! or cell limit exceeded.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use ipdb::approx::{like_apx, threshold, ApproxConfig, ApproxError, Comparator, LikelihoodQuery};
use ipdb::condworld::{
    check_trivial_extension, lift, prune, validate_world, world_of, ConditionalWorld, LiftOptions, WorldError,
};
use ipdb::json::{complete_relation_to_json, database_from_json, intervals_from_json, world_from_json, world_to_json};
use ipdb::oracle::{exact_likelihood_cells, grid_likelihood, OracleError};
use ipdb::query::arity::arity_of;
use ipdb::rewrite::{apx_value, build_apx_query, build_compute_query, RewriteError, RewrittenQuery, DEFAULT_ARITY_CAP};
use ipdb::{eval, parse, IncompleteDatabase, IntervalSpec, Mode, Query};

#[derive(Parser)]
#[command(name = "ipdb", version, about = "Query answering over incomplete numerical databases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate Likelihood[q, cmp, k] by sampling.
    Likelihood(LikelihoodArgs),
    /// Decide whether the likelihood exceeds --delta.
    Threshold {
        #[command(flatten)]
        l: LikelihoodArgs,
        #[arg(long, env = "IPDB_DELTA")]
        delta: f64,
    },
    /// Compile a sampling run into a single query.
    Rewrite {
        #[command(flatten)]
        l: LikelihoodArgs,
        #[command(flatten)]
        out: RewriteOut,
    },
    /// Compile the answer-distribution table into a single query.
    Compute {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        config: Config,
        #[command(flatten)]
        out: RewriteOut,
    },
    /// Lift a query over a conditional world, flagging infeasible pairs.
    Lift {
        #[command(flatten)]
        source: WorldSource,
        #[command(flatten)]
        config: Config,
    },
    /// Check coverage and disjointness of a conditional world after pruning.
    ValidateWorld {
        #[command(flatten)]
        source: WorldSource,
        #[command(flatten)]
        config: Config,
    },
    /// Compare lifted and direct evaluation on sampled valuations.
    CheckExtension {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        config: Config,
    },
    /// Reference likelihood by cell decomposition or grid quadrature.
    Oracle {
        #[command(flatten)]
        l: LikelihoodArgs,
        #[arg(long, value_enum, default_value_t = OracleMode::Auto)]
        mode: OracleMode,
        /// Grid cells per null.
        #[arg(long, default_value_t = 10_000)]
        resolution: u64,
    },
    /// Evaluate a query on the database.
    Eval {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = EvalMode::Naive)]
        mode: EvalMode,
    },
}

#[derive(Args)]
struct Input {
    /// Database JSON.
    #[arg(long)]
    db: PathBuf,
    /// Query text.
    #[arg(long)]
    query: PathBuf,
}

/// A world given as JSON, or the single-pair world of a database; lifted
/// over --query when one is given.
#[derive(Args)]
struct WorldSource {
    /// Conditional world JSON.
    #[arg(long, conflicts_with = "db", required_unless_present = "db")]
    world: Option<PathBuf>,
    /// Database JSON.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Query text.
    #[arg(long)]
    query: Option<PathBuf>,
}

#[derive(Args)]
struct LikelihoodArgs {
    #[command(flatten)]
    input: Input,
    /// Interval tuple JSON; defaults to (-inf, +inf) in every column.
    #[arg(long)]
    intervals: Option<PathBuf>,
    #[arg(long, env = "IPDB_CMP", default_value = "eq")]
    cmp: Comparator,
    #[arg(long, env = "IPDB_K", default_value_t = 1)]
    k: u64,
    #[command(flatten)]
    config: Config,
}

#[derive(Args)]
struct Config {
    #[arg(long, env = "IPDB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "IPDB_EPSILON", default_value_t = 0.05)]
    epsilon: f64,
    /// Overrides the sample count derived from epsilon.
    #[arg(long, env = "IPDB_GAMMA")]
    gamma: Option<u64>,
    /// Samples for world validation and extension checks.
    #[arg(long, env = "IPDB_TRIALS", default_value_t = 10_000)]
    trials: u64,
    #[arg(long, env = "IPDB_THREADS")]
    threads: Option<usize>,
    #[arg(long, env = "IPDB_SKIP_BAD_SAMPLES")]
    skip_bad_samples: bool,
    #[arg(long, env = "IPDB_BLOWUP_CAP", default_value_t = ipdb::condworld::DEFAULT_BLOWUP_CAP)]
    blowup_cap: usize,
    #[arg(long, env = "IPDB_CELL_LIMIT", default_value_t = ipdb::oracle::DEFAULT_CELL_LIMIT)]
    cell_limit: u64,
}

#[derive(Args)]
struct RewriteOut {
    /// Also write the compiled query text to this file.
    #[arg(long)]
    emit: Option<PathBuf>,
    /// Evaluate the compiled query and include the result.
    #[arg(long)]
    evaluate: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    Exact,
    Grid,
    /// Exact when possible, grid otherwise.
    Auto,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Naive,
    Complete,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Failure {
            code: 1,
            kind: "input",
            message: message.to_string(),
        }
    }
}

impl From<ApproxError> for Failure {
    fn from(e: ApproxError) -> Self {
        match e {
            ApproxError::Sample { .. } | ApproxError::AllSamplesFailed => Failure {
                code: 2,
                kind: "sampling",
                message: e.to_string(),
            },
            ApproxError::InvalidEpsilon(_) | ApproxError::InvalidGamma | ApproxError::InvalidDelta(_) => Failure {
                code: 1,
                kind: "config",
                message: e.to_string(),
            },
            _ => Failure::input(e),
        }
    }
}

impl From<RewriteError> for Failure {
    fn from(e: RewriteError) -> Self {
        match e {
            RewriteError::Approx(e) => e.into(),
            RewriteError::Sample { .. } => Failure {
                code: 2,
                kind: "sampling",
                message: e.to_string(),
            },
            _ => Failure::input(e),
        }
    }
}

impl From<WorldError> for Failure {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::BlowupLimit { .. } => Failure {
                code: 3,
                kind: "blowup",
                message: e.to_string(),
            },
            _ => Failure::input(e),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Approx(e) => e.into(),
            OracleError::CellLimit { .. } => Failure {
                code: 3,
                kind: "blowup",
                message: e.to_string(),
            },
            _ => Failure::input(e),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_db(path: &Path) -> Result<IncompleteDatabase, Failure> {
    database_from_json(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_query(path: &Path) -> Result<Query, Failure> {
    parse(&read(path)?).map_err(|e| Failure {
        code: 1,
        kind: "parse",
        message: format!("{}: {e}", path.display()),
    })
}

fn load(input: &Input) -> Result<(IncompleteDatabase, Query), Failure> {
    let db = load_db(&input.db)?;
    let q = load_query(&input.query)?;
    arity_of(&q, &db.schema()).map_err(|e| Failure {
        code: 1,
        kind: "type",
        message: e.to_string(),
    })?;
    Ok((db, q))
}

fn likelihood_query(args: &LikelihoodArgs) -> Result<(IncompleteDatabase, LikelihoodQuery), Failure> {
    let (db, q) = load(&args.input)?;
    let intervals = match &args.intervals {
        Some(path) => intervals_from_json(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?,
        None => {
            let n = arity_of(&q, &db.schema()).map_err(Failure::input)?;
            vec![IntervalSpec::everything(); n]
        }
    };
    Ok((db, LikelihoodQuery::new(q, args.cmp, args.k, intervals)))
}

impl Config {
    fn approx(&self) -> Result<ApproxConfig, Failure> {
        let mut cfg = ApproxConfig::new(self.epsilon, self.seed);
        cfg.gamma = self.gamma;
        cfg.threads = self.threads;
        cfg.skip_bad_samples = self.skip_bad_samples;
        cfg.gamma()?;
        Ok(cfg)
    }

    fn lift(&self) -> LiftOptions {
        LiftOptions {
            blowup_cap: self.blowup_cap,
            prune_intermediate: false,
        }
    }

    fn checked_trials(&self) -> Result<u64, Failure> {
        if self.trials == 0 {
            return Err(Failure {
                code: 1,
                kind: "config",
                message: "--trials must be positive".into(),
            });
        }
        Ok(self.trials)
    }
}

fn to_json<T: serde::Serialize>(x: &T) -> Json {
    serde_json::to_value(x).expect("output serializes")
}

fn rewritten(r: &RewrittenQuery, db: &IncompleteDatabase, out: &RewriteOut) -> Result<Json, Failure> {
    let text = r.ast.to_string();
    if let Some(path) = &out.emit {
        fs::write(path, &text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    }
    let mut doc = json!({ "query": text, "sidecar": to_json(&r.sidecar()) });
    if out.evaluate {
        let answer = eval(&r.ast, db, Mode::Naive).map_err(Failure::input)?;
        match r.kind {
            ipdb::rewrite::RewriteKind::Apx => doc["value"] = json!(apx_value(&answer)),
            ipdb::rewrite::RewriteKind::Compute => doc["table"] = complete_relation_to_json(&answer),
        }
    }
    Ok(doc)
}

fn source_world(source: &WorldSource, config: &Config) -> Result<ConditionalWorld, Failure> {
    let world = match (&source.world, &source.db) {
        (Some(path), _) => {
            world_from_json(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        }
        (None, Some(path)) => world_of(&load_db(path)?),
        (None, None) => return Err(Failure::input("give --world or --db")),
    };
    match &source.query {
        Some(path) => Ok(lift(&load_query(path)?, &world, config.lift())?),
        None => Ok(world),
    }
}

fn run(cli: Cli) -> Result<Json, Failure> {
    match cli.command {
        Command::Likelihood(args) => {
            let (db, l) = likelihood_query(&args)?;
            Ok(to_json(&like_apx(&l, &db, &args.config.approx()?)?))
        }
        Command::Threshold { l: args, delta } => {
            let (db, l) = likelihood_query(&args)?;
            Ok(to_json(&threshold(&l, delta, &db, &args.config.approx()?)?))
        }
        Command::Rewrite { l: args, out } => {
            let (db, l) = likelihood_query(&args)?;
            let r = build_apx_query(&l, &db, &args.config.approx()?, DEFAULT_ARITY_CAP)?;
            rewritten(&r, &db, &out)
        }
        Command::Compute { input, config, out } => {
            let (db, q) = load(&input)?;
            let r = build_compute_query(&q, &db, &config.approx()?, DEFAULT_ARITY_CAP)?;
            rewritten(&r, &db, &out)
        }
        Command::Lift { source, config } => Ok(world_to_json(&source_world(&source, &config)?)),
        Command::ValidateWorld { source, config } => {
            let trials = config.checked_trials()?;
            let world = source_world(&source, &config)?;
            let pruned = prune(&world);
            let report = validate_world(&pruned, trials, config.seed)?;
            let mut doc = to_json(&report);
            doc["violations"] = json!(report.violations());
            doc["pairs"] = json!(world.len());
            doc["pruned"] = json!(world.len() - pruned.len());
            Ok(doc)
        }
        Command::CheckExtension { input, config } => {
            let trials = config.checked_trials()?;
            let (db, q) = load(&input)?;
            Ok(to_json(&check_trivial_extension(&q, &db, trials, config.seed, config.lift())?))
        }
        Command::Oracle { l: args, mode, resolution } => {
            let (db, l) = likelihood_query(&args)?;
            let limit = args.config.cell_limit;
            let result = match mode {
                OracleMode::Exact => exact_likelihood_cells(&l, &db, limit)?,
                OracleMode::Grid => grid_likelihood(&l, &db, resolution)?,
                OracleMode::Auto => match exact_likelihood_cells(&l, &db, limit) {
                    Err(OracleError::NotCellDecomposable(why)) => {
                        eprintln!("exact mode unavailable ({why}); using the grid");
                        grid_likelihood(&l, &db, resolution)?
                    }
                    other => other?,
                },
            };
            Ok(to_json(&result))
        }
        Command::Eval { input, mode } => {
            let (db, q) = load(&input)?;
            let mode = match mode {
                EvalMode::Naive => Mode::Naive,
                EvalMode::Complete => Mode::Complete,
            };
            Ok(complete_relation_to_json(&eval(&q, &db, mode).map_err(Failure::input)?))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(doc) => {
            println!("{doc}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            println!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            ExitCode::from(f.code)
        }
    }
}
