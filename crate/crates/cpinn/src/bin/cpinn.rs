//! Command-line harness: grid export, rate studies, norm checks,
//! training runs, the comparison table, and heatmap data.
//!
//! Exit codes: 0 success, 2 validation error, 3 training divergence.

use clap::{Args, Parser, Subcommand};
use cpinn::besov::{BesovClass, Index, NormId};
use cpinn::error::Error;
use cpinn::experiments::{self, InterpNorm, NormCheckKind, TrainConfig};
use cpinn::grid::GridSpec;
use cpinn::loss::LossKind;
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cpinn", about = "Consistent collocation for the heat equation", version)]
struct Cli {
    /// Seed override for training commands.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; CSV is written here and a JSON mirror next to it.
    /// Without it, CSV goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// key=value defaults applied where flags are omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for the table sweep.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Data-site tools.
    Grid {
        #[command(subcommand)]
        sub: GridCommand,
    },
    /// Convergence-rate studies.
    Rates {
        #[command(subcommand)]
        sub: RatesCommand,
    },
    /// Compare discrete norms against quadrature oracles.
    NormCheck(NormCheckArgs),
    /// Train one network on a manufactured problem.
    Train(TrainArgs),
    /// Both losses over mesh sizes and seeds, with median summaries.
    ReproduceTable1(TableArgs),
    /// Exact/trained value grids at selected times.
    Figure1(FigureArgs),
}

#[derive(Subcommand)]
enum GridCommand {
    /// Emit one CSV row per data site: site_class, x1..xd, t.
    Dump(GridDumpArgs),
}

#[derive(Args)]
struct GridDumpArgs {
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, default_value_t = 1)]
    kp: u32,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 2)]
    rp: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long = "T", alias = "t", default_value_t = 1.0)]
    t: f64,
}

#[derive(Subcommand)]
enum RatesCommand {
    /// Interpolation error decay of a smooth test function.
    Interp(RatesInterpArgs),
    /// Recovery error decay of smooth and bump fixtures for a class.
    Recovery(RatesRecoveryArgs),
}

#[derive(Args)]
struct RatesInterpArgs {
    /// Test function name: sinprod | sincos.
    #[arg(long = "f", default_value = "sinprod")]
    function: String,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long, default_value_t = 2)]
    rp: usize,
    /// c | l2l2 | l2h1
    #[arg(long, default_value = "c")]
    norm: String,
    #[arg(long, default_value_t = 1)]
    kmin: u32,
    #[arg(long, default_value_t = 5)]
    kmax: u32,
}

#[derive(Args)]
struct RatesRecoveryArgs {
    /// Spatial smoothness, rational like 2 or 3/2.
    #[arg(long, default_value = "2")]
    s: String,
    /// Spatial integrability, rational or inf.
    #[arg(long, default_value = "inf")]
    p: String,
    /// Temporal smoothness.
    #[arg(long, default_value = "1")]
    theta: String,
    /// Temporal integrability.
    #[arg(long, default_value = "inf")]
    pp: String,
    /// c | l2l2 | l2h1
    #[arg(long, default_value = "c")]
    norm: String,
    #[arg(long, default_value_t = 5)]
    kmax: u32,
}

#[derive(Args)]
struct NormCheckArgs {
    /// mixed | h12 | h14 | h1214 | init
    #[arg(long)]
    which: String,
    #[arg(long, default_value_t = 1)]
    kmin: u32,
    #[arg(long, default_value_t = 4)]
    kmax: u32,
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// u1 | u2
    #[arg(long, default_value = "u1")]
    problem: String,
    /// pinn | cpinn
    #[arg(long, default_value = "cpinn")]
    loss: String,
    /// Mesh size per axis.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Step size.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Interior exponent override for the consistent loss.
    #[arg(long)]
    gamma: Option<f64>,
    /// Disable the identity skip connections.
    #[arg(long)]
    no_skip: bool,
    /// Also report the consistent loss without its initial-data term.
    #[arg(long)]
    no_initial_term: bool,
    /// Save the trained checkpoint here.
    #[arg(long)]
    save_net: Option<PathBuf>,
    /// Record the relative L2 error every this many iterations.
    #[arg(long, default_value_t = 0)]
    error_every: usize,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value = "u1")]
    problem: String,
    /// Comma-separated mesh sizes.
    #[arg(long, default_value = "5,10,15,20,25,30", value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Comma-separated seeds.
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long, default_value = "u1")]
    problem: String,
    #[arg(long, default_value = "0,0.5,1", value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, default_value_t = 51)]
    res: usize,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
}

/// key=value defaults from --config.
#[derive(Default)]
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "config line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Parse(format!("config key {key}: bad value {raw:?}"))),
        }
    }
}

fn parse_index(s: &str) -> Result<Index, Error> {
    let s = s.trim();
    if s == "inf" || s == "infinity" {
        return Ok(Index::Infinity);
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rational {s:?}")))?;
        let d: i64 = den
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rational {s:?}")))?;
        return Ok(Index::new(n, d));
    }
    let n: i64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("bad index {s:?}")))?;
    Ok(Index::int(n))
}

fn norm_id(name: &str) -> Result<NormId, Error> {
    match name {
        "c" => Ok(NormId::C),
        "l2l2" => Ok(NormId::MixedLebesgue {
            tau: Index::int(2),
            taup: Index::int(2),
        }),
        "l2h1" => Ok(NormId::L2H1),
        other => Err(Error::InvalidSpec(format!("unknown norm {other:?}"))),
    }
}

/// Write CSV to --out (with a JSON mirror) or stdout.
fn emit(out: Option<&Path>, csv: &str, json: &str) -> Result<(), Error> {
    match out {
        None => {
            print!("{csv}");
            Ok(())
        }
        Some(path) => {
            std::fs::write(path, csv)?;
            let mirror = path.with_extension("json");
            std::fs::write(&mirror, json)?;
            eprintln!("wrote {} and {}", path.display(), mirror.display());
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_train_config(
    cli: &Cli,
    cfg_file: &FileConfig,
    loss: LossKind,
    n: Option<usize>,
    width: Option<usize>,
    depth: Option<usize>,
    eta: Option<f64>,
    momentum: Option<f64>,
    iters: Option<usize>,
    gamma: Option<f64>,
    no_skip: bool,
) -> Result<TrainConfig, Error> {
    let mut cfg = TrainConfig::new(loss, 15);
    if let Some(n) = n.or(cfg_file.get("n")?) {
        cfg.n = n;
    }
    if let Some(v) = width.or(cfg_file.get("width")?) {
        cfg.width = v;
    }
    if let Some(v) = depth.or(cfg_file.get("depth")?) {
        cfg.depth = v;
    }
    if let Some(v) = eta.or(cfg_file.get("step_size")?).or(cfg_file.get("eta")?) {
        cfg.step_size = v;
    }
    if let Some(v) = momentum.or(cfg_file.get("momentum")?) {
        cfg.momentum = v;
    }
    if let Some(v) = iters.or(cfg_file.get("iterations")?) {
        cfg.iterations = v;
    }
    if let Some(v) = gamma.or(cfg_file.get("gamma")?) {
        cfg.gamma = Some(v);
    }
    if no_skip || cfg_file.get::<u8>("no_skip")?.unwrap_or(0) != 0 {
        cfg.skip = false;
    }
    if let Some(v) = cfg_file.get("t_final")? {
        cfg.t_final = v;
    }
    if let Some(seed) = cli.seed.or(cfg_file.get("seed")?) {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg_file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli
        .threads
        .or(cfg_file.get("threads")?)
        .unwrap_or(1)
        .max(1);
    match &cli.command {
        Command::Grid {
            sub: GridCommand::Dump(args),
        } => {
            let spec = GridSpec::new(args.d, args.k, args.kp, args.r, args.rp, args.t)?;
            let csv = experiments::dump_grid_csv(&spec)?;
            let json = serde_json::json!({
                "d": args.d, "k": args.k, "kp": args.kp, "r": args.r,
                "rp": args.rp, "t_final": args.t,
                "m_tilde": spec.m_tilde(), "m_hat": spec.m_hat(),
                "boundary_nominal": spec.boundary_nominal(),
            })
            .to_string();
            emit(cli.out.as_deref(), &csv, &json)
        }
        Command::Rates {
            sub: RatesCommand::Interp(args),
        } => {
            let tf = experiments::test_function(&args.function)?;
            let norm: InterpNorm = args.norm.parse()?;
            let rows =
                experiments::interp_rate_study(&tf, args.r, args.rp, norm, args.kmin, args.kmax)?;
            let mut csv = String::from("k,kp,error,fitted_slope,predicted_slope\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.k, r.kp, r.error, r.fitted_slope, r.predicted_slope
                ));
            }
            emit(cli.out.as_deref(), &csv, &experiments::to_json(&rows))
        }
        Command::Rates {
            sub: RatesCommand::Recovery(args),
        } => {
            let cls = BesovClass::new(
                parse_index(&args.s)?,
                parse_index(&args.theta)?,
                parse_index(&args.p)?,
                Index::Infinity,
                parse_index(&args.pp)?,
                Index::Infinity,
            );
            let rows = experiments::recovery_rate_study(&cls, norm_id(&args.norm)?, args.kmax)?;
            let mut csv = String::from("fixture,k,kp,error,fitted_slope,predicted_slope\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.fixture, r.k, r.kp, r.error, r.fitted_slope, r.predicted_slope
                ));
            }
            emit(cli.out.as_deref(), &csv, &experiments::to_json(&rows))
        }
        Command::NormCheck(args) => {
            let kind: NormCheckKind = args.which.parse()?;
            let rows = experiments::norm_check(kind, args.kmin, args.kmax)?;
            let mut csv = String::from("k,kp,discrete,quadrature,ratio\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.k, r.kp, r.discrete, r.quadrature, r.ratio
                ));
            }
            emit(cli.out.as_deref(), &csv, &experiments::to_json(&rows))
        }
        Command::Train(args) => {
            let problem = experiments::manufactured(&args.problem)?;
            let loss: LossKind = args.loss.parse()?;
            let cfg = build_train_config(
                cli,
                &cfg_file,
                loss,
                args.n,
                args.width,
                args.depth,
                args.eta,
                args.momentum,
                args.iters,
                args.gamma,
                args.no_skip,
            )?;
            let mut cfg = cfg;
            cfg.error_every = args.error_every;
            let (net, report) = experiments::train(&problem, &cfg)?;
            if let Some(path) = &args.save_net {
                net.save(path)?;
                eprintln!("checkpoint written to {}", path.display());
            }
            if args.no_initial_term {
                let data = problem.data(cfg.n, cfg.t_final)?;
                let two_term = cpinn::loss::l_star(
                    &net,
                    &data,
                    cpinn::loss::LStarOptions {
                        include_initial: false,
                        ..Default::default()
                    },
                )?;
                eprintln!("l_star without the initial term: {}", two_term.total);
            }
            let mut csv = String::from("iter,loss\n");
            for (it, l) in &report.history {
                csv.push_str(&format!("{it},{l}\n"));
            }
            eprintln!(
                "{} n={} seed={}: rel err {:.4}% | final loss {:.3e} | {:.1}s",
                args.loss,
                cfg.n,
                cfg.seed,
                report.rel_l2_error_percent,
                report.final_loss,
                report.wall_secs
            );
            emit(cli.out.as_deref(), &csv, &experiments::to_json(&report))
        }
        Command::ReproduceTable1(args) => {
            let problem = experiments::manufactured(&args.problem)?;
            let base = build_train_config(
                cli,
                &cfg_file,
                LossKind::Pinn,
                None,
                args.width,
                args.depth,
                args.eta,
                args.momentum,
                args.iters,
                None,
                false,
            )?;
            let table =
                experiments::reproduce_table1(&problem, &args.sizes, &args.seeds, &base, threads)?;
            let mut csv = String::from(
                "n,seed,pinn_rel_err_percent,cpinn_rel_err_percent,pinn_final_loss,cpinn_final_loss\n",
            );
            for r in &table.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.n,
                    r.seed,
                    r.pinn_rel_err_percent,
                    r.cpinn_rel_err_percent,
                    r.pinn_final_loss,
                    r.cpinn_final_loss
                ));
            }
            csv.push_str("\nn,median_pinn_err,median_cpinn_err,err_ratio\n");
            for s in &table.summary {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    s.n, s.median_pinn_err, s.median_cpinn_err, s.err_ratio
                ));
            }
            emit(cli.out.as_deref(), &csv, &experiments::to_json(&table))
        }
        Command::Figure1(args) => {
            let problem = experiments::manufactured(&args.problem)?;
            let mut cfg = build_train_config(
                cli,
                &cfg_file,
                LossKind::Pinn,
                args.n,
                args.width,
                args.depth,
                args.eta,
                None,
                args.iters,
                None,
                false,
            )?;
            let (pinn_net, _) = experiments::train(&problem, &cfg)?;
            cfg.loss = LossKind::Cpinn;
            let (cpinn_net, _) = experiments::train(&problem, &cfg)?;
            let rows =
                experiments::figure1_data(&pinn_net, &cpinn_net, &problem, &args.times, args.res);
            let mut csv = String::from("time,x,y,exact,pinn,cpinn\n");
            for (t, x, y, e, p, c) in &rows {
                csv.push_str(&format!("{t},{x},{y},{e},{p},{c}\n"));
            }
            emit(cli.out.as_deref(), &csv, &experiments::to_json(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ Error::Diverged { .. }) => {
            eprintln!("error: {err}");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
