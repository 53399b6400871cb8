//! `disttest`: run testers on sample files, generate hard instances, run
//! power sweeps, evaluate the mutual-information oracle and calibrate.
//!
//! Exit codes: 0 YES (or success), 1 NO, 2 usage or IO error, 3 not enough
//! samples (or calibration grid exhausted).

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use disttest::dist_core::{
    l1_distance, read_distribution, read_joint_samples, read_labeled_samples, read_samples,
    read_tuple_samples, write_distribution, ReplayOracle,
};
use disttest::hard_instances::{
    heavy_light_yes_no_2d, hellinger_pair, histogram_hard_pair, mi_heavy_light_row, mi_per_bin,
    paninski_pair, product_yes_no_2d, HardInstancePair,
};
use disttest::harness::{
    calibrate_constants, canonical_cases, run_power_sweep, write_sweep, ExperimentSpec,
};
use disttest::rng::rng_from_seed;
use disttest::testers::{self, Answer, IntervalPartition, Params, TestVerdict};
use disttest::Error;

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "disttest",
    version,
    about = "Distribution property testing from samples"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a tester on sample files; prints the verdict and trace as JSON.
    Test(TestArgs),
    /// Draw a YES or NO instance from a hard family.
    Hardgen(HardgenArgs),
    /// Run a power sweep from a JSON experiment spec.
    Sweep(SweepArgs),
    /// Evaluate the exact mutual-information oracle.
    Mi(MiArgs),
    /// Fit the l2 sample constant on the canonical grid.
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TesterId {
    IdentityKnown,
    IdentityInstanceOptimal,
    ClosenessEqual,
    ClosenessUnequal,
    ClosenessAdaptive,
    HellingerCloseness,
    Independence2d,
    IndependenceDd,
    CollectionSampling,
    CollectionQuery,
    KHistogram,
}

#[derive(Args)]
struct Common {
    /// Constants file; defaults to the bundled calibration.
    #[arg(long)]
    constants: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, value_enum)]
    tester: TesterId,
    /// Samples of the unknown distribution p (joint, tuple or labeled
    /// format as the tester requires).
    #[arg(long)]
    samples: PathBuf,
    /// Samples of q for closeness testers.
    #[arg(long)]
    q_samples: Option<PathBuf>,
    /// Explicit q for identity testers, or the known second marginal for
    /// collection_sampling.
    #[arg(long)]
    q: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Number of equal intervals for k_histogram.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated axis sizes for independence_dd.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    /// Draws allowed from q for closeness_unequal.
    #[arg(long)]
    m1: Option<u64>,
    #[arg(long)]
    eps: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Paninski,
    Product2d,
    HeavyLight2d,
    Hellinger,
    Histogram,
}

#[derive(Clone, Copy, ValueEnum)]
enum Label {
    Yes,
    No,
}

#[derive(Args)]
struct HardgenArgs {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_enum, default_value_t = Label::No)]
    which: Label,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Also write each normalized measure to `<prefix>.<i>.dist`.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// Output stem: writes `<stem>.csv` and `<stem>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    constants: Option<PathBuf>,
}

#[derive(Args)]
struct MiArgs {
    /// Single-bin mixture oracle.
    #[arg(long, conflicts_with = "heavy_light_row")]
    per_bin: bool,
    /// Heavy/light row oracle over `m` columns.
    #[arg(long)]
    heavy_light_row: bool,
    #[arg(long)]
    k: f64,
    #[arg(long)]
    n: f64,
    #[arg(long)]
    m: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_terms: u64,
    #[arg(long, default_value_t = 16)]
    count_cap: u64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 300)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Sample constant the grid multiplies.
    #[arg(long, default_value_t = 1.0)]
    unit: f64,
    /// Where to write the calibrated constants.
    #[arg(long)]
    out: PathBuf,
    /// Starting constants; defaults to the bundled file.
    #[arg(long)]
    constants: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Insufficient(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InsufficientSamples { .. } => Failure::Insufficient(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_params(path: Option<&Path>) -> Result<Params, Failure> {
    match path {
        Some(p) => Ok(Params::from_json(
            &std::fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        )?),
        None => Ok(Params::default()),
    }
}

fn need<T: Copy>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for this tester")))
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn replay(path: &Path, n: usize) -> Result<ReplayOracle, Failure> {
    Ok(ReplayOracle::new(n, read_samples(open(path)?, n)?)?)
}

fn verdict_exit(v: &TestVerdict) -> ExitCode {
    print_json(v);
    ExitCode::from(if v.answer == Answer::Yes { 0 } else { 1 })
}

fn cmd_test(a: TestArgs) -> CmdResult {
    let params = load_params(a.common.constants.as_deref())?;
    let mut rng = rng_from_seed(a.common.seed);
    let eps = a.eps;
    let q_samples = || {
        a.q_samples
            .as_deref()
            .ok_or_else(|| Failure::Usage("--q-samples is required for this tester".into()))
    };
    let q_dist = || -> Result<_, Failure> {
        let p =
            a.q.as_deref()
                .ok_or_else(|| Failure::Usage("--q is required for this tester".into()))?;
        Ok(read_distribution(open(p)?)?)
    };
    let v = match a.tester {
        TesterId::IdentityKnown | TesterId::IdentityInstanceOptimal => {
            let q = q_dist()?;
            let mut p = replay(&a.samples, q.n())?;
            if matches!(a.tester, TesterId::IdentityKnown) {
                testers::identity_known(&q, &mut p, eps, &params, &mut rng)?
            } else {
                testers::identity_instance_optimal(&q, &mut p, eps, &params, &mut rng)?
            }
        }
        TesterId::ClosenessEqual
        | TesterId::ClosenessAdaptive
        | TesterId::HellingerCloseness
        | TesterId::ClosenessUnequal => {
            let n = need(a.n, "n")?;
            let mut p = replay(&a.samples, n)?;
            let mut q = replay(q_samples()?, n)?;
            match a.tester {
                TesterId::ClosenessEqual => {
                    testers::closeness_equal(&mut p, &mut q, n, eps, &params, &mut rng)?
                }
                TesterId::ClosenessAdaptive => {
                    testers::closeness_adaptive(&mut p, &mut q, n, eps, &params, &mut rng)?
                }
                TesterId::HellingerCloseness => {
                    testers::hellinger_closeness(&mut p, &mut q, n, eps, &params, &mut rng)?
                }
                _ => testers::closeness_unequal(
                    &mut q,
                    &mut p,
                    n,
                    eps,
                    need(a.m1, "m1")?,
                    &params,
                    &mut rng,
                )?,
            }
        }
        TesterId::Independence2d | TesterId::CollectionSampling => {
            let (n, m) = (need(a.n, "n")?, need(a.m, "m")?);
            let flat = read_joint_samples(open(&a.samples)?, n, m)?
                .into_iter()
                .map(|(i, j)| i * m + j)
                .collect();
            let mut p = ReplayOracle::new(n * m, flat)?;
            if matches!(a.tester, TesterId::Independence2d) {
                testers::independence_2d(&mut p, n, m, eps, &params, &mut rng)?
            } else {
                testers::collection_sampling(&mut p, &q_dist()?, n, m, eps, &params, &mut rng)?
            }
        }
        TesterId::IndependenceDd => {
            if a.dims.len() < 2 {
                return usage("--dims needs at least two axis sizes");
            }
            let flat = read_tuple_samples(open(&a.samples)?, &a.dims)?;
            let mut p = ReplayOracle::new(a.dims.iter().product(), flat)?;
            testers::independence_dd(&mut p, &a.dims, eps, &params, &mut rng)?
        }
        TesterId::CollectionQuery => {
            let (n, m) = (need(a.n, "n")?, need(a.m, "m")?);
            let mut per: Vec<Vec<usize>> = vec![Vec::new(); m];
            for (i, x) in read_labeled_samples(open(&a.samples)?, m, n)? {
                per[i].push(x);
            }
            let mut oracles = per
                .into_iter()
                .map(|s| ReplayOracle::new(n, s))
                .collect::<disttest::Result<Vec<_>>>()?;
            testers::collection_query(&mut oracles, n, eps, &params, &mut rng)?
        }
        TesterId::KHistogram => {
            let n = need(a.n, "n")?;
            let part = IntervalPartition::equal(n, need(a.k, "k")?)?;
            let mut p = replay(&a.samples, n)?;
            testers::k_histogram(&mut p, n, &part, eps, &params, &mut rng)?
        }
    };
    Ok(verdict_exit(&v))
}

fn write_measures(prefix: &Path, h: &HardInstancePair) -> Result<(), Failure> {
    for i in 0..h.measures.len() {
        let mut f = File::create(prefix.with_extension(format!("{i}.dist")))?;
        write_distribution(&mut f, h.distribution(i)?.probs())?;
    }
    Ok(())
}

fn cmd_hardgen(a: HardgenArgs) -> CmdResult {
    let mut rng = rng_from_seed(a.seed);
    let which = match a.which {
        Label::Yes => Answer::Yes,
        Label::No => Answer::No,
    };
    if let Family::Paninski = a.family {
        let (q, p) = paninski_pair(a.n, a.eps, &mut rng)?;
        let p = if which == Answer::Yes { q.clone() } else { p };
        if let Some(prefix) = &a.out_prefix {
            for (i, d) in [&p, &q].iter().enumerate() {
                write_distribution(
                    &mut File::create(prefix.with_extension(format!("{i}.dist")))?,
                    d.probs(),
                )?;
            }
        }
        print_json(&json!({
            "family": "paninski",
            "label": which,
            "dims": [a.n],
            "measures": [p.probs(), q.probs()],
            "l1_distance": l1_distance(&p, &q)?,
        }));
        return Ok(ExitCode::SUCCESS);
    }
    let h = match a.family {
        Family::Product2d => product_yes_no_2d(a.n, a.m, a.eps, &mut rng, which)?,
        Family::HeavyLight2d => heavy_light_yes_no_2d(a.n, a.m, a.k, a.eps, &mut rng, which)?,
        Family::Hellinger => hellinger_pair(a.n, a.k, a.eps, &mut rng, which)?,
        Family::Histogram => histogram_hard_pair(a.n, a.k, a.eps, &mut rng, which)?,
        Family::Paninski => unreachable!(),
    };
    if let Some(prefix) = &a.out_prefix {
        write_measures(prefix, &h)?;
    }
    print_json(&h);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let params = load_params(a.constants.as_deref())?;
    let spec: ExperimentSpec = serde_json::from_reader(open(&a.spec)?)
        .map_err(|e| Failure::Usage(format!("spec: {e}")))?;
    let cells = run_power_sweep(&spec, &params)?;
    write_sweep(&a.out, &spec, &params, &cells)?;
    print_json(&cells);
    Ok(ExitCode::SUCCESS)
}

fn cmd_mi(a: MiArgs) -> CmdResult {
    let est = if a.heavy_light_row {
        if a.m.fract() != 0.0 || a.m < 1.0 {
            return usage("--m must be a positive integer for --heavy-light-row");
        }
        mi_heavy_light_row(a.k, a.n, a.m as usize, a.eps, a.count_cap)?
    } else if a.per_bin {
        mi_per_bin(a.k, a.n, a.m, a.eps, a.max_terms)?
    } else {
        return usage("choose --per-bin or --heavy-light-row");
    };
    print_json(&est);
    Ok(ExitCode::SUCCESS)
}

fn cmd_calibrate(a: CalibrateArgs) -> CmdResult {
    let mut unit = load_params(a.constants.as_deref())?;
    if a.unit.is_nan() || a.unit <= 0.0 {
        return usage("--unit must be positive");
    }
    unit.l2.c_sample = a.unit;
    let cal = calibrate_constants(&canonical_cases(), &unit, a.trials, a.seed)?;
    print_json(&cal);
    if cal.multiplier.is_none() {
        eprintln!("no multiplier up to 64 reaches the target on every canonical cell");
        return Ok(ExitCode::from(3));
    }
    std::fs::write(&a.out, cal.params.to_json() + "\n")?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let r = match cli.cmd {
        Cmd::Test(a) => cmd_test(a),
        Cmd::Hardgen(a) => cmd_hardgen(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Mi(a) => cmd_mi(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
    };
    match r {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Insufficient(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
