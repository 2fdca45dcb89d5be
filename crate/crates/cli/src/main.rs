//! Command-line front end: audit and certify prediction columns, run the
//! accuracy/calibration post-processors, generate synthetic data, re-emit
//! report files, and self-check the certificate bound on exact populations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mcaudit::data::baseline::BaselineKind;
use mcaudit::data::schema::DatasetSchema;
use mcaudit::data::synth::{generate_synth, SynthSpec};
use mcaudit::data::table::{load_csv, save_table, LoadedCsv};
use mcaudit::joint;
use mcaudit::report::{RunReport, ViolationReport};
use mcaudit::workflow::{self, AdjustMethod, RunOptions, SplitSpec};

#[derive(Parser)]
#[command(
    name = "mcaudit",
    version,
    about = "Certify and shrink worst-case per-group violations of a fixed predictor using proxy groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with one row per example.
    #[arg(long)]
    data: PathBuf,
    /// Schema config naming label/prediction/feature columns and groups.
    #[arg(long)]
    config: PathBuf,
    /// Snap input predictions to a grid with this many steps first.
    #[arg(long)]
    bin: Option<usize>,
    /// Exit nonzero unless the final calibration certificate is at most
    /// this level.
    #[arg(long)]
    require_alpha: Option<f64>,
    /// Write run.json, groups tables, and the patch log here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Seed for the split shuffle (and baseline data order).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train,adjust,eval proportions.
    #[arg(long, default_value = "0.6,0.3,0.1")]
    split: String,
    /// Baseline trained on the train part when the schema has no
    /// prediction column.
    #[arg(long, value_enum, default_value_t = ModelArg::Logistic)]
    model: ModelArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Logistic,
    Stumps,
}

impl From<ModelArg> for BaselineKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Logistic => BaselineKind::Logistic,
            ModelArg::Stumps => BaselineKind::Stumps,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Report measured violations and certified ceilings for the stored
    /// prediction column.
    Audit(DataArgs),
    /// Print only the proxy-side certificate (never reads true masks).
    Certify(DataArgs),
    /// Fit the least-squares accuracy adjustment and re-certify held-out.
    AdjustMa {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Clamp adjusted scores to [0, 1]; voids the exact in-sample
        /// guarantees.
        #[arg(long)]
        clip: bool,
    },
    /// Run calibration boosting and re-certify held-out.
    AdjustMc {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Target for the worst share-weighted mean squared calibration
        /// gap; the violation ceiling scales with sqrt(alpha).
        #[arg(long)]
        alpha: f64,
    },
    /// Generate a seeded synthetic dataset plus its schema.
    Synth {
        /// Generator spec file.
        #[arg(long)]
        config: PathBuf,
        /// Override the seed given in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-emit the files for a stored run.json.
    Report {
        /// A run.json produced by audit/adjust.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Self-check the certificate bound: equality on the tight
    /// constructions, soundness on random populations.
    Tightness {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Parameter draws per construction.
        #[arg(long, default_value_t = 200)]
        draws: usize,
        /// Random populations for the soundness sweep.
        #[arg(long, default_value_t = 10000)]
        joints: usize,
    },
}

fn load(data: &Path, config: &Path) -> Result<LoadedCsv> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let schema = DatasetSchema::parse(&text)?;
    Ok(load_csv(data, &schema)?)
}

fn print_report(tag: &str, report: &ViolationReport) {
    println!("[{tag}] mse = {:.6}", report.mse);
    println!(
        "{:<16} {:>9} {:>9} {:>7} {:>8} {:>9} {:>9} {:>9} {:>9}",
        "group", "proxy_ae", "proxy_ece", "err", "f_term", "ae_bound", "ece_bound", "true_ae", "true_ece"
    );
    for (name, g) in &report.per_group {
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "-".to_string(),
        };
        println!(
            "{:<16} {:>9.6} {:>9.6} {:>7.4} {:>8.6} {:>9.6} {:>9.6} {:>9} {:>9}",
            name, g.proxy_ae, g.proxy_ece, g.proxy_error, g.f_term, g.ae_bound, g.ece_bound,
            opt(g.true_ae), opt(g.true_ece)
        );
    }
    println!(
        "[{tag}] beta = {:.6}  gamma = {:.6}",
        report.beta, report.gamma
    );
}

fn finish(report: &RunReport, args: &DataArgs) -> Result<ExitCode> {
    if let Some(dir) = &args.out_dir {
        let written = report.write_files(dir)?;
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    let final_gamma = report.after.as_ref().map(|a| a.gamma).unwrap_or(report.before.gamma);
    if let Some(level) = args.require_alpha {
        if final_gamma > level {
            eprintln!("gamma {final_gamma:.6} exceeds required level {level:.6}");
            return Ok(ExitCode::from(2));
        }
        println!("gamma {final_gamma:.6} within required level {level:.6}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(args: &DataArgs) -> Result<ExitCode> {
    let loaded = load(&args.data, &args.config)?;
    let report = workflow::run_audit(&loaded, args.bin)?;
    print_report("audit", &report.before);
    for (name, g) in &report.before.per_group {
        if g.within_bounds == Some(false) {
            println!(
                "warning: group {name} exceeds its certified ceiling; check the declared error rate"
            );
        }
    }
    finish(&report, args)
}

fn cmd_certify(args: &DataArgs) -> Result<ExitCode> {
    let loaded = load(&args.data, &args.config)?;
    let preds = loaded
        .predictions
        .clone()
        .context("certify needs a prediction column")?;
    let preds = match args.bin {
        Some(m) => mcaudit::mc::snap_to_grid(&preds, m)?,
        None => preds,
    };
    let ds = loaded.dataset_with(preds)?;
    let cert = mcaudit::bounds::certify(&ds, &loaded.system)?;
    println!("mse = {:.6}", cert.mse);
    println!(
        "{:<16} {:>7} {:>8} {:>9} {:>9} {:>9} {:>9}",
        "group", "err", "f_term", "proxy_ae", "proxy_ece", "ae_bound", "ece_bound"
    );
    for (name, g) in &cert.per_group {
        println!(
            "{:<16} {:>7.4} {:>8.6} {:>9.6} {:>9.6} {:>9.6} {:>9.6}",
            name, g.proxy_error, g.f_term, g.proxy_ae, g.proxy_ece, g.ae_bound, g.ece_bound
        );
    }
    println!("beta = {:.6}  gamma = {:.6}", cert.beta, cert.gamma);
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("certificate.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cert)?)?;
        println!("wrote {}", path.display());
    }
    if let Some(level) = args.require_alpha {
        if cert.gamma > level {
            eprintln!("gamma {:.6} exceeds required level {level:.6}", cert.gamma);
            return Ok(ExitCode::from(2));
        }
        println!("gamma {:.6} within required level {level:.6}", cert.gamma);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_adjust_outcome(report: &RunReport) {
    print_report("before", &report.before);
    if let Some(after) = &report.after {
        print_report("after", after);
    }
    if let Some(adj) = &report.adjustment {
        match adj.method.as_str() {
            "ma" => {
                if let Some(lambdas) = &adj.lambdas {
                    for (name, l) in lambdas {
                        println!("lambda[{name}] = {l:.6}");
                    }
                }
                if let Some(ae) = adj.in_sample_proxy_ae_max {
                    println!("in-sample proxy ae max = {ae:.3e}");
                }
            }
            "mc" => {
                println!(
                    "rounds = {}  grid = 1/{}  exit guard = {:.6}",
                    adj.rounds.unwrap_or(0),
                    adj.grid_m.unwrap_or(0),
                    adj.exit_guard.unwrap_or(f64::NAN)
                );
                if adj.rounds == Some(0) {
                    println!("no adjustment needed: the snapped predictor already meets alpha");
                }
            }
            _ => {}
        }
    }
    if let Some(p) = &report.premises {
        println!(
            "premises: mse {} ({:.6} -> {:.6}), calibration dominance {}, accuracy dominance {}",
            if p.mse_nonincreasing { "ok" } else { "violated" },
            p.mse_before,
            p.mse_after,
            if p.mc_strict { "strict" } else { "not strict" },
            if p.ma_strict { "strict" } else { "not strict" }
        );
    }
    if let Some(pct) = report.gamma_reduction_pct {
        println!("gamma reduction: {pct:.1}%");
    }
}

fn cmd_adjust(data: &DataArgs, fit: &FitArgs, method: AdjustMethod) -> Result<ExitCode> {
    let loaded = load(&data.data, &data.config)?;
    let opts = RunOptions {
        seed: fit.seed,
        split: SplitSpec::parse(&fit.split)?,
        bin: data.bin,
        model: fit.model.into(),
    };
    let report = workflow::run_adjust(&loaded, method, &opts)?;
    print_adjust_outcome(&report);
    finish(&report, data)
}

fn cmd_synth(config: &Path, seed: Option<u64>, out_dir: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let mut spec = SynthSpec::parse(&text)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let out = generate_synth(&spec)?;
    std::fs::create_dir_all(out_dir)?;
    let data_path = out_dir.join("data.csv");
    let schema_path = out_dir.join("schema.cfg");
    save_table(&out.table, &data_path)?;
    std::fs::write(&schema_path, out.schema.to_config())?;
    println!("wrote {}", data_path.display());
    println!("wrote {}", schema_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(data: &Path, out_dir: &Path) -> Result<ExitCode> {
    let text = std::fs::read_to_string(data)
        .with_context(|| format!("reading report {}", data.display()))?;
    let report = RunReport::from_json(&text)?;
    for path in report.write_files(out_dir)? {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Feasible parameter draws for each tight construction, plus random
/// populations for the soundness direction.
fn cmd_tightness(seed: u64, draws: usize, joints: usize) -> Result<ExitCode> {
    use rand_like::*;
    let mut rng = Lcg::new(seed);
    let mut max_gap = 0.0f64;
    for _ in 0..draws {
        let err = 0.01 + 0.98 * rng.next_f64();
        let mse_sqrt = err * (0.05 + 0.95 * rng.next_f64());
        let mu11 = (1.0 - err) * rng.next_f64() * 0.9;
        let tight = [
            joint::build_tight_ma_sqrt(mse_sqrt, err, mu11)?,
            joint::build_tight_mc_sqrt(mse_sqrt, err, mu11)?,
        ];
        for j in &tight {
            let pm = joint::population_metrics(j);
            max_gap = max_gap
                .max((pm.ae_true - pm.ae_proxy - pm.f_term).abs())
                .max((pm.ece_true - pm.ece_proxy - pm.f_term).abs());
        }
        // err branch needs err < mse <= 1 - mu11.
        let err2 = 0.01 + 0.4 * rng.next_f64();
        let mu2 = (1.0 - err2) * rng.next_f64() * 0.5;
        let headroom = 1.0 - err2 - mu2;
        let mse_err = err2 + headroom * (0.05 + 0.9 * rng.next_f64());
        let tight2 = [
            joint::build_tight_ma_err(mse_err, err2, mu2)?,
            joint::build_tight_mc_err(mse_err, err2, mu2)?,
        ];
        for j in &tight2 {
            let pm = joint::population_metrics(j);
            max_gap = max_gap
                .max((pm.ae_true - pm.ae_proxy - pm.f_term).abs())
                .max((pm.ece_true - pm.ece_proxy - pm.f_term).abs());
        }
    }
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..joints {
        let j = random_joint(&mut rng)?;
        let pm = joint::population_metrics(&j);
        max_excess = max_excess
            .max(pm.ae_true - (pm.f_term + pm.ae_proxy))
            .max(pm.ece_true - (pm.f_term + pm.ece_proxy));
    }
    println!("equality sweep: {draws} draws per construction, max |gap| = {max_gap:.3e}");
    println!("soundness sweep: {joints} random populations, max bound excess = {max_excess:.3e}");
    let ok = max_gap <= 1e-12 && max_excess <= 1e-12;
    println!("{}", if ok { "PASS" } else { "FAIL" });
    if ok {
        Ok(ExitCode::SUCCESS)
    } else {
        bail!("certificate bound self-check failed")
    }
}

/// Tiny deterministic generator so the self-check does not need an RNG
/// dependency in the CLI crate.
mod rand_like {
    use anyhow::Result;
    use mcaudit::joint::{Atom, FiniteJoint};

    pub struct Lcg(u64);

    impl Lcg {
        pub fn new(seed: u64) -> Self {
            Lcg(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
        }

        pub fn next_u64(&mut self) -> u64 {
            // splitmix64 step
            self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        }

        pub fn next_f64(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    pub fn random_joint(rng: &mut Lcg) -> Result<FiniteJoint> {
        loop {
            let k = 2 + (rng.next_u64() % 5) as usize;
            let mut atoms = Vec::with_capacity(k);
            let mut weights = Vec::with_capacity(k);
            for _ in 0..k {
                weights.push(0.05 + rng.next_f64());
            }
            let total: f64 = weights.iter().sum();
            let mut seen = std::collections::BTreeSet::new();
            let mut ok = true;
            for w in &weights {
                let f = (rng.next_u64() % 101) as f64 / 100.0;
                let y = (rng.next_u64() % 2) as u8;
                let group = (rng.next_u64() % 2) as u8;
                let proxy = (rng.next_u64() % 2) as u8;
                if !seen.insert((f.to_bits(), y, group, proxy)) {
                    ok = false;
                    break;
                }
                atoms.push(Atom {
                    probability: w / total,
                    f,
                    y,
                    group,
                    proxy,
                });
            }
            if !ok {
                continue;
            }
            return Ok(FiniteJoint::new(atoms)?);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Audit(args) => cmd_audit(args),
        Command::Certify(args) => cmd_certify(args),
        Command::AdjustMa { data, fit, clip } => {
            cmd_adjust(data, fit, AdjustMethod::Ma { clip: *clip })
        }
        Command::AdjustMc { data, fit, alpha } => {
            cmd_adjust(data, fit, AdjustMethod::Mc { alpha: *alpha })
        }
        Command::Synth {
            config,
            seed,
            out_dir,
        } => cmd_synth(config, *seed, out_dir),
        Command::Report { data, out_dir } => cmd_report(data, out_dir),
        Command::Tightness {
            seed,
            draws,
            joints,
        } => cmd_tightness(*seed, *draws, *joints),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
