//! Batch command-line front end: verification suites, sampler estimation,
//! sampling-plan inspection, streaming sample/resample, hashing, and
//! end-to-end key expansion. Every command emits a machine-readable report
//! on stdout; diagnostics go to stderr.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage error, 3 I/O error.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use samphash_core::bsm::{self, BitReader, LossModel, PlanTarget, SampOptions};
use samphash_core::extractor::{toeplitz_hash, BitString, ToeplitzSeed};
use samphash_core::report::Report;
use samphash_core::sampling;
use samphash_core::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(
    name = "samphash",
    version,
    about = "Min-entropy sampling verification and sample-and-hash key expansion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named verification suite on random instances.
    Verify {
        /// entropy-rules | splitting | recombining | sampling-theorem | appendix
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Inspect a recursive sampling plan without touching any data.
    Plan {
        #[arg(long)]
        r: usize,
        /// Plan for the L = 2^r regime with as many rounds as feasible.
        #[arg(long, conflicts_with = "length_bits")]
        auto: bool,
        /// Plan for an explicit input length in bits.
        #[arg(long)]
        length_bits: Option<u64>,
    },
    /// Sample blocks from a randomizer file (one round, or f rounds).
    Sample {
        #[command(flatten)]
        io: SampleIo,
        #[arg(long)]
        r: usize,
        /// Number of recursive rounds.
        #[arg(long, default_value_t = 1)]
        f: usize,
        /// Waive the L >= r^4 requirement (integrality is always kept).
        #[arg(long)]
        relaxed: bool,
    },
    /// Full sample-and-hash key expansion over a randomizer file.
    ExpandKey {
        #[command(flatten)]
        io: SampleIo,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        f: usize,
        /// Total error budget, split evenly between sampling and hashing.
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Assumed min-entropy rate of the randomizer, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Trust the assumed rate instead of subtracting the (vacuous at
        /// small r) analytic loss bound.
        #[arg(long)]
        ignore_loss_bound: bool,
        #[arg(long)]
        relaxed: bool,
    },
    /// Monte Carlo deviation estimate for the subset sampler.
    EstimateSampler {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        xi: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// CSV of rows with entries in [0,1]; defaults to a half-ones 0/1 row.
        #[arg(long)]
        beta_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Toeplitz-hash a file.
    Hash {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        lout: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// Print only the hex key instead of the JSON report.
        #[arg(long)]
        raw: bool,
    },
}

#[derive(Args)]
struct SampleIo {
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file for the sampled substring.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the usable input length in bits (default: file size,
    /// truncated to the nearest valid round length).
    #[arg(long)]
    length_bits: Option<u64>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct SeedArg {
    /// Seed as an inline hex string.
    #[arg(long, conflicts_with = "seed_file")]
    seed_hex: Option<String>,
    /// Seed as a hex text file.
    #[arg(long)]
    seed_file: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl SeedArg {
    fn bytes(&self) -> Result<Vec<u8>, CliError> {
        let text = match (&self.seed_hex, &self.seed_file) {
            (Some(h), None) => h.clone(),
            (None, Some(path)) => std::fs::read_to_string(path)?,
            _ => {
                return Err(CliError::Usage(
                    "exactly one of --seed-hex or --seed-file is required".into(),
                ))
            }
        };
        let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        hex::decode(&cleaned).map_err(|e| CliError::Usage(format!("bad seed hex: {e}")))
    }
}

fn emit(report: &Report) {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    print!("{text}");
    let _ = std::io::stdout().flush();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Verify {
            suite,
            seed,
            instances,
        } => {
            let suite: Suite = suite.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
            let report = run_suite(suite, seed, instances)
                .map_err(|e| CliError::Usage(format!("suite failed to run: {e}")))?;
            let pass = report.all_pass();
            emit(&report);
            Ok(pass)
        }
        Command::Plan {
            r,
            auto,
            length_bits,
        } => {
            let target = match (auto, length_bits) {
                (true, None) => PlanTarget::AutoLr,
                (false, Some(bits)) => PlanTarget::Bits(bits),
                _ => {
                    return Err(CliError::Usage(
                        "pass exactly one of --auto or --length-bits".into(),
                    ))
                }
            };
            let plan = bsm::plan(r, target).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut report = Report::new(
                "plan",
                serde_json::json!({"r": r, "auto": auto, "length_bits": length_bits}),
            );
            let budget = plan.f as f64 * r as f64 * plan.length_exponents[0] as f64;
            report.push_check(
                "seed budget below f r log2 L",
                budget,
                plan.total_seed_bits as f64,
                (plan.total_seed_bits as f64) < budget,
            );
            report.results = serde_json::json!({
                "plan": plan,
                "vacuous": plan.vacuous,
            });
            let pass = report.all_pass();
            emit(&report);
            Ok(pass)
        }
        Command::Sample { io, r, f, relaxed } => {
            let seed_bytes = io.seed.bytes()?;
            let file = File::open(&io.input)?;
            let file_bits = file.metadata()?.len() * 8;
            let l_bits = io.length_bits.unwrap_or(file_bits).min(file_bits);
            let mut reader = BufReader::with_capacity(1 << 20, file);
            let mut seed = BitReader::new(&seed_bytes);
            let opts = SampOptions { relaxed };
            let (out, plan, accounting) = bsm::resamp(&mut reader, l_bits, f, r, &mut seed, opts)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(path) = &io.out {
                std::fs::write(path, &out)?;
            }
            let mut report = Report::new(
                "sample",
                serde_json::json!({
                    "in": io.input.display().to_string(),
                    "r": r, "f": f, "relaxed": relaxed,
                    "length_bits": l_bits,
                }),
            );
            let budget = plan.f as f64 * r as f64 * plan.length_exponents[0] as f64;
            report.push_check(
                "seed budget below f r log2 L",
                budget,
                accounting.seed_bits_used as f64,
                (accounting.seed_bits_used as f64) < budget,
            );
            report.results = serde_json::json!({
                "plan": plan,
                "accounting": accounting,
                "output_bits": out.len() * 8,
                "out": io.out.as_ref().map(|p| p.display().to_string()),
            });
            let pass = report.all_pass();
            emit(&report);
            Ok(pass)
        }
        Command::ExpandKey {
            io,
            r,
            f,
            eps,
            rate,
            ignore_loss_bound,
            relaxed,
        } => {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(CliError::Usage(format!(
                    "--rate must lie in (0, 1], got {rate}"
                )));
            }
            let seed_bytes = io.seed.bytes()?;
            let file = File::open(&io.input)?;
            let file_bits = file.metadata()?.len() * 8;
            let l_bits = io.length_bits.unwrap_or(file_bits).min(file_bits);
            let mut reader = BufReader::with_capacity(1 << 20, file);
            let mut seed = BitReader::new(&seed_bytes);
            let loss = if ignore_loss_bound {
                LossModel::Ignore
            } else {
                LossModel::Bound
            };
            let outcome = bsm::expand_key(
                &mut reader,
                l_bits,
                r,
                f,
                eps,
                rate,
                &mut seed,
                SampOptions { relaxed },
                loss,
            )
            .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut report = Report::new(
                "expand-key",
                serde_json::json!({
                    "in": io.input.display().to_string(),
                    "r": r, "f": f, "eps": eps, "rate": rate,
                    "ignore_loss_bound": ignore_loss_bound,
                    "relaxed": relaxed,
                    "length_bits": l_bits,
                }),
            );
            let sampling_seed_bits = outcome.accounting.seed_bits_used - outcome.hash_seed_bits;
            let budget =
                outcome.plan.f as f64 * r as f64 * outcome.plan.length_exponents[0] as f64;
            report.push_check(
                "sampling seed below f r log2 L",
                budget,
                sampling_seed_bits as f64,
                (sampling_seed_bits as f64) < budget,
            );
            report.results = serde_json::json!({
                "plan": outcome.plan,
                "seed_bits_used": outcome.accounting.seed_bits_used,
                "key_hex": outcome.key.bits.to_hex(),
                "key_bits": outcome.key.bits.len(),
                "bias_bound": outcome.accounting.bias_bound,
                "rate_loss_bound": outcome.plan.rate_loss_bound,
                "vacuous_flag": outcome.plan.vacuous,
                "loss_bound_applied": outcome.loss_bound_applied,
                "k_bits": outcome.k_bits,
            });
            let pass = report.all_pass();
            emit(&report);
            Ok(pass)
        }
        Command::EstimateSampler {
            n,
            r,
            xi,
            trials,
            beta_file,
            seed,
        } => {
            let beta: Vec<Vec<f64>> = match &beta_file {
                Some(path) => read_beta_csv(path, n)?,
                None => {
                    let mut row = vec![0.0; n];
                    for v in row.iter_mut().take(n / 2) {
                        *v = 1.0;
                    }
                    vec![row]
                }
            };
            let empirical = sampling::estimate_tail(&beta, r, xi, trials, seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let hoeffding = sampling::subset_sampler_epsilon(r, xi);
            // exact value available when every row is 0/1-valued
            let exact: Option<f64> = beta
                .iter()
                .map(|row| {
                    if row.iter().all(|&v| v == 0.0 || v == 1.0) {
                        let ones = row.iter().filter(|&&v| v == 1.0).count();
                        sampling::hypergeometric_tail(n, ones, r, xi).ok()
                    } else {
                        None
                    }
                })
                .sum::<Option<f64>>()
                .map(|total| total / beta.len() as f64);
            let mut report = Report::new(
                "estimate-sampler",
                serde_json::json!({
                    "n": n, "r": r, "xi": xi, "trials": trials, "seed": seed,
                    "beta_file": beta_file.as_ref().map(|p| p.display().to_string()),
                }),
            );
            let noise = 3.0 * (0.25 / trials as f64).sqrt();
            report.push_check(
                "empirical tail within Hoeffding bound plus sampling noise",
                hoeffding + noise,
                empirical,
                empirical <= hoeffding + noise,
            );
            report.results = serde_json::json!({
                "empirical_tail": empirical,
                "hoeffding_bound": hoeffding,
                "exact_tail": exact,
            });
            let pass = report.all_pass();
            emit(&report);
            Ok(pass)
        }
        Command::Hash {
            input,
            lout,
            seed,
            raw,
        } => {
            if lout == 0 {
                return Err(CliError::Usage("--lout must be positive".into()));
            }
            let data = std::fs::read(&input)?;
            let nin = data.len() * 8;
            let seed_bytes = seed.bytes()?;
            let needed = nin + lout - 1;
            if seed_bytes.len() * 8 < needed {
                return Err(CliError::Usage(format!(
                    "seed supplies {} bits but nin + lout - 1 = {needed} are required",
                    seed_bytes.len() * 8
                )));
            }
            let x = BitString::from_bytes(&data, nin);
            let toeplitz = ToeplitzSeed::from_bytes(&seed_bytes, needed);
            let key =
                toeplitz_hash(&x, &toeplitz, lout).map_err(|e| CliError::Usage(e.to_string()))?;
            if raw {
                println!("{}", key.to_hex());
                return Ok(true);
            }
            let mut report = Report::new(
                "hash",
                serde_json::json!({
                    "in": input.display().to_string(),
                    "lout": lout, "nin": nin,
                }),
            );
            report.results = serde_json::json!({
                "key_hex": key.to_hex(),
                "key_bits": lout,
            });
            emit(&report);
            Ok(true)
        }
    }
}

fn read_beta_csv(path: &PathBuf, n: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row =
            row.map_err(|e| CliError::Usage(format!("beta file line {}: {e}", lineno + 1)))?;
        if row.len() != n {
            return Err(CliError::Usage(format!(
                "beta file line {} has {} entries, expected n = {n}",
                lineno + 1,
                row.len()
            )));
        }
        if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(CliError::Usage(format!(
                "beta file line {} has entries outside [0,1]",
                lineno + 1
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage("beta file is empty".into()));
    }
    Ok(rows)
}
