//! `ssp`: scenario generation, streaming runs with ablations, allocation
//! profiling, and hush training.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use ssp_core::hush::{train_hush, HushWord};
use ssp_core::par::Parallelism;
use ssp_core::pipeline::{profile_allocations, Allocation, Profile};
use ssp_core::runner::{execute, prepare, write_outputs, Features};
use ssp_core::scenario::{generate_script, read_config, read_scenario, write_scenario, GenParams};
use ssp_core::types::RunConfig;

#[derive(Parser)]
#[command(name = "ssp", version, about = "Streaming speech-processing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scripted utterance.
    Gen {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        words: u64,
        /// Minimum total duration in seconds.
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-word stability in [0, 1].
        #[arg(long, default_value_t = 0.8)]
        stability: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the streaming loop over a scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// TOML run config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Features to enable: hush, prune, pipeline, none, all. Overrides the
        /// config's toggles when given.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        ablation: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// `C<cpu>:G<gpu>`, or a file written by `profile --out`.
        #[arg(long)]
        allocation: Option<String>,
        /// Trained hush file; one is trained from the config seed otherwise.
        #[arg(long)]
        hush: Option<PathBuf>,
        /// Decode on two worker threads instead of inline.
        #[arg(long)]
        live: bool,
    },
    /// Sweep CPU/GPU core splits and report per-word latency.
    Profile {
        #[arg(long)]
        cores: usize,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a hush word against the scripted backend.
    TrainHush {
        #[arg(long, default_value_t = ssp_core::hush::HUSH_SAMPLES)]
        dim: usize,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => read_config(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

/// Accepts `C6:G5` or a profile table whose `# best:` line names one.
fn parse_allocation(arg: &str) -> Result<Allocation> {
    if let Ok(a) = arg.parse() {
        return Ok(a);
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("allocation '{arg}' is neither C<n>:G<m> nor a readable file"))?;
    let best = text
        .lines()
        .find_map(|l| l.strip_prefix("# best:"))
        .ok_or_else(|| anyhow!("{arg}: no '# best:' line"))?;
    Ok(best.trim().parse()?)
}

fn profile_table(p: &Profile) -> String {
    let mut s = String::from("cpu_cores,gpu_cores,per_word_latency_ms\n");
    for (a, l) in &p.table {
        let _ = writeln!(s, "{},{},{l:.3}", a.cpu_exec_cores, a.gpu_exec_cores);
    }
    let _ = writeln!(s, "# best: {}", p.best);
    s
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            words,
            duration,
            seed,
            stability,
            out,
        } => {
            let script = generate_script(GenParams {
                words: words as usize,
                duration_s: duration,
                seed,
                stability,
            })?;
            write_scenario(&out, &script).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Run {
            scenario,
            config,
            ablation,
            out,
            allocation,
            hush,
            live,
        } => {
            let script = read_scenario(&scenario).with_context(|| format!("reading scenario {}", scenario.display()))?;
            let mut config = load_config(config.as_deref())?;
            if !ablation.is_empty() {
                config = Features::from_names(&ablation)?.apply(&config);
            }
            let hush = hush
                .map(|p| HushWord::load(&p).with_context(|| format!("reading hush {}", p.display())))
                .transpose()?;
            let mut setup = prepare(script, &config, hush)?;
            if let Some(a) = allocation {
                setup.allocation = parse_allocation(&a)?;
            }
            let sim = execute(&setup, live)?;
            write_outputs(&out, &sim).with_context(|| format!("writing outputs to {}", out.display()))?;
        }
        Command::Profile {
            cores,
            scenario,
            config,
            out,
        } => {
            let script = read_scenario(&scenario).with_context(|| format!("reading scenario {}", scenario.display()))?;
            let config = load_config(config.as_deref())?;
            let setup = prepare(script, &config, None)?;
            let profile = profile_allocations(&setup, cores, Parallelism::default())?;
            let table = profile_table(&profile);
            match out {
                Some(p) => std::fs::write(&p, &table).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
        }
        Command::TrainHush { dim, iters, seed, out } => {
            if dim < 2 {
                bail!("--dim must be >= 2");
            }
            let report = train_hush(seed, dim, iters, 0.25)?;
            report.hush.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("validity {:.6}", report.validity);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
