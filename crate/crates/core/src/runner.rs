//! Run orchestration: feature toggles, hush preparation, and output files.

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::costmodel::InputPolicy;
use crate::error::{Error, Result};
use crate::hush::{train_hush, HushWord, HUSH_SAMPLES};
use crate::pipeline::{simulate, simulate_live, Allocation, SimSetup, Simulation, StageLatencyModel};
use crate::types::{validate_script, RoundTrace, RunConfig, Stage, UtteranceScript};

/// Iterations for the hush word trained on demand.
pub const DEFAULT_HUSH_ITERATIONS: usize = 500;

/// Which optimizations are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Features {
    pub hush: bool,
    pub prune: bool,
    pub pipeline: bool,
}

impl Features {
    pub const NONE: Features = Features {
        hush: false,
        prune: false,
        pipeline: false,
    };
    pub const ALL: Features = Features {
        hush: true,
        prune: true,
        pipeline: true,
    };

    /// Without the hush word, input is padded to 30 s.
    pub fn apply(self, config: &RunConfig) -> RunConfig {
        RunConfig {
            input_policy: if self.hush {
                InputPolicy::HushAppend
            } else {
                InputPolicy::PadTo30s
            },
            beam_pruning: self.prune,
            pipeline_enabled: self.pipeline,
            ..config.clone()
        }
    }

    /// Union of named features: `hush`, `prune`, `pipeline`, `none`, `all`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        names.iter().try_fold(Features::NONE, |acc, n| {
            let f: Features = n.as_ref().parse()?;
            Ok(Features {
                hush: acc.hush || f.hush,
                prune: acc.prune || f.prune,
                pipeline: acc.pipeline || f.pipeline,
            })
        })
    }
}

impl FromStr for Features {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Features::NONE,
            "all" => Features::ALL,
            "hush" => Features {
                hush: true,
                ..Features::NONE
            },
            "prune" => Features {
                prune: true,
                ..Features::NONE
            },
            "pipeline" => Features {
                pipeline: true,
                ..Features::NONE
            },
            other => return Err(Error::InvalidValue(format!("unknown ablation feature '{other}'"))),
        })
    }
}

/// Validated script plus the hush word it needs: the given one, or one
/// trained deterministically for the config's seed.
pub fn prepare(script: UtteranceScript, config: &RunConfig, hush: Option<HushWord>) -> Result<SimSetup> {
    let violations = validate_script(&script);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations.iter().map(ToString::to_string).collect()));
    }
    config.validate()?;
    let hush = match (config.input_policy, hush) {
        (InputPolicy::HushAppend, None) => {
            Some(train_hush(config.seed, HUSH_SAMPLES, DEFAULT_HUSH_ITERATIONS, 0.25)?.hush)
        }
        (_, h) => h,
    };
    Ok(SimSetup {
        script: Arc::new(script),
        config: config.clone(),
        hush,
        latency: StageLatencyModel::default(),
        allocation: Allocation::default(),
    })
}

pub fn execute(setup: &SimSetup, live: bool) -> Result<Simulation> {
    if live {
        simulate_live(setup)
    } else {
        simulate(setup)
    }
}

pub fn transcript_text(sim: &Simulation) -> String {
    let mut s = sim.transcript.words().join(" ");
    s.push('\n');
    s
}

pub fn metrics_json(sim: &Simulation) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&sim.metrics)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct TraceRow {
    round_index: usize,
    window_start_s: f64,
    window_end_s: f64,
    n_raw_tokens: usize,
    n_confirmed_delta: usize,
    fallback: bool,
    steps: usize,
    avg_beam_size: f64,
    model_calls: usize,
    n_audio_tokens: usize,
    prompt_len: usize,
    hit_cap: bool,
    encode_ms: f64,
    prefill_ms: f64,
    decode_head_ms: f64,
    decode_cpu_ms: f64,
    decode_tail_ms: f64,
    dtw_ms: f64,
    snapshot_wall_ms: f64,
    finalize_wall_ms: f64,
}

fn stage_ms(t: &RoundTrace, stage: Stage) -> f64 {
    t.stage_timings.get(&stage).map_or(0.0, |s| s.end_ms - s.start_ms)
}

pub fn trace_csv(traces: &[RoundTrace]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in traces {
        let steps = t.beam_sizes_per_step.len();
        w.serialize(TraceRow {
            round_index: t.round_index,
            window_start_s: t.window_start.seconds(),
            window_end_s: t.window_end.seconds(),
            n_raw_tokens: t.raw_tokens.len(),
            n_confirmed_delta: t.confirmed_delta.len(),
            fallback: t.fallback_triggered,
            steps,
            avg_beam_size: if steps == 0 {
                0.0
            } else {
                t.beam_sizes_per_step.iter().sum::<usize>() as f64 / steps as f64
            },
            model_calls: t.model_calls,
            n_audio_tokens: t.n_audio_tokens,
            prompt_len: t.prompt_len,
            hit_cap: t.hit_cap,
            encode_ms: stage_ms(t, Stage::Encode),
            prefill_ms: stage_ms(t, Stage::Prefill),
            decode_head_ms: stage_ms(t, Stage::DecodeHead),
            decode_cpu_ms: stage_ms(t, Stage::DecodeCpu),
            decode_tail_ms: stage_ms(t, Stage::DecodeTail),
            dtw_ms: stage_ms(t, Stage::Dtw),
            snapshot_wall_ms: t.snapshot_wall_ms,
            finalize_wall_ms: t.finalize_wall_ms,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `transcript.txt`, `metrics.json`, and `trace.csv` into `dir`.
pub fn write_outputs(dir: &Path, sim: &Simulation) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("transcript.txt"), transcript_text(sim))?;
    std::fs::write(dir.join("metrics.json"), metrics_json(sim)?)?;
    std::fs::write(dir.join("trace.csv"), trace_csv(&sim.traces)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_names() {
        assert_eq!(Features::from_names(&["none"]).unwrap(), Features::NONE);
        assert_eq!(Features::from_names(&["hush", "prune", "pipeline"]).unwrap(), Features::ALL);
        assert_eq!(
            Features::from_names(&["prune"]).unwrap(),
            Features {
                prune: true,
                ..Features::NONE
            }
        );
        assert!(Features::from_names(&["turbo"]).is_err());
    }

    #[test]
    fn no_features_is_the_baseline() {
        let base = RunConfig::baseline();
        assert_eq!(Features::NONE.apply(&RunConfig::default()), base);
        assert_eq!(Features::ALL.apply(&base), RunConfig::default());
    }
}
