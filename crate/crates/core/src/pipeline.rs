//! Discrete-event simulation of serial and dual-executor round schedules,
//! plus the offline allocation profiler.
//!
//! Decoding runs eagerly when a round is snapshotted (its outputs do not
//! depend on timing); the simulator then places each stage on an executor
//! from the per-step call counts. In the pipelined schedule the GPU-role
//! executor runs encode, prefill and the first `K` decode steps of round `n`;
//! the CPU-role executor continues round `n - 1` meanwhile. At the first CPU
//! step boundary after the GPU-role executor is ready they exchange: the GPU
//! side finishes round `n - 1` and runs its DTW, the CPU side picks up round
//! `n` at step `K + 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::costmodel::CostModel;
use crate::decoder::dtw_timestamps;
use crate::error::{Error, Result};
use crate::hush::HushWord;
use crate::metrics::MetricsReport;
use crate::model::{ScriptedModel, SpeechModel};
use crate::par::{par_map, Parallelism};
use crate::streaming::{next_round_start, CompletedRound, Engine, RoundWork, StepScheduler, TranscriptState, DRAIN_ROUNDS};
use crate::types::{ExecutorRole, RoundTrace, RunConfig, Stage, StageTiming, UtteranceScript, SAMPLE_RATE};

/// Executor-dependent stage durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLatencyModel {
    pub enc_base_ms: f64,
    pub enc_per_token_ms: f64,
    pub prefill_base_ms: f64,
    pub prefill_per_token_ms: f64,
    pub dtw_base_ms: f64,
    pub dtw_per_token_ms: f64,
    /// Fixed cost of one decode step on the GPU-role executor.
    pub decode_step_ms: f64,
    /// Added per hypothesis expanded in the step.
    pub decode_per_hyp_ms: f64,
    pub cpu_decode_ratio: f64,
    pub c_sat: f64,
    pub g_min: f64,
}

impl Default for StageLatencyModel {
    fn default() -> Self {
        StageLatencyModel {
            enc_base_ms: 20.0,
            enc_per_token_ms: 0.2,
            prefill_base_ms: 5.0,
            prefill_per_token_ms: 0.4,
            dtw_base_ms: 5.0,
            dtw_per_token_ms: 0.2,
            decode_step_ms: 8.0,
            decode_per_hyp_ms: 4.0,
            cpu_decode_ratio: 1.15,
            c_sat: 6.0,
            g_min: 2.0,
        }
    }
}

impl StageLatencyModel {
    pub fn cpu_penalty(&self, cores: usize) -> f64 {
        (self.c_sat / cores.max(1) as f64).max(1.0)
    }

    pub fn gpu_host_penalty(&self, cores: usize) -> f64 {
        (self.g_min / cores.max(1) as f64).max(1.0)
    }

    pub fn enc_ms(&self, n_audio_tokens: usize, gpu_cores: usize) -> f64 {
        (self.enc_base_ms + self.enc_per_token_ms * n_audio_tokens as f64) * self.gpu_host_penalty(gpu_cores)
    }

    pub fn prefill_ms(&self, prompt_len: usize, gpu_cores: usize) -> f64 {
        (self.prefill_base_ms + self.prefill_per_token_ms * prompt_len as f64) * self.gpu_host_penalty(gpu_cores)
    }

    pub fn dtw_ms(&self, n_tokens: usize, gpu_cores: usize) -> f64 {
        (self.dtw_base_ms + self.dtw_per_token_ms * n_tokens as f64) * self.gpu_host_penalty(gpu_cores)
    }

    /// One decode step that expands `calls` hypotheses.
    pub fn decode_step_ms(&self, role: ExecutorRole, cores: usize, calls: usize) -> f64 {
        let base = self.decode_step_ms + self.decode_per_hyp_ms * calls as f64;
        match role {
            ExecutorRole::Gpu => base * self.gpu_host_penalty(cores),
            ExecutorRole::Cpu => base * self.cpu_decode_ratio * self.cpu_penalty(cores),
        }
    }

    /// Single-hypothesis step cost.
    pub fn decode_token_ms(&self, role: ExecutorRole, cores: usize) -> f64 {
        self.decode_step_ms(role, cores, 1)
    }
}

/// One core is always left for the control worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Allocation {
    pub cpu_exec_cores: usize,
    pub gpu_exec_cores: usize,
    pub total_cores: usize,
}

impl Allocation {
    pub fn new(cpu_exec_cores: usize, gpu_exec_cores: usize) -> Result<Self> {
        if cpu_exec_cores == 0 || gpu_exec_cores == 0 {
            return Err(Error::InvalidValue("each executor needs at least one core".into()));
        }
        Ok(Allocation {
            cpu_exec_cores,
            gpu_exec_cores,
            total_cores: cpu_exec_cores + gpu_exec_cores + 1,
        })
    }

    /// Serial runs give every core but the reserved one to the GPU role.
    pub fn serial_gpu_cores(&self) -> usize {
        self.total_cores - 1
    }
}

impl Default for Allocation {
    fn default() -> Self {
        Allocation::new(6, 5).expect("static allocation")
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}:G{}", self.cpu_exec_cores, self.gpu_exec_cores)
    }
}

impl FromStr for Allocation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidValue(format!("allocation must look like C6:G5, got '{s}'"));
        let (c, g) = s.trim().split_once(':').ok_or_else(bad)?;
        let c = c.strip_prefix('C').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let g = g.strip_prefix('G').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        Allocation::new(c, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub round: usize,
    pub stage: Stage,
    pub executor: ExecutorRole,
    pub start_ms: f64,
    pub end_ms: f64,
    /// Decode steps covered (0 for non-decode stages).
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub intervals: Vec<Interval>,
    pub per_word_latency_ms: f64,
    pub makespan_ms: f64,
    /// GPU-role time spent waiting for a CPU step boundary.
    pub gpu_bubble_ms: f64,
    /// CPU-role idle time between its first and last job.
    pub cpu_bubble_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub schedule: Schedule,
    pub traces: Vec<RoundTrace>,
    pub transcript: TranscriptState,
    pub metrics: MetricsReport,
}

/// Everything a simulated run needs.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub script: Arc<UtteranceScript>,
    pub config: RunConfig,
    pub hush: Option<HushWord>,
    pub latency: StageLatencyModel,
    pub allocation: Allocation,
}

impl SimSetup {
    pub fn new(script: Arc<UtteranceScript>, config: RunConfig, hush: Option<HushWord>) -> Self {
        SimSetup {
            script,
            config,
            hush,
            latency: StageLatencyModel::default(),
            allocation: Allocation::default(),
        }
    }

    fn model(&self) -> Arc<dyn SpeechModel> {
        Arc::new(ScriptedModel::new(self.script.clone(), self.config.seed, self.config.noise_level))
    }
}

/// Runs a round's decode; the split across executors is decided by the
/// simulator, so implementations only need to produce the result.
trait DecodeExecutor {
    fn run(&mut self, work: RoundWork, head_steps: usize) -> Result<CompletedRound>;
}

struct Inline(Arc<dyn SpeechModel>);

impl DecodeExecutor for Inline {
    fn run(&mut self, work: RoundWork, _head_steps: usize) -> Result<CompletedRound> {
        work.complete(self.0.as_ref())
    }
}

struct InFlight {
    done: CompletedRound,
    timings: BTreeMap<Stage, StageTiming>,
    cpu_from_step: usize,
    /// `boundaries[i]` is when the CPU side has finished `i` of its steps.
    boundaries: Vec<f64>,
}

struct Sim<'a> {
    latency: &'a StageLatencyModel,
    gpu_cores: usize,
    cpu_cores: usize,
    gpu_free: f64,
    cpu_free: f64,
    cpu_used: bool,
    inflight: Option<InFlight>,
    intervals: Vec<Interval>,
    traces: Vec<RoundTrace>,
    gpu_bubble: f64,
    cpu_bubble: f64,
}

impl Sim<'_> {
    #[allow(clippy::too_many_arguments)]
    fn place(
        &mut self,
        timings: &mut BTreeMap<Stage, StageTiming>,
        round: usize,
        stage: Stage,
        executor: ExecutorRole,
        start_ms: f64,
        end_ms: f64,
        steps: usize,
    ) {
        if end_ms <= start_ms && steps == 0 {
            return;
        }
        timings.insert(
            stage,
            StageTiming {
                start_ms,
                end_ms,
                executor,
            },
        );
        self.intervals.push(Interval {
            round,
            stage,
            executor,
            start_ms,
            end_ms,
            steps,
        });
    }

    fn gpu_steps(&self, calls: &[usize]) -> f64 {
        calls
            .iter()
            .map(|&c| self.latency.decode_step_ms(ExecutorRole::Gpu, self.gpu_cores, c))
            .sum()
    }

    /// DTW on the GPU side, then commit.
    fn finalize(
        &mut self,
        engine: &mut Engine,
        done: CompletedRound,
        mut timings: BTreeMap<Stage, StageTiming>,
        at: f64,
    ) -> Result<f64> {
        let dtw = self.latency.dtw_ms(done.result.steps, self.gpu_cores);
        self.place(&mut timings, done.round_index, Stage::Dtw, ExecutorRole::Gpu, at, at + dtw, 0);
        let trace = engine.commit(done, timings, at + dtw)?;
        self.traces.push(trace);
        Ok(at + dtw)
    }

    /// The GPU side, free at `t`, takes back the in-flight round at the next
    /// CPU step boundary and finishes it.
    fn take_over(&mut self, t: f64, engine: &mut Engine) -> Result<()> {
        let Some(job) = self.inflight.take() else {
            self.gpu_free = self.gpu_free.max(t);
            return Ok(());
        };
        let InFlight {
            done,
            mut timings,
            cpu_from_step,
            boundaries,
        } = job;
        let (cpu_steps, exchange) = match boundaries.iter().position(|&b| b >= t) {
            // the CPU side has not started yet
            Some(0) => (0, t),
            Some(i) => (i, boundaries[i]),
            None => (boundaries.len() - 1, t),
        };
        self.gpu_bubble += exchange - t;
        let cpu_end = boundaries[cpu_steps];
        let round = done.round_index;
        self.place(&mut timings, round, Stage::DecodeCpu, ExecutorRole::Cpu, boundaries[0], cpu_end, cpu_steps);
        self.cpu_free = cpu_end;
        let tail_from = cpu_from_step + cpu_steps;
        let tail = &done.result.calls_per_step[tail_from..];
        let tail_ms = self.gpu_steps(tail);
        let tail_steps = tail.len();
        self.place(&mut timings, round, Stage::DecodeTail, ExecutorRole::Gpu, exchange, exchange + tail_ms, tail_steps);
        self.gpu_free = self.finalize(engine, done, timings, exchange + tail_ms)?;
        Ok(())
    }

    /// Encode, prefill, head steps on the GPU side; exchange with the round
    /// in flight; park the remainder on the CPU side.
    fn schedule_round(&mut self, engine: &mut Engine, done: CompletedRound, start: f64, k: usize) -> Result<()> {
        let round = done.round_index;
        let mut timings = BTreeMap::new();
        let enc = self.latency.enc_ms(done.handle.n_audio_tokens, self.gpu_cores);
        self.place(&mut timings, round, Stage::Encode, ExecutorRole::Gpu, start, start + enc, 0);
        let mut t = start + enc;
        let prefill = self.latency.prefill_ms(done.prompt_len, self.gpu_cores);
        self.place(&mut timings, round, Stage::Prefill, ExecutorRole::Gpu, t, t + prefill, 0);
        t += prefill;
        let m = done.result.steps;
        let head = k.min(m);
        let head_ms = self.gpu_steps(&done.result.calls_per_step[..head]);
        self.place(&mut timings, round, Stage::DecodeHead, ExecutorRole::Gpu, t, t + head_ms, head);
        t += head_ms;

        if self.inflight.is_some() {
            self.take_over(t, engine)?;
        } else {
            self.gpu_free = t;
        }

        if m > head {
            let cpu_start = self.cpu_free.max(t);
            if self.cpu_used {
                self.cpu_bubble += cpu_start - self.cpu_free;
            }
            self.cpu_used = true;
            let mut boundaries = Vec::with_capacity(m - head + 1);
            boundaries.push(cpu_start);
            let mut b = cpu_start;
            for &c in &done.result.calls_per_step[head..] {
                b += self.latency.decode_step_ms(ExecutorRole::Cpu, self.cpu_cores, c);
                boundaries.push(b);
            }
            self.inflight = Some(InFlight {
                done,
                timings,
                cpu_from_step: head,
                boundaries,
            });
        } else {
            let at = self.gpu_free;
            self.gpu_free = self.finalize(engine, done, timings, at)?;
        }
        Ok(())
    }
}

fn run_schedule(
    setup: &SimSetup,
    model: Arc<dyn SpeechModel>,
    handoff_k: usize,
    gpu_cores: usize,
    cpu_cores: usize,
    exec: &mut dyn DecodeExecutor,
) -> Result<Simulation> {
    let config = &setup.config;
    let mut engine = Engine::new(model, config.clone(), setup.hush.clone(), setup.script.total_duration)?;
    let mut sched = StepScheduler::new(config.step_length_s);
    let mut sim = Sim {
        latency: &setup.latency,
        gpu_cores,
        cpu_cores,
        gpu_free: 0.0,
        cpu_free: 0.0,
        cpu_used: false,
        inflight: None,
        intervals: Vec::new(),
        traces: Vec::new(),
        gpu_bubble: 0.0,
        cpu_bubble: 0.0,
    };
    let total_ms = setup.script.total_duration.millis();
    let chunks = (setup.script.total_duration.seconds() / config.chunk_length_s.seconds()).ceil() as usize + 1;
    let max_rounds = (total_ms / config.step_length_s.millis()).ceil() as usize + chunks * (DRAIN_ROUNDS + 2) + 16;
    let one_sample = 1.0 / SAMPLE_RATE as f64;
    let mut last_cost = 0.0;
    let mut drained = 0;
    let mut iterations = 0usize;

    loop {
        iterations += 1;
        if iterations > max_rounds {
            return Err(Error::Deadlock(format!(
                "no completion after {max_rounds} rounds; GPU free at {:.1} ms, in flight: {}",
                sim.gpu_free,
                sim.inflight.as_ref().map_or("none".to_string(), |j| j.done.round_index.to_string())
            )));
        }
        let mut start = next_round_start(&sched, sim.gpu_free, last_cost);
        if start > sim.gpu_free + 1e-9 && sim.inflight.is_some() {
            // never leave the GPU side idle while a round is unfinished
            sim.take_over(sim.gpu_free, &mut engine)?;
            start = start.max(sim.gpu_free);
        }
        sched.started(start);
        let window = engine.snapshot(start);
        let complete = engine.buffer.end_time() >= engine.chunk_end() - one_sample;
        match window {
            Some(w) => {
                let work = engine.begin(w, start)?;
                let done = exec.run(work, handoff_k)?;
                sim.schedule_round(&mut engine, done, start, handoff_k)?;
                last_cost = sim.gpu_free - start;
            }
            None => {
                sim.gpu_free = sim.gpu_free.max(start);
                last_cost = 0.0;
            }
        }
        if complete {
            drained += 1;
            if drained > DRAIN_ROUNDS {
                let t = sim.gpu_free;
                sim.take_over(t, &mut engine)?;
                if engine.is_last_chunk() {
                    break;
                }
                engine.next_chunk();
                drained = 0;
            }
        }
    }

    let cost = CostModel::whisper_medium();
    let metrics = MetricsReport::compute(
        &setup.script,
        &engine.transcript.confirmed,
        &sim.traces,
        &cost,
        config.beam_width,
    )?;
    let makespan_ms = sim.intervals.iter().map(|i| i.end_ms).fold(0.0, f64::max);
    Ok(Simulation {
        schedule: Schedule {
            intervals: sim.intervals,
            per_word_latency_ms: metrics.avg_word_latency_ms,
            makespan_ms,
            gpu_bubble_ms: sim.gpu_bubble,
            cpu_bubble_ms: sim.cpu_bubble,
        },
        traces: sim.traces,
        transcript: engine.transcript,
        metrics,
    })
}

/// One executor does every stage of every round.
pub fn simulate_serial(setup: &SimSetup) -> Result<Simulation> {
    let model = setup.model();
    let cores = setup.allocation.serial_gpu_cores();
    run_schedule(setup, model.clone(), usize::MAX, cores, 1, &mut Inline(model))
}

pub fn simulate_pipeline(setup: &SimSetup) -> Result<Simulation> {
    let model = setup.model();
    let a = setup.allocation;
    let k = setup.config.handoff_k;
    run_schedule(setup, model.clone(), k, a.gpu_exec_cores, a.cpu_exec_cores, &mut Inline(model))
}

/// Serial or pipelined according to the config.
pub fn simulate(setup: &SimSetup) -> Result<Simulation> {
    if setup.config.pipeline_enabled {
        simulate_pipeline(setup)
    } else {
        simulate_serial(setup)
    }
}

enum GpuJob {
    Head(RoundWork, usize),
    Dtw(RoundWork),
}

enum Reply {
    Partial(RoundWork),
    Done(CompletedRound),
}

/// Two worker threads do the model work: the GPU-role thread encodes,
/// decodes the head, and computes DTW timestamps; the CPU-role thread
/// decodes the rest. The control thread sends work items in order and waits
/// for each reply, so the timing model stays the simulated one.
struct Live {
    to_gpu: mpsc::Sender<GpuJob>,
    to_cpu: mpsc::Sender<RoundWork>,
    replies: mpsc::Receiver<Result<Reply>>,
}

impl DecodeExecutor for Live {
    fn run(&mut self, work: RoundWork, head_steps: usize) -> Result<CompletedRound> {
        let closed = || Error::Deadlock("executor worker hung up".into());
        self.to_gpu.send(GpuJob::Head(work, head_steps)).map_err(|_| closed())?;
        let mut work = match self.replies.recv().map_err(|_| closed())?? {
            Reply::Partial(w) => w,
            Reply::Done(r) => return Ok(r),
        };
        if !work.session.is_done() {
            self.to_cpu.send(work).map_err(|_| closed())?;
            work = match self.replies.recv().map_err(|_| closed())?? {
                Reply::Partial(w) => w,
                Reply::Done(r) => return Ok(r),
            };
        }
        self.to_gpu.send(GpuJob::Dtw(work)).map_err(|_| closed())?;
        match self.replies.recv().map_err(|_| closed())?? {
            Reply::Done(r) => Ok(r),
            Reply::Partial(_) => Err(Error::Deadlock("DTW stage returned unfinished work".into())),
        }
    }
}

/// Pipelined run whose decode work is carried out by real worker threads.
/// The transcript matches [`simulate_pipeline`] exactly.
pub fn simulate_live(setup: &SimSetup) -> Result<Simulation> {
    let model = setup.model();
    let (to_gpu, gpu_rx) = mpsc::channel::<GpuJob>();
    let (to_cpu, cpu_rx) = mpsc::channel::<RoundWork>();
    let (reply_tx, replies) = mpsc::channel::<Result<Reply>>();
    thread::scope(|s| {
        let gpu_model = model.clone();
        let gpu_reply = reply_tx.clone();
        s.spawn(move || {
            for job in gpu_rx {
                let reply = match job {
                    GpuJob::Head(mut work, k) => work.session.run_steps(gpu_model.as_ref(), k).map(|_| Reply::Partial(work)),
                    GpuJob::Dtw(work) => dtw_stage(gpu_model.as_ref(), work).map(Reply::Done),
                };
                if gpu_reply.send(reply).is_err() {
                    break;
                }
            }
        });
        let cpu_model = model.clone();
        let cpu_reply = reply_tx;
        s.spawn(move || {
            for mut work in cpu_rx {
                let reply = work.session.run(cpu_model.as_ref()).map(|_| Reply::Partial(work));
                if cpu_reply.send(reply).is_err() {
                    break;
                }
            }
        });
        let mut live = Live {
            to_gpu,
            to_cpu,
            replies,
        };
        let a = setup.allocation;
        let k = if setup.config.pipeline_enabled {
            setup.config.handoff_k
        } else {
            usize::MAX
        };
        let (g, c) = if setup.config.pipeline_enabled {
            (a.gpu_exec_cores, a.cpu_exec_cores)
        } else {
            (a.serial_gpu_cores(), 1)
        };
        run_schedule(setup, model.clone(), k, g, c, &mut live)
        // dropping `live` closes the channels and ends both workers
    })
}

fn dtw_stage(model: &dyn SpeechModel, work: RoundWork) -> Result<CompletedRound> {
    let done = work.into_completed()?;
    let attn = model.decode_cross_attention(&done.handle, &done.result.best.tokens)?;
    let times = dtw_timestamps(&attn, crate::costmodel::TOKENS_PER_SECOND)?;
    debug_assert!(times.windows(2).all(|p| p[0] <= p[1]));
    Ok(done)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub best: Allocation,
    pub table: Vec<(Allocation, f64)>,
}

/// Sweeps CPU-role cores from 5 to `total - 2`, simulating each split.
pub fn profile_allocations(setup: &SimSetup, total_cores: usize, mode: Parallelism) -> Result<Profile> {
    if total_cores < 7 {
        return Err(Error::TooFewCores(total_cores));
    }
    let candidates: Vec<Allocation> = (5..=total_cores - 2)
        .map(|c| Allocation::new(c, total_cores - c - 1))
        .collect::<Result<_>>()?;
    let rows = par_map(candidates, mode, |a| {
        let mut s = setup.clone();
        s.allocation = a;
        simulate_pipeline(&s).map(|sim| (a, sim.schedule.per_word_latency_ms))
    });
    let table = rows.into_iter().collect::<Result<Vec<_>>>()?;
    // strict < keeps the smaller CPU share on ties
    let best = table
        .iter()
        .fold(None::<(Allocation, f64)>, |acc, &(a, l)| match acc {
            Some((_, bl)) if bl <= l => acc,
            _ => Some((a, l)),
        })
        .map(|(a, _)| a)
        .expect("at least one candidate");
    Ok(Profile { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_parses() {
        let a: Allocation = "C6:G5".parse().unwrap();
        assert_eq!(a, Allocation::default());
        assert_eq!(a.total_cores, 12);
        assert_eq!(a.to_string(), "C6:G5");
        assert!("6:5".parse::<Allocation>().is_err());
        assert!("C0:G5".parse::<Allocation>().is_err());
    }

    #[test]
    fn serial_round_cost_is_stage_sum() {
        let slm = StageLatencyModel {
            enc_base_ms: 300.0,
            enc_per_token_ms: 0.0,
            prefill_base_ms: 50.0,
            prefill_per_token_ms: 0.0,
            dtw_base_ms: 30.0,
            dtw_per_token_ms: 0.0,
            decode_step_ms: 3.0,
            decode_per_hyp_ms: 0.0,
            ..StageLatencyModel::default()
        };
        let steps: f64 = (0..150).map(|_| slm.decode_step_ms(ExecutorRole::Gpu, 11, 1)).sum();
        let cost = slm.enc_ms(1500, 11) + slm.prefill_ms(100, 11) + steps + slm.dtw_ms(150, 11);
        assert!((cost - 830.0).abs() < 1e-9);
        assert!((slm.enc_ms(0, 11) + slm.prefill_ms(0, 11) + slm.dtw_ms(0, 11) - 380.0).abs() < 1e-9);
    }

    #[test]
    fn penalties() {
        let slm = StageLatencyModel::default();
        assert_eq!(slm.cpu_penalty(6), 1.0);
        assert_eq!(slm.cpu_penalty(3), 2.0);
        assert_eq!(slm.gpu_host_penalty(1), 2.0);
        let r = slm.decode_token_ms(ExecutorRole::Cpu, 6) / slm.decode_token_ms(ExecutorRole::Gpu, 6);
        assert!((r - 1.15).abs() < 1e-12);
    }

    #[test]
    fn too_few_cores() {
        let script = Arc::new(UtteranceScript::new(vec![], crate::types::TimePoint::new(1.0).unwrap(), 0));
        let setup = SimSetup::new(script, RunConfig::baseline(), None);
        assert!(matches!(
            profile_allocations(&setup, 6, Parallelism::Sequential),
            Err(Error::TooFewCores(6))
        ));
    }
}
