//! The online loop: buffering, step scheduling, LocalAgreement-2, trimming.
//!
//! [`Engine`] owns all mutable stream state. A round is split into
//! [`Engine::begin`] (snapshot, encode, prefill, decoder setup) and
//! [`Engine::commit`] (agreement, emission, trimming) so that a scheduler can
//! place the decode on any executor and commit rounds in order later.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::decoder::{DecodePlan, DecodeResult, DecodeSession, LENGTH_CAP};
use crate::error::Result;
use crate::hush::HushWord;
use crate::model::{EncodingHandle, SpeechModel, Window};
use crate::types::{
    normalize_word, token_stream_to_words, RoundTrace, RunConfig, SpecialToken, Stage, StageTiming, TimePoint,
    Token, SAMPLE_RATE,
};

/// Longest window handed to the model.
pub const MAX_WINDOW_S: f64 = 30.0;
/// Confirmed words fed back as prompt.
pub const PROMPT_WORDS: usize = 100;
/// Rounds run after a chunk's audio is complete.
pub const DRAIN_ROUNDS: usize = 2;

const EPS: f64 = 1e-6;

fn to_samples(seconds: f64) -> u64 {
    (seconds * SAMPLE_RATE as f64).round() as u64
}

fn from_samples(samples: u64) -> f64 {
    samples as f64 / SAMPLE_RATE as f64
}

/// Audio received so far, counted in whole samples from the start of the
/// stream, plus the point the buffer has been trimmed to. Counting samples
/// keeps repeated small ingests free of float drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AudioBuffer {
    pub start_time: TimePoint,
    end_sample: u64,
}

impl AudioBuffer {
    pub fn new(start_time: TimePoint, duration: TimePoint) -> Self {
        AudioBuffer {
            start_time,
            end_sample: to_samples(start_time.seconds() + duration.seconds()),
        }
    }

    pub fn duration(&self) -> TimePoint {
        TimePoint::saturating(self.end_time() - self.start_time.seconds())
    }

    pub fn end_time(&self) -> f64 {
        from_samples(self.end_sample)
    }

    /// Extends the buffer to an absolute sample index.
    fn extend_to(&mut self, sample: u64) {
        self.end_sample = self.end_sample.max(sample);
    }
}

pub fn ingest(buffer: AudioBuffer, new_audio_duration: TimePoint) -> AudioBuffer {
    AudioBuffer {
        end_sample: buffer.end_sample + to_samples(new_audio_duration.seconds()),
        ..buffer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfirmedWord {
    pub word: String,
    pub end_time: Option<TimePoint>,
    pub emit_wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranscriptState {
    pub confirmed: Vec<ConfirmedWord>,
    pub prev_round_words: Vec<String>,
}

impl TranscriptState {
    pub fn last_confirmed_end(&self) -> Option<f64> {
        self.confirmed
            .iter()
            .filter_map(|c| c.end_time.map(TimePoint::seconds))
            .reduce(f64::max)
    }

    pub fn words(&self) -> Vec<String> {
        self.confirmed.iter().map(|c| c.word.clone()).collect()
    }
}

/// Confirms the longest common prefix; the rest of `cur` becomes the new
/// pending tail.
pub fn local_agreement_2(prev_words: &[String], cur_words: &[String]) -> (Vec<String>, Vec<String>) {
    let n = prev_words
        .iter()
        .zip(cur_words)
        .take_while(|(a, b)| a == b)
        .count();
    (cur_words[..n].to_vec(), cur_words[n..].to_vec())
}

/// Moves the start to the latest confirmed end once the buffer exceeds the
/// threshold. Unconfirmed audio is never dropped.
pub fn trim(buffer: AudioBuffer, confirmed: &[ConfirmedWord], threshold: TimePoint) -> AudioBuffer {
    if buffer.duration() <= threshold {
        return buffer;
    }
    let start = buffer.start_time.seconds();
    let Some(cut) = confirmed
        .iter()
        .filter_map(|c| c.end_time.map(TimePoint::seconds))
        .filter(|&e| e > start)
        .reduce(f64::max)
    else {
        return buffer;
    };
    AudioBuffer {
        start_time: TimePoint::saturating(cut.min(buffer.end_time())),
        ..buffer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepMode {
    Timed,
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScheduler {
    pub step_length: TimePoint,
    pub last_round_start_wall_ms: Option<f64>,
}

impl StepScheduler {
    pub fn new(step_length: TimePoint) -> Self {
        StepScheduler {
            step_length,
            last_round_start_wall_ms: None,
        }
    }

    pub fn mode(&self, last_round_cost_ms: f64) -> StepMode {
        if self.step_length.millis() <= last_round_cost_ms {
            StepMode::BestEffort
        } else {
            StepMode::Timed
        }
    }

    /// Records a round start.
    pub fn started(&mut self, wall_ms: f64) {
        self.last_round_start_wall_ms = Some(wall_ms);
    }
}

/// `max(last_start + step, last_start + cost, now)`; the first round starts at
/// `now`.
pub fn next_round_start(sched: &StepScheduler, now_wall_ms: f64, last_round_cost_ms: f64) -> f64 {
    match sched.last_round_start_wall_ms {
        None => now_wall_ms,
        Some(s) => (s + sched.step_length.millis())
            .max(s + last_round_cost_ms)
            .max(now_wall_ms),
    }
}

/// A round between snapshot and commit.
#[derive(Debug, Clone)]
pub struct RoundWork {
    pub round_index: usize,
    pub window: Window,
    pub handle: EncodingHandle,
    pub prompt_len: usize,
    pub session: DecodeSession,
    pub snapshot_wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct CompletedRound {
    pub round_index: usize,
    pub window: Window,
    pub handle: EncodingHandle,
    pub prompt_len: usize,
    pub result: DecodeResult,
    pub snapshot_wall_ms: f64,
}

impl RoundWork {
    pub fn complete(mut self, model: &dyn SpeechModel) -> Result<CompletedRound> {
        self.session.run(model)?;
        self.into_completed()
    }

    pub fn into_completed(self) -> Result<CompletedRound> {
        Ok(CompletedRound {
            round_index: self.round_index,
            window: self.window,
            handle: self.handle,
            prompt_len: self.prompt_len,
            result: self.session.finish()?,
            snapshot_wall_ms: self.snapshot_wall_ms,
        })
    }
}

pub struct Engine {
    model: Arc<dyn SpeechModel>,
    config: RunConfig,
    hush: Option<HushWord>,
    total_duration: f64,
    pub buffer: AudioBuffer,
    pub transcript: TranscriptState,
    /// Raw output of the latest committed round in this chunk.
    reference: Option<Vec<Token>>,
    chunk_end: f64,
    rounds_started: usize,
}

impl Engine {
    pub fn new(model: Arc<dyn SpeechModel>, config: RunConfig, hush: Option<HushWord>, total_duration: TimePoint) -> Result<Self> {
        config.validate()?;
        let chunk_end = config.chunk_length_s.seconds().min(total_duration.seconds());
        Ok(Engine {
            model,
            config,
            hush,
            total_duration: total_duration.seconds(),
            buffer: AudioBuffer::new(TimePoint::ZERO, TimePoint::ZERO),
            transcript: TranscriptState::default(),
            reference: None,
            chunk_end,
            rounds_started: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<dyn SpeechModel> {
        &self.model
    }

    pub fn chunk_end(&self) -> f64 {
        self.chunk_end
    }

    pub fn is_last_chunk(&self) -> bool {
        self.chunk_end >= self.total_duration - EPS
    }

    /// Starts the next chunk. Confirmed text carries over; the buffer restarts
    /// at the last confirmed word end so a word straddling the boundary is
    /// still heard whole.
    pub fn next_chunk(&mut self) {
        let start = self
            .transcript
            .last_confirmed_end()
            .unwrap_or(self.buffer.start_time.seconds())
            .max(self.buffer.start_time.seconds())
            .min(self.chunk_end);
        self.buffer.start_time = TimePoint::saturating(start);
        self.transcript.prev_round_words.clear();
        self.reference = None;
        self.chunk_end = (self.chunk_end + self.config.chunk_length_s.seconds()).min(self.total_duration);
    }

    /// Ingests audio up to `wall_ms` and returns the window to process, if any.
    pub fn snapshot(&mut self, wall_ms: f64) -> Option<Window> {
        // whole samples only, so the window never runs past the chunk
        let available = (wall_ms / 1000.0).min(self.chunk_end);
        self.buffer.extend_to((available * SAMPLE_RATE as f64 + 1e-6).floor() as u64);
        let end = self.buffer.end_time();
        let start = self.buffer.start_time.seconds().max(end - MAX_WINDOW_S);
        if end - start < 1.0 / SAMPLE_RATE as f64 {
            return None;
        }
        Some(Window {
            start: TimePoint::saturating(start),
            end: TimePoint::saturating(end),
        })
    }

    /// Whether a window already covers all audio of the current chunk.
    pub fn chunk_complete(&self, window: &Window) -> bool {
        window.end.seconds() >= self.chunk_end - 1.0 / SAMPLE_RATE as f64
    }

    pub fn prompt(&self) -> Vec<Token> {
        let mut prompt = vec![
            Token::special(SpecialToken::Sot, 0.0),
            Token::special(SpecialToken::Lang, 0.0),
            Token::special(SpecialToken::Task, 0.0),
        ];
        let skip = self.transcript.confirmed.len().saturating_sub(PROMPT_WORDS);
        prompt.extend(self.transcript.confirmed[skip..].iter().map(|c| Token::text(c.word.clone(), 0.0)));
        prompt
    }

    /// Encode, prefill, and set up the decode against the latest committed
    /// reference.
    pub fn begin(&mut self, window: Window, snapshot_wall_ms: f64) -> Result<RoundWork> {
        let handle = self
            .model
            .encode(window, self.config.input_policy, self.hush.as_ref())?;
        let prompt = self.prompt();
        let prompt_len = self.model.prefill(&handle, &prompt);
        let plan = DecodePlan::new(self.config.beam_width, self.config.beam_pruning, self.reference.as_deref());
        let session = DecodeSession::new(handle.clone(), plan, LENGTH_CAP)?;
        let round_index = self.rounds_started;
        self.rounds_started += 1;
        Ok(RoundWork {
            round_index,
            window,
            handle,
            prompt_len,
            session,
            snapshot_wall_ms,
        })
    }

    /// Agreement, emission, and trimming for a decoded round.
    pub fn commit(
        &mut self,
        done: CompletedRound,
        stage_timings: BTreeMap<Stage, StageTiming>,
        finalize_wall_ms: f64,
    ) -> Result<RoundTrace> {
        let t0 = done.window.start.seconds();
        let last_end = self.transcript.last_confirmed_end();
        let pending: Vec<(String, Option<TimePoint>)> = token_stream_to_words(&done.result.best.tokens)
            .into_iter()
            .map(|(w, t)| (w, t.map(|t| TimePoint::saturating(t0 + t.seconds()))))
            .filter(|(_, t)| match (t, last_end) {
                (Some(t), Some(e)) => t.seconds() > e + EPS,
                _ => true,
            })
            .collect();
        let cur: Vec<String> = pending.iter().map(|(w, _)| w.clone()).collect();
        let (delta, rest) = local_agreement_2(&self.transcript.prev_round_words, &cur);
        let emit = self
            .transcript
            .confirmed
            .last()
            .map_or(finalize_wall_ms, |c| c.emit_wall_ms.max(finalize_wall_ms));
        for (word, end_time) in pending.into_iter().take(delta.len()) {
            self.transcript.confirmed.push(ConfirmedWord {
                word,
                end_time,
                emit_wall_ms: emit,
            });
        }
        self.transcript.prev_round_words = rest;
        self.buffer = trim(self.buffer, &self.transcript.confirmed, self.config.buffer_threshold_s);
        self.reference = Some(done.result.best.tokens.clone());
        Ok(RoundTrace {
            round_index: done.round_index,
            window_start: done.window.start,
            window_end: done.window.end,
            raw_tokens: done.result.best.tokens,
            confirmed_delta: delta,
            beam_sizes_per_step: done.result.beam_sizes_per_step,
            fallback_triggered: done.result.fallback,
            stage_timings,
            model_calls: done.result.model_calls,
            n_audio_tokens: done.handle.n_audio_tokens,
            prompt_len: done.prompt_len,
            hit_cap: done.result.hit_cap,
            snapshot_wall_ms: done.snapshot_wall_ms,
            finalize_wall_ms,
        })
    }

    /// Whole round with no stage timings; for callers that do not model time.
    pub fn run_round(&mut self, window: Window, wall_ms: f64) -> Result<RoundTrace> {
        let work = self.begin(window, wall_ms)?;
        let done = work.complete(self.model.as_ref())?;
        self.commit(done, BTreeMap::new(), wall_ms)
    }
}

/// Confirmed words that did not appear in the raw output of both the
/// confirming round and the one before it. Returns `(round_index, word)`.
pub fn agreement_violations(traces: &[RoundTrace]) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        if t.confirmed_delta.is_empty() {
            continue;
        }
        let here: Vec<String> = t.absolute_words().into_iter().map(|(w, _)| w).collect();
        let before: Vec<String> = match i.checked_sub(1) {
            Some(j) => traces[j].absolute_words().into_iter().map(|(w, _)| w).collect(),
            None => Vec::new(),
        };
        for w in &t.confirmed_delta {
            let w = normalize_word(w);
            if !here.contains(&w) || !before.contains(&w) {
                out.push((t.round_index, w));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(s: f64) -> TimePoint {
        TimePoint::new(s).unwrap()
    }

    fn strings(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ingest_examples() {
        let b = AudioBuffer::new(tp(0.0), tp(14.5));
        assert_eq!(ingest(b, tp(0.5)).duration(), tp(15.0));
        assert_eq!(ingest(b, tp(0.0)), b);
        let mut c = b;
        for _ in 0..100 {
            c = ingest(c, tp(0.01));
        }
        assert!((c.duration().seconds() - 15.5).abs() < 1e-9);
        assert_eq!(c.start_time, b.start_time);
    }

    #[test]
    fn scheduling_examples() {
        let starts = |step_ms: f64, cost: f64| {
            let mut s = StepScheduler::new(tp(step_ms / 1000.0));
            let mut out = vec![];
            let mut now = 0.0;
            for _ in 0..3 {
                let t = next_round_start(&s, now, cost);
                s.started(t);
                out.push(t);
                now = t + cost;
            }
            out
        };
        assert_eq!(starts(1000.0, 400.0), vec![0.0, 1000.0, 2000.0]);
        assert_eq!(starts(10.0, 400.0), vec![0.0, 400.0, 800.0]);
        assert_eq!(starts(500.0, 500.0), vec![0.0, 500.0, 1000.0]);
        let s = StepScheduler::new(tp(0.01));
        assert_eq!(s.mode(400.0), StepMode::BestEffort);
        assert_eq!(StepScheduler::new(tp(1.0)).mode(400.0), StepMode::Timed);
    }

    #[test]
    fn agreement_examples() {
        let (d, p) = local_agreement_2(&strings(&["a", "b", "c"]), &strings(&["a", "b", "d"]));
        assert_eq!((d, p), (strings(&["a", "b"]), strings(&["d"])));
        let (d, p) = local_agreement_2(&[], &strings(&["a", "b"]));
        assert_eq!((d, p), (vec![], strings(&["a", "b"])));
        let (d, p) = local_agreement_2(&strings(&["a", "b"]), &strings(&["a", "b"]));
        assert_eq!((d, p), (strings(&["a", "b"]), vec![]));
    }

    fn confirmed_at(end: Option<f64>) -> Vec<ConfirmedWord> {
        vec![ConfirmedWord {
            word: "w".into(),
            end_time: end.map(tp),
            emit_wall_ms: 0.0,
        }]
    }

    #[test]
    fn trim_examples() {
        let b = AudioBuffer::new(tp(0.0), tp(18.0));
        let t = trim(b, &confirmed_at(Some(6.2)), tp(15.0));
        assert!((t.start_time.seconds() - 6.2).abs() < 1e-12);
        assert!((t.end_time() - 18.0).abs() < 1e-9);
        assert_eq!(trim(b, &confirmed_at(None), tp(15.0)), b);
        let short = AudioBuffer::new(tp(0.0), tp(14.0));
        assert_eq!(trim(short, &confirmed_at(Some(6.2)), tp(15.0)), short);
    }
}
