//! Beam search, reference-guided pruning, and DTW timestamping.
//!
//! Decoding is exposed as a resumable [`DecodeSession`] so that a decode can
//! be split across executors one step at a time; [`beam_search`] and
//! [`pruned_beam_search`] run a session to completion.

mod dtw;
mod prune;

pub use dtw::{dtw_path, dtw_timestamps, AttentionMatrix, DtwPath};
pub use prune::{align_reference, AlignFailure, BeamPruneController, MatchOutcome, PruneMode};

use crate::error::{Error, Result};
use crate::model::{DecodeDistribution, EncodingHandle, SpeechModel};
use crate::types::{hypothesis_order, Hypothesis, Token};

pub const LENGTH_CAP: usize = 448;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub best: Hypothesis,
    /// Width in force at each step (1 while narrow).
    pub beam_sizes_per_step: Vec<usize>,
    /// Model invocations at each step.
    pub calls_per_step: Vec<usize>,
    pub fallback: bool,
    pub steps: usize,
    pub model_calls: usize,
    /// The cap was reached without any terminated hypothesis.
    pub hit_cap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodePlan {
    Full { width: usize },
    /// An empty reference runs as `Full`.
    Pruned { reference: Vec<Token>, full_width: usize },
}

impl DecodePlan {
    pub fn new(width: usize, pruning: bool, reference: Option<&[Token]>) -> Self {
        match reference {
            Some(r) if pruning && !r.is_empty() => DecodePlan::Pruned {
                reference: r.to_vec(),
                full_width: width,
            },
            _ => DecodePlan::Full { width },
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecodeSession {
    handle: EncodingHandle,
    full_width: usize,
    cap: usize,
    hypotheses: Vec<Hypothesis>,
    controller: Option<BeamPruneController>,
    beam_sizes: Vec<usize>,
    calls: Vec<usize>,
    fallback: bool,
    done: bool,
}

impl DecodeSession {
    pub fn new(handle: EncodingHandle, plan: DecodePlan, cap: usize) -> Result<Self> {
        let (full_width, controller) = match plan {
            DecodePlan::Full { width } => (width, None),
            DecodePlan::Pruned { reference, full_width } if reference.is_empty() => (full_width, None),
            DecodePlan::Pruned { reference, full_width } => {
                (full_width, Some(BeamPruneController::new(reference, full_width)))
            }
        };
        if full_width == 0 {
            return Err(Error::InvalidValue("beam width must be >= 1".into()));
        }
        if cap == 0 {
            return Err(Error::InvalidValue("length cap must be >= 1".into()));
        }
        Ok(DecodeSession {
            handle,
            full_width,
            cap,
            hypotheses: vec![Hypothesis::empty()],
            controller,
            beam_sizes: Vec::new(),
            calls: Vec::new(),
            fallback: false,
            done: false,
        })
    }

    pub fn handle(&self) -> &EncodingHandle {
        &self.handle
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> usize {
        self.beam_sizes.len()
    }

    fn narrow(&self) -> bool {
        self.controller
            .as_ref()
            .is_some_and(|c| c.mode != PruneMode::Fallback)
    }

    /// Advances one decode step. Returns the number of model calls made.
    pub fn step(&mut self, model: &dyn SpeechModel) -> Result<usize> {
        if self.done {
            return Ok(0);
        }
        let calls = if self.narrow() {
            self.narrow_step(model)?
        } else {
            self.wide_step(model)?
        };
        self.calls.push(calls);
        self.done = self.hypotheses.iter().all(|h| h.terminated) || self.steps() >= self.cap;
        Ok(calls)
    }

    pub fn run(&mut self, model: &dyn SpeechModel) -> Result<()> {
        while !self.done {
            self.step(model)?;
        }
        Ok(())
    }

    /// Runs at most `n` steps.
    pub fn run_steps(&mut self, model: &dyn SpeechModel, n: usize) -> Result<()> {
        for _ in 0..n {
            if self.done {
                break;
            }
            self.step(model)?;
        }
        Ok(())
    }

    fn narrow_step(&mut self, model: &dyn SpeechModel) -> Result<usize> {
        let prefix = &self.hypotheses[0];
        let dist = model.decode_step(&self.handle, prefix)?;
        let best = dist.best().clone();
        let ctrl = self.controller.as_mut().expect("narrow implies a controller");
        let outcome = match ctrl.mode {
            PruneMode::Aligning => ctrl.align(&best)?,
            _ => ctrl.match_step(&best)?,
        };
        match outcome {
            MatchOutcome::KeepNarrow | MatchOutcome::Skip => {
                self.hypotheses[0].push(best)?;
                self.beam_sizes.push(1);
            }
            MatchOutcome::TriggerFallback => {
                // branch from the committed prefix using the distribution
                // already in hand
                self.fallback = true;
                let prefix = self.hypotheses[0].clone();
                self.hypotheses = expand(&prefix, &dist, self.full_width)?;
                self.beam_sizes.push(self.full_width);
            }
        }
        Ok(1)
    }

    fn wide_step(&mut self, model: &dyn SpeechModel) -> Result<usize> {
        let mut candidates = Vec::with_capacity(self.hypotheses.len() * 4);
        let mut calls = 0;
        for h in &self.hypotheses {
            if h.terminated {
                candidates.push(h.clone());
                continue;
            }
            let dist = model.decode_step(&self.handle, h)?;
            calls += 1;
            candidates.extend(expand(h, &dist, usize::MAX)?);
        }
        candidates.sort_by(hypothesis_order);
        candidates.truncate(self.full_width);
        self.hypotheses = candidates;
        self.beam_sizes.push(self.full_width);
        Ok(calls)
    }

    /// Best terminated hypothesis, else best overall.
    pub fn finish(self) -> Result<DecodeResult> {
        if !self.done {
            return Err(Error::InvalidValue("decode session not finished".into()));
        }
        let mut ranked = self.hypotheses;
        ranked.sort_by(hypothesis_order);
        let best = ranked
            .iter()
            .find(|h| h.terminated)
            .or(ranked.first())
            .cloned()
            .expect("beam never empties");
        Ok(DecodeResult {
            hit_cap: !best.terminated,
            best,
            steps: self.beam_sizes.len(),
            model_calls: self.calls.iter().sum(),
            beam_sizes_per_step: self.beam_sizes,
            calls_per_step: self.calls,
            fallback: self.fallback,
        })
    }
}

fn expand(prefix: &Hypothesis, dist: &DecodeDistribution, limit: usize) -> Result<Vec<Hypothesis>> {
    let mut out = dist
        .top_k
        .iter()
        .take(limit)
        .map(|t| prefix.extended(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(hypothesis_order);
    Ok(out)
}

pub fn decode(model: &dyn SpeechModel, handle: &EncodingHandle, plan: DecodePlan, cap: usize) -> Result<DecodeResult> {
    let mut session = DecodeSession::new(handle.clone(), plan, cap)?;
    session.run(model)?;
    session.finish()
}

/// The prompt only feeds the cost model; it does not change outputs.
pub fn beam_search(
    model: &dyn SpeechModel,
    handle: &EncodingHandle,
    _prompt: &[Token],
    width: usize,
    cap: usize,
) -> Result<DecodeResult> {
    decode(model, handle, DecodePlan::Full { width }, cap)
}

pub fn pruned_beam_search(
    model: &dyn SpeechModel,
    handle: &EncodingHandle,
    _prompt: &[Token],
    ref_tokens: &[Token],
    full_width: usize,
) -> Result<DecodeResult> {
    let plan = DecodePlan::Pruned {
        reference: ref_tokens.to_vec(),
        full_width,
    };
    decode(model, handle, plan, LENGTH_CAP)
}
