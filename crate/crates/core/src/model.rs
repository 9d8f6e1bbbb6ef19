//! Deterministic scripted model backend.
//!
//! The backend "transcribes" an [`UtteranceScript`] window by window. For a
//! window `[t0, t1]` it plans the sequence
//! `BEG, (word, timestamp[, punctuation])*, EOT` over the words fully inside
//! the window, then serves that plan one position at a time.
//!
//! A word's top-ranked surface is normally the true word. Two things replace
//! it with a corrupted variant:
//!
//! * a word ending within [`MockCalibration::edge_margin_s`] of `t1` is
//!   *unstable*: the top surface is drawn per `(seed, word, t1)`, so it moves
//!   between rounds;
//! * a stable word is *noisy* with probability `noise_level`, drawn per
//!   `(seed, word)`, so it stays put between rounds.
//!
//! Whichever surface is on top, the timestamp that follows a non-true word is
//! heavily penalized. Greedy decoding therefore commits wrong words, but any
//! beam of width two or more recovers the true transcript.
//!
//! Without padding (or with a weak hush word) the plan never reaches EOT:
//! after the last real word the backend emits a gibberish stream.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::costmodel::{effective_tokens, CostModel, InputPolicy, MAX_INPUT_S, TOKENS_PER_SECOND};
use crate::decoder::AttentionMatrix;
use crate::error::{Error, Result};
use crate::hashing::{mix, time_key, unit};
use crate::hush::{HushWord, VALID_THRESHOLD};
use crate::scenario::pseudo_word;
use crate::types::{normalize_word, Hypothesis, SpecialToken, TimePoint, Token, UtteranceScript};

const EPS: f64 = 1e-9;

/// Sentence-final words are followed by a pause of at least this long.
pub const SENTENCE_PAUSE_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
}

impl From<CostModel> for ModelParams {
    fn from(cm: CostModel) -> Self {
        ModelParams {
            d_model: cm.d_model,
            enc_layers: cm.enc_layers,
            dec_layers: cm.dec_layers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: TimePoint,
    pub end: TimePoint,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        Ok(Window {
            start: TimePoint::new(start)?,
            end: TimePoint::new(end)?,
        })
    }

    pub fn duration(&self) -> f64 {
        self.end.seconds() - self.start.seconds()
    }
}

/// Calibration constants of the mock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockCalibration {
    pub edge_margin_s: f64,
    pub top_logprob: f64,
    /// The other member of {true, corrupted}.
    pub competitor_logprob: f64,
    /// Two further corrupted spellings.
    pub neighbor_logprob: f64,
    /// Timestamp after a word that is not the true word.
    pub mismatch_timestamp_logprob: f64,
    pub special_logprob: f64,
    /// Decode length cap used by callers.
    pub length_cap: usize,
}

impl Default for MockCalibration {
    fn default() -> Self {
        MockCalibration {
            edge_margin_s: 0.3,
            top_logprob: -0.05,
            // e^-0.05 + e^-3.1 + 2·e^-6.5 ≈ 0.9992, keeping the top-k mass <= 1
            competitor_logprob: -3.1,
            neighbor_logprob: -6.5,
            mismatch_timestamp_logprob: -9.0,
            special_logprob: -0.01,
            length_cap: 448,
        }
    }
}

const GIBBERISH_LOGPROBS: [f64; 3] = [-0.7, -1.2, -1.6];

/// The model interface the decoder and streaming loop drive.
pub trait SpeechModel: Send + Sync {
    fn params(&self) -> ModelParams;
    fn encode(&self, window: Window, policy: InputPolicy, hush: Option<&HushWord>) -> Result<EncodingHandle>;
    /// Number of prompt tokens consumed; outputs do not depend on the prompt.
    fn prefill(&self, handle: &EncodingHandle, prompt: &[Token]) -> usize;
    fn decode_step(&self, handle: &EncodingHandle, prefix: &Hypothesis) -> Result<DecodeDistribution>;
    fn decode_cross_attention(&self, handle: &EncodingHandle, decoded: &[Token]) -> Result<AttentionMatrix>;
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Beg,
    Word {
        index: usize,
        truth: String,
        top: String,
        alt: String,
        neighbors: [String; 2],
        start_rel: f64,
    },
    Timestamp {
        truth: String,
        time: TimePoint,
    },
    Punct {
        time: f64,
    },
    Eot {
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingHandle {
    pub window_start: TimePoint,
    pub window_end: TimePoint,
    pub n_audio_tokens: usize,
    pub policy_applied: InputPolicy,
    pub hallucination_armed: bool,
    plan: Arc<Vec<Slot>>,
    /// Window-relative end of the last real word.
    speech_end_rel: f64,
}

impl EncodingHandle {
    pub fn window(&self) -> Window {
        Window {
            start: self.window_start,
            end: self.window_end,
        }
    }

    /// Length of the planned real-speech token sequence (EOT included when
    /// not armed).
    pub fn planned_len(&self) -> usize {
        self.plan.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeDistribution {
    /// Descending by logprob, ties by surface.
    pub top_k: Vec<Token>,
}

impl DecodeDistribution {
    fn new(mut top_k: Vec<Token>) -> Self {
        top_k.sort_by(|a, b| b.logprob.total_cmp(&a.logprob).then_with(|| a.surface.cmp(&b.surface)));
        DecodeDistribution { top_k }
    }

    pub fn best(&self) -> &Token {
        &self.top_k[0]
    }

    pub fn mass(&self) -> f64 {
        self.top_k.iter().map(|t| t.logprob.exp()).sum()
    }
}

/// A corrupted spelling: the last character swapped for one the generator
/// never uses.
pub fn corrupted_variant(word: &str, k: usize) -> String {
    const MARKS: [char; 4] = ['x', 'q', 'z', 'j'];
    let mut chars: Vec<char> = word.chars().collect();
    let last = chars.pop().unwrap_or('a');
    let mark = MARKS
        .iter()
        .copied()
        .filter(|&m| m != last)
        .nth(k % 3)
        .expect("three marks remain");
    chars.push(mark);
    chars.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct ScriptedModel {
    script: Arc<UtteranceScript>,
    seed: u64,
    noise_level: f64,
    params: ModelParams,
    pub calibration: MockCalibration,
}

const NOISE_SALT: u64 = 0x6e_6f69_7365;
const EDGE_SALT: u64 = 0x6564_6765;
const GIBBERISH_SALT: u64 = 0x6769_6262;
const ATTN_SALT: u64 = 0x6174_746e;

impl ScriptedModel {
    pub fn new(script: Arc<UtteranceScript>, seed: u64, noise_level: f64) -> Self {
        ScriptedModel {
            script,
            seed,
            noise_level,
            params: CostModel::whisper_medium().into(),
            calibration: MockCalibration::default(),
        }
    }

    pub fn script(&self) -> &UtteranceScript {
        &self.script
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn is_noisy(&self, index: usize) -> bool {
        unit(mix(&[self.seed, NOISE_SALT, index as u64])) < self.noise_level
    }

    fn sentence_final(&self, index: usize) -> bool {
        let words = &self.script.words;
        match words.get(index + 1) {
            None => true,
            Some(next) => next.start.seconds() - words[index].end.seconds() >= SENTENCE_PAUSE_S - EPS,
        }
    }

    fn plan(&self, window: Window, armed: bool) -> (Vec<Slot>, f64) {
        let t0 = window.start.seconds();
        let t1 = window.end.seconds();
        let margin = self.calibration.edge_margin_s;
        let mut plan = vec![Slot::Beg];
        let mut speech_end = 0.0;
        for (index, w) in self.script.words.iter().enumerate() {
            let (ws, we) = (w.start.seconds(), w.end.seconds());
            if ws < t0 - EPS {
                continue;
            }
            if we > t1 + EPS {
                break;
            }
            let truth = w.text.clone();
            let corrupted = corrupted_variant(&w.text, 0);
            let keep_truth = if we > t1 - margin {
                unit(mix(&[self.seed, EDGE_SALT, index as u64, time_key(t1)])) < w.stability
            } else {
                !self.is_noisy(index)
            };
            let (top, alt) = if keep_truth {
                (truth.clone(), corrupted)
            } else {
                (corrupted, truth.clone())
            };
            let end_rel = (we - t0).max(0.0);
            plan.push(Slot::Word {
                index,
                truth: truth.clone(),
                top,
                alt,
                neighbors: [corrupted_variant(&w.text, 1), corrupted_variant(&w.text, 2)],
                start_rel: (ws - t0).max(0.0),
            });
            plan.push(Slot::Timestamp {
                truth,
                time: TimePoint::saturating(end_rel),
            });
            if self.sentence_final(index) {
                plan.push(Slot::Punct { time: end_rel });
            }
            speech_end = end_rel;
        }
        if !armed {
            plan.push(Slot::Eot { time: speech_end });
        }
        (plan, speech_end)
    }

    fn gibberish(&self, handle: &EncodingHandle, position: usize) -> DecodeDistribution {
        let key = mix(&[self.seed, GIBBERISH_SALT, time_key(handle.window_end.seconds()), position as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut surfaces: Vec<String> = Vec::with_capacity(GIBBERISH_LOGPROBS.len());
        while surfaces.len() < GIBBERISH_LOGPROBS.len() {
            let w = pseudo_word(&mut rng);
            if !surfaces.contains(&w) {
                surfaces.push(w);
            }
        }
        DecodeDistribution::new(
            surfaces
                .into_iter()
                .zip(GIBBERISH_LOGPROBS)
                .map(|(s, lp)| Token::text(s, lp))
                .collect(),
        )
    }

    /// Window-relative audio position of each decoded token.
    fn token_positions(&self, handle: &EncodingHandle, decoded: &[Token]) -> Vec<f64> {
        decoded
            .iter()
            .enumerate()
            .map(|(n, _)| match handle.plan.get(n) {
                Some(Slot::Beg) => 0.0,
                Some(Slot::Word { start_rel, .. }) => *start_rel,
                Some(Slot::Timestamp { time, .. }) => time.seconds(),
                Some(Slot::Punct { time }) | Some(Slot::Eot { time }) => *time,
                None => handle.speech_end_rel,
            })
            .collect()
    }
}

impl SpeechModel for ScriptedModel {
    fn params(&self) -> ModelParams {
        self.params
    }

    fn encode(&self, window: Window, policy: InputPolicy, hush: Option<&HushWord>) -> Result<EncodingHandle> {
        let (t0, t1) = (window.start.seconds(), window.end.seconds());
        let total = self.script.total_duration.seconds();
        if t0 >= t1 || t1 > total + EPS {
            return Err(Error::WindowOutsideScript {
                start: t0,
                end: t1,
                total,
            });
        }
        let duration = t1 - t0;
        if duration > MAX_INPUT_S + EPS {
            return Err(Error::WindowTooLong(duration));
        }
        let n_audio_tokens = effective_tokens(policy, duration.min(MAX_INPUT_S))?;
        let hallucination_armed = match policy {
            InputPolicy::PadTo30s => false,
            InputPolicy::NoPad => duration < MAX_INPUT_S - EPS,
            InputPolicy::HushAppend => hush.is_none_or(|h| h.validity_for(self.seed) < VALID_THRESHOLD),
        };
        let (plan, speech_end_rel) = self.plan(window, hallucination_armed);
        Ok(EncodingHandle {
            window_start: window.start,
            window_end: window.end,
            n_audio_tokens,
            policy_applied: policy,
            hallucination_armed,
            plan: Arc::new(plan),
            speech_end_rel,
        })
    }

    fn prefill(&self, _handle: &EncodingHandle, prompt: &[Token]) -> usize {
        debug_assert!(prompt.len() <= 200, "prompt longer than 200 tokens");
        prompt.len()
    }

    fn decode_step(&self, handle: &EncodingHandle, prefix: &Hypothesis) -> Result<DecodeDistribution> {
        if prefix.terminated {
            return Err(Error::Terminated);
        }
        let cal = &self.calibration;
        let position = prefix.len();
        let Some(slot) = handle.plan.get(position) else {
            return Ok(self.gibberish(handle, position));
        };
        Ok(match slot {
            Slot::Beg => DecodeDistribution::new(vec![Token::special(SpecialToken::Beg, cal.special_logprob)]),
            Slot::Word {
                top, alt, neighbors, ..
            } => DecodeDistribution::new(vec![
                Token::text(top.clone(), cal.top_logprob),
                Token::text(alt.clone(), cal.competitor_logprob),
                Token::text(neighbors[0].clone(), cal.neighbor_logprob),
                Token::text(neighbors[1].clone(), cal.neighbor_logprob),
            ]),
            Slot::Timestamp { truth, time } => {
                let follows_truth = prefix
                    .tokens
                    .last()
                    .is_some_and(|t| normalize_word(&t.surface) == normalize_word(truth));
                let lp = if follows_truth {
                    cal.top_logprob
                } else {
                    cal.mismatch_timestamp_logprob
                };
                DecodeDistribution::new(vec![Token::timestamp(*time, lp)])
            }
            Slot::Punct { .. } => DecodeDistribution::new(vec![Token::punctuation(".", cal.top_logprob)]),
            Slot::Eot { .. } => DecodeDistribution::new(vec![Token::special(SpecialToken::Eot, cal.top_logprob)]),
        })
    }

    fn decode_cross_attention(&self, handle: &EncodingHandle, decoded: &[Token]) -> Result<AttentionMatrix> {
        if decoded.is_empty() {
            return Err(Error::Empty("decoded token list"));
        }
        let frames = handle.n_audio_tokens.max(1);
        let input_s = frames as f64 / TOKENS_PER_SECOND;
        let positions: Vec<f64> = self
            .token_positions(handle, decoded)
            .into_iter()
            .map(|p| (p / input_s).clamp(0.0, 1.0))
            .collect();
        Ok(cross_attention_from_positions(&positions, frames, self.seed))
    }
}

/// Near-diagonal cost matrix: `|f/F − a_n| + ε(f, n)` with `ε ∈ [0, 0.01]`.
pub fn cross_attention_from_positions(positions: &[f64], frames: usize, seed: u64) -> AttentionMatrix {
    let mut m = AttentionMatrix::zeros(frames, positions.len());
    for f in 0..frames {
        for (n, &a) in positions.iter().enumerate() {
            let eps = 0.01 * unit(mix(&[seed, ATTN_SALT, f as u64, n as u64]));
            m.set(f, n, (f as f64 / frames as f64 - a).abs() + eps);
        }
    }
    m
}
