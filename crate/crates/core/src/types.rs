//! Domain values shared by every other module.
//!
//! Everything here is an immutable value once constructed. Token times are
//! relative to the start of the window the token was decoded from; callers
//! add the window start to obtain absolute stream time.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::costmodel::InputPolicy;
use crate::error::{Error, Result};

/// Audio sample rate used throughout.
pub const SAMPLE_RATE: u32 = 16_000;

/// Non-negative, finite time offset in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimePoint(f64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0.0);

    pub fn new(seconds: f64) -> Result<Self> {
        if !seconds.is_finite() || seconds < 0.0 {
            return Err(Error::InvalidValue(format!(
                "time must be finite and non-negative, got {seconds}"
            )));
        }
        Ok(TimePoint(seconds))
    }

    /// Clamps tiny negative rounding residue to zero; panics on NaN.
    pub(crate) fn saturating(seconds: f64) -> Self {
        assert!(!seconds.is_nan(), "NaN time");
        TimePoint(seconds.max(0.0))
    }

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn millis(self) -> f64 {
        self.0 * 1000.0
    }
}

impl TryFrom<f64> for TimePoint {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        TimePoint::new(v)
    }
}

impl From<TimePoint> for f64 {
    fn from(t: TimePoint) -> f64 {
        t.0
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}s", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecialToken {
    Sot,
    Eot,
    Lang,
    Task,
    Beg,
}

impl SpecialToken {
    pub fn surface(self) -> &'static str {
        match self {
            SpecialToken::Sot => "<|startoftranscript|>",
            SpecialToken::Eot => "<|endoftext|>",
            SpecialToken::Lang => "<|en|>",
            SpecialToken::Task => "<|transcribe|>",
            SpecialToken::Beg => "<|beg|>",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Text,
    Timestamp,
    Punctuation,
    Special(SpecialToken),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
    pub logprob: f64,
    /// Window-relative; present iff `kind == Timestamp`.
    pub time: Option<TimePoint>,
}

impl Token {
    pub fn new(
        surface: impl Into<String>,
        kind: TokenKind,
        logprob: f64,
        time: Option<TimePoint>,
    ) -> Result<Self> {
        if !logprob.is_finite() || logprob > 0.0 {
            return Err(Error::InvalidValue(format!(
                "logprob must be finite and <= 0, got {logprob}"
            )));
        }
        if (kind == TokenKind::Timestamp) != time.is_some() {
            return Err(Error::InvalidValue(
                "timestamp tokens carry a time and no other kind does".into(),
            ));
        }
        Ok(Token {
            surface: surface.into(),
            kind,
            logprob,
            time,
        })
    }

    pub fn text(surface: impl Into<String>, logprob: f64) -> Self {
        Token::new(surface, TokenKind::Text, logprob, None).expect("valid text token")
    }

    pub fn punctuation(surface: impl Into<String>, logprob: f64) -> Self {
        Token::new(surface, TokenKind::Punctuation, logprob, None).expect("valid punctuation")
    }

    pub fn special(which: SpecialToken, logprob: f64) -> Self {
        Token::new(which.surface(), TokenKind::Special(which), logprob, None)
            .expect("valid special token")
    }

    pub fn timestamp(time: TimePoint, logprob: f64) -> Self {
        Token::new(
            format!("<|{:.2}|>", time.seconds()),
            TokenKind::Timestamp,
            logprob,
            Some(time),
        )
        .expect("valid timestamp token")
    }

    pub fn is_text(&self) -> bool {
        self.kind == TokenKind::Text
    }

    pub fn is_eot(&self) -> bool {
        self.kind == TokenKind::Special(SpecialToken::Eot)
    }

    /// Same token identity, different score.
    pub fn with_logprob(&self, logprob: f64) -> Self {
        Token {
            logprob,
            ..self.clone()
        }
    }
}

/// Lowercase and keep only alphanumerics and apostrophes.
pub fn normalize_word(surface: &str) -> String {
    surface
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<Token>,
    pub score: f64,
    pub terminated: bool,
}

impl Hypothesis {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_tokens(tokens: Vec<Token>) -> Result<Self> {
        let mut h = Hypothesis::empty();
        for t in tokens {
            h.push(t)?;
        }
        Ok(h)
    }

    /// Appends a token; EOT terminates the hypothesis.
    pub fn push(&mut self, token: Token) -> Result<()> {
        if self.terminated {
            return Err(Error::Terminated);
        }
        self.score += token.logprob;
        self.terminated = token.is_eot();
        self.tokens.push(token);
        Ok(())
    }

    pub fn extended(&self, token: Token) -> Result<Self> {
        let mut next = self.clone();
        next.push(token)?;
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.surface.as_str())
    }
}

/// Descending score, then lexicographic by token surfaces.
pub fn hypothesis_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.surfaces().cmp(b.surfaces()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub width: usize,
    pub hypotheses: Vec<Hypothesis>,
}

impl Beam {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidValue("beam width must be >= 1".into()));
        }
        Ok(Beam {
            width,
            hypotheses: Vec::new(),
        })
    }

    /// Keeps the best `width` candidates in canonical order.
    pub fn from_candidates(width: usize, mut candidates: Vec<Hypothesis>) -> Result<Self> {
        let mut beam = Beam::new(width)?;
        candidates.sort_by(hypothesis_order);
        candidates.truncate(width);
        beam.hypotheses = candidates;
        Ok(beam)
    }

    pub fn sort(&mut self) {
        self.hypotheses.sort_by(hypothesis_order);
    }

    pub fn all_terminated(&self) -> bool {
        self.hypotheses.iter().all(|h| h.terminated)
    }

    pub fn live(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter().filter(|h| !h.terminated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptWord {
    pub text: String,
    pub start: TimePoint,
    pub end: TimePoint,
    /// Probability the word decodes identically while near the window edge.
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScript {
    pub sample_rate: u32,
    pub words: Vec<ScriptWord>,
    pub total_duration: TimePoint,
    pub seed: u64,
}

impl UtteranceScript {
    pub fn new(words: Vec<ScriptWord>, total_duration: TimePoint, seed: u64) -> Self {
        UtteranceScript {
            sample_rate: SAMPLE_RATE,
            words,
            total_duration,
            seed,
        }
    }

    pub fn normalized_words(&self) -> Vec<String> {
        self.words.iter().map(|w| normalize_word(&w.text)).collect()
    }

    pub fn validated(self) -> Result<Self> {
        let violations = validate_script(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidScenario(
                violations.iter().map(ToString::to_string).collect(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `None` for script-level violations.
    pub index: Option<usize>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} at index {}", self.rule, i),
            None => write!(f, "{}", self.rule),
        }
    }
}

pub fn validate_script(script: &UtteranceScript) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |index: Option<usize>, rule: &str| {
        out.push(Violation {
            index,
            rule: rule.to_string(),
        })
    };
    if script.sample_rate != SAMPLE_RATE {
        push(None, "sample_rate must be 16000");
    }
    for (i, w) in script.words.iter().enumerate() {
        if w.start >= w.end {
            push(Some(i), "start < end");
        }
        if w.text.is_empty() {
            push(Some(i), "text non-empty");
        }
        if w.text.chars().any(char::is_whitespace) {
            push(Some(i), "text without whitespace");
        }
        if !(0.0..=1.0).contains(&w.stability) {
            push(Some(i), "stability in [0,1]");
        }
        if i > 0 {
            let prev = &script.words[i - 1];
            if w.start < prev.start {
                push(Some(i), "sorted by start");
            } else if w.start < prev.end {
                push(Some(i), "overlap");
            }
        }
    }
    if let Some(last) = script.words.last() {
        if script.total_duration < last.end {
            push(None, "total_duration >= last word end");
        }
    }
    out
}

/// Text tokens become normalized words; each word's end time is the first
/// timestamp after it (before the next word). Everything else is dropped.
pub fn token_stream_to_words(tokens: &[Token]) -> Vec<(String, Option<TimePoint>)> {
    let mut words: Vec<(String, Option<TimePoint>)> = Vec::new();
    let mut awaiting = false;
    for t in tokens {
        match t.kind {
            TokenKind::Text => {
                let w = normalize_word(&t.surface);
                if w.is_empty() {
                    continue;
                }
                words.push((w, None));
                awaiting = true;
            }
            TokenKind::Timestamp if awaiting => {
                if let Some(last) = words.last_mut() {
                    last.1 = t.time;
                }
                awaiting = false;
            }
            _ => {}
        }
    }
    words
}

/// Scheduling stage of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Encode,
    Prefill,
    /// Decode steps done by the GPU-role executor before the hand-off.
    DecodeHead,
    /// Decode steps done by the CPU-role executor.
    DecodeCpu,
    /// Decode steps taken back by the GPU-role executor after exchange.
    DecodeTail,
    Dtw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutorRole {
    Gpu,
    Cpu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub start_ms: f64,
    pub end_ms: f64,
    pub executor: ExecutorRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub step_length_s: TimePoint,
    pub buffer_threshold_s: TimePoint,
    pub beam_width: usize,
    pub input_policy: InputPolicy,
    pub handoff_k: usize,
    pub pipeline_enabled: bool,
    /// Reference-guided beam pruning on/off.
    pub beam_pruning: bool,
    pub chunk_length_s: TimePoint,
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            step_length_s: TimePoint(0.01),
            buffer_threshold_s: TimePoint(15.0),
            beam_width: 5,
            input_policy: InputPolicy::HushAppend,
            handoff_k: 8,
            pipeline_enabled: true,
            beam_pruning: true,
            chunk_length_s: TimePoint(300.0),
            noise_level: 0.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// PadTo30s, full beam, serial.
    pub fn baseline() -> Self {
        RunConfig {
            input_policy: InputPolicy::PadTo30s,
            pipeline_enabled: false,
            beam_pruning: false,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.step_length_s.seconds() <= 0.0 {
            problems.push("step_length_s must be > 0".to_string());
        }
        if !(5.0..=30.0).contains(&self.buffer_threshold_s.seconds()) {
            problems.push("buffer_threshold_s must be in [5, 30]".to_string());
        }
        if self.beam_width == 0 {
            problems.push("beam_width must be >= 1".to_string());
        }
        if self.chunk_length_s.seconds() <= 0.0 {
            problems.push("chunk_length_s must be > 0".to_string());
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            problems.push("noise_level must be in [0, 1]".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round_index: usize,
    pub window_start: TimePoint,
    pub window_end: TimePoint,
    pub raw_tokens: Vec<Token>,
    pub confirmed_delta: Vec<String>,
    pub beam_sizes_per_step: Vec<usize>,
    pub fallback_triggered: bool,
    pub stage_timings: BTreeMap<Stage, StageTiming>,
    pub model_calls: usize,
    pub n_audio_tokens: usize,
    pub prompt_len: usize,
    pub hit_cap: bool,
    /// Wall time the audio snapshot was taken.
    pub snapshot_wall_ms: f64,
    /// Wall time the round's results were committed.
    pub finalize_wall_ms: f64,
}

impl RoundTrace {
    /// Normalized words with absolute end times.
    pub fn absolute_words(&self) -> Vec<(String, Option<f64>)> {
        let t0 = self.window_start.seconds();
        token_stream_to_words(&self.raw_tokens)
            .into_iter()
            .map(|(w, t)| (w, t.map(|t| t0 + t.seconds())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(text: &str, s: f64, e: f64) -> ScriptWord {
        ScriptWord {
            text: text.into(),
            start: TimePoint::new(s).unwrap(),
            end: TimePoint::new(e).unwrap(),
            stability: 1.0,
        }
    }

    #[test]
    fn overlap_is_reported_at_second_word() {
        let s = UtteranceScript::new(
            vec![word("a", 1.0, 2.0), word("b", 1.5, 2.5)],
            TimePoint::new(3.0).unwrap(),
            0,
        );
        let v = validate_script(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "overlap at index 1");
    }

    #[test]
    fn empty_script_is_valid() {
        let s = UtteranceScript::new(vec![], TimePoint::ZERO, 0);
        assert!(validate_script(&s).is_empty());
    }

    #[test]
    fn zero_length_word_violates_ordering() {
        let s = UtteranceScript::new(vec![word("a", 1.0, 1.0)], TimePoint::new(2.0).unwrap(), 0);
        let v = validate_script(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "start < end");
    }

    #[test]
    fn words_from_tokens() {
        let ts = |x| Token::timestamp(TimePoint::new(x).unwrap(), -0.1);
        let toks = vec![
            Token::special(SpecialToken::Sot, 0.0),
            Token::text("hello", -0.1),
            ts(1.2),
            Token::text("world", -0.1),
            Token::special(SpecialToken::Eot, 0.0),
        ];
        let words = token_stream_to_words(&toks);
        assert_eq!(
            words,
            vec![
                ("hello".to_string(), Some(TimePoint::new(1.2).unwrap())),
                ("world".to_string(), None)
            ]
        );
        assert!(token_stream_to_words(&[]).is_empty());

        let toks = vec![
            Token::text("Hi", -0.1),
            Token::punctuation(",", -0.1),
            Token::text("there", -0.1),
        ];
        assert_eq!(
            token_stream_to_words(&toks),
            vec![("hi".to_string(), None), ("there".to_string(), None)]
        );
    }

    #[test]
    fn terminated_hypothesis_rejects_tokens() {
        let mut h = Hypothesis::empty();
        h.push(Token::text("a", -0.5)).unwrap();
        h.push(Token::special(SpecialToken::Eot, -0.25)).unwrap();
        assert!(h.terminated);
        assert!((h.score + 0.75).abs() < 1e-12);
        assert!(matches!(h.push(Token::text("b", -0.1)), Err(Error::Terminated)));
    }

    #[test]
    fn token_invariants() {
        assert!(Token::new("x", TokenKind::Timestamp, -0.1, None).is_err());
        assert!(Token::new("x", TokenKind::Text, -0.1, Some(TimePoint::ZERO)).is_err());
        assert!(Token::new("x", TokenKind::Text, 0.5, None).is_err());
        assert!(Token::new("x", TokenKind::Text, f64::NAN, None).is_err());
        assert!(TimePoint::new(-1.0).is_err());
        assert!(TimePoint::new(f64::INFINITY).is_err());
    }

    #[test]
    fn beam_ties_break_on_surfaces() {
        let a = Hypothesis::from_tokens(vec![Token::text("b", -1.0)]).unwrap();
        let b = Hypothesis::from_tokens(vec![Token::text("a", -1.0)]).unwrap();
        let c = Hypothesis::from_tokens(vec![Token::text("z", -0.5)]).unwrap();
        let beam = Beam::from_candidates(2, vec![a, b, c]).unwrap();
        let firsts: Vec<_> = beam.hypotheses.iter().map(|h| h.tokens[0].surface.clone()).collect();
        assert_eq!(firsts, vec!["z", "a"]);
        assert!(Beam::new(0).is_err());
    }

    #[test]
    fn config_defaults_and_bounds() {
        let c = RunConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.step_length_s.seconds(), 0.01);
        assert_eq!(c.buffer_threshold_s.seconds(), 15.0);
        assert_eq!(c.chunk_length_s.seconds(), 300.0);
        let bad = RunConfig {
            buffer_threshold_s: TimePoint::new(40.0).unwrap(),
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
