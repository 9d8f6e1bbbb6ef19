//! Scenario and config files, plus the synthetic scenario generator.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RunConfig, ScriptWord, TimePoint, UtteranceScript, SAMPLE_RATE};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScenarioFile {
    version: u32,
    sample_rate: u32,
    seed: u64,
    total_duration_s: f64,
    words: Vec<WordRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WordRecord {
    text: String,
    start_s: f64,
    end_s: f64,
    stability: f64,
}

pub fn encode_scenario(script: &UtteranceScript) -> Result<String> {
    let file = ScenarioFile {
        version: SCENARIO_VERSION,
        sample_rate: script.sample_rate,
        seed: script.seed,
        total_duration_s: script.total_duration.seconds(),
        words: script
            .words
            .iter()
            .map(|w| WordRecord {
                text: w.text.clone(),
                start_s: w.start.seconds(),
                end_s: w.end.seconds(),
                stability: w.stability,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

/// Parses a scenario; structural problems are errors, rule violations are not
/// checked here (see [`crate::types::validate_script`]).
pub fn decode_scenario(text: &str) -> Result<UtteranceScript> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    if file.version != SCENARIO_VERSION {
        return Err(Error::Format(format!(
            "unsupported scenario version {}",
            file.version
        )));
    }
    let words = file
        .words
        .into_iter()
        .map(|w| {
            Ok(ScriptWord {
                text: w.text,
                start: TimePoint::new(w.start_s)?,
                end: TimePoint::new(w.end_s)?,
                stability: w.stability,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UtteranceScript {
        sample_rate: file.sample_rate,
        words,
        total_duration: TimePoint::new(file.total_duration_s)?,
        seed: file.seed,
    })
}

pub fn read_scenario(path: &Path) -> Result<UtteranceScript> {
    decode_scenario(&std::fs::read_to_string(path)?)
}

pub fn write_scenario(path: &Path, script: &UtteranceScript) -> Result<()> {
    std::fs::write(path, encode_scenario(script)?)?;
    Ok(())
}

pub fn encode_config(config: &RunConfig) -> Result<String> {
    Ok(toml::to_string(config)?)
}

pub fn decode_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    decode_config(&std::fs::read_to_string(path)?)
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "st", "tr", "pl",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "", "n", "m", "l", "r", "s", "t"];

/// A pronounceable pseudo-word. The alphabet excludes `x`, `q`, and `z`, which
/// the scripted model reserves for corrupted variants.
pub(crate) fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    let syllables = rng.random_range(1..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
        w.push_str(VOWELS[rng.random_range(0..VOWELS.len())]);
    }
    w.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    pub words: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub stability: f64,
}

/// Word lengths uniform in [0.2, 0.6] s, inter-word gaps in [0.05, 0.3] s, and
/// a sentence pause of [1.0, 1.4] s every 10 to 18 words.
pub fn generate_script(params: GenParams) -> Result<UtteranceScript> {
    if params.words == 0 {
        return Err(Error::InvalidValue("word count must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&params.stability) {
        return Err(Error::InvalidValue("stability must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut words = Vec::with_capacity(params.words);
    let mut t = 0.3_f64;
    let mut until_pause = rng.random_range(10..=18);
    for _ in 0..params.words {
        let len = rng.random_range(0.2..=0.6);
        let start = quantize(t);
        let end = quantize(t + len);
        words.push(ScriptWord {
            text: pseudo_word(&mut rng),
            start: TimePoint::new(start)?,
            end: TimePoint::new(end)?,
            stability: params.stability,
        });
        until_pause -= 1;
        let gap = if until_pause == 0 {
            until_pause = rng.random_range(10..=18);
            rng.random_range(1.0..=1.4)
        } else {
            rng.random_range(0.05..=0.3)
        };
        t = end + gap;
    }
    let last_end = words.last().map(|w| w.end.seconds()).unwrap_or(0.0);
    let total = quantize(params.duration_s.max(last_end + 0.3));
    UtteranceScript {
        sample_rate: SAMPLE_RATE,
        words,
        total_duration: TimePoint::new(total)?,
        seed: params.seed,
    }
    .validated()
}

/// Millisecond grid keeps file output short and exact.
fn quantize(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// 60 s scenario with per-word stability 0.8, seed 42.
pub fn standard_scenario() -> UtteranceScript {
    generate_script(GenParams {
        words: STANDARD_WORDS,
        duration_s: 60.0,
        seed: 42,
        stability: 0.8,
    })
    .expect("standard scenario parameters are valid")
}

pub const STANDARD_WORDS: usize = 90;

/// Default config plus noise 0.1 and seed 42.
pub fn standard_config() -> RunConfig {
    RunConfig {
        noise_level: 0.1,
        seed: 42,
        ..RunConfig::default()
    }
}
