//! Hush words: the short learned segment appended to an input so the model
//! stops cleanly without padding to the full 30 s window.
//!
//! The mock backend judges a hush word by its alignment with a hidden
//! direction `w` derived from the backend seed:
//! `validity = sigmoid(κ·⟨h, w⟩ / |h|)` with `κ = 8`. The trainer
//! maximizes that score by derivative-free ascent inside the `[-1, 1]` sample
//! box, standing in for maximizing the likelihood of the target transcript
//! `y0[1:]` given the hushed audio `x ⊕ h` and the shifted target `y0[:-1]`.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::types::{SpecialToken, Token};

/// 0.5 s at 16 kHz.
pub const HUSH_SAMPLES: usize = 8000;
pub const VALIDITY_GAIN: f64 = 8.0;
/// Below this the hush fails to stop decoding.
pub const VALID_THRESHOLD: f64 = 0.9;
pub const HUSH_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HushWord {
    pub samples: Vec<f32>,
    /// Backend seed the hush was trained against.
    pub seed: u64,
}

impl HushWord {
    pub fn new(samples: Vec<f32>, seed: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidValue("hush word needs at least 2 samples".into()));
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidValue("hush samples must lie in [-1, 1]".into()));
        }
        Ok(HushWord { samples, seed })
    }

    pub fn dim(&self) -> usize {
        self.samples.len()
    }

    /// Validity under the backend identified by `backend_seed`.
    pub fn validity_for(&self, backend_seed: u64) -> f64 {
        let w = hidden_direction(backend_seed, self.dim());
        hush_validity(&self.samples, &w).expect("dimensions agree by construction")
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&HUSH_FILE_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim() as u32).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for s in &self.samples {
            out.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != HUSH_FILE_VERSION {
            return Err(Error::Format(format!("unsupported hush file version {version}")));
        }
        input.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        let mut raw = vec![0u8; dim * 4];
        input.read_exact(&mut raw)?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in hush file", rest.len())));
        }
        let samples = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        HushWord::new(samples, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + 4 * self.dim());
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        HushWord::read_from(std::fs::File::open(path)?)
    }
}

/// Unit-norm Gaussian direction, deterministic in `(seed, dim)`.
pub fn hidden_direction(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4855_5348_5f44_4952);
    let mut w: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        w.iter_mut().for_each(|x| *x /= norm);
    }
    w
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sigmoid(8·⟨samples, w⟩ / |samples|)`; 0.5 for the zero vector.
pub fn hush_validity(samples: &[f32], w: &[f64]) -> Result<f64> {
    if samples.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: samples.len(),
        });
    }
    let mut dot = 0.0;
    let mut norm2 = 0.0;
    for (&s, &wi) in samples.iter().zip(w) {
        let s = s as f64;
        dot += s * wi;
        norm2 += s * s;
    }
    Ok(validity_from_parts(dot, norm2))
}

fn validity_from_parts(dot: f64, norm2: f64) -> f64 {
    if norm2 <= 0.0 {
        return 0.5;
    }
    sigmoid(VALIDITY_GAIN * dot / norm2.sqrt())
}

/// Best validity reachable inside the sample box: the scaled direction
/// `w / max|w_i|` has cosine 1 with `w`.
pub fn optimal_validity() -> f64 {
    sigmoid(VALIDITY_GAIN)
}

/// `[SOT, LANG, TASK, words…, EOT]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTarget {
    pub tokens: Vec<Token>,
}

impl TrainingTarget {
    pub fn for_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut tokens = vec![
            Token::special(SpecialToken::Sot, 0.0),
            Token::special(SpecialToken::Lang, 0.0),
            Token::special(SpecialToken::Task, 0.0),
        ];
        tokens.extend(words.iter().map(|w| Token::text(w.as_ref(), 0.0)));
        tokens.push(Token::special(SpecialToken::Eot, 0.0));
        TrainingTarget { tokens }
    }

    pub fn is_well_formed(&self) -> bool {
        use crate::types::TokenKind::Special;
        let kinds: Vec<_> = self.tokens.iter().map(|t| t.kind).collect();
        kinds.len() >= 4
            && kinds[..3]
                == [
                    Special(SpecialToken::Sot),
                    Special(SpecialToken::Lang),
                    Special(SpecialToken::Task),
                ]
            && kinds.last() == Some(&Special(SpecialToken::Eot))
    }

    /// Teacher-forcing input, `y0[:-1]`.
    pub fn decoder_input(&self) -> &[Token] {
        &self.tokens[..self.tokens.len() - 1]
    }

    /// Prediction labels, `y0[1:]`.
    pub fn labels(&self) -> &[Token] {
        &self.tokens[1..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerSettings {
    pub iterations: usize,
    /// Initial move length in sample units (max-norm).
    pub step_size: f64,
    /// Half-width of the finite-difference probe.
    pub probe: f64,
    /// Step halvings tried per iteration before giving up on it.
    pub max_backtracks: usize,
}

impl Default for TrainerSettings {
    fn default() -> Self {
        TrainerSettings {
            iterations: 500,
            step_size: 0.25,
            probe: 1e-3,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub hush: HushWord,
    pub validity: f64,
    /// Validity after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Train from silence.
pub fn train_hush(backend_seed: u64, dim: usize, iterations: usize, step_size: f64) -> Result<TrainingReport> {
    if dim < 2 {
        return Err(Error::InvalidValue("hush dimension must be >= 2".into()));
    }
    let settings = TrainerSettings {
        iterations,
        step_size,
        ..TrainerSettings::default()
    };
    train_hush_from(vec![0.0; dim], backend_seed, settings)
}

/// Two-point finite-difference ascent on the validity score, projected onto
/// the `[-1, 1]` box, accepting only strict improvements.
pub fn train_hush_from(init: Vec<f32>, backend_seed: u64, settings: TrainerSettings) -> Result<TrainingReport> {
    if init.len() < 2 {
        return Err(Error::InvalidValue("hush dimension must be >= 2".into()));
    }
    if settings.iterations == 0 {
        return Err(Error::InvalidValue("iterations must be >= 1".into()));
    }
    let dim = init.len();
    let w = hidden_direction(backend_seed, dim);
    let mut x: Vec<f64> = init.iter().map(|&v| (v as f64).clamp(-1.0, 1.0)).collect();
    let mut dot: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
    let mut norm2: f64 = x.iter().map(|a| a * a).sum();
    let mut current = validity_from_parts(dot, norm2);
    let mut history = vec![current];
    let mut step = settings.step_size;
    let c = settings.probe;
    let mut grad = vec![0.0; dim];
    let mut candidate = vec![0.0; dim];

    for _ in 0..settings.iterations {
        // perturbing one coordinate shifts the dot product by ±c·w_i and the
        // squared norm by ±2c·x_i + c², so each probe is O(1)
        let mut gmax: f64 = 0.0;
        for i in 0..dim {
            let up = validity_from_parts(dot + c * w[i], norm2 + 2.0 * c * x[i] + c * c);
            let down = validity_from_parts(dot - c * w[i], norm2 - 2.0 * c * x[i] + c * c);
            grad[i] = (up - down) / (2.0 * c);
            gmax = gmax.max(grad[i].abs());
        }
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let mut accepted = false;
        for _ in 0..=settings.max_backtracks {
            let mut cdot = 0.0;
            let mut cnorm2 = 0.0;
            for i in 0..dim {
                let v = (x[i] + step * grad[i] / gmax).clamp(-1.0, 1.0);
                candidate[i] = v;
                cdot += v * w[i];
                cnorm2 += v * v;
            }
            let value = validity_from_parts(cdot, cnorm2);
            if value > current {
                std::mem::swap(&mut x, &mut candidate);
                dot = cdot;
                norm2 = cnorm2;
                current = value;
                history.push(current);
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let samples = x.iter().map(|&v| v as f32).collect();
    let hush = HushWord::new(samples, backend_seed)?;
    // report the score of the stored f32 samples
    let validity = hush_validity(&hush.samples, &w)?;
    Ok(TrainingReport {
        hush,
        validity,
        history,
    })
}
