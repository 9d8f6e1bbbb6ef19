//! Encoder FLOPs accounting and input policies.
//!
//! Per layer the encoder costs `a·n²·d + b·n·d²` FLOPs for `n` audio tokens
//! and model width `d`. With `a = 2` (attention scores and context) and
//! `b = 12` (QKV/output projections plus a 4d feed-forward), a 1024-wide,
//! 24-layer encoder lands at roughly 254 GFLOP for 750 tokens and 564 GFLOP
//! for a full 1500-token window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Audio tokens per second of encoder input.
pub const TOKENS_PER_SECOND: f64 = 50.0;
/// Longest input the model accepts.
pub const MAX_INPUT_S: f64 = 30.0;
pub const PADDED_TOKENS: usize = 1500;
pub const HUSH_SECONDS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPolicy {
    #[serde(rename = "pad_to_30s")]
    PadTo30s,
    HushAppend,
    NoPad,
}

impl std::str::FromStr for InputPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pad_to_30s" | "pad" => Ok(InputPolicy::PadTo30s),
            "hush_append" | "hush" => Ok(InputPolicy::HushAppend),
            "no_pad" | "none" => Ok(InputPolicy::NoPad),
            other => Err(Error::InvalidValue(format!("unknown input policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub attn_coeff: f64,
    pub linear_coeff: f64,
}

impl CostModel {
    pub fn new(d_model: usize, enc_layers: usize, dec_layers: usize) -> Result<Self> {
        if d_model == 0 || enc_layers == 0 || dec_layers == 0 {
            return Err(Error::InvalidValue("model dimensions must be positive".into()));
        }
        Ok(CostModel {
            d_model,
            enc_layers,
            dec_layers,
            attn_coeff: 2.0,
            linear_coeff: 12.0,
        })
    }

    /// d = 1024, 24 encoder and 24 decoder layers.
    pub fn whisper_medium() -> Self {
        CostModel::new(1024, 24, 24).expect("static shape")
    }

    pub fn layer_flops(&self, n: usize) -> f64 {
        let n = n as f64;
        let d = self.d_model as f64;
        self.attn_coeff * n * n * d + self.linear_coeff * n * d * d
    }

    /// Encoder cost in GFLOP.
    pub fn encoder_flops(&self, n_audio_tokens: usize) -> f64 {
        self.enc_layers as f64 * self.layer_flops(n_audio_tokens) / 1e9
    }

    /// Full-window encoder cost relative to the unpadded input.
    pub fn padding_overhead_ratio(&self, duration_s: f64) -> Result<f64> {
        check_duration(duration_s)?;
        let n = effective_tokens(InputPolicy::NoPad, duration_s)?;
        Ok(self.encoder_flops(PADDED_TOKENS) / self.encoder_flops(n))
    }

    /// Full-window encoder cost relative to the hushed input.
    pub fn hush_reduction_ratio(&self, duration_s: f64) -> Result<f64> {
        check_duration(duration_s)?;
        let n = effective_tokens(InputPolicy::HushAppend, duration_s)?;
        Ok(self.encoder_flops(PADDED_TOKENS) / self.encoder_flops(n))
    }
}

fn check_duration(duration_s: f64) -> Result<()> {
    if !(duration_s > 0.0 && duration_s <= MAX_INPUT_S) {
        return Err(Error::InvalidValue(format!(
            "duration must be in (0, 30] s, got {duration_s}"
        )));
    }
    Ok(())
}

/// Number of encoder tokens for `audio_duration_s` of audio under `policy`.
pub fn effective_tokens(policy: InputPolicy, audio_duration_s: f64) -> Result<usize> {
    if !(0.0..=MAX_INPUT_S).contains(&audio_duration_s) {
        return Err(Error::InvalidValue(format!(
            "duration must be in [0, 30] s, got {audio_duration_s}"
        )));
    }
    Ok(match policy {
        InputPolicy::PadTo30s => PADDED_TOKENS,
        // round((t + 0.5)·50) written so the hush always adds exactly 25 tokens
        InputPolicy::HushAppend => {
            (audio_duration_s * TOKENS_PER_SECOND).round() as usize
                + (HUSH_SECONDS * TOKENS_PER_SECOND) as usize
        }
        InputPolicy::NoPad => (audio_duration_s * TOKENS_PER_SECOND).round() as usize,
    })
}
