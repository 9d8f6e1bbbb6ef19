//! Reference-guided pruning state machine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_word, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneMode {
    Aligning,
    Tracking,
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    KeepNarrow,
    Skip,
    TriggerFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignFailure;

/// Index of the first reference token whose normalized surface equals that of
/// `first_best`.
pub fn align_reference(first_best: &Token, ref_tokens: &[Token]) -> Result<usize, AlignFailure> {
    let target = normalize_word(&first_best.surface);
    if target.is_empty() {
        return Err(AlignFailure);
    }
    ref_tokens
        .iter()
        .position(|t| t.is_text() && normalize_word(&t.surface) == target)
        .ok_or(AlignFailure)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamPruneController {
    pub ref_tokens: Vec<Token>,
    pub ref_idx: usize,
    pub mode: PruneMode,
    pub full_width: usize,
}

impl BeamPruneController {
    pub fn new(ref_tokens: Vec<Token>, full_width: usize) -> Self {
        BeamPruneController {
            ref_tokens,
            ref_idx: 0,
            mode: PruneMode::Aligning,
            full_width,
        }
    }

    /// Aligning step: returns whether to keep the beam narrow.
    pub fn align(&mut self, first_best: &Token) -> Result<MatchOutcome> {
        self.expect_mode(PruneMode::Aligning)?;
        if first_best.kind != TokenKind::Text {
            return Ok(MatchOutcome::Skip);
        }
        match align_reference(first_best, &self.ref_tokens) {
            Ok(i) => {
                self.ref_idx = i + 1;
                self.mode = PruneMode::Tracking;
                Ok(MatchOutcome::KeepNarrow)
            }
            Err(AlignFailure) => {
                self.mode = PruneMode::Fallback;
                Ok(MatchOutcome::TriggerFallback)
            }
        }
    }

    pub fn match_step(&mut self, best: &Token) -> Result<MatchOutcome> {
        self.expect_mode(PruneMode::Tracking)?;
        if best.kind != TokenKind::Text {
            return Ok(MatchOutcome::Skip);
        }
        // the reference carries its own timestamps and punctuation; they are
        // skipped on that side too
        while self.ref_idx < self.ref_tokens.len() && !self.ref_tokens[self.ref_idx].is_text() {
            self.ref_idx += 1;
        }
        let matched = self
            .ref_tokens
            .get(self.ref_idx)
            .is_some_and(|r| normalize_word(&r.surface) == normalize_word(&best.surface));
        if matched {
            self.ref_idx += 1;
            Ok(MatchOutcome::KeepNarrow)
        } else {
            self.mode = PruneMode::Fallback;
            Ok(MatchOutcome::TriggerFallback)
        }
    }

    fn expect_mode(&self, expected: PruneMode) -> Result<()> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(Error::WrongMode {
                expected,
                actual: self.mode,
            })
        }
    }
}
