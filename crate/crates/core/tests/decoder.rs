use std::sync::Arc;

use proptest::prelude::*;

use ssp_core::costmodel::InputPolicy;
use ssp_core::decoder::{
    beam_search, dtw_path, dtw_timestamps, pruned_beam_search, AttentionMatrix, BeamPruneController, DecodePlan,
    DecodeSession, MatchOutcome, PruneMode, LENGTH_CAP,
};
use ssp_core::model::{ScriptedModel, SpeechModel, Window};
use ssp_core::runner::{execute, prepare};
use ssp_core::scenario::{generate_script, standard_config, standard_scenario, GenParams};
use ssp_core::types::{Token, TimePoint, UtteranceScript};

fn script(words: usize, seed: u64) -> Arc<UtteranceScript> {
    Arc::new(
        generate_script(GenParams {
            words,
            duration_s: 1.0,
            seed,
            stability: 1.0,
        })
        .unwrap(),
    )
}

fn token_soup() -> impl Strategy<Value = Vec<Token>> {
    let tok = prop_oneof![
        prop::sample::select(vec!["ba", "ko", "mi", "tu", "ba."]).prop_map(|w| Token::text(w, -0.1)),
        (0.0f64..30.0).prop_map(|t| Token::timestamp(TimePoint::new(t).unwrap(), -0.2)),
        Just(Token::punctuation(",", -0.3)),
    ];
    prop::collection::vec(tok, 0..14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Stable windows: any reference, previous-round or garbage, leaves the
    /// output equal to full beam search.
    #[test]
    fn pruned_matches_full_beam(seed in 0u64..1000, words in 4usize..30, cut in 0.2f64..0.9, junk in token_soup()) {
        let s = script(words, seed);
        let end = s.total_duration.seconds().min(30.0);
        let m = ScriptedModel::new(s.clone(), seed, 0.0);
        let h = m.encode(Window::new(0.0, end).unwrap(), InputPolicy::PadTo30s, None).unwrap();
        let full = beam_search(&m, &h, &[], 5, LENGTH_CAP).unwrap();

        let earlier = m.encode(Window::new(0.0, (end * cut).max(0.5)).unwrap(), InputPolicy::PadTo30s, None).unwrap();
        let prev = beam_search(&m, &earlier, &[], 5, LENGTH_CAP).unwrap().best.tokens;
        let mut spliced = prev.clone();
        spliced.extend(junk.iter().cloned());
        for reference in [prev, junk, spliced] {
            let r = pruned_beam_search(&m, &h, &[], &reference, 5).unwrap();
            prop_assert_eq!(&r.best.tokens, &full.best.tokens);
            prop_assert_eq!(r.beam_sizes_per_step.len(), r.steps);
            prop_assert_eq!(r.calls_per_step.iter().sum::<usize>(), r.model_calls);
            // an empty reference decodes wide throughout; otherwise once wide,
            // always wide
            if reference.is_empty() {
                prop_assert!(!r.fallback);
            } else if let Some(first_wide) = r.beam_sizes_per_step.iter().position(|&b| b == 5) {
                prop_assert!(r.fallback);
                prop_assert!(r.beam_sizes_per_step[first_wide..].iter().all(|&b| b == 5));
            }
        }
    }

    #[test]
    fn controller_transitions(reference in token_soup(), seen in token_soup()) {
        let mut c = BeamPruneController::new(reference.clone(), 5);
        for t in &seen {
            let before = c.mode;
            let out = match c.mode {
                PruneMode::Aligning => c.align(t).unwrap(),
                PruneMode::Tracking => c.match_step(t).unwrap(),
                PruneMode::Fallback => break,
            };
            prop_assert!(c.ref_idx <= reference.len());
            match (before, c.mode) {
                (PruneMode::Aligning, PruneMode::Aligning) => prop_assert_eq!(out, MatchOutcome::Skip),
                (PruneMode::Tracking, PruneMode::Tracking) => prop_assert!(out != MatchOutcome::TriggerFallback),
                (_, PruneMode::Fallback) => prop_assert_eq!(out, MatchOutcome::TriggerFallback),
                (PruneMode::Aligning, PruneMode::Tracking) => prop_assert_eq!(out, MatchOutcome::KeepNarrow),
                (a, b) => prop_assert!(false, "illegal transition {a:?} -> {b:?}"),
            }
        }
    }

    #[test]
    fn dtw_path_is_monotone(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let mut x = seed | 1;
        let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            (x % 1000) as f64 / 1000.0
        }).collect()).collect();
        let m = AttentionMatrix::from_rows(data).unwrap();
        let p = dtw_path(&m).unwrap();
        prop_assert_eq!(p.cells[0], (0, 0));
        prop_assert_eq!(*p.cells.last().unwrap(), (rows - 1, cols - 1));
        for w in p.cells.windows(2) {
            let (df, dn) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            prop_assert!(matches!((df, dn), (1, 0) | (0, 1) | (1, 1)));
        }
        let ts = dtw_timestamps(&m, 50.0).unwrap();
        prop_assert_eq!(ts.len(), cols);
        prop_assert!(ts.windows(2).all(|p| p[0] <= p[1]));
    }
}

#[test]
fn session_split_equals_one_shot() {
    let s = script(25, 3);
    let m = ScriptedModel::new(s.clone(), 3, 0.3);
    let h = m.encode(Window::new(0.0, 12.0).unwrap(), InputPolicy::PadTo30s, None).unwrap();
    let whole = beam_search(&m, &h, &[], 5, LENGTH_CAP).unwrap();
    let mut session = DecodeSession::new(h.clone(), DecodePlan::Full { width: 5 }, LENGTH_CAP).unwrap();
    for chunk in [1, 7, 3, 1000] {
        session.run_steps(&m, chunk).unwrap();
    }
    assert_eq!(session.finish().unwrap(), whole);
}

/// Rounds that decode at least one word and never fall back need at most 60%
/// of the full-beam calls. An empty window decodes BEG, EOT with a single live
/// hypothesis either way.
#[test]
fn narrow_rounds_save_calls() {
    let setup = prepare(standard_scenario(), &standard_config(), None).unwrap();
    let sim = execute(&setup, false).unwrap();
    let model = ScriptedModel::new(setup.script.clone(), setup.config.seed, setup.config.noise_level);
    let mut clean = 0;
    for t in sim.traces.iter().filter(|t| !t.fallback_triggered && t.raw_tokens.iter().any(Token::is_text)) {
        let w = Window {
            start: t.window_start,
            end: t.window_end,
        };
        let h = model.encode(w, InputPolicy::HushAppend, setup.hush.as_ref()).unwrap();
        let full = beam_search(&model, &h, &[], 5, LENGTH_CAP).unwrap();
        if t.beam_sizes_per_step.iter().all(|&b| b == 1) {
            let ratio = t.model_calls as f64 / full.model_calls as f64;
            assert!(ratio <= 0.6, "round {}: ratio {ratio:.2}", t.round_index);
            clean += 1;
        }
    }
    assert!(clean > 10, "only {clean} clean rounds");
}

#[test]
fn empty_reference_runs_full() {
    assert_eq!(DecodePlan::new(5, true, Some(&[])), DecodePlan::Full { width: 5 });
    assert_eq!(DecodePlan::new(5, false, Some(&[Token::text("a", 0.0)])), DecodePlan::Full { width: 5 });
}
