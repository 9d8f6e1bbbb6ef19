use std::sync::Arc;

use proptest::prelude::*;

use ssp_core::costmodel::InputPolicy;
use ssp_core::hush::train_hush;
use ssp_core::model::{EncodingHandle, ScriptedModel, SpeechModel, Window};
use ssp_core::scenario::{generate_script, GenParams};
use ssp_core::types::{Hypothesis, TokenKind, UtteranceScript};

fn script(words: usize, seed: u64, stability: f64) -> Arc<UtteranceScript> {
    Arc::new(
        generate_script(GenParams {
            words,
            duration_s: 1.0,
            seed,
            stability,
        })
        .unwrap(),
    )
}

fn greedy(model: &ScriptedModel, handle: &EncodingHandle, cap: usize) -> Hypothesis {
    let mut h = Hypothesis::empty();
    while !h.terminated && h.len() < cap {
        let d = model.decode_step(handle, &h).unwrap();
        h.push(d.best().clone()).unwrap();
    }
    h
}

fn text_words(h: &Hypothesis) -> Vec<String> {
    h.tokens.iter().filter(|t| t.is_text()).map(|t| t.surface.clone()).collect()
}

/// A window of at most 30 s inside the script, from fractions of its length.
fn window(s: &UtteranceScript, a: f64, len: f64) -> Window {
    let total = s.total_duration.seconds();
    let start = (a * total).min(total - 0.5);
    let end = (start + 0.5 + len * 29.5).min(total);
    Window::new(start, end).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identical_inputs_identical_outputs(seed in 0u64..500, noise in 0.0f64..=1.0, a in 0.0f64..1.0, len in 0.0f64..1.0) {
        let s = script(30, seed, 0.7);
        let w = window(&s, a, len);
        let m1 = ScriptedModel::new(s.clone(), seed, noise);
        let m2 = ScriptedModel::new(s.clone(), seed, noise);
        let h1 = m1.encode(w, InputPolicy::PadTo30s, None).unwrap();
        let h2 = m2.encode(w, InputPolicy::PadTo30s, None).unwrap();
        prop_assert_eq!(&h1, &h2);
        let g = greedy(&m1, &h1, 200);
        prop_assert_eq!(&g, &greedy(&m2, &h2, 200));
        let attn1 = m1.decode_cross_attention(&h1, &g.tokens).unwrap();
        let attn2 = m2.decode_cross_attention(&h2, &g.tokens).unwrap();
        prop_assert_eq!(attn1, attn2);
    }

    #[test]
    fn settled_words_decode_to_truth(seed in 0u64..500, stability in 0.0f64..=1.0, a in 0.0f64..1.0, len in 0.0f64..1.0) {
        let s = script(40, seed, stability);
        let w = window(&s, a, len);
        let m = ScriptedModel::new(s.clone(), seed, 0.0);
        let g = greedy(&m, &m.encode(w, InputPolicy::PadTo30s, None).unwrap(), 448);
        let (ws, we) = (w.start.seconds(), w.end.seconds());
        let settled: Vec<&str> = s.words.iter()
            .filter(|x| x.start.seconds() >= ws && x.end.seconds() <= we - 0.3)
            .map(|x| x.text.as_str())
            .collect();
        // settled words appear, in order, in the greedy output
        let out = text_words(&g);
        let mut it = out.iter();
        for word in settled {
            prop_assert!(it.any(|o| o == word), "missing {word} in {out:?}");
        }
    }

    #[test]
    fn timestamps_shift_with_window_start(seed in 0u64..500, a in 0.0f64..0.5, shift in 0.05f64..3.0) {
        let s = script(30, seed, 1.0);
        let total = s.total_duration.seconds();
        let start = a * (total - 10.0).max(0.0);
        let w1 = Window::new(start, (start + 25.0).min(total)).unwrap();
        let w2 = Window::new(start + shift, (start + 25.0).min(total)).unwrap();
        let m = ScriptedModel::new(s.clone(), seed, 0.0);
        let times = |w: Window| -> Vec<(String, f64)> {
            let g = greedy(&m, &m.encode(w, InputPolicy::PadTo30s, None).unwrap(), 448);
            g.tokens.windows(2)
                .filter(|p| p[0].is_text() && p[1].kind == TokenKind::Timestamp)
                .map(|p| (p[0].surface.clone(), p[1].time.unwrap().seconds()))
                .collect()
        };
        let (t1, t2) = (times(w1), times(w2));
        // words repeat in generated scripts, so match on any occurrence
        let mut shared = 0;
        for (word, t) in &t2 {
            let same: Vec<f64> = t1.iter().filter(|(x, _)| x == word).map(|(_, u)| *u).collect();
            if !same.is_empty() {
                prop_assert!(same.iter().any(|u| (u - t - shift).abs() < 1e-9), "{word}: {same:?} vs {t}");
                shared += 1;
            }
        }
        prop_assert!(shared > 0 || t2.is_empty());
    }

    #[test]
    fn padded_and_hushed_rollouts_terminate(seed in 0u64..500, noise in 0.0f64..=0.5, a in 0.0f64..1.0, len in 0.0f64..1.0) {
        let s = script(45, seed, 0.8);
        let w = window(&s, a, len);
        let m = ScriptedModel::new(s.clone(), seed, noise);
        let in_window = s.words.iter()
            .filter(|x| x.end.seconds() > w.start.seconds() && x.start.seconds() < w.end.seconds())
            .count();
        let hush = train_hush(seed, 64, 200, 0.25).unwrap().hush;
        for (policy, h) in [(InputPolicy::PadTo30s, None), (InputPolicy::HushAppend, Some(&hush))] {
            let g = greedy(&m, &m.encode(w, policy, h).unwrap(), 448);
            prop_assert!(g.terminated);
            prop_assert!(g.len() <= 2 * in_window + 8, "{} steps for {in_window} words", g.len());
        }
    }
}
