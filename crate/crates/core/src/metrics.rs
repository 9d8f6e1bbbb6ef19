//! WER, per-word latency, and beam statistics.

use serde::{Deserialize, Serialize};

use crate::costmodel::CostModel;
use crate::error::{Error, Result};
use crate::streaming::ConfirmedWord;
use crate::types::{normalize_word, RoundTrace, UtteranceScript};

/// Word-level Levenshtein distance.
pub fn edit_distance<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x.as_ref() != y.as_ref());
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference transcript"));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

/// Pairs `(ref_index, hyp_index)` of exact matches on one minimal edit
/// alignment.
pub fn aligned_matches<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Vec<(usize, usize)> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
        if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
            if same {
                pairs.push((i - 1, j - 1));
            }
            i -= 1;
            j -= 1;
        } else if d[i][j] == d[i - 1][j] + 1 {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    pairs.reverse();
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub count: usize,
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// `(word, utter_end_s, emit_wall_ms)` triples; a word emitted before it was
/// uttered is an error.
pub fn per_word_latency(confirmed: &[(String, f64, f64)]) -> Result<LatencyStats> {
    if confirmed.is_empty() {
        return Err(Error::Empty("confirmed words"));
    }
    let mut lat = Vec::with_capacity(confirmed.len());
    for (word, utter_end, emit) in confirmed {
        let l = emit - utter_end * 1000.0;
        if l < -1e-6 {
            return Err(Error::NegativeLatency {
                word: word.clone(),
                latency_ms: l,
            });
        }
        lat.push(l.max(0.0));
    }
    lat.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        mean_ms: lat.iter().sum::<f64>() / lat.len() as f64,
        p50_ms: percentile(&lat, 50.0),
        p90_ms: percentile(&lat, 90.0),
        count: lat.len(),
    })
}

/// Script end times for confirmed words that match the script exactly after
/// alignment; mismatched words have no utterance time.
pub fn latency_samples(script: &UtteranceScript, confirmed: &[ConfirmedWord]) -> Vec<(String, f64, f64)> {
    let reference = script.normalized_words();
    let hyp: Vec<String> = confirmed.iter().map(|c| normalize_word(&c.word)).collect();
    aligned_matches(&reference, &hyp)
        .into_iter()
        .map(|(r, h)| (hyp[h].clone(), script.words[r].end.seconds(), confirmed[h].emit_wall_ms))
        .collect()
}

/// `(fraction of steps narrower than full width, mean width)`.
pub fn beam_stats(traces: &[RoundTrace], full_width: usize) -> (f64, f64) {
    let sizes: Vec<usize> = traces.iter().flat_map(|t| t.beam_sizes_per_step.iter().copied()).collect();
    if sizes.is_empty() {
        return (0.0, full_width as f64);
    }
    let reduced = sizes.iter().filter(|&&s| s < full_width).count();
    (
        reduced as f64 / sizes.len() as f64,
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wer: f64,
    pub avg_word_latency_ms: f64,
    pub p50_word_latency_ms: f64,
    pub p90_word_latency_ms: f64,
    pub beam_reduced_round_fraction: f64,
    pub avg_beam_size: f64,
    pub total_encode_gflop: f64,
    pub total_decode_steps: usize,
    pub fallback_rate: f64,
    pub total_model_calls: usize,
}

impl MetricsReport {
    pub fn compute(
        script: &UtteranceScript,
        confirmed: &[ConfirmedWord],
        traces: &[RoundTrace],
        cost: &CostModel,
        full_width: usize,
    ) -> Result<Self> {
        let reference = script.normalized_words();
        let hyp: Vec<String> = confirmed.iter().map(|c| normalize_word(&c.word)).collect();
        let wer = if reference.is_empty() {
            hyp.len() as f64
        } else {
            wer(&reference, &hyp)?
        };
        let samples = latency_samples(script, confirmed);
        let lat = if samples.is_empty() {
            LatencyStats {
                mean_ms: 0.0,
                p50_ms: 0.0,
                p90_ms: 0.0,
                count: 0,
            }
        } else {
            per_word_latency(&samples)?
        };
        let (reduced, avg) = beam_stats(traces, full_width);
        let rounds = traces.len().max(1) as f64;
        Ok(MetricsReport {
            wer,
            avg_word_latency_ms: lat.mean_ms,
            p50_word_latency_ms: lat.p50_ms,
            p90_word_latency_ms: lat.p90_ms,
            beam_reduced_round_fraction: reduced,
            avg_beam_size: avg,
            total_encode_gflop: traces.iter().map(|t| cost.encoder_flops(t.n_audio_tokens)).sum(),
            total_decode_steps: traces.iter().map(|t| t.beam_sizes_per_step.len()).sum(),
            fallback_rate: traces.iter().filter(|t| t.fallback_triggered).count() as f64 / rounds,
            total_model_calls: traces.iter().map(|t| t.model_calls).sum(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer(&s(&["a", "b"]), &s(&["a", "b"])).unwrap(), 0.0);
        assert!((wer(&s(&["a", "b", "c"]), &s(&["a", "x", "c"])).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(wer(&s(&["a", "b", "c", "d"]), &s(&["a", "c", "d"])).unwrap(), 0.25);
        assert!(wer(&s(&[]), &s(&["a"])).is_err());
        assert_eq!(wer(&s(&["a"]), &s(&["b", "c", "d"])).unwrap(), 3.0);
    }

    #[test]
    fn latency_examples() {
        let one = per_word_latency(&[("w".into(), 2.0, 3100.0)]).unwrap();
        assert!((one.mean_ms - 1100.0).abs() < 1e-9);
        assert_eq!(one.mean_ms, one.p50_ms);
        assert_eq!(one.p50_ms, one.p90_ms);
        assert!(matches!(
            per_word_latency(&[("w".into(), 2.0, 1000.0)]),
            Err(Error::NegativeLatency { .. })
        ));
    }

    #[test]
    fn percentiles_nearest_rank() {
        let data: Vec<(String, f64, f64)> = (1..=10).map(|i| ("w".to_string(), 0.0, i as f64 * 10.0)).collect();
        let st = per_word_latency(&data).unwrap();
        assert_eq!(st.p50_ms, 50.0);
        assert_eq!(st.p90_ms, 90.0);
        assert_eq!(st.mean_ms, 55.0);
    }

    #[test]
    fn matches_follow_alignment() {
        let r = s(&["a", "b", "c", "d"]);
        let h = s(&["a", "x", "c", "d", "e"]);
        assert_eq!(aligned_matches(&r, &h), vec![(0, 0), (2, 2), (3, 3)]);
    }

    fn trace_with(sizes: Vec<usize>) -> RoundTrace {
        RoundTrace {
            round_index: 0,
            window_start: crate::types::TimePoint::ZERO,
            window_end: crate::types::TimePoint::new(1.0).unwrap(),
            raw_tokens: vec![],
            confirmed_delta: vec![],
            beam_sizes_per_step: sizes,
            fallback_triggered: false,
            stage_timings: Default::default(),
            model_calls: 0,
            n_audio_tokens: 0,
            prompt_len: 0,
            hit_cap: false,
            snapshot_wall_ms: 0.0,
            finalize_wall_ms: 0.0,
        }
    }

    #[test]
    fn beam_stat_extremes() {
        assert_eq!(beam_stats(&[trace_with(vec![1; 7])], 5), (1.0, 1.0));
        assert_eq!(beam_stats(&[trace_with(vec![5; 7])], 5), (0.0, 5.0));
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from), 0..8)
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(x in words(), y in words(), z in words()) {
            prop_assert_eq!(edit_distance(&x, &x), 0);
            prop_assert_eq!(edit_distance(&x, &y), edit_distance(&y, &x));
            prop_assert!(edit_distance(&x, &z) <= edit_distance(&x, &y) + edit_distance(&y, &z));
        }

        #[test]
        fn matches_bounded_by_distance(x in words(), y in words()) {
            // every unmatched position on the longer side costs an edit
            let m = aligned_matches(&x, &y).len();
            prop_assert!(m <= x.len().min(y.len()));
            prop_assert!(edit_distance(&x, &y) >= x.len().max(y.len()) - m);
        }
    }
}
