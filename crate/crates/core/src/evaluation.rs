//! Offline metrics (BLEU up to bigrams, modified slot-error-rate) and
//! aggregation of per-seed reports.

use crate::corpus::Dialogue;
use crate::decoder::DecodeMode;
use crate::error::Result;
use crate::model::Model;
use crate::rng;
use crate::simulator::{mean, std_dev, SlotInventory, UserProfile};
use crate::tape::Tape;
use crate::templates::SlotValues;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Sentence BLEU: geometric mean of clipped modified n-gram precisions
/// (n = 1..=max_n) times the brevity penalty, no smoothing. Orders longer
/// than the candidate are skipped so that BLEU(x, {x}) = 1; any order with
/// zero matches zeroes the score. An empty candidate scores 0.
pub fn bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    assert!(!references.is_empty(), "bleu needs at least one reference");
    assert!(max_n >= 1, "bleu needs max_n >= 1");
    if candidate.is_empty() {
        return 0.0;
    }

    let mut log_precision_sum = 0.0;
    let mut orders_used = 0usize;
    for n in 1..=max_n.min(candidate.len()) {
        let cand_counts = ngram_counts(candidate, n);
        let total: usize = cand_counts.values().sum();
        let mut clipped = 0usize;
        for (gram, count) in &cand_counts {
            let max_ref = references
                .iter()
                .map(|r| *ngram_counts(r, n).get(gram).unwrap_or(&0))
                .max()
                .unwrap_or(0);
            clipped += (*count).min(max_ref);
        }
        if clipped == 0 {
            return 0.0;
        }
        log_precision_sum += (clipped as f64 / total as f64).ln();
        orders_used += 1;
    }

    // Closest reference length; ties prefer the shorter reference.
    let c = candidate.len() as f64;
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| ((len as i64 - candidate.len() as i64).abs(), len))
        .unwrap() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * (log_precision_sum / orders_used as f64).exp()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Modified slot-error-rate: the fraction of slot values appearing in the
/// generated sentence that contradict the user's preference. Addresses count
/// as whole contiguous token sequences. Returns None when the sentence
/// mentions no slot value at all (excluded from averages).
pub fn slot_error_rate(
    generated: &[String],
    prefs: &SlotValues,
    inventory: &SlotInventory,
) -> Option<f64> {
    let mut total = 0usize;
    let mut wrong = 0usize;

    let single_groups: [(&[String], &String); 3] = [
        (&inventory.types, &prefs.coffee_type),
        (&inventory.temperatures, &prefs.temperature),
        (&inventory.sizes, &prefs.size),
    ];
    for tok in generated {
        for (pool, preferred) in single_groups {
            if pool.contains(tok) {
                total += 1;
                if tok != preferred {
                    wrong += 1;
                }
            }
        }
    }

    for addr in &inventory.addresses {
        if addr.is_empty() {
            continue;
        }
        let mut start = 0usize;
        while start + addr.len() <= generated.len() {
            if &generated[start..start + addr.len()] == addr.as_slice() {
                total += 1;
                if addr != &prefs.address {
                    wrong += 1;
                }
                start += addr.len();
            } else {
                start += 1;
            }
        }
    }

    (total > 0).then(|| wrong as f64 / total as f64)
}

/// Offline metrics of one (model, seed): mean sentence BLEU and mean defined
/// slot-error-rate over sampled responses for every test turn.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OfflineReport {
    pub bleu: f64,
    pub slot_error_rate: f64,
    pub turns_scored: usize,
    pub slot_sentences: usize,
}

/// For every turn of every test dialogue, condition on the ground-truth
/// history, draw `n_samples` responses, and average BLEU against the logged
/// response and slot-error-rate against the user's preferred order.
pub fn evaluate_offline(
    model: &Model,
    test: &[Dialogue],
    profiles: &[UserProfile],
    n_samples: usize,
    mode: DecodeMode,
    seed: u64,
) -> Result<OfflineReport> {
    let inventory = SlotInventory::from_profiles(profiles);
    let prefs_by_user: HashMap<&str, SlotValues> = profiles
        .iter()
        .map(|p| (p.user_id.as_str(), p.favorite_values()))
        .collect();

    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = test
        .par_iter()
        .enumerate()
        .map(|(d_idx, dialogue)| {
            let view = model.view(&dialogue.user_id)?;
            let prefs = prefs_by_user
                .get(dialogue.user_id.as_str())
                .unwrap_or_else(|| panic!("no profile for {}", dialogue.user_id));
            let mut rng = rng::derive(seed, &[4, d_idx as u64]);
            let mut bleus = Vec::new();
            let mut sers = Vec::new();
            let mut tape = Tape::new();
            let mut thread = model.context_begin(&mut tape);
            for turn in &dialogue.turns {
                let x_ids = model.encode_tokens(&turn.x);
                let y_ids = model.encode_tokens(&turn.y);
                let (h_ctx, h_init) = model.context_question(&mut tape, &view, &mut thread, &x_ids);
                let mut turn_bleu = 0.0;
                for _ in 0..n_samples {
                    let decoded =
                        model.decode_turn(&mut tape, &view, h_ctx, h_init, mode, &mut rng);
                    let tokens = model.vocab.decode_all(&decoded.words);
                    turn_bleu += bleu(&tokens, std::slice::from_ref(&turn.y), 2);
                    if let Some(ser) = slot_error_rate(&tokens, prefs, &inventory) {
                        sers.push(ser);
                    }
                }
                bleus.push(turn_bleu / n_samples.max(1) as f64);
                model.context_response(&mut tape, &view, &mut thread, &y_ids);
            }
            Ok((bleus, sers))
        })
        .collect();

    let mut bleus = Vec::new();
    let mut sers = Vec::new();
    for row in rows {
        let (b, s) = row?;
        bleus.extend(b);
        sers.extend(s);
    }
    Ok(OfflineReport {
        bleu: mean(&bleus),
        slot_error_rate: mean(&sers),
        turns_scored: bleus.len(),
        slot_sentences: sers.len(),
    })
}

/// One (model, seed)'s metric values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub bleu: f64,
    pub slot_error_rate: f64,
    pub mean_reward: Option<f64>,
    pub success_rate: Option<f64>,
}

/// Mean and (for 2+ seeds) sample standard deviation of one metric.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: Option<f64>,
}

fn aggregate(values: &[f64]) -> Aggregate {
    Aggregate {
        mean: mean(values),
        std: (values.len() >= 2).then(|| std_dev(values)),
    }
}

/// Per-model metric report across seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub per_seed: Vec<SeedMetrics>,
    pub bleu: Aggregate,
    pub slot_error_rate: Aggregate,
    pub mean_reward: Option<Aggregate>,
    pub success_rate: Option<Aggregate>,
}

/// Aggregate per-seed metrics into means and sample standard deviations.
pub fn aggregate_seeds(model: &str, per_seed: &[SeedMetrics]) -> MetricReport {
    assert!(!per_seed.is_empty(), "aggregate_seeds needs >= 1 report");
    let collect = |f: fn(&SeedMetrics) -> f64| -> Vec<f64> { per_seed.iter().map(f).collect() };
    let rewards: Vec<f64> = per_seed.iter().filter_map(|m| m.mean_reward).collect();
    let successes: Vec<f64> = per_seed.iter().filter_map(|m| m.success_rate).collect();
    MetricReport {
        model: model.to_string(),
        per_seed: per_seed.to_vec(),
        bleu: aggregate(&collect(|m| m.bleu)),
        slot_error_rate: aggregate(&collect(|m| m.slot_error_rate)),
        mean_reward: (!rewards.is_empty()).then(|| aggregate(&rewards)),
        success_rate: (!successes.is_empty()).then(|| aggregate(&successes)),
    }
}

fn fmt_aggregate(a: Option<&Aggregate>) -> String {
    match a {
        Some(Aggregate { mean, std: Some(s) }) => format!("{mean:.4} +/- {s:.4}"),
        Some(Aggregate { mean, std: None }) => format!("{mean:.4}"),
        None => "-".to_string(),
    }
}

/// Human-readable results table, one row per model.
pub fn render_table(reports: &[MetricReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>18} {:>18} {:>18} {:>18}\n",
        "Model", "BLEU", "Reward", "SuccessRate", "SlotError"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:>18} {:>18} {:>18} {:>18}\n",
            r.model,
            fmt_aggregate(Some(&r.bleu)),
            fmt_aggregate(r.mean_reward.as_ref()),
            fmt_aggregate(r.success_rate.as_ref()),
            fmt_aggregate(Some(&r.slot_error_rate)),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_identity_is_one() {
        let x = toks("so one tall hot latte right ?");
        assert!((bleu(&x, &[x.clone()], 2) - 1.0).abs() < 1e-12);
        let single = toks("yes");
        assert!((bleu(&single, &[single.clone()], 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_zero_bigram_precision_zeroes_the_score() {
        // p1 = 1/2 clipped, p2 = 0.
        let cand = toks("a a");
        let reference = toks("a b");
        assert_eq!(bleu(&cand, &[reference], 2), 0.0);
    }

    #[test]
    fn bleu_brevity_penalty_hand_value() {
        let cand = toks("a b c");
        let reference = toks("a b c d");
        let got = bleu(&cand, &[reference], 2);
        let want = (1.0f64 - 4.0 / 3.0).exp();
        assert!((got - want).abs() < 1e-9, "got {got} want {want}");
    }

    #[test]
    fn bleu_empty_candidate_scores_zero() {
        assert_eq!(bleu(&[], &[toks("a b")], 2), 0.0);
    }

    fn fixture_inventory() -> SlotInventory {
        SlotInventory {
            types: vec!["latte".into(), "mocha".into()],
            temperatures: vec!["hot".into(), "iced".into()],
            sizes: vec!["short".into(), "tall".into()],
            addresses: vec![
                toks("tower 7 maple street"),
                toks("building 3 rose lane"),
            ],
        }
    }

    fn prefs() -> SlotValues {
        SlotValues {
            coffee_type: "latte".into(),
            temperature: "hot".into(),
            size: "tall".into(),
            address: toks("tower 7 maple street"),
        }
    }

    #[test]
    fn slot_error_rate_fixtures() {
        let inv = fixture_inventory();
        assert_eq!(
            slot_error_rate(&toks("so one tall hot latte right ?"), &prefs(), &inv),
            Some(0.0)
        );
        assert_eq!(
            slot_error_rate(&toks("so one tall iced latte right ?"), &prefs(), &inv),
            Some(1.0 / 3.0)
        );
        assert_eq!(
            slot_error_rate(&toks("where should we deliver it ?"), &prefs(), &inv),
            None
        );
    }

    #[test]
    fn slot_error_rate_sees_whole_addresses() {
        let inv = fixture_inventory();
        let wrong_addr = toks("deliver to building 3 rose lane right ?");
        assert_eq!(slot_error_rate(&wrong_addr, &prefs(), &inv), Some(1.0));
        let right_addr = toks("deliver to tower 7 maple street right ?");
        assert_eq!(slot_error_rate(&right_addr, &prefs(), &inv), Some(0.0));
        // A fragment of an address is not a slot mention.
        let fragment = toks("deliver to maple right ?");
        assert_eq!(slot_error_rate(&fragment, &prefs(), &inv), None);
    }

    #[test]
    fn slot_error_rate_ignores_non_slot_tokens() {
        let inv = fixture_inventory();
        let a = toks("one tall hot latte");
        let b = toks("well sure one tall hot latte thanks so much");
        assert_eq!(
            slot_error_rate(&a, &prefs(), &inv),
            slot_error_rate(&b, &prefs(), &inv)
        );
    }

    #[test]
    fn aggregate_mean_and_std() {
        let per_seed = vec![
            SeedMetrics {
                seed: 0,
                bleu: 0.5,
                slot_error_rate: 0.1,
                mean_reward: Some(1.0),
                success_rate: Some(0.9),
            },
            SeedMetrics {
                seed: 1,
                bleu: 0.7,
                slot_error_rate: 0.1,
                mean_reward: Some(1.2),
                success_rate: Some(0.8),
            },
        ];
        let report = aggregate_seeds("PT-HRED", &per_seed);
        assert!((report.bleu.mean - 0.6).abs() < 1e-12);
        assert!((report.bleu.std.unwrap() - 0.14142135623730953).abs() < 1e-9);
        assert_eq!(report.slot_error_rate.std.unwrap(), 0.0);

        let single = aggregate_seeds("S2S", &per_seed[..1]);
        assert!(single.bleu.std.is_none());
        assert!((single.bleu.mean - 0.5).abs() < 1e-12);
        assert!(single.bleu.mean >= 0.5 && single.bleu.mean <= 0.5);
    }

    #[test]
    fn table_renders_one_row_per_model() {
        let per_seed = vec![SeedMetrics {
            seed: 0,
            bleu: 0.5,
            slot_error_rate: 0.1,
            mean_reward: None,
            success_rate: None,
        }];
        let table = render_table(&[aggregate_seeds("S2S", &per_seed)]);
        assert!(table.contains("S2S"));
        assert!(table.contains("BLEU"));
        assert!(table.lines().count() == 2);
    }
}
