//! Reward bookkeeping, discounted returns, and REINFORCE training from
//! logged trajectories.
//!
//! The surrogate loss for one trajectory is
//! `sum_n J_n * (word NLL_n + gate NLL_n) + lambda_gate * gate NLL_n`,
//! where J_n is the discounted future return of turn n held fixed. Shared
//! parameters take gradient from every user's trajectories; a user's
//! personal block only ever sees that user's data.

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::seeded;
use crate::tape::{Tape, Var};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// One reward event emitted by the simulated user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardEvent {
    /// The user confirms the agent's personal suggestion.
    ConfirmPersonal,
    /// The user provides a piece of task information.
    ProvideInfo,
    /// The order was completed successfully.
    TaskSuccess,
    /// The user rejects a wrong or non-logical response.
    Reject,
    /// Flat cost of every dialogue turn.
    TurnPenalty,
}

impl RewardEvent {
    pub fn value(self) -> f64 {
        match self {
            RewardEvent::ConfirmPersonal => 0.3,
            RewardEvent::ProvideInfo => 0.1,
            RewardEvent::TaskSuccess => 1.0,
            RewardEvent::Reject => -0.2,
            RewardEvent::TurnPenalty => -0.05,
        }
    }
}

/// Total reward of one turn: the sum of its event values.
pub fn turn_reward(events: &[RewardEvent]) -> f64 {
    events.iter().map(|e| e.value()).sum()
}

/// Discounted future returns J_n = sum_{k>=n} gamma^{k-n} r_k, computed by
/// the exact backward recursion J_n = r_n + gamma * J_{n+1}.
pub fn returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub lambda_gate: f64,
    /// Optional on-policy refresh: trajectories re-collected from the
    /// simulator each epoch instead of replayed from the log. Off by default.
    pub online_rollouts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.95,
            epochs: 200,
            adam: AdamConfig::default(),
            seed: 0,
            lambda_gate: 1.0,
            online_rollouts: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.lambda_gate < 0.0 {
            return Err(Error::Config(format!(
                "lambda_gate must be >= 0, got {}",
                self.lambda_gate
            )));
        }
        Ok(())
    }
}

/// Per-turn log-probability breakdown of a teacher-forced trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryScore {
    pub total_log_prob: f64,
    pub per_turn_log_prob: Vec<f64>,
    pub word_count: usize,
    pub gate_correct: usize,
    pub gate_total: usize,
}

/// Teacher-force a logged dialogue and return log pi(O_n, Y_n | H_n) per
/// turn (words plus gate Bernoulli terms). Scores exactly the logged tokens;
/// the training loop separately appends the end symbol.
pub fn trajectory_log_prob(model: &Model, dialogue: &Dialogue) -> Result<TrajectoryScore> {
    dialogue.validate()?;
    let mut tape = Tape::new();
    let scored = score_dialogue(model, &mut tape, dialogue, false)?;
    let mut per_turn = Vec::with_capacity(scored.turns.len());
    let mut total = 0.0;
    let mut word_count = 0;
    let mut gate_correct = 0;
    let mut gate_total = 0;
    for turn in &scored.turns {
        let mut lp = 0.0;
        for v in turn.word_nll_vars.iter().chain(&turn.gate_nll_vars) {
            lp -= tape.scalar(*v);
        }
        word_count += turn.word_nll_vars.len();
        for (p, label) in turn.gate_probs.iter().zip(&turn.gate_labels) {
            gate_total += 1;
            if u8::from(*p >= 0.5) == *label {
                gate_correct += 1;
            }
        }
        per_turn.push(lp);
        total += lp;
    }
    Ok(TrajectoryScore {
        total_log_prob: total,
        per_turn_log_prob: per_turn,
        word_count,
        gate_correct,
        gate_total,
    })
}

struct ScoredTurn {
    word_nll_vars: Vec<Var>,
    gate_nll_vars: Vec<Var>,
    gate_probs: Vec<f64>,
    gate_labels: Vec<u8>,
}

struct ScoredDialogue {
    turns: Vec<ScoredTurn>,
}

/// Run the encoder thread over the dialogue and teacher-force every response.
fn score_dialogue(
    model: &Model,
    tape: &mut Tape,
    dialogue: &Dialogue,
    append_eos: bool,
) -> Result<ScoredDialogue> {
    let view = model.view(&dialogue.user_id)?;
    let mut thread = model.context_begin(tape);
    let mut turns = Vec::with_capacity(dialogue.turns.len());
    for turn in &dialogue.turns {
        let x_ids = model.encode_tokens(&turn.x);
        let y_ids = model.encode_tokens(&turn.y);
        let (h_ctx, h_init) = model.context_question(tape, &view, &mut thread, &x_ids);
        let tf = model.score_turn(tape, &view, h_ctx, h_init, &y_ids, &turn.o, append_eos);
        turns.push(ScoredTurn {
            word_nll_vars: tf.word_nll_vars,
            gate_nll_vars: tf.gate_nll_vars,
            gate_probs: tf.gate_probs,
            gate_labels: tf.gate_labels,
        });
        model.context_response(tape, &view, &mut thread, &y_ids);
    }
    Ok(ScoredDialogue { turns })
}

/// Loss statistics of one REINFORCE step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub surrogate_loss: f64,
    pub word_nll_sum: f64,
    pub word_count: usize,
    pub gate_correct: usize,
    pub gate_total: usize,
    pub mean_return: f64,
}

/// Build the REINFORCE surrogate (plus the supervised gate term) for a batch
/// of one user's trajectories on `tape`, returning the scalar loss node.
///
/// The loss is normalized by the number of trajectories. Returns J_n enter as
/// fixed weights; gradients flow only through log pi.
pub fn surrogate_loss(
    model: &Model,
    tape: &mut Tape,
    batch: &[&Dialogue],
    config: &TrainConfig,
    stats: &mut StepStats,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut terms: Vec<(Var, f64)> = Vec::new();
    let inv_batch = 1.0 / batch.len() as f64;
    for dialogue in batch {
        dialogue.validate()?;
        let rewards: Vec<f64> = dialogue.turns.iter().map(|t| t.r).collect();
        let js = returns(&rewards, config.gamma);
        stats.mean_return += js.first().copied().unwrap_or(0.0) * inv_batch;
        let scored = score_dialogue(model, tape, dialogue, true)?;
        for (turn, j) in scored.turns.iter().zip(&js) {
            for v in &turn.word_nll_vars {
                terms.push((*v, j * inv_batch));
                stats.word_nll_sum += tape.scalar(*v);
                stats.word_count += 1;
            }
            for v in &turn.gate_nll_vars {
                terms.push((*v, (j + config.lambda_gate) * inv_batch));
            }
            for (p, label) in turn.gate_probs.iter().zip(&turn.gate_labels) {
                stats.gate_total += 1;
                if u8::from(*p >= 0.5) == *label {
                    stats.gate_correct += 1;
                }
            }
        }
    }
    let mut loss = tape.zeros(1);
    for (v, w) in terms {
        if w != 0.0 {
            let scaled = tape.scale(v, w);
            loss = tape.add(loss, scaled);
        }
    }
    stats.surrogate_loss = tape.scalar(loss);
    Ok(loss)
}

/// One REINFORCE update over a single-user batch: accumulate gradients of
/// the surrogate, take one Adam step over shared + that user's parameters,
/// zero the gradients.
pub fn reinforce_update(
    model: &mut Model,
    adam: &mut AdamState,
    batch: &[&Dialogue],
    config: &TrainConfig,
) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let user = model.user_index(&batch[0].user_id)?;
    debug_assert!(
        batch.iter().all(|d| d.user_id == batch[0].user_id),
        "reinforce_update batches are per-user"
    );
    let mut stats = StepStats::default();
    let mut tape = Tape::new();
    let loss = surrogate_loss(model, &mut tape, batch, config, &mut stats)?;
    tape.backward(loss, &mut model.store);
    let ids = model.trainable_ids(user);
    adam_step(&mut model.store, adam, &ids)?;
    model.store.zero_grads();
    Ok(stats)
}

/// One line of the training metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub model: String,
    pub seed: u64,
    pub nll: f64,
    pub gate_accuracy: Option<f64>,
    pub mean_return: f64,
}

/// Train `model` on `corpus` for `config.epochs` epochs. Each step consumes
/// all trajectories of one user; users are visited in seeded shuffled order
/// each epoch. Returns the per-epoch metrics log.
pub fn train(
    model: &mut Model,
    corpus: &[Dialogue],
    config: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    let mut adam = AdamState::new(config.adam, &model.store);
    let mut rng = seeded(config.seed);
    train_loop(model, &mut adam, &mut rng, corpus, config, 0)
}

/// Epoch loop shared by fresh training and checkpoint resumption.
pub fn train_loop(
    model: &mut Model,
    adam: &mut AdamState,
    rng: &mut rand_chacha::ChaCha8Rng,
    corpus: &[Dialogue],
    config: &TrainConfig,
    start_epoch: usize,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    for d in corpus {
        d.validate()?;
        model.user_index(&d.user_id)?;
    }
    let mut by_user: Vec<Vec<&Dialogue>> = vec![Vec::new(); model.users.len()];
    for d in corpus {
        by_user[model.user_index(&d.user_id)?].push(d);
    }

    let mut log = Vec::new();
    for epoch in start_epoch..config.epochs {
        let mut order: Vec<usize> = (0..model.users.len()).collect();
        order.shuffle(rng);
        let mut epoch_stats = StepStats::default();
        let mut batches = 0usize;
        for &u in &order {
            if by_user[u].is_empty() {
                continue;
            }
            let stats = reinforce_update(model, adam, &by_user[u], config)?;
            epoch_stats.word_nll_sum += stats.word_nll_sum;
            epoch_stats.word_count += stats.word_count;
            epoch_stats.gate_correct += stats.gate_correct;
            epoch_stats.gate_total += stats.gate_total;
            epoch_stats.mean_return += stats.mean_return;
            batches += 1;
        }
        log.push(EpochMetrics {
            epoch,
            model: model.kind.as_str().to_string(),
            seed: config.seed,
            nll: if epoch_stats.word_count > 0 {
                epoch_stats.word_nll_sum / epoch_stats.word_count as f64
            } else {
                0.0
            },
            gate_accuracy: (epoch_stats.gate_total > 0)
                .then(|| epoch_stats.gate_correct as f64 / epoch_stats.gate_total as f64),
            mean_return: if batches > 0 {
                epoch_stats.mean_return / batches as f64
            } else {
                0.0
            },
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_values_are_pinned() {
        use RewardEvent::*;
        assert_eq!(turn_reward(&[ConfirmPersonal, TurnPenalty]), 0.3 - 0.05);
        assert!((turn_reward(&[TaskSuccess, TurnPenalty]) - 0.95).abs() < 1e-15);
        assert_eq!(turn_reward(&[TurnPenalty]), -0.05);
    }

    #[test]
    fn returns_examples() {
        assert_eq!(returns(&[1.0], 0.5), vec![1.0]);
        let j = returns(&[0.1, 1.0], 0.9);
        assert!((j[0] - 1.0).abs() < 1e-15);
        assert!((j[1] - 1.0).abs() < 1e-15);
        assert_eq!(returns(&[0.0, 0.0, 0.0], 0.99), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn returns_match_brute_force() {
        let rewards = [0.3, -0.2, 1.4, 0.0, -0.05, 0.7];
        let gamma = 0.93;
        let fast = returns(&rewards, gamma);
        for n in 0..rewards.len() {
            let mut brute = 0.0;
            for k in n..rewards.len() {
                brute += gamma.powi((k - n) as i32) * rewards[k];
            }
            assert!((fast[n] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_validation() {
        let mut cfg = TrainConfig::default();
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_ok());
        cfg.lambda_gate = -0.1;
        assert!(cfg.validate().is_err());
    }
}
