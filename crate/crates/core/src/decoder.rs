//! Response decoders.
//!
//! Two flavors share one output head design:
//!
//! * the basic tanh-RNN decoder, and
//! * the personalized decoder: a GRU component shared by all users, a small
//!   per-user RNN, and a binary per-word control gate that switches between
//!   them. While the gate is on, the shared component's hidden state and its
//!   last-word embedding are frozen; the personal component generates the
//!   personal phrase and hands control back when the gate drops to 0.
//!
//! The gate is realized as a hard binary decision; gradients reach the gate
//! predictors only through their own Bernoulli log-likelihood terms, never
//! through the mixing equations.

use crate::embedding::EmbeddingTable;
use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{softmax, Tensor1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Nonlinearity of the GRU candidate state and the personal RNN. The printed
/// equations use the sigmoid where conventional GRUs use tanh; sigmoid is the
/// default, tanh is available behind config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateNonlinearity {
    Sigmoid,
    Tanh,
}

impl CandidateNonlinearity {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            CandidateNonlinearity::Sigmoid => tape.sigmoid(x),
            CandidateNonlinearity::Tanh => tape.tanh(x),
        }
    }
}

/// Hidden/embedding/context dimensions shared by the decoder family.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoderDims {
    pub d_hidden: usize,
    pub d_emb: usize,
    pub d_ctx: usize,
}

/// Output head of Eq. (1): omega = H0 h + E0 e_prev + b.
#[derive(Debug, Clone, Copy)]
pub struct OutputHead {
    pub h0: ParamId,
    pub e0: ParamId,
    pub bias: ParamId,
}

impl OutputHead {
    fn init(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut ChaCha8Rng) -> Self {
        OutputHead {
            h0: store.add_uniform_mat(&format!("{prefix}head.h0"), dims.d_hidden, dims.d_hidden, rng),
            e0: store.add_uniform_mat(&format!("{prefix}head.e0"), dims.d_hidden, dims.d_emb, rng),
            bias: store.add_zero_vec(&format!("{prefix}head.bias"), dims.d_hidden),
        }
    }
}

/// Basic decoder: h_t = tanh(W h_{t-1} + U e_prev + V h_ctx), plus a head.
#[derive(Debug, Clone, Copy)]
pub struct BasicDecoderParams {
    pub w_hidden: ParamId,
    pub u_embed: ParamId,
    pub v_ctx: ParamId,
    pub head: OutputHead,
}

impl BasicDecoderParams {
    pub fn init(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut ChaCha8Rng) -> Self {
        BasicDecoderParams {
            w_hidden: store.add_uniform_mat(&format!("{prefix}dec.w_hidden"), dims.d_hidden, dims.d_hidden, rng),
            u_embed: store.add_uniform_mat(&format!("{prefix}dec.u_embed"), dims.d_hidden, dims.d_emb, rng),
            v_ctx: store.add_uniform_mat(&format!("{prefix}dec.v_ctx"), dims.d_hidden, dims.d_ctx, rng),
            head: OutputHead::init(store, &format!("{prefix}dec."), dims, rng),
        }
    }
}

/// One gate of the shared GRU (weights on hidden, embedding, context + bias).
#[derive(Debug, Clone, Copy)]
pub struct GruBlock {
    pub w_hidden: ParamId,
    pub u_embed: ParamId,
    pub v_ctx: ParamId,
    pub bias: ParamId,
}

impl GruBlock {
    fn init(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut ChaCha8Rng) -> Self {
        GruBlock {
            w_hidden: store.add_uniform_mat(&format!("{prefix}.w_hidden"), dims.d_hidden, dims.d_hidden, rng),
            u_embed: store.add_uniform_mat(&format!("{prefix}.u_embed"), dims.d_hidden, dims.d_emb, rng),
            v_ctx: store.add_uniform_mat(&format!("{prefix}.v_ctx"), dims.d_hidden, dims.d_ctx, rng),
            bias: store.add_zero_vec(&format!("{prefix}.bias"), dims.d_hidden),
        }
    }

    /// ((W·h + U·e) + V·c) + b, in that association order.
    fn combine(&self, tape: &mut Tape, store: &ParamStore, h: Var, e: Var, c: Var) -> Var {
        let wh = tape.matvec(store, self.w_hidden, h);
        let ue = tape.matvec(store, self.u_embed, e);
        let s = tape.add(wh, ue);
        let vc = tape.matvec(store, self.v_ctx, c);
        let s = tape.add(s, vc);
        let b = tape.param_vec(store, self.bias);
        tape.add(s, b)
    }
}

/// Scalar gate predictor: sigma(W h + U e + b).
#[derive(Debug, Clone, Copy)]
pub struct GatePredictorParams {
    pub w_hidden: ParamId,
    pub u_embed: ParamId,
    pub bias: ParamId,
}

impl GatePredictorParams {
    fn init(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut ChaCha8Rng) -> Self {
        GatePredictorParams {
            w_hidden: store.add_uniform_mat(&format!("{prefix}.w_hidden"), 1, dims.d_hidden, rng),
            u_embed: store.add_uniform_mat(&format!("{prefix}.u_embed"), 1, dims.d_emb, rng),
            bias: store.add_zero_vec(&format!("{prefix}.bias"), 1),
        }
    }

    fn logit(&self, tape: &mut Tape, store: &ParamStore, h: Var, e: Var) -> Var {
        let wh = tape.matvec(store, self.w_hidden, h);
        let ue = tape.matvec(store, self.u_embed, e);
        let s = tape.add(wh, ue);
        let b = tape.param_vec(store, self.bias);
        tape.add(s, b)
    }
}

/// GRU component shared by all users, plus the shared gate predictor and the
/// shared output head.
#[derive(Debug, Clone, Copy)]
pub struct SharedComponentParams {
    pub update: GruBlock,
    pub reset: GruBlock,
    pub candidate: GruBlock,
    pub gate: GatePredictorParams,
    pub head: OutputHead,
}

impl SharedComponentParams {
    pub fn init(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut ChaCha8Rng) -> Self {
        SharedComponentParams {
            update: GruBlock::init(store, &format!("{prefix}gru.update"), dims, rng),
            reset: GruBlock::init(store, &format!("{prefix}gru.reset"), dims, rng),
            candidate: GruBlock::init(store, &format!("{prefix}gru.candidate"), dims, rng),
            gate: GatePredictorParams::init(store, &format!("{prefix}gate"), dims, rng),
            head: OutputHead::init(store, prefix, dims, rng),
        }
    }
}

/// Per-user personal RNN and gate predictor. Never updated from another
/// user's data.
#[derive(Debug, Clone, Copy)]
pub struct PersonalComponentParams {
    pub w_hidden: ParamId,
    pub u_embed: ParamId,
    pub v_shared: ParamId,
    pub gate: GatePredictorParams,
}

impl PersonalComponentParams {
    pub fn init(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut ChaCha8Rng) -> Self {
        PersonalComponentParams {
            w_hidden: store.add_uniform_mat(&format!("{prefix}personal.w_hidden"), dims.d_hidden, dims.d_hidden, rng),
            u_embed: store.add_uniform_mat(&format!("{prefix}personal.u_embed"), dims.d_hidden, dims.d_emb, rng),
            v_shared: store.add_uniform_mat(&format!("{prefix}personal.v_shared"), dims.d_hidden, dims.d_hidden, rng),
            gate: GatePredictorParams::init(store, &format!("{prefix}personal.gate"), dims, rng),
        }
    }
}

/// State threaded through personalized decoding: shared hidden, personal
/// hidden, previous realized gate, and the two last-word embeddings.
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h_shared: Var,
    pub h_personal: Var,
    pub gate: u8,
    pub e_last: Var,
    pub e_last_shared: Var,
}

impl DecoderState {
    /// Initial state: both hiddens start from the policy's action vector,
    /// the gate is 0, and both last-word embeddings are zero vectors.
    pub fn initial(tape: &mut Tape, h_init: Var, d_emb: usize) -> Self {
        let e_zero = tape.zeros(d_emb);
        DecoderState {
            h_shared: h_init,
            h_personal: h_init,
            gate: 0,
            e_last: e_zero,
            e_last_shared: e_zero,
        }
    }

    /// Record the embedding of the word just emitted (or forced); everything
    /// else carries over unchanged.
    pub fn with_last_word(self, tape: &mut Tape, store: &ParamStore, emb: &EmbeddingTable, word: u32) -> Self {
        DecoderState {
            e_last: emb.embed(tape, store, word),
            ..self
        }
    }
}

/// How the binary gate is realized at each step.
#[derive(Debug, Clone, Copy)]
pub enum GateDecision {
    /// Ground-truth label (teacher forcing).
    Forced(u8),
    /// Threshold the predicted probability at 0.5.
    Greedy,
    /// Bernoulli sample using a uniform draw supplied by the caller.
    Sample(f64),
}

impl GateDecision {
    fn realize(self, prob: f64) -> u8 {
        match self {
            GateDecision::Forced(o) => {
                debug_assert!(o <= 1, "gate label must be 0 or 1");
                o
            }
            GateDecision::Greedy => u8::from(prob >= 0.5),
            GateDecision::Sample(u) => u8::from(u < prob),
        }
    }
}

/// One decoding step's outputs.
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    pub state: DecoderState,
    /// Hidden vector that generates the next word (Eq. gen_combine).
    pub h_out: Var,
    /// Logits over the vocabulary; softmax of their value is the word
    /// distribution.
    pub logits: Var,
    pub gate_logit: Var,
    pub gate_prob: f64,
    pub gate: u8,
}

impl StepOutput {
    pub fn word_dist(&self, tape: &Tape) -> Tensor1 {
        softmax(tape.value(self.logits))
    }
}

/// Basic decoder hidden update: tanh((W h_prev + U e_prev) + V h_ctx).
pub fn basic_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &BasicDecoderParams,
    h_prev: Var,
    e_prev: Var,
    h_ctx: Var,
) -> Var {
    let wh = tape.matvec(store, params.w_hidden, h_prev);
    let ue = tape.matvec(store, params.u_embed, e_prev);
    let s = tape.add(wh, ue);
    let vc = tape.matvec(store, params.v_ctx, h_ctx);
    let s = tape.add(s, vc);
    tape.tanh(s)
}

/// Vocabulary logits from Eqs. (1)-(2): logit_v = o_v . (H0 h + E0 e_prev + b).
pub fn output_logits(
    tape: &mut Tape,
    store: &ParamStore,
    head: &OutputHead,
    output_embeddings: ParamId,
    h: Var,
    e_prev: Var,
) -> Var {
    let hh = tape.matvec(store, head.h0, h);
    let ee = tape.matvec(store, head.e0, e_prev);
    let omega = tape.add(hh, ee);
    let b = tape.param_vec(store, head.bias);
    let omega = tape.add(omega, b);
    tape.matvec(store, output_embeddings, omega)
}

/// Word distribution of Eq. (3): softmax over the full vocabulary.
pub fn output_distribution(
    tape: &mut Tape,
    store: &ParamStore,
    head: &OutputHead,
    output_embeddings: ParamId,
    h: Var,
    e_prev: Var,
) -> Tensor1 {
    let logits = output_logits(tape, store, head, output_embeddings, h, e_prev);
    softmax(tape.value(logits))
}

/// Candidate shared hidden state: the GRU update over (h_shared_prev,
/// e_shared_prev, h_ctx). Returns the tentative state before the freeze rule.
pub fn shared_gru_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &SharedComponentParams,
    h_shared_prev: Var,
    e_shared_prev: Var,
    h_ctx: Var,
    nonlin: CandidateNonlinearity,
) -> Var {
    let z_pre = params.update.combine(tape, store, h_shared_prev, e_shared_prev, h_ctx);
    let z = tape.sigmoid(z_pre);
    let r_pre = params.reset.combine(tape, store, h_shared_prev, e_shared_prev, h_ctx);
    let r = tape.sigmoid(r_pre);
    let masked = tape.mul(r, h_shared_prev);
    let cand_pre = params.candidate.combine(tape, store, masked, e_shared_prev, h_ctx);
    let cand = nonlin.apply(tape, cand_pre);
    let keep = tape.mul(z, h_shared_prev);
    let zc = tape.one_minus(z);
    let take = tape.mul(zc, cand);
    tape.add(keep, take)
}

/// Freeze rule: with the gate off the shared state adopts the GRU candidate
/// and the shared last-word embedding adopts `e_prev`; with the gate on both
/// stay exactly as they were (same tape nodes, so bitwise identical).
pub fn apply_gate_freeze(
    state: &DecoderState,
    candidate: Var,
    gate: u8,
    e_prev: Var,
) -> (Var, Var) {
    if gate == 0 {
        (candidate, e_prev)
    } else {
        (state.h_shared, state.e_last_shared)
    }
}

/// Personal RNN candidate over (h_personal_prev, e_prev, h_shared_prev).
pub fn personal_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &PersonalComponentParams,
    h_personal_prev: Var,
    e_prev: Var,
    h_shared_prev: Var,
    nonlin: CandidateNonlinearity,
) -> Var {
    let wh = tape.matvec(store, params.w_hidden, h_personal_prev);
    let ue = tape.matvec(store, params.u_embed, e_prev);
    let s = tape.add(wh, ue);
    let vs = tape.matvec(store, params.v_shared, h_shared_prev);
    let s = tape.add(s, vs);
    nonlin.apply(tape, s)
}

/// Gate logit for p(o_t = 1): the shared predictor over the shared hidden
/// when the previous gate was 0, the user's predictor over the personal
/// hidden when it was 1. Both branches read the overall last-word embedding.
pub fn gate_predict(
    tape: &mut Tape,
    store: &ParamStore,
    shared_gate: &GatePredictorParams,
    personal_gate: &GatePredictorParams,
    gate_prev: u8,
    h_shared_prev: Var,
    h_personal_prev: Var,
    e_prev: Var,
) -> Var {
    if gate_prev == 0 {
        shared_gate.logit(tape, store, h_shared_prev, e_prev)
    } else {
        personal_gate.logit(tape, store, h_personal_prev, e_prev)
    }
}

/// One full personalized decoding step (procedure steps 2-4).
#[allow(clippy::too_many_arguments)]
pub fn personalized_step(
    tape: &mut Tape,
    store: &ParamStore,
    shared: &SharedComponentParams,
    personal: &PersonalComponentParams,
    output_embeddings: ParamId,
    state: &DecoderState,
    h_ctx: Var,
    decision: GateDecision,
    nonlin: CandidateNonlinearity,
) -> StepOutput {
    let gate_logit = gate_predict(
        tape,
        store,
        &shared.gate,
        &personal.gate,
        state.gate,
        state.h_shared,
        state.h_personal,
        state.e_last,
    );
    let gate_prob = crate::tensor::sigmoid(tape.scalar(gate_logit));
    let gate = decision.realize(gate_prob);

    let (h_shared_new, e_last_shared_new) = if gate == 0 {
        let cand = shared_gru_step(
            tape,
            store,
            shared,
            state.h_shared,
            state.e_last_shared,
            h_ctx,
            nonlin,
        );
        apply_gate_freeze(state, cand, gate, state.e_last)
    } else {
        (state.h_shared, state.e_last_shared)
    };

    let h_personal_new = if gate == 0 {
        h_shared_new
    } else {
        personal_step(
            tape,
            store,
            personal,
            state.h_personal,
            state.e_last,
            state.h_shared,
            nonlin,
        )
    };

    let h_out = if gate == 0 { h_shared_new } else { h_personal_new };
    let logits = output_logits(tape, store, &shared.head, output_embeddings, h_out, state.e_last);

    StepOutput {
        state: DecoderState {
            h_shared: h_shared_new,
            h_personal: h_personal_new,
            gate,
            e_last: state.e_last,
            e_last_shared: e_last_shared_new,
        },
        h_out,
        logits,
        gate_logit,
        gate_prob,
        gate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// Free-running decode output. `words` excludes the end symbol; the log-prob
/// and NLL-node lists include the step that emitted it, so their length is
/// `words.len() + 1` when `eos_terminated`.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub words: Vec<u32>,
    pub gates: Vec<u8>,
    pub word_log_probs: Vec<f64>,
    pub gate_log_probs: Vec<f64>,
    pub word_nll_vars: Vec<Var>,
    pub gate_nll_vars: Vec<Var>,
    pub eos_terminated: bool,
}

/// Free-running personalized decode: loops `personalized_step` from the
/// initial state until the end symbol or `max_len`.
#[allow(clippy::too_many_arguments)]
pub fn decode_personalized(
    tape: &mut Tape,
    store: &ParamStore,
    shared: &SharedComponentParams,
    personal: &PersonalComponentParams,
    emb: &EmbeddingTable,
    h_ctx: Var,
    h_init: Var,
    nonlin: CandidateNonlinearity,
    mode: DecodeMode,
    max_len: usize,
    eos_id: u32,
    rng: &mut ChaCha8Rng,
) -> DecodeResult {
    assert!(max_len >= 1, "decode: max_len must be at least 1");
    let mut state = DecoderState::initial(tape, h_init, emb.d_emb);
    let mut out = DecodeResult {
        words: Vec::new(),
        gates: Vec::new(),
        word_log_probs: Vec::new(),
        gate_log_probs: Vec::new(),
        word_nll_vars: Vec::new(),
        gate_nll_vars: Vec::new(),
        eos_terminated: false,
    };

    for _ in 0..max_len {
        let decision = match mode {
            DecodeMode::Greedy => GateDecision::Greedy,
            DecodeMode::Sample => GateDecision::Sample(rng.gen::<f64>()),
        };
        let step = personalized_step(
            tape, store, shared, personal, emb.output, &state, h_ctx, decision, nonlin,
        );
        let dist = step.word_dist(tape);
        let word = match mode {
            DecodeMode::Greedy => argmax(&dist),
            DecodeMode::Sample => sample_index(&dist, rng.gen::<f64>()),
        };

        let word_nll = tape.pick_nll(step.logits, word as usize);
        let gate_nll = tape.bce_logit(step.gate_logit, step.gate as f64);
        out.word_log_probs.push(-tape.scalar(word_nll));
        out.gate_log_probs.push(-tape.scalar(gate_nll));
        out.word_nll_vars.push(word_nll);
        out.gate_nll_vars.push(gate_nll);

        if word == eos_id {
            out.eos_terminated = true;
            break;
        }
        out.words.push(word);
        out.gates.push(step.gate);
        state = step.state.with_last_word(tape, store, emb, word);
    }
    out
}

/// Free-running basic-decoder decode (no gates).
#[allow(clippy::too_many_arguments)]
pub fn decode_basic(
    tape: &mut Tape,
    store: &ParamStore,
    params: &BasicDecoderParams,
    emb: &EmbeddingTable,
    h_ctx: Var,
    h_init: Var,
    mode: DecodeMode,
    max_len: usize,
    eos_id: u32,
    rng: &mut ChaCha8Rng,
) -> DecodeResult {
    assert!(max_len >= 1, "decode: max_len must be at least 1");
    let mut h = h_init;
    let mut e_prev = emb.embed_word_zero(tape);
    let mut out = DecodeResult {
        words: Vec::new(),
        gates: Vec::new(),
        word_log_probs: Vec::new(),
        gate_log_probs: Vec::new(),
        word_nll_vars: Vec::new(),
        gate_nll_vars: Vec::new(),
        eos_terminated: false,
    };

    for _ in 0..max_len {
        h = basic_step(tape, store, params, h, e_prev, h_ctx);
        let logits = output_logits(tape, store, &params.head, emb.output, h, e_prev);
        let dist = softmax(tape.value(logits));
        let word = match mode {
            DecodeMode::Greedy => argmax(&dist),
            DecodeMode::Sample => sample_index(&dist, rng.gen::<f64>()),
        };
        let word_nll = tape.pick_nll(logits, word as usize);
        out.word_log_probs.push(-tape.scalar(word_nll));
        out.word_nll_vars.push(word_nll);
        if word == eos_id {
            out.eos_terminated = true;
            break;
        }
        out.words.push(word);
        out.gates.push(0);
        e_prev = emb.embed(tape, store, word);
    }
    out
}

/// Per-step scores of a teacher-forced response.
#[derive(Debug, Clone, Default)]
pub struct TeacherForced {
    pub word_nll_vars: Vec<Var>,
    pub gate_nll_vars: Vec<Var>,
    pub gate_probs: Vec<f64>,
    pub gate_labels: Vec<u8>,
}

impl TeacherForced {
    /// Total negative log-likelihood value (words + gates).
    pub fn total_nll(&self, tape: &Tape) -> f64 {
        self.word_nll_vars
            .iter()
            .chain(&self.gate_nll_vars)
            .map(|v| tape.scalar(*v))
            .sum()
    }
}

/// Teacher-force `targets` (with gate labels) through the personalized
/// decoder. When `append_eos` is set, an extra end-symbol step with gate
/// label 0 is scored after the last target.
#[allow(clippy::too_many_arguments)]
pub fn teacher_force_personalized(
    tape: &mut Tape,
    store: &ParamStore,
    shared: &SharedComponentParams,
    personal: &PersonalComponentParams,
    emb: &EmbeddingTable,
    h_ctx: Var,
    h_init: Var,
    nonlin: CandidateNonlinearity,
    targets: &[u32],
    gate_labels: &[u8],
    append_eos: Option<u32>,
) -> TeacherForced {
    assert_eq!(
        targets.len(),
        gate_labels.len(),
        "teacher_force: {} targets vs {} gate labels",
        targets.len(),
        gate_labels.len()
    );
    let mut state = DecoderState::initial(tape, h_init, emb.d_emb);
    let mut out = TeacherForced::default();

    let steps = targets
        .iter()
        .zip(gate_labels)
        .map(|(&w, &o)| (w, o))
        .chain(append_eos.map(|eos| (eos, 0u8)));

    for (word, label) in steps {
        let step = personalized_step(
            tape,
            store,
            shared,
            personal,
            emb.output,
            &state,
            h_ctx,
            GateDecision::Forced(label),
            nonlin,
        );
        let word_nll = tape.pick_nll(step.logits, word as usize);
        let gate_nll = tape.bce_logit(step.gate_logit, label as f64);
        out.word_nll_vars.push(word_nll);
        out.gate_nll_vars.push(gate_nll);
        out.gate_probs.push(step.gate_prob);
        out.gate_labels.push(label);
        state = step.state.with_last_word(tape, store, emb, word);
    }
    out
}

/// Teacher-force `targets` through the basic decoder (no gate terms).
#[allow(clippy::too_many_arguments)]
pub fn teacher_force_basic(
    tape: &mut Tape,
    store: &ParamStore,
    params: &BasicDecoderParams,
    emb: &EmbeddingTable,
    h_ctx: Var,
    h_init: Var,
    targets: &[u32],
    append_eos: Option<u32>,
) -> TeacherForced {
    let mut h = h_init;
    let mut e_prev = emb.embed_word_zero(tape);
    let mut out = TeacherForced::default();

    for &word in targets.iter().chain(append_eos.iter()) {
        h = basic_step(tape, store, params, h, e_prev, h_ctx);
        let logits = output_logits(tape, store, &params.head, emb.output, h, e_prev);
        out.word_nll_vars.push(tape.pick_nll(logits, word as usize));
        e_prev = emb.embed(tape, store, word);
    }
    out
}

pub fn argmax(dist: &Tensor1) -> u32 {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in dist.0.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best as u32
}

/// Inverse-CDF sample from a probability vector given a uniform draw.
pub fn sample_index(dist: &Tensor1, u: f64) -> u32 {
    let mut acc = 0.0;
    for (i, &p) in dist.0.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    (dist.len() - 1) as u32
}
