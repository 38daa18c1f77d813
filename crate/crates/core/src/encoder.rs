//! Encoder stacks feeding the decoders.
//!
//! HRED: a word-level tanh RNN encodes each utterance, a sentence-level RNN
//! tracks the dialogue state across turns, and a linear policy projects the
//! state into the decoder's initial hidden (the action vector). The flat
//! seq2seq variant runs the word encoder over the whole history joined by a
//! separator token and skips the sentence RNN.

use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use rand_chacha::ChaCha8Rng;

/// Word-level encoder weights, shared between question and response encoding.
#[derive(Debug, Clone, Copy)]
pub struct WordEncoderParams {
    pub w_hidden: ParamId,
    pub u_embed: ParamId,
    pub d_hidden: usize,
}

impl WordEncoderParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_hidden: usize,
        d_emb: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        WordEncoderParams {
            w_hidden: store.add_uniform_mat(&format!("{prefix}enc.w_hidden"), d_hidden, d_hidden, rng),
            u_embed: store.add_uniform_mat(&format!("{prefix}enc.u_embed"), d_hidden, d_emb, rng),
            d_hidden,
        }
    }
}

/// Sentence-level dialogue-state RNN weights.
#[derive(Debug, Clone, Copy)]
pub struct SentenceRnnParams {
    pub w_state: ParamId,
    pub u_input: ParamId,
    pub d_ctx: usize,
}

impl SentenceRnnParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_ctx: usize,
        d_enc: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        SentenceRnnParams {
            w_state: store.add_uniform_mat(&format!("{prefix}ctx.w_state"), d_ctx, d_ctx, rng),
            u_input: store.add_uniform_mat(&format!("{prefix}ctx.u_input"), d_ctx, d_enc, rng),
            d_ctx,
        }
    }
}

/// Linear dialogue policy: the action vector is tanh(D0 h_ctx + b0).
#[derive(Debug, Clone, Copy)]
pub struct PolicyParams {
    pub proj: ParamId,
    pub bias: ParamId,
}

impl PolicyParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d_hidden: usize,
        d_ctx: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        PolicyParams {
            proj: store.add_uniform_mat(&format!("{prefix}policy.proj"), d_hidden, d_ctx, rng),
            bias: store.add_zero_vec(&format!("{prefix}policy.bias"), d_hidden),
        }
    }
}

/// Run the word-level tanh RNN over embedded tokens from a zero initial
/// hidden; an empty utterance encodes to the zero vector.
pub fn encode_utterance(
    tape: &mut Tape,
    store: &ParamStore,
    params: &WordEncoderParams,
    token_embeddings: &[Var],
) -> Var {
    encode_continue(tape, store, params, None, token_embeddings)
}

/// Continue the word-level RNN from `initial` (zero hidden when None) over
/// more embedded tokens; used to extend a flattened seq2seq history in place.
pub fn encode_continue(
    tape: &mut Tape,
    store: &ParamStore,
    params: &WordEncoderParams,
    initial: Option<Var>,
    token_embeddings: &[Var],
) -> Var {
    let mut h = initial.unwrap_or_else(|| tape.zeros(params.d_hidden));
    for &e in token_embeddings {
        h = word_encoder_step(tape, store, params, h, e);
    }
    h
}

fn word_encoder_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &WordEncoderParams,
    h: Var,
    e: Var,
) -> Var {
    let wh = tape.matvec(store, params.w_hidden, h);
    let ue = tape.matvec(store, params.u_embed, e);
    let s = tape.add(wh, ue);
    tape.tanh(s)
}

/// Advance the dialogue state by one turn: an intermediate update with the
/// previous response encoding, then the main update with the current
/// question encoding. The first turn passes zero vectors for both the state
/// and the previous response.
pub fn advance_dialogue_state(
    tape: &mut Tape,
    store: &ParamStore,
    params: &SentenceRnnParams,
    state: Var,
    prev_response_vec: Var,
    question_vec: Var,
) -> Var {
    let mid = sentence_step(tape, store, params, state, prev_response_vec);
    sentence_step(tape, store, params, mid, question_vec)
}

fn sentence_step(
    tape: &mut Tape,
    store: &ParamStore,
    params: &SentenceRnnParams,
    state: Var,
    input: Var,
) -> Var {
    let ws = tape.matvec(store, params.w_state, state);
    let ui = tape.matvec(store, params.u_input, input);
    let s = tape.add(ws, ui);
    tape.tanh(s)
}

/// Project the dialogue state into the decoder's initial hidden state.
pub fn policy_project(
    tape: &mut Tape,
    store: &ParamStore,
    params: &PolicyParams,
    h_ctx: Var,
) -> Var {
    let p = tape.matvec(store, params.proj, h_ctx);
    let b = tape.param_vec(store, params.bias);
    let s = tape.add(p, b);
    tape.tanh(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::{Tensor1, Tensor2};

    fn enc_fixture(seed: u64) -> (ParamStore, WordEncoderParams) {
        let mut store = ParamStore::new();
        let params = WordEncoderParams::init(&mut store, "", 3, 2, &mut seeded(seed));
        (store, params)
    }

    #[test]
    fn empty_utterance_encodes_to_zero() {
        let (store, params) = enc_fixture(31);
        let mut tape = Tape::new();
        let h = encode_utterance(&mut tape, &store, &params, &[]);
        assert_eq!(tape.value(h).0, vec![0.0; 3]);
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let (mut store, params) = enc_fixture(32);
        for id in [params.w_hidden, params.u_embed] {
            store.value_mut(id).as_flat_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let e = tape.constant(Tensor1(vec![3.0, -7.0]));
        let h = encode_utterance(&mut tape, &store, &params, &[e]);
        assert_eq!(tape.value(h).0, vec![0.0; 3]);
    }

    #[test]
    fn first_turn_with_zero_state_collapses_to_question_term() {
        let mut store = ParamStore::new();
        let params = SentenceRnnParams {
            w_state: store.add_mat("w", Tensor2::zeros(2, 2)),
            u_input: store.add_mat("u", Tensor2::from_rows(&[&[1.0, 0.5], &[-0.5, 2.0]])),
            d_ctx: 2,
        };
        let mut tape = Tape::new();
        let zero = tape.zeros(2);
        let q = tape.constant(Tensor1(vec![0.2, -0.4]));
        let ctx = advance_dialogue_state(&mut tape, &store, &params, zero, zero, q);
        // W = 0 makes the intermediate step vanish; result is tanh(U q).
        let uq = crate::tensor::affine(store.mat(params.u_input), &Tensor1(vec![0.2, -0.4]), None);
        let want = crate::tensor::tanh_vec(&uq);
        assert_eq!(tape.value(ctx).0, want.0);
    }

    #[test]
    fn all_zero_weights_give_zero_context() {
        let mut store = ParamStore::new();
        let params = SentenceRnnParams {
            w_state: store.add_mat("w", Tensor2::zeros(2, 2)),
            u_input: store.add_mat("u", Tensor2::zeros(2, 2)),
            d_ctx: 2,
        };
        let mut tape = Tape::new();
        let s = tape.constant(Tensor1(vec![0.9, 0.9]));
        let r = tape.constant(Tensor1(vec![-1.0, 2.0]));
        let q = tape.constant(Tensor1(vec![0.3, 0.3]));
        let ctx = advance_dialogue_state(&mut tape, &store, &params, s, r, q);
        assert_eq!(tape.value(ctx).0, vec![0.0, 0.0]);
    }

    #[test]
    fn dialogue_state_is_order_sensitive() {
        let mut store = ParamStore::new();
        let params = SentenceRnnParams::init(&mut store, "", 3, 3, &mut seeded(33));
        let run = |inputs: [(Tensor1, Tensor1); 2]| {
            let mut tape = Tape::new();
            let mut state = tape.zeros(3);
            for (resp, quest) in inputs {
                let r = tape.constant(resp);
                let q = tape.constant(quest);
                state = advance_dialogue_state(&mut tape, &store, &params, state, r, q);
            }
            tape.value(state).0.clone()
        };
        let a = (Tensor1(vec![0.5, 0.0, 0.0]), Tensor1(vec![0.0, 0.5, 0.0]));
        let b = (Tensor1(vec![-0.3, 0.2, 0.9]), Tensor1(vec![0.7, 0.0, -0.2]));
        let fwd = run([a.clone(), b.clone()]);
        let rev = run([b, a]);
        assert_ne!(fwd, rev);
    }

    #[test]
    fn policy_identity_is_tanh() {
        let mut store = ParamStore::new();
        let params = PolicyParams {
            proj: store.add_mat("d0", Tensor2::identity(2)),
            bias: store.add_zero_vec("b0", 2),
        };
        let mut tape = Tape::new();
        let v = tape.constant(Tensor1(vec![0.7, -1.1]));
        let out = policy_project(&mut tape, &store, &params, v);
        assert_eq!(tape.value(out).0, vec![0.7f64.tanh(), (-1.1f64).tanh()]);

        let zero_store = {
            let mut s = ParamStore::new();
            let p = PolicyParams {
                proj: s.add_mat("d0", Tensor2::zeros(2, 2)),
                bias: s.add_zero_vec("b0", 2),
            };
            (s, p)
        };
        let mut tape = Tape::new();
        let v = tape.constant(Tensor1(vec![9.0, 9.0]));
        let out = policy_project(&mut tape, &zero_store.0, &zero_store.1, v);
        assert_eq!(tape.value(out).0, vec![0.0, 0.0]);
    }

    #[test]
    fn encoder_outputs_stay_in_unit_interval() {
        let (store, params) = enc_fixture(34);
        let mut tape = Tape::new();
        let embs: Vec<Var> = (0..5)
            .map(|i| tape.constant(Tensor1(vec![i as f64 * 10.0, -3.0 * i as f64])))
            .collect();
        let h = encode_utterance(&mut tape, &store, &params, &embs);
        for v in &tape.value(h).0 {
            assert!(v.abs() < 1.0);
        }
    }
}
