//! Input and output word embedding tables, stored as trainable matrix
//! parameters keyed by token id.

use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor1;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct EmbeddingTable {
    /// |V| x d_emb input embeddings (e_v).
    pub input: ParamId,
    /// |V| x d_out output embeddings (o_v), one logit row per word.
    pub output: ParamId,
    pub d_emb: usize,
    pub d_out: usize,
}

impl EmbeddingTable {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        vocab_size: usize,
        d_emb: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let input = store.add_uniform_mat(&format!("{prefix}emb.input"), vocab_size, d_emb, rng);
        let output = store.add_uniform_mat(&format!("{prefix}emb.output"), vocab_size, d_out, rng);
        EmbeddingTable {
            input,
            output,
            d_emb,
            d_out,
        }
    }

    /// Row lookup as a tape node (gradients flow into the looked-up row only).
    pub fn embed(&self, tape: &mut Tape, store: &ParamStore, id: u32) -> Var {
        tape.embed_row(store, self.input, id as usize)
    }

    /// Plain value lookup.
    pub fn embed_value(&self, store: &ParamStore, id: u32) -> Tensor1 {
        Tensor1(store.mat(self.input).row(id as usize).to_vec())
    }

    /// The all-zero embedding used in place of a learned BOS vector at t=0.
    pub fn embed_word_zero(&self, tape: &mut Tape) -> Var {
        tape.zeros(self.d_emb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adam::{adam_step, AdamConfig, AdamState};
    use crate::rng::seeded;

    #[test]
    fn zero_word_embedding_is_zero() {
        let mut store = ParamStore::new();
        let table = EmbeddingTable::init(&mut store, "", 6, 4, 3, &mut seeded(1));
        let mut tape = Tape::new();
        let z = table.embed_word_zero(&mut tape);
        assert_eq!(tape.value(z).0, vec![0.0; 4]);
    }

    #[test]
    fn lookups_are_stable() {
        let mut store = ParamStore::new();
        let table = EmbeddingTable::init(&mut store, "", 6, 4, 3, &mut seeded(1));
        let a = table.embed_value(&store, 2);
        let b = table.embed_value(&store, 2);
        assert_eq!(a.0, b.0);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn out_of_range_id_panics() {
        let mut store = ParamStore::new();
        let table = EmbeddingTable::init(&mut store, "", 6, 4, 3, &mut seeded(1));
        let mut tape = Tape::new();
        table.embed(&mut tape, &store, 6);
    }

    #[test]
    fn adam_update_touches_only_the_used_row() {
        let mut store = ParamStore::new();
        let table = EmbeddingTable::init(&mut store, "", 5, 3, 3, &mut seeded(2));
        let before: Vec<f64> = store.mat(table.input).as_slice().to_vec();

        let mut tape = Tape::new();
        let e = table.embed(&mut tape, &store, 2);
        let loss = tape.pick_nll(e, 0);
        tape.backward(loss, &mut store);

        let mut adam = AdamState::new(AdamConfig::default(), &store);
        adam_step(&mut store, &mut adam, &[table.input]).unwrap();

        let after = store.mat(table.input).as_slice();
        for row in 0..5 {
            let changed = (0..3).any(|c| before[row * 3 + c] != after[row * 3 + c]);
            assert_eq!(changed, row == 2, "row {row}");
        }
    }
}
