//! Model variants and their parameter-sharing wiring.
//!
//! Seven variants pair an encoder stack with a decoder:
//!
//! * `S2S` / `HRED`: none-transfer — every user owns a complete model.
//! * `ST-S2S` / `ST-HRED`: sentence-level transfer — one model for everyone.
//! * `ST-E-S2S`: shared encoder and policy, per-user basic decoder.
//! * `PT-S2S` / `PT-HRED`: shared encoder stack plus the personalized
//!   decoder (shared GRU component, per-user personal component).

use crate::decoder::{
    decode_basic, decode_personalized, teacher_force_basic, teacher_force_personalized,
    BasicDecoderParams, CandidateNonlinearity, DecodeMode, DecodeResult, DecoderDims,
    PersonalComponentParams, SharedComponentParams, TeacherForced,
};
use crate::embedding::EmbeddingTable;
use crate::encoder::{
    advance_dialogue_state, encode_continue, policy_project, PolicyParams, SentenceRnnParams,
    WordEncoderParams,
};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::rng::seeded;
use crate::tape::{Tape, Var};
use crate::vocab::{Vocabulary, EOS, SEP_TOKEN};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    S2S,
    StS2S,
    StES2S,
    PtS2S,
    Hred,
    StHred,
    PtHred,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::S2S,
        ModelKind::StS2S,
        ModelKind::StES2S,
        ModelKind::PtS2S,
        ModelKind::Hred,
        ModelKind::StHred,
        ModelKind::PtHred,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_uppercase().as_str() {
            "S2S" => Ok(ModelKind::S2S),
            "ST-S2S" => Ok(ModelKind::StS2S),
            "ST-E-S2S" => Ok(ModelKind::StES2S),
            "PT-S2S" => Ok(ModelKind::PtS2S),
            "HRED" => Ok(ModelKind::Hred),
            "ST-HRED" => Ok(ModelKind::StHred),
            "PT-HRED" => Ok(ModelKind::PtHred),
            _ => Err(Error::UnknownModelKind(s.to_string())),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::S2S => "S2S",
            ModelKind::StS2S => "ST-S2S",
            ModelKind::StES2S => "ST-E-S2S",
            ModelKind::PtS2S => "PT-S2S",
            ModelKind::Hred => "HRED",
            ModelKind::StHred => "ST-HRED",
            ModelKind::PtHred => "PT-HRED",
        }
    }

    /// Hierarchical encoder (sentence RNN) vs flat seq2seq history.
    pub fn is_hred(&self) -> bool {
        matches!(self, ModelKind::Hred | ModelKind::StHred | ModelKind::PtHred)
    }

    /// Uses the personalized decoder.
    pub fn is_personalized(&self) -> bool {
        matches!(self, ModelKind::PtS2S | ModelKind::PtHred)
    }

    /// Every user owns a complete private model.
    pub fn is_none_transfer(&self) -> bool {
        matches!(self, ModelKind::S2S | ModelKind::Hred)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_hidden: usize,
    pub d_emb: usize,
    pub candidate_nonlinearity: CandidateNonlinearity,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_hidden: 64,
            d_emb: 32,
            candidate_nonlinearity: CandidateNonlinearity::Sigmoid,
            max_len: 30,
        }
    }
}

#[derive(Debug, Default)]
struct NetSet {
    emb: Option<EmbeddingTable>,
    word_enc: Option<WordEncoderParams>,
    sent_rnn: Option<SentenceRnnParams>,
    policy: Option<PolicyParams>,
    basic_dec: Option<BasicDecoderParams>,
    shared_dec: Option<SharedComponentParams>,
    personal: Option<PersonalComponentParams>,
}

/// Resolved parameter references for one user's forward pass.
#[derive(Clone, Copy)]
pub struct NetView<'a> {
    pub emb: &'a EmbeddingTable,
    pub word_enc: &'a WordEncoderParams,
    pub sent_rnn: Option<&'a SentenceRnnParams>,
    pub policy: &'a PolicyParams,
    pub dec: DecView<'a>,
}

#[derive(Clone, Copy)]
pub enum DecView<'a> {
    Basic(&'a BasicDecoderParams),
    Personalized {
        shared: &'a SharedComponentParams,
        personal: &'a PersonalComponentParams,
    },
}

pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub sep_id: u32,
    pub users: Vec<String>,
    user_index: HashMap<String, usize>,
    pub store: ParamStore,
    shared: NetSet,
    per_user: Vec<NetSet>,
    shared_param_ids: Vec<ParamId>,
    user_param_ids: Vec<Vec<ParamId>>,
}

impl Model {
    /// Build a freshly initialized model. `users` is sorted internally so the
    /// parameter layout is a pure function of (kind, config, vocab, users,
    /// init_seed).
    pub fn build(
        kind: ModelKind,
        config: ModelConfig,
        mut vocab: Vocabulary,
        users: &[String],
        init_seed: u64,
    ) -> Self {
        let sep_id = vocab.add_special(SEP_TOKEN);
        let mut users: Vec<String> = users.to_vec();
        users.sort();
        users.dedup();

        let mut store = ParamStore::new();
        let mut rng = seeded(init_seed);
        let dims = DecoderDims {
            d_hidden: config.d_hidden,
            d_emb: config.d_emb,
            d_ctx: config.d_hidden,
        };
        let vocab_size = vocab.len();

        let build_set = |store: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, what: SetSpec| {
            let mut set = NetSet::default();
            if what.emb {
                set.emb = Some(EmbeddingTable::init(
                    store, prefix, vocab_size, config.d_emb, config.d_hidden, rng,
                ));
            }
            if what.word_enc {
                set.word_enc = Some(WordEncoderParams::init(
                    store, prefix, config.d_hidden, config.d_emb, rng,
                ));
            }
            if what.sent_rnn {
                set.sent_rnn = Some(SentenceRnnParams::init(
                    store, prefix, config.d_hidden, config.d_hidden, rng,
                ));
            }
            if what.policy {
                set.policy = Some(PolicyParams::init(
                    store, prefix, config.d_hidden, config.d_hidden, rng,
                ));
            }
            if what.basic_dec {
                set.basic_dec = Some(BasicDecoderParams::init(store, prefix, dims, rng));
            }
            if what.shared_dec {
                set.shared_dec = Some(SharedComponentParams::init(
                    store,
                    &format!("{prefix}pdec."),
                    dims,
                    rng,
                ));
            }
            if what.personal {
                set.personal = Some(PersonalComponentParams::init(store, prefix, dims, rng));
            }
            set
        };

        let (shared_spec, user_spec) = sharing_table(kind);
        let shared = build_set(&mut store, &mut rng, "shared.", shared_spec);
        let shared_param_ids: Vec<ParamId> = (0..store.len()).map(ParamId).collect();

        let mut per_user = Vec::new();
        let mut user_param_ids = Vec::new();
        for user in &users {
            let start = store.len();
            let set = build_set(&mut store, &mut rng, &format!("user.{user}."), user_spec);
            user_param_ids.push((start..store.len()).map(ParamId).collect());
            per_user.push(set);
        }

        let user_index = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();

        Model {
            kind,
            config,
            vocab,
            sep_id,
            users,
            user_index,
            store,
            shared,
            per_user,
            shared_param_ids,
            user_param_ids,
        }
    }

    pub fn user_index(&self, user_id: &str) -> Result<usize> {
        self.user_index
            .get(user_id)
            .copied()
            .ok_or_else(|| Error::UnknownUser(user_id.to_string(), self.users.clone()))
    }

    /// Ids of parameters shared across users (empty for none-transfer kinds).
    pub fn shared_param_ids(&self) -> &[ParamId] {
        &self.shared_param_ids
    }

    /// Ids of parameters private to one user.
    pub fn user_param_ids(&self, user: usize) -> &[ParamId] {
        &self.user_param_ids[user]
    }

    /// Shared ids plus the given user's private ids: everything one user's
    /// data may legitimately move.
    pub fn trainable_ids(&self, user: usize) -> Vec<ParamId> {
        let mut ids = self.shared_param_ids.clone();
        ids.extend_from_slice(&self.user_param_ids[user]);
        ids
    }

    /// Resolve the parameter view for one user according to the sharing
    /// table.
    pub fn view(&self, user_id: &str) -> Result<NetView<'_>> {
        let u = self.user_index(user_id)?;
        let shared = &self.shared;
        let mine = &self.per_user[u];
        let pick_emb = mine.emb.as_ref().or(shared.emb.as_ref()).expect("emb wired");
        let pick_enc = mine
            .word_enc
            .as_ref()
            .or(shared.word_enc.as_ref())
            .expect("encoder wired");
        let pick_policy = mine
            .policy
            .as_ref()
            .or(shared.policy.as_ref())
            .expect("policy wired");
        let sent = mine.sent_rnn.as_ref().or(shared.sent_rnn.as_ref());
        let dec = if let Some(personal) = mine.personal.as_ref() {
            DecView::Personalized {
                shared: shared.shared_dec.as_ref().expect("shared component wired"),
                personal,
            }
        } else {
            DecView::Basic(
                mine.basic_dec
                    .as_ref()
                    .or(shared.basic_dec.as_ref())
                    .expect("decoder wired"),
            )
        };
        Ok(NetView {
            emb: pick_emb,
            word_enc: pick_enc,
            sent_rnn: sent,
            policy: pick_policy,
            dec,
        })
    }

    pub fn eos_id(&self) -> u32 {
        EOS
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<u32> {
        self.vocab.encode_all(tokens)
    }

    /// Start an incremental dialogue context for one dialogue.
    pub fn context_begin(&self, tape: &mut Tape) -> ContextThread {
        let zero = tape.zeros(self.config.d_hidden);
        ContextThread {
            state: zero,
            prev_response: zero,
            flat_hidden: zero,
            any_flat_tokens: false,
        }
    }

    /// Feed the next user question and produce the decoder inputs
    /// (h_ctx, h_init) for responding to it.
    pub fn context_question(
        &self,
        tape: &mut Tape,
        view: &NetView<'_>,
        thread: &mut ContextThread,
        question_ids: &[u32],
    ) -> (Var, Var) {
        let h_ctx = if self.kind.is_hred() {
            let q_embs = self.embed_all(tape, view, question_ids);
            let q_enc = encode_continue(tape, &self.store, view.word_enc, None, &q_embs);
            let sent = view.sent_rnn.expect("HRED has a sentence RNN");
            let new_state = advance_dialogue_state(
                tape,
                &self.store,
                sent,
                thread.state,
                thread.prev_response,
                q_enc,
            );
            thread.state = new_state;
            new_state
        } else {
            self.flat_append(tape, view, thread, question_ids);
            thread.flat_hidden
        };
        let h_init = policy_project(tape, &self.store, view.policy, h_ctx);
        (h_ctx, h_init)
    }

    /// Record the agent response that closed the current turn.
    pub fn context_response(
        &self,
        tape: &mut Tape,
        view: &NetView<'_>,
        thread: &mut ContextThread,
        response_ids: &[u32],
    ) {
        if self.kind.is_hred() {
            let y_embs = self.embed_all(tape, view, response_ids);
            thread.prev_response = encode_continue(tape, &self.store, view.word_enc, None, &y_embs);
        } else {
            self.flat_append(tape, view, thread, response_ids);
        }
    }

    fn flat_append(
        &self,
        tape: &mut Tape,
        view: &NetView<'_>,
        thread: &mut ContextThread,
        ids: &[u32],
    ) {
        let mut with_sep: Vec<u32> = Vec::with_capacity(ids.len() + 1);
        if thread.any_flat_tokens {
            with_sep.push(self.sep_id);
        }
        with_sep.extend_from_slice(ids);
        if with_sep.is_empty() {
            return;
        }
        let embs = self.embed_all(tape, view, &with_sep);
        thread.flat_hidden = encode_continue(
            tape,
            &self.store,
            view.word_enc,
            Some(thread.flat_hidden),
            &embs,
        );
        thread.any_flat_tokens = true;
    }

    fn embed_all(&self, tape: &mut Tape, view: &NetView<'_>, ids: &[u32]) -> Vec<Var> {
        ids.iter()
            .map(|&id| view.emb.embed(tape, &self.store, id))
            .collect()
    }

    /// Decoder inputs for responding to `question` after `history`
    /// (completed (question, response) turns).
    pub fn forward_context(
        &self,
        tape: &mut Tape,
        user_id: &str,
        history: &[(Vec<u32>, Vec<u32>)],
        question: &[u32],
    ) -> Result<(Var, Var)> {
        let view = self.view(user_id)?;
        let mut thread = self.context_begin(tape);
        for (x, y) in history {
            let _ = self.context_question(tape, &view, &mut thread, x);
            self.context_response(tape, &view, &mut thread, y);
        }
        Ok(self.context_question(tape, &view, &mut thread, question))
    }

    /// Teacher-force one response. Gate labels are consumed only by the
    /// personalized decoder; basic variants score words alone.
    #[allow(clippy::too_many_arguments)]
    pub fn score_turn(
        &self,
        tape: &mut Tape,
        view: &NetView<'_>,
        h_ctx: Var,
        h_init: Var,
        targets: &[u32],
        gate_labels: &[u8],
        append_eos: bool,
    ) -> TeacherForced {
        let eos = append_eos.then_some(self.eos_id());
        match view.dec {
            DecView::Basic(params) => teacher_force_basic(
                tape,
                &self.store,
                params,
                view.emb,
                h_ctx,
                h_init,
                targets,
                eos,
            ),
            DecView::Personalized { shared, personal } => teacher_force_personalized(
                tape,
                &self.store,
                shared,
                personal,
                view.emb,
                h_ctx,
                h_init,
                self.config.candidate_nonlinearity,
                targets,
                gate_labels,
                eos,
            ),
        }
    }

    /// Free-running decode of one response.
    pub fn decode_turn(
        &self,
        tape: &mut Tape,
        view: &NetView<'_>,
        h_ctx: Var,
        h_init: Var,
        mode: DecodeMode,
        rng: &mut ChaCha8Rng,
    ) -> DecodeResult {
        match view.dec {
            DecView::Basic(params) => decode_basic(
                tape,
                &self.store,
                params,
                view.emb,
                h_ctx,
                h_init,
                mode,
                self.config.max_len,
                self.eos_id(),
                rng,
            ),
            DecView::Personalized { shared, personal } => decode_personalized(
                tape,
                &self.store,
                shared,
                personal,
                view.emb,
                h_ctx,
                h_init,
                self.config.candidate_nonlinearity,
                mode,
                self.config.max_len,
                self.eos_id(),
                rng,
            ),
        }
    }
}

/// Incremental dialogue context: the sentence-RNN state and previous response
/// encoding for HRED, or the running flat-history hidden for seq2seq.
pub struct ContextThread {
    state: Var,
    prev_response: Var,
    flat_hidden: Var,
    any_flat_tokens: bool,
}

#[derive(Clone, Copy)]
struct SetSpec {
    emb: bool,
    word_enc: bool,
    sent_rnn: bool,
    policy: bool,
    basic_dec: bool,
    shared_dec: bool,
    personal: bool,
}

const NOTHING: SetSpec = SetSpec {
    emb: false,
    word_enc: false,
    sent_rnn: false,
    policy: false,
    basic_dec: false,
    shared_dec: false,
    personal: false,
};

/// Which components live in the shared set vs each user's private set.
fn sharing_table(kind: ModelKind) -> (SetSpec, SetSpec) {
    match kind {
        ModelKind::S2S => (
            NOTHING,
            SetSpec {
                emb: true,
                word_enc: true,
                policy: true,
                basic_dec: true,
                ..NOTHING
            },
        ),
        ModelKind::Hred => (
            NOTHING,
            SetSpec {
                emb: true,
                word_enc: true,
                sent_rnn: true,
                policy: true,
                basic_dec: true,
                ..NOTHING
            },
        ),
        ModelKind::StS2S => (
            SetSpec {
                emb: true,
                word_enc: true,
                policy: true,
                basic_dec: true,
                ..NOTHING
            },
            NOTHING,
        ),
        ModelKind::StHred => (
            SetSpec {
                emb: true,
                word_enc: true,
                sent_rnn: true,
                policy: true,
                basic_dec: true,
                ..NOTHING
            },
            NOTHING,
        ),
        ModelKind::StES2S => (
            SetSpec {
                emb: true,
                word_enc: true,
                policy: true,
                ..NOTHING
            },
            SetSpec {
                basic_dec: true,
                ..NOTHING
            },
        ),
        ModelKind::PtS2S => (
            SetSpec {
                emb: true,
                word_enc: true,
                policy: true,
                shared_dec: true,
                ..NOTHING
            },
            SetSpec {
                personal: true,
                ..NOTHING
            },
        ),
        ModelKind::PtHred => (
            SetSpec {
                emb: true,
                word_enc: true,
                sent_rnn: true,
                policy: true,
                shared_dec: true,
                ..NOTHING
            },
            SetSpec {
                personal: true,
                ..NOTHING
            },
        ),
    }
}
