//! Rule-based coffee-ordering user simulator.
//!
//! A simulated user opens a dialogue wanting either their usual order
//! (p = 0.8) or something new (p = 0.2), answers slot questions truthfully,
//! confirms a correct full-order suggestion (ending the task), and rejects
//! wrong suggestions or non-logical chatter. Rewards follow the fixed event
//! values in [`crate::training::RewardEvent`].
//!
//! The scripted ground-truth agent (best reply w.p. 0.8, random template
//! w.p. 0.2) generates the labeled training and test corpora. At evaluation
//! time a trained model drives the agent side instead, choosing among
//! rendered candidate templates by length-normalized generative probability.

use crate::corpus::{Dialogue, Turn};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng;
use crate::tape::Tape;
use crate::templates::{Slot, SlotValues, TemplateSet};
use crate::training::{turn_reward, RewardEvent};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::path::Path;

pub const COFFEE_TYPES: [&str; 5] = ["latte", "macchiato", "mocha", "americano", "espresso"];
pub const TEMPERATURES: [&str; 2] = ["hot", "iced"];
pub const SIZES: [&str; 3] = ["short", "tall", "grande"];

const ADDR_BUILDINGS: [&str; 3] = ["tower", "building", "suite"];
const ADDR_NUMBERS: [&str; 10] = ["3", "7", "8", "12", "15", "21", "27", "33", "42", "54"];
const ADDR_NAMES: [&str; 10] = [
    "maple", "rose", "cedar", "jade", "harbor", "sunset", "lotus", "pearl", "willow", "ocean",
];
const ADDR_ROADS: [&str; 4] = ["street", "road", "avenue", "lane"];

/// Dialogues force-terminate after this many exchanges...
pub const MAX_EXCHANGES: usize = 12;
/// ...or after this many rejections.
pub const MAX_REJECTIONS: usize = 2;

/// Probability the simulated user orders their favorite coffee.
pub const P_FAVORITE: f64 = 0.8;
/// Probability the ground-truth agent plays the best reply.
pub const P_BEST_REPLY: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub favorite_type: String,
    pub favorite_temperature: String,
    pub favorite_size: String,
    pub address: Vec<String>,
}

impl UserProfile {
    pub fn favorite_values(&self) -> SlotValues {
        SlotValues {
            coffee_type: self.favorite_type.clone(),
            temperature: self.favorite_temperature.clone(),
            size: self.favorite_size.clone(),
            address: self.address.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderGoal {
    pub values: SlotValues,
    pub is_favorite: bool,
}

impl OrderGoal {
    fn value_tokens(&self, slot: Slot) -> Vec<String> {
        match slot {
            Slot::Type => vec![self.values.coffee_type.clone()],
            Slot::Temp => vec![self.values.temperature.clone()],
            Slot::Size => vec![self.values.size.clone()],
            Slot::Addr => self.values.address.clone(),
        }
    }
}

impl serde::Serialize for SlotValues {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SlotValues", 4)?;
        st.serialize_field("type", &self.coffee_type)?;
        st.serialize_field("temperature", &self.temperature)?;
        st.serialize_field("size", &self.size)?;
        st.serialize_field("address", &self.address)?;
        st.end()
    }
}

impl<'de> serde::Deserialize<'de> for SlotValues {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(rename = "type")]
            coffee_type: String,
            temperature: String,
            size: String,
            address: Vec<String>,
        }
        let raw = Raw::deserialize(d)?;
        Ok(SlotValues {
            coffee_type: raw.coffee_type,
            temperature: raw.temperature,
            size: raw.size,
            address: raw.address,
        })
    }
}

/// Draw one profile; favorites are uniform, the address is a fresh 4-token
/// sequence from the pools.
pub fn sample_profile(user_id: &str, rng: &mut ChaCha8Rng) -> UserProfile {
    UserProfile {
        user_id: user_id.to_string(),
        favorite_type: pick(&COFFEE_TYPES, rng),
        favorite_temperature: pick(&TEMPERATURES, rng),
        favorite_size: pick(&SIZES, rng),
        address: sample_address(rng),
    }
}

fn sample_address(rng: &mut ChaCha8Rng) -> Vec<String> {
    vec![
        pick(&ADDR_BUILDINGS, rng),
        pick(&ADDR_NUMBERS, rng),
        pick(&ADDR_NAMES, rng),
        pick(&ADDR_ROADS, rng),
    ]
}

fn pick(pool: &[&str], rng: &mut ChaCha8Rng) -> String {
    pool[rng.gen_range(0..pool.len())].to_string()
}

/// Draw `n` profiles with pairwise-distinct addresses.
pub fn sample_profiles(n: usize, rng: &mut ChaCha8Rng) -> Vec<UserProfile> {
    let mut used = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut profile = sample_profile(&format!("user_{i:02}"), rng);
        while !used.insert(profile.address.clone()) {
            profile.address = sample_address(rng);
        }
        out.push(profile);
    }
    out
}

/// Goal of one dialogue: the favorites with p = 0.8, otherwise uniformly
/// resampled (type, temperature, size) differing from the favorites in at
/// least one slot. The address is always the profile's.
pub fn sample_goal(profile: &UserProfile, rng: &mut ChaCha8Rng) -> OrderGoal {
    if rng.gen::<f64>() < P_FAVORITE {
        return OrderGoal {
            values: profile.favorite_values(),
            is_favorite: true,
        };
    }
    loop {
        let values = SlotValues {
            coffee_type: pick(&COFFEE_TYPES, rng),
            temperature: pick(&TEMPERATURES, rng),
            size: pick(&SIZES, rng),
            address: profile.address.clone(),
        };
        if values.coffee_type != profile.favorite_type
            || values.temperature != profile.favorite_temperature
            || values.size != profile.favorite_size
        {
            return OrderGoal {
                values,
                is_favorite: false,
            };
        }
    }
}

/// Template inventories in play for a simulation.
#[derive(Debug, Clone)]
pub struct SimEnv {
    pub agent_templates: TemplateSet,
    pub user_templates: TemplateSet,
}

impl SimEnv {
    pub fn builtin() -> Self {
        SimEnv {
            agent_templates: TemplateSet::builtin_agent(),
            user_templates: TemplateSet::builtin_user(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Failure,
}

/// Simulator-side dialogue state.
#[derive(Debug, Clone)]
pub struct SimState {
    pub goal: OrderGoal,
    /// Slot kinds whose values have been surfaced to the agent (stated in an
    /// answer, or implied wholesale by a usual-order opening).
    pub confirmed: BTreeSet<Slot>,
    pub turn: usize,
    pub rejections: usize,
    pub terminal: bool,
    pub outcome: Option<Outcome>,
    pub events: Vec<(usize, RewardEvent)>,
    info_given: BTreeSet<Slot>,
    last_utterance: Vec<String>,
}

/// The user's reaction to one agent response.
#[derive(Debug, Clone)]
pub struct UserReaction {
    pub utterance: Vec<String>,
    pub events: Vec<RewardEvent>,
}

impl SimState {
    pub fn new(goal: OrderGoal) -> Self {
        SimState {
            goal,
            confirmed: BTreeSet::new(),
            turn: 0,
            rejections: 0,
            terminal: false,
            outcome: None,
            events: Vec::new(),
            info_given: BTreeSet::new(),
            last_utterance: Vec::new(),
        }
    }

    /// The user's opening line. A usual-order opening reveals the whole goal
    /// to the scripted agent (which knows the profile); a try-new opening
    /// reveals nothing.
    pub fn opening(&mut self, env: &SimEnv) -> Vec<String> {
        let name = if self.goal.is_favorite {
            self.confirmed = Slot::ALL.into_iter().collect();
            "open_usual"
        } else {
            "open_new"
        };
        let (tokens, _) = env.user_templates.get(name).render(None);
        self.last_utterance = tokens.clone();
        tokens
    }

    /// React to one agent response: answer questions, accept or reject
    /// confirmations, and emit the turn's reward events.
    pub fn respond(&mut self, env: &SimEnv, agent_utterance: &[String]) -> UserReaction {
        assert!(!self.terminal, "respond() on a terminal dialogue");
        let parsed = env.agent_templates.match_utterance(agent_utterance);
        let mut events = Vec::new();
        let utterance = match parsed {
            Some((template, captures)) => match template.name.as_str() {
                "ask_type" => self.answer(env, Slot::Type, &mut events),
                "ask_temp" => self.answer(env, Slot::Temp, &mut events),
                "ask_size" => self.answer(env, Slot::Size, &mut events),
                "ask_addr" => self.answer(env, Slot::Addr, &mut events),
                "confirm" => {
                    let correct = Slot::ALL
                        .iter()
                        .all(|&s| captures.get(&s).map(|v| v.as_slice()) == Some(self.goal.value_tokens(s).as_slice()));
                    if correct {
                        events.push(RewardEvent::ConfirmPersonal);
                        events.push(RewardEvent::TaskSuccess);
                        self.terminal = true;
                        self.outcome = Some(Outcome::Success);
                        env.user_templates.get("confirm_yes").render(None).0
                    } else {
                        self.reject(env, &mut events)
                    }
                }
                "repeat" => self.last_utterance.clone(),
                // Greetings or sign-offs mid-task read as non-logical.
                _ => self.reject(env, &mut events),
            },
            None => self.reject(env, &mut events),
        };
        events.push(RewardEvent::TurnPenalty);

        self.turn += 1;
        if !self.terminal && self.turn >= MAX_EXCHANGES {
            self.terminal = true;
            self.outcome = Some(Outcome::Failure);
        }
        for &e in &events {
            self.events.push((self.turn, e));
        }
        self.last_utterance = utterance.clone();
        UserReaction { utterance, events }
    }

    fn answer(&mut self, env: &SimEnv, slot: Slot, events: &mut Vec<RewardEvent>) -> Vec<String> {
        // Information reward only the first time a slot is provided.
        if self.info_given.insert(slot) {
            events.push(RewardEvent::ProvideInfo);
        }
        self.confirmed.insert(slot);
        let name = match slot {
            Slot::Type => "answer_type",
            Slot::Temp => "answer_temp",
            Slot::Size => "answer_size",
            Slot::Addr => "answer_addr",
        };
        let values = SlotValues {
            coffee_type: self.goal.values.coffee_type.clone(),
            temperature: self.goal.values.temperature.clone(),
            size: self.goal.values.size.clone(),
            address: self.goal.values.address.clone(),
        };
        env.user_templates.get(name).render(Some(&values)).0
    }

    fn reject(&mut self, env: &SimEnv, events: &mut Vec<RewardEvent>) -> Vec<String> {
        events.push(RewardEvent::Reject);
        self.rejections += 1;
        if self.rejections >= MAX_REJECTIONS {
            self.terminal = true;
            self.outcome = Some(Outcome::Failure);
        }
        env.user_templates.get("reject_no").render(None).0
    }

    pub fn total_reward(&self) -> f64 {
        self.events.iter().map(|(_, e)| e.value()).sum()
    }
}

/// An agent policy driving the system side of a rollout.
pub trait AgentPolicy {
    fn reply(&mut self, user_utterance: &[String]) -> Result<(Vec<String>, Vec<u8>)>;
}

/// The best scripted reply: ask the first slot (type, temperature, size,
/// address) whose value is not yet known, or confirm the full order once
/// everything is.
pub fn best_reply(env: &SimEnv, known: &BTreeSet<Slot>, goal: &OrderGoal) -> (Vec<String>, Vec<u8>) {
    for slot in Slot::ALL {
        if !known.contains(&slot) {
            let name = match slot {
                Slot::Type => "ask_type",
                Slot::Temp => "ask_temp",
                Slot::Size => "ask_size",
                Slot::Addr => "ask_addr",
            };
            return env.agent_templates.get(name).render(None);
        }
    }
    env.agent_templates.get("confirm").render(Some(&goal.values))
}

/// Scripted data-generating agent: best reply w.p. 0.8, else a uniformly
/// random template (confirmations rendered with the goal values it knows as
/// the oracle).
pub struct GroundTruthAgent<'a> {
    env: &'a SimEnv,
    goal: OrderGoal,
    known: BTreeSet<Slot>,
    opened: bool,
}

impl<'a> GroundTruthAgent<'a> {
    pub fn new(env: &'a SimEnv, goal: OrderGoal) -> Self {
        GroundTruthAgent {
            env,
            goal,
            known: BTreeSet::new(),
            opened: false,
        }
    }

    pub fn reply_with(&mut self, user_utterance: &[String], rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<u8>) {
        if !self.opened {
            self.opened = true;
            let usual = self.env.user_templates.get("open_usual").render(None).0;
            if user_utterance == usual.as_slice() {
                self.known = Slot::ALL.into_iter().collect();
            }
        }
        let (tokens, labels) = if rng.gen::<f64>() < P_BEST_REPLY {
            best_reply(self.env, &self.known, &self.goal)
        } else {
            self.random_reply(rng)
        };
        // Asking a slot means the user's answer will surface its value.
        if let Some((t, _)) = self.env.agent_templates.match_utterance(&tokens) {
            match t.name.as_str() {
                "ask_type" => drop(self.known.insert(Slot::Type)),
                "ask_temp" => drop(self.known.insert(Slot::Temp)),
                "ask_size" => drop(self.known.insert(Slot::Size)),
                "ask_addr" => drop(self.known.insert(Slot::Addr)),
                _ => {}
            }
        }
        (tokens, labels)
    }

    fn random_reply(&self, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<u8>) {
        let idx = rng.gen_range(0..self.env.agent_templates.len());
        let template = self.env.agent_templates.iter().nth(idx).expect("in range");
        if template.has_slots() {
            template.render(Some(&self.goal.values))
        } else {
            template.render(None)
        }
    }
}

/// One completed simulated dialogue with full reward bookkeeping.
#[derive(Debug, Clone)]
pub struct SimRecord {
    pub dialogue: Dialogue,
    pub per_turn_events: Vec<Vec<RewardEvent>>,
    pub outcome: Outcome,
    pub total_reward: f64,
    pub goal: OrderGoal,
}

/// Drive one dialogue to completion against an agent policy.
pub fn rollout<F>(env: &SimEnv, user_id: &str, goal: OrderGoal, mut agent: F) -> Result<SimRecord>
where
    F: FnMut(&[String]) -> Result<(Vec<String>, Vec<u8>)>,
{
    let mut state = SimState::new(goal.clone());
    let mut x = state.opening(env);
    let mut turns = Vec::new();
    let mut per_turn_events = Vec::new();
    while !state.terminal {
        let (y, o) = agent(&x)?;
        let reaction = state.respond(env, &y);
        turns.push(Turn {
            x: std::mem::take(&mut x),
            y,
            o,
            r: turn_reward(&reaction.events),
        });
        per_turn_events.push(reaction.events);
        x = reaction.utterance;
    }
    let total_reward = state.total_reward();
    Ok(SimRecord {
        dialogue: Dialogue {
            user_id: user_id.to_string(),
            turns,
        },
        per_turn_events,
        outcome: state.outcome.expect("terminal dialogue has an outcome"),
        total_reward,
        goal,
    })
}

/// Roll one dialogue with the scripted ground-truth agent.
pub fn generate_dialogue(env: &SimEnv, profile: &UserProfile, rng: &mut ChaCha8Rng) -> SimRecord {
    let goal = sample_goal(profile, rng);
    let mut agent = GroundTruthAgent::new(env, goal.clone());
    rollout(env, &profile.user_id, goal, |utt| {
        Ok(agent.reply_with(utt, rng))
    })
    .expect("scripted agent cannot fail")
}

#[derive(Debug, Clone)]
pub struct CorpusBundle {
    pub train: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub profiles: Vec<UserProfile>,
}

impl CorpusBundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::corpus::write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        crate::corpus::write_jsonl(&dir.join("test.jsonl"), &self.test)?;
        let file = std::io::BufWriter::new(std::fs::File::create(dir.join("profiles.json"))?);
        serde_json::to_writer_pretty(file, &self.profiles)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let train = crate::corpus::read_jsonl(&dir.join("train.jsonl"))?;
        let test = crate::corpus::read_jsonl(&dir.join("test.jsonl"))?;
        let profiles: Vec<UserProfile> =
            serde_json::from_reader(std::fs::File::open(dir.join("profiles.json"))?)?;
        Ok(CorpusBundle {
            train,
            test,
            profiles,
        })
    }
}

/// Generate the labeled train/test corpora by rolling the ground-truth agent
/// against the simulator. Defaults reproduce the published corpus shape:
/// 10 users, 5 training and 200 test dialogues each.
pub fn generate_corpus(
    n_users: usize,
    train_per_user: usize,
    test_per_user: usize,
    seed: u64,
) -> CorpusBundle {
    let env = SimEnv::builtin();
    let mut profile_rng = rng::derive(seed, &[0]);
    let profiles = sample_profiles(n_users, &mut profile_rng);
    let mut train = Vec::with_capacity(n_users * train_per_user);
    let mut test = Vec::with_capacity(n_users * test_per_user);
    for (u, profile) in profiles.iter().enumerate() {
        for i in 0..train_per_user {
            let mut d_rng = rng::derive(seed, &[1, u as u64, i as u64]);
            train.push(generate_dialogue(&env, profile, &mut d_rng).dialogue);
        }
        for i in 0..test_per_user {
            let mut d_rng = rng::derive(seed, &[2, u as u64, i as u64]);
            test.push(generate_dialogue(&env, profile, &mut d_rng).dialogue);
        }
    }
    CorpusBundle {
        train,
        test,
        profiles,
    }
}

/// Slot value inventories known to the candidate renderer and the
/// slot-error metric.
#[derive(Debug, Clone)]
pub struct SlotInventory {
    pub types: Vec<String>,
    pub temperatures: Vec<String>,
    pub sizes: Vec<String>,
    pub addresses: Vec<Vec<String>>,
}

impl SlotInventory {
    pub fn from_profiles(profiles: &[UserProfile]) -> Self {
        SlotInventory {
            types: COFFEE_TYPES.iter().map(|s| s.to_string()).collect(),
            temperatures: TEMPERATURES.iter().map(|s| s.to_string()).collect(),
            sizes: SIZES.iter().map(|s| s.to_string()).collect(),
            addresses: profiles.iter().map(|p| p.address.clone()).collect(),
        }
    }
}

/// What the agent side has literally been told so far in one dialogue.
#[derive(Debug, Clone, Default)]
pub struct AgentBelief {
    pub coffee_type: Option<String>,
    pub temperature: Option<String>,
    pub size: Option<String>,
    pub address: Option<Vec<String>>,
}

impl AgentBelief {
    fn unknown_count(&self) -> usize {
        [
            self.coffee_type.is_none(),
            self.temperature.is_none(),
            self.size.is_none(),
            self.address.is_none(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    fn consistent_with(&self, values: &SlotValues) -> bool {
        self.coffee_type.as_ref().is_none_or(|v| *v == values.coffee_type)
            && self.temperature.as_ref().is_none_or(|v| *v == values.temperature)
            && self.size.as_ref().is_none_or(|v| *v == values.size)
            && self.address.as_ref().is_none_or(|v| *v == values.address)
    }

    /// Update from a parsed user utterance.
    pub fn absorb(&mut self, env: &SimEnv, utterance: &[String]) {
        if let Some((t, captures)) = env.user_templates.match_utterance(utterance) {
            match t.name.as_str() {
                "answer_type" => self.coffee_type = captures.get(&Slot::Type).map(|v| v[0].clone()),
                "answer_temp" => self.temperature = captures.get(&Slot::Temp).map(|v| v[0].clone()),
                "answer_size" => self.size = captures.get(&Slot::Size).map(|v| v[0].clone()),
                "answer_addr" => self.address = captures.get(&Slot::Addr).cloned(),
                _ => {}
            }
        }
    }
}

/// A rendered candidate reply.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub labels: Vec<u8>,
    pub is_confirm: bool,
}

/// Render the agent's candidate set for the current belief: questions for
/// unknown slots, full-order confirmations (known customers' usual orders,
/// plus exact combinations once at most two slots are open), and the
/// no-slot templates. Previously rejected confirmations are dropped.
pub fn candidate_set(
    env: &SimEnv,
    inventory: &SlotInventory,
    profiles: &[UserProfile],
    belief: &AgentBelief,
    rejected: &HashSet<Vec<String>>,
) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut push = |out: &mut Vec<Candidate>, tokens: Vec<String>, labels: Vec<u8>, is_confirm: bool| {
        if !rejected.contains(&tokens) && seen.insert(tokens.clone()) {
            out.push(Candidate {
                tokens,
                labels,
                is_confirm,
            });
        }
    };

    let asks = [
        (belief.coffee_type.is_none(), "ask_type"),
        (belief.temperature.is_none(), "ask_temp"),
        (belief.size.is_none(), "ask_size"),
        (belief.address.is_none(), "ask_addr"),
    ];
    for (unknown, name) in asks {
        if unknown {
            let (tokens, labels) = env.agent_templates.get(name).render(None);
            push(&mut out, tokens, labels, false);
        }
    }

    let confirm = env.agent_templates.get("confirm");
    for profile in profiles {
        let values = profile.favorite_values();
        if belief.consistent_with(&values) {
            let (tokens, labels) = confirm.render(Some(&values));
            push(&mut out, tokens, labels, true);
        }
    }

    if belief.unknown_count() <= 2 {
        let types = option_pool(&belief.coffee_type, &inventory.types);
        let temps = option_pool(&belief.temperature, &inventory.temperatures);
        let sizes = option_pool(&belief.size, &inventory.sizes);
        let addrs: Vec<Vec<String>> = match &belief.address {
            Some(a) => vec![a.clone()],
            None => inventory.addresses.clone(),
        };
        for ty in &types {
            for temp in &temps {
                for size in &sizes {
                    for addr in &addrs {
                        let values = SlotValues {
                            coffee_type: ty.clone(),
                            temperature: temp.clone(),
                            size: size.clone(),
                            address: addr.clone(),
                        };
                        let (tokens, labels) = confirm.render(Some(&values));
                        push(&mut out, tokens, labels, true);
                    }
                }
            }
        }
    }

    for name in ["greet", "repeat", "closing"] {
        let (tokens, labels) = env.agent_templates.get(name).render(None);
        push(&mut out, tokens, labels, false);
    }
    out
}

fn option_pool(known: &Option<String>, pool: &[String]) -> Vec<String> {
    match known {
        Some(v) => vec![v.clone()],
        None => pool.to_vec(),
    }
}

/// Choose the candidate with the highest length-normalized teacher-forced
/// log-probability (words plus gate terms, end symbol included). Ties keep
/// the earliest candidate.
pub fn template_select<'a>(
    model: &Model,
    user_id: &str,
    history: &[(Vec<u32>, Vec<u32>)],
    question_ids: &[u32],
    candidates: &'a [Candidate],
) -> Result<&'a Candidate> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let view = model.view(user_id)?;
    let mut tape = Tape::new();
    let mut thread = model.context_begin(&mut tape);
    for (x, y) in history {
        let _ = model.context_question(&mut tape, &view, &mut thread, x);
        model.context_response(&mut tape, &view, &mut thread, y);
    }
    let (h_ctx, h_init) = model.context_question(&mut tape, &view, &mut thread, question_ids);

    let mut best = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (i, cand) in candidates.iter().enumerate() {
        let ids = model.encode_tokens(&cand.tokens);
        let tf = model.score_turn(&mut tape, &view, h_ctx, h_init, &ids, &cand.labels, true);
        let nll = tf.total_nll(&tape);
        let score = -nll / (ids.len() + 1) as f64;
        if score > best_score {
            best_score = score;
            best = i;
        }
    }
    Ok(&candidates[best])
}

/// Model-driven agent used for online evaluation: selects among rendered
/// candidates, tracking only what the user has literally said.
pub struct ModelAgent<'a> {
    model: &'a Model,
    env: &'a SimEnv,
    inventory: &'a SlotInventory,
    profiles: &'a [UserProfile],
    user_id: String,
    belief: AgentBelief,
    rejected: HashSet<Vec<String>>,
    history: Vec<(Vec<u32>, Vec<u32>)>,
    last_confirm: Option<Vec<String>>,
    reject_line: Vec<String>,
}

impl<'a> ModelAgent<'a> {
    pub fn new(
        model: &'a Model,
        env: &'a SimEnv,
        inventory: &'a SlotInventory,
        profiles: &'a [UserProfile],
        user_id: &str,
    ) -> Self {
        ModelAgent {
            model,
            env,
            inventory,
            profiles,
            user_id: user_id.to_string(),
            belief: AgentBelief::default(),
            rejected: HashSet::new(),
            history: Vec::new(),
            last_confirm: None,
            reject_line: env.user_templates.get("reject_no").render(None).0,
        }
    }
}

impl AgentPolicy for ModelAgent<'_> {
    fn reply(&mut self, user_utterance: &[String]) -> Result<(Vec<String>, Vec<u8>)> {
        if user_utterance == self.reject_line.as_slice() {
            if let Some(confirm) = self.last_confirm.take() {
                self.rejected.insert(confirm);
            }
        }
        self.belief.absorb(self.env, user_utterance);
        let candidates = candidate_set(
            self.env,
            self.inventory,
            self.profiles,
            &self.belief,
            &self.rejected,
        );
        let x_ids = self.model.encode_tokens(user_utterance);
        let chosen = template_select(self.model, &self.user_id, &self.history, &x_ids, &candidates)?;
        let (tokens, labels) = (chosen.tokens.clone(), chosen.labels.clone());
        self.last_confirm = chosen.is_confirm.then(|| tokens.clone());
        let y_ids = self.model.encode_tokens(&tokens);
        self.history.push((x_ids, y_ids));
        Ok((tokens, labels))
    }
}

/// Per-user and aggregate online metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineReport {
    pub per_user: Vec<UserOnline>,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub success_rate: f64,
    pub dialogues: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserOnline {
    pub user_id: String,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub success_rate: f64,
}

/// Simulate `n_orders_per_user` fresh dialogues per user with the trained
/// model choosing agent replies; report reward mean/std and success rate.
pub fn run_online_eval(
    model: &Model,
    profiles: &[UserProfile],
    n_orders_per_user: usize,
    seed: u64,
) -> Result<OnlineReport> {
    let env = SimEnv::builtin();
    let inventory = SlotInventory::from_profiles(profiles);
    let runs: Vec<Result<Vec<(f64, bool)>>> = profiles
        .par_iter()
        .enumerate()
        .map(|(u, profile)| {
            let mut rows = Vec::with_capacity(n_orders_per_user);
            for i in 0..n_orders_per_user {
                let mut d_rng = rng::derive(seed, &[3, u as u64, i as u64]);
                let goal = sample_goal(profile, &mut d_rng);
                let mut agent = ModelAgent::new(model, &env, &inventory, profiles, &profile.user_id);
                let record = rollout(&env, &profile.user_id, goal, |utt| agent.reply(utt))?;
                rows.push((record.total_reward, record.outcome == Outcome::Success));
            }
            Ok(rows)
        })
        .collect();

    let mut per_user = Vec::with_capacity(profiles.len());
    let mut all_rewards = Vec::new();
    let mut successes = 0usize;
    for (profile, rows) in profiles.iter().zip(runs) {
        let rows = rows?;
        let rewards: Vec<f64> = rows.iter().map(|(r, _)| *r).collect();
        let wins = rows.iter().filter(|(_, s)| *s).count();
        successes += wins;
        per_user.push(UserOnline {
            user_id: profile.user_id.clone(),
            mean_reward: mean(&rewards),
            reward_std: std_dev(&rewards),
            success_rate: wins as f64 / rows.len().max(1) as f64,
        });
        all_rewards.extend(rewards);
    }
    Ok(OnlineReport {
        mean_reward: mean(&all_rewards),
        reward_std: std_dev(&all_rewards),
        success_rate: successes as f64 / all_rewards.len().max(1) as f64,
        dialogues: all_rewards.len(),
        per_user,
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 points.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn goal_from(profile: &UserProfile) -> OrderGoal {
        OrderGoal {
            values: profile.favorite_values(),
            is_favorite: true,
        }
    }

    fn test_profile() -> UserProfile {
        UserProfile {
            user_id: "user_00".into(),
            favorite_type: "latte".into(),
            favorite_temperature: "hot".into(),
            favorite_size: "tall".into(),
            address: ["tower", "7", "maple", "street"].map(String::from).to_vec(),
        }
    }

    #[test]
    fn goal_address_is_always_the_profile_address() {
        let profile = test_profile();
        let mut rng = seeded(5);
        for _ in 0..200 {
            let goal = sample_goal(&profile, &mut rng);
            assert_eq!(goal.values.address, profile.address);
            if goal.is_favorite {
                assert_eq!(goal.values, profile.favorite_values());
            } else {
                assert_ne!(
                    (
                        &goal.values.coffee_type,
                        &goal.values.temperature,
                        &goal.values.size
                    ),
                    (
                        &profile.favorite_type,
                        &profile.favorite_temperature,
                        &profile.favorite_size
                    )
                );
            }
        }
    }

    #[test]
    fn profile_addresses_are_unique() {
        let profiles = sample_profiles(10, &mut seeded(3));
        let set: HashSet<_> = profiles.iter().map(|p| p.address.clone()).collect();
        assert_eq!(set.len(), 10);
        assert_eq!(profiles[3].user_id, "user_03");
    }

    #[test]
    fn asking_yields_answer_and_info_reward_once() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let mut state = SimState::new(goal_from(&profile));
        let _ = state.opening(&env);
        let (ask, _) = env.agent_templates.get("ask_size").render(None);

        let reaction = state.respond(&env, &ask);
        assert!(reaction.events.contains(&RewardEvent::ProvideInfo));
        assert!(reaction.utterance.contains(&"tall".to_string()));

        let again = state.respond(&env, &ask);
        assert!(!again.events.contains(&RewardEvent::ProvideInfo));
        assert_eq!(again.events, vec![RewardEvent::TurnPenalty]);
    }

    #[test]
    fn correct_confirmation_succeeds_and_terminates() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let mut state = SimState::new(goal_from(&profile));
        let _ = state.opening(&env);
        let (confirm, _) = env
            .agent_templates
            .get("confirm")
            .render(Some(&profile.favorite_values()));
        let reaction = state.respond(&env, &confirm);
        assert_eq!(
            reaction.events,
            vec![
                RewardEvent::ConfirmPersonal,
                RewardEvent::TaskSuccess,
                RewardEvent::TurnPenalty
            ]
        );
        assert!(state.terminal);
        assert_eq!(state.outcome, Some(Outcome::Success));
        assert!((state.total_reward() - 1.25).abs() < 1e-12);
    }

    #[test]
    fn wrong_confirmation_is_rejected() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let mut state = SimState::new(goal_from(&profile));
        let _ = state.opening(&env);
        let mut wrong = profile.favorite_values();
        wrong.temperature = "iced".into();
        let (confirm, _) = env.agent_templates.get("confirm").render(Some(&wrong));
        let reaction = state.respond(&env, &confirm);
        assert!(reaction.events.contains(&RewardEvent::Reject));
        assert!(!state.terminal);
        let reaction = state.respond(&env, &confirm);
        assert!(reaction.events.contains(&RewardEvent::Reject));
        assert!(state.terminal, "patience is two rejections");
        assert_eq!(state.outcome, Some(Outcome::Failure));
    }

    #[test]
    fn unparseable_and_chatter_count_toward_rejection() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let mut state = SimState::new(goal_from(&profile));
        let _ = state.opening(&env);
        let gibberish: Vec<String> = ["blue", "moon"].map(String::from).to_vec();
        let reaction = state.respond(&env, &gibberish);
        assert!(reaction.events.contains(&RewardEvent::Reject));
        let (greet, _) = env.agent_templates.get("greet").render(None);
        let reaction = state.respond(&env, &greet);
        assert!(reaction.events.contains(&RewardEvent::Reject));
        assert!(state.terminal);
    }

    #[test]
    fn repeat_reissues_the_last_user_line() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let mut state = SimState::new(goal_from(&profile));
        let opening = state.opening(&env);
        let (repeat, _) = env.agent_templates.get("repeat").render(None);
        let reaction = state.respond(&env, &repeat);
        assert_eq!(reaction.utterance, opening);
        assert_eq!(reaction.events, vec![RewardEvent::TurnPenalty]);
    }

    #[test]
    fn best_reply_follows_slot_order_then_confirms() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let goal = goal_from(&profile);
        let mut known = BTreeSet::new();
        let (ask, _) = best_reply(&env, &known, &goal);
        assert_eq!(ask, env.agent_templates.get("ask_type").render(None).0);
        known.insert(Slot::Type);
        let (ask, _) = best_reply(&env, &known, &goal);
        assert_eq!(ask, env.agent_templates.get("ask_temp").render(None).0);
        known.extend([Slot::Temp, Slot::Size, Slot::Addr]);
        let (confirm, labels) = best_reply(&env, &known, &goal);
        assert!(env
            .agent_templates
            .get("confirm")
            .matches(&confirm)
            .is_some());
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 7);
    }

    #[test]
    fn dialogues_terminate_for_any_policy() {
        // A policy of pure noise still ends within the exchange budget.
        let env = SimEnv::builtin();
        let profile = test_profile();
        let record = rollout(&env, "user_00", goal_from(&profile), |_utt| {
            Ok((vec!["noise".to_string()], vec![0]))
        })
        .unwrap();
        assert!(record.dialogue.turns.len() <= MAX_EXCHANGES);
        assert_eq!(record.outcome, Outcome::Failure);
    }

    #[test]
    fn rollout_reward_equals_event_sum() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        for seed in 0..20 {
            let mut rng = seeded(seed);
            let record = generate_dialogue(&env, &profile, &mut rng);
            let from_turns: f64 = record.dialogue.turns.iter().map(|t| t.r).sum();
            let from_events: f64 = record
                .per_turn_events
                .iter()
                .flatten()
                .map(|e| e.value())
                .sum();
            assert!((from_turns - record.total_reward).abs() < 1e-12);
            assert!((from_events - record.total_reward).abs() < 1e-12);
        }
    }

    #[test]
    fn generated_labels_align_and_point_at_goal_values() {
        let env = SimEnv::builtin();
        let profile = test_profile();
        let mut rng = seeded(11);
        for _ in 0..30 {
            let record = generate_dialogue(&env, &profile, &mut rng);
            for turn in &record.dialogue.turns {
                assert_eq!(turn.o.len(), turn.y.len());
                for (tok, &label) in turn.y.iter().zip(&turn.o) {
                    if label == 1 {
                        let in_goal = record.goal.values.coffee_type == *tok
                            || record.goal.values.temperature == *tok
                            || record.goal.values.size == *tok
                            || record.goal.values.address.contains(tok);
                        assert!(in_goal, "label-1 token `{tok}` not a goal slot value");
                    }
                }
            }
        }
    }

    #[test]
    fn corpus_defaults_match_published_shape() {
        let bundle = generate_corpus(10, 5, 200, 123);
        assert_eq!(bundle.train.len(), 50);
        assert_eq!(bundle.test.len(), 2000);
        assert_eq!(bundle.profiles.len(), 10);
    }

    #[test]
    fn candidate_set_shrinks_as_belief_fills() {
        let env = SimEnv::builtin();
        let profiles = sample_profiles(10, &mut seeded(9));
        let inventory = SlotInventory::from_profiles(&profiles);
        let empty = AgentBelief::default();
        let none_known = candidate_set(&env, &inventory, &profiles, &empty, &HashSet::new());
        // 4 asks + 10 usual orders + 3 chatter templates.
        assert_eq!(none_known.len(), 17);

        let full = AgentBelief {
            coffee_type: Some("latte".into()),
            temperature: Some("hot".into()),
            size: Some("tall".into()),
            address: Some(profiles[0].address.clone()),
        };
        let all_known = candidate_set(&env, &inventory, &profiles, &full, &HashSet::new());
        // One exact confirmation, possibly one matching usual order, chatter.
        assert!(all_known.iter().filter(|c| c.is_confirm).count() <= 2);
        assert!(all_known.iter().all(|c| !c.tokens.is_empty()));
    }
}
