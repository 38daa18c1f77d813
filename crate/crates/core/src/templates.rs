//! Template inventories: parsing the versioned data files, rendering with
//! slot values (producing aligned personal labels), and matching utterances
//! back to templates to recover filled slots.

use crate::error::{Error, Result};
use std::collections::HashMap;

pub const AGENT_TEMPLATES: &str = include_str!("../data/agent_templates.txt");
pub const USER_TEMPLATES: &str = include_str!("../data/user_templates.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Type,
    Temp,
    Size,
    Addr,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Type, Slot::Temp, Slot::Size, Slot::Addr];

    fn placeholder(self) -> &'static str {
        match self {
            Slot::Type => "{type}",
            Slot::Temp => "{temp}",
            Slot::Size => "{size}",
            Slot::Addr => "{addr}",
        }
    }

    fn from_placeholder(tok: &str) -> Option<Slot> {
        Slot::ALL.iter().copied().find(|s| s.placeholder() == tok)
    }
}

/// Values to substitute into a template. The address is the only
/// multi-token slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotValues {
    pub coffee_type: String,
    pub temperature: String,
    pub size: String,
    pub address: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Word(String),
    Hole(Slot),
}

/// A named template: static tokens interleaved with slot holes.
#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn has_slots(&self) -> bool {
        self.pieces.iter().any(|p| matches!(p, Piece::Hole(_)))
    }

    pub fn slots(&self) -> Vec<Slot> {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Hole(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    /// Render with values; filled tokens get personal label 1. Templates
    /// without holes ignore `values`.
    pub fn render(&self, values: Option<&SlotValues>) -> (Vec<String>, Vec<u8>) {
        let mut tokens = Vec::new();
        let mut labels = Vec::new();
        for piece in &self.pieces {
            match piece {
                Piece::Word(w) => {
                    tokens.push(w.clone());
                    labels.push(0);
                }
                Piece::Hole(slot) => {
                    let values = values.expect("template with slots rendered without values");
                    match slot {
                        Slot::Type => {
                            tokens.push(values.coffee_type.clone());
                            labels.push(1);
                        }
                        Slot::Temp => {
                            tokens.push(values.temperature.clone());
                            labels.push(1);
                        }
                        Slot::Size => {
                            tokens.push(values.size.clone());
                            labels.push(1);
                        }
                        Slot::Addr => {
                            for t in &values.address {
                                tokens.push(t.clone());
                                labels.push(1);
                            }
                        }
                    }
                }
            }
        }
        (tokens, labels)
    }

    /// Match an utterance against this template, recovering the filled slot
    /// tokens. Single-token slots capture exactly one token; the address
    /// hole absorbs whatever the static suffix leaves over.
    pub fn matches(&self, utterance: &[String]) -> Option<HashMap<Slot, Vec<String>>> {
        let mut captures = HashMap::new();
        let mut pos = 0usize;
        let mut i = 0usize;
        while i < self.pieces.len() {
            match &self.pieces[i] {
                Piece::Word(w) => {
                    if utterance.get(pos)? != w {
                        return None;
                    }
                    pos += 1;
                    i += 1;
                }
                Piece::Hole(Slot::Addr) => {
                    // Static tail after the address hole.
                    let tail: Vec<&String> = self.pieces[i + 1..]
                        .iter()
                        .map(|p| match p {
                            Piece::Word(w) => w,
                            Piece::Hole(_) => panic!("address hole must be the last slot"),
                        })
                        .collect();
                    if utterance.len() < pos + 1 + tail.len() {
                        return None;
                    }
                    let addr_end = utterance.len() - tail.len();
                    for (t, u) in tail.iter().zip(&utterance[addr_end..]) {
                        if *t != u {
                            return None;
                        }
                    }
                    captures.insert(Slot::Addr, utterance[pos..addr_end].to_vec());
                    return Some(captures);
                }
                Piece::Hole(slot) => {
                    captures.insert(*slot, vec![utterance.get(pos)?.clone()]);
                    pos += 1;
                    i += 1;
                }
            }
        }
        (pos == utterance.len()).then_some(captures)
    }
}

/// A parsed template inventory, in file order.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: Vec<Template>,
    by_name: HashMap<String, usize>,
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut templates = Vec::new();
        let mut by_name = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, body) = line.split_once(':').ok_or_else(|| {
                Error::Config(format!("template line {} missing `name:`", lineno + 1))
            })?;
            let name = name.trim().to_string();
            let pieces: Vec<Piece> = body
                .split_whitespace()
                .map(|tok| match Slot::from_placeholder(tok) {
                    Some(slot) => Piece::Hole(slot),
                    None => Piece::Word(tok.to_string()),
                })
                .collect();
            if pieces.is_empty() {
                return Err(Error::Config(format!("template `{name}` is empty")));
            }
            by_name.insert(name.clone(), templates.len());
            templates.push(Template { name, pieces });
        }
        Ok(TemplateSet { templates, by_name })
    }

    pub fn builtin_agent() -> Self {
        Self::parse(AGENT_TEMPLATES).expect("bundled agent templates parse")
    }

    pub fn builtin_user() -> Self {
        Self::parse(USER_TEMPLATES).expect("bundled user templates parse")
    }

    pub fn get(&self, name: &str) -> &Template {
        &self.templates[*self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("unknown template `{name}`"))]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Template> {
        self.templates.iter()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// First template (with its captures) matching the utterance.
    pub fn match_utterance(&self, utterance: &[String]) -> Option<(&Template, HashMap<Slot, Vec<String>>)> {
        self.templates
            .iter()
            .find_map(|t| t.matches(utterance).map(|c| (t, c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values() -> SlotValues {
        SlotValues {
            coffee_type: "latte".into(),
            temperature: "hot".into(),
            size: "tall".into(),
            address: vec!["tower".into(), "7".into(), "maple".into(), "street".into()],
        }
    }

    #[test]
    fn bundled_inventories_parse_to_eight_each() {
        assert_eq!(TemplateSet::builtin_agent().len(), 8);
        assert_eq!(TemplateSet::builtin_user().len(), 8);
    }

    #[test]
    fn render_aligns_labels_with_tokens() {
        let agent = TemplateSet::builtin_agent();
        let (tokens, labels) = agent.get("confirm").render(Some(&values()));
        assert_eq!(tokens.len(), labels.len());
        let labeled: Vec<&String> = tokens
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == 1)
            .map(|(t, _)| t)
            .collect();
        assert_eq!(labeled, ["tall", "hot", "latte", "tower", "7", "maple", "street"]);
        let (ask, ask_labels) = agent.get("ask_type").render(None);
        assert!(!ask.is_empty());
        assert!(ask_labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn confirm_round_trips_through_matching() {
        let agent = TemplateSet::builtin_agent();
        let (tokens, _) = agent.get("confirm").render(Some(&values()));
        let (t, captures) = agent.match_utterance(&tokens).unwrap();
        assert_eq!(t.name, "confirm");
        assert_eq!(captures[&Slot::Type], vec!["latte"]);
        assert_eq!(captures[&Slot::Temp], vec!["hot"]);
        assert_eq!(captures[&Slot::Size], vec!["tall"]);
        assert_eq!(captures[&Slot::Addr], values().address);
    }

    #[test]
    fn garbage_matches_nothing() {
        let agent = TemplateSet::builtin_agent();
        let utt: Vec<String> = ["pink", "elephants", "?"].map(String::from).to_vec();
        assert!(agent.match_utterance(&utt).is_none());
    }

    #[test]
    fn static_templates_carry_no_inventory_values() {
        // Keeps the slot-error-rate blind to questions and chatter.
        let inventory_words = [
            "latte", "macchiato", "mocha", "americano", "espresso", "hot", "iced", "short",
            "tall", "grande",
        ];
        for set in [TemplateSet::builtin_agent(), TemplateSet::builtin_user()] {
            for t in set.iter() {
                for piece in &t.pieces {
                    if let Piece::Word(w) = piece {
                        assert!(
                            !inventory_words.contains(&w.as_str()),
                            "template `{}` leaks inventory word `{w}`",
                            t.name
                        );
                    }
                }
            }
        }
    }
}
