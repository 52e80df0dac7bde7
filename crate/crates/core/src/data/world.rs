//! Deterministic planted-knowledge world.
//!
//! Draw order from `Lcg64::new(seed)`, which other implementations must
//! follow to reproduce worlds bit-exactly:
//!
//! 1. entity names: per entity, `2 + below(2)` syllables, each
//!    `CONSONANTS[below(14)]` then `VOWELS[below(5)]`; duplicates are redrawn;
//! 2. facts: all ordered pairs `(h, t)`, `h != t`, in lexicographic order,
//!    Fisher-Yates shuffled, first `n_facts` kept;
//! 3. fact order for questions: `0..n_facts` shuffled;
//! 4. per question (train, then dev, then test): three distractors by partial
//!    Fisher-Yates over the ascending eligible list, then the gold slot
//!    `below(n_choices)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::McqInstance;
use crate::error::{Error, Result};
use crate::rng::Lcg64;

const CONSONANTS: [char; 14] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const N_DISTRACTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldParams {
    pub seed: u64,
    pub n_entities: usize,
    pub n_facts: usize,
    pub n_questions: usize,
    /// Dev/test questions only ask about facts never used by a training question.
    #[serde(default = "default_true")]
    pub disjoint_eval: bool,
}

fn default_true() -> bool {
    true
}

impl WorldParams {
    pub fn new(seed: u64, n_entities: usize, n_facts: usize, n_questions: usize) -> Self {
        Self { seed, n_entities, n_facts, n_questions, disjoint_eval: true }
    }
}

/// `head isa tail`, as entity indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub head: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub format: String,
    pub version: u32,
    pub params: WorldParams,
    pub entities: Vec<String>,
    pub facts: Vec<Fact>,
    pub sentences: Vec<String>,
    pub train: Vec<McqInstance>,
    pub dev: Vec<McqInstance>,
    pub test: Vec<McqInstance>,
    /// Index into `facts` of the gold fact, parallel to train ++ dev ++ test.
    pub gold_facts: Vec<usize>,
}

pub fn fact_sentence(head: &str, tail: &str) -> String {
    format!("a {head} is a kind of {tail} .")
}

pub fn question_text(entity: &str) -> String {
    format!("if a thing is a {entity} then it is likely a what ?")
}

pub fn generate_world(params: WorldParams) -> Result<SyntheticWorld> {
    let WorldParams { seed, n_entities, n_facts, n_questions, disjoint_eval } = params;
    if n_entities < 2 {
        return Err(Error::Generation("need at least two entities".into()));
    }
    if n_facts > n_entities * n_entities {
        return Err(Error::Generation(format!(
            "{n_facts} facts exceed n_entities^2 = {}",
            n_entities * n_entities
        )));
    }
    if n_facts > n_entities * (n_entities - 1) {
        return Err(Error::Generation(format!(
            "{n_facts} facts exceed the {} non-reflexive pairs",
            n_entities * (n_entities - 1)
        )));
    }
    if n_questions > 0 && n_facts == 0 {
        return Err(Error::Generation("questions requested but no facts".into()));
    }
    let mut rng = Lcg64::new(seed);

    let entities = draw_entities(&mut rng, n_entities)?;

    let mut pairs: Vec<Fact> = (0..n_entities)
        .flat_map(|h| (0..n_entities).filter(move |&t| t != h).map(move |t| Fact { head: h, tail: t }))
        .collect();
    rng.shuffle(&mut pairs);
    pairs.truncate(n_facts);
    let facts = pairs;
    let fact_set: HashSet<(usize, usize)> = facts.iter().map(|f| (f.head, f.tail)).collect();

    let sentences =
        facts.iter().map(|f| fact_sentence(&entities[f.head], &entities[f.tail])).collect();

    let mut order: Vec<usize> = (0..n_facts).collect();
    rng.shuffle(&mut order);

    let n_train = n_questions * 8 / 10;
    let n_dev = n_questions / 10;
    let n_test = n_questions - n_train - n_dev;
    let pools: [&[usize]; 3] = if disjoint_eval {
        let f_train = n_facts * 8 / 10;
        let f_dev = n_facts / 10;
        [&order[..f_train], &order[f_train..f_train + f_dev], &order[f_train + f_dev..]]
    } else {
        [&order, &order, &order]
    };

    let mut splits: [Vec<McqInstance>; 3] = Default::default();
    let mut gold_facts = Vec::with_capacity(n_questions);
    for (s, (split, count)) in
        [(Split::Train, n_train), (Split::Dev, n_dev), (Split::Test, n_test)].into_iter().enumerate()
    {
        let pool = pools[s];
        if count > 0 && pool.is_empty() {
            return Err(Error::Generation(format!(
                "{} split needs questions but has no facts; raise n_facts",
                split.name()
            )));
        }
        for i in 0..count {
            let fi = pool[i % pool.len()];
            let fact = facts[fi];
            let eligible: Vec<usize> = (0..n_entities)
                .filter(|&z| {
                    z != fact.head
                        && z != fact.tail
                        && !fact_set.contains(&(fact.head, z))
                        && !fact_set.contains(&(z, fact.head))
                })
                .collect();
            if eligible.len() < N_DISTRACTORS {
                return Err(Error::Generation(format!(
                    "entity {:?} has only {} eligible distractors; lower n_facts",
                    entities[fact.head],
                    eligible.len()
                )));
            }
            let mut eligible = eligible;
            for k in 0..N_DISTRACTORS {
                let j = k + rng.below(eligible.len() - k);
                eligible.swap(k, j);
            }
            let gold = rng.below(N_DISTRACTORS + 1);
            let mut choices: Vec<String> =
                eligible[..N_DISTRACTORS].iter().map(|&z| entities[z].clone()).collect();
            choices.insert(gold, entities[fact.tail].clone());
            splits[s].push(McqInstance {
                context: String::new(),
                question: question_text(&entities[fact.head]),
                choices,
                gold,
                source_id: format!("synth-{seed}-{}-{i:04}", split.name()),
            });
            gold_facts.push(fi);
        }
    }
    let [train, dev, test] = splits;
    Ok(SyntheticWorld {
        format: "rumi-world".into(),
        version: 1,
        params,
        entities,
        facts,
        sentences,
        train,
        dev,
        test,
        gold_facts,
    })
}

fn draw_entities(rng: &mut Lcg64, n: usize) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > n * 100 + 1000 {
            return Err(Error::Generation(format!("could not draw {n} distinct entity names")));
        }
        let syllables = 2 + rng.below(2);
        let mut name = String::with_capacity(syllables * 2);
        for _ in 0..syllables {
            name.push(CONSONANTS[rng.below(CONSONANTS.len())]);
            name.push(VOWELS[rng.below(VOWELS.len())]);
        }
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    Ok(out)
}

impl SyntheticWorld {
    pub fn split(&self, split: Split) -> &[McqInstance] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn questions(&self) -> impl Iterator<Item = &McqInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    /// Gold fact of each question in `split`, parallel to [`Self::split`].
    pub fn gold_facts_of(&self, split: Split) -> &[usize] {
        let (a, b) = (self.train.len(), self.train.len() + self.dev.len());
        match split {
            Split::Train => &self.gold_facts[..a],
            Split::Dev => &self.gold_facts[a..b],
            Split::Test => &self.gold_facts[b..],
        }
    }

    pub fn entity_index(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == name)
    }

    /// Whether `head isa tail` is one of the planted facts.
    pub fn entails(&self, head: &str, tail: &str) -> bool {
        match (self.entity_index(head), self.entity_index(tail)) {
            (Some(h), Some(t)) => self.facts.iter().any(|f| f.head == h && f.tail == t),
            _ => false,
        }
    }

    /// Every string the world contributes to a vocabulary.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(String::as_str).chain(self.questions().flat_map(|q| {
            std::iter::once(q.question.as_str())
                .chain(std::iter::once(q.context.as_str()))
                .chain(q.choices.iter().map(String::as_str))
        }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("world serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Hex SHA-256 of the JSON dump.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
