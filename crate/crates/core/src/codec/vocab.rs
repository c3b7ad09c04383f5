//! Whitespace tokenization and the bundled toy corpus.

use std::collections::BTreeMap;

use super::CodecError;

pub const PAD: u32 = 0;
pub const START: u32 = 1;
pub const END: u32 = 2;
pub const UNKNOWN: u32 = 3;

const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Fifty short parliament-style sentences used for desk-scale training.
pub const TOY_CORPUS: [&str; 50] = [
    "the council adopted the report today",
    "we support the proposal of the commission",
    "the debate is closed",
    "the vote will take place tomorrow",
    "i would like to thank the rapporteur",
    "the committee approved the amendment",
    "this is a very important question",
    "the parliament must defend the citizens",
    "we need better rules for energy markets",
    "the minutes of the sitting were approved",
    "the president opened the session",
    "member states must cooperate more closely",
    "the budget for next year is ready",
    "we reject this amendment",
    "the commission will present a new plan",
    "citizens expect clear answers from us",
    "the agenda has been distributed",
    "i agree with the previous speaker",
    "the report contains many good ideas",
    "we must protect the environment",
    "the proposal was rejected by the council",
    "transport safety remains a priority",
    "the directive enters into force next month",
    "small companies need more support",
    "the minister answered the question",
    "this agreement strengthens our cooperation",
    "the regions receive new funding",
    "we welcome the decision of the court",
    "the text will be published tomorrow",
    "farmers face serious difficulties this year",
    "the union must speak with one voice",
    "i have three short remarks",
    "the situation in the region is worrying",
    "the resolution was adopted by a large majority",
    "we call on the commission to act",
    "research funding has increased again",
    "the report was sent back to committee",
    "workers deserve fair conditions",
    "the session is suspended",
    "the council and parliament reached an agreement",
    "data protection is a fundamental right",
    "we ask for more transparency",
    "the meeting will continue after lunch",
    "young people need good jobs",
    "the treaty gives us new powers",
    "the amendment concerns article five",
    "i voted in favour of the report",
    "the commission replied in writing",
    "our citizens deserve better services",
    "thank you for your attention",
];

/// Bijective token <-> id mapping. Ids 0..4 are reserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, u32>,
}

/// Sequence of token ids, `L >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence(Vec<u32>);

impl Sentence {
    pub fn new(ids: Vec<u32>) -> Result<Self, CodecError> {
        if ids.is_empty() {
            return Err(CodecError::EmptySentence);
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Vocabulary {
    /// Builds a vocabulary from whitespace-tokenized text in first-appearance order.
    pub fn from_corpus<'a>(lines: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self {
            tokens: Vec::new(),
            ids: BTreeMap::new(),
        };
        for token in RESERVED {
            vocab.insert(token);
        }
        for line in lines {
            for word in line.split_whitespace() {
                vocab.insert(word);
            }
        }
        vocab
    }

    pub fn toy() -> Self {
        Self::from_corpus(TOY_CORPUS)
    }

    fn insert(&mut self, token: &str) {
        if !self.ids.contains_key(token) {
            let id = self.tokens.len() as u32;
            self.tokens.push(token.to_owned());
            self.ids.insert(token.to_owned(), id);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNKNOWN)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Result<Sentence, CodecError> {
        Sentence::new(text.split_whitespace().map(|w| self.id(w)).collect())
    }

    pub fn decode(&self, sentence: &Sentence) -> String {
        sentence
            .ids()
            .iter()
            .map(|&id| self.token(id).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Encodes every line of the bundled corpus.
    pub fn toy_sentences(&self) -> Vec<Sentence> {
        TOY_CORPUS
            .iter()
            .map(|line| self.encode(line).expect("corpus lines are non-empty"))
            .collect()
    }
}
