//! Coarse part-of-speech groups and a small rule-based tagger.
//!
//! The tagger is a fallback for datasets that do not ship tags. It checks
//! closed-class lexicons first, then a handful of open-class word lists, then
//! suffix heuristics, and finally calls any remaining content word a noun.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosGroup {
    Wh,
    Noun,
    Verb,
    Adjective,
    Adverb,
    Pronoun,
    Determiner,
    Preposition,
    Number,
    Other,
}

impl PosGroup {
    pub const ALL: [PosGroup; 10] = [
        PosGroup::Wh,
        PosGroup::Noun,
        PosGroup::Verb,
        PosGroup::Adjective,
        PosGroup::Adverb,
        PosGroup::Pronoun,
        PosGroup::Determiner,
        PosGroup::Preposition,
        PosGroup::Number,
        PosGroup::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosGroup::Wh => "WH",
            PosGroup::Noun => "NOUN",
            PosGroup::Verb => "VERB",
            PosGroup::Adjective => "ADJECTIVE",
            PosGroup::Adverb => "ADVERB",
            PosGroup::Pronoun => "PRONOUN",
            PosGroup::Determiner => "DETERMINER",
            PosGroup::Preposition => "PREPOSITION",
            PosGroup::Number => "NUMBER",
            PosGroup::Other => "OTHER",
        }
    }
}

impl fmt::Display for PosGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosGroup::ALL
            .iter()
            .copied()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown POS group {s:?}"))
    }
}

pub(crate) const WH_WORDS: &[&str] = &["what", "which", "who", "whom", "whose", "where", "when", "why", "how"];

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him", "his", "himself", "she",
    "her", "hers", "herself", "it", "its", "itself", "we", "us", "our", "ours", "they", "them", "their", "theirs",
    "themselves", "someone", "something", "anyone", "anything", "everyone", "everything", "nobody", "nothing",
];

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "some", "any", "each", "every", "no", "all", "both", "either",
    "neither", "another",
];

const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "of", "to", "for", "with", "by", "from", "under", "over", "above", "below", "behind", "near",
    "between", "into", "onto", "through", "across", "against", "beside", "beneath", "along", "around", "inside",
    "outside", "up", "down", "off", "about", "like", "without", "toward", "towards", "during", "upon", "next",
];

const ADJECTIVES: &[&str] = &[
    "many", "much", "few", "several", "other", "more", "most", "less", "big", "small", "large", "little", "tall",
    "short", "long", "old", "new", "young", "good", "bad", "hot", "cold", "full", "empty", "open", "closed", "red",
    "blue", "green", "yellow", "white", "black", "brown", "orange", "pink", "purple", "gray", "grey", "same",
    "different", "main", "wooden", "clean", "dirty", "wet", "dry", "happy", "sad", "high", "low", "dark", "bright",
];

const ADVERBS: &[&str] = &[
    "not", "very", "too", "there", "here", "also", "just", "only", "now", "then", "so", "never", "always", "again",
    "still", "ever", "almost", "out", "away",
];

// Base forms; third-person "-s"/"-es" forms are matched as well.
const VERBS: &[&str] = &[
    "be", "is", "are", "was", "were", "been", "being", "am", "do", "does", "did", "done", "has", "have", "had", "can",
    "could", "will", "would", "should", "may", "might", "must", "shall", "cover", "hold", "eat", "wear", "play", "sit",
    "stand", "ride", "say", "show", "make", "made", "take", "took", "see", "seen", "look", "use", "used", "go",
    "went", "get", "got", "fly", "run", "drink", "carry", "read", "write", "live", "grow", "hang", "lie", "lay",
    "pull", "push", "walk", "watch", "need", "want", "like", "mean", "happen", "belong", "contain", "keep", "come",
];

const CONJUNCTIONS: &[&str] = &["and", "or", "but", "if", "because", "than", "nor", "yet", "while", "whether"];

fn in_lexicon(lexicon: &[&str], word: &str) -> bool {
    lexicon.contains(&word)
}

fn is_verb_form(word: &str) -> bool {
    if in_lexicon(VERBS, word) {
        return true;
    }
    // "covers", "carries", "watches"
    if let Some(stem) = word.strip_suffix("ies") {
        if in_lexicon(VERBS, &format!("{stem}y")) {
            return true;
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if in_lexicon(VERBS, stem) {
            return true;
        }
    }
    word.strip_suffix('s').is_some_and(|stem| in_lexicon(VERBS, stem))
}

pub(crate) fn is_numeric_token(word: &str) -> bool {
    let mut digits = 0usize;
    let mut dots = 0usize;
    for c in word.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' => dots += 1,
            _ => return false,
        }
    }
    digits > 0 && dots <= 1
}

fn has_suffix(word: &str, suffix: &str) -> bool {
    word.len() >= suffix.len() + 3 && word.ends_with(suffix)
}

fn tag_one(token: &str) -> PosGroup {
    let word = token.trim().to_lowercase();
    if !word.chars().any(char::is_alphanumeric) {
        return PosGroup::Other;
    }
    if in_lexicon(WH_WORDS, &word) {
        return PosGroup::Wh;
    }
    if is_numeric_token(&word) || super::qtype::NUMBER_WORDS.contains(&word.as_str()) {
        return PosGroup::Number;
    }
    if in_lexicon(PRONOUNS, &word) {
        return PosGroup::Pronoun;
    }
    if in_lexicon(DETERMINERS, &word) {
        return PosGroup::Determiner;
    }
    if in_lexicon(PREPOSITIONS, &word) {
        return PosGroup::Preposition;
    }
    if in_lexicon(CONJUNCTIONS, &word) {
        return PosGroup::Other;
    }
    if in_lexicon(ADJECTIVES, &word) {
        return PosGroup::Adjective;
    }
    if in_lexicon(ADVERBS, &word) {
        return PosGroup::Adverb;
    }
    if is_verb_form(&word) {
        return PosGroup::Verb;
    }
    if has_suffix(&word, "ly") {
        return PosGroup::Adverb;
    }
    if has_suffix(&word, "ing") || has_suffix(&word, "ed") {
        return PosGroup::Verb;
    }
    if ["ful", "ous", "ish", "able"].iter().any(|s| has_suffix(&word, s)) {
        return PosGroup::Adjective;
    }
    PosGroup::Noun
}

/// Tags every token with exactly one group. Deterministic and order-free:
/// each token's tag depends on that token alone.
pub fn pos_tag<S: AsRef<str>>(tokens: &[S]) -> Vec<PosGroup> {
    tokens.iter().map(|t| tag_one(t.as_ref())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use PosGroup::*;

    #[test]
    fn wh_verb_determiner_noun() {
        assert_eq!(pos_tag(&["what", "covers", "the", "ground"]), vec![Wh, Verb, Determiner, Noun]);
    }

    #[test]
    fn how_many_zebras() {
        assert_eq!(pos_tag(&["how", "many", "zebras"]), vec![Wh, Adjective, Noun]);
    }

    #[test]
    fn digits_and_number_words() {
        assert_eq!(pos_tag(&["2"]), vec![Number]);
        assert_eq!(pos_tag(&["twelve", "3.5", "1.2.3"]), vec![Number, Number, Noun]);
    }

    #[test]
    fn suffix_rules() {
        assert_eq!(
            pos_tag(&["quickly", "jumping", "painted", "colorful", "famous", "reddish", "washable"]),
            vec![Adverb, Verb, Verb, Adjective, Adjective, Adjective, Adjective]
        );
        // too short for the suffix rules
        assert_eq!(pos_tag(&["bed", "ring", "fly"]), vec![Noun, Noun, Verb]);
    }

    #[test]
    fn closed_classes_and_punctuation() {
        assert_eq!(
            pos_tag(&["Is", "it", "on", "the", "table", "?", "and"]),
            vec![Verb, Pronoun, Preposition, Determiner, Noun, Other, Other]
        );
    }

    #[test]
    fn third_person_verb_forms() {
        assert_eq!(pos_tag(&["holds", "carries", "watches"]), vec![Verb, Verb, Verb]);
    }

    #[test]
    fn group_names_round_trip() {
        for g in PosGroup::ALL {
            assert_eq!(g.as_str().parse::<PosGroup>().unwrap(), g);
        }
        assert!("VERBISH".parse::<PosGroup>().is_err());
    }
}
