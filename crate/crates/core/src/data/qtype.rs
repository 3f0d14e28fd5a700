use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{normalize_answer, Instance};

/// Spelled-out count answers recognized as numbers.
pub const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    YesNo,
    Number,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [QuestionType::YesNo, QuestionType::Number, QuestionType::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::YesNo => "yes_no",
            QuestionType::Number => "number",
            QuestionType::Other => "other",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '/'], "_").as_str() {
            "yes_no" | "yesno" => Ok(QuestionType::YesNo),
            "number" => Ok(QuestionType::Number),
            "other" => Ok(QuestionType::Other),
            _ => Err(format!("unknown question type {s:?} (expected yes_no, number or other)")),
        }
    }
}

/// Question type implied by an answer string.
pub fn classify_answer(answer: &str) -> QuestionType {
    let a = normalize_answer(answer);
    if a == "yes" || a == "no" {
        QuestionType::YesNo
    } else if (!a.is_empty() && a.bytes().all(|b| b.is_ascii_digit())) || NUMBER_WORDS.contains(&a.as_str()) {
        QuestionType::Number
    } else {
        QuestionType::Other
    }
}

/// Questions are typed by their ground-truth answer.
pub fn classify_question_type(instance: &Instance) -> QuestionType {
    classify_answer(&instance.gt_answer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_types() {
        assert_eq!(classify_answer("yes"), QuestionType::YesNo);
        assert_eq!(classify_answer(" No "), QuestionType::YesNo);
        assert_eq!(classify_answer("2"), QuestionType::Number);
        assert_eq!(classify_answer("twenty"), QuestionType::Number);
        assert_eq!(classify_answer("bakery"), QuestionType::Other);
        assert_eq!(classify_answer("-3"), QuestionType::Other);
        assert_eq!(classify_answer("twenty one"), QuestionType::Other);
    }

    #[test]
    fn parse_names() {
        assert_eq!("yes/no".parse::<QuestionType>().unwrap(), QuestionType::YesNo);
        assert_eq!("NUMBER".parse::<QuestionType>().unwrap(), QuestionType::Number);
        assert!("color".parse::<QuestionType>().is_err());
    }
}
