use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Instance, PosGroup};

/// Whether a channel carries the real input or the training-set mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Override {
    #[default]
    None,
    Mean,
}

/// A perturbation of one instance's input. `probe_id` strings are the
/// canonical encoding: `full`, `prefix:<pct>`, `drop:<GROUP>`, `img:mean`,
/// `q:mean`, `both:mean`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Perturbation {
    Full,
    /// Leading `ceil(pct/100 * n)` tokens.
    Prefix(u8),
    /// All tokens of one POS group removed.
    Drop(PosGroup),
    /// True question, mean image.
    ImageMean,
    /// Mean question, true image.
    QuestionMean,
    BothMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeKind {
    Full,
    Prefix,
    Drop,
    ImageMean,
    QuestionMean,
    BothMean,
}

impl Perturbation {
    pub fn kind(self) -> ProbeKind {
        match self {
            Perturbation::Full => ProbeKind::Full,
            Perturbation::Prefix(_) => ProbeKind::Prefix,
            Perturbation::Drop(_) => ProbeKind::Drop,
            Perturbation::ImageMean => ProbeKind::ImageMean,
            Perturbation::QuestionMean => ProbeKind::QuestionMean,
            Perturbation::BothMean => ProbeKind::BothMean,
        }
    }

    pub fn image_override(self) -> Override {
        match self {
            Perturbation::ImageMean | Perturbation::BothMean => Override::Mean,
            _ => Override::None,
        }
    }

    pub fn question_override(self) -> Override {
        match self {
            Perturbation::QuestionMean | Perturbation::BothMean => Override::Mean,
            _ => Override::None,
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Full => f.write_str("full"),
            Perturbation::Prefix(p) => write!(f, "prefix:{p}"),
            Perturbation::Drop(g) => write!(f, "drop:{g}"),
            Perturbation::ImageMean => f.write_str("img:mean"),
            Perturbation::QuestionMean => f.write_str("q:mean"),
            Perturbation::BothMean => f.write_str("both:mean"),
        }
    }
}

impl FromStr for Perturbation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => return Ok(Perturbation::Full),
            "img:mean" => return Ok(Perturbation::ImageMean),
            "q:mean" => return Ok(Perturbation::QuestionMean),
            "both:mean" => return Ok(Perturbation::BothMean),
            _ => {}
        }
        if let Some(p) = s.strip_prefix("prefix:") {
            // only the canonical decimal form: no sign, no leading zeros
            let canonical = !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()) && (p == "0" || !p.starts_with('0'));
            return match p.parse::<u8>() {
                Ok(pct) if canonical && pct <= 100 => Ok(Perturbation::Prefix(pct)),
                _ => Err(format!("invalid prefix percentage in probe id {s:?}")),
            };
        }
        if let Some(g) = s.strip_prefix("drop:") {
            let group: PosGroup = g.parse()?;
            if group.as_str() != g {
                return Err(format!("non-canonical POS group in probe id {s:?}"));
            }
            return Ok(Perturbation::Drop(group));
        }
        Err(format!("unknown probe id {s:?}"))
    }
}

/// Number of leading tokens kept at `pct` percent: `ceil(pct * n / 100)`.
pub fn prefix_len(n_tokens: usize, pct: u8) -> usize {
    (pct as usize * n_tokens).div_ceil(100)
}

/// One model input, possibly perturbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub instance_id: String,
    pub tokens: Vec<String>,
    pub image_id: String,
    pub image_override: Override,
    pub question_override: Override,
    pub probe_id: String,
}

impl Probe {
    pub fn new(instance: &Instance, perturbation: Perturbation) -> Probe {
        let tokens = match perturbation {
            Perturbation::Full | Perturbation::ImageMean => instance.tokens.clone(),
            Perturbation::Prefix(pct) => instance.tokens[..prefix_len(instance.tokens.len(), pct)].to_vec(),
            Perturbation::Drop(group) => instance
                .tokens
                .iter()
                .zip(&instance.pos)
                .filter(|(_, g)| **g != group)
                .map(|(t, _)| t.clone())
                .collect(),
            // the question channel is replaced wholesale
            Perturbation::QuestionMean | Perturbation::BothMean => Vec::new(),
        };
        Probe {
            instance_id: instance.id.clone(),
            tokens,
            image_id: instance.image_id.clone(),
            image_override: perturbation.image_override(),
            question_override: perturbation.question_override(),
            probe_id: perturbation.to_string(),
        }
    }

    pub fn perturbation(&self) -> Result<Perturbation, String> {
        self.probe_id.parse()
    }
}
