//! Pseudo-clinical benchmark corpus with planted class-signal phrases.
//!
//! Each document opens with a two-word section header, followed by
//! Zipf-distributed filler words with signal phrases inserted at random
//! positions. Positives carry one or more positive phrases, negatives
//! one or more negative phrases, and either class may pick up a phrase of
//! the other class at `cross_signal_rate`. Phrase words never occur in
//! filler, so counting phrases recovers the latent label up to the
//! cross-signal and label noise.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{tokenize, LabeledDocument, Origin};
use crate::error::{invalid, Result};
use crate::rng;

const FILLER: &[&str] = &[
    "patient", "was", "the", "and", "with", "of", "to", "on", "in", "for", "noted", "given", "pt", "admitted",
    "history", "pain", "blood", "pressure", "daily", "mg", "po", "iv", "normal", "left", "right", "chest", "bilateral",
    "exam", "lab", "results", "unremarkable", "started", "continued", "home", "medications", "reviewed", "ct",
    "xray", "showed", "no", "acute", "process", "afebrile", "vitals", "within", "limits", "stable", "overnight",
    "morning", "evening", "team", "consulted", "plan", "follow", "up", "clinic", "weeks", "days", "dose", "held",
    "resumed", "fluid", "urine", "output", "adequate", "oxygen", "saturation", "room", "air", "nasal", "cannula",
    "heart", "rate", "sinus", "rhythm", "ekg", "abdomen", "soft", "nontender", "lungs", "clear", "edema", "mild",
    "moderate", "severe", "wound", "dressing", "changed", "cultures", "pending", "antibiotics", "course", "service",
    "transferred", "floor", "icu", "nursing", "note", "per", "report", "family", "updated", "at", "bedside",
];

const OPENERS: &[[&str; 2]] = &[
    ["discharge", "summary"],
    ["admission", "note"],
    ["brief", "history"],
    ["hospital", "course"],
    ["chief", "complaint"],
    ["clinical", "summary"],
];

const POSITIVE: &[[&str; 2]] = &[
    ["chf", "exacerbation"],
    ["poor", "compliance"],
    ["recurrent", "sepsis"],
    ["lives", "alone"],
    ["missed", "appointments"],
    ["renal", "decline"],
    ["frequent", "admissions"],
    ["copd", "flare"],
    ["unstable", "glucose"],
    ["failed", "transition"],
    ["polypharmacy", "concerns"],
    ["declining", "function"],
];

const NEGATIVE: &[[&str; 2]] = &[
    ["tolerating", "diet"],
    ["ambulating", "independently"],
    ["good", "prognosis"],
    ["resolved", "infection"],
    ["strong", "support"],
    ["routine", "recovery"],
    ["symptoms", "controlled"],
    ["full", "mobility"],
    ["benign", "findings"],
    ["elective", "procedure"],
    ["uncomplicated", "stay"],
    ["returned", "baseline"],
];

/// Parameters of the benchmark generator. The seed fully determines
/// the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthBenchSpec {
    pub num_docs: usize,
    /// Number of distinct filler words.
    pub content_vocab: usize,
    pub positive_phrases: usize,
    pub negative_phrases: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub positive_fraction: f64,
    /// Probability of flipping the stored label.
    pub label_noise: f64,
    /// Probability of adding one phrase of the other class.
    pub cross_signal_rate: f64,
    pub seed: u64,
}

impl Default for SynthBenchSpec {
    fn default() -> Self {
        Self {
            num_docs: 5000,
            content_vocab: 120,
            positive_phrases: 8,
            negative_phrases: 8,
            min_len: 16,
            max_len: 36,
            positive_fraction: 0.2,
            label_noise: 0.0,
            cross_signal_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthBenchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(invalid("positive_fraction must lie in (0, 1)"));
        }
        if self.min_len < 4 || self.min_len > self.max_len {
            return Err(invalid(format!(
                "document length range {}..={} is empty or shorter than 4",
                self.min_len, self.max_len
            )));
        }
        for (name, p) in [("label_noise", self.label_noise), ("cross_signal_rate", self.cross_signal_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.positive_phrases == 0 || self.negative_phrases == 0 {
            return Err(invalid("need at least one phrase per class"));
        }
        if self.content_vocab == 0 {
            return Err(invalid("content_vocab must be positive"));
        }
        Ok(())
    }
}

/// The word lists a [`SynthBenchSpec`] draws from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchLexicon {
    pub filler: Vec<String>,
    pub openers: Vec<[String; 2]>,
    pub positive: Vec<[String; 2]>,
    pub negative: Vec<[String; 2]>,
}

impl BenchLexicon {
    pub fn new(spec: &SynthBenchSpec) -> Self {
        let filler = (0..spec.content_vocab)
            .map(|i| FILLER.get(i).map_or_else(|| format!("term{i}"), |w| w.to_string()))
            .collect();
        let phrases = |base: &[[&str; 2]], n: usize, tag: &str| {
            (0..n)
                .map(|i| match base.get(i) {
                    Some([a, b]) => [a.to_string(), b.to_string()],
                    None => [format!("{tag}{i}"), "marker".to_string()],
                })
                .collect()
        };
        Self {
            filler,
            openers: OPENERS.iter().map(|[a, b]| [a.to_string(), b.to_string()]).collect(),
            positive: phrases(POSITIVE, spec.positive_phrases, "posflag"),
            negative: phrases(NEGATIVE, spec.negative_phrases, "negflag"),
        }
    }

    pub fn count_positive(&self, tokens: &[String]) -> usize {
        count_phrases(tokens, &self.positive)
    }

    pub fn count_negative(&self, tokens: &[String]) -> usize {
        count_phrases(tokens, &self.negative)
    }
}

fn count_phrases(tokens: &[String], phrases: &[[String; 2]]) -> usize {
    tokens
        .windows(2)
        .filter(|w| phrases.iter().any(|p| p[0] == w[0] && p[1] == w[1]))
        .count()
}

/// Oracle score: positive-phrase count minus negative-phrase count.
pub fn phrase_score(text: &str, lexicon: &BenchLexicon) -> f64 {
    let tokens: Vec<String> = tokenize(text).collect();
    lexicon.count_positive(&tokens) as f64 - lexicon.count_negative(&tokens) as f64
}

pub fn synth_benchmark(spec: &SynthBenchSpec) -> Result<Vec<LabeledDocument>> {
    spec.validate()?;
    let lex = BenchLexicon::new(spec);
    let zipf = WeightedIndex::new((0..lex.filler.len()).map(|r| 1.0 / (r as f64 + 1.0))).expect("non-empty weights");
    let mut r = rng::seeded(rng::derive(spec.seed, "benchmark"));
    let mut docs = Vec::with_capacity(spec.num_docs);
    for i in 0..spec.num_docs {
        let latent = u8::from(r.random_bool(spec.positive_fraction));
        let (own, other) = if latent == 1 {
            (&lex.positive, &lex.negative)
        } else {
            (&lex.negative, &lex.positive)
        };
        // 1 + truncated geometric(0.35), at most 3 own-class phrases.
        let mut k = 1;
        while k < 3 && r.random_bool(0.35) {
            k += 1;
        }
        let mut phrases: Vec<&[String; 2]> = (0..k).map(|_| own.choose(&mut r).expect("non-empty")).collect();
        if r.random_bool(spec.cross_signal_rate) {
            phrases.push(other.choose(&mut r).expect("non-empty"));
        }
        let len = r.random_range(spec.min_len..=spec.max_len);
        let n_filler = len.saturating_sub(2 + 2 * phrases.len());
        let mut body: Vec<Vec<&str>> = (0..n_filler).map(|_| vec![lex.filler[zipf.sample(&mut r)].as_str()]).collect();
        for p in phrases {
            let at = r.random_range(0..=body.len());
            body.insert(at, vec![p[0].as_str(), p[1].as_str()]);
        }
        let opener = lex.openers.choose(&mut r).expect("non-empty");
        let text = opener
            .iter()
            .map(String::as_str)
            .chain(body.into_iter().flatten())
            .collect::<Vec<_>>()
            .join(" ");
        let label = if r.random_bool(spec.label_noise) { 1 - latent } else { latent };
        docs.push(LabeledDocument {
            id: format!("bench{:06}", i),
            label,
            text,
            origin: Origin::Original,
        });
    }
    Ok(docs)
}
