//! Candidate filtering and perplexity-gain selection of generated
//! rationales.
//!
//! Log-probabilities are natural-log token scores of the same response
//! under two contexts: with the images (`full`) and with them removed
//! (`textonly`). Any consistent log base gives the same perplexity, since
//! the exponential undoes it.

use crate::corpus::{parse_epoch_id, AnnotationRecord};
use crate::rules::{RuleId, Stage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use unicode_script::{Script, UnicodeScript};

#[derive(Debug, thiserror::Error)]
pub enum RftError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("alignment error: full stream has {full} tokens, text-only stream has {textonly}")]
    Alignment { full: usize, textonly: usize },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-token natural-log probabilities; nonempty, finite and ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs(Vec<f64>);

impl TokenLogProbs {
    pub fn new(values: Vec<f64>) -> Result<Self, RftError> {
        if values.is_empty() {
            return Err(RftError::Domain("empty log-probability sequence".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v > 0.0) {
            return Err(RftError::Domain(format!("log-probability {v} at token {i} is not finite and ≤ 0")));
        }
        Ok(TokenLogProbs(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// exp of the negated mean token log-probability.
pub fn perplexity(lp: &TokenLogProbs) -> f64 {
    let t = lp.0.len() as f64;
    (-lp.0.iter().sum::<f64>() / t).exp()
}

pub fn perplexity_of(values: &[f64]) -> Result<f64, RftError> {
    Ok(perplexity(&TokenLogProbs::new(values.to_vec())?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedResponse {
    pub sleep_stage: Stage,
    pub applicable_rules: BTreeSet<RuleId>,
    pub reasoning_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseFailure {
    #[error("no JSON object found")]
    NoJson,
    #[error("missing field {0}")]
    Missing(&'static str),
    #[error("bad value for {field}: {value}")]
    BadValue { field: &'static str, value: String },
}

/// Extracts the first JSON object in `text`, skipping prose and code
/// fences, and checks its labels against the closed stage and rule sets.
pub fn parse_response(text: &str) -> Result<ParsedResponse, ParseFailure> {
    let obj = first_json_object(text).ok_or(ParseFailure::NoJson)?;
    let stage = obj.get("sleep_stage").ok_or(ParseFailure::Missing("sleep_stage"))?;
    let sleep_stage = stage
        .as_str()
        .and_then(|s| s.parse::<Stage>().ok())
        .ok_or_else(|| ParseFailure::BadValue { field: "sleep_stage", value: stage.to_string() })?;
    let rules = obj
        .get("applicable_rules")
        .ok_or(ParseFailure::Missing("applicable_rules"))?
        .as_array()
        .ok_or_else(|| ParseFailure::BadValue { field: "applicable_rules", value: "not an array".into() })?;
    let applicable_rules = rules
        .iter()
        .map(|r| {
            r.as_str()
                .and_then(|s| s.parse::<RuleId>().ok())
                .ok_or_else(|| ParseFailure::BadValue { field: "applicable_rules", value: r.to_string() })
        })
        .collect::<Result<BTreeSet<_>, _>>()?;
    let reasoning_text = match obj.get("reasoning_text") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(ParseFailure::BadValue { field: "reasoning_text", value: other.to_string() }),
    };
    Ok(ParsedResponse { sleep_stage, applicable_rules, reasoning_text })
}

fn first_json_object(text: &str) -> Option<Map<String, Value>> {
    text.char_indices().filter(|&(_, c)| c == '{').find_map(|(i, _)| {
        match serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>().next() {
            Some(Ok(Value::Object(m))) => Some(m),
            _ => None,
        }
    })
}

/// True when every letter is Latin or script-neutral. A single Greek
/// letter standing alone (μV, α band) is accepted; two or more adjacent
/// Greek letters, or any letter from another script, are not.
pub fn is_english_only(text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let greek = |c: char| c.is_alphabetic() && c.script() == Script::Greek;
    chars.iter().enumerate().all(|(i, &c)| {
        if !c.is_alphabetic() {
            return true;
        }
        match c.script() {
            Script::Latin | Script::Common | Script::Inherited => true,
            Script::Greek => {
                let before = i > 0 && greek(chars[i - 1]);
                let after = chars.get(i + 1).is_some_and(|&n| greek(n));
                !before && !after
            }
            _ => false,
        }
    })
}

/// One line of the candidate input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub epoch_id: String,
    pub raw_text: String,
    pub logprobs_full: Vec<f64>,
    pub logprobs_textonly: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CandidateResponse {
    pub raw_text: String,
    pub parsed: Result<ParsedResponse, ParseFailure>,
    pub logprobs_full: TokenLogProbs,
    pub logprobs_textonly: TokenLogProbs,
}

impl CandidateResponse {
    pub fn new(raw_text: &str, full: Vec<f64>, textonly: Vec<f64>) -> Result<Self, RftError> {
        Ok(CandidateResponse {
            raw_text: raw_text.to_string(),
            parsed: parse_response(raw_text),
            logprobs_full: TokenLogProbs::new(full)?,
            logprobs_textonly: TokenLogProbs::new(textonly)?,
        })
    }

    pub fn from_record(r: &CandidateRecord) -> Result<Self, RftError> {
        Self::new(&r.raw_text, r.logprobs_full.clone(), r.logprobs_textonly.clone())
    }
}

/// PPL with images minus PPL without; negative when the images make the
/// response more predictable.
pub fn ppl_gain(c: &CandidateResponse) -> Result<f64, RftError> {
    let (full, textonly) = (c.logprobs_full.len(), c.logprobs_textonly.len());
    if full != textonly {
        return Err(RftError::Alignment { full, textonly });
    }
    Ok(perplexity(&c.logprobs_full) - perplexity(&c.logprobs_textonly))
}

/// Parsed, same stage, same rule set, and an English-only rationale. A
/// response without `reasoning_text` cannot feed the fine corpus and fails.
pub fn validate_candidate(c: &CandidateResponse, gold: &AnnotationRecord) -> bool {
    let Ok(p) = &c.parsed else { return false };
    let gold_rules: BTreeSet<RuleId> = gold.applicable_rules.iter().copied().collect();
    p.sleep_stage == gold.sleep_stage
        && p.applicable_rules == gold_rules
        && p.reasoning_text.as_deref().is_some_and(is_english_only)
}

/// Index and gain of the valid candidate with the lowest gain. Ties go to
/// the lower full-context perplexity, then the earlier index. Misaligned
/// candidates are skipped.
pub fn select_best(candidates: &[CandidateResponse], gold: &AnnotationRecord) -> Option<(usize, f64)> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| validate_candidate(c, gold))
        .filter_map(|(i, c)| ppl_gain(c).ok().map(|g| (i, g, perplexity(&c.logprobs_full))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|(i, g, _)| (i, g))
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidateRecord>, RftError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord =
            serde_json::from_str(&line).map_err(|e| RftError::Parse { line: i + 1, message: e.to_string() })?;
        if parse_epoch_id(&rec.epoch_id).is_none() {
            return Err(RftError::Parse { line: i + 1, message: format!("bad epoch_id {:?}", rec.epoch_id) });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SelectionSummary {
    pub epochs: usize,
    pub candidates: usize,
    pub selected: usize,
    pub no_valid_candidate: usize,
    pub no_gold: usize,
}

/// Groups candidates by epoch, selects one per epoch against the gold
/// annotations, and returns fine records carrying the chosen rationale.
pub fn select_corpus(
    records: &[CandidateRecord],
    gold: &[AnnotationRecord],
) -> Result<(Vec<AnnotationRecord>, SelectionSummary), RftError> {
    let gold_by_id: BTreeMap<String, &AnnotationRecord> = gold.iter().map(|g| (g.epoch_id(), g)).collect();
    let mut groups: BTreeMap<&str, Vec<&CandidateRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.epoch_id.as_str()).or_default().push(r);
    }
    let results = groups
        .par_iter()
        .map(|(id, recs)| {
            let Some(g) = gold_by_id.get(*id) else { return Ok((None, false)) };
            let cands = recs.iter().map(|r| CandidateResponse::from_record(r)).collect::<Result<Vec<_>, _>>()?;
            let chosen = select_best(&cands, g).and_then(|(i, _)| {
                let p = cands[i].parsed.as_ref().ok()?;
                Some(AnnotationRecord {
                    subject_id: g.subject_id.clone(),
                    epoch_index: g.epoch_index,
                    reasoning_text: p.reasoning_text.clone(),
                    applicable_rules: g.applicable_rules.clone(),
                    sleep_stage: p.sleep_stage,
                })
            });
            Ok((chosen, true))
        })
        .collect::<Result<Vec<_>, RftError>>()?;
    let mut summary = SelectionSummary { epochs: groups.len(), candidates: records.len(), ..Default::default() };
    let mut out = Vec::new();
    for (chosen, has_gold) in results {
        match (chosen, has_gold) {
            (Some(r), _) => out.push(r),
            (None, true) => summary.no_valid_candidate += 1,
            (None, false) => summary.no_gold += 1,
        }
    }
    summary.selected = out.len();
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(stage: Stage, rules: &[RuleId]) -> AnnotationRecord {
        AnnotationRecord {
            subject_id: "s".into(),
            epoch_index: 1,
            reasoning_text: None,
            applicable_rules: rules.to_vec(),
            sleep_stage: stage,
        }
    }

    fn cand(text: &str, full: f64, textonly: f64) -> CandidateResponse {
        CandidateResponse::new(text, vec![full; 4], vec![textonly; 4]).unwrap()
    }

    const N2_TEXT: &str = r#"{"reasoning_text":"Spindle on C4-M1 at 4 s.","applicable_rules":["N2.1"],"sleep_stage":"N2"}"#;

    #[test]
    fn parses_plain_schema() {
        let p = parse_response(r#"{"reasoning_text":"x","applicable_rules":["W.1"],"sleep_stage":"W"}"#).unwrap();
        assert_eq!(p.sleep_stage, Stage::W);
        assert_eq!(p.applicable_rules, BTreeSet::from([RuleId::W1]));
    }

    #[test]
    fn parses_inside_fence_and_prose() {
        let text = format!("Sure! Here it is:\n```json\n{N2_TEXT}\n```\nDone {{not json}}");
        let p = parse_response(&text).unwrap();
        assert_eq!(p.sleep_stage, Stage::N2);
        let skipped = format!("a {{brace}} then {N2_TEXT}");
        assert_eq!(parse_response(&skipped).unwrap().sleep_stage, Stage::N2);
    }

    #[test]
    fn rejects_unknown_labels_and_missing_json() {
        assert!(matches!(parse_response(r#"{"sleep_stage":"N4"}"#), Err(ParseFailure::BadValue { .. })));
        assert!(matches!(
            parse_response(r#"{"sleep_stage":"N2","applicable_rules":["N2.9"]}"#),
            Err(ParseFailure::BadValue { .. })
        ));
        assert_eq!(parse_response("no object here"), Err(ParseFailure::NoJson));
        assert_eq!(parse_response(r#"{"applicable_rules":[]}"#), Err(ParseFailure::Missing("sleep_stage")));
    }

    #[test]
    fn perplexity_closed_forms() {
        assert_eq!(perplexity_of(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        let l2 = -std::f64::consts::LN_2;
        assert!((perplexity_of(&[l2, l2]).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(perplexity_of(&[]), Err(RftError::Domain(_))));
        assert!(matches!(perplexity_of(&[0.1]), Err(RftError::Domain(_))));
        assert!(matches!(perplexity_of(&[f64::NAN]), Err(RftError::Domain(_))));
    }

    #[test]
    fn gain_closed_form() {
        // text-only PPL = e; the full context gives every token +0.1 nats.
        let c = cand(N2_TEXT, -0.9, -1.0);
        let g = ppl_gain(&c).unwrap();
        let expected = 0.9f64.exp() - 1f64.exp();
        assert!((g - expected).abs() < 1e-12 * expected.abs());
        assert!(g < 0.0);
        assert_eq!(ppl_gain(&cand(N2_TEXT, -0.3, -0.3)).unwrap(), 0.0);
        let bad = CandidateResponse::new(N2_TEXT, vec![-0.1; 3], vec![-0.1; 4]).unwrap();
        assert!(matches!(ppl_gain(&bad), Err(RftError::Alignment { full: 3, textonly: 4 })));
    }

    #[test]
    fn validation_checks_labels_sets_and_script() {
        let g = gold(Stage::N2, &[RuleId::N2_1]);
        assert!(validate_candidate(&cand(N2_TEXT, -0.1, -0.1), &g));
        let extra = r#"{"reasoning_text":"x","applicable_rules":["N2.1","N2.2"],"sleep_stage":"N2"}"#;
        assert!(!validate_candidate(&cand(extra, -0.1, -0.1), &g));
        let cjk = r#"{"reasoning_text":"纺锤波 at 4 s","applicable_rules":["N2.1"],"sleep_stage":"N2"}"#;
        assert!(!validate_candidate(&cand(cjk, -0.1, -0.1), &g));
        let coarse = r#"{"applicable_rules":["N2.1"],"sleep_stage":"N2"}"#;
        assert!(!validate_candidate(&cand(coarse, -0.1, -0.1), &g));
        let dup = r#"{"reasoning_text":"x","applicable_rules":["N2.1","N2.1"],"sleep_stage":"N2"}"#;
        assert!(validate_candidate(&cand(dup, -0.1, -0.1), &g));
    }

    #[test]
    fn english_only_policy() {
        assert!(is_english_only("Alpha 8-13 Hz, 45 μV, α band, 50% (ok)."));
        assert!(is_english_only("Café naïve"));
        assert!(!is_english_only("Spindles σπ"));
        assert!(!is_english_only("Веретена"));
        assert!(!is_english_only("睡眠"));
        assert!(!is_english_only("ｶ"));
    }

    #[test]
    fn selection_argmin_and_ties() {
        let g = gold(Stage::N2, &[RuleId::N2_1]);
        let gains = [0.4, -0.2, 0.1];
        let cands: Vec<_> = gains
            .iter()
            .map(|&d| {
                let t = -1.0;
                let full = -(((1f64).exp() + d).ln());
                CandidateResponse::new(N2_TEXT, vec![full; 5], vec![t; 5]).unwrap()
            })
            .collect();
        assert_eq!(select_best(&cands, &g).unwrap().0, 1);

        let tie = vec![cand(N2_TEXT, -0.5, -0.5), cand(N2_TEXT, -0.2, -0.2), cand(N2_TEXT, -0.2, -0.2)];
        assert_eq!(select_best(&tie, &g).unwrap().0, 1);

        let invalid = vec![cand("nothing", -0.1, -0.1), cand(r#"{"sleep_stage":"W","applicable_rules":["W.1"]}"#, -0.1, -0.1)];
        assert_eq!(select_best(&invalid, &g), None);
    }

    #[test]
    fn corpus_selection_groups_by_epoch() {
        let g = AnnotationRecord { subject_id: "s".into(), ..gold(Stage::N2, &[RuleId::N2_1]) };
        let rec = |text: &str, full: f64| CandidateRecord {
            epoch_id: "s_00001".into(),
            raw_text: text.into(),
            logprobs_full: vec![full; 3],
            logprobs_textonly: vec![-0.5; 3],
        };
        let other = CandidateRecord { epoch_id: "t_00002".into(), ..rec(N2_TEXT, -0.1) };
        let records = vec![rec(N2_TEXT, -0.4), rec(N2_TEXT, -0.1), rec("junk", -0.01), other];
        let (out, summary) = select_corpus(&records, &[g]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].reasoning_text.as_deref(), Some("Spindle on C4-M1 at 4 s."));
        assert_eq!(summary, SelectionSummary { epochs: 2, candidates: 4, selected: 1, no_valid_candidate: 0, no_gold: 1 });
    }
}
