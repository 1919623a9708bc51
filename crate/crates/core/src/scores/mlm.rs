//! Masked-LM output for a slot: top-K logits plus the full-vocabulary
//! log-partition, which is enough for exact softmax probabilities.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::embedding::{cosine_similarity, sentence_embedding, EmbeddingTable};
use super::{data_lines, ScoreError};
use crate::corpus::{ClozeInstance, FillerCandidate};
use crate::preprocess::{fill_placeholder, render_context, tokenize, ContextMethod};

const TOP_N: usize = 5;
const PROB_SLACK: f64 = 1e-6;

/// Numerically stable `ln(Σ exp(x_i))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabDistribution {
    pub instance_id: String,
    pub topk: Vec<(String, f64)>,
    pub log_partition: f64,
    pub candidate_logits: BTreeMap<u8, f64>,
}

impl VocabDistribution {
    fn validate(&self) -> Result<(), String> {
        if self.topk.len() < TOP_N {
            return Err(format!(
                "topk has {} entries, need at least {TOP_N}",
                self.topk.len()
            ));
        }
        if !self.log_partition.is_finite() {
            return Err("log_partition is not finite".into());
        }
        for pair in self.topk.windows(2) {
            let ((ta, la), (tb, lb)) = (&pair[0], &pair[1]);
            if !(la > lb || (la == lb && ta < tb)) {
                return Err(format!("topk not in canonical order at `{ta}`, `{tb}`"));
            }
        }
        if self.topk.iter().any(|(_, l)| !l.is_finite()) {
            return Err("non-finite topk logit".into());
        }
        let mass: f64 = self
            .topk
            .iter()
            .map(|(_, l)| (l - self.log_partition).exp())
            .sum();
        if mass > 1.0 + PROB_SLACK {
            return Err(format!("topk probability mass {mass} exceeds 1"));
        }
        for (id, logit) in &self.candidate_logits {
            if !logit.is_finite() || logit - self.log_partition > PROB_SLACK {
                return Err(format!(
                    "candidate {id} logit {logit} exceeds log_partition"
                ));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MlmLine {
    id: String,
    k: usize,
    log_partition: f64,
    topk: Vec<(String, f64)>,
    candidates: BTreeMap<String, f64>,
}

/// All vocabulary distributions of one scores file, keyed by instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MlmScores {
    by_id: HashMap<String, VocabDistribution>,
}

impl MlmScores {
    pub fn from_distributions(dists: impl IntoIterator<Item = VocabDistribution>) -> Self {
        MlmScores {
            by_id: dists
                .into_iter()
                .map(|d| (d.instance_id.clone(), d))
                .collect(),
        }
    }

    pub fn get(&self, instance_id: &str) -> Result<&VocabDistribution, ScoreError> {
        self.by_id
            .get(instance_id)
            .ok_or_else(|| ScoreError::UnknownInstance(instance_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ScoreError> {
        let text = super::read_file(path)?;
        parse_mlm_scores(&text, &path.display().to_string())
    }
}

/// Parses the JSON-lines MLM scores format.
pub fn parse_mlm_scores(text: &str, source_name: &str) -> Result<MlmScores, ScoreError> {
    let err = |line: usize, message: String| ScoreError::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut by_id = HashMap::new();
    for (line_no, line) in data_lines(text) {
        let raw: MlmLine = serde_json::from_str(line).map_err(|e| err(line_no, e.to_string()))?;
        if raw.k != raw.topk.len() {
            return Err(err(
                line_no,
                format!("k = {} but topk has {} entries", raw.k, raw.topk.len()),
            ));
        }
        let mut candidate_logits = BTreeMap::new();
        for (key, logit) in raw.candidates {
            let id: u8 = key
                .parse()
                .ok()
                .filter(|id| (1..=5).contains(id))
                .ok_or_else(|| err(line_no, format!("bad candidate key `{key}`")))?;
            candidate_logits.insert(id, logit);
        }
        let dist = VocabDistribution {
            instance_id: raw.id,
            topk: raw.topk,
            log_partition: raw.log_partition,
            candidate_logits,
        };
        dist.validate().map_err(|m| err(line_no, m))?;
        if by_id.insert(dist.instance_id.clone(), dist).is_some() {
            return Err(err(line_no, "duplicate instance id".into()));
        }
    }
    Ok(MlmScores { by_id })
}

/// Serializes distributions to the JSON-lines format, one line each, in
/// the order given.
pub fn write_mlm_scores<'a>(dists: impl IntoIterator<Item = &'a VocabDistribution>) -> String {
    let mut out = String::new();
    for dist in dists {
        let line = MlmLine {
            id: dist.instance_id.clone(),
            k: dist.topk.len(),
            log_partition: dist.log_partition,
            topk: dist.topk.clone(),
            candidates: dist
                .candidate_logits
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("mlm line serializes"));
        out.push('\n');
    }
    out
}

pub fn logit_score(dist: &VocabDistribution, candidate_id: u8) -> Result<f64, ScoreError> {
    dist.candidate_logits
        .get(&candidate_id)
        .copied()
        .ok_or_else(|| ScoreError::UnknownCandidate {
            instance_id: dist.instance_id.clone(),
            candidate_id,
        })
}

/// `exp(logit − log_partition)`, capped at 1 against export rounding.
pub fn softmax_prob(dist: &VocabDistribution, candidate_id: u8) -> Result<f64, ScoreError> {
    let logit = logit_score(dist, candidate_id)?;
    Ok((logit - dist.log_partition).exp().min(1.0))
}

/// Softmax probability of each top-K token, in top-K order.
pub fn topk_probabilities(dist: &VocabDistribution) -> Vec<f64> {
    dist.topk
        .iter()
        .map(|(_, l)| (l - dist.log_partition).exp().min(1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityVariant {
    /// Similarity to the single most probable token.
    Top1,
    /// Probability-weighted similarity to the five most probable tokens.
    WeightedTop5,
    /// Largest similarity among the five most probable tokens.
    MaxTop5,
}

impl SimilarityVariant {
    pub fn column_name(self) -> &'static str {
        match self {
            SimilarityVariant::Top1 => "mlm_sim_top1",
            SimilarityVariant::WeightedTop5 => "mlm_sim_weighted_top5",
            SimilarityVariant::MaxTop5 => "mlm_sim_max_top5",
        }
    }
}

/// How the five weights of [`SimilarityVariant::WeightedTop5`] are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityWeighting {
    /// Probabilities rescaled to sum to one over the five tokens.
    #[default]
    Renormalized,
    /// Full-vocabulary softmax probabilities as they are.
    Raw,
}

fn filled_embedding(
    masked: &str,
    filler: &str,
    table: &EmbeddingTable,
) -> Result<Vec<f64>, ScoreError> {
    let text = fill_placeholder(masked, filler)?;
    sentence_embedding(&tokenize(&text), table)
}

pub fn similarity_score(
    variant: SimilarityVariant,
    weighting: SimilarityWeighting,
    dist: &VocabDistribution,
    instance: &ClozeInstance,
    candidate: &FillerCandidate,
    method: ContextMethod,
    table: &EmbeddingTable,
) -> Result<f64, ScoreError> {
    if dist.topk.len() < TOP_N {
        return Err(ScoreError::InsufficientTopK {
            have: dist.topk.len(),
            need: TOP_N,
        });
    }
    let masked = render_context(instance, method);
    let target = filled_embedding(&masked, &candidate.text, table)?;
    let neighbour = |token: &str| -> Result<f64, ScoreError> {
        let other = filled_embedding(&masked, token, table)?;
        cosine_similarity(&target, &other)
    };
    if variant == SimilarityVariant::Top1 {
        return neighbour(&dist.topk[0].0);
    }
    // A neighbour whose filled sentence has no usable vector drops out of
    // the five-token aggregates.
    let probs = topk_probabilities(dist);
    let mut terms = Vec::with_capacity(TOP_N);
    for ((token, _), p) in dist.topk[..TOP_N].iter().zip(probs) {
        match neighbour(token) {
            Ok(sim) => terms.push((p, sim)),
            Err(ScoreError::AllTokensOov | ScoreError::ZeroVector) => {}
            Err(e) => return Err(e),
        }
    }
    if terms.is_empty() {
        return Err(ScoreError::AllTokensOov);
    }
    Ok(match variant {
        SimilarityVariant::Top1 => unreachable!("handled above"),
        SimilarityVariant::MaxTop5 => terms
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max),
        SimilarityVariant::WeightedTop5 => {
            let norm = match weighting {
                SimilarityWeighting::Renormalized => terms.iter().map(|(p, _)| p).sum::<f64>(),
                SimilarityWeighting::Raw => 1.0,
            };
            terms.iter().map(|(p, s)| p / norm * s).sum()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::scores::parse_embedding_table;
    use proptest::prelude::*;

    fn dist(topk: &[(&str, f64)], log_partition: f64, cands: &[(u8, f64)]) -> VocabDistribution {
        VocabDistribution {
            instance_id: "i".into(),
            topk: topk.iter().map(|(t, l)| (t.to_string(), *l)).collect(),
            log_partition,
            candidate_logits: cands.iter().copied().collect(),
        }
    }

    fn direct_softmax(logits: &[f64], index: usize) -> f64 {
        let total: f64 = logits.iter().map(|l| l.exp()).sum();
        logits[index].exp() / total
    }

    #[test]
    fn logit_passthrough_and_unknown() {
        let d = dist(&[], 5.0, &[(1, 4.2)]);
        assert_eq!(logit_score(&d, 1).unwrap(), 4.2);
        assert_eq!(
            logit_score(&d, 3),
            Err(ScoreError::UnknownCandidate {
                instance_id: "i".into(),
                candidate_id: 3
            })
        );
        assert!(softmax_prob(&d, 3).is_err());
    }

    #[test]
    fn softmax_cases() {
        let uniform = dist(&[], 4f64.ln(), &[(1, 0.0)]);
        assert!((softmax_prob(&uniform, 1).unwrap() - 0.25).abs() < 1e-15);
        let single = dist(&[], 1.0, &[(1, 1.0)]);
        assert_eq!(softmax_prob(&single, 1).unwrap(), 1.0);

        let logits = [1.0, 2.0, 3.0];
        let lp = log_sum_exp(&logits);
        let d = dist(&[], lp, &[(2, 2.0)]);
        let expected = direct_softmax(&logits, 1);
        assert!((softmax_prob(&d, 2).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.2447).abs() < 5e-5);
    }

    #[test]
    fn parses_and_round_trips() {
        let d = dist(
            &[
                ("a", 3.25),
                ("b", 1.0 / 3.0),
                ("c", 0.1),
                ("d", 0.1),
                ("e", -7.5e-3),
            ],
            log_sum_exp(&[3.25, 1.0 / 3.0, 0.1, 0.1, -7.5e-3, 0.7]),
            &[(1, 3.25), (2, 0.1 + 0.2), (5, -7.5e-3)],
        );
        let text = format!("# model: stub\n{}", write_mlm_scores([&d]));
        let parsed = parse_mlm_scores(&text, "t").unwrap();
        let back = parsed.get("i").unwrap();
        assert_eq!(back, &d);
        for id in [1u8, 2, 5] {
            assert_eq!(
                logit_score(back, id).unwrap().to_bits(),
                logit_score(&d, id).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn rejects_invalid_lines() {
        let bad_order = r#"{"id":"x","k":5,"log_partition":9,"topk":[["a",1],["b",2],["c",0],["d",-1],["e",-2]],"candidates":{"1":0}}"#;
        assert!(parse_mlm_scores(bad_order, "t").is_err());
        let bad_k = r#"{"id":"x","k":6,"log_partition":9,"topk":[["a",5],["b",4],["c",3],["d",2],["e",1]],"candidates":{"1":0}}"#;
        assert!(parse_mlm_scores(bad_k, "t").is_err());
        let over_mass = r#"{"id":"x","k":5,"log_partition":0,"topk":[["a",0],["b",0],["c",-1],["d",-2],["e",-3]],"candidates":{"1":0}}"#;
        assert!(parse_mlm_scores(over_mass, "t").is_err());
        let short =
            r#"{"id":"x","k":2,"log_partition":9,"topk":[["a",5],["b",4]],"candidates":{"1":0}}"#;
        assert!(parse_mlm_scores(short, "t").is_err());
        let bad_key = r#"{"id":"x","k":5,"log_partition":9,"topk":[["a",5],["b",4],["c",3],["d",2],["e",1]],"candidates":{"6":0}}"#;
        assert!(parse_mlm_scores(bad_key, "t").is_err());
    }

    fn similarity_fixture() -> (ClozeInstance, EmbeddingTable) {
        let table = parse_embedding_table(
            "8 2\nadd 1 0\nnow 0 1\nsalt 1 1\npepper 2 -1\noil -1 2\nsugar 0.5 3\nsand -2 -2\nwater 3 0.25\n",
            "t",
        )
        .unwrap();
        let instance = ClozeInstance {
            id: "i".into(),
            title: String::new(),
            section_header: String::new(),
            prev_context: String::new(),
            masked_sentence: "Add ______ now.".into(),
            next_context: String::new(),
            candidates: ["salt", "sand", "water", "oil", "the sugar"]
                .iter()
                .zip(1u8..)
                .map(|(t, i)| FillerCandidate {
                    candidate_id: i,
                    text: t.to_string(),
                    gold_label: Some(Label::Neutral),
                    gold_score: None,
                })
                .collect(),
        };
        (instance, table)
    }

    #[test]
    fn undefined_neighbours_drop_out_of_five_token_variants() {
        let table = parse_embedding_table("3 2\nsalt 1 1\npepper 2 -1\noil -1 2\n", "t").unwrap();
        let (mut instance, _) = similarity_fixture();
        instance.candidates[0].text = "pepper".into();
        let d = dist(
            &[
                ("salt", 2.0),
                ("oil", 1.5),
                ("zz1", 1.0),
                ("zz2", 0.5),
                ("zz3", 0.0),
            ],
            3.0,
            &[],
        );
        let score = |variant, d: &VocabDistribution| {
            similarity_score(
                variant,
                SimilarityWeighting::Renormalized,
                d,
                &instance,
                &instance.candidates[0],
                ContextMethod::SentenceOnly,
                &table,
            )
        };
        let salt = 1.0 / 10f64.sqrt();
        let oil = -0.8;
        assert!((score(SimilarityVariant::Top1, &d).unwrap() - salt).abs() < 1e-12);
        assert!((score(SimilarityVariant::MaxTop5, &d).unwrap() - salt).abs() < 1e-12);
        let (ps, po) = ((2.0f64 - 3.0).exp(), (1.5f64 - 3.0).exp());
        let weighted = (ps * salt + po * oil) / (ps + po);
        assert!((score(SimilarityVariant::WeightedTop5, &d).unwrap() - weighted).abs() < 1e-12);

        let unknown = dist(
            &[
                ("q1", 2.0),
                ("q2", 1.0),
                ("q3", 0.5),
                ("q4", 0.2),
                ("q5", 0.1),
            ],
            3.0,
            &[],
        );
        assert_eq!(
            score(SimilarityVariant::MaxTop5, &unknown),
            Err(ScoreError::AllTokensOov)
        );
        assert_eq!(
            score(SimilarityVariant::Top1, &unknown),
            Err(ScoreError::AllTokensOov)
        );
    }

    fn top5() -> VocabDistribution {
        dist(
            &[
                ("salt", 2.0),
                ("pepper", 1.5),
                ("oil", 0.5),
                ("sugar", 0.0),
                ("water", -0.5),
            ],
            3.0,
            &[(1, 2.0), (2, -3.0), (3, -0.5), (4, 0.5), (5, 0.0)],
        )
    }

    #[test]
    fn top1_of_identical_fill_is_one() {
        let (inst, table) = similarity_fixture();
        let s = similarity_score(
            SimilarityVariant::Top1,
            SimilarityWeighting::Renormalized,
            &top5(),
            &inst,
            &inst.candidates[0],
            ContextMethod::SentenceOnly,
            &table,
        )
        .unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_top5_matches_brute_force() {
        let (inst, table) = similarity_fixture();
        let d = top5();
        // sentence vectors by hand: mean of (add, filler, now)
        let mean = |f: [f64; 2]| [(1.0 + f[0]) / 3.0, (1.0 + f[1]) / 3.0];
        let cos = |a: [f64; 2], b: [f64; 2]| {
            (a[0] * b[0] + a[1] * b[1])
                / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt())
        };
        let cand = mean([-2.0, -2.0]); // sand
        let tops = [
            [1.0, 1.0],
            [2.0, -1.0],
            [-1.0, 2.0],
            [0.5, 3.0],
            [3.0, 0.25],
        ]
        .map(mean);
        let logits = [2.0f64, 1.5, 0.5, 0.0, -0.5];
        let weights: Vec<f64> = logits.iter().map(|l| (l - 3.0).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        let renorm: f64 = tops
            .iter()
            .zip(&weights)
            .map(|(t, w)| w / wsum * cos(cand, *t))
            .sum();
        let raw: f64 = tops
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * cos(cand, *t))
            .sum();
        let max = tops
            .iter()
            .map(|t| cos(cand, *t))
            .fold(f64::NEG_INFINITY, f64::max);

        let run = |variant, weighting| {
            similarity_score(
                variant,
                weighting,
                &d,
                &inst,
                &inst.candidates[1],
                ContextMethod::SentenceOnly,
                &table,
            )
            .unwrap()
        };
        assert!(
            (run(
                SimilarityVariant::WeightedTop5,
                SimilarityWeighting::Renormalized
            ) - renorm)
                .abs()
                < 1e-12
        );
        assert!(
            (run(SimilarityVariant::WeightedTop5, SimilarityWeighting::Raw) - raw).abs() < 1e-12
        );
        assert!((run(SimilarityVariant::MaxTop5, SimilarityWeighting::Raw) - max).abs() < 1e-12);
        assert!(
            (run(SimilarityVariant::Top1, SimilarityWeighting::Raw) - cos(cand, tops[0])).abs()
                < 1e-12
        );
    }

    #[test]
    fn similarity_needs_five_tokens_and_known_words() {
        let (inst, table) = similarity_fixture();
        let mut short = top5();
        short.topk.truncate(3);
        assert_eq!(
            similarity_score(
                SimilarityVariant::Top1,
                SimilarityWeighting::Raw,
                &short,
                &inst,
                &inst.candidates[0],
                ContextMethod::SentenceOnly,
                &table
            ),
            Err(ScoreError::InsufficientTopK { have: 3, need: 5 })
        );
    }

    proptest! {
        #[test]
        fn softmax_over_full_vocab_sums_to_one(logits in prop::collection::vec(-20.0f64..20.0, 5..40)) {
            let mut sorted: Vec<(String, f64)> = logits.iter().enumerate().map(|(i, l)| (format!("t{i:03}"), *l)).collect();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let d = VocabDistribution {
                instance_id: "p".into(),
                log_partition: log_sum_exp(&logits),
                topk: sorted,
                candidate_logits: BTreeMap::new(),
            };
            let total: f64 = topk_probabilities(&d).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn logit_and_softmax_rank_alike(cands in prop::collection::vec(-10.0f64..10.0, 5), extra in -5.0f64..5.0) {
            let mut all = cands.clone();
            all.push(extra);
            let d = VocabDistribution {
                instance_id: "p".into(),
                topk: vec![],
                log_partition: log_sum_exp(&all),
                candidate_logits: (1u8..=5).zip(cands.iter().copied()).collect(),
            };
            for a in 1u8..=5 {
                for b in 1u8..=5 {
                    let (la, lb) = (logit_score(&d, a).unwrap(), logit_score(&d, b).unwrap());
                    let (pa, pb) = (softmax_prob(&d, a).unwrap(), softmax_prob(&d, b).unwrap());
                    if la < lb { prop_assert!(pa <= pb); }
                    if pa < pb { prop_assert!(la < lb); }
                }
            }
        }

        #[test]
        fn max_top5_dominates_top1(
            vectors in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 9),
            logits in prop::collection::vec(-4.0f64..4.0, 5),
            pick in 0usize..5,
        ) {
            prop_assume!(vectors.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)));
            let words = ["add", "now", "w0", "w1", "w2", "w3", "w4", "c0", "c1"];
            let mut table_text = format!("{} 3\n", words.len());
            for (w, v) in words.iter().zip(&vectors) {
                table_text.push_str(&format!("{w} {} {} {}\n", v[0], v[1], v[2]));
            }
            let table = parse_embedding_table(&table_text, "p").unwrap();
            let mut sorted: Vec<(String, f64)> = (0..5).map(|i| (format!("w{i}"), logits[i])).collect();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut all = logits.clone();
            all.push(1.0);
            let d = VocabDistribution {
                instance_id: "i".into(),
                topk: sorted,
                log_partition: log_sum_exp(&all),
                candidate_logits: BTreeMap::new(),
            };
            let (mut inst, _) = similarity_fixture();
            inst.candidates[0].text = ["c0", "c1", "w0", "w3", "c0 c1"][pick].to_string();
            let score = |variant| similarity_score(variant, SimilarityWeighting::Renormalized, &d, &inst, &inst.candidates[0], ContextMethod::SentenceOnly, &table);
            match (score(SimilarityVariant::Top1), score(SimilarityVariant::MaxTop5)) {
                (Ok(top1), Ok(max5)) => prop_assert!(max5 >= top1),
                (Ok(top1), Err(e)) => prop_assert!(false, "Top1 {} but MaxTop5 failed: {}", top1, e),
                (Err(_), _) => {}
            }
        }
    }
}
