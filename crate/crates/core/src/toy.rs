//! Deterministic synthetic corpus plus matching score files.
//!
//! Every signal is driven by a latent plausibility derived from the
//! candidate's gold score, blurred by seeded noise. Output depends only on
//! the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{ClozeInstance, Dataset, FillerCandidate, Label, PLACEHOLDER};
use crate::experiment::{ExperimentConfig, GridSpec, HeadSpec, LogisticSpec, SourceSpec};
use crate::preprocess::{
    fill_placeholder, mlm_adjust_filler, render_context, tokenize, ContextMethod,
};
use crate::scores::{
    log_sum_exp, ngram_for, write_mlm_scores, write_rtd, NgramTransform, SimilarityVariant,
    SimilarityWeighting, VocabDistribution,
};

pub const TRAIN_INSTANCES: usize = 40;
pub const DEV_INSTANCES: usize = 20;
pub const TOP_K: usize = 10;
pub const EMBEDDING_DIM: usize = 8;

/// Label slots of every instance before shuffling.
const SLOT_LABELS: [Label; 5] = [
    Label::Implausible,
    Label::Implausible,
    Label::Neutral,
    Label::Plausible,
    Label::Plausible,
];

const TITLES: [&str; 10] = [
    "Cook Rice",
    "Plant Tomatoes",
    "Clean a Window",
    "Paint a Fence",
    "Bake Bread",
    "Wash a Car",
    "Fix a Bike Chain",
    "Brew Tea",
    "Pack a Lunch",
    "Repot a Plant",
];
const SECTIONS: [&str; 4] = ["Steps", "Preparing", "Getting Started", "Finishing Up"];
const PREV: [&str; 6] = [
    "Gather your supplies.",
    "Wash your hands first.",
    "Clear some space to work.",
    "Read the instructions carefully.",
    "Lay out an old sheet.",
    "Set a timer.",
];
const NEXT: [&str; 6] = [
    "Wait a few minutes.",
    "Check the result.",
    "Repeat if needed.",
    "Clean up afterwards.",
    "Let it rest.",
    "",
];
const VERBS: [&str; 10] = [
    "Add", "Place", "Put", "Pour", "Move", "Keep", "Use", "Take", "Spread", "Mix",
];
const PREPS: [&str; 8] = ["to", "on", "in", "into", "near", "under", "with", "over"];
const OBJECTS: [&str; 8] = [
    "bowl", "table", "box", "pot", "shelf", "corner", "bag", "tray",
];
const NOUNS: [&str; 30] = [
    "salt", "water", "flour", "sugar", "paper", "paint", "soap", "oil", "tape", "glue", "rice",
    "seeds", "soil", "brush", "cloth", "towel", "sponge", "bucket", "hammer", "nails", "string",
    "wire", "butter", "milk", "honey", "sand", "stones", "leaves", "spoon", "knife",
];
const DETERMINERS: [&str; 4] = ["the", "some", "a", "my"];
const DISTRACTORS: [&str; 8] = [
    "it",
    "them",
    "this",
    "that",
    "everything",
    "something",
    "one",
    "more",
];

/// Log of the probability mass outside the listed toy vocabulary.
const REST_OF_VOCAB_LOGIT: f64 = 5.0;

/// File names written by [`ToyData::write_to`], in write order.
pub const FILE_NAMES: [&str; 10] = [
    "train.tsv",
    "dev.tsv",
    "mlm.jsonl",
    "ngrams.tsv",
    "rtd.tsv",
    "embeddings.txt",
    "contextual.jsonl",
    "grid.json",
    "grid_context.json",
    "grid_all.json",
];

pub struct ToyData {
    pub train: Dataset,
    pub dev: Dataset,
    files: BTreeMap<&'static str, String>,
}

impl ToyData {
    /// File name and contents pairs, in [`FILE_NAMES`] order.
    pub fn files(&self) -> Vec<(&'static str, &str)> {
        FILE_NAMES
            .iter()
            .map(|name| (*name, self.files[name].as_str()))
            .collect()
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.get(name).map(String::as_str)
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        self.files()
            .into_iter()
            .map(|(name, contents)| {
                let path = dir.join(name);
                fs::write(&path, contents)?;
                Ok(path)
            })
            .collect()
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gold_score(rng: &mut ChaCha8Rng, label: Label) -> f64 {
    let (lo, hi) = match label {
        Label::Implausible => (1.0, 2.2),
        Label::Neutral => (2.4, 3.6),
        Label::Plausible => (3.8, 5.0),
    };
    (rng.random_range(lo..=hi) * 10.0_f64).round() / 10.0
}

/// Latent plausibility in `[-1, 1]`.
fn latent(score: f64) -> f64 {
    (score - 3.0) / 2.0
}

fn make_instance(rng: &mut ChaCha8Rng, id: String) -> ClozeInstance {
    let verb = VERBS.choose(rng).unwrap();
    let prep = PREPS.choose(rng).unwrap();
    let object = OBJECTS.choose(rng).unwrap();
    let mut labels = SLOT_LABELS;
    labels.shuffle(rng);
    let nouns: Vec<&str> = NOUNS.choose_multiple(rng, 5).copied().collect();
    let candidates = labels
        .iter()
        .zip(nouns)
        .enumerate()
        .map(|(i, (&label, noun))| {
            let text = if rng.random_bool(0.2) {
                format!("{} {noun}", DETERMINERS.choose(rng).unwrap())
            } else {
                noun.to_string()
            };
            FillerCandidate {
                candidate_id: i as u8 + 1,
                text,
                gold_label: Some(label),
                gold_score: Some(gold_score(rng, label)),
            }
        })
        .collect();
    ClozeInstance {
        id,
        title: TITLES.choose(rng).unwrap().to_string(),
        section_header: SECTIONS.choose(rng).unwrap().to_string(),
        prev_context: PREV.choose(rng).unwrap().to_string(),
        masked_sentence: format!("{verb} {PLACEHOLDER} {prep} the {object}."),
        next_context: NEXT.choose(rng).unwrap().to_string(),
        candidates,
    }
}

fn make_dataset(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> Dataset {
    let instances = (0..n)
        .map(|i| make_instance(rng, format!("toy-{prefix}-{i:02}")))
        .collect();
    Dataset::new(instances).expect("generated instances are valid")
}

fn make_distribution(rng: &mut ChaCha8Rng, instance: &ClozeInstance) -> VocabDistribution {
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut vocab: BTreeMap<String, f64> = BTreeMap::new();
    for token in DISTRACTORS {
        vocab.insert(token.into(), round4(1.5 + 0.8 * noise.sample(rng)));
    }
    for token in NOUNS {
        vocab.insert(token.into(), round4(-0.5 + noise.sample(rng)));
    }
    let mut candidate_logits = BTreeMap::new();
    for c in &instance.candidates {
        let z = latent(c.gold_score.expect("toy candidates are scored"));
        let logit = round4(1.0 + 2.2 * z + noise.sample(rng));
        let word = mlm_adjust_filler(&c.text).expect("toy fillers have one or two words");
        vocab.insert(word.to_string(), logit);
        candidate_logits.insert(c.candidate_id, logit);
    }
    let mut all: Vec<f64> = vocab.values().copied().collect();
    all.push(REST_OF_VOCAB_LOGIT);
    let log_partition = log_sum_exp(&all);
    let mut topk: Vec<(String, f64)> = vocab.into_iter().collect();
    topk.sort_by(|(ta, la), (tb, lb)| lb.total_cmp(la).then_with(|| ta.cmp(tb)));
    topk.truncate(TOP_K);
    VocabDistribution {
        instance_id: instance.id.clone(),
        topk,
        log_partition,
        candidate_logits,
    }
}

fn ngram_count(rng: &mut ChaCha8Rng, z: f64) -> u64 {
    if rng.random_bool(sigmoid(-4.0 * z - 1.5)) {
        return 0;
    }
    let noise: f64 = Normal::new(0.0, 0.7).unwrap().sample(rng);
    (2.5 + 1.5 * z + noise).exp().round().max(1.0) as u64
}

fn vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..EMBEDDING_DIM)
        .map(|_| round4(normal.sample(rng)))
        .collect()
}

fn toy_grids() -> [(&'static str, GridSpec); 3] {
    let config = |name: &str, sources: Vec<SourceSpec>, head: HeadSpec| ExperimentConfig {
        name: name.into(),
        train: "train.tsv".into(),
        dev: Some("dev.tsv".into()),
        context_method: ContextMethod::Full,
        sources,
        head,
        zero_ngram_rule: false,
        output_dir: None,
        seed: 0,
    };
    let softmax = || SourceSpec::MlmSoftmax {
        path: "mlm.jsonl".into(),
        name: None,
    };
    let ngram = |transform| SourceSpec::Ngram {
        path: "ngrams.tsv".into(),
        transform,
        name: None,
    };
    let similarity = |variant| SourceSpec::MlmSimilarity {
        path: "mlm.jsonl".into(),
        embeddings: "embeddings.txt".into(),
        variant,
        weighting: SimilarityWeighting::Renormalized,
        name: None,
    };
    let gnb = || HeadSpec::GaussianNb {
        variance_floor: crate::models::VARIANCE_FLOOR,
    };
    let linreg = || HeadSpec::LinearRegression {
        calibrate_on: Default::default(),
    };
    let static_embedding = || SourceSpec::Embedding {
        table: Some("embeddings.txt".into()),
        contextual: None,
    };

    let pinned = GridSpec {
        name: Some("pinned".into()),
        entries: vec![
            config("gaussian_nb_softmax", vec![softmax()], gnb()),
            config("linear_regression_softmax", vec![softmax()], linreg()),
            config(
                "linear_regression_softmax_ngram",
                vec![softmax(), ngram(NgramTransform::Log1p)],
                linreg(),
            ),
        ],
    };

    let context = GridSpec {
        name: Some("context_methods".into()),
        entries: ContextMethod::ALL
            .iter()
            .map(|&method| ExperimentConfig {
                context_method: method,
                ..config(
                    &format!("logistic_embedding_{}", method.as_str()),
                    vec![static_embedding()],
                    HeadSpec::Logistic(LogisticSpec::default()),
                )
            })
            .collect(),
    };

    let mut zero_rule = config(
        "linear_regression_ngram_zero_rule",
        vec![ngram(NgramTransform::Log1p)],
        linreg(),
    );
    zero_rule.zero_ngram_rule = true;
    let all = GridSpec {
        name: Some("all_heads".into()),
        entries: vec![
            config(
                "multinomial_nb_tfidf",
                vec![SourceSpec::Tfidf],
                HeadSpec::MultinomialNb { alpha: 1.0 },
            ),
            config(
                "logistic_contextual",
                vec![SourceSpec::Embedding {
                    table: None,
                    contextual: Some("contextual.jsonl".into()),
                }],
                HeadSpec::Logistic(LogisticSpec::default()),
            ),
            config(
                "gaussian_nb_logit",
                vec![SourceSpec::MlmLogit {
                    path: "mlm.jsonl".into(),
                    name: None,
                }],
                gnb(),
            ),
            config("gaussian_nb_softmax", vec![softmax()], gnb()),
            config(
                "gaussian_nb_sim_top1",
                vec![similarity(SimilarityVariant::Top1)],
                gnb(),
            ),
            config(
                "gaussian_nb_sim_weighted_top5",
                vec![similarity(SimilarityVariant::WeightedTop5)],
                gnb(),
            ),
            config(
                "gaussian_nb_sim_max_top5",
                vec![similarity(SimilarityVariant::MaxTop5)],
                gnb(),
            ),
            config(
                "gaussian_nb_ngram",
                vec![ngram(NgramTransform::Log1p)],
                gnb(),
            ),
            config(
                "gaussian_nb_rtd",
                vec![SourceSpec::Rtd {
                    path: "rtd.tsv".into(),
                    name: None,
                }],
                gnb(),
            ),
            zero_rule,
            config("linear_regression_softmax", vec![softmax()], linreg()),
            config(
                "linear_regression_softmax_ngram",
                vec![softmax(), ngram(NgramTransform::Log1p)],
                linreg(),
            ),
            config(
                "linear_regression_softmax_ngram_rtd",
                vec![
                    softmax(),
                    ngram(NgramTransform::Log1p),
                    SourceSpec::Rtd {
                        path: "rtd.tsv".into(),
                        name: None,
                    },
                ],
                linreg(),
            ),
        ],
    };
    [
        ("grid.json", pinned),
        ("grid_context.json", context),
        ("grid_all.json", all),
    ]
}

fn grid_json(grid: &GridSpec) -> String {
    let mut text = serde_json::to_string_pretty(grid).expect("grid serializes");
    text.push('\n');
    text
}

/// Builds the synthetic corpus and every score file for `seed`.
pub fn make_toy_data(seed: u64) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = make_dataset(&mut rng, "train", TRAIN_INSTANCES);
    let dev = make_dataset(&mut rng, "dev", DEV_INSTANCES);
    let instances: Vec<&ClozeInstance> = train.instances().iter().chain(dev.instances()).collect();

    let distributions: Vec<VocabDistribution> = instances
        .iter()
        .map(|i| make_distribution(&mut rng, i))
        .collect();

    // The first occurrence of a gram fixes its count.
    let mut grams: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    let mut rtd = Vec::new();
    let mut contextual = String::new();
    let rtd_noise = Normal::new(0.0, 0.8).unwrap();
    let ctx_noise = Normal::new(0.0, 0.6).unwrap();
    let direction = vector(&mut rng);
    for instance in &instances {
        for c in &instance.candidates {
            let z = latent(c.gold_score.expect("toy candidates are scored"));
            let count = ngram_count(&mut rng, z);
            grams.entry(ngram_for(instance, c)).or_insert(count);
            let p = sigmoid(-1.8 * z + rtd_noise.sample(&mut rng));
            rtd.push((instance.id.as_str(), c.candidate_id, round4(p)));
            let v: Vec<f64> = direction
                .iter()
                .map(|d| round4(z * d + ctx_noise.sample(&mut rng)))
                .collect();
            contextual.push_str(
                &serde_json::json!({"id": instance.id, "candidate_id": c.candidate_id, "vector": v})
                    .to_string(),
            );
            contextual.push('\n');
        }
    }
    for _ in 0..20 {
        let gram = vec![
            DISTRACTORS.choose(&mut rng).unwrap().to_string(),
            NOUNS.choose(&mut rng).unwrap().to_string(),
            DISTRACTORS.choose(&mut rng).unwrap().to_string(),
        ];
        let count = rng.random_range(1..200);
        grams.entry(gram).or_insert(count);
    }
    let mut ngrams = String::new();
    for (gram, count) in &grams {
        if *count > 0 {
            ngrams.push_str(&format!("{}\t{count}\n", gram.join("\t")));
        }
    }

    let mut tokens: BTreeSet<String> = BTreeSet::new();
    tokens.extend(
        NOUNS
            .iter()
            .chain(&DISTRACTORS)
            .chain(&DETERMINERS)
            .map(|s| s.to_string()),
    );
    for instance in &instances {
        for method in ContextMethod::ALL {
            let context = render_context(instance, method);
            for c in &instance.candidates {
                let filled = fill_placeholder(&context, &c.text).expect("one placeholder");
                tokens.extend(tokenize(&filled));
            }
        }
    }
    let mut embeddings = format!("{} {EMBEDDING_DIM}\n", tokens.len());
    for token in &tokens {
        let values: Vec<String> = vector(&mut rng).iter().map(f64::to_string).collect();
        embeddings.push_str(&format!("{token} {}\n", values.join(" ")));
    }

    let mut files = BTreeMap::new();
    files.insert("train.tsv", train.to_tsv());
    files.insert("dev.tsv", dev.to_tsv());
    files.insert("mlm.jsonl", write_mlm_scores(&distributions));
    files.insert("ngrams.tsv", ngrams);
    files.insert("rtd.tsv", write_rtd(rtd.iter().copied()));
    files.insert("embeddings.txt", embeddings);
    files.insert("contextual.jsonl", contextual);
    for (name, grid) in toy_grids() {
        files.insert(name, grid_json(&grid));
    }
    ToyData { train, dev, files }
}
