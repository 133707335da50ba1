//! Task meta-features, feature standardization, and task distances.
//!
//! Two templates describe a task: a label-based template (class balance,
//! document lengths, a cheap landmark accuracy) and a generation template
//! (prompt/target statistics, vocabulary novelty, semantic similarity,
//! ROUGE-L, and a mean prompt embedding). Vectors are standardized with a
//! standard scaler before distances are taken.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::SystemProfile;

/// Guard added to standard deviations when standardizing.
pub const EPS_SCALE: f64 = 1e-8;

/// Hash buckets for the landmark bag-of-words.
const LANDMARK_BUCKETS: usize = 1 << 12;
/// PCA components used by the landmark.
const LANDMARK_COMPONENTS: usize = 8;
/// Power-iteration sweeps per component.
const LANDMARK_POWER_ITERS: usize = 50;
/// Decision tree depth for the landmark.
const LANDMARK_TREE_DEPTH: usize = 3;
/// Train/test split seed for the landmark.
const LANDMARK_SPLIT_SEED: u64 = 42;

/// Default dimension of the feature-hashing embedder.
pub const DEFAULT_EMBED_DIM: usize = 64;

/// Which meta-feature template a vector was extracted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    LabelBased,
    Generation,
}

/// Fixed-order numeric descriptor of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub template: Template,
    pub values: Vec<f64>,
}

impl MetaFeatureVector {
    /// Feature names in vector order. Embedding dims are named `embed_<i>`.
    pub fn names(&self) -> Vec<String> {
        match self.template {
            Template::LabelBased => LABEL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            Template::Generation => {
                let mut names: Vec<String> = GENERATION_FEATURE_NAMES
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                for i in 0..self.values.len().saturating_sub(names.len()) {
                    names.push(format!("embed_{i}"));
                }
                names
            }
        }
    }
}

pub const LABEL_FEATURE_NAMES: [&str; 10] = [
    "nr_samples",
    "nr_classes",
    "entropy",
    "min_class_prob",
    "max_class_prob",
    "imbalance_ratio",
    "avg_doc_len",
    "std_doc_len",
    "cv_doc_len",
    "landmark_acc",
];

pub const GENERATION_FEATURE_NAMES: [&str; 11] = [
    "nr_samples",
    "prompt_avg_len",
    "prompt_std_len",
    "prompt_ttr",
    "target_avg_len",
    "target_std_len",
    "target_ttr",
    "len_ratio",
    "vocab_novelty",
    "semantic_similarity",
    "rouge_l_f1",
];

/// A classification example: text plus its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDoc {
    pub label: String,
    pub text: String,
}

/// A generation example: input prompt plus target text.
#[derive(Debug, Clone, PartialEq)]
pub struct GenPair {
    pub prompt: String,
    pub target: String,
}

// ---------------------------------------------------------------------------
// Tokenization and hashing
// ---------------------------------------------------------------------------

/// Lowercase and split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// FNV-1a, fixed so hashed features are stable across platforms and runs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

// ---------------------------------------------------------------------------
// Population statistics helpers
// ---------------------------------------------------------------------------

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
fn pop_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn char_len(s: &str) -> f64 {
    s.chars().count() as f64
}

fn type_token_ratio(texts: &[&str]) -> f64 {
    let mut total = 0usize;
    let mut distinct = BTreeSet::new();
    for t in texts {
        for tok in tokenize(t) {
            total += 1;
            distinct.insert(tok);
        }
    }
    if total == 0 {
        1.0 // no tokens at all; degenerate corpus treated as maximally diverse
    } else {
        distinct.len() as f64 / total as f64
    }
}

// ---------------------------------------------------------------------------
// Label-based template
// ---------------------------------------------------------------------------

/// Extract the label-based template: class statistics, document-length
/// statistics, and the landmark accuracy.
pub fn extract_label_based(docs: &[LabeledDoc]) -> Result<MetaFeatureVector> {
    if docs.len() < 2 {
        return Err(Error::Invalid(format!(
            "label-based extraction needs at least 2 documents, got {}",
            docs.len()
        )));
    }
    let mut class_counts: Vec<(String, usize)> = Vec::new();
    for d in docs {
        match class_counts.iter_mut().find(|(l, _)| *l == d.label) {
            Some((_, c)) => *c += 1,
            None => class_counts.push((d.label.clone(), 1)),
        }
    }
    let n = docs.len() as f64;
    let probs: Vec<f64> = class_counts.iter().map(|(_, c)| *c as f64 / n).collect();
    let entropy = -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>();
    let min_prob = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_prob = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let imbalance = if class_counts.len() == 1 {
        1.0
    } else {
        max_prob / min_prob
    };

    let lengths: Vec<f64> = docs.iter().map(|d| char_len(&d.text)).collect();
    let avg_len = mean(&lengths);
    let std_len = pop_std(&lengths);
    let cv_len = if avg_len > 0.0 {
        std_len / avg_len
    } else {
        0.0
    };

    // Fall back to the majority-class rate when the landmark preconditions
    // (>= 10 docs, >= 2 classes) do not hold for this corpus.
    let majority_rate = max_prob;
    let landmark = if docs.len() >= 10 && class_counts.len() >= 2 {
        landmark_accuracy(docs)?
    } else {
        majority_rate
    };

    Ok(MetaFeatureVector {
        template: Template::LabelBased,
        values: vec![
            n,
            class_counts.len() as f64,
            entropy,
            min_prob,
            max_prob,
            imbalance,
            avg_len,
            std_len,
            cv_len,
            landmark,
        ],
    })
}

/// Landmark accuracy: hashed bag-of-words (2^12 buckets) -> PCA to 8
/// components (power iteration, fixed seed) -> depth-3 decision tree (Gini),
/// scored on a fixed 70/30 split with seed 42.
pub fn landmark_accuracy(docs: &[LabeledDoc]) -> Result<f64> {
    if docs.len() < 10 {
        return Err(Error::Invalid(format!(
            "landmark needs at least 10 documents, got {}",
            docs.len()
        )));
    }
    let labels: BTreeSet<&str> = docs.iter().map(|d| d.label.as_str()).collect();
    if labels.len() < 2 {
        return Err(Error::Invalid("landmark needs at least 2 classes".into()));
    }
    let label_index: Vec<&str> = labels.into_iter().collect();
    let classes: Vec<usize> = docs
        .iter()
        .map(|d| label_index.iter().position(|l| *l == d.label).unwrap())
        .collect();

    if docs.windows(2).all(|w| w[0].text == w[1].text) {
        // Degenerate corpus: every document identical, nothing to learn.
        return Ok(majority_rate(&classes, label_index.len()));
    }

    let rows: Vec<Vec<(u32, f64)>> = docs.iter().map(|d| hashed_bow(&d.text)).collect();
    let projected = pca_project(&rows, LANDMARK_COMPONENTS);

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(LANDMARK_SPLIT_SEED);
    order.shuffle(&mut rng);
    let train_len = docs.len() * 7 / 10;
    let (train_idx, test_idx) = order.split_at(train_len);

    let tree = DecisionTree::fit(
        &projected,
        &classes,
        train_idx,
        label_index.len(),
        LANDMARK_TREE_DEPTH,
    );
    let hits = test_idx
        .iter()
        .filter(|&&i| tree.predict(&projected[i]) == classes[i])
        .count();
    Ok(hits as f64 / test_idx.len() as f64)
}

fn majority_rate(classes: &[usize], n_classes: usize) -> f64 {
    let mut counts = vec![0usize; n_classes];
    for &c in classes {
        counts[c] += 1;
    }
    *counts.iter().max().unwrap_or(&0) as f64 / classes.len().max(1) as f64
}

/// Sparse hashed token counts, sorted by bucket.
fn hashed_bow(text: &str) -> Vec<(u32, f64)> {
    let mut counts = std::collections::BTreeMap::new();
    for tok in tokenize(text) {
        let bucket = (fnv1a(tok.as_bytes()) % LANDMARK_BUCKETS as u64) as u32;
        *counts.entry(bucket).or_insert(0.0) += 1.0;
    }
    counts.into_iter().collect()
}

fn sparse_dot(row: &[(u32, f64)], dense: &[f64]) -> f64 {
    row.iter().map(|&(b, c)| c * dense[b as usize]).sum()
}

/// Project rows onto the top principal components of the centered data,
/// computed by seeded power iteration with Gram-Schmidt deflation.
fn pca_project(rows: &[Vec<(u32, f64)>], n_components: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    let dim = LANDMARK_BUCKETS;
    let mut mu = vec![0.0; dim];
    for row in rows {
        for &(b, c) in row {
            mu[b as usize] += c;
        }
    }
    for v in &mut mu {
        *v /= n as f64;
    }

    let mut components: Vec<Vec<f64>> = Vec::new();
    for k in 0..n_components {
        let mut rng = ChaCha8Rng::seed_from_u64(LANDMARK_SPLIT_SEED + 1 + k as u64);
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        normalize(&mut v);
        for _ in 0..LANDMARK_POWER_ITERS {
            // w = sum_d (x_d - mu) * <x_d - mu, v>, computed sparsely
            let mut w = vec![0.0; dim];
            let mu_dot = dot(&mu, &v);
            let mut score_sum = 0.0;
            for row in rows {
                let s = sparse_dot(row, &v) - mu_dot;
                score_sum += s;
                for &(b, c) in row {
                    w[b as usize] += s * c;
                }
            }
            for (wi, mi) in w.iter_mut().zip(&mu) {
                *wi -= score_sum * mi;
            }
            for prev in &components {
                let proj = dot(&w, prev);
                for (wi, pi) in w.iter_mut().zip(prev) {
                    *wi -= proj * pi;
                }
            }
            if !normalize(&mut w) {
                break; // variance exhausted; remaining components are zero
            }
            v = w;
        }
        for prev in &components {
            let proj = dot(&v, prev);
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= proj * pi;
            }
        }
        normalize(&mut v);
        components.push(v);
    }

    rows.iter()
        .map(|row| {
            components
                .iter()
                .map(|c| sparse_dot(row, c) - dot(&mu, c))
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = dot(v, v).sqrt();
    if norm < 1e-12 {
        return false;
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    true
}

// ---------------------------------------------------------------------------
// Depth-limited CART with Gini impurity
// ---------------------------------------------------------------------------

enum TreeNode {
    Leaf(usize),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

struct DecisionTree {
    root: TreeNode,
}

impl DecisionTree {
    fn fit(
        data: &[Vec<f64>],
        classes: &[usize],
        idx: &[usize],
        n_classes: usize,
        depth: usize,
    ) -> DecisionTree {
        DecisionTree {
            root: build_node(data, classes, idx, n_classes, depth),
        }
    }

    fn predict(&self, x: &[f64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf(c) => return *c,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn build_node(
    data: &[Vec<f64>],
    classes: &[usize],
    idx: &[usize],
    n_classes: usize,
    depth: usize,
) -> TreeNode {
    let mut counts = vec![0usize; n_classes];
    for &i in idx {
        counts[classes[i]] += 1;
    }
    let node_gini = gini(&counts, idx.len());
    if depth == 0 || node_gini == 0.0 || idx.len() < 2 {
        return TreeNode::Leaf(majority(&counts));
    }

    let n_features = data[idx[0]].len();
    let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)
    #[allow(clippy::needless_range_loop)]
    for f in 0..n_features {
        let mut vals: Vec<(f64, usize)> = idx.iter().map(|&i| (data[i][f], classes[i])).collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_counts = vec![0usize; n_classes];
        let total = idx.len();
        for i in 0..total - 1 {
            left_counts[vals[i].1] += 1;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let threshold = (vals[i].0 + vals[i + 1].0) / 2.0;
            let left_n = i + 1;
            let right_counts: Vec<usize> = counts
                .iter()
                .zip(&left_counts)
                .map(|(t, l)| t - l)
                .collect();
            let weighted = (left_n as f64 * gini(&left_counts, left_n)
                + (total - left_n) as f64 * gini(&right_counts, total - left_n))
                / total as f64;
            let better = match best {
                None => true,
                Some((bw, bf, bt)) => {
                    weighted < bw - 1e-15
                        || ((weighted - bw).abs() <= 1e-15 && (f, threshold) < (bf, bt))
                }
            };
            if better {
                best = Some((weighted, f, threshold));
            }
        }
    }

    match best {
        Some((weighted, feature, threshold)) if weighted < node_gini - 1e-15 => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| data[i][feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(build_node(data, classes, &left_idx, n_classes, depth - 1)),
                right: Box::new(build_node(data, classes, &right_idx, n_classes, depth - 1)),
            }
        }
        _ => TreeNode::Leaf(majority(&counts)),
    }
}

// ---------------------------------------------------------------------------
// Generation template
// ---------------------------------------------------------------------------

/// Embeds a text into a fixed-dimension vector.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Deterministic feature-hashing embedder: token hashes map to signed
/// buckets, the result is l2-normalized. A hermetic stand-in for a learned
/// sentence embedder.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> HashEmbedder {
        assert!(dim > 0);
        HashEmbedder { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder::new(DEFAULT_EMBED_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            let h = fnv1a(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 && nb == 0.0 {
        1.0
    } else if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Extract the generation template plus the mean-prompt-embedding block.
pub fn extract_generation(pairs: &[GenPair], embedder: &dyn Embedder) -> Result<MetaFeatureVector> {
    if pairs.is_empty() {
        return Err(Error::Invalid(
            "generation extraction needs at least 1 pair".into(),
        ));
    }
    let prompt_lens: Vec<f64> = pairs.iter().map(|p| char_len(&p.prompt)).collect();
    let target_lens: Vec<f64> = pairs.iter().map(|p| char_len(&p.target)).collect();
    let prompts: Vec<&str> = pairs.iter().map(|p| p.prompt.as_str()).collect();
    let targets: Vec<&str> = pairs.iter().map(|p| p.target.as_str()).collect();

    // Empty prompts use length 1 in the ratio so the feature stays finite.
    let len_ratio = mean(
        &pairs
            .iter()
            .map(|p| char_len(&p.target) / char_len(&p.prompt).max(1.0))
            .collect::<Vec<_>>(),
    );

    let novelty = mean(
        &pairs
            .iter()
            .map(|p| {
                let prompt_tokens: BTreeSet<String> = tokenize(&p.prompt).into_iter().collect();
                let target_tokens = tokenize(&p.target);
                if target_tokens.is_empty() {
                    0.0
                } else {
                    target_tokens
                        .iter()
                        .filter(|t| !prompt_tokens.contains(*t))
                        .count() as f64
                        / target_tokens.len() as f64
                }
            })
            .collect::<Vec<_>>(),
    );

    let similarity = mean(
        &pairs
            .iter()
            .map(|p| cosine_similarity(&embedder.embed(&p.prompt), &embedder.embed(&p.target)))
            .collect::<Vec<_>>(),
    );

    let rouge = mean(
        &pairs
            .iter()
            .map(|p| rouge_l_f1(&tokenize(&p.prompt), &tokenize(&p.target)))
            .collect::<Vec<_>>(),
    );

    let mut mean_embed = vec![0.0; embedder.dim()];
    for p in pairs {
        for (acc, x) in mean_embed.iter_mut().zip(embedder.embed(&p.prompt)) {
            *acc += x;
        }
    }
    for x in &mut mean_embed {
        *x /= pairs.len() as f64;
    }

    let mut values = vec![
        pairs.len() as f64,
        mean(&prompt_lens),
        pop_std(&prompt_lens),
        type_token_ratio(&prompts),
        mean(&target_lens),
        pop_std(&target_lens),
        type_token_ratio(&targets),
        len_ratio,
        novelty,
        similarity,
        rouge,
    ];
    values.extend(mean_embed);
    Ok(MetaFeatureVector {
        template: Template::Generation,
        values,
    })
}

/// ROUGE-L F1 between token sequences: harmonic mean of LCS precision and
/// recall. Both empty -> 1.0; exactly one empty -> 0.0.
pub fn rouge_l_f1<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let n = candidate.len();
    let m = reference.len();
    let mut dp = vec![0u32; (n + 1) * (m + 1)];
    for i in 1..=n {
        for j in 1..=m {
            dp[i * (m + 1) + j] = if candidate[i - 1].as_ref() == reference[j - 1].as_ref() {
                dp[(i - 1) * (m + 1) + j - 1] + 1
            } else {
                dp[(i - 1) * (m + 1) + j].max(dp[i * (m + 1) + j - 1])
            };
        }
    }
    let lcs = dp[n * (m + 1) + m] as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / n as f64;
    let recall = lcs / m as f64;
    2.0 * precision * recall / (precision + recall)
}

// ---------------------------------------------------------------------------
// System profile
// ---------------------------------------------------------------------------

/// Optional overrides for [`system_profile`], for reproducible tests.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SystemOverrides {
    pub cpu_cores: Option<u32>,
    pub cpu_freq_mhz: Option<f64>,
    pub ram_total_mb: Option<u64>,
    pub gpu_vram_mb: Option<u64>,
}

/// Read the host hardware profile, with any field overridable.
///
/// Fields that cannot be detected default to 0 (GPU VRAM in particular is
/// never probed; pass an override when simulating a GPU rig).
pub fn system_profile(overrides: &SystemOverrides) -> SystemProfile {
    let cpu_cores = overrides.cpu_cores.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get() as u32)
            .unwrap_or(1)
    });
    let cpu_freq_mhz = overrides.cpu_freq_mhz.unwrap_or_else(detect_cpu_freq_mhz);
    let ram_total_mb = overrides.ram_total_mb.unwrap_or_else(detect_ram_total_mb);
    let gpu_vram_mb = overrides.gpu_vram_mb.unwrap_or(0);
    SystemProfile {
        cpu_cores: cpu_cores.max(1),
        cpu_freq_mhz,
        ram_total_mb,
        gpu_vram_mb,
    }
}

fn detect_cpu_freq_mhz() -> f64 {
    if let Ok(text) = std::fs::read_to_string("/proc/cpuinfo") {
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("cpu MHz") {
                if let Some(v) = rest.split(':').nth(1) {
                    if let Ok(mhz) = v.trim().parse::<f64>() {
                        return mhz;
                    }
                }
            }
        }
    }
    0.0
}

fn detect_ram_total_mb() -> u64 {
    if let Ok(text) = std::fs::read_to_string("/proc/meminfo") {
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("MemTotal:") {
                let kb: u64 = rest
                    .trim()
                    .trim_end_matches("kB")
                    .trim()
                    .parse()
                    .unwrap_or(0);
                return kb / 1024;
            }
        }
    }
    0
}

// ---------------------------------------------------------------------------
// Standardization and distances
// ---------------------------------------------------------------------------

/// Per-dimension standard scaler fitted on meta-feature vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    template: Template,
    inner: RawScaler,
}

/// Scaler over plain vectors, shared by the template-aware API and the
/// concatenated feature spaces used for retrieval distances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawScaler {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl RawScaler {
    pub fn fit<V: AsRef<[f64]>>(vectors: &[V]) -> Result<RawScaler> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::Invalid("scaler needs at least 1 vector".into()))?
            .as_ref();
        let dim = first.len();
        for v in vectors {
            if v.as_ref().len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.as_ref().len(),
                });
            }
        }
        let n = vectors.len() as f64;
        let means: Vec<f64> = (0..dim)
            .map(|d| vectors.iter().map(|v| v.as_ref()[d]).sum::<f64>() / n)
            .collect();
        let stds: Vec<f64> = (0..dim)
            .map(|d| {
                (vectors
                    .iter()
                    .map(|v| (v.as_ref()[d] - means[d]).powi(2))
                    .sum::<f64>()
                    / n)
                    .sqrt()
            })
            .collect();
        Ok(RawScaler { means, stds })
    }

    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: v.len(),
            });
        }
        Ok(v.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(x, (m, s))| (x - m) / (s + EPS_SCALE))
            .collect())
    }
}

/// Fit a standard scaler over vectors of one template.
pub fn fit_scaler(vectors: &[MetaFeatureVector]) -> Result<Scaler> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Invalid("scaler needs at least 1 vector".into()))?;
    if vectors.iter().any(|v| v.template != first.template) {
        return Err(Error::Invalid("scaler input mixes templates".into()));
    }
    let raw: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    Ok(Scaler {
        template: first.template,
        inner: RawScaler::fit(&raw)?,
    })
}

/// Standardize one vector with a fitted scaler.
pub fn standardize(scaler: &Scaler, v: &MetaFeatureVector) -> Result<Vec<f64>> {
    if v.template != scaler.template {
        return Err(Error::Invalid(
            "vector template does not match scaler".into(),
        ));
    }
    scaler.inner.transform(&v.values)
}

/// Distance metric over standardized feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    Cosine,
}

/// Distance between standardized vectors. Cosine distance of any zero vector
/// is defined as 1.
pub fn distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(match metric {
        DistanceMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cosine => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else if a == b {
                0.0 // avoid fp residue in 1 - dot/(na*nb) for identical inputs
            } else {
                1.0 - dot(a, b) / (na * nb)
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Dataset fixture loading
// ---------------------------------------------------------------------------

/// Parse `label TAB text` lines.
pub fn parse_labeled(text: &str) -> Result<Vec<LabeledDoc>> {
    split_tab_lines(text)?
        .into_iter()
        .map(|(a, b)| Ok(LabeledDoc { label: a, text: b }))
        .collect()
}

/// Parse `prompt TAB target` lines.
pub fn parse_pairs(text: &str) -> Result<Vec<GenPair>> {
    split_tab_lines(text)?
        .into_iter()
        .map(|(a, b)| {
            Ok(GenPair {
                prompt: a,
                target: b,
            })
        })
        .collect()
}

fn split_tab_lines(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| Error::Parse(format!("line {}: expected a TAB separator", i + 1)))
        })
        .collect()
}
