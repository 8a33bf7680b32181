//! Submission corpus ingestion and balanced cross-language pair construction.
//!
//! The on-disk layout is `<root>/<problem_id>/<language>/<submission_id>.<ext>`
//! with a CSV metadata table carrying `submission_id, problem_id, language, status`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("insufficient corpus for {what}: needed {needed}, available {available}")]
    InsufficientCorpus {
        what: String,
        needed: usize,
        available: usize,
    },
    #[error("pair count must be even, got {0}")]
    OddCount(usize),
    #[error("invalid submission {id}: {reason}")]
    InvalidSubmission { id: String, reason: String },
    #[error("metadata error: {0}")]
    Metadata(#[from] csv::Error),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Programming language of a submission. Unknown names are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    Python,
    Java,
    Rust,
    Ruby,
    Other(String),
}

impl Language {
    pub fn as_str(&self) -> &str {
        match self {
            Language::Python => "Python",
            Language::Java => "Java",
            Language::Rust => "Rust",
            Language::Ruby => "Ruby",
            Language::Other(name) => name,
        }
    }

    /// Conventional source file extension.
    pub fn extension(&self) -> &str {
        match self {
            Language::Python => "py",
            Language::Java => "java",
            Language::Rust => "rs",
            Language::Ruby => "rb",
            Language::Other(_) => "txt",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "python" | "python3" => Language::Python,
            "java" => Language::Java,
            "rust" => Language::Rust,
            "ruby" => Language::Ruby,
            _ => Language::Other(s.trim().to_string()),
        })
    }
}

impl Serialize for Language {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Accepted,
    Other(String),
}

impl Status {
    pub fn parse(s: &str) -> Self {
        if s.trim() == "Accepted" {
            Status::Accepted
        } else {
            Status::Other(s.trim().to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Submission {
    pub submission_id: String,
    pub problem_id: String,
    pub language: Language,
    pub source_text: String,
    pub status: Status,
}

/// Two snippets in different languages with a clone label (1 = same problem).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodePair {
    pub pair_id: String,
    pub code1: String,
    pub code2: String,
    pub lang1: Language,
    pub lang2: Language,
    pub problem1: String,
    pub problem2: String,
    pub label: u8,
}

impl CodePair {
    /// Checks the label/problem consistency and language distinctness.
    pub fn is_consistent(&self) -> bool {
        self.lang1 != self.lang2
            && self.label <= 1
            && (self.label == 1) == (self.problem1 == self.problem2)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_problems: BTreeSet<String>,
    pub sd_test_problems: BTreeSet<String>,
    pub dd_test_problems: BTreeSet<String>,
    pub train_pair_ids: Vec<String>,
    pub sd_test_pair_ids: Vec<String>,
    pub dd_test_pair_ids: Vec<String>,
}

/// Keeps only accepted submissions, preserving order.
pub fn filter_accepted(submissions: &[Submission]) -> Vec<Submission> {
    submissions
        .iter()
        .filter(|s| s.status == Status::Accepted)
        .cloned()
        .collect()
}

/// Drops submissions whose measured length exceeds `max_len`.
pub fn exclude_oversized<F>(submissions: Vec<Submission>, max_len: usize, measure: F) -> Vec<Submission>
where
    F: Fn(&str) -> usize,
{
    submissions
        .into_iter()
        .filter(|s| measure(&s.source_text) <= max_len)
        .collect()
}

#[derive(Debug, Deserialize)]
struct MetadataRow {
    submission_id: String,
    problem_id: String,
    language: String,
    status: String,
}

/// Reads the metadata table and the matching source files under `root`.
///
/// Rows whose language is outside `languages` are skipped. A row whose source
/// file is missing or empty is an error.
pub fn load_corpus(root: &Path, metadata: &Path, languages: &[Language]) -> Result<Vec<Submission>> {
    let mut reader = csv::Reader::from_path(metadata)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<MetadataRow>() {
        let row = row?;
        let language: Language = row.language.parse().unwrap();
        if !languages.contains(&language) {
            continue;
        }
        let dir = root.join(&row.problem_id).join(&row.language);
        let path = find_source(&dir, &row.submission_id, &language).ok_or_else(|| {
            CorpusError::InvalidSubmission {
                id: row.submission_id.clone(),
                reason: format!("no source file under {}", dir.display()),
            }
        })?;
        let source_text = fs::read_to_string(&path).map_err(io_err(&path))?;
        if source_text.trim().is_empty() {
            return Err(CorpusError::InvalidSubmission {
                id: row.submission_id,
                reason: "empty source text".into(),
            });
        }
        out.push(Submission {
            submission_id: row.submission_id,
            problem_id: row.problem_id,
            language,
            source_text,
            status: Status::parse(&row.status),
        });
    }
    Ok(out)
}

fn find_source(dir: &Path, submission_id: &str, language: &Language) -> Option<PathBuf> {
    let preferred = dir.join(format!("{submission_id}.{}", language.extension()));
    if preferred.is_file() {
        return Some(preferred);
    }
    let entries = fs::read_dir(dir).ok()?;
    let mut matches: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_stem().and_then(|s| s.to_str()) == Some(submission_id))
        .collect();
    matches.sort();
    matches.into_iter().next()
}

fn content_key(code1: &str, code2: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((code1.len() as u64).to_le_bytes());
    hasher.update(code1.as_bytes());
    hasher.update(code2.as_bytes());
    hasher.finalize().into()
}

/// Submissions grouped by problem, restricted to one language pair.
struct PairIndex<'a> {
    problems: Vec<&'a str>,
    left: Vec<Vec<&'a Submission>>,
    right: Vec<Vec<&'a Submission>>,
}

impl<'a> PairIndex<'a> {
    fn new(valid: &'a [Submission], lang1: &Language, lang2: &Language) -> Self {
        let mut grouped: BTreeMap<&str, (Vec<&Submission>, Vec<&Submission>)> = BTreeMap::new();
        for s in valid {
            if &s.language == lang1 {
                grouped.entry(&s.problem_id).or_default().0.push(s);
            } else if &s.language == lang2 {
                grouped.entry(&s.problem_id).or_default().1.push(s);
            }
        }
        let mut index = PairIndex {
            problems: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
        };
        for (problem, (mut l, mut r)) in grouped {
            l.sort_by(|a, b| a.submission_id.cmp(&b.submission_id));
            r.sort_by(|a, b| a.submission_id.cmp(&b.submission_id));
            index.problems.push(problem);
            index.left.push(l);
            index.right.push(r);
        }
        index
    }

    fn positive_capacity(&self) -> usize {
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| l.len() * r.len())
            .sum()
    }

    fn negative_capacity(&self) -> usize {
        let total_right: usize = self.right.iter().map(Vec::len).sum();
        self.left
            .iter()
            .zip(&self.right)
            .map(|(l, r)| l.len() * (total_right - r.len()))
            .sum()
    }

    fn all_positive(&self) -> Vec<(&'a Submission, &'a Submission)> {
        let mut out = Vec::new();
        for (l, r) in self.left.iter().zip(&self.right) {
            for a in l {
                for b in r {
                    out.push((*a, *b));
                }
            }
        }
        out
    }

    fn all_negative(&self) -> Vec<(&'a Submission, &'a Submission)> {
        let mut out = Vec::new();
        for (i, l) in self.left.iter().enumerate() {
            for (j, r) in self.right.iter().enumerate() {
                if i == j {
                    continue;
                }
                for a in l {
                    for b in r {
                        out.push((*a, *b));
                    }
                }
            }
        }
        out
    }

    fn sample_positive(&self, rng: &mut ChaCha8Rng) -> Option<(&'a Submission, &'a Submission)> {
        let eligible: Vec<usize> = (0..self.problems.len())
            .filter(|&i| !self.left[i].is_empty() && !self.right[i].is_empty())
            .collect();
        let p = *eligible.choose(rng)?;
        Some((*self.left[p].choose(rng)?, *self.right[p].choose(rng)?))
    }

    fn sample_negative(&self, rng: &mut ChaCha8Rng) -> Option<(&'a Submission, &'a Submission)> {
        let lefts: Vec<usize> = (0..self.problems.len()).filter(|&i| !self.left[i].is_empty()).collect();
        let rights: Vec<usize> = (0..self.problems.len()).filter(|&i| !self.right[i].is_empty()).collect();
        for _ in 0..64 {
            let p = *lefts.choose(rng)?;
            let q = *rights.choose(rng)?;
            if p != q {
                return Some((*self.left[p].choose(rng)?, *self.right[q].choose(rng)?));
            }
        }
        None
    }
}

// Enumerate exhaustively below this many admissible candidates; sample above it.
const ENUMERATION_LIMIT: usize = 200_000;

fn fill_quota<'a>(
    what: &str,
    quota: usize,
    capacity: usize,
    enumerate: impl FnOnce() -> Vec<(&'a Submission, &'a Submission)>,
    mut sample: impl FnMut(&mut ChaCha8Rng) -> Option<(&'a Submission, &'a Submission)>,
    seen: &mut HashSet<[u8; 32]>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(&'a Submission, &'a Submission)>> {
    let insufficient = |available| CorpusError::InsufficientCorpus {
        what: what.to_string(),
        needed: quota,
        available,
    };
    let mut chosen = Vec::with_capacity(quota);
    if capacity <= ENUMERATION_LIMIT {
        let mut candidates = enumerate();
        candidates.shuffle(rng);
        for (a, b) in candidates {
            if chosen.len() == quota {
                break;
            }
            if seen.insert(content_key(&a.source_text, &b.source_text)) {
                chosen.push((a, b));
            }
        }
        if chosen.len() < quota {
            return Err(insufficient(chosen.len()));
        }
        return Ok(chosen);
    }
    let max_attempts = quota.saturating_mul(50).max(1_000);
    let mut attempts = 0;
    while chosen.len() < quota {
        attempts += 1;
        if attempts > max_attempts {
            return Err(insufficient(chosen.len()));
        }
        let Some((a, b)) = sample(rng) else {
            return Err(insufficient(chosen.len()));
        };
        if seen.insert(content_key(&a.source_text, &b.source_text)) {
            chosen.push((a, b));
        }
    }
    Ok(chosen)
}

fn make_pair(a: &Submission, b: &Submission, label: u8) -> CodePair {
    let key = content_key(&a.source_text, &b.source_text);
    CodePair {
        pair_id: format!("{}-{}-{}", a.language, b.language, &hex::encode(key)[..16]),
        code1: a.source_text.clone(),
        code2: b.source_text.clone(),
        lang1: a.language.clone(),
        lang2: b.language.clone(),
        problem1: a.problem_id.clone(),
        problem2: b.problem_id.clone(),
        label,
    }
}

/// Builds `n` label-balanced pairs for one language pair.
///
/// Positives pair two solutions of the same problem, negatives pair solutions of
/// two distinct problems. Content-identical `(code1, code2)` pairs are never
/// emitted twice. Output order is a seeded shuffle.
pub fn build_pairs(
    valid: &[Submission],
    lang_pair: (&Language, &Language),
    n: usize,
    seed: u64,
) -> Result<Vec<CodePair>> {
    let mut seen = HashSet::new();
    build_pairs_excluding(valid, lang_pair, n, seed, &mut seen)
}

fn build_pairs_excluding(
    valid: &[Submission],
    (lang1, lang2): (&Language, &Language),
    n: usize,
    seed: u64,
    seen: &mut HashSet<[u8; 32]>,
) -> Result<Vec<CodePair>> {
    if n % 2 != 0 {
        return Err(CorpusError::OddCount(n));
    }
    let index = PairIndex::new(valid, lang1, lang2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let positives = fill_quota(
        "positive pairs",
        half,
        index.positive_capacity(),
        || index.all_positive(),
        |rng| index.sample_positive(rng),
        seen,
        &mut rng,
    )?;
    let negatives = fill_quota(
        "negative pairs",
        half,
        index.negative_capacity(),
        || index.all_negative(),
        |rng| index.sample_negative(rng),
        seen,
        &mut rng,
    )?;
    let mut pairs: Vec<CodePair> = positives
        .into_iter()
        .map(|(a, b)| make_pair(a, b, 1))
        .chain(negatives.into_iter().map(|(a, b)| make_pair(a, b, 0)))
        .collect();
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

fn problems_of(pair: &CodePair) -> [&str; 2] {
    [&pair.problem1, &pair.problem2]
}

fn distinct_problems(pairs: &[CodePair]) -> BTreeSet<String> {
    pairs
        .iter()
        .flat_map(|p| problems_of(p).map(str::to_string))
        .collect()
}

/// Picks `round(fraction * |problems|)` problems for the unseen pool.
fn partition_problems(
    problems: &BTreeSet<String>,
    dd_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ordered: Vec<&String> = problems.iter().collect();
    ordered.shuffle(rng);
    let n_dd = ((problems.len() as f64) * dd_fraction.clamp(0.0, 1.0)).round() as usize;
    let dd: BTreeSet<String> = ordered[..n_dd].iter().map(|s| s.to_string()).collect();
    let train: BTreeSet<String> = ordered[n_dd..].iter().map(|s| s.to_string()).collect();
    (train, dd)
}

/// Trims a pair list to an equal number of positives and negatives.
fn balance(mut pairs: Vec<&CodePair>) -> Vec<&CodePair> {
    let pos = pairs.iter().filter(|p| p.label == 1).count();
    let neg = pairs.len() - pos;
    let keep = pos.min(neg);
    let (mut kept_pos, mut kept_neg) = (0, 0);
    pairs.retain(|p| {
        let counter = if p.label == 1 { &mut kept_pos } else { &mut kept_neg };
        *counter += 1;
        *counter <= keep
    });
    pairs
}

/// Splits an existing pair set into train, same-distribution and
/// different-distribution test sets.
///
/// A `dd_fraction` share of the problems is isolated as the unseen pool; pairs
/// straddling both pools are discarded. `sd_fraction` of the balanced in-pool
/// pairs are held out as the same-distribution test set.
pub fn split_sd_dd(
    pairs: &[CodePair],
    dd_fraction: f64,
    sd_fraction: f64,
    seed: u64,
) -> Result<SplitManifest> {
    let problems = distinct_problems(pairs);
    if problems.len() < 4 {
        return Err(CorpusError::InsufficientCorpus {
            what: "distinct problems for splitting".into(),
            needed: 4,
            available: problems.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_pool, dd_pool) = partition_problems(&problems, dd_fraction, &mut rng);

    let in_pool = |pool: &BTreeSet<String>| -> Vec<&CodePair> {
        pairs
            .iter()
            .filter(|p| problems_of(p).iter().all(|q| pool.contains(*q)))
            .collect()
    };
    let mut train_side = balance(in_pool(&train_pool));
    let dd_side = balance(in_pool(&dd_pool));
    if !dd_pool.is_empty() && dd_side.is_empty() {
        return Err(CorpusError::InsufficientCorpus {
            what: "balanced different-distribution pairs".into(),
            needed: 2,
            available: 0,
        });
    }
    if train_side.is_empty() {
        return Err(CorpusError::InsufficientCorpus {
            what: "balanced training pairs".into(),
            needed: 2,
            available: 0,
        });
    }

    train_side.shuffle(&mut rng);
    let per_class = train_side.len() / 2;
    let sd_per_class = ((per_class as f64) * sd_fraction.clamp(0.0, 1.0)).round() as usize;
    let (mut sd_pos, mut sd_neg) = (0, 0);
    let mut sd = Vec::new();
    let mut train = Vec::new();
    for p in train_side {
        let counter = if p.label == 1 { &mut sd_pos } else { &mut sd_neg };
        if *counter < sd_per_class {
            *counter += 1;
            sd.push(p);
        } else {
            train.push(p);
        }
    }

    let ids = |v: &[&CodePair]| v.iter().map(|p| p.pair_id.clone()).collect::<Vec<_>>();
    let sd_problems = sd.iter().flat_map(|p| problems_of(p).map(str::to_string)).collect();
    Ok(SplitManifest {
        train_problems: train_pool,
        sd_test_problems: sd_problems,
        dd_test_problems: dd_pool,
        train_pair_ids: ids(&train),
        sd_test_pair_ids: ids(&sd),
        dd_test_pair_ids: ids(&dd_side),
    })
}

/// Requested dataset sizes for one language pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub n_train: usize,
    pub n_sd_test: usize,
    pub n_dd_test: usize,
}

/// Materialized datasets for one language pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedDatasets {
    pub train: Vec<CodePair>,
    pub sd_test: Vec<CodePair>,
    pub dd_test: Vec<CodePair>,
    pub manifest: SplitManifest,
}

/// Partitions problems first, then pairs inside each pool so that every split
/// hits its requested size exactly.
pub fn seed_datasets(
    valid: &[Submission],
    lang_pair: (&Language, &Language),
    plan: SeedPlan,
    dd_fraction: f64,
    seed: u64,
) -> Result<SeedDatasets> {
    let problems: BTreeSet<String> = valid
        .iter()
        .filter(|s| &s.language == lang_pair.0 || &s.language == lang_pair.1)
        .map(|s| s.problem_id.clone())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_pool, dd_pool) = partition_problems(&problems, dd_fraction, &mut rng);
    let in_pool = |pool: &BTreeSet<String>| -> Vec<Submission> {
        valid
            .iter()
            .filter(|s| pool.contains(&s.problem_id))
            .cloned()
            .collect()
    };

    let mut seen = HashSet::new();
    let pool_seed: u64 = rng.gen();
    let mut seen_pool = build_pairs_excluding(
        &in_pool(&train_pool),
        lang_pair,
        plan.n_train + plan.n_sd_test,
        pool_seed,
        &mut seen,
    )?;
    let (mut sd_pos, mut sd_neg) = (0, 0);
    let half_sd = plan.n_sd_test / 2;
    let mut train = Vec::new();
    let mut sd_test = Vec::new();
    for p in seen_pool.drain(..) {
        let counter = if p.label == 1 { &mut sd_pos } else { &mut sd_neg };
        if *counter < half_sd {
            *counter += 1;
            sd_test.push(p);
        } else {
            train.push(p);
        }
    }
    let dd_test = if plan.n_dd_test > 0 {
        let dd_seed: u64 = rng.gen();
        build_pairs_excluding(&in_pool(&dd_pool), lang_pair, plan.n_dd_test, dd_seed, &mut seen)?
    } else {
        Vec::new()
    };

    let ids = |v: &[CodePair]| v.iter().map(|p| p.pair_id.clone()).collect::<Vec<_>>();
    let manifest = SplitManifest {
        train_problems: distinct_problems(&train),
        sd_test_problems: distinct_problems(&sd_test),
        dd_test_problems: distinct_problems(&dd_test),
        train_pair_ids: ids(&train),
        sd_test_pair_ids: ids(&sd_test),
        dd_test_pair_ids: ids(&dd_test),
    };
    Ok(SeedDatasets {
        train,
        sd_test,
        dd_test,
        manifest,
    })
}

/// Writes one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(CorpusError::from))
        .collect()
}
