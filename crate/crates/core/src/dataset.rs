//! Dataset and task-config loading, corpus statistics, and the synthetic
//! note generator used for desk-scale experiments.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Scorer;
use crate::text::{split_at_first_flagged, Note};
use crate::verbalizer::TaskConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(DatasetFormat::Jsonl),
            "csv" => Some(DatasetFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "csv" => Ok(DatasetFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown dataset format `{other}`"
            ))),
        }
    }
}

fn check_note(note: &Note, line: usize, seen: &mut HashSet<String>) -> Result<()> {
    if note.id.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty `id`".into(),
        });
    }
    if !seen.insert(note.id.clone()) {
        return Err(Error::DuplicateId(note.id.clone()));
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Note>> {
    let mut notes = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let note: Note = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        check_note(&note, line_no, &mut seen)?;
        notes.push(note);
    }
    Ok(notes)
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Note>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        text: String,
        #[serde(default)]
        label: Option<String>,
    }

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut notes = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.deserialize::<Row>() {
        let row = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = notes.len() + 2;
        let note = Note {
            id: row.id,
            text: row.text,
            label: row.label.filter(|l| !l.is_empty()),
        };
        check_note(&note, line, &mut seen)?;
        notes.push(note);
    }
    Ok(notes)
}

/// Load notes from a JSONL or CSV file with `id`, `text` and optional `label`.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<Note>> {
    let file = fs::File::open(path)?;
    match format {
        DatasetFormat::Jsonl => read_jsonl(BufReader::new(file)),
        DatasetFormat::Csv => read_csv(file),
    }
}

pub fn write_jsonl<W: Write>(notes: &[Note], mut writer: W) -> Result<()> {
    for note in notes {
        serde_json::to_writer(&mut writer, note).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub const BUILTIN_TASKS: [&str; 5] = ["dys", "oa", "dep", "pvd", "smk"];

/// One of the shipped task configurations.
pub fn builtin_task(name: &str, as_printed: bool) -> Result<TaskConfig> {
    let source = match name.to_ascii_lowercase().as_str() {
        "dys" => include_str!("../tasks/dys.toml"),
        "oa" => include_str!("../tasks/oa.toml"),
        "dep" => include_str!("../tasks/dep.toml"),
        "pvd" => include_str!("../tasks/pvd.toml"),
        "smk" => include_str!("../tasks/smk.toml"),
        other => return Err(Error::InvalidConfig(format!("no built-in task `{other}`"))),
    };
    TaskConfig::from_toml_str(source, as_printed)
}

/// Load a task config from a `.toml` or `.json` file, or a built-in name.
pub fn load_task(spec: &str, as_printed: bool) -> Result<TaskConfig> {
    if BUILTIN_TASKS.contains(&spec.to_ascii_lowercase().as_str()) && !Path::new(spec).exists() {
        return builtin_task(spec, as_printed);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "`{spec}` is neither a built-in task ({}) nor a config file",
            BUILTIN_TASKS.join(", ")
        )));
    }
    let body = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TaskConfig::from_json_str(&body, as_printed),
        _ => TaskConfig::from_toml_str(&body, as_printed),
    }
}

/// Token-length statistics of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub notes: usize,
    pub limit: usize,
    pub mean_tokens: f64,
    /// Population standard deviation.
    pub sd_tokens: f64,
    pub proportion_over_limit: f64,
    /// Mean number of non-overlapping `limit`-sized chunks per note.
    pub mean_chunk_runs: f64,
    /// Share of notes with at least one keyword sentence.
    pub keyword_hit_rate: f64,
}

/// Inference runs needed to cover `tokens` in non-overlapping chunks.
pub fn chunk_runs(tokens: usize, limit: usize) -> usize {
    tokens.div_ceil(limit.max(1)).max(1)
}

pub fn compute_stats<S: Scorer + ?Sized>(
    dataset: &[Note],
    task: &TaskConfig,
    scorer: &S,
    limit: usize,
) -> Result<DatasetStats> {
    if limit == 0 {
        return Err(Error::InvalidConfig("chunk limit must be positive".into()));
    }
    // Integer accumulators keep the result independent of note order.
    let (mut sum, mut sum_sq, mut over, mut runs, mut hits) =
        (0u128, 0u128, 0usize, 0usize, 0usize);
    for note in dataset {
        let n = scorer.tokenize(&note.text)?.len();
        sum += n as u128;
        sum_sq += (n as u128) * (n as u128);
        over += usize::from(n > limit);
        runs += chunk_runs(n, limit);
        hits += usize::from(split_at_first_flagged(&note.text, &task.keywords).is_some());
    }
    let count = dataset.len();
    if count == 0 {
        return Ok(DatasetStats {
            notes: 0,
            limit,
            mean_tokens: 0.0,
            sd_tokens: 0.0,
            proportion_over_limit: 0.0,
            mean_chunk_runs: 0.0,
            keyword_hit_rate: 0.0,
        });
    }
    let c = count as f64;
    let n = count as u128;
    let variance = (n * sum_sq - sum * sum) as f64 / (c * c);
    Ok(DatasetStats {
        notes: count,
        limit,
        mean_tokens: sum as f64 / c,
        sd_tokens: variance.sqrt(),
        proportion_over_limit: over as f64 / c,
        mean_chunk_runs: runs as f64 / c,
        keyword_hit_rate: hits as f64 / c,
    })
}

/// Training-split class counts of the dysmenorrhea corpus (Yes, No, Unknown).
pub const DYS_TRAIN_COUNTS: [usize; 3] = [34, 52, 64];

/// What kind of keyword evidence notes of a class carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evidence {
    /// "Patient reports <keyword>."
    Affirmed,
    /// "Patient denies <keyword>."
    Negated,
    /// No keyword anywhere.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub name: String,
    pub evidence: Evidence,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<SyntheticClass>,
    pub keywords: Vec<String>,
    /// Note length in whitespace tokens.
    pub note_tokens: usize,
    /// Token offset at which the keyword sentence starts.
    pub depth: usize,
    /// Probability that a keyword-bearing note also mentions the keyword with
    /// the opposite polarity in a family-history sentence somewhere after the
    /// salient sentence.
    #[serde(default)]
    pub distractor_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Map task classes onto evidence kinds: the affirmative class gets
    /// affirmed mentions, the negative class negated ones, the rest none.
    pub fn for_task(
        task: &TaskConfig,
        counts: &[usize],
        note_tokens: usize,
        depth: usize,
        seed: u64,
    ) -> Result<Self> {
        if counts.len() != task.num_classes() {
            return Err(Error::InvalidSpec(format!(
                "{} class counts given for {} classes",
                counts.len(),
                task.num_classes()
            )));
        }
        let classes = task
            .classes
            .iter()
            .zip(counts)
            .enumerate()
            .map(|(i, (name, &count))| SyntheticClass {
                name: name.clone(),
                evidence: if i == task.affirmative {
                    Evidence::Affirmed
                } else if i == task.negative && Some(i) != task.abstain {
                    Evidence::Negated
                } else {
                    Evidence::Absent
                },
                count,
            })
            .collect();
        Ok(Self {
            classes,
            keywords: task.keywords.patterns().to_vec(),
            note_tokens,
            depth,
            distractor_rate: 0.0,
            seed,
        })
    }

    pub fn with_distractors(mut self, rate: f64) -> Self {
        self.distractor_rate = rate;
        self
    }
}

/// Neutral vocabulary: no negation words and nothing that prefix-matches a
/// shipped task keyword.
pub const FILLER_WORDS: [&str; 48] = [
    "patient",
    "was",
    "seen",
    "in",
    "clinic",
    "today",
    "for",
    "routine",
    "follow",
    "up",
    "vital",
    "signs",
    "stable",
    "blood",
    "pressure",
    "normal",
    "weight",
    "unchanged",
    "medications",
    "reviewed",
    "continue",
    "current",
    "plan",
    "labs",
    "within",
    "limits",
    "exam",
    "unremarkable",
    "discussed",
    "diet",
    "exercise",
    "return",
    "visit",
    "months",
    "allergies",
    "reconciled",
    "heart",
    "rate",
    "regular",
    "lungs",
    "clear",
    "abdomen",
    "soft",
    "appetite",
    "good",
    "sleep",
    "adequate",
    "counseled",
];

fn filler_sentences(rng: &mut ChaCha8Rng, mut tokens: usize) -> Vec<String> {
    let mut out = Vec::new();
    while tokens > 0 {
        let len = rng.random_range(5..=12).min(tokens);
        let words: Vec<&str> = (0..len)
            .map(|_| *FILLER_WORDS.choose(rng).expect("non-empty"))
            .collect();
        out.push(sentence(&words.join(" ")));
        tokens -= len;
    }
    out
}

fn sentence(body: &str) -> String {
    let mut chars = body.chars();
    match chars.next() {
        Some(c) => format!("{}{}.", c.to_uppercase(), chars.as_str()),
        None => String::new(),
    }
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn join_sentences(sentences: &[String]) -> String {
    let mut text = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            text.push(if i % 6 == 0 { '\n' } else { ' ' });
        }
        text.push_str(s);
    }
    text
}

/// Generate labeled notes of neutral filler with one keyword sentence at a
/// fixed token depth. Note order is shuffled; ids are `syn-00000`, ...
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<Note>> {
    if spec.keywords.iter().all(|k| k.trim().is_empty()) {
        return Err(Error::InvalidSpec("no keywords".into()));
    }
    if spec.depth >= spec.note_tokens {
        return Err(Error::InvalidSpec(format!(
            "depth {} must be below the note length {}",
            spec.depth, spec.note_tokens
        )));
    }
    if !(0.0..=1.0).contains(&spec.distractor_rate) {
        return Err(Error::InvalidSpec(
            "distractor_rate must lie in [0, 1]".into(),
        ));
    }
    let keywords: Vec<&str> = spec
        .keywords
        .iter()
        .map(|k| k.trim())
        .filter(|k| !k.is_empty())
        .collect();
    let longest = keywords.iter().map(|k| word_count(k)).max().unwrap_or(1);
    if spec
        .classes
        .iter()
        .any(|c| c.evidence != Evidence::Absent && c.count > 0)
        && spec.depth + 2 + longest > spec.note_tokens
    {
        return Err(Error::InvalidSpec(format!(
            "keyword sentence at depth {} does not fit in {} tokens",
            spec.depth, spec.note_tokens
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut labeled: Vec<(String, String)> = Vec::new();
    for class in &spec.classes {
        for _ in 0..class.count {
            let text = match class.evidence {
                Evidence::Absent => join_sentences(&filler_sentences(&mut rng, spec.note_tokens)),
                evidence => {
                    let keyword = *keywords.choose(&mut rng).expect("non-empty");
                    let (verb, opposite) = match evidence {
                        Evidence::Affirmed => ("reports", "denies"),
                        _ => ("denies", "reports"),
                    };
                    let salient = sentence(&format!("patient {verb} {keyword}"));
                    let mut before = filler_sentences(&mut rng, spec.depth);
                    let mut remaining = spec.note_tokens - spec.depth - word_count(&salient);

                    let distractor = sentence(&format!("family member {opposite} {keyword}"));
                    let with_distractor = rng.random_bool(spec.distractor_rate)
                        && word_count(&distractor) <= remaining;
                    if with_distractor {
                        remaining -= word_count(&distractor);
                    }
                    let mut after = filler_sentences(&mut rng, remaining);
                    if with_distractor {
                        let at = rng.random_range(0..=after.len());
                        after.insert(at, distractor);
                    }
                    before.push(salient);
                    before.extend(after);
                    join_sentences(&before)
                }
            };
            labeled.push((class.name.clone(), text));
        }
    }
    labeled.shuffle(&mut rng);
    Ok(labeled
        .into_iter()
        .enumerate()
        .map(|(i, (label, text))| Note::labeled(format!("syn-{i:05}"), text, label))
        .collect())
}
