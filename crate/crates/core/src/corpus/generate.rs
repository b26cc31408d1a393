//! Synthetic clinical-style corpus with planted sensitive terms.
//!
//! Each document is filler prose plus zero or more "records": sentences that
//! mention a direct identifier (a two-word name), an indirect identifier and
//! a confidential term. Occurrence counts per category follow a power law
//! over term rank, and records align ranks across categories, so frequent
//! names keep co-occurring with the same indirect and confidential terms and
//! can be memorized from context.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::document::{write_jsonl, Annotation, Category, RawDocument};
use crate::error::{Result, SaniError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_docs: usize,
    pub words_per_doc: usize,
    pub n_direct: usize,
    pub n_indirect: usize,
    pub n_conf: usize,
    /// Power-law exponent: term of rank `r` (1-based) among `n` is planted
    /// `round((n / r)^law)` times, at least once.
    pub repetition_law: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_docs: 1600,
            words_per_doc: 62,
            n_direct: 100,
            n_indirect: 100,
            n_conf: 60,
            repetition_law: 1.0,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SaniError::json("generator config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SaniError::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("n_docs", self.n_docs),
            ("words_per_doc", self.words_per_doc),
            ("n_direct", self.n_direct),
            ("n_indirect", self.n_indirect),
            ("n_conf", self.n_conf),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(SaniError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.repetition_law.is_finite() && self.repetition_law > 0.0) {
            return Err(SaniError::Config(format!(
                "repetition_law {} must be a positive exponent",
                self.repetition_law
            )));
        }
        Ok(())
    }
}

/// Occurrence count of each rank under the power law.
pub fn planted_counts(n: usize, law: f64) -> Vec<usize> {
    (1..=n)
        .map(|r| ((n as f64 / r as f64).powf(law).round() as usize).max(1))
        .collect()
}

/// Generator output: documents plus the three blacklists (one n-gram each).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub docs: Vec<RawDocument>,
    pub direct: Vec<Vec<String>>,
    pub indirect: Vec<Vec<String>>,
    pub conf: Vec<Vec<String>>,
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const DIRECT_FILE: &str = "blacklist_direct.txt";
pub const INDIRECT_FILE: &str = "blacklist_indirect.txt";
pub const CONF_FILE: &str = "blacklist_conf.txt";

fn blacklist_text(kind: &str, terms: &[Vec<String>]) -> String {
    let mut s = format!("# {kind} terms\n");
    for t in terms {
        s.push_str(&t.join(" "));
        s.push('\n');
    }
    s
}

impl GeneratedCorpus {
    pub fn blacklist_files(&self) -> [(&'static str, String); 3] {
        [
            (DIRECT_FILE, blacklist_text("direct identifier", &self.direct)),
            (INDIRECT_FILE, blacklist_text("indirect identifier", &self.indirect)),
            (CONF_FILE, blacklist_text("confidential", &self.conf)),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SaniError::io(dir, e))?;
        write_jsonl(&dir.join(CORPUS_FILE), &self.docs)?;
        for (name, text) in self.blacklist_files() {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| SaniError::io(&p, e))?;
        }
        Ok(())
    }
}

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "and", "was", "with", "for", "from", "of", "it", "to", "in", "on", "patient",
    "resident", "treated", "admitted", "doctor", "noted", "diagnosed", "after", "then", "seen",
    "by", "staff", ".", ",",
];

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

struct WordFactory {
    used: HashSet<String>,
}

impl WordFactory {
    fn new() -> Self {
        Self {
            used: FUNCTION_WORDS.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
            }
            if rng.random_bool(0.5) {
                w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn pool(&mut self, rng: &mut ChaCha8Rng, n: usize, syllables: usize) -> Vec<String> {
        (0..n).map(|_| self.fresh(rng, syllables)).collect()
    }
}

struct Filler {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjectives: Vec<String>,
}

impl Filler {
    fn sentence(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let n = |rng: &mut ChaCha8Rng| self.nouns.choose(rng).unwrap().clone();
        let v = |rng: &mut ChaCha8Rng| self.verbs.choose(rng).unwrap().clone();
        let a = |rng: &mut ChaCha8Rng| self.adjectives.choose(rng).unwrap().clone();
        let s = |x: &str| x.to_string();
        match rng.random_range(0..5) {
            0 => vec![s("the"), n(rng), v(rng), s("the"), n(rng), s(".")],
            1 => vec![s("the"), a(rng), n(rng), s("was"), v(rng), s(".")],
            2 => vec![
                s("a"),
                n(rng),
                s("and"),
                s("a"),
                n(rng),
                v(rng),
                s("with"),
                s("the"),
                a(rng),
                n(rng),
                s("."),
            ],
            3 => vec![s("the"), s("doctor"), s("noted"), s("the"), a(rng), n(rng), s(".")],
            _ => vec![s("it"), s("was"), a(rng), s("after"), s("the"), n(rng), s(".")],
        }
    }
}

#[derive(Default, Clone)]
struct Record {
    direct: Option<usize>,
    indirect: Option<usize>,
    conf: Option<usize>,
}

/// Words of a record sentence and the annotations relative to its start.
fn render_record(
    rec: &Record,
    g: &GeneratedCorpus,
) -> (Vec<String>, Vec<Annotation>) {
    let mut words: Vec<String> = Vec::new();
    let mut ann = Vec::new();
    let mut put = |words: &mut Vec<String>, term: &[String], cat: Category| {
        ann.push(Annotation {
            start: words.len(),
            len: term.len(),
            cat,
        });
        words.extend_from_slice(term);
    };
    let s = |x: &str| x.to_string();
    match (rec.direct, rec.indirect) {
        (Some(d), Some(i)) => {
            words.push(s("patient"));
            put(&mut words, &g.direct[d], Category::Direct);
            words.push(s("from"));
            put(&mut words, &g.indirect[i], Category::Indirect);
        }
        (Some(d), None) => {
            words.push(s("patient"));
            put(&mut words, &g.direct[d], Category::Direct);
        }
        (None, Some(i)) => {
            words.extend([s("a"), s("resident"), s("of")]);
            put(&mut words, &g.indirect[i], Category::Indirect);
        }
        (None, None) => {
            words.extend([s("the"), s("doctor")]);
        }
    }
    match rec.conf {
        Some(c) => {
            words.extend([s("was"), s("treated"), s("for")]);
            put(&mut words, &g.conf[c], Category::Conf);
        }
        None => words.extend([s("was"), s("admitted")]),
    }
    words.push(s("."));
    (words, ann)
}

/// Longest record sentence: `patient F L from I was treated for C .`
const MAX_RECORD_WORDS: usize = 10;

pub fn generate_synthetic_corpus(cfg: &GenConfig) -> Result<GeneratedCorpus> {
    cfg.validate()?;
    let law = cfg.repetition_law;
    let counts = [
        planted_counts(cfg.n_direct, law),
        planted_counts(cfg.n_indirect, law),
        planted_counts(cfg.n_conf, law),
    ];
    let totals: Vec<usize> = counts.iter().map(|c| c.iter().sum()).collect();
    let n_records = *totals.iter().max().expect("three categories");
    let per_doc = n_records.div_ceil(cfg.n_docs);
    if per_doc * MAX_RECORD_WORDS > cfg.words_per_doc {
        return Err(SaniError::Config(format!(
            "{n_records} planted records need up to {} words per document, only {} available",
            per_doc * MAX_RECORD_WORDS,
            cfg.words_per_doc
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut factory = WordFactory::new();
    let first = factory.pool(&mut rng, cfg.n_direct, 2);
    let last = factory.pool(&mut rng, cfg.n_direct, 3);
    let indirect = factory.pool(&mut rng, cfg.n_indirect, 3);
    let conf = factory.pool(&mut rng, cfg.n_conf, 4);
    let filler = Filler {
        nouns: factory.pool(&mut rng, 80, 2),
        verbs: factory.pool(&mut rng, 40, 2),
        adjectives: factory.pool(&mut rng, 40, 3),
    };
    let mut out = GeneratedCorpus {
        docs: Vec::with_capacity(cfg.n_docs),
        direct: first
            .into_iter()
            .zip(last)
            .map(|(f, l)| vec![f, l])
            .collect(),
        indirect: indirect.into_iter().map(|w| vec![w]).collect(),
        conf: conf.into_iter().map(|w| vec![w]).collect(),
    };

    // Occurrence j (in rank order) of a category goes to record
    // floor(j * n_records / total), aligning ranks across categories.
    let mut records = vec![Record::default(); n_records];
    for (cat, cat_counts) in counts.iter().enumerate() {
        let total = totals[cat];
        let mut j = 0;
        for (term, &c) in cat_counts.iter().enumerate() {
            for _ in 0..c {
                let r = &mut records[j * n_records / total];
                match cat {
                    0 => r.direct = Some(term),
                    1 => r.indirect = Some(term),
                    _ => r.conf = Some(term),
                }
                j += 1;
            }
        }
    }
    records.shuffle(&mut rng);

    let mut doc_records: Vec<Vec<Record>> = vec![Vec::new(); cfg.n_docs];
    for (k, rec) in records.into_iter().enumerate() {
        doc_records[k % cfg.n_docs].push(rec);
    }

    for (d, recs) in doc_records.into_iter().enumerate() {
        let rendered: Vec<(Vec<String>, Vec<Annotation>)> =
            recs.iter().map(|r| render_record(r, &out)).collect();
        let record_words: usize = rendered.iter().map(|(w, _)| w.len()).sum();
        let free = cfg.words_per_doc - record_words;

        let mut fillers: Vec<Vec<String>> = Vec::new();
        let mut filled = 0;
        while filled < free {
            let mut s = filler.sentence(&mut rng);
            s.truncate(free - filled);
            filled += s.len();
            fillers.push(s);
        }
        // Interleave record sentences at random slots among the fillers.
        let mut sentences: Vec<(Vec<String>, Vec<Annotation>)> =
            fillers.into_iter().map(|s| (s, Vec::new())).collect();
        for r in rendered {
            let at = rng.random_range(0..=sentences.len());
            sentences.insert(at, r);
        }

        let mut words = Vec::with_capacity(cfg.words_per_doc);
        let mut annotations = Vec::new();
        for (s, ann) in sentences {
            let base = words.len();
            annotations.extend(ann.into_iter().map(|a| Annotation {
                start: a.start + base,
                ..a
            }));
            words.extend(s);
        }
        debug_assert_eq!(words.len(), cfg.words_per_doc);
        out.docs.push(RawDocument {
            id: format!("doc{d:05}"),
            words,
            annotations,
        });
    }
    Ok(out)
}
