//! UniMorph-style TSV ingestion, vocabularies, copy triples, up-sampling.
//!
//! File format: UTF-8, three tab-separated columns `lemma<TAB>form<TAB>tags`
//! with tags joined by `;`. Prediction inputs may carry `_` (or an empty
//! field) in the form column. Characters are Unicode scalar values; spaces
//! are ordinary characters.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tag used for lemma-copy triples.
pub const COPY_TAG: &str = "COPY";

/// One inflection triple plus provenance flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub lemma: Vec<char>,
    pub tags: Vec<String>,
    /// Absent for unlabeled prediction input.
    pub form: Option<Vec<char>>,
    pub language: String,
    pub is_hallucinated: bool,
    pub is_copy_task: bool,
}

impl Example {
    pub fn new(lemma: &str, tags: &[&str], form: &str, language: &str) -> Example {
        Example {
            lemma: lemma.chars().collect(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            form: Some(form.chars().collect()),
            language: language.to_string(),
            is_hallucinated: false,
            is_copy_task: false,
        }
    }

    pub fn lemma_string(&self) -> String {
        self.lemma.iter().collect()
    }

    pub fn form_string(&self) -> Option<String> {
        self.form.as_ref().map(|f| f.iter().collect())
    }
}

/// Reserved symbol ids, stable across all vocabularies.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// Number of reserved character ids.
pub const RESERVED_CHARS: usize = 4;

/// Id of the COPY tag (always first in the tag table).
pub const COPY_TAG_ID: usize = 0;

/// Deterministic id tables: reserved symbols first, then characters, tags and
/// languages in first-occurrence order over the supplied datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    chars: Vec<char>,
    char_to_id: HashMap<char, usize>,
    tags: Vec<String>,
    tag_to_id: HashMap<String, usize>,
    langs: Vec<String>,
    lang_to_id: HashMap<String, usize>,
    /// Per-language character sets (sorted), for hallucination sampling.
    alphabets: HashMap<String, Vec<char>>,
}

impl Vocabulary {
    pub fn build(datasets: &[&[Example]]) -> Result<Vocabulary> {
        if datasets.iter().all(|d| d.is_empty()) {
            return Err(Error::usage("build_vocab: no examples"));
        }
        let mut v = Vocabulary {
            chars: Vec::new(),
            char_to_id: HashMap::new(),
            tags: vec![COPY_TAG.to_string()],
            tag_to_id: HashMap::from([(COPY_TAG.to_string(), COPY_TAG_ID)]),
            langs: Vec::new(),
            lang_to_id: HashMap::new(),
            alphabets: HashMap::new(),
        };
        for ds in datasets {
            for e in ds.iter() {
                v.observe(e);
            }
        }
        for alpha in v.alphabets.values_mut() {
            alpha.sort_unstable();
            alpha.dedup();
        }
        Ok(v)
    }

    fn observe(&mut self, e: &Example) {
        if !self.lang_to_id.contains_key(&e.language) {
            self.lang_to_id.insert(e.language.clone(), self.langs.len());
            self.langs.push(e.language.clone());
        }
        let alpha = self.alphabets.entry(e.language.clone()).or_default();
        for &c in e.lemma.iter().chain(e.form.iter().flatten()) {
            alpha.push(c);
            if !self.char_to_id.contains_key(&c) {
                self.char_to_id.insert(c, RESERVED_CHARS + self.chars.len());
                self.chars.push(c);
            }
        }
        for t in &e.tags {
            if !self.tag_to_id.contains_key(t) {
                self.tag_to_id.insert(t.clone(), self.tags.len());
                self.tags.push(t.clone());
            }
        }
    }

    /// Total character-symbol count including the four reserved ids.
    pub fn char_count(&self) -> usize {
        RESERVED_CHARS + self.chars.len()
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }

    pub fn lang_count(&self) -> usize {
        self.langs.len()
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_to_id.get(&c).copied().unwrap_or(UNK)
    }

    /// The character behind an id; reserved ids have none.
    pub fn char_of(&self, id: usize) -> Option<char> {
        if id < RESERVED_CHARS {
            None
        } else {
            self.chars.get(id - RESERVED_CHARS).copied()
        }
    }

    pub fn tag_id(&self, tag: &str) -> Result<usize> {
        self.tag_to_id
            .get(tag)
            .copied()
            .ok_or_else(|| Error::Vocab(format!("unknown tag {tag:?}")))
    }

    pub fn lang_id(&self, lang: &str) -> Result<usize> {
        self.lang_to_id
            .get(lang)
            .copied()
            .ok_or_else(|| Error::Vocab(format!("unknown language {lang:?}")))
    }

    pub fn encode_chars(&self, chars: &[char]) -> Vec<usize> {
        chars.iter().map(|&c| self.char_id(c)).collect()
    }

    /// Decodes to a string; `unk` substitutes reserved/unknown ids.
    pub fn decode_chars(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| self.char_of(id).unwrap_or('\u{FFFD}'))
            .collect()
    }

    pub fn encode_tags(&self, tags: &[String]) -> Result<Vec<usize>> {
        tags.iter().map(|t| self.tag_id(t)).collect()
    }

    /// Sorted per-language alphabet, reserved symbols excluded.
    pub fn alphabet(&self, language: &str) -> Result<&[char]> {
        self.alphabets
            .get(language)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Vocab(format!("no alphabet for language {language:?}")))
    }

    /// Tables in id order, for serialization.
    pub fn tables(&self) -> (&[char], &[String], &[String]) {
        (&self.chars, &self.tags, &self.langs)
    }

    /// Rebuild from serialized tables (chars exclude reserved ids; tags
    /// exclude COPY).
    pub fn from_tables(
        chars: Vec<char>,
        tags: Vec<String>,
        langs: Vec<String>,
        alphabets: Vec<(String, Vec<char>)>,
    ) -> Vocabulary {
        let mut char_to_id = HashMap::new();
        for (i, &c) in chars.iter().enumerate() {
            char_to_id.insert(c, RESERVED_CHARS + i);
        }
        let mut tag_to_id = HashMap::new();
        for (i, t) in tags.iter().enumerate() {
            tag_to_id.insert(t.clone(), i);
        }
        let mut lang_to_id = HashMap::new();
        for (i, l) in langs.iter().enumerate() {
            lang_to_id.insert(l.clone(), i);
        }
        Vocabulary {
            chars,
            char_to_id,
            tags,
            tag_to_id,
            langs,
            lang_to_id,
            alphabets: alphabets.into_iter().collect(),
        }
    }
}

/// Parse a three-column TSV file. `language_id` stamps every example.
pub fn parse_tsv(path: &Path, language_id: &str) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))?;
    parse_tsv_str(&text, language_id, &path.display().to_string())
}

pub fn parse_tsv_str(text: &str, language_id: &str, source: &str) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let lineno = ln + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                source,
                lineno,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let (lemma, form, tag_field) = (fields[0], fields[1], fields[2]);
        if lemma.is_empty() {
            return Err(Error::parse(source, lineno, "empty lemma"));
        }
        if tag_field.is_empty() {
            return Err(Error::parse(source, lineno, "empty tag list"));
        }
        let tags: Vec<String> = tag_field.split(';').map(str::to_string).collect();
        if tags.iter().any(String::is_empty) {
            return Err(Error::parse(source, lineno, "empty tag in tag list"));
        }
        let form = if form.is_empty() || form == "_" {
            None
        } else {
            Some(form.chars().collect())
        };
        out.push(Example {
            lemma: lemma.chars().collect(),
            tags,
            form,
            language: language_id.to_string(),
            is_hallucinated: false,
            is_copy_task: false,
        });
    }
    Ok(out)
}

/// Serialize examples back to the TSV format accepted by [`parse_tsv`].
pub fn to_tsv(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        let form = e.form_string().unwrap_or_else(|| "_".to_string());
        let _ = writeln!(out, "{}\t{}\t{}", e.lemma_string(), form, e.tags.join(";"));
    }
    out
}

/// The two copy triples for a training example: `[X, [COPY], X]` and
/// `[Y, T, Y]`. The original is untouched.
pub fn make_copy_triples(e: &Example) -> Result<(Example, Example)> {
    let form = e
        .form
        .as_ref()
        .ok_or_else(|| Error::usage("make_copy_triples: example has no form"))?;
    let lemma_copy = Example {
        lemma: e.lemma.clone(),
        tags: vec![COPY_TAG.to_string()],
        form: Some(e.lemma.clone()),
        language: e.language.clone(),
        is_hallucinated: e.is_hallucinated,
        is_copy_task: true,
    };
    let form_copy = Example {
        lemma: form.clone(),
        tags: e.tags.clone(),
        form: Some(form.clone()),
        language: e.language.clone(),
        is_hallucinated: e.is_hallucinated,
        is_copy_task: true,
    };
    Ok((lemma_copy, form_copy))
}

/// Repeat `low` to exactly `target_size` items: whole copies first, the
/// remainder drawn uniformly without replacement.
pub fn upsample(low: &[Example], target_size: usize, rng: &mut Rng) -> Result<Vec<Example>> {
    if low.is_empty() {
        return Err(Error::usage("upsample: empty input"));
    }
    if target_size < low.len() {
        return Err(Error::usage(format!(
            "upsample: target {target_size} below input size {} (down-sampling unsupported)",
            low.len()
        )));
    }
    let cycles = target_size / low.len();
    let rest = target_size % low.len();
    let mut out = Vec::with_capacity(target_size);
    for _ in 0..cycles {
        out.extend(low.iter().cloned());
    }
    let mut idx: Vec<usize> = (0..low.len()).collect();
    rng.shuffle(&mut idx);
    for &i in idx.iter().take(rest) {
        out.push(low[i].clone());
    }
    Ok(out)
}
