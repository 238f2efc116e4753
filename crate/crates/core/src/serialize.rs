//! Model container format and attention dumps.
//!
//! Container layout, all little-endian:
//!
//! ```text
//! magic  b"MINF"
//! u32    format version (1)
//! u64    JSON header length in bytes
//! []u8   JSON header (dimensions, vocabulary tables, config hash, blocks)
//! []f64  raw parameter values, block after block, in header order
//! ```
//!
//! The header's `blocks` list pins the exact name/shape sequence, which
//! matches [`ModelParams::blocks`]. Writing is deterministic byte for byte.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{LstmKind, ModelConfig, ModelParams};

const MAGIC: &[u8; 4] = b"MINF";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    embed_dim: usize,
    state_dim: usize,
    attn_dim: usize,
    disc_hidden: usize,
    coupled_lstm: bool,
    disc_concat: bool,
    lambda_rev: f64,
    chars: Vec<String>,
    tags: Vec<String>,
    langs: Vec<String>,
    alphabets: Vec<(String, Vec<String>)>,
    config_hash: String,
    blocks: Vec<BlockInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

/// FNV-1a of the effective-config text; ties a checkpoint to the run that
/// produced it.
pub fn config_hash(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn save_model(
    path: &Path,
    params: &ModelParams,
    vocab: &Vocabulary,
    config_hash: &str,
) -> Result<()> {
    let bytes = model_to_bytes(params, vocab, config_hash)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn model_to_bytes(
    params: &ModelParams,
    vocab: &Vocabulary,
    config_hash: &str,
) -> Result<Vec<u8>> {
    let (chars, tags, langs) = vocab.tables();
    let alphabets: Vec<(String, Vec<String>)> = langs
        .iter()
        .map(|l| {
            let alpha = vocab
                .alphabet(l)
                .map(|a| a.iter().map(|c| c.to_string()).collect())
                .unwrap_or_default();
            (l.clone(), alpha)
        })
        .collect();
    let blocks = params.blocks();
    let header = Header {
        version: VERSION,
        embed_dim: params.config.embed_dim,
        state_dim: params.config.state_dim,
        attn_dim: params.config.attn_dim,
        disc_hidden: params.config.disc_hidden,
        coupled_lstm: matches!(params.config.lstm_kind, LstmKind::Coupled),
        disc_concat: params.config.disc_concat,
        lambda_rev: params.config.lambda_rev,
        chars: chars.iter().map(|c| c.to_string()).collect(),
        tags: tags.to_vec(),
        langs: langs.to_vec(),
        alphabets,
        config_hash: config_hash.to_string(),
        blocks: blocks
            .iter()
            .map(|(name, p)| BlockInfo {
                name: name.to_string(),
                shape: p.shape.clone(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::usage(format!("header serialization failed: {e}")))?;
    let total_values: usize = blocks.iter().map(|(_, p)| p.len()).sum();
    let mut out = Vec::with_capacity(16 + header_json.len() + total_values * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (_, p) in &blocks {
        for v in &p.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_model(path: &Path) -> Result<(ModelParams, Vocabulary, String)> {
    let bytes =
        fs::read(path).map_err(|e| Error::parse(path.display().to_string(), 0, e.to_string()))?;
    model_from_bytes(&bytes, &path.display().to_string())
}

pub fn model_from_bytes(bytes: &[u8], source: &str) -> Result<(ModelParams, Vocabulary, String)> {
    let bad = |msg: String| Error::parse(source, 0, msg);
    let mut cursor = bytes;
    let mut magic = [0u8; 4];
    cursor
        .read_exact(&mut magic)
        .map_err(|_| bad("truncated container".into()))?;
    if &magic != MAGIC {
        return Err(bad("not a model container (bad magic)".into()));
    }
    let mut word = [0u8; 4];
    cursor
        .read_exact(&mut word)
        .map_err(|_| bad("truncated container".into()))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(bad(format!("unsupported container version {version}")));
    }
    let mut len8 = [0u8; 8];
    cursor
        .read_exact(&mut len8)
        .map_err(|_| bad("truncated container".into()))?;
    let header_len = u64::from_le_bytes(len8) as usize;
    if cursor.len() < header_len {
        return Err(bad("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&cursor[..header_len])
        .map_err(|e| bad(format!("malformed header: {e}")))?;
    cursor = &cursor[header_len..];

    let one_char = |s: &String| -> Result<char> {
        let mut it = s.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => Ok(c),
            _ => Err(bad(format!(
                "vocabulary entry {s:?} is not a single character"
            ))),
        }
    };
    let chars: Vec<char> = header.chars.iter().map(one_char).collect::<Result<_>>()?;
    let alphabets: Vec<(String, Vec<char>)> = header
        .alphabets
        .iter()
        .map(|(l, alpha)| {
            let a: Result<Vec<char>> = alpha.iter().map(one_char).collect();
            Ok((l.clone(), a?))
        })
        .collect::<Result<_>>()?;
    let vocab =
        Vocabulary::from_tables(chars, header.tags.clone(), header.langs.clone(), alphabets);

    let config = ModelConfig {
        embed_dim: header.embed_dim,
        state_dim: header.state_dim,
        attn_dim: header.attn_dim,
        lstm_kind: if header.coupled_lstm {
            LstmKind::Coupled
        } else {
            LstmKind::Standard
        },
        disc_hidden: header.disc_hidden,
        disc_concat: header.disc_concat,
        lambda_rev: header.lambda_rev,
    };
    let mut dummy_rng = crate::rng::SeedTree::new(0).stream("load");
    let mut params = ModelParams::init(&vocab, config, &mut dummy_rng);

    {
        let mut blocks = params.blocks_mut();
        if blocks.len() != header.blocks.len() {
            return Err(bad(format!(
                "container has {} blocks, model expects {}",
                header.blocks.len(),
                blocks.len()
            )));
        }
        for ((name, p), info) in blocks.iter_mut().zip(&header.blocks) {
            if *name != info.name || p.shape != info.shape {
                return Err(bad(format!(
                    "block mismatch: expected {} {:?}, found {} {:?}",
                    name, p.shape, info.name, info.shape
                )));
            }
            if cursor.len() < p.len() * 8 {
                return Err(bad("truncated parameter data".into()));
            }
            for v in p.values.iter_mut() {
                let mut w = [0u8; 8];
                w.copy_from_slice(&cursor[..8]);
                *v = f64::from_le_bytes(w);
                cursor = &cursor[8..];
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }
    if !cursor.is_empty() {
        return Err(bad(format!(
            "{} trailing bytes after parameter data",
            cursor.len()
        )));
    }
    Ok((params, vocab, header.config_hash))
}

/// One `dump-attention` record, serialized as a JSON line.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AttentionRecord {
    pub lemma: String,
    pub tags: Vec<String>,
    pub prediction: String,
    /// K x M: one row (over tags) per decoding step.
    pub alpha_t: Vec<Vec<f64>>,
    /// K x N: one row (over lemma characters) per decoding step.
    pub alpha_x: Vec<Vec<f64>>,
}

pub fn write_attention_records(out: &mut dyn Write, records: &[AttentionRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::usage(format!("attention record serialization failed: {e}")))?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::rng::SeedTree;

    fn setup() -> (ModelParams, Vocabulary) {
        let data = vec![
            Example::new("aguar", &["V", "PRS"], "aguà", "ast"),
            Example::new("παρακάμπτω", &["V"], "παρέκαμπτες", "el"),
        ];
        let vocab = Vocabulary::build(&[&data]).unwrap();
        let cfg = ModelConfig {
            embed_dim: 4,
            state_dim: 6,
            attn_dim: 5,
            disc_hidden: 4,
            ..Default::default()
        };
        let mut rng = SeedTree::new(42).stream("init");
        let params = ModelParams::init(&vocab, cfg, &mut rng);
        (params, vocab)
    }

    #[test]
    fn container_round_trips_bitwise() {
        let (params, vocab) = setup();
        let bytes = model_to_bytes(&params, &vocab, "cafebabe").unwrap();
        let (loaded, loaded_vocab, hash) = model_from_bytes(&bytes, "mem").unwrap();
        assert_eq!(hash, "cafebabe");
        assert_eq!(loaded, params);
        assert_eq!(loaded_vocab, vocab);
        // byte determinism of the writer
        let again = model_to_bytes(&params, &vocab, "cafebabe").unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupted_containers_are_rejected() {
        let (params, vocab) = setup();
        let bytes = model_to_bytes(&params, &vocab, "x").unwrap();
        // bad magic
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(model_from_bytes(&bad, "mem").is_err());
        // truncation
        assert!(model_from_bytes(&bytes[..bytes.len() - 9], "mem").is_err());
        // trailing garbage
        let mut long = bytes.clone();
        long.push(0);
        assert!(model_from_bytes(&long, "mem").is_err());
    }

    #[test]
    fn attention_records_are_json_lines() {
        let rec = AttentionRecord {
            lemma: "aguar".into(),
            tags: vec!["V".into(), "PRS".into()],
            prediction: "aguà".into(),
            alpha_t: vec![vec![0.5, 0.5]],
            alpha_x: vec![vec![0.25; 4]],
        };
        let mut buf = Vec::new();
        write_attention_records(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let parsed: AttentionRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(parsed.lemma, "aguar");
        assert_eq!(parsed.alpha_x[0].len(), 4);
    }

    #[test]
    fn config_hash_is_stable() {
        assert_eq!(config_hash("a = 1\n"), config_hash("a = 1\n"));
        assert_ne!(config_hash("a = 1\n"), config_hash("a = 2\n"));
    }
}
