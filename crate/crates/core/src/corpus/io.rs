//! Corpus (JSON Lines with a header line) and catalog document persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalog::CatalogDocument;
use super::generate::{LabeledCorpus, LabeledNote};
use crate::error::{Error, Result};
use crate::text::TOKENIZER_VERSION;

const CORPUS_FORMAT: &str = "icdlab-corpus/1";

#[derive(Debug, Serialize, Deserialize)]
struct CorpusHeader {
    format: String,
    catalog_digest: String,
    tokenizer_version: String,
    seed: u64,
    config_digest: String,
    n_notes: usize,
}

pub fn write_corpus<W: Write>(corpus: &LabeledCorpus, mut out: W) -> Result<()> {
    let header = CorpusHeader {
        format: CORPUS_FORMAT.into(),
        catalog_digest: corpus.catalog_digest.clone(),
        tokenizer_version: corpus.tokenizer_version.clone(),
        seed: corpus.seed,
        config_digest: corpus.config_digest.clone(),
        n_notes: corpus.notes.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for note in &corpus.notes {
        serde_json::to_writer(&mut out, note)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(input: R, origin: &str) -> Result<LabeledCorpus> {
    let malformed = |reason: String| Error::Format { path: origin.to_string(), reason };
    let mut lines = input.lines();
    let header_line = lines.next().ok_or_else(|| malformed("missing header line".into()))??;
    let header: CorpusHeader = serde_json::from_str(&header_line).map_err(|e| malformed(format!("header: {e}")))?;
    if header.format != CORPUS_FORMAT {
        return Err(malformed(format!("unsupported format `{}`", header.format)));
    }
    if header.tokenizer_version != TOKENIZER_VERSION {
        return Err(Error::TokenizerMismatch { expected: TOKENIZER_VERSION.into(), found: header.tokenizer_version });
    }
    let mut notes = Vec::with_capacity(header.n_notes);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let note: LabeledNote = serde_json::from_str(&line).map_err(|e| malformed(format!("line {}: {e}", i + 2)))?;
        notes.push(note);
    }
    if notes.len() != header.n_notes {
        return Err(malformed(format!("header announces {} notes, found {}", header.n_notes, notes.len())));
    }
    Ok(LabeledCorpus {
        catalog_digest: header.catalog_digest,
        tokenizer_version: header.tokenizer_version,
        seed: header.seed,
        config_digest: header.config_digest,
        notes,
    })
}

pub fn save_corpus(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<()> {
    write_corpus(corpus, BufWriter::new(File::create(path)?))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    read_corpus(BufReader::new(File::open(path)?), &path.display().to_string())
}

pub fn save_catalog(doc: &CatalogDocument, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, doc)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<CatalogDocument> {
    let doc: CatalogDocument = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    doc.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{default_catalog, generate_corpus, CatalogConfig, GenerateConfig};
    use proptest::prelude::*;

    fn sample(seed: u64, n: usize) -> (CatalogDocument, LabeledCorpus) {
        let doc = default_catalog(&CatalogConfig::default()).unwrap();
        let corpus = generate_corpus(&doc, &GenerateConfig { n_notes: n, ..GenerateConfig::default() }, seed).unwrap();
        (doc, corpus)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn corpus_round_trips(seed in any::<u64>(), n in 1usize..12) {
            let (_, corpus) = sample(seed, n);
            let mut buf = Vec::new();
            write_corpus(&corpus, &mut buf).unwrap();
            let back = read_corpus(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, corpus);
        }
    }

    #[test]
    fn catalog_round_trips() {
        let (doc, _) = sample(0, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        save_catalog(&doc, &path).unwrap();
        assert_eq!(load_catalog(&path).unwrap(), doc);
    }

    #[test]
    fn tokenizer_mismatch_is_reported() {
        let (_, corpus) = sample(0, 2);
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen(TOKENIZER_VERSION, "other/0", 1);
        assert!(matches!(read_corpus(text.as_bytes(), "mem"), Err(Error::TokenizerMismatch { .. })));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let (_, corpus) = sample(0, 3);
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_corpus(truncated.as_bytes(), "mem"), Err(Error::Format { .. })));
    }
}
