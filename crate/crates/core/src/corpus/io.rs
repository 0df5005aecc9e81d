use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, Corpus, CorpusError, Entry, RdfTriple, RESERVED};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    complex: String,
    references: Vec<Vec<String>>,
    #[serde(default)]
    triples: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    complex: String,
    references: Vec<Vec<String>>,
    triples: Vec<[&'a str; 3]>,
}

pub fn parse_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path)?;
    parse_corpus_str(&text, &path.display().to_string())
}

/// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus_str(text: &str, provenance: &str) -> Result<Corpus, CorpusError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(parse_record(line, line_no)?);
    }
    if entries.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let corpus = Corpus::from_entries(entries, provenance);
    let short = corpus.short_references();
    if short > 0 {
        log::warn!("{provenance}: {short} reference(s) with a single simple sentence");
    }
    Ok(corpus)
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRecord {
        line,
        column: None,
        reason: reason.into(),
    }
}

fn tokenize_checked(text: &str, line: usize) -> Result<Vec<String>, CorpusError> {
    let toks = tokenize(text);
    if let Some(t) = toks.iter().find(|t| RESERVED.contains(&t.as_str())) {
        return Err(malformed(line, format!("reserved token `{t}` in text")));
    }
    Ok(toks)
}

fn parse_record(line: &str, line_no: usize) -> Result<Entry, CorpusError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
        line: line_no,
        column: Some(e.column()),
        reason: e.to_string(),
    })?;
    let complex = tokenize_checked(&raw.complex, line_no)?;
    if complex.is_empty() {
        return Err(malformed(line_no, "empty complex sentence"));
    }
    if raw.references.is_empty() {
        return Err(malformed(line_no, "no references"));
    }
    let mut references = Vec::with_capacity(raw.references.len());
    for r in &raw.references {
        let mut decomposition = Vec::with_capacity(r.len());
        for s in r {
            let toks = tokenize_checked(s, line_no)?;
            if toks.is_empty() {
                return Err(malformed(line_no, "empty simple sentence"));
            }
            decomposition.push(toks);
        }
        if decomposition.is_empty() {
            return Err(malformed(line_no, "empty reference decomposition"));
        }
        references.push(decomposition);
    }
    let mut triples: Vec<RdfTriple> = Vec::new();
    for t in &raw.triples {
        let triple = match t.as_slice() {
            [s, r, o] => RdfTriple::new(s, r, o),
            _ => None,
        }
        .ok_or_else(|| malformed(line_no, "triple must be three non-empty strings"))?;
        if !triples.contains(&triple) {
            triples.push(triple);
        }
    }
    Ok(Entry {
        complex,
        references,
        triples,
    })
}

pub fn write_corpus_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    for e in &corpus.entries {
        let rec = OutRecord {
            complex: e.complex.join(" "),
            references: e
                .references
                .iter()
                .map(|d| d.iter().map(|s| s.join(" ")).collect())
                .collect(),
            triples: e
                .triples
                .iter()
                .map(|t| [t.subject.as_str(), t.relation.as_str(), t.object.as_str()])
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("corpus record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(write_corpus_string(corpus).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_record() {
        let c = parse_corpus_str(
            r#"{"complex":"A B .","references":[["A .","B ."]],"triples":[["A","rel","B"]]}"#,
            "t",
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries[0].references.len(), 1);
        assert_eq!(c.entries[0].references[0].len(), 2);
        assert_eq!(c.entries[0].triples[0].relation, "rel");
    }

    #[test]
    fn duplicate_complex_lines_merge() {
        let text = concat!(
            r#"{"complex":"A B .","references":[["A .","B ."]],"triples":[["A","rel","B"]]}"#,
            "\n",
            r#"{"complex":"A B .","references":[["B .","A ."]],"triples":[["A","rel","B"]]}"#,
            "\n"
        );
        let c = parse_corpus_str(text, "t").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries[0].references.len(), 2);
    }

    #[test]
    fn empty_complex_is_malformed() {
        let err = parse_corpus_str(r#"{"complex":""}"#, "t").unwrap_err();
        assert_eq!(err.line(), Some(1));
    }

    #[test]
    fn reports_line_of_first_bad_record() {
        let text = concat!(
            r#"{"complex":"A .","references":[["A .","A ."]]}"#,
            "\n\n",
            r#"{"complex":"B .","references":[["B ."]],"triples":[["B","r"]]}"#,
            "\n",
            "not json\n"
        );
        let err = parse_corpus_str(text, "t").unwrap_err();
        assert_eq!(err.line(), Some(3));
        let err = parse_corpus_str("{\"complex\": 3}", "t").unwrap_err();
        match err {
            CorpusError::MalformedRecord { line, column, .. } => {
                assert_eq!(line, 1);
                assert!(column.is_some());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_reserved_tokens_and_empty_input() {
        assert!(parse_corpus_str(r#"{"complex":"a <unk> .","references":[["a ."]]}"#, "t").is_err());
        assert!(matches!(parse_corpus_str("\n\n", "t"), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn writer_field_order_and_round_trip() {
        let text = r#"{"complex":"A B .","references":[["A .","B ."]],"triples":[["A","rel","B"]]}"#;
        let c = parse_corpus_str(text, "t").unwrap();
        let written = write_corpus_string(&c);
        assert_eq!(written, format!("{text}\n"));
        assert_eq!(parse_corpus_str(&written, "t").unwrap().entries, c.entries);
    }
}
