//! Benchmark dataset types and their on-disk formats.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityPair {
    pub word1: String,
    pub word2: String,
    pub score: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimilarityDataset {
    pub pairs: Vec<SimilarityPair>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
    pub section: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnalogyDataset {
    pub questions: Vec<AnalogyQuestion>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationTriple {
    pub relation: String,
    pub word1: String,
    pub word2: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationDataset {
    pub triples: Vec<RelationTriple>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub label: u8,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TextDataset {
    pub train: Vec<Document>,
    pub test: Vec<Document>,
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Calls `f(line_number, trimmed_line)` for every non-blank line.
fn for_each_line<R: BufRead>(
    input: R,
    origin: &Path,
    mut f: impl FnMut(usize, &str) -> Result<()>,
) -> Result<()> {
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim();
        if !line.is_empty() {
            f(i + 1, line)?;
        }
    }
    Ok(())
}

/// Whitespace-separated `word1 word2 score` lines; `#` starts a comment.
pub fn read_similarity<R: BufRead>(input: R, origin: &Path) -> Result<SimilarityDataset> {
    let mut pairs = Vec::new();
    for_each_line(input, origin, |n, line| {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return Ok(());
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [w1, w2, s] = fields[..] else {
            return Err(Error::parse(origin, n, format!("expected 3 fields, found {}", fields.len())));
        };
        let score: f64 = s
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| Error::parse(origin, n, format!("invalid score {s:?}")))?;
        pairs.push(SimilarityPair {
            word1: w1.to_string(),
            word2: w2.to_string(),
            score,
        });
        Ok(())
    })?;
    Ok(SimilarityDataset { pairs })
}

/// Google analogy format: `: section` headers and `a b c d` lines.
pub fn read_analogy<R: BufRead>(input: R, origin: &Path) -> Result<AnalogyDataset> {
    let mut questions = Vec::new();
    let mut section = None;
    for_each_line(input, origin, |n, line| {
        if let Some(rest) = line.strip_prefix(':') {
            section = Some(rest.trim().to_string());
            return Ok(());
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [a, b, c, d] = fields[..] else {
            return Err(Error::parse(origin, n, format!("expected 4 tokens, found {}", fields.len())));
        };
        let distinct = (0..4).all(|i| (i + 1..4).all(|j| fields[i] != fields[j]));
        if !distinct {
            return Err(Error::parse(origin, n, "analogy tokens must be distinct"));
        }
        questions.push(AnalogyQuestion {
            a: a.to_string(),
            b: b.to_string(),
            c: c.to_string(),
            d: d.to_string(),
            section: section.clone(),
        });
        Ok(())
    })?;
    Ok(AnalogyDataset { questions })
}

/// CSV lines `relation,word1,word2`.
pub fn read_relation<R: BufRead>(input: R, origin: &Path) -> Result<RelationDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut triples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(origin, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 3 || record.iter().any(str::is_empty) {
            return Err(Error::parse(origin, line, "expected relation,word1,word2"));
        }
        triples.push(RelationTriple {
            relation: record[0].to_string(),
            word1: record[1].to_string(),
            word2: record[2].to_string(),
        });
    }
    Ok(RelationDataset { triples })
}

/// One `label<TAB>text` document per line, label 0 or 1.
pub fn read_documents<R: BufRead>(input: R, origin: &Path) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for_each_line(input, origin, |n, line| {
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, n, "expected label<TAB>text"))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::parse(origin, n, format!("label must be 0 or 1, found {other:?}"))),
        };
        docs.push(Document {
            label,
            tokens: tokenize(text),
        });
        Ok(())
    })?;
    Ok(docs)
}

pub fn parse_similarity(path: impl AsRef<Path>) -> Result<SimilarityDataset> {
    let path = path.as_ref();
    read_similarity(open(path)?, path)
}

pub fn parse_analogy(path: impl AsRef<Path>) -> Result<AnalogyDataset> {
    let path = path.as_ref();
    read_analogy(open(path)?, path)
}

pub fn parse_relation(path: impl AsRef<Path>) -> Result<RelationDataset> {
    let path = path.as_ref();
    read_relation(open(path)?, path)
}

/// Reads separate train and test files.
pub fn parse_text(train: impl AsRef<Path>, test: impl AsRef<Path>) -> Result<TextDataset> {
    let (train, test) = (train.as_ref(), test.as_ref());
    Ok(TextDataset {
        train: read_documents(open(train)?, train)?,
        test: read_documents(open(test)?, test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn origin() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn similarity_line() {
        let ds = read_similarity(Cursor::new("# header\ncar automobile 3.92\n\n"), origin()).unwrap();
        assert_eq!(
            ds.pairs,
            vec![SimilarityPair {
                word1: "car".into(),
                word2: "automobile".into(),
                score: 3.92
            }]
        );
    }

    #[test]
    fn similarity_errors_carry_line_numbers() {
        match read_similarity(Cursor::new("a b 1\na b\n"), origin()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(read_similarity(Cursor::new("a b nan\n"), origin()).is_err());
    }

    #[test]
    fn analogy_section_label() {
        let ds = read_analogy(Cursor::new(": family\nman woman king queen\n"), origin()).unwrap();
        let q = &ds.questions[0];
        assert_eq!((q.a.as_str(), q.d.as_str()), ("man", "queen"));
        assert_eq!(q.section.as_deref(), Some("family"));
        assert!(read_analogy(Cursor::new("a a b c\n"), origin()).is_err());
        assert!(read_analogy(Cursor::new("a b c\n"), origin()).is_err());
    }

    #[test]
    fn relation_csv() {
        let ds = read_relation(Cursor::new("hyper,dog,animal\n"), origin()).unwrap();
        assert_eq!(
            ds.triples,
            vec![RelationTriple {
                relation: "hyper".into(),
                word1: "dog".into(),
                word2: "animal".into()
            }]
        );
        assert!(read_relation(Cursor::new("hyper,dog\n"), origin()).is_err());
    }

    #[test]
    fn documents_are_tokenized() {
        let docs = read_documents(Cursor::new("1\tGreat movie, really-good!\n0\tbad\n"), origin()).unwrap();
        assert_eq!(docs[0].tokens, vec!["great", "movie", "really", "good"]);
        assert_eq!(docs[1].label, 0);
        assert!(read_documents(Cursor::new("2\tx\n"), origin()).is_err());
        assert!(read_documents(Cursor::new("no tab\n"), origin()).is_err());
    }
}
