//! Loading, normalising, caching and aligning source embedding sets.
//!
//! Two text formats are read: word2vec text (a `count dim` header followed by
//! one `token v1 .. vd` row per line) and GloVe text (the same rows without a
//! header). The binary cache is a self-describing little-endian file:
//!
//! ```text
//! magic     8 bytes   "METAEMB\0"
//! version   u32       CACHE_VERSION
//! flags     u32       bit 0: rows are unit-normalised
//! n         u64       number of rows
//! d         u64       dimensionality
//! name      u32 length + UTF-8 bytes
//! tokens    n × (u32 length + UTF-8 bytes)
//! vectors   n × d f32, row-major
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"METAEMB\0";
pub const CACHE_VERSION: u32 = 1;

/// Ordered set of unique tokens with dense 0-based ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vocabulary keeping the first occurrence of every token.
    /// Returns the vocabulary and the number of dropped duplicates.
    pub fn from_words<I, S>(words: I) -> (Self, usize)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::new();
        let mut duplicates = 0;
        for w in words {
            if vocab.insert(w.into()).1 {
                duplicates += 1;
            }
        }
        (vocab, duplicates)
    }

    /// Inserts `word` if absent. Returns its id and whether it was already present.
    pub fn insert(&mut self, word: String) -> (usize, bool) {
        if let Some(&id) = self.index.get(&word) {
            return (id, true);
        }
        let id = self.words.len();
        self.index.insert(word.clone(), id);
        self.words.push(word);
        (id, false)
    }

    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Word2vecText,
    GloveText,
    CacheBinary,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec-text" | "word2vec" => Ok(Format::Word2vecText),
            "glove-text" | "glove" => Ok(Format::GloveText),
            "cache-binary" | "cache" => Ok(Format::CacheBinary),
            other => Err(Error::InvalidArgument(format!("unknown embedding format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Word2vecText => "word2vec-text",
            Format::GloveText => "glove-text",
            Format::CacheBinary => "cache-binary",
        })
    }
}

/// One source embedding: a vocabulary and a single-precision row table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub name: String,
    dim: usize,
    vocab: Vocabulary,
    vectors: Vec<f32>,
    unit_normalized: bool,
}

impl EmbeddingSet {
    /// Builds a set from rows, validating shape and finiteness.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        vocab: Vocabulary,
        vectors: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimensionality must be positive".into()));
        }
        if vectors.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                found: vectors.len(),
            });
        }
        if let Some(pos) = vectors.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value in row for token {:?}",
                vocab.word(pos / dim)
            )));
        }
        Ok(EmbeddingSet {
            name: name.into(),
            dim,
            vocab,
            vectors,
            unit_normalized: false,
        })
    }

    /// Builds a set from `(token, vector)` pairs; later duplicates are dropped.
    pub fn from_rows<I, S>(name: impl Into<String>, dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::new();
        let mut vectors = Vec::new();
        for (token, row) in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if !vocab.insert(token.into()).1 {
                vectors.extend_from_slice(&row);
            }
        }
        Self::new(name, dim, vocab, vectors)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vocab.lookup(word).map(|i| self.row(i))
    }

    pub fn is_unit_normalized(&self) -> bool {
        self.unit_normalized
    }

    /// Checks the unit-norm invariant when the flag is set.
    pub fn check_unit_rows(&self) -> bool {
        !self.unit_normalized
            || (0..self.len()).all(|i| {
                let n: f64 = self.row(i).iter().map(|&x| f64::from(x).powi(2)).sum();
                (n.sqrt() - 1.0).abs() <= 1e-6
            })
    }
}

/// Divides every row by its Euclidean norm.
pub fn l2_normalize(mut set: EmbeddingSet) -> Result<EmbeddingSet> {
    let dim = set.dim;
    for (i, row) in set.vectors.chunks_mut(dim).enumerate() {
        let norm = row.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm {
                token: set.vocab.word(i).to_string(),
            });
        }
        for x in row.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
    set.unit_normalized = true;
    Ok(set)
}

/// Loads a set and logs a warning if duplicate tokens were dropped.
pub fn load_embeddings(path: impl AsRef<Path>, format: Format) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embedding".into());
    match format {
        Format::CacheBinary => load_cache(path),
        Format::Word2vecText | Format::GloveText => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let (set, duplicates) = read_text(BufReader::new(file), format, path, name)?;
            if duplicates > 0 {
                log::warn!(
                    "{}: dropped {duplicates} duplicate token(s), kept first occurrence",
                    path.display()
                );
            }
            Ok(set)
        }
    }
}

/// Guesses a file's format from its first bytes: the cache magic, a
/// word2vec `n d` header line, or GloVe otherwise.
pub fn detect_format(path: impl AsRef<Path>) -> Result<Format> {
    let path = path.as_ref();
    let mut input = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let head = input.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(CACHE_MAGIC) {
        return Ok(Format::CacheBinary);
    }
    let mut first = String::new();
    input.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    let header = fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok());
    Ok(if header { Format::Word2vecText } else { Format::GloveText })
}

/// Parses a text-format embedding. Returns the set and the duplicate count.
pub fn read_text<R: BufRead>(
    reader: R,
    format: Format,
    origin: &Path,
    name: impl Into<String>,
) -> Result<(EmbeddingSet, usize)> {
    let mut lines = reader.lines().enumerate();
    let mut declared: Option<(usize, usize)> = None;
    if format == Format::Word2vecText {
        let (lineno, header) = loop {
            match lines.next() {
                None => return Err(Error::EmptyInput(origin.display().to_string())),
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io(origin, e))?;
                    if !line.trim().is_empty() {
                        break (i + 1, line);
                    }
                }
            }
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [n, d] => n.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
            _ => None,
        };
        match parsed {
            Some((n, d)) if d > 0 => declared = Some((n, d)),
            _ => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected header \"count dim\", found {header:?}"),
                ))
            }
        }
    }

    let mut dim = declared.map(|(_, d)| d);
    let mut vocab = Vocabulary::new();
    let mut vectors = Vec::new();
    let mut rows = 0usize;
    let mut duplicates = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let start = vectors.len();
        let mut count = 0usize;
        for f in fields {
            let x: f32 = f
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("unparsable float {f:?}")))?;
            if !x.is_finite() {
                return Err(Error::parse(origin, lineno, format!("non-finite value {f:?}")));
            }
            vectors.push(x);
            count += 1;
        }
        match dim {
            None if count == 0 => {
                return Err(Error::parse(origin, lineno, "row has no vector components"))
            }
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected {d} components, found {count}"),
                ))
            }
            Some(_) => {}
        }
        rows += 1;
        if vocab.insert(token.to_string()).1 {
            duplicates += 1;
            vectors.truncate(start);
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput(origin.display().to_string()));
    }
    if let Some((n, _)) = declared {
        if n != rows {
            return Err(Error::parse(
                origin,
                1,
                format!("header declares {n} rows, file contains {rows}"),
            ));
        }
    }
    let set = EmbeddingSet::new(name, dim.unwrap_or(0), vocab, vectors)?;
    Ok((set, duplicates))
}

/// Writes a text-format embedding (word2vec text adds the header line).
pub fn write_text<W: Write>(set: &EmbeddingSet, format: Format, mut out: W) -> std::io::Result<()> {
    if format == Format::Word2vecText {
        writeln!(out, "{} {}", set.len(), set.dim())?;
    }
    for (i, word) in set.vocab.words().iter().enumerate() {
        out.write_all(word.as_bytes())?;
        for x in set.row(i) {
            write!(out, " {x}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Saves a set in the requested format.
pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    match format {
        Format::CacheBinary => save_cache(set, path),
        _ => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            write_text(set, format, BufWriter::new(file)).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn write_cache<W: Write>(set: &EmbeddingSet, mut out: W) -> std::io::Result<()> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&u32::from(set.unit_normalized).to_le_bytes())?;
    out.write_all(&(set.len() as u64).to_le_bytes())?;
    out.write_all(&(set.dim as u64).to_le_bytes())?;
    write_str(&mut out, &set.name)?;
    for w in set.vocab.words() {
        write_str(&mut out, w)?;
    }
    for x in &set.vectors {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()
}

pub fn save_cache(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::pipeline::cache::write_atomic(path, |w| write_cache(set, w))
}

pub fn read_cache<R: Read>(mut input: R, origin: &Path) -> Result<EmbeddingSet> {
    let io = |e| Error::io(origin, e);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| {
        Error::CacheVersion(format!("{}: truncated header", origin.display()))
    })?;
    if &magic != CACHE_MAGIC {
        return Err(Error::CacheVersion(format!("{}: bad magic bytes", origin.display())));
    }
    let version = read_u32(&mut input).map_err(io)?;
    if version != CACHE_VERSION {
        return Err(Error::CacheVersion(format!(
            "{}: version {version}, expected {CACHE_VERSION}",
            origin.display()
        )));
    }
    let flags = read_u32(&mut input).map_err(io)?;
    let n = read_u64(&mut input).map_err(io)? as usize;
    let d = read_u64(&mut input).map_err(io)? as usize;
    let name = read_str(&mut input).map_err(io)?;
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        words.push(read_str(&mut input).map_err(io)?);
    }
    let (vocab, dups) = Vocabulary::from_words(words);
    if dups > 0 {
        return Err(Error::CacheVersion(format!(
            "{}: duplicate tokens in token table",
            origin.display()
        )));
    }
    let mut bytes = vec![0u8; n * d * 4];
    input.read_exact(&mut bytes).map_err(io)?;
    let vectors = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let mut set = EmbeddingSet::new(name, d, vocab, vectors)?;
    set.unit_normalized = flags & 1 == 1;
    Ok(set)
}

pub fn load_cache(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_cache(BufReader::new(file), path)
}

pub(crate) fn write_str<W: Write>(out: &mut W, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

pub(crate) fn read_str<R: Read>(input: &mut R) -> std::io::Result<String> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(input: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(input: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

const ABSENT: u32 = u32::MAX;

/// Which union-vocabulary words each source covers, and at which local row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceMembership {
    local_rows: Vec<Vec<u32>>,
}

impl SourceMembership {
    pub fn num_sources(&self) -> usize {
        self.local_rows.len()
    }

    pub fn covers(&self, source: usize, word: usize) -> bool {
        self.local_rows[source][word] != ABSENT
    }

    pub fn local_row(&self, source: usize, word: usize) -> Option<usize> {
        match self.local_rows[source][word] {
            ABSENT => None,
            r => Some(r as usize),
        }
    }

    /// Union ids covered by `source`, ascending.
    pub fn covered(&self, source: usize) -> Vec<usize> {
        (0..self.local_rows[source].len())
            .filter(|&w| self.covers(source, w))
            .collect()
    }

    pub fn coverage_count(&self, word: usize) -> usize {
        (0..self.num_sources()).filter(|&s| self.covers(s, word)).count()
    }
}

/// Union vocabulary ordered by first appearance across `sets` in order.
pub fn union_vocab(sets: &[EmbeddingSet]) -> Result<(Vocabulary, SourceMembership)> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("source embedding list".into()));
    }
    let mut union = Vocabulary::new();
    for set in sets {
        for w in set.vocab.words() {
            union.insert(w.clone());
        }
    }
    let local_rows = sets
        .iter()
        .map(|set| {
            let mut rows = vec![ABSENT; union.len()];
            for (local, w) in set.vocab.words().iter().enumerate() {
                rows[union.lookup(w).expect("word inserted above")] = local as u32;
            }
            rows
        })
        .collect();
    Ok((union, SourceMembership { local_rows }))
}

/// One source promoted to double precision, addressed by union id.
#[derive(Clone, Debug)]
pub struct SourceTable {
    pub name: String,
    pub dim: usize,
    data: Vec<f64>,
}

impl SourceTable {
    pub fn row(&self, local: usize) -> &[f64] {
        &self.data[local * self.dim..(local + 1) * self.dim]
    }
}

/// Sources aligned on their union vocabulary, in double precision.
#[derive(Clone, Debug)]
pub struct AlignedSources {
    pub vocab: Vocabulary,
    pub membership: SourceMembership,
    pub sources: Vec<SourceTable>,
}

impl AlignedSources {
    pub fn new(sets: &[EmbeddingSet]) -> Result<Self> {
        let (vocab, membership) = union_vocab(sets)?;
        let sources = sets
            .iter()
            .map(|s| SourceTable {
                name: s.name.clone(),
                dim: s.dim,
                data: s.vectors.iter().map(|&x| f64::from(x)).collect(),
            })
            .collect();
        Ok(AlignedSources {
            vocab,
            membership,
            sources,
        })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    /// Vector of union word `word` in source `source`, if covered.
    pub fn vector(&self, source: usize, word: usize) -> Option<&[f64]> {
        self.membership
            .local_row(source, word)
            .map(|r| self.sources[source].row(r))
    }

    /// Multiplies every vector of one source by `factor`.
    pub fn scale_source(&mut self, source: usize, factor: f64) {
        for x in &mut self.sources[source].data {
            *x *= factor;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, format: Format) -> Result<(EmbeddingSet, usize)> {
        read_text(Cursor::new(text), format, Path::new("mem"), "mem")
    }

    #[test]
    fn glove_smallest_input() {
        let (set, dups) = parse("a 1.0 0.0\nb 0.0 1.0\n", Format::GloveText).unwrap();
        assert_eq!((set.dim(), set.len(), dups), (2, 2, 0));
        assert_eq!(set.get("b").unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn formats_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let w2v = dir.path().join("a.txt");
        std::fs::write(&w2v, "2 1\nx 1\ny 2\n").unwrap();
        let glove = dir.path().join("b.txt");
        std::fs::write(&glove, "x 1 2\n").unwrap();
        let (set, _) = parse("x 1\n", Format::GloveText).unwrap();
        let cache = dir.path().join("c.bin");
        save_cache(&set, &cache).unwrap();
        assert_eq!(detect_format(&w2v).unwrap(), Format::Word2vecText);
        assert_eq!(detect_format(&glove).unwrap(), Format::GloveText);
        assert_eq!(detect_format(&cache).unwrap(), Format::CacheBinary);
    }

    #[test]
    fn word2vec_header_drives_dim() {
        let (set, _) = parse("2 3\nx 1 2 3\ny 4 5 6\n", Format::Word2vecText).unwrap();
        assert_eq!((set.dim(), set.len()), (3, 2));
        assert_eq!(set.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn duplicates_keep_first() {
        let (set, dups) = parse("a 1 0\nb 0 1\na 5 5\n", Format::GloveText).unwrap();
        assert_eq!(dups, 1);
        assert_eq!(set.len(), 2);
        assert_eq!(set.get("a").unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn tokens_are_case_sensitive() {
        let (set, dups) = parse("Apple 1 0\napple 0 1\n", Format::GloveText).unwrap();
        assert_eq!((set.len(), dups), (2, 0));
    }

    #[test]
    fn malformed_lines_name_the_line() {
        match parse("a 1 0\nb 0 x\n", Format::GloveText) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("a 1 0\nb 0 1 2\n", Format::GloveText) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse("2 3\nx 1 2 3\ny 4 5\n", Format::Word2vecText) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("a 1 nan\n", Format::GloveText), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_files_are_rejected() {
        assert!(matches!(parse("", Format::GloveText), Err(Error::EmptyInput(_))));
        assert!(matches!(parse("\n\n", Format::Word2vecText), Err(Error::EmptyInput(_))));
        assert!(matches!(parse("0 3\n", Format::Word2vecText), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn header_row_count_is_checked() {
        assert!(matches!(
            parse("3 2\na 1 0\nb 0 1\n", Format::Word2vecText),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    fn normalized_row(row: Vec<f32>) -> Vec<f32> {
        let set = EmbeddingSet::from_rows("t", row.len(), [("w", row)]).unwrap();
        l2_normalize(set).unwrap().row(0).to_vec()
    }

    #[test]
    fn l2_normalize_examples() {
        assert_eq!(normalized_row(vec![3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(normalized_row(vec![1.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(normalized_row(vec![-2.0, 0.0, 0.0]), vec![-1.0, 0.0, 0.0]);
    }

    #[test]
    fn l2_normalize_rejects_zero_rows() {
        let set = EmbeddingSet::from_rows("t", 2, [("a", vec![1.0, 0.0]), ("z", vec![0.0, 0.0])])
            .unwrap();
        match l2_normalize(set) {
            Err(Error::ZeroNorm { token }) => assert_eq!(token, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn set_of(name: &str, words: &[&str]) -> EmbeddingSet {
        EmbeddingSet::from_rows(
            name,
            1,
            words.iter().enumerate().map(|(i, w)| (*w, vec![i as f32 + 1.0])),
        )
        .unwrap()
    }

    #[test]
    fn union_of_two_vocabularies() {
        let (union, membership) =
            union_vocab(&[set_of("s1", &["a", "b"]), set_of("s2", &["b", "c"])]).unwrap();
        assert_eq!(union.words(), &["a", "b", "c"]);
        assert!(membership.covers(0, 1) && membership.covers(1, 1));
        assert!(!membership.covers(0, 2) && !membership.covers(1, 0));
        assert_eq!(membership.local_row(1, 2), Some(1));
        assert_eq!(membership.covered(1), vec![1, 2]);
    }

    #[test]
    fn union_of_identical_vocabularies() {
        let s = set_of("s", &["x", "y", "z"]);
        let (union, membership) = union_vocab(&[s.clone(), s.clone()]).unwrap();
        assert_eq!(union.words(), s.vocab().words());
        assert!((0..3).all(|w| membership.coverage_count(w) == 2));
    }

    #[test]
    fn union_of_nothing_is_an_error() {
        assert!(union_vocab(&[]).is_err());
    }

    #[test]
    fn cache_rejects_corrupted_magic() {
        let set = set_of("s", &["a"]);
        let mut bytes = Vec::new();
        write_cache(&set, &mut bytes).unwrap();
        bytes[0] ^= 0xff;
        assert!(matches!(
            read_cache(Cursor::new(&bytes), Path::new("mem")),
            Err(Error::CacheVersion(_))
        ));
        let mut bytes = Vec::new();
        write_cache(&set, &mut bytes).unwrap();
        bytes[8] = 99;
        assert!(matches!(
            read_cache(Cursor::new(&bytes), Path::new("mem")),
            Err(Error::CacheVersion(_))
        ));
    }
}
