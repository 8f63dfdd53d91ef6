use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::balltree::{query_knn, BallTree};
use crate::embio::{read_str, read_u32, read_u64, write_str, AlignedSources, Vocabulary};
use crate::error::{Error, Result};

pub const GRAPH_MAGIC: &[u8; 8] = b"METAKNN\0";
pub const GRAPH_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 1200;
pub const DEFAULT_LEAF_SIZE: usize = 40;

const UNCOVERED: u32 = u32::MAX;

/// Neighbour lists of one source, indexed by union id.
#[derive(Clone, Debug, PartialEq, Eq)]
struct SourceLists {
    offsets: Vec<usize>,
    ids: Vec<u32>,
    covered: Vec<bool>,
}

/// Per-source k-nearest-neighbour lists over the union vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighbourhoodGraph {
    pub k: usize,
    pub include_self: bool,
    vocab: Vocabulary,
    sources: Vec<SourceLists>,
}

impl NeighbourhoodGraph {
    /// Assembles a graph from explicit lists: `lists[source][word]` is
    /// `None` for words the source does not cover.
    pub fn from_lists(
        vocab: Vocabulary,
        k: usize,
        include_self: bool,
        lists: Vec<Vec<Option<Vec<usize>>>>,
    ) -> Result<Self> {
        let n = vocab.len();
        let sources = lists
            .into_iter()
            .map(|per_word| {
                if per_word.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: per_word.len(),
                    });
                }
                let mut offsets = vec![0];
                let mut ids = Vec::new();
                let mut covered = Vec::with_capacity(n);
                for (v, list) in per_word.into_iter().enumerate() {
                    covered.push(list.is_some());
                    for u in list.unwrap_or_default() {
                        if u >= n {
                            return Err(Error::InvalidArgument(format!(
                                "neighbour id {u} of word {v} out of range"
                            )));
                        }
                        ids.push(u as u32);
                    }
                    offsets.push(ids.len());
                }
                Ok(SourceLists {
                    offsets,
                    ids,
                    covered,
                })
            })
            .collect::<Result<_>>()?;
        Ok(NeighbourhoodGraph {
            k,
            include_self,
            vocab,
            sources,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
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

    pub fn covers(&self, source: usize, word: usize) -> bool {
        self.sources[source].covered[word]
    }

    /// `N_i(v)` sorted by ascending distance, or `None` if uncovered.
    pub fn neighbours(&self, source: usize, word: usize) -> Option<&[u32]> {
        let s = &self.sources[source];
        s.covered[word].then(|| &s.ids[s.offsets[word]..s.offsets[word + 1]])
    }

    pub fn contains(&self, source: usize, word: usize, neighbour: usize) -> bool {
        self.neighbours(source, word)
            .is_some_and(|l| l.iter().any(|&u| u as usize == neighbour))
    }

    /// `N_1(v) ∪ … ∪ N_m(v)` in ascending id order, with the number of
    /// sources whose list contains each id.
    pub fn union_neighbourhood(&self, word: usize) -> Vec<(usize, usize)> {
        let mut all: Vec<usize> = (0..self.num_sources())
            .filter_map(|s| self.neighbours(s, word))
            .flat_map(|l| l.iter().map(|&u| u as usize))
            .collect();
        all.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(all.len());
        for u in all {
            match out.last_mut() {
                Some((last, count)) if *last == u => *count += 1,
                _ => out.push((u, 1)),
            }
        }
        out
    }

    /// Returns a copy restricted to the given sources.
    pub fn select_sources(&self, keep: &[usize]) -> Self {
        NeighbourhoodGraph {
            k: self.k,
            include_self: self.include_self,
            vocab: self.vocab.clone(),
            sources: keep.iter().map(|&s| self.sources[s].clone()).collect(),
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(GRAPH_MAGIC)?;
        out.write_all(&GRAPH_VERSION.to_le_bytes())?;
        out.write_all(&(self.k as u64).to_le_bytes())?;
        out.write_all(&(self.sources.len() as u32).to_le_bytes())?;
        out.write_all(&u32::from(self.include_self).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for w in self.vocab.words() {
            write_str(&mut out, w)?;
        }
        for v in 0..self.len() {
            for s in 0..self.num_sources() {
                match self.neighbours(s, v) {
                    None => out.write_all(&UNCOVERED.to_le_bytes())?,
                    Some(list) => {
                        out.write_all(&(list.len() as u32).to_le_bytes())?;
                        for u in list {
                            out.write_all(&u.to_le_bytes())?;
                        }
                    }
                }
            }
        }
        out.flush()
    }

    pub fn read<R: Read>(mut input: R, origin: &Path) -> Result<Self> {
        let io = |e| Error::io(origin, e);
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::CacheVersion(format!("{}: truncated header", origin.display())))?;
        if &magic != GRAPH_MAGIC {
            return Err(Error::CacheVersion(format!("{}: not a graph file", origin.display())));
        }
        let version = read_u32(&mut input).map_err(io)?;
        if version != GRAPH_VERSION {
            return Err(Error::CacheVersion(format!(
                "{}: graph version {version}, expected {GRAPH_VERSION}",
                origin.display()
            )));
        }
        let k = read_u64(&mut input).map_err(io)? as usize;
        let m = read_u32(&mut input).map_err(io)? as usize;
        let include_self = read_u32(&mut input).map_err(io)? == 1;
        let n = read_u64(&mut input).map_err(io)? as usize;
        let mut words = Vec::with_capacity(n);
        for _ in 0..n {
            words.push(read_str(&mut input).map_err(io)?);
        }
        let (vocab, _) = Vocabulary::from_words(words);
        let mut lists = vec![Vec::with_capacity(n); m];
        for _ in 0..n {
            for per_source in lists.iter_mut() {
                let len = read_u32(&mut input).map_err(io)?;
                if len == UNCOVERED {
                    per_source.push(None);
                    continue;
                }
                let mut ids = Vec::with_capacity(len as usize);
                for _ in 0..len {
                    ids.push(read_u32(&mut input).map_err(io)? as usize);
                }
                per_source.push(Some(ids));
            }
        }
        Self::from_lists(vocab, k, include_self, lists)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::pipeline::cache::write_atomic(path.as_ref(), |w| self.write(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    /// Text dump: `word<TAB>source<TAB>neighbour neighbour ...` per covered pair.
    pub fn dump_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for v in 0..self.len() {
            for s in 0..self.num_sources() {
                if let Some(list) = self.neighbours(s, v) {
                    write!(out, "{}\t{s}\t", self.vocab.word(v))?;
                    let words: Vec<&str> = list.iter().map(|&u| self.vocab.word(u as usize)).collect();
                    writeln!(out, "{}", words.join(" "))?;
                }
            }
        }
        out.flush()
    }

    pub fn dump_text_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.dump_text(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// Unit-normalised f64 rows of one source, ordered by ascending union id.
/// Zero rows are left at the origin.
pub fn normalized_points(sources: &AlignedSources, source: usize) -> (Vec<usize>, Vec<f64>) {
    let covered = sources.membership.covered(source);
    let dim = sources.sources[source].dim;
    let mut points = Vec::with_capacity(covered.len() * dim);
    for &w in &covered {
        let row = sources.vector(source, w).expect("covered word");
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        points.extend(row.iter().map(|x| x * scale));
    }
    (covered, points)
}

/// Builds the ball tree of one source and its local-row → union-id map.
pub fn source_tree(sources: &AlignedSources, source: usize, leaf_size: usize) -> Option<(Vec<usize>, BallTree)> {
    let (covered, points) = normalized_points(sources, source);
    if covered.is_empty() {
        return None;
    }
    let tree = BallTree::build(points, sources.sources[source].dim, leaf_size);
    Some((covered, tree))
}

/// k-NN lists in every source for every covered word. Distances are
/// Euclidean between unit-normalised vectors; ties go to the smaller union id.
pub fn build_graph(
    sources: &AlignedSources,
    k: usize,
    include_self: bool,
    leaf_size: usize,
) -> Result<NeighbourhoodGraph> {
    if k == 0 || leaf_size == 0 {
        return Err(Error::InvalidArgument("k and leaf_size must be positive".into()));
    }
    let n = sources.len();
    let lists = (0..sources.num_sources())
        .map(|s| {
            let mut per_word: Vec<Option<Vec<usize>>> = vec![None; n];
            if let Some((covered, tree)) = source_tree(sources, s, leaf_size) {
                let found: Vec<Vec<usize>> = (0..covered.len())
                    .into_par_iter()
                    .map(|row| {
                        query_knn(&tree, row, k, include_self)
                            .into_iter()
                            .map(|(r, _)| covered[r])
                            .collect()
                    })
                    .collect();
                for (row, list) in found.into_iter().enumerate() {
                    per_word[covered[row]] = Some(list);
                }
            }
            per_word
        })
        .collect();
    NeighbourhoodGraph::from_lists(sources.vocab.clone(), k, include_self, lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embio::EmbeddingSet;

    fn line_source() -> AlignedSources {
        // points on the line y = 1; neighbours are ranked by angle
        let set = EmbeddingSet::from_rows(
            "line",
            2,
            [("p0", vec![0.0, 1.0]), ("p1", vec![1.0, 1.0]), ("p3", vec![3.0, 1.0])],
        )
        .unwrap();
        AlignedSources::new(&[set]).unwrap()
    }

    #[test]
    fn nearest_neighbour_is_by_angle() {
        let g = build_graph(&line_source(), 1, false, 1).unwrap();
        assert_eq!(g.neighbours(0, 0).unwrap(), &[1]);
        assert_eq!(g.neighbours(0, 1).unwrap(), &[2]);
        assert_eq!(g.neighbours(0, 2).unwrap(), &[1]);
    }

    #[test]
    fn disjoint_vocabularies_mask_by_source() {
        let a = EmbeddingSet::from_rows("a", 2, [("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0])]).unwrap();
        let b = EmbeddingSet::from_rows("b", 2, [("z", vec![1.0, 0.0]), ("w", vec![0.0, 1.0])]).unwrap();
        let g = build_graph(&AlignedSources::new(&[a, b]).unwrap(), 5, false, 40).unwrap();
        for v in 0..4 {
            let lists = (0..2).filter(|&s| g.neighbours(s, v).is_some()).count();
            assert_eq!(lists, 1);
        }
        assert_eq!(g.neighbours(0, 0).unwrap(), &[1]);
        assert_eq!(g.neighbours(1, 2).unwrap(), &[3]);
    }

    #[test]
    fn include_self_puts_the_word_first() {
        let g = build_graph(&line_source(), 2, true, 1).unwrap();
        for v in 0..3 {
            assert_eq!(g.neighbours(0, v).unwrap()[0] as usize, v);
            assert_eq!(g.neighbours(0, v).unwrap().len(), 2);
        }
    }

    #[test]
    fn binary_round_trip() {
        let g = build_graph(&line_source(), 2, false, 1).unwrap();
        let mut bytes = Vec::new();
        g.write(&mut bytes).unwrap();
        let back = NeighbourhoodGraph::read(bytes.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn union_neighbourhood_counts_multiplicity() {
        let vocab = Vocabulary::from_words(["a", "b", "c", "d"]).0;
        let g = NeighbourhoodGraph::from_lists(
            vocab,
            2,
            false,
            vec![
                vec![Some(vec![1, 2]), None, None, None],
                vec![Some(vec![3, 1]), None, None, None],
            ],
        )
        .unwrap();
        assert_eq!(g.union_neighbourhood(0), vec![(1, 2), (2, 1), (3, 1)]);
    }
}
