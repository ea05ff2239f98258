//! TF-IDF inverted index with cosine scoring.
//!
//! Weighting on both document and query side:
//!
//! ```text
//! w(t, d) = (1 + ln tf(t, d)) * idf(t)      idf(t) = 1 + ln(N / df(t))
//! score(q, d) = cos(w_q, w_d)
//! ```
//!
//! The smoothed idf keeps every weight positive, so even a single-document
//! corpus has non-zero norms. Query terms outside the vocabulary have no idf
//! and are dropped before weighting. All floating accumulation happens in
//! lexicographic term order, which makes scores bit-stable across runs and
//! invariant to corpus ingestion order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, EvidenceHit, RetrievalError, Retriever, RetrieverKind};
use crate::corpus::Corpus;
use crate::scalar::Scalar;

const HEADER_FILE: &str = "header.json";
const POSTINGS_FILE: &str = "postings.bin";
const NORMS_FILE: &str = "norms.bin";
const IDS_FILE: &str = "ids.txt";
const FORMAT_VERSION: u32 = 1;
const WEIGHTING: &str = "ltc";

/// One posting: which passage contains the term, and how often.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

/// Index build options.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct IndexOptions {
    /// Prepend the page title to the indexed text. Off by default: titles are
    /// stored alongside passages either way, and indexing them changes the
    /// retrieval behavior under study.
    #[serde(default)]
    pub index_title: bool,
}

/// Inverted index over a fixed passage set, generic over the scoring scalar.
#[derive(Debug, Clone)]
pub struct InvertedIndex<F> {
    vocabulary: HashMap<String, Vec<Posting>>,
    doc_norms: Vec<F>,
    ids: Vec<String>,
    options: IndexOptions,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format_version: u32,
    #[serde(rename = "N")]
    n: u64,
    weighting: String,
    #[serde(default)]
    index_title: bool,
}

impl<F: Scalar> InvertedIndex<F> {
    /// Build an index over `(id, text)` documents, ordinals in input order.
    pub fn from_documents<I>(docs: I, options: IndexOptions) -> Result<Self, RetrievalError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vocabulary: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut ids = Vec::new();
        for (ordinal, (id, text)) in docs.into_iter().enumerate() {
            let ordinal = ordinal as u32;
            let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
            for term in tokenize(&text) {
                *tfs.entry(term).or_insert(0) += 1;
            }
            for (term, tf) in tfs {
                vocabulary
                    .entry(term)
                    .or_default()
                    .push(Posting { ordinal, tf });
            }
            ids.push(id);
        }
        if ids.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }

        let n = ids.len();
        let mut doc_norms = vec![F::zero(); n];
        // Lexicographic term order keeps the float accumulation deterministic.
        let mut terms: Vec<&String> = vocabulary.keys().collect();
        terms.sort_unstable();
        for term in terms {
            let postings = &vocabulary[term];
            let idf = idf_value::<F>(n, postings.len());
            for p in postings {
                let w = doc_weight::<F>(p.tf, idf);
                doc_norms[p.ordinal as usize] = doc_norms[p.ordinal as usize] + w * w;
            }
        }
        for norm in &mut doc_norms {
            *norm = norm.sqrt();
        }

        Ok(InvertedIndex {
            vocabulary,
            doc_norms,
            ids,
            options,
        })
    }

    pub fn passage_count(&self) -> usize {
        self.ids.len()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn options(&self) -> IndexOptions {
        self.options
    }

    /// Document frequency of a term (0 if absent).
    pub fn df(&self, term: &str) -> usize {
        self.vocabulary.get(term).map_or(0, Vec::len)
    }

    /// Smoothed idf of a term, if present.
    pub fn idf(&self, term: &str) -> Option<F> {
        let df = self.df(term);
        (df > 0).then(|| idf_value::<F>(self.ids.len(), df))
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.vocabulary.get(term).map(Vec::as_slice)
    }

    pub fn doc_norm(&self, ordinal: u32) -> F {
        self.doc_norms[ordinal as usize]
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.ids
    }

    /// Exact top-k by cosine score, ties broken by ascending passage id.
    /// Returns at most `min(k, #passages with score > 0)` entries, best first.
    pub fn search(&self, query: &str, k: usize) -> Vec<(u32, F)> {
        if k == 0 {
            return Vec::new();
        }
        let mut query_tfs: BTreeMap<String, u32> = BTreeMap::new();
        for term in tokenize(query) {
            *query_tfs.entry(term).or_insert(0) += 1;
        }
        let n = self.ids.len();

        // Query weights over in-vocabulary terms, in lexicographic order.
        let mut weighted: Vec<(&str, F, &[Posting])> = Vec::new();
        let mut query_norm_sq = F::zero();
        for (term, tf) in &query_tfs {
            if let Some(postings) = self.vocabulary.get(term) {
                let idf = idf_value::<F>(n, postings.len());
                let w = doc_weight::<F>(*tf, idf);
                query_norm_sq = query_norm_sq + w * w;
                weighted.push((term, w, postings));
            }
        }
        if weighted.is_empty() {
            return Vec::new();
        }
        let query_norm = query_norm_sq.sqrt();

        let mut acc: HashMap<u32, F> = HashMap::new();
        for (_, qw, postings) in &weighted {
            let idf = idf_value::<F>(n, postings.len());
            for p in *postings {
                let dw = doc_weight::<F>(p.tf, idf);
                let entry = acc.entry(p.ordinal).or_insert_with(F::zero);
                *entry = *entry + *qw * dw;
            }
        }

        // Bounded heap over the candidates; heap top is the worst kept entry.
        let mut heap: BinaryHeap<HeapEntry<'_, F>> = BinaryHeap::with_capacity(k + 1);
        for (ordinal, dot) in acc {
            let denom = query_norm * self.doc_norms[ordinal as usize];
            let score = dot / denom;
            if score <= F::zero() {
                continue;
            }
            let entry = HeapEntry {
                score,
                id: &self.ids[ordinal as usize],
                ordinal,
            };
            if heap.len() < k {
                heap.push(entry);
            } else if let Some(worst) = heap.peek() {
                if entry.cmp(worst) == Ordering::Less {
                    heap.pop();
                    heap.push(entry);
                }
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|e| (e.ordinal, e.score))
            .collect()
    }
}

/// Ordered by "worseness": lower score first, then higher id. A max-heap of
/// these keeps its worst element on top; `into_sorted_vec` yields best first.
struct HeapEntry<'a, F> {
    score: F,
    id: &'a str,
    ordinal: u32,
}

impl<F: Scalar> PartialEq for HeapEntry<'_, F> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<F: Scalar> Eq for HeapEntry<'_, F> {}
impl<F: Scalar> PartialOrd for HeapEntry<'_, F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<F: Scalar> Ord for HeapEntry<'_, F> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .expect("scores are finite")
            .then_with(|| self.id.cmp(other.id))
    }
}

fn idf_value<F: Scalar>(n: usize, df: usize) -> F {
    let n = F::from_usize(n).expect("corpus size fits scalar");
    let df = F::from_usize(df).expect("df fits scalar");
    F::one() + (n / df).ln()
}

fn doc_weight<F: Scalar>(tf: u32, idf: F) -> F {
    let tf = F::from_u32(tf).expect("tf fits scalar");
    (F::one() + tf.ln()) * idf
}

/// Build a TF-IDF index over an ingested corpus.
pub fn build_tfidf_index<F: Scalar>(
    corpus: &Corpus,
    options: IndexOptions,
) -> Result<InvertedIndex<F>, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut docs = Vec::with_capacity(corpus.len() as usize);
    for passage in corpus.iter()? {
        let p = passage?;
        let text = if options.index_title {
            format!("{} {}", p.page_title, p.text)
        } else {
            p.text
        };
        docs.push((p.id, text));
    }
    InvertedIndex::from_documents(docs, options)
}

/// Top-k retrieval returning pipeline-level hits.
pub fn retrieve_tfidf<F: Scalar>(
    index: &InvertedIndex<F>,
    query: &str,
    k: usize,
) -> Vec<EvidenceHit> {
    index
        .search(query, k)
        .into_iter()
        .map(|(ordinal, score)| EvidenceHit {
            passage_id: index.passage_ids()[ordinal as usize].clone(),
            score: score.to_f64().expect("score converts to f64"),
            retriever: RetrieverKind::Tfidf,
            query_text: query.to_string(),
            subclaim_index: None,
            round: None,
        })
        .collect()
}

impl<F: Scalar> Retriever for InvertedIndex<F> {
    fn kind(&self) -> RetrieverKind {
        RetrieverKind::Tfidf
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<EvidenceHit>, RetrievalError> {
        Ok(retrieve_tfidf(self, query, k))
    }
}

// --- Persistence (concrete f64 layout) ---

impl InvertedIndex<f64> {
    /// Persist the index as versioned binary files plus a JSON header.
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let header = IndexHeader {
            format_version: FORMAT_VERSION,
            n: self.ids.len() as u64,
            weighting: WEIGHTING.to_string(),
            index_title: self.options.index_title,
        };
        let header_path = dir.join(HEADER_FILE);
        fs::write(
            &header_path,
            serde_json::to_string_pretty(&header).expect("header serializes"),
        )
        .map_err(|e| io_err(&header_path, e))?;

        let postings_path = dir.join(POSTINGS_FILE);
        let mut out =
            BufWriter::new(File::create(&postings_path).map_err(|e| io_err(&postings_path, e))?);
        let mut terms: Vec<&String> = self.vocabulary.keys().collect();
        terms.sort_unstable();
        write_u32(&mut out, terms.len() as u32, &postings_path)?;
        for term in terms {
            let postings = &self.vocabulary[term];
            write_u32(&mut out, term.len() as u32, &postings_path)?;
            out.write_all(term.as_bytes())
                .map_err(|e| io_err(&postings_path, e))?;
            write_u32(&mut out, postings.len() as u32, &postings_path)?;
            for p in postings {
                write_u32(&mut out, p.ordinal, &postings_path)?;
                write_u32(&mut out, p.tf, &postings_path)?;
            }
        }
        out.flush().map_err(|e| io_err(&postings_path, e))?;

        let norms_path = dir.join(NORMS_FILE);
        let mut out =
            BufWriter::new(File::create(&norms_path).map_err(|e| io_err(&norms_path, e))?);
        for norm in &self.doc_norms {
            out.write_all(&norm.to_le_bytes())
                .map_err(|e| io_err(&norms_path, e))?;
        }
        out.flush().map_err(|e| io_err(&norms_path, e))?;

        let ids_path = dir.join(IDS_FILE);
        let mut out = BufWriter::new(File::create(&ids_path).map_err(|e| io_err(&ids_path, e))?);
        for id in &self.ids {
            writeln!(out, "{id}").map_err(|e| io_err(&ids_path, e))?;
        }
        out.flush().map_err(|e| io_err(&ids_path, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let header_path = dir.join(HEADER_FILE);
        let header: IndexHeader = serde_json::from_str(
            &fs::read_to_string(&header_path).map_err(|e| io_err(&header_path, e))?,
        )
        .map_err(|e| bad_format(&header_path, e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad_format(
                &header_path,
                format!("unsupported format_version {}", header.format_version),
            ));
        }
        if header.weighting != WEIGHTING {
            return Err(bad_format(
                &header_path,
                format!("unsupported weighting `{}`", header.weighting),
            ));
        }

        let postings_path = dir.join(POSTINGS_FILE);
        let mut input =
            BufReader::new(File::open(&postings_path).map_err(|e| io_err(&postings_path, e))?);
        let term_count = read_u32(&mut input, &postings_path)?;
        let mut vocabulary = HashMap::with_capacity(term_count as usize);
        for _ in 0..term_count {
            let len = read_u32(&mut input, &postings_path)? as usize;
            let mut buf = vec![0u8; len];
            input
                .read_exact(&mut buf)
                .map_err(|e| io_err(&postings_path, e))?;
            let term = String::from_utf8(buf)
                .map_err(|e| bad_format(&postings_path, e.to_string()))?;
            let df = read_u32(&mut input, &postings_path)?;
            let mut postings = Vec::with_capacity(df as usize);
            for _ in 0..df {
                let ordinal = read_u32(&mut input, &postings_path)?;
                let tf = read_u32(&mut input, &postings_path)?;
                postings.push(Posting { ordinal, tf });
            }
            vocabulary.insert(term, postings);
        }

        let norms_path = dir.join(NORMS_FILE);
        let bytes = fs::read(&norms_path).map_err(|e| io_err(&norms_path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(bad_format(&norms_path, "truncated norms file".into()));
        }
        let doc_norms: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();

        let ids_path = dir.join(IDS_FILE);
        let ids: Vec<String> = fs::read_to_string(&ids_path)
            .map_err(|e| io_err(&ids_path, e))?
            .lines()
            .map(str::to_string)
            .collect();

        if ids.len() as u64 != header.n || doc_norms.len() as u64 != header.n {
            return Err(bad_format(
                &header_path,
                format!(
                    "header N={} disagrees with {} ids / {} norms",
                    header.n,
                    ids.len(),
                    doc_norms.len()
                ),
            ));
        }
        Ok(InvertedIndex {
            vocabulary,
            doc_norms,
            ids,
            options: IndexOptions {
                index_title: header.index_title,
            },
        })
    }
}

fn io_err(path: &Path, e: std::io::Error) -> RetrievalError {
    RetrievalError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn bad_format(path: &Path, message: String) -> RetrievalError {
    RetrievalError::BadFormat {
        path: path.to_path_buf(),
        message,
    }
}

fn write_u32<W: Write>(out: &mut W, v: u32, path: &Path) -> Result<(), RetrievalError> {
    out.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))
}

fn read_u32<R: Read>(input: &mut R, path: &Path) -> Result<u32, RetrievalError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|e| io_err(path, e))?;
    Ok(u32::from_le_bytes(buf))
}
