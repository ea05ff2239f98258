//! Dense retrieval over an embedding store.
//!
//! Embeddings come from an external endpoint (OpenAI-compatible embeddings
//! shape: POST `{"model", "input": [..]}` returning `{"data": [{"embedding"}]}`)
//! or, for offline runs and tests, from a deterministic local hash embedder.
//! Vectors are L2-normalized locally regardless of what the provider returns,
//! stored as a flat little-endian f32 matrix, and scanned exactly (no
//! approximate search): top-k by inner product, ties by ascending passage id.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{tokenize, EvidenceHit, RetrievalError, Retriever, RetrieverKind};
use crate::corpus::Corpus;

const HEADER_FILE: &str = "header.json";
const VECTORS_FILE: &str = "vectors.bin";
const IDS_FILE: &str = "ids.txt";

/// Source of embedding vectors.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier; a store only answers queries embedded by the same
    /// provider.
    fn provider_id(&self) -> &str;

    /// One raw vector per input text, order-preserving.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError>;
}

/// Embed texts through a provider and L2-normalize the results locally.
///
/// Errors if vectors in the batch disagree on dimension or a vector is zero
/// or non-finite (it could not be normalized).
pub fn embed(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f32>>, RetrievalError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let mut vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(RetrievalError::Provider {
            provider: provider.provider_id().to_string(),
            message: format!("expected {} vectors, got {}", texts.len(), vectors.len()),
            retryable: false,
        });
    }
    let dim = vectors[0].len();
    for (i, v) in vectors.iter_mut().enumerate() {
        if v.len() != dim {
            return Err(RetrievalError::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        normalize_in_place(v).map_err(|_| RetrievalError::DegenerateVector(i))?;
    }
    Ok(vectors)
}

fn normalize_in_place(v: &mut [f32]) -> Result<(), ()> {
    let norm_sq: f64 = v.iter().map(|&x| (x as f64) * (x as f64)).sum();
    let norm = norm_sq.sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(());
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    dim: usize,
    provider_id: String,
    count: u64,
}

/// Flat-file store of unit vectors aligned with corpus ordinals.
pub struct EmbeddingStore {
    dir: PathBuf,
    dim: usize,
    provider_id: String,
    count: u64,
    ids: Vec<String>,
    vectors: File,
}

impl EmbeddingStore {
    pub fn open(dir: &Path) -> Result<Self, RetrievalError> {
        let header_path = dir.join(HEADER_FILE);
        let header: StoreHeader = serde_json::from_str(
            &fs::read_to_string(&header_path).map_err(|e| io_err(&header_path, e))?,
        )
        .map_err(|e| RetrievalError::BadFormat {
            path: header_path.clone(),
            message: e.to_string(),
        })?;
        let ids_path = dir.join(IDS_FILE);
        let ids: Vec<String> = fs::read_to_string(&ids_path)
            .map_err(|e| io_err(&ids_path, e))?
            .lines()
            .map(str::to_string)
            .collect();
        let vectors_path = dir.join(VECTORS_FILE);
        let vectors = File::open(&vectors_path).map_err(|e| io_err(&vectors_path, e))?;
        let expected = header.count * header.dim as u64 * 4;
        let actual = vectors
            .metadata()
            .map_err(|e| io_err(&vectors_path, e))?
            .len();
        if actual != expected || ids.len() as u64 != header.count {
            return Err(RetrievalError::BadFormat {
                path: vectors_path,
                message: format!(
                    "store inconsistent: {} bytes for {} x {} vectors, {} ids",
                    actual,
                    header.count,
                    header.dim,
                    ids.len()
                ),
            });
        }
        Ok(EmbeddingStore {
            dir: dir.to_path_buf(),
            dim: header.dim,
            provider_id: header.provider_id,
            count: header.count,
            ids,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn passage_ids(&self) -> &[String] {
        &self.ids
    }

    /// Exact top-k by inner product (cosine, since vectors are unit length),
    /// streaming the matrix file; ties by ascending passage id. Scores are
    /// clamped to [-1, 1] to absorb float noise from normalization.
    pub fn search(&self, query_vec: &[f32], k: usize) -> Result<Vec<(u64, f32)>, RetrievalError> {
        if query_vec.len() != self.dim {
            return Err(RetrievalError::DimMismatch {
                expected: self.dim,
                got: query_vec.len(),
            });
        }
        if k == 0 || self.count == 0 {
            return Ok(Vec::new());
        }
        let vectors_path = self.dir.join(VECTORS_FILE);
        let mut reader =
            std::io::BufReader::with_capacity(1 << 20, &self.vectors);
        use std::io::Seek;
        reader
            .seek(std::io::SeekFrom::Start(0))
            .map_err(|e| io_err(&vectors_path, e))?;

        let mut heap: std::collections::BinaryHeap<DenseEntry<'_>> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        let mut row = vec![0u8; self.dim * 4];
        for ordinal in 0..self.count {
            reader
                .read_exact(&mut row)
                .map_err(|e| io_err(&vectors_path, e))?;
            let mut dot = 0f32;
            for (chunk, q) in row.chunks_exact(4).zip(query_vec) {
                let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                dot += x * q;
            }
            let score = dot.clamp(-1.0, 1.0);
            let entry = DenseEntry {
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
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| (e.ordinal, e.score))
            .collect())
    }
}

/// Same worseness ordering as the sparse path: heap top is the worst kept.
struct DenseEntry<'a> {
    score: f32,
    id: &'a str,
    ordinal: u64,
}

impl PartialEq for DenseEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for DenseEntry<'_> {}
impl PartialOrd for DenseEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for DenseEntry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .expect("scores are finite")
            .then_with(|| self.id.cmp(other.id))
    }
}

/// Embed every corpus passage and persist the store under `out_dir`.
pub fn build_embedding_store(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    out_dir: &Path,
    batch_size: usize,
) -> Result<(), RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let vectors_path = out_dir.join(VECTORS_FILE);
    let ids_path = out_dir.join(IDS_FILE);
    let mut vectors_out =
        BufWriter::new(File::create(&vectors_path).map_err(|e| io_err(&vectors_path, e))?);
    let mut ids_out = BufWriter::new(File::create(&ids_path).map_err(|e| io_err(&ids_path, e))?);

    let batch_size = batch_size.max(1);
    let mut dim: Option<usize> = None;
    let mut count: u64 = 0;
    let mut batch_ids: Vec<String> = Vec::with_capacity(batch_size);
    let mut batch_texts: Vec<String> = Vec::with_capacity(batch_size);

    let flush_batch = |ids: &mut Vec<String>,
                           texts: &mut Vec<String>,
                           dim: &mut Option<usize>,
                           count: &mut u64,
                           vectors_out: &mut BufWriter<File>,
                           ids_out: &mut BufWriter<File>|
     -> Result<(), RetrievalError> {
        if texts.is_empty() {
            return Ok(());
        }
        let vectors = embed(texts, provider)?;
        for (id, v) in ids.iter().zip(&vectors) {
            match dim {
                None => *dim = Some(v.len()),
                Some(d) if *d != v.len() => {
                    return Err(RetrievalError::DimMismatch {
                        expected: *d,
                        got: v.len(),
                    })
                }
                _ => {}
            }
            for x in v {
                vectors_out
                    .write_all(&x.to_le_bytes())
                    .map_err(|e| io_err(&vectors_path, e))?;
            }
            writeln!(ids_out, "{id}").map_err(|e| io_err(&ids_path, e))?;
            *count += 1;
        }
        ids.clear();
        texts.clear();
        Ok(())
    };

    for passage in corpus.iter()? {
        let p = passage?;
        batch_ids.push(p.id);
        batch_texts.push(p.text);
        if batch_texts.len() == batch_size {
            flush_batch(
                &mut batch_ids,
                &mut batch_texts,
                &mut dim,
                &mut count,
                &mut vectors_out,
                &mut ids_out,
            )?;
        }
    }
    flush_batch(
        &mut batch_ids,
        &mut batch_texts,
        &mut dim,
        &mut count,
        &mut vectors_out,
        &mut ids_out,
    )?;
    vectors_out.flush().map_err(|e| io_err(&vectors_path, e))?;
    ids_out.flush().map_err(|e| io_err(&ids_path, e))?;

    let header = StoreHeader {
        dim: dim.expect("non-empty corpus produced vectors"),
        provider_id: provider.provider_id().to_string(),
        count,
    };
    let header_path = out_dir.join(HEADER_FILE);
    fs::write(
        &header_path,
        serde_json::to_string_pretty(&header).expect("header serializes"),
    )
    .map_err(|e| io_err(&header_path, e))?;
    Ok(())
}

/// Top-k dense retrieval for a text query.
pub fn retrieve_dense(
    store: &EmbeddingStore,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EvidenceHit>, RetrievalError> {
    if provider.provider_id() != store.provider_id() {
        return Err(RetrievalError::ProviderMismatch {
            store: store.provider_id().to_string(),
            query: provider.provider_id().to_string(),
        });
    }
    let query_vec = embed(&[query.to_string()], provider)?
        .pop()
        .expect("one vector for one text");
    let results = store.search(&query_vec, k)?;
    Ok(results
        .into_iter()
        .map(|(ordinal, score)| EvidenceHit {
            passage_id: store.passage_ids()[ordinal as usize].clone(),
            score: score as f64,
            retriever: RetrieverKind::Dense,
            query_text: query.to_string(),
            subclaim_index: None,
            round: None,
        })
        .collect())
}

/// [`Retriever`] adapter owning a store and its query-side provider.
pub struct DenseRetriever {
    store: EmbeddingStore,
    provider: Box<dyn EmbeddingProvider>,
}

impl DenseRetriever {
    pub fn new(store: EmbeddingStore, provider: Box<dyn EmbeddingProvider>) -> Self {
        DenseRetriever { store, provider }
    }
}

impl Retriever for DenseRetriever {
    fn kind(&self) -> RetrieverKind {
        RetrieverKind::Dense
    }

    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<EvidenceHit>, RetrievalError> {
        retrieve_dense(&self.store, query, k, self.provider.as_ref())
    }
}

/// Deterministic local embedder: a bag-of-words vector over hashed token
/// buckets. Not a semantic model; it exists so dense retrieval can run and be
/// tested without network access.
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder {
            dim,
            id: format!("hash-{dim}"),
        }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut counts: BTreeMap<usize, f32> = BTreeMap::new();
                for token in tokenize(text) {
                    let bucket = (fnv1a(token.as_bytes()) % self.dim as u64) as usize;
                    *counts.entry(bucket).or_insert(0.0) += 1.0;
                }
                let mut v = vec![0f32; self.dim];
                for (bucket, c) in counts {
                    v[bucket] = c;
                }
                if v.iter().all(|&x| x == 0.0) {
                    // Empty text still needs a valid unit vector.
                    v[0] = 1.0;
                }
                v
            })
            .collect())
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// OpenAI-compatible embeddings endpoint client.
pub struct HttpEmbeddingProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
}

impl HttpEmbeddingProvider {
    /// `base_url` may or may not end in `/v1`; the path is normalized to
    /// `<base>/v1/embeddings`.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        let base = base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        HttpEmbeddingProvider {
            client: reqwest::blocking::Client::new(),
            url: format!("{base}/v1/embeddings"),
            model: model.to_string(),
            api_key,
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> &str {
        &self.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
        let mut req = self.client.post(&self.url).json(&EmbeddingsRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| RetrievalError::Provider {
            provider: self.model.clone(),
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let body = resp.text().unwrap_or_default();
            return Err(RetrievalError::Provider {
                provider: self.model.clone(),
                message: format!("HTTP {status}: {}", excerpt(&body)),
                retryable,
            });
        }
        let parsed: EmbeddingsResponse =
            resp.json().map_err(|e| RetrievalError::Provider {
                provider: self.model.clone(),
                message: format!("bad response body: {e}"),
                retryable: false,
            })?;
        Ok(parsed.data.into_iter().map(|r| r.embedding).collect())
    }
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 200;
    if body.len() <= MAX {
        body.to_string()
    } else {
        let mut end = MAX;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}

fn io_err(path: &Path, e: std::io::Error) -> RetrievalError {
    RetrievalError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ingest_pages;
    use tempfile::TempDir;

    /// Test provider with vectors scripted per text.
    struct Scripted {
        map: BTreeMap<String, Vec<f32>>,
    }

    impl EmbeddingProvider for Scripted {
        fn provider_id(&self) -> &str {
            "scripted"
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrievalError> {
            Ok(texts
                .iter()
                .map(|t| self.map.get(t).cloned().unwrap_or_else(|| vec![1.0, 0.0]))
                .collect())
        }
    }

    #[test]
    fn embed_empty_is_empty() {
        let p = HashEmbedder::new(8);
        assert!(embed(&[], &p).unwrap().is_empty());
    }

    #[test]
    fn embed_normalizes_to_unit_length() {
        let p = HashEmbedder::new(16);
        let texts: Vec<String> = ["alpha beta", "gamma gamma gamma", "one two three four"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let vs = embed(&texts, &p).unwrap();
        assert_eq!(vs.len(), 3);
        for v in vs {
            let norm: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn embed_rejects_mixed_dimensions() {
        let mut map = BTreeMap::new();
        map.insert("a".to_string(), vec![1.0, 0.0]);
        map.insert("b".to_string(), vec![1.0, 0.0, 0.0]);
        let p = Scripted { map };
        let err = embed(&["a".to_string(), "b".to_string()], &p).unwrap_err();
        assert!(matches!(err, RetrievalError::DimMismatch { .. }));
    }

    #[test]
    fn embed_rejects_zero_vector() {
        let mut map = BTreeMap::new();
        map.insert("z".to_string(), vec![0.0, 0.0]);
        let p = Scripted { map };
        assert!(matches!(
            embed(&["z".to_string()], &p).unwrap_err(),
            RetrievalError::DegenerateVector(0)
        ));
    }

    fn small_corpus(dir: &Path) -> Corpus {
        let pages: Vec<(String, String)> = (0..10)
            .map(|i| (format!("Page {i}"), format!("token{i} shared word{i}")))
            .collect();
        ingest_pages(&pages, dir, 100).unwrap();
        Corpus::open(dir).unwrap()
    }

    #[test]
    fn self_query_scores_one_and_ranks_first() {
        let dir = TempDir::new().unwrap();
        let corpus = small_corpus(dir.path());
        let provider = HashEmbedder::new(32);
        let store_dir = dir.path().join("store");
        build_embedding_store(&corpus, &provider, &store_dir, 4).unwrap();
        let store = EmbeddingStore::open(&store_dir).unwrap();
        assert_eq!(store.count(), 10);

        let hits = retrieve_dense(&store, "token3 shared word3", 3, &provider).unwrap();
        assert_eq!(hits[0].passage_id, "Page_3#0");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        for h in &hits {
            assert!((-1.0..=1.0).contains(&h.score));
        }
    }

    #[test]
    fn orthogonal_vectors_score_zero() {
        let store_dir = TempDir::new().unwrap();
        // Hand-written store: two one-hot unit vectors.
        fs::create_dir_all(store_dir.path()).unwrap();
        let mut bytes = Vec::new();
        for v in [[1.0f32, 0.0], [0.0, 1.0]] {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(store_dir.path().join(VECTORS_FILE), bytes).unwrap();
        fs::write(store_dir.path().join(IDS_FILE), "a#0\nb#0\n").unwrap();
        fs::write(
            store_dir.path().join(HEADER_FILE),
            serde_json::to_string(&StoreHeader {
                dim: 2,
                provider_id: "scripted".into(),
                count: 2,
            })
            .unwrap(),
        )
        .unwrap();
        let store = EmbeddingStore::open(store_dir.path()).unwrap();
        let results = store.search(&[1.0, 0.0], 2).unwrap();
        assert_eq!(results[0], (0, 1.0));
        assert_eq!(results[1].1, 0.0);
    }

    #[test]
    fn topk_matches_full_scan_oracle_on_50_passages() {
        let dir = TempDir::new().unwrap();
        let pages: Vec<(String, String)> = (0..50)
            .map(|i| {
                (
                    format!("P{i}"),
                    format!("alpha{} beta{} gamma{}", i % 7, i % 11, i % 13),
                )
            })
            .collect();
        ingest_pages(&pages, dir.path(), 100).unwrap();
        let corpus = Corpus::open(dir.path()).unwrap();
        let provider = HashEmbedder::new(24);
        let store_dir = dir.path().join("store");
        build_embedding_store(&corpus, &provider, &store_dir, 7).unwrap();
        let store = EmbeddingStore::open(&store_dir).unwrap();

        let query = "alpha2 beta3 gamma5";
        let qv = embed(&[query.to_string()], &provider).unwrap().pop().unwrap();

        // Naive oracle: score every vector, sort by (score desc, id asc).
        let bytes = fs::read(store_dir.join(VECTORS_FILE)).unwrap();
        let dim = store.dim();
        let mut scored: Vec<(String, f32)> = bytes
            .chunks_exact(dim * 4)
            .enumerate()
            .map(|(ord, row)| {
                let dot: f32 = row
                    .chunks_exact(4)
                    .zip(&qv)
                    .map(|(c, q)| f32::from_le_bytes(c.try_into().unwrap()) * q)
                    .sum();
                (store.passage_ids()[ord].clone(), dot.clamp(-1.0, 1.0))
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });

        let hits = retrieve_dense(&store, query, 10, &provider).unwrap();
        assert_eq!(hits.len(), 10);
        for (hit, (oid, oscore)) in hits.iter().zip(&scored) {
            assert_eq!(&hit.passage_id, oid);
            assert!((hit.score - *oscore as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn provider_mismatch_is_rejected() {
        let dir = TempDir::new().unwrap();
        let corpus = small_corpus(dir.path());
        let store_dir = dir.path().join("store");
        build_embedding_store(&corpus, &HashEmbedder::new(8), &store_dir, 4).unwrap();
        let store = EmbeddingStore::open(&store_dir).unwrap();
        let other = HashEmbedder::new(16);
        assert!(matches!(
            retrieve_dense(&store, "q", 3, &other).unwrap_err(),
            RetrievalError::ProviderMismatch { .. }
        ));
    }
}
