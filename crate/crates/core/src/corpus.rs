//! Passage corpus: ingestion of page dumps into fixed-size word windows and
//! an id-addressable read-only store.
//!
//! A corpus directory holds four files:
//!
//! - `records.jsonl` — one [`Passage`] per line, in ingestion order.
//! - `offsets.bin` — little-endian u64 byte offset of each record line.
//! - `pages.jsonl` — per-page slug, title, first passage ordinal and count.
//! - `manifest.json` — ingestion counters (see [`CorpusManifest`]).
//!
//! Ingestion is single-writer; an ingested corpus is immutable and any number
//! of threads may read from it concurrently ([`Corpus::get_passage`] uses
//! positioned reads, never a shared cursor).

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
const RECORDS_FILE: &str = "records.jsonl";
const OFFSETS_FILE: &str = "offsets.bin";
const PAGES_FILE: &str = "pages.jsonl";

/// Default window size, in whitespace-delimited words.
pub const DEFAULT_WORDS_PER_PASSAGE: usize = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate page title `{0}`")]
    DuplicateTitle(String),
    #[error("words_per_passage must be >= 1")]
    InvalidWindow,
    #[error("malformed record on line {line} of {path}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("passage `{0}` not found")]
    NotFound(String),
    #[error("corpus directory {0} is missing file {1}")]
    MissingFile(PathBuf, &'static str),
    #[error("corpus is empty")]
    Empty,
}

impl CorpusError {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}

/// One retrieval unit: a window of roughly `words_per_passage` words cut from
/// a page. Only the final passage of a page may be shorter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    /// Stable id, `<url-safe page slug>#<seq>`.
    pub id: String,
    pub page_title: String,
    /// 0-based position of the window within its page.
    pub seq: u32,
    pub text: String,
}

/// One page of the input dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageRecord {
    pub title: String,
    pub text: String,
}

/// Ingestion counters, persisted as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub passages: u64,
    pub pages: u64,
    /// Pages whose body contained no words.
    pub skipped: u64,
    pub words_per_passage: usize,
    pub created_at: String,
    #[serde(skip)]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PageEntry {
    slug: String,
    title: String,
    first_ordinal: u64,
    passages: u32,
}

/// URL-safe, injective encoding of a page title.
///
/// ASCII alphanumerics and `-`, `.`, `~` pass through, a space becomes `_`,
/// and every other byte (including a literal `_`, `%` and `#`) is
/// percent-encoded. Distinct titles therefore always get distinct slugs, and
/// `#` can serve as the id separator.
pub fn slugify(title: &str) -> String {
    let mut out = String::with_capacity(title.len());
    let mut buf = [0u8; 4];
    for c in title.chars() {
        if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '~') {
            out.push(c);
        } else if c == ' ' {
            out.push('_');
        } else {
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    out
}

/// Deterministic passage id for `(page_title, seq)`.
pub fn passage_id(page_title: &str, seq: u32) -> String {
    format!("{}#{seq}", slugify(page_title))
}

fn split_passage_id(id: &str) -> Option<(&str, u32)> {
    let (slug, seq) = id.rsplit_once('#')?;
    Some((slug, seq.parse().ok()?))
}

/// Greedy split of a page body into consecutive windows of
/// `words_per_passage` whitespace-delimited words. Words are never broken;
/// only the last window may be short. An empty body yields no windows.
pub fn chunk_words(body: &str, words_per_passage: usize) -> Vec<String> {
    let words: Vec<&str> = body.split_whitespace().collect();
    words
        .chunks(words_per_passage)
        .map(|w| w.join(" "))
        .collect()
}

/// Ingest a stream of pages into `out_dir`.
///
/// Every page is split into word windows (see [`chunk_words`]) and the
/// passages are persisted in input order. Pages with an empty body are
/// skipped and counted; a duplicate title is a hard error.
pub fn ingest_dump<I>(
    pages: I,
    out_dir: &Path,
    words_per_passage: usize,
) -> Result<CorpusManifest, CorpusError>
where
    I: IntoIterator<Item = Result<PageRecord, CorpusError>>,
{
    if words_per_passage == 0 {
        return Err(CorpusError::InvalidWindow);
    }
    fs::create_dir_all(out_dir).map_err(|e| CorpusError::io(out_dir, e))?;

    let records_path = out_dir.join(RECORDS_FILE);
    let offsets_path = out_dir.join(OFFSETS_FILE);
    let pages_path = out_dir.join(PAGES_FILE);
    let mut records = BufWriter::new(
        File::create(&records_path).map_err(|e| CorpusError::io(&records_path, e))?,
    );
    let mut offsets = BufWriter::new(
        File::create(&offsets_path).map_err(|e| CorpusError::io(&offsets_path, e))?,
    );
    let mut page_index = BufWriter::new(
        File::create(&pages_path).map_err(|e| CorpusError::io(&pages_path, e))?,
    );

    let mut seen_titles: HashMap<String, ()> = HashMap::new();
    let mut offset: u64 = 0;
    let mut n_passages: u64 = 0;
    let mut n_pages: u64 = 0;
    let mut n_skipped: u64 = 0;

    for page in pages {
        let page = page?;
        if seen_titles.insert(page.title.clone(), ()).is_some() {
            return Err(CorpusError::DuplicateTitle(page.title));
        }
        let chunks = chunk_words(&page.text, words_per_passage);
        if chunks.is_empty() {
            n_skipped += 1;
            continue;
        }
        let slug = slugify(&page.title);
        let entry = PageEntry {
            slug: slug.clone(),
            title: page.title.clone(),
            first_ordinal: n_passages,
            passages: chunks.len() as u32,
        };
        let mut line = serde_json::to_string(&entry).expect("page entry serializes");
        line.push('\n');
        page_index
            .write_all(line.as_bytes())
            .map_err(|e| CorpusError::io(&pages_path, e))?;

        for (seq, text) in chunks.into_iter().enumerate() {
            let passage = Passage {
                id: format!("{slug}#{seq}"),
                page_title: page.title.clone(),
                seq: seq as u32,
                text,
            };
            offsets
                .write_all(&offset.to_le_bytes())
                .map_err(|e| CorpusError::io(&offsets_path, e))?;
            let mut line = serde_json::to_string(&passage).expect("passage serializes");
            line.push('\n');
            offset += line.len() as u64;
            records
                .write_all(line.as_bytes())
                .map_err(|e| CorpusError::io(&records_path, e))?;
            n_passages += 1;
        }
        n_pages += 1;
    }

    records.flush().map_err(|e| CorpusError::io(&records_path, e))?;
    offsets.flush().map_err(|e| CorpusError::io(&offsets_path, e))?;
    page_index.flush().map_err(|e| CorpusError::io(&pages_path, e))?;

    let manifest = CorpusManifest {
        passages: n_passages,
        pages: n_pages,
        skipped: n_skipped,
        words_per_passage,
        created_at: chrono::Utc::now().to_rfc3339(),
        dir: out_dir.to_path_buf(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| CorpusError::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Ingest pages from a JSONL file of `{"title": ..., "text": ...}` objects.
pub fn ingest_dump_file(
    pages_path: &Path,
    out_dir: &Path,
    words_per_passage: usize,
) -> Result<CorpusManifest, CorpusError> {
    let file = File::open(pages_path).map_err(|e| CorpusError::io(pages_path, e))?;
    let reader = BufReader::new(file);
    let pages_path = pages_path.to_path_buf();
    let pages = reader.lines().enumerate().filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(CorpusError::io(&pages_path, e))),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<PageRecord>(&line).map_err(|e| CorpusError::Malformed {
                path: pages_path.clone(),
                line: i + 1,
                message: e.to_string(),
            }),
        )
    });
    ingest_dump(pages, out_dir, words_per_passage)
}

/// Read-only view of an ingested corpus.
///
/// Lookup by id is O(1): the id names a page slug and window index, the page
/// table maps the slug to a base ordinal, and two positioned reads fetch the
/// record bytes.
pub struct Corpus {
    dir: PathBuf,
    manifest: CorpusManifest,
    pages: HashMap<String, PageEntry>,
    records: File,
    offsets: File,
    records_len: u64,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(CorpusError::MissingFile(dir.to_path_buf(), MANIFEST_FILE));
        }
        let manifest_text =
            fs::read_to_string(&manifest_path).map_err(|e| CorpusError::io(&manifest_path, e))?;
        let mut manifest: CorpusManifest =
            serde_json::from_str(&manifest_text).map_err(|e| CorpusError::Malformed {
                path: manifest_path.clone(),
                line: 1,
                message: e.to_string(),
            })?;
        manifest.dir = dir.to_path_buf();

        let pages_path = dir.join(PAGES_FILE);
        let mut pages = HashMap::new();
        let reader = BufReader::new(
            File::open(&pages_path).map_err(|e| CorpusError::io(&pages_path, e))?,
        );
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CorpusError::io(&pages_path, e))?;
            let entry: PageEntry =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    path: pages_path.clone(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            pages.insert(entry.slug.clone(), entry);
        }

        let records_path = dir.join(RECORDS_FILE);
        let records = File::open(&records_path).map_err(|e| CorpusError::io(&records_path, e))?;
        let records_len = records
            .metadata()
            .map_err(|e| CorpusError::io(&records_path, e))?
            .len();
        let offsets_path = dir.join(OFFSETS_FILE);
        let offsets = File::open(&offsets_path).map_err(|e| CorpusError::io(&offsets_path, e))?;

        Ok(Corpus {
            dir: dir.to_path_buf(),
            manifest,
            pages,
            records,
            offsets,
            records_len,
        })
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Number of passages.
    pub fn len(&self) -> u64 {
        self.manifest.passages
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.passages == 0
    }

    fn offset_of(&self, ordinal: u64) -> Result<u64, CorpusError> {
        let mut buf = [0u8; 8];
        self.offsets
            .read_exact_at(&mut buf, ordinal * 8)
            .map_err(|e| CorpusError::io(self.dir.join(OFFSETS_FILE), e))?;
        Ok(u64::from_le_bytes(buf))
    }

    /// Fetch a passage by ordinal (ingestion position).
    pub fn passage_by_ordinal(&self, ordinal: u64) -> Result<Passage, CorpusError> {
        if ordinal >= self.manifest.passages {
            return Err(CorpusError::NotFound(format!("ordinal {ordinal}")));
        }
        let start = self.offset_of(ordinal)?;
        let end = if ordinal + 1 < self.manifest.passages {
            self.offset_of(ordinal + 1)?
        } else {
            self.records_len
        };
        let mut buf = vec![0u8; (end - start) as usize];
        self.records
            .read_exact_at(&mut buf, start)
            .map_err(|e| CorpusError::io(self.dir.join(RECORDS_FILE), e))?;
        serde_json::from_slice(&buf).map_err(|e| CorpusError::Malformed {
            path: self.dir.join(RECORDS_FILE),
            line: ordinal as usize + 1,
            message: e.to_string(),
        })
    }

    /// Fetch a passage by id; the text round-trips byte-identically.
    pub fn get_passage(&self, id: &str) -> Result<Passage, CorpusError> {
        let (slug, seq) =
            split_passage_id(id).ok_or_else(|| CorpusError::NotFound(id.to_string()))?;
        let entry = self
            .pages
            .get(slug)
            .ok_or_else(|| CorpusError::NotFound(id.to_string()))?;
        if seq >= entry.passages {
            return Err(CorpusError::NotFound(id.to_string()));
        }
        self.passage_by_ordinal(entry.first_ordinal + seq as u64)
    }

    /// Stream all passages in ordinal order.
    pub fn iter(&self) -> Result<impl Iterator<Item = Result<Passage, CorpusError>>, CorpusError> {
        let path = self.dir.join(RECORDS_FILE);
        let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
        let reader = BufReader::new(file);
        Ok(reader.lines().enumerate().map(move |(i, line)| {
            let line = line.map_err(|e| CorpusError::io(RECORDS_FILE, e))?;
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: PathBuf::from(RECORDS_FILE),
                line: i + 1,
                message: e.to_string(),
            })
        }))
    }
}

/// Convenience wrapper for tests and small fixtures: ingest in-memory pages.
pub fn ingest_pages(
    pages: &[(String, String)],
    out_dir: &Path,
    words_per_passage: usize,
) -> Result<CorpusManifest, CorpusError> {
    ingest_dump(
        pages.iter().map(|(title, text)| {
            Ok(PageRecord {
                title: title.clone(),
                text: text.clone(),
            })
        }),
        out_dir,
        words_per_passage,
    )
}
