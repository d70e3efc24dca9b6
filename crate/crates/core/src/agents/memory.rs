//! Short-term context ring and long-term experience store.
//!
//! Long-term records are appended to an optional JSON-lines file and
//! flushed to disk before `append` returns. Retrieval ranks successful
//! procedural records by bag-of-words cosine similarity.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::FewShot;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("persistence failure on {path}: {source}")]
    Persistence {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt memory file {path} line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryKind {
    /// How a task was solved: plans and decompositions.
    Procedural,
    /// Facts gathered while solving: execution digests.
    Declarative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    /// Free text the bag-of-words signature is computed from.
    pub signature: String,
    pub plan: String,
    pub outcome: RecordOutcome,
    /// Logical clock value; larger is newer.
    pub timestamp: u64,
    pub kind: MemoryKind,
    #[serde(default)]
    pub role: Option<String>,
}

/// Lowercased term counts over runs of ASCII alphanumerics.
pub fn bag_of_words(text: &str) -> BTreeMap<String, u32> {
    let mut bag = BTreeMap::new();
    for word in text
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        *bag.entry(word.to_ascii_lowercase()).or_insert(0) += 1;
    }
    bag
}

pub fn cosine(a: &BTreeMap<String, u32>, b: &BTreeMap<String, u32>) -> f64 {
    // Folding from 0.0: an empty f64 sum is -0.0, which total_cmp ranks
    // below the 0.0 of an empty signature and breaks recency tie-breaks.
    let dot: f64 = a
        .iter()
        .filter_map(|(w, &x)| b.get(w).map(|&y| x as f64 * y as f64))
        .fold(0.0, |acc, v| acc + v);
    let norm = |m: &BTreeMap<String, u32>| m.values().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Bounded ring of recent context lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortTermMemory {
    capacity: usize,
    items: VecDeque<String>,
}

impl ShortTermMemory {
    pub const DEFAULT_CAPACITY: usize = 8;

    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, item: impl Into<String>) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item.into());
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    /// Oldest first, one item per line.
    pub fn render(&self) -> String {
        self.items.iter().cloned().collect::<Vec<_>>().join("\n")
    }
}

impl Default for ShortTermMemory {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAPACITY)
    }
}

/// Append-only record list, optionally mirrored to a JSON-lines file.
/// Records from JSON-lines text, skipping blank lines. Errors carry the
/// 1-based line number.
pub fn parse_jsonl(text: &str) -> Result<Vec<ExperienceRecord>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

#[derive(Debug, Default)]
pub struct LongTermStore {
    records: Vec<ExperienceRecord>,
    file: Option<(PathBuf, File)>,
}

impl PartialEq for LongTermStore {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl LongTermStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads existing records from `path` (if present) and appends to it
    /// from then on.
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        let persistence = |source| MemoryError::Persistence {
            path: path.to_path_buf(),
            source,
        };
        let records = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(persistence)?;
            parse_jsonl(&text).map_err(|(line, reason)| MemoryError::Corrupt {
                path: path.to_path_buf(),
                line,
                reason,
            })?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(persistence)?;
        Ok(Self {
            records,
            file: Some((path.to_path_buf(), file)),
        })
    }

    pub fn records(&self) -> &[ExperienceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, record: ExperienceRecord) -> Result<(), MemoryError> {
        if let Some((path, file)) = &mut self.file {
            let mut line = serde_json::to_string(&record).expect("serializable");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|source| MemoryError::Persistence {
                    path: path.clone(),
                    source,
                })?;
        }
        self.records.push(record);
        Ok(())
    }

    /// Top-`k` successful procedural records by cosine similarity to
    /// `signature`, ties broken newest first.
    pub fn retrieve(&self, signature: &str, k: usize) -> Vec<FewShot> {
        if k == 0 {
            return Vec::new();
        }
        let query = bag_of_words(signature);
        let mut scored: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.outcome == RecordOutcome::Success && r.kind == MemoryKind::Procedural)
            .map(|(i, r)| (cosine(&query, &bag_of_words(&r.signature)), i))
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(self.records[b.1].timestamp.cmp(&self.records[a.1].timestamp))
                .then(b.1.cmp(&a.1))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(similarity, i)| FewShot {
                record: self.records[i].clone(),
                similarity,
            })
            .collect()
    }
}

/// Experience stores for one run: one per role (or one shared by all
/// sub-agents) plus the global agent's.
#[derive(Debug)]
pub struct MemoryStore {
    per_role: bool,
    stores: BTreeMap<String, LongTermStore>,
    clock: u64,
}

pub const GLOBAL_SCOPE: &str = "global";
const SHARED_SCOPE: &str = "shared";

impl MemoryStore {
    pub fn new(per_role: bool) -> Self {
        Self {
            per_role,
            stores: BTreeMap::new(),
            clock: 0,
        }
    }

    /// Store name for a role, or the global agent's when `role` is `None`.
    pub fn scope(&self, role: Option<&str>) -> String {
        match role {
            None => GLOBAL_SCOPE.to_string(),
            Some(_) if !self.per_role => SHARED_SCOPE.to_string(),
            Some(r) => r.to_string(),
        }
    }

    pub fn retrieve(&self, role: Option<&str>, signature: &str, k: usize) -> Vec<FewShot> {
        self.stores
            .get(&self.scope(role))
            .map(|s| s.retrieve(signature, k))
            .unwrap_or_default()
    }

    /// Stamps the record with the next logical time and appends it.
    pub fn store(&mut self, mut record: ExperienceRecord) -> Result<(), MemoryError> {
        self.clock += 1;
        record.timestamp = self.clock;
        let scope = self.scope(record.role.as_deref());
        self.stores.entry(scope).or_default().append(record)
    }

    pub fn scope_store(&self, scope: &str) -> Option<&LongTermStore> {
        self.stores.get(scope)
    }

    pub fn len(&self) -> usize {
        self.stores.values().map(LongTermStore::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_bags_score_positive_zero() {
        let c = cosine(&bag_of_words("fire"), &bag_of_words("flood"));
        assert!(c == 0.0 && c.is_sign_positive());
    }

    fn rec(sig: &str, ts: u64) -> ExperienceRecord {
        ExperienceRecord {
            signature: sig.into(),
            plan: format!("plan for {sig}"),
            outcome: RecordOutcome::Success,
            timestamp: ts,
            kind: MemoryKind::Procedural,
            role: None,
        }
    }

    #[test]
    fn bag_and_cosine() {
        let a = bag_of_words("Fire at cell_17, fire!");
        assert_eq!(a.get("fire"), Some(&2));
        assert_eq!(a.get("cell"), Some(&1));
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&a, &bag_of_words("")), 0.0);
    }

    #[test]
    fn ring_is_bounded() {
        let mut st = ShortTermMemory::new(2);
        for i in 0..5 {
            st.push(format!("m{i}"));
        }
        assert_eq!(st.render(), "m3\nm4");
    }

    #[test]
    fn retrieval_order_and_filters() {
        let mut s = LongTermStore::in_memory();
        assert!(s.retrieve("fire", 3).is_empty());
        s.append(rec("fire smoke", 1)).unwrap();
        s.append(rec("flood water", 2)).unwrap();
        s.append(rec("fire smoke", 3)).unwrap();
        let mut failed = rec("fire smoke", 4);
        failed.outcome = RecordOutcome::Failure;
        s.append(failed).unwrap();
        let got = s.retrieve("fire smoke", 2);
        assert_eq!(got.iter().map(|f| f.record.timestamp).collect::<Vec<_>>(), vec![3, 1]);
        assert!((got[0].similarity - 1.0).abs() < 1e-12);
        assert!(s.retrieve("fire", 0).is_empty());
    }

    #[test]
    fn persisted_lines_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.jsonl");
        let mut s = LongTermStore::open(&path).unwrap();
        s.append(rec("a", 1)).unwrap();
        s.append(rec("b", 2)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().next().unwrap().contains("\"a\""));
        assert_eq!(LongTermStore::open(&path).unwrap(), s);
    }

    #[test]
    fn scopes() {
        let mut m = MemoryStore::new(true);
        let mut r = rec("map route", 0);
        r.role = Some("Map-Agent".into());
        m.store(r).unwrap();
        assert_eq!(m.retrieve(Some("Map-Agent"), "map route", 3).len(), 1);
        assert!(m.retrieve(Some("Video-Agent"), "map route", 3).is_empty());
        assert!(m.retrieve(None, "map route", 3).is_empty());
        let shared = MemoryStore::new(false);
        assert_eq!(shared.scope(Some("Map-Agent")), shared.scope(Some("Video-Agent")));
    }
}
