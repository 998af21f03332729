//! Cosine-similarity retrieval over received summaries.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::{SubmapId, SubmapSummary};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetrievalHit {
    pub id: SubmapId,
    pub similarity: f64,
}

/// Up to `k` catalog entries with similarity at least `tau_sim`, best first.
///
/// Same-agent entries within one submap index of the query are skipped, as is
/// the query itself. Ties resolve by ascending id.
pub fn retrieve<'a>(
    query: &SubmapSummary,
    catalog: impl IntoIterator<Item = &'a SubmapSummary>,
    k: usize,
    tau_sim: f64,
) -> Vec<RetrievalHit> {
    let mut hits: Vec<RetrievalHit> = catalog
        .into_iter()
        .filter(|c| {
            !(c.id.agent == query.id.agent && c.id.index.abs_diff(query.id.index) <= 1)
        })
        .map(|c| RetrievalHit {
            id: c.id,
            similarity: query.cosine_similarity(c),
        })
        .filter(|h| h.similarity >= tau_sim)
        .collect();
    hits.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.id.cmp(&b.id))
    });
    hits.truncate(k);
    hits
}

/// Shared store of immutable summaries; concurrent reads, serialized inserts.
#[derive(Debug, Default)]
pub struct Catalog {
    inner: RwLock<BTreeMap<SubmapId, Arc<SubmapSummary>>>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces; returns the previous entry.
    pub fn insert(&self, summary: SubmapSummary) -> Option<Arc<SubmapSummary>> {
        self.inner
            .write()
            .expect("catalog lock poisoned")
            .insert(summary.id, Arc::new(summary))
    }

    pub fn get(&self, id: SubmapId) -> Option<Arc<SubmapSummary>> {
        self.inner.read().expect("catalog lock poisoned").get(&id).cloned()
    }

    pub fn contains(&self, id: SubmapId) -> bool {
        self.inner.read().expect("catalog lock poisoned").contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("catalog lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all entries in id order.
    pub fn snapshot(&self) -> Vec<Arc<SubmapSummary>> {
        self.inner
            .read()
            .expect("catalog lock poisoned")
            .values()
            .cloned()
            .collect()
    }

    /// [`retrieve`] restricted to entries accepted by `keep`.
    pub fn retrieve_filtered(
        &self,
        query: &SubmapSummary,
        k: usize,
        tau_sim: f64,
        keep: impl Fn(SubmapId) -> bool,
    ) -> Vec<RetrievalHit> {
        let guard = self.inner.read().expect("catalog lock poisoned");
        retrieve(
            query,
            guard.values().filter(|s| keep(s.id)).map(|s| s.as_ref()),
            k,
            tau_sim,
        )
    }
}
