//! Opt-in approximate retrieval over a hierarchical navigable small-world
//! graph. Exact [`top_k`](crate::index::top_k) stays the reference; this trades
//! a little recall for visiting far fewer rows on large corpora.
//!
//! Defaults when a parameter is left unset:
//!
//! | parameter         | default | meaning                                        |
//! |-------------------|---------|------------------------------------------------|
//! | `m`               | 16      | links per node on upper layers (2m on layer 0) |
//! | `ef_construction` | 128     | candidate list size while inserting            |
//! | `ef_search`       | 256     | candidate list size while searching (>= k)     |
//! | `seed`            | 0       | seeds the layer assignment                     |

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{clamp_unit, dot, Embedding};
use crate::error::{Error, Result};
use crate::index::{best_k, hits_from, SearchHit};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnnParams {
    pub m: Option<usize>,
    pub ef_construction: Option<usize>,
    pub ef_search: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    score: f32,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    /// Higher score is greater; among equals the smaller node is greater.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    dim: usize,
    m: usize,
    ef_search: usize,
    entry: u32,
    top_layer: usize,
    /// `links[node][layer]`
    links: Vec<Vec<Vec<u32>>>,
}

struct Builder<'a> {
    store: &'a EmbeddingStore,
    m: usize,
    ef_construction: usize,
    links: Vec<Vec<Vec<u32>>>,
}

fn sim(store: &EmbeddingStore, a: usize, q: &[f32]) -> f32 {
    dot(store.row(a), q) as f32
}

fn search_layer(
    store: &EmbeddingStore,
    links: &[Vec<Vec<u32>>],
    q: &[f32],
    entries: &[Cand],
    ef: usize,
    layer: usize,
) -> Vec<Cand> {
    let mut visited: HashSet<u32> = entries.iter().map(|c| c.node).collect();
    let mut frontier: BinaryHeap<Cand> = entries.iter().copied().collect();
    let mut best: BinaryHeap<Reverse<Cand>> = entries.iter().copied().map(Reverse).collect();
    while best.len() > ef {
        best.pop();
    }
    while let Some(c) = frontier.pop() {
        let worst = best.peek().map(|r| r.0);
        if let Some(w) = worst {
            if best.len() >= ef && c < w {
                break;
            }
        }
        for &nb in links[c.node as usize].get(layer).map(Vec::as_slice).unwrap_or(&[]) {
            if !visited.insert(nb) {
                continue;
            }
            let cand = Cand {
                score: sim(store, nb as usize, q),
                node: nb,
            };
            let admit = best.len() < ef || best.peek().is_some_and(|w| cand > w.0);
            if admit {
                frontier.push(cand);
                best.push(Reverse(cand));
                if best.len() > ef {
                    best.pop();
                }
            }
        }
    }
    let mut out: Vec<Cand> = best.into_iter().map(|r| r.0).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}

impl Builder<'_> {
    /// Keeps candidates that are closer to the base than to any neighbor
    /// already kept, then tops up with the closest of the rest.
    fn select(&self, candidates: &[Cand], limit: usize) -> Vec<u32> {
        let mut kept: Vec<Cand> = Vec::with_capacity(limit);
        let mut pruned = Vec::new();
        for &c in candidates {
            if kept.len() >= limit {
                break;
            }
            let row = self.store.row(c.node as usize);
            if kept.iter().all(|k| sim(self.store, k.node as usize, row) < c.score) {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if kept.len() >= limit {
                break;
            }
            kept.push(c);
        }
        kept.into_iter().map(|c| c.node).collect()
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    fn connect(&mut self, node: u32, layer: usize, neighbors: &[u32]) {
        self.links[node as usize][layer] = neighbors.to_vec();
        for &nb in neighbors {
            let list = &self.links[nb as usize][layer];
            if list.contains(&node) {
                continue;
            }
            if list.len() < self.max_links(layer) {
                self.links[nb as usize][layer].push(node);
                continue;
            }
            let base = self.store.row(nb as usize);
            let mut cands: Vec<Cand> = list
                .iter()
                .chain(std::iter::once(&node))
                .map(|&x| Cand {
                    score: sim(self.store, x as usize, base),
                    node: x,
                })
                .collect();
            cands.sort_by(|a, b| b.cmp(a));
            let limit = self.max_links(layer);
            self.links[nb as usize][layer] = self.select(&cands, limit);
        }
    }
}

/// Builds the graph by inserting rows in store order. Deterministic for a
/// given store and parameters.
pub fn build_ann_index(store: &EmbeddingStore, params: AnnParams) -> Result<HnswIndex> {
    let n = store.len();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidParameter("corpus too large for the graph index".into()));
    }
    let m = params.m.unwrap_or(16).max(2);
    let ef_construction = params.ef_construction.unwrap_or(128).max(m);
    let ef_search = params.ef_search.unwrap_or(256).max(1);
    let level_mult = 1.0 / (m as f64).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
    let levels: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            ((-u.ln() * level_mult).floor() as usize).min(16)
        })
        .collect();

    let mut b = Builder {
        store,
        m,
        ef_construction,
        links: levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect(),
    };
    let mut entry = 0u32;
    let mut top_layer = levels[0];

    for node in 1..n {
        let q = store.row(node);
        let level = levels[node];
        let mut eps = vec![Cand {
            score: sim(store, entry as usize, q),
            node: entry,
        }];
        for layer in (level + 1..=top_layer).rev() {
            eps = search_layer(store, &b.links, q, &eps, 1, layer);
        }
        for layer in (0..=level.min(top_layer)).rev() {
            let found = search_layer(store, &b.links, q, &eps, b.ef_construction, layer);
            let neighbors = b.select(&found, b.m);
            b.connect(node as u32, layer, &neighbors);
            eps = found;
        }
        if level > top_layer {
            top_layer = level;
            entry = node as u32;
        }
    }

    Ok(HnswIndex {
        dim: store.dim(),
        m,
        ef_search,
        entry,
        top_layer,
        links: b.links,
    })
}

impl HnswIndex {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ef_search(&self) -> usize {
        self.ef_search
    }

    pub fn with_ef_search(mut self, ef: usize) -> Self {
        self.ef_search = ef.max(1);
        self
    }

    /// Approximate top-k. Ranking and tie-breaking match exact search; ids are
    /// never repeated.
    pub fn top_k_ann(&self, store: &EmbeddingStore, query: &Embedding, k: usize) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if store.len() != self.links.len() || store.dim() != self.dim {
            return Err(Error::InvalidParameter("index was built for a different store".into()));
        }
        let q = query.as_slice();
        let mut eps = vec![Cand {
            score: sim(store, self.entry as usize, q),
            node: self.entry,
        }];
        for layer in (1..=self.top_layer).rev() {
            eps = search_layer(store, &self.links, q, &eps, 1, layer);
        }
        let found = search_layer(store, &self.links, q, &eps, self.ef_search.max(k), 0);

        let nodes: Vec<usize> = found.iter().map(|c| c.node as usize).collect();
        let scores: Vec<f32> = nodes.iter().map(|&i| clamp_unit(dot(store.row(i), q))).collect();
        let ids: Vec<&str> = nodes.iter().map(|&i| store.records()[i].id.as_str()).collect();
        let order = best_k(&scores, &ids, k);

        let mut full = vec![0f32; store.len()];
        for (&i, &s) in nodes.iter().zip(&scores) {
            full[i] = s;
        }
        let rows: Vec<usize> = order.iter().map(|&j| nodes[j]).collect();
        Ok(hits_from(store, &full, &rows))
    }
}

/// Mean fraction of the exact top-`k` ids that the approximate search returns.
pub fn mean_recall(exact: &[Vec<SearchHit>], approx: &[Vec<SearchHit>]) -> f64 {
    let total: f64 = exact
        .iter()
        .zip(approx)
        .map(|(e, a)| {
            if e.is_empty() {
                return 1.0;
            }
            let found = e.iter().filter(|h| a.iter().any(|x| x.id == h.id)).count();
            found as f64 / e.len() as f64
        })
        .sum();
    total / exact.len().max(1) as f64
}
