//! Interpolated back-off successor model.
//!
//! For a seed with suffix contexts `c_1` (last song) … `c_m` (last `m`
//! songs), the score of candidate `x` is built bottom-up:
//!
//! ```text
//! P_0(x) = (n(x) + 1) / (N + V)                      add-one unigram
//! P_k(x) = (1 - b) * n(c_k, x) / n(c_k) + b * P_{k-1}(x)   if c_k was seen
//! P_k(x) = P_{k-1}(x)                                   otherwise
//! ```
//!
//! and `score = P_m(x)`, with `b` the back-off weight.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::corpus::{Playlist, SongId};
use crate::error::{Error, Result};

/// Successor counts keyed by context, one map per context length.
type ContextCounts = HashMap<Box<[SongId]>, HashMap<SongId, u64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Longest context order `m`.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Weight kept by the lower-order estimate at each observed order.
    #[serde(default = "default_backoff")]
    pub backoff: f64,
}

fn default_order() -> usize {
    2
}

fn default_backoff() -> f64 {
    0.1
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            order: default_order(),
            backoff: default_backoff(),
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("oracle order must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.backoff) {
            return Err(Error::Config(format!(
                "oracle backoff must be in [0,1), got {}",
                self.backoff
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Successors {
    pub total: u64,
    /// Sorted by song id.
    pub counts: Vec<(SongId, u64)>,
}

#[derive(Debug, Clone)]
pub struct OracleModel {
    config: OracleConfig,
    n_songs: usize,
    unigram: Vec<u64>,
    total: u64,
    /// `tables[k - 1]` maps order-`k` contexts to their successors.
    tables: Vec<HashMap<Box<[SongId]>, Successors>>,
}

/// Counts every (last-`k`-songs → next song) transition for `k = 1..=m` and
/// all unigram occurrences.
pub fn train_oracle<'a>(
    playlists: impl IntoIterator<Item = &'a Playlist>,
    n_songs: usize,
    config: &OracleConfig,
) -> OracleModel {
    let m = config.order;
    let mut unigram = vec![0u64; n_songs];
    let mut total = 0u64;
    let mut raw: Vec<ContextCounts> = vec![HashMap::new(); m];
    for p in playlists {
        for (i, &s) in p.tracks.iter().enumerate() {
            unigram[s.index()] += 1;
            total += 1;
            for k in 1..=m.min(i) {
                let ctx: Box<[SongId]> = p.tracks[i - k..i].into();
                *raw[k - 1].entry(ctx).or_default().entry(s).or_insert(0) += 1;
            }
        }
    }
    let tables = raw
        .into_iter()
        .map(|table| {
            table
                .into_iter()
                .map(|(ctx, succ)| {
                    let mut counts: Vec<(SongId, u64)> = succ.into_iter().collect();
                    counts.sort_unstable();
                    let total = counts.iter().map(|c| c.1).sum();
                    (ctx, Successors { total, counts })
                })
                .collect()
        })
        .collect();
    OracleModel {
        config: config.clone(),
        n_songs,
        unigram,
        total,
        tables,
    }
}

impl OracleModel {
    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    pub fn successors(&self, context: &[SongId]) -> Option<&Successors> {
        let k = context.len();
        if k == 0 || k > self.tables.len() {
            return None;
        }
        self.tables[k - 1].get(context)
    }

    pub fn unigram_count(&self, song: SongId) -> u64 {
        self.unigram.get(song.index()).copied().unwrap_or(0)
    }

    /// Add-one smoothed unigram probability.
    pub fn unigram_prob(&self, song: SongId) -> f64 {
        (self.unigram_count(song) + 1) as f64 / (self.total + self.n_songs as u64) as f64
    }

    /// Sum of successor counts over all contexts of order `k`.
    pub fn successor_mass(&self, k: usize) -> u64 {
        self.tables
            .get(k.wrapping_sub(1))
            .map(|t| t.values().map(|s| s.total).sum())
            .unwrap_or(0)
    }
}

impl Scorer for OracleModel {
    fn n_songs(&self) -> usize {
        self.n_songs
    }

    fn score_all(&self, seed: &[SongId], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n_songs as u32).map(|i| self.unigram_prob(SongId(i))));
        let b = self.config.backoff;
        for k in 1..=self.tables.len().min(seed.len()) {
            if let Some(succ) = self.successors(&seed[seed.len() - k..]) {
                for v in out.iter_mut() {
                    *v *= b;
                }
                let w = (1.0 - b) / succ.total as f64;
                for &(s, c) in &succ.counts {
                    if let Some(v) = out.get_mut(s.index()) {
                        *v += w * c as f64;
                    }
                }
            }
        }
    }
}

/// Oracle score of one candidate.
pub fn score_oracle(model: &OracleModel, seed: &[SongId], candidate: SongId) -> Result<f64> {
    model.similarity(candidate, seed)
}
