use std::collections::BTreeSet;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Playlist, SongId};
use crate::error::{Error, Result};
use crate::seed;

/// Longest evaluation seed drawn by [`make_seed_splits`].
pub const MAX_SEED_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

/// Random disjoint partition of `corpus` into train/val/test. Each part keeps
/// the playlists in their original corpus order.
pub fn split(corpus: &Corpus, n_test: usize, n_val: usize, rng_seed: u64) -> Result<Split> {
    let n = corpus.n();
    if n_test + n_val >= n {
        return Err(Error::Config(format!(
            "n_test + n_val = {} must be smaller than the corpus size {n}",
            n_test + n_val
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(rng_seed));
    let mut part = vec![0u8; n];
    for &i in &order[..n_test] {
        part[i] = 1;
    }
    for &i in &order[n_test..n_test + n_val] {
        part[i] = 2;
    }
    let pick = |tag: u8| -> Vec<Playlist> {
        corpus
            .playlists
            .iter()
            .zip(&part)
            .filter(|(_, &t)| t == tag)
            .map(|(p, _)| p.clone())
            .collect()
    };
    Ok(Split {
        train: corpus.subset(pick(0)),
        val: corpus.subset(pick(2)),
        test: corpus.subset(pick(1)),
    })
}

/// A test playlist cut into an evaluation context and its masked continuation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSplit {
    pub playlist_id: u64,
    pub seed: Vec<SongId>,
    pub ground_truth: Vec<SongId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSplits {
    pub splits: Vec<SeedSplit>,
    /// Test playlists shorter than two tracks, which cannot be split.
    pub skipped: usize,
}

/// Seed length is uniform on `[1, min(10, L - 1)]`.
pub fn make_seed_splits(test: &Corpus, rng_seed: u64) -> SeedSplits {
    let mut rng = seed::rng(rng_seed);
    let mut splits = Vec::with_capacity(test.n());
    let mut skipped = 0;
    for p in &test.playlists {
        if p.len() < 2 {
            skipped += 1;
            continue;
        }
        let hi = MAX_SEED_LEN.min(p.len() - 1);
        let len = rng.random_range(1..=hi);
        splits.push(SeedSplit {
            playlist_id: p.id,
            seed: p.tracks[..len].to_vec(),
            ground_truth: p.tracks[len..].to_vec(),
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} test playlists shorter than 2 tracks");
    }
    SeedSplits { splits, skipped }
}

/// `floor(alpha * n)`, tolerant to representation error in `alpha`.
pub fn collective_size(alpha: f64, n: usize) -> usize {
    ((alpha * n as f64) + 1e-9).floor() as usize
}

/// Draws `floor(alpha * N)` distinct playlist ids uniformly without replacement.
pub fn sample_collective(train: &Corpus, alpha: f64, rng_seed: u64) -> Result<BTreeSet<u64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0,1], got {alpha}")));
    }
    let n = train.n();
    let k = collective_size(alpha, n).min(n);
    let mut rng = seed::rng(rng_seed);
    Ok(index::sample(&mut rng, n, k)
        .into_iter()
        .map(|i| train.playlists[i].id)
        .collect())
}
