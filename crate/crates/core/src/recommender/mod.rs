//! Top-K sequential recommenders behind one scoring interface.
//!
//! [`OracleModel`] scores candidates with interpolated back-off successor
//! statistics of the training playlists. [`NeuralModel`] embeds songs and
//! aggregates a seed with causal multi-head attention; similarity is the
//! inner product of song and seed embeddings.

mod neural;
mod oracle;

use serde::{Deserialize, Serialize};

use crate::corpus::{Playlist, SongId};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub use neural::{
    grad_check, train_neural, EpochLog, GradCheckScope, NeuralConfig, NeuralModel, TrainingLog,
};
pub use oracle::{score_oracle, train_oracle, OracleConfig, OracleModel};

/// Default recommendation list length.
pub const DEFAULT_K: usize = 50;

/// Anything that can score every vocabulary song against a seed.
pub trait Scorer: Sync {
    fn n_songs(&self) -> usize;

    /// Writes `SIM(s, seed)` for every song `s` in the vocabulary into `out`
    /// (resized to `n_songs`). Seed membership is not masked here.
    fn score_all(&self, seed: &[SongId], out: &mut Vec<f64>);

    fn similarity(&self, candidate: SongId, seed: &[SongId]) -> Result<f64> {
        if candidate.index() >= self.n_songs() {
            return Err(Error::OutOfVocabulary(candidate.0));
        }
        let mut out = Vec::new();
        self.score_all(seed, &mut out);
        Ok(out[candidate.index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Exactly K songs, best first.
    pub songs: Vec<SongId>,
    pub scores: Vec<f64>,
}

impl Recommendation {
    pub fn contains(&self, song: SongId) -> bool {
        self.songs.contains(&song)
    }

    pub fn rank_of(&self, song: SongId) -> Option<usize> {
        self.songs.iter().position(|&s| s == song)
    }
}

#[inline]
fn better(a: (f64, SongId), b: (f64, SongId)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

fn candidates(scores: &[f64], seed: &[SongId]) -> Vec<(f64, SongId)> {
    let mut excluded = vec![false; scores.len()];
    for s in seed {
        if let Some(e) = excluded.get_mut(s.index()) {
            *e = true;
        }
    }
    scores
        .iter()
        .enumerate()
        .filter(|(i, _)| !excluded[*i])
        .map(|(i, &v)| (v, SongId(i as u32)))
        .collect()
}

/// Exact top-K by similarity over all songs not in the seed; ties go to the
/// smaller song id.
pub fn top_k(scores: &[f64], seed: &[SongId], k: usize) -> Result<Recommendation> {
    let mut cands = candidates(scores, seed);
    if k > cands.len() {
        return Err(Error::KTooLarge {
            k,
            available: cands.len(),
        });
    }
    if k < cands.len() && k > 0 {
        cands.select_nth_unstable_by(k - 1, |a, b| better(*a, *b));
    }
    cands.truncate(k);
    cands.sort_by(|a, b| better(*a, *b));
    Ok(Recommendation {
        songs: cands.iter().map(|c| c.1).collect(),
        scores: cands.iter().map(|c| c.0).collect(),
    })
}

pub fn recommend(model: &dyn Scorer, seed: &[SongId], k: usize) -> Result<Recommendation> {
    let mut scores = Vec::new();
    model.score_all(seed, &mut scores);
    top_k(&scores, seed, k)
}

/// [`recommend`] for many seeds; output order follows `seeds`.
pub fn recommend_batch(
    model: &dyn Scorer,
    seeds: &[&[SongId]],
    k: usize,
    exec: Execution,
) -> Result<Vec<Recommendation>> {
    par::map(exec, seeds, |seed| recommend(model, seed, k))
        .into_iter()
        .collect()
}

/// Position of `candidate` in the full ranking for `seed` (0-based), and
/// the score of the K-th ranked candidate.
pub fn rank_and_threshold(
    model: &dyn Scorer,
    seed: &[SongId],
    candidate: SongId,
    k: usize,
) -> Result<(usize, f64)> {
    if candidate.index() >= model.n_songs() {
        return Err(Error::OutOfVocabulary(candidate.0));
    }
    let mut scores = Vec::new();
    model.score_all(seed, &mut scores);
    let own = (scores[candidate.index()], candidate);
    let cands = candidates(&scores, seed);
    let rank = cands
        .iter()
        .filter(|c| better(**c, own) == std::cmp::Ordering::Less)
        .count();
    let rec = top_k(&scores, seed, k.min(cands.len()))?;
    let threshold = rec.scores.last().copied().unwrap_or(f64::NEG_INFINITY);
    Ok((rank, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RecommenderConfig {
    Oracle(OracleConfig),
    Neural(NeuralConfig),
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig::Oracle(OracleConfig::default())
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            RecommenderConfig::Oracle(c) => c.validate(),
            RecommenderConfig::Neural(c) => c.validate(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            RecommenderConfig::Oracle(_) => "oracle",
            RecommenderConfig::Neural(_) => "neural",
        }
    }
}

/// A trained model of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Oracle(OracleModel),
    Neural(NeuralModel),
}

impl Scorer for Model {
    fn n_songs(&self) -> usize {
        match self {
            Model::Oracle(m) => m.n_songs(),
            Model::Neural(m) => m.n_songs(),
        }
    }

    fn score_all(&self, seed: &[SongId], out: &mut Vec<f64>) {
        match self {
            Model::Oracle(m) => m.score_all(seed, out),
            Model::Neural(m) => m.score_all(seed, out),
        }
    }
}

/// Trains the configured model. `val` is used by the neural model for
/// validation loss; the oracle counts over `train` and `val` together.
pub fn train(
    config: &RecommenderConfig,
    train: &[Playlist],
    val: &[Playlist],
    n_songs: usize,
) -> Result<(Model, Option<TrainingLog>)> {
    config.validate()?;
    Ok(match config {
        RecommenderConfig::Oracle(c) => {
            let all: Vec<&Playlist> = train.iter().chain(val).collect();
            (Model::Oracle(train_oracle(all, n_songs, c)), None)
        }
        RecommenderConfig::Neural(c) => {
            let (m, log) = train_neural(train, val, n_songs, c)?;
            (Model::Neural(m), Some(log))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn n_songs(&self) -> usize {
            self.0.len()
        }
        fn score_all(&self, _: &[SongId], out: &mut Vec<f64>) {
            out.clear();
            out.extend_from_slice(&self.0);
        }
    }

    #[test]
    fn forced_set() {
        let m = Fixed(vec![0.3, 0.1, 0.2]);
        let r = recommend(&m, &[SongId(0)], 2).unwrap();
        assert_eq!(r.songs, vec![SongId(2), SongId(1)]);
    }

    #[test]
    fn ties_by_id_and_seed_excluded() {
        let m = Fixed(vec![1.0, 1.0, 1.0, 5.0, 1.0]);
        let r = recommend(&m, &[SongId(3), SongId(1)], 3).unwrap();
        assert_eq!(r.songs, vec![SongId(0), SongId(2), SongId(4)]);
    }

    #[test]
    fn k_too_large() {
        let m = Fixed(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            recommend(&m, &[SongId(0)], 3),
            Err(Error::KTooLarge { k: 3, available: 2 })
        ));
    }

    #[test]
    fn out_of_vocabulary() {
        let m = Fixed(vec![1.0, 2.0]);
        assert!(matches!(
            m.similarity(SongId(5), &[]),
            Err(Error::OutOfVocabulary(5))
        ));
    }

    #[test]
    fn rank_and_threshold_agree_with_topk() {
        let m = Fixed(vec![0.5, 0.9, 0.1, 0.7, 0.7]);
        let (rank, thr) = rank_and_threshold(&m, &[SongId(1)], SongId(4), 2).unwrap();
        assert_eq!(rank, 1);
        assert_eq!(thr, 0.7);
    }
}
