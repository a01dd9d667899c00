//! Continuation quality: NDCG, artist-augmented R-precision and clicks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{ArtistId, SongId};

/// Partial credit for recommending a different track by a ground-truth artist.
pub const ARTIST_MATCH_WEIGHT: f64 = 0.25;

/// Ground truth of one seed with lookup sets.
#[derive(Debug, Clone)]
pub struct Truth<'a> {
    songs: &'a [SongId],
    set: HashSet<SongId>,
    artists: HashSet<ArtistId>,
}

impl<'a> Truth<'a> {
    /// `artist_of` maps a song index to its artist; songs past its end have
    /// no artist.
    pub fn new(songs: &'a [SongId], artist_of: &[ArtistId]) -> Self {
        Self {
            songs,
            set: songs.iter().copied().collect(),
            artists: songs
                .iter()
                .filter_map(|s| artist_of.get(s.index()).copied())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.songs.is_empty()
    }

    pub fn contains(&self, s: SongId) -> bool {
        self.set.contains(&s)
    }
}

/// Binary-relevance NDCG with a log2 discount, normalised by the ideal DCG
/// of `min(n_relevant, K)` hits and capped at 1.
pub fn ndcg_by(rec: &[SongId], n_relevant: usize, relevant: impl Fn(SongId) -> bool) -> f64 {
    let ideal: f64 = (0..n_relevant.min(rec.len()))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = rec
        .iter()
        .enumerate()
        .filter(|(_, s)| relevant(**s))
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    (dcg / ideal).min(1.0)
}

/// `None` for an empty ground truth.
pub fn ndcg(rec: &[SongId], truth: &[SongId]) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let set: HashSet<SongId> = truth.iter().copied().collect();
    Some(ndcg_by(rec, set.len(), |s| set.contains(&s)))
}

/// Scores the first `|G|` recommendations: 1 for a ground-truth track,
/// `artist_weight` for another track by a ground-truth artist.
pub fn r_precision_by(
    rec: &[SongId],
    truth: &Truth<'_>,
    artist_of: &[ArtistId],
    artist_weight: f64,
    extra_relevant: Option<SongId>,
) -> f64 {
    let g = truth.len();
    if g == 0 {
        return 0.0;
    }
    let score: f64 = rec
        .iter()
        .take(g)
        .map(|&s| {
            if truth.contains(s) || Some(s) == extra_relevant {
                1.0
            } else if artist_of
                .get(s.index())
                .is_some_and(|a| truth.artists.contains(a))
            {
                artist_weight
            } else {
                0.0
            }
        })
        .sum();
    score / g as f64
}

pub fn r_precision(
    rec: &[SongId],
    truth: &[SongId],
    artist_of: &[ArtistId],
    artist_weight: f64,
) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let t = Truth::new(truth, artist_of);
    Some(r_precision_by(rec, &t, artist_of, artist_weight, None))
}

/// Refreshes of ten recommendations needed before the first relevant
/// track; `floor(K/10) + 1` when none of the K is relevant.
pub fn clicks_by(rec: &[SongId], relevant: impl Fn(SongId) -> bool) -> u32 {
    match rec.iter().position(|&s| relevant(s)) {
        Some(r) => (r / 10) as u32,
        None => (rec.len() / 10) as u32 + 1,
    }
}

pub fn clicks(rec: &[SongId], truth: &[SongId]) -> u32 {
    let set: HashSet<SongId> = truth.iter().copied().collect();
    clicks_by(rec, |s| set.contains(&s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub ndcg: f64,
    pub r_precision: f64,
    pub clicks: f64,
}

impl SeedMetrics {
    pub fn standard(rec: &[SongId], truth: &Truth<'_>, artist_of: &[ArtistId]) -> Self {
        Self {
            ndcg: ndcg_by(rec, truth.len(), |s| truth.contains(s)),
            r_precision: r_precision_by(rec, truth, artist_of, ARTIST_MATCH_WEIGHT, None),
            clicks: clicks_by(rec, |s| truth.contains(s)) as f64,
        }
    }

    /// `target` counts as relevant; normalisation keeps the original `|G|`.
    pub fn optimistic(
        rec: &[SongId],
        truth: &Truth<'_>,
        artist_of: &[ArtistId],
        target: SongId,
    ) -> Self {
        let relevant = |s: SongId| s == target || truth.contains(s);
        Self {
            ndcg: ndcg_by(rec, truth.len(), relevant),
            r_precision: r_precision_by(rec, truth, artist_of, ARTIST_MATCH_WEIGHT, Some(target)),
            clicks: clicks_by(rec, relevant) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Clean,
    Standard,
    AdversarialBaseline,
    Optimistic,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Clean => "clean",
            Variant::Standard => "standard",
            Variant::AdversarialBaseline => "adversarial_baseline",
            Variant::Optimistic => "optimistic",
        }
    }
}

/// Mean metrics over the seeds of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub variant: Variant,
    pub n_seeds: usize,
    pub ndcg: f64,
    pub r_precision: f64,
    pub clicks: f64,
}

impl MetricsReport {
    pub fn from_seeds(variant: Variant, seeds: &[SeedMetrics]) -> Self {
        let n = seeds.len();
        let mean = |f: fn(&SeedMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                seeds.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            variant,
            n_seeds: n,
            ndcg: mean(|m| m.ndcg),
            r_precision: mean(|m| m.r_precision),
            clicks: mean(|m| m.clicks),
        }
    }
}

/// Per-seed standard metrics; seeds with empty ground truth are dropped
/// with a warning.
pub fn evaluate(
    recs: &[Vec<SongId>],
    truths: &[&[SongId]],
    artist_of: &[ArtistId],
) -> Vec<SeedMetrics> {
    let mut out = Vec::with_capacity(recs.len());
    for (rec, truth) in recs.iter().zip(truths) {
        if truth.is_empty() {
            log::warn!("seed with empty ground truth skipped");
            continue;
        }
        out.push(SeedMetrics::standard(rec, &Truth::new(truth, artist_of), artist_of));
    }
    out
}

/// Lower-bound scenario: on every seed where the manipulated model
/// recommends the target, the first relevant track of the clean list is
/// replaced by the (irrelevant) target in place.
pub fn adversarial_baseline(
    clean_recs: &[Vec<SongId>],
    truths: &[&[SongId]],
    hits: &[bool],
    artist_of: &[ArtistId],
    target: SongId,
) -> MetricsReport {
    let mut per_seed = Vec::with_capacity(clean_recs.len());
    for ((rec, truth), &hit) in clean_recs.iter().zip(truths).zip(hits) {
        if truth.is_empty() {
            continue;
        }
        let t = Truth::new(truth, artist_of);
        let m = if hit {
            let mut replaced = rec.clone();
            if let Some(r) = replaced.iter().position(|&s| t.contains(s)) {
                replaced[r] = target;
            }
            SeedMetrics::standard(&replaced, &t, artist_of)
        } else {
            SeedMetrics::standard(rec, &t, artist_of)
        };
        per_seed.push(m);
    }
    MetricsReport::from_seeds(Variant::AdversarialBaseline, &per_seed)
}

/// Upper-bound scenario: the target is relevant for every seed.
pub fn optimistic_metrics(
    recs: &[Vec<SongId>],
    truths: &[&[SongId]],
    artist_of: &[ArtistId],
    target: SongId,
) -> MetricsReport {
    let per_seed: Vec<SeedMetrics> = recs
        .iter()
        .zip(truths)
        .filter(|(_, t)| !t.is_empty())
        .map(|(rec, truth)| {
            SeedMetrics::optimistic(rec, &Truth::new(truth, artist_of), artist_of, target)
        })
        .collect();
    MetricsReport::from_seeds(Variant::Optimistic, &per_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(v: &[u32]) -> Vec<SongId> {
        v.iter().map(|&i| SongId(i)).collect()
    }

    #[test]
    fn ndcg_cases() {
        assert_eq!(ndcg(&ids(&[1, 2, 3]), &ids(&[2, 1])), Some(1.0));
        assert_eq!(ndcg(&ids(&[1, 2, 3]), &ids(&[9])), Some(0.0));
        let v = ndcg(&ids(&[1, 2, 3]), &ids(&[3])).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(ndcg(&ids(&[1]), &[]), None);
    }

    #[test]
    fn r_precision_cases() {
        let artists = [ArtistId(0), ArtistId(0), ArtistId(1), ArtistId(2)];
        // slot 1 exact, slot 2 shares artist 0 with song 0
        let v = r_precision(&ids(&[0, 1, 3]), &ids(&[0, 2]), &artists, 0.25).unwrap();
        assert!((v - 0.625).abs() < 1e-12);
        assert_eq!(r_precision(&ids(&[3]), &ids(&[2]), &artists, 0.25), Some(0.0));
    }

    #[test]
    fn clicks_cases() {
        let rec: Vec<SongId> = (0..50).map(SongId).collect();
        assert_eq!(clicks(&rec, &ids(&[0])), 0);
        assert_eq!(clicks(&rec, &ids(&[10])), 1);
        assert_eq!(clicks(&rec, &ids(&[99])), 6);
    }

    #[test]
    fn adversarial_forces_single_hit_to_zero() {
        let recs = vec![ids(&[1, 2]), ids(&[1, 2])];
        let truths: Vec<&[SongId]> = vec![&[SongId(1)], &[SongId(1)]];
        let none = adversarial_baseline(&recs, &truths, &[false, false], &[], SongId(9));
        assert_eq!(none.ndcg, 1.0);
        let one = adversarial_baseline(&recs, &truths, &[true, false], &[], SongId(9));
        assert_eq!(one.ndcg, 0.5);
    }

    #[test]
    fn optimistic_equals_standard_without_target() {
        let recs = vec![ids(&[1, 2, 3]), ids(&[4, 5, 6])];
        let truths: Vec<&[SongId]> = vec![&[SongId(3)], &[SongId(4), SongId(7)]];
        let std = MetricsReport::from_seeds(Variant::Standard, &evaluate(&recs, &truths, &[]));
        let opt = optimistic_metrics(&recs, &truths, &[], SongId(99));
        assert_eq!((std.ndcg, std.r_precision, std.clicks), (opt.ndcg, opt.r_precision, opt.clicks));
    }

    #[test]
    fn optimistic_target_first_means_no_clicks() {
        let recs = vec![ids(&[9, 1]), ids(&[9, 2])];
        let truths: Vec<&[SongId]> = vec![&[SongId(5)], &[SongId(6)]];
        assert_eq!(optimistic_metrics(&recs, &truths, &[], SongId(9)).clicks, 0.0);
    }

    proptest! {
        #[test]
        fn bounds_and_prepending(rec in proptest::sample::subsequence((0u32..60).collect::<Vec<_>>(), 1..30)
            .prop_shuffle(), truth in proptest::collection::hash_set(0u32..60, 1..10), extra in 0u32..60) {
            let rec = ids(&rec);
            let truth = ids(&truth.into_iter().collect::<Vec<_>>());
            let n = ndcg(&rec, &truth).unwrap();
            let r = r_precision(&rec, &truth, &[], 0.25).unwrap();
            let c = clicks(&rec, &truth);
            prop_assert!((0.0..=1.0).contains(&n));
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert!(c as usize <= rec.len() / 10 + 1);
            // prepending a relevant track never adds clicks
            if truth.contains(&SongId(extra)) && !rec.contains(&SongId(extra)) {
                let mut longer = vec![SongId(extra)];
                longer.extend(&rec);
                prop_assert!(clicks(&longer, &truth) <= c);
            }
        }
    }
}
