//! Effects on the collective's own playlists: recommendation quality at the
//! insertion point and how the target's similarity to targeted contexts
//! moves relative to the anchors.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::metrics::{MetricsReport, SeedMetrics, Truth, Variant};
use crate::corpus::{ArtistId, Playlist, SongId};
use crate::error::Result;
use crate::par::{self, Execution};
use crate::recommender::{rank_and_threshold, recommend, Scorer};
use crate::strategy::{AnchorKind, ManipulationLog};

/// Share of `a`'s songs that also appear in `b`, relative to `|a|`.
pub fn overlap_precision(a: &[SongId], b: &[SongId]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let bs: HashSet<SongId> = b.iter().copied().collect();
    a.iter().filter(|s| bs.contains(s)).count() as f64 / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantReport {
    pub n_participants: usize,
    /// Insertion at index 0, evaluated from the empty context.
    pub n_empty_seed: usize,
    /// Insertion at the end: nothing left to predict.
    pub n_no_continuation: usize,
    pub clean: MetricsReport,
    pub manipulated: MetricsReport,
    /// Mean top-K overlap between the clean and manipulated models.
    pub overlap_precision: f64,
}

/// Evaluates each placed playlist with the tracks before the insertion as
/// seed and the tracks after it as ground truth.
#[allow(clippy::too_many_arguments)]
pub fn participant_experience(
    originals: &[Playlist],
    log: &ManipulationLog,
    clean: &dyn Scorer,
    manipulated: &dyn Scorer,
    k: usize,
    artist_of: &[ArtistId],
    exec: Execution,
) -> Result<ParticipantReport> {
    let by_id: HashMap<u64, &Playlist> = originals.iter().map(|p| (p.id, p)).collect();
    let mut cases = Vec::new();
    let mut n_empty_seed = 0;
    let mut n_no_continuation = 0;
    for pl in &log.placements {
        let Some(p) = by_id.get(&pl.playlist_id) else {
            continue;
        };
        let (seed, truth) = p.tracks.split_at(pl.index.min(p.len()));
        if truth.is_empty() {
            n_no_continuation += 1;
            continue;
        }
        if seed.is_empty() {
            n_empty_seed += 1;
        }
        cases.push((seed, truth));
    }
    let rows = par::map(exec, &cases, |(seed, truth)| -> Result<_> {
        let a = recommend(clean, seed, k)?;
        let b = recommend(manipulated, seed, k)?;
        let t = Truth::new(truth, artist_of);
        Ok((
            SeedMetrics::standard(&a.songs, &t, artist_of),
            SeedMetrics::standard(&b.songs, &t, artist_of),
            overlap_precision(&a.songs, &b.songs),
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let clean_m: Vec<SeedMetrics> = rows.iter().map(|r| r.0).collect();
    let manip_m: Vec<SeedMetrics> = rows.iter().map(|r| r.1).collect();
    let overlap = if rows.is_empty() {
        1.0
    } else {
        rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64
    };
    Ok(ParticipantReport {
        n_participants: cases.len(),
        n_empty_seed,
        n_no_continuation,
        clean: MetricsReport::from_seeds(Variant::Clean, &clean_m),
        manipulated: MetricsReport::from_seeds(Variant::Standard, &manip_m),
        overlap_precision: overlap,
    })
}

/// Similarities in one targeted context under both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub playlist_id: u64,
    pub anchor: SongId,
    pub kind: AnchorKind,
    pub context_len: usize,
    pub anchor_clean: f64,
    pub anchor_manipulated: f64,
    pub target_clean: f64,
    pub target_manipulated: f64,
    /// Score of the K-th recommendation.
    pub threshold_clean: f64,
    pub threshold_manipulated: f64,
    /// 0-based rank of the target under the manipulated model.
    pub target_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

impl Distribution {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q = |p: f64| super::bootstrap::quantile_sorted(&v, p);
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p25: q(0.25),
            median: q(0.5),
            p75: q(0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSimilarityReport {
    pub rows: Vec<ContextRow>,
    pub anchor_clean: Option<Distribution>,
    pub anchor_manipulated: Option<Distribution>,
    pub target_clean: Option<Distribution>,
    pub target_manipulated: Option<Distribution>,
    pub threshold_manipulated: Option<Distribution>,
    /// Contexts where the target enters the manipulated top-K.
    pub target_in_top_k: usize,
}

/// Similarity of the anchor and of the target to each targeted context
/// (tracks before the insertion point), at most `max_contexts` of them in
/// log order.
pub fn context_similarity_report(
    originals: &[Playlist],
    log: &ManipulationLog,
    clean: &dyn Scorer,
    manipulated: &dyn Scorer,
    k: usize,
    max_contexts: usize,
    exec: Execution,
) -> Result<ContextSimilarityReport> {
    let by_id: HashMap<u64, &Playlist> = originals.iter().map(|p| (p.id, p)).collect();
    let target = log.target;
    let cases: Vec<_> = log
        .placements
        .iter()
        .filter_map(|pl| Some((pl, by_id.get(&pl.playlist_id)?, pl.anchor?)))
        .take(max_contexts)
        .collect();
    let rows = par::map(exec, &cases, |&(pl, p, anchor)| -> Result<ContextRow> {
        let ctx = &p.tracks[..pl.index.min(p.len())];
        let mut sc = Vec::new();
        let mut sm = Vec::new();
        clean.score_all(ctx, &mut sc);
        manipulated.score_all(ctx, &mut sm);
        let (_, threshold_clean) = rank_and_threshold(clean, ctx, anchor, k)?;
        let (target_rank, threshold_manipulated) = rank_and_threshold(manipulated, ctx, target, k)?;
        Ok(ContextRow {
            playlist_id: pl.playlist_id,
            anchor,
            kind: pl.kind,
            context_len: ctx.len(),
            anchor_clean: sc[anchor.index()],
            anchor_manipulated: sm[anchor.index()],
            target_clean: sc.get(target.index()).copied().unwrap_or(f64::NAN),
            target_manipulated: sm[target.index()],
            threshold_clean,
            threshold_manipulated,
            target_rank,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ContextSimilarityReport {
        anchor_clean: Distribution::of(rows.iter().map(|r| r.anchor_clean)),
        anchor_manipulated: Distribution::of(rows.iter().map(|r| r.anchor_manipulated)),
        target_clean: Distribution::of(rows.iter().map(|r| r.target_clean)),
        target_manipulated: Distribution::of(rows.iter().map(|r| r.target_manipulated)),
        threshold_manipulated: Distribution::of(rows.iter().map(|r| r.threshold_manipulated)),
        target_in_top_k: rows.iter().filter(|r| r.target_rank < k).count(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recommender::{train_oracle, OracleConfig};
    use crate::strategy::apply_inclust;

    fn pl(id: u64, t: &[u32]) -> Playlist {
        Playlist::new(id, t.iter().map(|&i| SongId(i)).collect())
    }

    #[test]
    fn overlap_bounds() {
        let a = [SongId(1), SongId(2)];
        assert_eq!(overlap_precision(&a, &a), 1.0);
        assert_eq!(overlap_precision(&a, &[SongId(3)]), 0.0);
    }

    fn toy() -> (Vec<Playlist>, Vec<Playlist>, SongId) {
        let mut ps = Vec::new();
        for i in 0..30u64 {
            let a = (i % 5) as u32;
            ps.push(pl(i, &[a, 5 + a, 10 + (i % 3) as u32, 13 + (i % 4) as u32]));
        }
        let target = SongId(17);
        let collective: Vec<Playlist> = ps[..6].to_vec();
        (ps, collective, target)
    }

    #[test]
    fn identical_models_overlap_fully() {
        let (ps, collective, target) = toy();
        let m = apply_inclust(&collective, target, None, 18);
        let model = train_oracle(&ps, 18, &OracleConfig::default());
        let r = participant_experience(&collective, &m.log, &model, &model, 5, &[], Execution::Serial)
            .unwrap();
        assert_eq!(r.overlap_precision, 1.0);
        assert_eq!(r.clean.ndcg, r.manipulated.ndcg);
        let c = context_similarity_report(&collective, &m.log, &model, &model, 5, 100, Execution::Serial)
            .unwrap();
        assert_eq!(c.anchor_clean, c.anchor_manipulated);
        assert_eq!(c.target_clean, c.target_manipulated);
    }

    #[test]
    fn inclust_brings_target_into_targeted_context() {
        let (ps, collective, target) = toy();
        let m = apply_inclust(&collective, target, None, 18);
        let clean = train_oracle(&ps, 18, &OracleConfig::default());
        let mut manipulated_data = ps.clone();
        manipulated_data.splice(..6, m.playlists.clone());
        let manip = train_oracle(&manipulated_data, 18, &OracleConfig::default());
        let c = context_similarity_report(&collective, &m.log, &clean, &manip, 5, 100, Execution::Serial)
            .unwrap();
        // independent rank: count songs outside the context that beat the target
        let mut brute_hits = 0;
        for row in &c.rows {
            let p = collective.iter().find(|p| p.id == row.playlist_id).unwrap();
            let ctx = &p.tracks[..m.log.placements.iter().find(|x| x.playlist_id == p.id).unwrap().index];
            let mut s = Vec::new();
            manip.score_all(ctx, &mut s);
            let t = s[target.index()];
            let better = (0..18u32)
                .map(SongId)
                .filter(|x| !ctx.contains(x) && *x != target)
                .filter(|x| s[x.index()] > t || (s[x.index()] == t && *x < target))
                .count();
            assert_eq!(better, row.target_rank);
            if better < 5 {
                brute_hits += 1;
            }
        }
        assert_eq!(brute_hits, c.target_in_top_k);
        assert!(c.target_in_top_k >= 1);
    }
}
