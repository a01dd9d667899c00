//! Coordinated strategies: indirect cluster targeting (InClust), direct
//! low-frequency targeting (DirLoF), and the thresholded Hybrid.

use super::{
    inserted, AnchorKind, AnchorRound, Manipulation, ManipulationLog, Placement, SkipReason,
    Skipped, StrategyConfig, StrategyKind,
};
use crate::corpus::{Playlist, SongId};
use crate::par::{self, Execution};
use crate::stats::FrequencyEstimate;

/// Runs the InClust selection loop on `pool` (indices into `playlists`).
///
/// Each round recounts songs over the playlists not yet modified, picks the
/// most frequent one (ties: smallest id) and inserts the target before it in
/// every pooled playlist containing it. Stops when the pool is empty, after
/// `max_rounds` rounds, or when the top count drops below `min_count`.
/// Returns the indices still unmodified.
fn inclust_rounds(
    playlists: &[Playlist],
    pool: Vec<usize>,
    target: SongId,
    n_songs: usize,
    max_rounds: Option<usize>,
    min_count: u64,
    out: &mut [Option<Playlist>],
    log: &mut ManipulationLog,
) -> Vec<usize> {
    let width = n_songs.max(
        playlists
            .iter()
            .flat_map(|p| p.tracks.iter())
            .map(|s| s.index() + 1)
            .max()
            .unwrap_or(0),
    );
    let mut counts = vec![0u64; width];
    for &i in &pool {
        for s in &playlists[i].tracks {
            counts[s.index()] += 1;
        }
    }
    let mut pool = pool;
    while !pool.is_empty() {
        if max_rounds.is_some_and(|m| log.rounds.len() >= m) {
            break;
        }
        // max count, ties to the smallest id
        let (best, &count) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty pool has songs");
        if count == 0 || count < min_count {
            break;
        }
        let anchor = SongId(best as u32);
        let mut hit = 0;
        pool.retain(|&i| {
            let p = &playlists[i];
            match p.position(anchor) {
                Some(pos) => {
                    for s in &p.tracks {
                        counts[s.index()] -= 1;
                    }
                    log.placements.push(Placement {
                        playlist_id: p.id,
                        index: pos,
                        anchor: Some(anchor),
                        kind: AnchorKind::Indirect,
                    });
                    out[i] = Some(inserted(p, pos, target));
                    hit += 1;
                    false
                }
                None => true,
            }
        });
        log.rounds.push(AnchorRound {
            anchor,
            pool_count: count,
            playlists: hit,
        });
    }
    pool
}

fn split_target_present(
    playlists: &[Playlist],
    target: SongId,
    out: &mut [Option<Playlist>],
    log: &mut ManipulationLog,
) -> Vec<usize> {
    let mut pool = Vec::with_capacity(playlists.len());
    for (i, p) in playlists.iter().enumerate() {
        if p.contains(target) {
            log.skipped.push(Skipped {
                playlist_id: p.id,
                reason: SkipReason::TargetPresent,
            });
            out[i] = Some(p.clone());
        } else {
            pool.push(i);
        }
    }
    pool
}

fn finish(playlists: &[Playlist], out: Vec<Option<Playlist>>, log: ManipulationLog) -> Manipulation {
    let playlists = out
        .into_iter()
        .zip(playlists)
        .map(|(m, p)| m.unwrap_or_else(|| p.clone()))
        .collect();
    Manipulation { playlists, log }
}

/// InClust: target is placed before the collective's most frequent songs.
/// With `max_anchors`, playlists left after that many anchors stay
/// unmodified and are logged as skipped.
pub fn apply_inclust(
    playlists: &[Playlist],
    target: SongId,
    max_anchors: Option<usize>,
    n_songs: usize,
) -> Manipulation {
    let mut log = ManipulationLog::new(
        StrategyConfig::new(StrategyKind::InClust { max_anchors }),
        target,
    );
    let mut out = vec![None; playlists.len()];
    let pool = split_target_present(playlists, target, &mut out, &mut log);
    let rest = inclust_rounds(playlists, pool, target, n_songs, max_anchors, 1, &mut out, &mut log);
    for i in rest {
        log.skipped.push(Skipped {
            playlist_id: playlists[i].id,
            reason: SkipReason::AnchorLimit,
        });
    }
    finish(playlists, out, log)
}

/// Least-frequent known song in `p` (ties: smallest id).
fn direct_anchor(p: &Playlist, estimate: &FrequencyEstimate) -> Option<(usize, SongId)> {
    p.tracks
        .iter()
        .enumerate()
        .filter_map(|(pos, &s)| estimate.get(s).map(|q| (q, s, pos)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, s, pos)| (pos, s))
}

fn dirlof_on(
    playlists: &[Playlist],
    pool: &[usize],
    target: SongId,
    estimate: &FrequencyEstimate,
    exec: Execution,
    out: &mut [Option<Playlist>],
    log: &mut ManipulationLog,
) {
    let picks = par::map(exec, pool, |&i| direct_anchor(&playlists[i], estimate));
    for (&i, pick) in pool.iter().zip(picks) {
        let p = &playlists[i];
        match pick {
            Some((pos, anchor)) => {
                log.placements.push(Placement {
                    playlist_id: p.id,
                    index: pos + 1,
                    anchor: Some(anchor),
                    kind: AnchorKind::Direct,
                });
                out[i] = Some(inserted(p, pos + 1, target));
            }
            None => log.skipped.push(Skipped {
                playlist_id: p.id,
                reason: SkipReason::NoKnownFrequency,
            }),
        }
    }
}

/// DirLoF: per playlist, the target goes right after the song with the
/// smallest estimated training frequency. Songs with unknown frequency are
/// never anchors; playlists without any known song stay unmodified.
pub fn apply_dirlof(
    playlists: &[Playlist],
    target: SongId,
    estimate: &FrequencyEstimate,
    exec: Execution,
) -> Manipulation {
    let mut log = ManipulationLog::new(
        StrategyConfig::new(StrategyKind::DirLoF {
            frequency: Default::default(),
        }),
        target,
    );
    let mut out = vec![None; playlists.len()];
    let pool = split_target_present(playlists, target, &mut out, &mut log);
    dirlof_on(playlists, &pool, target, estimate, exec, &mut out, &mut log);
    finish(playlists, out, log)
}

/// Hybrid: InClust rounds while the pooled top count is at least `lambda`,
/// then DirLoF on the remaining playlists.
pub fn apply_hybrid(
    playlists: &[Playlist],
    target: SongId,
    estimate: &FrequencyEstimate,
    lambda: u64,
    n_songs: usize,
) -> Manipulation {
    let mut log = ManipulationLog::new(
        StrategyConfig::new(StrategyKind::Hybrid {
            lambda,
            frequency: Default::default(),
        }),
        target,
    );
    let mut out = vec![None; playlists.len()];
    let pool = split_target_present(playlists, target, &mut out, &mut log);
    let rest = inclust_rounds(
        playlists,
        pool,
        target,
        n_songs,
        None,
        lambda.max(1),
        &mut out,
        &mut log,
    );
    dirlof_on(playlists, &rest, target, estimate, Execution::Serial, &mut out, &mut log);
    finish(playlists, out, log)
}
