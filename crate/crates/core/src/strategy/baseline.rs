//! Uncoordinated placements: random, last, fixed index, random in a range.

use rand::Rng;

use super::{
    inserted, AnchorKind, Manipulation, ManipulationLog, Placement, SkipReason, Skipped,
    StrategyConfig, StrategyKind,
};
use crate::corpus::{Playlist, SongId};
use crate::error::{Error, Result};
use crate::seed;

/// Each playlist draws from its own stream keyed by playlist id, so the
/// result does not depend on playlist order.
pub fn apply_baseline(
    playlists: &[Playlist],
    kind: &StrategyKind,
    target: SongId,
    rng_seed: u64,
) -> Result<Manipulation> {
    kind.validate()?;
    let mut log = ManipulationLog::new(StrategyConfig::new(kind.clone()), target);
    let mut out = Vec::with_capacity(playlists.len());
    for p in playlists {
        if p.contains(target) {
            log.skipped.push(Skipped {
                playlist_id: p.id,
                reason: SkipReason::TargetPresent,
            });
            out.push(p.clone());
            continue;
        }
        let len = p.len();
        let mut rng = seed::rng(seed::derive(rng_seed, &[p.id]));
        let index = match *kind {
            StrategyKind::Random => rng.random_range(0..=len),
            StrategyKind::AtTheEnd => len,
            StrategyKind::InsertAt { index } => index.min(len),
            StrategyKind::RandomRange { from, to } => rng.random_range(from.min(len)..=to.min(len)),
            _ => {
                return Err(Error::Config(format!(
                    "{} is not a baseline strategy",
                    kind.label()
                )))
            }
        };
        log.placements.push(Placement {
            playlist_id: p.id,
            index,
            anchor: None,
            kind: AnchorKind::None,
        });
        out.push(inserted(p, index, target));
    }
    Ok(Manipulation {
        playlists: out,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: SongId = SongId(99);

    fn ab() -> Vec<Playlist> {
        vec![Playlist::new(0, vec![SongId(0), SongId(1)])]
    }

    fn tracks(m: &Manipulation) -> Vec<u32> {
        m.playlists[0].tracks.iter().map(|s| s.0).collect()
    }

    #[test]
    fn at_the_end_appends() {
        let m = apply_baseline(&ab(), &StrategyKind::AtTheEnd, T, 0).unwrap();
        assert_eq!(tracks(&m), [0, 1, 99]);
    }

    #[test]
    fn insert_at_zero_prepends() {
        let m = apply_baseline(&ab(), &StrategyKind::InsertAt { index: 0 }, T, 0).unwrap();
        assert_eq!(tracks(&m), [99, 0, 1]);
    }

    #[test]
    fn insert_at_clamps() {
        let p = vec![Playlist::new(0, vec![SongId(0), SongId(1), SongId(2)])];
        let m = apply_baseline(&p, &StrategyKind::InsertAt { index: 7 }, T, 0).unwrap();
        assert_eq!(tracks(&m), [0, 1, 2, 99]);
        assert_eq!(m.log.placements[0].index, 3);
    }

    #[test]
    fn random_range_stays_in_range() {
        let ps: Vec<Playlist> = (0..200)
            .map(|i| Playlist::new(i, (0..20).map(SongId).collect()))
            .collect();
        let m = apply_baseline(&ps, &StrategyKind::RandomRange { from: 3, to: 6 }, T, 5).unwrap();
        assert!(m.log.placements.iter().all(|p| (3..=6).contains(&p.index)));
        let seen: std::collections::BTreeSet<usize> =
            m.log.placements.iter().map(|p| p.index).collect();
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn target_already_present_is_skipped() {
        let ps = vec![Playlist::new(3, vec![SongId(0), T])];
        let m = apply_baseline(&ps, &StrategyKind::Random, T, 0).unwrap();
        assert_eq!(m.playlists, ps);
        assert_eq!(m.log.skipped[0].reason, SkipReason::TargetPresent);
    }

    #[test]
    fn random_is_order_independent() {
        let ps: Vec<Playlist> = (0..30)
            .map(|i| Playlist::new(i, (0..10).map(SongId).collect()))
            .collect();
        let a = apply_baseline(&ps, &StrategyKind::Random, T, 9).unwrap();
        let rev: Vec<Playlist> = ps.iter().rev().cloned().collect();
        let b = apply_baseline(&rev, &StrategyKind::Random, T, 9).unwrap();
        let mut pa = a.log.placements.clone();
        let mut pb = b.log.placements.clone();
        pa.sort_by_key(|p| p.playlist_id);
        pb.sort_by_key(|p| p.playlist_id);
        assert_eq!(pa, pb);
    }
}
