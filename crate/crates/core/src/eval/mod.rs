//! Measurement of collective success, recommendation quality and
//! externalities.

mod bootstrap;
mod externality;
mod metrics;
mod participant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::corpus::{SeedSplit, SongId};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::recommender::{recommend_batch, Recommendation, Scorer};

pub use bootstrap::{bootstrap_ci, Interval, Summary, DEFAULT_RESAMPLES};
pub use externality::{
    externality_delta, recommendation_counts, ExternalityReport, FrequencyBin, GroupSummary,
    SongGroup, N_BINS,
};
pub use metrics::{
    adversarial_baseline, clicks, clicks_by, evaluate, ndcg, ndcg_by, optimistic_metrics,
    r_precision, r_precision_by, MetricsReport, SeedMetrics, Truth, Variant, ARTIST_MATCH_WEIGHT,
};
pub use participant::{
    context_similarity_report, overlap_precision, participant_experience, ContextRow,
    ContextSimilarityReport, Distribution, ParticipantReport,
};

/// Seeds whose top-K contains the target, out of all evaluated seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessCount {
    pub hits: u64,
    pub seeds: u64,
}

impl SuccessCount {
    pub fn rate(self) -> f64 {
        self.hits as f64 / self.seeds as f64
    }

    pub fn ratio(self) -> BigRational {
        BigRational::new(BigInt::from(self.hits), BigInt::from(self.seeds))
    }
}

pub fn count_hits(recs: &[Recommendation], target: SongId) -> Result<SuccessCount> {
    if recs.is_empty() {
        return Err(Error::Undefined("success rate over an empty test set".into()));
    }
    Ok(SuccessCount {
        hits: recs.iter().filter(|r| r.contains(target)).count() as u64,
        seeds: recs.len() as u64,
    })
}

/// Fraction of test seeds whose top-K contains `target`. A target outside
/// the model's vocabulary is never recommended.
pub fn success_rate(
    model: &dyn Scorer,
    splits: &[SeedSplit],
    target: SongId,
    k: usize,
    exec: Execution,
) -> Result<SuccessCount> {
    if splits.is_empty() {
        return Err(Error::Undefined("success rate over an empty test set".into()));
    }
    let seeds: Vec<&[SongId]> = splits.iter().map(|s| s.seed.as_slice()).collect();
    count_hits(&recommend_batch(model, &seeds, k, exec)?, target)
}

fn alpha_ratio(alpha: f64) -> Result<BigRational> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Undefined(format!("amplification at alpha = {alpha}")));
    }
    BigRational::from_float(alpha).ok_or_else(|| Error::NonFinite(format!("alpha = {alpha}")))
}

/// `(S(α) − S(0)) / α` in exact rational arithmetic, with `alpha` taken at
/// its exact binary value.
pub fn amplification_exact(
    s_alpha: &BigRational,
    s0: &BigRational,
    alpha: f64,
) -> Result<BigRational> {
    Ok((s_alpha - s0) / alpha_ratio(alpha)?)
}

/// `(S(α) − S(0)) / α`, correctly rounded.
pub fn amplification(s_alpha: f64, s0: f64, alpha: f64) -> Result<f64> {
    let (a, b) = (
        BigRational::from_float(s_alpha),
        BigRational::from_float(s0),
    );
    let (Some(a), Some(b)) = (a, b) else {
        return Err(Error::NonFinite(format!("success rates {s_alpha}, {s0}")));
    };
    amplification_exact(&a, &b, alpha)?
        .to_f64()
        .ok_or_else(|| Error::NonFinite("amplification".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAmplification {
    pub fold: usize,
    pub with_action: SuccessCount,
    pub without_action: SuccessCount,
    pub s_alpha: f64,
    pub s0: f64,
    pub amp: f64,
}

impl FoldAmplification {
    pub fn new(
        fold: usize,
        alpha: f64,
        with_action: SuccessCount,
        without_action: SuccessCount,
    ) -> Result<Self> {
        let exact = amplification_exact(&with_action.ratio(), &without_action.ratio(), alpha)?;
        Ok(Self {
            fold,
            with_action,
            without_action,
            s_alpha: with_action.rate(),
            s0: without_action.rate(),
            amp: exact
                .to_f64()
                .ok_or_else(|| Error::NonFinite("amplification".into()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub strategy: String,
    pub alpha: f64,
    pub s_alpha: f64,
    pub s0: f64,
    pub amp: f64,
    pub ci: Interval,
    pub folds: Vec<FoldAmplification>,
}

impl AmplificationReport {
    pub fn from_folds(
        strategy: String,
        alpha: f64,
        folds: Vec<FoldAmplification>,
        rng_seed: u64,
    ) -> Result<Self> {
        let mean = |f: fn(&FoldAmplification) -> f64| {
            folds.iter().map(f).sum::<f64>() / folds.len().max(1) as f64
        };
        let amps: Vec<f64> = folds.iter().map(|f| f.amp).collect();
        let ci = bootstrap_ci(&amps, 0.95, DEFAULT_RESAMPLES, rng_seed)?;
        Ok(Self {
            strategy,
            alpha,
            s_alpha: mean(|f| f.s_alpha),
            s0: mean(|f| f.s0),
            amp: mean(|f| f.amp),
            ci,
            folds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Playlist;
    use crate::recommender::{train_oracle, OracleConfig};

    struct Forced(usize, SongId);

    impl Scorer for Forced {
        fn n_songs(&self) -> usize {
            self.0
        }
        fn score_all(&self, _seed: &[SongId], out: &mut Vec<f64>) {
            out.clear();
            out.resize(self.0, 0.0);
            if let Some(v) = out.get_mut(self.1.index()) {
                *v = 1.0;
            }
        }
    }

    fn split(seed: &[u32]) -> SeedSplit {
        SeedSplit {
            playlist_id: 0,
            seed: seed.iter().map(|&i| SongId(i)).collect(),
            ground_truth: vec![SongId(0)],
        }
    }

    #[test]
    fn amplification_arithmetic() {
        assert_eq!(amplification(0.05, 0.0, 0.002).unwrap(), 25.0);
        assert_eq!(amplification(0.3, 0.3, 0.01).unwrap(), 0.0);
        assert!(amplification(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn amplification_identity_is_exact() {
        for hits in 0..=200u64 {
            for base in [0u64, 1, 7] {
                for alpha in [1e-5, 2.5e-4, 1e-3, 0.002, 0.013, 0.02] {
                    let sa = SuccessCount { hits, seeds: 200 };
                    let s0 = SuccessCount { hits: base, seeds: 200 };
                    let amp = amplification_exact(&sa.ratio(), &s0.ratio(), alpha).unwrap();
                    let back = amp * BigRational::from_float(alpha).unwrap() + s0.ratio();
                    assert_eq!(back, sa.ratio());
                }
            }
        }
    }

    #[test]
    fn success_extremes() {
        let splits = vec![split(&[1]), split(&[2, 3])];
        let forced = Forced(6, SongId(5));
        let s = |t| success_rate(&forced, &splits, SongId(t), 2, Execution::Serial).unwrap().rate();
        assert_eq!(s(5), 1.0);
        // target beyond the vocabulary
        assert_eq!(s(9), 0.0);
        assert!(success_rate(&forced, &[], SongId(5), 2, Execution::Serial).is_err());
    }

    #[test]
    fn success_matches_enumeration_on_tiny_corpus() {
        let ps: Vec<Playlist> = vec![
            Playlist::new(0, vec![SongId(0), SongId(1), SongId(4)]),
            Playlist::new(1, vec![SongId(2), SongId(1), SongId(4)]),
            Playlist::new(2, vec![SongId(3), SongId(2)]),
        ];
        let model = train_oracle(&ps, 5, &OracleConfig::default());
        let splits: Vec<SeedSplit> = (0..5).map(|i| split(&[i])).collect();
        let target = SongId(4);
        let s = success_rate(&model, &splits, target, 1, Execution::Serial).unwrap().rate();
        // top-1 after each single-song seed, by direct score comparison
        let mut hits = 0;
        for sp in &splits {
            let mut scores = Vec::new();
            model.score_all(&sp.seed, &mut scores);
            let best = (0..5u32)
                .filter(|i| *i != sp.seed[0].0)
                .max_by(|a, b| scores[*a as usize].total_cmp(&scores[*b as usize]).then(b.cmp(a)))
                .unwrap();
            hits += usize::from(best == target.0);
        }
        assert_eq!(s, hits as f64 / 5.0);
    }
}
