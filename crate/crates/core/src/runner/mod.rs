//! Cross-validated experiments: split, manipulate, train, evaluate, report.

mod config;
mod report;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    self, generate_synthetic, load_canonical, load_mpd_slices, make_seed_splits,
    sample_collective, Catalog, Corpus, Playlist, SongId,
};
use crate::error::{Error, Result};
use crate::eval::{
    adversarial_baseline, context_similarity_report, count_hits, evaluate, externality_delta,
    optimistic_metrics, participant_experience, AmplificationReport, ContextSimilarityReport,
    ExternalityReport, FoldAmplification, MetricsReport, ParticipantReport, SuccessCount, Variant,
};
use crate::par;
use crate::recommender::{self, recommend_batch, Model, RecommenderConfig, TrainingLog};
use crate::seed;
use crate::stats::{
    compare_estimates, count_frequencies_with, estimate_partial, estimate_proxy,
    EstimateComparison, FrequencyEstimate, InequalityReport, SongFrequencyTable,
};
use crate::strategy::{
    self, check_authentic, AnchorKind, FrequencySource, ManipulationLog, StrategyConfig,
    StrategyContext,
};

pub use config::{CorpusSource, ExperimentConfig, TargetConfig, ValidationData};
pub use report::{emit_reports, recommender_dir};

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn load_corpus(source: &CorpusSource) -> Result<Corpus> {
    match source {
        CorpusSource::Mpd { paths } => {
            let load = load_mpd_slices(paths)?;
            if load.duplicates_dropped > 0 {
                log::info!("dropped {} duplicate tracks", load.duplicates_dropped);
            }
            Ok(load.corpus)
        }
        CorpusSource::Canonical { dir } => load_canonical(dir),
        CorpusSource::Synthetic(c) => generate_synthetic(c),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRow {
    pub song: SongId,
    pub kind: AnchorKind,
    pub times_targeted: usize,
    pub train_count: u64,
    pub true_frequency: f64,
    pub estimated_frequency: Option<f64>,
}

/// One strategy at one collective size within a fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRun {
    pub strategy: String,
    pub alpha: f64,
    pub collective: usize,
    pub placements: usize,
    pub skipped: usize,
    pub success: SuccessCount,
    pub amplification: FoldAmplification,
    pub standard: MetricsReport,
    pub adversarial: MetricsReport,
    pub optimistic: MetricsReport,
    pub anchors: Vec<AnchorRow>,
    pub estimate_comparison: Option<EstimateComparison>,
    pub externality: Option<ExternalityReport>,
    pub participant: Option<ParticipantReport>,
    pub context: Option<ContextSimilarityReport>,
    pub training_log: Option<TrainingLog>,
    pub manipulation_log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_seeds: usize,
    pub skipped_seeds: usize,
    /// Song counts in the clean training data (train and validation).
    pub train_counts: Vec<u64>,
    pub clean: MetricsReport,
    pub clean_success: SuccessCount,
    pub clean_rec_counts: Vec<u64>,
    pub track_inequality: Option<InequalityReport>,
    pub artist_inequality: Option<InequalityReport>,
    pub training_log: Option<TrainingLog>,
    pub runs: Vec<ActionRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommenderReport {
    pub label: String,
    pub config: RecommenderConfig,
    pub folds: Vec<FoldResult>,
    pub amplification: Vec<AmplificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub k: usize,
    pub target: SongId,
    pub songs: Vec<String>,
    pub artists: Vec<String>,
    pub recommenders: Vec<RecommenderReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub fold: usize,
    pub seed: u64,
    pub completed: bool,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub status: RunStatus,
    pub folds: Vec<FoldManifest>,
    pub artifacts: Vec<String>,
}

pub struct RunOutput {
    pub manifest: RunManifest,
    pub report: ExperimentReport,
}

/// Runs every fold and, when `out_dir` is set, writes the run artifacts and
/// derived reports there.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let corpus = load_corpus(&config.corpus)?;
    run_on_corpus(config, &corpus)
}

struct Failure {
    stage: String,
    error: Error,
}

trait Stage<T> {
    fn stage(self, name: &str) -> std::result::Result<T, Failure>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure {
            stage: name.to_owned(),
            error,
        })
    }
}

struct Timer(Vec<StageTiming>, Instant);

impl Timer {
    fn new() -> Self {
        Self(Vec::new(), Instant::now())
    }
    fn lap(&mut self, stage: &str) {
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: self.1.elapsed().as_secs_f64(),
        });
        self.1 = Instant::now();
    }
}

pub fn run_on_corpus(config: &ExperimentConfig, corpus: &Corpus) -> Result<RunOutput> {
    config.validate()?;
    let mut catalog: Catalog = (*corpus.catalog).clone();
    if catalog.song(&config.target.song).is_some() {
        return Err(Error::Config(format!(
            "target song `{}` already occurs in the corpus",
            config.target.song
        )));
    }
    let target = catalog.add_song(&config.target.song, &config.target.artist);
    let catalog = Arc::new(catalog);
    let corpus = corpus.with_catalog(Arc::clone(&catalog));

    let mut manifest = RunManifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        status: RunStatus::Complete,
        folds: Vec::new(),
        artifacts: Vec::new(),
    };
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let outcomes = par::map_range(config.execution, config.folds, |fold| {
        let fold_seed = seed::derive(config.master_seed, &[fold as u64]);
        let mut timer = Timer::new();
        let mut logs = Vec::new();
        let result = run_fold(config, &corpus, target, fold, fold_seed, &mut timer, &mut logs);
        (fold_seed, timer.0, logs, result)
    });
    let mut folds_out: Vec<Vec<FoldResult>> = vec![Vec::new(); config.recommenders.len()];
    let mut logs: Vec<(String, ManipulationLog)> = Vec::new();
    for (fold, (fold_seed, timings, fold_logs, result)) in outcomes.into_iter().enumerate() {
        manifest.folds.push(FoldManifest {
            fold,
            seed: fold_seed,
            completed: result.is_ok(),
            timings,
        });
        match result {
            Ok(per_rec) => {
                for (r, f) in per_rec.into_iter().enumerate() {
                    folds_out[r].push(f);
                }
                logs.extend(fold_logs);
            }
            Err(f) => {
                manifest.status = RunStatus::Failed {
                    stage: f.stage.clone(),
                    message: f.error.to_string(),
                };
                if let Some(dir) = &config.out_dir {
                    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
                }
                log::error!("fold {fold} failed in stage {}: {}", f.stage, f.error);
                return Err(f.error);
            }
        }
    }

    let mut recommenders = Vec::new();
    for (r, (rc, folds)) in config.recommenders.iter().zip(folds_out).enumerate() {
        let mut amplification = Vec::new();
        for (si, s) in config.strategies.iter().enumerate() {
            for (ai, &alpha) in config.alphas.iter().enumerate() {
                if alpha <= 0.0 {
                    continue;
                }
                let label = s.label();
                let per_fold: Vec<FoldAmplification> = folds
                    .iter()
                    .filter_map(|f| {
                        f.runs
                            .iter()
                            .find(|x| x.strategy == label && x.alpha == alpha)
                            .map(|x| x.amplification.clone())
                    })
                    .collect();
                let ci_seed = seed::derive(config.master_seed, &[seed::label("ci"), r as u64, si as u64, ai as u64]);
                amplification.push(AmplificationReport::from_folds(label, alpha, per_fold, ci_seed)?);
            }
        }
        recommenders.push(RecommenderReport {
            label: recommender_label(r, rc, config.recommenders.len()),
            config: rc.clone(),
            folds,
            amplification,
        });
    }
    let report = ExperimentReport {
        name: config.name.clone(),
        k: config.k,
        target,
        songs: catalog.songs().map(|s| catalog.song_name(s).to_owned()).collect(),
        artists: catalog
            .artists()
            .iter()
            .map(|&a| catalog.artist_name(a).to_owned())
            .collect(),
        recommenders,
    };

    if let Some(dir) = &config.out_dir {
        let log_dir = dir.join("logs");
        std::fs::create_dir_all(&log_dir).map_err(|e| Error::io(&log_dir, e))?;
        for (name, log) in &logs {
            write_json(&dir.join(name), log)?;
            manifest.artifacts.push(name.clone());
        }
        for rec in &report.recommenders {
            for f in &rec.folds {
                if let Some(tl) = &f.training_log {
                    let name = format!("logs/{}_fold{}_clean_training.csv", rec.label, f.fold);
                    tl.write_csv(dir.join(&name))?;
                    manifest.artifacts.push(name);
                }
                for run in &f.runs {
                    if let Some(tl) = &run.training_log {
                        let name = format!(
                            "logs/{}_fold{}_{}_a{}_training.csv",
                            rec.label, f.fold, run.strategy, run.alpha
                        );
                        tl.write_csv(dir.join(&name))?;
                        manifest.artifacts.push(name);
                    }
                }
            }
        }
        write_json(&dir.join(REPORT_FILE), &report)?;
        manifest.artifacts.push(REPORT_FILE.into());
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        let emitted = emit_reports(dir)?;
        manifest.artifacts.extend(emitted);
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    }
    Ok(RunOutput { manifest, report })
}

pub(crate) fn recommender_label(i: usize, rc: &RecommenderConfig, n: usize) -> String {
    if n == 1 {
        rc.kind_name().to_owned()
    } else {
        format!("{}{i}", rc.kind_name())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn by_ids(playlists: &[Playlist], ids: &BTreeSet<u64>) -> Vec<Playlist> {
    playlists.iter().filter(|p| ids.contains(&p.id)).cloned().collect()
}

fn replace_by_id(playlists: &[Playlist], replacements: &[Playlist]) -> Vec<Playlist> {
    let map: std::collections::HashMap<u64, &Playlist> =
        replacements.iter().map(|p| (p.id, p)).collect();
    playlists
        .iter()
        .map(|p| map.get(&p.id).map_or_else(|| p.clone(), |r| (*r).clone()))
        .collect()
}

fn inequality(values: &[f64]) -> Option<InequalityReport> {
    InequalityReport::from_values(values).ok()
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    config: &ExperimentConfig,
    corpus: &Corpus,
    target: SongId,
    fold: usize,
    fold_seed: u64,
    timer: &mut Timer,
    logs: &mut Vec<(String, ManipulationLog)>,
) -> std::result::Result<Vec<FoldResult>, Failure> {
    let exec = config.execution;
    let catalog = &corpus.catalog;
    let n_songs = catalog.len();
    let artist_of = catalog.artists();

    let parts = corpus::split(
        corpus,
        config.n_test,
        config.n_val,
        seed::derive(fold_seed, &[seed::label("split")]),
    )
    .stage("split")?;
    let seeds = make_seed_splits(&parts.test, seed::derive(fold_seed, &[seed::label("seeds")]));
    if seeds.splits.is_empty() {
        return Err(Failure {
            stage: "split".into(),
            error: Error::Undefined("no test playlist can be split into seed and truth".into()),
        });
    }
    let seed_refs: Vec<&[SongId]> = seeds.splits.iter().map(|s| s.seed.as_slice()).collect();
    let truths: Vec<&[SongId]> = seeds.splits.iter().map(|s| s.ground_truth.as_slice()).collect();
    let train = &parts.train.playlists;
    let val = &parts.val.playlists;
    let train_val: Vec<Playlist> = train.iter().chain(val).cloned().collect();
    let table: SongFrequencyTable = count_frequencies_with(&train_val, n_songs, exec);
    timer.lap("split");

    // collectives depend only on (fold, alpha), so strategies are compared
    // on the same participants
    let collectives: Vec<(BTreeSet<u64>, BTreeSet<u64>)> = config
        .alphas
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let s = seed::derive(fold_seed, &[seed::label("collective"), ai as u64]);
            Ok((
                sample_collective(&parts.train, alpha, seed::derive(s, &[0]))?,
                sample_collective(&parts.val, alpha, seed::derive(s, &[1]))?,
            ))
        })
        .collect::<Result<_>>()
        .stage("collective")?;

    let mut out = Vec::new();
    for (ri, rc) in config.recommenders.iter().enumerate() {
        let rec_label = recommender_label(ri, rc, config.recommenders.len());
        let rc = with_seed(rc, seed::derive(fold_seed, &[seed::label("model"), ri as u64]));
        let (clean_model, clean_log) =
            recommender::train(&rc, train, val, n_songs).stage("train_clean")?;
        timer.lap("train_clean");
        let clean_recs =
            recommend_batch(&clean_model, &seed_refs, config.k, exec).stage("evaluate_clean")?;
        let clean_lists: Vec<Vec<SongId>> = clean_recs.iter().map(|r| r.songs.clone()).collect();
        let clean_metrics = MetricsReport::from_seeds(
            Variant::Clean,
            &evaluate(&clean_lists, &truths, artist_of),
        );
        let clean_success = count_hits(&clean_recs, target).stage("evaluate_clean")?;
        let clean_rec_counts = crate::eval::recommendation_counts(&clean_recs, n_songs);
        let track_values: Vec<f64> = clean_rec_counts
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target.index())
            .map(|(_, &c)| c as f64)
            .collect();
        let mut per_artist = vec![0.0; catalog.n_artists()];
        for (i, &c) in clean_rec_counts.iter().enumerate() {
            if i != target.index() {
                per_artist[artist_of[i].0 as usize] += c as f64;
            }
        }
        per_artist.remove(artist_of[target.index()].0 as usize);
        timer.lap("evaluate_clean");

        let mut runs = Vec::new();
        for (si, strat) in config.strategies.iter().enumerate() {
            for (ai, &alpha) in config.alphas.iter().enumerate() {
                if alpha <= 0.0 {
                    continue;
                }
                let run_seed = seed::derive(fold_seed, &[seed::label("run"), ri as u64, si as u64, ai as u64]);
                let (ids_train, ids_val) = &collectives[ai];
                let run = run_action(ActionInputs {
                    fold,
                    config,
                    catalog,
                    rc: &rc,
                    strat,
                    alpha,
                    target,
                    train,
                    val,
                    train_val: &train_val,
                    table: &table,
                    ids_train,
                    ids_val,
                    clean_model: &clean_model,
                    clean_recs: &clean_recs,
                    clean_lists: &clean_lists,
                    seed_refs: &seed_refs,
                    truths: &truths,
                    clean_success,
                    run_seed,
                })?;
                timer.lap(&format!("{}_{}", strat.label(), alpha));
                let name = format!(
                    "logs/{rec_label}_fold{fold}_{}_a{alpha}_manipulation.json",
                    strat.label()
                );
                let (mut run, log) = run;
                run.manipulation_log = name.clone();
                logs.push((name, log));
                runs.push(run);
            }
        }
        out.push(FoldResult {
            fold,
            seed: fold_seed,
            n_train: train.len(),
            n_val: val.len(),
            n_test: parts.test.n(),
            n_seeds: seeds.splits.len(),
            skipped_seeds: seeds.skipped,
            train_counts: table.counts().to_vec(),
            clean: clean_metrics,
            clean_success,
            clean_rec_counts,
            track_inequality: inequality(&track_values),
            artist_inequality: inequality(&per_artist),
            training_log: clean_log,
            runs,
        });
    }
    Ok(out)
}

fn with_seed(rc: &RecommenderConfig, s: u64) -> RecommenderConfig {
    match rc {
        RecommenderConfig::Neural(c) => {
            let mut c = c.clone();
            c.seed = seed::derive(c.seed, &[s]);
            RecommenderConfig::Neural(c)
        }
        other => other.clone(),
    }
}

struct ActionInputs<'a> {
    fold: usize,
    config: &'a ExperimentConfig,
    catalog: &'a Catalog,
    rc: &'a RecommenderConfig,
    strat: &'a StrategyConfig,
    alpha: f64,
    target: SongId,
    train: &'a [Playlist],
    val: &'a [Playlist],
    train_val: &'a [Playlist],
    table: &'a SongFrequencyTable,
    ids_train: &'a BTreeSet<u64>,
    ids_val: &'a BTreeSet<u64>,
    clean_model: &'a Model,
    clean_recs: &'a [recommender::Recommendation],
    clean_lists: &'a [Vec<SongId>],
    seed_refs: &'a [&'a [SongId]],
    truths: &'a [&'a [SongId]],
    clean_success: SuccessCount,
    run_seed: u64,
}

fn run_action(
    a: ActionInputs<'_>,
) -> std::result::Result<(ActionRun, ManipulationLog), Failure> {
    let exec = a.config.execution;
    let n_songs = a.catalog.len();
    let artist_of = a.catalog.artists();
    let k = a.config.k;

    let mut collective = by_ids(a.train, a.ids_train);
    collective.extend(by_ids(a.val, a.ids_val));
    let all_ids: BTreeSet<u64> = a.ids_train.union(a.ids_val).copied().collect();

    let estimate = match a.strat.kind.frequency_source() {
        None => None,
        Some(FrequencySource::Full) => Some(FrequencyEstimate::full(a.table)),
        Some(FrequencySource::Partial { beta }) => {
            let extra: Vec<Playlist> = a
                .train_val
                .iter()
                .filter(|p| !all_ids.contains(&p.id))
                .cloned()
                .collect();
            Some(
                estimate_partial(
                    &collective,
                    &extra,
                    *beta,
                    n_songs,
                    seed::derive(a.run_seed, &[seed::label("partial")]),
                )
                .stage("estimate")?,
            )
        }
        Some(FrequencySource::Proxy { path }) => {
            Some(estimate_proxy(path, a.catalog).stage("estimate")?.resized(n_songs))
        }
    };
    let manip = strategy::apply(
        a.strat,
        &collective,
        a.target,
        StrategyContext {
            estimate: estimate.as_ref(),
            n_songs,
            rng_seed: seed::derive(a.run_seed, &[seed::label("strategy")]),
            exec,
        },
    )
    .stage("manipulate")?;

    for (orig, new) in collective.iter().zip(&manip.playlists) {
        let changed = orig.tracks != new.tracks;
        let ok = !changed
            || (check_authentic(&orig.tracks, &new.tracks)
                && new.tracks.iter().filter(|&&s| s == a.target).count() == 1);
        if !ok {
            return Err(Failure {
                stage: "authenticity".into(),
                error: Error::Undefined(format!(
                    "playlist {} violates the single-insertion constraint",
                    orig.id
                )),
            });
        }
    }
    let log = manip.log;
    let manip_train = replace_by_id(a.train, &manip.playlists);
    let manip_val = replace_by_id(a.val, &manip.playlists);
    let val_for_model = match a.config.validation {
        ValidationData::Manipulated => &manip_val,
        ValidationData::Clean => a.val,
    };
    let occurrences = manip_train
        .iter()
        .chain(&manip_val)
        .flat_map(|p| &p.tracks)
        .filter(|&&s| s == a.target)
        .count();
    if occurrences != log.placements.len() {
        return Err(Failure {
            stage: "authenticity".into(),
            error: Error::Undefined(format!(
                "target occurs {occurrences} times after {} placements",
                log.placements.len()
            )),
        });
    }
    let (model, training_log) =
        recommender::train(a.rc, &manip_train, val_for_model, n_songs).stage("train_manipulated")?;

    let recs = recommend_batch(&model, a.seed_refs, k, exec).stage("evaluate")?;
    let lists: Vec<Vec<SongId>> = recs.iter().map(|r| r.songs.clone()).collect();
    let success = count_hits(&recs, a.target).stage("evaluate")?;
    let amplification =
        FoldAmplification::new(a.fold, a.alpha, success, a.clean_success).stage("evaluate")?;
    let hits: Vec<bool> = recs.iter().map(|r| r.contains(a.target)).collect();
    let standard =
        MetricsReport::from_seeds(Variant::Standard, &evaluate(&lists, a.truths, artist_of));
    let adversarial = adversarial_baseline(a.clean_lists, a.truths, &hits, artist_of, a.target);
    let optimistic = optimistic_metrics(&lists, a.truths, artist_of, a.target);

    let anchor_counts = log.anchor_counts();
    let anchors: Vec<AnchorRow> = anchor_counts
        .iter()
        .map(|(&song, &(kind, times))| AnchorRow {
            song,
            kind,
            times_targeted: times,
            train_count: a.table.count(song),
            true_frequency: a.table.relative(song),
            estimated_frequency: estimate.as_ref().and_then(|e| e.get(song)),
        })
        .collect();
    let estimate_comparison = estimate.as_ref().map(|e| {
        let songs: Vec<SongId> = anchor_counts.keys().copied().collect();
        compare_estimates(e, a.table, &songs)
    });

    let (externality, participant, context) = if a.config.success_only {
        (None, None, None)
    } else {
        let ext = externality_delta(
            a.clean_recs,
            &recs,
            a.table.counts(),
            Some(&log),
            a.target,
            seed::derive(a.run_seed, &[seed::label("bins")]),
        );
        let part = participant_experience(&collective, &log, a.clean_model, &model, k, artist_of, exec)
            .stage("participant")?;
        let ctx = context_similarity_report(
            &collective,
            &log,
            a.clean_model,
            &model,
            k,
            a.config.max_contexts,
            exec,
        )
        .stage("context")?;
        (Some(ext), Some(part), Some(ctx))
    };

    Ok((
        ActionRun {
            strategy: a.strat.label(),
            alpha: a.alpha,
            collective: collective.len(),
            placements: log.placements.len(),
            skipped: log.skipped.len(),
            success,
            amplification,
            standard,
            adversarial,
            optimistic,
            anchors,
            estimate_comparison,
            externality,
            participant,
            context,
            training_log,
            manipulation_log: String::new(),
        },
        log,
    ))
}
