//! CSV extracts of a finished run, derived from `report.json`.

use std::path::{Path, PathBuf};

use super::{read_json, write_json, ExperimentReport, RecommenderReport, RunManifest};
use super::{MANIFEST_FILE, REPORT_FILE};
use crate::error::{Error, Result};
use crate::eval::Summary;
use crate::strategy::AnchorKind;

pub const AMPLIFICATION_CSV: &str = "amplification.csv";
pub const TEASER_CSV: &str = "teaser.csv";
pub const PERFORMANCE_CSV: &str = "performance.csv";
pub const DELTA_BINS_CSV: &str = "delta_r_bins.csv";
pub const ANCHOR_GROUPS_CSV: &str = "anchor_groups.csv";
pub const ANCHORS_CSV: &str = "anchors.csv";
pub const LORENZ_CSV: &str = "lorenz.csv";
pub const INEQUALITY_JSON: &str = "inequality.json";
pub const PARTICIPANT_CSV: &str = "participant.csv";
pub const CONTEXT_CSV: &str = "context_similarity.csv";

/// Directory (relative to the run directory) holding one recommender's
/// extracts: the run directory itself when there is only one.
pub fn recommender_dir(report: &ExperimentReport, rec: &RecommenderReport) -> PathBuf {
    if report.recommenders.len() == 1 {
        PathBuf::new()
    } else {
        PathBuf::from(&rec.label)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_cells(s: &Option<Summary>) -> [String; 3] {
    match s {
        Some(s) => [s.mean.to_string(), s.ci_low.to_string(), s.ci_high.to_string()],
        None => Default::default(),
    }
}

fn kind_str(k: AnchorKind) -> &'static str {
    match k {
        AnchorKind::Direct => "direct",
        AnchorKind::Indirect => "indirect",
        AnchorKind::None => "none",
    }
}

struct Out<'a> {
    root: &'a Path,
    sub: PathBuf,
    written: Vec<String>,
}

impl Out<'_> {
    fn csv(&mut self, name: &str) -> Result<csv::Writer<std::fs::File>> {
        let rel = self.sub.join(name);
        let path = self.root.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.written.push(rel.to_string_lossy().into_owned());
        Ok(csv::Writer::from_path(&path)?)
    }
}

/// Writes every CSV/JSON extract for the run in `dir` and returns their
/// paths relative to `dir`.
pub fn emit_reports(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let missing: Vec<String> = [REPORT_FILE, MANIFEST_FILE]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| dir.join(f).display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let report: ExperimentReport = read_json(&dir.join(REPORT_FILE))?;
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if let super::RunStatus::Failed { stage, .. } = &manifest.status {
        return Err(Error::MissingArtifacts(vec![format!(
            "results of failed stage `{stage}`"
        )]));
    }
    let mut written = Vec::new();
    for rec in &report.recommenders {
        let mut out = Out {
            root: dir,
            sub: recommender_dir(&report, rec),
            written: Vec::new(),
        };
        emit_recommender(&report, rec, &mut out)?;
        written.extend(out.written);
    }
    Ok(written)
}

fn emit_recommender(report: &ExperimentReport, rec: &RecommenderReport, out: &mut Out<'_>) -> Result<()> {
    let target = report.target;

    let mut w = out.csv(AMPLIFICATION_CSV)?;
    w.write_record(["strategy", "alpha", "fold", "S", "Amp", "ci_low", "ci_high"])?;
    for a in &rec.amplification {
        for f in &a.folds {
            w.write_record([
                a.strategy.clone(),
                a.alpha.to_string(),
                f.fold.to_string(),
                f.s_alpha.to_string(),
                f.amp.to_string(),
                a.ci.low.to_string(),
                a.ci.high.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;

    let mut w = out.csv(PERFORMANCE_CSV)?;
    w.write_record(["strategy", "alpha", "fold", "variant", "n_seeds", "ndcg", "r_precision", "clicks"])?;
    for f in &rec.folds {
        let c = &f.clean;
        w.write_record([
            "none".into(),
            "0".into(),
            f.fold.to_string(),
            c.variant.as_str().into(),
            c.n_seeds.to_string(),
            c.ndcg.to_string(),
            c.r_precision.to_string(),
            c.clicks.to_string(),
        ])?;
        for r in &f.runs {
            for m in [&r.adversarial, &r.standard, &r.optimistic] {
                w.write_record([
                    r.strategy.clone(),
                    r.alpha.to_string(),
                    f.fold.to_string(),
                    m.variant.as_str().into(),
                    m.n_seeds.to_string(),
                    m.ndcg.to_string(),
                    m.r_precision.to_string(),
                    m.clicks.to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;

    let mut w = out.csv(TEASER_CSV)?;
    w.write_record(["strategy", "alpha", "fold", "song", "train_count", "test_rec_count", "is_target"])?;
    for f in &rec.folds {
        for r in &f.runs {
            let Some(ext) = &r.externality else { continue };
            for (i, name) in report.songs.iter().enumerate() {
                let is_target = i == target.index();
                let train = if is_target {
                    r.placements as u64
                } else {
                    f.train_counts[i]
                };
                w.write_record([
                    r.strategy.clone(),
                    r.alpha.to_string(),
                    f.fold.to_string(),
                    name.clone(),
                    train.to_string(),
                    ext.manipulated_counts[i].to_string(),
                    u8::from(is_target).to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;

    let mut w = out.csv(DELTA_BINS_CSV)?;
    w.write_record([
        "strategy", "alpha", "fold", "bin", "log10_low", "log10_high", "n_songs", "mean_delta",
        "ci_low", "ci_high",
    ])?;
    let mut g = out.csv(ANCHOR_GROUPS_CSV)?;
    g.write_record([
        "strategy", "alpha", "fold", "group", "n_songs", "total_delta", "mean_delta", "ci_low",
        "ci_high",
    ])?;
    for f in &rec.folds {
        for r in &f.runs {
            let Some(ext) = &r.externality else { continue };
            for b in &ext.bins {
                let [m, lo, hi] = summary_cells(&b.delta);
                w.write_record([
                    r.strategy.clone(),
                    r.alpha.to_string(),
                    f.fold.to_string(),
                    b.bin.to_string(),
                    b.log10_low.to_string(),
                    b.log10_high.to_string(),
                    b.n_songs.to_string(),
                    m,
                    lo,
                    hi,
                ])?;
            }
            for grp in &ext.groups {
                let [m, lo, hi] = summary_cells(&grp.delta);
                g.write_record([
                    r.strategy.clone(),
                    r.alpha.to_string(),
                    f.fold.to_string(),
                    grp.group.as_str().into(),
                    grp.n_songs.to_string(),
                    grp.total_delta.to_string(),
                    m,
                    lo,
                    hi,
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;
    g.flush().map_err(|e| Error::io(out.root, e))?;

    let mut w = out.csv(ANCHORS_CSV)?;
    w.write_record([
        "strategy", "alpha", "fold", "song", "kind", "times_targeted", "train_count",
        "true_frequency", "estimated_frequency",
    ])?;
    for f in &rec.folds {
        for r in &f.runs {
            for a in &r.anchors {
                w.write_record([
                    r.strategy.clone(),
                    r.alpha.to_string(),
                    f.fold.to_string(),
                    report.songs[a.song.index()].clone(),
                    kind_str(a.kind).into(),
                    a.times_targeted.to_string(),
                    a.train_count.to_string(),
                    a.true_frequency.to_string(),
                    opt(a.estimated_frequency),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;

    let mut w = out.csv(LORENZ_CSV)?;
    w.write_record(["fold", "level", "x", "y"])?;
    let mut gini = Vec::new();
    for f in &rec.folds {
        for (level, ineq) in [("track", &f.track_inequality), ("artist", &f.artist_inequality)] {
            let Some(ineq) = ineq else { continue };
            gini.push(serde_json::json!({"fold": f.fold, "level": level, "gini": ineq.gini, "lorenz": ineq.lorenz}));
            for [x, y] in &ineq.lorenz {
                w.write_record([f.fold.to_string(), level.into(), x.to_string(), y.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;
    let rel = out.sub.join(INEQUALITY_JSON);
    write_json(&out.root.join(&rel), &gini)?;
    out.written.push(rel.to_string_lossy().into_owned());

    let mut w = out.csv(PARTICIPANT_CSV)?;
    w.write_record([
        "strategy", "alpha", "fold", "model", "n_participants", "n_empty_seed", "ndcg",
        "r_precision", "clicks", "overlap_precision",
    ])?;
    let mut c = out.csv(CONTEXT_CSV)?;
    c.write_record([
        "strategy", "alpha", "fold", "playlist_id", "anchor", "kind", "context_len",
        "anchor_clean", "anchor_manipulated", "target_clean", "target_manipulated",
        "threshold_clean", "threshold_manipulated", "target_rank",
    ])?;
    for f in &rec.folds {
        for r in &f.runs {
            if let Some(p) = &r.participant {
                for (model, m) in [("clean", &p.clean), ("manipulated", &p.manipulated)] {
                    w.write_record([
                        r.strategy.clone(),
                        r.alpha.to_string(),
                        f.fold.to_string(),
                        model.into(),
                        p.n_participants.to_string(),
                        p.n_empty_seed.to_string(),
                        m.ndcg.to_string(),
                        m.r_precision.to_string(),
                        m.clicks.to_string(),
                        p.overlap_precision.to_string(),
                    ])?;
                }
            }
            if let Some(ctx) = &r.context {
                for row in &ctx.rows {
                    c.write_record([
                        r.strategy.clone(),
                        r.alpha.to_string(),
                        f.fold.to_string(),
                        row.playlist_id.to_string(),
                        report.songs[row.anchor.index()].clone(),
                        kind_str(row.kind).into(),
                        row.context_len.to_string(),
                        row.anchor_clean.to_string(),
                        row.anchor_manipulated.to_string(),
                        row.target_clean.to_string(),
                        row.target_manipulated.to_string(),
                        row.threshold_clean.to_string(),
                        row.threshold_manipulated.to_string(),
                        row.target_rank.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(out.root, e))?;
    c.flush().map_err(|e| Error::io(out.root, e))?;
    Ok(())
}
