//! End-to-end experiment runners shared by the command line and the
//! acceptance suite. Each returns typed results plus a [`Report`].

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::backbone::{fit_als, rmse, BaselineKind, BaselineModel, MfModel, Predictor};
use crate::config::ExperimentConfig;
use crate::confidence::{
    combined_confidence, count_confidence, ensemble_confidence, random_confidence, recency_confidence,
    residual_predicted_confidence, score_records, score_test_set, ConfidenceKind, ConfidenceSignal, HalfSplit,
    ScoredPrediction,
};
use crate::dataset::{load_ratings, make_split, OutcomeRecord, RatingRecord, SplitDataset, SplitKind, SplitSpec};
use crate::diagnostics::{
    abstention_curve, accuracy_abstention_curve, check_c1, check_c2, decomposition_identity_check, ece,
    tier_report, within_tolerance_accuracy, AbstentionCurve, C1Report, C1Thresholds, CalibrationReport,
    QualityMode, Tier, TierReport, ZoneReport,
};
use crate::error::{Error, Result};
use crate::exceptions::{exception_report, fp_fn_ratio, ExceptionReport, FpFnReport};
use crate::recal::{block_experiment, BlockResult, StreamView};
use crate::report::{num, opt_num, Report, Table};
use crate::synthetic::{
    contextual_over_seeds, generate, sigma_sweep, structural_over_seeds, ContextualSummary, StructuralSummary,
    SweepPoint,
};

/// Ratings named by the config: a file under `data_dir`, or a simulated
/// world flattened to train-then-test records.
pub fn load_records(cfg: &ExperimentConfig, data_dir: &Path) -> Result<Vec<RatingRecord>> {
    if let Some(spec) = &cfg.data.synthetic {
        let (mut train, test) = generate(spec)?.to_records();
        train.extend(test);
        return Ok(train);
    }
    load_ratings(cfg.data_path(data_dir))
}

pub fn split_spec(kind: SplitKind, cfg: &ExperimentConfig) -> SplitSpec {
    SplitSpec::new(kind)
        .with_seed(cfg.split.seed)
        .with_test_fraction(cfg.split.test_fraction)
}

/// A split with its factorization and both sides scored.
#[derive(Debug, Clone)]
pub struct FittedSplit {
    pub split: SplitDataset,
    pub model: MfModel<f64>,
    pub train_scored: Vec<ScoredPrediction<f64>>,
    pub test_scored: Vec<ScoredPrediction<f64>>,
}

impl FittedSplit {
    pub fn predicted(&self) -> Vec<f64> {
        self.test_scored.iter().map(|s| s.predicted).collect()
    }

    pub fn actual(&self) -> Vec<f64> {
        self.test_scored.iter().map(|s| s.actual).collect()
    }
}

pub fn fit_split(records: &[RatingRecord], kind: SplitKind, cfg: &ExperimentConfig) -> Result<FittedSplit> {
    let split = make_split(records, &split_spec(kind, cfg))?;
    let model: MfModel<f64> = fit_als(&split.train, &cfg.backbone)?;
    let train_scored = score_records(&split, &model, &split.train);
    let test_scored = score_test_set(&split, &model);
    Ok(FittedSplit {
        split,
        model,
        train_scored,
        test_scored,
    })
}

fn fit_all(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<Vec<FittedSplit>> {
    cfg.split
        .kinds
        .par_iter()
        .map(|&k| fit_split(records, k, cfg))
        .collect()
}

fn pct(f: f64) -> String {
    format!("{}%", (f * 100.0).round())
}

fn curve_columns<'a>(lead: &[&'a str], fractions: &[f64], tail: &[&'a str]) -> Table {
    let names: Vec<String> = lead
        .iter()
        .map(|s| s.to_string())
        .chain(fractions.iter().map(|&f| pct(f)))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect();
    Table {
        columns: names,
        rows: Vec::new(),
    }
}

fn curve_cells(c: &AbstentionCurve<f64>) -> Vec<Value> {
    c.metric.iter().map(|&m| num(m)).collect()
}

fn in_band(x: f64, band: [f64; 2]) -> bool {
    x >= band[0] && x <= band[1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub model: String,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitClaims {
    pub kind: SplitKind,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: Vec<RmseRow>,
    pub exceptions: ExceptionReport<f64>,
    pub fp_fn: FpFnReport,
    pub count_curve: AbstentionCurve<f64>,
    pub count_warnings: Vec<String>,
    /// Count confidence against the within-tolerance accuracy indicator.
    pub c1: C1Report<f64>,
}

impl SplitClaims {
    pub fn rmse_of(&self, model: &str) -> Option<f64> {
        self.rmse.iter().find(|r| r.model == model).map(|r| r.rmse)
    }
}

pub fn split_claims(f: &FittedSplit, cfg: &ExperimentConfig) -> Result<SplitClaims> {
    let pred = f.predicted();
    let act = f.actual();
    let mut rows = vec![RmseRow {
        model: "mf".into(),
        rmse: rmse(&pred, &act)?,
    }];
    for kind in BaselineKind::ALL {
        let b: BaselineModel<f64> = BaselineModel::fit(kind, &f.split.train)?;
        rows.push(RmseRow {
            model: kind.as_str().into(),
            rmse: rmse(&b.predict_all(&f.split.test), &act)?,
        });
    }
    let count: ConfidenceSignal<f64> = count_confidence(&f.split);
    let acc = within_tolerance_accuracy(&pred, &act, cfg.diagnostics.accuracy_tolerance);
    Ok(SplitClaims {
        kind: f.split.spec.kind,
        n_train: f.split.train.len(),
        n_test: f.split.test.len(),
        rmse: rows,
        exceptions: exception_report(&f.train_scored, &f.test_scored, &cfg.confidence.logistic())?,
        fp_fn: fp_fn_ratio(&pred, &act, &cfg.diagnostics.binarization)?,
        count_curve: abstention_curve(&pred, &act, &count.scores, &cfg.diagnostics.fractions)?,
        count_warnings: count.warnings.clone(),
        c1: check_c1(&count.scores, &acc, &cfg.diagnostics.c1)?,
    })
}

/// One confidence signal's abstention curve on the temporal split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalCurve {
    pub signal: ConfidenceKind,
    /// `test` for the full test set, `eval_half` for the held-out half used
    /// by learned signals.
    pub evaluated_on: String,
    pub n: usize,
    pub curve: AbstentionCurve<f64>,
    pub warnings: Vec<String>,
}

impl SignalCurve {
    fn new(signal: &ConfidenceSignal<f64>, evaluated_on: &str, pred: &[f64], act: &[f64], fractions: &[f64]) -> Result<Self> {
        let p = signal.select(pred);
        let a = signal.select(act);
        Ok(Self {
            signal: signal.kind,
            evaluated_on: evaluated_on.into(),
            n: p.len(),
            curve: abstention_curve(&p, &a, &signal.scores, fractions)?,
            warnings: signal.warnings.clone(),
        })
    }
}

/// Every configured confidence signal on one fitted split. Learned signals
/// cover the evaluation half only; the rest cover the full test set.
pub fn compute_signals(f: &FittedSplit, cfg: &ExperimentConfig) -> Result<Vec<(ConfidenceSignal<f64>, Option<Vec<f64>>)>> {
    let c = &cfg.confidence;
    let half = HalfSplit::new(f.test_scored.len(), c.half_split_seed);
    let opts = c.logistic();
    let mut out = Vec::new();
    for &kind in &c.kinds {
        let entry = match kind {
            ConfidenceKind::CountBased => (count_confidence(&f.split), None),
            ConfidenceKind::Ensemble => {
                let e = ensemble_confidence(&f.split, &cfg.backbone, &c.ensemble_seeds)?;
                (e.signal, Some(e.mean_prediction))
            }
            ConfidenceKind::Recency => (recency_confidence(&f.split, &f.test_scored, c.window_days, &half, &opts)?, None),
            ConfidenceKind::ResidualPredicted => (residual_predicted_confidence(&f.test_scored, &half, &opts)?, None),
            ConfidenceKind::CombinedStructRecency => {
                (combined_confidence(&f.split, &f.test_scored, c.window_days, &half, &opts)?, None)
            }
            ConfidenceKind::RandomControl => (random_confidence(f.test_scored.len(), c.random_seed), None),
        };
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimsResults {
    pub splits: Vec<SplitClaims>,
    /// Temporal split: random, count, residual-predicted and ensemble
    /// signals, plus count restricted to the evaluation half.
    pub baselines: Vec<SignalCurve>,
    /// Temporal split, evaluation half: count, recency, combined.
    pub context_fix: Vec<SignalCurve>,
    pub zones: Option<ZoneReport<f64>>,
    pub calibration: Option<CalibrationReport<f64>>,
    pub invariants: Vec<InvariantCheck>,
}

impl ClaimsResults {
    pub fn split(&self, kind: SplitKind) -> Option<&SplitClaims> {
        self.splits.iter().find(|s| s.kind == kind)
    }

    pub fn baseline(&self, kind: ConfidenceKind, evaluated_on: &str) -> Option<&SignalCurve> {
        self.baselines
            .iter()
            .find(|b| b.signal == kind && b.evaluated_on == evaluated_on)
    }

    pub fn context(&self, kind: ConfidenceKind) -> Option<&SignalCurve> {
        self.context_fix.iter().find(|b| b.signal == kind)
    }
}

pub fn claims(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<ClaimsResults> {
    let fitted = fit_all(records, cfg)?;
    let splits: Vec<SplitClaims> = fitted
        .par_iter()
        .map(|f| split_claims(f, cfg))
        .collect::<Result<_>>()?;
    let fractions = &cfg.diagnostics.fractions;
    let mut invariants = Vec::new();
    for s in &splits {
        let ok = s.fp_fn.rows.iter().all(|r| {
            let pos = r.true_positive + r.false_negative;
            let neg = r.false_positive + r.true_negative;
            pos + neg == s.n_test
        });
        invariants.push(InvariantCheck {
            name: format!("{} confusion counts partition the test set", s.kind.as_str()),
            pass: ok,
            detail: String::new(),
        });
    }
    let mut baselines = Vec::new();
    let mut context_fix = Vec::new();
    let mut zones = None;
    let mut calibration = None;
    if let Some(t) = fitted.iter().find(|f| f.split.spec.kind == SplitKind::Temporal) {
        let pred = t.predicted();
        let act = t.actual();
        let half = HalfSplit::new(pred.len(), cfg.confidence.half_split_seed);
        let signals = compute_signals(t, cfg)?;
        let count = count_confidence::<f64>(&t.split);
        let count_half = ConfidenceSignal {
            kind: ConfidenceKind::CountBased,
            cases: half.eval.clone(),
            scores: half.eval.iter().map(|&k| count.scores[k]).collect(),
            warnings: count.warnings.clone(),
        };
        for (sig, mean_pred) in &signals {
            match sig.kind {
                ConfidenceKind::RandomControl | ConfidenceKind::CountBased => {
                    baselines.push(SignalCurve::new(sig, "test", &pred, &act, fractions)?)
                }
                ConfidenceKind::Ensemble => {
                    let mp = mean_pred.as_deref().expect("ensemble carries its mean prediction");
                    baselines.push(SignalCurve::new(sig, "test", mp, &act, fractions)?)
                }
                ConfidenceKind::ResidualPredicted => {
                    baselines.push(SignalCurve::new(sig, "eval_half", &pred, &act, fractions)?)
                }
                ConfidenceKind::Recency | ConfidenceKind::CombinedStructRecency => {
                    context_fix.push(SignalCurve::new(sig, "eval_half", &pred, &act, fractions)?)
                }
            }
        }
        let ch = SignalCurve::new(&count_half, "eval_half", &pred, &act, fractions)?;
        baselines.push(ch.clone());
        context_fix.insert(0, ch);

        let acc = within_tolerance_accuracy(&pred, &act, cfg.diagnostics.accuracy_tolerance);
        zones = check_c2(&count.scores, &acc, cfg.diagnostics.c2_bins, QualityMode::Accuracy).ok();
        calibration = ece(&count.scores, &acc, cfg.diagnostics.ece_bins).ok();
        let mut worst = 0.0f64;
        for (t1, t2) in [(0.0, 0.1), (0.05, 0.5), (0.1, 1.0), (0.0, 0.02)] {
            worst = worst.max(decomposition_identity_check(&count.scores, &acc, t1, t2)?);
        }
        invariants.push(InvariantCheck {
            name: "selective accuracy decomposition identity".into(),
            pass: worst <= 1e-12,
            detail: format!("max residual {worst:e}"),
        });
    }
    Ok(ClaimsResults {
        splits,
        baselines,
        context_fix,
        zones,
        calibration,
        invariants,
    })
}

pub fn rmse_table(splits: &[SplitClaims]) -> Table {
    let mut t = Table::new(&["split", "model", "rmse"]);
    for s in splits {
        for r in &s.rmse {
            t.push(vec![json!(s.kind.as_str()), json!(r.model), num(r.rmse)]);
        }
    }
    t
}

pub fn shift_table(splits: &[SplitClaims]) -> Table {
    let mut t = Table::new(&["split", "tau", "train_rate", "test_rate", "rate_ratio", "ks_stat", "ks_p"]);
    for s in splits {
        let e = &s.exceptions;
        t.push(vec![
            json!(s.kind.as_str()),
            num(e.tau),
            num(e.train_rate),
            num(e.test_rate),
            num(e.test_rate / e.train_rate),
            num(e.ks_stat),
            num(e.ks_p),
        ]);
    }
    t
}

pub fn auc_table(splits: &[SplitClaims]) -> Table {
    let mut t = Table::new(&["split", "auc_train", "auc_test", "drop"]);
    for s in splits {
        let e = &s.exceptions;
        t.push(vec![
            json!(s.kind.as_str()),
            num(e.auc_train),
            num(e.auc_test),
            num(e.auc_train - e.auc_test),
        ]);
    }
    t
}

pub fn fp_fn_table(splits: &[SplitClaims]) -> Table {
    let mut t = Table::new(&["split", "threshold", "tp", "fp", "tn", "fn", "fp_fn_ratio"]);
    for s in splits {
        for r in &s.fp_fn.rows {
            t.push(vec![
                json!(s.kind.as_str()),
                num(r.threshold),
                json!(r.true_positive),
                json!(r.false_positive),
                json!(r.true_negative),
                json!(r.false_negative),
                opt_num(r.ratio),
            ]);
        }
    }
    t
}

fn signal_table(rows: &[SignalCurve], fractions: &[f64]) -> Table {
    let mut t = curve_columns(&["signal", "evaluated_on", "n"], fractions, &["violations", "negligible"]);
    for r in rows {
        let mut row = vec![json!(r.signal.as_str()), json!(r.evaluated_on), json!(r.n)];
        row.extend(curve_cells(&r.curve));
        row.push(json!(r.curve.violation_count));
        row.push(json!(r.curve.negligible_steps.len()));
        t.push(row);
    }
    t
}

impl ClaimsResults {
    pub fn to_report(&self, cfg: &ExperimentConfig) -> Report {
        let fractions = &cfg.diagnostics.fractions;
        let mut r = Report::new("claims", config_value(cfg), cfg.seeds());
        r.table("rmse_by_model_and_split", rmse_table(&self.splits));
        r.table("residual_distribution_shift", shift_table(&self.splits));
        r.table("exception_classifier_auc", auc_table(&self.splits));
        r.table("fp_fn_ratio", fp_fn_table(&self.splits));
        let mut t = curve_columns(&["split", "n"], fractions, &["violations", "negligible", "worst_adverse_step"]);
        for s in &self.splits {
            let mut row = vec![json!(s.kind.as_str()), json!(s.n_test)];
            row.extend(curve_cells(&s.count_curve));
            row.push(json!(s.count_curve.violation_count));
            row.push(json!(s.count_curve.negligible_steps.len()));
            row.push(num(s.count_curve.worst_adverse_step()));
            t.push(row);
        }
        r.table("rmse_under_abstention", t);
        if !self.baselines.is_empty() {
            r.table("abstention_baselines", signal_table(&self.baselines, fractions));
        }
        if !self.context_fix.is_empty() {
            r.table("context_fix", signal_table(&self.context_fix, fractions));
        }
        let mut t = Table::new(&["split", "n", "spearman_rho", "spearman_p", "kendall_tau", "kendall_p", "pass"]);
        for s in &self.splits {
            let c = &s.c1;
            t.push(vec![
                json!(s.kind.as_str()),
                json!(c.n),
                num(c.spearman.coefficient),
                num(c.spearman.p_value),
                num(c.kendall.coefficient),
                num(c.kendall.p_value),
                json!(c.pass),
            ]);
        }
        r.table("rank_alignment", t);
        if let Some(z) = &self.zones {
            r.table("inversion_zones", zone_table(z));
        }
        for s in &self.splits {
            for w in &s.count_warnings {
                r.summary.push(format!("NOTE {} count_based: {w}", s.kind.as_str()));
            }
        }
        for b in self.baselines.iter().chain(&self.context_fix) {
            for w in &b.warnings {
                r.summary.push(format!("NOTE {} ({}): {w}", b.signal.as_str(), b.evaluated_on));
            }
        }
        r.summary.extend(self.band_lines(cfg));
        for inv in &self.invariants {
            if !inv.pass {
                r.invariant_failures.push(format!("{} {}", inv.name, inv.detail));
            }
        }
        r.details = serde_json::to_value(self).unwrap_or(Value::Null);
        r
    }

    fn band_lines(&self, cfg: &ExperimentConfig) -> Vec<String> {
        let b = &cfg.bands;
        let mut out = Vec::new();
        let mut check = |name: String, x: f64, ok: bool, expect: String| {
            let tag = if ok { "PASS" } else { "WARN" };
            out.push(format!("{tag} {name} = {x:.4} (expected {expect})"));
        };
        let band = |v: [f64; 2]| format!("[{}, {}]", v[0], v[1]);
        if let Some(t) = self.split(SplitKind::Temporal) {
            if let Some(x) = t.rmse_of("mf") {
                check("temporal mf rmse".into(), x, in_band(x, b.mf_rmse_temporal), band(b.mf_rmse_temporal));
            }
            if let Some(x) = t.rmse_of("global_mean") {
                check(
                    "temporal global_mean rmse".into(),
                    x,
                    in_band(x, b.global_mean_rmse_temporal),
                    band(b.global_mean_rmse_temporal),
                );
            }
            let ks = t.exceptions.ks_stat;
            check("temporal ks stat".into(), ks, in_band(ks, b.ks_stat_temporal), band(b.ks_stat_temporal));
        }
        for s in &self.splits {
            let e = &s.exceptions;
            let k = s.kind.as_str();
            check(format!("{k} auc_train"), e.auc_train, in_band(e.auc_train, b.auc_train), band(b.auc_train));
            check(format!("{k} auc_test"), e.auc_test, in_band(e.auc_test, b.auc_test), band(b.auc_test));
            let ratio = e.test_rate / e.train_rate;
            check(
                format!("{k} exception rate ratio"),
                ratio,
                ratio >= b.min_exception_rate_ratio,
                format!(">= {}", b.min_exception_rate_ratio),
            );
        }
        out
    }
}

fn zone_table(z: &ZoneReport<f64>) -> Table {
    let mut t = Table::new(&["zone", "lo", "hi", "count", "mean"]);
    for (k, zone) in z.zones.iter().enumerate() {
        t.push(vec![json!(k + 1), num(zone.lo), num(zone.hi), json!(zone.count), num(zone.mean)]);
    }
    t
}

pub fn config_value(cfg: &ExperimentConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

pub fn run_claims(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<(ClaimsResults, Report)> {
    let c = claims(records, cfg)?;
    let r = c.to_report(cfg);
    Ok((c, r))
}

/// Exception tables only: shift, classifier AUC, FP/FN.
pub fn run_exceptions(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<Report> {
    let fitted = fit_all(records, cfg)?;
    let splits: Vec<SplitClaims> = fitted
        .par_iter()
        .map(|f| split_claims(f, cfg))
        .collect::<Result<_>>()?;
    let mut r = Report::new("exceptions", config_value(cfg), cfg.seeds());
    r.table("residual_distribution_shift", shift_table(&splits));
    r.table("exception_classifier_auc", auc_table(&splits));
    r.table("fp_fn_ratio", fp_fn_table(&splits));
    Ok(r)
}

/// Fits every configured split; RMSE of the factorization and baselines.
pub fn run_fit(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<(Vec<FittedSplit>, Report)> {
    let fitted = fit_all(records, cfg)?;
    let mut t = Table::new(&["split", "model", "n_train", "n_test", "rmse"]);
    for f in &fitted {
        let act = f.actual();
        t.push(vec![
            json!(f.split.spec.kind.as_str()),
            json!("mf"),
            json!(f.split.train.len()),
            json!(f.split.test.len()),
            num(rmse(&f.predicted(), &act)?),
        ]);
        for kind in BaselineKind::ALL {
            let b: BaselineModel<f64> = BaselineModel::fit(kind, &f.split.train)?;
            t.push(vec![
                json!(f.split.spec.kind.as_str()),
                json!(kind.as_str()),
                json!(f.split.train.len()),
                json!(f.split.test.len()),
                num(rmse(&b.predict_all(&f.split.test), &act)?),
            ]);
        }
    }
    let mut r = Report::new("fit", config_value(cfg), cfg.seeds());
    r.table("rmse_by_model_and_split", t);
    Ok((fitted, r))
}

/// Split sizes and entity counts for every configured split.
pub fn run_split(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<(Vec<SplitDataset>, Report)> {
    let splits: Vec<SplitDataset> = cfg
        .split
        .kinds
        .iter()
        .map(|&k| make_split(records, &split_spec(k, cfg)))
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["split", "n_train", "n_test", "train_users", "train_items", "cold_test_cases"]);
    for s in &splits {
        let cold = s
            .test
            .iter()
            .filter(|r| s.user_count(r.user) == 0 || s.item_count(r.item) == 0)
            .count();
        t.push(vec![
            json!(s.spec.kind.as_str()),
            json!(s.train.len()),
            json!(s.test.len()),
            json!(s.user_counts.len()),
            json!(s.item_counts.len()),
            json!(cold),
        ]);
    }
    let mut r = Report::new("split", config_value(cfg), cfg.seeds());
    r.table("splits", t);
    Ok((splits, r))
}

/// Confidence signals on the first configured split, as generic streams
/// with `outcome = |residual|`.
pub fn run_confidence(
    records: &[RatingRecord],
    cfg: &ExperimentConfig,
) -> Result<(Vec<(ConfidenceKind, Vec<OutcomeRecord>)>, Report)> {
    let kind = cfg.split.kinds[0];
    let f = fit_split(records, kind, cfg)?;
    let signals = compute_signals(&f, cfg)?;
    let abs_err: Vec<f64> = f.test_scored.iter().map(|s| s.residual.abs()).collect();
    let fractions = &cfg.diagnostics.fractions;
    let pred = f.predicted();
    let act = f.actual();
    let mut rows = Vec::new();
    let mut streams = Vec::new();
    for (sig, mean_pred) in &signals {
        let evaluated_on = if sig.kind.is_learned() { "eval_half" } else { "test" };
        let p = mean_pred.as_deref().unwrap_or(&pred);
        rows.push(SignalCurve::new(sig, evaluated_on, p, &act, fractions)?);
        let outcome: Vec<f64> = match mean_pred {
            Some(mp) => mp.iter().zip(&act).map(|(p, a)| (a - p).abs()).collect(),
            None => abs_err.clone(),
        };
        streams.push((sig.kind, sig.to_outcome_stream(&outcome)));
    }
    let mut r = Report::new("confidence", config_value(cfg), cfg.seeds());
    r.table(&format!("abstention_{}", kind.as_str()), signal_table(&rows, fractions));
    for row in &rows {
        for w in &row.warnings {
            r.summary.push(format!("NOTE {}: {w}", row.signal.as_str()));
        }
    }
    Ok((streams, r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveResults {
    pub blocks: Vec<BlockResult<f64>>,
    pub compare_fraction: f64,
    pub static_violations: usize,
    pub adaptive_violations: Option<usize>,
    pub mean_static_rmse: f64,
    pub mean_adaptive_rmse: Option<f64>,
    pub notice: Option<String>,
}

/// Sequential-block static versus adaptive gate on the temporal split.
/// Confidence is the raw observation count for both the test stream and
/// the train-tail window so recalibrated bin edges transfer.
pub fn adaptive(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<AdaptiveResults> {
    let a = &cfg.adaptive;
    let f = fit_split(records, SplitKind::Temporal, cfg)?;
    let pred = f.predicted();
    let act = f.actual();
    let conf: Vec<f64> = f.test_scored.iter().map(|s| s.count as f64).collect();
    let tail_start = f.train_scored.len().saturating_sub(a.train_tail);
    let tail = &f.train_scored[tail_start..];
    let tp: Vec<f64> = tail.iter().map(|s| s.predicted).collect();
    let ta: Vec<f64> = tail.iter().map(|s| s.actual).collect();
    let tc: Vec<f64> = tail.iter().map(|s| s.count as f64).collect();
    let blocks = block_experiment(
        StreamView::new(&pred, &act, &conf)?,
        StreamView::new(&tp, &ta, &tc)?,
        a.n_blocks,
        &a.recal,
        &cfg.diagnostics.fractions,
    )?;
    let at = |c: &AbstentionCurve<f64>| {
        c.at(a.compare_fraction).ok_or_else(|| {
            Error::Config(format!(
                "adaptive.compare_fraction {} is not among diagnostics.fractions",
                a.compare_fraction
            ))
        })
    };
    let n = blocks.len() as f64;
    let static_violations = blocks.iter().map(|b| b.static_curve.violation_count).sum();
    let mut mean_static = 0.0;
    for b in &blocks {
        mean_static += at(&b.static_curve)? / n;
    }
    let (adaptive_violations, mean_adaptive, notice) = if a.n_blocks == 1 {
        (None, None, Some("single block: adaptive gate skipped (no prior window)".to_string()))
    } else {
        let mut v = 0;
        let mut m = 0.0;
        for b in &blocks {
            let c = b.adaptive_curve.as_ref().expect("adaptive curve present for n_blocks > 1");
            v += c.violation_count;
            m += at(c)? / n;
        }
        (Some(v), Some(m), None)
    };
    Ok(AdaptiveResults {
        blocks,
        compare_fraction: a.compare_fraction,
        static_violations,
        adaptive_violations,
        mean_static_rmse: mean_static,
        mean_adaptive_rmse: mean_adaptive,
        notice,
    })
}

impl AdaptiveResults {
    pub fn to_report(&self, cfg: &ExperimentConfig) -> Report {
        let fractions = &cfg.diagnostics.fractions;
        let mut t = curve_columns(&["block", "gate", "n", "full_rmse"], fractions, &["violations", "window", "merges"]);
        for b in &self.blocks {
            let mut row = vec![json!(b.block), json!("static"), json!(b.n), num(b.full_rmse)];
            row.extend(curve_cells(&b.static_curve));
            row.extend([json!(b.static_curve.violation_count), Value::Null, Value::Null]);
            t.push(row);
            if let Some(c) = &b.adaptive_curve {
                let mut row = vec![json!(b.block), json!("adaptive"), json!(b.n), num(b.full_rmse)];
                row.extend(curve_cells(c));
                row.extend([
                    json!(c.violation_count),
                    serde_json::to_value(b.window).unwrap_or(Value::Null),
                    json!(b.merges),
                ]);
                t.push(row);
            }
        }
        let mut r = Report::new("adaptive", config_value(cfg), cfg.seeds());
        r.table("adaptive_recalibration", t);
        let k = pct(self.compare_fraction);
        match (self.adaptive_violations, self.mean_adaptive_rmse) {
            (Some(v), Some(m)) => {
                let worse = v >= self.static_violations && m >= self.mean_static_rmse - 0.002;
                r.summary.push(format!(
                    "{} adaptive does not beat static: violations {v} vs {}, mean rmse at {k} {m:.4} vs {:.4}",
                    if worse { "PASS" } else { "WARN" },
                    self.static_violations,
                    self.mean_static_rmse
                ));
            }
            _ => r.summary.push(format!(
                "NOTE static only: violations {}, mean rmse at {k} {:.4}",
                self.static_violations, self.mean_static_rmse
            )),
        }
        if let Some(n) = &self.notice {
            r.summary.push(format!("NOTE {n}"));
        }
        r.details = serde_json::to_value(self).unwrap_or(Value::Null);
        r
    }
}

pub fn run_adaptive(records: &[RatingRecord], cfg: &ExperimentConfig) -> Result<(AdaptiveResults, Report)> {
    let a = adaptive(records, cfg)?;
    let r = a.to_report(cfg);
    Ok((a, r))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthResults {
    pub structural: StructuralSummary,
    pub contextual: ContextualSummary,
    pub sweep: Vec<SweepPoint>,
    /// Median count-based violations never decrease as drift grows.
    pub sweep_non_decreasing: bool,
}

pub fn synth(cfg: &ExperimentConfig) -> Result<SynthResults> {
    let s = &cfg.synthetic;
    let fr = &cfg.diagnostics.fractions;
    let pre = s.preregistration;
    let structural = structural_over_seeds(&s.structural, &s.seeds, fr, pre.structural_min_clean)?;
    let contextual = contextual_over_seeds(&s.contextual, &s.seeds, fr, pre.contextual_min_violating)?;
    let mut sigmas = s.sweep_sigmas.clone();
    sigmas.sort_by(f64::total_cmp);
    let sweep = sigma_sweep(&s.contextual, &sigmas, &s.seeds, fr)?;
    let sweep_non_decreasing = sweep
        .windows(2)
        .all(|w| w[1].median_count_violations >= w[0].median_count_violations);
    Ok(SynthResults {
        structural,
        contextual,
        sweep,
        sweep_non_decreasing,
    })
}

impl SynthResults {
    pub fn to_report(&self, cfg: &ExperimentConfig) -> Report {
        let pre = cfg.synthetic.preregistration;
        let mut r = Report::new("synth", config_value(cfg), cfg.seeds());
        let mut t = Table::new(&["seed", "count_violations", "oracle_violations", "rmse_0", "rmse_last"]);
        for run in &self.structural.runs {
            let m = &run.count_curve.metric;
            t.push(vec![
                json!(run.seed),
                json!(run.count_curve.violation_count),
                json!(run.oracle_curve.violation_count),
                num(m[0]),
                num(m[m.len() - 1]),
            ]);
        }
        r.table("structural_regime", t);
        let mut t = Table::new(&["seed", "count_violations", "recency_violations", "oracle_violations"]);
        for run in &self.contextual.runs {
            t.push(vec![
                json!(run.seed),
                json!(run.count_curve.violation_count),
                json!(run.recency_curve.violation_count),
                json!(run.oracle_curve.violation_count),
            ]);
        }
        r.table("contextual_regime", t);
        let mut t = Table::new(&["drift_sigma", "contextual_ratio", "median_count_violations"]);
        for p in &self.sweep {
            t.push(vec![num(p.drift_sigma), num(p.contextual_ratio), num(p.median_count_violations)]);
        }
        r.table("drift_sweep", t);
        let n = self.structural.seeds.len();
        let tag = |ok: bool| if ok { "PASS" } else { "WARN" };
        r.summary.push(format!(
            "structural regime: {} (count-based violations 0 in {}/{n} seeds, need {})",
            tag(self.structural.pass),
            self.structural.clean_seeds,
            pre.structural_min_clean
        ));
        let oracle_clean = self.contextual.oracle_violations.iter().filter(|&&v| v == 0).count();
        r.summary.push(format!(
            "contextual regime: {} (count-based violations >= 1 in {}/{n} seeds, need {}; oracle clean in {oracle_clean}/{n}; Var(g)/structural MSE = {:.2})",
            tag(self.contextual.pass),
            self.contextual.violating_seeds,
            pre.contextual_min_violating,
            self.contextual.contextual_ratio
        ));
        r.summary.push(format!(
            "drift sweep: {} (median violations non-decreasing in sigma)",
            tag(self.sweep_non_decreasing)
        ));
        for run in self.structural.runs.iter().take(1) {
            for w in &run.warnings {
                r.summary.push(format!("NOTE structural: {w}"));
            }
        }
        for run in self.contextual.runs.iter().take(1) {
            for w in &run.warnings {
                r.summary.push(format!("NOTE contextual: {w}"));
            }
        }
        r
    }
}

pub fn run_synth(cfg: &ExperimentConfig) -> Result<(SynthResults, Report)> {
    let s = synth(cfg)?;
    let r = s.to_report(cfg);
    Ok((s, r))
}

/// How the outcome column of a generic stream is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    /// Outcome is accuracy or a success indicator; higher is better.
    Accuracy,
    /// Outcome is an absolute error; lower is better.
    Regression,
}

impl std::str::FromStr for StreamMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(StreamMode::Accuracy),
            "regression" => Ok(StreamMode::Regression),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}` (accuracy or regression)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "GATE-SAFE")]
    GateSafe,
    #[serde(rename = "INVERSION-FOUND")]
    InversionFound,
    #[serde(rename = "SIGNAL-DEGENERATE")]
    SignalDegenerate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::GateSafe => "GATE-SAFE",
            Verdict::InversionFound => "INVERSION-FOUND",
            Verdict::SignalDegenerate => "SIGNAL-DEGENERATE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseResults {
    pub n: usize,
    pub mode: StreamMode,
    pub c1: Option<C1Report<f64>>,
    pub c2: Option<ZoneReport<f64>>,
    pub ece: Option<CalibrationReport<f64>>,
    pub tiers: Option<TierReport>,
    pub verdict: Verdict,
    pub reasons: Vec<String>,
}

/// C1, C2, ECE (accuracy mode with outcomes in `[0, 1]`) and the tier
/// report (accuracy mode, tier column present), reduced to one verdict.
pub fn diagnose(stream: &[OutcomeRecord], mode: StreamMode, bins: usize, c1: &C1Thresholds) -> Result<DiagnoseResults> {
    if stream.is_empty() {
        return Err(Error::Empty("confidence stream"));
    }
    let conf: Vec<f64> = stream.iter().map(|r| r.confidence).collect();
    let outcome: Vec<f64> = stream.iter().map(|r| r.outcome).collect();
    let mut out = DiagnoseResults {
        n: stream.len(),
        mode,
        c1: None,
        c2: None,
        ece: None,
        tiers: None,
        verdict: Verdict::GateSafe,
        reasons: Vec::new(),
    };
    if conf.iter().all(|&c| c == conf[0]) {
        out.verdict = Verdict::SignalDegenerate;
        out.reasons.push("confidence is constant".into());
        return Ok(out);
    }
    let quality = match mode {
        StreamMode::Accuracy => QualityMode::Accuracy,
        StreamMode::Regression => QualityMode::Error,
    };
    let c2 = check_c2(&conf, &outcome, bins.min(stream.len()), quality)?;
    if c2.inversion_count > 0 {
        out.verdict = Verdict::InversionFound;
        out.reasons.push(format!(
            "{} inverted zone(s) at {:?}",
            c2.inversion_count, c2.inversion_locations
        ));
    }
    out.c2 = Some(c2);
    let aligned: Vec<f64> = match mode {
        StreamMode::Accuracy => outcome.clone(),
        StreamMode::Regression => outcome.iter().map(|&e| -e).collect(),
    };
    if stream.len() >= 3 {
        match check_c1(&conf, &aligned, c1) {
            Ok(r) => {
                if r.spearman.coefficient < 0.0 && r.spearman.p_value < c1.max_p {
                    out.verdict = Verdict::InversionFound;
                    out.reasons.push(format!(
                        "confidence is anti-aligned with quality (rho {:.4})",
                        r.spearman.coefficient
                    ));
                } else if !r.pass {
                    out.reasons.push(format!(
                        "rank alignment not significant (rho {:.4}, p {:.3e})",
                        r.spearman.coefficient, r.spearman.p_value
                    ));
                }
                out.c1 = Some(r);
            }
            Err(Error::Degenerate(m)) => out.reasons.push(format!("rank alignment undefined: {m}")),
            Err(e) => return Err(e),
        }
    }
    if mode == StreamMode::Accuracy {
        if outcome.iter().all(|o| (0.0..=1.0).contains(o)) {
            out.ece = Some(ece(&conf, &outcome, bins)?);
        }
        let tiers: Option<Vec<Tier>> = stream.iter().map(|r| r.tier).collect();
        if let Some(tiers) = tiers {
            let hits: Vec<bool> = outcome.iter().map(|&o| o >= 0.5).collect();
            let t = tier_report(&tiers, &hits)?;
            if !t.monotonic {
                out.verdict = Verdict::InversionFound;
                out.reasons.push("tier outcome rates are not strictly HIGH > MED > LOW".into());
            }
            out.tiers = Some(t);
        }
    }
    Ok(out)
}

impl DiagnoseResults {
    pub fn to_report(&self, header_config: Value) -> Report {
        let mut r = Report::new("diagnose", header_config, json!({}));
        if let Some(c) = &self.c1 {
            let mut t = Table::new(&["n", "spearman_rho", "spearman_p", "kendall_tau", "kendall_p", "pass"]);
            t.push(vec![
                json!(c.n),
                num(c.spearman.coefficient),
                num(c.spearman.p_value),
                num(c.kendall.coefficient),
                num(c.kendall.p_value),
                json!(c.pass),
            ]);
            r.table("rank_alignment", t);
        }
        if let Some(z) = &self.c2 {
            r.table("inversion_zones", zone_table(z));
        }
        if let Some(e) = &self.ece {
            let mut t = Table::new(&["bin", "count", "mean_confidence", "accuracy"]);
            for (k, b) in e.bins.iter().enumerate() {
                t.push(vec![json!(k + 1), json!(b.count), opt_num(b.mean_confidence), opt_num(b.accuracy)]);
            }
            r.table("calibration", t);
            r.summary.push(format!("ECE {:.4}", e.ece));
        }
        if let Some(tr) = &self.tiers {
            let mut t = Table::new(&["tier", "count", "positives", "rate"]);
            for s in &tr.tiers {
                t.push(vec![json!(s.tier.as_str()), json!(s.count), json!(s.positives), opt_num(s.rate)]);
            }
            r.table("confidence_tier_separation", t);
            if let Some(l) = tr.high_over_med {
                r.summary.push(format!("HIGH/MED lift {l:.2}"));
            }
            if let Some(c) = &tr.chi_squared {
                r.summary.push(format!("chi-squared {:.2} (dof {}, p {:.3e})", c.statistic, c.dof, c.p_value));
            }
        }
        for reason in &self.reasons {
            r.summary.push(format!("NOTE {reason}"));
        }
        r.summary.push(format!("verdict: {}", self.verdict));
        r.details = serde_json::to_value(self).unwrap_or(Value::Null);
        r
    }
}

/// Abstention curve of a generic stream: selective accuracy in accuracy
/// mode, selective RMSE of the errors in regression mode.
pub fn stream_curve(stream: &[OutcomeRecord], mode: StreamMode, fractions: &[f64]) -> Result<AbstentionCurve<f64>> {
    let conf: Vec<f64> = stream.iter().map(|r| r.confidence).collect();
    let outcome: Vec<f64> = stream.iter().map(|r| r.outcome).collect();
    match mode {
        StreamMode::Accuracy => accuracy_abstention_curve(&outcome, &conf, fractions),
        StreamMode::Regression => abstention_curve(&vec![0.0; outcome.len()], &outcome, &conf, fractions),
    }
}

pub fn curve_report(curve: &AbstentionCurve<f64>, header_config: Value) -> Report {
    let mut t = Table::new(&["fraction", "retained", "coverage", "metric"]);
    for k in 0..curve.fractions.len() {
        t.push(vec![
            num(curve.fractions[k]),
            json!(curve.retained[k]),
            num(curve.coverage[k]),
            num(curve.metric[k]),
        ]);
    }
    let mut r = Report::new("curve", header_config, json!({}));
    r.table("abstention_curve", t);
    r.summary.push(format!(
        "violations {} at steps {:?}; negligible {:?}",
        curve.violation_count, curve.violation_steps, curve.negligible_steps
    ));
    r
}
