//! Scores and run summaries: balanced class accuracy, the score-per-minute
//! efficiency, time-to-threshold crossings and the three report tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::history::History;
use crate::space::SearchSpace;

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.80, 0.90];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("balanced accuracy needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("true-positive and false-negative counts cover {tp} and {fn_} classes")]
    LengthMismatch { tp: usize, fn_: usize },
    #[error("balanced accuracy is undefined: no class has any support")]
    NoSupport,
    #[error("efficiency needs positive minutes, got {0}")]
    NonPositiveMinutes(f64),
}

/// Per-class true positives and false negatives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    #[serde(rename = "fn")]
    pub fn_: Vec<u64>,
}

/// Mean per-class recall. Classes without support are left out of the average.
pub fn bca(counts: &ConfusionCounts) -> Result<f64, MetricsError> {
    let c = counts.tp.len();
    if c != counts.fn_.len() {
        return Err(MetricsError::LengthMismatch { tp: c, fn_: counts.fn_.len() });
    }
    if c < 2 {
        return Err(MetricsError::TooFewClasses(c));
    }
    let mut sum = 0.0;
    let mut included = 0usize;
    for (k, (&tp, &fn_)) in counts.tp.iter().zip(&counts.fn_).enumerate() {
        let support = tp + fn_;
        if support == 0 {
            log::warn!("class {k} has no support and is excluded from the balanced accuracy");
            continue;
        }
        sum += tp as f64 / support as f64;
        included += 1;
    }
    if included == 0 {
        return Err(MetricsError::NoSupport);
    }
    Ok(sum / included as f64)
}

/// Best score per wall-clock minute.
pub fn efficiency(best_score: f64, minutes_to_best: f64) -> Result<f64, MetricsError> {
    if !(minutes_to_best > 0.0) {
        return Err(MetricsError::NonPositiveMinutes(minutes_to_best));
    }
    Ok(best_score / minutes_to_best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub threshold: f64,
    /// `None` when the run never exceeded the threshold.
    pub minutes: Option<f64>,
    pub trial: Option<usize>,
}

/// First trial whose best-so-far score is strictly above each threshold.
pub fn threshold_times(history: &History, thresholds: &[f64]) -> Vec<Crossing> {
    thresholds
        .iter()
        .map(|&threshold| {
            let hit = history.ok_trials().find(|t| t.score.is_some_and(|s| s > threshold));
            Crossing { threshold, minutes: hit.map(|t| t.cumulative_s / 60.0), trial: hit.map(|t| t.index) }
        })
        .collect()
}

/// What the report needs from one finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub optimizer: String,
    pub repeat: usize,
    pub crossings: Vec<Crossing>,
    pub best_score: f64,
    pub best_trial: usize,
    pub minutes_to_best: f64,
    pub total_minutes: f64,
    pub best_params: Map<String, Value>,
}

impl RunRecord {
    /// `None` if the run has no ok trial.
    pub fn from_history(optimizer: &str, repeat: usize, history: &History, space: &SearchSpace, thresholds: &[f64]) -> Option<Self> {
        let inc = history.incumbent()?;
        Some(RunRecord {
            optimizer: optimizer.to_string(),
            repeat,
            crossings: threshold_times(history, thresholds),
            best_score: inc.score?,
            best_trial: inc.index,
            minutes_to_best: inc.cumulative_s / 60.0,
            total_minutes: history.elapsed_s() / 60.0,
            best_params: space.to_params(&inc.config),
        })
    }

    pub fn efficiency(&self) -> Option<f64> {
        efficiency(self.best_score, self.minutes_to_best).ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingSummary {
    pub threshold: f64,
    pub minutes: Option<f64>,
    pub trial: Option<usize>,
    /// Runs that crossed the threshold.
    pub reached: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minutes_range: Option<Range>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub score: f64,
    pub minutes: f64,
    pub trial: usize,
    pub score_range: Range,
    pub minutes_range: Range,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub repeat: usize,
    pub params: Map<String, Value>,
    pub score: f64,
    pub total_minutes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub optimizer: String,
    pub runs: usize,
    pub crossings: Vec<CrossingSummary>,
    pub best: BestSummary,
    pub efficiency: Option<f64>,
    pub efficiency_range: Option<Range>,
    pub best_config: BestConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub thresholds: Vec<f64>,
    /// Sorted by optimizer name.
    pub rows: Vec<ReportRow>,
}

/// Lower median of an already sorted slice.
fn lower_median<T: Copy>(sorted: &[T]) -> T {
    sorted[(sorted.len() - 1) / 2]
}

fn range(values: impl Iterator<Item = f64>) -> Option<Range> {
    values.fold(None, |acc, v| match acc {
        None => Some(Range { min: v, max: v }),
        Some(r) => Some(Range { min: r.min.min(v), max: r.max.max(v) }),
    })
}

/// Aggregates runs per optimizer. With several repeats every figure is the
/// lower median across repeats, with the min/max alongside.
pub fn render_reports(records: &[RunRecord], thresholds: &[f64]) -> Report {
    let mut names: Vec<&str> = records.iter().map(|r| r.optimizer.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let rows = names
        .into_iter()
        .map(|name| {
            let mut runs: Vec<&RunRecord> = records.iter().filter(|r| r.optimizer == name).collect();
            runs.sort_by_key(|r| r.repeat);
            summarize(name, &runs, thresholds)
        })
        .collect();
    Report { thresholds: thresholds.to_vec(), rows }
}

fn summarize(name: &str, runs: &[&RunRecord], thresholds: &[f64]) -> ReportRow {
    let crossings = thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| {
            let mut cs: Vec<(f64, usize)> = runs
                .iter()
                .map(|r| {
                    let c = r.crossings.get(k).filter(|c| c.threshold == threshold);
                    match c.and_then(|c| c.minutes.zip(c.trial)) {
                        Some((m, t)) => (m, t),
                        None => (f64::INFINITY, usize::MAX),
                    }
                })
                .collect();
            cs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (m, t) = lower_median(&cs);
            let reached: Vec<f64> = cs.iter().map(|c| c.0).filter(|m| m.is_finite()).collect();
            CrossingSummary {
                threshold,
                minutes: m.is_finite().then_some(m),
                trial: m.is_finite().then_some(t),
                reached: reached.len(),
                minutes_range: range(reached.into_iter()),
            }
        })
        .collect();

    // median run by best score; ties prefer the faster run, then the lower repeat
    let mut by_score: Vec<&RunRecord> = runs.to_vec();
    by_score.sort_by(|a, b| {
        b.best_score.total_cmp(&a.best_score).then(a.minutes_to_best.total_cmp(&b.minutes_to_best)).then(a.repeat.cmp(&b.repeat))
    });
    let median = lower_median(&by_score);
    let best = BestSummary {
        score: median.best_score,
        minutes: median.minutes_to_best,
        trial: median.best_trial,
        score_range: range(runs.iter().map(|r| r.best_score)).expect("at least one run"),
        minutes_range: range(runs.iter().map(|r| r.minutes_to_best)).expect("at least one run"),
    };

    let mut effs: Vec<f64> = runs.iter().filter_map(|r| r.efficiency()).collect();
    effs.sort_by(|a, b| a.total_cmp(b));
    ReportRow {
        optimizer: name.to_string(),
        runs: runs.len(),
        crossings,
        best,
        efficiency: (!effs.is_empty()).then(|| lower_median(&effs)),
        efficiency_range: range(effs.iter().copied()),
        best_config: BestConfig {
            repeat: median.repeat,
            params: median.best_params.clone(),
            score: median.best_score,
            total_minutes: median.total_minutes,
        },
    }
}

impl Report {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Rows ordered by efficiency, highest first; rows without one go last.
    pub fn efficiency_order(&self) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| match (a.efficiency, b.efficiency) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        rows
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let multi = self.rows.iter().any(|r| r.runs > 1);
        if multi {
            out.push_str("Figures are medians across repeats; (min-max) in parentheses.\n\n");
        }

        out.push_str("Time to threshold\n");
        let mut rows = vec![std::iter::once("optimizer".to_string()).chain(self.thresholds.iter().map(|t| format!("> {t:.2}"))).collect()];
        for r in &self.rows {
            let mut row = vec![r.optimizer.clone()];
            for c in &r.crossings {
                let mut cell = match (c.minutes, c.trial) {
                    (Some(m), Some(t)) => format!("{m:.1} min (trial {t})"),
                    _ => "not reached".to_string(),
                };
                if multi {
                    if let Some(rg) = c.minutes_range {
                        let _ = write!(cell, " ({:.1}-{:.1})", rg.min, rg.max);
                    }
                    let _ = write!(cell, " {}/{} runs", c.reached, r.runs);
                }
                row.push(cell);
            }
            rows.push(row);
        }
        out.push_str(&table(&rows, &[]));

        out.push_str("\nBest configuration\n");
        let mut rows = vec![vec!["optimizer".to_string()]];
        if let Some(first) = self.rows.first() {
            rows[0].extend(first.best_config.params.keys().cloned());
        }
        rows[0].extend(["score".to_string(), "duration".to_string()]);
        for r in &self.rows {
            let mut row = vec![r.optimizer.clone()];
            row.extend(r.best_config.params.values().map(format_value));
            row.push(format!("{:.4}", r.best_config.score));
            row.push(format!("{:.1} min", r.best_config.total_minutes));
            rows.push(row);
        }
        out.push_str(&table(&rows, &[]));

        out.push_str("\nEfficiency (score per minute to best)\n");
        let mut rows = vec![vec!["optimizer".to_string(), "best".to_string(), "minutes".to_string(), "E".to_string()]];
        for r in self.efficiency_order() {
            let (mut score, mut minutes) = (format!("{:.4}", r.best.score), format!("{:.1}", r.best.minutes));
            let mut e = r.efficiency.map_or("n/a".to_string(), |e| format!("{e:.4}"));
            if multi {
                let _ = write!(score, " ({:.4}-{:.4})", r.best.score_range.min, r.best.score_range.max);
                let _ = write!(minutes, " ({:.1}-{:.1})", r.best.minutes_range.min, r.best.minutes_range.max);
                if let Some(rg) = r.efficiency_range {
                    let _ = write!(e, " ({:.4}-{:.4})", rg.min, rg.max);
                }
            }
            rows.push(vec![r.optimizer.clone(), score, minutes, e]);
        }
        out.push_str(&table(&rows, &[1, 2, 3]));
        out
    }
}

fn format_value(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if !v.is_i64() && !v.is_u64() && x != 0.0 && (x.abs() < 1e-2 || x.abs() >= 1e5) => format!("{x:.3e}"),
        Some(x) if !v.is_i64() && !v.is_u64() => format!("{x:.4}"),
        _ => v.to_string(),
    }
}

/// Space-padded columns; `right` lists right-aligned column indices.
fn table(rows: &[Vec<String>], right: &[usize]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            let pad = widths[c] - cell.chars().count();
            if right.contains(&c) {
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            } else {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Trial, TrialStatus};
    use crate::space::{Config, ParamValue};
    use proptest::prelude::*;

    fn counts(tp: &[u64], fn_: &[u64]) -> ConfusionCounts {
        ConfusionCounts { tp: tp.to_vec(), fn_: fn_.to_vec() }
    }

    #[test]
    fn bca_examples() {
        assert_eq!(bca(&counts(&[5, 7, 1], &[0, 0, 0])), Ok(1.0));
        assert_eq!(bca(&counts(&[4, 0], &[0, 9])), Ok(0.5));
        assert_eq!(bca(&counts(&[3, 0, 1], &[1, 0, 1])), Ok((0.75 + 0.5) / 2.0));
        assert_eq!(bca(&counts(&[0, 0], &[0, 0])), Err(MetricsError::NoSupport));
        assert_eq!(bca(&counts(&[1], &[0])), Err(MetricsError::TooFewClasses(1)));
    }

    #[test]
    fn efficiency_examples() {
        assert!((efficiency(0.96, 11.0).unwrap() - 0.0873).abs() < 5e-5);
        assert!((efficiency(0.97, 15.0).unwrap() - 0.0647).abs() < 5e-5);
        assert!((efficiency(0.98, 1680.0).unwrap() - 0.000583).abs() < 5e-7);
        assert_eq!(efficiency(0.9, 0.0), Err(MetricsError::NonPositiveMinutes(0.0)));
        assert!(efficiency(0.9, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn efficiency_is_monotone(s in 0.01f64..1.0, m in 0.1f64..1000.0, d in 0.001f64..10.0) {
            prop_assert!(efficiency(s, m + d).unwrap() < efficiency(s, m).unwrap());
            prop_assert!(efficiency(s + d, m).unwrap() > efficiency(s, m).unwrap());
        }

        #[test]
        fn bca_is_permutation_invariant(pairs in prop::collection::vec((0u64..50, 1u64..50), 2..8), rot in 0usize..8) {
            let tp: Vec<u64> = pairs.iter().map(|p| p.0).collect();
            let fn_: Vec<u64> = pairs.iter().map(|p| p.1).collect();
            let mut tp2 = tp.clone();
            let mut fn2 = fn_.clone();
            tp2.rotate_left(rot % tp.len());
            fn2.rotate_left(rot % tp.len());
            tp2.reverse();
            fn2.reverse();
            let a = bca(&counts(&tp, &fn_)).unwrap();
            let b = bca(&counts(&tp2, &fn2)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    fn history(points: &[(f64, f64)]) -> History {
        let mut h = History::new();
        let mut prev = 0.0;
        for (i, &(minutes, score)) in points.iter().enumerate() {
            let cumulative_s = minutes * 60.0;
            let ok = !score.is_nan();
            h.record(Trial {
                index: i + 1,
                config: Config { values: vec![ParamValue::Real(0.5)] },
                score: ok.then_some(score),
                duration_s: cumulative_s - prev,
                cumulative_s,
                status: if ok { TrialStatus::Ok } else { TrialStatus::Failed },
            })
            .unwrap();
            prev = cumulative_s;
        }
        h
    }

    #[test]
    fn threshold_examples() {
        let h = history(&[(1.0, 0.5), (2.4, 0.96)]);
        let c = threshold_times(&h, &DEFAULT_THRESHOLDS);
        assert_eq!(c[0], Crossing { threshold: 0.8, minutes: Some(2.4), trial: Some(2) });
        assert_eq!(c[1], Crossing { threshold: 0.9, minutes: Some(2.4), trial: Some(2) });

        let flat = history(&[(1.0, 0.5), (2.0, 0.5)]);
        assert_eq!(threshold_times(&flat, &[0.8])[0].minutes, None);

        let c = threshold_times(&history(&[(1.0, 0.7), (2.0, 0.85), (3.0, 0.92)]), &DEFAULT_THRESHOLDS);
        assert_eq!((c[0].minutes, c[0].trial), (Some(2.0), Some(2)));
        assert_eq!((c[1].minutes, c[1].trial), (Some(3.0), Some(3)));

        // equality is not a crossing
        assert_eq!(threshold_times(&history(&[(1.0, 0.9)]), &[0.9])[0].trial, None);
    }

    proptest! {
        #[test]
        fn crossings_agree_with_best_so_far_curve(
            scores in prop::collection::vec(prop_oneof![Just(f64::NAN), 0.0f64..1.0], 1..25),
            thresholds in prop::collection::vec(0.0f64..1.0, 1..5),
        ) {
            let mut ts = thresholds.clone();
            ts.sort_by(|a, b| a.total_cmp(b));
            let pts: Vec<(f64, f64)> = scores.iter().enumerate().map(|(i, &s)| ((i + 1) as f64 * 1.5, s)).collect();
            let h = history(&pts);
            let cs = threshold_times(&h, &ts);
            let curve = h.best_so_far_curve().unwrap_or_default();
            for c in &cs {
                let expect = curve.iter().find(|p| p.1 > c.threshold).map(|p| p.0 / 60.0);
                prop_assert_eq!(c.minutes, expect);
            }
            for w in cs.windows(2) {
                prop_assert!(w[0].minutes.unwrap_or(f64::INFINITY) <= w[1].minutes.unwrap_or(f64::INFINITY));
            }
        }
    }

    fn record(name: &str, repeat: usize, score: f64, minutes: f64, cross: Option<f64>) -> RunRecord {
        RunRecord {
            optimizer: name.into(),
            repeat,
            crossings: vec![Crossing { threshold: 0.9, minutes: cross, trial: cross.map(|m| m as usize) }],
            best_score: score,
            best_trial: 3,
            minutes_to_best: minutes,
            total_minutes: 15.0,
            best_params: Map::new(),
        }
    }

    #[test]
    fn single_run_report_has_one_row_per_table() {
        let rep = render_reports(&[record("gp_bo", 0, 0.96, 11.0, Some(2.4))], &[0.9]);
        assert_eq!(rep.rows.len(), 1);
        let text = rep.to_text();
        assert!(text.contains("2.4 min (trial 2)"));
        assert_eq!(text.matches("gp_bo").count(), 3);
        let json: Value = serde_json::from_str(&rep.to_json_string()).unwrap();
        assert_eq!(json["rows"][0]["crossings"][0]["minutes"], 2.4);
        assert_eq!(json["rows"][0]["best"]["score"], 0.96);
        assert!((json["rows"][0]["efficiency"].as_f64().unwrap() - 0.96 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn multi_repeat_uses_lower_median_and_extremes() {
        let recs = vec![
            record("tpe", 0, 0.91, 10.0, Some(4.0)),
            record("tpe", 1, 0.95, 12.0, None),
            record("tpe", 2, 0.93, 3.0, Some(1.0)),
            record("tpe", 3, 0.80, 8.0, None),
            record("random", 0, 0.5, 1.0, None),
        ];
        let rep = render_reports(&recs, &[0.9]);
        assert_eq!(rep.rows[0].optimizer, "random");
        let tpe = &rep.rows[1];
        assert_eq!(tpe.runs, 4);
        // crossing times sorted: 1, 4, inf, inf → lower median 4
        assert_eq!(tpe.crossings[0].minutes, Some(4.0));
        assert_eq!(tpe.crossings[0].reached, 2);
        assert_eq!(tpe.crossings[0].minutes_range, Some(Range { min: 1.0, max: 4.0 }));
        // scores descending 0.95, 0.93, 0.91, 0.80 → second is the median repeat
        assert_eq!((tpe.best.score, tpe.best.minutes, tpe.best_config.repeat), (0.93, 3.0, 2));
        assert_eq!(tpe.best.score_range, Range { min: 0.80, max: 0.95 });
        assert_eq!(rep.rows[0].crossings[0].minutes, None);
        assert_eq!(rep.efficiency_order()[0].optimizer, "random");
    }

    #[test]
    fn efficiency_reference_rows() {
        let recs: Vec<RunRecord> = [(0.96, 11.0), (0.97, 15.0), (0.93, 185.0), (0.85, 30.0), (0.98, 1680.0)]
            .iter()
            .enumerate()
            .map(|(i, &(s, m))| record(&format!("m{i}"), 0, s, m, None))
            .collect();
        let rep = render_reports(&recs, &[0.9]);
        let expected = [0.0872, 0.0646, 0.0050, 0.0280, 0.0005];
        for (row, e) in rep.rows.iter().zip(expected) {
            assert!((row.efficiency.unwrap() - e).abs() <= 5e-4, "{} {:?}", row.optimizer, row.efficiency);
        }
        let order: Vec<&str> = rep.efficiency_order().iter().map(|r| r.optimizer.as_str()).collect();
        assert_eq!(order, ["m0", "m1", "m3", "m2", "m4"]);
    }
}
