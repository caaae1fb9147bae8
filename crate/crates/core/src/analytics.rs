//! Evaluation statistics over assessment records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::GestureKind;
use crate::teaching::AssessmentRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("task value {0} must be > 0")]
    InvalidTask(f64),
    #[error("baseline {0} must be > 0")]
    InvalidBaseline(f64),
    #[error("no records to aggregate")]
    EmptyGroup,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("all paired differences are equal; t is undefined")]
    DegenerateVariance,
    #[error("all x values are equal; slope is undefined")]
    DegenerateX,
}

pub fn relative_error(result: f64, task: f64) -> Result<f64, AnalyticsError> {
    if !(task > 0.0) {
        return Err(AnalyticsError::InvalidTask(task));
    }
    Ok((result - task).abs() / task)
}

pub fn improvement(pre: f64, post: f64) -> Result<f64, AnalyticsError> {
    if !(pre > 0.0) {
        return Err(AnalyticsError::InvalidBaseline(pre));
    }
    Ok((pre - post) / pre)
}

/// Streaming mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn sample_sd(&self) -> Option<f64> {
        (self.n >= 2).then(|| (self.m2 / (self.n - 1) as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Gesture,
    Day,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "by", content = "key")]
pub enum GroupKey {
    All,
    Gesture(GestureKind),
    Day(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub key: GroupKey,
    pub mean: f64,
    /// Sample SD; 0 when `sd_undefined` is set.
    pub sd: f64,
    pub sd_undefined: bool,
    pub n: usize,
}

fn stats_of(key: GroupKey, errors: impl IntoIterator<Item = f64>) -> Option<GroupStats> {
    let mut m = Moments::default();
    errors.into_iter().for_each(|e| m.push(e));
    if m.n == 0 {
        return None;
    }
    let sd = m.sample_sd();
    Some(GroupStats { key, mean: m.mean, sd: sd.unwrap_or(0.0), sd_undefined: sd.is_none(), n: m.n })
}

/// Mean and sample SD of relative error per group, ordered by key.
pub fn mean_relative_error(records: &[AssessmentRecord], group_by: GroupBy) -> Result<Vec<GroupStats>, AnalyticsError> {
    if records.is_empty() {
        return Err(AnalyticsError::EmptyGroup);
    }
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = match group_by {
            GroupBy::Gesture => GroupKey::Gesture(r.gesture),
            GroupBy::Day => GroupKey::Day(r.day),
            GroupBy::None => GroupKey::All,
        };
        groups.entry(key).or_default().push(r.relative_error);
    }
    Ok(groups.into_iter().filter_map(|(k, v)| stats_of(k, v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t_stat: f64,
    pub df: usize,
}

/// Paired t statistic over d = pre − post.
pub fn paired_t(pre: &[f64], post: &[f64]) -> Result<PairedT, AnalyticsError> {
    if pre.len() != post.len() {
        return Err(AnalyticsError::LengthMismatch { left: pre.len(), right: post.len() });
    }
    if pre.len() < 2 {
        return Err(AnalyticsError::TooFewSamples(pre.len()));
    }
    let mut m = Moments::default();
    let first = pre[0] - post[0];
    let mut all_equal = true;
    for (a, b) in pre.iter().zip(post) {
        let d = a - b;
        all_equal &= d == first;
        m.push(d);
    }
    let sd = m.sample_sd().unwrap_or(0.0);
    if all_equal || sd == 0.0 {
        return Err(AnalyticsError::DegenerateVariance);
    }
    let n = m.n as f64;
    Ok(PairedT { t_stat: m.mean / (sd / n.sqrt()), df: m.n - 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of y on x.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<Regression, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooFewSamples(x.len()));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(AnalyticsError::DegenerateX);
    }
    let (mut n, mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        n += 1.0;
        let dx = xi - mx;
        let dy = yi - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (xi - mx);
        syy += dy * (yi - my);
        sxy += dx * (yi - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 0.0 } else { (1.0 - (syy - slope * sxy) / syy).clamp(0.0, 1.0) };
    Ok(Regression { slope, intercept, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRow {
    pub day: u32,
    /// One cell per gesture; `None` when that gesture has no records that day.
    pub cells: BTreeMap<GestureKind, Option<GroupStats>>,
    pub overall: GroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyReport {
    pub participant: String,
    pub rows: Vec<DayRow>,
}

impl DailyReport {
    pub fn overall_trend(&self) -> Vec<(u32, f64)> {
        self.rows.iter().map(|r| (r.day, r.overall.mean)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("participant: {}\n", self.participant);
        let _ = write!(out, "{:>4}", "day");
        for g in GestureKind::ALL {
            let _ = write!(out, " {:>13}", g.label());
        }
        let _ = writeln!(out, " {:>13}", "overall");
        for row in &self.rows {
            let _ = write!(out, "{:>4}", row.day);
            for g in GestureKind::ALL {
                match row.cells.get(&g).and_then(Option::as_ref) {
                    Some(s) => {
                        let _ = write!(out, " {:>13.3}", s.mean);
                    }
                    None => {
                        let _ = write!(out, " {:>13}", "-");
                    }
                }
            }
            let _ = writeln!(out, " {:>13.3}", row.overall.mean);
        }
        out
    }

    /// One CSV row per day and gesture plus an `all` row per day. Absent cells keep
    /// their row with empty statistics and n = 0.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for row in &self.rows {
            let day = row.day.to_string();
            for g in GestureKind::ALL {
                let rec = match row.cells.get(&g).and_then(Option::as_ref) {
                    Some(s) => [self.participant.clone(), day.clone(), g.to_string(), fmt_stat(s.mean), fmt_sd(s), s.n.to_string()],
                    None => [self.participant.clone(), day.clone(), g.to_string(), String::new(), String::new(), "0".into()],
                };
                w.write_record(&rec).expect("in-memory write");
            }
            let s = &row.overall;
            w.write_record([
                self.participant.clone(),
                day,
                "all".into(),
                fmt_stat(s.mean),
                fmt_sd(s),
                s.n.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn fmt_stat(v: f64) -> String {
    format!("{v:.6}")
}

fn fmt_sd(s: &GroupStats) -> String {
    if s.sd_undefined { String::new() } else { fmt_stat(s.sd) }
}

const CSV_HEADER: [&str; 6] = ["participant", "day", "gesture", "mean_rel_err", "sd", "n"];

fn key_columns(key: GroupKey) -> (String, String) {
    match key {
        GroupKey::All => ("all".into(), "all".into()),
        GroupKey::Gesture(g) => ("all".into(), g.to_string()),
        GroupKey::Day(d) => (d.to_string(), "all".into()),
    }
}

/// Grouped statistics as CSV with the report columns; `all` marks a column
/// that was aggregated over.
pub fn grouped_to_csv(participant: &str, stats: &[GroupStats], header: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if header {
        w.write_record(CSV_HEADER).expect("in-memory write");
    }
    for s in stats {
        let (day, gesture) = key_columns(s.key);
        w.write_record([participant.to_string(), day, gesture, fmt_stat(s.mean), fmt_sd(s), s.n.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn grouped_to_text(participant: &str, stats: &[GroupStats]) -> String {
    let mut out = format!("participant: {participant}\n{:>4} {:>13} {:>12} {:>10} {:>5}\n", "day", "gesture", "mean_rel_err", "sd", "n");
    for s in stats {
        let (day, gesture) = key_columns(s.key);
        let sd = if s.sd_undefined { "-".to_string() } else { format!("{:.3}", s.sd) };
        let _ = writeln!(out, "{day:>4} {gesture:>13} {:>12.3} {sd:>10} {:>5}", s.mean, s.n);
    }
    out
}

/// Per-day means for each gesture and overall, restricted to one participant.
pub fn daily_report(log: &[AssessmentRecord], participant: &str) -> DailyReport {
    let mut days: BTreeMap<u32, Vec<&AssessmentRecord>> = BTreeMap::new();
    for r in log.iter().filter(|r| r.participant == participant) {
        days.entry(r.day).or_default().push(r);
    }
    let rows = days
        .into_iter()
        .map(|(day, recs)| {
            let cells = GestureKind::ALL
                .iter()
                .map(|&g| {
                    let errs = recs.iter().filter(|r| r.gesture == g).map(|r| r.relative_error);
                    (g, stats_of(GroupKey::Gesture(g), errs))
                })
                .collect();
            let overall = stats_of(GroupKey::Day(day), recs.iter().map(|r| r.relative_error)).expect("day has records");
            DayRow { day, cells, overall }
        })
        .collect();
    DailyReport { participant: participant.to_string(), rows }
}

/// Participants in first-seen order.
pub fn participants(log: &[AssessmentRecord]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in log {
        if !seen.contains(&r.participant) {
            seen.push(r.participant.clone());
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(participant: &str, day: u32, gesture: GestureKind, err: f64) -> AssessmentRecord {
        AssessmentRecord {
            participant: participant.into(),
            day,
            gesture,
            task: 10.0,
            result: 10.0 * (1.0 + err),
            relative_error: err,
            t_ms: 0,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn relative_error_examples() {
        assert!(close(relative_error(3.3, 3.0).unwrap(), 0.1, 1e-12));
        assert_eq!(relative_error(7.0, 7.0).unwrap(), 0.0);
        assert!(close(relative_error(0.9, 1.0).unwrap(), 0.1, 1e-12));
        assert_eq!(relative_error(1.0, 0.0), Err(AnalyticsError::InvalidTask(0.0)));
        assert!(relative_error(1.0, -2.0).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert!(close(improvement(0.234, 0.097).unwrap(), 0.58547, 5e-6));
        assert!(close(improvement(0.184, 0.060).unwrap(), 0.67391, 5e-6));
        assert_eq!(improvement(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(improvement(0.0, 0.1), Err(AnalyticsError::InvalidBaseline(0.0)));
    }

    #[test]
    fn grouping() {
        let g = GestureKind::OneHand;
        let s = mean_relative_error(&[rec("p", 0, g, 0.2), rec("p", 0, g, 0.05)], GroupBy::None).unwrap();
        assert!(close(s[0].mean, 0.125, 1e-15));
        assert!(!s[0].sd_undefined);

        let s = mean_relative_error(&[rec("p", 0, g, 0.3)], GroupBy::Gesture).unwrap();
        assert_eq!((s[0].mean, s[0].sd, s[0].sd_undefined, s[0].n), (0.3, 0.0, true, 1));

        let recs = [rec("p", 0, g, 0.1), rec("p", 0, GestureKind::TwoHands, 0.3), rec("p", 1, g, 0.2)];
        let s = mean_relative_error(&recs, GroupBy::Gesture).unwrap();
        assert_eq!(s.len(), 2);
        assert!(close(s[0].mean, 0.15, 1e-15));
        assert!(close(s[1].mean, 0.3, 1e-15));
        assert_eq!(mean_relative_error(&[], GroupBy::Day), Err(AnalyticsError::EmptyGroup));
    }

    #[test]
    fn paired_t_examples() {
        let r = paired_t(&[0.3, 0.2, 0.4], &[0.1, 0.1, 0.2]).unwrap();
        assert!(close(r.t_stat, 5.0, 1e-9), "{}", r.t_stat);
        assert_eq!(r.df, 2);
        let neg = paired_t(&[0.1, 0.1, 0.2], &[0.3, 0.2, 0.4]).unwrap();
        assert!(close(neg.t_stat, -r.t_stat, 1e-12));
        assert_eq!(paired_t(&[0.2, 0.3], &[0.2, 0.3]), Err(AnalyticsError::DegenerateVariance));
        assert!(matches!(paired_t(&[0.1], &[0.1, 0.2]), Err(AnalyticsError::LengthMismatch { .. })));
        assert_eq!(paired_t(&[0.1], &[0.2]), Err(AnalyticsError::TooFewSamples(1)));
    }

    #[test]
    fn regression_examples() {
        let r = linear_regression(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!((r.slope, r.intercept, r.r_squared), (1.0, 0.0, 1.0));
        let r = linear_regression(&[0.0, 1.0, 2.0], &[0.0, 2.0, 2.0]).unwrap();
        assert!(close(r.slope, 1.0, 1e-12) && close(r.intercept, 1.0 / 3.0, 1e-12) && close(r.r_squared, 0.75, 1e-12));
        let r = linear_regression(&[0.0, 1.0, 2.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!((r.slope, r.r_squared), (0.0, 0.0));
        assert_eq!(linear_regression(&[1.0, 1.0], &[0.0, 3.0]), Err(AnalyticsError::DegenerateX));
    }

    #[test]
    fn daily_report_shape() {
        let g = GestureKind::OneFinger;
        let one_day = daily_report(&[rec("p", 0, g, 0.1), rec("q", 3, g, 0.2)], "p");
        assert_eq!(one_day.rows.len(), 1);
        assert_eq!(one_day.rows[0].cells[&GestureKind::TwoHands], None);
        assert!(one_day.rows[0].cells[&g].is_some());
        let csv = one_day.to_csv();
        assert!(csv.starts_with("participant,day,gesture,mean_rel_err,sd,n\n"));
        assert!(csv.contains("p,0,two-hands,,,0\n"), "{csv}");
        assert!(csv.contains("p,0,all,0.100000,,1\n"), "{csv}");
        assert!(one_day.to_text().contains('-'));
    }

    #[test]
    fn grouped_rendering() {
        let recs: Vec<_> = GestureKind::ALL.iter().map(|&g| rec("p", 2, g, 0.1)).collect();
        let stats = mean_relative_error(&recs, GroupBy::Gesture).unwrap();
        let csv = grouped_to_csv("p", &stats, true);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.contains("p,all,body-rotation,0.100000,,1\n"), "{csv}");
        let by_day = mean_relative_error(&recs, GroupBy::Day).unwrap();
        assert!(grouped_to_csv("p", &by_day, false).starts_with("p,2,all,0.100000,0.000000,5\n"));
        assert_eq!(grouped_to_text("p", &stats).lines().count(), 7);
    }

    #[test]
    fn decreasing_schedule_gives_decreasing_trend() {
        let mut log = Vec::new();
        for day in 0..5u32 {
            let injected = 0.25 - 0.04 * day as f64;
            for g in GestureKind::ALL {
                log.push(rec("p", day, g, injected));
                log.push(rec("p", day, g, injected + 0.01));
            }
        }
        let trend = daily_report(&log, "p").overall_trend();
        assert_eq!(trend.len(), 5);
        assert!(trend.windows(2).all(|w| w[1].1 < w[0].1));
        for (day, mean) in trend {
            assert!(close(mean, 0.255 - 0.04 * day as f64, 1e-12));
        }
    }

    proptest! {
        #[test]
        fn relative_error_scale_invariant(r in 0.0f64..200.0, t in 0.01f64..200.0, k in 0.01f64..100.0) {
            let a = relative_error(r, t).unwrap();
            let b = relative_error(k * r, k * t).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn improvement_inverts_reduction(pre in 0.001f64..10.0, f in 0.0f64..=1.0) {
            prop_assert!((improvement(pre, pre * (1.0 - f)).unwrap() - f).abs() <= 1e-12);
        }

        #[test]
        fn residuals_orthogonal(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..60)) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            prop_assume!(x.iter().any(|&v| v != x[0]));
            let r = linear_regression(&x, &y).unwrap();
            let dot: f64 = x.iter().zip(&y).map(|(xi, yi)| xi * (yi - r.slope * xi - r.intercept)).sum();
            prop_assert!(dot.abs() < 1e-9 * x.len() as f64);
            prop_assert!((0.0..=1.0).contains(&r.r_squared));
        }

        #[test]
        fn overall_is_weighted_group_mean(errs in prop::collection::vec((0usize..5, 0u32..4, 0.0f64..1.0), 1..80)) {
            let recs: Vec<_> = errs.iter().map(|&(g, d, e)| rec("p", d, GestureKind::ALL[g], e)).collect();
            let all = mean_relative_error(&recs, GroupBy::None).unwrap()[0].mean;
            for by in [GroupBy::Gesture, GroupBy::Day] {
                let groups = mean_relative_error(&recs, by).unwrap();
                let n: usize = groups.iter().map(|s| s.n).sum();
                let weighted: f64 = groups.iter().map(|s| s.mean * s.n as f64).sum::<f64>() / n as f64;
                prop_assert_eq!(n, recs.len());
                prop_assert!((weighted - all).abs() < 1e-12);
            }
        }
    }
}
