//! Inter-rater agreement and annotation timing.
//!
//! Cohen's kappa uses the product of the two raters' marginals as chance
//! agreement; Fleiss' kappa uses the squared pooled category proportions.
//! Both are computed from integer counts, so degenerate chance agreement
//! (`p_e == 1`) is detected exactly and reported as an error instead of a
//! number.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ParticipantId;
use crate::model::{ClassLabel, DirectionAction};
use crate::session::AnnotationRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgreementError {
    #[error("label lists differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("no items to compare")]
    EmptyInput,
    #[error("chance agreement is 1; kappa is undefined")]
    DegenerateMarginals,
    #[error("at least two raters are required")]
    SingleRater,
    #[error("rater {rater} has no terminal label for item {item}")]
    IncompleteMatrix { item: String, rater: ParticipantId },
    #[error("rater {rater} labeled item {item} more than once")]
    DuplicateRating { item: String, rater: ParticipantId },
    #[error("matrix row {row} has {found} labels, expected {expected}")]
    RaggedMatrix { row: usize, found: usize, expected: usize },
    #[error("no timed decisions for rater {0}")]
    NoRecords(ParticipantId),
}

fn check_pair<T>(a: &[T], b: &[T]) -> Result<(), AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(AgreementError::EmptyInput);
    }
    Ok(())
}

/// Share of aligned items with equal labels, in percent.
pub fn percent_agreement<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, AgreementError> {
    check_pair(a, b)?;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(100.0 * agree as f64 / a.len() as f64)
}

/// Cohen's kappa for two aligned label lists.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, AgreementError> {
    check_pair(a, b)?;
    let n = a.len() as u128;
    let mut marginals: BTreeMap<&T, (u128, u128)> = BTreeMap::new();
    let mut agree = 0u128;
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
        if x == y {
            agree += 1;
        }
    }
    let chance: u128 = marginals.values().map(|(ca, cb)| ca * cb).sum();
    let nn = n * n;
    if chance == nn {
        return Err(AgreementError::DegenerateMarginals);
    }
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / nn as f64;
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Items × raters table of terminal labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    items: Vec<String>,
    raters: Vec<ParticipantId>,
    /// `labels[item][rater]`
    labels: Vec<Vec<ClassLabel>>,
    categories: BTreeSet<ClassLabel>,
}

impl LabelMatrix {
    pub fn new(
        items: Vec<String>,
        raters: Vec<ParticipantId>,
        labels: Vec<Vec<ClassLabel>>,
    ) -> Result<Self, AgreementError> {
        if items.is_empty() || labels.len() != items.len() {
            return Err(AgreementError::EmptyInput);
        }
        for (row, l) in labels.iter().enumerate() {
            if l.len() != raters.len() {
                return Err(AgreementError::RaggedMatrix {
                    row,
                    found: l.len(),
                    expected: raters.len(),
                });
            }
        }
        let categories = labels.iter().flatten().cloned().collect();
        Ok(Self {
            items,
            raters,
            labels,
            categories,
        })
    }

    /// Builds a matrix from string cells; items and raters are named by
    /// position.
    pub fn from_rows<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self, AgreementError> {
        let raters = rows.first().map(|r| r.len()).unwrap_or(0);
        Self::new(
            (0..rows.len()).map(|i| format!("item{i}")).collect(),
            (0..raters)
                .map(|r| ParticipantId::new(format!("rater{}", r + 1)))
                .collect(),
            rows.iter()
                .map(|r| r.iter().map(ClassLabel::new).collect())
                .collect(),
        )
    }

    /// Builds the matrix from decision records: only label decisions that are
    /// not undone count, items and raters are sorted, and every rater must
    /// have labeled every item.
    pub fn from_ratings(ratings: &[RatingRecord]) -> Result<Self, AgreementError> {
        let mut cells: BTreeMap<(&str, &ParticipantId), &ClassLabel> = BTreeMap::new();
        let mut items = BTreeSet::new();
        let mut raters = BTreeSet::new();
        for r in ratings {
            let Some(label) = r.terminal_label() else {
                continue;
            };
            items.insert(r.item.as_str());
            raters.insert(&r.rater);
            if cells.insert((r.item.as_str(), &r.rater), label).is_some() {
                return Err(AgreementError::DuplicateRating {
                    item: r.item.clone(),
                    rater: r.rater.clone(),
                });
            }
        }
        let mut labels = Vec::with_capacity(items.len());
        for item in &items {
            let mut row = Vec::with_capacity(raters.len());
            for rater in &raters {
                match cells.get(&(*item, *rater)) {
                    Some(l) => row.push((*l).clone()),
                    None => {
                        return Err(AgreementError::IncompleteMatrix {
                            item: (*item).to_owned(),
                            rater: (*rater).clone(),
                        })
                    }
                }
            }
            labels.push(row);
        }
        Self::new(
            items.into_iter().map(str::to_owned).collect(),
            raters.into_iter().cloned().collect(),
            labels,
        )
    }

    /// Adds configured classes to the category universe. Classes nobody
    /// chose contribute zero to chance agreement.
    pub fn with_categories<I: IntoIterator<Item = ClassLabel>>(mut self, extra: I) -> Self {
        self.categories.extend(extra);
        self
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn raters(&self) -> &[ParticipantId] {
        &self.raters
    }

    pub fn categories(&self) -> &BTreeSet<ClassLabel> {
        &self.categories
    }

    pub fn row(&self, item: usize) -> &[ClassLabel] {
        &self.labels[item]
    }

    pub fn column(&self, rater: usize) -> Vec<&ClassLabel> {
        self.labels.iter().map(|row| &row[rater]).collect()
    }
}

/// Fleiss' kappa over a complete matrix.
pub fn fleiss_kappa(matrix: &LabelMatrix) -> Result<f64, AgreementError> {
    let n = matrix.raters.len() as u128;
    if n < 2 {
        return Err(AgreementError::SingleRater);
    }
    let items = matrix.items.len() as u128;
    if items == 0 {
        return Err(AgreementError::EmptyInput);
    }

    let mut totals: HashMap<&ClassLabel, u128> = HashMap::new();
    let mut sum_sq = 0u128;
    for row in &matrix.labels {
        let mut counts: HashMap<&ClassLabel, u128> = HashMap::new();
        for l in row {
            *counts.entry(l).or_default() += 1;
        }
        for (l, c) in counts {
            sum_sq += c * c;
            *totals.entry(l).or_default() += c;
        }
    }

    // P̄ = (Σ_i Σ_c n_ic² − N·n) / (N·n·(n−1))
    let agree_num = sum_sq - items * n;
    let agree_den = items * n * (n - 1);
    // P̄_e = Σ_c T_c² / (N·n)²
    let cells = items * n;
    let chance_num: u128 = totals.values().map(|t| t * t).sum();
    let chance_den = cells * cells;
    if chance_num == chance_den {
        return Err(AgreementError::DegenerateMarginals);
    }
    let p_bar = agree_num as f64 / agree_den as f64;
    let p_e = chance_num as f64 / chance_den as f64;
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// The analytics view of one decision, whether it comes from a live session
/// or from an exported CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater: ParticipantId,
    /// Image filename; unique within a dataset.
    pub item: String,
    /// `None` for postpones.
    pub label: Option<ClassLabel>,
    pub duration_ms: Option<u64>,
    pub undone: bool,
}

impl RatingRecord {
    pub fn terminal_label(&self) -> Option<&ClassLabel> {
        if self.undone {
            None
        } else {
            self.label.as_ref()
        }
    }
}

impl From<&AnnotationRecord> for RatingRecord {
    fn from(r: &AnnotationRecord) -> Self {
        Self {
            rater: r.participant_id.clone(),
            item: r.image_filename.clone(),
            label: match &r.action {
                DirectionAction::Label(l) => Some(l.clone()),
                _ => None,
            },
            duration_ms: r.duration_ms,
            undone: r.undone,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    /// Mean seconds per image over terminal decisions with a duration.
    pub mean_seconds: f64,
    pub decisions: usize,
}

/// Mean terminal-decision time for one rater.
pub fn rater_timing(records: &[RatingRecord], rater: &ParticipantId) -> Result<TimingStats, AgreementError> {
    let durations: Vec<u64> = records
        .iter()
        .filter(|r| &r.rater == rater && r.terminal_label().is_some())
        .filter_map(|r| r.duration_ms)
        .collect();
    if durations.is_empty() {
        return Err(AgreementError::NoRecords(rater.clone()));
    }
    let total: u64 = durations.iter().sum();
    Ok(TimingStats {
        mean_seconds: total as f64 / 1000.0 / durations.len() as f64,
        decisions: durations.len(),
    })
}

/// Per-rater mean seconds per image for every rater appearing in `records`.
pub fn timing_summary(records: &[RatingRecord]) -> Result<BTreeMap<ParticipantId, TimingStats>, AgreementError> {
    let raters: BTreeSet<&ParticipantId> = records.iter().map(|r| &r.rater).collect();
    if raters.is_empty() {
        return Err(AgreementError::EmptyInput);
    }
    raters
        .into_iter()
        .map(|r| rater_timing(records, r).map(|t| (r.clone(), t)))
        .collect()
}

/// Mean over labeled items of the summed time of every presentation of the
/// item (postponed and undone ones included). Complements
/// [`timing_summary`], which only counts the terminal presentation.
pub fn presentation_time_summary(records: &[RatingRecord]) -> BTreeMap<ParticipantId, TimingStats> {
    let mut per_item: BTreeMap<(&ParticipantId, &str), (u64, bool)> = BTreeMap::new();
    for r in records {
        let e = per_item.entry((&r.rater, r.item.as_str())).or_default();
        e.0 += r.duration_ms.unwrap_or(0);
        e.1 |= r.terminal_label().is_some();
    }
    let mut acc: BTreeMap<ParticipantId, (u64, usize)> = BTreeMap::new();
    for ((rater, _), (ms, terminal)) in per_item {
        if terminal {
            let e = acc.entry(rater.clone()).or_default();
            e.0 += ms;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(r, (ms, n))| {
            (
                r,
                TimingStats {
                    mean_seconds: ms as f64 / 1000.0 / n as f64,
                    decisions: n,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAgreement {
    pub rater_a: ParticipantId,
    pub rater_b: ParticipantId,
    pub percent_agreement: f64,
    /// `None` when kappa is undefined for the pair.
    pub cohen_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub raters: Vec<ParticipantId>,
    pub items: usize,
    pub categories: Vec<ClassLabel>,
    pub pairwise: Vec<PairwiseAgreement>,
    pub fleiss_kappa: Option<f64>,
    /// `None` for raters without any timed terminal decision.
    pub timing: BTreeMap<ParticipantId, Option<TimingStats>>,
    pub counts: BTreeMap<ParticipantId, BTreeMap<ClassLabel, usize>>,
}

fn undefined_as_none(r: Result<f64, AgreementError>) -> Result<Option<f64>, AgreementError> {
    match r {
        Ok(k) => Ok(Some(k)),
        Err(AgreementError::DegenerateMarginals) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Pairwise agreement for every rater pair (in rater order), Fleiss' kappa,
/// timing and per-class counts.
pub fn build_report(matrix: &LabelMatrix, records: &[RatingRecord]) -> Result<AgreementReport, AgreementError> {
    let raters = matrix.raters().to_vec();
    let columns: Vec<Vec<&ClassLabel>> = (0..raters.len()).map(|r| matrix.column(r)).collect();

    let mut pairwise = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            pairwise.push(PairwiseAgreement {
                rater_a: raters[i].clone(),
                rater_b: raters[j].clone(),
                percent_agreement: percent_agreement(&columns[i], &columns[j])?,
                cohen_kappa: undefined_as_none(cohen_kappa(&columns[i], &columns[j]))?,
            });
        }
    }
    let fleiss = undefined_as_none(fleiss_kappa(matrix))?;

    let timing = raters
        .iter()
        .map(|r| (r.clone(), rater_timing(records, r).ok()))
        .collect();

    let counts = raters
        .iter()
        .zip(&columns)
        .map(|(r, col)| {
            let mut c: BTreeMap<ClassLabel, usize> =
                matrix.categories().iter().map(|k| (k.clone(), 0)).collect();
            for l in col {
                *c.entry((*l).clone()).or_default() += 1;
            }
            (r.clone(), c)
        })
        .collect();

    Ok(AgreementReport {
        raters,
        items: matrix.items().len(),
        categories: matrix.categories().iter().cloned().collect(),
        pairwise,
        fleiss_kappa: fleiss,
        timing,
        counts,
    })
}

/// Report straight from decision records: builds the matrix from terminal
/// labels, widens the category universe with `categories`, and times the
/// same records.
pub fn report_from_ratings<I>(ratings: &[RatingRecord], categories: I) -> Result<AgreementReport, AgreementError>
where
    I: IntoIterator<Item = ClassLabel>,
{
    let matrix = LabelMatrix::from_ratings(ratings)?.with_categories(categories);
    build_report(&matrix, ratings)
}

/// Rounds half away from zero at `decimals` places, treating values within
/// floating-point noise of a tie as the tie.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let scaled = x * scale;
    let nudge = 1e-9 * scaled.abs().max(1.0);
    (scaled + nudge.copysign(scaled)).round() / scale
}

/// Fixed-point display string after [`round_half_up`].
pub fn format_fixed(x: f64, decimals: u32) -> String {
    let r = round_half_up(x, decimals);
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{:.*}", decimals as usize, r)
}

pub const UNDEFINED: &str = "undef";

fn fmt_kappa(k: Option<f64>, decimals: u32) -> String {
    k.map(|k| format_fixed(k, decimals))
        .unwrap_or_else(|| UNDEFINED.to_owned())
}

impl AgreementReport {
    /// Display strings for one pairwise row: percent (2 dp, with `%`) and
    /// kappa (2 dp or `undef`).
    pub fn pair_cells(p: &PairwiseAgreement) -> (String, String) {
        (
            format!("{} %", format_fixed(p.percent_agreement, 2)),
            fmt_kappa(p.cohen_kappa, 2),
        )
    }

    pub fn fleiss_display(&self) -> String {
        fmt_kappa(self.fleiss_kappa, 3)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: timing per participant, pairwise agreement, Fleiss'
    /// kappa and label counts.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .raters
            .iter()
            .map(|r| r.as_str().len())
            .max()
            .unwrap_or(0)
            .max("Participant".len());

        let _ = writeln!(out, "Average annotation time per image (seconds)");
        let _ = writeln!(out, "{:<name_w$}  {:>8}  {:>9}", "Participant", "Mean", "Decisions");
        for r in &self.raters {
            match self.timing.get(r).copied().flatten() {
                Some(t) => {
                    let _ = writeln!(
                        out,
                        "{:<name_w$}  {:>8}  {:>9}",
                        r.as_str(),
                        format_fixed(t.mean_seconds, 2),
                        t.decisions
                    );
                }
                None => {
                    let _ = writeln!(out, "{:<name_w$}  {:>8}  {:>9}", r.as_str(), "n/a", 0);
                }
            }
        }

        let pair_names: Vec<String> = self
            .pairwise
            .iter()
            .map(|p| format!("{} vs {}", p.rater_a, p.rater_b))
            .collect();
        let pair_w = pair_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("Participant pair".len());
        let _ = writeln!(out);
        let _ = writeln!(out, "Pairwise inter-observer agreement ({} items)", self.items);
        let _ = writeln!(out, "{:<pair_w$}  {:>9}  {:>13}", "Participant pair", "Agreement", "Cohen's kappa");
        for (p, name) in self.pairwise.iter().zip(&pair_names) {
            let (pct, kappa) = Self::pair_cells(p);
            let _ = writeln!(out, "{:<pair_w$}  {:>9}  {:>13}", name, pct, kappa);
        }

        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Fleiss' kappa ({} raters, {} items): {}",
            self.raters.len(),
            self.items,
            self.fleiss_display()
        );

        let _ = writeln!(out);
        let _ = writeln!(out, "Label counts");
        let mut header = format!("{:<name_w$}", "Participant");
        for c in &self.categories {
            let _ = write!(header, "  {:>w$}", c.as_str(), w = c.as_str().len().max(5));
        }
        let _ = writeln!(out, "{}", header.trim_end());
        for r in &self.raters {
            let mut line = format!("{:<name_w$}", r.as_str());
            for c in &self.categories {
                let n = self.counts.get(r).and_then(|m| m.get(c)).copied().unwrap_or(0);
                let _ = write!(line, "  {:>w$}", n, w = c.as_str().len().max(5));
            }
            let _ = writeln!(out, "{}", line.trim_end());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    #[test]
    fn identical_lists_agree_fully() {
        let a = ["n", "a", "n"];
        assert_eq!(percent_agreement(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn half_agreement() {
        let a = ["n", "n", "a", "a"];
        let b = ["n", "a", "n", "a"];
        assert_eq!(percent_agreement(&a, &b).unwrap(), 50.0);
    }

    #[test]
    fn length_and_empty_errors() {
        let e: [&str; 0] = [];
        assert_eq!(
            percent_agreement(&["a"], &["a", "b"]),
            Err(AgreementError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(percent_agreement(&e, &e), Err(AgreementError::EmptyInput));
        assert_eq!(cohen_kappa(&e, &e), Err(AgreementError::EmptyInput));
    }

    #[test]
    fn kappa_one_for_identical_two_class() {
        let a = ["x", "y", "x"];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_zero_fixture() {
        let k = cohen_kappa(&["x", "x", "y", "y"], &["x", "y", "x", "y"]).unwrap();
        assert!(k.abs() <= TOL);
    }

    #[test]
    fn kappa_degenerate() {
        assert_eq!(
            cohen_kappa(&["x", "x", "x"], &["x", "x", "x"]),
            Err(AgreementError::DegenerateMarginals)
        );
    }

    #[test]
    fn fleiss_small_fixture() {
        let m = LabelMatrix::from_rows(&[vec!["A", "A", "A"], vec!["A", "B", "B"]]).unwrap();
        assert!((fleiss_kappa(&m).unwrap() - 0.25).abs() <= TOL);
    }

    #[test]
    fn fleiss_identical_raters() {
        let m = LabelMatrix::from_rows(&[vec!["A", "A"], vec!["B", "B"], vec!["A", "A"]]).unwrap();
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
    }

    #[test]
    fn fleiss_errors() {
        let m = LabelMatrix::from_rows(&[vec!["A"], vec!["B"]]).unwrap();
        assert_eq!(fleiss_kappa(&m), Err(AgreementError::SingleRater));
        let m = LabelMatrix::from_rows(&[vec!["A", "A"], vec!["A", "A"]]).unwrap();
        assert_eq!(fleiss_kappa(&m), Err(AgreementError::DegenerateMarginals));
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(matches!(
            LabelMatrix::from_rows(&[vec!["A", "A"], vec!["A"]]),
            Err(AgreementError::RaggedMatrix { row: 1, .. })
        ));
    }

    fn rec(rater: &str, item: &str, label: Option<&str>, ms: Option<u64>, undone: bool) -> RatingRecord {
        RatingRecord {
            rater: ParticipantId::new(rater),
            item: item.into(),
            label: label.map(ClassLabel::new),
            duration_ms: ms,
            undone,
        }
    }

    #[test]
    fn timing_mean() {
        let r = vec![
            rec("p", "a", Some("x"), Some(1000), false),
            rec("p", "b", Some("x"), Some(2000), false),
            rec("p", "c", Some("x"), Some(3000), false),
        ];
        let t = timing_summary(&r).unwrap();
        assert_eq!(format_fixed(t[&ParticipantId::new("p")].mean_seconds, 2), "2.00");
    }

    #[test]
    fn timing_single_record_format() {
        let r = vec![rec("e1", "a", Some("x"), Some(1580), false)];
        let t = rater_timing(&r, &ParticipantId::new("e1")).unwrap();
        assert_eq!(format_fixed(t.mean_seconds, 2), "1.58");
    }

    #[test]
    fn timing_ignores_postpones_and_undone() {
        let r = vec![
            rec("p", "a", None, Some(9000), false),
            rec("p", "a", Some("x"), Some(7000), true),
            rec("p", "a", Some("y"), Some(1000), false),
        ];
        let t = rater_timing(&r, &ParticipantId::new("p")).unwrap();
        assert_eq!(t.decisions, 1);
        assert_eq!(t.mean_seconds, 1.0);
        let total = presentation_time_summary(&r);
        assert_eq!(total[&ParticipantId::new("p")].mean_seconds, 17.0);
    }

    #[test]
    fn timing_no_records() {
        let r = vec![rec("p", "a", None, Some(9000), false)];
        assert_eq!(
            rater_timing(&r, &ParticipantId::new("p")),
            Err(AgreementError::NoRecords(ParticipantId::new("p")))
        );
        assert_eq!(timing_summary(&[]), Err(AgreementError::EmptyInput));
    }

    #[test]
    fn matrix_from_ratings_uses_terminal_only() {
        let r = vec![
            rec("p1", "a", Some("x"), None, true),
            rec("p1", "a", Some("y"), None, false),
            rec("p2", "a", None, None, false),
            rec("p2", "a", Some("y"), None, false),
        ];
        let m = LabelMatrix::from_ratings(&r).unwrap();
        assert_eq!(m.row(0), &[ClassLabel::new("y"), ClassLabel::new("y")]);
    }

    #[test]
    fn matrix_from_ratings_incomplete() {
        let r = vec![rec("p1", "a", Some("x"), None, false), rec("p2", "b", Some("x"), None, false)];
        assert!(matches!(
            LabelMatrix::from_ratings(&r),
            Err(AgreementError::IncompleteMatrix { .. })
        ));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(format_fixed(0.125, 2), "0.13");
        assert_eq!(format_fixed(1.005, 2), "1.01");
        assert_eq!(format_fixed(0.6095, 3), "0.610");
        assert_eq!(format_fixed(93.666_666, 2), "93.67");
        assert_eq!(format_fixed(-0.0001, 2), "0.00");
        assert_eq!(format_fixed(-0.125, 2), "-0.13");
    }

    #[test]
    fn identity_pair_row() {
        let m = LabelMatrix::from_rows(&[vec!["n", "n"], vec!["a", "a"]]).unwrap();
        let rep = build_report(&m, &[]).unwrap();
        assert_eq!(rep.pairwise.len(), 1);
        let (pct, k) = AgreementReport::pair_cells(&rep.pairwise[0]);
        assert_eq!((pct.as_str(), k.as_str()), ("100.00 %", "1.00"));
        assert!(rep.render_table().contains("rater1 vs rater2"));
    }

    #[test]
    fn undefined_kappa_renders_undef() {
        let m = LabelMatrix::from_rows(&[vec!["n", "n"], vec!["n", "n"]]).unwrap();
        let rep = build_report(&m, &[]).unwrap();
        assert_eq!(rep.pairwise[0].cohen_kappa, None);
        assert_eq!(rep.fleiss_display(), "undef");
        assert!(rep.render_table().contains("undef"));
    }

    #[test]
    fn unused_category_is_counted_as_zero() {
        let m = LabelMatrix::from_rows(&[vec!["n", "a"], vec!["a", "a"]])
            .unwrap()
            .with_categories([ClassLabel::new("other")]);
        let k_before = fleiss_kappa(&m).unwrap();
        let rep = build_report(&m, &[]).unwrap();
        assert_eq!(rep.counts[&ParticipantId::new("rater1")][&ClassLabel::new("other")], 0);
        assert_eq!(rep.fleiss_kappa, Some(k_before));
    }
}
