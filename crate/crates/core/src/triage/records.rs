use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::Serialize;

use super::stats::{spearman, StatsError};
use super::taxonomy::{Cause, RootCause, Stage, Symptom, SubCause};
use crate::arch::ArchLevel;
use crate::coverage::{format_hundredths, percent_hundredths};

pub const HEADER: [&str; 6] = ["bug_id", "framework", "root_cause", "symptom", "stage", "level"];

/// One labeled bug. `level` is `None` for bugs outside the five-level
/// architecture (written `-`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyRecord {
    pub bug_id: String,
    pub framework: String,
    pub cause: Cause,
    pub symptom: Symptom,
    pub stage: Stage,
    pub level: Option<ArchLevel>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordsError {
    #[error("records: {0}")]
    Csv(#[from] csv::Error),
    #[error("records: header must be {expected}, found {found}")]
    Header { expected: String, found: String },
    #[error("records line {line}: {message}")]
    Field { line: u64, message: String },
    #[error("records line {line}: duplicate bug id `{id}`")]
    DuplicateId { line: u64, id: String },
    #[error("records: no records")]
    Empty,
}

fn field<T: FromStr<Err = String>>(line: u64, s: &str) -> Result<T, RecordsError> {
    s.trim().parse().map_err(|message| RecordsError::Field { line, message })
}

pub fn load_records(reader: impl Read) -> Result<Vec<TaxonomyRecord>, RecordsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(RecordsError::Header {
            expected: HEADER.join(","),
            found: header.join(","),
        });
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(RecordsError::DuplicateId { line, id });
        }
        let level = match &row[5] {
            "-" | "" => None,
            s => Some(field::<ArchLevel>(line, s)?),
        };
        out.push(TaxonomyRecord {
            bug_id: id,
            framework: row[1].to_string(),
            cause: field(line, &row[2])?,
            symptom: field(line, &row[3])?,
            stage: field(line, &row[4])?,
            level,
        });
    }
    if out.is_empty() {
        return Err(RecordsError::Empty);
    }
    Ok(out)
}

pub fn write_records(records: &[TaxonomyRecord], w: impl Write) -> Result<(), RecordsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEADER)?;
    for r in records {
        let level = r.level.map_or("-".to_string(), |l| l.to_string());
        wtr.write_record([
            r.bug_id.as_str(),
            &r.framework,
            &r.cause.to_string(),
            r.symptom.name(),
            r.stage.name(),
            &level,
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Symptom,
    Stage,
    RootCause,
    /// Root cause refined by sub-category where one is recorded.
    SubCause,
    Level,
    Framework,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::Symptom, Axis::Stage, Axis::RootCause, Axis::SubCause, Axis::Level, Axis::Framework];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Symptom => "symptom",
            Axis::Stage => "stage",
            Axis::RootCause => "root_cause",
            Axis::SubCause => "sub_cause",
            Axis::Level => "level",
            Axis::Framework => "framework",
        }
    }

    /// Sort key and label of a record on this axis; `None` when the record
    /// carries no value for it.
    fn key(self, r: &TaxonomyRecord) -> Option<(usize, String)> {
        let pos = |i: Option<usize>| i.expect("closed enumeration");
        Some(match self {
            Axis::Symptom => (pos(Symptom::ALL.iter().position(|s| *s == r.symptom)), r.symptom.to_string()),
            Axis::Stage => (pos(Stage::ALL.iter().position(|s| *s == r.stage)), r.stage.to_string()),
            Axis::RootCause => (pos(RootCause::ALL.iter().position(|s| *s == r.cause.root)), r.cause.root.to_string()),
            Axis::SubCause => {
                let root = pos(RootCause::ALL.iter().position(|s| *s == r.cause.root));
                let sub = r.cause.sub.map_or(0, |s| 1 + pos(SubCause::ALL.iter().position(|x| *x == s)));
                (root * 100 + sub, r.cause.to_string())
            }
            Axis::Level => {
                let l = r.level?;
                (pos(ArchLevel::ALL.iter().position(|x| *x == l)), l.to_string())
            }
            Axis::Framework => (0, r.framework.clone()),
        })
    }

    /// Every label the axis can take, in enumeration order. Empty for
    /// free-text axes.
    fn universe(self) -> Vec<(usize, String)> {
        match self {
            Axis::Symptom => Symptom::ALL.iter().enumerate().map(|(i, s)| (i, s.to_string())).collect(),
            Axis::Stage => Stage::ALL.iter().enumerate().map(|(i, s)| (i, s.to_string())).collect(),
            Axis::RootCause => RootCause::ALL.iter().enumerate().map(|(i, s)| (i, s.to_string())).collect(),
            Axis::Level => ArchLevel::ALL.iter().enumerate().map(|(i, s)| (i, s.to_string())).collect(),
            Axis::SubCause | Axis::Framework => Vec::new(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| format!("unknown axis `{s}` (expected one of symptom, stage, root_cause, sub_cause, level, framework)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistRow {
    pub label: String,
    pub count: usize,
    pub percent_hundredths: u64,
}

impl DistRow {
    pub fn percent(&self) -> String {
        format_hundredths(self.percent_hundredths)
    }
}

/// Label counts with two-decimal shares of the records that carry a value on
/// `axis`, largest first, ties in enumeration order.
pub fn distribution(records: &[TaxonomyRecord], axis: Axis) -> Vec<DistRow> {
    let mut counts: BTreeMap<(usize, String), usize> = BTreeMap::new();
    for k in records.iter().filter_map(|r| axis.key(r)) {
        *counts.entry(k).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let mut rows: Vec<((usize, String), usize)> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    rows.into_iter()
        .map(|((_, label), count)| DistRow {
            label,
            count,
            percent_hundredths: percent_hundredths(count, total),
        })
        .collect()
}

pub fn format_distribution(axis: Axis, rows: &[DistRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).chain([axis.name().len()]).max().unwrap_or(0);
    let mut out = format!("{:<width$}  {:>6}  {:>8}\n", axis.name(), "count", "percent");
    for r in rows {
        out += &format!("{:<width$}  {:>6}  {:>7}%\n", r.label, r.count, r.percent());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Crosstab {
    pub row_axis: Axis,
    pub col_axis: Axis,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<usize>>,
    pub row_totals: Vec<usize>,
    pub col_totals: Vec<usize>,
    pub total: usize,
}

impl Crosstab {
    pub fn get(&self, row: &str, col: &str) -> Option<usize> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.cols.iter().position(|c| c == col)?;
        Some(self.cells[i][j])
    }
}

/// Joint counts over two axes; records lacking a value on either axis are
/// left out. Labels appear in enumeration order.
pub fn crosstab(records: &[TaxonomyRecord], row_axis: Axis, col_axis: Axis) -> Crosstab {
    let pairs: Vec<((usize, String), (usize, String))> = records
        .iter()
        .filter_map(|r| Some((row_axis.key(r)?, col_axis.key(r)?)))
        .collect();
    let rows: Vec<(usize, String)> = pairs.iter().map(|p| p.0.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let cols: Vec<(usize, String)> = pairs.iter().map(|p| p.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut cells = vec![vec![0; cols.len()]; rows.len()];
    for (r, c) in &pairs {
        let i = rows.binary_search(r).expect("present");
        let j = cols.binary_search(c).expect("present");
        cells[i][j] += 1;
    }
    let row_totals = cells.iter().map(|r| r.iter().sum()).collect();
    let col_totals = (0..cols.len()).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    Crosstab {
        row_axis,
        col_axis,
        rows: rows.into_iter().map(|r| r.1).collect(),
        cols: cols.into_iter().map(|c| c.1).collect(),
        cells,
        row_totals,
        col_totals,
        total: pairs.len(),
    }
}

impl fmt::Display for Crosstab {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let corner = format!("{}\\{}", self.row_axis, self.col_axis);
        let lw = self.rows.iter().map(String::len).chain([corner.len(), 5]).max().unwrap_or(0);
        let widths: Vec<usize> = self.cols.iter().map(|c| c.len().max(5)).collect();
        write!(f, "{corner:<lw$}")?;
        for (c, w) in self.cols.iter().zip(&widths) {
            write!(f, "  {c:>w$}")?;
        }
        writeln!(f, "  {:>6}", "Total")?;
        for (i, r) in self.rows.iter().enumerate() {
            write!(f, "{r:<lw$}")?;
            for (v, w) in self.cells[i].iter().zip(&widths) {
                write!(f, "  {v:>w$}")?;
            }
            writeln!(f, "  {:>6}", self.row_totals[i])?;
        }
        write!(f, "{:<lw$}", "Total")?;
        for (v, w) in self.col_totals.iter().zip(&widths) {
            write!(f, "  {v:>w$}")?;
        }
        writeln!(f, "  {:>6}", self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Commonality {
    pub left: String,
    pub right: String,
    /// Spearman rho, or why it is undefined.
    pub rho: Result<f64, String>,
}

/// Pairwise Spearman correlation between frameworks of their per-category
/// count vectors on `axis`. Categories absent from every framework are kept
/// as zero counts.
pub fn framework_commonality(records: &[TaxonomyRecord], axis: Axis) -> Vec<Commonality> {
    let frameworks: BTreeSet<&str> = records.iter().map(|r| r.framework.as_str()).collect();
    let mut labels: BTreeSet<(usize, String)> = axis.universe().into_iter().collect();
    labels.extend(records.iter().filter_map(|r| axis.key(r)));
    let labels: Vec<(usize, String)> = labels.into_iter().collect();
    let vector = |fw: &str| -> Vec<f64> {
        labels
            .iter()
            .map(|l| {
                records
                    .iter()
                    .filter(|r| r.framework == fw && axis.key(r).as_ref() == Some(l))
                    .count() as f64
            })
            .collect()
    };
    let fws: Vec<&str> = frameworks.into_iter().collect();
    let mut out = Vec::new();
    for (i, a) in fws.iter().enumerate() {
        for b in &fws[i + 1..] {
            out.push(Commonality {
                left: a.to_string(),
                right: b.to_string(),
                rho: spearman(&vector(a), &vector(b)).map_err(|e: StatsError| e.to_string()),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "bug_id,framework,root_cause,symptom,stage,level\n\
                          1,TF,TypeIssue/TensorType,Crash,Training,OperationImpl\n\
                          2,TF,Misconfiguration,BuildFailure,Installation,-\n\
                          3,PT,ApiMisuse,Crash,Deployment,UserLevelAPI\n\
                          4,PT,NumericalIssue,IncorrectFunctionality,Training,OperationImpl\n";

    #[test]
    fn load_and_write_round_trip() {
        let recs = load_records(SAMPLE.as_bytes()).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[1].level, None);
        let mut buf = Vec::new();
        write_records(&recs, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), SAMPLE);
    }

    #[test]
    fn load_errors() {
        let bad = SAMPLE.replace("NumericalIssue", "Numerology");
        assert!(matches!(load_records(bad.as_bytes()), Err(RecordsError::Field { line: 5, .. })));
        let dup = SAMPLE.replace("4,PT", "3,PT");
        assert!(matches!(load_records(dup.as_bytes()), Err(RecordsError::DuplicateId { .. })));
        assert!(matches!(load_records("a,b\n".as_bytes()), Err(RecordsError::Header { .. })));
        assert!(matches!(load_records(SAMPLE.lines().next().unwrap().as_bytes()), Err(RecordsError::Empty)));
    }

    #[test]
    fn distribution_order_and_percent() {
        let recs = load_records(SAMPLE.as_bytes()).unwrap();
        let d = distribution(&recs, Axis::Symptom);
        assert_eq!(d[0].label, "Crash");
        assert_eq!(d[0].percent(), "50.00");
        // 1-1 tie broken by enumeration order
        assert_eq!(d[1].label, "IncorrectFunctionality");
        let lv = distribution(&recs, Axis::Level);
        assert_eq!(lv.iter().map(|r| r.count).sum::<usize>(), 3);
        assert_eq!(distribution(&recs[..1], Axis::Stage)[0].percent(), "100.00");
    }

    #[test]
    fn crosstab_marginals() {
        let recs = load_records(SAMPLE.as_bytes()).unwrap();
        let t = crosstab(&recs, Axis::Symptom, Axis::Stage);
        assert_eq!(t.total, 4);
        assert_eq!(t.get("Crash", "Training"), Some(1));
        for (label, total) in t.rows.iter().zip(&t.row_totals) {
            let d = distribution(&recs, Axis::Symptom);
            assert_eq!(d.iter().find(|r| &r.label == label).unwrap().count, *total);
        }
        assert!(t.to_string().contains("Total"));
        assert_eq!(crosstab(&recs, Axis::SubCause, Axis::Level).rows[0], "TypeIssue/TensorType");
    }

    #[test]
    fn commonality_pairs() {
        let recs = load_records(SAMPLE.as_bytes()).unwrap();
        let c = framework_commonality(&recs, Axis::Symptom);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].left.as_str(), c[0].right.as_str()), ("PT", "TF"));
        assert!(c[0].rho.is_ok());
    }
}
