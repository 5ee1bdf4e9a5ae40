use std::path::Path;

use super::{balanced_mean, DEFAULT_CHAMFER_SAMPLES};
use crate::error::{Error, Result};
use crate::io::{read_parsed, write_atomic};

const COLUMNS: [&str; 6] = ["id", "dataset_tag", "iou", "chamfer", "mse", "codec_iou"];
const MISSING: &str = "NA";

/// Per-shape metrics. `codec_iou` compares the occupancy of the packed
/// tree's reconstruction with that of its codec round trip; `chamfer` is
/// absent when either surface is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub id: String,
    pub dataset_tag: String,
    pub iou: f64,
    pub chamfer: Option<f64>,
    pub mse: f64,
    pub codec_iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregates {
    pub rows: usize,
    pub mean_iou: f64,
    pub mean_chamfer: f64,
    pub mean_mse: f64,
    pub d_iou: f64,
    pub d_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub chamfer_samples: usize,
    pub rows: Vec<ReportRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl MetricReport {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        MetricReport { chamfer_samples: DEFAULT_CHAMFER_SAMPLES, rows }
    }

    /// Plain means skip absent Chamfer values.
    pub fn aggregates(&self) -> Result<Aggregates> {
        let r = &self.rows;
        Ok(Aggregates {
            rows: r.len(),
            mean_iou: mean(r.iter().map(|x| x.iou)),
            mean_chamfer: mean(r.iter().filter_map(|x| x.chamfer)),
            mean_mse: mean(r.iter().map(|x| x.mse)),
            d_iou: balanced_mean(r, |x| Some(x.iou))?,
            d_mse: balanced_mean(r, |x| Some(x.mse))?,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(MISSING.to_string(), |x| x.to_string())
}

/// Tab-separated report: a `#` line stating the Chamfer convention, the
/// header row, one row per shape, then `#`-prefixed aggregate lines.
pub fn report_text(report: &MetricReport) -> Result<String> {
    let agg = report.aggregates()?;
    let mut out = format!(
        "# chamfer: mean of the two directed mean squared nearest-neighbour distances, {} area-uniform samples per mesh\n",
        report.chamfer_samples
    );
    out.push_str(&COLUMNS.join("\t"));
    out.push('\n');
    for r in &report.rows {
        if r.id.contains(['\t', '\n']) || r.dataset_tag.contains(['\t', '\n']) {
            return Err(Error::param(format!("report row {:?} contains a tab or line break", r.id)));
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.id,
            r.dataset_tag,
            r.iou,
            opt(r.chamfer),
            r.mse,
            opt(r.codec_iou)
        ));
    }
    for (k, v) in [
        ("mean_iou", agg.mean_iou),
        ("mean_chamfer", agg.mean_chamfer),
        ("mean_mse", agg.mean_mse),
        ("d_iou", agg.d_iou),
        ("d_mse", agg.d_mse),
    ] {
        out.push_str(&format!("# {k}\t{v}\n"));
    }
    out.push_str(&format!("# rows\t{}\n", agg.rows));
    Ok(out)
}

fn number(field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::data(format!("{what} {field:?} is not a finite number")))
}

fn optional(field: &str, what: &str) -> Result<Option<f64>> {
    if field == MISSING {
        Ok(None)
    } else {
        number(field, what).map(Some)
    }
}

/// Reads rows back and checks the header, value ranges and the row count
/// recorded in the aggregate block.
pub fn parse_report(text: &str) -> Result<MetricReport> {
    let mut lines = text.lines();
    let convention = lines.next().ok_or_else(|| Error::data("empty report"))?;
    let chamfer_samples = convention
        .strip_prefix("# chamfer:")
        .and_then(|s| s.split(", ").nth(1))
        .and_then(|s| s.split(' ').next())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::data("report lacks the Chamfer convention line"))?;
    if lines.next() != Some(COLUMNS.join("\t").as_str()) {
        return Err(Error::data("report header row does not match the expected columns"));
    }
    let mut rows = Vec::new();
    let mut declared = None;
    for line in lines {
        if let Some(comment) = line.strip_prefix("# ") {
            if let Some(n) = comment.strip_prefix("rows\t") {
                declared = Some(n.parse::<usize>().map_err(|_| Error::data("bad row count"))?);
            }
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != COLUMNS.len() {
            return Err(Error::data(format!("report row has {} fields: {line:?}", f.len())));
        }
        let row = ReportRow {
            id: f[0].to_string(),
            dataset_tag: f[1].to_string(),
            iou: number(f[2], "iou")?,
            chamfer: optional(f[3], "chamfer")?,
            mse: number(f[4], "mse")?,
            codec_iou: optional(f[5], "codec_iou")?,
        };
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(row.iou) || !row.codec_iou.is_none_or(unit) || row.chamfer.is_some_and(|c| c < 0.0) || row.mse < 0.0 {
            return Err(Error::data(format!("report row {} has out-of-range metrics", row.id)));
        }
        rows.push(row);
    }
    if declared != Some(rows.len()) {
        return Err(Error::data(format!("report declares {declared:?} rows but holds {}", rows.len())));
    }
    Ok(MetricReport { chamfer_samples, rows })
}

pub fn write_report(path: &Path, report: &MetricReport) -> Result<()> {
    write_atomic(path, report_text(report)?.as_bytes())
}

pub fn read_report(path: &Path) -> Result<MetricReport> {
    read_parsed(path, |b| parse_report(std::str::from_utf8(b).map_err(|_| Error::data("report is not UTF-8"))?))
}
