use std::fmt::Write as _;

use super::metrics::{Aggregate, StdKind};
use super::report::{EvalReport, GroupSummary};
use crate::error::{Error, Result};
use crate::model::{EvalGroup, FeatureKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];

    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => Ok(to_csv(report)),
        ReportFormat::Markdown => Ok(to_markdown(report)),
    }
}

impl EvalReport {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let r: EvalReport = serde_json::from_str(text).map_err(|e| Error::Validation(format!("report JSON: {e}")))?;
        if r.schema_version != super::report::REPORT_SCHEMA_VERSION {
            return Err(Error::Validation(format!("report schema_version {} is not supported", r.schema_version)));
        }
        Ok(r)
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.0}%", v * 100.0))
}

fn stat(a: Option<Aggregate>, pick: fn(&Aggregate) -> f64) -> Option<f64> {
    a.as_ref().map(pick)
}

const ROWS: [(&str, fn(&Aggregate) -> f64); 3] =
    [("median", |a| a.median), ("mean", |a| a.mean), ("st.dev", |a| a.std)];

fn group_table(out: &mut String, groups: &[&GroupSummary], cell: impl Fn(&GroupSummary, fn(&Aggregate) -> f64) -> String) {
    out.push('|');
    for g in EvalGroup::ALL {
        write!(out, " | {}", g.table_heading()).unwrap();
    }
    out.push_str(" |\n|---|---:|---:|---:|\n");
    for (label, pick) in ROWS {
        write!(out, "| {label}").unwrap();
        for g in groups {
            write!(out, " | {}", cell(g, pick)).unwrap();
        }
        out.push_str(" |\n");
    }
}

fn to_markdown(r: &EvalReport) -> String {
    let mut out = String::from("# Evaluation report\n\n");
    writeln!(
        out,
        "Images: {} ({} without pixel spacing). Standard deviations divide by {}.\n",
        r.images.len(),
        r.uncalibrated_images.len(),
        match r.std_kind {
            StdKind::Population => "N",
            StdKind::Sample => "N - 1",
        }
    )
    .unwrap();
    let groups: Vec<&GroupSummary> = EvalGroup::ALL.iter().filter_map(|g| r.group(*g)).collect();

    out.push_str("## Detector box IoU against ground-truth boxes\n\n");
    group_table(&mut out, &groups, |g, pick| opt(stat(g.box_iou, pick), 2));

    out.push_str("\n## Landmark error (mm) and mask IoU\n\n");
    group_table(&mut out, &groups, |g, pick| match g.group {
        EvalGroup::PatchesAndOutlines => format!("IoU {}", opt(stat(g.iou, pick), 2)),
        _ => format!("{} mm", opt(stat(g.error_mm, pick), 2)),
    });

    let o = &r.overall;
    out.push_str("\n## Summary\n\n");
    writeln!(out, "- Landmarks identified: {} of {} ({})", o.landmarks_identified, o.landmarks_total, pct(o.landmark_rate)).unwrap();
    writeln!(
        out,
        "- Patches and outlines identified: {} of {} ({})",
        o.regions_identified,
        o.regions_total,
        pct(o.region_rate)
    )
    .unwrap();
    writeln!(
        out,
        "- Landmark error: median {} mm, mean {} mm, st.dev {} mm",
        opt(stat(o.error_mm, |a| a.median), 2),
        opt(stat(o.error_mm, |a| a.mean), 2),
        opt(stat(o.error_mm, |a| a.std), 2)
    )
    .unwrap();
    writeln!(out, "- Landmark errors under {:.1} mm: {}", r.acceptability_mm, pct(o.acceptability)).unwrap();
    writeln!(
        out,
        "- Mask IoU: median {}, mean {}, st.dev {}",
        opt(stat(o.iou, |a| a.median), 2),
        opt(stat(o.iou, |a| a.mean), 2),
        opt(stat(o.iou, |a| a.std), 2)
    )
    .unwrap();

    out.push_str("\n## Per class\n\n");
    out.push_str("| class | group | identified | median | mean | st.dev | box IoU |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for c in &r.classes {
        let (values, unit) = match c.kind {
            FeatureKind::Landmark => (&c.errors_mm, " mm"),
            _ => (&c.ious, ""),
        };
        let a = super::metrics::aggregate(values, r.std_kind);
        let box_mean = super::metrics::aggregate(&c.box_ious, r.std_kind).map(|a| a.mean);
        let cell = |pick: fn(&Aggregate) -> f64| match stat(a, pick) {
            Some(v) => format!("{v:.2}{unit}"),
            None => "n/a".into(),
        };
        writeln!(
            out,
            "| {} | {} | {}/{} | {} | {} | {} | {} |",
            c.code,
            c.group.table_heading(),
            c.identified,
            c.total,
            cell(|a| a.median),
            cell(|a| a.mean),
            cell(|a| a.std),
            opt(box_mean, 2)
        )
        .unwrap();
    }
    out
}

fn to_csv(r: &EvalReport) -> String {
    let mut out = String::from(
        "class,kind,group,identified,total,rate,error_median_mm,error_mean_mm,error_std_mm,\
iou_median,iou_mean,iou_std,box_iou_mean,acceptability\n",
    );
    let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for c in &r.classes {
        let e = super::metrics::aggregate(&c.errors_mm, r.std_kind);
        let i = super::metrics::aggregate(&c.ious, r.std_kind);
        let b = super::metrics::aggregate(&c.box_ious, r.std_kind);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.code,
            match c.kind {
                FeatureKind::Landmark => "landmark",
                FeatureKind::Outline => "outline",
                FeatureKind::Patch => "patch",
            },
            match c.group {
                EvalGroup::LandmarksFemora => "landmarks-femora",
                EvalGroup::LandmarksPelvis => "landmarks-pelvis",
                EvalGroup::PatchesAndOutlines => "patches-and-outlines",
            },
            c.identified,
            c.total,
            num(c.rate()),
            num(stat(e, |a| a.median)),
            num(stat(e, |a| a.mean)),
            num(stat(e, |a| a.std)),
            num(stat(i, |a| a.median)),
            num(stat(i, |a| a.mean)),
            num(stat(i, |a| a.std)),
            num(stat(b, |a| a.mean)),
            num(super::metrics::acceptability(&c.errors_mm, r.acceptability_mm)),
        )
        .unwrap();
    }
    out
}
