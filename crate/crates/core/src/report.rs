//! Report layouts over a run store: the two-step table, the encoder × pooler
//! grid heatmap and the encoder/pooler curves.
//!
//! Every layout is a pure function of the store contents: cells average the
//! matching records of all selected runs, iteration order is fixed, and
//! numbers are printed with fixed precision.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::store::{EvalRecord, GridRecord, RunStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Table1,
    Grid,
    Curves,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Table1 => "table1",
            Layout::Grid => "grid",
            Layout::Curves => "curves",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(Layout::Table1),
            "grid" => Ok(Layout::Grid),
            "curves" => Ok(Layout::Curves),
            other => Err(Error::Usage(format!(
                "unknown layout {other:?} (expected table1, grid or curves)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Evaluation set whose scores are reported.
    pub dataset: String,
    /// Restrict to these runs; all runs when `None`.
    pub runs: Option<Vec<String>>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            dataset: "test".into(),
            runs: None,
        }
    }
}

fn selected_runs(store: &RunStore, opts: &ReportOptions) -> Result<Vec<String>> {
    let all = store.run_ids()?;
    match &opts.runs {
        None => Ok(all),
        Some(wanted) => {
            let missing: Vec<&String> = wanted.iter().filter(|w| !all.contains(w)).collect();
            if !missing.is_empty() {
                return Err(Error::MissingRuns(format!(
                    "runs not found in {}: {}",
                    store.root().display(),
                    missing
                        .iter()
                        .map(|s| s.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )));
            }
            let mut w = wanted.clone();
            w.sort();
            w.dedup();
            Ok(w)
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn signed_pct(v: f64) -> String {
    format!("{:+.2}", 100.0 * v)
}

/// Output files of one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub markdown: String,
    pub csv: String,
    pub svg: Option<String>,
}

/// Builds `layout` from the store and writes it under `<root>/reports/`.
pub fn emit_report(store: &RunStore, layout: Layout, opts: &ReportOptions) -> Result<Vec<PathBuf>> {
    let files = render_report(store, layout, opts)?;
    let dir = store.reports_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    let mut put = |ext: &str, contents: &str| -> Result<()> {
        let path = dir.join(format!("{}.{ext}", layout.as_str()));
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put("md", &files.markdown)?;
    put("csv", &files.csv)?;
    if let Some(svg) = &files.svg {
        put("svg", svg)?;
    }
    Ok(written)
}

pub fn render_report(
    store: &RunStore,
    layout: Layout,
    opts: &ReportOptions,
) -> Result<ReportFiles> {
    let runs = selected_runs(store, opts)?;
    match layout {
        Layout::Table1 => {
            let mut records = Vec::new();
            for id in &runs {
                records.extend(store.read_evals(id)?);
            }
            table1(&records, &opts.dataset)
        }
        Layout::Grid => {
            let mut records = Vec::new();
            for id in &runs {
                records.extend(store.read_grid(id)?);
            }
            grid(&records, &opts.dataset)
        }
        Layout::Curves => {
            let mut records = Vec::new();
            for id in &runs {
                let objective = store
                    .read_config(id)
                    .ok()
                    .and_then(|c| {
                        c.pointer("/train/objective")
                            .and_then(|v| v.as_str())
                            .map(String::from)
                    })
                    .unwrap_or_else(|| "model".to_string());
                for r in store.read_evals(id)? {
                    records.push((objective.clone(), r));
                }
            }
            curves(&records, &opts.dataset)
        }
    }
}

const TABLE_STAGES: [(&str, &str); 3] = [
    ("end-to-end", "End-to-end training"),
    ("step1", "After step 1"),
    ("step2", "After step 2"),
];

/// Three blocks (end-to-end, after step 1, after step 2) over the target
/// dimensions, with the absolute improvement of each step below it.
pub fn table1(records: &[EvalRecord], dataset: &str) -> Result<ReportFiles> {
    let relevant = |r: &EvalRecord| {
        r.dataset == dataset && r.metric == "spearman" && r.source == "pooler-output"
    };
    // Only two-step runs take part, so every block averages the same runs.
    let two_step_runs: BTreeSet<&str> = records
        .iter()
        .filter(|r| relevant(r) && r.stage == "step2")
        .map(|r| r.run_id.as_str())
        .collect();
    let mut dims: Vec<usize> = records
        .iter()
        .filter(|r| relevant(r) && r.stage == "step2")
        .map(|r| r.dimension)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    dims.reverse();
    if dims.is_empty() {
        return Err(Error::MissingRuns(format!(
            "no two-step results on dataset {dataset:?}; run `two-step` first"
        )));
    }

    let mut cells: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        if relevant(r) && two_step_runs.contains(r.run_id.as_str()) {
            cells
                .entry((r.stage.as_str(), r.dimension))
                .or_default()
                .push(r.value);
        }
    }
    let mut missing = Vec::new();
    let mut values = vec![vec![0.0; dims.len()]; 3];
    for (s, (stage, _)) in TABLE_STAGES.iter().enumerate() {
        for (c, &d) in dims.iter().enumerate() {
            match cells.get(&(*stage, d)) {
                Some(v) => values[s][c] = mean(v),
                None => missing.push(format!("({stage}, d={d})")),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingRuns(format!(
            "missing cells: {}",
            missing.join(", ")
        )));
    }
    let deltas: Vec<Vec<f64>> = (1..3)
        .map(|s| {
            (0..dims.len())
                .map(|c| values[s][c] - values[s - 1][c])
                .collect()
        })
        .collect();

    let mut md = String::new();
    writeln!(
        md,
        "Two-step training: Spearman x 100 of the pooler output on `{dataset}`, mean over {} run(s).\n",
        two_step_runs.len()
    )
    .unwrap();
    md.push('|');
    md.push_str(" Stage |");
    for d in &dims {
        write!(md, " d={d} |").unwrap();
    }
    md.push_str("\n|---|");
    md.push_str(&"---:|".repeat(dims.len()));
    md.push('\n');
    let mut csv = String::from("row");
    for d in &dims {
        write!(csv, ",{d}").unwrap();
    }
    csv.push('\n');
    for (s, (stage, label)) in TABLE_STAGES.iter().enumerate() {
        write!(md, "| {label} |").unwrap();
        write!(csv, "{stage}").unwrap();
        for v in &values[s] {
            write!(md, " {} |", pct(*v)).unwrap();
            write!(csv, ",{v}").unwrap();
        }
        md.push('\n');
        csv.push('\n');
        if s > 0 {
            md.push_str("| Absolute improvement |");
            write!(csv, "delta-{stage}").unwrap();
            for v in &deltas[s - 1] {
                write!(md, " {} |", signed_pct(*v)).unwrap();
                write!(csv, ",{v}").unwrap();
            }
            md.push('\n');
            csv.push('\n');
        }
    }

    // Reference rows for baseline reductions of the same width, when present.
    let mut baselines: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if r.dataset == dataset && r.metric == "spearman" && r.stage == "baseline" {
            if let Some(name) = r.source.strip_prefix("baseline-") {
                baselines
                    .entry(name)
                    .or_default()
                    .entry(r.dimension)
                    .or_default()
                    .push(r.value);
            }
        }
    }
    for (name, by_dim) in &baselines {
        write!(md, "| Baseline: {name} |").unwrap();
        write!(csv, "baseline-{name}").unwrap();
        for d in &dims {
            match by_dim.get(d) {
                Some(v) => {
                    let m = mean(v);
                    write!(md, " {} |", pct(m)).unwrap();
                    write!(csv, ",{m}").unwrap();
                }
                None => {
                    md.push_str(" - |");
                    csv.push(',');
                }
            }
        }
        md.push('\n');
        csv.push('\n');
    }
    Ok(ReportFiles {
        markdown: md,
        csv,
        svg: None,
    })
}

/// Mean score of every encoder × pooler cell.
pub fn grid(records: &[GridRecord], dataset: &str) -> Result<ReportFiles> {
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut runs = BTreeSet::new();
    for r in records.iter().filter(|r| r.dataset == dataset) {
        cells
            .entry((r.encoder_dim, r.pooler_dim))
            .or_default()
            .push(r.value);
        runs.insert(r.run_id.as_str());
    }
    let mut dims: Vec<usize> = cells
        .keys()
        .flat_map(|&(e, p)| [e, p])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    dims.reverse();
    if dims.is_empty() {
        return Err(Error::MissingRuns(format!(
            "no grid results on dataset {dataset:?}; run `grid` first"
        )));
    }
    let mut missing = Vec::new();
    let mut values = vec![vec![0.0; dims.len()]; dims.len()];
    for (i, &e) in dims.iter().enumerate() {
        for (j, &p) in dims.iter().enumerate() {
            match cells.get(&(e, p)) {
                Some(v) => values[i][j] = mean(v),
                None => missing.push(format!("(encoder d'={e}, pooler d={p})")),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingRuns(format!(
            "missing grid cells: {}",
            missing.join(", ")
        )));
    }

    let mut md = format!(
        "Encoder x pooler grid: Spearman x 100 on `{dataset}`, mean over {} run(s). Rows: encoder_d', columns: pooler_d.\n\n| encoder \\ pooler |",
        runs.len()
    );
    let mut csv = String::from("encoder\\pooler");
    for d in &dims {
        write!(md, " {d} |").unwrap();
        write!(csv, ",{d}").unwrap();
    }
    md.push_str("\n|---|");
    md.push_str(&"---:|".repeat(dims.len()));
    md.push('\n');
    csv.push('\n');
    for (i, e) in dims.iter().enumerate() {
        write!(md, "| {e} |").unwrap();
        write!(csv, "{e}").unwrap();
        for v in &values[i] {
            write!(md, " {} |", pct(*v)).unwrap();
            write!(csv, ",{v}").unwrap();
        }
        md.push('\n');
        csv.push('\n');
    }
    Ok(ReportFiles {
        markdown: md,
        csv,
        svg: Some(heatmap_svg(&dims, &values)),
    })
}

/// Encoder-output and pooler-output score against `d`, one pair of series
/// per training objective.
pub fn curves(records: &[(String, EvalRecord)], dataset: &str) -> Result<ReportFiles> {
    // (objective, dim) -> (encoder scores, pooler scores)
    let mut cells: BTreeMap<(&str, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (objective, r) in records {
        if r.dataset != dataset || r.metric != "spearman" || r.stage != "end-to-end" {
            continue;
        }
        let entry = cells.entry((objective.as_str(), r.dimension)).or_default();
        match r.source.as_str() {
            "encoder-output" => entry.0.push(r.value),
            "pooler-output" => entry.1.push(r.value),
            _ => {}
        }
    }
    if cells.is_empty() {
        return Err(Error::MissingRuns(format!(
            "no end-to-end results on dataset {dataset:?}; run `sweep` first"
        )));
    }
    let mut missing = Vec::new();
    for (&(objective, d), (enc, pool)) in &cells {
        if enc.is_empty() {
            missing.push(format!("({objective}, encoder-output, d={d})"));
        }
        if pool.is_empty() {
            missing.push(format!("({objective}, pooler-output, d={d})"));
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingRuns(format!(
            "missing curve points: {}",
            missing.join(", ")
        )));
    }

    let mut series: BTreeMap<&str, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for (&(objective, d), (enc, pool)) in &cells {
        series
            .entry(objective)
            .or_default()
            .push((d, mean(enc), mean(pool)));
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| b.0.cmp(&a.0));
    }

    let mut md = format!(
        "Encoder-output vs pooler-output Spearman x 100 on `{dataset}` by pooler dimension.\n\n| objective | d | encoder output | pooler output | pooler loss |\n|---|---:|---:|---:|---:|\n"
    );
    let mut csv = String::from("objective,dimension,encoder_output,pooler_output\n");
    for (objective, points) in &series {
        for &(d, e, p) in points {
            writeln!(
                md,
                "| {objective} | {d} | {} | {} | {} |",
                pct(e),
                pct(p),
                signed_pct(p - e)
            )
            .unwrap();
            writeln!(csv, "{objective},{d},{e},{p}").unwrap();
        }
    }
    Ok(ReportFiles {
        markdown: md,
        csv,
        svg: Some(curves_svg(&series)),
    })
}

fn svg_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn heatmap_svg(dims: &[usize], values: &[Vec<f64>]) -> String {
    let n = dims.len();
    let cell = 64.0;
    let left = 90.0;
    let top = 50.0;
    let width = left + cell * n as f64 + 20.0;
    let height = top + cell * n as f64 + 50.0;
    let flat: Vec<f64> = values.iter().flatten().copied().collect();
    let lo = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle">pooler d</text>"#,
        left + cell * n as f64 / 2.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">encoder d'</text>"#,
        top + cell * n as f64 / 2.0,
        top + cell * n as f64 / 2.0
    )
    .unwrap();
    for (j, d) in dims.iter().enumerate() {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{d}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0
        )
        .unwrap();
    }
    for (i, d) in dims.iter().enumerate() {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{d}</text>"#,
            left - 8.0,
            top + cell * (i as f64 + 0.5) + 4.0
        )
        .unwrap();
        for (j, &v) in values[i].iter().enumerate() {
            let t = (v - lo) / span;
            // White (low) to dark blue (high).
            let r = (255.0 - t * 222.0).round() as u8;
            let g = (255.0 - t * 153.0).round() as u8;
            let b = (255.0 - t * 51.0).round() as u8;
            let text = if t > 0.6 { "white" } else { "black" };
            let x = left + cell * j as f64;
            let y = top + cell * i as f64;
            writeln!(
                s,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#888"/>"##
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" fill="{text}">{}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                pct(v)
            )
            .unwrap();
        }
    }
    writeln!(
        s,
        r#"<text x="{left:.1}" y="{:.1}">Spearman x 100; range {} to {}</text>"#,
        top + cell * n as f64 + 30.0,
        pct(lo),
        pct(hi)
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn curves_svg(series: &BTreeMap<&str, Vec<(usize, f64, f64)>>) -> String {
    let (w, h) = (560.0, 360.0);
    let (left, right, top, bottom) = (60.0, 170.0, 30.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let dims: Vec<usize> = series
        .values()
        .flatten()
        .map(|p| p.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .rev()
        .collect();
    let all: Vec<f64> = series.values().flatten().flat_map(|p| [p.1, p.2]).collect();
    let mut lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x_of = |d: usize| {
        let i = dims.iter().position(|&x| x == d).unwrap();
        if dims.len() == 1 {
            left + pw / 2.0
        } else {
            left + pw * i as f64 / (dims.len() - 1) as f64
        }
    };
    let y_of = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##
    )
    .unwrap();
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        writeln!(
            s,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0,
            pct(v)
        )
        .unwrap();
    }
    for &d in &dims {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{d}</text>"#,
            x_of(d),
            top + ph + 18.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">pooler dimension d</text>"#,
        left + pw / 2.0,
        h - 10.0
    )
    .unwrap();

    let mut legend_y = top + 10.0;
    for (k, (objective, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (label, dash, pick) in [
            ("encoder output", "", 1usize),
            ("pooler output", r#" stroke-dasharray="6 4""#, 2usize),
        ] {
            let coords: Vec<String> = points
                .iter()
                .map(|p| {
                    let v = if pick == 1 { p.1 } else { p.2 };
                    format!("{:.1},{:.1}", x_of(p.0), y_of(v))
                })
                .collect();
            writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
                coords.join(" ")
            )
            .unwrap();
            for c in &coords {
                let (x, y) = c.split_once(',').unwrap();
                writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#).unwrap();
            }
            writeln!(
                s,
                r#"<line x1="{:.1}" y1="{legend_y:.1}" x2="{:.1}" y2="{legend_y:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{} {label}</text>"#,
                w - right + 12.0,
                w - right + 36.0,
                w - right + 42.0,
                legend_y + 4.0,
                svg_escape(objective)
            )
            .unwrap();
            legend_y += 18.0;
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(run: &str, stage: &str, d: usize, source: &str, v: f64) -> EvalRecord {
        EvalRecord {
            run_id: run.into(),
            stage: stage.into(),
            dimension: d,
            source: source.into(),
            metric: "spearman".into(),
            dataset: "test".into(),
            value: v,
        }
    }

    fn two_step_records() -> Vec<EvalRecord> {
        let mut out = Vec::new();
        for (i, d) in [32, 16, 8, 4].into_iter().enumerate() {
            let run = format!("ts-{d}");
            let base = 0.5 - 0.05 * i as f64;
            out.push(rec(&run, "end-to-end", d, "pooler-output", base));
            out.push(rec(&run, "end-to-end", d, "encoder-output", base + 0.01));
            out.push(rec(&run, "step1", d, "pooler-output", base + 0.02));
            out.push(rec(&run, "step2", d, "pooler-output", base + 0.03));
        }
        out
    }

    #[test]
    fn table1_has_three_blocks_and_two_delta_rows() {
        let t = table1(&two_step_records(), "test").unwrap();
        let lines: Vec<&str> = t.csv.lines().collect();
        assert_eq!(lines[0], "row,32,16,8,4");
        assert_eq!(lines.len(), 6);
        let labels: Vec<&str> = lines[1..]
            .iter()
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(
            labels,
            ["end-to-end", "step1", "delta-step1", "step2", "delta-step2"]
        );
        let delta: Vec<f64> = lines[3]
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect();
        for v in delta {
            assert!((v - 0.02).abs() < 1e-12);
        }
        assert!(t.markdown.contains("| After step 2 |"));
        assert!(t.markdown.contains("+2.00"));
    }

    #[test]
    fn table1_appends_baseline_rows() {
        let mut recs = two_step_records();
        recs.push(rec("pca-a", "baseline", 4, "baseline-pca", 0.2));
        recs.push(rec("pca-b", "baseline", 4, "baseline-pca", 0.3));
        let t = table1(&recs, "test").unwrap();
        let last = t.csv.lines().last().unwrap();
        assert_eq!(last, "baseline-pca,,,,0.25");
        assert!(t.markdown.contains("| Baseline: pca | - | - | - | 25.00 |"));
    }

    #[test]
    fn table1_lists_missing_cells() {
        let mut recs = two_step_records();
        recs.retain(|r| !(r.stage == "step1" && r.dimension == 8));
        match table1(&recs, "test") {
            Err(Error::MissingRuns(msg)) => assert!(msg.contains("(step1, d=8)")),
            other => panic!("expected missing runs, got {other:?}"),
        }
        assert!(matches!(table1(&[], "test"), Err(Error::MissingRuns(_))));
    }

    #[test]
    fn grid_csv_is_square_with_the_given_diagonal() {
        let dims = [8usize, 4];
        let mut recs = Vec::new();
        for e in dims {
            for p in dims {
                recs.push(GridRecord {
                    run_id: "g".into(),
                    dataset: "test".into(),
                    encoder_dim: e,
                    pooler_dim: p,
                    value: (e * 10 + p) as f64 / 100.0,
                });
            }
        }
        let g = grid(&recs, "test").unwrap();
        let lines: Vec<&str> = g.csv.lines().collect();
        assert_eq!(lines[0], "encoder\\pooler,8,4");
        assert_eq!(lines[1], "8,0.88,0.84");
        assert_eq!(lines[2], "4,0.48,0.44");
        assert!(g.svg.unwrap().starts_with("<svg"));
        recs.pop();
        assert!(matches!(grid(&recs, "test"), Err(Error::MissingRuns(_))));
    }

    #[test]
    fn curves_have_two_series_per_objective() {
        let recs: Vec<(String, EvalRecord)> = two_step_records()
            .into_iter()
            .filter(|r| r.stage == "end-to-end")
            .map(|r| ("contrastive".to_string(), r))
            .collect();
        let c = curves(&recs, "test").unwrap();
        assert_eq!(c.csv.lines().count(), 5);
        let svg = c.svg.unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("contrastive encoder output"));
        assert!(svg.contains("contrastive pooler output"));
    }

    #[test]
    fn reports_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        let w = store.create_run("ts", false).unwrap();
        w.write_evals(
            &two_step_records()
                .into_iter()
                .map(|mut r| {
                    r.run_id = "ts".into();
                    r
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let opts = ReportOptions::default();
        let paths = emit_report(&store, Layout::Table1, &opts).unwrap();
        let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        let again = emit_report(&store, Layout::Table1, &opts).unwrap();
        let second: Vec<Vec<u8>> = again.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        let curves = emit_report(&store, Layout::Curves, &opts).unwrap();
        assert_eq!(curves.len(), 3);
    }
}
