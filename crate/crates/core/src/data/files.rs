//! TSV datasets, plain-text corpora and the embedding CSV format.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::NliTriple;
use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct StsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub text: String,
    pub label: usize,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Nonempty lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn check_field(s: &str, what: &str) -> Result<()> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::Input(format!(
            "{what} contains a tab or newline and cannot be written as TSV"
        )));
    }
    Ok(())
}

/// `sentence_a <TAB> sentence_b <TAB> score` per line.
pub fn load_sts_tsv(path: &Path) -> Result<Vec<StsPair>> {
    parse_sts(&read(path)?, path)
}

pub fn parse_sts(text: &str, path: &Path) -> Result<Vec<StsPair>> {
    records(text)
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_error(
                    path,
                    n,
                    format!("expected 3 tab-separated columns, found {}", cols.len()),
                ));
            }
            let gold: f64 = cols[2].trim().parse().map_err(|_| {
                parse_error(path, n, format!("score {:?} is not a number", cols[2]))
            })?;
            if !gold.is_finite() {
                return Err(parse_error(path, n, "score must be finite"));
            }
            Ok(StsPair {
                sentence_a: cols[0].to_string(),
                sentence_b: cols[1].to_string(),
                gold,
            })
        })
        .collect()
}

pub fn save_sts_tsv(path: &Path, pairs: &[StsPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        check_field(&p.sentence_a, "sentence")?;
        check_field(&p.sentence_b, "sentence")?;
        writeln!(out, "{}\t{}\t{}", p.sentence_a, p.sentence_b, p.gold).unwrap();
    }
    write(path, &out)
}

/// `sentence <TAB> label` per line, label a nonnegative integer.
pub fn load_cls_tsv(path: &Path) -> Result<Vec<LabeledSentence>> {
    parse_cls(&read(path)?, path)
}

pub fn parse_cls(text: &str, path: &Path) -> Result<Vec<LabeledSentence>> {
    records(text)
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(parse_error(
                    path,
                    n,
                    format!("expected 2 tab-separated columns, found {}", cols.len()),
                ));
            }
            let label = cols[1].trim().parse().map_err(|_| {
                parse_error(path, n, format!("label {:?} is not a class index", cols[1]))
            })?;
            Ok(LabeledSentence {
                text: cols[0].to_string(),
                label,
            })
        })
        .collect()
}

pub fn save_cls_tsv(path: &Path, items: &[LabeledSentence]) -> Result<()> {
    let mut out = String::new();
    for s in items {
        check_field(&s.text, "sentence")?;
        writeln!(out, "{}\t{}", s.text, s.label).unwrap();
    }
    write(path, &out)
}

/// `premise <TAB> hypothesis <TAB> label` per line, label in {0, 1, 2}
/// (entailment, neutral, contradiction).
pub fn load_nli_tsv(path: &Path) -> Result<Vec<NliTriple>> {
    parse_nli(&read(path)?, path)
}

pub fn parse_nli(text: &str, path: &Path) -> Result<Vec<NliTriple>> {
    records(text)
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(parse_error(
                    path,
                    n,
                    format!("expected 3 tab-separated columns, found {}", cols.len()),
                ));
            }
            let label = match cols[2].trim() {
                "0" => 0,
                "1" => 1,
                "2" => 2,
                other => {
                    return Err(parse_error(
                        path,
                        n,
                        format!("NLI label {other:?} is not 0, 1 or 2"),
                    ))
                }
            };
            Ok(NliTriple {
                premise: cols[0].to_string(),
                hypothesis: cols[1].to_string(),
                label,
            })
        })
        .collect()
}

pub fn save_nli_tsv(path: &Path, items: &[NliTriple]) -> Result<()> {
    let mut out = String::new();
    for t in items {
        check_field(&t.premise, "sentence")?;
        check_field(&t.hypothesis, "sentence")?;
        writeln!(out, "{}\t{}\t{}", t.premise, t.hypothesis, t.label).unwrap();
    }
    write(path, &out)
}

/// One sentence per nonempty line.
pub fn load_corpus(path: &Path) -> Result<Vec<String>> {
    Ok(records(&read(path)?).map(|(_, l)| l.to_string()).collect())
}

pub fn save_corpus(path: &Path, sentences: &[String]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        check_field(s, "sentence")?;
        out.push_str(s);
        out.push('\n');
    }
    write(path, &out)
}

/// Header `dim=<d>`, then one comma-separated row of `d` reals per sentence.
pub fn format_embeddings(m: &Matrix) -> String {
    let mut out = format!("dim={}\n", m.cols());
    for r in m.row_iter() {
        let mut first = true;
        for v in r {
            if !first {
                out.push(',');
            }
            first = false;
            // shortest representation that round-trips
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(path: &Path, m: &Matrix) -> Result<()> {
    write(path, &format_embeddings(m))
}

pub fn load_embeddings(path: &Path) -> Result<Matrix> {
    parse_embeddings(&read(path)?, path)
}

pub fn parse_embeddings(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = records(text);
    let (n, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing dim=<d> header"))?;
    let dim: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| parse_error(path, n, format!("bad header {header:?}, expected dim=<d>")))?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(path, n, format!("value {field:?} is not a number")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(parse_error(
                path,
                n,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    Matrix::from_vec(rows, dim, data)
}
