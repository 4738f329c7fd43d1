//! Plain-text stage files.
//!
//! All formats are line oriented with space-separated fields. Reals are
//! written with Rust's shortest round-trip formatting, so every file reads
//! back to bit-identical values. Parsers skip blank lines and lines starting
//! with `#`, and report the 1-based line of the first problem.
//!
//! | file          | layout                                                        |
//! |---------------|---------------------------------------------------------------|
//! | dataset       | per sample: `sample_id n feature_dim`, then n rows `instance_id f_1 .. f_k label` |
//! | knowledge     | `predicate lo hi weight`; item ids are 1-based row numbers   |
//! | targets       | `instance_id sample_id t_1 .. t_p`                            |
//! | checkpoint    | `linear dim` or `one_hidden dim width`, then one value per line |
//! | predictions   | `instance_id probability`                                     |
//! | truth         | `instance_id label` with label 0 or 1                         |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeBase, KnowledgeItem, Predicate};
use crate::learner::{Architecture, ModelParams};
use crate::sample::{NoisySample, Instance};
use crate::targets::{InstanceTargets, RearrangedTargets};

const ORIGIN: &str = "<input>";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        origin: ORIGIN.to_string(),
        line,
        message: message.into(),
    }
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split_ascii_whitespace().collect()))
        }
    })
}

fn field<T: FromStr>(line: usize, token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from `{token}`")))
}

fn real(line: usize, token: &str, what: &str) -> Result<f64> {
    let v: f64 = field(line, token, what)?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} must be finite, got `{token}`")));
    }
    Ok(v)
}

fn expect_len(line: usize, tokens: &[&str], n: usize, layout: &str) -> Result<()> {
    if tokens.len() != n {
        return Err(parse_err(
            line,
            format!("expected {n} fields ({layout}), found {}", tokens.len()),
        ));
    }
    Ok(())
}

fn relocate(line: usize, e: Error) -> Error {
    match e {
        Error::Parse { .. } => e,
        other => parse_err(line, other.to_string()),
    }
}

pub fn write_dataset(samples: &[NoisySample]) -> String {
    let mut out = String::new();
    for s in samples {
        let _ = writeln!(out, "{} {} {}", s.id(), s.len(), s.feature_dim());
        for (inst, label) in s.instances().iter().zip(s.labels()) {
            let _ = write!(out, "{}", inst.id);
            for f in &inst.features {
                let _ = write!(out, " {f}");
            }
            let _ = writeln!(out, " {label}");
        }
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Vec<NoisySample>> {
    let mut rows = records(text);
    let mut samples = Vec::new();
    while let Some((header_line, header)) = rows.next() {
        expect_len(header_line, &header, 3, "sample_id n feature_dim")?;
        let sample_id: usize = field(header_line, header[0], "sample id")?;
        let n: usize = field(header_line, header[1], "instance count")?;
        let dim: usize = field(header_line, header[2], "feature dimension")?;
        if n == 0 {
            return Err(parse_err(header_line, format!("sample {sample_id} declares no instances")));
        }
        let width = dim
            .checked_add(2)
            .ok_or_else(|| parse_err(header_line, "feature dimension too large"))?;
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let (line, tokens) = rows.next().ok_or_else(|| {
                parse_err(
                    header_line,
                    format!("sample {sample_id} declares {n} instances but the file ends after {}", instances.len()),
                )
            })?;
            expect_len(line, &tokens, width, "instance_id f_1 .. f_k label")?;
            let id: u64 = field(line, tokens[0], "instance id")?;
            let features = tokens[1..=dim]
                .iter()
                .map(|t| real(line, t, "feature"))
                .collect::<Result<Vec<f64>>>()?;
            let label = real(line, tokens[dim + 1], "label")?;
            instances.push(Instance {
                id,
                features,
                sample_index: sample_id,
            });
            labels.push(label);
        }
        samples.push(NoisySample::new(sample_id, instances, labels).map_err(|e| relocate(header_line, e))?);
    }
    if samples.is_empty() {
        return Err(parse_err(0, "dataset contains no samples"));
    }
    Ok(samples)
}

pub fn write_knowledge_base(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for item in kb.items() {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            item.predicate, item.admissible_lo, item.admissible_hi, item.weight
        );
    }
    out
}

pub fn parse_knowledge_base(text: &str) -> Result<KnowledgeBase> {
    let mut items = Vec::new();
    let mut last_line = 0;
    for (line, tokens) in records(text) {
        expect_len(line, &tokens, 4, "predicate lo hi weight")?;
        let predicate: Predicate = tokens[0].parse().map_err(|e| relocate(line, e))?;
        let lo = real(line, tokens[1], "lower bound")?;
        let hi = real(line, tokens[2], "upper bound")?;
        let weight = real(line, tokens[3], "weight")?;
        let id = u32::try_from(items.len() + 1).map_err(|_| parse_err(line, "too many knowledge items"))?;
        items.push(KnowledgeItem::new(id, predicate, lo, hi, weight).map_err(|e| relocate(line, e))?);
        last_line = line;
    }
    KnowledgeBase::new(items).map_err(|e| relocate(last_line, e))
}

/// One row of a targets file.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetRow {
    pub instance_id: u64,
    pub sample_id: usize,
    pub targets: Vec<f64>,
}

pub fn write_targets(rt: &RearrangedTargets) -> String {
    let mut out = String::new();
    for e in &rt.entries {
        let _ = write!(out, "{} {}", e.instance.id, e.instance.sample_index);
        for t in &e.targets {
            let _ = write!(out, " {t}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_targets(text: &str) -> Result<Vec<TargetRow>> {
    let mut rows: Vec<TargetRow> = Vec::new();
    for (line, tokens) in records(text) {
        if tokens.len() < 3 {
            return Err(parse_err(line, "expected `instance_id sample_id t_1 .. t_p`"));
        }
        if let Some(first) = rows.first() {
            if tokens.len() - 2 != first.targets.len() {
                return Err(parse_err(
                    line,
                    format!("expected {} targets, found {}", first.targets.len(), tokens.len() - 2),
                ));
            }
        }
        let targets = tokens[2..]
            .iter()
            .map(|t| {
                let v = real(line, t, "target")?;
                if (0.0..=1.0).contains(&v) {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("target {v} outside [0, 1]")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(TargetRow {
            instance_id: field(line, tokens[0], "instance id")?,
            sample_id: field(line, tokens[1], "sample id")?,
            targets,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(0, "targets file is empty"));
    }
    Ok(rows)
}

/// Joins target rows with the samples they were abduced from. Every
/// instance of every sample must appear exactly once.
pub fn targets_from_rows(rows: Vec<TargetRow>, samples: &[NoisySample]) -> Result<RearrangedTargets> {
    let p = rows.first().map_or(0, |r| r.targets.len());
    let mut by_key: HashMap<(usize, u64), Vec<f64>> = HashMap::with_capacity(rows.len());
    for row in rows {
        if by_key.insert((row.sample_id, row.instance_id), row.targets).is_some() {
            return Err(Error::InvalidInput(format!(
                "instance {} of sample {} has more than one target row",
                row.instance_id, row.sample_id
            )));
        }
    }
    let mut entries = Vec::with_capacity(by_key.len());
    for s in samples {
        for inst in s.instances() {
            let targets = by_key.remove(&(s.id(), inst.id)).ok_or_else(|| {
                Error::InvalidInput(format!("no targets for instance {} of sample {}", inst.id, s.id()))
            })?;
            entries.push(InstanceTargets {
                instance: inst.clone(),
                targets,
            });
        }
    }
    if let Some((sample, id)) = by_key.keys().next() {
        return Err(Error::InvalidInput(format!(
            "targets given for unknown instance {id} of sample {sample}"
        )));
    }
    Ok(RearrangedTargets { p, entries })
}

pub fn write_checkpoint(params: &ModelParams) -> String {
    let mut out = match params.architecture() {
        Architecture::Linear => format!("linear {}\n", params.input_dim()),
        Architecture::OneHidden { width } => format!("one_hidden {} {width}\n", params.input_dim()),
    };
    for v in params.to_flat() {
        let _ = writeln!(out, "{v}");
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<ModelParams> {
    let mut rows = records(text);
    let (line, header) = rows.next().ok_or_else(|| parse_err(0, "checkpoint is empty"))?;
    let (arch, dim) = match header.first().copied() {
        Some("linear") => {
            expect_len(line, &header, 2, "linear dim")?;
            (Architecture::Linear, field::<usize>(line, header[1], "input dimension")?)
        }
        Some("one_hidden") => {
            expect_len(line, &header, 3, "one_hidden dim width")?;
            let dim = field(line, header[1], "input dimension")?;
            let width = field(line, header[2], "hidden width")?;
            if width == 0 {
                return Err(parse_err(line, "hidden width must be positive"));
            }
            (Architecture::OneHidden { width }, dim)
        }
        _ => return Err(parse_err(line, "expected `linear` or `one_hidden` header")),
    };
    let expected = match arch {
        Architecture::Linear => dim.checked_add(1),
        Architecture::OneHidden { width } => width
            .checked_mul(dim)
            .and_then(|v| v.checked_add(width.checked_mul(2)?))
            .and_then(|v| v.checked_add(1)),
    }
    .ok_or_else(|| parse_err(line, "model dimensions overflow"))?;
    let mut values = Vec::new();
    let mut last = line;
    for (l, tokens) in rows {
        for t in tokens {
            if values.len() == expected {
                return Err(parse_err(l, format!("more than {expected} parameter values")));
            }
            values.push(real(l, t, "parameter")?);
        }
        last = l;
    }
    if values.len() != expected {
        return Err(parse_err(
            last,
            format!("expected {expected} parameter values, found {}", values.len()),
        ));
    }
    ModelParams::from_flat(arch, dim, &values).map_err(|e| relocate(line, e))
}

pub fn write_predictions(predictions: &[(u64, f64)]) -> String {
    let mut out = String::new();
    for (id, p) in predictions {
        let _ = writeln!(out, "{id} {p}");
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<(u64, f64)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, tokens) in records(text) {
        expect_len(line, &tokens, 2, "instance_id probability")?;
        let id: u64 = field(line, tokens[0], "instance id")?;
        let p = real(line, tokens[1], "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(parse_err(line, format!("probability {p} outside [0, 1]")));
        }
        if !seen.insert(id) {
            return Err(parse_err(line, format!("duplicate instance id {id}")));
        }
        out.push((id, p));
    }
    Ok(out)
}

pub fn write_truth(truth: &BTreeMap<u64, u8>) -> String {
    let mut out = String::new();
    for (id, y) in truth {
        let _ = writeln!(out, "{id} {y}");
    }
    out
}

pub fn parse_truth(text: &str) -> Result<BTreeMap<u64, u8>> {
    let mut out = BTreeMap::new();
    for (line, tokens) in records(text) {
        expect_len(line, &tokens, 2, "instance_id label")?;
        let id: u64 = field(line, tokens[0], "instance id")?;
        let y: u8 = match tokens[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(line, format!("label must be 0 or 1, got `{other}`"))),
        };
        if out.insert(id, y).is_some() {
            return Err(parse_err(line, format!("duplicate instance id {id}")));
        }
    }
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads `path` and parses it, attributing parse errors to the file.
pub fn read_with<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    let text = read_file(path)?;
    parse(&text).map_err(|e| e.with_origin(&path.display().to_string()))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    fs::write(tmp, contents).map_err(|e| Error::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}
