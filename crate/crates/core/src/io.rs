//! Text interchange formats.
//!
//! | file | format |
//! |------|--------|
//! | traces | JSON lines: `{"sample_id", "label", "modalities": [{"probs", "embedding"}]}` |
//! | labels | CSV `sample_id,label` (header optional) |
//! | difficulty | CSV `sample_id,label,phi,psi_1..psi_M,r` |
//! | distribution report | `# key=value` metadata lines, then CSV `class_id,count,rank` |
//! | schedule manifest | CSV `epoch,class_id,rank,s_t,sample_ids...` (variable width) |
//! | schedule summary | CSV `epoch,rank_1..rank_C` |
//! | predictions | CSV `sample_id,true,pred` (header optional) |
//!
//! Floats are written in shortest round-trip form so reading a file back
//! yields bit-identical values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::distribution::{AlphaFit, ClassDistribution};
use crate::error::{ClimdError, Result};
use crate::measurer::{DifficultyRecord, DifficultyTable, SampleTrace};
use crate::scheduler::Schedule;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| ClimdError::io(format!("reading {}", path.display()), e))
}

fn record_err(path: &Path, line: usize, message: impl Into<String>) -> ClimdError {
    ClimdError::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().flexible(true).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

fn push_row<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).expect("in-memory writer");
}

/// Parsed CSV rows with their 1-based line numbers.
fn csv_rows(text: &str, path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            record_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((line, rec));
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, path: &Path, line: usize) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| record_err(path, line, format!("missing field {name}")))?;
    raw.parse()
        .map_err(|_| record_err(path, line, format!("invalid {name} {raw:?}")))
}

// ---- traces ----

pub fn parse_traces(text: &str, path: &Path) -> Result<Vec<SampleTrace>> {
    let mut traces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trace: SampleTrace =
            serde_json::from_str(line).map_err(|e| record_err(path, i + 1, format!("malformed trace: {e}")))?;
        trace
            .validate()
            .map_err(|e| record_err(path, i + 1, e.to_string()))?;
        traces.push(trace);
    }
    Ok(traces)
}

pub fn read_traces(path: &Path) -> Result<Vec<SampleTrace>> {
    parse_traces(&read_text(path)?, path)
}

pub fn format_traces(traces: &[SampleTrace]) -> String {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t).expect("trace serializes"));
        out.push('\n');
    }
    out
}

// ---- labels ----

/// `(sample_id, label)` rows; a first row whose label is not an integer is
/// taken as a header.
pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (k, (line, rec)) in csv_rows(text, path)?.into_iter().enumerate() {
        if rec.len() != 2 {
            return Err(record_err(path, line, format!("expected 2 fields, got {}", rec.len())));
        }
        if k == 0 && rec[1].parse::<usize>().is_err() && rec[1].parse::<f64>().is_err() {
            continue;
        }
        let label = parse_field(&rec, 1, "label", path, line)?;
        out.push((rec[0].to_string(), label));
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    parse_labels(&read_text(path)?, path)
}

// ---- difficulty ----

pub fn format_difficulty(table: &DifficultyTable) -> String {
    let m = table.num_modalities().unwrap_or(0);
    let mut w = csv_writer();
    let mut header = vec!["sample_id".to_string(), "label".into(), "phi".into()];
    header.extend((1..=m).map(|i| format!("psi_{i}")));
    header.push("r".into());
    push_row(&mut w, &header);
    for rec in &table.records {
        let mut row = vec![rec.sample_id.clone(), rec.label.to_string(), rec.phi.to_string()];
        row.extend(rec.psi.iter().map(f64::to_string));
        row.push(rec.r.to_string());
        push_row(&mut w, &row);
    }
    finish(w)
}

pub fn parse_difficulty(text: &str, path: &Path) -> Result<DifficultyTable> {
    let rows = csv_rows(text, path)?;
    let Some((header_line, header)) = rows.first() else {
        return Err(record_err(path, 1, "missing header"));
    };
    let width = header.len();
    if width < 5 || &header[0] != "sample_id" || &header[1] != "label" || &header[2] != "phi" || &header[width - 1] != "r" {
        return Err(record_err(
            path,
            *header_line,
            "header must be sample_id,label,phi,psi_1..psi_M,r with M >= 2",
        ));
    }
    let m = width - 4;
    let mut records = Vec::with_capacity(rows.len() - 1);
    for (line, rec) in &rows[1..] {
        if rec.len() != width {
            return Err(record_err(path, *line, format!("expected {width} fields, got {}", rec.len())));
        }
        let psi = (0..m)
            .map(|j| parse_field(rec, 3 + j, &format!("psi_{}", j + 1), path, *line))
            .collect::<Result<Vec<f64>>>()?;
        records.push(DifficultyRecord {
            sample_id: rec[0].to_string(),
            label: parse_field(rec, 1, "label", path, *line)?,
            phi: parse_field(rec, 2, "phi", path, *line)?,
            psi,
            r: parse_field(rec, width - 1, "r", path, *line)?,
        });
    }
    Ok(DifficultyTable { records })
}

pub fn read_difficulty(path: &Path) -> Result<DifficultyTable> {
    parse_difficulty(&read_text(path)?, path)
}

// ---- distribution report ----

pub fn format_distribution(dist: &ClassDistribution) -> String {
    let mut out = String::from("# climd class distribution\n");
    writeln!(out, "# classes={}", dist.num_classes()).unwrap();
    writeln!(out, "# total={}", dist.total()).unwrap();
    writeln!(out, "# n_min={}", dist.n_min()).unwrap();
    writeln!(out, "# gamma={}", dist.gamma()).unwrap();
    match dist.fit() {
        AlphaFit::Fitted { alpha_hat } => {
            writeln!(out, "# status=fitted").unwrap();
            writeln!(out, "# alpha_hat={alpha_hat}").unwrap();
        }
        AlphaFit::DegenerateBalanced { fallback } => {
            writeln!(out, "# status=degenerate_balanced").unwrap();
            writeln!(out, "# alpha_fallback={fallback}").unwrap();
        }
    }
    let mut w = csv_writer();
    push_row(&mut w, ["class_id", "count", "rank"]);
    for (c, &n) in dist.counts().iter().enumerate() {
        push_row(&mut w, [c.to_string(), n.to_string(), dist.rank_of(c).to_string()]);
    }
    out + &finish(w)
}

/// Plain-text summary for terminals.
pub fn distribution_summary(dist: &ClassDistribution) -> String {
    let mut out = format!(
        "{} classes, {} samples, n_min = {}, gamma = {}\n",
        dist.num_classes(),
        dist.total(),
        dist.n_min(),
        dist.gamma()
    );
    match dist.fit() {
        AlphaFit::Fitted { alpha_hat } => {
            writeln!(out, "fitted alpha_hat = {alpha_hat:.6} (gamma * alpha_hat = {:.6})", dist.gamma() * alpha_hat).unwrap()
        }
        AlphaFit::DegenerateBalanced { fallback } => writeln!(
            out,
            "all classes have equal size: degenerate (balanced) fit, using alpha = {fallback:.6}"
        )
        .unwrap(),
    }
    writeln!(out, "rank  class  count").unwrap();
    for (k, &c) in dist.classes_by_rank().iter().enumerate() {
        writeln!(out, "{:>4}  {:>5}  {:>5}", k + 1, c, dist.counts()[c]).unwrap();
    }
    out
}

pub fn parse_distribution(text: &str, path: &Path) -> Result<ClassDistribution> {
    let mut meta = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
            }
        }
    }
    let get = |key: &str| -> Result<(usize, String)> {
        meta.get(key)
            .cloned()
            .ok_or_else(|| record_err(path, 1, format!("missing `# {key}=` metadata")))
    };
    let number = |key: &str| -> Result<f64> {
        let (line, v) = get(key)?;
        v.parse().map_err(|_| record_err(path, line, format!("invalid {key} {v:?}")))
    };
    let gamma = number("gamma")?;
    let (status_line, status) = get("status")?;
    let fit = match status.as_str() {
        "fitted" => AlphaFit::Fitted {
            alpha_hat: number("alpha_hat")?,
        },
        "degenerate_balanced" => AlphaFit::DegenerateBalanced {
            fallback: number("alpha_fallback")?,
        },
        other => return Err(record_err(path, status_line, format!("unknown status {other:?}"))),
    };

    let rows = csv_rows(text, path)?;
    let mut counts = Vec::new();
    let mut ranks = Vec::new();
    for (k, (line, rec)) in rows.iter().enumerate() {
        if k == 0 && rec.get(0) == Some("class_id") {
            continue;
        }
        if rec.len() != 3 {
            return Err(record_err(path, *line, format!("expected 3 fields, got {}", rec.len())));
        }
        let class_id: usize = parse_field(rec, 0, "class_id", path, *line)?;
        if class_id != counts.len() {
            return Err(record_err(path, *line, format!("expected class_id {}, got {class_id}", counts.len())));
        }
        counts.push(parse_field::<u64>(rec, 1, "count", path, *line)?);
        ranks.push((*line, parse_field::<usize>(rec, 2, "rank", path, *line)?));
    }
    let dist = ClassDistribution::from_parts(counts, gamma, fit)
        .map_err(|e| record_err(path, 1, e.to_string()))?;
    for (c, (line, rank)) in ranks.into_iter().enumerate() {
        if dist.rank_of(c) != rank {
            return Err(record_err(
                path,
                line,
                format!("class {c} has rank {rank}, expected {}", dist.rank_of(c)),
            ));
        }
    }
    Ok(dist)
}

pub fn read_distribution(path: &Path) -> Result<ClassDistribution> {
    parse_distribution(&read_text(path)?, path)
}

// ---- schedules ----

pub fn format_schedule(schedule: &Schedule) -> String {
    let mut w = csv_writer();
    push_row(&mut w, ["epoch", "class_id", "rank", "s_t", "sample_ids..."]);
    for plan in &schedule.epochs {
        for s in &plan.subsets {
            let mut row = vec![
                plan.epoch.to_string(),
                s.class_id.to_string(),
                s.rank.to_string(),
                s.sample_ids.len().to_string(),
            ];
            row.extend(s.sample_ids.iter().cloned());
            push_row(&mut w, &row);
        }
    }
    finish(w)
}

/// Epoch by rank count table.
pub fn format_schedule_summary(schedule: &Schedule) -> String {
    let c = schedule.epochs.first().map(|p| p.subsets.len()).unwrap_or(0);
    let mut w = csv_writer();
    let mut header = vec!["epoch".to_string()];
    header.extend((1..=c).map(|k| format!("rank_{k}")));
    push_row(&mut w, &header);
    for plan in &schedule.epochs {
        let mut row = vec![plan.epoch.to_string()];
        row.extend(plan.counts_by_rank().iter().map(u64::to_string));
        push_row(&mut w, &row);
    }
    finish(w)
}

// ---- predictions ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub sample_id: String,
    pub truth: usize,
    pub predicted: usize,
}

pub fn parse_predictions(text: &str, path: &Path) -> Result<Vec<Prediction>> {
    let mut out = Vec::new();
    for (k, (line, rec)) in csv_rows(text, path)?.into_iter().enumerate() {
        if rec.len() != 3 {
            return Err(record_err(path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        if k == 0 && rec[1].parse::<usize>().is_err() {
            continue;
        }
        out.push(Prediction {
            sample_id: rec[0].to_string(),
            truth: parse_field(&rec, 1, "true label", path, line)?,
            predicted: parse_field(&rec, 2, "predicted label", path, line)?,
        });
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    parse_predictions(&read_text(path)?, path)
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| ClimdError::io(format!("creating {}", dir.display()), e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| ClimdError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurer::{score_dataset, ModalityOutput};

    fn p() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn labels_with_and_without_header() {
        let with = parse_labels("sample_id,label\na,0\nb,1\n", p()).unwrap();
        let without = parse_labels("a,0\n\nb,1\n", p()).unwrap();
        assert_eq!(with, without);
        assert_eq!(with, vec![("a".to_string(), 0), ("b".to_string(), 1)]);
    }

    #[test]
    fn bad_label_names_line() {
        let err = parse_labels("sample_id,label\na,0\nb,x\n", p()).unwrap_err();
        assert_eq!(err.to_string(), "test.csv:3: invalid label \"x\"");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn corrupt_trace_names_line() {
        let good = r#"{"sample_id":"a","label":0,"modalities":[{"probs":[1,0],"embedding":[1]},{"probs":[1,0],"embedding":[1]}]}"#;
        let text = format!("{good}\n{{not json\n");
        let err = parse_traces(&text, Path::new("t.jsonl")).unwrap_err();
        assert!(err.to_string().starts_with("t.jsonl:2: malformed trace"), "{err}");

        let invalid = good.replace("[1,0]", "[0.7,0.7]");
        let err = parse_traces(&invalid, Path::new("t.jsonl")).unwrap_err();
        assert!(err.to_string().starts_with("t.jsonl:1:"), "{err}");
    }

    #[test]
    fn difficulty_roundtrip_is_exact() {
        let traces: Vec<SampleTrace> = (0..5)
            .map(|i| SampleTrace {
                sample_id: format!("s,{i}"),
                label: i % 2,
                modalities: vec![
                    ModalityOutput { probs: vec![0.3 + 0.1 * i as f64, 0.7 - 0.1 * i as f64], embedding: vec![1.0, i as f64 / 3.0] },
                    ModalityOutput { probs: vec![0.5, 0.5], embedding: vec![0.1, -1.0] },
                ],
            })
            .collect();
        let table = score_dataset(&traces).unwrap();
        let text = format_difficulty(&table);
        assert!(text.starts_with("sample_id,label,phi,psi_1,psi_2,r\n"));
        assert_eq!(parse_difficulty(&text, p()).unwrap(), table);
    }

    #[test]
    fn distribution_report_roundtrip() {
        for counts in [vec![100, 50, 10], vec![4, 4, 4]] {
            let dist = ClassDistribution::from_counts(counts, 0.3).unwrap();
            let text = format_distribution(&dist);
            assert_eq!(parse_distribution(&text, p()).unwrap(), dist);
        }
    }

    #[test]
    fn distribution_report_rejects_wrong_rank() {
        let dist = ClassDistribution::from_counts(vec![10, 5], 0.3).unwrap();
        let text = format_distribution(&dist).replace("1,5,2", "1,5,1");
        assert!(parse_distribution(&text, p()).is_err());
    }

    #[test]
    fn predictions_parse() {
        let preds = parse_predictions("sample_id,true,pred\na,0,1\nb,1,1\n", p()).unwrap();
        assert_eq!(preds[0], Prediction { sample_id: "a".into(), truth: 0, predicted: 1 });
        assert!(parse_predictions("a,0\n", p()).is_err());
    }
}
