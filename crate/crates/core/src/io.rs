//! On-disk formats: JSON-lines datasets, tab-separated trees, JSON models,
//! CSV reports and Graphviz output. Every writer replaces its target
//! atomically.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelItem};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::inference::MarginalTable;
use crate::model::Model;
use crate::report::Relevance;
use crate::taxonomy::{Taxonomy, ROOT};
use crate::training::TrainingLog;

pub const DATASET_FORMAT: &str = "taxind-dataset";
pub const DATASET_VERSION: u32 = 1;

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub image_dim: usize,
    pub word_dim: usize,
    pub count: usize,
    /// Free-form note on where the embeddings came from.
    #[serde(default)]
    pub provenance: Option<String>,
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn dataset_to_string(data: &Dataset, provenance: Option<&str>) -> Result<String> {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_string(),
        version: DATASET_VERSION,
        image_dim: data.image_dim(),
        word_dim: data.word_dim(),
        count: data.len(),
        provenance: provenance.map(str::to_string),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for item in data.items() {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_dataset(text: &str) -> Result<(Dataset, DatasetHeader)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines.next().ok_or(Error::Empty("dataset file"))?;
    let header: DatasetHeader = serde_json::from_str(htext).map_err(|e| Error::Parse {
        line: hline + 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Parse {
            line: hline + 1,
            msg: format!("unknown format `{}`", header.format),
        });
    }
    if header.version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion(header.version.to_string()));
    }
    let mut items = Vec::with_capacity(header.count);
    for (i, line) in lines {
        let item: LabelItem = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        items.push(item);
    }
    if items.len() != header.count {
        return Err(Error::InvalidDataset(format!(
            "header announces {} items, found {}",
            header.count,
            items.len()
        )));
    }
    let data = Dataset::new(items, header.image_dim, header.word_dim)?;
    Ok((data, header))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Ok(parse_dataset(&fs::read_to_string(path)?)?.0)
}

pub fn write_dataset(path: &Path, data: &Dataset, provenance: Option<&str>) -> Result<()> {
    write_atomic(path, dataset_to_string(data, provenance)?.as_bytes())
}

/// `parent<TAB>child` per line, ordered by child id.
pub fn tree_to_string(t: &Taxonomy) -> String {
    let mut out = String::new();
    for c in 1..=t.len() {
        writeln!(out, "{}\t{}", t.parent(c), c).expect("writing to a string");
    }
    out
}

/// Parses a tree file. Blank lines and lines starting with `#` are skipped;
/// every id `1..=N` must appear exactly once as a child, where `N` is the
/// number of edges.
pub fn parse_tree(text: &str) -> Result<Taxonomy> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
        let mut fields = line.split('\t');
        let (Some(p), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err("expected `parent<TAB>child`".into()));
        };
        let p: usize = p.trim().parse().map_err(|_| parse_err(format!("bad parent id `{p}`")))?;
        let c: usize = c.trim().parse().map_err(|_| parse_err(format!("bad child id `{c}`")))?;
        if c == ROOT {
            return Err(parse_err("the pseudo-root cannot be a child".into()));
        }
        edges.push((p, c));
    }
    let n = edges.len();
    let mut seen = vec![false; n + 1];
    for &(_, c) in &edges {
        if c > n {
            return Err(Error::OutOfRange { id: c, max: n });
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::DuplicateChild(c));
        }
    }
    Taxonomy::from_edges(&edges, n)
}

pub fn read_tree(path: &Path) -> Result<Taxonomy> {
    parse_tree(&fs::read_to_string(path)?)
}

pub fn write_tree(path: &Path, t: &Taxonomy) -> Result<()> {
    write_atomic(path, tree_to_string(t).as_bytes())
}

pub fn model_to_string(model: &Model) -> Result<String> {
    let mut s = serde_json::to_string_pretty(model)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_model(text: &str) -> Result<Model> {
    #[derive(Deserialize)]
    struct VersionOnly {
        version: String,
    }
    // check the version first so a future layout fails with a clear message
    let v: VersionOnly = serde_json::from_str(text)?;
    let ours = crate::model::MODEL_FORMAT_VERSION.split('.').next();
    if v.version.split('.').next() != ours {
        return Err(Error::UnsupportedVersion(v.version));
    }
    let model: Model = serde_json::from_str(text)?;
    model.validate()?;
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<Model> {
    parse_model(&fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_atomic(path, model_to_string(model)?.as_bytes())
}

fn csv_bytes<F>(build: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        build(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

/// `child,parent,probability`, nonzero entries only, ordered by child then
/// parent.
pub fn marginals_csv(m: &MarginalTable) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["child", "parent", "probability"])?;
        for c in 1..=m.len() {
            for p in 0..=m.len() {
                let prob = m.prob(c, p);
                if prob > 0.0 {
                    w.write_record([c.to_string(), p.to_string(), prob.to_string()])?;
                }
            }
        }
        Ok(())
    })
}

pub const REPORT_COLUMNS: [&str; 8] = [
    "task",
    "height",
    "precision",
    "recall",
    "f1",
    "predicted",
    "gold",
    "intersection",
];

pub fn reports_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(REPORT_COLUMNS)?;
        for r in reports {
            w.write_record([
                r.task.map(|t| t.name().to_string()).unwrap_or_default(),
                r.height.map(|h| h.to_string()).unwrap_or_default(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
                r.predicted.to_string(),
                r.gold.to_string(),
                r.intersection.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// `iteration,eta,surrogate,grad_norm_1..grad_norm_L`.
pub fn training_log_csv(log: &TrainingLog) -> Result<Vec<u8>> {
    let layers = log.rows.first().map_or(0, |r| r.grad_norms.len());
    csv_bytes(|w| {
        let mut header = vec!["iteration".to_string(), "eta".into(), "surrogate".into()];
        header.extend((1..=layers).map(|l| format!("grad_norm_{l}")));
        w.write_record(&header)?;
        for row in &log.rows {
            let mut rec = vec![row.iteration.to_string(), row.eta.to_string(), row.surrogate.to_string()];
            rec.extend(row.grad_norms.iter().map(|g| g.to_string()));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// `block,layer,relevance`, layers numbered from 1.
pub fn relevance_csv(rel: &Relevance) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["block", "layer", "relevance"])?;
        for (block, curve) in &rel.curves {
            for (l, v) in curve.iter().enumerate() {
                w.write_record([block.name().to_string(), (l + 1).to_string(), v.to_string()])?;
            }
        }
        Ok(())
    })
}

/// `K,f1` rows.
pub fn sweep_csv(rows: &[(String, f64)]) -> Result<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record(["k", "f1"])?;
        for (k, f1) in rows {
            w.write_record([k.clone(), f1.to_string()])?;
        }
        Ok(())
    })
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph of `t`. With a reference tree, edges absent from it are
/// drawn red (`class="false"`) and reference edges absent from `t` are added
/// dashed blue (`class="missed"`).
pub fn export_dot(t: &Taxonomy, data: Option<&Dataset>, reference: Option<&Taxonomy>) -> Result<String> {
    if let Some(d) = data {
        if d.len() != t.len() {
            return Err(Error::NodeSetMismatch {
                left: t.len(),
                right: d.len(),
            });
        }
    }
    if let Some(r) = reference {
        if r.len() != t.len() {
            return Err(Error::NodeSetMismatch {
                left: t.len(),
                right: r.len(),
            });
        }
    }
    let mut out = String::from("digraph taxonomy {\n  rankdir=TB;\n  0 [label=\"ROOT\", shape=box];\n");
    for n in 1..=t.len() {
        let label = data.map_or_else(|| n.to_string(), |d| d.item(n).name.clone());
        writeln!(out, "  {n} [label=\"{}\"];", dot_escape(&label)).expect("string write");
    }
    for c in 1..=t.len() {
        let p = t.parent(c);
        match reference {
            Some(r) if r.parent(c) != p => writeln!(out, "  {p} -> {c} [color=red, class=\"false\"];"),
            _ => writeln!(out, "  {p} -> {c};"),
        }
        .expect("string write");
    }
    if let Some(r) = reference {
        for c in 1..=t.len() {
            let p = r.parent(c);
            if t.parent(c) != p {
                writeln!(out, "  {p} -> {c} [color=blue, style=dashed, class=\"missed\"];").expect("string write");
            }
        }
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dataset() -> Dataset {
        Dataset::new(
            vec![
                LabelItem::new(1, "shark")
                    .with_word(vec![0.1, -2.5e-7])
                    .with_images(vec![vec![1.0, 2.0, 3.0], vec![0.1, 0.2, 0.30000000000000004]]),
                LabelItem::new(2, "cat \"shark\"").with_images(vec![vec![-1.0, 1e300, 5e-324]]),
                LabelItem::new(3, "ray").with_word(vec![1.0 / 3.0, 2.0]),
            ],
            3,
            2,
        )
        .unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let d = sample_dataset();
        let text = dataset_to_string(&d, Some("unit test")).unwrap();
        let (back, header) = parse_dataset(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(header.provenance.as_deref(), Some("unit test"));
        assert_eq!(dataset_to_string(&back, Some("unit test")).unwrap(), text);
    }

    #[test]
    fn dataset_errors() {
        let d = sample_dataset();
        let text = dataset_to_string(&d, None).unwrap();
        let wrong_count = text.replacen("\"count\":3", "\"count\":4", 1);
        assert!(matches!(parse_dataset(&wrong_count), Err(Error::InvalidDataset(_))));
        let wrong_dim = text.replacen("\"image_dim\":3", "\"image_dim\":4", 1);
        assert!(parse_dataset(&wrong_dim).is_err());
        assert!(matches!(parse_dataset("not json"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_dataset("").is_err());
    }

    #[test]
    fn tree_round_trip() {
        let t = Taxonomy::from_parents(&[0, 1, 1, 3]).unwrap();
        let s = tree_to_string(&t);
        assert_eq!(s, "0\t1\n1\t2\n1\t3\n3\t4\n");
        assert_eq!(parse_tree(&s).unwrap(), t);
        // order and comments do not matter
        assert_eq!(parse_tree("# x\n3\t4\n0\t1\n\n1\t3\n1\t2\n").unwrap(), t);
    }

    #[test]
    fn tree_errors() {
        assert!(matches!(parse_tree("0\t1\n0\t1\n"), Err(Error::DuplicateChild(1))));
        assert!(matches!(parse_tree("0\t1\n0\t3\n"), Err(Error::OutOfRange { .. })));
        assert!(matches!(parse_tree("2\t1\n1\t2\n"), Err(Error::Cycle(_))));
        assert!(matches!(parse_tree("0 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_tree("0\tx\n"), Err(Error::Parse { .. })));
        assert!(parse_tree("1\t0\n").is_err());
    }

    #[test]
    fn model_round_trip_is_exact() {
        let mut m = Model::blank(3);
        m.weights.layers[1][5] = 0.1 + 0.2;
        m.weights.layers[2][7] = -1.0 / 3.0;
        m.alpha.by_depth = vec![2.5, 1.0 + 1e-15];
        let a = model_to_string(&m).unwrap();
        let back = parse_model(&a).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back).unwrap(), a);
    }

    #[test]
    fn model_version_gate() {
        let mut m = Model::blank(1);
        m.version = "2.0".into();
        let s = serde_json::to_string(&m).unwrap();
        assert!(matches!(parse_model(&s), Err(Error::UnsupportedVersion(v)) if v == "2.0"));
        m.version = "1.7".into();
        assert!(parse_model(&serde_json::to_string(&m).unwrap()).is_ok());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        write_atomic(&p, b"old").unwrap();
        write_atomic(&p, b"new").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "new");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn dot_marks_differences() {
        let pred = Taxonomy::from_parents(&[0, 1, 1]).unwrap();
        let gold = Taxonomy::from_parents(&[0, 1, 2]).unwrap();
        let same = export_dot(&gold, None, Some(&gold)).unwrap();
        assert!(!same.contains("class="));
        let diff = export_dot(&pred, None, Some(&gold)).unwrap();
        assert_eq!(diff.matches("class=\"false\"").count(), 1);
        assert_eq!(diff.matches("class=\"missed\"").count(), 1);
        assert!(diff.contains("1 -> 3 [color=red"));
        assert!(diff.contains("2 -> 3 [color=blue"));
        let two = export_dot(&Taxonomy::star(1), None, None).unwrap();
        assert_eq!(two.matches("->").count(), 1);
    }

    #[test]
    fn dot_escapes_names() {
        let d = sample_dataset();
        let s = export_dot(&Taxonomy::star(3), Some(&d), None).unwrap();
        assert!(s.contains("label=\"cat \\\"shark\\\"\""));
    }
}
