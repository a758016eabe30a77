//! Delimited edge-list ingestion and the on-disk graph layout.
//!
//! An edge list is UTF-8 text with a header row whose first three columns
//! are `drug_a`, `drug_b`, `type`. The delimiter (tab or comma) is detected
//! from the header. Extra trailing columns are allowed but every row must
//! have as many fields as the header.
//!
//! A saved graph at `prefix` is three files:
//! `prefix.tsv` (edge list), `prefix.drugs.tsv` and `prefix.types.tsv`
//! (`index<TAB>label` tables).

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::warn;

use super::{DrugId, Edge, InteractionGraph, InteractionType, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeListFormat {
    /// `None` detects tab or comma from the header line.
    pub delimiter: Option<char>,
}

impl EdgeListFormat {
    pub fn auto() -> Self {
        EdgeListFormat { delimiter: None }
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub graph: InteractionGraph,
    /// Rows dropped because they repeated an earlier edge after
    /// canonicalization.
    pub duplicates: usize,
}

const HEADER: [&str; 3] = ["drug_a", "drug_b", "type"];

/// Parses an edge list into a fresh graph with labels indexed in
/// first-seen order.
pub fn ingest_edge_list(source: impl Read, format: EdgeListFormat) -> Result<Ingested> {
    let mut drugs = Vocabulary::new();
    let mut types = Vocabulary::new();
    let (edges, _) = ingest_into(source, format, &mut drugs, &mut types)?;
    let (graph, duplicates) = InteractionGraph::build(drugs, types, edges)?;
    if duplicates > 0 {
        warn!("dropped {duplicates} duplicate edge rows");
    }
    Ok(Ingested { graph, duplicates })
}

/// Parses an edge list against shared vocabularies, extending them with
/// unseen labels. Returns canonical edges (duplicates included) and the
/// extra columns of every row.
pub fn ingest_into(
    source: impl Read,
    format: EdgeListFormat,
    drugs: &mut Vocabulary,
    types: &mut Vocabulary,
) -> Result<(Vec<Edge>, Vec<Vec<String>>)> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines().enumerate();

    let (delim, width) = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Validation("edge list is empty".into()));
        };
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let delim = format
            .delimiter
            .unwrap_or(if line.contains('\t') { '\t' } else { ',' });
        let cols: Vec<&str> = line.split(delim).map(str::trim).collect();
        if cols.len() < 3 || cols[..3] != HEADER {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected header drug_a{d}drug_b{d}type", d = delim.escape_default()),
            });
        }
        break (delim, cols.len());
    };

    let mut edges = Vec::new();
    let mut extras = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(delim).map(str::trim).collect();
        if cols.len() != width {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {width} columns, found {}", cols.len()),
            });
        }
        if cols[..3].iter().any(|c| c.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                message: "empty field".into(),
            });
        }
        if cols[0] == cols[1] {
            return Err(Error::Validation(format!(
                "line {lineno}: self-loop on drug {:?}",
                cols[0]
            )));
        }
        let a = DrugId(drugs.get_or_insert(cols[0]));
        let b = DrugId(drugs.get_or_insert(cols[1]));
        let t = InteractionType(types.get_or_insert(cols[2]));
        edges.push(Edge::new(a, b, t)?);
        extras.push(cols[3..].iter().map(|s| s.to_string()).collect());
    }
    if edges.is_empty() {
        return Err(Error::Validation("edge list has no rows".into()));
    }
    Ok((edges, extras))
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains(['\t', ',', '\n', '\r']) || label.trim() != label {
        return Err(Error::Validation(format!(
            "label {label:?} cannot be written to a delimited file"
        )));
    }
    Ok(())
}

/// Writes the tab-delimited edge list, optionally with one extra column.
pub fn write_edge_list(
    g: &InteractionGraph,
    out: &mut impl Write,
    extra: Option<(&str, &dyn Fn(usize) -> String)>,
) -> Result<()> {
    let io = |e: std::io::Error| Error::Validation(format!("write failed: {e}"));
    match &extra {
        Some((name, _)) => writeln!(out, "drug_a\tdrug_b\ttype\t{name}").map_err(io)?,
        None => writeln!(out, "drug_a\tdrug_b\ttype").map_err(io)?,
    }
    for (i, e) in g.edges().iter().enumerate() {
        let a = g.drugs().label(e.first().0);
        let b = g.drugs().label(e.second().0);
        let t = g.types().label(e.kind().0);
        check_label(a)?;
        check_label(b)?;
        check_label(t)?;
        match &extra {
            Some((_, f)) => writeln!(out, "{a}\t{b}\t{t}\t{}", f(i)).map_err(io)?,
            None => writeln!(out, "{a}\t{b}\t{t}").map_err(io)?,
        }
    }
    Ok(())
}

pub fn write_vocabulary(vocab: &Vocabulary, out: &mut impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::Validation(format!("write failed: {e}"));
    writeln!(out, "index\tlabel").map_err(io)?;
    for (i, l) in vocab.labels().iter().enumerate() {
        check_label(l)?;
        writeln!(out, "{i}\t{l}").map_err(io)?;
    }
    Ok(())
}

pub fn read_vocabulary(source: impl Read) -> Result<Vocabulary> {
    let reader = BufReader::new(source);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if lineno == 1 {
            if line.trim() != "index\tlabel" {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header index<TAB>label".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected index<TAB>label".into(),
        })?;
        let idx: usize = idx.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad index {idx:?}"),
        })?;
        if idx != labels.len() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("indices must be dense and ascending; expected {}", labels.len()),
            });
        }
        labels.push(label.trim().to_string());
    }
    Vocabulary::from_labels(labels)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn graph_paths(prefix: &Path) -> [PathBuf; 3] {
    [
        with_suffix(prefix, ".tsv"),
        with_suffix(prefix, ".drugs.tsv"),
        with_suffix(prefix, ".types.tsv"),
    ]
}

/// Writes `prefix.tsv`, `prefix.drugs.tsv` and `prefix.types.tsv`.
pub fn save_graph(g: &InteractionGraph, prefix: &Path) -> Result<Vec<PathBuf>> {
    let paths = graph_paths(prefix);
    if let Some(dir) = prefix.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
    let mut w = create(&paths[0])?;
    write_edge_list(g, &mut w, None)?;
    w.flush().map_err(|e| Error::io(&paths[0], e))?;
    let mut w = create(&paths[1])?;
    write_vocabulary(g.drugs(), &mut w)?;
    w.flush().map_err(|e| Error::io(&paths[1], e))?;
    let mut w = create(&paths[2])?;
    write_vocabulary(g.types(), &mut w)?;
    w.flush().map_err(|e| Error::io(&paths[2], e))?;
    Ok(paths.to_vec())
}

/// Reads a graph written by [`save_graph`]. Vocabulary indices come from the
/// sidecars, not from edge order.
pub fn load_graph(prefix: &Path) -> Result<InteractionGraph> {
    let [edges_p, drugs_p, types_p] = graph_paths(prefix);
    let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
    let mut drugs = read_vocabulary(open(&drugs_p)?)?;
    let mut types = read_vocabulary(open(&types_p)?)?;
    let (nd, nt) = (drugs.len(), types.len());
    let (edges, _) = ingest_into(open(&edges_p)?, EdgeListFormat::auto(), &mut drugs, &mut types)?;
    if drugs.len() != nd || types.len() != nt {
        return Err(Error::Validation(format!(
            "{} uses labels missing from its vocabulary sidecars",
            edges_p.display()
        )));
    }
    Ok(InteractionGraph::build(drugs, types, edges)?.0)
}
