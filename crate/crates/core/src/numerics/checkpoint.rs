//! Text checkpoint format.
//!
//! ```text
//! ddi-gfn-checkpoint v1
//! meta <key> <value>            (zero or more)
//! param <name> <rows> <cols>    (one per parameter, in store order)
//! end
//! <name>\t<v0>\t<v1>...         (one line per parameter, row-major)
//! ```
//!
//! Values use the shortest decimal form that round-trips to the same `f64`,
//! so writing a checkpoint that was just read reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &str = "ddi-gfn-checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Validation(format!("checkpoint lacks meta key {key}")))?
            .parse()
            .map_err(|_| Error::Validation(format!("checkpoint meta {key} is not an integer")))
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.meta
            .get(key)
            .ok_or_else(|| Error::Validation(format!("checkpoint lacks meta key {key}")))?
            .parse()
            .map_err(|_| Error::Validation(format!("checkpoint meta {key} is not a number")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, t) in self.params.iter() {
            let _ = writeln!(out, "param {name} {} {}", t.rows(), t.cols());
        }
        out.push_str("end\n");
        for (name, t) in self.params.iter() {
            out.push_str(name);
            for v in t.data() {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let parse_err = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(parse_err(1, "not a ddi-gfn checkpoint")),
        }
        let mut meta = BTreeMap::new();
        let mut shapes = Vec::new();
        loop {
            let (n, line) = lines.next().ok_or_else(|| parse_err(0, "missing manifest end"))?;
            let parts: Vec<&str> = line.split(' ').collect();
            match parts.as_slice() {
                ["end"] => break,
                ["meta", k, v] => {
                    meta.insert(k.to_string(), v.to_string());
                }
                ["param", name, r, c] => {
                    let r: usize = r.parse().map_err(|_| parse_err(n, "bad row count"))?;
                    let c: usize = c.parse().map_err(|_| parse_err(n, "bad column count"))?;
                    shapes.push((name.to_string(), r, c));
                }
                _ => return Err(parse_err(n, "unrecognized manifest line")),
            }
        }
        let mut params = ParamStore::new();
        for (name, r, c) in shapes {
            let (n, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, &format!("missing values for {name}")))?;
            let mut fields = line.split('\t');
            if fields.next() != Some(name.as_str()) {
                return Err(parse_err(n, &format!("expected values for {name}")));
            }
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| parse_err(n, "bad value"))?;
            if values.len() != r * c {
                return Err(parse_err(n, &format!("{name} needs {} values", r * c)));
            }
            params.insert(name, Tensor::new(r, c, values));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
