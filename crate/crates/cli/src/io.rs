//! Measure arguments and CSV emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use absdyn_core::measures::{AtomicMeasure, GridMeasure, Measure};
use absdyn_core::selfmap::LatticePMF;
use serde::de::DeserializeOwned;

use crate::fail::{Failure, Kind, Outcome};

/// Grid used when a shorthand measure needs a discretization.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub x_max: f64,
    pub n: usize,
}

/// Resolves a measure argument: a JSON file in the measures schema, or one of
/// `exp:RATE`, `unif:A:B` (both on `grid`), `dirac:X`, `atoms:X@W,X@W,…`.
pub fn load_measure(arg: &str, grid: GridSpec) -> Outcome<Measure> {
    let bad = |msg: String| Failure::new(Kind::InvalidMeasure, format!("{arg}: {msg}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}")));
    let (head, rest) = arg.split_once(':').unwrap_or((arg, ""));
    match head {
        "exp" => Ok(GridMeasure::exponential(num(rest)?, grid.x_max, grid.n)?.into()),
        "unif" => {
            let (a, b) = rest.split_once(':').ok_or_else(|| bad("expected unif:A:B".into()))?;
            Ok(GridMeasure::uniform(num(a)?, num(b)?, grid.x_max, grid.n)?.into())
        }
        "dirac" => Ok(AtomicMeasure::dirac(num(rest)?)?.into()),
        "atoms" => {
            let atoms = rest
                .split(',')
                .map(|pair| {
                    let (x, w) = pair.split_once('@').ok_or_else(|| bad(format!("expected X@W, got {pair:?}")))?;
                    Ok((num(x)?, num(w)?))
                })
                .collect::<Outcome<Vec<_>>>()?;
            Ok(AtomicMeasure::new(atoms)?.into())
        }
        _ => read_json(Path::new(arg)),
    }
}

/// A lattice PMF from a JSON file `{"probs": [...]}`.
pub fn load_pmf(path: &Path) -> Outcome<LatticePMF> {
    read_json(path)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(&path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Failure::new(Kind::InvalidMeasure, format!("{}: {e}", path.display())))
}

/// Formats a float so that the text round-trips and does not depend on locale.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// A CSV table preceded by `# key=value` lines echoing the configuration.
pub struct Table {
    name: String,
    header: Vec<String>,
    columns: Vec<&'static str>,
    rows: Vec<String>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Table { name: name.into(), header: Vec::new(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.header.push(format!("# {key}={value}"));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells.join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    fn render(&self) -> String {
        let mut s = String::new();
        for line in &self.header {
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    /// Writes `<dir>/<name>.csv` through a temp file and a rename, so a
    /// failed run never leaves a partial file behind.
    pub fn write(&self, dir: &Path) -> Outcome<PathBuf> {
        write_atomic(dir, &format!("{}.csv", self.name), self.render().as_bytes())
    }
}

pub fn write_atomic(dir: &Path, file: &str, bytes: &[u8]) -> Outcome<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    let target = dir.join(file);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(&dir.display().to_string(), e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(file, e))?;
    tmp.persist(&target).map_err(|e| Failure::io(file, e.error))?;
    Ok(target)
}
