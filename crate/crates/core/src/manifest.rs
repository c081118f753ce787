//! Newline-delimited JSON manifests, one [`TileSample`] per line.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{TileSample, ViewKind};

/// Checks per-record invariants plus the manifest-wide rules: unique
/// `(tree_id, date_id, view)` and one species label per tree.
pub fn validate_manifest(samples: &[TileSample]) -> Result<()> {
    let mut seen: HashSet<(&str, &str, ViewKind)> = HashSet::with_capacity(samples.len());
    let mut labels: HashMap<&str, Option<i64>> = HashMap::new();
    for s in samples {
        s.validate()?;
        if !seen.insert((&s.tree_id, &s.date_id, s.view)) {
            return Err(Error::validation(
                &s.tree_id,
                "date_id",
                format!("duplicate record for ({}, {}, {})", s.tree_id, s.date_id, s.view),
            ));
        }
        match labels.get(s.tree_id.as_str()) {
            Some(prev) if *prev != s.species_label => {
                return Err(Error::validation(
                    &s.tree_id,
                    "species_label",
                    format!("{:?} conflicts with {:?} on another sample", s.species_label, prev),
                ));
            }
            Some(_) => {}
            None => {
                labels.insert(&s.tree_id, s.species_label);
            }
        }
    }
    Ok(())
}

pub fn write_manifest(samples: &[TileSample], path: &Path) -> Result<()> {
    validate_manifest(samples)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in samples {
        // Serialization of these plain structs cannot fail.
        let line = serde_json::to_string(s).expect("manifest record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<TileSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TileSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    validate_manifest(&samples)?;
    Ok(samples)
}
