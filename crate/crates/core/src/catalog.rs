//! Species catalog: dense class indices with per-split counts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesEntry {
    pub class_index: usize,
    pub scientific_name: String,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpeciesCatalog {
    entries: Vec<SpeciesEntry>,
}

impl SpeciesCatalog {
    /// Orders species by descending train count, then by name, and assigns
    /// dense class indices in that order.
    pub fn from_counts(
        counts: impl IntoIterator<Item = (String, usize, usize, usize)>,
    ) -> Result<Self> {
        let mut rows: Vec<_> = counts.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, (name, train, val, test))| SpeciesEntry {
                class_index: i,
                scientific_name: name,
                train_count: train,
                val_count: val,
                test_count: test,
            })
            .collect();
        let catalog = SpeciesCatalog { entries };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_entries(entries: Vec<SpeciesEntry>) -> Result<Self> {
        let catalog = SpeciesCatalog { entries };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.class_index != i {
                return Err(Error::Config(format!(
                    "catalog class indices must be dense from 0; row {i} has {}",
                    e.class_index
                )));
            }
            if e.train_count == 0 {
                return Err(Error::Config(format!(
                    "species `{}` has no training individuals",
                    e.scientific_name
                )));
            }
            if !names.insert(e.scientific_name.as_str()) {
                return Err(Error::Config(format!(
                    "species `{}` listed twice",
                    e.scientific_name
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SpeciesEntry] {
        &self.entries
    }

    pub fn get(&self, class_index: usize) -> Option<&SpeciesEntry> {
        self.entries.get(class_index)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.scientific_name == name)
    }

    pub fn train_counts(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.train_count).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for e in &self.entries {
            w.serialize(e).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let entries = r
            .deserialize()
            .collect::<std::result::Result<Vec<SpeciesEntry>, _>>()
            .map_err(|e| csv_err(path, e))?;
        Self::from_entries(entries)
    }
}

/// Name-only class index used before splits exist. Ordered by descending
/// number of labeled trees, then by name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpeciesIndex {
    names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct IndexRow {
    class_index: usize,
    scientific_name: String,
    labeled_trees: usize,
}

impl SpeciesIndex {
    pub fn from_tree_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for l in labels {
            *counts.entry(l).or_default() += 1;
        }
        let mut rows: Vec<_> = counts.into_iter().collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        SpeciesIndex {
            names: rows.into_iter().map(|(n, _)| n.to_string()).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn write_csv(&self, path: &Path, counts: &[usize]) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for (i, n) in self.names.iter().enumerate() {
            w.serialize(IndexRow {
                class_index: i,
                scientific_name: n.clone(),
                labeled_trees: counts.get(i).copied().unwrap_or(0),
            })
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut names = Vec::new();
        for (i, row) in r.deserialize::<IndexRow>().enumerate() {
            let row = row.map_err(|e| csv_err(path, e))?;
            if row.class_index != i {
                return Err(Error::Config(format!(
                    "species index `{}` is not dense at row {i}",
                    path.display()
                )));
            }
            names.push(row.scientific_name);
        }
        Ok(SpeciesIndex { names })
    }
}

pub(crate) fn csv_err(path: &Path, source: csv::Error) -> Error {
    if let csv::ErrorKind::Io(io) = source.kind() {
        if io.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingInput(path.to_path_buf());
        }
    }
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_by_train_count_then_name() {
        let cat = SpeciesCatalog::from_counts(vec![
            ("Virola sebifera".to_string(), 2, 0, 0),
            ("Dipteryx oleifera".to_string(), 40, 8, 8),
            ("Alseis blackiana".to_string(), 2, 1, 0),
            ("Zanthoxylum ekmanii".to_string(), 5, 1, 1),
        ])
        .unwrap();
        let names: Vec<_> = cat.entries().iter().map(|e| e.scientific_name.as_str()).collect();
        assert_eq!(
            names,
            ["Dipteryx oleifera", "Zanthoxylum ekmanii", "Alseis blackiana", "Virola sebifera"]
        );
        assert_eq!(cat.index_of("Alseis blackiana"), Some(2));
    }

    #[test]
    fn zero_train_count_rejected() {
        let err = SpeciesCatalog::from_counts(vec![("A".to_string(), 0, 1, 1)]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn csv_roundtrip_has_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.csv");
        let cat = SpeciesCatalog::from_counts(vec![
            ("A".to_string(), 3, 1, 1),
            ("B".to_string(), 1, 0, 0),
        ])
        .unwrap();
        cat.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "class_index,scientific_name,train_count,val_count,test_count"
        );
        assert_eq!(SpeciesCatalog::read_csv(&path).unwrap(), cat);
    }

    #[test]
    fn species_index_orders_by_frequency() {
        let idx = SpeciesIndex::from_tree_labels(["b", "a", "b", "c", "a", "b"]);
        assert_eq!(idx.names(), ["b", "a", "c"]);
    }
}
