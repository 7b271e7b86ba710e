use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::grid::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Organ,
    Vessel,
    Tumor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureEntry {
    pub label: Label,
    pub name: String,
    pub kind: StructureKind,
}

/// Ordered set of annotated structures. Labels are dense from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureCatalog {
    id: String,
    entries: Vec<StructureEntry>,
}

impl StructureCatalog {
    pub fn new(id: impl Into<String>, entries: Vec<StructureEntry>) -> Result<Self> {
        let id = id.into();
        for (k, e) in entries.iter().enumerate() {
            let expected = k + 1;
            if e.label as usize != expected {
                return Err(Error::Catalog(format!(
                    "catalog `{id}`: labels must be dense from 1, entry {k} has label {}",
                    e.label
                )));
            }
            if entries[..k].iter().any(|p| p.name == e.name) {
                return Err(Error::Catalog(format!("catalog `{id}`: duplicate name `{}`", e.name)));
            }
        }
        Ok(Self { id, entries })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn entries(&self) -> &[StructureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, label: Label) -> bool {
        label >= 1 && (label as usize) <= self.entries.len()
    }

    pub fn get(&self, label: Label) -> Option<&StructureEntry> {
        self.contains(label).then(|| &self.entries[label as usize - 1])
    }

    pub fn by_name(&self, name: &str) -> Option<&StructureEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.iter().map(|e| e.label)
    }

    pub fn name(&self, label: Label) -> &str {
        self.get(label).map_or("background", |e| e.name.as_str())
    }

    pub fn kind(&self, label: Label) -> Option<StructureKind> {
        self.get(label).map(|e| e.kind)
    }

    pub fn tumor_labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.iter().filter(|e| e.kind == StructureKind::Tumor).map(|e| e.label)
    }

    /// First tumor label, required by tumor workflows.
    pub fn require_tumor(&self) -> Result<Label> {
        self.tumor_labels()
            .next()
            .ok_or_else(|| Error::Catalog(format!("catalog `{}` has no tumor entry", self.id)))
    }
}
