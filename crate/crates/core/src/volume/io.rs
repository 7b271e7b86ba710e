//! Binary volume format and per-case JSON sidecars.
//!
//! Layout of a volume file, all integers little-endian:
//!
//! | bytes | field                                        |
//! |-------|----------------------------------------------|
//! | 4     | magic `SMAI`                                 |
//! | 2     | format version (`u16`, currently 1)          |
//! | 1     | dtype: 1 = `f32` intensities, 2 = `u16` labels |
//! | 12    | dims x, y, z (`u32` each)                    |
//! | 12    | spacing x, y, z in mm (`f32` each)           |
//! | n     | payload, x fastest                           |

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::case::{CaseMeta, CaseRecord, StructuredReport};
use crate::volume::catalog::StructureCatalog;
use crate::volume::grid::{Dims, Label, LabelMap, Spacing, VoxelGrid};

pub const MAGIC: &[u8; 4] = b"SMAI";
pub const FORMAT_VERSION: u16 = 1;
pub const SCHEMA_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 12 + 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    U16 = 2,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U16 => 2,
        }
    }
}

fn header(dtype: Dtype, dims: Dims, spacing: Spacing) -> Result<Vec<u8>> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    h.push(dtype as u8);
    for n in [dims.x, dims.y, dims.z] {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))?;
        h.extend_from_slice(&n.to_le_bytes());
    }
    for s in spacing.0 {
        h.extend_from_slice(&(s as f32).to_le_bytes());
    }
    Ok(h)
}

struct Header {
    dtype: Dtype,
    dims: Dims,
    spacing: Spacing,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file too short for header: {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let dtype = match bytes[6] {
        1 => Dtype::F32,
        2 => Dtype::U16,
        other => return Err(Error::Format(format!("unknown dtype code {other}"))),
    };
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let dims = Dims::new(u32_at(7), u32_at(11), u32_at(15));
    let spacing = Spacing::new(f32_at(19), f32_at(23), f32_at(27))
        .map_err(|e| Error::Format(e.to_string()))?;
    let expected = HEADER_LEN + dims.len() * dtype.width();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload size mismatch: file has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    Ok(Header { dtype, dims, spacing })
}

pub fn encode_volume(grid: &VoxelGrid<f32>) -> Result<Vec<u8>> {
    let mut out = header(Dtype::F32, grid.dims(), grid.spacing())?;
    out.reserve(grid.data().len() * 4);
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_volume(bytes: &[u8]) -> Result<VoxelGrid<f32>> {
    let h = parse_header(bytes)?;
    if h.dtype != Dtype::F32 {
        return Err(Error::Format("expected f32 intensity payload".into()));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VoxelGrid::new(h.dims, h.spacing, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_labels(map: &LabelMap) -> Result<Vec<u8>> {
    let mut out = header(Dtype::U16, map.dims(), map.spacing())?;
    out.reserve(map.labels().len() * 2);
    for l in map.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_labels(bytes: &[u8], catalog: &StructureCatalog) -> Result<LabelMap> {
    let h = parse_header(bytes)?;
    if h.dtype != Dtype::U16 {
        return Err(Error::Format("expected u16 label payload".into()));
    }
    let labels: Vec<Label> = bytes[HEADER_LEN..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LabelMap::new(h.dims, h.spacing, labels, catalog)
}

pub fn write_volume(path: &Path, grid: &VoxelGrid<f32>) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_volume(grid)?)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<VoxelGrid<f32>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_volume(&bytes)
}

pub fn write_labels(path: &Path, map: &LabelMap) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_labels(map)?)?;
    Ok(())
}

pub fn read_labels(path: &Path, catalog: &StructureCatalog) -> Result<LabelMap> {
    decode_labels(&fs::read(path)?, catalog)
}

/// Relative file names of a case's binaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseFiles {
    pub volume: String,
    pub pseudo: String,
    pub gold: Option<String>,
}

/// JSON sidecar written next to a case's binaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSidecar {
    pub schema_version: u32,
    pub case_id: String,
    pub catalog_id: String,
    pub report: StructuredReport,
    pub meta: CaseMeta,
    pub files: CaseFiles,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub sidecar: String,
    /// SHA-256 over sidecar and binaries, in that order.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub catalog: StructureCatalog,
    pub cases: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes one case (binaries plus sidecar) into `dir`; returns its manifest entry.
pub fn write_case(dir: &Path, case: &CaseRecord) -> Result<ManifestEntry> {
    let id = &case.case_id;
    let files = CaseFiles {
        volume: format!("{id}.vol"),
        pseudo: format!("{id}.pseudo.lbl"),
        gold: case.gold.as_ref().map(|_| format!("{id}.gold.lbl")),
    };
    let sidecar = CaseSidecar {
        schema_version: SCHEMA_VERSION,
        case_id: id.clone(),
        catalog_id: case.pseudo.catalog_id().to_string(),
        report: case.report.clone(),
        meta: case.meta.clone(),
        files: files.clone(),
    };
    let mut blobs = vec![
        (format!("{id}.json"), pretty_json(&sidecar)?),
        (files.volume, encode_volume(&case.volume)?),
        (files.pseudo, encode_labels(&case.pseudo)?),
    ];
    if let (Some(name), Some(gold)) = (files.gold, &case.gold) {
        blobs.push((name, encode_labels(gold)?));
    }
    let mut hasher = Sha256::new();
    for (name, bytes) in &blobs {
        hasher.update(bytes);
        fs::write(dir.join(name), bytes)?;
    }
    Ok(ManifestEntry {
        case_id: id.clone(),
        sidecar: format!("{id}.json"),
        sha256: hex::encode(hasher.finalize()),
    })
}

pub fn read_case(dir: &Path, sidecar_name: &str, catalog: &StructureCatalog) -> Result<CaseRecord> {
    let sidecar: CaseSidecar = serde_json::from_slice(&fs::read(dir.join(sidecar_name))?)?;
    if sidecar.catalog_id != catalog.id() {
        return Err(Error::Catalog(format!(
            "case {} uses catalog `{}`, corpus declares `{}`",
            sidecar.case_id,
            sidecar.catalog_id,
            catalog.id()
        )));
    }
    let volume = read_volume(&dir.join(&sidecar.files.volume))?;
    let pseudo = read_labels(&dir.join(&sidecar.files.pseudo), catalog)?;
    let gold = match &sidecar.files.gold {
        Some(g) => Some(read_labels(&dir.join(g), catalog)?),
        None => None,
    };
    CaseRecord::new(sidecar.case_id, volume, pseudo, gold, sidecar.report, sidecar.meta)
}

/// Writes a corpus directory: one sidecar and binaries per case plus `manifest.json`.
pub fn write_corpus(dir: &Path, catalog: &StructureCatalog, cases: &[CaseRecord]) -> Result<CorpusManifest> {
    fs::create_dir_all(dir)?;
    let entries = cases.iter().map(|c| write_case(dir, c)).collect::<Result<Vec<_>>>()?;
    let manifest = CorpusManifest {
        schema_version: SCHEMA_VERSION,
        catalog: catalog.clone(),
        cases: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), pretty_json(&manifest)?)?;
    Ok(manifest)
}

pub fn read_corpus(dir: &Path) -> Result<(StructureCatalog, Vec<CaseRecord>)> {
    let manifest: CorpusManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    let catalog = StructureCatalog::new(manifest.catalog.id(), manifest.catalog.entries().to_vec())?;
    let cases = manifest
        .cases
        .iter()
        .map(|e| read_case(dir, &e.sidecar, &catalog))
        .collect::<Result<Vec<_>>>()?;
    Ok((catalog, cases))
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}
