//! TTFX: a small binary container for axis and world matrices.
//!
//! ```text
//! file    := "TTFX" version:u16 section_count:u16 section*
//! section := tag:[u8; 4] d_z:u32 n_attr:u32
//!            values:f64[d_z * n_attr]      (column-major)
//!            meta_len:u32 meta:utf8[meta_len]   (JSON)
//! ```
//!
//! All integers and floats are little-endian. The `MNFT` section carries
//! the run manifest (a 0×0 matrix plus JSON); every other section is
//! payload and is covered by [`TtfxFile::payload_hash`].

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attributes::AttributeSet;
use crate::error::{Error, Result};
use crate::linalg::{AxisBasis, AxisMatrix, FeatureAxes, FitMetadata, Matrix};
use crate::manifest::{write_atomic, RunManifest};
use crate::world::{SyntheticWorld, WorldSpec};

pub const MAGIC: &[u8; 4] = b"TTFX";
pub const VERSION: u16 = 1;

pub const TAG_RAW_AXES: [u8; 4] = *b"AXRW";
pub const TAG_BASIS: [u8; 4] = *b"AXON";
pub const TAG_WORLD: [u8; 4] = *b"WRLD";
pub const TAG_MANIFEST: [u8; 4] = *b"MNFT";

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub tag: [u8; 4],
    pub matrix: Matrix,
    pub metadata: String,
}

impl Section {
    pub fn new(tag: [u8; 4], matrix: Matrix, metadata: String) -> Self {
        Self { tag, matrix, metadata }
    }

    fn encode_into(&self, out: &mut Vec<u8>) -> Result<()> {
        let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")));
        out.extend_from_slice(&self.tag);
        out.extend_from_slice(&dim(self.matrix.rows())?.to_le_bytes());
        out.extend_from_slice(&dim(self.matrix.cols())?.to_le_bytes());
        for v in self.matrix.as_col_major() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&dim(self.metadata.len())?.to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TtfxFile {
    pub sections: Vec<Section>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl TtfxFile {
    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    pub fn section(&self, tag: [u8; 4]) -> Option<&Section> {
        self.sections.iter().find(|s| s.tag == tag)
    }

    fn require(&self, tag: [u8; 4]) -> Result<&Section> {
        self.section(tag)
            .ok_or_else(|| Error::Format(format!("missing `{}` section", String::from_utf8_lossy(&tag))))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let count = u16::try_from(self.sections.len()).map_err(|_| Error::Format("too many sections".into()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        for s in &self.sections {
            s.encode_into(&mut out)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(Error::Format("bad magic (not a TTFX file)".into()));
        }
        let version = c.u16()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = c.u16()?;
        let mut sections = Vec::with_capacity(usize::from(count));
        for _ in 0..count {
            let tag: [u8; 4] = c.take(4)?.try_into().expect("4 bytes");
            let rows = c.u32()? as usize;
            let cols = c.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
            let data = c
                .take(n)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            let meta_len = c.u32()? as usize;
            let metadata = std::str::from_utf8(c.take(meta_len)?)
                .map_err(|_| Error::Format("metadata is not UTF-8".into()))?
                .to_string();
            sections.push(Section {
                tag,
                matrix: Matrix::from_col_major(rows, cols, data)?,
                metadata,
            });
        }
        if c.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
        }
        Ok(Self { sections })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    /// SHA-256 over every non-manifest section, hex encoded.
    pub fn payload_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        for s in self.sections.iter().filter(|s| s.tag != TAG_MANIFEST) {
            let mut buf = Vec::new();
            s.encode_into(&mut buf)?;
            h.update(&buf);
        }
        Ok(hex(&h.finalize()))
    }

    pub fn manifest(&self) -> Result<Option<RunManifest>> {
        self.section(TAG_MANIFEST)
            .map(|s| serde_json::from_str(&s.metadata).map_err(|e| Error::Format(format!("manifest: {e}"))))
            .transpose()
    }

    pub fn set_manifest(&mut self, manifest: &RunManifest) {
        self.sections.retain(|s| s.tag != TAG_MANIFEST);
        let json = serde_json::to_string(manifest).expect("manifest serializes");
        self.sections
            .push(Section::new(TAG_MANIFEST, Matrix::zeros(0, 0), json));
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn meta_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("metadata serializes")
}

fn parse_meta<'a, T: Deserialize<'a>>(s: &'a Section) -> Result<T> {
    serde_json::from_str(&s.metadata)
        .map_err(|e| Error::Format(format!("`{}` metadata: {e}", String::from_utf8_lossy(&s.tag))))
}

#[derive(Serialize, Deserialize)]
struct RawAxesMeta {
    #[serde(flatten)]
    fit: FitMetadata,
    attributes: AttributeSet,
}

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    order: Vec<usize>,
    attributes: AttributeSet,
}

/// Fitted axes plus the attribute names they are indexed by.
#[derive(Debug, Clone, PartialEq)]
pub struct AxesArtifact {
    pub axes: FeatureAxes,
    pub attributes: AttributeSet,
}

impl AxesArtifact {
    pub fn to_ttfx(&self) -> TtfxFile {
        let mut f = TtfxFile::default();
        f.push(Section::new(
            TAG_RAW_AXES,
            self.axes.raw.matrix().clone(),
            meta_json(&RawAxesMeta {
                fit: self.axes.raw.meta.clone(),
                attributes: self.attributes.clone(),
            }),
        ));
        f.push(Section::new(
            TAG_BASIS,
            self.axes.basis.matrix().clone(),
            meta_json(&BasisMeta {
                order: self.axes.basis.order().to_vec(),
                attributes: self.attributes.clone(),
            }),
        ));
        f
    }

    pub fn from_ttfx(f: &TtfxFile) -> Result<Self> {
        let raw_s = f.require(TAG_RAW_AXES)?;
        let raw_meta: RawAxesMeta = parse_meta(raw_s)?;
        let basis_s = f.require(TAG_BASIS)?;
        let basis_meta: BasisMeta = parse_meta(basis_s)?;
        if raw_s.matrix.rows() != basis_s.matrix.rows() || raw_s.matrix.cols() != basis_s.matrix.cols() {
            return Err(Error::Format("raw and orthonormal axes differ in shape".into()));
        }
        if raw_meta.attributes.len() != raw_s.matrix.cols() {
            return Err(Error::Format("attribute names do not match axis count".into()));
        }
        let raw = AxisMatrix::new(raw_s.matrix.clone(), raw_meta.fit)?;
        let basis = AxisBasis::from_parts(basis_s.matrix.clone(), basis_meta.order)?;
        Ok(Self {
            axes: FeatureAxes { raw, basis },
            attributes: raw_meta.attributes,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_ttfx(&TtfxFile::read(path)?)
    }
}

pub fn world_to_ttfx(world: &SyntheticWorld) -> TtfxFile {
    let mut f = TtfxFile::default();
    f.push(Section::new(
        TAG_WORLD,
        world.directions().clone(),
        meta_json(world.spec()),
    ));
    f
}

pub fn world_from_ttfx(f: &TtfxFile) -> Result<SyntheticWorld> {
    let s = f.require(TAG_WORLD)?;
    let spec: WorldSpec = parse_meta(s)?;
    SyntheticWorld::from_parts(spec, s.matrix.clone())
}

pub fn load_world(path: &Path) -> Result<SyntheticWorld> {
    world_from_ttfx(&TtfxFile::read(path)?)
}
