//! The WETB trajectory format and its JSON index sidecar.
//!
//! Layout, little-endian: magic `WETB`, u32 version, u32 n_frames,
//! u32 n_particles, u32 dims, then one f64 weight per frame, then the f32
//! coordinates of every frame, frame-major.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Conformation;

pub const MAGIC: &[u8; 4] = b"WETB";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct WetbFile {
    pub n_particles: usize,
    pub dims: usize,
    pub weights: Vec<f64>,
    /// `n_frames * n_particles * dims` values.
    pub coords: Vec<f32>,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit the WETB header")))
}

impl WetbFile {
    pub fn new(n_particles: usize, dims: usize) -> Self {
        WetbFile {
            n_particles,
            dims,
            weights: Vec::new(),
            coords: Vec::new(),
        }
    }

    /// Frames narrowed to f32, each with its weight.
    pub fn from_frames(frames: &[Conformation], weights: &[f64]) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyPointSet)?;
        let mut out = WetbFile::new(first.n_particles(), first.dims());
        if weights.len() != frames.len() {
            return Err(Error::DimensionMismatch {
                expected: frames.len(),
                found: weights.len(),
            });
        }
        for (f, w) in frames.iter().zip(weights) {
            out.push(f, *w)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, frame: &Conformation, weight: f64) -> Result<()> {
        if frame.n_particles() != self.n_particles || frame.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.n_particles * self.dims,
                found: frame.positions().len(),
            });
        }
        self.weights.push(weight);
        self.coords.extend(frame.positions().iter().map(|v| *v as f32));
        Ok(())
    }

    pub fn append(&mut self, other: &WetbFile) -> Result<()> {
        if other.n_particles != self.n_particles || other.dims != self.dims {
            return Err(Error::ParticleMismatch(self.n_particles, other.n_particles));
        }
        self.weights.extend_from_slice(&other.weights);
        self.coords.extend_from_slice(&other.coords);
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.weights.len()
    }

    fn frame_len(&self) -> usize {
        self.n_particles * self.dims
    }

    pub fn frame(&self, i: usize) -> Result<Conformation> {
        let k = self.frame_len();
        let positions = self.coords[i * k..(i + 1) * k].iter().map(|v| f64::from(*v)).collect();
        Conformation::new(positions, self.dims)
    }

    pub fn frames(&self) -> Result<Vec<Conformation>> {
        (0..self.n_frames()).map(|i| self.frame(i)).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.weights.len() + 4 * self.coords.len());
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            to_u32(self.n_frames(), "frame count")?,
            to_u32(self.n_particles, "particle count")?,
            to_u32(self.dims, "dimension")?,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for c in &self.coords {
            out.extend_from_slice(&c.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses a WETB blob; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "missing WETB header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (version, n_frames, n_particles, dims) = (word(0), word(1), word(2), word(3));
        if version != VERSION as usize {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let n_coords = n_frames
            .checked_mul(n_particles)
            .and_then(|v| v.checked_mul(dims))
            .ok_or_else(|| Error::format(path, "header sizes overflow"))?;
        let expected = HEADER_LEN + 8 * n_frames + 4 * n_coords;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                format!("expected {expected} bytes for {n_frames} frames, found {}", bytes.len()),
            ));
        }
        if n_frames > 0 && (n_particles == 0 || dims == 0) {
            return Err(Error::format(path, "frames with no coordinates"));
        }
        let body = &bytes[HEADER_LEN..];
        let weights = body[..8 * n_frames]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let coords = body[8 * n_frames..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(WetbFile {
            n_particles,
            dims,
            weights,
            coords,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunKind {
    Reference,
    WeightedEnsemble,
}

/// A contiguous run of frames: one reference trajectory or one walker
/// segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub start: usize,
    pub len: usize,
    /// WE iteration; the trajectory number for reference runs.
    pub iteration: u32,
    pub walker_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryIndex {
    pub kind: RunKind,
    pub dt: f64,
    pub save_stride: usize,
    pub spans: Vec<Span>,
}

impl TrajectoryIndex {
    pub fn n_frames(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }

    /// Spans tile `0..n_frames` in order.
    pub fn check(&self, n_frames: usize, path: &Path) -> Result<()> {
        let mut at = 0;
        for s in &self.spans {
            if s.start != at || s.len == 0 {
                return Err(Error::format(
                    path,
                    format!("span at frame {} is out of order or empty", s.start),
                ));
            }
            at += s.len;
        }
        if at != n_frames {
            return Err(Error::format(
                path,
                format!("index covers {at} frames, trajectory has {n_frames}"),
            ));
        }
        Ok(())
    }
}

/// `<dir>/<stem>.<suffix>` next to a trajectory file.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn index_path(trajectory: &Path) -> PathBuf {
    sidecar(trajectory, "index.json")
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let frames = vec![Conformation::new(vec![1.0, 2.0], 2).unwrap()];
        let bytes = WetbFile::from_frames(&frames, &[0.5]).unwrap().to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"WETB");
        assert_eq!(&bytes[4..20], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[20..28], &0.5f64.to_le_bytes());
        assert_eq!(&bytes[28..32], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 36);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let frames = vec![Conformation::new(vec![1.0, 2.0, 3.0], 3).unwrap(); 2];
        let bytes = WetbFile::from_frames(&frames, &[0.5, 0.5]).unwrap().to_bytes().unwrap();
        let p = Path::new("x.wetrj");
        assert!(WetbFile::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(WetbFile::from_bytes(&bad, p).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(WetbFile::from_bytes(&v2, p), Err(Error::Format { .. })));
    }

    #[test]
    fn sidecars_share_the_stem() {
        assert_eq!(index_path(Path::new("out/we.wetrj")), Path::new("out/we.index.json"));
    }

    #[test]
    fn index_must_tile_the_frames() {
        let index = TrajectoryIndex {
            kind: RunKind::Reference,
            dt: 1.0,
            save_stride: 1,
            spans: vec![
                Span {
                    start: 0,
                    len: 3,
                    iteration: 0,
                    walker_id: 0,
                },
                Span {
                    start: 3,
                    len: 2,
                    iteration: 1,
                    walker_id: 0,
                },
            ],
        };
        let p = Path::new("i.json");
        assert!(index.check(5, p).is_ok());
        assert!(index.check(6, p).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exactly(
            n_particles in 1usize..4,
            dims in 1usize..4,
            raw in prop::collection::vec((any::<f64>(), prop::collection::vec(any::<f32>(), 9)), 0..20),
        ) {
            let k = n_particles * dims;
            let file = WetbFile {
                n_particles,
                dims,
                weights: raw.iter().map(|r| r.0).collect(),
                coords: raw.iter().flat_map(|r| r.1[..k].to_vec()).collect(),
            };
            let back = WetbFile::from_bytes(&file.to_bytes().unwrap(), Path::new("p")).unwrap();
            prop_assert_eq!(back.n_particles, n_particles);
            prop_assert_eq!(back.dims, dims);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            let bits32 = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.weights), bits(&file.weights));
            prop_assert_eq!(bits32(&back.coords), bits32(&file.coords));
        }
    }
}
