//! Chunked binary container shared by episode files and checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! header   magic "AQSIMBIN" | version u32 | kind u32 | total_len u64 | chunk_count u32 | reserved u32
//! chunk*   tag [u8; 4] | len u64 | payload [u8; len]
//! trailer  FNV-1a 64 of every preceding byte, u64
//! ```

use super::record::{Episode, EpisodeMeta, FrameRecord, StoredImage, StoredStereo, FRAME_STRIDE};
use super::record::{frame_time, layout};
use crate::geometry::{target_in_robot_frame, Pose};
use fnv::FnvHasher;
use std::hash::Hasher;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"AQSIMBIN";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
pub const CHUNK_HEADER_LEN: usize = 12;
pub const TRAILER_LEN: usize = 8;

pub const TAG_META: [u8; 4] = *b"META";
pub const TAG_NUMS: [u8; 4] = *b"NUMS";
pub const TAG_IMGS: [u8; 4] = *b"IMGS";

/// Stored pose labels must have unit quaternions to this tolerance.
const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Episode = 1,
    Checkpoint = 2,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("truncated file: needed {needed} bytes at offset {offset}, have {available}")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("not a dataset container (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("wrong container kind {found}, expected {expected}")]
    Kind { found: u32, expected: u32 },
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("no training episodes to compute statistics from")]
    EmptyTrainSplit,
}

impl DatasetError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub tag: [u8; 4],
    pub payload: Vec<u8>,
}

pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn encode_container(kind: FileKind, chunks: &[Chunk]) -> Vec<u8> {
    let body: usize = chunks.iter().map(|c| CHUNK_HEADER_LEN + c.payload.len()).sum();
    let total = HEADER_LEN + body + TRAILER_LEN;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(kind as u32).to_le_bytes());
    out.extend_from_slice(&(total as u64).to_le_bytes());
    out.extend_from_slice(&(chunks.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for c in chunks {
        out.extend_from_slice(&c.tag);
        out.extend_from_slice(&(c.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&c.payload);
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    debug_assert_eq!(out.len(), total);
    out
}

/// Bounds-checked little-endian cursor.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let Some(end) = end else {
            return Err(DatasetError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.bytes.len().saturating_sub(self.pos),
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, DatasetError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, DatasetError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Parses and verifies a container. Checks run in the order: length, magic,
/// version, declared length, checksum, kind, chunk table.
pub fn decode_container(bytes: &[u8], expected: FileKind) -> Result<Vec<Chunk>, DatasetError> {
    let mut c = Cursor::new(bytes);
    let header = c.take(HEADER_LEN)?;
    if header[..8] != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let mut h = Cursor::new(&header[8..]);
    let version = h.u32()?;
    if version != FORMAT_VERSION {
        return Err(DatasetError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let kind = h.u32()?;
    let total = h.u64()?;
    let count = h.u32()?;
    if total > bytes.len() as u64 {
        return Err(DatasetError::Truncated {
            offset: bytes.len(),
            needed: (total - bytes.len() as u64) as usize,
            available: 0,
        });
    }
    if total < bytes.len() as u64 {
        return Err(DatasetError::Malformed(format!(
            "{} trailing bytes after the declared end",
            bytes.len() as u64 - total
        )));
    }
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(DatasetError::Truncated {
            offset: HEADER_LEN,
            needed: TRAILER_LEN,
            available: bytes.len() - HEADER_LEN,
        });
    }
    let split = bytes.len() - TRAILER_LEN;
    let stored = u64::from_le_bytes(bytes[split..].try_into().unwrap());
    let computed = checksum(&bytes[..split]);
    if stored != computed {
        return Err(DatasetError::Checksum { stored, computed });
    }
    if kind != expected as u32 {
        return Err(DatasetError::Kind {
            found: kind,
            expected: expected as u32,
        });
    }
    let mut body = Cursor::new(&bytes[HEADER_LEN..split]);
    let mut chunks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tag: [u8; 4] = body.take(4)?.try_into().unwrap();
        let len = body.u64()?;
        let len = usize::try_from(len).map_err(|_| DatasetError::Malformed("chunk length overflows".into()))?;
        let payload = body.take(len)?.to_vec();
        chunks.push(Chunk { tag, payload });
    }
    if body.remaining() != 0 {
        return Err(DatasetError::Malformed(format!("{} bytes after the last chunk", body.remaining())));
    }
    Ok(chunks)
}

pub fn find_chunk<'a>(chunks: &'a [Chunk], tag: &[u8; 4]) -> Option<&'a [u8]> {
    chunks.iter().find(|c| &c.tag == tag).map(|c| c.payload.as_slice())
}

fn tag_name(tag: &[u8; 4]) -> String {
    String::from_utf8_lossy(tag).into_owned()
}

fn require<'a>(chunks: &'a [Chunk], tag: &[u8; 4]) -> Result<&'a [u8], DatasetError> {
    find_chunk(chunks, tag).ok_or_else(|| DatasetError::Malformed(format!("missing {} chunk", tag_name(tag))))
}

fn quaternion_ok(a: &[f64]) -> bool {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt();
    (n - 1.0).abs() <= UNIT_TOLERANCE && a[0] >= 0.0
}

/// Checks the frame-level invariants of an episode, returning the first
/// violation with its frame index.
pub fn check_episode(ep: &Episode) -> Result<(), DatasetError> {
    let bad = |k: usize, msg: String| Err(DatasetError::Invalid(format!("frame {k}: {msg}")));
    if ep.meta.frame_count as usize != ep.frames.len() {
        return Err(DatasetError::Invalid(format!(
            "meta declares {} frames, episode has {}",
            ep.meta.frame_count,
            ep.frames.len()
        )));
    }
    let dims = ep.frames.first().and_then(|f| f.images.as_ref()).map(|s| (s.left.width, s.left.height));
    for (k, f) in ep.frames.iter().enumerate() {
        if f.timestamp != frame_time(k) {
            return bad(k, format!("timestamp {} breaks the 10 Hz rule (expected {})", f.timestamp, frame_time(k)));
        }
        if !f.all_finite() {
            return bad(k, "non-finite value".into());
        }
        if !quaternion_ok(&f.target) || !quaternion_ok(&f.target_world) || !quaternion_ok(&f.state[layout::STATE_POSE - layout::STATE..][..4]) {
            return bad(k, "pose quaternion not unit or not canonical".into());
        }
        let img_dims = f.images.as_ref().map(|s| (s.left.width, s.left.height));
        if img_dims != dims {
            return bad(k, "image presence or size differs from frame 0".into());
        }
        if let Some(s) = &f.images {
            for im in [&s.left, &s.right] {
                let n = im.pixel_count();
                if im.rgb.len() != 3 * n || im.depth.len() != n || im.semantic.len() != n || (im.width, im.height) != (s.left.width, s.left.height) {
                    return bad(k, "image buffer sizes inconsistent".into());
                }
            }
        }
    }
    Ok(())
}

/// Largest deviation between stored target labels and labels recomputed
/// from the stored world poses.
pub fn label_residual(frame: &FrameRecord) -> f64 {
    let mut t = [0.0; 7];
    t.copy_from_slice(&frame.target_world);
    let expected = target_in_robot_frame(&Pose::from_array(&t), &frame.robot_pose()).to_array();
    // q and -q are the same rotation
    let direct = expected.iter().zip(&frame.target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let flipped = expected
        .iter()
        .zip(&frame.target)
        .enumerate()
        .map(|(i, (a, b))| if i < 4 { (a + b).abs() } else { (a - b).abs() })
        .fold(0.0, f64::max);
    direct.min(flipped)
}

fn encode_images(frames: &[FrameRecord]) -> Option<Vec<u8>> {
    let first = frames.first()?.images.as_ref()?;
    let (w, h) = (first.left.width, first.left.height);
    let n = w * h;
    let mut out = Vec::with_capacity(16 + frames.len() * 2 * n * 8);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    for f in frames {
        let s = f.images.as_ref().expect("checked by check_episode");
        for im in [&s.left, &s.right] {
            out.extend_from_slice(&im.rgb);
            for d in &im.depth {
                out.extend_from_slice(&d.to_le_bytes());
            }
            out.extend_from_slice(&im.semantic);
        }
    }
    Some(out)
}

fn decode_images(payload: &[u8], frames: &mut [FrameRecord]) -> Result<(), DatasetError> {
    let mut c = Cursor::new(payload);
    let w = c.u32()? as usize;
    let h = c.u32()? as usize;
    let count = c.u32()? as usize;
    let eyes = c.u32()?;
    if count != frames.len() || eyes != 2 {
        return Err(DatasetError::Malformed(format!(
            "IMGS holds {count} frames x {eyes} views, expected {} x 2",
            frames.len()
        )));
    }
    let n = w.checked_mul(h).ok_or_else(|| DatasetError::Malformed("image size overflows".into()))?;
    let per_frame = n.checked_mul(2 * 8).ok_or_else(|| DatasetError::Malformed("image size overflows".into()))?;
    if c.remaining() != per_frame.saturating_mul(count) {
        return Err(DatasetError::Malformed("IMGS payload size does not match its header".into()));
    }
    let read = |c: &mut Cursor| -> Result<StoredImage, DatasetError> {
        let rgb = c.take(3 * n)?.to_vec();
        let mut depth = Vec::with_capacity(n);
        for _ in 0..n {
            depth.push(c.f32()?);
        }
        let semantic = c.take(n)?.to_vec();
        Ok(StoredImage { width: w, height: h, rgb, depth, semantic })
    };
    for f in frames.iter_mut() {
        let left = read(&mut c)?;
        let right = read(&mut c)?;
        f.images = Some(StoredStereo { left, right });
    }
    Ok(())
}

pub fn encode_episode(ep: &Episode) -> Result<Vec<u8>, DatasetError> {
    check_episode(ep)?;
    let meta = serde_json::to_vec(&ep.meta).map_err(|e| DatasetError::Invalid(e.to_string()))?;
    let mut nums = Vec::with_capacity(8 + ep.frames.len() * FRAME_STRIDE * 8);
    nums.extend_from_slice(&(ep.frames.len() as u32).to_le_bytes());
    nums.extend_from_slice(&(FRAME_STRIDE as u32).to_le_bytes());
    for f in &ep.frames {
        for v in f.to_numeric() {
            nums.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut chunks = vec![
        Chunk { tag: TAG_META, payload: meta },
        Chunk { tag: TAG_NUMS, payload: nums },
    ];
    if let Some(imgs) = encode_images(&ep.frames) {
        chunks.push(Chunk { tag: TAG_IMGS, payload: imgs });
    }
    Ok(encode_container(FileKind::Episode, &chunks))
}

/// Decodes an episode. With `images == false` the image chunk is skipped.
pub fn decode_episode_with(bytes: &[u8], images: bool) -> Result<Episode, DatasetError> {
    let chunks = decode_container(bytes, FileKind::Episode)?;
    let meta: EpisodeMeta = serde_json::from_slice(require(&chunks, &TAG_META)?)
        .map_err(|e| DatasetError::Malformed(format!("META: {e}")))?;
    let mut c = Cursor::new(require(&chunks, &TAG_NUMS)?);
    let count = c.u32()? as usize;
    let stride = c.u32()? as usize;
    if stride != FRAME_STRIDE {
        return Err(DatasetError::Malformed(format!("frame stride {stride}, expected {FRAME_STRIDE}")));
    }
    if c.remaining() != count.saturating_mul(stride * 8) {
        return Err(DatasetError::Malformed("NUMS payload size does not match its header".into()));
    }
    let mut frames = Vec::with_capacity(count);
    let mut row = [0.0; FRAME_STRIDE];
    for _ in 0..count {
        for v in row.iter_mut() {
            *v = c.f64()?;
        }
        frames.push(FrameRecord::from_numeric(&row));
    }
    if images {
        if let Some(p) = find_chunk(&chunks, &TAG_IMGS) {
            decode_images(p, &mut frames)?;
        }
    }
    Ok(Episode { meta, frames })
}

pub fn decode_episode(bytes: &[u8]) -> Result<Episode, DatasetError> {
    decode_episode_with(bytes, true)
}

pub fn write_episode(path: &Path, ep: &Episode) -> Result<(), DatasetError> {
    let bytes = encode_episode(ep)?;
    std::fs::write(path, bytes).map_err(|e| DatasetError::io(path, e))
}

pub fn read_episode(path: &Path) -> Result<Episode, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    decode_episode(&bytes)
}
