//! Trajectory files and split manifests.
//!
//! Binary layout (all little-endian), 96-byte header (72 bytes used, zero
//! padded to a 32-byte multiple):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "LGRT"
//!      4     4  version (u32)
//!      8     4  n_particles (u32)
//!     12     4  n_frames (u32)
//!     16     4  dims (u32, always 3)
//!     20     8  dt_stored (f64)
//!     28    24  box extents (3 × f64)
//!     52     8  particle mass (f64)
//!     60     4  case id (u32: 0 = TGV, 1 = RPF)
//!     64     8  force f0 (f64)
//!     72    24  zero padding
//! ```
//!
//! followed by `n_frames · n_particles · 3` positions as f32, frame-major,
//! then particle-major, then xyz. Velocities are never stored; readers
//! reconstruct them as minimum-image finite differences, which for the
//! solver's data recovers the per-step transport displacement.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geom::{PeriodicBox, Vec3};
use crate::sph::SimCase;
use crate::state::{Frame, Trajectory};

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"LGRT";
pub const TRAJECTORY_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 96;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}; not a trajectory file")]
    BadMagic { found: [u8; 4] },
    #[error("trajectory format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("malformed header: {reason}")]
    BadHeader { reason: String },
    #[error("insufficient data for splits: {reason}")]
    InsufficientData { reason: String },
    #[error("manifest line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },
}

/// Flow case tag stored in the file header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseId {
    TaylorGreen = 0,
    ReversePoiseuille = 1,
}

impl CaseId {
    pub fn as_u32(self) -> u32 {
        self as u32
    }

    pub fn from_u32(v: u32) -> Option<CaseId> {
        match v {
            0 => Some(CaseId::TaylorGreen),
            1 => Some(CaseId::ReversePoiseuille),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::TaylorGreen => "tgv",
            CaseId::ReversePoiseuille => "rpf",
        }
    }
}

impl From<SimCase> for CaseId {
    fn from(case: SimCase) -> CaseId {
        match case {
            SimCase::TaylorGreen { .. } => CaseId::TaylorGreen,
            SimCase::ReversePoiseuille { .. } => CaseId::ReversePoiseuille,
        }
    }
}

/// Decoded file header.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryFileHeader {
    pub n_particles: u32,
    pub n_frames: u32,
    pub dims: u32,
    pub dt_stored: f64,
    pub extents: [f64; 3],
    pub mass: f64,
    pub case: CaseId,
    pub force_f0: f64,
}

impl TrajectoryFileHeader {
    fn payload_len(&self) -> u64 {
        self.n_particles as u64 * self.n_frames as u64 * self.dims as u64 * 4
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&TRAJECTORY_MAGIC);
        buf[4..8].copy_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
        buf[8..12].copy_from_slice(&self.n_particles.to_le_bytes());
        buf[12..16].copy_from_slice(&self.n_frames.to_le_bytes());
        buf[16..20].copy_from_slice(&self.dims.to_le_bytes());
        buf[20..28].copy_from_slice(&self.dt_stored.to_le_bytes());
        buf[28..36].copy_from_slice(&self.extents[0].to_le_bytes());
        buf[36..44].copy_from_slice(&self.extents[1].to_le_bytes());
        buf[44..52].copy_from_slice(&self.extents[2].to_le_bytes());
        buf[52..60].copy_from_slice(&self.mass.to_le_bytes());
        buf[60..64].copy_from_slice(&self.case.as_u32().to_le_bytes());
        buf[64..72].copy_from_slice(&self.force_f0.to_le_bytes());
        buf
    }

    fn decode(buf: &[u8; HEADER_LEN]) -> Result<Self, DatasetError> {
        let magic: [u8; 4] = buf[0..4].try_into().unwrap();
        if magic != TRAJECTORY_MAGIC {
            return Err(DatasetError::BadMagic { found: magic });
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != TRAJECTORY_VERSION {
            return Err(DatasetError::VersionMismatch { found: version, expected: TRAJECTORY_VERSION });
        }
        let dims = u32_at(16);
        if dims != 3 {
            return Err(DatasetError::BadHeader { reason: format!("dims = {dims}, expected 3") });
        }
        let case = CaseId::from_u32(u32_at(60)).ok_or_else(|| DatasetError::BadHeader {
            reason: format!("unknown case id {}", u32_at(60)),
        })?;
        let header = TrajectoryFileHeader {
            n_particles: u32_at(8),
            n_frames: u32_at(12),
            dims,
            dt_stored: f64_at(20),
            extents: [f64_at(28), f64_at(36), f64_at(44)],
            mass: f64_at(52),
            case,
            force_f0: f64_at(64),
        };
        let bad = |v: f64| v.is_nan() || v <= 0.0;
        if bad(header.dt_stored) || header.extents.iter().any(|&e| bad(e)) {
            return Err(DatasetError::BadHeader {
                reason: format!("non-positive dt or extents: {header:?}"),
            });
        }
        Ok(header)
    }
}

/// Writes a trajectory with its case metadata.
///
/// # Panics
/// Panics if the trajectory has no frames or non-uniform masses (solver
/// output always has both).
pub fn write_trajectory(
    traj: &Trajectory,
    case: CaseId,
    force_f0: f64,
    path: &Path,
) -> Result<(), DatasetError> {
    assert!(!traj.frames.is_empty(), "refusing to write an empty trajectory");
    let mass = traj.masses[0];
    assert!(
        traj.masses.iter().all(|&m| m == mass),
        "file format stores a single uniform mass"
    );
    let e = traj.domain.extents();
    let header = TrajectoryFileHeader {
        n_particles: traj.n_particles() as u32,
        n_frames: traj.n_frames() as u32,
        dims: 3,
        dt_stored: traj.dt,
        extents: [e.x, e.y, e.z],
        mass,
        case,
        force_f0,
    };

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header.encode())?;
    for frame in &traj.frames {
        for p in &frame.positions {
            w.write_all(&(p.x as f32).to_le_bytes())?;
            w.write_all(&(p.y as f32).to_le_bytes())?;
            w.write_all(&(p.z as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads just the header (cheap shape inspection).
pub fn read_header(path: &Path) -> Result<TrajectoryFileHeader, DatasetError> {
    let mut f = File::open(path)?;
    let mut buf = [0u8; HEADER_LEN];
    f.read_exact(&mut buf).map_err(|e| truncation_error(path, e))?;
    TrajectoryFileHeader::decode(&buf)
}

fn truncation_error(path: &Path, e: std::io::Error) -> DatasetError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        let found = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        DatasetError::Truncated { expected: HEADER_LEN as u64, found }
    } else {
        DatasetError::Io(e)
    }
}

/// Reads a trajectory, reconstructing velocities by minimum-image finite
/// differences: `v^t = (p^t ⊖ p^{t−1}) / dt_stored`, with frame 0 copying
/// frame 1 (zero for single-frame files).
pub fn read_trajectory(path: &Path) -> Result<(Trajectory, TrajectoryFileHeader), DatasetError> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf).map_err(|e| truncation_error(path, e))?;
    let header = TrajectoryFileHeader::decode(&buf)?;

    let expected = HEADER_LEN as u64 + header.payload_len();
    if file_len != expected {
        return Err(DatasetError::Truncated { expected, found: file_len });
    }

    let domain = PeriodicBox::new(header.extents[0], header.extents[1], header.extents[2]);
    let n = header.n_particles as usize;
    let t = header.n_frames as usize;
    let mut payload = vec![0u8; n * 3 * 4];
    let mut frames: Vec<Frame> = Vec::with_capacity(t);
    for k in 0..t {
        r.read_exact(&mut payload)?;
        let mut positions = Vec::with_capacity(n);
        for i in 0..n {
            let f32_at = |o: usize| f32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
            let p = Vec3::new(
                f32_at(12 * i) as f64,
                f32_at(12 * i + 4) as f64,
                f32_at(12 * i + 8) as f64,
            );
            // f32 rounding can push a coordinate onto the upper box face.
            positions.push(domain.wrap(p));
        }
        let velocities = if k == 0 {
            vec![Vec3::ZERO; n]
        } else {
            let prev = &frames[k - 1].positions;
            positions
                .iter()
                .zip(prev)
                .map(|(&p, &q)| domain.min_image(p, q) / header.dt_stored)
                .collect()
        };
        frames.push(Frame { time: (k + 1) as f64 * header.dt_stored, positions, velocities });
    }
    if t >= 2 {
        frames[0].velocities = frames[1].velocities.clone();
    }

    let traj = Trajectory { domain, dt: header.dt_stored, masses: vec![header.mass; n], frames };
    Ok((traj, header))
}

/// Dataset split names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One manifest line: a half-open frame range of one file.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitEntry {
    pub split: Split,
    pub file: String,
    pub start: usize,
    pub end: usize,
}

/// The train/valid/test assignment over trajectory files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitManifest {
    pub entries: Vec<SplitEntry>,
}

impl SplitManifest {
    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &SplitEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Checks that ranges are well-formed and non-overlapping per file.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut ranges: Vec<(&str, usize, usize)> =
            self.entries.iter().map(|e| (e.file.as_str(), e.start, e.end)).collect();
        ranges.sort();
        for w in ranges.windows(2) {
            if w[0].0 == w[1].0 && w[1].1 < w[0].2 {
                return Err(DatasetError::InsufficientData {
                    reason: format!("overlapping ranges in {}", w[0].0),
                });
            }
        }
        for e in &self.entries {
            if e.start >= e.end {
                return Err(DatasetError::InsufficientData {
                    reason: format!("empty range [{}, {}) in {}", e.start, e.end, e.file),
                });
            }
        }
        Ok(())
    }

    /// Writes the flat `split file start end` text format.
    pub fn write(&self, path: &Path) -> Result<(), DatasetError> {
        self.validate()?;
        let mut w = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            writeln!(w, "{} {} {} {}", e.split.as_str(), e.file, e.start, e.end)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<SplitManifest, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(DatasetError::ManifestParse {
                    line: idx + 1,
                    reason: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let split = Split::parse(fields[0]).ok_or_else(|| DatasetError::ManifestParse {
                line: idx + 1,
                reason: format!("unknown split {:?}", fields[0]),
            })?;
            let parse_idx = |s: &str| {
                s.parse::<usize>().map_err(|e| DatasetError::ManifestParse {
                    line: idx + 1,
                    reason: format!("bad frame index {s:?}: {e}"),
                })
            };
            entries.push(SplitEntry {
                split,
                file: fields[1].to_string(),
                start: parse_idx(fields[2])?,
                end: parse_idx(fields[3])?,
            });
        }
        let manifest = SplitManifest { entries };
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Builds the canonical split assignment from `(file name, frame count)`
/// pairs, in the order given.
///
/// TGV: exactly 12 whole-trajectory files split 8/2/2. RPF: exactly one
/// file with at least 12000 frames, split into the contiguous frame ranges
/// `[0, 8000) / [8000, 10000) / [10000, 12000)`.
pub fn make_splits(case: CaseId, files: &[(String, usize)]) -> Result<SplitManifest, DatasetError> {
    match case {
        CaseId::TaylorGreen => {
            if files.len() != 12 {
                return Err(DatasetError::InsufficientData {
                    reason: format!("TGV split needs exactly 12 trajectories, got {}", files.len()),
                });
            }
            let entries = files
                .iter()
                .enumerate()
                .map(|(i, (file, n_frames))| SplitEntry {
                    split: match i {
                        0..=7 => Split::Train,
                        8 | 9 => Split::Valid,
                        _ => Split::Test,
                    },
                    file: file.clone(),
                    start: 0,
                    end: *n_frames,
                })
                .collect();
            let manifest = SplitManifest { entries };
            manifest.validate()?;
            Ok(manifest)
        }
        CaseId::ReversePoiseuille => {
            if files.len() != 1 {
                return Err(DatasetError::InsufficientData {
                    reason: format!("RPF split expects a single long trajectory, got {}", files.len()),
                });
            }
            let (file, n_frames) = &files[0];
            if *n_frames < 12000 {
                return Err(DatasetError::InsufficientData {
                    reason: format!("RPF split needs ≥ 12000 frames, got {n_frames}"),
                });
            }
            let ranges = [
                (Split::Train, 0usize, 8000usize),
                (Split::Valid, 8000, 10000),
                (Split::Test, 10000, 12000),
            ];
            Ok(SplitManifest {
                entries: ranges
                    .into_iter()
                    .map(|(split, start, end)| SplitEntry { split, file: file.clone(), start, end })
                    .collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::TempDir;

    fn synthetic_trajectory(n: usize, t: usize) -> Trajectory {
        let domain = PeriodicBox::cube(1.0);
        let dt = 0.002;
        let frames = (0..t)
            .map(|k| {
                let positions: Vec<Vec3> = (0..n)
                    .map(|i| {
                        domain.wrap(Vec3::new(
                            0.1 * i as f64 + 0.03 * k as f64,
                            0.37 * i as f64,
                            0.71 * i as f64 + 0.001 * k as f64,
                        ))
                    })
                    .collect();
                Frame { time: k as f64 * dt, positions, velocities: vec![Vec3::ZERO; n] }
            })
            .collect();
        Trajectory { domain, dt, masses: vec![0.125e-3; n], frames }
    }

    #[test]
    fn roundtrip_preserves_positions_to_f32() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.lgrt");
        let traj = synthetic_trajectory(7, 5);
        write_trajectory(&traj, CaseId::TaylorGreen, 0.0, &path).unwrap();

        let (back, header) = read_trajectory(&path).unwrap();
        assert_eq!(header.n_particles, 7);
        assert_eq!(header.n_frames, 5);
        assert_eq!(header.case, CaseId::TaylorGreen);
        assert_relative_eq!(header.dt_stored, 0.002);
        for (f, g) in traj.frames.iter().zip(&back.frames) {
            for (p, q) in f.positions.iter().zip(&g.positions) {
                assert!((*p - *q).norm() < 1.2e-7 * (1.0 + p.norm()));
            }
        }
        back.validate().unwrap();
    }

    #[test]
    fn serialization_is_deterministic() {
        let dir = TempDir::new().unwrap();
        let a = dir.path().join("a.lgrt");
        let b = dir.path().join("b.lgrt");
        let traj = synthetic_trajectory(5, 4);
        write_trajectory(&traj, CaseId::ReversePoiseuille, 1.0, &a).unwrap();
        write_trajectory(&traj, CaseId::ReversePoiseuille, 1.0, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn file_size_and_magic() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.lgrt");
        let traj = synthetic_trajectory(3, 2);
        write_trajectory(&traj, CaseId::TaylorGreen, 0.0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 3 * 2 * 3);
        assert_eq!(&bytes[0..4], b"LGRT");
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("junk.lgrt");
        std::fs::write(&path, b"JUNKxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(read_trajectory(&path), Err(DatasetError::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.lgrt");
        let traj = synthetic_trajectory(2, 2);
        write_trajectory(&traj, CaseId::TaylorGreen, 0.0, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_trajectory(&path),
            Err(DatasetError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.lgrt");
        let traj = synthetic_trajectory(4, 3);
        write_trajectory(&traj, CaseId::TaylorGreen, 0.0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_trajectory(&path), Err(DatasetError::Truncated { .. })));
    }

    #[test]
    fn velocity_reconstruction_wraps_boundary_crossings() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.lgrt");
        let domain = PeriodicBox::cube(1.0);
        // One particle crossing the x boundary: 0.99 → 0.01.
        let frames = vec![
            Frame { time: 0.0, positions: vec![Vec3::new(0.99, 0.5, 0.5)], velocities: vec![Vec3::ZERO] },
            Frame { time: 0.1, positions: vec![Vec3::new(0.01, 0.5, 0.5)], velocities: vec![Vec3::ZERO] },
        ];
        let traj = Trajectory { domain, dt: 0.1, masses: vec![1.0], frames };
        write_trajectory(&traj, CaseId::TaylorGreen, 0.0, &path).unwrap();
        let (back, _) = read_trajectory(&path).unwrap();
        let v = back.frames[1].velocities[0];
        assert_relative_eq!(v.x, 0.2, max_relative = 1e-5);
        assert_eq!(back.frames[0].velocities[0], v, "frame-0 edge convention");
    }

    #[test]
    fn stationary_particles_have_zero_velocity() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("t.lgrt");
        let domain = PeriodicBox::cube(1.0);
        let frame = Frame {
            time: 0.0,
            positions: vec![Vec3::new(0.25, 0.5, 0.75)],
            velocities: vec![Vec3::ZERO],
        };
        let traj = Trajectory { domain, dt: 0.1, masses: vec![1.0], frames: vec![frame; 4] };
        write_trajectory(&traj, CaseId::TaylorGreen, 0.0, &path).unwrap();
        let (back, _) = read_trajectory(&path).unwrap();
        for f in &back.frames {
            assert_eq!(f.velocities[0], Vec3::ZERO);
        }
    }

    #[test]
    fn tgv_splits_are_8_2_2() {
        let files: Vec<(String, usize)> =
            (0..12).map(|i| (format!("tgv_{i:02}.lgrt"), 1000)).collect();
        let manifest = make_splits(CaseId::TaylorGreen, &files).unwrap();
        assert_eq!(manifest.entries_for(Split::Train).count(), 8);
        assert_eq!(manifest.entries_for(Split::Valid).count(), 2);
        assert_eq!(manifest.entries_for(Split::Test).count(), 2);
        assert!(manifest.entries.iter().all(|e| e.start == 0 && e.end == 1000));
    }

    #[test]
    fn tgv_split_needs_twelve_files() {
        let files: Vec<(String, usize)> =
            (0..11).map(|i| (format!("tgv_{i:02}.lgrt"), 1000)).collect();
        assert!(matches!(
            make_splits(CaseId::TaylorGreen, &files),
            Err(DatasetError::InsufficientData { .. })
        ));
    }

    #[test]
    fn rpf_split_ranges() {
        let files = vec![("rpf.lgrt".to_string(), 12000)];
        let manifest = make_splits(CaseId::ReversePoiseuille, &files).unwrap();
        let test: Vec<_> = manifest.entries_for(Split::Test).collect();
        assert_eq!(test.len(), 1);
        assert_eq!((test[0].start, test[0].end), (10000, 12000));
        let train: Vec<_> = manifest.entries_for(Split::Train).collect();
        assert_eq!((train[0].start, train[0].end), (0, 8000));
    }

    #[test]
    fn rpf_split_needs_12000_frames() {
        let files = vec![("rpf.lgrt".to_string(), 11999)];
        assert!(matches!(
            make_splits(CaseId::ReversePoiseuille, &files),
            Err(DatasetError::InsufficientData { .. })
        ));
    }

    #[test]
    fn manifest_roundtrip_and_parse_errors() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("splits.txt");
        let files: Vec<(String, usize)> =
            (0..12).map(|i| (format!("tgv_{i:02}.lgrt"), 50)).collect();
        let manifest = make_splits(CaseId::TaylorGreen, &files).unwrap();
        manifest.write(&path).unwrap();
        let back = SplitManifest::read(&path).unwrap();
        assert_eq!(manifest, back);

        std::fs::write(&path, "train file.lgrt 0\n").unwrap();
        assert!(matches!(
            SplitManifest::read(&path),
            Err(DatasetError::ManifestParse { line: 1, .. })
        ));
        std::fs::write(&path, "weird file.lgrt 0 10\n").unwrap();
        assert!(matches!(
            SplitManifest::read(&path),
            Err(DatasetError::ManifestParse { line: 1, .. })
        ));
    }
}
