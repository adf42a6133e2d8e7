//! File formats: point clouds, trajectories and covariance tables.
//!
//! Point-cloud binary layout, little-endian:
//! ```text
//! magic  b"CLC1"
//! count  u64
//! flags  u8          bit 0: labels, bit 1: covariances
//! count × 3×f64      x y z
//! count × u8         labels (if flagged)
//! count × 6×f64      covariance xx xy xz yy yz zz (if flagged)
//! ```
//! The text variant holds one point per line: `x y z [label]`.
//!
//! Submap-set binary layout, little-endian:
//! ```text
//! magic   b"SMS1"
//! count   u32
//! count × {
//!   id u64, view u8 (0 ground, 1 aerial), has_time u8, time f64,
//!   crop_radius f64, origin 7×f64, body_in_submap 7×f64, cloud (CLC1)
//! }
//! ```
//! Poses are stored as `tx ty tz qx qy qz qw`.
//!
//! Odometry text: one increment per line,
//! `t_from t_to tx ty tz qx qy qz qw` then the 21 upper-triangular
//! covariance entries, with shortest round-trip float formatting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{Label, LabeledCloud, Point3, Pose6};
use crate::pipeline::OdometryStream;
use crate::sim::{OdomIncrement, Submap, View};

const CLOUD_MAGIC: &[u8; 4] = b"CLC1";
const FLAG_LABELS: u8 = 1;
const FLAG_COVS: u8 = 2;

pub fn write_cloud<W: Write>(cloud: &LabeledCloud, w: &mut W) -> Result<()> {
    cloud.validate()?;
    let mut flags = 0;
    if cloud.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if cloud.covariances.is_some() {
        flags |= FLAG_COVS;
    }
    w.write_all(CLOUD_MAGIC)?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    w.write_all(&[flags])?;
    for p in &cloud.points {
        for x in p.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    if let Some(labels) = &cloud.labels {
        let codes: Vec<u8> = labels.iter().map(|l| l.code()).collect();
        w.write_all(&codes)?;
    }
    if let Some(covs) = &cloud.covariances {
        for c in covs {
            for (i, j) in UPPER3 {
                w.write_all(&c[(i, j)].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

const UPPER3: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn f64_at(buf: &[u8], k: usize) -> f64 {
    f64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().unwrap())
}

pub fn read_cloud<R: Read>(r: &mut R) -> Result<LabeledCloud> {
    let cloud = read_cloud_body(r)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after point cloud".into()));
    }
    Ok(cloud)
}

/// One cloud from a stream that may continue after it.
fn read_cloud_body<R: Read>(r: &mut R) -> Result<LabeledCloud> {
    let mut head = [0u8; 13];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated point-cloud header".into()))?;
    if &head[..4] != CLOUD_MAGIC {
        return Err(Error::Format("not a CLC1 point cloud (bad magic)".into()));
    }
    let n = u64::from_le_bytes(head[4..12].try_into().unwrap()) as usize;
    let flags = head[12];
    if flags & !(FLAG_LABELS | FLAG_COVS) != 0 {
        return Err(Error::Format(format!("unknown point-cloud flags {flags:#x}")));
    }
    let truncated = |_| Error::Format(format!("point-cloud body truncated (expected {n} points)"));
    let mut buf = vec![0u8; n.checked_mul(24).ok_or_else(|| Error::Format("point count overflow".into()))?];
    r.read_exact(&mut buf).map_err(truncated)?;
    let points = (0..n)
        .map(|i| Point3::new(f64_at(&buf, 3 * i), f64_at(&buf, 3 * i + 1), f64_at(&buf, 3 * i + 2)))
        .collect();
    let labels = if flags & FLAG_LABELS != 0 {
        let mut codes = vec![0u8; n];
        r.read_exact(&mut codes).map_err(truncated)?;
        Some(codes.into_iter().map(Label::from_code).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let covariances = if flags & FLAG_COVS != 0 {
        let mut buf = vec![0u8; n * 48];
        r.read_exact(&mut buf).map_err(truncated)?;
        Some(
            (0..n)
                .map(|i| {
                    let mut m = Matrix3::zeros();
                    for (k, (a, b)) in UPPER3.iter().enumerate() {
                        let v = f64_at(&buf, 6 * i + k);
                        m[(*a, *b)] = v;
                        m[(*b, *a)] = v;
                    }
                    m
                })
                .collect(),
        )
    } else {
        None
    };
    let cloud = LabeledCloud {
        points,
        labels,
        covariances,
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn write_cloud_text<W: Write>(cloud: &LabeledCloud, w: &mut W) -> Result<()> {
    for (i, p) in cloud.points.iter().enumerate() {
        match cloud.label(i) {
            Some(l) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, l.code())?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

pub fn read_cloud_text<R: BufRead>(r: R) -> Result<LabeledCloud> {
    let mut cloud = LabeledCloud::default();
    let mut labelled = None;
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("line {}: expected `x y z [label]`", ln + 1));
        if f.len() != 3 && f.len() != 4 {
            return Err(bad());
        }
        if *labelled.get_or_insert(f.len() == 4) != (f.len() == 4) {
            return Err(Error::Format(format!("line {}: label column present on some lines only", ln + 1)));
        }
        let x: Vec<f64> = f[..3].iter().map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let label = match f.get(3) {
            Some(s) => Some(Label::from_code(s.parse().map_err(|_| bad())?)?),
            None => None,
        };
        cloud.push(Point3::new(x[0], x[1], x[2]), label);
    }
    Ok(cloud)
}

/// Reads either format, choosing by the magic bytes.
pub fn load_cloud(path: &Path) -> Result<LabeledCloud> {
    let mut r = BufReader::new(File::open(path).map_err(|e| with_path(e, path))?);
    let head = r.fill_buf()?;
    if head.starts_with(CLOUD_MAGIC) {
        read_cloud(&mut r)
    } else {
        read_cloud_text(r)
    }
}

pub fn save_cloud(path: &Path, cloud: &LabeledCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?);
    write_cloud(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

fn with_path(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Timestamped pose, one per trajectory line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped {
    pub time: f64,
    pub pose: Pose6,
}

/// `timestamp tx ty tz qx qy qz qw` per line.
pub fn write_trajectory<W: Write>(traj: &[Stamped], w: &mut W) -> Result<()> {
    for s in traj {
        let t = s.pose.translation();
        let q = s.pose.quat_xyzw();
        writeln!(
            w,
            "{:.6} {:.9} {:.9} {:.9} {:.12} {:.12} {:.12} {:.12}",
            s.time, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(r: R) -> Result<Vec<Stamped>> {
    let mut out = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("trajectory line {}: non-numeric field", ln + 1)))?;
        if v.len() != 8 {
            return Err(Error::Format(format!(
                "trajectory line {}: expected 8 fields, got {}",
                ln + 1,
                v.len()
            )));
        }
        let pose = Pose6::from_xyzw([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]])
            .map_err(|e| Error::Format(format!("trajectory line {}: {e}", ln + 1)))?;
        out.push(Stamped { time: v[0], pose });
    }
    Ok(out)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<Stamped>> {
    read_trajectory(BufReader::new(File::open(path).map_err(|e| with_path(e, path))?))
}

pub fn save_trajectory(path: &Path, traj: &[Stamped]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?);
    write_trajectory(traj, &mut w)?;
    w.flush()?;
    Ok(())
}

/// `id c00 c01 .. c55` with the 21 upper-triangular entries of each 6×6 matrix.
pub fn write_covariance_table<W: Write>(rows: &[(u64, nalgebra::Matrix6<f64>)], w: &mut W) -> Result<()> {
    let mut head = vec!["node".to_string()];
    for i in 0..6 {
        for j in i..6 {
            head.push(format!("c{i}{j}"));
        }
    }
    writeln!(w, "{}", head.join(","))?;
    for (id, m) in rows {
        let mut line = id.to_string();
        for i in 0..6 {
            for j in i..6 {
                line += &format!(",{:.9e}", m[(i, j)]);
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

const SUBMAP_MAGIC: &[u8; 4] = b"SMS1";

fn pose_values(p: &Pose6) -> [f64; 7] {
    let t = p.translation();
    let q = p.quat_xyzw();
    [t.x, t.y, t.z, q[0], q[1], q[2], q[3]]
}

fn pose_from(v: &[f64]) -> Result<Pose6> {
    Pose6::from_xyzw([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
}

pub fn write_submaps<W: Write>(submaps: &[Submap], w: &mut W) -> Result<()> {
    w.write_all(SUBMAP_MAGIC)?;
    w.write_all(&(submaps.len() as u32).to_le_bytes())?;
    for s in submaps {
        w.write_all(&s.id.to_le_bytes())?;
        let view = match s.view {
            View::Ground => 0u8,
            View::Aerial => 1,
        };
        w.write_all(&[view, s.timestamp.is_some() as u8])?;
        let mut vals = vec![s.timestamp.unwrap_or(0.0), s.crop_radius];
        vals.extend(pose_values(&s.origin));
        vals.extend(pose_values(&s.body_in_submap));
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
        write_cloud(&s.cloud, w)?;
    }
    Ok(())
}

pub fn read_submaps<R: Read>(r: &mut R) -> Result<Vec<Submap>> {
    let truncated = |_| Error::Format("submap set truncated".into());
    let mut head = [0u8; 8];
    r.read_exact(&mut head).map_err(truncated)?;
    if &head[..4] != SUBMAP_MAGIC {
        return Err(Error::Format("not an SMS1 submap set (bad magic)".into()));
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let mut meta = [0u8; 8 + 2 + 16 * 8];
        r.read_exact(&mut meta).map_err(truncated)?;
        let id = u64::from_le_bytes(meta[..8].try_into().unwrap());
        let view = match meta[8] {
            0 => View::Ground,
            1 => View::Aerial,
            v => return Err(Error::Format(format!("submap {id}: unknown view code {v}"))),
        };
        let vals: Vec<f64> = (0..16).map(|k| f64_at(&meta[10..], k)).collect();
        let bad = |e: Error| Error::Format(format!("submap {id}: {e}"));
        out.push(Submap {
            id,
            view,
            timestamp: (meta[9] != 0).then_some(vals[0]),
            crop_radius: vals[1],
            origin: pose_from(&vals[2..9]).map_err(bad)?,
            body_in_submap: pose_from(&vals[9..16]).map_err(bad)?,
            cloud: read_cloud_body(r)?,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after submap set".into()));
    }
    Ok(out)
}

pub fn load_submaps(path: &Path) -> Result<Vec<Submap>> {
    read_submaps(&mut BufReader::new(File::open(path).map_err(|e| with_path(e, path))?))
}

pub fn save_submaps(path: &Path, submaps: &[Submap]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?);
    write_submaps(submaps, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_odometry<W: Write>(odom: &OdometryStream, w: &mut W) -> Result<()> {
    if odom.times.len() != odom.increments.len() + 1 {
        return Err(Error::InvalidInput("odometry needs one more time than increments".into()));
    }
    for (k, inc) in odom.increments.iter().enumerate() {
        let mut line = format!("{} {}", odom.times[k], odom.times[k + 1]);
        for v in pose_values(&inc.delta) {
            line += &format!(" {v}");
        }
        for i in 0..6 {
            for j in i..6 {
                line += &format!(" {}", inc.covariance[(i, j)]);
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_odometry<R: BufRead>(r: R) -> Result<OdometryStream> {
    let mut out = OdometryStream::default();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| Error::Format(format!("odometry line {}: {m}", ln + 1));
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("non-numeric field".into()))?;
        if v.len() != 30 {
            return Err(bad(format!("expected 30 fields, got {}", v.len())));
        }
        match out.times.last() {
            None => out.times.push(v[0]),
            Some(&t) if t == v[0] => {}
            Some(_) => return Err(bad("start time does not continue the previous increment".into())),
        }
        out.times.push(v[1]);
        let mut covariance = nalgebra::Matrix6::zeros();
        let mut k = 9;
        for i in 0..6 {
            for j in i..6 {
                covariance[(i, j)] = v[k];
                covariance[(j, i)] = v[k];
                k += 1;
            }
        }
        out.increments.push(OdomIncrement {
            delta: pose_from(&v[2..9]).map_err(|e| bad(e.to_string()))?,
            covariance,
        });
    }
    Ok(out)
}

pub fn load_odometry(path: &Path) -> Result<OdometryStream> {
    read_odometry(BufReader::new(File::open(path).map_err(|e| with_path(e, path))?))
}

pub fn save_odometry(path: &Path, odom: &OdometryStream) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| with_path(e, path))?);
    write_odometry(odom, &mut w)?;
    w.flush()?;
    Ok(())
}
