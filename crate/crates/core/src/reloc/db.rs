//! Aerial descriptor database and its binary file.
//!
//! Layout, little-endian:
//! ```text
//! magic  b"ALDB"      4 bytes
//! version u32         currently 1
//! count   u32         number of entries
//! global  u32         global descriptor length
//! local   u32         local descriptor length
//! count × { id u64, centroid 3×f64, global f64×global }
//! count × { m u32, m × { xyz 3×f64, uncertainty f64, flag u8, [f64×local if flag = 1] } }
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::semantics::KeypointSet;

use super::descriptors::descriptor_distance;

const MAGIC: &[u8; 4] = b"ALDB";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DbEntry {
    pub id: u64,
    /// Submap centroid in the map frame.
    pub centroid: Point3,
    pub global: Vec<f64>,
    pub keypoints: KeypointSet,
    pub descriptors: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorDb {
    pub entries: Vec<DbEntry>,
}

impl DescriptorDb {
    pub fn new(entries: Vec<DbEntry>) -> Result<Self> {
        let mut ids: Vec<u64> = entries.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate submap id in descriptor database".into()));
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&DbEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn dims(&self) -> (usize, usize) {
        let g = self.entries.first().map_or(0, |e| e.global.len());
        let l = self
            .entries
            .iter()
            .flat_map(|e| e.descriptors.iter().flatten())
            .map(|d| d.len())
            .next()
            .unwrap_or(0);
        (g, l)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let (g, l) = self.dims();
        w.write_all(MAGIC)?;
        for v in [VERSION, self.len() as u32, g as u32, l as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let f = |w: &mut W, x: f64| w.write_all(&x.to_le_bytes());
        for e in &self.entries {
            if e.global.len() != g {
                return Err(Error::InvalidInput("inconsistent global descriptor length".into()));
            }
            w.write_all(&e.id.to_le_bytes())?;
            for x in e.centroid.iter().chain(&e.global) {
                f(w, *x)?;
            }
        }
        for e in &self.entries {
            w.write_all(&(e.keypoints.len() as u32).to_le_bytes())?;
            for ((p, u), d) in e.keypoints.coords.iter().zip(&e.keypoints.uncertainty).zip(&e.descriptors) {
                for x in p.iter() {
                    f(w, *x)?;
                }
                f(w, *u)?;
                match d {
                    Some(d) if d.len() == l => {
                        w.write_all(&[1])?;
                        for x in d {
                            f(w, *x)?;
                        }
                    }
                    Some(_) => return Err(Error::InvalidInput("inconsistent local descriptor length".into())),
                    None => w.write_all(&[0])?,
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a descriptor database (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported database version {version}")));
        }
        let n = read_u32(r)? as usize;
        let g = read_u32(r)? as usize;
        let l = read_u32(r)? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            let id = u64::from_le_bytes(b);
            let centroid = Point3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?);
            let global = (0..g).map(|_| read_f64(r)).collect::<Result<_>>()?;
            entries.push(DbEntry {
                id,
                centroid,
                global,
                keypoints: KeypointSet::default(),
                descriptors: Vec::new(),
            });
        }
        for e in entries.iter_mut() {
            let m = read_u32(r)? as usize;
            for _ in 0..m {
                e.keypoints.coords.push(Point3::new(read_f64(r)?, read_f64(r)?, read_f64(r)?));
                e.keypoints.uncertainty.push(read_f64(r)?);
                let mut flag = [0u8];
                r.read_exact(&mut flag)?;
                e.descriptors.push(match flag[0] {
                    0 => None,
                    1 => Some((0..l).map(|_| read_f64(r)).collect::<Result<_>>()?),
                    x => return Err(Error::Format(format!("bad descriptor flag {x}"))),
                });
            }
        }
        Self::new(entries)
    }

    /// One-paragraph human summary.
    pub fn summary(&self) -> String {
        let (g, l) = self.dims();
        let kps: usize = self.entries.iter().map(|e| e.keypoints.len()).sum();
        let described: usize = self.entries.iter().map(|e| e.descriptors.iter().flatten().count()).sum();
        let mut s = format!(
            "entries: {}\nglobal descriptor length: {g}\nlocal descriptor length: {l}\nkeypoints: {kps} ({described} described)\n",
            self.len()
        );
        if let (Some(lo), Some(hi)) = (
            self.entries.iter().map(|e| e.centroid).reduce(|a, b| a.inf(&b)),
            self.entries.iter().map(|e| e.centroid).reduce(|a, b| a.sup(&b)),
        ) {
            s += &format!(
                "centroid extent: x [{:.2}, {:.2}] y [{:.2}, {:.2}]\n",
                lo.x, hi.x, lo.y, hi.y
            );
        }
        s
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// The `k` nearest entries by Euclidean descriptor distance, ties by id.
pub fn retrieve_topk(query: &[f64], db: &DescriptorDb, k: usize) -> Vec<(u64, f64)> {
    let mut all: Vec<(u64, f64)> = db
        .entries
        .iter()
        .map(|e| (e.id, descriptor_distance(query, &e.global)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
