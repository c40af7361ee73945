//! `fields.ccf`: a little-endian binary container for one field trajectory.

use std::io::{Read, Write};

use super::DatastoreError;
use crate::solver::{FieldTrajectory, Frame};
use crate::vec3;

pub const CCF_MAGIC: &[u8; 4] = b"CCF1";
pub const CCF_VERSION: u32 = 1;
pub const CCF_HEADER_BYTES: u64 = 28;

/// Exact size in bytes of a container with the given counts.
pub fn ccf_size(frames: u64, nodes: u64, elements: u64) -> u64 {
    CCF_HEADER_BYTES + frames * (9 * nodes + 3 * elements) * 8 + 4 * (nodes + 2 * elements)
}

pub fn encode_ccf(traj: &FieldTrajectory) -> Vec<u8> {
    let (n, e) = (traj.n_nodes(), traj.n_elements());
    let mut buf = Vec::with_capacity(ccf_size(traj.frames.len() as u64, n as u64, e as u64) as usize);
    buf.extend_from_slice(CCF_MAGIC);
    for v in [CCF_VERSION, traj.frames.len() as u32, n as u32, e as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&traj.dt_anim.to_le_bytes());
    let mut put = |x: f64| buf.extend_from_slice(&x.to_le_bytes());
    for f in &traj.frames {
        for (x, u) in traj.x0.iter().zip(&f.u) {
            vec3::add(*x, *u).iter().for_each(|c| put(*c));
        }
        f.u.iter().flatten().for_each(|c| put(*c));
        f.v.iter().flatten().for_each(|c| put(*c));
        f.stress.iter().for_each(|c| put(*c));
        f.eps_p.iter().for_each(|c| put(*c));
        f.eroded.iter().for_each(|&c| put(if c { 1.0 } else { 0.0 }));
    }
    for ids in [&traj.node_ids, &traj.element_ids, &traj.part_ids] {
        for id in ids.iter() {
            buf.extend_from_slice(&id.to_le_bytes());
        }
    }
    buf
}

pub fn write_ccf(traj: &FieldTrajectory, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&encode_ccf(traj))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], DatastoreError> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, DatastoreError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, DatastoreError> {
        let at = self.pos;
        let x = f64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        if !x.is_finite() {
            return Err(corrupt(at, format!("non-finite {what}")));
        }
        Ok(x)
    }

    fn vecs(&mut self, n: usize, what: &str) -> Result<Vec<[f64; 3]>, DatastoreError> {
        (0..n).map(|_| Ok([self.f64(what)?, self.f64(what)?, self.f64(what)?])).collect()
    }

    fn scalars(&mut self, n: usize, what: &str) -> Result<Vec<f64>, DatastoreError> {
        (0..n).map(|_| self.f64(what)).collect()
    }
}

fn corrupt(offset: usize, reason: String) -> DatastoreError {
    DatastoreError::Corrupt { offset: offset as u64, reason }
}

pub fn decode_ccf(buf: &[u8]) -> Result<FieldTrajectory, DatastoreError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic")? != CCF_MAGIC {
        return Err(corrupt(0, "bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != CCF_VERSION {
        return Err(corrupt(4, format!("unsupported version {version}")));
    }
    let frames = c.u32("frame count")? as usize;
    let n = c.u32("node count")? as usize;
    let e = c.u32("element count")? as usize;
    let dt_anim = c.f64("dt_anim")?;
    let expect = ccf_size(frames as u64, n as u64, e as u64);
    if buf.len() as u64 != expect {
        return Err(corrupt(
            buf.len().min(expect as usize),
            format!("size {} does not match counts (expected {expect})", buf.len()),
        ));
    }
    let mut coords = Vec::with_capacity(frames);
    let mut out = Vec::with_capacity(frames);
    for k in 0..frames {
        coords.push((c.pos, c.vecs(n, "coordinates")?));
        let u = c.vecs(n, "displacements")?;
        let v = c.vecs(n, "velocities")?;
        let stress = c.scalars(e, "stress")?;
        let eps_p = c.scalars(e, "plastic strain")?;
        let at = c.pos;
        let flags = c.scalars(e, "erosion flag")?;
        let eroded = flags
            .iter()
            .enumerate()
            .map(|(i, &f)| match f {
                0.0 => Ok(false),
                1.0 => Ok(true),
                _ => Err(corrupt(at + 8 * i, format!("erosion flag {f} is not 0/1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Frame { time_ms: k as f64 * dt_anim, u, v, stress, eps_p, eroded });
    }
    let node_ids = (0..n).map(|_| c.u32("node id")).collect::<Result<Vec<_>, _>>()?;
    let element_ids = (0..e).map(|_| c.u32("element id")).collect::<Result<Vec<_>, _>>()?;
    let part_ids = (0..e).map(|_| c.u32("part id")).collect::<Result<Vec<_>, _>>()?;

    let x0 = match (coords.first(), out.first()) {
        (Some((_, x)), Some(f)) => {
            if f.u.iter().any(|u| *u != [0.0; 3]) {
                return Err(corrupt(CCF_HEADER_BYTES as usize, "frame 0 displacement is not zero".into()));
            }
            x.clone()
        }
        _ => Vec::new(),
    };
    for ((at, x), f) in coords.iter().zip(&out) {
        for i in 0..n {
            let rec = vec3::add(x0[i], f.u[i]);
            if (0..3).any(|k| (rec[k] - x[i][k]).abs() > 1e-12 * (1.0 + x[i][k].abs())) {
                return Err(corrupt(at + 24 * i, "coordinates differ from X0 + U".into()));
            }
        }
    }
    Ok(FieldTrajectory { x0, node_ids, element_ids, part_ids, dt_anim, frames: out })
}

pub fn read_ccf(mut r: impl Read) -> Result<FieldTrajectory, DatastoreError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode_ccf(&buf)
}
