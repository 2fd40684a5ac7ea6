//! Versioned little-endian binary snapshot of a sampler store.

use std::collections::VecDeque;
use std::io::{Read, Write};

use nalgebra::DVector;

use super::{RetainedAtom, SamplerStore, StoreMode, StoredRun};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SMCS";
const VERSION: u32 = 1;

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_len(r: &mut impl Read, what: &str) -> Result<usize> {
    let v = get_u64(r)?;
    usize::try_from(v).ok().filter(|n| *n < (1 << 40)).ok_or_else(|| Error::Format(format!("implausible {what} {v}")))
}

fn get_vec(r: &mut impl Read, n: usize) -> Result<DVector<f64>> {
    let mut v = DVector::zeros(n);
    for i in 0..n {
        v[i] = get_f64(r)?;
    }
    Ok(v)
}

impl SamplerStore {
    pub fn write_snapshot(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[match self.mode {
            StoreMode::A => 0,
            StoreMode::B => 1,
            StoreMode::C => 2,
        }])?;
        put_u64(w, self.datapoint as u64)?;
        put_u64(w, self.window as u64)?;
        put_u64(w, self.count as u64)?;
        put_f64(w, self.log_c_sum)?;
        put_f64(w, self.last_ess)?;
        put_u64(w, self.records.len() as u64)?;
        for r in &self.records {
            put_u64(w, r.atoms.len() as u64)?;
            put_u64(w, r.atoms.first().map_or(0, |a| a.len()) as u64)?;
            put_f64(w, r.log_c)?;
            for x in &r.weights {
                put_f64(w, *x)?;
            }
            for a in &r.atoms {
                for x in a.iter() {
                    put_f64(w, *x)?;
                }
            }
        }
        put_u64(w, self.retained.len() as u64)?;
        for a in &self.retained {
            put_u64(w, a.z.len() as u64)?;
            put_f64(w, a.log_c)?;
            for x in a.z.iter() {
                put_f64(w, *x)?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a sampler-store snapshot".into()));
        }
        let mut ver = [0u8; 4];
        r.read_exact(&mut ver)?;
        let ver = u32::from_le_bytes(ver);
        if ver != VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {ver}")));
        }
        let mut mode = [0u8; 1];
        r.read_exact(&mut mode)?;
        let mode = match mode[0] {
            0 => StoreMode::A,
            1 => StoreMode::B,
            2 => StoreMode::C,
            m => return Err(Error::Format(format!("unknown store mode tag {m}"))),
        };
        let datapoint = get_len(r, "datapoint")?;
        let window = get_len(r, "window")?;
        let count = get_len(r, "run count")?;
        let log_c_sum = get_f64(r)?;
        let last_ess = get_f64(r)?;
        let n_rec = get_len(r, "record count")?;
        let mut records = VecDeque::with_capacity(n_rec);
        for _ in 0..n_rec {
            let k = get_len(r, "particle count")?;
            let p = get_len(r, "latent dimension")?;
            let log_c = get_f64(r)?;
            let weights = (0..k).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
            let atoms = (0..k).map(|_| get_vec(r, p)).collect::<Result<Vec<_>>>()?;
            records.push_back(StoredRun { atoms, weights, log_c });
        }
        let n_ret = get_len(r, "retained count")?;
        let mut retained = Vec::with_capacity(n_ret);
        for _ in 0..n_ret {
            let p = get_len(r, "latent dimension")?;
            let log_c = get_f64(r)?;
            retained.push(RetainedAtom { z: get_vec(r, p)?, log_c });
        }
        Ok(SamplerStore { datapoint, mode, window, records, retained, log_c_sum, count, last_ess })
    }
}
