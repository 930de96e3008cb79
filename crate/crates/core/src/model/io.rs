//! Instance files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! offset  size     field
//! 0       8        magic  b"CRAFINS1"
//! 8       8        n            u64
//! 16      8        m            u64
//! 24      8        k            u64
//! 32      8        B            u64
//! 40      8        noise_sigma  f64
//! 48      8        seed         u64
//! 56      8*m*n    A, row-major f64
//! ..      8*n      x            f64
//! ..      8*m      psi          f64
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{BlockStructure, ProblemInstance};

pub const INSTANCE_MAGIC: &[u8; 8] = b"CRAFINS1";

pub fn write_instance<W: Write>(inst: &ProblemInstance, mut w: W) -> Result<()> {
    w.write_all(INSTANCE_MAGIC)?;
    for v in [inst.n(), inst.m(), inst.k(), inst.blocks().block_len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&inst.noise_sigma().to_le_bytes())?;
    w.write_all(&inst.seed().to_le_bytes())?;
    for series in [inst.sensing().as_slice(), inst.signal(), inst.psi()] {
        for v in series {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_instance<R: Read>(mut r: R) -> Result<ProblemInstance> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != INSTANCE_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let m = u64::from_le_bytes(next(&mut r)?) as usize;
    let k = u64::from_le_bytes(next(&mut r)?) as usize;
    let block_len = u64::from_le_bytes(next(&mut r)?) as usize;
    let noise_sigma = f64::from_le_bytes(next(&mut r)?);
    let seed = u64::from_le_bytes(next(&mut r)?);

    let blocks = BlockStructure::for_dimension(n, block_len)?;
    let len = m.checked_mul(n).ok_or_else(|| Error::Format(format!("m*n overflows ({m} x {n})")))?;
    let a = read_f64s(&mut r, len)?;
    let x = read_f64s(&mut r, n)?;
    let psi = read_f64s(&mut r, m)?;
    ProblemInstance::new(Matrix::from_row_major(m, n, a), x, psi, blocks, k, noise_sigma, seed)
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// Debug dump of `x` and `psi` as `series,index,value` rows.
pub fn write_instance_csv<W: Write>(inst: &ProblemInstance, mut w: W) -> Result<()> {
    writeln!(w, "series,index,value")?;
    for (i, v) in inst.signal().iter().enumerate() {
        writeln!(w, "x,{i},{v}")?;
    }
    for (i, v) in inst.psi().iter().enumerate() {
        writeln!(w, "psi,{i},{v}")?;
    }
    w.flush()?;
    Ok(())
}
