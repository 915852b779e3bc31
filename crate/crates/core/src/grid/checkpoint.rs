//! Raw amplitude dumps: little-endian `f64` pairs `(re, im)` per entry.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

pub fn write_amplitudes<T: Real, W: Write>(mut out: W, amplitudes: &[Complex<T>]) -> Result<()> {
    for z in amplitudes {
        out.write_all(&z.re.to_f64_lossy().to_le_bytes())?;
        out.write_all(&z.im.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_amplitudes<T: Real, R: Read>(mut input: R) -> Result<Vec<Complex<T>>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 16 != 0 {
        return Err(Error::InvalidState(format!(
            "checkpoint length {} is not a multiple of 16 bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(T::lit(re), T::lit(im))
        })
        .collect())
}
