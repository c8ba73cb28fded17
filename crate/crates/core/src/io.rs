//! Bit-exact serialization of spectral fields.
//!
//! JSON: `{"period_L", "modes_N", "dxi", "coeffs": [[k, re, im], …]}` with
//! coefficients listed for `k = −N/2 … N/2−1`.  Binary: the magic `OSTF`, a
//! little-endian `u32` version, `period_L`, `dxi` (`f64`), `modes_N` (`u64`)
//! and then one `(k: i64, re: f64, im: f64)` record per mode in the same order.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{FrequencyGrid, SpectralError, SpectralField};

const MAGIC: &[u8; 4] = b"OSTF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("malformed field record: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRecord {
    #[serde(rename = "period_L")]
    pub period: f64,
    #[serde(rename = "modes_N")]
    pub modes: usize,
    pub dxi: f64,
    pub coeffs: Vec<(i64, f64, f64)>,
}

impl FieldRecord {
    pub fn from_field(f: &SpectralField) -> Self {
        let g = f.grid();
        let half = (g.modes() / 2) as i64;
        Self {
            period: g.period(),
            modes: g.modes(),
            dxi: g.dxi(),
            coeffs: (-half..half)
                .map(|k| {
                    let c = f.coeff(k);
                    (k, c.re, c.im)
                })
                .collect(),
        }
    }

    pub fn to_field(&self) -> Result<SpectralField> {
        let grid = FrequencyGrid::from_parts(self.period, self.modes, self.dxi)?;
        if self.coeffs.len() != self.modes {
            return Err(IoError::Malformed(format!(
                "{} coefficients for {} modes",
                self.coeffs.len(),
                self.modes
            )));
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.modes];
        for &(k, re, im) in &self.coeffs {
            let i = grid
                .index_of(k)
                .ok_or_else(|| IoError::Malformed(format!("wavenumber {k} is off the grid")))?;
            coeffs[i] = Complex64::new(re, im);
        }
        Ok(SpectralField::from_fft_order(grid, coeffs)?)
    }
}

pub fn field_to_json(f: &SpectralField) -> Result<String> {
    Ok(serde_json::to_string(&FieldRecord::from_field(f))?)
}

pub fn field_from_json(s: &str) -> Result<SpectralField> {
    serde_json::from_str::<FieldRecord>(s)?.to_field()
}

pub fn write_field_binary<W: Write>(f: &SpectralField, mut w: W) -> Result<()> {
    let g = f.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&g.period().to_le_bytes())?;
    w.write_all(&g.dxi().to_le_bytes())?;
    w.write_all(&(g.modes() as u64).to_le_bytes())?;
    let half = (g.modes() / 2) as i64;
    for k in -half..half {
        let c = f.coeff(k);
        w.write_all(&k.to_le_bytes())?;
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<SpectralField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(IoError::Malformed("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(IoError::Malformed(format!("unsupported version {version}")));
    }
    let period = f64::from_le_bytes(read_array(&mut r)?);
    let dxi = f64::from_le_bytes(read_array(&mut r)?);
    let modes = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let mut coeffs = Vec::with_capacity(modes.min(1 << 24));
    for _ in 0..modes {
        let k = i64::from_le_bytes(read_array(&mut r)?);
        let re = f64::from_le_bytes(read_array(&mut r)?);
        let im = f64::from_le_bytes(read_array(&mut r)?);
        coeffs.push((k, re, im));
    }
    FieldRecord {
        period,
        modes,
        dxi,
        coeffs,
    }
    .to_field()
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Float formatting shared by every table: 17 significant digits, which
/// round-trips any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpectralField {
        let g = FrequencyGrid::with_spacing(0.1, 32).unwrap();
        SpectralField::from_fn(g, |xi| {
            Complex64::new((xi * 1.7).sin() / 3.0, xi.exp() * 1e-7)
        })
    }

    #[test]
    fn json_round_trip_is_exact() {
        let f = sample();
        let back = field_from_json(&field_to_json(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_field_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 8 + 8 + 32 * 24);
        assert_eq!(read_field_binary(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_field_binary(&b"NOPE"[..]).is_err());
        let mut rec = FieldRecord::from_field(&sample());
        rec.coeffs.pop();
        assert!(rec.to_field().is_err());
        let mut rec = FieldRecord::from_field(&sample());
        rec.coeffs[0].0 = 99;
        assert!(rec.to_field().is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }
}
