//! Binary dump of one field realization.
//!
//! Layout: the magic `CRITFLD1`, a little-endian `u64` header length, a
//! JSON header, then the value, gradient and upper-triangle Hessian arrays
//! as little-endian `f64`, in that order.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use critfield::field::{FieldRealization, GridSpec};
use critfield::spectrum::DensitySpec;
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 8] = b"CRITFLD1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub grid: GridSpec,
    pub seed: u64,
    pub spectral_cutoff: f64,
    pub density: Option<DensitySpec>,
    /// Array names in storage order.
    pub arrays: Vec<String>,
    /// Entries per array.
    pub len: usize,
}

fn array_names(m: usize) -> Vec<String> {
    let mut names = vec!["value".to_string()];
    names.extend((0..m).map(|i| format!("d{i}")));
    for i in 0..m {
        for j in i..m {
            names.push(format!("d{i}{j}"));
        }
    }
    names
}

pub fn write_dump<W: Write>(
    mut out: W,
    field: &FieldRealization,
    density: Option<DensitySpec>,
) -> Result<()> {
    let header = DumpHeader {
        grid: field.grid,
        seed: field.seed,
        spectral_cutoff: field.spectral_cutoff,
        density,
        arrays: array_names(field.dim()),
        len: field.len(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let arrays = std::iter::once(&field.values)
        .chain(&field.gradient)
        .chain(&field.hessian);
    let mut buf = Vec::with_capacity(8 * field.len());
    for a in arrays {
        buf.clear();
        a.iter()
            .for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dump<R: Read>(mut input: R) -> Result<(DumpHeader, FieldRealization)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).context("truncated dump")?;
    if &magic != MAGIC {
        bail!("not a field dump (bad magic)");
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: DumpHeader = serde_json::from_slice(&json).context("bad dump header")?;
    let mut read_array = || -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; 8 * header.len];
        input.read_exact(&mut bytes).context("truncated dump")?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let m = header.grid.m;
    let values = read_array()?;
    let gradient = (0..m).map(|_| read_array()).collect::<Result<Vec<_>>>()?;
    let hessian = (0..m * (m + 1) / 2)
        .map(|_| read_array())
        .collect::<Result<Vec<_>>>()?;
    let field = FieldRealization::from_arrays(
        header.grid,
        header.seed,
        header.spectral_cutoff,
        values,
        gradient,
        hessian,
    )?;
    Ok((header, field))
}
