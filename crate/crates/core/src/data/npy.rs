//! Dataset dump: inputs as a NumPy `.npy` (v1.0, little-endian float64)
//! file and labels as CSV.

use std::io::Write;

use super::Dataset;
use crate::error::Result;

pub fn write_npy<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let shape: Vec<String> = std::iter::once(ds.len())
        .chain(ds.sample_shape().iter().copied())
        .map(|d| d.to_string())
        .collect();
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}), }}",
        shape.join(", ")
    );
    // magic (6) + version (2) + header length (2) + header, padded with
    // spaces and a trailing newline to a multiple of 64 bytes.
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    out.write_all(b"\x93NUMPY\x01\x00")?;
    out.write_all(&(header.len() as u16).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    for i in 0..ds.len() {
        for v in ds.input(i) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// One row per sample: id, primary label, then the target vector.
pub fn write_labels_csv<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    let cols: Vec<String> = (0..ds.num_classes()).map(|c| format!("y{c}")).collect();
    writeln!(out, "id,primary,{}", cols.join(","))?;
    for i in 0..ds.len() {
        let t: Vec<String> = ds.target(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{},{},{}", ds.id(i), ds.primary_label(i), t.join(","))?;
    }
    Ok(())
}
