//! Heatmap export for attention and adjacency matrices: a plain-text grid
//! and a binary P5 PGM image, both row-major.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gtp_core::Tensor;

use crate::error::CliError;

/// Tab-separated values, one matrix row per line, six decimal places.
pub fn write_text_grid(path: &Path, t: &Tensor) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in 0..t.rows() {
        let cells: Vec<String> = (0..t.cols()).map(|c| format!("{:.6}", t.get(r, c))).collect();
        writeln!(w, "{}", cells.join("\t"))?;
    }
    Ok(())
}

/// 8-bit grayscale PGM, min-max normalized; a constant matrix maps to black.
pub fn write_pgm(path: &Path, t: &Tensor) -> Result<(), CliError> {
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", t.cols(), t.rows())?;
    let bytes: Vec<u8> = t
        .data()
        .iter()
        .map(|v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}
