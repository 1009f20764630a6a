//! Waveform export/import.
//!
//! Two formats, both specified bit-exactly:
//!
//! * CSV — header `time_s,value`, then one row per sample. Values use
//!   Rust's shortest round-trip float formatting, so parsing a written
//!   file recovers the exact f64 bits.
//! * Binary — a 16-byte header (8-byte magic `FDMWAV01`, then the sample
//!   rate as little-endian f64) followed by the samples as little-endian
//!   f64. The start time is not stored; readers get t0 = 0.

use std::io::{Read, Write};

use crate::dsp_chain::Waveform;
use crate::error::Error;

const MAGIC: &[u8; 8] = b"FDMWAV01";

/// Write `w` as CSV (`time_s,value`).
pub fn write_waveform_csv<W: Write>(w: &Waveform, out: &mut W) -> Result<(), Error> {
    out.write_all(b"time_s,value\n")?;
    let dt = 1.0 / w.sample_rate_hz;
    for (n, v) in w.samples.iter().enumerate() {
        writeln!(out, "{},{}", w.t0_s + n as f64 * dt, v)?;
    }
    Ok(())
}

/// Write `w` in the binary format described in the module docs.
pub fn write_waveform_binary<W: Write>(w: &Waveform, out: &mut W) -> Result<(), Error> {
    out.write_all(MAGIC)?;
    out.write_all(&w.sample_rate_hz.to_le_bytes())?;
    for v in &w.samples {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read a waveform written by [`write_waveform_binary`].
pub fn read_waveform_binary<R: Read>(input: &mut R) -> Result<Waveform, Error> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::domain("waveform binary: bad magic"));
    }
    let sample_rate_hz = f64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() % 8 != 0 {
        return Err(Error::domain("waveform binary: truncated sample data"));
    }
    let samples: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Waveform::new(samples, sample_rate_hz, 0.0)
}
