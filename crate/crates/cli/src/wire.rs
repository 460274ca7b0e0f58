//! Recorded host/container traffic: each frame is a direction byte
//! (0 call, 1 result), a little-endian `u32` length and the frame bytes.

use std::io::{self, Read, Write};

use hvsim_core::engine::{WireDirection, WireFrame};

pub fn write_frames<W: Write>(mut out: W, frames: &[WireFrame]) -> io::Result<()> {
    for f in frames {
        out.write_all(&[f.direction as u8])?;
        out.write_all(&(f.bytes.len() as u32).to_le_bytes())?;
        out.write_all(&f.bytes)?;
    }
    out.flush()
}

/// Reads back `(direction, bytes)` pairs.
pub fn read_frames<R: Read>(mut input: R) -> io::Result<Vec<(WireDirection, Vec<u8>)>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let mut frames = Vec::new();
    let mut rest = buf.as_slice();
    while !rest.is_empty() {
        if rest.len() < 5 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated frame header"));
        }
        let dir = match rest[0] {
            0 => WireDirection::Call,
            1 => WireDirection::Result,
            d => return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad direction {d}"))),
        };
        let len = u32::from_le_bytes([rest[1], rest[2], rest[3], rest[4]]) as usize;
        rest = &rest[5..];
        if rest.len() < len {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated frame body"));
        }
        frames.push((dir, rest[..len].to_vec()));
        rest = &rest[len..];
    }
    Ok(frames)
}
