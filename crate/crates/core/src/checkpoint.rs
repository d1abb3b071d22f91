//! Binary checkpoints for fields and solver states.
//!
//! All integers are little-endian `u32`, all reals little-endian IEEE-754
//! `f64`, so a round trip is bit-exact.
//!
//! Field block:
//!
//! ```text
//! offset  size  content
//! 0       4     magic "VFFD"
//! 4       4     format version (1)
//! 8       4     dim
//! 12      12    points per axis (3 x u32; unused axes = 1)
//! 24      24    extent per axis (3 x f64; unused axes = 1.0)
//! 48      4     boundary (0 = periodic, 1 = decay box)
//! 52      4     component count (1..=9)
//! 56      ...   component-major, row-major values (ncomp * len x f64)
//! ```
//!
//! State file: magic "VFST", version, time (f64), flags (bit 0: e-field
//! present), then field blocks for `c`, `psi`, `u` and optionally `e`.

use thiserror::Error;

use crate::grid::{Boundary, Grid, GridError, ScalarField, VectorField};
use crate::state::FluidState;

const FIELD_MAGIC: &[u8; 4] = b"VFFD";
const STATE_MAGIC: &[u8; 4] = b"VFST";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 56;
const MAX_COMPONENTS: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("truncated input: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unknown boundary code {0}")]
    Boundary(u32),
    #[error("component count {0} out of range")]
    Components(u32),
    #[error("unused axis {axis} must have 1 point and extent 1.0")]
    UnusedAxis { axis: usize },
    #[error("invalid grid: {0}")]
    Grid(#[from] GridError),
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("state field {name} has {got} components, expected {expected}")]
    StateLayout { name: &'static str, expected: usize, got: usize },
    #[error("state fields live on different grids")]
    GridMismatch,
    #[error("negative sound speed at node {0}")]
    NegativeSoundSpeed(usize),
    #[error("unknown state flags {0:#x}")]
    Flags(u32),
}

/// Serializes the components of one field.
pub fn encode_field(grid: &Grid, comps: &[&[f64]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + comps.len() * grid.len() * 8);
    write_field(&mut out, grid, comps);
    out
}

fn write_field(out: &mut Vec<u8>, grid: &Grid, comps: &[&[f64]]) {
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for n in grid.points() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for l in grid.extent() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&grid.boundary().code().to_le_bytes());
    out.extend_from_slice(&(comps.len() as u32).to_le_bytes());
    for c in comps {
        for v in c.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated { offset: self.pos, needed: n }),
        }
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), CheckpointError> {
        let m: [u8; 4] = self.take(4)?.try_into().unwrap();
        if &m != expected {
            return Err(CheckpointError::BadMagic(m));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(CheckpointError::Version(v));
        }
        Ok(())
    }

    fn field(&mut self) -> Result<(Grid, Vec<Vec<f64>>), CheckpointError> {
        self.magic(FIELD_MAGIC)?;
        let dim = self.u32()? as usize;
        let mut points = [0usize; 3];
        for p in points.iter_mut() {
            *p = self.u32()? as usize;
        }
        let mut extent = [0.0f64; 3];
        for e in extent.iter_mut() {
            *e = self.f64()?;
        }
        let code = self.u32()?;
        let boundary = Boundary::from_code(code).ok_or(CheckpointError::Boundary(code))?;
        let ncomp = self.u32()?;
        if ncomp == 0 || ncomp as usize > MAX_COMPONENTS {
            return Err(CheckpointError::Components(ncomp));
        }
        if !(1..=3).contains(&dim) {
            return Err(GridError::InvalidDim(dim).into());
        }
        for axis in dim..3 {
            if points[axis] != 1 || extent[axis] != 1.0 {
                return Err(CheckpointError::UnusedAxis { axis });
            }
        }
        let grid = Grid::new(dim, &points[..dim], &extent[..dim], boundary)?;
        // Size check before allocating anything proportional to the header.
        let len = points[..dim]
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .and_then(|n| n.checked_mul(ncomp as usize))
            .and_then(|n| n.checked_mul(8))
            .ok_or(CheckpointError::Truncated { offset: self.pos, needed: usize::MAX })?;
        let raw = self.take(len)?;
        let values: Vec<f64> =
            raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite(i));
        }
        let comps = values.chunks(grid.len()).map(|c| c.to_vec()).collect();
        Ok((grid, comps))
    }
}

/// Parses one field block; the input must contain nothing else.
pub fn decode_field(bytes: &[u8]) -> Result<(Grid, Vec<Vec<f64>>), CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let out = r.field()?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok(out)
}

pub fn encode_scalar(f: &ScalarField) -> Vec<u8> {
    encode_field(f.grid(), &[f.data()])
}

pub fn decode_scalar(bytes: &[u8]) -> Result<ScalarField, CheckpointError> {
    let (grid, mut comps) = decode_field(bytes)?;
    if comps.len() != 1 {
        return Err(CheckpointError::StateLayout { name: "scalar", expected: 1, got: comps.len() });
    }
    Ok(ScalarField::from_vec(&grid, comps.pop().unwrap())?)
}

pub fn encode_state(state: &FluidState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    let flags: u32 = u32::from(state.e_field.is_some());
    out.extend_from_slice(&flags.to_le_bytes());
    let grid = *state.c.grid();
    write_field(&mut out, &grid, &[state.c.data()]);
    let psi: Vec<&[f64]> = state.psi.comps().iter().map(|c| c.as_slice()).collect();
    write_field(&mut out, &grid, &psi);
    let u: Vec<&[f64]> = state.u.comps().iter().map(|c| c.as_slice()).collect();
    write_field(&mut out, &grid, &u);
    if let Some(e) = &state.e_field {
        write_field(&mut out, &grid, &[e.data()]);
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<FluidState, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(STATE_MAGIC)?;
    let time = r.f64()?;
    if !(time.is_finite() && time >= 0.0) {
        return Err(CheckpointError::NonFinite(0));
    }
    let flags = r.u32()?;
    if flags & !1 != 0 {
        return Err(CheckpointError::Flags(flags));
    }
    let (grid, mut c) = r.field()?;
    let dim = grid.dim();
    let expect = |name: &'static str, got: usize, expected: usize| {
        if got == expected {
            Ok(())
        } else {
            Err(CheckpointError::StateLayout { name, expected, got })
        }
    };
    expect("c", c.len(), 1)?;
    if let Some(i) = c[0].iter().position(|&v| v < 0.0) {
        return Err(CheckpointError::NegativeSoundSpeed(i));
    }
    let (g_psi, psi) = r.field()?;
    expect("psi", psi.len(), dim)?;
    let (g_u, u) = r.field()?;
    expect("u", u.len(), dim)?;
    if g_psi != grid || g_u != grid {
        return Err(CheckpointError::GridMismatch);
    }
    let e_field = if flags & 1 == 1 {
        let (g_e, mut e) = r.field()?;
        expect("e", e.len(), 1)?;
        if g_e != grid {
            return Err(CheckpointError::GridMismatch);
        }
        Some(ScalarField::from_vec(&grid, e.pop().unwrap())?)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(CheckpointError::Trailing(bytes.len() - r.pos));
    }
    Ok(FluidState {
        c: ScalarField::from_vec(&grid, c.pop().unwrap())?,
        psi: VectorField::from_components(&grid, psi)?,
        u: VectorField::from_components(&grid, u)?,
        e_field,
        time,
        clamp_events: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(2, &[4, 5], &[1.5, 2.0], Boundary::DecayBox).unwrap()
    }

    #[test]
    fn field_roundtrip_is_bit_exact() {
        let g = grid();
        let f = ScalarField::from_fn(&g, |x| (x[0] * 7.3).sin() / 3.0 + x[1] * 1e-300);
        let bytes = encode_scalar(&f);
        assert_eq!(bytes.len(), HEADER_LEN + g.len() * 8);
        let back = decode_scalar(&bytes).unwrap();
        assert_eq!(back.grid(), f.grid());
        for (a, b) in back.data().iter().zip(f.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn state_roundtrip() {
        let g = grid();
        let s = FluidState {
            c: ScalarField::from_fn(&g, |x| 1.0 + x[0]),
            psi: VectorField::from_fn(&g, |x| [x[1], -x[0], 0.0]),
            u: VectorField::from_fn(&g, |x| [0.1 * x[0], 0.2, 0.0]),
            e_field: Some(ScalarField::constant(&g, 0.25)),
            time: 0.75,
            clamp_events: 0,
        };
        let back = decode_state(&encode_state(&s)).unwrap();
        assert_eq!(back, s);
        let mut bad = encode_state(&s);
        bad[16] |= 0x10;
        assert_eq!(decode_state(&bad), Err(CheckpointError::Flags(0x11)));
    }

    #[test]
    fn rejects_malformed_input() {
        let g = grid();
        let bytes = encode_scalar(&ScalarField::zeros(&g));
        assert!(matches!(decode_field(&bytes[..10]), Err(CheckpointError::Truncated { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_field(&bad), Err(CheckpointError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[48] = 7;
        assert_eq!(decode_field(&bad), Err(CheckpointError::Boundary(7)));
        let mut bad = bytes.clone();
        bad.push(0);
        assert_eq!(decode_field(&bad), Err(CheckpointError::Trailing(1)));
        let mut bad = bytes.clone();
        bad[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert_eq!(decode_field(&bad), Err(CheckpointError::NonFinite(0)));
        // A header claiming a huge grid must fail on length, not allocate.
        let mut bad = bytes;
        bad[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_field(&bad), Err(CheckpointError::Truncated { .. })));
    }
}
