//! Binary phase-space snapshots. The layout is the exchange format for
//! full kinetic states: a fixed little-endian header (d, nx, nv as u64;
//! L, V0, time as f64) followed by the density in row-major order
//! (position-major, velocity fastest).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::grid::{KineticState, PhaseGrid};

/// Fixed-size header of a `.state` file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateHeader {
    pub d: usize,
    pub nx: usize,
    pub nv: usize,
    pub l: f64,
    pub v0: f64,
    pub time: f64,
}

impl StateHeader {
    pub fn of(grid: &PhaseGrid, state: &KineticState) -> Self {
        Self {
            d: grid.d,
            nx: grid.nx,
            nv: grid.n_v(),
            l: grid.l,
            v0: grid.vspace.v0,
            time: state.time,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d != 1 && self.d != 2 {
            return Err(CoreError::Format(format!(
                "dimension {} is not supported (d = 1 or 2)",
                self.d
            )));
        }
        if self.nx < 2 {
            return Err(CoreError::Format(format!(
                "position resolution nx = {} is too small",
                self.nx
            )));
        }
        if self.nv == 0 {
            return Err(CoreError::Format("empty velocity grid".into()));
        }
        if self.d == 2 {
            let nr = ((self.nv as f64) / 2.0).sqrt().round() as usize;
            if 2 * nr * nr != self.nv {
                return Err(CoreError::Format(format!(
                    "nv = {} is not 2·nr² for any ring count nr",
                    self.nv
                )));
            }
        }
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(CoreError::Format(format!("box half-width L = {}", self.l)));
        }
        if !(self.v0 > 0.0) || !self.v0.is_finite() {
            return Err(CoreError::Format(format!("speed bound V0 = {}", self.v0)));
        }
        if !self.time.is_finite() {
            return Err(CoreError::Format(format!("time stamp {}", self.time)));
        }
        Ok(())
    }

    /// Number of density values that must follow the header.
    pub fn cells(&self) -> usize {
        self.nx.pow(self.d as u32) * self.nv
    }
}

/// Write one snapshot in the exchange layout.
pub fn write_state_to<W: Write>(mut w: W, grid: &PhaseGrid, state: &KineticState) -> Result<()> {
    let header = StateHeader::of(grid, state);
    debug_assert_eq!(state.f.dim(), (grid.n_x(), grid.n_v()));
    w.write_all(&(header.d as u64).to_le_bytes())?;
    w.write_all(&(header.nx as u64).to_le_bytes())?;
    w.write_all(&(header.nv as u64).to_le_bytes())?;
    w.write_all(&header.l.to_le_bytes())?;
    w.write_all(&header.v0.to_le_bytes())?;
    w.write_all(&header.time.to_le_bytes())?;
    // Array2 in standard layout is row-major already; iterate to stay
    // correct for views regardless
    let mut buf = Vec::with_capacity(8 * 1024);
    for &v in state.f.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
        if buf.len() >= 8 * 1024 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn write_state(path: &Path, grid: &PhaseGrid, state: &KineticState) -> Result<()> {
    write_state_to(BufWriter::new(File::create(path)?), grid, state)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Read one snapshot; the density comes back as (positions × velocities).
/// `outflow_cum` is not part of the layout and restarts at zero.
pub fn read_state_from<R: Read>(mut r: R) -> Result<(StateHeader, KineticState)> {
    let d = read_u64(&mut r)?;
    let nx = read_u64(&mut r)?;
    let nv = read_u64(&mut r)?;
    if d > usize::MAX as u64 || nx > 1 << 32 || nv > 1 << 32 {
        return Err(CoreError::Format(format!(
            "implausible header ({d}, {nx}, {nv})"
        )));
    }
    let header = StateHeader {
        d: d as usize,
        nx: nx as usize,
        nv: nv as usize,
        l: read_f64(&mut r)?,
        v0: read_f64(&mut r)?,
        time: read_f64(&mut r)?,
    };
    header.validate()?;
    let cells = header.cells();
    let mut raw = vec![0u8; 8 * cells];
    r.read_exact(&mut raw)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CoreError::Format(format!(
            "trailing bytes after {cells} density values"
        )));
    }
    let mut values = Vec::with_capacity(cells);
    for chunk in raw.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        if !v.is_finite() {
            return Err(CoreError::Format(format!(
                "non-finite density value {v} at cell {}",
                values.len()
            )));
        }
        values.push(v);
    }
    let f = Array2::from_shape_vec((header.nx.pow(header.d as u32), header.nv), values)
        .expect("shape matches cells");
    Ok((
        header,
        KineticState {
            f,
            time: header.time,
            outflow_cum: 0.0,
        },
    ))
}

pub fn read_state(path: &Path) -> Result<(StateHeader, KineticState)> {
    read_state_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn layout_is_bit_exact() {
        let grid = PhaseGrid::line(1.5, 2, 2, Boundary::Outflow).unwrap();
        let mut state = KineticState::zeros(&grid);
        state.f[[0, 0]] = 0.75;
        state.f[[0, 1]] = 2.0;
        state.f[[1, 0]] = -0.25;
        state.f[[1, 1]] = 0.5;
        state.time = 0.25;
        let mut bytes = Vec::new();
        write_state_to(&mut bytes, &grid, &state).unwrap();

        let mut expect = Vec::new();
        for word in [1u64, 2, 2] {
            expect.extend_from_slice(&word.to_le_bytes());
        }
        // header floats, then the density position-major
        for val in [1.5f64, 0.5, 0.25, 0.75, 2.0, -0.25, 0.5] {
            expect.extend_from_slice(&val.to_le_bytes());
        }
        assert_eq!(bytes, expect);
    }

    #[test]
    fn round_trips_a_line_state() {
        let grid = PhaseGrid::line(10.0, 40, 16, Boundary::Outflow).unwrap();
        let mut state = KineticState::from_fn(&grid, |x, v| (-(x[0] * x[0]) - v[0]).exp());
        state.time = 3.5;
        let mut bytes = Vec::new();
        write_state_to(&mut bytes, &grid, &state).unwrap();
        let (header, back) = read_state_from(bytes.as_slice()).unwrap();
        assert_eq!(header, StateHeader::of(&grid, &state));
        assert_eq!(back.f, state.f);
        assert_eq!(back.time, 3.5);
        assert_eq!(back.outflow_cum, 0.0);
    }

    #[test]
    fn round_trips_a_plane_state() {
        let grid = PhaseGrid::plane(4.0, 10, 3, Boundary::Periodic).unwrap();
        let mut state = KineticState::uniform(&grid);
        state.f[[37, 5]] = 2.0_f64.powi(-40) + 1.0;
        state.time = 0.125;
        let mut bytes = Vec::new();
        write_state_to(&mut bytes, &grid, &state).unwrap();
        let (header, back) = read_state_from(bytes.as_slice()).unwrap();
        assert_eq!(header.d, 2);
        assert_eq!(header.nv, 18);
        assert_eq!(back.f, state.f);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("rtlab-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("snapshot.state");
        let grid = PhaseGrid::line(5.0, 8, 4, Boundary::Outflow).unwrap();
        let state = KineticState::uniform(&grid);
        write_state(&path, &grid, &state).unwrap();
        let (header, back) = read_state(&path).unwrap();
        assert_eq!(header.l, 5.0);
        assert_eq!(back.f, state.f);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn rejects_corrupt_headers_and_bodies() {
        let grid = PhaseGrid::line(5.0, 8, 4, Boundary::Outflow).unwrap();
        let state = KineticState::uniform(&grid);
        let mut bytes = Vec::new();
        write_state_to(&mut bytes, &grid, &state).unwrap();

        // unsupported dimension
        let mut bad = bytes.clone();
        bad[0] = 3;
        assert!(matches!(
            read_state_from(bad.as_slice()),
            Err(CoreError::Format(_))
        ));

        // velocity count that is not 2·nr² in the plane
        let mut bad = bytes.clone();
        bad[0] = 2;
        assert!(matches!(
            read_state_from(bad.as_slice()),
            Err(CoreError::Format(msg)) if msg.contains("nv")
        ));

        // truncated body
        let bad = &bytes[..bytes.len() - 4];
        assert!(matches!(read_state_from(bad), Err(CoreError::Io(_))));

        // trailing garbage
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(
            read_state_from(bad.as_slice()),
            Err(CoreError::Format(msg)) if msg.contains("trailing")
        ));

        // non-finite density
        let mut bad = bytes.clone();
        let tail = bad.len() - 8;
        bad[tail..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            read_state_from(bad.as_slice()),
            Err(CoreError::Format(msg)) if msg.contains("non-finite")
        ));
    }
}
