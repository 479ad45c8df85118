//! The `SFLD` binary field format.
//!
//! Little-endian layout:
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `SFLD`                              |
//! | 4      | 4    | version, u32 = 1                          |
//! | 8      | 1    | kind: 0 node scalar, 1 cell scalar, 2 MAC |
//! | 9      | 3    | zero padding                              |
//! | 12     | 4    | nx, u32                                   |
//! | 16     | 4    | ny, u32                                   |
//! | 20     | 8    | dx, f64                                   |
//! | 28     | ..   | f32 payload, row-major with j slow        |
//!
//! MAC payloads hold the whole u block followed by the whole v block.

use std::path::Path;

use super::{Field, FieldKind, Grid, MacVelocity, ScalarField, Siting};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: [u8; 4] = *b"SFLD";
pub const FIELD_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

impl Field {
    pub fn encode(&self) -> Vec<u8> {
        let grid = self.grid();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.len());
        out.extend_from_slice(&FIELD_MAGIC);
        out.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        out.push(self.kind().code());
        out.extend_from_slice(&[0u8; 3]);
        out.extend_from_slice(&(grid.nx as u32).to_le_bytes());
        out.extend_from_slice(&(grid.ny as u32).to_le_bytes());
        out.extend_from_slice(&grid.dx.to_le_bytes());
        for x in self.values() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Field> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::parse(
                "header",
                format!("need {HEADER_LEN} bytes, file has {}", bytes.len()),
            ));
        }
        if bytes[0..4] != FIELD_MAGIC {
            return Err(Error::parse("magic", format!("{:?}", String::from_utf8_lossy(&bytes[0..4]))));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FIELD_VERSION {
            return Err(Error::parse("version", format!("unsupported version {version}")));
        }
        let kind = FieldKind::from_code(bytes[8])
            .ok_or_else(|| Error::parse("kind", format!("unknown kind byte {}", bytes[8])))?;
        if bytes[9..12] != [0, 0, 0] {
            return Err(Error::parse("padding", "reserved bytes must be zero"));
        }
        let nx = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let ny = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let dx = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if nx < 2 || ny < 2 {
            return Err(Error::parse("dimensions", format!("{nx}x{ny} is below the 2x2 minimum")));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::parse("dx", format!("spacing {dx} is not positive")));
        }
        let grid = Grid { nx, ny, dx };
        let count = match kind {
            FieldKind::NodeScalar => grid.node_count(),
            FieldKind::CellScalar => grid.cell_count(),
            FieldKind::Mac => grid.u_count() + grid.v_count(),
        };
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != 4 * count {
            return Err(Error::parse(
                "payload length",
                format!("{kind} {nx}x{ny} needs {} bytes, found {}", 4 * count, payload.len()),
            ));
        }
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse("payload", "non-finite value"));
        }
        Ok(match kind {
            FieldKind::NodeScalar => Field::Scalar(ScalarField { grid, siting: Siting::Node, data: values }),
            FieldKind::CellScalar => Field::Scalar(ScalarField { grid, siting: Siting::Cell, data: values }),
            FieldKind::Mac => {
                let mut u = values;
                let v = u.split_off(grid.u_count());
                Field::Mac(MacVelocity { grid, u, v })
            }
        })
    }
}

pub fn write_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, field.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Field::decode(&bytes)
}
