//! "QMA1" field snapshots: magic, u32 version, n, N, component count, then
//! little-endian f64 values, point-major with components innermost.

use super::grid::{ScalarField, TorusGrid};
use crate::{QmaError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"QMA1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub size: usize,
    pub components: Vec<Vec<f64>>,
}

impl Snapshot {
    pub fn from_fields(fields: &[&ScalarField]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| QmaError::Format("snapshot needs at least one component".into()))?;
        let grid = first.grid();
        if fields.iter().any(|f| f.grid() != grid) {
            return Err(QmaError::Format("components live on different grids".into()));
        }
        Ok(Self {
            n: grid.n(),
            size: grid.size(),
            components: fields.iter().map(|f| f.values().to_vec()).collect(),
        })
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.n, self.size)
    }

    pub fn field(&self, k: usize) -> Result<ScalarField> {
        let v = self
            .components
            .get(k)
            .ok_or_else(|| QmaError::Format(format!("no component {k}")))?;
        ScalarField::new(&self.grid()?, v.clone())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [VERSION, self.n as u32, self.size as u32, self.components.len() as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let pts = self.components.first().map_or(0, |c| c.len());
        let mut buf = Vec::with_capacity(pts * self.components.len() * 8);
        for p in 0..pts {
            for c in &self.components {
                buf.extend_from_slice(&c[p].to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(QmaError::Format("bad magic".into()));
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = word()?;
        if version != VERSION {
            return Err(QmaError::Format(format!("unsupported version {version}")));
        }
        let n = word()? as usize;
        let size = word()? as usize;
        let ncomp = word()? as usize;
        let grid = TorusGrid::new(n, size).map_err(|e| QmaError::Format(e.to_string()))?;
        if ncomp == 0 {
            return Err(QmaError::Format("zero components".into()));
        }
        let pts = grid.len();
        let mut raw = vec![0u8; pts * ncomp * 8];
        r.read_exact(&mut raw)?;
        let mut components = vec![Vec::with_capacity(pts); ncomp];
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            components[i % ncomp].push(v);
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(QmaError::Format("trailing bytes after snapshot".into()));
        }
        Ok(Self { n, size, components })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let g = TorusGrid::new(1, 4).unwrap();
        let a = ScalarField::from_fn(&g, |x| x[0] - 2.0 * x[3]);
        let b = ScalarField::constant(&g, -1.5);
        let s = Snapshot::from_fields(&[&a, &b]).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"QMA1");
        assert_eq!(buf.len(), 20 + 256 * 2 * 8);
        // components innermost
        assert_eq!(&buf[20 + 8..20 + 16], &(-1.5f64).to_le_bytes());
        let back = Snapshot::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.field(0).unwrap().values(), a.values());
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut bad = b"QMA2".to_vec();
        bad.extend_from_slice(&[0; 16]);
        assert!(Snapshot::read_from(&mut bad.as_slice()).is_err());
        let g = TorusGrid::new(1, 4).unwrap();
        let s = Snapshot::from_fields(&[&ScalarField::zeros(&g)]).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(Snapshot::read_from(&mut buf.as_slice()).is_err());
    }
}
