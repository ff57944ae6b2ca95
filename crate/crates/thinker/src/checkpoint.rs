//! Checkpoint container: a single little-endian binary file holding a
//! header (magic, version, integer dims) followed by flat `f64` parameter
//! sections in declaration order. See `docs/file-formats.md` for the dim
//! and section assignments used by the training harness.

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"THNK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: Vec<u32>,
    pub sections: Vec<Vec<f64>>,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(ckpt.dims.len() as u32).to_le_bytes())?;
    for d in &ckpt.dims {
        out.write_all(&d.to_le_bytes())?;
    }
    out.write_all(&(ckpt.sections.len() as u32).to_le_bytes())?;
    for section in &ckpt.sections {
        out.write_all(&(section.len() as u64).to_le_bytes())?;
        for v in section {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(Error::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }
    let dim_count = read_u32(&mut input)? as usize;
    if dim_count > 1024 {
        return Err(Error::BadCheckpoint("implausible dim count".into()));
    }
    let mut dims = Vec::with_capacity(dim_count);
    for _ in 0..dim_count {
        dims.push(read_u32(&mut input)?);
    }
    let section_count = read_u32(&mut input)? as usize;
    if section_count > 64 {
        return Err(Error::BadCheckpoint("implausible section count".into()));
    }
    let mut sections = Vec::with_capacity(section_count);
    for _ in 0..section_count {
        let mut len8 = [0u8; 8];
        input.read_exact(&mut len8)?;
        let len = u64::from_le_bytes(len8) as usize;
        if len > (1 << 30) {
            return Err(Error::BadCheckpoint("implausible section length".into()));
        }
        let mut section = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            input.read_exact(&mut buf)?;
            section.push(f64::from_le_bytes(buf));
        }
        sections.push(section);
    }
    Ok(Checkpoint { dims, sections })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.thnk");
        let ckpt = Checkpoint {
            dims: vec![1, 4, 144, 5, 5],
            sections: vec![vec![0.97], vec![1.5, -2.25, 1e-9], vec![]],
        };
        write_checkpoint(&path, &ckpt).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        // Header starts with the magic bytes.
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"THNK");
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.thnk");
        std::fs::write(&path, b"NOPEnope").unwrap();
        assert!(read_checkpoint(&path).is_err());
    }
}
