//! Dense grid files: `OPGRID1\0`, `u32 n`, `f64 L`, then `n^2` row-major
//! `f64` samples, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GridGeometry, ImageGrid};
use crate::error::{Error, Result};

pub const GRID_MAGIC: [u8; 8] = *b"OPGRID1\0";

pub fn write_grid_to<W: Write>(f: &ImageGrid, mut w: W) -> Result<()> {
    let geom = f.geometry();
    let n = u32::try_from(geom.resolution)
        .map_err(|_| Error::InvalidArgument(format!("resolution {} too large", geom.resolution)))?;
    w.write_all(&GRID_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&geom.half_width.to_le_bytes())?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_from<R: Read>(mut r: R) -> Result<ImageGrid> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if magic != GRID_MAGIC {
        return Err(Error::Format("bad magic, expected OPGRID1".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)
        .map_err(|_| Error::Format("truncated header".into()))?;
    r.read_exact(&mut b8)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let n = u32::from_le_bytes(b4) as usize;
    let half_width = f64::from_le_bytes(b8);
    let geometry = GridGeometry::new(half_width, n).map_err(|e| Error::Format(e.to_string()))?;
    let mut bytes = vec![0u8; n * n * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("expected {} samples", n * n)))?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ImageGrid::from_values(geometry, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_grid(f: &ImageGrid, path: &Path) -> Result<()> {
    write_grid_to(f, BufWriter::new(File::create(path)?))
}

pub fn read_grid(path: &Path) -> Result<ImageGrid> {
    read_grid_from(BufReader::new(File::open(path)?))
}

/// Long-format `x,y,value` rows for plotting.
pub fn write_csv<W: Write>(f: &ImageGrid, mut w: W) -> Result<()> {
    let geom = f.geometry();
    let n = geom.resolution;
    writeln!(w, "x,y,value")?;
    for j in 0..n {
        let y = geom.coord(j);
        for i in 0..n {
            writeln!(w, "{},{},{}", geom.coord(i), y, f.get(i, j))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ImageGrid {
        ImageGrid::from_fn(GridGeometry::new(2.5, 17).unwrap(), |x, y| x * 0.3 - y * y).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let f = sample();
        let mut buf = Vec::new();
        write_grid_to(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 17 * 17 * 8);
        assert_eq!(&buf[..8], b"OPGRID1\0");
        let g = read_grid_from(buf.as_slice()).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.opgrid");
        write_grid(&sample(), &path).unwrap();
        assert_eq!(read_grid(&path).unwrap(), sample());
    }

    #[test]
    fn malformed_files_rejected() {
        let mut buf = Vec::new();
        write_grid_to(&sample(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_grid_from(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_grid_from(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_grid_from(long.as_slice()), Err(Error::Format(_))));
        let mut nan = buf;
        let k = nan.len() - 8;
        nan[k..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(read_grid_from(nan.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn csv_layout() {
        let f = sample();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 17 * 17);
        assert_eq!(lines[0], "x,y,value");
        assert!(lines[1].starts_with("-2.5,-2.5,"));
    }
}
