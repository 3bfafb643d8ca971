//! QDF1 field snapshots.
//!
//! An ASCII header line `QDF1 m n_x [n_y] h_x [h_y] t` followed by the raw
//! field as little-endian `f64`, species-major and row-major within a species.
//! Floats in the header use Rust's shortest round-trip formatting, so reading
//! a snapshot back reproduces grid spacing and time bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::Field;

/// Decoded snapshot contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub counts: Vec<usize>,
    pub spacings: Vec<f64>,
    pub t: f64,
    pub field: Field,
}

pub fn write_snapshot<W: Write>(
    mut out: W,
    counts: &[usize],
    spacings: &[f64],
    t: f64,
    field: &Field,
) -> Result<()> {
    if counts.is_empty() || counts.len() > 2 || counts.len() != spacings.len() {
        return Err(Error::Format(format!("unsupported geometry {counts:?} / {spacings:?}")));
    }
    if counts.iter().product::<usize>() != field.cells() {
        return Err(Error::Format("field size does not match the cell counts".into()));
    }
    let mut header = format!("QDF1 {}", field.m());
    for n in counts {
        header.push_str(&format!(" {n}"));
    }
    for h in spacings {
        header.push_str(&format!(" {h:?}"));
    }
    header.push_str(&format!(" {t:?}\n"));
    out.write_all(header.as_bytes())?;
    let mut bytes = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(mut input: R) -> Result<Snapshot> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let line = line
        .strip_suffix('\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let tokens: Vec<&str> = line.split(' ').collect();
    if tokens.first() != Some(&"QDF1") {
        return Err(Error::Format("not a QDF1 snapshot".into()));
    }
    let dim = match tokens.len() {
        5 => 1,
        7 => 2,
        n => return Err(Error::Format(format!("header has {n} tokens, expected 5 or 7"))),
    };
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad integer '{s}'")));
    let float = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad float '{s}'")));
    let m = int(tokens[1])?;
    let counts: Vec<usize> = tokens[2..2 + dim].iter().map(|s| int(s)).collect::<Result<_>>()?;
    let spacings: Vec<f64> = tokens[2 + dim..2 + 2 * dim].iter().map(|s| float(s)).collect::<Result<_>>()?;
    let t = float(tokens[2 + 2 * dim])?;
    let cells: usize = counts.iter().product();
    let mut raw = vec![0u8; m * cells * 8];
    input.read_exact(&mut raw).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after payload", rest.len())));
    }
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let field = Field::from_data(m, cells, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Snapshot { counts, spacings, t, field })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new_2d(5, 3, 1.0, 0.7).unwrap();
        let f = Field::from_fn(&g, 3, |k, x| (k as f64 + 1.0) / 3.0 * (x[0] * 7.1).sin().abs() + x[1] * 1e-300);
        let t = 0.1 + 0.2;
        let mut buf = Vec::new();
        write_snapshot(&mut buf, g.counts(), g.spacings(), t, &f).unwrap();
        let s = read_snapshot(&buf[..]).unwrap();
        assert_eq!(s.counts, vec![5, 3]);
        assert_eq!(s.t.to_bits(), t.to_bits());
        assert_eq!(s.spacings[1].to_bits(), g.h(1).to_bits());
        let bits = |f: &Field| f.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&s.field), bits(&f));
    }

    #[test]
    fn one_dimensional_header() {
        let g = Grid::new_1d(4, 1.0).unwrap();
        let f = Field::from_fn(&g, 1, |_, x| x[0]);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, g.counts(), g.spacings(), 2.0, &f).unwrap();
        assert!(buf.starts_with(b"QDF1 1 4 0.25 2.0\n"));
        assert_eq!(buf.len(), 18 + 32);
        assert_eq!(read_snapshot(&buf[..]).unwrap().field, f);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_snapshot(&b"QDF2 1 4 0.25 0\n"[..]).is_err());
        assert!(read_snapshot(&b"QDF1 1 4 0.25 0\n\0\0"[..]).is_err());
        assert!(read_snapshot(&b"QDF1 1 4 0.25\n"[..]).is_err());
    }
}
