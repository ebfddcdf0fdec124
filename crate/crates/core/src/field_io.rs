//! Binary field files: a short text header terminated by `end_header`,
//! followed by little-endian `f64` node values in grid order.

use std::io::{Read, Write};
use std::path::Path;

use crate::torus::{ScalarField, TorusGrid};
use crate::Error;

const MAGIC: &str = "lich-field v1";

pub fn write_field<W: Write>(mut w: W, u: &ScalarField) -> Result<(), Error> {
    let g = u.grid();
    write!(
        w,
        "{MAGIC}\ndims {}\npoints {}\nspacing {:.16e}\ndtype f64\nbyte_order little\ncount {}\nend_header\n",
        g.dim(),
        g.points_per_axis(),
        g.spacing(),
        g.len()
    )?;
    let mut buf = Vec::with_capacity(8 * g.len());
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<ScalarField, Error> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Format("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(Error::Format("bad magic line".into()));
    }
    let (mut dims, mut points, mut count) = (None, None, None);
    for line in lines {
        let (key, value) = line.split_once(' ').ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        let parse = |v: &str| v.parse::<usize>().map_err(|_| Error::Format(format!("bad value in {line:?}")));
        match key {
            "dims" => dims = Some(parse(value)?),
            "points" => points = Some(parse(value)?),
            "count" => count = Some(parse(value)?),
            "dtype" if value == "f64" => {}
            "byte_order" if value == "little" => {}
            "spacing" => {}
            _ => return Err(Error::Format(format!("unsupported header line {line:?}"))),
        }
    }
    let (dims, points, count) = match (dims, points, count) {
        (Some(d), Some(p), Some(c)) => (d, p, c),
        _ => return Err(Error::Format("incomplete header".into())),
    };
    let grid = TorusGrid::new(dims, points)?;
    if count != grid.len() {
        return Err(Error::Format(format!("count {count} does not match grid size {}", grid.len())));
    }
    let data = &bytes[end + marker.len()..];
    if data.len() != 8 * count {
        return Err(Error::Format(format!("expected {} data bytes, found {}", 8 * count, data.len())));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    ScalarField::from_values(grid, values)
}

pub fn save_field(path: &Path, u: &ScalarField) -> Result<(), Error> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_field(&mut w, u)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<ScalarField, Error> {
    read_field(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = TorusGrid::new(2, 6).unwrap();
        let u = ScalarField::from_fn(g, |x| (x[0] * 7.1).sin() / 3.0 + x[1]);
        let mut buf = Vec::new();
        write_field(&mut buf, &u).unwrap();
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.grid(), g);
    }

    #[test]
    fn rejects_truncated_data() {
        let g = TorusGrid::new(2, 4).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &ScalarField::zeros(g)).unwrap();
        buf.pop();
        assert!(matches!(read_field(buf.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_field(&b"nope\nend_header\n"[..]), Err(Error::Format(_))));
    }
}
