//! Matrix and tensor files.
//!
//! * CSV: one matrix row per line, comma-separated. Sample matrices store
//!   features as rows and samples as columns.
//! * Binary (`.bin`): `m` and `n` as little-endian `u64`, then `m·n`
//!   little-endian `f64` values in column-major order.
//! * Tensor text: the dimension `d` on the first line, then `d²` lines of
//!   `d` values holding `T[i][j][k]` with `k` varying along the line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::SymTensor3;

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: not a number: {:?}", tok.trim())))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {line}: non-finite value {v}")));
    }
    Ok(v)
}

pub fn parse_csv_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line.split(',').map(|t| parse_f64(t, i + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!("line {}: {} fields, expected {}", i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]))
}

/// Rows joined by newlines; numbers use the shortest round-trip form.
pub fn format_csv_matrix(a: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in a.row_iter() {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn read_csv_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_csv_matrix(&fs::read_to_string(path)?)
}

pub fn write_csv_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_csv_matrix(a))?;
    Ok(())
}

pub fn decode_binary_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < 16 {
        return Err(Error::Parse("binary matrix shorter than its header".into()));
    }
    let m = u64::from_le_bytes(bytes[0..8].try_into().expect("8 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = m.checked_mul(n).and_then(|c| c.checked_mul(8)).and_then(|c| c.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(Error::Parse(format!("binary matrix header says {m}×{n} but file has {} bytes", bytes.len())));
    }
    let data: Vec<f64> = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("binary matrix contains non-finite values".into()));
    }
    Ok(DMatrix::from_vec(m, n, data))
}

pub fn encode_binary_matrix(a: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * a.len());
    out.extend_from_slice(&(a.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(a.ncols() as u64).to_le_bytes());
    for v in a.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_binary_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_binary_matrix(a))?;
    w.flush()?;
    Ok(())
}

/// Reads `.bin` files as binary and anything else as CSV.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    if path.extension().is_some_and(|e| e == "bin") {
        decode_binary_matrix(&fs::read(path)?)
    } else {
        read_csv_matrix(path)
    }
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        write_binary_matrix(path, a)
    } else {
        write_csv_matrix(path, a)
    }
}

/// Parses the tensor text format. The entries must be symmetric up to a
/// relative `1e-12`; they are then averaged over permutations.
pub fn parse_tensor(text: &str) -> Result<SymTensor3> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or_else(|| Error::Parse("empty tensor file".into()))?;
    let d: usize = head.trim().parse().map_err(|_| Error::Parse(format!("bad dimension line {:?}", head.trim())))?;
    if d == 0 {
        return Err(Error::Parse("tensor dimension must be positive".into()));
    }
    let mut data = Vec::with_capacity(d * d * d);
    for (i, line) in lines {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            data.push(parse_f64(tok, i + 1)?);
        }
    }
    if data.len() != d * d * d {
        return Err(Error::Parse(format!("tensor of dimension {d} needs {} values, found {}", d * d * d, data.len())));
    }
    let scale = data.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                let v = data[(i * d + j) * d + k];
                let w = data[(j * d + k) * d + i];
                let u = data[(j * d + i) * d + k];
                if (v - w).abs() > 1e-12 * scale || (v - u).abs() > 1e-12 * scale {
                    return Err(Error::Parse(format!("tensor is not symmetric at ({i},{j},{k})")));
                }
            }
        }
    }
    SymTensor3::from_vec(d, data)
}

pub fn format_tensor(t: &SymTensor3) -> String {
    let d = t.dim();
    let mut s = format!("{d}\n");
    for i in 0..d {
        for j in 0..d {
            let line: Vec<String> = (0..d).map(|k| t.get(i, j, k).to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn read_tensor(path: &Path) -> Result<SymTensor3> {
    parse_tensor(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[0.1, -2.5e-300, 1.0 / 3.0, 7.0, 1e300, -0.0]);
        let back = parse_csv_matrix(&format_csv_matrix(&a)).unwrap();
        assert_eq!(back.shape(), (2, 3));
        for (x, y) in a.iter().zip(back.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv_matrix("1,2\n3\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_csv_matrix("1,x\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_csv_matrix("\n\n"), Err(Error::Parse(_))));
        assert!(matches!(parse_csv_matrix("1,NaN\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn binary_layout() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_binary_matrix(&a);
        assert_eq!(&bytes[0..8], &2u64.to_le_bytes());
        // Column-major: second stored value is row 1, column 0.
        assert_eq!(&bytes[24..32], &3.0f64.to_le_bytes());
        assert_eq!(decode_binary_matrix(&bytes).unwrap(), a);
        assert!(decode_binary_matrix(&bytes[..30]).is_err());
    }

    #[test]
    fn tensor_round_trip_and_asymmetry() {
        let t = SymTensor3::from_sorted_fn(3, |i, j, k| (i + 2 * j + 3 * k) as f64 * 0.1);
        let back = parse_tensor(&format_tensor(&t)).unwrap();
        assert_eq!(back.as_slice(), t.as_slice());
        let mut text = String::from("2\n");
        text.push_str("1 2\n2 3\n5 3\n3 4\n");
        assert!(parse_tensor(&text).is_err());
        assert!(parse_tensor("2\n1 2\n").is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(m in 1usize..5, n in 0usize..5, seed in any::<u64>()) {
            let mut s = seed;
            let a = DMatrix::from_fn(m, n, |_, _| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); (s >> 11) as f64 / 1e10 - 400.0 });
            prop_assert_eq!(decode_binary_matrix(&encode_binary_matrix(&a)).unwrap(), a);
        }
    }
}
