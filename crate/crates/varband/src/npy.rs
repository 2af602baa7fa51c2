//! Reader and writer for NumPy `.npy` files, version 1.0 only.
//!
//! The layout is a 6-byte magic, two version bytes, a little-endian u16
//! header length, then a Python dict literal padded with spaces so the
//! payload starts on a 64-byte boundary. We accept C-order arrays of
//! `<f8`, `<f4`, `<i8` and `<i4`, widening everything to f64, and treat
//! 1-D arrays as single-column matrices. The writer always emits `<f8`.
//!
//! Every length check happens before the bytes it guards are touched, so
//! cutting a valid file short at any point reports `TruncatedPayload`
//! rather than a garbled header or a silently wrong matrix.

use varband_core::Matrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NpyError {
    #[error("not an npy file: bad magic")]
    BadMagic,
    #[error("unsupported npy version {major}.{minor}, only 1.0 is handled")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("malformed npy header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {0:?}, expected <f8, <f4, <i8 or <i4")]
    UnsupportedDtype(String),
    #[error("fortran_order arrays are not supported")]
    FortranOrderUnsupported,
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinitePayload { row: usize, col: usize },
}

fn malformed(reason: impl Into<String>) -> NpyError {
    NpyError::MalformedHeader(reason.into())
}

/// Returns the value text following `'key':` in the header dict, or None
/// if the key is absent. The value runs to the end of the header; callers
/// parse just the prefix they understand.
fn value_after<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let marker = format!("'{key}':");
    let at = header.find(&marker)?;
    Some(header[at + marker.len()..].trim_start())
}

fn parse_descr(header: &str) -> Result<String, NpyError> {
    let rest = value_after(header, "descr").ok_or_else(|| malformed("missing 'descr'"))?;
    let mut chars = rest.chars();
    if chars.next() != Some('\'') {
        return Err(malformed("descr is not a quoted string"));
    }
    let rest = chars.as_str();
    let end = rest
        .find('\'')
        .ok_or_else(|| malformed("unterminated descr string"))?;
    Ok(rest[..end].to_string())
}

fn parse_fortran_order(header: &str) -> Result<bool, NpyError> {
    let rest =
        value_after(header, "fortran_order").ok_or_else(|| malformed("missing 'fortran_order'"))?;
    if rest.starts_with("False") {
        Ok(false)
    } else if rest.starts_with("True") {
        Ok(true)
    } else {
        Err(malformed("fortran_order is neither True nor False"))
    }
}

fn parse_shape(header: &str) -> Result<Vec<usize>, NpyError> {
    let rest = value_after(header, "shape").ok_or_else(|| malformed("missing 'shape'"))?;
    if !rest.starts_with('(') {
        return Err(malformed("shape is not a tuple"));
    }
    let end = rest
        .find(')')
        .ok_or_else(|| malformed("unterminated shape tuple"))?;
    let mut dims = Vec::new();
    for part in rest[1..end].split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let dim: usize = part
            .parse()
            .map_err(|_| malformed(format!("bad shape dimension {part:?}")))?;
        dims.push(dim);
    }
    Ok(dims)
}

fn decode(bytes: &[u8], descr: &str, out: &mut Vec<f64>) -> Result<(), NpyError> {
    match descr {
        "<f8" => {
            for chunk in bytes.chunks_exact(8) {
                out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        "<f4" => {
            for chunk in bytes.chunks_exact(4) {
                out.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        "<i8" => {
            for chunk in bytes.chunks_exact(8) {
                out.push(i64::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        "<i4" => {
            for chunk in bytes.chunks_exact(4) {
                out.push(i32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    }
    Ok(())
}

fn item_size(descr: &str) -> Result<usize, NpyError> {
    match descr {
        "<f8" | "<i8" => Ok(8),
        "<f4" | "<i4" => Ok(4),
        other => Err(NpyError::UnsupportedDtype(other.to_string())),
    }
}

pub fn parse_npy(bytes: &[u8]) -> Result<Matrix, NpyError> {
    if bytes.len() < 10 {
        return Err(NpyError::TruncatedPayload {
            expected: 10,
            got: bytes.len(),
        });
    }
    if &bytes[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(NpyError::TruncatedPayload {
            expected: data_start,
            got: bytes.len(),
        });
    }
    let header = core::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| malformed("header is not valid UTF-8"))?;

    let descr = parse_descr(header)?;
    if parse_fortran_order(header)? {
        return Err(NpyError::FortranOrderUnsupported);
    }
    let shape = parse_shape(header)?;
    let (rows, cols) = match shape.len() {
        1 => (shape[0], 1),
        2 => (shape[0], shape[1]),
        d => {
            return Err(malformed(format!(
                "{d}-dimensional arrays are not supported"
            )))
        }
    };

    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| malformed("shape overflows"))?;
    let payload = count
        .checked_mul(item_size(&descr)?)
        .ok_or_else(|| malformed("payload size overflows"))?;
    let expected = data_start + payload;
    if bytes.len() != expected {
        return Err(NpyError::TruncatedPayload {
            expected,
            got: bytes.len(),
        });
    }

    let mut data = Vec::with_capacity(count);
    decode(&bytes[data_start..], &descr, &mut data)?;
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(NpyError::NonFinitePayload {
                row: i / cols,
                col: i % cols,
            });
        }
    }
    Ok(Matrix::from_vec(rows, cols, data).expect("payload length was checked against the shape"))
}

pub fn write_npy(m: &Matrix) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        m.rows(),
        m.cols()
    );
    let unpadded = 10 + dict.len() + 1;
    let preamble = unpadded.div_ceil(PREAMBLE_ALIGN) * PREAMBLE_ALIGN;
    let header_len = preamble - 10;
    assert!(
        header_len <= u16::MAX as usize,
        "header cannot exceed a u16 length field"
    );

    let mut out = Vec::with_capacity(preamble + m.data().len() * 8);
    out.extend_from_slice(MAGIC);
    out.push(1);
    out.push(0);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(preamble - 1, b' ');
    out.push(b'\n');
    for &v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use varband_core::SplitRng;

    /// The reference layout for a 1x1 float64 array, assembled by hand:
    /// a 128-byte preamble (59-char dict, 58 spaces, newline) plus one
    /// 8-byte value.
    fn oracle_1x1(value: f64) -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"\x93NUMPY");
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&118u16.to_le_bytes());
        bytes.extend_from_slice(b"{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1), }");
        bytes.extend_from_slice(&[b' '; 58]);
        bytes.push(b'\n');
        assert_eq!(bytes.len(), 128);
        bytes.extend_from_slice(&value.to_le_bytes());
        bytes
    }

    /// Hand-assembled file with an arbitrary header dict and raw payload.
    fn with_header(dict: &str, payload: &[u8]) -> Vec<u8> {
        let unpadded = 10 + dict.len() + 1;
        let preamble = unpadded.div_ceil(64) * 64;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"\x93NUMPY");
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&((preamble - 10) as u16).to_le_bytes());
        bytes.extend_from_slice(dict.as_bytes());
        bytes.resize(preamble - 1, b' ');
        bytes.push(b'\n');
        bytes.extend_from_slice(payload);
        bytes
    }

    #[test]
    fn parses_the_hand_assembled_minimal_file() {
        let m = parse_npy(&oracle_1x1(42.5)).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.get(0, 0), 42.5);
    }

    #[test]
    fn writer_matches_the_hand_assembled_oracle() {
        let m = Matrix::from_vec(1, 1, vec![42.5]).unwrap();
        let bytes = write_npy(&m);
        assert_eq!(bytes.len(), 136);
        assert_eq!(bytes, oracle_1x1(42.5));
    }

    #[test]
    fn writer_emits_the_expected_shape_text() {
        let m = Matrix::zeros(2, 3);
        let bytes = write_npy(&m);
        let header = core::str::from_utf8(&bytes[10..bytes.len() - 48]).unwrap();
        assert!(header.contains("'shape': (2, 3)"), "header was {header:?}");
        assert_eq!(
            bytes.len() % 64,
            48,
            "payload should start on a 64-byte boundary"
        );
    }

    #[test]
    fn roundtrips_random_matrices() {
        let mut rng = SplitRng::seed_from(11);
        for _ in 0..100 {
            let rows = rng.uniform_usize(1, 40);
            let cols = rng.uniform_usize(1, 8);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal() * 100.0).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let back = parse_npy(&write_npy(&m)).unwrap();
            assert_eq!(back.rows(), m.rows());
            assert_eq!(back.cols(), m.cols());
            assert_eq!(
                back.data(),
                m.data(),
                "f64 payloads must roundtrip bit-exactly"
            );
        }
    }

    #[test]
    fn one_dimensional_arrays_become_single_columns() {
        let payload: Vec<u8> = [1.0f64, 2.0, 3.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let bytes = with_header(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }",
            &payload,
        );
        let m = parse_npy(&bytes).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 1));
        assert_eq!(m.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn narrow_dtypes_widen_to_f64() {
        let f4: Vec<u8> = [1.5f32, -2.0]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let m = parse_npy(&with_header(
            "{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }",
            &f4,
        ))
        .unwrap();
        assert_eq!(m.data(), &[1.5, -2.0]);

        let i8: Vec<u8> = [7i64, -9].iter().flat_map(|v| v.to_le_bytes()).collect();
        let m = parse_npy(&with_header(
            "{'descr': '<i8', 'fortran_order': False, 'shape': (2,), }",
            &i8,
        ))
        .unwrap();
        assert_eq!(m.data(), &[7.0, -9.0]);

        let i4: Vec<u8> = [3i32, -4].iter().flat_map(|v| v.to_le_bytes()).collect();
        let m = parse_npy(&with_header(
            "{'descr': '<i4', 'fortran_order': False, 'shape': (2,), }",
            &i4,
        ))
        .unwrap();
        assert_eq!(m.data(), &[3.0, -4.0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = oracle_1x1(0.0);
        bytes[5] = b'Z';
        assert_eq!(parse_npy(&bytes), Err(NpyError::BadMagic));
    }

    #[test]
    fn rejects_other_versions() {
        let mut bytes = oracle_1x1(0.0);
        bytes[6] = 2;
        assert_eq!(
            parse_npy(&bytes),
            Err(NpyError::UnsupportedVersion { major: 2, minor: 0 })
        );
    }

    #[test]
    fn rejects_unknown_dtypes() {
        let bytes = with_header(
            "{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }",
            &0.0f64.to_le_bytes(),
        );
        assert_eq!(
            parse_npy(&bytes),
            Err(NpyError::UnsupportedDtype(">f8".to_string()))
        );
    }

    #[test]
    fn rejects_fortran_order() {
        let bytes = with_header(
            "{'descr': '<f8', 'fortran_order': True, 'shape': (1,), }",
            &0.0f64.to_le_bytes(),
        );
        assert_eq!(parse_npy(&bytes), Err(NpyError::FortranOrderUnsupported));
    }

    #[test]
    fn rejects_higher_rank_shapes() {
        let bytes = with_header(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }",
            &0.0f64.to_le_bytes(),
        );
        assert!(matches!(
            parse_npy(&bytes),
            Err(NpyError::MalformedHeader(_))
        ));
    }

    #[test]
    fn rejects_headers_missing_keys() {
        for dict in [
            "{'fortran_order': False, 'shape': (1,), }",
            "{'descr': '<f8', 'shape': (1,), }",
            "{'descr': '<f8', 'fortran_order': False, }",
            "{'descr': '<f8', 'fortran_order': False, 'shape': (x,), }",
            "{'descr': <f8, 'fortran_order': False, 'shape': (1,), }",
        ] {
            let bytes = with_header(dict, &0.0f64.to_le_bytes());
            assert!(
                matches!(parse_npy(&bytes), Err(NpyError::MalformedHeader(_))),
                "dict {dict:?} should be rejected"
            );
        }
    }

    #[test]
    fn every_prefix_of_a_valid_file_is_a_truncation_error() {
        let m = Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = write_npy(&m);
        for len in 0..bytes.len() {
            match parse_npy(&bytes[..len]) {
                Err(NpyError::TruncatedPayload { .. }) => {}
                other => panic!("prefix of {len} bytes parsed as {other:?}"),
            }
        }
    }

    #[test]
    fn trailing_garbage_is_a_length_mismatch() {
        let mut bytes = oracle_1x1(1.0);
        bytes.push(0);
        assert_eq!(
            parse_npy(&bytes),
            Err(NpyError::TruncatedPayload {
                expected: 136,
                got: 137
            })
        );
    }

    #[test]
    fn non_finite_values_are_located() {
        let payload: Vec<u8> = [0.0f64, f64::NAN, 0.0, f64::INFINITY]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let bytes = with_header(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }",
            &payload,
        );
        assert_eq!(
            parse_npy(&bytes),
            Err(NpyError::NonFinitePayload { row: 0, col: 1 })
        );
    }

    #[test]
    fn empty_shapes_parse_to_empty_matrices() {
        let bytes = with_header(
            "{'descr': '<f8', 'fortran_order': False, 'shape': (0, 4), }",
            &[],
        );
        let m = parse_npy(&bytes).unwrap();
        assert_eq!((m.rows(), m.cols()), (0, 4));
    }
}
