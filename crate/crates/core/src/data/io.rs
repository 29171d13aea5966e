//! Dataset file formats.
//!
//! Binary "DYTR v1" layout (all little-endian):
//!
//! ```text
//! b"DYTR" | u32 version=1 | u64 n_t | u64 n_s | f64 dt | u64 start_index | n_t*n_s f64 row-major
//! ```
//!
//! CSV: first line `# dynerr-csv v1 nt=<n_t> ns=<n_s> dt=<dt>` (a trailing
//! `start=<k>` token is written when the start index is nonzero), then one
//! comma-separated row per snapshot with 17 significant digits.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{DataError, TrajectoryDataset};

const MAGIC: &[u8; 4] = b"DYTR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 + 8;
const CSV_TAG: &str = "# dynerr-csv v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.csv` selects CSV, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string()
}

pub fn load_dataset(path: &Path, format: Format) -> Result<TrajectoryDataset, DataError> {
    match format {
        Format::Binary => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            decode_binary(&bytes, stem(path))
        }
        Format::Csv => {
            let file = fs::File::open(path).map_err(io_err(path))?;
            decode_csv(BufReader::new(file), stem(path), path)
        }
    }
}

pub fn save_dataset(
    dataset: &TrajectoryDataset,
    path: &Path,
    format: Format,
) -> Result<(), DataError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Binary => w.write_all(&encode_binary(dataset)),
        Format::Csv => write_csv(dataset, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(io_err(path))
}

pub(crate) fn encode_binary(ds: &TrajectoryDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + ds.as_slice().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.n_t() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.n_s() as u64).to_le_bytes());
    out.extend_from_slice(&ds.dt().to_le_bytes());
    out.extend_from_slice(&ds.start_index().to_le_bytes());
    for v in ds.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn decode_binary(bytes: &[u8], name: String) -> Result<TrajectoryDataset, DataError> {
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(DataError::Magic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(DataError::Version(version));
    }
    let n_t = u64_at(8) as usize;
    let n_s = u64_at(16) as usize;
    let dt = f64::from_bits(u64_at(24));
    let start_index = u64_at(32);
    let n_values = n_t
        .checked_mul(n_s)
        .ok_or_else(|| DataError::Header(format!("n_t={n_t} x n_s={n_s} overflows")))?;
    let expected = HEADER_LEN + n_values * 8;
    if bytes.len() != expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let states = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TrajectoryDataset::new(name, dt, n_s, start_index, states)
}

fn write_csv(ds: &TrajectoryDataset, w: &mut impl Write) -> std::io::Result<()> {
    write!(w, "{CSV_TAG} nt={} ns={} dt={}", ds.n_t(), ds.n_s(), ds.dt())?;
    if ds.start_index() != 0 {
        write!(w, " start={}", ds.start_index())?;
    }
    writeln!(w)?;
    let mut line = String::new();
    for row in ds.iter_rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

struct CsvHeader {
    n_t: usize,
    n_s: usize,
    dt: f64,
    start: u64,
}

fn parse_header(line: &str) -> Result<CsvHeader, DataError> {
    let rest = line
        .trim_end()
        .strip_prefix(CSV_TAG)
        .ok_or_else(|| DataError::Header(format!("expected '{CSV_TAG} ...', got {line:?}")))?;
    let (mut n_t, mut n_s, mut dt, mut start) = (None, None, None, 0u64);
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| DataError::Header(format!("bad token {tok:?}")))?;
        let bad = |_| DataError::Header(format!("bad value for {k}: {v:?}"));
        match k {
            "nt" => n_t = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "ns" => n_s = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "dt" => dt = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "start" => start = v.parse::<u64>().map_err(|e| bad(e.to_string()))?,
            _ => {}
        }
    }
    match (n_t, n_s, dt) {
        (Some(n_t), Some(n_s), Some(dt)) => Ok(CsvHeader { n_t, n_s, dt, start }),
        _ => Err(DataError::Header("missing nt, ns or dt".into())),
    }
}

fn decode_csv(
    reader: impl BufRead,
    name: String,
    path: &Path,
) -> Result<TrajectoryDataset, DataError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => parse_header(&l.map_err(io_err(path))?)?,
        None => return Err(DataError::Header("empty file".into())),
    };
    let mut states = Vec::with_capacity(header.n_t * header.n_s);
    let mut row = 0usize;
    for line in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut found = 0usize;
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                row,
                col,
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite { row, col, value: v });
            }
            states.push(v);
            found += 1;
        }
        if found != header.n_s {
            return Err(DataError::Ragged {
                row,
                expected: header.n_s,
                found,
            });
        }
        row += 1;
    }
    if row != header.n_t {
        return Err(DataError::RowCount {
            expected: header.n_t,
            found: row,
        });
    }
    TrajectoryDataset::new(name, header.dt, header.n_s, header.start, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<TrajectoryDataset, DataError> {
        decode_csv(Cursor::new(text), "t".into(), Path::new("t.csv"))
    }

    #[test]
    fn reads_small_csv() {
        let text = "# dynerr-csv v1 nt=3 ns=3 dt=0.01\n1,2,3\n4,5,6\n7,8,9\n";
        let ds = parse(text).unwrap();
        assert_eq!((ds.n_t(), ds.n_s(), ds.dt()), (3, 3, 0.01));
        assert_eq!(ds.row(2), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn nan_cell_is_reported() {
        let text = "# dynerr-csv v1 nt=2 ns=2 dt=1\n1,2\n3,NaN\n";
        let err = parse(text).unwrap_err();
        assert!(matches!(err, DataError::NonFinite { row: 1, col: 1, .. }), "{err}");
    }

    #[test]
    fn ragged_row_is_reported() {
        let text = "# dynerr-csv v1 nt=2 ns=2 dt=1\n1,2\n3\n";
        assert!(matches!(
            parse(text),
            Err(DataError::Ragged { row: 1, expected: 2, found: 1 })
        ));
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(parse("1,2\n"), Err(DataError::Header(_))));
        assert!(matches!(
            parse("# dynerr-csv v1 nt=1 dt=1\n1\n"),
            Err(DataError::Header(_))
        ));
    }

    #[test]
    fn header_carries_dt() {
        let ds = TrajectoryDataset::new("ks", 0.25, 2, 0, vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# dynerr-csv v1 nt=1 ns=2 dt=0.25\n"), "{text}");
    }

    #[test]
    fn binary_bad_magic_and_truncation() {
        let ds = TrajectoryDataset::new("x", 1.0, 1, 0, vec![1.0, 2.0]).unwrap();
        let mut b = encode_binary(&ds);
        let short = b[..b.len() - 3].to_vec();
        assert!(matches!(
            decode_binary(&short, "x".into()),
            Err(DataError::Truncated { .. })
        ));
        b[0] = b'X';
        assert!(matches!(decode_binary(&b, "x".into()), Err(DataError::Magic(_))));
    }

    fn finite_f64() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(f64::MIN_POSITIVE / 4.0),
            Just(-5e-324),
        ]
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            vals in proptest::collection::vec(finite_f64(), 1..40),
            start in 0u64..1000,
        ) {
            let ds = TrajectoryDataset::new("x", 0.01, 1, start, vals).unwrap();
            let back = decode_binary(&encode_binary(&ds), "x".into()).unwrap();
            let bits = |d: &TrajectoryDataset| d.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&ds), bits(&back));
            prop_assert_eq!(ds, back);
        }

        #[test]
        fn csv_round_trip_is_lossless(vals in proptest::collection::vec(finite_f64(), 2..40)) {
            let n = vals.len() / 2 * 2;
            let ds = TrajectoryDataset::new("t", 0.25, 2, 3, vals[..n].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf).unwrap();
            let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(ds, back);
        }
    }
}
