//! Feature files, CSV tables and run configuration.
//!
//! Feature file layout, all integers and floats little-endian:
//!
//! ```text
//! "MNCE" | version: u32 = 1 | layer_count: u32
//! per layer: layer_id: u32 | n_patches: u32 | dim: u32 | n_patches * dim f32, row-major
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::losses::{LayeredFeatureSet, LossConfig, Mode};
use crate::weighting::Strategy;

pub const MAGIC: [u8; 4] = *b"MNCE";
pub const VERSION: u32 = 1;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed write never leaves a partial file behind.
fn atomic_write(
    path: &Path,
    fill: impl FnOnce(&mut fs::File) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    fill(tmp.as_file_mut()).map_err(|e| Error::io(path, e))?;
    tmp.as_file_mut().flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn encode_features(lfs: &LayeredFeatureSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(lfs.layers().len() as u32).to_le_bytes());
    for layer in lfs.layers() {
        out.extend_from_slice(&layer.layer_id.to_le_bytes());
        out.extend_from_slice(&(layer.n_patches() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.dim() as u32).to_le_bytes());
        for v in layer.data().iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_features(path: impl AsRef<Path>, lfs: &LayeredFeatureSet) -> Result<()> {
    let bytes = encode_features(lfs);
    atomic_write(path.as_ref(), |f| f.write_all(&bytes))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: impl FnOnce() -> String) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::TruncatedFile(format!(
                "{} (needs {len} bytes at offset {}, file has {})",
                what(),
                self.pos,
                self.buf.len()
            ))),
        }
    }

    fn u32(&mut self, what: impl FnOnce() -> String) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a feature file image. Rows are normalized on load.
pub fn decode_features(buf: &[u8]) -> Result<LayeredFeatureSet> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.take(4, || "header magic".into())?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(Error::BadMagic { found });
    }
    let version = cur.u32(|| "header version".into())?;
    if version != VERSION {
        return Err(Error::BadVersion(version));
    }
    let count = cur.u32(|| "header layer count".into())? as usize;

    let mut layers = Vec::new();
    for k in 0..count {
        let layer_id = cur.u32(|| format!("layer {k} id"))?;
        let n = cur.u32(|| format!("layer {k} patch count"))? as usize;
        let d = cur.u32(|| format!("layer {k} dim"))? as usize;
        let len = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::TruncatedFile(format!("layer {k} declares {n}x{d} values")))?;
        let raw = cur.take(len, || format!("layer {k} data"))?;
        let data = Array2::from_shape_fn((n, d), |(i, j)| {
            let o = 4 * (i * d + j);
            f32::from_le_bytes([raw[o], raw[o + 1], raw[o + 2], raw[o + 3]]) as f64
        });
        let fs = FeatureSet::new(data, layer_id).map_err(|e| Error::in_layer(k, e))?;
        layers.push(fs);
    }
    if cur.pos != buf.len() {
        return Err(Error::TrailingBytes(buf.len() - cur.pos));
    }
    LayeredFeatureSet::new(layers)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<LayeredFeatureSet> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&buf)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `Display` for f64 is the shortest string that parses back exactly.
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A rectangular table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} cells, table has {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }
}

/// Header line then one line per row, `\n` terminated.
pub fn write_csv(path: impl AsRef<Path>, table: &Table) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut bytes);
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        w.write_record(&table.columns).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|c| c.to_string()))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    atomic_write(path, |f| f.write_all(&bytes))
}

/// Parsed `key=value` run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub seed: u64,
}

fn parse_positive(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("{key}: {v:?} is not a number"),
    })?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Config {
            line,
            msg: format!("{key} must be a finite positive number, got {v}"),
        });
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        msg: format!("{key}: {v:?} is not a nonnegative integer"),
    })
}

impl RunConfig {
    /// Parses UTF-8 `key=value` lines. Blank lines and `#` comments are
    /// skipped; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key=value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key {key}"),
                });
            }
            let at_line = |e: Error| Error::Config {
                line,
                msg: e.to_string(),
            };
            match key {
                "tau" => cfg.loss.tau = parse_positive(line, key, value)?,
                "beta" => cfg.loss.beta = parse_positive(line, key, value)?,
                "q" => cfg.loss.q = parse_positive(line, key, value)?,
                "epsilon" => cfg.loss.sinkhorn.epsilon = parse_positive(line, key, value)?,
                "tol" => cfg.loss.sinkhorn.tol = parse_positive(line, key, value)?,
                "max_iter" => {
                    cfg.loss.sinkhorn.max_iter = parse_int(line, key, value)?;
                    if cfg.loss.sinkhorn.max_iter == 0 {
                        return Err(Error::Config {
                            line,
                            msg: "max_iter must be at least 1".into(),
                        });
                    }
                }
                "strategy" => cfg.loss.strategy = value.parse::<Strategy>().map_err(at_line)?,
                "mode" => cfg.loss.mode = value.parse::<Mode>().map_err(at_line)?,
                "bidirectional" => {
                    cfg.loss.bidirectional = match value {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        other => {
                            return Err(Error::Config {
                                line,
                                msg: format!(
                                    "bidirectional: expected true or false, got {other:?}"
                                ),
                            })
                        }
                    }
                }
                "seed" => cfg.seed = parse_int(line, key, value)?,
                other => {
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let l = &self.loss;
        format!(
            "tau={}\nbeta={}\nq={}\nstrategy={}\nmode={}\nepsilon={}\ntol={}\nmax_iter={}\nbidirectional={}\nseed={}\n",
            l.tau,
            l.beta,
            l.q,
            l.strategy,
            l.mode,
            l.sinkhorn.epsilon,
            l.sinkhorn.tol,
            l.sinkhorn.max_iter,
            l.bidirectional,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::random_unit_rows;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_layers() -> LayeredFeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_unit_rows(&mut rng, 4, 3);
        let mut b = random_unit_rows(&mut rng, 4, 5);
        b.layer_id = 7;
        LayeredFeatureSet::new(vec![a, b]).unwrap()
    }

    #[test]
    fn hand_built_file_parses() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"MNCE");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        for (id, n, d) in [(1u32, 4u32, 3u32), (4, 4, 3)] {
            buf.extend_from_slice(&id.to_le_bytes());
            buf.extend_from_slice(&n.to_le_bytes());
            buf.extend_from_slice(&d.to_le_bytes());
            for k in 0..n * d {
                buf.extend_from_slice(&((k + id) as f32).to_le_bytes());
            }
        }
        let lfs = decode_features(&buf).unwrap();
        assert_eq!(lfs.layer_ids(), vec![1, 4]);
        for l in lfs.layers() {
            assert_eq!((l.n_patches(), l.dim()), (4, 3));
        }
        // Row 0 of layer 1 is [1, 2, 3] before normalization.
        let norm = 14f64.sqrt();
        let row = lfs.layers()[0].data().row(0);
        for (c, v) in row.iter().enumerate() {
            assert!((v - (c + 1) as f64 / norm).abs() < 1e-7);
        }
    }

    #[test]
    fn header_errors() {
        let good = encode_features(&two_layers());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_features(&bad), Err(Error::BadMagic { .. })));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_features(&bad), Err(Error::BadVersion(2))));
        assert!(matches!(
            decode_features(&good[..2]),
            Err(Error::TruncatedFile(_))
        ));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            decode_features(&long),
            Err(Error::TrailingBytes(1))
        ));
    }

    #[test]
    fn truncation_names_layer() {
        let good = encode_features(&two_layers());
        let cut = &good[..good.len() - 6];
        match decode_features(cut) {
            Err(Error::TruncatedFile(msg)) => assert!(msg.contains("layer 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_row_and_nan_name_layer_and_row() {
        let mut buf = encode_features(&two_layers());
        // Layer 0 data starts after the 12-byte file header and 12-byte layer header.
        let row2 = 24 + 2 * 3 * 4;
        for b in &mut buf[row2..row2 + 12] {
            *b = 0;
        }
        match decode_features(&buf) {
            Err(e @ Error::InLayer { layer: 0, .. }) => {
                assert!(matches!(e.root(), Error::ZeroRow { row: 2 }))
            }
            other => panic!("{other:?}"),
        }
        let mut buf = encode_features(&two_layers());
        let layer1 = 24 + 4 * 3 * 4 + 12;
        buf[layer1 + 4..layer1 + 8].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_features(&buf) {
            Err(e @ Error::InLayer { layer: 1, .. }) => {
                assert!(matches!(e.root(), Error::NonFinite { row: 0, col: 1 }))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.mnce");
        let lfs = two_layers();
        write_features(&path, &lfs).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back.layer_ids(), lfs.layer_ids());
        for (a, b) in lfs.layers().iter().zip(back.layers()) {
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_features("/nonexistent/dir/f.mnce").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/f.mnce"));
    }

    #[test]
    fn csv_one_by_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(["loss"]);
        t.push(vec![0.1.into()]).unwrap();
        write_csv(&path, &t).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "loss\n0.1\n");
    }

    #[test]
    fn csv_floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let vals = [1.0 / 3.0, 1e-300, -2.5e17, 0.07];
        let mut t = Table::new(["beta", "q", "mode", "loss"]);
        t.push(vec![
            vals[0].into(),
            vals[1].into(),
            "monce".into(),
            vals[2].into(),
        ])
        .unwrap();
        t.push(vec![
            vals[3].into(),
            1.0.into(),
            "patchnce".into(),
            0.0.into(),
        ])
        .unwrap();
        write_csv(&path, &t).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "beta,q,mode,loss");
        let first: Vec<f64> = lines[1].split(',').filter_map(|c| c.parse().ok()).collect();
        assert_eq!(first, vec![vals[0], vals[1], vals[2]]);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn ragged_row_rejected() {
        let mut t = Table::new(["a", "b"]);
        assert!(t.push(vec![1.0.into()]).is_err());
    }

    #[test]
    fn config_parse_and_print() {
        let text = "# defaults\ntau=0.07\nbeta = 0.1\nq=1\nstrategy=easy\nmode=weightnce\n\nepsilon=0.05\ntol=1e-6\nmax_iter=500\nbidirectional=true\nseed=42\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.loss.tau, 0.07);
        assert_eq!(cfg.loss.strategy, Strategy::Easy);
        assert_eq!(cfg.loss.mode, Mode::WeightNce);
        assert_eq!(cfg.loss.sinkhorn.max_iter, 500);
        assert!(cfg.loss.bidirectional);
        assert_eq!(cfg.seed, 42);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn config_errors_name_line() {
        for (text, line) in [
            ("tau=0.07\ngamma=1\n", 2),
            ("beta=-0.1\n", 1),
            ("q=abc\n", 1),
            ("\n\nmode=infonce\n", 3),
            ("tau=0.1\ntau=0.2\n", 2),
            ("strategy\n", 1),
            ("max_iter=0\n", 1),
            ("bidirectional=maybe\n", 1),
            ("epsilon=inf\n", 1),
        ] {
            match RunConfig::parse(text) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }
}
