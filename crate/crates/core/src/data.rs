//! Stream sources: the stationary linear model, the Duffing map, and CSV
//! tables with per-dimension normalization.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt9;
use crate::rng::RngStream;
use crate::sample::Sample;

/// Initial conditions of the Duffing trajectory, `x_{-1}` and `x_0`.
pub const DUFFING_X_PREV: f64 = 0.9279;
pub const DUFFING_X0: f64 = 0.1727;

const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Stationary,
    Duffing,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub kind: StreamKind,
    /// Number of samples. For CSV input this caps the row count; 0 keeps
    /// every row.
    pub length: usize,
    /// Observation noise variance (stationary only).
    pub noise_var: f64,
    /// Correlation of the two Gaussian inputs (stationary only).
    pub rho: f64,
    pub seed: u64,
    pub path: Option<PathBuf>,
    pub has_header: bool,
    /// Target column index; `None` selects the last column.
    pub target_column: Option<usize>,
}

impl StreamSpec {
    pub fn stationary(length: usize, noise_var: f64, seed: u64) -> Self {
        Self {
            kind: StreamKind::Stationary,
            length,
            noise_var,
            rho: 0.5,
            seed,
            path: None,
            has_header: false,
            target_column: None,
        }
    }

    pub fn duffing(length: usize) -> Self {
        Self {
            kind: StreamKind::Duffing,
            length,
            noise_var: 0.0,
            rho: 0.0,
            seed: 0,
            path: None,
            has_header: false,
            target_column: None,
        }
    }

    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: StreamKind::Csv,
            length: 0,
            noise_var: 0.0,
            rho: 0.0,
            seed: 0,
            path: Some(path.into()),
            has_header: false,
            target_column: None,
        }
    }

    /// Materializes the stream.
    pub fn generate(&self) -> Result<Vec<Sample>> {
        match self.kind {
            StreamKind::Stationary => gen_stationary(self),
            StreamKind::Duffing => gen_duffing(self),
            StreamKind::Csv => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("csv stream needs a path".into()))?;
                let mut raw = load_csv(path, self.has_header, self.target_column)?;
                if self.length > 0 && self.length < raw.len() {
                    raw.truncate(self.length);
                }
                normalize_minmax(&raw)
            }
        }
    }
}

/// Stationary linear stream `d = x1 + x2 + 1 + noise`.
///
/// `(x1, x2)` are drawn from a zero-mean, unit-variance bivariate Gaussian
/// with correlation `rho` (draw order per round: two standard normals, mixed
/// as `x2 = rho z1 + sqrt(1 - rho^2) z2`), then min-max scaled over the
/// whole block into `[0, 1]`. The noise terms are drawn afterwards, one
/// standard normal per round scaled by `sqrt(noise_var)`.
pub fn gen_stationary(spec: &StreamSpec) -> Result<Vec<Sample>> {
    let t_len = spec.length;
    if t_len < 2 {
        return Err(Error::param("length", "stationary streams need T >= 2"));
    }
    if !(spec.noise_var >= 0.0) || !spec.noise_var.is_finite() {
        return Err(Error::param("noise_var", "must be finite and nonnegative"));
    }
    if !(spec.rho > -1.0 && spec.rho < 1.0) {
        return Err(Error::param("rho", "must lie in (-1, 1)"));
    }
    let mut rng = RngStream::new(spec.seed);
    let mix = (1.0 - spec.rho * spec.rho).sqrt();
    let mut pairs = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        let z1 = rng.normal();
        let z2 = rng.normal();
        pairs.push([z1, spec.rho * z1 + mix * z2]);
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &pairs {
        for j in 0..2 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    for j in 0..2 {
        if !(hi[j] > lo[j]) {
            return Err(Error::param(
                "length",
                format!("input coordinate {} is constant over the block", j + 1),
            ));
        }
    }
    let sd = spec.noise_var.sqrt();
    pairs
        .into_iter()
        .map(|p| {
            let x1 = (p[0] - lo[0]) / (hi[0] - lo[0]);
            let x2 = (p[1] - lo[1]) / (hi[1] - lo[1]);
            let noise = sd * rng.normal();
            Sample::new(vec![x1, x2, 1.0], x1 + x2 + 1.0 + noise)
        })
        .collect()
}

/// One step of the Duffing map: `2.75 x - x^3 - 0.2 x_prev`.
pub fn duffing_next(x: f64, x_prev: f64) -> f64 {
    2.75 * x - x * x * x - 0.2 * x_prev
}

/// Duffing stream: sample `t` has regressor `[x_{t-1}, x_t, 1]` and target
/// `x_{t+1}`, starting from the fixed initial conditions.
pub fn gen_duffing(spec: &StreamSpec) -> Result<Vec<Sample>> {
    gen_duffing_from(DUFFING_X_PREV, DUFFING_X0, spec.length)
}

pub fn gen_duffing_from(x_prev: f64, x0: f64, length: usize) -> Result<Vec<Sample>> {
    if length == 0 {
        return Err(Error::param("length", "must be at least 1"));
    }
    let (mut prev, mut cur) = (x_prev, x0);
    let mut out = Vec::with_capacity(length);
    for t in 0..length {
        let next = duffing_next(cur, prev);
        if !next.is_finite() || next.abs() > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                t: t + 1,
                value: next,
            });
        }
        out.push(Sample::new(vec![prev, cur, 1.0], next)?);
        prev = cur;
        cur = next;
    }
    Ok(out)
}

fn parse_cell(cell: &str) -> Option<f64> {
    let v: f64 = cell.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads a numeric table. The target column becomes `d`, the remaining
/// columns the regressor in order. No bias entry is added. Row numbers in
/// errors are 1-based file lines.
pub fn load_csv(
    path: &Path,
    has_header: bool,
    target_column: Option<usize>,
) -> Result<Vec<Sample>> {
    let csv_err = |row: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .from_reader(file);

    let mut width: Option<usize> = None;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            csv_err(row, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let ncols = record.len();
        match width {
            None => {
                if ncols < 2 {
                    return Err(csv_err(
                        row,
                        format!("need at least 2 columns, found {ncols}"),
                    ));
                }
                width = Some(ncols);
            }
            Some(w) if w != ncols => {
                return Err(csv_err(row, format!("expected {w} columns, found {ncols}")));
            }
            _ => {}
        }
        let target = target_column.unwrap_or(ncols - 1);
        if target >= ncols {
            return Err(csv_err(
                row,
                format!("target column {target} out of range for {ncols} columns"),
            ));
        }
        let mut x = Vec::with_capacity(ncols - 1);
        let mut d = 0.0;
        for (j, cell) in record.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| {
                csv_err(row, format!("column {j}: `{cell}` is not a finite number"))
            })?;
            if j == target {
                d = v;
            } else {
                x.push(v);
            }
        }
        out.push(Sample { x, d });
    }
    if out.is_empty() {
        return Err(csv_err(0, "no data rows".into()));
    }
    Ok(out)
}

/// Maps every regressor dimension and the target affinely onto `[-1, 1]`
/// using the block minimum and maximum, then appends the bias entry 1.
/// Constant dimensions map to 0.
pub fn normalize_minmax(samples: &[Sample]) -> Result<Vec<Sample>> {
    let first = samples.first().ok_or(Error::EmptyStream)?;
    let r = first.x.len();
    let cols = r + 1;
    let mut lo = vec![f64::INFINITY; cols];
    let mut hi = vec![f64::NEG_INFINITY; cols];
    for s in samples {
        if s.x.len() != r {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: s.x.len(),
            });
        }
        for (j, v) in s.x.iter().chain(std::iter::once(&s.d)).enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let map = |j: usize, u: f64| {
        let span = hi[j] - lo[j];
        if span > 0.0 {
            2.0 * (u - lo[j]) / span - 1.0
        } else {
            0.0
        }
    };
    Ok(samples
        .iter()
        .map(|s| {
            let mut x: Vec<f64> = s.x.iter().enumerate().map(|(j, &u)| map(j, u)).collect();
            x.push(1.0);
            Sample { x, d: map(r, s.d) }
        })
        .collect())
}

/// Writes samples as CSV rows `x_1, ..., x_r, d` with nine significant
/// digits and no header.
pub fn write_csv(samples: &[Sample], path: &Path) -> Result<()> {
    let mut buf = String::new();
    for s in samples {
        for v in &s.x {
            buf.push_str(&fmt9(*v));
            buf.push(',');
        }
        buf.push_str(&fmt9(s.d));
        buf.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn stationary_noiseless_identity_and_span() {
        let s = gen_stationary(&StreamSpec::stationary(500, 0.0, 7)).unwrap();
        assert_eq!(s.len(), 500);
        for smp in &s {
            assert_eq!(smp.x[2], 1.0);
            assert_eq!(smp.d, smp.x[0] + smp.x[1] + 1.0);
        }
        for j in 0..2 {
            let lo = s.iter().map(|v| v.x[j]).fold(f64::INFINITY, f64::min);
            let hi = s.iter().map(|v| v.x[j]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
        }
    }

    #[test]
    fn stationary_noise_variance() {
        let s = gen_stationary(&StreamSpec::stationary(10_000, 0.01, 1)).unwrap();
        let resid: Vec<f64> = s.iter().map(|v| v.d - (v.x[0] + v.x[1] + 1.0)).collect();
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.0094..=0.0106).contains(&var), "{var}");
    }

    #[test]
    fn stationary_reproducible_and_seed_sensitive() {
        let a = gen_stationary(&StreamSpec::stationary(100, 0.01, 3)).unwrap();
        let b = gen_stationary(&StreamSpec::stationary(100, 0.01, 3)).unwrap();
        let c = gen_stationary(&StreamSpec::stationary(100, 0.01, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stationary_rejects_bad_specs() {
        assert!(gen_stationary(&StreamSpec::stationary(1, 0.01, 3)).is_err());
        assert!(gen_stationary(&StreamSpec::stationary(10, -0.1, 3)).is_err());
        let mut spec = StreamSpec::stationary(10, 0.01, 3);
        spec.rho = 1.0;
        assert!(gen_stationary(&spec).is_err());
    }

    #[test]
    fn duffing_map_examples() {
        assert_eq!(duffing_next(0.0, 0.0), 0.0);
        assert!((duffing_next(0.1727, 0.9279) - 0.2841942).abs() < 1e-6);
        let fp = 1.55f64.sqrt();
        assert!((duffing_next(fp, fp) - fp).abs() < 1e-12);
        assert!((fp - 1.244990).abs() < 1e-6);
    }

    #[test]
    fn duffing_stream_shape() {
        let s = gen_duffing(&StreamSpec::duffing(5)).unwrap();
        assert_eq!(s[0].x, vec![0.9279, 0.1727, 1.0]);
        assert!((s[0].d - 0.2841942).abs() < 1e-6);
        for w in s.windows(2) {
            assert_eq!(w[1].x[0], w[0].x[1]);
            assert_eq!(w[1].x[1], w[0].d);
        }
        assert_eq!(s, gen_duffing(&StreamSpec::duffing(5)).unwrap());
        assert!(gen_duffing(&StreamSpec::duffing(0)).is_err());
    }

    #[test]
    fn duffing_long_run_bounded_and_consistent() {
        let s = gen_duffing(&StreamSpec::duffing(100_000)).unwrap();
        for smp in &s {
            assert!(smp.d.abs() < 3.0);
            assert_eq!(smp.d, duffing_next(smp.x[1], smp.x[0]));
        }
    }

    #[test]
    fn duffing_divergence_reported() {
        match gen_duffing_from(0.0, 50.0, 10) {
            Err(Error::Divergence { t, .. }) => assert!(t <= 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_parse_examples() {
        let f = write_tmp("0,5,1\n10,5,0\n");
        let s = load_csv(f.path(), false, None).unwrap();
        assert_eq!(
            s,
            vec![
                Sample {
                    x: vec![0.0, 5.0],
                    d: 1.0
                },
                Sample {
                    x: vec![10.0, 5.0],
                    d: 0.0
                },
            ]
        );

        let f = write_tmp("a,b,c\n0,5,1\n10,5,0\n");
        assert_eq!(load_csv(f.path(), true, None).unwrap().len(), 2);

        let f = write_tmp("1.5e1,-2,3\n");
        let s = load_csv(f.path(), false, Some(0)).unwrap();
        assert_eq!(
            s[0],
            Sample {
                x: vec![-2.0, 3.0],
                d: 15.0
            }
        );
    }

    #[test]
    fn csv_errors_name_rows() {
        let f = write_tmp("a,b,c\n");
        match load_csv(f.path(), false, None) {
            Err(Error::Csv { row, .. }) => assert_eq!(row, 1),
            other => panic!("{other:?}"),
        }
        let f = write_tmp("1,2,3\n4,5\n");
        match load_csv(f.path(), false, None) {
            Err(Error::Csv { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("columns"));
            }
            other => panic!("{other:?}"),
        }
        let f = write_tmp("");
        assert!(matches!(
            load_csv(f.path(), false, None),
            Err(Error::Csv { .. })
        ));
        let f = write_tmp("1,2\n");
        assert!(load_csv(f.path(), false, Some(5)).is_err());
        assert!(matches!(
            load_csv(Path::new("/nonexistent/x.csv"), false, None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn normalize_examples() {
        let raw: Vec<Sample> = [0.0, 5.0, 10.0]
            .iter()
            .map(|&u| Sample {
                x: vec![u, 7.0, u / 10.0 * 2.0 - 1.0],
                d: u,
            })
            .collect();
        let out = normalize_minmax(&raw).unwrap();
        let col0: Vec<f64> = out.iter().map(|s| s.x[0]).collect();
        assert_eq!(col0, vec![-1.0, 0.0, 1.0]);
        assert!(out.iter().all(|s| s.x[1] == 0.0));
        assert_eq!(out[0].x[2], -1.0);
        assert_eq!(out[2].x[2], 1.0);
        assert!(out.iter().all(|s| s.x.len() == 4 && s.x[3] == 1.0));
        assert_eq!(
            out.iter().map(|s| s.d).collect::<Vec<_>>(),
            vec![-1.0, 0.0, 1.0]
        );
        assert!(normalize_minmax(&[]).is_err());
    }

    proptest! {
        #[test]
        fn normalized_dims_hit_endpoints(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..40)
        ) {
            let raw: Vec<Sample> = rows
                .iter()
                .map(|r| Sample { x: r[..3].to_vec(), d: r[3] })
                .collect();
            let out = normalize_minmax(&raw).unwrap();
            for j in 0..4 {
                let get = |s: &Sample| if j < 3 { s.x[j] } else { s.d };
                let vals: Vec<f64> = out.iter().map(get).collect();
                prop_assert!(vals.iter().all(|v| (-1.0..=1.0).contains(v)));
                let raw_vals: Vec<f64> = raw.iter().map(get).collect();
                let constant = raw_vals.iter().all(|v| *v == raw_vals[0]);
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if constant {
                    prop_assert!(lo == 0.0 && hi == 0.0);
                } else {
                    prop_assert_eq!((lo, hi), (-1.0, 1.0));
                }
            }
        }
    }
}
