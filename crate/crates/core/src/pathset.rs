//! Sample-path sets, coverage semantics, empirical quantiles and the naive
//! pointwise band.
//!
//! A path set is an `n x H` matrix stored row-major: row `i` is the `i`-th
//! simulated trajectory, column `t` its value at time step `t + 1`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Tolerance used when deciding whether a real-valued rank such as `n(1-a)`
/// is an integer.
const INTEGRAL_TOL: f64 = 1e-9;

pub(crate) fn ceil_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= INTEGRAL_TOL * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

pub(crate) fn floor_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= INTEGRAL_TOL * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

/// `n` sample paths over a common horizon of `H` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePathSet {
    n: usize,
    h: usize,
    values: Vec<f64>,
}

impl SamplePathSet {
    /// Builds a set from a row-major buffer of `n * h` finite values.
    pub fn from_flat(n: usize, h: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        if h == 0 {
            return Err(domain("horizon must be at least 1"));
        }
        if values.len() != n * h {
            return Err(Error::Dimension {
                expected: n * h,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: pos / h + 1,
                message: format!("non-finite value in column t{}", pos % h + 1),
            });
        }
        Ok(Self { n, h, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty)?;
        let h = first.as_ref().len();
        let mut values = Vec::with_capacity(rows.len() * h);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != h {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("expected {h} values, found {}", row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(rows.len(), h, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.h
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.values[i * self.h..(i + 1) * self.h]
    }

    #[inline]
    pub fn value(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.h + t]
    }

    pub fn paths(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.h)
    }

    /// Values of every path at step `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, t)).collect()
    }

    /// New set holding the listed paths, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.h);
        for &i in indices {
            if i >= self.n {
                return Err(domain(format!("path index {i} out of range (n = {})", self.n)));
            }
            values.extend_from_slice(self.path(i));
        }
        Self::from_flat(indices.len(), self.h, values)
    }
}

/// Reads a path set from CSV: one header row, then one row per path.
pub fn load_paths<R: std::io::Read>(source: R) -> Result<SamplePathSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let h = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .len();
    if h == 0 {
        return Err(Error::Parse {
            row: 0,
            message: "empty header".into(),
        });
    }
    let mut values = Vec::new();
    let mut n = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != h {
            return Err(Error::Parse {
                row,
                message: format!("expected {h} fields, found {}", record.len()),
            });
        }
        for (t, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column t{}: cannot parse {cell:?} as a number", t + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    message: format!("column t{}: non-finite value {cell:?}", t + 1),
                });
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    SamplePathSet::from_flat(n, h, values)
}

pub fn load_paths_file(path: &std::path::Path) -> Result<SamplePathSet> {
    let file = std::fs::File::open(path)?;
    load_paths(std::io::BufReader::new(file))
}

/// Writes the set as CSV with a `t1,...,tH` header. Values use the shortest
/// representation that parses back to the identical `f64`.
pub fn save_paths<W: Write>(set: &SamplePathSet, sink: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(sink);
    let header: Vec<String> = (1..=set.horizon()).map(|t| format!("t{t}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for path in set.paths() {
        let mut first = true;
        for v in path {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_paths_file(set: &SamplePathSet, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    save_paths(set, file)
}

/// Reads a single path (one header row and one data row, or a bare
/// single-row CSV body after the header).
pub fn load_single_path<R: BufRead>(source: R) -> Result<Vec<f64>> {
    let set = load_paths(source)?;
    if set.n() != 1 {
        return Err(domain(format!("expected exactly one path, found {}", set.n())));
    }
    Ok(set.path(0).to_vec())
}

/// How per-step quantiles are estimated from the `n` values at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMethod {
    /// Upper: the `ceil(n(1-a/2))`-th smallest; lower: the
    /// `(floor(n a/2)+1)`-th smallest. Never leaves the observed values.
    #[default]
    OrderStatistic,
    /// Linear interpolation between order statistics at rank `(n-1)p`.
    Linear,
}

impl std::str::FromStr for QuantileMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "order-statistic" => Ok(Self::OrderStatistic),
            "linear" => Ok(Self::Linear),
            other => Err(domain(format!("unknown quantile method {other:?}"))),
        }
    }
}

/// Per-step upper and lower quantile estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileBounds {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub alpha: f64,
}

impl QuantileBounds {
    pub fn horizon(&self) -> usize {
        self.upper.len()
    }
}

fn order_statistic(sorted: &[f64], rank: usize) -> f64 {
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn linear_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn empirical_quantiles(set: &SamplePathSet, alpha: f64) -> Result<QuantileBounds> {
    empirical_quantiles_with(set, alpha, QuantileMethod::OrderStatistic)
}

pub fn empirical_quantiles_with(
    set: &SamplePathSet,
    alpha: f64,
    method: QuantileMethod,
) -> Result<QuantileBounds> {
    check_alpha(alpha)?;
    let n = set.n();
    let upper_rank = ceil_snap(n as f64 * (1.0 - alpha / 2.0)) as usize;
    let lower_rank = floor_snap(n as f64 * alpha / 2.0) as usize + 1;
    let mut upper = Vec::with_capacity(set.horizon());
    let mut lower = Vec::with_capacity(set.horizon());
    let mut column = Vec::with_capacity(n);
    for t in 0..set.horizon() {
        column.clear();
        column.extend((0..n).map(|i| set.value(i, t)));
        column.sort_by(f64::total_cmp);
        let (u, l) = match method {
            QuantileMethod::OrderStatistic => (
                order_statistic(&column, upper_rank),
                order_statistic(&column, lower_rank),
            ),
            QuantileMethod::Linear => (
                linear_quantile(&column, 1.0 - alpha / 2.0),
                linear_quantile(&column, alpha / 2.0),
            ),
        };
        upper.push(u);
        lower.push(l.min(u));
    }
    Ok(QuantileBounds {
        upper,
        lower,
        alpha,
    })
}

/// A pair of envelopes `(lower, upper)` over `H` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    lower: Vec<f64>,
    upper: Vec<f64>,
    alpha: f64,
    gamma: Option<f64>,
    width: f64,
}

impl ConfidenceBand {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, alpha: f64, gamma: Option<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(domain("band horizon must be at least 1"));
        }
        if let Some(t) = (0..lower.len()).find(|&t| lower[t].partial_cmp(&upper[t]).is_none_or(|o| o.is_gt())) {
            return Err(domain(format!(
                "lower exceeds upper at t{} ({} > {})",
                t + 1,
                lower[t],
                upper[t]
            )));
        }
        if let Some(g) = gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(domain(format!("gamma must lie in [0,1], got {g}")));
            }
        }
        let width = lower.iter().zip(&upper).map(|(l, u)| u - l).sum();
        Ok(Self {
            lower,
            upper,
            alpha,
            gamma,
            width,
        })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn horizon(&self) -> usize {
        self.lower.len()
    }

    pub(crate) fn covers_unchecked(&self, path: &[f64]) -> bool {
        path.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Steps (1-based) at which `path` leaves the band.
    pub fn violations(&self, path: &[f64]) -> Result<Vec<usize>> {
        check_len(self.horizon(), path.len())?;
        Ok((0..path.len())
            .filter(|&t| path[t] < self.lower[t] || path[t] > self.upper[t])
            .map(|t| t + 1)
            .collect())
    }

    pub fn to_json(&self, set: Option<&SamplePathSet>) -> BandJson {
        let (covered_count, n) = match set {
            Some(s) if s.horizon() == self.horizon() => {
                (s.paths().filter(|p| self.covers_unchecked(p)).count(), s.n())
            }
            _ => (0, 0),
        };
        BandJson {
            alpha: self.alpha,
            gamma: self.gamma,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            width: self.width,
            covered_count,
            n,
            horizon: self.horizon(),
        }
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

/// Coverage in the inclusive sense: `l_t <= x_t <= u_t` at every step.
pub fn is_covered(band: &ConfidenceBand, path: &[f64]) -> Result<bool> {
    check_len(band.horizon(), path.len())?;
    Ok(band.covers_unchecked(path))
}

pub fn covered_count(band: &ConfidenceBand, set: &SamplePathSet) -> Result<usize> {
    check_len(band.horizon(), set.horizon())?;
    Ok(set.paths().filter(|p| band.covers_unchecked(p)).count())
}

pub fn coverage_rate(band: &ConfidenceBand, set: &SamplePathSet) -> Result<f64> {
    Ok(covered_count(band, set)? as f64 / set.n() as f64)
}

pub fn naive_band(set: &SamplePathSet, alpha: f64) -> Result<ConfidenceBand> {
    let q = empirical_quantiles(set, alpha)?;
    ConfidenceBand::new(q.lower, q.upper, alpha, None)
}

/// Per-step maximum and minimum over the listed paths.
pub fn envelope(set: &SamplePathSet, subset: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if subset.is_empty() {
        return Err(domain("envelope of an empty subset"));
    }
    let mut hi = vec![f64::NEG_INFINITY; set.horizon()];
    let mut lo = vec![f64::INFINITY; set.horizon()];
    for &i in subset {
        if i >= set.n() {
            return Err(domain(format!("path index {i} out of range (n = {})", set.n())));
        }
        for (t, &x) in set.path(i).iter().enumerate() {
            hi[t] = hi[t].max(x);
            lo[t] = lo[t].min(x);
        }
    }
    Ok((hi, lo))
}

/// Serialized form of a band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandJson {
    pub alpha: f64,
    pub gamma: Option<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub width: f64,
    pub covered_count: usize,
    pub n: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
}

impl BandJson {
    pub fn to_band(&self) -> Result<ConfidenceBand> {
        ConfidenceBand::new(self.lower.clone(), self.upper.clone(), self.alpha, self.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> SamplePathSet {
        SamplePathSet::from_rows(rows).unwrap()
    }

    fn band(l: &[f64], u: &[f64]) -> ConfidenceBand {
        ConfidenceBand::new(l.to_vec(), u.to_vec(), 0.1, None).unwrap()
    }

    #[test]
    fn load_two_by_two() {
        let s = load_paths("t1,t2\n0,1\n2,3".as_bytes()).unwrap();
        assert_eq!((s.n(), s.horizon()), (2, 2));
        assert_eq!(s.path(0), &[0.0, 1.0]);
        assert_eq!(s.path(1), &[2.0, 3.0]);
    }

    #[test]
    fn load_header_only_is_empty() {
        let err = load_paths("t1,t2\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "no data rows");
    }

    #[test]
    fn load_single_column() {
        let s = load_paths("t1\n1\n2\n3".as_bytes()).unwrap();
        assert_eq!((s.n(), s.horizon()), (3, 1));
    }

    #[test]
    fn load_ragged_row_names_row() {
        match load_paths("t1,t2\n0,1\n2\n".as_bytes()).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn load_bad_cell_names_cell() {
        let err = load_paths("t1,t2\n0,abc\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("t2") && msg.contains("abc"), "{msg}");
    }

    #[test]
    fn load_rejects_nan() {
        assert!(load_paths("t1\nNaN\n".as_bytes()).is_err());
        assert!(load_paths("t1\ninf\n".as_bytes()).is_err());
    }

    #[test]
    fn save_is_bit_exact() {
        let s = set(&[&[0.1, 1.0 / 3.0], &[-2.5e-17, 123456789.12345679]]);
        let mut buf = Vec::new();
        save_paths(&s, &mut buf).unwrap();
        let back = load_paths(buf.as_slice()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn coverage_examples() {
        let b = band(&[0.0, 0.0], &[2.0, 2.0]);
        assert!(is_covered(&b, &[1.0, 1.0]).unwrap());
        assert!(!is_covered(&b, &[1.0, 3.0]).unwrap());
        assert!(is_covered(&b, &[0.0, 2.0]).unwrap());
        assert!(matches!(is_covered(&b, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn coverage_rate_examples() {
        let s = set(&[&[0.0, 1.0], &[1.0, 1.0], &[2.0, 0.5]]);
        assert_eq!(coverage_rate(&band(&[-1.0, 0.0], &[3.0, 2.0]), &s).unwrap(), 1.0);
        assert_eq!(coverage_rate(&band(&[-2.0, 0.0], &[-1.0, 2.0]), &s).unwrap(), 0.0);
        let s4 = set(&[&[0.0], &[1.0], &[2.0], &[5.0]]);
        assert_eq!(coverage_rate(&band(&[0.0], &[2.0]), &s4).unwrap(), 0.75);
    }

    #[test]
    fn quantiles_one_to_ten() {
        let rows: Vec<Vec<f64>> = (1..=10).map(|v| vec![v as f64]).collect();
        let q = empirical_quantiles(&SamplePathSet::from_rows(&rows).unwrap(), 0.2).unwrap();
        assert_eq!(q.upper, vec![9.0]);
        assert_eq!(q.lower, vec![2.0]);
    }

    #[test]
    fn quantiles_constant_and_pair() {
        let q = empirical_quantiles(&set(&[&[4.0], &[4.0], &[4.0]]), 0.3).unwrap();
        assert_eq!((q.upper[0], q.lower[0]), (4.0, 4.0));
        let q = empirical_quantiles(&set(&[&[1.0], &[0.0]]), 0.5).unwrap();
        assert_eq!((q.upper[0], q.lower[0]), (1.0, 0.0));
    }

    #[test]
    fn quantiles_reject_bad_alpha() {
        let s = set(&[&[1.0], &[0.0]]);
        assert!(empirical_quantiles(&s, 0.0).is_err());
        assert!(empirical_quantiles(&s, 1.0).is_err());
    }

    #[test]
    fn quantile_rank_snaps_float_noise() {
        // 100 * 0.95 is not exactly 95 in binary; the rank must still be 95.
        let rows: Vec<Vec<f64>> = (1..=100).map(|v| vec![v as f64]).collect();
        let q = empirical_quantiles(&SamplePathSet::from_rows(&rows).unwrap(), 0.1).unwrap();
        assert_eq!(q.upper, vec![95.0]);
        assert_eq!(q.lower, vec![6.0]);
    }

    #[test]
    fn linear_quantiles_interpolate() {
        let rows: Vec<Vec<f64>> = (0..=10).map(|v| vec![v as f64]).collect();
        let s = SamplePathSet::from_rows(&rows).unwrap();
        let q = empirical_quantiles_with(&s, 0.1, QuantileMethod::Linear).unwrap();
        assert!((q.upper[0] - 9.5).abs() < 1e-12);
        assert!((q.lower[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn naive_band_of_constant_set() {
        let s = set(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let b = naive_band(&s, 0.2).unwrap();
        assert_eq!(b.width(), 0.0);
        assert_eq!(coverage_rate(&b, &s).unwrap(), 1.0);
    }

    #[test]
    fn envelope_examples() {
        let s = set(&[&[0.0, 3.0], &[2.0, 1.0]]);
        assert_eq!(envelope(&s, &[0, 1]).unwrap(), (vec![2.0, 3.0], vec![0.0, 1.0]));
        assert_eq!(envelope(&s, &[1]).unwrap(), (vec![2.0, 1.0], vec![2.0, 1.0]));
        let s = set(&[&[5.0, 5.0], &[0.0, 0.0]]);
        assert_eq!(envelope(&s, &[0]).unwrap(), (vec![5.0, 5.0], vec![5.0, 5.0]));
        assert!(envelope(&s, &[]).is_err());
    }

    #[test]
    fn band_rejects_crossed_envelopes() {
        assert!(ConfidenceBand::new(vec![1.0], vec![0.0], 0.1, None).is_err());
    }

    #[test]
    fn band_json_shape() {
        let s = set(&[&[1.0], &[3.0]]);
        let json = serde_json::to_value(band(&[0.0], &[2.0]).to_json(Some(&s))).unwrap();
        for key in ["alpha", "gamma", "lower", "upper", "width", "covered_count", "n", "H"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert!(json["gamma"].is_null());
        assert_eq!(json["covered_count"], 1);
    }
}
