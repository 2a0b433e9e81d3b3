//! Dimensional samples and their image under `Π = exp(log(P̃)·Φ)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{rational_to_f64, Registry};
use crate::Rational;

/// Largest admissible `|log π|` before the transform refuses to exponentiate.
pub const LOG_LIMIT: f64 = 700.0;

/// Anchor exponents smaller than this are treated as zero.
pub const ANCHOR_TOLERANCE: f64 = 1e-6;

/// Named columns of dimensional samples, aligned with a registry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    registry: Registry,
    columns: Vec<Vec<f64>>,
    shifts: Vec<f64>,
}

impl Dataset {
    /// `columns[i]` holds the samples of `registry.quantities()[i]`.
    pub fn new(registry: Registry, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != registry.len() {
            return Err(Error::LengthMismatch {
                expected: registry.len(),
                got: columns.len(),
            });
        }
        let m = columns.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        for (col, decl) in columns.iter().zip(registry.quantities()) {
            if col.len() != m {
                return Err(Error::Data(format!(
                    "column `{}` has {} rows, expected {m}",
                    decl.name,
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "column `{}` row {row} is not finite",
                    decl.name
                )));
            }
        }
        let shifts = vec![0.0; columns.len()];
        Ok(Self {
            registry,
            columns,
            shifts,
        })
    }

    /// Builds a dataset from rows of values ordered like the registry.
    pub fn from_rows(registry: Registry, rows: &[Vec<f64>]) -> Result<Self> {
        let d = registry.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Data(format!(
                    "row {r} has {} values, expected {d}",
                    row.len()
                )));
            }
            for (c, v) in row.iter().enumerate() {
                columns[c].push(*v);
            }
        }
        Self::new(registry, columns)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn nrows(&self) -> usize {
        self.columns[0].len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.registry.names()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        let i = self
            .registry
            .index_of(name)
            .ok_or_else(|| Error::UnknownQuantity(name.to_string()))?;
        Ok(&self.columns[i])
    }

    /// Offsets added by [`shift_positive`], one per column.
    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            registry: self.registry.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            shifts: self.shifts.clone(),
        }
    }

    /// Dataset restricted to the named columns.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let registry = self.registry.subset(names)?;
        let mut columns = Vec::with_capacity(names.len());
        let mut shifts = Vec::with_capacity(names.len());
        for n in names {
            let i = self.registry.index_of(n.as_ref()).expect("subset checked names");
            columns.push(self.columns[i].clone());
            shifts.push(self.shifts[i]);
        }
        Ok(Dataset {
            registry,
            columns,
            shifts,
        })
    }

    /// Reads a CSV whose header names registry quantities, in any order.
    pub fn read_csv<R: Read>(registry: &Registry, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for h in &header {
            if registry.index_of(h).is_none() {
                return Err(Error::UnknownQuantity(h.clone()));
            }
        }
        let sub = registry.subset(&header)?;
        let mut columns = vec![Vec::new(); header.len()];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Data(format!(
                    "row {} has {} fields, expected {}",
                    r + 1,
                    rec.len(),
                    header.len()
                )));
            }
            for (c, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Data(format!(
                        "row {} column `{}`: `{field}` is not a number",
                        r + 1,
                        header[c]
                    ))
                })?;
                columns[c].push(v);
            }
        }
        Dataset::new(sub, columns)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, &self.names(), &self.columns)
    }
}

/// Writes equal-length columns under a header row. Floats use the shortest
/// representation that round-trips.
pub fn write_table<W: Write, S: AsRef<str>>(
    writer: W,
    header: &[S],
    columns: &[Vec<f64>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header.iter().map(|s| s.as_ref()))?;
    let m = columns.first().map_or(0, Vec::len);
    for r in 0..m {
        w.write_record(columns.iter().map(|c| c[r].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Exponent vector of one group over named quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiExponents {
    pub over: Vec<String>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PiExponents {
    pub fn new<S: Into<String>>(over: impl IntoIterator<Item = S>, values: Vec<f64>) -> Self {
        Self {
            over: over.into_iter().map(Into::into).collect(),
            values,
            label: None,
        }
    }

    pub fn from_ints<S: Into<String>>(over: impl IntoIterator<Item = S>, values: &[i64]) -> Self {
        Self::new(over, values.iter().map(|&v| v as f64).collect())
    }

    pub fn from_rationals<S: Into<String>>(
        over: impl IntoIterator<Item = S>,
        values: &[Rational],
    ) -> Self {
        Self::new(over, values.iter().map(|&v| rational_to_f64(v)).collect())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.over.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Human-readable product, e.g. `g^1 L^-1 t^2`.
    pub fn display_product(&self) -> String {
        let parts: Vec<String> = self
            .over
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.abs() > 1e-12)
            .map(|(n, v)| format!("{n}^{}", trim_float(*v)))
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join(" ")
        }
    }
}

fn trim_float(v: f64) -> String {
    if (v - v.round()).abs() < 1e-12 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.4}")
    }
}

/// Dimensionless samples, one column per group.
#[derive(Clone, Debug, PartialEq)]
pub struct PiData {
    pub columns: Vec<Vec<f64>>,
    pub exponents: Vec<PiExponents>,
}

impl PiData {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Row-major copy, one row per sample.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows())
            .map(|r| self.columns.iter().map(|c| c[r]).collect())
            .collect()
    }

    /// `pi_1`, `pi_2`, ...
    pub fn labels(&self) -> Vec<String> {
        (1..=self.ncols()).map(|j| format!("pi_{j}")).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, &self.labels(), &self.columns)
    }
}

/// Evaluates each group on every row of `data`.
///
/// A group that is a single dimensionless column to the first power is copied
/// verbatim, so sign-indefinite dimensionless outputs pass through.
pub fn to_pi(data: &Dataset, phis: &[PiExponents]) -> Result<PiData> {
    let m = data.nrows();
    let mut out = Vec::with_capacity(phis.len());
    for (j, phi) in phis.iter().enumerate() {
        if phi.over.len() != phi.values.len() {
            return Err(Error::LengthMismatch {
                expected: phi.over.len(),
                got: phi.values.len(),
            });
        }
        let mut cols = Vec::new();
        for (name, &e) in phi.over.iter().zip(&phi.values) {
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("exponent of `{name}` in group {}", j + 1)));
            }
            if e != 0.0 {
                cols.push((name.as_str(), data.column(name)?, e));
            }
        }
        if let [(name, col, e)] = cols[..] {
            if e == 1.0 && data.registry().omega(name)?.is_dimensionless() {
                out.push(col.to_vec());
                continue;
            }
        }
        for (name, col, _) in &cols {
            if let Some(row) = col.iter().position(|&v| v <= 0.0) {
                return Err(Error::NonPositive {
                    column: name.to_string(),
                    row,
                    value: col[row],
                });
            }
        }
        let mut values = Vec::with_capacity(m);
        for r in 0..m {
            let s: f64 = cols.iter().map(|(_, col, e)| e * col[r].ln()).sum();
            if !s.is_finite() || s.abs() > LOG_LIMIT {
                return Err(Error::LogOverflow {
                    group: j + 1,
                    row: r,
                    limit: LOG_LIMIT,
                });
            }
            values.push(s.exp());
        }
        out.push(values);
    }
    Ok(PiData {
        columns: out,
        exponents: phis.to_vec(),
    })
}

/// Shifts every column whose minimum is `<= 0` by `margin - min`.
pub fn shift_positive(data: &Dataset, margin: f64) -> Result<Dataset> {
    let names = data.names();
    shift_columns(data, &names, margin)
}

/// Like [`shift_positive`] but only for the named columns.
pub fn shift_columns<S: AsRef<str>>(data: &Dataset, names: &[S], margin: f64) -> Result<Dataset> {
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument(format!("shift margin must be > 0, got {margin}")));
    }
    let mut out = data.clone();
    for n in names {
        let i = data
            .registry
            .index_of(n.as_ref())
            .ok_or_else(|| Error::UnknownQuantity(n.as_ref().to_string()))?;
        let min = out.columns[i].iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            let delta = margin - min;
            out.columns[i].iter_mut().for_each(|v| *v += delta);
            out.shifts[i] += delta;
        }
    }
    Ok(out)
}

/// Rescales `expo` so the anchor quantity has exponent exactly 1.
pub fn normalize_exponents(expo: &PiExponents, anchor: &str) -> Result<PiExponents> {
    let a = expo
        .get(anchor)
        .ok_or_else(|| Error::UnknownQuantity(anchor.to_string()))?;
    if a.abs() < ANCHOR_TOLERANCE {
        return Err(Error::ZeroAnchor(anchor.to_string()));
    }
    let mut out = expo.clone();
    for (n, v) in out.over.iter().zip(out.values.iter_mut()) {
        *v = if n == anchor { 1.0 } else { *v / a };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum_row() -> Dataset {
        Dataset::from_rows(Registry::pendulum(), &[vec![9.8, 1.0, 2.0, 1.0, 0.3]]).unwrap()
    }

    #[test]
    fn pendulum_group_value() {
        let data = pendulum_row();
        let phi = PiExponents::from_ints(data.names(), &[1, 0, -1, 2, 0]);
        let pi = to_pi(&data, &[phi]).unwrap();
        assert!((pi.columns[0][0] - 4.9).abs() < 1e-12);
    }

    #[test]
    fn zero_exponents_give_one() {
        let data = pendulum_row();
        let phi = PiExponents::from_ints(data.names(), &[0; 5]);
        assert_eq!(to_pi(&data, &[phi]).unwrap().columns[0], vec![1.0]);
    }

    #[test]
    fn blasius_similarity_variable() {
        let reg = Registry::blasius().subset(&["x", "y", "U_inf", "nu"]).unwrap();
        let data = Dataset::from_rows(reg, &[vec![1.0, 0.01, 0.01, 1e-6]]).unwrap();
        let phi = PiExponents::new(data.names(), vec![-0.5, 1.0, 0.5, -0.5]);
        let eta = to_pi(&data, &[phi]).unwrap().columns[0][0];
        let oracle = 0.01 * (0.01f64 / (1e-6 * 1.0)).sqrt();
        assert!((eta - oracle).abs() < 1e-12);
        assert!((eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_value_names_column_and_row() {
        let data = Dataset::from_rows(
            Registry::pendulum(),
            &[vec![9.8, 1.0, 2.0, 1.0, 0.3], vec![9.8, 1.0, 2.0, 0.0, 0.3]],
        )
        .unwrap();
        let phi = PiExponents::from_ints(data.names(), &[1, 0, -1, 2, 0]);
        match to_pi(&data, &[phi]) {
            Err(Error::NonPositive { column, row, .. }) => {
                assert_eq!(column, "t");
                assert_eq!(row, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimensionless_output_bypasses_log() {
        let data = Dataset::from_rows(Registry::pendulum(), &[vec![9.8, 1.0, 2.0, 1.0, -0.3]]).unwrap();
        let phi = PiExponents::from_ints(data.names(), &[0, 0, 0, 0, 1]);
        assert_eq!(to_pi(&data, &[phi]).unwrap().columns[0], vec![-0.3]);
    }

    #[test]
    fn overflow_is_an_error() {
        let data = Dataset::from_rows(Registry::pendulum(), &[vec![1e300, 1.0, 1.0, 1.0, 1.0]]).unwrap();
        let phi = PiExponents::from_ints(data.names(), &[2, 0, 0, 0, 0]);
        assert!(matches!(to_pi(&data, &[phi]), Err(Error::LogOverflow { .. })));
    }

    #[test]
    fn shifting() {
        let reg = Registry::pendulum().subset(&["g", "t"]).unwrap();
        let data = Dataset::new(reg, vec![vec![-1.0, 0.0, 2.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let s = shift_positive(&data, 0.1).unwrap();
        let expect = [0.1, 1.1, 3.1];
        for (a, b) in s.columns()[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.columns()[1], vec![1.0, 2.0, 3.0]);
        assert!((s.shifts()[0] - 1.1).abs() < 1e-12);
        assert_eq!(s.shifts()[1], 0.0);

        let reg = Registry::pendulum().subset(&["g"]).unwrap();
        let c = Dataset::new(reg, vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(shift_positive(&c, 1.0).unwrap().columns()[0], vec![1.0, 1.0]);
        assert!(shift_positive(&c, 0.0).is_err());
    }

    #[test]
    fn normalization() {
        let names = ["m", "R", "b", "g", "omega"];
        let row = PiExponents::new(names, vec![0.0011, 1.0, 0.0001, -0.997, 1.990]);
        assert_eq!(normalize_exponents(&row, "R").unwrap(), row);

        let bl = PiExponents::new(["x", "y", "U_inf", "nu"], vec![-0.22, 0.46, 0.24, -0.24]);
        let n = normalize_exponents(&bl, "y").unwrap();
        // inputs and expected values are both rounded to two decimals
        let expect = [-0.49, 1.0, 0.51, -0.51];
        for (a, b) in n.values.iter().zip(expect) {
            assert!((a - b).abs() < 0.015, "{a} vs {b}");
        }

        let t = PiExponents::new(["a", "b", "c"], vec![2.0, 0.0, -2.0]);
        assert_eq!(normalize_exponents(&t, "a").unwrap().values, vec![1.0, 0.0, -1.0]);
        assert!(matches!(normalize_exponents(&t, "b"), Err(Error::ZeroAnchor(_))));
        assert!(normalize_exponents(&t, "z").is_err());
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let data = pendulum_row();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&Registry::pendulum(), buf.as_slice()).unwrap();
        assert_eq!(back, data);

        let bad = "g,zeta\n1,2\n";
        assert!(matches!(
            Dataset::read_csv(&Registry::pendulum(), bad.as_bytes()),
            Err(Error::UnknownQuantity(n)) if n == "zeta"
        ));
        let ragged = "g,L\n1,2\n3\n";
        assert!(Dataset::read_csv(&Registry::pendulum(), ragged.as_bytes()).is_err());
        let text = "g,L\n1,abc\n";
        assert!(Dataset::read_csv(&Registry::pendulum(), text.as_bytes()).is_err());
    }

    #[test]
    fn pi_csv_labels() {
        let data = pendulum_row();
        let phi = PiExponents::from_ints(data.names(), &[1, 0, -1, 2, 0]);
        let pi = to_pi(&data, &[phi.clone(), phi]).unwrap();
        let mut buf = Vec::new();
        pi.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("pi_1,pi_2\n"));
    }
}
