//! Dimension algebra: quantities declared with exact exponent vectors, the
//! units matrix `D = [D_p, D_q]` built from them, and the homogeneity check
//! `D·φ = 0`.
//!
//! All exponents are exact rationals, so nothing in this module rounds.
//!
//! ```
//! use pi_forge::units::{check_homogeneous, Registry};
//! use pi_forge::Rational;
//!
//! let reg = Registry::pendulum();
//! let d = reg.units_matrix().unwrap();
//! let phi: Vec<Rational> = [1, 0, -1, 2, 0].iter().map(|&v| Rational::from_integer(v)).collect();
//! assert!(check_homogeneous(&phi, &d).unwrap());
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Rational;

/// Ordered, fixed list of base-dimension names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseDimensions {
    names: Vec<String>,
}

impl BaseDimensions {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidUnits("base dimension list is empty".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.trim().is_empty() {
                return Err(Error::InvalidUnits("empty base dimension name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::DuplicateName(n.clone()));
            }
        }
        Ok(Self { names })
    }

    /// The seven SI base dimensions.
    pub fn si() -> Self {
        Self::new(["M", "L", "T", "Theta", "I", "N", "J"]).expect("static list")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Default for BaseDimensions {
    /// Mass, length, time, temperature.
    fn default() -> Self {
        Self::new(["M", "L", "T", "Theta"]).expect("static list")
    }
}

/// Exponents of the base dimensions for one quantity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DimensionVector(Vec<Rational>);

impl DimensionVector {
    pub fn new(exponents: Vec<Rational>) -> Self {
        Self(exponents)
    }

    pub fn from_ints(exponents: &[i64]) -> Self {
        Self(exponents.iter().map(|&e| Rational::from_integer(e)).collect())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![Rational::zero(); len])
    }

    /// Unit vector along one base dimension, e.g. pure time.
    pub fn unit(base: &BaseDimensions, name: &str) -> Result<Self> {
        let idx = base
            .index_of(name)
            .ok_or_else(|| Error::InvalidUnits(format!("no base dimension `{name}`")))?;
        let mut v = Self::zeros(base.len());
        v.0[idx] = Rational::from_integer(1);
        Ok(v)
    }

    pub fn exponents(&self) -> &[Rational] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_dimensionless(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }
}

impl fmt::Display for DimensionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Parameter,
    IndependentVariable,
    Output,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Parameter => "parameter",
            Role::IndependentVariable => "independent_variable",
            Role::Output => "output",
        }
    }

    pub fn is_input(self) -> bool {
        !matches!(self, Role::Output)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantityDecl {
    pub name: String,
    pub dims: DimensionVector,
    pub role: Role,
}

impl QuantityDecl {
    pub fn new(name: impl Into<String>, dims: DimensionVector, role: Role) -> Self {
        Self {
            name: name.into(),
            dims,
            role,
        }
    }

    pub fn parameter(name: impl Into<String>, dims: &[i64]) -> Self {
        Self::new(name, DimensionVector::from_ints(dims), Role::Parameter)
    }

    pub fn variable(name: impl Into<String>, dims: &[i64]) -> Self {
        Self::new(name, DimensionVector::from_ints(dims), Role::IndependentVariable)
    }

    pub fn output(name: impl Into<String>, dims: &[i64]) -> Self {
        Self::new(name, DimensionVector::from_ints(dims), Role::Output)
    }
}

/// A validated, immutable list of quantity declarations over a set of base
/// dimensions. Declaration order is the column order of the units matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Registry {
    base: BaseDimensions,
    quantities: Vec<QuantityDecl>,
}

impl Registry {
    pub fn new(base: BaseDimensions, quantities: Vec<QuantityDecl>) -> Result<Self> {
        let mut seen = HashSet::new();
        for q in &quantities {
            if q.name.trim().is_empty() {
                return Err(Error::InvalidUnits("empty quantity name".into()));
            }
            if !seen.insert(q.name.as_str()) {
                return Err(Error::DuplicateName(q.name.clone()));
            }
            if q.dims.len() != base.len() {
                return Err(Error::InvalidUnits(format!(
                    "`{}` has {} exponents but there are {} base dimensions",
                    q.name,
                    q.dims.len(),
                    base.len()
                )));
            }
        }
        Ok(Self { base, quantities })
    }

    pub fn base(&self) -> &BaseDimensions {
        &self.base
    }

    pub fn quantities(&self) -> &[QuantityDecl] {
        &self.quantities
    }

    pub fn len(&self) -> usize {
        self.quantities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantities.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&QuantityDecl> {
        self.quantities
            .iter()
            .find(|q| q.name == name)
            .ok_or_else(|| Error::UnknownQuantity(name.to_string()))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.quantities.iter().position(|q| q.name == name)
    }

    /// Dimension vector of a declared quantity.
    pub fn omega(&self, name: &str) -> Result<&DimensionVector> {
        omega(self.get(name)?, self)
    }

    pub fn names(&self) -> Vec<String> {
        self.quantities.iter().map(|q| q.name.clone()).collect()
    }

    pub fn names_with_role(&self, role: Role) -> Vec<String> {
        self.quantities
            .iter()
            .filter(|q| q.role == role)
            .map(|q| q.name.clone())
            .collect()
    }

    /// Parameters and independent variables, in declaration order.
    pub fn input_names(&self) -> Vec<String> {
        self.quantities
            .iter()
            .filter(|q| q.role.is_input())
            .map(|q| q.name.clone())
            .collect()
    }

    pub fn units_matrix(&self) -> Result<UnitsMatrix> {
        build_units_matrix(self)
    }

    /// Sub-registry with the named quantities, in the given order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<Registry> {
        let qs = names
            .iter()
            .map(|n| self.get(n.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        Registry::new(self.base.clone(), qs)
    }

    /// Time as a dimension vector over this registry's base (`T`).
    pub fn time_dimension(&self) -> Result<DimensionVector> {
        DimensionVector::unit(&self.base, "T")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawUnitsFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let base = match raw.base {
            Some(b) => BaseDimensions::new(b)?,
            None => BaseDimensions::default(),
        };
        let quantities = raw
            .quantity
            .into_iter()
            .map(|q| {
                let dims = q
                    .dims
                    .iter()
                    .map(|e| e.to_rational())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::InvalidUnits(format!("`{}`: {e}", q.name)))?;
                Ok(QuantityDecl::new(q.name, DimensionVector::new(dims), q.role))
            })
            .collect::<Result<Vec<_>>>()?;
        Registry::new(base, quantities)
    }

    /// Canonical text form. Integers are written bare and fractions as
    /// `"p/q"` strings; parsing the output reproduces the registry exactly and
    /// re-serialising reproduces the same bytes.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        out.push_str("base = [");
        for (i, b) in self.base.names.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&quote(b));
        }
        out.push_str("]\n");
        for q in &self.quantities {
            out.push_str("\n[[quantity]]\n");
            out.push_str(&format!("name = {}\n", quote(&q.name)));
            out.push_str("dims = [");
            for (i, e) in q.dims.exponents().iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if e.is_integer() {
                    out.push_str(&e.to_integer().to_string());
                } else {
                    out.push_str(&format!("\"{}/{}\"", e.numer(), e.denom()));
                }
            }
            out.push_str("]\n");
            out.push_str(&format!("role = \"{}\"\n", q.role.as_str()));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    /// Simple pendulum: `(g, m, L, t | alpha)`.
    pub fn pendulum() -> Self {
        Registry::new(
            BaseDimensions::new(["M", "L", "T"]).expect("static"),
            vec![
                QuantityDecl::parameter("g", &[0, 1, -2]),
                QuantityDecl::parameter("m", &[1, 0, 0]),
                QuantityDecl::parameter("L", &[0, 1, 0]),
                QuantityDecl::variable("t", &[0, 0, 1]),
                QuantityDecl::output("alpha", &[0, 0, 0]),
            ],
        )
        .expect("static registry")
    }

    /// Bead on a rotating hoop: `(m, R, b, g, omega, t | x)`. The damping
    /// coefficient multiplies an angular rate in a force balance, so it
    /// carries `M L / T`.
    pub fn hoop() -> Self {
        Registry::new(
            BaseDimensions::new(["M", "L", "T"]).expect("static"),
            vec![
                QuantityDecl::parameter("m", &[1, 0, 0]),
                QuantityDecl::parameter("R", &[0, 1, 0]),
                QuantityDecl::parameter("b", &[1, 1, -1]),
                QuantityDecl::parameter("g", &[0, 1, -2]),
                QuantityDecl::parameter("omega", &[0, 0, -1]),
                QuantityDecl::variable("t", &[0, 0, 1]),
                QuantityDecl::output("x", &[0, 0, 0]),
            ],
        )
        .expect("static registry")
    }

    /// Flat-plate boundary layer: `(x, y, U_inf, nu | u_ratio)` with the
    /// streamwise velocity already divided by the free-stream speed.
    pub fn blasius() -> Self {
        Registry::new(
            BaseDimensions::new(["M", "L", "T"]).expect("static"),
            vec![
                QuantityDecl::variable("x", &[0, 1, 0]),
                QuantityDecl::variable("y", &[0, 1, 0]),
                QuantityDecl::parameter("U_inf", &[0, 1, -1]),
                QuantityDecl::parameter("nu", &[0, 2, -1]),
                QuantityDecl::output("u_ratio", &[0, 0, 0]),
            ],
        )
        .expect("static registry")
    }

    /// Rayleigh-Benard convection observables: plate gap, gravity, thermal
    /// expansion, temperature difference, viscosity, diffusivity, time and a
    /// dimensionless amplitude `q`.
    pub fn rayleigh_benard() -> Self {
        Registry::new(
            BaseDimensions::default(),
            vec![
                QuantityDecl::parameter("Lz", &[0, 1, 0, 0]),
                QuantityDecl::parameter("g", &[0, 1, -2, 0]),
                QuantityDecl::parameter("alpha", &[0, 0, 0, -1]),
                QuantityDecl::parameter("dT", &[0, 0, 0, 1]),
                QuantityDecl::parameter("nu", &[0, 2, -1, 0]),
                QuantityDecl::parameter("kappa", &[0, 2, -1, 0]),
                QuantityDecl::variable("t", &[0, 0, 1, 0]),
                QuantityDecl::output("q", &[0, 0, 0, 0]),
            ],
        )
        .expect("static registry")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUnitsFile {
    base: Option<Vec<String>>,
    #[serde(default)]
    quantity: Vec<RawQuantity>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuantity {
    name: String,
    dims: Vec<RawExponent>,
    role: Role,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawExponent {
    Int(i64),
    Text(String),
}

impl RawExponent {
    fn to_rational(&self) -> Result<Rational> {
        match self {
            RawExponent::Int(v) => Ok(Rational::from_integer(*v)),
            RawExponent::Text(s) => parse_rational(s),
        }
    }
}

/// Parses `"p/q"` or `"p"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::InvalidUnits(format!("`{s}` is not a rational exponent"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Rational::new(n, d))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Returns the declared exponent vector of a registered quantity.
pub fn omega<'a>(decl: &QuantityDecl, registry: &'a Registry) -> Result<&'a DimensionVector> {
    registry
        .quantities
        .iter()
        .find(|q| q.name == decl.name)
        .map(|q| &q.dims)
        .ok_or_else(|| Error::UnknownQuantity(decl.name.clone()))
}

/// Rational matrix whose column `j` is the dimension vector of quantity `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitsMatrix {
    base: BaseDimensions,
    names: Vec<String>,
    roles: Vec<Role>,
    /// Row-major, `base.len()` rows by `names.len()` columns.
    entries: Vec<Vec<Rational>>,
}

pub fn build_units_matrix(registry: &Registry) -> Result<UnitsMatrix> {
    if registry.is_empty() {
        return Err(Error::EmptyRegistry);
    }
    let rows = registry.base.len();
    let entries = (0..rows)
        .map(|r| {
            registry
                .quantities
                .iter()
                .map(|q| q.dims.exponents()[r])
                .collect()
        })
        .collect();
    Ok(UnitsMatrix {
        base: registry.base.clone(),
        names: registry.names(),
        roles: registry.quantities.iter().map(|q| q.role).collect(),
        entries,
    })
}

impl UnitsMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.len()
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn base(&self) -> &BaseDimensions {
        &self.base
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn get(&self, row: usize, col: usize) -> Rational {
        self.entries[row][col]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.entries
    }

    pub fn column(&self, col: usize) -> DimensionVector {
        DimensionVector::new(self.entries.iter().map(|r| r[col]).collect())
    }

    /// Number of columns preceding the first output when outputs trail the
    /// inputs; equals the count of non-output quantities.
    pub fn partition_index(&self) -> usize {
        self.roles.iter().filter(|r| r.is_input()).count()
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> UnitsMatrix {
        let cols: Vec<usize> = (0..self.ncols()).filter(|&c| keep(c)).collect();
        UnitsMatrix {
            base: self.base.clone(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            roles: cols.iter().map(|&c| self.roles[c]).collect(),
            entries: self
                .entries
                .iter()
                .map(|r| cols.iter().map(|&c| r[c]).collect())
                .collect(),
        }
    }

    /// `D_p`: parameters and independent variables.
    pub fn d_p(&self) -> UnitsMatrix {
        self.select(|c| self.roles[c].is_input())
    }

    /// `D_q`: outputs.
    pub fn d_q(&self) -> UnitsMatrix {
        self.select(|c| !self.roles[c].is_input())
    }

    /// Columns with role `parameter` only (time excluded).
    pub fn parameters(&self) -> UnitsMatrix {
        self.select(|c| self.roles[c] == Role::Parameter)
    }

    /// Columns picked by name, in the given order.
    pub fn columns<S: AsRef<str>>(&self, names: &[S]) -> Result<UnitsMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.names
                    .iter()
                    .position(|x| x == n.as_ref())
                    .ok_or_else(|| Error::UnknownQuantity(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UnitsMatrix {
            base: self.base.clone(),
            names: idx.iter().map(|&c| self.names[c].clone()).collect(),
            roles: idx.iter().map(|&c| self.roles[c]).collect(),
            entries: self
                .entries
                .iter()
                .map(|r| idx.iter().map(|&c| r[c]).collect())
                .collect(),
        })
    }

    /// Exact product `D·v`.
    pub fn mul_vec(&self, v: &[Rational]) -> Result<Vec<Rational>> {
        if v.len() != self.ncols() {
            return Err(Error::LengthMismatch {
                expected: self.ncols(),
                got: v.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Floating-point product `D·v` for real exponent vectors.
    pub fn mul_f64(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ncols() {
            return Err(Error::LengthMismatch {
                expected: self.ncols(),
                got: v.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| rational_to_f64(*a) * b).sum())
            .collect())
    }

    /// Dense `f64` copy, row-major.
    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|r| r.iter().map(|&e| rational_to_f64(e)).collect())
            .collect()
    }
}

pub fn rational_to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// True iff `D·expo = 0` exactly.
pub fn check_homogeneous(expo: &[Rational], d: &UnitsMatrix) -> Result<bool> {
    Ok(d.mul_vec(expo)?.iter().all(Zero::is_zero))
}

/// Largest absolute entry of a rational vector.
pub fn max_abs(v: &[Rational]) -> Rational {
    v.iter().map(|e| e.abs()).max().unwrap_or_else(Rational::zero)
}
