//! Exact nullspace of a units matrix and bounded integer-power candidates.
//!
//! Row reduction is fraction-free: each row is scaled to integers, combined
//! with integer multipliers and kept primitive by dividing out the row gcd.
//! Only the final normalisation of pivot rows introduces fractions, so the
//! basis satisfies `D·v = 0` exactly.
//!
//! Candidate enumeration walks the integer box over the *free* coordinates of
//! the reduced system. Every lattice vector is fixed by its free coordinates,
//! and those coordinates are entries of the vector itself, so walking
//! `[-bound, bound]^(free)` and filtering on the pivot entries visits every
//! bounded integer nullspace vector exactly once.

use std::collections::BTreeSet;

use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::units::{rational_to_f64, DimensionVector, UnitsMatrix};
use crate::Rational;

/// Abort enumeration when the free-coordinate box holds more points.
pub const MAX_ENUMERATION_BOX: u128 = 200_000_000;

/// Reduced row echelon form with the pivot column of each nonzero row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rref {
    pub rows: Vec<Vec<Rational>>,
    pub pivots: Vec<usize>,
}

/// Fraction-free Gauss-Jordan reduction of a rational matrix.
pub fn rref(matrix: &[Vec<Rational>], ncols: usize) -> Rref {
    let mut rows: Vec<Vec<i128>> = matrix
        .iter()
        .map(|r| integer_row(r))
        .filter(|r| r.iter().any(|&v| v != 0))
        .collect();
    let mut pivots = Vec::new();
    let mut top = 0;
    for col in 0..ncols {
        if top >= rows.len() {
            break;
        }
        // Smallest nonzero magnitude keeps the integers small.
        let pick = (top..rows.len())
            .filter(|&r| rows[r][col] != 0)
            .min_by_key(|&r| rows[r][col].unsigned_abs());
        let Some(p) = pick else { continue };
        rows.swap(top, p);
        let pivot_row = rows[top].clone();
        let pv = pivot_row[col];
        for (r, row) in rows.iter_mut().enumerate() {
            if r == top || row[col] == 0 {
                continue;
            }
            let g = pv.gcd(&row[col]);
            let (mp, mr) = (row[col] / g, pv / g);
            for (dst, src) in row.iter_mut().zip(&pivot_row) {
                *dst = *dst * mr - *src * mp;
            }
            make_primitive(row);
        }
        pivots.push(col);
        top += 1;
    }
    rows.truncate(top);
    let rows = rows
        .iter()
        .zip(&pivots)
        .map(|(row, &pc)| {
            let pv = row[pc];
            row.iter()
                .map(|&v| Rational::new(v as i64, pv as i64))
                .collect()
        })
        .collect();
    Rref { rows, pivots }
}

fn integer_row(row: &[Rational]) -> Vec<i128> {
    let lcm = row
        .iter()
        .fold(1i128, |acc, e| acc.lcm(&(*e.denom() as i128)));
    let mut out: Vec<i128> = row
        .iter()
        .map(|e| *e.numer() as i128 * (lcm / *e.denom() as i128))
        .collect();
    make_primitive(&mut out);
    out
}

fn make_primitive(row: &mut [i128]) {
    let g = row.iter().fold(0i128, |acc, &v| acc.gcd(&v));
    if g > 1 {
        row.iter_mut().for_each(|v| *v /= g);
    }
}

/// Basis of `{v : D·v = 0}` together with the reduction that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NullspaceBasis {
    matrix: UnitsMatrix,
    reduced: Rref,
    basis: Vec<Vec<Rational>>,
    free: Vec<usize>,
}

impl NullspaceBasis {
    /// One vector per free column `f`: entry `f` is 1, other free entries 0.
    pub fn basis(&self) -> &[Vec<Rational>] {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.reduced.pivots.len()
    }

    /// Buckingham count `d - rank(D)`.
    pub fn pi_count(&self) -> usize {
        self.matrix.ncols() - self.rank()
    }

    pub fn matrix(&self) -> &UnitsMatrix {
        &self.matrix
    }

    pub fn columns(&self) -> &[String] {
        self.matrix.names()
    }

    pub fn free_columns(&self) -> &[usize] {
        &self.free
    }

    /// Basis vectors scaled to primitive integer vectors.
    pub fn integer_basis(&self) -> Vec<Vec<i64>> {
        self.basis.iter().map(|v| primitive_integer(v)).collect()
    }

    /// Basis as an `f64` matrix, one column per basis vector (`d × pi_count`).
    pub fn to_f64_columns(&self) -> Vec<Vec<f64>> {
        self.basis
            .iter()
            .map(|v| v.iter().map(|&e| rational_to_f64(e)).collect())
            .collect()
    }

    /// Solves `D·x = rhs` exactly; `None` when inconsistent. Free entries of
    /// the returned particular solution are zero.
    pub fn particular_solution(&self, rhs: &DimensionVector) -> Result<Option<Vec<Rational>>> {
        if rhs.len() != self.matrix.nrows() {
            return Err(Error::LengthMismatch {
                expected: self.matrix.nrows(),
                got: rhs.len(),
            });
        }
        let n = self.matrix.ncols();
        let augmented: Vec<Vec<Rational>> = self
            .matrix
            .rows()
            .iter()
            .zip(rhs.exponents())
            .map(|(r, b)| {
                let mut row = r.clone();
                row.push(*b);
                row
            })
            .collect();
        let red = rref(&augmented, n + 1);
        if red.pivots.contains(&n) {
            return Ok(None);
        }
        let mut x = vec![Rational::zero(); n];
        for (row, &pc) in red.rows.iter().zip(&red.pivots) {
            x[pc] = row[n];
        }
        Ok(Some(x))
    }
}

pub fn rational_nullspace(d: &UnitsMatrix) -> NullspaceBasis {
    let n = d.ncols();
    let reduced = rref(d.rows(), n);
    let free: Vec<usize> = (0..n).filter(|c| !reduced.pivots.contains(c)).collect();
    let basis = free
        .iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); n];
            v[f] = Rational::one();
            for (row, &pc) in reduced.rows.iter().zip(&reduced.pivots) {
                v[pc] = -row[f];
            }
            v
        })
        .collect();
    NullspaceBasis {
        matrix: d.clone(),
        reduced,
        basis,
        free,
    }
}

/// Smallest integer multiple of a rational vector with coprime entries.
pub fn primitive_integer(v: &[Rational]) -> Vec<i64> {
    let lcm = v.iter().fold(1i64, |acc, e| acc.lcm(e.denom()));
    let mut out: Vec<i64> = v.iter().map(|e| (e * lcm).to_integer()).collect();
    let g = out.iter().fold(0i64, |acc, &x| acc.gcd(&x));
    if g > 1 {
        out.iter_mut().for_each(|x| *x /= g);
    }
    out
}

/// Canonical representative of the line through `v`: coprime entries, first
/// nonzero entry positive. Returns `None` for the zero vector.
pub fn canonical_line(v: &[i64]) -> Option<Vec<i64>> {
    let first = v.iter().copied().find(|&x| x != 0)?;
    let g = v.iter().fold(0i64, |acc, &x| acc.gcd(&x));
    let s = if first < 0 { -g } else { g };
    Some(v.iter().map(|&x| x / s).collect())
}

/// One oriented, scaled member of a candidate line (`multiple · line`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PiMember {
    pub line: usize,
    pub multiple: i64,
    pub exponents: Vec<i64>,
}

/// Bounded integer search space for the brute-force engines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CandidateSet {
    pub columns: Vec<String>,
    /// Canonical lines, sorted.
    pub pi_candidates: Vec<Vec<i64>>,
    /// Solutions of `D·x = time`, sorted.
    pub timescale_candidates: Vec<Vec<i64>>,
    pub power_bound: i64,
}

impl CandidateSet {
    /// Every nonzero integer multiple of every line that stays within the
    /// power bound, both orientations: `pi` and `1/pi`, `pi²`, ...
    pub fn pi_members(&self) -> Vec<PiMember> {
        let mut out = Vec::new();
        for (line, v) in self.pi_candidates.iter().enumerate() {
            let peak = v.iter().map(|x| x.abs()).max().unwrap_or(0).max(1);
            let kmax = self.power_bound / peak;
            for k in (-kmax..=kmax).filter(|&k| k != 0) {
                out.push(PiMember {
                    line,
                    multiple: k,
                    exponents: v.iter().map(|x| x * k).collect(),
                });
            }
        }
        out
    }

    pub fn contains_line(&self, v: &[i64]) -> bool {
        canonical_line(v).is_some_and(|c| self.pi_candidates.contains(&c))
    }
}

/// Enumerates bounded integer nullspace vectors (deduplicated to canonical
/// lines) and, when `time_dim` is given, bounded integer solutions of
/// `D·x = time_dim`.
pub fn enumerate_candidates(
    basis: &NullspaceBasis,
    power_bound: i64,
    time_dim: Option<&DimensionVector>,
) -> Result<CandidateSet> {
    if power_bound < 1 {
        return Err(Error::InvalidArgument(format!(
            "power bound must be >= 1, got {power_bound}"
        )));
    }
    let n = basis.matrix.ncols();
    let free = &basis.free;
    let side = (2 * power_bound + 1) as u128;
    let boxed = side.checked_pow(free.len() as u32).unwrap_or(u128::MAX);
    if boxed > MAX_ENUMERATION_BOX {
        return Err(Error::CombinatorialCap {
            count: boxed,
            cap: MAX_ENUMERATION_BOX,
        });
    }

    let mut lines = BTreeSet::new();
    let zero = vec![Rational::zero(); n];
    walk_lattice(basis, &zero, power_bound, |v| {
        if let Some(c) = canonical_line(v) {
            lines.insert(c);
        }
    });
    if lines.is_empty() && basis.pi_count() > 0 {
        return Err(Error::EmptyCandidates {
            bound: power_bound,
            what: "no integer dimensionless group fits; raise the bound".into(),
        });
    }

    let mut timescales = BTreeSet::new();
    if let Some(td) = time_dim {
        if let Some(xp) = basis.particular_solution(td)? {
            walk_lattice(basis, &xp, power_bound, |v| {
                timescales.insert(v.to_vec());
            });
        }
        if timescales.is_empty() {
            return Err(Error::EmptyCandidates {
                bound: power_bound,
                what: "no integer combination of the parameters has units of time".into(),
            });
        }
    }

    Ok(CandidateSet {
        columns: basis.columns().to_vec(),
        pi_candidates: lines.into_iter().collect(),
        timescale_candidates: timescales.into_iter().collect(),
        power_bound,
    })
}

/// Visits every integer vector `offset + Σ z_f · basis_f` with all entries in
/// `[-bound, bound]`. `offset` must be zero on the free columns.
fn walk_lattice(
    basis: &NullspaceBasis,
    offset: &[Rational],
    bound: i64,
    mut visit: impl FnMut(&[i64]),
) {
    let n = basis.matrix.ncols();
    let free = &basis.free;
    let mut z = vec![-bound; free.len()];
    let mut v = vec![0i64; n];
    'outer: loop {
        let mut ok = true;
        for (c, slot) in v.iter_mut().enumerate() {
            let mut acc = offset[c];
            for (k, b) in basis.basis.iter().enumerate() {
                if !b[c].is_zero() {
                    acc += b[c] * z[k];
                }
            }
            if !acc.is_integer() || acc.abs() > Rational::from_integer(bound) {
                ok = false;
                break;
            }
            *slot = acc.to_integer();
        }
        if ok {
            visit(&v);
        }
        // odometer increment
        for k in 0..z.len() {
            if z[k] < bound {
                z[k] += 1;
                continue 'outer;
            }
            z[k] = -bound;
        }
        break;
    }
}

/// Line through `phi` that makes the smallest angle with it among the
/// candidate members, with the member oriented along `phi`.
///
/// Returns the member exponents and `|cos|` of the angle.
pub fn nearest_member(phi: &[f64], set: &CandidateSet) -> Option<(Vec<i64>, f64)> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pn = norm(phi);
    if pn == 0.0 {
        return None;
    }
    set.pi_candidates
        .iter()
        .map(|line| {
            let lf: Vec<f64> = line.iter().map(|&x| x as f64).collect();
            let dot: f64 = lf.iter().zip(phi).map(|(a, b)| a * b).sum();
            let cos = dot / (norm(&lf) * pn);
            let oriented = if cos < 0.0 {
                line.iter().map(|x| -x).collect()
            } else {
                line.clone()
            };
            (oriented, cos.abs())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
}
