//! Kernel ridge regression, PCA and finite differences.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative residual the ridge solve is expected to reach.
pub const KRR_RESIDUAL_TARGET: f64 = 1e-10;

/// Kernel ridge regression with the kernel `exp(-scale · ‖x - x'‖²)`.
#[derive(Clone, Debug)]
pub struct KrrModel {
    train: DMatrix<f64>,
    dual: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    scale: f64,
    ridge: f64,
    residual: f64,
}

fn rbf(scale: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-scale * d2).exp()
}

fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Data("ragged feature rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression inputs".into()));
    }
    Ok(DMatrix::from_fn(m, p, |i, j| rows[i][j]))
}

fn kernel_matrix(scale: f64, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ar: Vec<Vec<f64>> = a.row_iter().map(|r| r.iter().copied().collect()).collect();
    let br: Vec<Vec<f64>> = b.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(ar.len(), br.len(), |i, j| rbf(scale, &ar[i], &br[j]))
}

/// Fits one target column.
pub fn krr_fit(x: &[Vec<f64>], y: &[f64], scale: f64, ridge: f64) -> Result<KrrModel> {
    KrrModel::fit_columns(x, &[y.to_vec()], scale, ridge)
}

pub fn krr_predict(model: &KrrModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(model.predict_columns(x)?.swap_remove(0))
}

impl KrrModel {
    /// Fits several target columns against the same inputs with one
    /// factorisation of `K + ridge·I`.
    pub fn fit_columns(x: &[Vec<f64>], ys: &[Vec<f64>], scale: f64, ridge: f64) -> Result<Self> {
        if !(scale > 0.0) || !(ridge > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel scale and ridge must be > 0, got {scale} and {ridge}"
            )));
        }
        let m = x.len();
        if m == 0 || ys.is_empty() {
            return Err(Error::InvalidArgument("no training samples".into()));
        }
        let train = to_matrix(x)?;
        for y in ys {
            if y.len() != m {
                return Err(Error::LengthMismatch { expected: m, got: y.len() });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("regression targets".into()));
            }
        }
        let y = DMatrix::from_fn(m, ys.len(), |i, j| ys[j][i]);
        let mut a_mat = kernel_matrix(scale, &train, &train);
        for i in 0..m {
            a_mat[(i, i)] += ridge;
        }
        let chol = match a_mat.clone().cholesky() {
            Some(c) => c,
            None => {
                let mut jittered = a_mat.clone();
                for i in 0..m {
                    jittered[(i, i)] += 1e-12;
                }
                jittered
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("kernel matrix is not positive definite".into()))?
            }
        };
        let mut dual = chol.solve(&y);
        // Iterative refinement tightens the residual on ill-conditioned kernels.
        let mut residual = relative_residual(&a_mat, &dual, &y);
        for _ in 0..3 {
            if residual <= KRR_RESIDUAL_TARGET {
                break;
            }
            let r = &y - &a_mat * &dual;
            dual += chol.solve(&r);
            residual = relative_residual(&a_mat, &dual, &y);
        }
        if residual > KRR_RESIDUAL_TARGET {
            log::warn!("kernel ridge residual {residual:.3e} above {KRR_RESIDUAL_TARGET:e}");
        }
        Ok(Self {
            train,
            dual,
            chol,
            scale,
            ridge,
            residual,
        })
    }

    pub fn predict_columns(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let q = to_matrix(x)?;
        if !x.is_empty() && q.ncols() != self.train.ncols() {
            return Err(Error::LengthMismatch {
                expected: self.train.ncols(),
                got: q.ncols(),
            });
        }
        let pred = kernel_matrix(self.scale, &q, &self.train) * &self.dual;
        Ok(pred.column_iter().map(|c| c.iter().copied().collect()).collect())
    }

    /// Predictions at the training inputs, `K·a`.
    pub fn in_sample(&self) -> Vec<Vec<f64>> {
        let k = kernel_matrix(self.scale, &self.train, &self.train);
        let pred = k * &self.dual;
        pred.column_iter().map(|c| c.iter().copied().collect()).collect()
    }

    /// Leave-one-out residuals per target column, `a_i / [(K + ridge·I)⁻¹]_ii`.
    pub fn loo_residuals(&self) -> Vec<Vec<f64>> {
        let inv = self.chol.inverse();
        self.dual
            .column_iter()
            .map(|c| c.iter().enumerate().map(|(i, a)| a / inv[(i, i)]).collect())
            .collect()
    }

    /// Dual coefficients of the first target column.
    pub fn dual(&self) -> Vec<f64> {
        self.dual.column(0).iter().copied().collect()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `‖(K + ridge·I)a - y‖ / ‖y‖` after the solve (0 when `y = 0`).
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

fn relative_residual(a: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let yn = y.norm();
    if yn == 0.0 {
        return (a * x).norm();
    }
    (y - a * x).norm() / yn
}

/// Leading principal directions of a sample matrix.
#[derive(Clone, Debug)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `r` orthonormal rows of length equal to the sample width.
    pub components: Vec<Vec<f64>>,
    /// All singular values of the centred matrix, descending.
    pub singular_values: Vec<f64>,
    pub r: usize,
}

impl PcaBasis {
    pub fn project(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|row| {
                self.components
                    .iter()
                    .map(|c| c.iter().zip(row).zip(&self.mean).map(|((v, x), m)| v * (x - m)).sum())
                    .collect()
            })
            .collect()
    }

    pub fn reconstruct(&self, coeffs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        coeffs
            .iter()
            .map(|c| {
                let mut row = self.mean.clone();
                for (w, comp) in c.iter().zip(&self.components) {
                    row.iter_mut().zip(comp).for_each(|(x, v)| *x += w * v);
                }
                row
            })
            .collect()
    }

    /// Squared singular values beyond the first `r`.
    pub fn discarded_energy(&self) -> f64 {
        self.singular_values[self.r..].iter().map(|s| s * s).sum()
    }

    /// Fraction of centred variance captured by the first `r` components.
    pub fn captured_variance(&self) -> f64 {
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 1.0;
        }
        1.0 - self.discarded_energy() / total
    }
}

/// Centres the rows of `samples` and keeps the top `r` right singular vectors.
///
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca_reduce(samples: &[Vec<f64>], r: usize) -> Result<(PcaBasis, Vec<Vec<f64>>)> {
    let s = to_matrix(samples)?;
    let (m, t) = s.shape();
    if r == 0 || r > m.min(t) {
        return Err(Error::InvalidArgument(format!(
            "rank {r} must be in 1..={}",
            m.min(t)
        )));
    }
    let mean: Vec<f64> = (0..t).map(|j| s.column(j).mean()).collect();
    let centred = DMatrix::from_fn(m, t, |i, j| s[(i, j)] - mean[j]);
    let svd = centred.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let components: Vec<Vec<f64>> = order[..r]
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = v_t.row(i).iter().copied().collect();
            let peak = row
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if peak < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            row
        })
        .collect();
    let basis = PcaBasis {
        mean,
        components,
        singular_values,
        r,
    };
    let coeffs = basis.project(samples);
    Ok((basis, coeffs))
}

/// First or second derivative of a uniformly sampled series.
///
/// Second-order central differences inside, second-order one-sided stencils
/// at both ends.
pub fn fd_derivative(series: &[f64], dt: f64, order: u8) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "finite differences need at least 5 samples, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let f = series;
    let mut out = vec![0.0; n];
    match order {
        1 => {
            let h2 = 2.0 * dt;
            out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / h2;
            for i in 1..n - 1 {
                out[i] = (f[i + 1] - f[i - 1]) / h2;
            }
            out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / h2;
        }
        2 => {
            let hh = dt * dt;
            out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / hh;
            for i in 1..n - 1 {
                out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / hh;
            }
            out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / hh;
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be 1 or 2, got {order}"
            )))
        }
    }
    Ok(out)
}

/// Spearman rank correlation; ties get their average rank.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in &idx[i..=j] {
            out[*k] = avg;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Dense `x = A⁻¹ b` through LU, for small systems.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    m.lu()
        .solve(&DVector::from_column_slice(b))
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::Numerical("singular system".into()))
}
