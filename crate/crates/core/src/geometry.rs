//! The flat torus `R^n / Z^n` with its parallel volume form `ν = nu dx¹∧…∧dxⁿ`
//! and a (possibly non-constant) Riemannian metric `g` in affine coordinates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calculus::{self, mutation, PQField, ValueShape};
use crate::error::{Error, Result};
use crate::spectral::Spectral;
use crate::{CMat, C64};

/// Metric families accepted by scenario configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MetricSpec {
    Constant { matrix: Vec<Vec<f64>> },
    /// `g = exp(amplitude · sin 2πx^axis) · I`
    ConformalSine { amplitude: f64, axis: usize },
    /// `g = diag(exp(amplitude · sin 2πx^k))`, each entry depending on its own coordinate.
    SeparableSine { amplitude: f64 },
}

impl MetricSpec {
    pub fn identity(n: usize) -> Self {
        MetricSpec::Constant {
            matrix: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    pub(crate) fn sample(&self, dim: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let tau = 2.0 * std::f64::consts::PI;
        match self {
            MetricSpec::Constant { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|row| row.len() != dim) {
                    return Err(Error::BadTorus(format!("metric must be {dim}x{dim}")));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| matrix[i][j]))
            }
            MetricSpec::ConformalSine { amplitude, axis } => {
                if *axis >= dim {
                    return Err(Error::BadTorus(format!("axis {axis} out of range")));
                }
                let s = (amplitude * (tau * x[*axis]).sin()).exp();
                Ok(DMatrix::identity(dim, dim) * s)
            }
            MetricSpec::SeparableSine { amplitude } => Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_fn(
                dim,
                |k, _| (amplitude * (tau * x[k]).sin()).exp(),
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AffineTorus {
    dim: usize,
    grid: usize,
    nu: f64,
    metric: Vec<DMatrix<f64>>,
    metric_inv: Vec<DMatrix<f64>>,
    spectral: Spectral,
}

/// Validated torus from a metric family. See [`AffineTorus::new`].
pub fn make_torus(dim: usize, grid: usize, metric: &MetricSpec, nu: f64) -> Result<AffineTorus> {
    AffineTorus::new(dim, grid, metric, nu)
}

impl AffineTorus {
    pub fn new(dim: usize, grid: usize, metric: &MetricSpec, nu: f64) -> Result<Self> {
        check_grid(dim, grid)?;
        let sp = Spectral::new(dim, grid);
        let field = (0..sp.npts).map(|p| metric.sample(dim, &sp.coords(p))).collect::<Result<Vec<_>>>()?;
        Self::assemble(dim, grid, field, nu, sp)
    }

    /// Torus with an explicitly sampled metric field (one matrix per grid point).
    pub fn from_field(dim: usize, grid: usize, metric: Vec<DMatrix<f64>>, nu: f64) -> Result<Self> {
        check_grid(dim, grid)?;
        let sp = Spectral::new(dim, grid);
        if metric.len() != sp.npts {
            return Err(Error::BadTorus(format!("expected {} metric samples, got {}", sp.npts, metric.len())));
        }
        Self::assemble(dim, grid, metric, nu, sp)
    }

    fn assemble(dim: usize, grid: usize, metric: Vec<DMatrix<f64>>, nu: f64, spectral: Spectral) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::BadTorus(format!("nu must be positive, got {nu}")));
        }
        let mut metric_inv = Vec::with_capacity(metric.len());
        for (point, g) in metric.iter().enumerate() {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::BadTorus(format!("metric must be {dim}x{dim}")));
            }
            let asym = (g - g.transpose()).amax();
            if asym > 1e-12 * g.amax().max(1.0) || !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonSPDMetric { point });
            }
            let chol = nalgebra::Cholesky::new(g.clone()).ok_or(Error::NonSPDMetric { point })?;
            metric_inv.push(chol.inverse());
        }
        Ok(AffineTorus { dim, grid, nu, metric, metric_inv, spectral })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn npts(&self) -> usize {
        self.spectral.npts
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn coords(&self, point: usize) -> Vec<f64> {
        self.spectral.coords(point)
    }

    pub fn metric_at(&self, point: usize) -> &DMatrix<f64> {
        &self.metric[point]
    }

    pub fn metric_inv_at(&self, point: usize) -> &DMatrix<f64> {
        &self.metric_inv[point]
    }

    /// Grid average of `g^{-1}`.
    pub fn mean_metric_inv(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for g in &self.metric_inv {
            acc += g;
        }
        acc / self.npts() as f64
    }

    pub fn is_constant_metric(&self) -> bool {
        self.metric.iter().all(|g| (g - &self.metric[0]).amax() == 0.0)
    }

    /// Same geometry resampled on another grid (analytic families only).
    pub fn with_grid(&self, spec: &MetricSpec, grid: usize) -> Result<Self> {
        AffineTorus::new(self.dim, grid, spec, self.nu)
    }

    /// `ω_g = Σ g_ij dz^i ⊗ dz̄^j`.
    pub fn omega(&self) -> PQField {
        let n = self.dim;
        let mut w = PQField::zeros(n, 1, 1, ValueShape::Scalar, self.npts());
        for i in 0..n {
            for j in 0..n {
                let vals = self.metric.iter().map(|g| CMat::from_element(1, 1, C64::new(g[(i, j)], 0.0))).collect();
                w.set(&[i], &[j], vals);
            }
        }
        w
    }

    /// `ω_g^k`, with `ω⁰ = 1`.
    pub fn omega_power(&self, k: usize) -> PQField {
        let mut acc = PQField::constant_scalar(self.dim, self.npts(), C64::new(1.0, 0.0));
        if k == 0 {
            return acc;
        }
        let w = self.omega();
        for _ in 0..k {
            acc = calculus::wedge(&acc, &w).expect("k <= n");
        }
        acc
    }

    /// `∫_M χ / ν` for a scalar `(n,n)` field.
    pub fn integrate(&self, chi: &PQField) -> Result<f64> {
        let top = chi.top()?;
        let n = self.dim;
        let sign = if mutation().flip_nu_sign || (n * (n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let sum: f64 = top.iter().map(|m| m.trace().re).sum();
        Ok(sign * sum / (top.len() as f64 * self.nu))
    }

    /// `∫ ω_g^n / ν`.
    pub fn volume(&self) -> f64 {
        self.integrate(&self.omega_power(self.dim)).expect("ω^n has top degree")
    }

    /// Sup-norm of `∂∂̄(ω_g^{n-1})`.
    pub fn gauduchon_defect(&self) -> f64 {
        let w = self.omega_power(self.dim - 1);
        ddbar_norm(self, &w)
    }

    /// Sup-norm of `∂∂̄(ω_g^{n-2})`; identically zero for `n <= 2` since `ω⁰ = 1`.
    pub fn astheno_defect(&self) -> f64 {
        if self.dim <= 2 {
            return 0.0;
        }
        ddbar_norm(self, &self.omega_power(self.dim - 2))
    }
}

fn ddbar_norm(t: &AffineTorus, w: &PQField) -> f64 {
    let sp = t.spectral();
    let d = calculus::dbar(sp, w).and_then(|x| calculus::del(sp, &x)).expect("degrees below n");
    d.sup_norm()
}

fn check_grid(dim: usize, grid: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::BadTorus("dimension must be at least 1".into()));
    }
    if grid < 4 || grid % 2 != 0 {
        return Err(Error::BadGrid(grid));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        let bad = MetricSpec::Constant { matrix: vec![vec![1.0, 0.0], vec![0.0, -1.0]] };
        assert!(matches!(AffineTorus::new(2, 8, &bad, 1.0), Err(Error::NonSPDMetric { .. })));
        assert!(matches!(AffineTorus::new(2, 7, &MetricSpec::identity(2), 1.0), Err(Error::BadGrid(7))));
        assert!(matches!(AffineTorus::new(2, 2, &MetricSpec::identity(2), 1.0), Err(Error::BadGrid(2))));
        assert!(AffineTorus::new(2, 8, &MetricSpec::identity(2), 0.0).is_err());
    }

    #[test]
    fn integrate_top_unit_coefficient() {
        let t = AffineTorus::new(2, 4, &MetricSpec::identity(2), 1.0).unwrap();
        let mut chi = PQField::zeros(2, 2, 2, ValueShape::Scalar, t.npts());
        chi.set(&[0, 1], &[0, 1], vec![CMat::from_element(1, 1, C64::new(1.0, 0.0)); t.npts()]);
        assert_eq!(t.integrate(&chi).unwrap(), -1.0);
        let zero = PQField::zeros(2, 2, 2, ValueShape::Scalar, t.npts());
        assert_eq!(t.integrate(&zero).unwrap(), 0.0);
        let wrong = PQField::zeros(2, 1, 2, ValueShape::Scalar, t.npts());
        assert!(matches!(t.integrate(&wrong), Err(Error::DegreeMismatch { .. })));
    }

    #[test]
    fn volume_is_factorial_times_det() {
        let g = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        let t = AffineTorus::new(2, 4, &MetricSpec::Constant { matrix: g }, 0.5).unwrap();
        assert!((t.volume() - 2.0 * 1.75 / 0.5).abs() < 1e-13);
    }

    #[test]
    fn gauduchon_defects() {
        let flat = AffineTorus::new(2, 16, &MetricSpec::identity(2), 1.0).unwrap();
        assert!(flat.gauduchon_defect() < 1e-12);
        assert_eq!(flat.astheno_defect(), 0.0);
        let conf = AffineTorus::new(2, 32, &MetricSpec::ConformalSine { amplitude: 1.0, axis: 0 }, 1.0).unwrap();
        assert!(conf.gauduchon_defect() > 1.0);
        assert_eq!(conf.astheno_defect(), 0.0);
        let sep = AffineTorus::new(2, 32, &MetricSpec::SeparableSine { amplitude: 0.5 }, 1.0).unwrap();
        assert!(sep.gauduchon_defect() < 1e-10);
    }

    #[test]
    fn four_torus_defects() {
        let flat = AffineTorus::new(4, 4, &MetricSpec::identity(4), 1.0).unwrap();
        assert!(flat.gauduchon_defect() < 1e-12);
        assert!(flat.astheno_defect() < 1e-12);
        let conf = AffineTorus::new(4, 8, &MetricSpec::ConformalSine { amplitude: 1.0, axis: 0 }, 1.0).unwrap();
        assert!(conf.astheno_defect() > 1e-2);
    }
}
