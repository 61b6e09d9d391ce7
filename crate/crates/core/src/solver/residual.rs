//! The perturbed equation `L_ε(f) = 0` and its linearization.
//!
//! Unknowns `f` are `h₀`-self-adjoint endomorphism fields. With `H₀ = C^† C`
//! (Cholesky, pointwise), `f̂ = C f C⁻¹` is Hermitian, and the solver works
//! with the `r²` real coordinates of Hermitian matrices in that frame.

use crate::bundle::FlatHiggsBundle;
use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::hermitian::{self, MetricField};
use crate::linalg::{self, commutator};
use crate::{CMat, C64};

const HALF: C64 = C64::new(0.5, 0.0);

/// Background data derived once from `(bundle, torus, H₀, γ)`.
pub struct Problem<'a> {
    pub bundle: &'a FlatHiggsBundle,
    pub torus: &'a AffineTorus,
    pub h0: Vec<CMat>,
    pub gamma: f64,
    chol: Vec<CMat>,
    chol_inv: Vec<CMat>,
    theta0: Vec<Vec<CMat>>,
    psi0: Vec<Vec<CMat>>,
    k0: Vec<CMat>,
    /// index pairs `(k, j)` where `g^{kj}` is not identically zero
    pairs: Vec<(usize, usize)>,
}

/// Quantities at a fixed `f` shared by the residual and the linearization.
pub struct State {
    pub f: Vec<CMat>,
    pub finv: Vec<CMat>,
    /// `(∂₀f)_k`
    d: Vec<Vec<CMat>>,
    /// `[ψ₀_j, f]`
    comm: Vec<Vec<CMat>>,
    /// eigen-decomposition of `f̂`
    eig: Vec<(Vec<f64>, CMat)>,
    pub eps: f64,
    /// `L_ε(f)`
    pub l: Vec<CMat>,
}

impl<'a> Problem<'a> {
    pub fn new(bundle: &'a FlatHiggsBundle, torus: &'a AffineTorus, h0: &MetricField, gamma: f64) -> Result<Self> {
        if bundle.rank() != h0.rank() {
            return Err(Error::RankMismatch { bundle: bundle.rank(), metric: h0.rank() });
        }
        let theta = hermitian::extended_connection_form(bundle, torus, h0)?;
        let psi = hermitian::higgs_adjoint(bundle, torus, h0)?;
        let k0 = hermitian::mean_curvature(bundle, torus, h0)?;
        let n = torus.dim();
        let theta0 = (0..n).map(|k| theta.at(&[k], &[]).to_vec()).collect();
        let psi0 = (0..n).map(|j| psi.at(&[], &[j]).to_vec()).collect();
        let mut chol = Vec::with_capacity(torus.npts());
        let mut chol_inv = Vec::with_capacity(torus.npts());
        for (point, h) in h0.values().iter().enumerate() {
            let c = linalg::chol_upper(h).ok_or(Error::NotPositive { point, min_eig: linalg::herm_eig(h).0[0] })?;
            chol_inv.push(linalg::inverse(&c).expect("Cholesky factor is invertible"));
            chol.push(c);
        }
        let pairs = (0..n)
            .flat_map(|k| (0..n).map(move |j| (k, j)))
            .filter(|&(k, j)| (0..torus.npts()).any(|p| torus.metric_inv_at(p)[(k, j)] != 0.0))
            .collect();
        Ok(Problem { bundle, torus, h0: h0.values().to_vec(), gamma, chol, chol_inv, theta0, psi0, k0, pairs })
    }

    pub fn npts(&self) -> usize {
        self.torus.npts()
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    /// `K₀^φ`, the mean curvature of the background.
    pub fn k0(&self) -> &[CMat] {
        &self.k0
    }

    /// `X̂ = C X C⁻¹`.
    pub fn to_hat(&self, x: &[CMat]) -> Vec<CMat> {
        x.iter().zip(&self.chol).zip(&self.chol_inv).map(|((v, c), ci)| c * v * ci).collect()
    }

    /// `X = C⁻¹ X̂ C`.
    pub fn from_hat(&self, x: &[CMat]) -> Vec<CMat> {
        x.iter().zip(&self.chol).zip(&self.chol_inv).map(|((v, c), ci)| ci * v * c).collect()
    }

    /// `(∂₀X)_k = ½∇_k X + [θ₀_k, X]`.
    fn partial0(&self, x: &[CMat]) -> Vec<Vec<CMat>> {
        (0..self.torus.dim())
            .map(|k| {
                let mut d = hermitian::end_derivative(self.bundle, self.torus, x, k);
                for ((dv, xv), t) in d.iter_mut().zip(x).zip(&self.theta0[k]) {
                    *dv = &*dv * HALF + commutator(t, xv);
                }
                d
            })
            .collect()
    }

    /// `Σ g^{kj} (-½ ∇_j Y_k)`.
    fn dbar_trace(&self, y: &[Vec<CMat>]) -> Vec<CMat> {
        let r = self.rank();
        let mut out = vec![CMat::zeros(r, r); self.npts()];
        for &(k, j) in &self.pairs {
            let d = hermitian::end_derivative(self.bundle, self.torus, &y[k], j);
            for (p, o) in out.iter_mut().enumerate() {
                let w = self.torus.metric_inv_at(p)[(k, j)];
                *o -= &d[p] * C64::new(0.5 * w, 0.0);
            }
        }
        out
    }

    /// `Σ g^{kj} [φ_k, Z_j]`.
    fn higgs_trace(&self, z: &[Vec<CMat>]) -> Vec<CMat> {
        let r = self.rank();
        let phi = self.bundle.higgs();
        (0..self.npts())
            .map(|p| {
                let mut acc = CMat::zeros(r, r);
                let g = self.torus.metric_inv_at(p);
                for &(k, j) in &self.pairs {
                    acc += commutator(&phi[k], &z[j][p]) * C64::new(g[(k, j)], 0.0);
                }
                acc
            })
            .collect()
    }

    /// Evaluate everything at `f`, including `L_ε(f)`.
    pub fn state(&self, f: &[CMat], eps: f64) -> Result<State> {
        let fhat = self.to_hat(f);
        let mut eig = Vec::with_capacity(f.len());
        for (point, m) in fhat.iter().enumerate() {
            let (vals, u) = linalg::herm_eig(m);
            if !(vals[0] > hermitian::EIGEN_FLOOR) {
                return Err(Error::NotPositive { point, min_eig: vals[0] });
            }
            eig.push((vals.iter().cloned().collect::<Vec<f64>>(), u));
        }
        let finv: Vec<CMat> = f.iter().map(|m| linalg::inverse(m).expect("positive f is invertible")).collect();
        let d = self.partial0(f);
        let y: Vec<Vec<CMat>> = d.iter().map(|dk| finv.iter().zip(dk).map(|(fi, x)| fi * x).collect()).collect();
        let comm: Vec<Vec<CMat>> =
            self.psi0.iter().map(|pj| pj.iter().zip(f).map(|(p, fv)| commutator(p, fv)).collect()).collect();
        let z: Vec<Vec<CMat>> = comm.iter().map(|cj| finv.iter().zip(cj).map(|(fi, c)| fi * c).collect()).collect();
        let t1 = self.dbar_trace(&y);
        let t2 = self.higgs_trace(&z);
        let r = self.rank();
        let id = linalg::identity(r);
        let logs = self.log_from_eig(&eig);
        let l = (0..self.npts())
            .map(|p| &self.k0[p] - &id * C64::new(self.gamma, 0.0) + &t1[p] + &t2[p] + &logs[p] * C64::new(eps, 0.0))
            .collect();
        Ok(State { f: f.to_vec(), finv, d, comm, eig, eps, l })
    }

    fn log_from_eig(&self, eig: &[(Vec<f64>, CMat)]) -> Vec<CMat> {
        let hat: Vec<CMat> = eig
            .iter()
            .map(|(vals, u)| {
                let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| C64::new(v.ln(), 0.0))));
                u * d * u.adjoint()
            })
            .collect();
        self.from_hat(&hat)
    }

    /// `L_ε(f) = K₀ - γ + tr_g ∂̄(f⁻¹∂₀f) + tr_g[φ, f⁻¹[φ*, f]] + ε log f`.
    pub fn residual(&self, f: &[CMat], eps: f64) -> Result<Vec<CMat>> {
        Ok(self.state(f, eps)?.l)
    }

    /// Directional derivative of `f ↦ f·L_ε(f)` in direction `X`.
    pub fn xi(&self, st: &State, x: &[CMat]) -> Vec<CMat> {
        let n = self.torus.dim();
        let dx = self.partial0(x);
        let fxf: Vec<CMat> = st.finv.iter().zip(x).map(|(fi, xv)| fi * xv * fi).collect();
        let dy: Vec<Vec<CMat>> = (0..n)
            .map(|k| (0..self.npts()).map(|p| -(&fxf[p] * &st.d[k][p]) + &st.finv[p] * &dx[k][p]).collect())
            .collect();
        let dz: Vec<Vec<CMat>> = (0..n)
            .map(|j| {
                (0..self.npts())
                    .map(|p| -(&fxf[p] * &st.comm[j][p]) + &st.finv[p] * commutator(&self.psi0[j][p], &x[p]))
                    .collect()
            })
            .collect();
        let t1 = self.dbar_trace(&dy);
        let t2 = self.higgs_trace(&dz);
        let dlog = if st.eps != 0.0 { Some(self.dlog(st, x)) } else { None };
        (0..self.npts())
            .map(|p| {
                let mut dl = &t1[p] + &t2[p];
                if let Some(dl_log) = &dlog {
                    dl += &dl_log[p] * C64::new(st.eps, 0.0);
                }
                &x[p] * &st.l[p] + &st.f[p] * dl
            })
            .collect()
    }

    /// Fréchet derivative of `log f` via divided differences in the `f̂` eigenbasis.
    fn dlog(&self, st: &State, x: &[CMat]) -> Vec<CMat> {
        let xhat = self.to_hat(x);
        let hat: Vec<CMat> = st
            .eig
            .iter()
            .zip(&xhat)
            .map(|((vals, u), xv)| {
                let mut e = u.adjoint() * xv * u;
                let r = vals.len();
                for i in 0..r {
                    for j in 0..r {
                        let (a, b) = (vals[i], vals[j]);
                        let w = if (a - b).abs() <= 1e-12 * a.max(b) {
                            2.0 / (a + b)
                        } else {
                            (a.ln() - b.ln()) / (a - b)
                        };
                        e[(i, j)] *= w;
                    }
                }
                u * e * u.adjoint()
            })
            .collect();
        self.from_hat(&hat)
    }

    /// `f̂^{1/2}` and `f̂^{-1/2}` pointwise.
    pub fn half_powers(&self, st: &State) -> (Vec<CMat>, Vec<CMat>) {
        let pow = |vals: &[f64], u: &CMat, e: f64| {
            let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|v| C64::new(v.powf(e), 0.0))));
            u * d * u.adjoint()
        };
        st.eig.iter().map(|(v, u)| (pow(v, u, 0.5), pow(v, u, -0.5))).unzip()
    }

    /// `f̂^{1/2} exp(Ŷ) f̂^{1/2}` mapped back to the bundle frame.
    pub fn exp_update(&self, sqrt: &[CMat], y: &[CMat]) -> Vec<CMat> {
        let hat: Vec<CMat> = sqrt
            .iter()
            .zip(y)
            .map(|(s, yv)| s * linalg::herm_fn(&linalg::hermitian_part(yv), f64::exp) * s)
            .collect();
        self.from_hat(&hat)
    }

    /// `max |log λ(f̂)|` over the grid.
    pub fn m_of(&self, st: &State) -> f64 {
        st.eig.iter().flat_map(|(v, _)| v.iter()).map(|l| l.ln().abs()).fold(0.0, f64::max)
    }

    /// `max |det f - 1|`.
    pub fn det_defect(&self, st: &State) -> f64 {
        st.eig.iter().map(|(v, _)| (v.iter().product::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Number of reals per grid point.
    pub fn block(&self) -> usize {
        self.rank() * self.rank()
    }

    /// Pack Hermitian parts of `X̂` (component-major).
    pub fn pack_hat(&self, xhat: &[CMat]) -> Vec<f64> {
        let r = self.rank();
        let np = self.npts();
        let mut out = vec![0.0; r * r * np];
        for (p, m) in xhat.iter().enumerate() {
            let mut c = 0;
            for i in 0..r {
                out[c * np + p] = m[(i, i)].re;
                c += 1;
            }
            for i in 0..r {
                for j in i + 1..r {
                    let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                    out[c * np + p] = z.re;
                    out[(c + 1) * np + p] = z.im;
                    c += 2;
                }
            }
        }
        out
    }

    pub fn unpack_hat(&self, v: &[f64]) -> Vec<CMat> {
        let r = self.rank();
        let np = self.npts();
        (0..np)
            .map(|p| {
                let mut m = CMat::zeros(r, r);
                let mut c = 0;
                for i in 0..r {
                    m[(i, i)] = C64::new(v[c * np + p], 0.0);
                    c += 1;
                }
                for i in 0..r {
                    for j in i + 1..r {
                        let z = C64::new(v[c * np + p], v[(c + 1) * np + p]);
                        m[(i, j)] = z;
                        m[(j, i)] = z.conj();
                        c += 2;
                    }
                }
                m
            })
            .collect()
    }

    /// `F(f) = f·L_ε(f)` packed in the Hermitian frame.
    pub fn packed_residual(&self, st: &State) -> Vec<f64> {
        let fl: Vec<CMat> = st.f.iter().zip(&st.l).map(|(f, l)| f * l).collect();
        self.pack_hat(&self.to_hat(&fl))
    }

    /// `Ξ` on packed Hermitian coordinates.
    pub fn packed_xi(&self, st: &State, v: &[f64]) -> Vec<f64> {
        let x = self.from_hat(&self.unpack_hat(v));
        self.pack_hat(&self.to_hat(&self.xi(st, &x)))
    }

    /// Hermitian-frame `f̂` symmetrized and mapped back.
    pub fn symmetrize(&self, f: &[CMat]) -> Vec<CMat> {
        let hat: Vec<CMat> = self.to_hat(f).iter().map(linalg::hermitian_part).collect();
        self.from_hat(&hat)
    }

    /// `f / det(f)^{1/r}` pointwise.
    pub fn det_normalize(&self, f: &[CMat]) -> Vec<CMat> {
        let r = self.rank() as f64;
        f.iter()
            .map(|m| {
                let d = m.determinant();
                m * C64::new(d.re.abs().powf(-1.0 / r), 0.0)
            })
            .collect()
    }

    /// `H₀ f` as a metric field.
    pub fn metric(&self, f: &[CMat]) -> Result<MetricField> {
        MetricField::new(self.h0.iter().zip(f).map(|(h, fv)| linalg::hermitian_part(&(h * fv))).collect())
    }
}
