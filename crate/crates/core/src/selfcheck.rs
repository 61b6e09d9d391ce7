//! Built-in numerical self-checks, used by `aymh selftest` and the mutation
//! harness.
//!
//! Suite 1 checks the form calculus (nilpotency, anticommutation, Leibniz,
//! and the wedge sign against a word-sorting oracle). Suite 2 checks the
//! trace identity between the mean curvature and the first Chern form.
//! Suite 3 checks degrees (metric independence, vanishing, and an
//! integration-by-parts oracle) and the volume of `ωⁿ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::FlatHiggsBundle;
use crate::calculus::{self, masks, PQField, ValueShape};
use crate::error::Result;
use crate::geometry::{AffineTorus, MetricSpec};
use crate::hermitian::{self, MetricField};
use crate::scenario;
use crate::spectral::Spectral;
use crate::{CMat, C64};

pub const NILPOTENCY_TOL: f64 = 1e-10;
pub const LEIBNIZ_TOL: f64 = 1e-9;
pub const CHERN_TOL: f64 = 1e-8;
pub const DEGREE_TOL: f64 = 1e-8;
pub const VOLUME_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub suite: u8,
    pub name: String,
    /// Worst observed error.
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Check {
    fn new(suite: u8, name: &str, value: f64, tol: f64) -> Self {
        Check { suite, name: name.to_string(), value, tol, passed: value.is_finite() && value < tol }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelfcheckConfig {
    pub grid: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        SelfcheckConfig { grid: 16, samples: 4, seed: 20240611 }
    }
}

/// A random band-limited scalar field: a few Fourier modes with `|m_k| ≤ 2`,
/// fewer on coarse grids so that products stay below the Nyquist mode.
fn smooth(sp: &Spectral, rng: &mut ChaCha8Rng) -> Vec<CMat> {
    let n = sp.dim;
    let kmax = ((sp.n / 2 - 1) / 2).min(2) as i64;
    let terms: Vec<(Vec<i64>, C64)> = (0..4)
        .map(|_| {
            let m = (0..n).map(|_| rng.gen_range(-kmax..=kmax)).collect();
            (m, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        })
        .collect();
    let tau = 2.0 * std::f64::consts::PI;
    (0..sp.npts)
        .map(|p| {
            let x = sp.coords(p);
            let z: C64 = terms
                .iter()
                .map(|(m, c)| {
                    let phase: f64 = m.iter().zip(&x).map(|(&k, &xi)| k as f64 * xi).sum();
                    c * C64::from_polar(1.0, tau * phase)
                })
                .sum();
            CMat::from_element(1, 1, z)
        })
        .collect()
}

fn random_form(sp: &Spectral, p: usize, q: usize, rng: &mut ChaCha8Rng) -> PQField {
    let mut f = PQField::zeros(sp.dim, p, q, ValueShape::Scalar, sp.npts);
    for i in masks(sp.dim, p) {
        for j in masks(sp.dim, q) {
            *f.comp_mut(i, j) = smooth(sp, rng);
        }
    }
    f
}

fn sign(k: usize) -> C64 {
    C64::new(if k % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
}

/// Expand `(c₁ dz^I ⊗ dz̄^J)∧(c₂ dz^K ⊗ dz̄^L)` by reading each factor as the
/// word `dz^{i₁}…dz^{i_p} dz̄^{j₁}…dz̄^{j_q}` in one exterior algebra on `2n`
/// generators and bubble-sorting the concatenation.
pub fn wedge_oracle(n: usize, a: (u32, u32), b: (u32, u32)) -> Option<(u32, u32, i32)> {
    let word = |i: u32, j: u32| -> Vec<usize> {
        let mut w: Vec<usize> = (0..n).filter(|k| i >> k & 1 == 1).collect();
        w.extend((0..n).filter(|k| j >> k & 1 == 1).map(|k| n + k));
        w
    };
    let mut w = word(a.0, a.1);
    w.extend(word(b.0, b.1));
    let mut s = 1;
    for end in (1..w.len()).rev() {
        for k in 0..end {
            if w[k] == w[k + 1] {
                return None;
            }
            if w[k] > w[k + 1] {
                w.swap(k, k + 1);
                s = -s;
            }
        }
    }
    if w.windows(2).any(|p| p[0] == p[1]) {
        return None;
    }
    let i = w.iter().filter(|&&g| g < n).fold(0, |m, &g| m | 1 << g);
    let j = w.iter().filter(|&&g| g >= n).fold(0, |m, &g| m | 1 << (g - n));
    Some((i, j, s))
}

/// Wedge of constant integer-coefficient forms against [`wedge_oracle`].
/// Returns the number of mismatching coefficients.
fn wedge_mismatches(n: usize, rng: &mut ChaCha8Rng) -> Result<usize> {
    let mut bad = 0;
    for p1 in 0..=n {
        for q1 in 0..=n {
            for p2 in 0..=n - p1 {
                for q2 in 0..=n - q1 {
                    let mut a = PQField::zeros(n, p1, q1, ValueShape::Scalar, 1);
                    let mut b = PQField::zeros(n, p2, q2, ValueShape::Scalar, 1);
                    let mut ca = Vec::new();
                    let mut cb = Vec::new();
                    for i in masks(n, p1) {
                        for j in masks(n, q1) {
                            let c = rng.gen_range(-9i32..=9);
                            a.comp_mut(i, j)[0] = CMat::from_element(1, 1, C64::new(c as f64, 0.0));
                            ca.push(((i, j), c));
                        }
                    }
                    for i in masks(n, p2) {
                        for j in masks(n, q2) {
                            let c = rng.gen_range(-9i32..=9);
                            b.comp_mut(i, j)[0] = CMat::from_element(1, 1, C64::new(c as f64, 0.0));
                            cb.push(((i, j), c));
                        }
                    }
                    let got = calculus::wedge(&a, &b)?;
                    let mut want = PQField::zeros(n, p1 + p2, q1 + q2, ValueShape::Scalar, 1);
                    for &(ka, va) in &ca {
                        for &(kb, vb) in &cb {
                            if let Some((i, j, s)) = wedge_oracle(n, ka, kb) {
                                want.comp_mut(i, j)[0][(0, 0)] += C64::new((s * va * vb) as f64, 0.0);
                            }
                        }
                    }
                    for ((_, _, g), (_, _, w)) in got.components().zip(want.components()) {
                        if g[0][(0, 0)] != w[0][(0, 0)] {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    // (dz¹ ⊗ dz̄¹) ∧ (dz² ⊗ dz̄²) = -dz¹² ⊗ dz̄¹²
    let mut a = PQField::zeros(2, 1, 1, ValueShape::Scalar, 1);
    a.set(&[0], &[0], vec![CMat::from_element(1, 1, C64::new(1.0, 0.0))]);
    let mut b = PQField::zeros(2, 1, 1, ValueShape::Scalar, 1);
    b.set(&[1], &[1], vec![CMat::from_element(1, 1, C64::new(1.0, 0.0))]);
    if calculus::wedge(&a, &b)?.at(&[0, 1], &[0, 1])[0][(0, 0)] != C64::new(-1.0, 0.0) {
        bad += 1;
    }
    Ok(bad)
}

/// Suite 1 on `T^dim`.
pub fn calculus_suite(dim: usize, cfg: &SelfcheckConfig) -> Result<Vec<Check>> {
    let sp = Spectral::new(dim, cfg.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut dd, mut bb, mut anti, mut leib_d, mut leib_b) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.samples {
        for p in 0..=dim {
            for q in 0..=dim {
                let a = random_form(&sp, p, q, &mut rng);
                if p + 2 <= dim {
                    dd = dd.max(calculus::del(&sp, &calculus::del(&sp, &a)?)?.sup_norm());
                }
                if q + 2 <= dim {
                    bb = bb.max(calculus::dbar(&sp, &calculus::dbar(&sp, &a)?)?.sup_norm());
                }
                if p < dim && q < dim {
                    let x = calculus::del(&sp, &calculus::dbar(&sp, &a)?)?;
                    let y = calculus::dbar(&sp, &calculus::del(&sp, &a)?)?;
                    anti = anti.max(x.add(&y)?.sup_norm());
                }
            }
        }
        for p1 in 0..=dim {
            for q1 in 0..=dim {
                for p2 in 0..=dim - p1 {
                    for q2 in 0..=dim - q1 {
                        let a = random_form(&sp, p1, q1, &mut rng);
                        let b = random_form(&sp, p2, q2, &mut rng);
                        let ab = calculus::wedge(&a, &b)?;
                        let s = sign(p1 + q1);
                        if p1 + p2 < dim {
                            let lhs = calculus::del(&sp, &ab)?;
                            let rhs = calculus::wedge(&calculus::del(&sp, &a)?, &b)?
                                .add(&calculus::wedge(&a, &calculus::del(&sp, &b)?)?.scale(s))?;
                            leib_d = leib_d.max(lhs.sub(&rhs)?.sup_norm());
                        }
                        if q1 + q2 < dim {
                            let lhs = calculus::dbar(&sp, &ab)?;
                            let rhs = calculus::wedge(&calculus::dbar(&sp, &a)?, &b)?
                                .add(&calculus::wedge(&a, &calculus::dbar(&sp, &b)?)?.scale(s))?;
                            leib_b = leib_b.max(lhs.sub(&rhs)?.sup_norm());
                        }
                    }
                }
            }
        }
    }
    let wedge_bad = wedge_mismatches(dim, &mut rng)?;
    Ok(vec![
        Check::new(1, "del_squared", dd, NILPOTENCY_TOL),
        Check::new(1, "dbar_squared", bb, NILPOTENCY_TOL),
        Check::new(1, "del_dbar_anticommute", anti, NILPOTENCY_TOL),
        Check::new(1, "leibniz_del", leib_d, LEIBNIZ_TOL),
        Check::new(1, "leibniz_dbar", leib_b, LEIBNIZ_TOL),
        Check::new(1, "wedge_sign_oracle_mismatches", wedge_bad as f64, 0.5),
    ])
}

fn gauduchon_torus(dim: usize, grid: usize) -> Result<AffineTorus> {
    AffineTorus::new(dim, grid, &MetricSpec::SeparableSine { amplitude: 0.3 }, 1.0)
}

fn rank2_bundles(dim: usize) -> Result<Vec<FlatHiggsBundle>> {
    [scenario::flat_unitary(dim, 8), scenario::jordan(dim, 8), scenario::skew_diagonalizable(dim, 8)]
        .iter()
        .map(|c| c.build_bundle())
        .collect()
}

/// Sup-norm of `(tr K^φ) ωⁿ - n c₁ ∧ ωⁿ⁻¹`.
pub fn chern_identity_defect(bundle: &FlatHiggsBundle, torus: &AffineTorus, h: &MetricField) -> Result<f64> {
    let n = torus.dim();
    let k = hermitian::mean_curvature(bundle, torus, h)?;
    let trk = PQField::function(n, k.iter().map(|m| CMat::from_element(1, 1, m.trace())).collect());
    let lhs = calculus::wedge(&trk, &torus.omega_power(n))?;
    let c1 = hermitian::first_chern_form(bundle, torus, h)?;
    let rhs = calculus::wedge(&c1, &torus.omega_power(n - 1))?.scale(C64::new(n as f64, 0.0));
    Ok(lhs.sub(&rhs)?.sup_norm())
}

/// Suite 2 on `T^dim`: rank-2 bundles, random metrics, non-flat `g`.
pub fn chern_suite(dim: usize, cfg: &SelfcheckConfig) -> Result<Vec<Check>> {
    let torus = gauduchon_torus(dim, cfg.grid)?;
    let mut worst = 0.0f64;
    for (b, bundle) in rank2_bundles(dim)?.iter().enumerate() {
        for s in 0..cfg.samples {
            let h = scenario::random_metric(&torus, 2, 0.8, cfg.seed ^ (100 * b + s) as u64);
            worst = worst.max(chern_identity_defect(bundle, &torus, &h)?);
        }
    }
    Ok(vec![Check::new(2, "chern_identity", worst, CHERN_TOL)])
}

/// `(1/n)∫ tr K ωⁿ/ν` computed by moving the derivative onto the metric:
/// `tr K = -¼ Σ g^{kj} ∂_j∂_k log det H`, so the integral equals
/// `(n-1)!/ν · mean(¼ Σ ∂_j(g^{kj} det g) ∂_k log det H)`.
pub fn degree_by_parts(torus: &AffineTorus, h: &MetricField) -> f64 {
    let sp = torus.spectral();
    let n = torus.dim();
    let logdet: Vec<C64> = h.values().iter().map(|m| C64::new(m.determinant().re.ln(), 0.0)).collect();
    let mut acc = 0.0;
    for k in 0..n {
        let dk = sp.deriv(&logdet, k);
        for j in 0..n {
            let w: Vec<C64> = (0..torus.npts())
                .map(|p| C64::new(torus.metric_inv_at(p)[(k, j)] * torus.metric_at(p).determinant(), 0.0))
                .collect();
            let dw = sp.deriv(&w, j);
            acc += dw.iter().zip(&dk).map(|(a, b)| 0.25 * a.re * b.re).sum::<f64>();
        }
    }
    let fact: f64 = (1..n).map(|k| k as f64).product();
    fact * acc / (torus.npts() as f64 * torus.nu())
}

/// `n! · mean(det g) / ν`.
pub fn volume_oracle(torus: &AffineTorus) -> f64 {
    let n = torus.dim();
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let mean = (0..torus.npts()).map(|p| torus.metric_at(p).determinant()).sum::<f64>() / torus.npts() as f64;
    fact * mean / torus.nu()
}

/// Suite 3 on `T^dim`: three bundles, `samples` metric pairs each.
pub fn degree_suite(dim: usize, cfg: &SelfcheckConfig) -> Result<Vec<Check>> {
    let torus = gauduchon_torus(dim, cfg.grid)?;
    let bundles = vec![
        scenario::line_nonunitary(dim, 8).build_bundle()?,
        scenario::jordan(dim, 8).build_bundle()?,
        scenario::skew_diagonalizable(dim, 8).build_bundle()?,
    ];
    let (mut spread, mut vanish, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for (b, bundle) in bundles.iter().enumerate() {
        for s in 0..cfg.samples {
            let seed = cfg.seed ^ (1000 * (b + 1) + 2 * s) as u64;
            let h1 = scenario::random_metric(&torus, bundle.rank(), 0.8, seed);
            let h2 = scenario::random_metric(&torus, bundle.rank(), 0.8, seed + 1);
            let d1 = hermitian::degree(bundle, &torus, &h1)?;
            let d2 = hermitian::degree(bundle, &torus, &h2)?;
            spread = spread.max((d1 - d2).abs());
            vanish = vanish.max(d1.abs()).max(d2.abs());
            oracle = oracle.max((d1 - degree_by_parts(&torus, &h1)).abs());
        }
    }
    let flat = AffineTorus::new(dim, cfg.grid, &MetricSpec::identity(dim), 1.0)?;
    let vol = [&torus, &flat]
        .iter()
        .map(|t| (t.volume() - volume_oracle(t)).abs() / volume_oracle(t))
        .fold(0.0, f64::max);
    Ok(vec![
        Check::new(3, "degree_metric_independent", spread, DEGREE_TOL),
        Check::new(3, "degree_vanishes_on_torus", vanish, DEGREE_TOL),
        Check::new(3, "degree_by_parts_oracle", oracle, DEGREE_TOL),
        Check::new(3, "volume_oracle", vol, VOLUME_TOL),
    ])
}

/// Suites 1 to 3 on `T²`.
pub fn run_all(cfg: &SelfcheckConfig) -> Result<Vec<Check>> {
    let mut out = calculus_suite(2, cfg)?;
    out.extend(chern_suite(2, cfg)?);
    out.extend(degree_suite(2, cfg)?);
    Ok(out)
}
