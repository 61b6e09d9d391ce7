//! Flat Higgs bundles on the torus, described by commuting monodromy matrices
//! `ρ_k` around the lattice loops and constant Higgs matrices `φ_i`.

use crate::error::{Error, Result};
use crate::linalg::{self, commutator, frob};
use crate::{CMat, C64};

/// Relative tolerance for the commutation invariants.
pub const INVARIANT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FlatHiggsBundle {
    rank: usize,
    monodromy: Vec<CMat>,
    higgs: Vec<CMat>,
    logs: Vec<CMat>,
}

/// Validated bundle with principal logarithms. See [`FlatHiggsBundle::new`].
pub fn make_bundle(rank: usize, monodromy: Vec<CMat>, higgs: Vec<CMat>) -> Result<FlatHiggsBundle> {
    FlatHiggsBundle::new(rank, monodromy, higgs)
}

fn comm_tol(a: &CMat, b: &CMat) -> f64 {
    INVARIANT_TOL * (frob(a) * frob(b)).max(1.0)
}

fn check_shapes(rank: usize, mats: &[CMat], what: &str) -> Result<()> {
    for (k, m) in mats.iter().enumerate() {
        if m.nrows() != rank || m.ncols() != rank {
            return Err(Error::BadBundle(format!("{what}[{k}] is {}x{}, expected {rank}x{rank}", m.nrows(), m.ncols())));
        }
        if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::BadBundle(format!("{what}[{k}] has non-finite entries")));
        }
    }
    Ok(())
}

impl FlatHiggsBundle {
    /// Validates the flatness and Higgs conditions and computes principal logs.
    pub fn new(rank: usize, monodromy: Vec<CMat>, higgs: Vec<CMat>) -> Result<Self> {
        Self::validate_data(rank, &monodromy, &higgs)?;
        let logs = monodromy
            .iter()
            .enumerate()
            .map(|(k, rho)| linalg::logm(rho).ok_or(Error::NoPrincipalLog(k)))
            .collect::<Result<Vec<_>>>()?;
        Self::with_logs(rank, monodromy, higgs, logs)
    }

    /// Like [`FlatHiggsBundle::new`] but with caller-chosen logarithms, which
    /// must commute with each other and with the Higgs field and satisfy
    /// `exp(L_k) = ρ_k`.
    pub fn with_logs(rank: usize, monodromy: Vec<CMat>, higgs: Vec<CMat>, logs: Vec<CMat>) -> Result<Self> {
        Self::validate_data(rank, &monodromy, &higgs)?;
        check_shapes(rank, &logs, "logs")?;
        if logs.len() != monodromy.len() {
            return Err(Error::BadBundle("one logarithm per monodromy matrix required".into()));
        }
        for (k, (l, rho)) in logs.iter().zip(&monodromy).enumerate() {
            if frob(&(linalg::expm(l) - rho)) > 1e-12 * frob(rho).max(1.0) {
                return Err(Error::BadBundle(format!("exp(logs[{k}]) differs from monodromy[{k}]")));
            }
            for (j, other) in logs.iter().enumerate().skip(k + 1) {
                if frob(&commutator(l, other)) > comm_tol(l, other) {
                    return Err(Error::BadBundle(format!("logs[{k}] and logs[{j}] do not commute")));
                }
            }
            for (i, phi) in higgs.iter().enumerate() {
                if frob(&commutator(l, phi)) > comm_tol(l, phi) {
                    return Err(Error::HiggsNotFlat { higgs: i, monodromy: k });
                }
            }
        }
        Ok(FlatHiggsBundle { rank, monodromy, higgs, logs })
    }

    /// Skips all validation. Only meant for building corrupted inputs in tests.
    #[doc(hidden)]
    pub fn new_unchecked(rank: usize, monodromy: Vec<CMat>, higgs: Vec<CMat>, logs: Vec<CMat>) -> Self {
        FlatHiggsBundle { rank, monodromy, higgs, logs }
    }

    fn validate_data(rank: usize, monodromy: &[CMat], higgs: &[CMat]) -> Result<()> {
        if rank == 0 {
            return Err(Error::BadBundle("rank must be at least 1".into()));
        }
        if monodromy.is_empty() || monodromy.len() != higgs.len() {
            return Err(Error::BadBundle(format!(
                "need one monodromy and one Higgs matrix per axis, got {} and {}",
                monodromy.len(),
                higgs.len()
            )));
        }
        check_shapes(rank, monodromy, "monodromy")?;
        check_shapes(rank, higgs, "higgs")?;
        for k in 0..monodromy.len() {
            for l in k + 1..monodromy.len() {
                if frob(&commutator(&monodromy[k], &monodromy[l])) > comm_tol(&monodromy[k], &monodromy[l]) {
                    return Err(Error::NonCommutingMonodromy(k, l));
                }
            }
        }
        for (k, rho) in monodromy.iter().enumerate() {
            for (i, phi) in higgs.iter().enumerate() {
                if frob(&commutator(rho, phi)) > comm_tol(rho, phi) {
                    return Err(Error::HiggsNotFlat { higgs: i, monodromy: k });
                }
            }
        }
        for i in 0..higgs.len() {
            for j in i + 1..higgs.len() {
                if frob(&commutator(&higgs[i], &higgs[j])) > comm_tol(&higgs[i], &higgs[j]) {
                    return Err(Error::HiggsWedgeNonzero(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of lattice directions (the torus dimension).
    pub fn dim(&self) -> usize {
        self.monodromy.len()
    }

    pub fn monodromy(&self) -> &[CMat] {
        &self.monodromy
    }

    pub fn higgs(&self) -> &[CMat] {
        &self.higgs
    }

    pub fn logs(&self) -> &[CMat] {
        &self.logs
    }

    /// All generators of the flat Higgs structure: monodromies then Higgs matrices.
    pub fn generators(&self) -> impl Iterator<Item = &CMat> {
        self.monodromy.iter().chain(self.higgs.iter())
    }

    /// Curvature of `∇ + tφ` in the periodic gauge, where the connection
    /// matrix is the constant `Σ (L_k + tφ_k) dx^k`: the largest Frobenius
    /// norm over `i < j` of `t([L_i,φ_j] - [L_j,φ_i]) + t²[φ_i,φ_j]`.
    pub fn family_curvature_defect(&self, t: f64) -> f64 {
        let n = self.dim();
        let tc = C64::new(t, 0.0);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dphi = commutator(&self.logs[i], &self.higgs[j]) - commutator(&self.logs[j], &self.higgs[i]);
                let sq = commutator(&self.higgs[i], &self.higgs[j]);
                worst = worst.max(frob(&(dphi * tc + sq * (tc * tc))));
            }
        }
        worst
    }

    /// Induced bundle on `End E`, with `vec` in column-major order: monodromy
    /// `Ad ρ_k`, Higgs field `ad φ_i`, logarithms `ad L_k`.
    pub fn endo_bundle(&self) -> FlatHiggsBundle {
        let r = self.rank;
        let id = linalg::identity(r);
        let ad = |a: &CMat| kron(&id, a) - kron(&a.transpose(), &id);
        let monodromy = self
            .monodromy
            .iter()
            .map(|rho| {
                let inv = linalg::inverse(rho).expect("monodromy is invertible");
                kron(&inv.transpose(), rho)
            })
            .collect();
        let higgs = self.higgs.iter().map(ad).collect();
        let logs = self.logs.iter().map(ad).collect();
        FlatHiggsBundle { rank: r * r, monodromy, higgs, logs }
    }

    /// Basis (columns, `vec` order) of the joint commutant of all generators.
    pub fn commutant(&self) -> CMat {
        let r = self.rank;
        let id = linalg::identity(r);
        let gens: Vec<&CMat> = self.generators().collect();
        let mut sys = CMat::zeros(gens.len() * r * r, r * r);
        for (b, g) in gens.iter().enumerate() {
            let block = kron(&id, g) - kron(&g.transpose(), &id);
            sys.view_mut((b * r * r, 0), (r * r, r * r)).copy_from(&block);
        }
        linalg::null_space(&sys, 1e-10)
    }

    /// Whether the joint commutant is the scalars; otherwise a non-scalar
    /// commuting endomorphism as witness.
    pub fn is_simple(&self) -> (bool, Option<CMat>) {
        let basis = self.commutant();
        if basis.ncols() <= 1 {
            return (true, None);
        }
        let r = self.rank;
        let id = linalg::identity(r);
        let rc = C64::new(r as f64, 0.0);
        let traceless: Vec<CMat> = (0..basis.ncols())
            .map(|c| {
                let a = CMat::from_column_slice(r, r, basis.column(c).as_slice());
                let t = a.trace() / rc;
                a - &id * t
            })
            .collect();
        let mut w = traceless
            .into_iter()
            .max_by(|a, b| frob(a).total_cmp(&frob(b)))
            .expect("at least two basis vectors");
        // make the largest entry real positive
        let mut pivot = w[(0, 0)];
        for z in w.iter() {
            if z.norm() > pivot.norm() * (1.0 + 1e-9) {
                pivot = *z;
            }
        }
        w *= pivot.conj() / pivot.norm();
        let eig = linalg::eigenvalues(&w);
        let real = eig.iter().all(|z| z.im.abs() < 1e-9);
        let lo = eig.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        let hi = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let witness = if real && hi - lo > 1e-9 {
            (w - &id * C64::new(lo, 0.0)) / C64::new(hi - lo, 0.0)
        } else {
            let m = linalg::max_abs(&w);
            w / C64::new(m, 0.0)
        };
        (false, Some(witness))
    }

    /// Restriction to an invariant subspace with basis columns `basis`
    /// (`r × s`, full column rank). Generators act by `B⁺ G B`.
    pub fn restrict(&self, basis: &CMat) -> Result<FlatHiggsBundle> {
        let s = basis.ncols();
        let pinv = linalg::pinv(basis, 1e-12);
        let res = |g: &CMat| -> Result<CMat> {
            let img = g * basis;
            let resid = frob(&(&img - basis * (&pinv * &img)));
            if resid > 1e-8 * frob(g).max(1.0) {
                return Err(Error::NotInvariant(resid));
            }
            Ok(&pinv * img)
        };
        let monodromy = self.monodromy.iter().map(res).collect::<Result<Vec<_>>>()?;
        let higgs = self.higgs.iter().map(res).collect::<Result<Vec<_>>>()?;
        let logs = self.logs.iter().map(res).collect::<Result<Vec<_>>>()?;
        Ok(FlatHiggsBundle { rank: s, monodromy, higgs, logs })
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}
