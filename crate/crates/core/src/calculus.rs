//! Discretized sections of `A^{p,q} = Λ^p T*M ⊗ Λ^q T*M`, optionally with
//! matrix coefficients, and the operators `∂`, `∂̄`, `∧`, `tr_g`.
//!
//! Conventions, on a coefficient `c` of `dz^I ⊗ dz̄^J`:
//!
//! ```text
//! ∂(c dz^I ⊗ dz̄^J)  = ½ Σ_k ∂_k c dz^k∧dz^I ⊗ dz̄^J
//! ∂̄(c dz^I ⊗ dz̄^J)  = (-1)^p ½ Σ_k ∂_k c dz^I ⊗ dz̄^k∧dz̄^J
//! (φ₁⊗ψ₁)∧(φ₂⊗ψ₂)   = (-1)^{q₁p₂} (φ₁∧φ₂)⊗(ψ₁∧ψ₂)
//! ```
//!
//! Multi-indices are bitmasks over `0..n`; only strictly increasing index sets
//! are stored.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::geometry::AffineTorus;
use crate::spectral::Spectral;
use crate::{CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueShape {
    Scalar,
    Matrix(usize),
}

impl ValueShape {
    pub fn dim(self) -> usize {
        match self {
            ValueShape::Scalar => 1,
            ValueShape::Matrix(r) => r,
        }
    }
}

/// Sign-convention switches used only by the mutation harness in
/// [`crate::selfcheck`]. Each flag drops one convention sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Mutation {
    pub flip_wedge_sign: bool,
    pub flip_dbar_sign: bool,
    pub flip_nu_sign: bool,
}

thread_local! {
    static MUTATION: Cell<Mutation> = Cell::new(Mutation::default());
}

/// Run `f` with the given sign mutation active on the current thread.
pub fn with_mutation<T>(m: Mutation, f: impl FnOnce() -> T) -> T {
    struct Reset(Mutation);
    impl Drop for Reset {
        fn drop(&mut self) {
            MUTATION.with(|c| c.set(self.0));
        }
    }
    let prev = MUTATION.with(|c| c.replace(m));
    let _reset = Reset(prev);
    f()
}

pub(crate) fn mutation() -> Mutation {
    MUTATION.with(|c| c.get())
}

/// Bitmasks with `k` bits set among the low `n` bits, ascending.
pub fn masks(n: usize, k: usize) -> Vec<u32> {
    (0u32..(1u32 << n)).filter(|m| m.count_ones() as usize == k).collect()
}

pub fn mask_of(indices: &[usize]) -> u32 {
    indices.iter().fold(0, |m, &i| m | (1 << i))
}

/// Sign of reordering `dz^A ∧ dz^B` into increasing order (disjoint masks).
pub fn merge_sign(a: u32, b: u32) -> f64 {
    let mut inversions = 0;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        bb &= bb - 1;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn parity(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn mat_mul(a: &CMat, b: &CMat) -> CMat {
    match (a.nrows(), b.nrows()) {
        (1, r) if r != 1 => b * a[(0, 0)],
        (r, 1) if r != 1 => a * b[(0, 0)],
        _ => a * b,
    }
}

#[derive(Clone, Debug)]
pub struct PQField {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub shape: ValueShape,
    pub npts: usize,
    imasks: Vec<u32>,
    jmasks: Vec<u32>,
    comps: Vec<Vec<CMat>>,
}

impl PQField {
    pub fn zeros(n: usize, p: usize, q: usize, shape: ValueShape, npts: usize) -> Self {
        let imasks = masks(n, p);
        let jmasks = masks(n, q);
        let r = shape.dim();
        let comps = vec![vec![CMat::zeros(r, r); npts]; imasks.len() * jmasks.len()];
        PQField { n, p, q, shape, npts, imasks, jmasks, comps }
    }

    /// A `(0,0)` field from pointwise values.
    pub fn function(n: usize, values: Vec<CMat>) -> Self {
        let shape = shape_of(&values[0]);
        let npts = values.len();
        let mut f = PQField::zeros(n, 0, 0, shape, npts);
        f.comps[0] = values;
        f
    }

    pub fn scalar_function(n: usize, values: &[C64]) -> Self {
        PQField::function(n, values.iter().map(|&z| CMat::from_element(1, 1, z)).collect())
    }

    pub fn constant_scalar(n: usize, npts: usize, z: C64) -> Self {
        PQField::function(n, vec![CMat::from_element(1, 1, z); npts])
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn imasks(&self) -> &[u32] {
        &self.imasks
    }

    pub fn jmasks(&self) -> &[u32] {
        &self.jmasks
    }

    fn slot(&self, imask: u32, jmask: u32) -> usize {
        let ii = self.imasks.binary_search(&imask).expect("index set has degree p");
        let jj = self.jmasks.binary_search(&jmask).expect("index set has degree q");
        ii * self.jmasks.len() + jj
    }

    /// Coefficient of `dz^I ⊗ dz̄^J` (masks).
    pub fn comp(&self, imask: u32, jmask: u32) -> &[CMat] {
        &self.comps[self.slot(imask, jmask)]
    }

    pub fn comp_mut(&mut self, imask: u32, jmask: u32) -> &mut Vec<CMat> {
        let s = self.slot(imask, jmask);
        &mut self.comps[s]
    }

    /// Coefficient for increasing index lists `I`, `J`.
    pub fn at(&self, i: &[usize], j: &[usize]) -> &[CMat] {
        self.comp(mask_of(i), mask_of(j))
    }

    pub fn set(&mut self, i: &[usize], j: &[usize], values: Vec<CMat>) {
        assert_eq!(values.len(), self.npts);
        *self.comp_mut(mask_of(i), mask_of(j)) = values;
    }

    pub fn components(&self) -> impl Iterator<Item = (u32, u32, &Vec<CMat>)> {
        let nj = self.jmasks.len();
        self.comps
            .iter()
            .enumerate()
            .map(move |(s, c)| (self.imasks[s / nj], self.jmasks[s % nj], c))
    }

    /// Coefficient of the top form `dz^{1..n} ⊗ dz̄^{1..n}`.
    pub fn top(&self) -> Result<&[CMat]> {
        if self.p != self.n || self.q != self.n {
            return Err(Error::DegreeMismatch { expected: format!("({0},{0})", self.n), p: self.p, q: self.q });
        }
        Ok(&self.comps[0])
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .flat_map(|m| m.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat) -> Self {
        let comps: Vec<Vec<CMat>> = self.comps.iter().map(|c| c.iter().map(&f).collect()).collect();
        let shape = shape_of(&comps[0][0]);
        PQField { comps, shape, ..self.clone() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|m| m * s)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.p != other.p || self.q != other.q || self.npts != other.npts {
            return Err(Error::DegreeMismatch {
                expected: format!("({},{})", self.p, self.q),
                p: other.p,
                q: other.q,
            });
        }
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Fiber trace of a matrix-valued field.
    pub fn trace(&self) -> Self {
        self.map(|m| CMat::from_element(1, 1, m.trace()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().flat_map(|m| m.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn shape_of(m: &CMat) -> ValueShape {
    if m.nrows() == 1 {
        ValueShape::Scalar
    } else {
        ValueShape::Matrix(m.nrows())
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Holomorphic,
    Anti,
}

fn differentiate(
    field: &PQField,
    slot: Slot,
    deriv: &dyn Fn(&[CMat], usize) -> Vec<CMat>,
) -> Result<PQField> {
    let (n, p, q) = (field.n, field.p, field.q);
    let mut out = match slot {
        Slot::Holomorphic => {
            if p >= n {
                return Err(Error::TopDegree { p, q, n });
            }
            PQField::zeros(n, p + 1, q, field.shape, field.npts)
        }
        Slot::Anti => {
            if q >= n {
                return Err(Error::TopDegree { p, q, n });
            }
            PQField::zeros(n, p, q + 1, field.shape, field.npts)
        }
    };
    let global = match slot {
        Slot::Holomorphic => 0.5,
        Slot::Anti => {
            if mutation().flip_dbar_sign {
                0.5
            } else {
                0.5 * parity(p)
            }
        }
    };
    let mut cache: Vec<Option<Vec<CMat>>> = Vec::new();
    for (imask, jmask, c) in field.components() {
        cache.clear();
        cache.resize(n, None);
        let target = match slot {
            Slot::Holomorphic => imask,
            Slot::Anti => jmask,
        };
        for k in 0..n {
            if target & (1 << k) != 0 {
                continue;
            }
            let dk = cache[k].get_or_insert_with(|| deriv(c, k));
            let sign = global * merge_sign(1 << k, target);
            let (oi, oj) = match slot {
                Slot::Holomorphic => (imask | (1 << k), jmask),
                Slot::Anti => (imask, jmask | (1 << k)),
            };
            let dest = out.comp_mut(oi, oj);
            for (d, v) in dest.iter_mut().zip(dk.iter()) {
                *d += v * C64::new(sign, 0.0);
            }
        }
    }
    Ok(out)
}

fn plain(sp: &Spectral) -> impl Fn(&[CMat], usize) -> Vec<CMat> + '_ {
    move |c, k| sp.deriv_mats(c, k)
}

fn covariant<'a>(sp: &'a Spectral, conn: &'a [CMat]) -> impl Fn(&[CMat], usize) -> Vec<CMat> + 'a {
    move |c, k| {
        let mut d = sp.deriv_mats(c, k);
        for (dv, v) in d.iter_mut().zip(c) {
            *dv += &conn[k] * v - v * &conn[k];
        }
        d
    }
}

/// `∂` with the half-derivative convention.
pub fn del(sp: &Spectral, phi: &PQField) -> Result<PQField> {
    differentiate(phi, Slot::Holomorphic, &plain(sp))
}

/// `∂̄` with the `(-1)^p` convention.
pub fn dbar(sp: &Spectral, phi: &PQField) -> Result<PQField> {
    differentiate(phi, Slot::Anti, &plain(sp))
}

/// `∂` for End-valued fields in the periodic gauge: derivatives become
/// `∂_k X + [L_k, X]` with constant connection matrices `conn`.
pub fn del_cov(sp: &Spectral, phi: &PQField, conn: &[CMat]) -> Result<PQField> {
    differentiate(phi, Slot::Holomorphic, &covariant(sp, conn))
}

/// `∂̄` counterpart of [`del_cov`].
pub fn dbar_cov(sp: &Spectral, phi: &PQField, conn: &[CMat]) -> Result<PQField> {
    differentiate(phi, Slot::Anti, &covariant(sp, conn))
}

/// Signed wedge product. Matrix coefficients multiply in argument order.
pub fn wedge(a: &PQField, b: &PQField) -> Result<PQField> {
    let n = a.n;
    if b.n != n || a.npts != b.npts {
        return Err(Error::ShapeMismatch("wedge factors live on different grids".into()));
    }
    let (p, q) = (a.p + b.p, a.q + b.q);
    if p > n || q > n {
        return Err(Error::DegreeOverflow { p, q, n });
    }
    let shape = match (a.shape, b.shape) {
        (ValueShape::Matrix(r), ValueShape::Matrix(s)) if r != s => {
            return Err(Error::ShapeMismatch(format!("rank {r} vs {s}")));
        }
        (ValueShape::Matrix(r), _) | (_, ValueShape::Matrix(r)) => ValueShape::Matrix(r),
        _ => ValueShape::Scalar,
    };
    let conv = if mutation().flip_wedge_sign { 1.0 } else { parity(a.q * b.p) };
    let mut out = PQField::zeros(n, p, q, shape, a.npts);
    for (i1, j1, ca) in a.components() {
        for (i2, j2, cb) in b.components() {
            if i1 & i2 != 0 || j1 & j2 != 0 {
                continue;
            }
            let sign = C64::new(conv * merge_sign(i1, i2) * merge_sign(j1, j2), 0.0);
            let dest = out.comp_mut(i1 | i2, j1 | j2);
            for ((d, x), y) in dest.iter_mut().zip(ca).zip(cb) {
                *d += mat_mul(x, y) * sign;
            }
        }
    }
    Ok(out)
}

/// `tr_g a = Σ g^{ij} a_{ij}` for a `(1,1)` field.
pub fn contract_g(torus: &AffineTorus, a: &PQField) -> Result<PQField> {
    if a.p != 1 || a.q != 1 {
        return Err(Error::DegreeMismatch { expected: "(1,1)".into(), p: a.p, q: a.q });
    }
    let n = a.n;
    let r = a.shape.dim();
    let mut vals = vec![CMat::zeros(r, r); a.npts];
    for (pt, v) in vals.iter_mut().enumerate() {
        let ginv = torus.metric_inv_at(pt);
        for i in 0..n {
            for j in 0..n {
                *v += &a.comp(1 << i, 1 << j)[pt] * C64::new(ginv[(i, j)], 0.0);
            }
        }
    }
    Ok(PQField::function(n, vals))
}
