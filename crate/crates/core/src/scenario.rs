//! Scenario configs (JSON) and the built-in corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::FlatHiggsBundle;
use crate::error::{Error, Result};
use crate::geometry::{AffineTorus, MetricSpec};
use crate::hermitian::MetricField;
use crate::linalg;
use crate::report::{cmat_from_json, cmat_to_json, MatrixJson};
use crate::solver::SolverOptions;
use crate::{CMat, C64};

fn default_nu() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfig {
    pub dim: usize,
    pub grid: usize,
    /// Defaults to the identity metric.
    #[serde(default)]
    pub metric: Option<MetricSpec>,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub rank: usize,
    pub monodromy: Vec<MatrixJson>,
    pub higgs: Vec<MatrixJson>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for `report.json` and `telemetry.csv`.
    pub dir: Option<String>,
    #[serde(default)]
    pub csv: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub torus: TorusConfig,
    pub bundle: BundleConfig,
    #[serde(default)]
    pub solver: Option<SolverOptions>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

impl ScenarioConfig {
    /// Parse JSON, reporting the failing field path and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(
                if path == "." { "<root>".to_string() } else { path },
                format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            )
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn metric_spec(&self) -> MetricSpec {
        self.torus.metric.clone().unwrap_or_else(|| MetricSpec::identity(self.torus.dim))
    }

    pub fn solver_options(&self) -> SolverOptions {
        self.solver.clone().unwrap_or_default()
    }

    pub fn build_torus(&self) -> Result<AffineTorus> {
        AffineTorus::new(self.torus.dim, self.torus.grid, &self.metric_spec(), self.torus.nu)
    }

    fn matrices(&self, field: &str, list: &[MatrixJson]) -> Result<Vec<CMat>> {
        let r = self.bundle.rank;
        if list.len() != self.torus.dim {
            return Err(Error::config(
                format!("bundle.{field}"),
                format!("expected {} matrices (one per torus direction), got {}", self.torus.dim, list.len()),
            ));
        }
        list.iter()
            .enumerate()
            .map(|(i, m)| {
                let at = format!("bundle.{field}[{i}]");
                let mat = cmat_from_json(m).ok_or_else(|| Error::config(&at, "ragged or empty matrix"))?;
                if mat.nrows() != r || mat.ncols() != r {
                    return Err(Error::config(&at, format!("expected {r}x{r}, got {}x{}", mat.nrows(), mat.ncols())));
                }
                if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::config(&at, "non-finite entry"));
                }
                Ok(mat)
            })
            .collect()
    }

    pub fn build_bundle(&self) -> Result<FlatHiggsBundle> {
        if self.bundle.rank == 0 {
            return Err(Error::config("bundle.rank", "must be positive"));
        }
        let monodromy = self.matrices("monodromy", &self.bundle.monodromy)?;
        let higgs = self.matrices("higgs", &self.bundle.higgs)?;
        FlatHiggsBundle::new(self.bundle.rank, monodromy, higgs)
    }

    pub fn build(&self) -> Result<(AffineTorus, FlatHiggsBundle)> {
        if let Some(opts) = &self.solver {
            opts.validate()?;
        }
        Ok((self.build_torus()?, self.build_bundle()?))
    }

    /// Same scenario at another grid resolution.
    pub fn with_grid(&self, grid: usize) -> Self {
        let mut c = self.clone();
        c.torus.grid = grid;
        c
    }

    pub fn with_metric(&self, metric: MetricSpec) -> Self {
        let mut c = self.clone();
        c.torus.metric = Some(metric);
        c
    }
}

fn real(rows: &[&[f64]]) -> CMat {
    CMat::from_fn(rows.len(), rows[0].len(), |i, j| C64::new(rows[i][j], 0.0))
}

fn config(name: &str, dim: usize, grid: usize, monodromy: Vec<CMat>, higgs: Vec<CMat>) -> ScenarioConfig {
    ScenarioConfig {
        name: Some(name.to_string()),
        torus: TorusConfig { dim, grid, metric: None, nu: 1.0 },
        bundle: BundleConfig {
            rank: monodromy[0].nrows(),
            monodromy: monodromy.iter().map(cmat_to_json).collect(),
            higgs: higgs.iter().map(cmat_to_json).collect(),
        },
        solver: None,
        output: None,
    }
}

/// Rank-2 data on `T^dim` with the given first Higgs component and all other
/// data trivial.
fn rank2(name: &str, dim: usize, grid: usize, phi1: CMat) -> ScenarioConfig {
    let id = linalg::identity(2);
    let mut higgs = vec![linalg::zeros(2); dim];
    higgs[0] = phi1;
    config(name, dim, grid, vec![id; dim], higgs)
}

pub fn trivial_line(dim: usize, grid: usize) -> ScenarioConfig {
    config("trivial_line", dim, grid, vec![linalg::identity(1); dim], vec![linalg::zeros(1); dim])
}

/// Rank 1 with real monodromy 2 along the first direction and a constant Higgs field.
pub fn line_nonunitary(dim: usize, grid: usize) -> ScenarioConfig {
    let mut mono = vec![linalg::identity(1); dim];
    mono[0] = real(&[&[2.0]]);
    let mut higgs = vec![linalg::zeros(1); dim];
    higgs[0] = real(&[&[0.5]]);
    config("line_nonunitary", dim, grid, mono, higgs)
}

/// Rank 2, diagonal unitary monodromy, no Higgs field.
pub fn flat_unitary(dim: usize, grid: usize) -> ScenarioConfig {
    let mono = (0..dim)
        .map(|k| {
            let a = 0.3 + 0.2 * k as f64;
            CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::from_polar(1.0, a), C64::from_polar(1.0, -1.7 * a)]))
        })
        .collect();
    config("flat_unitary", dim, grid, mono, vec![linalg::zeros(2); dim])
}

/// `φ₁ = diag(1, 2)`: polystable, not stable.
pub fn diagonal_higgs(dim: usize, grid: usize) -> ScenarioConfig {
    rank2("diagonal_higgs", dim, grid, real(&[&[1.0, 0.0], &[0.0, 2.0]]))
}

/// `φ₁ = [[0,1],[0,0]]`: semistable, not polystable.
pub fn jordan(dim: usize, grid: usize) -> ScenarioConfig {
    rank2("jordan", dim, grid, real(&[&[0.0, 1.0], &[0.0, 0.0]]))
}

/// `φ₁ = [[1,1],[0,2]]`: polystable with non-orthogonal eigenlines, so the
/// YMH metric is not the identity.
pub fn skew_diagonalizable(dim: usize, grid: usize) -> ScenarioConfig {
    rank2("skew_diagonalizable", dim, grid, real(&[&[1.0, 1.0], &[0.0, 2.0]]))
}

/// `diagonal_higgs` over a separable (Gauduchon, non-flat) metric.
pub fn diagonal_separable(dim: usize, grid: usize) -> ScenarioConfig {
    let mut c = diagonal_higgs(dim, grid).with_metric(MetricSpec::SeparableSine { amplitude: 0.3 });
    c.name = Some("diagonal_separable".into());
    c
}

/// Every built-in scenario on `T^dim`.
pub fn corpus(dim: usize, grid: usize) -> Vec<ScenarioConfig> {
    vec![
        trivial_line(dim, grid),
        line_nonunitary(dim, grid),
        flat_unitary(dim, grid),
        diagonal_higgs(dim, grid),
        jordan(dim, grid),
        skew_diagonalizable(dim, grid),
        diagonal_separable(dim, grid),
    ]
}

pub fn builtin(name: &str, dim: usize, grid: usize) -> Option<ScenarioConfig> {
    corpus(dim, grid).into_iter().find(|c| c.name.as_deref() == Some(name))
}

/// A smooth random metric `H = exp(A(x))` in the periodic gauge, with `A` a
/// Hermitian trigonometric polynomial of degree one in each direction and
/// sup-size about `amplitude`.
pub fn random_metric(torus: &AffineTorus, rank: usize, amplitude: f64, seed: u64) -> MetricField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = torus.dim();
    let mut coeff = || {
        let m = CMat::from_fn(rank, rank, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        linalg::hermitian_part(&m) * C64::new(amplitude / (2 * n + 1) as f64, 0.0)
    };
    let base = coeff();
    let waves: Vec<(CMat, CMat)> = (0..n).map(|_| (coeff(), coeff())).collect();
    let tau = 2.0 * std::f64::consts::PI;
    let values = (0..torus.npts())
        .map(|p| {
            let x = torus.coords(p);
            let mut a = base.clone();
            for (k, (c, s)) in waves.iter().enumerate() {
                a += c * C64::new((tau * x[k]).cos(), 0.0) + s * C64::new((tau * x[k]).sin(), 0.0);
            }
            linalg::herm_fn(&a, f64::exp)
        })
        .collect();
    MetricField::new(values).expect("exponential of a Hermitian matrix is positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_builds_and_round_trips() {
        for c in corpus(2, 8) {
            let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
            c.build().unwrap();
        }
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = jordan(2, 8);
        c.bundle.higgs[1] = vec![vec![[0.0, 0.0]]];
        match c.build() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bundle.higgs[1]"),
            other => panic!("{other:?}"),
        }
        let text = c.to_json().replace("\"grid\": 8", "\"grid\": \"eight\"");
        match ScenarioConfig::from_json(&text) {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "torus.grid");
                assert!(message.contains("line"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn odd_grid_is_rejected() {
        assert!(matches!(jordan(2, 7).build(), Err(Error::BadGrid(7))));
    }
}
