//! TOML run configuration with defaults for every section.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{ConvexDomain, ModeTable, PeriodicField, PeriodicTensor, SlowFactor, TwoScaleBoundaryDatum};
use crate::halfspace::LayerParams;
use crate::scalar::Complex;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Identity {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// `(mean + amp sin 2 pi y_1) Id`.
    Laminate {
        mean: f64,
        amp: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// `(mean + amp sin 2 pi y_1 sin 2 pi y_2) Id`.
    Checkerboard {
        mean: f64,
        amp: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    /// Scalar multiple of the identity from explicit modes.
    Modes {
        modes: Vec<ScalarMode>,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScalarMode {
    pub xi: [i64; 2],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

fn default_lambda() -> f64 {
    0.3
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        CoefficientConfig::Checkerboard { mean: 2.0, amp: 1.0, lambda: 0.3 }
    }
}

impl CoefficientConfig {
    pub fn build(&self) -> Result<PeriodicTensor<f64>> {
        let c = |re: f64| Complex::new(re, 0.0);
        match self {
            CoefficientConfig::Identity { lambda } => Ok(PeriodicTensor::identity(2, 1, *lambda)),
            CoefficientConfig::Laminate { mean, amp, lambda } => {
                let half = Complex::new(0.0, -amp / 2.0);
                let coef = BTreeMap::from([(vec![0, 0], c(*mean)), (vec![1, 0], half), (vec![-1, 0], half.conj())]);
                PeriodicTensor::scalar_multiple(2, 1, *lambda, &coef)
            }
            CoefficientConfig::Checkerboard { mean, amp, lambda } => {
                let q = c(-amp / 4.0);
                let coef = BTreeMap::from([
                    (vec![0, 0], c(*mean)),
                    (vec![1, 1], q),
                    (vec![-1, -1], q),
                    (vec![1, -1], -q),
                    (vec![-1, 1], -q),
                ]);
                PeriodicTensor::scalar_multiple(2, 1, *lambda, &coef)
            }
            CoefficientConfig::Modes { modes, lambda } => {
                let coef = modes.iter().map(|m| (m.xi.to_vec(), Complex::new(m.re, m.im))).collect();
                PeriodicTensor::scalar_multiple(2, 1, *lambda, &coef)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlowConfig {
    Constant { value: f64 },
    /// `c0 + grad . x`
    Affine { c0: f64, grad: [f64; 2] },
    /// `amp cos(k atan2(x_2, x_1) + phase)`
    Angular { k: i64, amp: f64, #[serde(default)] phase: f64 },
}

impl SlowConfig {
    fn build(&self) -> SlowFactor<f64> {
        match *self {
            SlowConfig::Constant { value } => SlowFactor::Constant(value),
            SlowConfig::Affine { c0, grad } => SlowFactor::Affine { c0, grad: grad.to_vec() },
            SlowConfig::Angular { k, amp, phase } => SlowFactor::Angular { k, amp, phase },
        }
    }
}

/// Fast factor `mean + sum amp cos(2 pi xi.y + phase)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FastConfig {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cosines: Vec<CosineConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CosineConfig {
    pub xi: [i64; 2],
    pub amp: f64,
    #[serde(default)]
    pub phase: f64,
}

impl FastConfig {
    pub fn build(&self) -> Result<PeriodicField<f64>> {
        let mut modes = ModeTable::new();
        let mut add = |xi: Vec<i64>, v: Complex<f64>| {
            let e = modes.entry(xi).or_insert_with(|| vec![Complex::new(0.0, 0.0)]);
            e[0] += v;
        };
        add(vec![0, 0], Complex::new(self.mean, 0.0));
        for c in &self.cosines {
            for (xi, v) in PeriodicField::cosine(&c.xi, c.amp, c.phase).modes() {
                add(xi.clone(), v[0]);
            }
        }
        PeriodicField::new(2, 1, modes)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatumTerm {
    pub slow: SlowConfig,
    pub fast: FastConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatumConfig {
    pub terms: Vec<DatumTerm>,
}

impl Default for DatumConfig {
    fn default() -> Self {
        Self {
            terms: vec![DatumTerm {
                slow: SlowConfig::Affine { c0: 1.0, grad: [0.5, 0.0] },
                fast: FastConfig { mean: 0.5, cosines: vec![CosineConfig { xi: [1, 1], amp: 1.0, phase: 0.0 }] },
            }],
        }
    }
}

impl DatumConfig {
    pub fn build(&self) -> Result<TwoScaleBoundaryDatum<f64>> {
        let terms = self.terms.iter().map(|t| Ok((t.slow.build(), t.fast.build()?))).collect::<Result<Vec<_>>>()?;
        TwoScaleBoundaryDatum::new(terms)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Disc,
    Ellipse { a: f64, b: f64 },
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig::Disc
    }
}

impl DomainConfig {
    pub fn build(&self) -> Result<ConvexDomain> {
        match *self {
            DomainConfig::Disc => Ok(ConvexDomain::unit_disc()),
            DomainConfig::Ellipse { a, b } => ConvexDomain::ellipse(a, b),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub resolution: usize,
    pub tol: f64,
    /// Side of the corrector grid written to CSV.
    pub grid: usize,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self { resolution: 128, tol: 1e-12, grid: 32 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DiophConfig {
    /// Single direction instead of a boundary survey.
    pub n: Option<[f64; 2]>,
    pub kappa: f64,
    pub xi: usize,
    pub samples: usize,
}

impl Default for DiophConfig {
    fn default() -> Self {
        Self { n: None, kappa: 1.5, xi: 64, samples: 1024 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicConfig {
    pub kernels: usize,
    pub cutoff: i64,
    pub sigma: f64,
    /// Defaults to the golden-ratio direction.
    pub n: Option<[f64; 2]>,
    pub kappa: f64,
    pub etas: Vec<f64>,
    pub ks: Vec<usize>,
    pub seed: u64,
}

impl Default for ErgodicConfig {
    fn default() -> Self {
        Self {
            kernels: 5,
            cutoff: 4,
            sigma: 0.5,
            n: None,
            kappa: 1.5,
            etas: (2..=8).map(|k| 2f64.powi(-k)).collect(),
            ks: vec![1, 2, 3],
            seed: 20240601,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub kappa: f64,
    pub xi: Option<usize>,
    pub coverage_samples: usize,
    pub pu_samples: usize,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            epsilons: vec![2f64.powi(-8), 2f64.powi(-10), 2f64.powi(-12)],
            delta: 0.02,
            kappa: 1.5,
            xi: None,
            coverage_samples: 10_000,
            pu_samples: 10_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LayerConfig {
    pub length: f64,
    pub res_theta: usize,
    pub nodes: usize,
    pub grading: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub settle_tol: f64,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self::from(LayerParams::default())
    }
}

impl From<LayerParams> for LayerConfig {
    fn from(p: LayerParams) -> Self {
        Self {
            length: p.length,
            res_theta: p.res_theta,
            nodes: p.nodes,
            grading: p.grading,
            tol: p.tol,
            max_iter: p.max_iter,
            settle_tol: p.settle_tol,
        }
    }
}

impl LayerConfig {
    pub fn params(&self) -> LayerParams {
        LayerParams {
            a: 0.0,
            length: self.length,
            res_theta: self.res_theta,
            nodes: self.nodes,
            grading: self.grading,
            tol: self.tol,
            max_iter: self.max_iter,
            settle_tol: self.settle_tol,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LayerRunConfig {
    /// Defaults to the golden-ratio direction.
    pub n: Option<[f64; 2]>,
    /// Fast datum placed on the hyperplane.
    pub datum: FastConfig,
    /// Also solve with doubled length and nodes and report the tail drift.
    pub doubling: bool,
    #[serde(flatten)]
    pub discretisation: LayerConfig,
}

impl Default for LayerRunConfig {
    fn default() -> Self {
        Self {
            n: None,
            datum: FastConfig { mean: 0.0, cosines: vec![CosineConfig { xi: [1, 1], amp: 1.0, phase: 0.2 }] },
            doubling: true,
            discretisation: LayerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GbarConfig {
    pub samples: usize,
    pub kappa: f64,
    pub xi: usize,
    pub cell_resolution: usize,
    #[serde(flatten)]
    pub layer: LayerConfig,
}

impl Default for GbarConfig {
    fn default() -> Self {
        Self {
            samples: 64,
            kappa: 1.5,
            xi: 64,
            cell_resolution: 32,
            layer: LayerConfig { res_theta: 16, nodes: 300, ..LayerConfig::default() },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub epsilons: Vec<f64>,
    pub q: f64,
    pub h_ratio: f64,
    pub tol: f64,
    pub mesh_check: bool,
    pub gbar_samples: usize,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            epsilons: (6..=9).map(|k| 2f64.powi(-k)).collect(),
            q: 2.0,
            h_ratio: 8.0,
            tol: 1e-10,
            mesh_check: true,
            gbar_samples: 512,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EfuncConfig {
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub kappa: f64,
    pub xi: Option<usize>,
    pub refine_check: bool,
}

impl Default for EfuncConfig {
    fn default() -> Self {
        Self { epsilons: (6..=12).map(|k| 2f64.powi(-k)).collect(), delta: 0.02, kappa: 1.5, xi: None, refine_check: true }
    }
}

/// Whole run configuration; every section is optional in the file.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub coefficient: CoefficientConfig,
    pub datum: DatumConfig,
    pub domain: DomainConfig,
    pub cell: CellConfig,
    pub dioph: DiophConfig,
    pub ergodic: ErgodicConfig,
    pub decompose: DecomposeConfig,
    pub layer: LayerRunConfig,
    pub gbar: GbarConfig,
    pub converge: ConvergeConfig,
    pub efunc: EfuncConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical TOML of the resolved configuration (defaults filled in).
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex sha256 of [`Config::canonical`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// `(1, phi) / |(1, phi)|` with `phi` the golden ratio.
pub fn golden_direction() -> [f64; 2] {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let r = (1.0 + phi * phi).sqrt();
    [1.0 / r, phi / r]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn canonical_round_trip_and_hash() {
        let text = r#"
            [coefficient]
            kind = "laminate"
            mean = 2.0
            amp = 1.0

            [converge]
            epsilons = [0.25, 0.125, 0.0625, 0.03125]
            mesh_check = false

            [[datum.terms]]
            slow = { kind = "constant", value = 1.0 }
            fast = { mean = 0.5, cosines = [{ xi = [0, 1], amp = 0.2 }] }
        "#;
        let c = Config::from_toml(text).unwrap();
        let again = Config::from_toml(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_ne!(c.hash(), Config::default().hash());
        let g = c.datum.build().unwrap();
        assert!((g.evaluate(&[0.3, 0.1], &[0.0, 0.25])[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn coefficients_evaluate_as_named() {
        let lam = CoefficientConfig::Laminate { mean: 2.0, amp: 1.0, lambda: 0.3 }.build().unwrap();
        assert!((lam.evaluate(&[0.25, 0.0])[0] - 3.0).abs() < 1e-14);
        let chk = CoefficientConfig::default().build().unwrap();
        assert!((chk.evaluate(&[0.25, 0.25])[0] - 3.0).abs() < 1e-14);
        assert!((chk.evaluate(&[0.25, 0.75])[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[cell]\nresolutoin = 3\n").is_err());
        assert!(Config::from_toml("[coefficient]\nkind = \"foam\"\n").is_err());
    }
}
