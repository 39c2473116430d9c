//! JSON run configuration, command-line overrides and the resolved run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigprop_core::{Activation, Grid, InputSource, LayerSpec, MixedDensity, NetworkSpec, PointMass};

use crate::error::{Error, Result};
use crate::idx::{read_idx_file, squared_norm_density, MNIST_MEAN_SQ_NORM};

pub const DEFAULT_GRID_POINTS: usize = 4096;
/// Default `z_max` as a multiple of the input mean squared norm.
pub const DEFAULT_GRID_SPAN: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationConfig {
    #[default]
    Relu,
    Identity,
    Tanh,
    HardTanh,
    LeakyRelu { slope: f64 },
}

impl From<ActivationConfig> for Activation {
    fn from(a: ActivationConfig) -> Self {
        match a {
            ActivationConfig::Relu => Activation::Relu,
            ActivationConfig::Identity => Activation::Identity,
            ActivationConfig::Tanh => Activation::Tanh,
            ActivationConfig::HardTanh => Activation::HardTanh,
            ActivationConfig::LeakyRelu { slope } => Activation::LeakyRelu { slope },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub width: usize,
    pub sigma_w: f64,
    #[serde(default)]
    pub sigma_b: f64,
    #[serde(default)]
    pub activation: ActivationConfig,
}

impl LayerConfig {
    pub fn to_spec(&self) -> Result<LayerSpec> {
        Ok(LayerSpec::new(self.width, self.sigma_w, self.sigma_b, self.activation.into())?)
    }
}

/// Either an explicit `layers` list or a `template` repeated `depth` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<LayerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

impl Default for NetworkConfig {
    /// Nine bias-free ReLU layers of width 200 with σ_w = 0.1 on 784 inputs.
    fn default() -> Self {
        Self {
            input_width: 784,
            layers: None,
            template: Some(LayerConfig {
                width: 200,
                sigma_w: 0.1,
                sigma_b: 0.0,
                activation: ActivationConfig::Relu,
            }),
            depth: Some(9),
        }
    }
}

impl NetworkConfig {
    pub fn to_spec(&self) -> Result<NetworkSpec> {
        let layers = match (&self.layers, &self.template, self.depth) {
            (Some(list), None, None) => list.iter().map(LayerConfig::to_spec).collect::<Result<Vec<_>>>()?,
            (None, Some(t), Some(d)) => vec![t.to_spec()?; d],
            _ => {
                return Err(Error::Config(
                    "network needs either `layers` or both `template` and `depth`".into(),
                ))
            }
        };
        if layers.is_empty() {
            return Err(Error::Config("network must have at least one layer".into()));
        }
        Ok(NetworkSpec::new(self.input_width, layers)?)
    }

    /// Sets the depth: template networks change `depth`, explicit lists are
    /// truncated or extended with copies of their last layer.
    pub fn set_depth(&mut self, depth: usize) -> Result<()> {
        if depth == 0 {
            return Err(Error::Config("--layers must be at least 1".into()));
        }
        match &mut self.layers {
            Some(list) => {
                let last = *list
                    .last()
                    .ok_or_else(|| Error::Config("network must have at least one layer".into()))?;
                list.resize(depth, last);
            }
            None => self.depth = Some(depth),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// Point mass at the MNIST mean squared norm.
    #[default]
    MnistMean,
    PointMass(f64),
    Idx {
        path: PathBuf,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

fn default_scale() -> f64 {
    255.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub widths: Vec<usize>,
    /// Weight scale; the critical `√(2/N)` of each width when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<f64>,
    pub m_min: f64,
    pub m_max: f64,
    pub m_samples: usize,
    /// Leading eigenvalues of the discretized operator to report; 0 skips it.
    pub top_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcrit_scan: Option<Vec<usize>>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            widths: vec![10, 20, 100],
            sigma_w: None,
            m_min: -10.0,
            m_max: -1.0,
            m_samples: 181,
            top_k: 0,
            mcrit_scan: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub n_samples: usize,
    pub ks_threshold: f64,
    pub z_threshold: f64,
    /// Depths to check; every layer when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    /// Multiplies σ_w of every Monte Carlo layer, leaving the operator alone.
    pub mc_sigma_w_scale: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            ks_threshold: 0.02,
            z_threshold: 3.0,
            depths: None,
            mc_sigma_w_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compensate {
    pub n1: usize,
    pub n2: usize,
    pub sigma_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compensate: Option<Compensate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub grid: GridConfig,
    pub input: InputConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub spectrum: SpectrumConfig,
    pub validate: ValidateConfig,
    pub moments: MomentsConfig,
}

/// Flags that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_points: Option<usize>,
    pub grid_max: Option<f64>,
    pub layers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.grid_points {
            self.grid.n_points = Some(n);
        }
        if let Some(z) = o.grid_max {
            self.grid.z_max = Some(z);
        }
        if let Some(d) = o.layers {
            self.network.set_depth(d)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.network.to_spec()?;
        if self.grid.n_points == Some(0) {
            return Err(Error::Config("grid points must be positive".into()));
        }
        if let Some(z) = self.grid.z_max {
            if !(z > 0.0) || !z.is_finite() {
                return Err(Error::Config("grid max must be finite and positive".into()));
            }
        }
        match &self.input {
            InputConfig::PointMass(z) if !(*z >= 0.0) || !z.is_finite() => {
                return Err(Error::Config("point mass must be finite and nonnegative".into()))
            }
            InputConfig::Idx { scale, .. } if !(*scale > 0.0) || !scale.is_finite() => {
                return Err(Error::Config("pixel scale must be finite and positive".into()))
            }
            _ => {}
        }
        let s = &self.spectrum;
        if s.widths.is_empty() || s.widths.contains(&0) {
            return Err(Error::Config("spectrum widths must be a nonempty list of positive integers".into()));
        }
        if !(s.m_min < s.m_max) || s.m_samples < 2 {
            return Err(Error::Config(format!(
                "m range [{}, {}] with {} samples is empty",
                s.m_min, s.m_max, s.m_samples
            )));
        }
        if !(s.m_max < -0.5) {
            return Err(Error::Config("m range must lie below -1/2".into()));
        }
        let v = &self.validate;
        if v.n_samples == 0 || !(v.ks_threshold > 0.0) || !(v.z_threshold > 0.0) || !(v.mc_sigma_w_scale > 0.0) {
            return Err(Error::Config("validate options must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of this configuration, without the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// The input law on the grid and its Monte Carlo counterpart.
#[derive(Debug, Clone)]
pub struct ResolvedInput {
    pub p0: MixedDensity,
    pub mc: InputSource,
    pub mean_sq_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub net: NetworkSpec,
    pub grid: Grid,
    pub input: ResolvedInput,
}

fn grid_for(cfg: &GridConfig, mean: f64, max_input: f64) -> Result<Grid> {
    let z_max = match cfg.z_max {
        Some(z) => z,
        None => {
            let z = DEFAULT_GRID_SPAN * mean;
            if z > 0.0 {
                z.max(max_input * (1.0 + 1e-9))
            } else {
                1.0
            }
        }
    };
    Ok(Grid::new(z_max, cfg.n_points.unwrap_or(DEFAULT_GRID_POINTS))?)
}

impl RunConfig {
    /// Builds the network, grid and input law. Reads the IDX file if one is configured.
    pub fn resolve(&self) -> Result<Resolved> {
        self.validate()?;
        let net = self.network.to_spec()?;
        let norms = match &self.input {
            InputConfig::MnistMean => None,
            InputConfig::PointMass(_) => None,
            InputConfig::Idx { path, scale } => {
                let imgs = read_idx_file(path)?;
                if imgs.count == 0 {
                    return Err(Error::Format(format!("{}: no images", path.display())));
                }
                Some((imgs.squared_norms(*scale)?, imgs))
            }
        };
        let input = match (&self.input, norms) {
            (InputConfig::Idx { scale, .. }, Some((zs, imgs))) => {
                let mean = zs.iter().sum::<f64>() / zs.len() as f64;
                let max = zs.iter().cloned().fold(0.0, f64::max);
                let grid = grid_for(&self.grid, mean, max)?;
                let p0 = squared_norm_density(&imgs, &grid, *scale)?;
                (grid, ResolvedInput { p0, mc: InputSource::SquaredNorms(zs), mean_sq_norm: mean })
            }
            (other, _) => {
                let z = match other {
                    InputConfig::PointMass(z) => *z,
                    _ => MNIST_MEAN_SQ_NORM,
                };
                let grid = grid_for(&self.grid, z, z)?;
                let p0 = PointMass::new(z)?.discretize(&grid)?;
                (grid, ResolvedInput { p0, mc: InputSource::SquaredNorm(z), mean_sq_norm: z })
            }
        };
        Ok(Resolved { net, grid: input.0, input: input.1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_nine_layers_of_200() {
        let c = RunConfig::default();
        let net = c.network.to_spec().unwrap();
        assert_eq!(net.depth(), 9);
        assert_eq!(net.layers[0].width, 200);
        let r = c.resolve().unwrap();
        assert_eq!(r.grid.n_points(), 4096);
        assert!((r.grid.z_max() - 8.0 * MNIST_MEAN_SQ_NORM).abs() < 1e-9);
    }

    #[test]
    fn parses_both_network_forms() {
        let c = RunConfig::from_json(
            r#"{"network": {"input_width": 3, "layers": [
                {"width": 4, "sigma_w": 1.0},
                {"width": 5, "sigma_w": 0.5, "sigma_b": 0.1, "activation": {"leaky_relu": {"slope": 0.2}}}
            ]}, "input": {"point_mass": 2.0}, "seed": 7}"#,
        )
        .unwrap();
        let net = c.network.to_spec().unwrap();
        assert_eq!(net.depth(), 2);
        assert_eq!(net.layers[1].activation, Activation::LeakyRelu { slope: 0.2 });
        assert_eq!(c.seed, 7);
        let t = RunConfig::from_json(
            r#"{"network": {"input_width": 3, "template": {"width": 4, "sigma_w": 1.0, "activation": "tanh"}, "depth": 3}}"#,
        )
        .unwrap();
        assert_eq!(t.network.to_spec().unwrap().depth(), 3);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_shapes() {
        assert!(RunConfig::from_json(r#"{"sede": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"grid": {"z_max": 1, "points": 3}}"#).is_err());
        let both = RunConfig::from_json(
            r#"{"network": {"input_width": 3, "layers": [{"width": 4, "sigma_w": 1.0}],
                "template": {"width": 4, "sigma_w": 1.0}, "depth": 2}}"#,
        )
        .unwrap();
        assert!(both.validate().is_err());
        let empty_m = RunConfig::from_json(r#"{"spectrum": {"m_min": -2, "m_max": -2}}"#).unwrap();
        assert!(empty_m.validate().is_err());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.apply(&Overrides { seed: Some(3), layers: Some(2), grid_points: Some(64), grid_max: Some(200.0), ..Default::default() })
            .unwrap();
        let r = c.resolve().unwrap();
        assert_eq!((c.seed, r.net.depth(), r.grid.n_points(), r.grid.z_max()), (3, 2, 64, 200.0));
        assert!(c.apply(&Overrides { layers: Some(0), ..Default::default() }).is_err());
        let mut l = RunConfig::from_json(r#"{"network": {"input_width": 3, "layers": [{"width": 4, "sigma_w": 1.0}]}}"#).unwrap();
        l.network.set_depth(3).unwrap();
        assert_eq!(l.network.to_spec().unwrap().depth(), 3);
    }

    #[test]
    fn hash_ignores_output() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
