//! JSON run configuration shared by all experiments.

use anyhow::{bail, Context};
use helimag::minimize::MinimizeOptions;
use helimag::phase::{PhaseTable, Quantity};
use helimag::{LaminateSpec, RveSolveOptions, WidthLaw};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Phase law of the microstructure.
    pub table: PhaseTable,
    /// Layer-width law for laminate sampling; equal fixed unit widths if absent.
    #[serde(default)]
    pub width_law: Option<WidthLaw>,
    #[serde(default)]
    pub domain: DomainConfig,
    /// Oscillation scales for the convergence sweep, largest first.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub mu0: f64,
    #[serde(default)]
    pub h_applied: [f64; 3],
    #[serde(default)]
    pub minimize: MinimizeOptions,
    #[serde(default)]
    pub rve: RveConfig,
    #[serde(default)]
    pub birkhoff: BirkhoffConfig,
    /// Zero-padding factor for the demag solve.
    #[serde(default = "two")]
    pub pad_factor: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Physical length of the sample along e3.
    pub lambda: f64,
    /// Number of grid cells along e3.
    pub cells: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            lambda: 8.0,
            cells: 512,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RveConfig {
    #[serde(default)]
    pub solve: RveSolveOptions,
    /// Grid of the sampled representative volume.
    #[serde(default = "default_rve_dims")]
    pub dims: [usize; 3],
    /// Layer thickness in cells when the RVE is a laminate.
    #[serde(default = "four")]
    pub cells_per_layer: usize,
}

impl Default for RveConfig {
    fn default() -> Self {
        RveConfig {
            solve: RveSolveOptions::default(),
            dims: default_rve_dims(),
            cells_per_layer: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirkhoffConfig {
    /// Largest averaging window (in layer widths).
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Number of geometric window sizes from t_max / 2^(levels-1) up to t_max.
    #[serde(default = "five")]
    pub levels: usize,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: u64,
    /// Observables to average; all tracked quantities if empty.
    #[serde(default)]
    pub quantities: Vec<Quantity>,
}

impl Default for BirkhoffConfig {
    fn default() -> Self {
        BirkhoffConfig {
            t_max: default_t_max(),
            levels: 5,
            n_seeds: default_n_seeds(),
            quantities: Vec::new(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn four() -> usize {
    4
}
fn five() -> usize {
    5
}
fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}
fn default_rve_dims() -> [usize; 3] {
    [16, 16, 16]
}
fn default_t_max() -> f64 {
    1.0e4
}
fn default_n_seeds() -> u64 {
    20
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.table
            .validate()
            .context("invalid phase table in config")?;
        if !(self.domain.lambda.is_finite() && self.domain.lambda > 0.0) {
            bail!("domain.lambda must be positive");
        }
        if self.domain.cells == 0 {
            bail!("domain.cells must be >= 1");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed required");
        }
        if self.pad_factor < 2 {
            bail!("pad_factor must be >= 2");
        }
        for &e in &self.epsilons {
            if !(e.is_finite() && e > 0.0) {
                bail!("epsilons must be positive, got {}", e);
            }
        }
        self.laminate_spec()?.validate()?;
        Ok(())
    }

    /// Laminate spec from table and width law (equal unit widths by default).
    pub fn laminate_spec(&self) -> anyhow::Result<LaminateSpec> {
        let spec = match &self.width_law {
            Some(law) => LaminateSpec {
                table: self.table.clone(),
                width_law: law.clone(),
            },
            None => LaminateSpec::fixed_equal_widths(self.table.clone(), 1.0)?,
        };
        Ok(spec)
    }

    pub fn h_applied_vec(&self) -> helimag::Vec3 {
        helimag::Vec3::new(self.h_applied[0], self.h_applied[1], self.h_applied[2])
    }
}
