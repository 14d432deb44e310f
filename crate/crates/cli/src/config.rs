//! Run configuration: a single TOML file describing the grid, geometry,
//! coefficients, fractional orders, y-mesh, and per-command options.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Deserialize;

use fracmono_core::domain::{
    build_partition, make_conductivity, CellSet, Conductivity, DomainPartition, FracOrder,
    Geometry, GridSpec, ShapeBox,
};
use fracmono_core::extension::{build_ymesh, default_gamma, default_height, YMesh};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    pub geometry: GeometrySection,
    pub conductivity: ConductivitySection,
    /// Second coefficient for two-coefficient commands (uniqueness).
    #[serde(default)]
    pub conductivity2: Option<ConductivitySection>,
    pub fractional: FractionalSection,
    #[serde(default)]
    pub ymesh: YMeshSection,
    #[serde(default)]
    pub forward: ForwardSection,
    #[serde(default)]
    pub mono: MonoSection,
    #[serde(default)]
    pub localize: LocalizeSection,
    #[serde(default)]
    pub runge: RungeSection,
    #[serde(default)]
    pub reconstruct: ReconstructSection,
    #[serde(default)]
    pub uniqueness: UniquenessSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_dims: usize,
    pub cells_per_axis: usize,
    pub half_width: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub omega: BoxSection,
    pub windows: Vec<BoxSection>,
    #[serde(default)]
    pub b_set: Option<BoxSection>,
    #[serde(default)]
    pub d_set: Option<BoxSection>,
    #[serde(default)]
    pub o_set: Option<BoxSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductivitySection {
    pub lambda: f64,
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<InclusionSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractionalSection {
    pub orders: Vec<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct YMeshSection {
    pub intervals: Option<usize>,
    pub height: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    /// Optional explicit window values; default is a smooth half-sine.
    pub window_values: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonoSection {
    pub pairs: usize,
}

impl Default for MonoSection {
    fn default() -> Self {
        MonoSection { pairs: 20 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSection {
    pub steps: usize,
    pub eps0: Option<f64>,
}

impl Default for LocalizeSection {
    fn default() -> Self {
        LocalizeSection {
            steps: 6,
            eps0: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungeSection {
    pub k_list: Vec<usize>,
}

impl Default for RungeSection {
    fn default() -> Self {
        RungeSection {
            k_list: vec![1, 2, 4, 8],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    pub betas: Vec<f64>,
    pub tol: f64,
    /// Relative spectral-norm level of injected symmetric noise; 0 disables.
    pub noise: f64,
}

impl Default for ReconstructSection {
    fn default() -> Self {
        ReconstructSection {
            betas: vec![0.5, 1.0, 1.5],
            tol: 1e-8,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessSection {
    pub pairs: usize,
    pub min_gap: f64,
    pub delta_min: f64,
    pub noise_floor: f64,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        UniquenessSection {
            pairs: 10,
            min_gap: 0.1,
            delta_min: 0.05,
            noise_floor: 1e-10,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

fn to_shape(b: &BoxSection, n_dims: usize, what: &str) -> anyhow::Result<ShapeBox> {
    if b.lo.len() != n_dims || b.hi.len() != n_dims {
        bail!("{what}: lo/hi must have {n_dims} coordinates");
    }
    let pad = |v: &[f64]| [v[0], if n_dims == 2 { v[1] } else { 0.0 }];
    Ok(ShapeBox {
        lo: pad(&b.lo),
        hi: pad(&b.hi),
    })
}

/// Everything a command needs, resolved from the raw config.
pub struct Resolved {
    pub partition: DomainPartition,
    pub sigma: Conductivity,
    pub sigma2: Option<Conductivity>,
    pub orders: Vec<FracOrder>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<(RunConfig, u64)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).context("config parse error")?;
        let hash = fracmono_core::fnv1a64(text.as_bytes());
        Ok((cfg, hash))
    }

    pub fn resolve(&self) -> anyhow::Result<Resolved> {
        let n_dims = self.grid.n_dims;
        let grid = GridSpec::new(n_dims, self.grid.cells_per_axis, self.grid.half_width)?;
        let mut geometry = Geometry {
            omega: Some(to_shape(&self.geometry.omega, n_dims, "geometry.omega")?),
            ..Default::default()
        };
        if self.geometry.windows.is_empty() {
            bail!("geometry.windows: at least one window box is required");
        }
        for (i, w) in self.geometry.windows.iter().enumerate() {
            geometry
                .window
                .push(to_shape(w, n_dims, &format!("geometry.windows[{i}]"))?);
        }
        if let Some(b) = &self.geometry.b_set {
            geometry.b_set = Some(to_shape(b, n_dims, "geometry.b_set")?);
        }
        if let Some(d) = &self.geometry.d_set {
            geometry.d_set = Some(to_shape(d, n_dims, "geometry.d_set")?);
        }
        if let Some(o) = &self.geometry.o_set {
            geometry.o_set = Some(to_shape(o, n_dims, "geometry.o_set")?);
        }
        let partition = build_partition(&grid, &geometry)?;

        let sigma = self.build_sigma(&partition, &self.conductivity)?;
        let sigma2 = match &self.conductivity2 {
            Some(c) => Some(self.build_sigma(&partition, c)?),
            None => None,
        };
        let mut orders = Vec::new();
        for &s in &self.fractional.orders {
            orders.push(FracOrder::new(s)?);
        }
        if orders.is_empty() {
            bail!("fractional.orders must not be empty");
        }
        Ok(Resolved {
            partition,
            sigma,
            sigma2,
            orders,
        })
    }

    fn build_sigma(
        &self,
        p: &DomainPartition,
        section: &ConductivitySection,
    ) -> anyhow::Result<Conductivity> {
        let mut inclusions: Vec<(CellSet, f64)> = Vec::new();
        for (i, inc) in section.inclusions.iter().enumerate() {
            let shape = to_shape(
                &BoxSection {
                    lo: inc.lo.clone(),
                    hi: inc.hi.clone(),
                },
                self.grid.n_dims,
                &format!("inclusions[{i}]"),
            )?;
            inclusions.push((shape.rasterize(p.grid()), inc.value));
        }
        Ok(make_conductivity(
            p,
            section.background,
            &inclusions,
            section.lambda,
        )?)
    }

    /// The y-mesh for a given order (defaults: M = 96, Y = 4R, γ = 3/(2s)).
    pub fn ymesh_for(&self, p: &DomainPartition, s: FracOrder) -> anyhow::Result<YMesh> {
        let m = self.ymesh.intervals.unwrap_or(96);
        let height = self.ymesh.height.unwrap_or_else(|| default_height(p));
        let gamma = self.ymesh.gamma.unwrap_or_else(|| default_gamma(s));
        Ok(build_ymesh(s, m, height, gamma)?)
    }
}
