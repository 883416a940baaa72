//! TOML run configuration. Key names carry their units.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use tilecast::convex::SolverSettings;
use tilecast::problem::FeasibilityTolerance;
use tilecast::sim::{draw_channels, ChannelModel, NoiseModel, SweepParam};
use tilecast::solvers::DcaSettings;
use tilecast::{
    tiles_for_view, FovSpec, Method, OracleCaps, Preset, ProblemInstance, QualityLadder, Scenario, SolveSettings, SweepSpec,
    TileIndex, TilingGrid, ViewCenter,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid<T>(key: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid { key: key.into(), message: message.into() })
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(key, format!("must be positive and finite, got {v}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub resources: ResourceConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_smoothness")]
    pub smoothness: usize,
    /// Multiplies `resources.bandwidth_hz` before solving.
    #[serde(default = "default_scale")]
    pub bandwidth_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<FovConfig>,
    pub users: Vec<UserConfig>,
}

fn default_smoothness() -> usize {
    1
}

fn default_scale() -> f64 {
    1.0
}

/// Parallel arrays, one entry per quality level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub levels: Vec<usize>,
    pub rates_bps: Vec<f64>,
    pub psnr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovConfig {
    pub span_h_deg: f64,
    pub span_v_deg: f64,
    pub margin_deg: f64,
}

/// One user's requested tiles: an inclusive row/column range, an explicit
/// list of `[row, col]` pairs, or a viewing direction covered with the
/// scenario FoV.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiles: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevation_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfig {
    pub frame_s: f64,
    pub bandwidth_hz: f64,
    pub energy_j: f64,
    /// Explicit per-user channel power gains; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<f64>>,
    #[serde(default = "default_channel_mean")]
    pub channel_mean: f64,
}

fn default_channel_mean() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub methods: Vec<String>,
    pub kkt_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub rho_init: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    pub objective_tol: f64,
    pub binary_tol: f64,
    pub dca_max_iters: usize,
    pub stall_stages: usize,
    pub feasibility_tol: f64,
    /// Baseline 1 splits energy rather than power by group size.
    pub baseline1_energy_split: bool,
    pub oracle_max_tiles: usize,
    pub oracle_max_levels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let (c, d) = (SolverSettings::<f64>::default(), DcaSettings::<f64>::default());
        let caps = OracleCaps::default();
        Self {
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            kkt_tol: c.kkt_tol,
            gap_tol: c.gap_tol,
            max_iters: c.max_iters,
            rho_init: d.rho_init,
            rho_growth: d.rho_growth,
            rho_max: d.rho_max,
            objective_tol: d.objective_tol,
            binary_tol: d.binary_tol,
            dca_max_iters: d.max_iters,
            stall_stages: d.stall_stages,
            feasibility_tol: FeasibilityTolerance::<f64>::default().relative,
            baseline1_energy_split: false,
            oracle_max_tiles: caps.max_tiles,
            oracle_max_levels: caps.max_levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `bandwidth_hz`, `energy_j` or `frame_s`.
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
}

fn default_realizations() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Report solve times; off gives byte-identical reruns.
    pub record_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { seed: 0, path: None, record_time: true }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let config = Self::parse(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Configuration of a preset scenario at 20 MHz, 0.05 J and 0.05 s with a
    /// bandwidth sweep.
    pub fn preset(preset: Preset) -> Self {
        let (rows, cols) = preset.grid();
        let users = preset
            .viewports()
            .into_iter()
            .map(|(r, c)| UserConfig { rows: Some([r.0, r.1]), cols: Some([c.0, c.1]), ..UserConfig::default() })
            .collect();
        let reference = QualityLadder::reference();
        Self {
            scenario: ScenarioConfig {
                rows,
                cols,
                smoothness: 1,
                bandwidth_scale: preset.bandwidth_scale(),
                ladder: Some(LadderConfig {
                    levels: (1..=reference.levels()).collect(),
                    rates_bps: reference.rates().to_vec(),
                    psnr_db: reference.psnr().to_vec(),
                }),
                fov: None,
                users,
            },
            resources: ResourceConfig { frame_s: 0.05, bandwidth_hz: 2e7, energy_j: 0.05, gains: None, channel_mean: 1e-3 },
            solver: SolverConfig::default(),
            sweep: Some(SweepConfig {
                param: SweepParam::Bandwidth.name().to_string(),
                values: Some(SweepParam::Bandwidth.default_values()),
                realizations: 100,
                threads: 0,
            }),
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario()?;
        self.settings()?;
        self.methods()?;
        self.gains()?;
        if let Some(sweep) = &self.sweep {
            sweep.param.parse::<SweepParam>().or_else(|e| invalid("sweep.param", e.to_string()))?;
            if let Some(values) = &sweep.values {
                if values.is_empty() {
                    return invalid("sweep.values", "must not be empty");
                }
                for &v in values {
                    positive("sweep.values", v)?;
                }
            }
            if sweep.realizations == 0 {
                return invalid("sweep.realizations", "must be at least 1");
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let sc = &self.scenario;
        let grid = TilingGrid::new(sc.rows, sc.cols).or_else(|e| invalid("scenario.rows", e.to_string()))?;
        let ladder = match &sc.ladder {
            None => QualityLadder::reference(),
            Some(l) => {
                if l.levels != (1..=l.rates_bps.len()).collect::<Vec<_>>() {
                    return invalid("scenario.ladder.levels", "must list 1, 2, ..., L in order, one per rate");
                }
                QualityLadder::new(l.rates_bps.clone(), l.psnr_db.clone()).or_else(|e| invalid("scenario.ladder", e.to_string()))?
            }
        };
        if sc.smoothness > ladder.levels() {
            return invalid("scenario.smoothness", format!("must not exceed the {} quality levels", ladder.levels()));
        }
        positive("scenario.bandwidth_scale", sc.bandwidth_scale)?;
        if sc.users.is_empty() {
            return invalid("scenario.users", "at least one user is required");
        }
        let fov = match &sc.fov {
            Some(f) => Some(FovSpec::new(f.span_h_deg, f.span_v_deg, f.margin_deg).or_else(|e| invalid("scenario.fov", e.to_string()))?),
            None => None,
        };
        let sets = sc
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| user_tiles(&grid, fov.as_ref(), u, k))
            .collect::<Result<Vec<_>, _>>()?;
        Scenario::new(grid, ladder, sets, sc.smoothness, sc.bandwidth_scale).or_else(|e| invalid("scenario.users", e.to_string()))
    }

    pub fn settings(&self) -> Result<SolveSettings, ConfigError> {
        let s = &self.solver;
        for (key, v) in [
            ("solver.kkt_tol", s.kkt_tol),
            ("solver.gap_tol", s.gap_tol),
            ("solver.rho_init", s.rho_init),
            ("solver.rho_max", s.rho_max),
            ("solver.objective_tol", s.objective_tol),
            ("solver.binary_tol", s.binary_tol),
            ("solver.feasibility_tol", s.feasibility_tol),
        ] {
            positive(key, v)?;
        }
        if !(s.rho_growth > 1.0 && s.rho_growth.is_finite()) {
            return invalid("solver.rho_growth", format!("must exceed 1, got {}", s.rho_growth));
        }
        if s.rho_max < s.rho_init {
            return invalid("solver.rho_max", "must not be below solver.rho_init");
        }
        for (key, v) in [("solver.max_iters", s.max_iters), ("solver.dca_max_iters", s.dca_max_iters), ("solver.stall_stages", s.stall_stages)] {
            if v == 0 {
                return invalid(key, "must be at least 1");
            }
        }
        let convex = SolverSettings { kkt_tol: s.kkt_tol, gap_tol: s.gap_tol, max_iters: s.max_iters, ..SolverSettings::default() };
        let dca = DcaSettings {
            rho_init: s.rho_init,
            rho_growth: s.rho_growth,
            rho_max: s.rho_max,
            objective_tol: s.objective_tol,
            binary_tol: s.binary_tol,
            max_iters: s.dca_max_iters,
            stall_stages: s.stall_stages,
        };
        Ok(SolveSettings {
            convex,
            dca,
            tolerance: FeasibilityTolerance::relative(s.feasibility_tol),
            baseline1_energy_split: s.baseline1_energy_split,
        })
    }

    pub fn methods(&self) -> Result<Vec<Method>, ConfigError> {
        if self.solver.methods.is_empty() {
            return invalid("solver.methods", "must list at least one method");
        }
        self.solver
            .methods
            .iter()
            .map(|m| m.parse::<Method>().or_else(|e| invalid("solver.methods", e.to_string())))
            .collect()
    }

    pub fn oracle_caps(&self) -> OracleCaps {
        OracleCaps { max_tiles: self.solver.oracle_max_tiles, max_levels: self.solver.oracle_max_levels }
    }

    fn gains(&self) -> Result<(), ConfigError> {
        let r = &self.resources;
        positive("resources.frame_s", r.frame_s)?;
        positive("resources.bandwidth_hz", r.bandwidth_hz)?;
        positive("resources.energy_j", r.energy_j)?;
        positive("resources.channel_mean", r.channel_mean)?;
        if let Some(g) = &r.gains {
            if g.len() != self.scenario.users.len() {
                return invalid("resources.gains", format!("expected {} gains, one per user, got {}", self.scenario.users.len(), g.len()));
            }
            for &h in g {
                positive("resources.gains", h)?;
            }
        }
        Ok(())
    }

    pub fn channel(&self, seed: u64) -> ChannelModel {
        ChannelModel { mean: self.resources.channel_mean, seed }
    }

    /// The configured instance; without explicit gains, realization 0 of `seed`.
    pub fn instance(&self, seed: u64) -> Result<ProblemInstance, ConfigError> {
        self.gains()?;
        let scenario = self.scenario()?;
        let r = &self.resources;
        let gains = match &r.gains {
            Some(g) => g.clone(),
            None => draw_channels(&self.channel(seed), scenario.users(), 0),
        };
        scenario
            .instance(r.bandwidth_hz, r.energy_j, r.frame_s, gains, &NoiseModel::default())
            .or_else(|e| invalid("resources", e.to_string()))
    }

    pub fn sweep_spec(&self, seed: u64) -> Result<SweepSpec, ConfigError> {
        let Some(sweep) = &self.sweep else {
            return invalid("sweep", "a [sweep] section is required");
        };
        let param: SweepParam = sweep.param.parse().or_else(|e: tilecast::Error| invalid("sweep.param", e.to_string()))?;
        let mut spec = SweepSpec::new(param, self.scenario()?, seed);
        if let Some(values) = &sweep.values {
            spec.values = values.clone();
        }
        spec.bandwidth = self.resources.bandwidth_hz;
        spec.energy = self.resources.energy_j;
        spec.frame = self.resources.frame_s;
        spec.realizations = sweep.realizations;
        spec.threads = sweep.threads;
        spec.methods = self.methods()?;
        spec.channel = self.channel(seed);
        spec.settings = self.settings()?;
        spec.validate().or_else(|e| invalid("sweep", e.to_string()))?;
        Ok(spec)
    }
}

fn user_tiles(grid: &TilingGrid, fov: Option<&FovSpec>, u: &UserConfig, k: usize) -> Result<BTreeSet<TileIndex>, ConfigError> {
    let key = format!("scenario.users[{k}]");
    let forms = [u.rows.is_some() || u.cols.is_some(), u.tiles.is_some(), u.azimuth_deg.is_some() || u.elevation_deg.is_some()];
    if forms.iter().filter(|&&f| f).count() != 1 {
        return invalid(key, "give exactly one of rows+cols, tiles, or azimuth_deg+elevation_deg");
    }
    let check = |t: TileIndex| {
        if grid.contains(t) {
            Ok(t)
        } else {
            invalid(key.clone(), format!("tile {t} lies outside the {}×{} grid", grid.rows(), grid.cols()))
        }
    };
    if let Some(tiles) = &u.tiles {
        return tiles.iter().map(|&[r, c]| check(TileIndex::new(r, c))).collect();
    }
    if let (Some([r0, r1]), Some([c0, c1])) = (u.rows, u.cols) {
        if r0 > r1 || c0 > c1 {
            return invalid(key, "ranges must be ascending");
        }
        check(TileIndex::new(r0, c0))?;
        check(TileIndex::new(r1, c1))?;
        return Ok(grid.rect((r0, r1), (c0, c1)));
    }
    if let (Some(azimuth), Some(elevation)) = (u.azimuth_deg, u.elevation_deg) {
        let Some(fov) = fov else {
            return invalid("scenario.fov", format!("required by the viewing direction of user {}", k + 1));
        };
        return tiles_for_view(grid, fov, ViewCenter { azimuth, elevation }).or_else(|e| invalid(key, e.to_string()));
    }
    invalid(key, "rows and cols, or azimuth_deg and elevation_deg, must be given together")
}
