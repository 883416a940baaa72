//! Channel draws, scenario presets and Monte-Carlo parameter sweeps.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{domain, Error, Result};
use crate::problem::{psnr_metrics, Budgets, ProblemInstance};
use crate::scalar::Scalar;
use crate::scenario::{QualityLadder, RequestProfile, TileIndex, TilingGrid};
use crate::solvers::{solve, upper_bound, Method, SolveSettings};

/// Exponentially distributed channel power gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub mean: f64,
    pub seed: u64,
}

impl ChannelModel {
    pub fn new(mean: f64, seed: u64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return domain(format!("mean channel gain must be positive, got {mean}"));
        }
        Ok(Self { mean, seed })
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self { mean: 1e-3, seed: 0 }
    }
}

/// Thermal noise `n0 = B·kB·T0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub boltzmann: f64,
    pub temperature: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { boltzmann: 1.38e-23, temperature: 300.0 }
    }
}

impl NoiseModel {
    pub fn power<S: Scalar>(&self, bandwidth: S) -> S {
        bandwidth * S::lit(self.boltzmann * self.temperature)
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, realization: u64, user: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(mix(seed) ^ realization) ^ user))
}

/// Gains of `users` users in one realization. Each user's draw depends only
/// on `(seed, realization, user)`.
pub fn draw_channels<S: Scalar>(model: &ChannelModel, users: usize, realization: u64) -> Vec<S> {
    let exp = Exp::new(1.0 / model.mean).expect("positive rate");
    (0..users as u64)
        .map(|k| loop {
            let h: f64 = exp.sample(&mut stream(model.seed, realization, k));
            // an exact zero gain would be rejected by the instance
            if h > 0.0 {
                break S::lit(h);
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 18×36 tiles, two 12×12 viewports sharing 7×7 tiles.
    Paper,
    /// 6×12 tiles, two 4×4 viewports sharing 2×2 tiles, bandwidth scaled by
    /// the ratio of requested tiles.
    Desk,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        }
    }

    /// Grid rows and columns.
    pub fn grid(self) -> (usize, usize) {
        match self {
            Preset::Paper => (18, 36),
            Preset::Desk => (6, 12),
        }
    }

    /// Inclusive `(rows, cols)` ranges requested by each user.
    pub fn viewports(self) -> Vec<((usize, usize), (usize, usize))> {
        match self {
            Preset::Paper => vec![((2, 13), (10, 21)), ((7, 18), (15, 26))],
            Preset::Desk => vec![((1, 4), (4, 7)), ((3, 6), (6, 9))],
        }
    }

    /// Factor applied to the nominal bandwidth: requested tiles of this
    /// preset over those of the full-size `paper` preset.
    pub fn bandwidth_scale(self) -> f64 {
        match self {
            Preset::Paper => 1.0,
            Preset::Desk => 28.0 / 239.0,
        }
    }

    pub fn scenario<S: Scalar>(self) -> Scenario<S> {
        let (rows, cols) = self.grid();
        let grid = TilingGrid::new(rows, cols).expect("preset grid");
        let sets = self.viewports().into_iter().map(|(r, c)| grid.rect(r, c)).collect();
        Scenario::new(grid, QualityLadder::reference(), sets, 1, self.bandwidth_scale()).expect("preset scenario")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => domain(format!("unknown preset `{s}`, expected paper or desk")),
        }
    }
}

/// Everything about an instance except resources and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<S> {
    pub grid: TilingGrid,
    pub ladder: QualityLadder<S>,
    pub profile: RequestProfile,
    pub smoothness: usize,
    /// Multiplies the nominal bandwidth before it reaches the instance.
    pub bandwidth_scale: f64,
}

impl<S: Scalar> Scenario<S> {
    pub fn new(
        grid: TilingGrid,
        ladder: QualityLadder<S>,
        tile_sets: Vec<BTreeSet<TileIndex>>,
        smoothness: usize,
        bandwidth_scale: f64,
    ) -> Result<Self> {
        if !(bandwidth_scale > 0.0 && bandwidth_scale.is_finite()) {
            return domain(format!("bandwidth scale must be positive, got {bandwidth_scale}"));
        }
        let profile = RequestProfile::new(&grid, tile_sets)?;
        Ok(Self { grid, ladder, profile, smoothness, bandwidth_scale })
    }

    pub fn users(&self) -> usize {
        self.profile.users()
    }

    /// Instance at nominal bandwidth `bandwidth` (Hz), energy `energy` (J)
    /// and frame `frame` (s).
    pub fn instance(&self, bandwidth: S, energy: S, frame: S, channels: Vec<S>, noise: &NoiseModel) -> Result<ProblemInstance<S>> {
        let bandwidth = bandwidth * S::lit(self.bandwidth_scale);
        let budgets = Budgets { frame, bandwidth, energy, noise: noise.power(bandwidth) };
        ProblemInstance::new(self.grid.clone(), self.ladder.clone(), self.profile.clone(), budgets, channels, self.smoothness)
    }
}

/// The full-size scenario at the given resources and channel gains.
pub fn build_paper_scenario<S: Scalar>(bandwidth: S, energy: S, frame: S, channels: Vec<S>) -> Result<ProblemInstance<S>> {
    Preset::Paper.scenario().instance(bandwidth, energy, frame, channels, &NoiseModel::default())
}

/// Random instance small enough for the exhaustive oracle: a 3×4 grid, at
/// most `max_tiles` requested tiles, one or two users, two or three levels
/// and smoothness 0 or 1.
pub fn small_instance<S: Scalar>(seed: u64, max_tiles: usize) -> ProblemInstance<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    let grid = TilingGrid::new(3, 4).expect("grid");
    let users = rng.gen_range(1..=2usize);
    let levels = rng.gen_range(2..=3usize);
    let mut pool: Vec<TileIndex> = grid.tiles().collect();
    for i in (1..pool.len()).rev() {
        pool.swap(i, rng.gen_range(0..=i));
    }
    pool.truncate(rng.gen_range(1..=max_tiles.clamp(1, 12)));
    let mut sets = vec![BTreeSet::new(); users];
    for &t in &pool {
        let mask = rng.gen_range(1..(1u32 << users));
        for (k, s) in sets.iter_mut().enumerate() {
            if mask & (1 << k) != 0 {
                s.insert(t);
            }
        }
    }
    for s in &mut sets {
        if s.is_empty() {
            s.insert(pool[0]);
        }
    }
    let reference = QualityLadder::<S>::reference();
    let ladder = QualityLadder::new(reference.rates()[..levels].to_vec(), reference.psnr()[..levels].to_vec()).expect("ladder");
    let bandwidth = S::lit(4e5 * rng.gen_range(0.5..1.5));
    let energy = S::lit(10f64.powf(rng.gen_range(-7.0..-3.0)));
    let smoothness = rng.gen_range(0..=1);
    let channels = draw_channels(&ChannelModel { mean: 1e-3, seed: rng.gen() }, users, 0);
    let budgets = Budgets { frame: S::lit(0.05), bandwidth, energy, noise: NoiseModel::default().power(bandwidth) };
    let profile = RequestProfile::new(&grid, sets).expect("profile");
    ProblemInstance::new(grid, ladder, profile, budgets, channels, smoothness).expect("small instance")
}

/// Desk preset with bandwidth in [10, 30] MHz, energy in [0.01, 0.09] J,
/// frame in [0.01, 0.09] s and fresh channel gains, all drawn from `seed`.
pub fn desk_instance<S: Scalar>(seed: u64) -> ProblemInstance<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x5eed));
    let bandwidth = S::lit(rng.gen_range(1e7..3e7));
    let energy = S::lit(rng.gen_range(0.01..0.09));
    let frame = S::lit(rng.gen_range(0.01..0.09));
    let scenario = Preset::Desk.scenario::<S>();
    let channels = draw_channels(&ChannelModel { mean: 1e-3, seed }, scenario.users(), 0);
    scenario.instance(bandwidth, energy, frame, channels, &NoiseModel::default()).expect("desk instance")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Bandwidth,
    Energy,
    Frame,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Bandwidth => "bandwidth_hz",
            SweepParam::Energy => "energy_j",
            SweepParam::Frame => "frame_s",
        }
    }

    /// Grid used when none is configured.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::Bandwidth => [10.0, 15.0, 20.0, 25.0, 30.0].map(|v| v * 1e6).to_vec(),
            SweepParam::Energy | SweepParam::Frame => vec![0.01, 0.03, 0.05, 0.07, 0.09],
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandwidth_hz" | "bandwidth" | "B" => Ok(SweepParam::Bandwidth),
            "energy_j" | "energy" | "Q" => Ok(SweepParam::Energy),
            "frame_s" | "frame" | "T" => Ok(SweepParam::Frame),
            _ => domain(format!("unknown sweep parameter `{s}`, expected bandwidth_hz, energy_j or frame_s")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec<S> {
    pub param: SweepParam,
    pub values: Vec<S>,
    /// Nominal bandwidth (Hz), energy (J) and frame (s) when not swept.
    pub bandwidth: S,
    pub energy: S,
    pub frame: S,
    pub realizations: usize,
    pub methods: Vec<Method>,
    pub scenario: Scenario<S>,
    pub channel: ChannelModel,
    pub noise: NoiseModel,
    pub settings: SolveSettings<S>,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

impl<S: Scalar> SweepSpec<S> {
    /// Defaults for `param`: the standard grid, fixed values of 20 MHz,
    /// 0.05 J and 0.05 s, 100 realizations and every method.
    pub fn new(param: SweepParam, scenario: Scenario<S>, seed: u64) -> Self {
        Self {
            param,
            values: param.default_values().into_iter().map(S::lit).collect(),
            bandwidth: S::lit(2e7),
            energy: S::lit(0.05),
            frame: S::lit(0.05),
            realizations: 100,
            methods: Method::ALL.to_vec(),
            scenario,
            channel: ChannelModel { mean: 1e-3, seed },
            noise: NoiseModel::default(),
            settings: SolveSettings::default(),
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return domain("sweep needs at least one value");
        }
        if let Some(v) = self.values.iter().find(|v| !(**v > S::zero() && v.is_finite())) {
            return domain(format!("sweep values must be positive, got {v}"));
        }
        if self.realizations == 0 {
            return domain("sweep needs at least one realization");
        }
        if self.methods.is_empty() {
            return domain("sweep needs at least one method");
        }
        ChannelModel::new(self.channel.mean, self.channel.seed)?;
        Ok(())
    }

    /// Instance of realization `r` at swept value `value`.
    pub fn instance(&self, value: S, r: usize) -> Result<ProblemInstance<S>> {
        let (mut b, mut q, mut t) = (self.bandwidth, self.energy, self.frame);
        match self.param {
            SweepParam::Bandwidth => b = value,
            SweepParam::Energy => q = value,
            SweepParam::Frame => t = value,
        }
        let channels = draw_channels(&self.channel, self.scenario.users(), r as u64);
        self.scenario.instance(b, q, t, channels, &self.noise)
    }
}

/// Means over the realizations a method solved; the bound has no PSNR.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: Method,
    pub param: SweepParam,
    pub value: f64,
    pub realizations: usize,
    pub feasible: usize,
    pub mean_utility: f64,
    pub mean_psnr_db: f64,
    pub mean_solve_time_s: f64,
}

impl SweepRecord {
    pub fn failures(&self) -> usize {
        self.realizations - self.feasible
    }
}

/// Utility, mean PSNR and seconds of one method on one realization.
type Sample = Option<(f64, f64, f64)>;

fn run_method<S: Scalar>(method: Method, inst: &ProblemInstance<S>, settings: &SolveSettings<S>) -> Sample {
    let start = Instant::now();
    if method == Method::UpperBound {
        let ub = upper_bound(inst, settings).ok()?;
        return Some((ub.as_f64(), f64::NAN, start.elapsed().as_secs_f64()));
    }
    let out = solve(method, inst, settings).ok()?;
    if !out.feasibility.feasible {
        return None;
    }
    let solved = out.instance(inst);
    let psnr = psnr_metrics(&out.selection, solved.profile(), solved.ladder()).mean;
    Some((out.utility.as_f64(), psnr.as_f64(), out.elapsed.as_secs_f64()))
}

/// `f(0..n)` on `threads` workers, returned in index order.
fn par_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = if threads == 0 { std::thread::available_parallelism().map_or(1, |p| p.get()) } else { threads };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads.min(n).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                slots.lock().expect("worker panicked")[i] = Some(v);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|v| v.expect("every index visited")).collect()
}

/// Runs every method on every (value, realization) pair. All methods see the
/// same channel gains at a given realization index. Method failures only
/// lower the feasible count.
pub fn run_sweep<S: Scalar>(spec: &SweepSpec<S>) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let jobs = spec.values.len() * spec.realizations;
    let samples: Vec<Result<Vec<Sample>>> = par_map(jobs, spec.threads, |j| {
        let (v, r) = (j / spec.realizations, j % spec.realizations);
        let inst = spec.instance(spec.values[v], r)?;
        Ok(spec.methods.iter().map(|&m| run_method(m, &inst, &spec.settings)).collect())
    });
    let samples: Vec<Vec<Sample>> = samples.into_iter().collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(spec.values.len() * spec.methods.len());
    for (v, &value) in spec.values.iter().enumerate() {
        for (m, &method) in spec.methods.iter().enumerate() {
            let solved: Vec<(f64, f64, f64)> =
                samples[v * spec.realizations..(v + 1) * spec.realizations].iter().filter_map(|s| s[m]).collect();
            let mean = |f: fn(&(f64, f64, f64)) -> f64| {
                if solved.is_empty() {
                    f64::NAN
                } else {
                    solved.iter().map(f).sum::<f64>() / solved.len() as f64
                }
            };
            records.push(SweepRecord {
                method,
                param: spec.param,
                value: value.as_f64(),
                realizations: spec.realizations,
                feasible: solved.len(),
                mean_utility: mean(|s| s.0),
                mean_psnr_db: mean(|s| s.1),
                mean_solve_time_s: mean(|s| s.2),
            });
        }
    }
    Ok(records)
}

pub const CSV_HEADER: [&str; 8] = [
    "method",
    "param_name",
    "param_value",
    "realization_count",
    "feasible_count",
    "mean_utility",
    "mean_psnr_db",
    "mean_solve_time_s",
];

/// Writes `# key=value` metadata lines followed by the records as CSV.
pub fn write_records<W: Write>(mut out: W, metadata: &[(String, String)], records: &[SweepRecord]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    for (k, v) in metadata {
        writeln!(out, "# {k}={v}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv)?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.param.name().to_string(),
            r.value.to_string(),
            r.realizations.to_string(),
            r.feasible.to_string(),
            r.mean_utility.to_string(),
            r.mean_psnr_db.to_string(),
            r.mean_solve_time_s.to_string(),
        ])
        .map_err(csv)?;
    }
    w.flush().map_err(io)
}
