//! State of the coupled system, run parameters and initial-data generators.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{self, Complex64, Field, Grid, SpectralField};

/// The triple (ρ, w, u) at one instant, with spectra of all three kept in sync.
///
/// Spectra are always recomputed from the physical samples, so a state
/// rebuilt from its physical arrays (e.g. a checkpoint) is bit-identical.
#[derive(Debug)]
pub struct FluidState {
    time: f64,
    rho: Field,
    w: Field,
    u: Field,
    rho_hat: SpectralField,
    w_hat: SpectralField,
    u_hat: SpectralField,
    pressure: OnceLock<Field>,
}

impl Clone for FluidState {
    fn clone(&self) -> Self {
        FluidState {
            time: self.time,
            rho: self.rho.clone(),
            w: self.w.clone(),
            u: self.u.clone(),
            rho_hat: self.rho_hat.clone(),
            w_hat: self.w_hat.clone(),
            u_hat: self.u_hat.clone(),
            pressure: self.pressure.clone(),
        }
    }
}

impl FluidState {
    pub fn new(time: f64, rho: Field, w: Field, u: Field) -> Result<Self> {
        if !rho.is_scalar() || w.ncomp() != 3 || u.ncomp() != 3 {
            return Err(Error::Shape("state needs scalar rho and vector w, u".into()));
        }
        if rho.grid() != w.grid() || rho.grid() != u.grid() {
            return Err(Error::Shape("rho, w, u live on different grids".into()));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidArgument(format!("state time {time} must be finite and ≥ 0")));
        }
        let grid = rho.grid().clone();
        let arrays: Vec<&[f64]> = std::iter::once(rho.comp(0))
            .chain(w.components().iter().map(|c| c.as_slice()))
            .chain(u.components().iter().map(|c| c.as_slice()))
            .collect();
        let mut spectra = spectral::forward_arrays(&grid, &arrays).into_iter();
        let rho_hat = SpectralField::new(&grid, vec![spectra.next().unwrap()])?;
        let w_hat = SpectralField::new(&grid, spectra.by_ref().take(3).collect())?;
        let u_hat = SpectralField::new(&grid, spectra.collect())?;
        Ok(FluidState {
            time,
            rho,
            w,
            u,
            rho_hat,
            w_hat,
            u_hat,
            pressure: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rho(&self) -> &Field {
        &self.rho
    }

    pub fn w(&self) -> &Field {
        &self.w
    }

    pub fn u(&self) -> &Field {
        &self.u
    }

    pub fn rho_hat(&self) -> &SpectralField {
        &self.rho_hat
    }

    pub fn w_hat(&self) -> &SpectralField {
        &self.w_hat
    }

    pub fn u_hat(&self) -> &SpectralField {
        &self.u_hat
    }

    /// Pressure from the Stokes relation, zero mean; computed on first use.
    pub fn pressure(&self) -> &Field {
        self.pressure.get_or_init(|| crate::solver::pressure(self))
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Physical arrays in checkpoint order: ρ, w₀..w₂, u₀..u₂.
    pub fn arrays(&self) -> [&[f64]; 7] {
        [
            self.rho.comp(0),
            self.w.comp(0),
            self.w.comp(1),
            self.w.comp(2),
            self.u.comp(0),
            self.u.comp(1),
            self.u.comp(2),
        ]
    }

    /// Bitwise equality of time and all physical samples.
    pub fn bit_eq(&self, other: &FluidState) -> bool {
        self.time.to_bits() == other.time.to_bits()
            && self.rho.bit_eq(&other.rho)
            && self.w.bit_eq(&other.w)
            && self.u.bit_eq(&other.u)
    }
}

/// Formulation advanced by the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    /// (ρ, w, u) with w advected.
    #[default]
    Nonconservative,
    /// (ρ, ρw, u) in divergence form.
    Conservative,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Nonconservative => "nonconservative",
            Scheme::Conservative => "conservative",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nonconservative" => Ok(Scheme::Nonconservative),
            "conservative" => Ok(Scheme::Conservative),
            _ => Err(format!("unknown scheme '{s}' (nonconservative|conservative)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    Uniform,
    GaussianBumpDensity,
    ProjectedBandlimitedNoise,
    ShearMode,
    TaylorGreenLike,
}

impl Generator {
    pub const ALL: [Generator; 5] = [
        Generator::Uniform,
        Generator::GaussianBumpDensity,
        Generator::ProjectedBandlimitedNoise,
        Generator::ShearMode,
        Generator::TaylorGreenLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Uniform => "uniform",
            Generator::GaussianBumpDensity => "gaussian_bump_density",
            Generator::ProjectedBandlimitedNoise => "projected_bandlimited_noise",
            Generator::ShearMode => "shear_mode",
            Generator::TaylorGreenLike => "taylor_green_like",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown generator '{s}'"))
    }
}

/// Parameters of an initial-data generator.
///
/// `amplitude` always refers to the density:
/// - `uniform`: ρ ≡ amplitude.
/// - `gaussian_bump_density`: ρ = ρ_bg + amplitude·G, G = exp(−|x−c|²/2σ²) at the
///   box center c; u = u_amplitude·P(G e₁), w = w_amplitude·G e₂.
/// - `projected_bandlimited_noise`: random modes with |m| ≤ band; ρ = ρ_bg +
///   amplitude·η with sup|η| = 1, u Leray-projected with sup|u| = u_amplitude,
///   sup|w| = w_amplitude.
/// - `shear_mode`: ρ ≡ amplitude, u = u_amplitude sin(k x₂) e₁,
///   w = w_amplitude sin(k x₂) e₁ with k = 2π·mode/L.
/// - `taylor_green_like`: ρ = ρ_bg + amplitude·cos kx₁ cos kx₂ cos kx₃,
///   u = u_amplitude(sin kx₁ cos kx₂ cos kx₃, −cos kx₁ sin kx₂ cos kx₃, 0),
///   w = w_amplitude(cos kx₁ sin kx₂, −sin kx₁ cos kx₂, 0) sin kx₃.
///
/// Constant offsets `w_mean`, `u_mean` are added in every case.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub generator: Generator,
    pub amplitude: f64,
    pub sigma: f64,
    pub seed: u64,
    pub rho_background: f64,
    pub u_amplitude: f64,
    pub w_amplitude: f64,
    pub mode: i64,
    pub band: i64,
    pub w_mean: [f64; 3],
    pub u_mean: [f64; 3],
}

impl InitialData {
    pub fn new(generator: Generator) -> Self {
        InitialData {
            generator,
            amplitude: 1.0,
            sigma: 1.0,
            seed: 0,
            rho_background: 0.0,
            u_amplitude: 0.0,
            w_amplitude: 0.0,
            mode: 1,
            band: 2,
            w_mean: [0.0; 3],
            u_mean: [0.0; 3],
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub box_len: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// 2 (midpoint) or 4 (classical four-stage).
    pub order: u32,
    pub integrating_factor: bool,
    pub cfl: f64,
    /// Conservative scheme: minimum allowed ρ relative to max ρ₀.
    pub rho_floor: f64,
    /// Steps between ledger rows.
    pub cadence: usize,
    /// Steps between stored snapshots; 0 keeps only the initial and final states.
    pub checkpoint_every: usize,
    pub init: InitialData,
    pub monitor: MonitorConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorConfig {
    /// Compute the Besov columns of the ledger.
    pub besov: bool,
    /// Compute E₁, D₁, D̃₁, E₂, D₂.
    pub higher_order: bool,
    /// Weight (1 + a₀t)^β in the running integral of D̃₁.
    pub a0: f64,
    pub beta: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            besov: true,
            higher_order: true,
            a0: 1.0,
            beta: 1.0,
        }
    }
}

impl RunConfig {
    pub fn new(n: usize, dt: f64, t_end: f64, init: InitialData) -> Self {
        RunConfig {
            n,
            box_len: 16.0 * PI,
            dt,
            t_end,
            scheme: Scheme::Nonconservative,
            order: 2,
            integrating_factor: true,
            cfl: 0.5,
            rho_floor: 1e-6,
            cadence: 10,
            checkpoint_every: 0,
            init,
            monitor: MonitorConfig::default(),
        }
    }

    /// Number of steps, `t_end/dt` rounded; errors if not (close to) an integer.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end = {} is not a whole number of steps dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: String| Error::Config { line: 0, key: Some(k.into()), message: m };
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad("dt", format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(bad("t_end", format!("t_end must be ≥ 0, got {}", self.t_end)));
        }
        if self.order != 2 && self.order != 4 {
            return Err(bad("order", format!("order must be 2 or 4, got {}", self.order)));
        }
        if !(self.cfl > 0.0) {
            return Err(bad("cfl", format!("cfl must be positive, got {}", self.cfl)));
        }
        if !(self.rho_floor > 0.0 && self.rho_floor < 1.0) {
            return Err(bad("rho_floor", format!("rho_floor must lie in (0, 1), got {}", self.rho_floor)));
        }
        if self.cadence == 0 {
            return Err(bad("cadence", "cadence must be at least 1".into()));
        }
        let steps = self.steps().map_err(|e| bad("t_end", e.to_string()))?;
        if steps % self.cadence != 0 {
            return Err(bad("cadence", format!("cadence {} does not divide step count {steps}", self.cadence)));
        }
        if self.checkpoint_every > 0 && steps % self.checkpoint_every != 0 {
            return Err(bad(
                "checkpoint_every",
                format!("checkpoint_every {} does not divide step count {steps}", self.checkpoint_every),
            ));
        }
        Grid::new(self.n, self.box_len).map_err(|e| bad("n", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.box_len)
    }

    /// Box-validity horizon (L/4)² for whole-space decay comparisons.
    pub fn box_time(&self) -> f64 {
        (self.box_len / 4.0).powi(2)
    }
}

/// Builds the initial state described by `spec`.
pub fn make_initial(spec: &InitialData, grid: &Grid) -> Result<FluidState> {
    let bad = |m: String| Error::InitialData(m);
    for (name, v) in [
        ("amplitude", spec.amplitude),
        ("rho_background", spec.rho_background),
        ("u_amplitude", spec.u_amplitude),
        ("w_amplitude", spec.w_amplitude),
        ("sigma", spec.sigma),
    ] {
        if !v.is_finite() {
            return Err(bad(format!("{name} is not finite")));
        }
    }
    if spec.amplitude < 0.0 {
        return Err(bad(format!("negative density amplitude {}", spec.amplitude)));
    }
    if spec.rho_background < 0.0 {
        return Err(bad(format!("negative background density {}", spec.rho_background)));
    }
    let kmax = grid.dealias_limit();
    let l = grid.box_len();

    let (rho, w, u) = match spec.generator {
        Generator::Uniform => (
            Field::constant(grid, spec.amplitude),
            Field::zeros(grid, 3),
            Field::zeros(grid, 3),
        ),
        Generator::GaussianBumpDensity => {
            if spec.sigma < 4.0 * grid.spacing() {
                return Err(bad(format!(
                    "sigma = {} is under-resolved (needs ≥ 4 grid spacings = {})",
                    spec.sigma,
                    4.0 * grid.spacing()
                )));
            }
            let c = l / 2.0;
            let s2 = 2.0 * spec.sigma * spec.sigma;
            let g = |x: [f64; 3]| (-((x[0] - c).powi(2) + (x[1] - c).powi(2) + (x[2] - c).powi(2)) / s2).exp();
            let rho = Field::from_fn(grid, |x| spec.rho_background + spec.amplitude * g(x));
            let w = Field::vector_from_fn(grid, |x| [0.0, spec.w_amplitude * g(x), 0.0]);
            let raw = Field::vector_from_fn(grid, |x| [spec.u_amplitude * g(x), 0.0, 0.0]);
            let u = spectral::inverse_unchecked(&spectral::leray_project(&spectral::forward(&raw))?);
            (rho, w, u)
        }
        Generator::ProjectedBandlimitedNoise => {
            if spec.band < 1 || spec.band > kmax {
                return Err(bad(format!("band {} outside [1, {kmax}]", spec.band)));
            }
            if spec.amplitude > spec.rho_background {
                return Err(bad(format!(
                    "density amplitude {} exceeds background {}: ρ would go negative",
                    spec.amplitude, spec.rho_background
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let eta = normalized(&random_bandlimited(grid, 1, spec.band, &mut rng));
            let w = normalized(&random_bandlimited(grid, 3, spec.band, &mut rng));
            let u_raw = random_bandlimited(grid, 3, spec.band, &mut rng);
            let u = normalized(&spectral::inverse_unchecked(&spectral::leray_project(&spectral::forward(&u_raw))?));
            let rho = eta.map(|v| spec.rho_background + spec.amplitude * v);
            (rho, w.scaled(spec.w_amplitude), u.scaled(spec.u_amplitude))
        }
        Generator::ShearMode => {
            check_mode(spec.mode, kmax)?;
            let k = 2.0 * PI * spec.mode as f64 / l;
            (
                Field::constant(grid, spec.amplitude),
                Field::vector_from_fn(grid, |x| [spec.w_amplitude * (k * x[1]).sin(), 0.0, 0.0]),
                Field::vector_from_fn(grid, |x| [spec.u_amplitude * (k * x[1]).sin(), 0.0, 0.0]),
            )
        }
        Generator::TaylorGreenLike => {
            check_mode(spec.mode, kmax)?;
            if spec.amplitude > spec.rho_background {
                return Err(bad(format!(
                    "density amplitude {} exceeds background {}: ρ would go negative",
                    spec.amplitude, spec.rho_background
                )));
            }
            let k = 2.0 * PI * spec.mode as f64 / l;
            let rho = Field::from_fn(grid, |x| {
                spec.rho_background + spec.amplitude * (k * x[0]).cos() * (k * x[1]).cos() * (k * x[2]).cos()
            });
            let u = Field::vector_from_fn(grid, |x| {
                let (s0, c0) = (k * x[0]).sin_cos();
                let (s1, c1) = (k * x[1]).sin_cos();
                let c2 = (k * x[2]).cos();
                [spec.u_amplitude * s0 * c1 * c2, -spec.u_amplitude * c0 * s1 * c2, 0.0]
            });
            let w = Field::vector_from_fn(grid, |x| {
                let (s0, c0) = (k * x[0]).sin_cos();
                let (s1, c1) = (k * x[1]).sin_cos();
                let s2 = (k * x[2]).sin();
                [spec.w_amplitude * c0 * s1 * s2, -spec.w_amplitude * s0 * c1 * s2, 0.0]
            });
            (rho, w, u)
        }
    };

    let shift = |f: Field, mean: [f64; 3]| {
        let comps = f
            .into_components()
            .into_iter()
            .zip(mean)
            .map(|(c, m)| c.into_iter().map(|v| v + m).collect())
            .collect();
        Field::new(grid, comps)
    };
    let w = shift(w, spec.w_mean)?;
    let u = shift(u, spec.u_mean)?;
    FluidState::new(0.0, rho, w, u)
}

fn check_mode(mode: i64, kmax: i64) -> Result<()> {
    if mode < 1 || mode > kmax {
        return Err(Error::InitialData(format!("mode {mode} outside [1, {kmax}]")));
    }
    Ok(())
}

fn normalized(f: &Field) -> Field {
    let m = f.max_norm();
    if m > 0.0 {
        f.scaled(1.0 / m)
    } else {
        f.clone()
    }
}

/// Real, mean-free random field with Gaussian coefficients on `0 < |m| ≤ band`.
///
/// Modes are visited in flat-index order and each conjugate pair draws once,
/// so the result depends only on the grid, band and RNG state.
pub fn random_bandlimited(grid: &Grid, ncomp: usize, band: i64, rng: &mut ChaCha8Rng) -> Field {
    let b2 = (band * band) as u32;
    let msq = grid.mode_sq();
    let ny = grid.n() as i64 / 2;
    let mut spec = SpectralField::zeros(grid, ncomp);
    for c in 0..ncomp {
        let coeffs = spec.coeffs_mut(c);
        for idx in 1..grid.len() {
            if msq[idx] > b2 {
                continue;
            }
            let mirror = grid.mirror(idx);
            if mirror < idx || grid.modes_at(idx).contains(&-ny) {
                continue;
            }
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = if mirror == idx { Complex64::new(re, 0.0) } else { Complex64::new(re, im) };
            coeffs[idx] = z;
            coeffs[mirror] = z.conj();
        }
    }
    spectral::inverse_unchecked(&spec)
}

/// Quantities entering the smallness condition on the data.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialDiagnostics {
    pub rho_l1: f64,
    pub rho_inf: f64,
    pub u_h1: f64,
    pub sqrt_rho_w_l2: f64,
    /// ‖w‖_∞ + ‖∇w‖_∞ with a spectral gradient.
    pub w_lipschitz: f64,
}

pub fn initial_diagnostics(state: &FluidState) -> InitialDiagnostics {
    let grid = state.grid();
    let h3 = grid.cell_volume();
    let rho = state.rho().comp(0);
    let rho_l1 = h3 * rho.iter().map(|v| v.abs()).sum::<f64>();
    let u_h1 = (state.u_hat().l2_norm_sq() + spectral::gradient_energy(grid, state.u_hat().components())).sqrt();
    let w = state.w();
    let sqrt_rho_w_l2 = (h3
        * (0..grid.len())
            .map(|p| rho[p].max(0.0) * (0..3).map(|c| w.comp(c)[p].powi(2)).sum::<f64>())
            .sum::<f64>())
    .sqrt();
    let wh = state.w_hat();
    let gw = spectral::gradient_tensor(grid, [wh.coeffs(0), wh.coeffs(1), wh.coeffs(2)]);
    InitialDiagnostics {
        rho_l1,
        rho_inf: state.rho().max_norm(),
        u_h1,
        sqrt_rho_w_l2,
        w_lipschitz: w.max_norm() + spectral::tensor_sup(&gw),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Negativity {
        index: usize,
        position: [f64; 3],
        value: f64,
        tolerance: f64,
    },
    Divergence {
        max_div: f64,
        tolerance: f64,
    },
    NonFinite {
        field: &'static str,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks ρ ≥ −1e−8·max ρ, div u ≈ 0 and finiteness. Reports only.
pub fn validate(state: &FluidState) -> ValidationReport {
    let mut violations = Vec::new();
    for (name, f) in [("rho", state.rho()), ("w", state.w()), ("u", state.u())] {
        if !f.all_finite() {
            violations.push(Violation::NonFinite { field: name });
        }
    }
    if !violations.is_empty() {
        return ValidationReport { violations };
    }

    let grid = state.grid();
    let rho = state.rho().comp(0);
    let tolerance = 1e-8 * state.rho().max_value().max(0.0);
    if let Some((index, &value)) = rho
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < -tolerance)
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        violations.push(Violation::Negativity {
            index,
            position: grid.position(index),
            value,
            tolerance,
        });
    }

    let uh = state.u_hat();
    let div = spectral::inverse_unchecked(&spectral::divergence(uh).expect("vector"));
    let grad = spectral::gradient_tensor(grid, [uh.coeffs(0), uh.coeffs(1), uh.coeffs(2)]);
    let kmax = grid.wavenumbers().iter().fold(0.0_f64, |m, k| m.max(k.abs()));
    // Relative tolerance, plus a round-off floor for (nearly) uniform u.
    let tolerance = 1e-10 * spectral::tensor_sup(&grad) + 1e-13 * kmax * state.u().max_norm();
    let max_div = div.max_norm();
    if max_div > tolerance {
        violations.push(Violation::Divergence { max_div, tolerance });
    }
    ValidationReport { violations }
}
