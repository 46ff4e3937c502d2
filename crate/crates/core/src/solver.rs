//! Time integration of the coupled system.
//!
//! Diffusion is integrated exactly per mode by the factor `e^{−|k|²t}`;
//! advection, drag and relaxation are explicit and staged (midpoint or
//! classical four-stage). Every quadratic product is formed in physical space
//! and truncated by the two-thirds rule before use.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{self, EnergyLedger, LedgerRow, Running};
use crate::spectral::{self, Field, Grid, SpectralField};
use crate::state::{make_initial, validate, FluidState, RunConfig, Scheme};

/// Discretization choices fixed for a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepScheme {
    pub variant: Scheme,
    /// 2 or 4.
    pub order: u32,
    pub integrating_factor: bool,
}

impl StepScheme {
    pub fn new(variant: Scheme, order: u32, integrating_factor: bool) -> Result<Self> {
        if order != 2 && order != 4 {
            return Err(Error::InvalidArgument(format!("order must be 2 or 4, got {order}")));
        }
        Ok(StepScheme {
            variant,
            order,
            integrating_factor,
        })
    }
}

impl Default for StepScheme {
    fn default() -> Self {
        StepScheme {
            variant: Scheme::Nonconservative,
            order: 2,
            integrating_factor: true,
        }
    }
}

/// Pointwise and quadratic quantities of the state a step starts from,
/// collected from the first right-hand-side evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointDiagnostics {
    pub time: f64,
    /// ‖√ρ(w−u)‖² + ‖∇u‖².
    pub d0: f64,
    pub grad_u_sq: f64,
    pub u_inf: f64,
    pub w_inf: f64,
    pub grad_u_inf: f64,
    pub grad_w_inf: f64,
    pub rel_inf: f64,
    pub grad_rel_inf: f64,
    pub d1_tilde: f64,
}

type Arr = Vec<Complex64>;

/// Spectral stage values: density, w (or ρw in the conservative form), u.
#[derive(Clone)]
struct Stage {
    rho: Arr,
    a: [Arr; 3],
    u: [Arr; 3],
}

impl Stage {
    fn arrays(&self) -> [&Arr; 7] {
        [&self.rho, &self.a[0], &self.a[1], &self.a[2], &self.u[0], &self.u[1], &self.u[2]]
    }

    fn from_arrays(mut v: Vec<Arr>) -> Stage {
        let u2 = v.pop().unwrap();
        let u1 = v.pop().unwrap();
        let u0 = v.pop().unwrap();
        let a2 = v.pop().unwrap();
        let a1 = v.pop().unwrap();
        let a0 = v.pop().unwrap();
        let rho = v.pop().unwrap();
        Stage {
            rho,
            a: [a0, a1, a2],
            u: [u0, u1, u2],
        }
    }

    /// `self + Σ c_i·t_i` on ρ and a; u handled by the caller.
    fn combine_transport(&self, terms: &[(f64, &Stage)]) -> (Arr, [Arr; 3]) {
        let lin = |base: &Arr, pick: &dyn Fn(&Stage) -> &Arr| -> Arr {
            let mut out = base.clone();
            for (c, t) in terms {
                for (o, v) in out.iter_mut().zip(pick(t)) {
                    *o += *c * v;
                }
            }
            out
        };
        (
            lin(&self.rho, &|s| &s.rho),
            [0, 1, 2].map(|i| lin(&self.a[i], &|s| &s.a[i])),
        )
    }
}

struct EvalOut {
    tend: Stage,
    /// Dealiased F̂ = (−(u·∇)u + ρ(w−u))^, before projection; kept only when
    /// the caller supplied the physical fields.
    f_hat: Option<[Arr; 3]>,
    diag: Option<PointDiagnostics>,
}

/// Fixed-step integrator for one grid, scheme and step size.
pub struct Stepper {
    grid: Grid,
    scheme: StepScheme,
    dt: f64,
    cfl: f64,
    /// Absolute density floor for the conservative form.
    rho_floor: f64,
    /// R = max(1, 2‖ρ₀‖_∞) used in D̃₁.
    r: f64,
    mask: Vec<bool>,
    e_half: Vec<f64>,
    e_full: Vec<f64>,
}

impl Stepper {
    /// `rho_floor` is absolute; `r` is the D̃₁ constant.
    pub fn new(grid: &Grid, scheme: StepScheme, dt: f64, cfl: f64, rho_floor: f64, r: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let (e_half, e_full) = if scheme.integrating_factor {
            (
                grid.k_sq().iter().map(|k2| (-k2 * dt / 2.0).exp()).collect(),
                grid.k_sq().iter().map(|k2| (-k2 * dt).exp()).collect(),
            )
        } else {
            (vec![1.0; grid.len()], vec![1.0; grid.len()])
        };
        Ok(Stepper {
            grid: grid.clone(),
            scheme,
            dt,
            cfl,
            rho_floor,
            r,
            mask: spectral::dealias_mask(grid),
            e_half,
            e_full,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme(&self) -> StepScheme {
        self.scheme
    }

    /// Largest step allowed by the advective bound.
    pub fn cfl_limit(&self, state: &FluidState) -> f64 {
        let speed = state.u().max_norm().max(state.w().max_norm());
        if speed > 0.0 {
            self.cfl * self.grid.spacing() / speed
        } else {
            f64::INFINITY
        }
    }

    /// Advances one step; also returns diagnostics of the input state.
    pub fn step(&self, state: &FluidState) -> Result<(FluidState, PointDiagnostics)> {
        if state.grid() != &self.grid {
            return Err(Error::Shape("state grid differs from stepper grid".into()));
        }
        let limit = self.cfl_limit(state);
        if self.dt > limit {
            return Err(Error::Cfl { dt: self.dt, limit });
        }
        match self.scheme.variant {
            Scheme::Nonconservative => self.step_nonconservative(state),
            Scheme::Conservative => {
                let diag = self.diagnostics(state)?;
                Ok((self.step_conservative(state)?, diag))
            }
        }
    }

    /// Diagnostics of a state without stepping.
    pub fn diagnostics(&self, state: &FluidState) -> Result<PointDiagnostics> {
        let st = stage_of(state);
        let phys = state.arrays();
        let out = self.eval_nonconservative(&st, Some(&phys), Some(state.time()))?;
        Ok(out.diag.expect("requested"))
    }

    fn step_nonconservative(&self, state: &FluidState) -> Result<(FluidState, PointDiagnostics)> {
        let y = stage_of(state);
        let phys = state.arrays();
        let t = state.time();
        let first = self.eval_nonconservative(&y, Some(&phys), Some(t))?;
        let diag = first.diag.expect("requested");
        let next = self.integrate(&y, first.tend, &|s| Ok(self.eval_nonconservative(s, None, None)?.tend))?;
        let arrays: Vec<&[Complex64]> = next.arrays().iter().map(|a| a.as_slice()).collect();
        let mut phys = spectral::inverse_arrays(&self.grid, &arrays).into_iter();
        let rho = Field::new(&self.grid, vec![phys.next().unwrap()])?;
        let w = Field::new(&self.grid, phys.by_ref().take(3).collect())?;
        let u = Field::new(&self.grid, phys.collect())?;
        let t_new = t + self.dt;
        check_finite(&rho, &w, &u, t_new)?;
        Ok((FluidState::new(t_new, rho, w, u)?, diag))
    }

    /// One step of the divergence form in (ρ, ρw, u).
    pub fn step_conservative(&self, state: &FluidState) -> Result<FluidState> {
        let g = &self.grid;
        let len = g.len();
        let rho = state.rho().comp(0);
        let m: Vec<Vec<f64>> = (0..3).map(|i| (0..len).map(|p| rho[p] * state.w().comp(i)[p]).collect()).collect();
        let phys: [&[f64]; 7] = [
            rho,
            &m[0],
            &m[1],
            &m[2],
            state.u().comp(0),
            state.u().comp(1),
            state.u().comp(2),
        ];
        let y = Stage::from_arrays(spectral::forward_arrays(g, &phys));
        let t = state.time();
        let first = self.eval_conservative(&y, Some(&phys))?;
        let next = self.integrate(&y, first, &|s| self.eval_conservative(s, None))?;

        let arrays: Vec<&[Complex64]> = next.arrays().iter().map(|a| a.as_slice()).collect();
        let mut out = spectral::inverse_arrays(g, &arrays).into_iter();
        let rho = out.next().unwrap();
        let t_new = t + self.dt;
        self.check_floor(&rho)?;
        let m: Vec<Vec<f64>> = out.by_ref().take(3).collect();
        let w = m.iter().map(|mi| mi.iter().zip(&rho).map(|(a, r)| a / r).collect()).collect();
        let rho = Field::new(g, vec![rho])?;
        let w = Field::new(g, w)?;
        let u = Field::new(g, out.collect())?;
        check_finite(&rho, &w, &u, t_new)?;
        FluidState::new(t_new, rho, w, u)
    }

    /// Staged update given the first tendency `k1` at `y`.
    fn integrate(&self, y: &Stage, k1: Stage, eval: &dyn Fn(&Stage) -> Result<Stage>) -> Result<Stage> {
        let h = self.dt;
        let (eh, ef) = (&self.e_half, &self.e_full);
        match self.scheme.order {
            2 => {
                let (rho, a) = y.combine_transport(&[(h / 2.0, &k1)]);
                let u = self.project([0, 1, 2].map(|i| {
                    (0..y.u[i].len()).map(|p| eh[p] * (y.u[i][p] + h / 2.0 * k1.u[i][p])).collect()
                }));
                let k2 = eval(&Stage { rho, a, u })?;
                let (rho, a) = y.combine_transport(&[(h, &k2)]);
                let u = self.project([0, 1, 2].map(|i| {
                    (0..y.u[i].len()).map(|p| ef[p] * y.u[i][p] + h * eh[p] * k2.u[i][p]).collect()
                }));
                Ok(Stage { rho, a, u })
            }
            _ => {
                let ka = k1;
                let (rho, a) = y.combine_transport(&[(h / 2.0, &ka)]);
                let u = self.project([0, 1, 2].map(|i| {
                    (0..y.u[i].len()).map(|p| eh[p] * (y.u[i][p] + h / 2.0 * ka.u[i][p])).collect()
                }));
                let kb = eval(&Stage { rho, a, u })?;
                let (rho, a) = y.combine_transport(&[(h / 2.0, &kb)]);
                let u = self.project([0, 1, 2].map(|i| {
                    (0..y.u[i].len()).map(|p| eh[p] * y.u[i][p] + h / 2.0 * kb.u[i][p]).collect()
                }));
                let kc = eval(&Stage { rho, a, u })?;
                let (rho, a) = y.combine_transport(&[(h, &kc)]);
                let u = self.project([0, 1, 2].map(|i| {
                    (0..y.u[i].len()).map(|p| ef[p] * y.u[i][p] + h * eh[p] * kc.u[i][p]).collect()
                }));
                let kd = eval(&Stage { rho, a, u })?;
                let (rho, a) = y.combine_transport(&[(h / 6.0, &ka), (h / 3.0, &kb), (h / 3.0, &kc), (h / 6.0, &kd)]);
                let u = self.project([0, 1, 2].map(|i| {
                    (0..y.u[i].len())
                        .map(|p| {
                            ef[p] * y.u[i][p]
                                + h / 6.0
                                    * (ef[p] * ka.u[i][p] + 2.0 * eh[p] * (kb.u[i][p] + kc.u[i][p]) + kd.u[i][p])
                        })
                        .collect()
                }));
                Ok(Stage { rho, a, u })
            }
        }
    }

    fn project(&self, mut u: [Arr; 3]) -> [Arr; 3] {
        let [a, b, c] = &mut u;
        spectral::leray_in_place(&self.grid, [a, b, c]);
        u
    }

    fn check_floor(&self, rho: &[f64]) -> Result<()> {
        let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min >= self.rho_floor) {
            return Err(Error::DensityBelowFloor {
                min,
                floor: self.rho_floor,
            });
        }
        Ok(())
    }

    fn u_tendency(&self, f_hat: [Arr; 3], u: &[Arr; 3]) -> [Arr; 3] {
        let mut pf = self.project(f_hat);
        if !self.scheme.integrating_factor {
            let ksq = self.grid.k_sq();
            for i in 0..3 {
                for (p, z) in pf[i].iter_mut().enumerate() {
                    *z -= ksq[p] * u[i][p];
                }
            }
        }
        pf
    }

    fn eval_nonconservative(&self, st: &Stage, phys: Option<&[&[f64]; 7]>, diag_time: Option<f64>) -> Result<EvalOut> {
        let g = &self.grid;
        let len = g.len();
        let keep_forcing = phys.is_some();
        let owned;
        let phys: [&[f64]; 7] = match phys {
            Some(p) => *p,
            None => {
                let arrays: Vec<&[Complex64]> = st.arrays().iter().map(|a| a.as_slice()).collect();
                owned = spectral::inverse_arrays(g, &arrays);
                [0, 1, 2, 3, 4, 5, 6].map(|i| owned[i].as_slice())
            }
        };
        let mut dspec: Vec<(&[Complex64], usize)> = Vec::with_capacity(18);
        for v in [&st.a, &st.u] {
            for e in 0..9 {
                dspec.push((&v[e / 3], e % 3));
            }
        }
        let grads = spectral::inverse_derivatives(g, &dspec);

        let rho = &phys[0][..len];
        let w = [&phys[1][..len], &phys[2][..len], &phys[3][..len]];
        let u = [&phys[4][..len], &phys[5][..len], &phys[6][..len]];
        let mut prod: Vec<Vec<f64>> = Vec::with_capacity(9);
        for wi in w {
            prod.push((0..len).map(|p| rho[p] * wi[p]).collect());
        }
        for i in 0..3 {
            let g = [&grads[3 * i][..len], &grads[3 * i + 1][..len], &grads[3 * i + 2][..len]];
            prod.push((0..len).map(|p| w[0][p] * g[0][p] + w[1][p] * g[1][p] + w[2][p] * g[2][p]).collect());
        }
        for i in 0..3 {
            let g = [&grads[9 + 3 * i][..len], &grads[10 + 3 * i][..len], &grads[11 + 3 * i][..len]];
            let (wi, ui) = (w[i], u[i]);
            prod.push(
                (0..len)
                    .map(|p| -(u[0][p] * g[0][p] + u[1][p] * g[1][p] + u[2][p] * g[2][p]) + rho[p] * (wi[p] - ui[p]))
                    .collect(),
            );
        }
        let refs: Vec<&[f64]> = prod.iter().map(|a| a.as_slice()).collect();
        let mut hat = spectral::forward_arrays_masked(g, &refs, &self.mask);
        drop(prod);

        let mut d_rho = vec![Complex64::default(); len];
        spectral::divergence_into(g, [&hat[0], &hat[1], &hat[2]], &mut d_rho);
        d_rho.iter_mut().for_each(|z| *z = -*z);
        let d_w = [0, 1, 2].map(|i| (0..len).map(|p| -hat[3 + i][p] + st.u[i][p] - st.a[i][p]).collect::<Arr>());
        hat.truncate(9);
        let f2 = hat.pop().expect("nine spectra");
        let f1 = hat.pop().expect("nine spectra");
        let f0 = hat.pop().expect("nine spectra");
        let f_hat: [Arr; 3] = [f0, f1, f2];
        let (d_u, f_hat) = if keep_forcing {
            (self.u_tendency(f_hat.clone(), &st.u), Some(f_hat))
        } else {
            (self.u_tendency(f_hat, &st.u), None)
        };
        let diag = diag_time.map(|time| {
            let f = f_hat.as_ref().expect("diagnostics need the physical fields");
            self.point_diagnostics(time, st, &phys, &grads, f)
        });
        Ok(EvalOut {
            tend: Stage {
                rho: d_rho,
                a: d_w,
                u: d_u,
            },
            f_hat,
            diag,
        })
    }

    fn point_diagnostics(
        &self,
        time: f64,
        st: &Stage,
        phys: &[&[f64]; 7],
        grads: &[Vec<f64>],
        f_hat: &[Arr; 3],
    ) -> PointDiagnostics {
        let g = &self.grid;
        let len = g.len();
        let mut rel_sq = 0.0;
        let (mut u_inf, mut w_inf, mut gu_inf, mut gw_inf, mut rel_inf, mut grel_inf) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for p in 0..len {
            let rho = phys[0][p].max(0.0);
            let mut r2 = 0.0;
            let mut u2 = 0.0;
            let mut w2 = 0.0;
            for i in 0..3 {
                let d = phys[1 + i][p] - phys[4 + i][p];
                r2 += d * d;
                u2 += phys[4 + i][p].powi(2);
                w2 += phys[1 + i][p].powi(2);
            }
            rel_sq += rho * r2;
            let (mut gw2, mut gu2, mut gr2) = (0.0, 0.0, 0.0);
            for e in 0..9 {
                let a = grads[e][p];
                let b = grads[9 + e][p];
                gw2 += a * a;
                gu2 += b * b;
                gr2 += (a - b) * (a - b);
            }
            u_inf = u_inf.max(u2);
            w_inf = w_inf.max(w2);
            rel_inf = rel_inf.max(r2);
            gw_inf = gw_inf.max(gw2);
            gu_inf = gu_inf.max(gu2);
            grel_inf = grel_inf.max(gr2);
        }
        rel_sq *= g.cell_volume();
        let u_spec: Vec<Vec<Complex64>> = st.u.to_vec();
        let grad_u_sq = spectral::gradient_energy(g, &u_spec);
        let parts = functionals::stokes_parts(g, &st.u, f_hat);
        PointDiagnostics {
            time,
            d0: rel_sq + grad_u_sq,
            grad_u_sq,
            u_inf: u_inf.sqrt(),
            w_inf: w_inf.sqrt(),
            grad_u_inf: gu_inf.sqrt(),
            grad_w_inf: gw_inf.sqrt(),
            rel_inf: rel_inf.sqrt(),
            grad_rel_inf: grel_inf.sqrt(),
            d1_tilde: functionals::d1_tilde_from_parts(rel_sq, &parts, self.r),
        }
    }

    fn eval_conservative(&self, st: &Stage, phys: Option<&[&[f64]; 7]>) -> Result<Stage> {
        let g = &self.grid;
        let len = g.len();
        let owned;
        let phys: [&[f64]; 7] = match phys {
            Some(p) => *p,
            None => {
                let arrays: Vec<&[Complex64]> = st.arrays().iter().map(|a| a.as_slice()).collect();
                owned = spectral::inverse_arrays(g, &arrays);
                [0, 1, 2, 3, 4, 5, 6].map(|i| owned[i].as_slice())
            }
        };
        self.check_floor(phys[0])?;
        let dspec: Vec<(&[Complex64], usize)> = (0..9).map(|e| (st.u[e / 3].as_slice(), e % 3)).collect();
        let gu = spectral::inverse_derivatives(g, &dspec);

        const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        let mut prod = vec![vec![0.0; len]; 12];
        for p in 0..len {
            let rho = phys[0][p];
            let m = [phys[1][p], phys[2][p], phys[3][p]];
            let u = [phys[4][p], phys[5][p], phys[6][p]];
            let w = m.map(|mi| mi / rho);
            for (e, &(i, j)) in PAIRS.iter().enumerate() {
                prod[e][p] = m[i] * w[j];
            }
            for i in 0..3 {
                let exchange = m[i] - rho * u[i];
                prod[6 + i][p] = -(u[0] * gu[3 * i][p] + u[1] * gu[3 * i + 1][p] + u[2] * gu[3 * i + 2][p]) + exchange;
                prod[9 + i][p] = exchange;
            }
        }
        let refs: Vec<&[f64]> = prod.iter().map(|a| a.as_slice()).collect();
        let mut hat = spectral::forward_arrays_masked(g, &refs, &self.mask);
        drop(prod);

        let mut d_rho = vec![Complex64::default(); len];
        spectral::divergence_into(g, [&st.a[0], &st.a[1], &st.a[2]], &mut d_rho);
        d_rho.iter_mut().for_each(|z| *z = -*z);
        let flux = |i: usize, j: usize| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            PAIRS.iter().position(|&q| q == (a, b)).unwrap()
        };
        let d_m = [0, 1, 2].map(|i| {
            let mut div = vec![Complex64::default(); len];
            spectral::divergence_into(g, [&hat[flux(i, 0)], &hat[flux(i, 1)], &hat[flux(i, 2)]], &mut div);
            div.iter().zip(&hat[9 + i]).map(|(d, e)| -d - e).collect::<Arr>()
        });
        hat.truncate(9);
        let f2 = hat.pop().expect("nine spectra");
        let f1 = hat.pop().expect("nine spectra");
        let f0 = hat.pop().expect("nine spectra");
        let d_u = self.u_tendency([f0, f1, f2], &st.u);
        Ok(Stage {
            rho: d_rho,
            a: d_m,
            u: d_u,
        })
    }
}

fn stage_of(state: &FluidState) -> Stage {
    Stage {
        rho: state.rho_hat().coeffs(0).to_vec(),
        a: [0, 1, 2].map(|i| state.w_hat().coeffs(i).to_vec()),
        u: [0, 1, 2].map(|i| state.u_hat().coeffs(i).to_vec()),
    }
}

fn check_finite(rho: &Field, w: &Field, u: &Field, time: f64) -> Result<()> {
    for (field, f) in [("rho", rho), ("w", w), ("u", u)] {
        if !f.all_finite() {
            return Err(Error::NonFinite { field, time });
        }
    }
    Ok(())
}

/// Right-hand sides of the three equations at one state.
#[derive(Clone, Debug)]
pub struct TimeDerivatives {
    pub rho_t: SpectralField,
    /// u − w − (w·∇)w.
    pub w_t: SpectralField,
    /// Δu + P(−(u·∇)u + ρ(w−u)).
    pub u_t: SpectralField,
    /// P(−(u·∇)u + ρ(w−u)), dealiased.
    pub u_forcing: SpectralField,
    /// −(u·∇)u + ρ(w−u), dealiased, before projection.
    pub f_hat: SpectralField,
}

fn raw_eval(state: &FluidState) -> Result<EvalOut> {
    let stepper = Stepper::new(state.grid(), StepScheme::default(), 1.0, f64::INFINITY, 0.0, 1.0)?;
    let st = stage_of(state);
    stepper.eval_nonconservative(&st, Some(&state.arrays()), None)
}

pub fn time_derivatives(state: &FluidState) -> Result<TimeDerivatives> {
    let g = state.grid();
    let out = raw_eval(state)?;
    let ksq = g.k_sq();
    let uh = state.u_hat();
    let u_t: Vec<Arr> = (0..3)
        .map(|i| out.tend.u[i].iter().zip(uh.coeffs(i)).enumerate().map(|(p, (f, u))| f - ksq[p] * u).collect())
        .collect();
    Ok(TimeDerivatives {
        rho_t: SpectralField::new(g, vec![out.tend.rho])?,
        w_t: SpectralField::new(g, out.tend.a.to_vec())?,
        u_t: SpectralField::new(g, u_t)?,
        u_forcing: SpectralField::new(g, out.tend.u.to_vec())?,
        f_hat: SpectralField::new(g, out.f_hat.expect("physical fields given").to_vec())?,
    })
}

/// −div(ρw), dealiased product.
pub fn rhs_density(state: &FluidState) -> Result<Field> {
    Ok(spectral::inverse_unchecked(&time_derivatives(state)?.rho_t))
}

/// −(w·∇)w + (u − w).
pub fn rhs_euler_velocity(state: &FluidState) -> Result<Field> {
    Ok(spectral::inverse_unchecked(&time_derivatives(state)?.w_t))
}

/// Leray-projected advection and drag, diffusion excluded, with the pressure.
pub fn rhs_ns_velocity(state: &FluidState) -> Result<(Field, Field)> {
    let td = time_derivatives(state)?;
    let p = pressure_from_forcing(&td.f_hat);
    Ok((spectral::inverse_unchecked(&td.u_forcing), p))
}

/// Zero-mean pressure solving −ΔP = div((u·∇)u − ρ(w−u)).
pub fn pressure(state: &FluidState) -> Field {
    match time_derivatives(state) {
        Ok(td) => pressure_from_forcing(&td.f_hat),
        Err(_) => Field::zeros(state.grid(), 1),
    }
}

fn pressure_from_forcing(f_hat: &SpectralField) -> Field {
    let g = f_hat.grid();
    let n = g.n();
    let kd = g.derivative_wavenumbers();
    let mut p = vec![Complex64::default(); g.len()];
    for (idx, z) in p.iter_mut().enumerate() {
        let k = [kd[idx % n], kd[(idx / n) % n], kd[idx / (n * n)]];
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 > 0.0 {
            let dot = k[0] * f_hat.coeffs(0)[idx] + k[1] * f_hat.coeffs(1)[idx] + k[2] * f_hat.coeffs(2)[idx];
            *z = Complex64::new(0.0, -1.0) * dot / k2;
        }
    }
    spectral::inverse_unchecked(&SpectralField::new(g, vec![p]).expect("scalar"))
}

/// One step with the given scheme (builds a throwaway [`Stepper`]).
pub fn step(state: &FluidState, dt: f64, scheme: StepScheme) -> Result<FluidState> {
    let stepper = Stepper::new(state.grid(), scheme, dt, 0.5, 0.0, 1.0)?;
    Ok(stepper.step(state)?.0)
}

/// One conservative-form step with the default floor (1e−6·max ρ).
pub fn step_conservative(state: &FluidState, dt: f64) -> Result<FluidState> {
    let floor = 1e-6 * state.rho().max_value();
    let scheme = StepScheme::new(Scheme::Conservative, 2, true)?;
    Stepper::new(state.grid(), scheme, dt, 0.5, floor, 1.0)?.step_conservative(state)
}

/// A run in progress: current state, step counter, ledger and running integrals.
pub struct Simulation {
    config: RunConfig,
    stepper: Stepper,
    state: FluidState,
    steps_done: usize,
    total_steps: usize,
    running: Running,
    prev_diag: Option<PointDiagnostics>,
    ledger: EnergyLedger,
    snapshots: Vec<FluidState>,
    r: f64,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutput {
    pub final_state: FluidState,
    pub ledger: EnergyLedger,
    /// Initial state, every `checkpoint_every` steps, and the final state.
    pub snapshots: Vec<FluidState>,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let state = make_initial(&config.init, &grid)?;
        Self::from_state(config, state)
    }

    /// Starts from an explicit state (e.g. a checkpoint); running integrals
    /// restart at zero and R is taken from this state's density.
    pub fn from_state(config: &RunConfig, state: FluidState) -> Result<Self> {
        config.validate()?;
        let grid = state.grid().clone();
        if grid.n() != config.n || grid.box_len() != config.box_len {
            return Err(Error::Shape("state grid does not match the run configuration".into()));
        }
        let report = validate(&state);
        if !report.is_clean() {
            log::warn!("initial state violations: {:?}", report.violations);
        }
        let rho_max = state.rho().max_value();
        let r = functionals::r_constant(state.rho());
        let scheme = StepScheme::new(config.scheme, config.order, config.integrating_factor)?;
        let stepper = Stepper::new(&grid, scheme, config.dt, config.cfl, config.rho_floor * rho_max, r)?;
        let running = Running::new(state.w().max_norm());
        let total_steps = config.steps()?;
        Ok(Simulation {
            config: config.clone(),
            stepper,
            snapshots: vec![state.clone()],
            state,
            steps_done: 0,
            total_steps,
            running,
            prev_diag: None,
            ledger: EnergyLedger::default(),
            r,
        })
    }

    /// Continues a run of `config` from a state saved mid-run. The step
    /// counter is recovered from the state's time, so ledger rows keep their
    /// original cadence; running integrals restart at zero.
    pub fn resume(config: &RunConfig, state: FluidState) -> Result<Self> {
        let done = state.time() / config.dt;
        let steps_done = done.round();
        if !(steps_done >= 0.0) || (done - steps_done).abs() > 1e-9 * steps_done.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "checkpoint time {} is not a whole number of steps dt = {}",
                state.time(),
                config.dt
            )));
        }
        let mut sim = Self::from_state(config, state)?;
        if steps_done as usize > sim.total_steps {
            return Err(Error::InvalidArgument(format!(
                "checkpoint time {} lies beyond t_end = {}",
                sim.state.time(),
                config.t_end
            )));
        }
        sim.steps_done = steps_done as usize;
        Ok(sim)
    }

    pub fn state(&self) -> &FluidState {
        &self.state
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    /// Running integrals up to the last state whose diagnostics are known.
    pub fn running(&self) -> &Running {
        &self.running
    }

    fn absorb(&mut self, state: &FluidState, diag: PointDiagnostics) -> Result<()> {
        if let Some(prev) = self.prev_diag {
            self.running.accumulate(&prev, &diag, &self.config.monitor);
        }
        self.prev_diag = Some(diag);
        if self.steps_done % self.config.cadence == 0 {
            let row = functionals::ledger_row(state, self.r, &self.config.monitor, &self.running)?;
            self.ledger.push(row)?;
        }
        Ok(())
    }

    /// Advances one step.
    pub fn advance(&mut self) -> Result<()> {
        let (next, diag) = self.stepper.step(&self.state)?;
        let current = std::mem::replace(&mut self.state, next);
        self.absorb(&current, diag)?;
        self.steps_done += 1;
        if self.config.checkpoint_every > 0 && self.steps_done % self.config.checkpoint_every == 0 {
            self.snapshots.push(self.state.clone());
        }
        Ok(())
    }

    /// Runs the remaining steps and closes the ledger.
    pub fn run_to_end(mut self) -> Result<RunOutput> {
        while self.steps_done < self.total_steps {
            self.advance()?;
        }
        self.finish()
    }

    /// Records the final state's diagnostics and returns the output.
    pub fn finish(mut self) -> Result<RunOutput> {
        let diag = self.stepper.diagnostics(&self.state)?;
        let state = self.state.clone();
        self.absorb(&state, diag)?;
        let last_is_snapshot = self.snapshots.last().map(|s| s.bit_eq(&state)).unwrap_or(false);
        if !last_is_snapshot {
            self.snapshots.push(state.clone());
        }
        Ok(RunOutput {
            final_state: state,
            ledger: self.ledger,
            snapshots: self.snapshots,
        })
    }

    /// Last recorded ledger row.
    pub fn last_row(&self) -> Option<&LedgerRow> {
        self.ledger.rows().last()
    }
}

/// Runs `config` from its generated initial data to `t_end`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    Simulation::new(config)?.run_to_end()
}
