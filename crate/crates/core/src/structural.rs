//! Linear shear-building models and their response to ground motion.
//!
//! The equation of motion is `M ẍ + C ẋ + K x = P(t)` with `x(0) = ẋ(0) = 0`,
//! where `M` is the diagonal floor-mass matrix, `K` the tridiagonal shear-frame
//! stiffness and `C = a0·M + a1·K` Rayleigh damping. Two solvers are provided:
//! direct Newmark-β integration of the coupled system and modal superposition,
//! which integrates the decoupled single-degree-of-freedom modal equations with
//! the same Newmark recursion and maps back through the mode shapes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// N-story linear shear frame with lumped floor masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearBuildingModel {
    pub n_floors: usize,
    /// Floor masses (kg), ground floor first.
    pub masses: Vec<f64>,
    /// Story stiffnesses (N/m); `stiffnesses[i]` connects floor `i` to the one below.
    pub stiffnesses: Vec<f64>,
    /// Mass-proportional damping coefficient (1/s).
    pub rayleigh_a0: f64,
    /// Stiffness-proportional damping coefficient (s).
    pub rayleigh_a1: f64,
}

pub fn build_shear_building(
    n_floors: usize,
    masses: &[f64],
    stiffnesses: &[f64],
    a0: f64,
    a1: f64,
) -> Result<ShearBuildingModel> {
    if n_floors == 0 {
        return Err(Error::invalid("a building needs at least one floor"));
    }
    for (what, list) in [("masses", masses), ("stiffnesses", stiffnesses)] {
        if list.len() != n_floors {
            return Err(Error::LengthMismatch {
                what,
                expected: n_floors,
                actual: list.len(),
            });
        }
        if let Some(bad) = list.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!("{what} must be positive, got {bad}")));
        }
    }
    if !(a0.is_finite() && a0 >= 0.0 && a1.is_finite() && a1 >= 0.0) {
        return Err(Error::invalid(format!(
            "Rayleigh coefficients must be non-negative, got a0={a0}, a1={a1}"
        )));
    }
    Ok(ShearBuildingModel {
        n_floors,
        masses: masses.to_vec(),
        stiffnesses: stiffnesses.to_vec(),
        rayleigh_a0: a0,
        rayleigh_a1: a1,
    })
}

impl ShearBuildingModel {
    /// Uniform building with Rayleigh damping fitted to `zeta` on the first two
    /// modes (only the first mode for a single story, mass-proportional).
    pub fn uniform(n_floors: usize, mass: f64, stiffness: f64, zeta: f64) -> Result<Self> {
        let undamped = build_shear_building(
            n_floors,
            &vec![mass; n_floors],
            &vec![stiffness; n_floors],
            0.0,
            0.0,
        )?;
        let basis = modal_analysis(&undamped, None)?;
        let (a0, a1) = if n_floors == 1 {
            (2.0 * zeta * basis.frequencies[0], 0.0)
        } else {
            rayleigh_coefficients(
                basis.frequencies[0],
                basis.frequencies[1],
                zeta,
                zeta,
            )?
        };
        build_shear_building(n_floors, &undamped.masses, &undamped.stiffnesses, a0, a1)
    }

    /// The desk-scale reference building: 8 stories, 2.0e5 kg floors,
    /// 2.5e8 N/m stories, 2 % damping on the first two modes.
    pub fn desk_default() -> Self {
        Self::uniform(8, 2.0e5, 2.5e8, 0.02).expect("reference building is valid")
    }

    pub fn mass_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.masses))
    }

    pub fn stiffness_matrix(&self) -> DMatrix<f64> {
        let n = self.n_floors;
        let k = &self.stiffnesses;
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            let above = if i + 1 < n { k[i + 1] } else { 0.0 };
            out[(i, i)] = k[i] + above;
            if i + 1 < n {
                out[(i, i + 1)] = -k[i + 1];
                out[(i + 1, i)] = -k[i + 1];
            }
        }
        out
    }

    pub fn damping_matrix(&self) -> DMatrix<f64> {
        self.mass_matrix() * self.rayleigh_a0 + self.stiffness_matrix() * self.rayleigh_a1
    }

    /// Modal damping ratio implied by the Rayleigh coefficients at `omega`.
    pub fn rayleigh_ratio(&self, omega: f64) -> f64 {
        self.rayleigh_a0 / (2.0 * omega) + self.rayleigh_a1 * omega / 2.0
    }
}

/// Solves `ζᵢ = a0/(2ωᵢ) + a1·ωᵢ/2` for two modes.
pub fn rayleigh_coefficients(omega_i: f64, omega_j: f64, zeta_i: f64, zeta_j: f64) -> Result<(f64, f64)> {
    if (omega_i - omega_j).abs() < 1e-12 * omega_i.abs().max(1.0) {
        return Err(Error::invalid("Rayleigh fit needs two distinct frequencies"));
    }
    let det = omega_j / omega_i - omega_i / omega_j;
    let a0 = 2.0 * (zeta_i * omega_j - zeta_j * omega_i) / det;
    let a1 = 2.0 * (zeta_j / omega_i - zeta_i / omega_j) / det;
    Ok((a0, a1))
}

/// Mass-normalized vibration modes, ascending in frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalBasis {
    /// Natural angular frequencies ωₙ (rad/s).
    pub frequencies: Vec<f64>,
    /// `shapes[n]` is φₙ with `φₙᵀ M φₙ = 1`.
    pub shapes: Vec<Vec<f64>>,
    pub damping_ratios: Vec<f64>,
}

/// Generalized eigenproblem `K φ = ω² M φ`.
///
/// With `zeta = None` each mode gets the damping ratio implied by the model's
/// Rayleigh coefficients, which makes modal superposition an exact change of
/// coordinates; explicit ratios override that.
pub fn modal_analysis(model: &ShearBuildingModel, zeta: Option<&[f64]>) -> Result<ModalBasis> {
    let n = model.n_floors;
    if let Some(z) = zeta {
        if z.len() != n {
            return Err(Error::LengthMismatch {
                what: "modal damping ratios",
                expected: n,
                actual: z.len(),
            });
        }
        if let Some(bad) = z.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
            return Err(Error::invalid(format!("damping ratio {bad} outside [0, 1)")));
        }
    }
    let inv_sqrt_m: Vec<f64> = model.masses.iter().map(|m| 1.0 / m.sqrt()).collect();
    let k = model.stiffness_matrix();
    let a = DMatrix::from_fn(n, n, |i, j| inv_sqrt_m[i] * k[(i, j)] * inv_sqrt_m[j]);
    let eig = SymmetricEigen::try_new(a, 1e-15, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric eigen-solver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut frequencies = Vec::with_capacity(n);
    let mut shapes = Vec::with_capacity(n);
    for &idx in &order {
        let lambda = eig.eigenvalues[idx];
        if !(lambda > 0.0) {
            return Err(Error::EigenFailure(format!(
                "non-positive eigenvalue {lambda}; stiffness is not positive definite"
            )));
        }
        let mut phi: Vec<f64> = (0..n)
            .map(|i| eig.eigenvectors[(i, idx)] * inv_sqrt_m[i])
            .collect();
        // Fix the sign so the roof moves in the positive direction.
        if phi[n - 1] < 0.0 {
            phi.iter_mut().for_each(|v| *v = -*v);
        }
        frequencies.push(lambda.sqrt());
        shapes.push(phi);
    }
    let damping_ratios = match zeta {
        Some(z) => z.to_vec(),
        None => frequencies.iter().map(|&w| model.rayleigh_ratio(w)).collect(),
    };
    Ok(ModalBasis {
        frequencies,
        shapes,
        damping_ratios,
    })
}

impl ModalBasis {
    /// Largest relative residual `‖Kφ − ω²Mφ‖ / ‖Kφ‖` over all modes.
    pub fn eigen_residual(&self, model: &ShearBuildingModel) -> f64 {
        let k = model.stiffness_matrix();
        let m = model.mass_matrix();
        self.frequencies
            .iter()
            .zip(&self.shapes)
            .map(|(w, phi)| {
                let phi = DVector::from_column_slice(phi);
                let kphi = &k * &phi;
                let r = &kphi - (&m * &phi) * (w * w);
                r.norm() / kphi.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of `ΦᵀMΦ` from the identity.
    pub fn orthonormality_error(&self, model: &ShearBuildingModel) -> f64 {
        let mut worst = 0.0_f64;
        for (i, a) in self.shapes.iter().enumerate() {
            for (j, b) in self.shapes.iter().enumerate() {
                let dot: f64 = a
                    .iter()
                    .zip(b)
                    .zip(&model.masses)
                    .map(|((x, y), m)| x * m * y)
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
    pub dt: f64,
}

impl NewmarkParams {
    /// Constant average acceleration: β = 1/4, γ = 1/2.
    pub fn average_acceleration(dt: f64) -> Self {
        Self {
            beta: 0.25,
            gamma: 0.5,
            dt,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("Newmark dt must be positive, got {}", self.dt)));
        }
        // β = 0 is the explicit scheme, which this implicit formulation cannot express.
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::invalid(format!("Newmark beta must lie in (0, 0.5], got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("Newmark gamma must lie in [0, 1], got {}", self.gamma)));
        }
        Ok(())
    }

    /// Coefficients of the incremental recursion.
    fn coefficients(&self) -> NewmarkCoefficients {
        let (b, g, h) = (self.beta, self.gamma, self.dt);
        NewmarkCoefficients {
            m_disp: 1.0 / (b * h * h),
            m_vel: 1.0 / (b * h),
            m_acc: 1.0 / (2.0 * b) - 1.0,
            c_disp: g / (b * h),
            c_vel: g / b - 1.0,
            c_acc: h * (g / (2.0 * b) - 1.0),
            vel_prev_acc: h * (1.0 - g),
            vel_next_acc: h * g,
        }
    }
}

struct NewmarkCoefficients {
    m_disp: f64,
    m_vel: f64,
    m_acc: f64,
    c_disp: f64,
    c_vel: f64,
    c_acc: f64,
    vel_prev_acc: f64,
    vel_next_acc: f64,
}

/// Per-floor kinematics on a shared time grid; `displacements[floor][step]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseHistory {
    pub dt: f64,
    pub displacements: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub accelerations: Vec<Vec<f64>>,
}

impl ResponseHistory {
    pub fn n_steps(&self) -> usize {
        self.displacements.first().map_or(0, Vec::len)
    }

    pub fn floor(&self, index: usize) -> TimeSeries {
        TimeSeries {
            dt: self.dt,
            values: self.displacements[index].clone(),
        }
    }

    /// Relative L2 distance of displacements over all floors.
    pub fn relative_l2(&self, reference: &ResponseHistory) -> f64 {
        let a: Vec<f64> = self.displacements.iter().flatten().copied().collect();
        let b: Vec<f64> = reference.displacements.iter().flatten().copied().collect();
        crate::series::relative_l2_error(&a, &b)
    }

    /// `Σ wᵢ·historyᵢ` (valid because the equation of motion is linear).
    pub fn linear_combination(items: &[&ResponseHistory], weights: &[f64]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("linear combination of zero responses"))?;
        if items.len() != weights.len() {
            return Err(Error::LengthMismatch {
                what: "combination weights",
                expected: items.len(),
                actual: weights.len(),
            });
        }
        let shape = |h: &ResponseHistory| (h.displacements.len(), h.n_steps());
        let combine = |pick: fn(&ResponseHistory) -> &Vec<Vec<f64>>| {
            let mut out = vec![vec![0.0; first.n_steps()]; first.displacements.len()];
            for (h, &w) in items.iter().zip(weights) {
                for (acc, src) in out.iter_mut().zip(pick(h)) {
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += w * s;
                    }
                }
            }
            out
        };
        if items.iter().any(|h| shape(h) != shape(first)) {
            return Err(Error::invalid("responses in a combination must share shape"));
        }
        Ok(Self {
            dt: first.dt,
            displacements: combine(|h| &h.displacements),
            velocities: combine(|h| &h.velocities),
            accelerations: combine(|h| &h.accelerations),
        })
    }
}

fn check_load(model: &ShearBuildingModel, load: &[TimeSeries], dt: f64) -> Result<usize> {
    if load.len() != model.n_floors {
        return Err(Error::LengthMismatch {
            what: "per-floor loads",
            expected: model.n_floors,
            actual: load.len(),
        });
    }
    let steps = load[0].len();
    if steps == 0 {
        return Err(Error::invalid("load history is empty"));
    }
    for series in load {
        if series.len() != steps {
            return Err(Error::LengthMismatch {
                what: "load samples",
                expected: steps,
                actual: series.len(),
            });
        }
        if (series.dt - dt).abs() > 1e-9 * dt {
            return Err(Error::invalid(format!(
                "load sampled at dt={} but integrator uses dt={dt}",
                series.dt
            )));
        }
    }
    Ok(steps)
}

/// Direct Newmark-β integration of the coupled system from rest.
pub fn newmark_solve(
    model: &ShearBuildingModel,
    load: &[TimeSeries],
    params: NewmarkParams,
) -> Result<ResponseHistory> {
    params.validate()?;
    let steps = check_load(model, load, params.dt)?;
    let n = model.n_floors;
    let co = params.coefficients();
    let k = model.stiffness_matrix();
    let c = model.damping_matrix();
    let masses = &model.masses;

    let k_eff = &k + &c * co.c_disp + model.mass_matrix() * co.m_disp;
    let chol = k_eff.cholesky().ok_or_else(|| {
        Error::SingularSystem("effective stiffness is not positive definite".into())
    })?;

    let mut disp = vec![vec![0.0; steps]; n];
    let mut vel = vec![vec![0.0; steps]; n];
    let mut acc = vec![vec![0.0; steps]; n];

    // Starting from rest: M a₀ = P₀.
    let mut x = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    let mut a = DVector::from_fn(n, |i, _| load[i].values[0] / masses[i]);
    for i in 0..n {
        acc[i][0] = a[i];
    }

    let mut m_part = DVector::zeros(n);
    let mut c_part = DVector::zeros(n);
    for step in 1..steps {
        for i in 0..n {
            m_part[i] = masses[i] * (co.m_disp * x[i] + co.m_vel * v[i] + co.m_acc * a[i]);
            c_part[i] = co.c_disp * x[i] + co.c_vel * v[i] + co.c_acc * a[i];
        }
        let mut rhs = &c * &c_part + &m_part;
        for i in 0..n {
            rhs[i] += load[i].values[step];
        }
        let x_next = chol.solve(&rhs);
        for i in 0..n {
            let a_next = co.m_disp * (x_next[i] - x[i]) - co.m_vel * v[i] - co.m_acc * a[i];
            v[i] += co.vel_prev_acc * a[i] + co.vel_next_acc * a_next;
            a[i] = a_next;
            x[i] = x_next[i];
            disp[i][step] = x[i];
            vel[i][step] = v[i];
            acc[i][step] = a[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("Newmark displacement at step {step}")));
        }
    }
    Ok(ResponseHistory {
        dt: params.dt,
        displacements: disp,
        velocities: vel,
        accelerations: acc,
    })
}

/// Newmark recursion for `q̈ + 2ζω q̇ + ω² q = f(t)` from rest.
fn newmark_sdof(omega: f64, zeta: f64, force: &[f64], params: NewmarkParams) -> Result<[Vec<f64>; 3]> {
    let co = params.coefficients();
    let damping = 2.0 * zeta * omega;
    let k_eff = omega * omega + damping * co.c_disp + co.m_disp;
    if !(k_eff > 0.0) {
        return Err(Error::SingularSystem(format!("modal effective stiffness {k_eff}")));
    }
    let steps = force.len();
    let mut q = vec![0.0; steps];
    let mut qd = vec![0.0; steps];
    let mut qdd = vec![0.0; steps];
    let (mut x, mut v, mut a) = (0.0, 0.0, force[0]);
    qdd[0] = a;
    for step in 1..steps {
        let rhs = force[step]
            + co.m_disp * x
            + co.m_vel * v
            + co.m_acc * a
            + damping * (co.c_disp * x + co.c_vel * v + co.c_acc * a);
        let x_next = rhs / k_eff;
        let a_next = co.m_disp * (x_next - x) - co.m_vel * v - co.m_acc * a;
        v += co.vel_prev_acc * a + co.vel_next_acc * a_next;
        a = a_next;
        x = x_next;
        q[step] = x;
        qd[step] = v;
        qdd[step] = a;
    }
    Ok([q, qd, qdd])
}

/// Modal superposition over the first `n_modes` modes of `basis`.
pub fn modal_superposition_solve(
    model: &ShearBuildingModel,
    basis: &ModalBasis,
    n_modes: usize,
    load: &[TimeSeries],
    params: NewmarkParams,
) -> Result<ResponseHistory> {
    params.validate()?;
    if n_modes == 0 || n_modes > model.n_floors || n_modes > basis.frequencies.len() {
        return Err(Error::invalid(format!(
            "n_modes must lie in 1..={}, got {n_modes}",
            model.n_floors.min(basis.frequencies.len())
        )));
    }
    let steps = check_load(model, load, params.dt)?;
    let n = model.n_floors;
    let mut disp = vec![vec![0.0; steps]; n];
    let mut vel = vec![vec![0.0; steps]; n];
    let mut acc = vec![vec![0.0; steps]; n];

    for mode in 0..n_modes {
        let phi = &basis.shapes[mode];
        let force: Vec<f64> = (0..steps)
            .map(|s| (0..n).map(|i| phi[i] * load[i].values[s]).sum())
            .collect();
        let [q, qd, qdd] = newmark_sdof(
            basis.frequencies[mode],
            basis.damping_ratios[mode],
            &force,
            params,
        )?;
        for i in 0..n {
            for s in 0..steps {
                disp[i][s] += phi[i] * q[s];
                vel[i][s] += phi[i] * qd[s];
                acc[i][s] += phi[i] * qdd[s];
            }
        }
    }
    Ok(ResponseHistory {
        dt: params.dt,
        displacements: disp,
        velocities: vel,
        accelerations: acc,
    })
}

/// Effective earthquake load `P(t) = −M·1·ü_g(t)`.
pub fn ground_motion_load(model: &ShearBuildingModel, ground_accel: &TimeSeries) -> Result<Vec<TimeSeries>> {
    if ground_accel.is_empty() {
        return Err(Error::invalid("ground acceleration record is empty"));
    }
    if !(ground_accel.dt > 0.0) {
        return Err(Error::invalid("ground acceleration must have positive dt"));
    }
    Ok(model
        .masses
        .iter()
        .map(|m| ground_accel.scaled(-m))
        .collect())
}
