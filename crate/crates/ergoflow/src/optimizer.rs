//! Finite-horizon ergodicity minimization.
//!
//! Outer loop: linearize the one-step flow map around the current
//! trajectory, solve the SOCP step subproblem for a coefficient update Δu,
//! apply it and re-integrate the true dynamics from the fixed starts (the
//! re-integrated trajectory is the new iterate, so flow-following and the
//! speed bound hold exactly at every iterate), and accept only decreases of
//! the metric, backtracking on the step size otherwise.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::advect::{self, StageRecord};
use crate::error::{Error, Result};
use crate::fem::{FemMatrices, SpectralBasis};
use crate::flow::FlowBasis;
use crate::geom::Point;
use crate::mesh::{InfoDistribution, TriMesh};
use crate::metric::{self, MetricSpec, SpectralCoeffs};
use crate::sampler::{self, CoefficientSchedule, Trajectory, SUBSTEPS};
use crate::socp::{self, SocpFailure, SocpSubproblem};

/// Maximum step-size halvings per outer iteration before giving up.
pub const MAX_BACKTRACKS: usize = 8;
/// Stop when the relative improvement over this many accepted iterations
/// falls below [`IMPROVEMENT_TOL`].
pub const STALL_WINDOW: usize = 5;
pub const IMPROVEMENT_TOL: f64 = 1e-6;

/// Full optimization instance. Borrowed pieces are immutable and shareable.
pub struct ErgodicProblem<'a> {
    pub mesh: &'a TriMesh,
    pub density: &'a InfoDistribution,
    pub flow: &'a FlowBasis,
    /// Natural-BC basis for the metric.
    pub basis: &'a SpectralBasis,
    pub fm: &'a FemMatrices,
    pub metric: MetricSpec,
    pub steps: usize,
    pub dt: f64,
    pub vmax: f64,
    /// Gradient step size η (reset on acceptance, halved on rejection).
    pub eta: f64,
    /// Field-change penalty κ.
    pub kappa: f64,
    pub max_outer: usize,
    pub socp_tolerance: f64,
}

impl ErgodicProblem<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || self.kappa < 0.0 || !(self.dt > 0.0) || self.steps < 2 {
            return Err(Error::InvalidArgument(
                "need eta > 0, kappa >= 0, dt > 0 and at least 2 steps".into(),
            ));
        }
        if !(self.vmax > 0.0) {
            return Err(Error::InvalidArgument("vmax must be > 0".into()));
        }
        Ok(())
    }
}

/// One descent trial: the metric after the trial, whether it was accepted,
/// the step size used, and the SOCP diagnostics.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub ergodicity: f64,
    pub accepted: bool,
    pub eta: f64,
    pub socp_iterations: usize,
    pub socp_primal_residual: f64,
    pub socp_dual_residual: f64,
    pub wall_time: Duration,
}

/// One-step flow map and its Jacobians at (x, u).
///
/// f is the sampler's RK4 step (same code path, bit for bit). Fields are
/// piecewise constant, so ∂f/∂x = I; ∂f/∂u accumulates the per-stage basis
/// columns through the RK4 weights, including the speed-clamp Jacobian
/// vmax/|w| (I − ŵŵᵀ) on clamped stages.
pub fn linearize_dynamics(
    mesh: &TriMesh,
    flow: &FlowBasis,
    x: Point,
    u_row: &[f64],
    dt: f64,
    vmax: f64,
) -> Result<(Point, DMatrix<f64>, DMatrix<f64>)> {
    if u_row.len() != flow.n_fields {
        return Err(Error::SizeMismatch {
            expected: flow.n_fields,
            got: u_row.len(),
        });
    }
    let (tri0, _) = mesh
        .locate(x, None)
        .ok_or(Error::OutsideDomain(x[0], x[1]))?;
    let field = |t: usize| {
        let mut v = [0.0, 0.0];
        for (c, f) in u_row.iter().zip(&flow.velocities) {
            v[0] += c * f[t][0];
            v[1] += c * f[t][1];
        }
        v
    };

    let n = flow.n_fields;
    let h = dt / SUBSTEPS as f64;
    let mut dfdu = DMatrix::<f64>::zeros(2, n);
    let mut stages: Vec<StageRecord> = Vec::with_capacity(4);
    let (mut xc, mut tri) = (x, tri0);
    for _ in 0..SUBSTEPS {
        stages.clear();
        let (xn, tn) = advect::rk4_substep(mesh, &field, Some(vmax), xc, tri, h, Some(&mut stages))?;
        for stage in &stages {
            let cols = &flow.velocities;
            let scale = stage.scale;
            if stage.clamped {
                let w = stage.raw_velocity;
                let speed = (w[0] * w[0] + w[1] * w[1]).sqrt();
                let unit = [w[0] / speed, w[1] / speed];
                // C = vmax/|w| (I − ŵŵᵀ)
                let c = [
                    [
                        vmax / speed * (1.0 - unit[0] * unit[0]),
                        vmax / speed * (-unit[0] * unit[1]),
                    ],
                    [
                        vmax / speed * (-unit[1] * unit[0]),
                        vmax / speed * (1.0 - unit[1] * unit[1]),
                    ],
                ];
                for i in 0..n {
                    let b = cols[i][stage.triangle];
                    dfdu[(0, i)] += scale * (c[0][0] * b[0] + c[0][1] * b[1]);
                    dfdu[(1, i)] += scale * (c[1][0] * b[0] + c[1][1] * b[1]);
                }
            } else {
                for i in 0..n {
                    let b = cols[i][stage.triangle];
                    dfdu[(0, i)] += scale * b[0];
                    dfdu[(1, i)] += scale * b[1];
                }
            }
        }
        xc = xn;
        tri = tn;
    }
    Ok((xc, DMatrix::identity(2, 2), dfdu))
}

/// Integrate the per-step coefficient rows from the given starts. Identical
/// arithmetic to [`sampler::integrate`] with the rows as schedule.
fn integrate_rows(
    problem: &ErgodicProblem,
    starts: &[Point],
    rows: &[Vec<f64>],
) -> Result<Trajectory> {
    let schedule = CoefficientSchedule {
        switch_times: (0..rows.len()).map(|t| t as f64 * problem.dt).collect(),
        rows: rows.to_vec(),
        seed: None,
    };
    sampler::integrate(
        problem.mesh,
        problem.flow,
        &schedule,
        starts,
        problem.dt,
        problem.vmax,
        problem.steps as f64 * problem.dt,
    )
}

fn evaluate_metric(problem: &ErgodicProblem, traj: &Trajectory, xi_hat: &[f64]) -> Result<(f64, SpectralCoeffs)> {
    let xi = metric::trajectory_coefficients(
        &traj.states,
        problem.basis,
        problem.mesh,
        problem.metric.k_trunc,
    )?;
    let coeffs = SpectralCoeffs {
        xi,
        xi_hat: xi_hat.to_vec(),
    };
    Ok((metric::ergodicity(&coeffs, &problem.metric), coeffs))
}

/// Minimize the ergodic metric starting from a sampled trajectory.
///
/// Returns the best trajectory found and one report row per trial. The
/// accepted-E sequence is strictly decreasing by construction.
pub fn descend(
    problem: &ErgodicProblem,
    initial: &Trajectory,
) -> Result<(Trajectory, Vec<IterationReport>)> {
    problem.validate()?;
    if initial.num_states() != problem.steps + 1 {
        return Err(Error::SizeMismatch {
            expected: problem.steps + 1,
            got: initial.num_states(),
        });
    }
    let agents = initial.num_agents();
    let starts: Vec<Point> = initial.states.iter().map(|s| s[0]).collect();

    let xi_hat = metric::map_coefficients(
        problem.density,
        problem.basis,
        problem.fm,
        problem.metric.k_trunc,
    )?;

    // Per-step rows; re-integration makes the iterate dynamically consistent.
    let mut rows = initial
        .schedule
        .refine_per_step(problem.dt, problem.steps)
        .rows;
    let mut current = integrate_rows(problem, &starts, &rows)?;
    let (mut current_e, mut current_coeffs) = evaluate_metric(problem, &current, &xi_hat)?;

    let mut reports = Vec::new();
    let mut accepted_history = vec![current_e];

    'outer: for _ in 0..problem.max_outer {
        let grad = metric::ergodicity_gradient(
            &current.states,
            problem.basis,
            &problem.metric,
            &current_coeffs,
            problem.mesh,
        )?;
        let grad_norm: f64 = grad
            .iter()
            .flat_map(|a| a.iter())
            .map(|g| g[0] * g[0] + g[1] * g[1])
            .sum::<f64>()
            .sqrt();
        if grad_norm < 1e-14 {
            break; // stationary point
        }

        // Linearized dynamics and cone offsets are shared by all trials.
        let t_steps = problem.steps;
        let m = 2 * agents;
        let mut b = Vec::with_capacity(t_steps);
        let mut cone_offset = Vec::with_capacity(t_steps);
        for t in 0..t_steps {
            let mut bt = DMatrix::<f64>::zeros(m, problem.flow.n_fields);
            let mut off = DVector::<f64>::zeros(m);
            for a in 0..agents {
                let (_, _, dfdu) = linearize_dynamics(
                    problem.mesh,
                    problem.flow,
                    current.states[a][t],
                    &rows[t],
                    problem.dt,
                    problem.vmax,
                )?;
                bt.view_mut((2 * a, 0), (2, problem.flow.n_fields))
                    .copy_from(&dfdu);
                off[2 * a] = current.states[a][t + 1][0] - current.states[a][t][0];
                off[2 * a + 1] = current.states[a][t + 1][1] - current.states[a][t][1];
            }
            b.push(bt);
            cone_offset.push(off);
        }
        let zeros = vec![DVector::<f64>::zeros(m); t_steps];

        let mut eta = problem.eta;
        let mut accepted = false;
        for _trial in 0..=MAX_BACKTRACKS {
            let started = Instant::now();
            // Target is the descent step −η∇E for states 1..=T.
            let dx_target: Vec<DVector<f64>> = (1..=t_steps)
                .map(|t| {
                    let mut g = DVector::<f64>::zeros(m);
                    for a in 0..agents {
                        g[2 * a] = -eta * grad[a][t][0];
                        g[2 * a + 1] = -eta * grad[a][t][1];
                    }
                    g
                })
                .collect();
            let sub = SocpSubproblem {
                n_fields: problem.flow.n_fields,
                agents,
                steps: t_steps,
                kappa: problem.kappa,
                radius: Some(problem.vmax * problem.dt),
                b: b.clone(),
                dx_target,
                h: zeros.clone(),
                cone_offset: cone_offset.clone(),
            };
            let solution = match socp::solve_socp(&sub, problem.socp_tolerance) {
                Ok(sol) => sol,
                Err(SocpFailure::NotConverged { best }) => {
                    // Skip this trial with a halved step, per the spec.
                    reports.push(IterationReport {
                        ergodicity: current_e,
                        accepted: false,
                        eta,
                        socp_iterations: best.iterations,
                        socp_primal_residual: best.primal_residual,
                        socp_dual_residual: best.dual_residual,
                        wall_time: started.elapsed(),
                    });
                    eta *= 0.5;
                    continue;
                }
                Err(SocpFailure::Invalid(e)) => return Err(e),
            };

            let mut new_rows = rows.clone();
            for (row, du) in new_rows.iter_mut().zip(&solution.du) {
                for (c, d) in row.iter_mut().zip(du.iter()) {
                    *c += d;
                }
            }
            let candidate = integrate_rows(problem, &starts, &new_rows)?;
            let (cand_e, cand_coeffs) = evaluate_metric(problem, &candidate, &xi_hat)?;

            let improved = cand_e < current_e;
            reports.push(IterationReport {
                ergodicity: if improved { cand_e } else { current_e },
                accepted: improved,
                eta,
                socp_iterations: solution.iterations,
                socp_primal_residual: solution.primal_residual,
                socp_dual_residual: solution.dual_residual,
                wall_time: started.elapsed(),
            });
            if improved {
                rows = new_rows;
                current = candidate;
                current_e = cand_e;
                current_coeffs = cand_coeffs;
                accepted_history.push(current_e);
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break 'outer;
        }
        if accepted_history.len() > STALL_WINDOW {
            let prev = accepted_history[accepted_history.len() - 1 - STALL_WINDOW];
            if (prev - current_e) < IMPROVEMENT_TOL * prev.abs().max(1e-300) {
                break;
            }
        }
    }
    Ok((current, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, solve_eigenbasis, BoundaryCondition};
    use crate::mesh::{generate_map, DistSpec, MapSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    struct World {
        mesh: TriMesh,
        fm: FemMatrices,
        natural: SpectralBasis,
        p: InfoDistribution,
        flow: FlowBasis,
    }

    fn world(h: f64, n_fields: usize, k_nat: usize) -> World {
        let mesh = generate_map(&MapSpec::square(1.0, h)).unwrap();
        let fm = assemble(&mesh).unwrap();
        let dirichlet = solve_eigenbasis(&mesh, &fm, BoundaryCondition::Dirichlet, n_fields).unwrap();
        let natural = solve_eigenbasis(&mesh, &fm, BoundaryCondition::Natural, k_nat).unwrap();
        let p = InfoDistribution::build(&mesh, DistSpec::Uniform).unwrap();
        let flow = crate::flow::build_flow_basis(&mesh, &dirichlet, &p, n_fields).unwrap();
        World {
            mesh,
            fm,
            natural,
            p,
            flow,
        }
    }

    #[test]
    fn zero_coefficients_linearization() {
        let w = world(0.1, 4, 8);
        let x = [0.40, 0.35];
        let dt = 0.01;
        let (f, dfdx, dfdu) =
            linearize_dynamics(&w.mesh, &w.flow, x, &[0.0; 4], dt, 1.0).unwrap();
        assert_eq!(f, x);
        assert_eq!(dfdx, DMatrix::identity(2, 2));
        // At zero coefficients all stages sit at x, so ∂f/∂u = dt · [v_i(x)].
        let (tri, _) = w.mesh.locate(x, None).unwrap();
        for i in 0..4 {
            let v = w.flow.velocities[i][tri];
            assert!((dfdu[(0, i)] - dt * v[0]).abs() < 1e-14);
            assert!((dfdu[(1, i)] - dt * v[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn linearization_matches_one_integrate_step() {
        let w = world(0.1, 6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let row: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = [0.55, 0.3];
        let dt = 0.01;
        let (f, _, _) = linearize_dynamics(&w.mesh, &w.flow, x, &row, dt, 1.0).unwrap();
        let schedule = CoefficientSchedule {
            switch_times: vec![0.0],
            rows: vec![row],
            seed: None,
        };
        let traj = sampler::integrate(&w.mesh, &w.flow, &schedule, &[x], dt, 1.0, dt).unwrap();
        assert_eq!(traj.states[0][1], f, "shared implementation must agree bitwise");
    }

    #[test]
    fn control_jacobian_matches_finite_differences() {
        let w = world(0.1, 6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let row: Vec<f64> = (0..6).map(|_| rng.random_range(-0.6..0.6)).collect();
            let x = [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)];
            let dt = 0.01;
            let (_, _, dfdu) = linearize_dynamics(&w.mesh, &w.flow, x, &row, dt, 1.0).unwrap();
            let eps = 1e-6;
            // Near-zero entries need a floor at the Jacobian's scale: the
            // field is only piecewise smooth, so a perturbed stage can cross
            // a triangle edge and leave a kink far below matrix scale.
            let scale = dfdu.amax();
            for i in 0..6 {
                let mut up = row.clone();
                up[i] += eps;
                let mut dn = row.clone();
                dn[i] -= eps;
                let (fu, _, _) = linearize_dynamics(&w.mesh, &w.flow, x, &up, dt, 1.0).unwrap();
                let (fd, _, _) = linearize_dynamics(&w.mesh, &w.flow, x, &dn, dt, 1.0).unwrap();
                for d in 0..2 {
                    let fdiff = (fu[d] - fd[d]) / (2.0 * eps);
                    let an = dfdu[(d, i)];
                    let denom = fdiff.abs().max(an.abs()).max(1e-3 * scale);
                    assert!(
                        (fdiff - an).abs() / denom < 1e-5,
                        "du[{i}] dim {d}: fd {fdiff:e} vs {an:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn descend_reduces_the_metric() {
        let w = world(0.1, 8, 30);
        let metric_spec = MetricSpec::new(&w.natural, 30).unwrap();
        let problem = ErgodicProblem {
            mesh: &w.mesh,
            density: &w.p,
            flow: &w.flow,
            basis: &w.natural,
            fm: &w.fm,
            metric: metric_spec,
            steps: 100,
            dt: 0.01,
            vmax: 1.0,
            eta: 0.1,
            kappa: 1e-3,
            max_outer: 12,
            socp_tolerance: 1e-7,
        };
        let schedule = sampler::sample_schedule(8, 1.0, 0.5, 5).unwrap();
        let seed_traj =
            sampler::integrate(&w.mesh, &w.flow, &schedule, &[[0.3, 0.3]], 0.01, 1.0, 1.0).unwrap();
        let xi_hat = metric::map_coefficients(&w.p, &w.natural, &w.fm, 30).unwrap();
        let (seed_e, _) = evaluate_metric(&problem, &seed_traj, &xi_hat).unwrap();

        let (optimized, reports) = descend(&problem, &seed_traj).unwrap();
        let (final_e, _) = evaluate_metric(&problem, &optimized, &xi_hat).unwrap();
        assert!(final_e < seed_e, "E {seed_e} -> {final_e}");
        optimized.validate(&w.mesh).unwrap();

        // Accepted-E sequence strictly decreasing.
        let accepted: Vec<f64> = reports
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.ergodicity)
            .collect();
        assert!(!accepted.is_empty());
        for w in accepted.windows(2) {
            assert!(w[1] < w[0], "accepted E not strictly decreasing: {accepted:?}");
        }
    }

    #[test]
    fn stationary_input_returns_unchanged() {
        let w = world(0.2, 4, 6);
        // A metric spec with k_trunc = 1 only sees the constant mode, whose
        // gradient is identically zero: every trajectory is stationary.
        let metric_spec = MetricSpec::new(&w.natural, 1).unwrap();
        let problem = ErgodicProblem {
            mesh: &w.mesh,
            density: &w.p,
            flow: &w.flow,
            basis: &w.natural,
            fm: &w.fm,
            metric: metric_spec,
            steps: 10,
            dt: 0.01,
            vmax: 1.0,
            eta: 0.1,
            kappa: 1e-3,
            max_outer: 5,
            socp_tolerance: 1e-7,
        };
        let schedule = sampler::sample_schedule(4, 0.1, 0.05, 2).unwrap();
        let seed_traj =
            sampler::integrate(&w.mesh, &w.flow, &schedule, &[[0.5, 0.5]], 0.01, 1.0, 0.1).unwrap();
        let (optimized, reports) = descend(&problem, &seed_traj).unwrap();
        assert_eq!(optimized.states, seed_traj.states);
        assert_eq!(reports.iter().filter(|r| r.accepted).count(), 0);
    }

    #[test]
    fn reintegration_reproduces_returned_trajectory() {
        let w = world(0.1, 6, 20);
        let metric_spec = MetricSpec::new(&w.natural, 20).unwrap();
        let problem = ErgodicProblem {
            mesh: &w.mesh,
            density: &w.p,
            flow: &w.flow,
            basis: &w.natural,
            fm: &w.fm,
            metric: metric_spec,
            steps: 50,
            dt: 0.01,
            vmax: 1.0,
            eta: 0.1,
            kappa: 1e-3,
            max_outer: 4,
            socp_tolerance: 1e-7,
        };
        let schedule = sampler::sample_schedule(6, 0.5, 0.25, 8).unwrap();
        let seed_traj =
            sampler::integrate(&w.mesh, &w.flow, &schedule, &[[0.4, 0.6]], 0.01, 1.0, 0.5).unwrap();
        let (optimized, _) = descend(&problem, &seed_traj).unwrap();
        let starts: Vec<Point> = optimized.states.iter().map(|s| s[0]).collect();
        let re = sampler::integrate(
            &w.mesh,
            &w.flow,
            &optimized.schedule,
            &starts,
            optimized.dt,
            optimized.vmax,
            optimized.horizon(),
        )
        .unwrap();
        let mut rms = 0.0;
        let mut count = 0;
        for (a, b) in optimized.states.iter().zip(&re.states) {
            for (x, y) in a.iter().zip(b) {
                rms += (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                count += 1;
            }
        }
        let rms = (rms / count as f64).sqrt();
        assert!(rms < 1e-9, "flow-following RMS {rms:e}");
    }
}
