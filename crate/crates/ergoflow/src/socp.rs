//! SOCP step subproblem and its operator-splitting solver.
//!
//! One subproblem per descent iteration:
//!
//! ```text
//! min  Σ_{a,t} ‖target_a^t − Δx_a^t‖² + κ‖Δu‖²
//! s.t. Δx_a^0 = 0
//!      Δx_a^{t+1} = Δx_a^t + B_a^t Δu_t + h_a^t,          t = 0..T-1
//!      ‖offset_a^t + B_a^t Δu_t‖ ≤ radius,                t = 0..T-1
//! ```
//!
//! The equality chain is eliminated exactly, so the quadratic prox is an
//! affine-cost LQR sweep over the time chain (gain and cost-to-go matrices
//! factorized once per penalty value) and the cone prox is the closed-form
//! ball projection. ADMM alternates the two with over-relaxation and
//! residual balancing; equalities hold to machine precision at every
//! iterate and only the cones carry residuals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::Error;
use crate::geom::Point;

/// Iteration cap for the splitting loop.
pub const MAX_ITERATIONS: usize = 50_000;
/// Default absolute/relative tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;
const OVER_RELAXATION: f64 = 1.6;

/// Euclidean projection onto the ball of `radius` around `center`.
pub fn ball_projection(x: Point, center: Point, radius: f64) -> Point {
    let d = [x[0] - center[0], x[1] - center[1]];
    let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if n <= radius {
        x
    } else {
        let s = radius / n;
        [center[0] + d[0] * s, center[1] + d[1] * s]
    }
}

/// Quadratic-objective step subproblem over the linearized flow chain.
/// All per-step vectors stack the agents (length 2A, agent-major 2-blocks).
#[derive(Debug, Clone)]
pub struct SocpSubproblem {
    pub n_fields: usize,
    pub agents: usize,
    pub steps: usize,
    pub kappa: f64,
    /// Per-step speed-cone radius (vmax·dt); `None` disables the cones.
    pub radius: Option<f64>,
    /// Control Jacobians B̃_t (2A × n), one per step.
    pub b: Vec<DMatrix<f64>>,
    /// Δx targets for states t = 1..=T.
    pub dx_target: Vec<DVector<f64>>,
    /// Dynamics offsets h_t (zero for a dynamically consistent trajectory).
    pub h: Vec<DVector<f64>>,
    /// Cone offsets (current per-step displacements plus h).
    pub cone_offset: Vec<DVector<f64>>,
}

impl SocpSubproblem {
    fn validate(&self) -> Result<(), Error> {
        let (t, m, n) = (self.steps, 2 * self.agents, self.n_fields);
        if t == 0 || self.agents == 0 || n == 0 {
            return Err(Error::InvalidArgument(
                "subproblem needs at least one step, agent and field".into(),
            ));
        }
        if self.kappa < 0.0 || !self.kappa.is_finite() {
            return Err(Error::InvalidArgument("kappa must be finite and >= 0".into()));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument("cone radius must be > 0".into()));
            }
        }
        if self.b.len() != t
            || self.dx_target.len() != t
            || self.h.len() != t
            || self.cone_offset.len() != t
        {
            return Err(Error::SizeMismatch {
                expected: t,
                got: self.b.len(),
            });
        }
        for i in 0..t {
            if self.b[i].nrows() != m || self.b[i].ncols() != n {
                return Err(Error::InvalidArgument(format!("B[{i}] must be {m}x{n}")));
            }
            if self.dx_target[i].len() != m
                || self.h[i].len() != m
                || self.cone_offset[i].len() != m
            {
                return Err(Error::SizeMismatch {
                    expected: m,
                    got: self.dx_target[i].len(),
                });
            }
        }
        Ok(())
    }

    /// Σ‖target − ξ‖² + κ‖Δu‖² at a chain-consistent point.
    fn objective(&self, du: &[DVector<f64>], xi: &[DVector<f64>]) -> f64 {
        let mut obj = 0.0;
        for t in 0..self.steps {
            obj += (&self.dx_target[t] - &xi[t + 1]).norm_squared();
            obj += self.kappa * du[t].norm_squared();
        }
        obj
    }
}

/// Optimality diagnostics at the returned point.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Relative stationarity residual ‖∇f + Bᵀλ‖ / (1 + ‖∇f‖).
    pub stationarity: f64,
    /// Worst cone violation max(‖v‖ − r, 0).
    pub cone_violation: f64,
    /// Worst complementary-slackness residual |‖λ‖ (‖v‖ − r)|.
    pub complementarity: f64,
    /// Worst misalignment of λ with the outward cone normal.
    pub alignment: f64,
    /// |primal − dual| / max(1, |primal|, |dual|).
    pub duality_gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max(self.cone_violation)
            .max(self.complementarity)
            .max(self.alignment)
            .max(self.duality_gap)
    }
}

/// Solution: Δx per state (0..=T, stacked agents; first entry zero) and Δu
/// per step, plus splitting residuals and the KKT report.
#[derive(Debug, Clone)]
pub struct SocpSolution {
    pub dx: Vec<DVector<f64>>,
    pub du: Vec<DVector<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt: KktReport,
}

/// Why a solve failed: bad inputs, or the iteration cap was reached (the
/// best iterate is carried along).
#[derive(Debug)]
pub enum SocpFailure {
    Invalid(Error),
    NotConverged { best: Box<SocpSolution> },
}

impl From<SocpFailure> for Error {
    fn from(f: SocpFailure) -> Error {
        match f {
            SocpFailure::Invalid(e) => e,
            SocpFailure::NotConverged { best } => Error::SocpNonConvergence {
                primal: best.primal_residual,
                dual: best.dual_residual,
                iterations: best.iterations,
            },
        }
    }
}

/// Backward-sweep data for a fixed penalty ρ.
struct LqrFactors {
    /// Cholesky of G_t = 2κI + ρB̃ᵀB̃ + 2B̃ᵀP_{t+1}B̃.
    chol: Vec<Cholesky<f64, Dyn>>,
    /// Gains K_t = G_t⁻¹ · 2B̃ᵀP_{t+1}.
    gain: Vec<DMatrix<f64>>,
    /// PB_t = P_{t+1} B̃_t.
    pb: Vec<DMatrix<f64>>,
    /// P_{t+1} per step (cost-to-go quadratic above step t).
    p_next: Vec<DMatrix<f64>>,
}

fn factorize(sub: &SocpSubproblem, rho: f64) -> Option<LqrFactors> {
    let t = sub.steps;
    let m = 2 * sub.agents;
    let n = sub.n_fields;
    let mut chol = Vec::with_capacity(t);
    let mut gain = Vec::with_capacity(t);
    let mut pb = Vec::with_capacity(t);
    let mut p_next_all = Vec::with_capacity(t);
    let mut p_next = DMatrix::<f64>::identity(m, m);
    for step in (0..t).rev() {
        let b = &sub.b[step];
        let pb_t = &p_next * b;
        let mut g = DMatrix::<f64>::identity(n, n) * (2.0 * sub.kappa);
        if rho != 0.0 {
            g += b.transpose() * b * rho;
        }
        g += b.transpose() * &pb_t * 2.0;
        g = (&g + g.transpose()) * 0.5;
        let ch = Cholesky::new(g)?;
        let k = ch.solve(&(pb_t.transpose() * 2.0));
        // P_t = I + P' − 2 P'B G⁻¹ BᵀP' = I + P' − PB·K.
        let mut p = DMatrix::<f64>::identity(m, m) + &p_next - &pb_t * &k;
        p = (&p + p.transpose()) * 0.5;
        chol.push(ch);
        gain.push(k);
        pb.push(pb_t);
        p_next_all.push(p_next.clone());
        p_next = p;
    }
    chol.reverse();
    gain.reverse();
    pb.reverse();
    p_next_all.reverse();
    Some(LqrFactors {
        chol,
        gain,
        pb,
        p_next: p_next_all,
    })
}

/// Exact minimizer of the chain quadratic plus the ADMM penalty
/// (ρ/2)Σ‖B̃Δu + w‖² and optional linear control terms Σ lᵀΔu.
/// Returns (Δu per step, ξ per state with ξ_0 = 0).
fn lqr_solve(
    sub: &SocpSubproblem,
    factors: &LqrFactors,
    rho: f64,
    w: Option<&[DVector<f64>]>,
    linear: Option<&[DVector<f64>]>,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let t = sub.steps;
    let m = 2 * sub.agents;

    // Backward pass for the affine terms: value linear part is −2 q_tᵀξ.
    let mut k_ff: Vec<DVector<f64>> = Vec::with_capacity(t);
    let mut q_next = sub.dx_target[t - 1].clone();
    for step in (0..t).rev() {
        let b = &sub.b[step];
        // rhs = 2 B̃ᵀ(q' − P'h) − ρ B̃ᵀw − l
        let mut rhs = b.transpose() * &q_next * 2.0;
        let h = &sub.h[step];
        let h_is_zero = h.iter().all(|&v| v == 0.0);
        if !h_is_zero {
            rhs -= factors.pb[step].transpose() * h * 2.0;
        }
        if let Some(w) = w {
            rhs -= b.transpose() * &w[step] * rho;
        }
        if let Some(l) = linear {
            rhs -= &l[step];
        }
        let k = factors.chol[step].solve(&rhs);
        // q_t = stage_target + q' − P'h − PB k.
        let mut q = &q_next - &factors.pb[step] * &k;
        if !h_is_zero {
            q -= &factors.p_next[step] * h;
        }
        if step >= 1 {
            q += &sub.dx_target[step - 1];
        }
        k_ff.push(k);
        q_next = q;
    }
    k_ff.reverse();

    // Forward rollout from ξ_0 = 0.
    let mut xi = vec![DVector::<f64>::zeros(m)];
    let mut du = Vec::with_capacity(t);
    for step in 0..t {
        let v = &k_ff[step] - &factors.gain[step] * xi.last().unwrap();
        let next = xi.last().unwrap() + &sub.b[step] * &v + &sub.h[step];
        du.push(v);
        xi.push(next);
    }
    (du, xi)
}

/// Cone expressions v_t = B̃_t Δu_t + offset_t.
fn cone_values(sub: &SocpSubproblem, du: &[DVector<f64>]) -> Vec<DVector<f64>> {
    (0..sub.steps)
        .map(|t| &sub.b[t] * &du[t] + &sub.cone_offset[t])
        .collect()
}

/// Project each agent 2-block of `v` onto the origin-centered radius-r ball.
fn project_blocks(v: &[DVector<f64>], agents: usize, r: f64) -> Vec<DVector<f64>> {
    v.iter()
        .map(|vt| {
            let mut out = vt.clone();
            for a in 0..agents {
                let p = ball_projection([vt[2 * a], vt[2 * a + 1]], [0.0, 0.0], r);
                out[2 * a] = p[0];
                out[2 * a + 1] = p[1];
            }
            out
        })
        .collect()
}

fn stacked_norm(v: &[DVector<f64>]) -> f64 {
    v.iter().map(DVector::norm_squared).sum::<f64>().sqrt()
}

/// Gradient of the chain objective at (du, xi):
/// ∂f/∂Δu_t = 2κ Δu_t + B̃_tᵀ Σ_{τ>t} 2(ξ_τ − target_τ).
fn objective_gradient(
    sub: &SocpSubproblem,
    du: &[DVector<f64>],
    xi: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    let t = sub.steps;
    let m = 2 * sub.agents;
    let mut suffix = DVector::<f64>::zeros(m);
    let mut grad = vec![DVector::<f64>::zeros(sub.n_fields); t];
    for step in (0..t).rev() {
        suffix += (&xi[step + 1] - &sub.dx_target[step]) * 2.0;
        grad[step] = sub.b[step].transpose() * &suffix + &du[step] * (2.0 * sub.kappa);
    }
    grad
}

/// Solve the subproblem to the given absolute/relative tolerance.
pub fn solve_socp(sub: &SocpSubproblem, tolerance: f64) -> Result<SocpSolution, SocpFailure> {
    sub.validate().map_err(SocpFailure::Invalid)?;

    // No cones: one exact LQR solve.
    let Some(radius) = sub.radius else {
        let factors = factorize(sub, 0.0).ok_or_else(|| {
            SocpFailure::Invalid(Error::InvalidArgument(
                "subproblem is not strongly convex".into(),
            ))
        })?;
        let (du, xi) = lqr_solve(sub, &factors, 0.0, None, None);
        let obj = sub.objective(&du, &xi);
        let grad = objective_gradient(sub, &du, &xi);
        let gnorm = stacked_norm(&grad);
        return Ok(SocpSolution {
            kkt: KktReport {
                stationarity: gnorm / (1.0 + gnorm),
                cone_violation: 0.0,
                complementarity: 0.0,
                alignment: 0.0,
                duality_gap: 0.0,
                primal_objective: obj,
                dual_objective: obj,
            },
            dx: xi,
            du,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
        });
    };

    let mut rho: f64 = 1.0;
    let mut factors = factorize(sub, rho).ok_or_else(|| {
        SocpFailure::Invalid(Error::InvalidArgument(
            "subproblem is not strongly convex".into(),
        ))
    })?;

    let t = sub.steps;
    let m_total = ((2 * sub.agents * t) as f64).sqrt();
    let n_total = ((sub.n_fields * t) as f64).sqrt();

    // Initialize: s = Π(offset) (the Δu = 0 cone values), y = 0.
    let mut s = project_blocks(&sub.cone_offset, sub.agents, radius);
    let mut y: Vec<DVector<f64>> = vec![DVector::zeros(2 * sub.agents); t];
    let mut du = vec![DVector::<f64>::zeros(sub.n_fields); t];
    let mut xi = vec![DVector::<f64>::zeros(2 * sub.agents); t + 1];
    let (mut pri, mut dua) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        // w_t = offset_t − s_t + y_t
        let w: Vec<DVector<f64>> = (0..t)
            .map(|i| &sub.cone_offset[i] - &s[i] + &y[i])
            .collect();
        let (du_new, xi_new) = lqr_solve(sub, &factors, rho, Some(&w), None);
        du = du_new;
        xi = xi_new;
        let v = cone_values(sub, &du);

        let s_old = s.clone();
        let relaxed: Vec<DVector<f64>> = (0..t)
            .map(|i| &v[i] * OVER_RELAXATION + &s_old[i] * (1.0 - OVER_RELAXATION))
            .collect();
        let arg: Vec<DVector<f64>> = (0..t).map(|i| &relaxed[i] + &y[i]).collect();
        s = project_blocks(&arg, sub.agents, radius);
        for i in 0..t {
            y[i] += &relaxed[i] - &s[i];
        }

        // Residuals on the un-relaxed variables.
        pri = (0..t)
            .map(|i| (&v[i] - &s[i]).norm_squared())
            .sum::<f64>()
            .sqrt();
        dua = rho
            * (0..t)
                .map(|i| (sub.b[i].transpose() * (&s[i] - &s_old[i])).norm_squared())
                .sum::<f64>()
                .sqrt();

        let v_norm = stacked_norm(&v).max(stacked_norm(&s));
        let bty = rho
            * (0..t)
                .map(|i| (sub.b[i].transpose() * &y[i]).norm_squared())
                .sum::<f64>()
                .sqrt();
        let eps_pri = m_total * tolerance + tolerance * v_norm;
        let eps_dua = n_total * tolerance + tolerance * bty;
        if pri <= eps_pri && dua <= eps_dua {
            converged = true;
            break;
        }

        // Residual balancing keeps both residuals shrinking together.
        if iter % 25 == 24 {
            if pri > 10.0 * dua && rho < 1e6 {
                rho *= 2.0;
                for yi in &mut y {
                    *yi *= 0.5;
                }
                factors = factorize(sub, rho).expect("G stays SPD when rho grows");
            } else if dua > 10.0 * pri && rho > 1e-6 {
                rho *= 0.5;
                for yi in &mut y {
                    *yi *= 2.0;
                }
                if let Some(f) = factorize(sub, rho) {
                    factors = f;
                } else {
                    rho *= 2.0;
                }
            }
        }
    }

    let lambda: Vec<DVector<f64>> = y.iter().map(|yi| yi * rho).collect();
    let kkt = kkt_report(sub, &du, &xi, &lambda, radius);
    let solution = SocpSolution {
        dx: xi,
        du,
        iterations,
        primal_residual: pri,
        dual_residual: dua,
        kkt,
    };
    if converged {
        Ok(solution)
    } else {
        Err(SocpFailure::NotConverged {
            best: Box::new(solution),
        })
    }
}

/// KKT diagnostics with the dual objective evaluated by one extra LQR solve
/// of min_z f(z) + λᵀ(Bz) (ρ = 0) — the Lagrange dual of the cone split.
fn kkt_report(
    sub: &SocpSubproblem,
    du: &[DVector<f64>],
    xi: &[DVector<f64>],
    lambda: &[DVector<f64>],
    radius: f64,
) -> KktReport {
    let t = sub.steps;
    let grad = objective_gradient(sub, du, xi);
    let mut stat_sq = 0.0;
    let mut grad_sq = 0.0;
    for step in 0..t {
        let r = &grad[step] + sub.b[step].transpose() * &lambda[step];
        stat_sq += r.norm_squared();
        grad_sq += grad[step].norm_squared();
    }
    let stationarity = stat_sq.sqrt() / (1.0 + grad_sq.sqrt());

    let v = cone_values(sub, du);
    let mut cone_violation = 0.0f64;
    let mut complementarity = 0.0f64;
    let mut alignment = 0.0f64;
    for step in 0..t {
        for a in 0..sub.agents {
            let vv = [v[step][2 * a], v[step][2 * a + 1]];
            let ll = [lambda[step][2 * a], lambda[step][2 * a + 1]];
            let vn = (vv[0] * vv[0] + vv[1] * vv[1]).sqrt();
            let ln = (ll[0] * ll[0] + ll[1] * ll[1]).sqrt();
            cone_violation = cone_violation.max(vn - radius);
            complementarity = complementarity.max((ln * (vn - radius)).abs());
            if ln > 1e-12 {
                // λ must be the outward normal: λ = ‖λ‖ · v/‖v‖.
                let miss = [(ll[0] - ln * vv[0] / vn), (ll[1] - ln * vv[1] / vn)];
                alignment = alignment.max((miss[0] * miss[0] + miss[1] * miss[1]).sqrt());
            }
        }
    }

    let primal_objective = sub.objective(du, xi);
    let dual_objective = match factorize(sub, 0.0) {
        Some(f0) => {
            let l: Vec<DVector<f64>> = (0..t)
                .map(|i| sub.b[i].transpose() * &lambda[i])
                .collect();
            let (du_d, xi_d) = lqr_solve(sub, &f0, 0.0, None, Some(&l));
            let mut d = sub.objective(&du_d, &xi_d);
            for step in 0..t {
                d += l[step].dot(&du_d[step]);
                d += lambda[step].dot(&sub.cone_offset[step]);
                for a in 0..sub.agents {
                    let ln = (lambda[step][2 * a].powi(2) + lambda[step][2 * a + 1].powi(2)).sqrt();
                    d -= radius * ln;
                }
            }
            d
        }
        None => f64::NAN,
    };
    let duality_gap = if dual_objective.is_finite() {
        (primal_objective - dual_objective).abs()
            / primal_objective.abs().max(dual_objective.abs()).max(1.0)
    } else {
        f64::NAN
    };

    KktReport {
        stationarity,
        cone_violation: cone_violation.max(0.0),
        complementarity,
        alignment,
        duality_gap,
        primal_objective,
        dual_objective,
    }
}
