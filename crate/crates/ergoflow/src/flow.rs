//! Measure-preserving velocity-field basis.
//!
//! Each Dirichlet stream function u_i yields the field
//! v_i = rot90(∇u_i) / p, which satisfies ∇·(p v_i) = 0 and is tangent to
//! the boundary because u_i vanishes there. Fields are piecewise constant
//! per triangle (P1 stream gradients, density interpolated at centroids).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::advect;
use crate::error::{Error, Result};
use crate::fem::{BoundaryCondition, SpectralBasis};
use crate::geom::{self, Point};
use crate::mesh::{InfoDistribution, TriMesh};

/// Basis of measure-preserving velocity fields, tabulated per triangle.
#[derive(Debug, Clone)]
pub struct FlowBasis {
    pub n_fields: usize,
    /// `velocities[i][t]` = field i on triangle t (map units / s).
    pub velocities: Vec<Vec<Point>>,
}

/// A fixed linear combination of basis fields, one velocity per triangle.
/// Built once per coefficient row so integrators do table lookups only.
#[derive(Debug, Clone)]
pub struct CombinedField {
    pub velocity: Vec<Point>,
}

/// Build the first `n_fields` measure-preserving fields from a Dirichlet
/// stream-function basis and the density p (floored at 1e-6 of its peak).
pub fn build_flow_basis(
    mesh: &TriMesh,
    stream_basis: &SpectralBasis,
    p: &InfoDistribution,
    n_fields: usize,
) -> Result<FlowBasis> {
    if stream_basis.bc != BoundaryCondition::Dirichlet {
        return Err(Error::InvalidArgument(
            "flow basis requires a Dirichlet stream-function basis".into(),
        ));
    }
    if n_fields == 0 || n_fields > stream_basis.count() {
        return Err(Error::InvalidArgument(format!(
            "n_fields = {n_fields} outside 1..={}",
            stream_basis.count()
        )));
    }
    let floor = p.floor();
    if !(floor > 0.0) {
        return Err(Error::Distribution(
            "density floor is zero; cannot form 1/p".into(),
        ));
    }
    let mut velocities = Vec::with_capacity(n_fields);
    for i in 0..n_fields {
        let mut field = Vec::with_capacity(mesh.num_triangles());
        for t in 0..mesh.num_triangles() {
            let grad = stream_basis.gradient_on(mesh, t, i);
            let pbar = p.centroid_value(mesh, t).max(floor);
            let v = geom::scale(geom::rot90(grad), 1.0 / pbar);
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::Eigensolver(format!(
                    "non-finite velocity on triangle {t} of field {i}"
                )));
            }
            field.push(v);
        }
        velocities.push(field);
    }
    Ok(FlowBasis {
        n_fields,
        velocities,
    })
}

impl FlowBasis {
    /// Combine basis fields with the given coefficients into one table.
    pub fn combine(&self, coefficients: &[f64]) -> Result<CombinedField> {
        if coefficients.len() != self.n_fields {
            return Err(Error::SizeMismatch {
                expected: self.n_fields,
                got: coefficients.len(),
            });
        }
        let nt = self.velocities[0].len();
        let mut velocity = vec![[0.0, 0.0]; nt];
        for (c, field) in coefficients.iter().zip(&self.velocities) {
            for (acc, v) in velocity.iter_mut().zip(field) {
                acc[0] += c * v[0];
                acc[1] += c * v[1];
            }
        }
        Ok(CombinedField { velocity })
    }

    /// Basis velocities at one triangle, one column per field.
    pub fn columns_at(&self, t: usize) -> Vec<Point> {
        self.velocities.iter().map(|f| f[t]).collect()
    }
}

/// Evaluate Σ_i u_i v_i at a point. Errors on points outside the free space.
pub fn evaluate_field(
    mesh: &TriMesh,
    flow: &FlowBasis,
    coefficients: &[f64],
    point: Point,
) -> Result<Point> {
    if coefficients.len() != flow.n_fields {
        return Err(Error::SizeMismatch {
            expected: flow.n_fields,
            got: coefficients.len(),
        });
    }
    let (t, _) = mesh
        .locate(point, None)
        .ok_or(Error::OutsideDomain(point[0], point[1]))?;
    let mut v = [0.0, 0.0];
    for (c, field) in coefficients.iter().zip(&flow.velocities) {
        v[0] += c * field[t][0];
        v[1] += c * field[t][1];
    }
    Ok(v)
}

/// Max over interior vertices w of |∫ p v_i · ∇ψ_w dx|, the weak form of
/// ∇·(p v_i) = 0 against the P1 test space.
///
/// The density is integrated with the 3-point edge-midpoint rule using the
/// distribution's analytic form, so the residual measures the O(h) gap
/// between the centroid-sampled 1/p in the field and the true density. For
/// uniform p the two cancel exactly and the residual is rounding noise.
pub fn weak_divergence_residual(
    mesh: &TriMesh,
    p: &InfoDistribution,
    flow: &FlowBasis,
    field: usize,
) -> f64 {
    let mut residual = vec![0.0f64; mesh.num_vertices()];
    let field = &flow.velocities[field];
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangle_points(t);
        let mids = [
            (geom::scale(geom::add(a, b), 0.5), [0.5, 0.5, 0.0]),
            (geom::scale(geom::add(b, c), 0.5), [0.0, 0.5, 0.5]),
            (geom::scale(geom::add(c, a), 0.5), [0.5, 0.0, 0.5]),
        ];
        let p_avg = mids
            .iter()
            .map(|&(q, w)| p.evaluate_local(mesh, t, w, q))
            .sum::<f64>()
            / 3.0;
        let weight = mesh.area(t) * p_avg;
        let grads = mesh.hat_gradients(t);
        let tri = mesh.triangles[t];
        for i in 0..3 {
            residual[tri[i]] += weight * geom::dot(field[t], grads[i]);
        }
    }
    residual
        .iter()
        .zip(mesh.boundary_vertex.iter())
        .filter(|(_, &on_boundary)| !on_boundary)
        .map(|(r, _)| r.abs())
        .fold(0.0, f64::max)
}

/// Numeric δ-ball measure-preservation check.
///
/// `ball_samples` points are drawn uniformly in the ball and advected for
/// `duration` (unclamped, substep `dt`) to certify that the flow keeps them
/// on the mesh. Masses are estimated by Monte-Carlo: mass of the ball from
/// its own samples, mass of the image by area-uniform domain samples pulled
/// back through the inverse flow (y ∈ Φ(B) iff Φ⁻¹(y) ∈ B).
#[allow(clippy::too_many_arguments)]
pub fn measure_preservation_test(
    mesh: &TriMesh,
    p: &InfoDistribution,
    flow: &FlowBasis,
    coefficients: &[f64],
    seed_point: Point,
    radius: f64,
    duration: f64,
    dt: f64,
    ball_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(radius > 0.0) || !(duration >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(
            "radius and dt must be positive, duration non-negative".into(),
        ));
    }
    if duration > 0.0 && dt > 1e-3 * duration * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} too coarse; need dt <= 1e-3 * duration = {}",
            1e-3 * duration
        )));
    }
    mesh.locate(seed_point, None)
        .ok_or(Error::OutsideDomain(seed_point[0], seed_point[1]))?;

    let forward = flow.combine(coefficients)?;
    let backward = flow.combine(&coefficients.iter().map(|c| -c).collect::<Vec<_>>())?;
    let steps = (duration / dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Uniform samples in the δ-ball; the ball must lie in the free space.
    let mut ball = Vec::with_capacity(ball_samples);
    for _ in 0..ball_samples {
        let r = radius * rng.random::<f64>().sqrt();
        let theta = rng.random::<f64>() * std::f64::consts::TAU;
        let q = [
            seed_point[0] + r * theta.cos(),
            seed_point[1] + r * theta.sin(),
        ];
        let (t, _) = mesh
            .locate(q, None)
            .ok_or(Error::OutsideDomain(q[0], q[1]))?;
        ball.push((q, t));
    }
    // Forward advection certifies that no sample escapes the mesh.
    for &(q, t) in &ball {
        advect::advect(mesh, &|tri| forward.velocity[tri], None, q, t, dt, steps)?;
    }

    // Area-uniform domain samples for the two mass integrals.
    let domain_samples = 3 * ball_samples;
    let cumulative: Vec<f64> = {
        let mut acc = 0.0;
        (0..mesh.num_triangles())
            .map(|t| {
                acc += mesh.area(t);
                acc
            })
            .collect()
    };
    let total_area = *cumulative.last().unwrap();
    let r2 = radius * radius;
    let mut mass_before = 0.0;
    let mut mass_after = 0.0;
    for _ in 0..domain_samples {
        let pick = rng.random::<f64>() * total_area;
        let t = cumulative
            .partition_point(|&c| c < pick)
            .min(mesh.num_triangles() - 1);
        let [a, b, c] = mesh.triangle_points(t);
        let (r1, u2) = (rng.random::<f64>(), rng.random::<f64>());
        let s = r1.sqrt();
        let w = [1.0 - s, s * (1.0 - u2), s * u2];
        let y = [
            w[0] * a[0] + w[1] * b[0] + w[2] * c[0],
            w[0] * a[1] + w[1] * b[1] + w[2] * c[1],
        ];
        let density = p.evaluate_local(mesh, t, w, y);
        let in_ball = |q: Point| {
            let d = geom::sub(q, seed_point);
            geom::dot(d, d) <= r2
        };
        if in_ball(y) {
            mass_before += density;
        }
        let (pre, _) = advect::advect(mesh, &|tri| backward.velocity[tri], None, y, t, dt, steps)?;
        if in_ball(pre) {
            mass_after += density;
        }
    }
    let scale = total_area / domain_samples as f64;
    Ok((mass_before * scale, mass_after * scale))
}
