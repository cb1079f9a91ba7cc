//! Shared RK4 advection core.
//!
//! The sampler's trajectory integrator, the optimizer's one-step
//! linearization, and the flow module's measure-preservation test all step
//! points through the same code so their results agree bit for bit. The
//! velocity field is a per-triangle lookup passed as a closure (tabulated or
//! lazily combined — both produce identical floating-point sums).

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::mesh::TriMesh;

/// A stored substep may exit the mesh by floating-point rounding and is then
/// projected back; exits beyond this distance abort as an integrator bug.
pub const ESCAPE_GUARD: f64 = 1e-6;

/// Where boundary tangent directions turn (concave corners), a full substep
/// can overshoot the mesh by more than the guard; the step is then re-taken
/// as two half steps, up to this recursion depth.
const MAX_SPLIT_DEPTH: usize = 20;

/// Per-stage record for forward-mode differentiation through a substep.
/// `scale` is the stage's RK4 quadrature weight times its step length, so
/// ∂f/∂u accumulates as Σ scale · C(stage) · B(stage.triangle).
#[derive(Debug, Clone, Copy)]
pub struct StageRecord {
    pub triangle: usize,
    pub raw_velocity: Point,
    pub clamped: bool,
    pub scale: f64,
}

/// Velocity lookup for RK4 stage points. Stage points may poke slightly
/// outside near the boundary; they are projected back for the lookup only.
fn stage_velocity(
    mesh: &TriMesh,
    field: &impl Fn(usize) -> Point,
    vmax: Option<f64>,
    x: Point,
    hint: usize,
) -> (Point, usize, Point, bool) {
    let (t, _) = match mesh.locate(x, Some(hint)) {
        Some(loc) => loc,
        None => {
            let (proj, _, _) = mesh.project_to_boundary(x);
            mesh.locate(proj, Some(hint))
                .expect("projected point must lie on the mesh")
        }
    };
    let raw = field(t);
    match vmax {
        Some(vm) => {
            let speed = geom::norm(raw);
            if speed > vm {
                (geom::scale(raw, vm / speed), t, raw, true)
            } else {
                (raw, t, raw, false)
            }
        }
        None => (raw, t, raw, false),
    }
}

/// One classical RK4 substep of length `h` on the piecewise-constant field,
/// with optional speed clamping and stage recording.
pub fn rk4_substep(
    mesh: &TriMesh,
    field: &impl Fn(usize) -> Point,
    vmax: Option<f64>,
    x: Point,
    tri: usize,
    h: f64,
    mut stages: Option<&mut Vec<StageRecord>>,
) -> Result<(Point, usize)> {
    step_recursive(mesh, field, vmax, x, tri, h, 0, &mut stages)
}

#[allow(clippy::too_many_arguments)]
fn step_recursive(
    mesh: &TriMesh,
    field: &impl Fn(usize) -> Point,
    vmax: Option<f64>,
    x: Point,
    tri: usize,
    h: f64,
    depth: usize,
    stages: &mut Option<&mut Vec<StageRecord>>,
) -> Result<(Point, usize)> {
    let mark = stages.as_deref().map_or(0, Vec::len);

    let (k1, t1, r1, c1) = stage_velocity(mesh, field, vmax, x, tri);
    let (k2, t2, r2, c2) =
        stage_velocity(mesh, field, vmax, geom::add(x, geom::scale(k1, 0.5 * h)), t1);
    let (k3, t3, r3, c3) =
        stage_velocity(mesh, field, vmax, geom::add(x, geom::scale(k2, 0.5 * h)), t2);
    let (k4, t4, r4, c4) = stage_velocity(mesh, field, vmax, geom::add(x, geom::scale(k3, h)), t3);
    if let Some(out) = stages.as_deref_mut() {
        for (t, r, c, w) in [
            (t1, r1, c1, 1.0),
            (t2, r2, c2, 2.0),
            (t3, r3, c3, 2.0),
            (t4, r4, c4, 1.0),
        ] {
            out.push(StageRecord {
                triangle: t,
                raw_velocity: r,
                clamped: c,
                scale: w * h / 6.0,
            });
        }
    }

    let incr = [
        (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0,
        (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0,
    ];
    let x_new = geom::add(x, geom::scale(incr, h));
    if let Some((t, _)) = mesh.locate(x_new, Some(t4)) {
        return Ok((x_new, t));
    }
    let (proj, _, dist) = mesh.project_to_boundary(x_new);
    if dist <= ESCAPE_GUARD {
        let (t, _) = mesh
            .locate(proj, Some(t4))
            .expect("projected point must lie on the mesh");
        return Ok((proj, t));
    }
    if depth >= MAX_SPLIT_DEPTH {
        return Err(Error::IntegratorEscape {
            point: x_new,
            distance: dist,
        });
    }
    // Overshot a corner: retake as two half steps.
    if let Some(out) = stages.as_deref_mut() {
        out.truncate(mark);
    }
    let (xm, tm) = step_recursive(mesh, field, vmax, x, tri, 0.5 * h, depth + 1, stages)?;
    step_recursive(mesh, field, vmax, xm, tm, 0.5 * h, depth + 1, stages)
}

/// Advect a point for `steps` substeps of length `h` under a fixed field.
pub fn advect(
    mesh: &TriMesh,
    field: &impl Fn(usize) -> Point,
    vmax: Option<f64>,
    mut x: Point,
    mut tri: usize,
    h: f64,
    steps: usize,
) -> Result<(Point, usize)> {
    for _ in 0..steps {
        let (xn, tn) = rk4_substep(mesh, field, vmax, x, tri, h, None)?;
        x = xn;
        tri = tn;
    }
    Ok((x, tri))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_map, MapSpec};

    #[test]
    fn zero_field_is_stationary() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let field = |_t: usize| [0.0, 0.0];
        let (x, _) = advect(&mesh, &field, Some(1.0), [0.3, 0.4], 0, 0.01, 100).unwrap();
        assert_eq!(x, [0.3, 0.4]);
    }

    #[test]
    fn constant_field_translates() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let field = |_t: usize| [0.1, 0.05];
        let (x, _) = advect(&mesh, &field, None, [0.2, 0.2], 0, 0.01, 100).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12);
        assert!((x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn clamp_limits_step_length() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let field = |_t: usize| [10.0, 0.0];
        let (x, _) = rk4_substep(&mesh, &field, Some(1.0), [0.1, 0.5], 0, 0.01, None).unwrap();
        let moved = geom::dist(x, [0.1, 0.5]);
        assert!(moved <= 0.01 * (1.0 + 1e-9), "moved {moved}");
    }

    #[test]
    fn stage_scales_sum_to_step_length() {
        let mesh = generate_map(&MapSpec::square(1.0, 0.25)).unwrap();
        let field = |_t: usize| [0.3, -0.2];
        let mut stages = Vec::new();
        rk4_substep(&mesh, &field, None, [0.5, 0.5], 0, 0.01, Some(&mut stages)).unwrap();
        let total: f64 = stages.iter().map(|s| s.scale).sum();
        assert!((total - 0.01).abs() < 1e-15);
    }
}
