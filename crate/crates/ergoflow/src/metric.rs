//! Spectral ergodic metrics.
//!
//! The Laplace-Beltrami metric compares trajectory and density spectral
//! coefficients in the natural-BC eigenbasis with weights (1 + √λ)⁻², so
//! low frequencies dominate. A classical Fourier-basis metric on the
//! bounding box (density rasterized, zero over obstacles) serves as the
//! comparison baseline.

use crate::error::{Error, Result};
use crate::fem::{BoundaryCondition, FemMatrices, SpectralBasis};
use crate::geom::Point;
use crate::mesh::{InfoDistribution, TriMesh};

/// Truncation and weighting of the LB metric.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub k_trunc: usize,
    /// w_k = (1 + √λ_k)⁻², eigenvalues clamped at 0.
    pub weights: Vec<f64>,
}

impl MetricSpec {
    pub fn new(basis: &SpectralBasis, k_trunc: usize) -> Result<MetricSpec> {
        if basis.bc != BoundaryCondition::Natural {
            return Err(Error::InvalidArgument(
                "the ergodic metric uses the natural-BC basis".into(),
            ));
        }
        if k_trunc == 0 || k_trunc > basis.count() {
            return Err(Error::InvalidArgument(format!(
                "k_trunc = {k_trunc} outside 1..={}",
                basis.count()
            )));
        }
        let weights = basis.eigenvalues[..k_trunc]
            .iter()
            .map(|&l| (1.0 + l.max(0.0).sqrt()).powi(-2))
            .collect();
        Ok(MetricSpec { k_trunc, weights })
    }
}

/// Map and trajectory spectral coefficients, index-aligned.
#[derive(Debug, Clone)]
pub struct SpectralCoeffs {
    pub xi_hat: Vec<f64>,
    pub xi: Vec<f64>,
}

/// ξ̂_k = ⟨p, φ_k⟩_M for the first `k_trunc` modes.
pub fn map_coefficients(
    p: &InfoDistribution,
    basis: &SpectralBasis,
    fm: &FemMatrices,
    k_trunc: usize,
) -> Result<Vec<f64>> {
    if k_trunc > basis.count() {
        return Err(Error::InvalidArgument(format!(
            "k_trunc = {k_trunc} exceeds basis count {}",
            basis.count()
        )));
    }
    if p.values.len() != fm.mass.n {
        return Err(Error::SizeMismatch {
            expected: fm.mass.n,
            got: p.values.len(),
        });
    }
    let mp = fm.mass.matvec_alloc(&p.values);
    Ok((0..k_trunc)
        .map(|k| basis.vectors[k].iter().zip(&mp).map(|(a, b)| a * b).sum())
        .collect())
}

/// ξ_k = (1/(A·T)) Σ_{a,t} φ_k(x_a^t), pooled uniformly over agents and
/// stored states. `states` is agent-major.
pub fn trajectory_coefficients(
    states: &[Vec<Point>],
    basis: &SpectralBasis,
    mesh: &TriMesh,
    k_trunc: usize,
) -> Result<Vec<f64>> {
    if k_trunc > basis.count() {
        return Err(Error::InvalidArgument(format!(
            "k_trunc = {k_trunc} exceeds basis count {}",
            basis.count()
        )));
    }
    let total: usize = states.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let mut xi = vec![0.0; k_trunc];
    for agent in states {
        let mut hint = 0usize;
        for &x in agent {
            let (t, w) = mesh
                .locate(x, Some(hint))
                .ok_or(Error::OutsideDomain(x[0], x[1]))?;
            hint = t;
            let tri = mesh.triangles[t];
            for (k, xi_k) in xi.iter_mut().enumerate() {
                let col = &basis.vectors[k];
                *xi_k += w[0] * col[tri[0]] + w[1] * col[tri[1]] + w[2] * col[tri[2]];
            }
        }
    }
    let inv = 1.0 / total as f64;
    for xi_k in &mut xi {
        *xi_k *= inv;
    }
    Ok(xi)
}

/// E = Σ_k w_k (ξ_k − ξ̂_k)².
pub fn ergodicity(coeffs: &SpectralCoeffs, spec: &MetricSpec) -> f64 {
    spec.weights
        .iter()
        .zip(coeffs.xi.iter().zip(&coeffs.xi_hat))
        .map(|(w, (xi, xh))| w * (xi - xh) * (xi - xh))
        .sum()
}

/// ∂E/∂x_a^t = (2/(A·T)) Σ_k w_k (ξ_k − ξ̂_k) ∇φ_k(x_a^t), with the constant
/// P1 gradient of the containing triangle (lowest-index tie-break on edges).
pub fn ergodicity_gradient(
    states: &[Vec<Point>],
    basis: &SpectralBasis,
    spec: &MetricSpec,
    coeffs: &SpectralCoeffs,
    mesh: &TriMesh,
) -> Result<Vec<Vec<Point>>> {
    let total: usize = states.iter().map(Vec::len).sum();
    let front = 2.0 / total as f64;
    // Per-mode residual weights shared by every state.
    let wr: Vec<f64> = spec
        .weights
        .iter()
        .zip(coeffs.xi.iter().zip(&coeffs.xi_hat))
        .map(|(w, (xi, xh))| w * (xi - xh))
        .collect();

    let mut out = Vec::with_capacity(states.len());
    for agent in states {
        let mut hint = 0usize;
        let mut grads = Vec::with_capacity(agent.len());
        for &x in agent {
            let (t, _) = mesh
                .locate(x, Some(hint))
                .ok_or(Error::OutsideDomain(x[0], x[1]))?;
            hint = t;
            let tri = mesh.triangles[t];
            let hat = mesh.hat_gradients(t);
            let mut g = [0.0, 0.0];
            for (k, &wrk) in wr.iter().enumerate() {
                let col = &basis.vectors[k];
                let gx = col[tri[0]] * hat[0][0] + col[tri[1]] * hat[1][0] + col[tri[2]] * hat[2][0];
                let gy = col[tri[0]] * hat[0][1] + col[tri[1]] * hat[1][1] + col[tri[2]] * hat[2][1];
                g[0] += wrk * gx;
                g[1] += wrk * gy;
            }
            grads.push([front * g[0], front * g[1]]);
        }
        out.push(grads);
    }
    Ok(out)
}

/// Classical cosine-basis ergodic metric on an axis-aligned box, with the
/// density rasterized cell-centered (zero on obstacle cells) and the same
/// (1 + √λ)⁻² weighting; λ in box units so the unit square reproduces the
/// LB metric up to discretization error.
#[derive(Debug, Clone)]
pub struct FourierMetric {
    pub lo: Point,
    pub hi: Point,
    /// Cosine mode index pairs, sorted by λ ascending.
    pub modes: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub xi_hat: Vec<f64>,
}

impl FourierMetric {
    /// Rasterize `p` on a `grid`×`grid` cell grid over the box and project
    /// onto the first `k_trunc` cosine modes.
    pub fn build(
        mesh: &TriMesh,
        p: &InfoDistribution,
        lo: Point,
        hi: Point,
        grid: usize,
        k_trunc: usize,
    ) -> Result<FourierMetric> {
        let (mlo, mhi) = mesh.bounding_box();
        if mlo[0] < lo[0] - 1e-12
            || mlo[1] < lo[1] - 1e-12
            || mhi[0] > hi[0] + 1e-12
            || mhi[1] > hi[1] + 1e-12
        {
            return Err(Error::InvalidArgument(
                "bounding box must contain the mesh".into(),
            ));
        }
        let modes = cosine_modes(k_trunc);
        let weights: Vec<f64> = modes
            .iter()
            .map(|&(i, j)| {
                let lam = std::f64::consts::PI.powi(2) * (i * i + j * j) as f64;
                (1.0 + lam.sqrt()).powi(-2)
            })
            .collect();

        // Cell-centered raster in box coordinates; obstacle cells get zero.
        let mut raster = vec![0.0; grid * grid];
        let mut hint = 0usize;
        let mut total = 0.0;
        for cy in 0..grid {
            for cx in 0..grid {
                let bx = (cx as f64 + 0.5) / grid as f64;
                let by = (cy as f64 + 0.5) / grid as f64;
                let x = [lo[0] + bx * (hi[0] - lo[0]), lo[1] + by * (hi[1] - lo[1])];
                if let Some((t, w)) = mesh.locate(x, Some(hint)) {
                    hint = t;
                    let v = p.evaluate_local(mesh, t, w, x);
                    raster[cy * grid + cx] = v;
                    total += v;
                }
            }
        }
        if !(total > 0.0) {
            return Err(Error::Distribution(
                "rasterized density is identically zero".into(),
            ));
        }
        // Normalize in box coordinates: Σ p̃ ΔA = 1 with ΔA = 1/grid².
        let cell_area = 1.0 / (grid * grid) as f64;
        let scale = 1.0 / (total * cell_area);
        for v in &mut raster {
            *v *= scale;
        }

        let max_idx = modes.iter().map(|&(i, j)| i.max(j)).max().unwrap_or(0);
        // Separable projection: tables X[i][cx] = cos(iπ x̃_cx)/√c_i.
        let tables: Vec<Vec<f64>> = (0..=max_idx)
            .map(|i| {
                (0..grid)
                    .map(|c| {
                        let x = (c as f64 + 0.5) / grid as f64;
                        (i as f64 * std::f64::consts::PI * x).cos() / norm_factor(i)
                    })
                    .collect()
            })
            .collect();
        // py[j][cx] = Σ_cy raster[cy][cx] · Y_j[cy]
        let mut py = vec![vec![0.0; grid]; max_idx + 1];
        for (j, row) in py.iter_mut().enumerate() {
            for cx in 0..grid {
                let mut acc = 0.0;
                for cy in 0..grid {
                    acc += raster[cy * grid + cx] * tables[j][cy];
                }
                row[cx] = acc;
            }
        }
        let xi_hat: Vec<f64> = modes
            .iter()
            .map(|&(i, j)| {
                let mut acc = 0.0;
                for cx in 0..grid {
                    acc += tables[i][cx] * py[j][cx];
                }
                acc * cell_area
            })
            .collect();

        Ok(FourierMetric {
            lo,
            hi,
            modes,
            weights,
            xi_hat,
        })
    }

    /// Trajectory cosine coefficients pooled over agents and states.
    pub fn trajectory_coefficients(&self, states: &[Vec<Point>]) -> Vec<f64> {
        let total: usize = states.iter().map(Vec::len).sum();
        let mut xi = vec![0.0; self.modes.len()];
        for agent in states {
            for &x in agent {
                let bx = (x[0] - self.lo[0]) / (self.hi[0] - self.lo[0]);
                let by = (x[1] - self.lo[1]) / (self.hi[1] - self.lo[1]);
                for (k, &(i, j)) in self.modes.iter().enumerate() {
                    let pi = std::f64::consts::PI;
                    xi[k] += (i as f64 * pi * bx).cos() * (j as f64 * pi * by).cos()
                        / (norm_factor(i) * norm_factor(j));
                }
            }
        }
        for v in &mut xi {
            *v /= total as f64;
        }
        xi
    }

    pub fn evaluate(&self, states: &[Vec<Point>]) -> f64 {
        let xi = self.trajectory_coefficients(states);
        self.weights
            .iter()
            .zip(xi.iter().zip(&self.xi_hat))
            .map(|(w, (a, b))| w * (a - b) * (a - b))
            .sum()
    }
}

/// Convenience wrapper: box = mesh bounding box, 256×256 raster.
pub fn fourier_metric(
    mesh: &TriMesh,
    p: &InfoDistribution,
    states: &[Vec<Point>],
    k_trunc: usize,
) -> Result<f64> {
    let (lo, hi) = mesh.bounding_box();
    Ok(FourierMetric::build(mesh, p, lo, hi, 256, k_trunc)?.evaluate(states))
}

/// First `k` cosine index pairs sorted by i² + j² (ties by (i, j)).
fn cosine_modes(k: usize) -> Vec<(usize, usize)> {
    let cap = 2 * (k as f64).sqrt() as usize + 2;
    let mut modes: Vec<(usize, usize)> = (0..=cap)
        .flat_map(|i| (0..=cap).map(move |j| (i, j)))
        .collect();
    modes.sort_by_key(|&(i, j)| (i * i + j * j, i, j));
    modes.truncate(k);
    modes
}

fn norm_factor(i: usize) -> f64 {
    // L² norm of cos(iπx) on [0,1]: 1 for i = 0, 1/√2 otherwise.
    if i == 0 {
        1.0
    } else {
        std::f64::consts::FRAC_1_SQRT_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, evaluate_basis, solve_eigenbasis};
    use crate::geom;
    use crate::mesh::{generate_map, DistSpec, MapSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        mesh: TriMesh,
        fm: FemMatrices,
        basis: SpectralBasis,
        p: InfoDistribution,
        spec: MetricSpec,
    }

    fn fixture(h: f64, k: usize) -> Fixture {
        let mesh = generate_map(&MapSpec::square(1.0, h)).unwrap();
        let fm = assemble(&mesh).unwrap();
        let basis = solve_eigenbasis(&mesh, &fm, BoundaryCondition::Natural, k).unwrap();
        let p = InfoDistribution::build(&mesh, DistSpec::Uniform).unwrap();
        let spec = MetricSpec::new(&basis, k).unwrap();
        Fixture {
            mesh,
            fm,
            basis,
            p,
            spec,
        }
    }

    #[test]
    fn uniform_map_coefficients_are_delta() {
        let f = fixture(0.1, 12);
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 12).unwrap();
        assert!((xh[0] - 1.0).abs() < 1e-8, "xi_hat[0] = {}", xh[0]);
        for (k, v) in xh.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-8, "xi_hat[{k}] = {v}");
        }
    }

    #[test]
    fn mode_injection_is_recovered() {
        let f = fixture(0.1, 12);
        let c = 0.1;
        let raw: Vec<f64> = f.basis.vectors[3]
            .iter()
            .map(|&phi| 1.0 + c * phi)
            .collect();
        assert!(raw.iter().all(|&v| v > 0.0));
        let p = InfoDistribution::from_values(&f.mesh, raw, DistSpec::Tabulated).unwrap();
        let xh = map_coefficients(&p, &f.basis, &f.fm, 12).unwrap();
        // Adding c·φ_3 to the (already normalized) uniform density leaves the
        // mass unchanged, so normalization is a no-op and ξ̂_3 = c.
        assert!((xh[3] - c).abs() < 1e-8, "xi_hat[3] = {}", xh[3]);
    }

    #[test]
    fn map_coefficients_match_midpoint_quadrature() {
        // Independent oracle: ∫ p φ_k by the 3-point edge-midpoint rule,
        // exact for products of linear functions.
        let f = fixture(0.2, 8);
        let raw: Vec<f64> = f
            .mesh
            .vertices
            .iter()
            .map(|v| 1.0 + 0.5 * v[0] + 0.25 * v[1])
            .collect();
        let p = InfoDistribution::from_values(&f.mesh, raw, DistSpec::Tabulated).unwrap();
        let xh = map_coefficients(&p, &f.basis, &f.fm, 8).unwrap();
        for k in 0..8 {
            let col = &f.basis.vectors[k];
            let mut oracle = 0.0;
            for t in 0..f.mesh.num_triangles() {
                let tri = f.mesh.triangles[t];
                let pv = [p.values[tri[0]], p.values[tri[1]], p.values[tri[2]]];
                let fv = [col[tri[0]], col[tri[1]], col[tri[2]]];
                let mut acc = 0.0;
                for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                    acc += (0.5 * (pv[a] + pv[b])) * (0.5 * (fv[a] + fv[b]));
                }
                oracle += f.mesh.area(t) * acc / 3.0;
            }
            assert!(
                (xh[k] - oracle).abs() < 1e-10,
                "mode {k}: {} vs oracle {oracle}",
                xh[k]
            );
        }
    }

    #[test]
    fn stationary_agent_coefficients_and_pooling() {
        let f = fixture(0.1, 10);
        let q = [0.37, 0.58];
        let xi = trajectory_coefficients(&[vec![q; 5]], &f.basis, &f.mesh, 10).unwrap();
        let phi = evaluate_basis(&f.mesh, &f.basis, q).unwrap();
        for k in 0..10 {
            assert!((xi[k] - phi[k]).abs() < 1e-12);
        }

        // Duplicating every state leaves the average unchanged.
        let path = vec![[0.2, 0.3], [0.4, 0.5], [0.6, 0.7]];
        let doubled: Vec<Point> = path.iter().flat_map(|&s| [s, s]).collect();
        let a = trajectory_coefficients(&[path.clone()], &f.basis, &f.mesh, 10).unwrap();
        let b = trajectory_coefficients(&[doubled], &f.basis, &f.mesh, 10).unwrap();
        for k in 0..10 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }

        // Two agents pool exactly like one agent walking both paths.
        let p1 = vec![[0.2, 0.3], [0.4, 0.5]];
        let p2 = vec![[0.6, 0.7], [0.8, 0.2]];
        let two = trajectory_coefficients(&[p1.clone(), p2.clone()], &f.basis, &f.mesh, 10).unwrap();
        let joined: Vec<Point> = p1.into_iter().chain(p2).collect();
        let one = trajectory_coefficients(&[joined], &f.basis, &f.mesh, 10).unwrap();
        for k in 0..10 {
            assert!((two[k] - one[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn ergodicity_zero_iff_match() {
        let f = fixture(0.2, 6);
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 6).unwrap();
        let coeffs = SpectralCoeffs {
            xi: xh.clone(),
            xi_hat: xh.clone(),
        };
        assert_eq!(ergodicity(&coeffs, &f.spec), 0.0);

        // Natural mode 0 has λ=0 so w_0 = 1 and a δ offset costs δ².
        let mut xi = xh.clone();
        xi[0] += 0.25;
        let coeffs = SpectralCoeffs { xi, xi_hat: xh };
        let e = ergodicity(&coeffs, &MetricSpec::new(&f.basis, 6).unwrap());
        assert!((e - 0.0625).abs() < 1e-12, "E = {e}");
    }

    #[test]
    fn stationary_center_matches_direct_sum_oracle() {
        let f = fixture(0.1, 10);
        let q = [0.5, 0.5];
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 10).unwrap();
        let xi = trajectory_coefficients(&[vec![q]], &f.basis, &f.mesh, 10).unwrap();
        let e = ergodicity(
            &SpectralCoeffs {
                xi: xi.clone(),
                xi_hat: xh.clone(),
            },
            &f.spec,
        );
        // Direct summation with independently evaluated basis values.
        let phi = evaluate_basis(&f.mesh, &f.basis, q).unwrap();
        let mut oracle = 0.0;
        for k in 0..10 {
            let w = (1.0 + f.basis.eigenvalues[k].max(0.0).sqrt()).powi(-2);
            oracle += w * (phi[k] - xh[k]).powi(2);
        }
        assert!((e - oracle).abs() < 1e-12, "E = {e} vs {oracle}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = fixture(0.1, 24);
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 24).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..3 {
            let states: Vec<Vec<Point>> = vec![(0..12)
                .map(|_| [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)])
                .collect()];
            let xi = trajectory_coefficients(&states, &f.basis, &f.mesh, 24).unwrap();
            let coeffs = SpectralCoeffs {
                xi,
                xi_hat: xh.clone(),
            };
            let grad = ergodicity_gradient(&states, &f.basis, &f.spec, &coeffs, &f.mesh).unwrap();
            let eps = 1e-6;
            for s in 0..states[0].len() {
                for d in 0..2 {
                    let mut plus = states.clone();
                    plus[0][s][d] += eps;
                    let mut minus = states.clone();
                    minus[0][s][d] -= eps;
                    let ep = eval(&f, &plus, &xh);
                    let em = eval(&f, &minus, &xh);
                    let fd = (ep - em) / (2.0 * eps);
                    let g = grad[0][s][d];
                    let denom = fd.abs().max(g.abs()).max(1e-12);
                    assert!(
                        (fd - g).abs() / denom < 1e-4,
                        "state {s} dim {d}: fd {fd:e} vs grad {g:e}"
                    );
                }
            }
        }
    }

    fn eval(f: &Fixture, states: &[Vec<Point>], xh: &[f64]) -> f64 {
        let xi = trajectory_coefficients(states, &f.basis, &f.mesh, f.spec.k_trunc).unwrap();
        ergodicity(
            &SpectralCoeffs {
                xi,
                xi_hat: xh.to_vec(),
            },
            &f.spec,
        )
    }

    #[test]
    fn agent_permutation_invariance() {
        let f = fixture(0.2, 6);
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 6).unwrap();
        let a = vec![[0.2, 0.3], [0.4, 0.5]];
        let b = vec![[0.7, 0.6], [0.1, 0.8]];
        let fwd = trajectory_coefficients(&[a.clone(), b.clone()], &f.basis, &f.mesh, 6).unwrap();
        let rev = trajectory_coefficients(&[b.clone(), a.clone()], &f.basis, &f.mesh, 6).unwrap();
        for k in 0..6 {
            assert!((fwd[k] - rev[k]).abs() < 1e-15);
        }
        let c1 = SpectralCoeffs {
            xi: fwd,
            xi_hat: xh.clone(),
        };
        let c2 = SpectralCoeffs {
            xi: rev,
            xi_hat: xh,
        };
        assert!((ergodicity(&c1, &f.spec) - ergodicity(&c2, &f.spec)).abs() < 1e-15);
        let g1 = ergodicity_gradient(&[a.clone(), b.clone()], &f.basis, &f.spec, &c1, &f.mesh)
            .unwrap();
        let g2 = ergodicity_gradient(&[b, a], &f.basis, &f.spec, &c2, &f.mesh).unwrap();
        // ξ sums in agent order, so permutation shifts the last few ulps.
        for (x, y) in g1[0].iter().zip(&g2[1]) {
            assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
        }
        for (x, y) in g1[1].iter().zip(&g2[0]) {
            assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn truncation_is_monotone() {
        let f = fixture(0.1, 20);
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 20).unwrap();
        let states = vec![vec![[0.3, 0.4], [0.6, 0.2], [0.8, 0.9]]];
        let xi = trajectory_coefficients(&states, &f.basis, &f.mesh, 20).unwrap();
        let mut prev = 0.0;
        for k in 1..=20 {
            let spec = MetricSpec::new(&f.basis, k).unwrap();
            let e = ergodicity(
                &SpectralCoeffs {
                    xi: xi[..k].to_vec(),
                    xi_hat: xh[..k].to_vec(),
                },
                &spec,
            );
            assert!(e >= prev - 1e-15, "E({k}) = {e} < E({}) = {prev}", k - 1);
            prev = e;
        }
    }

    #[test]
    fn fourier_uniform_box_has_single_mode() {
        let f = fixture(0.1, 6);
        let fspec = FourierMetric::build(&f.mesh, &f.p, [0.0, 0.0], [1.0, 1.0], 128, 25).unwrap();
        assert_eq!(fspec.modes[0], (0, 0));
        assert!((fspec.xi_hat[0] - 1.0).abs() < 1e-10);
        for (k, v) in fspec.xi_hat.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-10, "mode {k}: {v}");
        }
    }

    #[test]
    fn fourier_tracks_lb_on_obstacle_free_square() {
        let f = fixture(0.05, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let states: Vec<Vec<Point>> = vec![(0..60)
            .map(|_| [rng.random_range(0.02..0.98), rng.random_range(0.02..0.98)])
            .collect()];
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 40).unwrap();
        let xi = trajectory_coefficients(&states, &f.basis, &f.mesh, 40).unwrap();
        let lb = ergodicity(&SpectralCoeffs { xi, xi_hat: xh }, &f.spec);
        let fourier = fourier_metric(&f.mesh, &f.p, &states, 40).unwrap();
        let rel = (fourier - lb).abs() / lb;
        assert!(rel < 0.2, "F = {fourier}, LB = {lb}, rel {rel}");
    }

    #[test]
    fn gradient_shift_changes_only_that_state() {
        let f = fixture(0.2, 8);
        let xh = map_coefficients(&f.p, &f.basis, &f.fm, 8).unwrap();
        let states = vec![vec![[0.3, 0.4], [0.62, 0.21], [0.81, 0.86]]];
        let xi = trajectory_coefficients(&states, &f.basis, &f.mesh, 8).unwrap();
        let coeffs = SpectralCoeffs {
            xi,
            xi_hat: xh.clone(),
        };
        let g = ergodicity_gradient(&states, &f.basis, &f.spec, &coeffs, &f.mesh).unwrap();
        // Shift state 1 within its triangle: only its own gradient entry uses
        // the (unchanged) triangle gradient, so entries 0 and 2 keep the same
        // per-mode direction table even though ξ moved.
        let mut shifted = states.clone();
        shifted[0][1] = [0.625, 0.215];
        let xi2 = trajectory_coefficients(&shifted, &f.basis, &f.mesh, 8).unwrap();
        let (t_before, _) = f.mesh.locate(states[0][1], None).unwrap();
        let (t_after, _) = f.mesh.locate(shifted[0][1], None).unwrap();
        assert_eq!(t_before, t_after, "shift must stay inside one triangle");
        let coeffs2 = SpectralCoeffs {
            xi: xi2,
            xi_hat: xh,
        };
        let g2 = ergodicity_gradient(&shifted, &f.basis, &f.spec, &coeffs2, &f.mesh).unwrap();
        // With piecewise-linear bases the mapping x -> grad is affine in the
        // residual; verify the non-shifted states changed only through ξ.
        for s in [0usize, 2] {
            let db = geom::dist(g[0][s], g2[0][s]);
            let d1 = geom::dist(g[0][1], g2[0][1]);
            assert!(db <= d1 + 1e-12, "state {s} moved more than the shifted one");
        }
    }
}
