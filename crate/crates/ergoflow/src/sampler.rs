//! Randomly switched flow trajectories.
//!
//! Sampling i.i.d. uniform coefficients on [-1, 1] per switch interval
//! realizes the random flow whose trajectories become ergodic in the long
//! run (provided the density support is connected); these trajectories seed
//! the finite-horizon optimizer.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::advect;
use crate::error::{Error, Result};
use crate::flow::{CombinedField, FlowBasis};
use crate::geom::{self, Point};
use crate::mesh::{self, TriMesh};

/// RK4 substeps per stored trajectory state.
pub const SUBSTEPS: usize = 10;

/// Piecewise-constant, right-continuous field-coefficient schedule shared by
/// all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    /// Ascending interval start times, beginning at 0.
    pub switch_times: Vec<f64>,
    /// One coefficient row per interval.
    pub rows: Vec<Vec<f64>>,
    /// RNG seed for sampled schedules; `None` for constructed ones.
    pub seed: Option<u64>,
}

impl CoefficientSchedule {
    pub fn n_fields(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Index of the interval containing time `t` (right-continuous).
    pub fn row_index_at(&self, t: f64) -> usize {
        match self.switch_times.partition_point(|&s| s <= t) {
            0 => 0,
            k => k - 1,
        }
    }

    pub fn row_at(&self, t: f64) -> &[f64] {
        &self.rows[self.row_index_at(t)]
    }

    /// Re-sample the schedule onto one row per integration step (row chosen
    /// at the step midpoint, exactly as the integrator does). The result
    /// reproduces the original trajectory bit for bit.
    pub fn refine_per_step(&self, dt: f64, steps: usize) -> CoefficientSchedule {
        let mut switch_times = Vec::with_capacity(steps);
        let mut rows = Vec::with_capacity(steps);
        for t in 0..steps {
            switch_times.push(t as f64 * dt);
            rows.push(self.row_at((t as f64 + 0.5) * dt).to_vec());
        }
        CoefficientSchedule {
            switch_times,
            rows,
            seed: self.seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.rows.len() != self.switch_times.len() {
            return Err(Error::InvalidArgument(
                "schedule rows and switch times must be non-empty and equal length".into(),
            ));
        }
        let n = self.rows[0].len();
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument(
                "schedule rows must share one width".into(),
            ));
        }
        if self.switch_times[0] != 0.0
            || self.switch_times.windows(2).any(|w| w[1] <= w[0])
            || self
                .rows
                .iter()
                .any(|r| r.iter().any(|c| !c.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "switch times must ascend from 0 and coefficients must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Draw ⌈horizon / switch_interval⌉ rows of i.i.d. U[-1, 1] coefficients.
pub fn sample_schedule(
    n_fields: usize,
    horizon: f64,
    switch_interval: f64,
    seed: u64,
) -> Result<CoefficientSchedule> {
    if !(switch_interval > 0.0) || !(horizon > 0.0) || n_fields == 0 {
        return Err(Error::InvalidArgument(
            "n_fields, horizon and switch_interval must be positive".into(),
        ));
    }
    let count = (horizon / switch_interval).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(count);
    let mut switch_times = Vec::with_capacity(count);
    for i in 0..count {
        switch_times.push(i as f64 * switch_interval);
        rows.push(
            (0..n_fields)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect(),
        );
    }
    Ok(CoefficientSchedule {
        switch_times,
        rows,
        seed: Some(seed),
    })
}

/// Time-stamped multi-agent states driven by one shared schedule.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub vmax: f64,
    /// `states[agent][step]`, including the start at step 0.
    pub states: Vec<Vec<Point>>,
    pub schedule: CoefficientSchedule,
}

impl Trajectory {
    pub fn num_agents(&self) -> usize {
        self.states.len()
    }

    /// Stored states per agent (steps + 1).
    pub fn num_states(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> f64 {
        (self.num_states().saturating_sub(1)) as f64 * self.dt
    }

    /// Check the feasibility invariants: every state on the mesh and every
    /// consecutive pair within the speed bound.
    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        let bound = self.vmax * self.dt * (1.0 + 1e-9);
        for agent in &self.states {
            let mut hint = 0;
            for (i, &x) in agent.iter().enumerate() {
                match mesh.locate(x, Some(hint)) {
                    Some((t, _)) => hint = t,
                    None => return Err(Error::OutsideDomain(x[0], x[1])),
                }
                if i > 0 {
                    let step = geom::dist(agent[i - 1], x);
                    if step > bound {
                        return Err(Error::InvalidArgument(format!(
                            "step {i} length {step:.6e} exceeds vmax*dt = {bound:.6e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Minimum inter-agent distance across all stored steps; infinity for a
    /// single agent.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for step in 0..self.num_states() {
            for a in 0..self.num_agents() {
                for b in (a + 1)..self.num_agents() {
                    min = min.min(geom::dist(self.states[a][step], self.states[b][step]));
                }
            }
        }
        min
    }
}

/// Integrate all agents through the switched flow for `horizon` seconds.
///
/// Classical RK4 with [`SUBSTEPS`] substeps per stored state and per-stage
/// speed clamping to `vmax`; one coefficient row per step, chosen at the
/// step's midpoint time.
pub fn integrate(
    mesh: &TriMesh,
    flow: &FlowBasis,
    schedule: &CoefficientSchedule,
    starts: &[Point],
    dt: f64,
    vmax: f64,
    horizon: f64,
) -> Result<Trajectory> {
    schedule.validate()?;
    if schedule.n_fields() != flow.n_fields {
        return Err(Error::SizeMismatch {
            expected: flow.n_fields,
            got: schedule.n_fields(),
        });
    }
    if !(dt > 0.0) || !(horizon > 0.0) || !(vmax > 0.0) {
        return Err(Error::InvalidArgument(
            "dt, vmax and horizon must be positive".into(),
        ));
    }
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no start points".into()));
    }
    let steps = (horizon / dt).round().max(1.0) as usize;

    let mut combined: Vec<Option<CombinedField>> = vec![None; schedule.rows.len()];
    let mut states: Vec<Vec<Point>> = Vec::with_capacity(starts.len());
    for &start in starts {
        let (tri0, _) = mesh
            .locate(start, None)
            .ok_or(Error::OutsideDomain(start[0], start[1]))?;
        let mut path = Vec::with_capacity(steps + 1);
        path.push(start);
        let (mut x, mut tri) = (start, tri0);
        let h = dt / SUBSTEPS as f64;
        for step in 0..steps {
            let row = schedule.row_index_at((step as f64 + 0.5) * dt);
            if combined[row].is_none() {
                combined[row] = Some(flow.combine(&schedule.rows[row])?);
            }
            let table = &combined[row].as_ref().unwrap().velocity;
            for _ in 0..SUBSTEPS {
                let (xn, tn) =
                    advect::rk4_substep(mesh, &|tr| table[tr], Some(vmax), x, tri, h, None)?;
                x = xn;
                tri = tn;
            }
            path.push(x);
        }
        states.push(path);
    }
    Ok(Trajectory {
        dt,
        vmax,
        states,
        schedule: schedule.clone(),
    })
}

/// Cor. precondition for unique ergodicity: the sub-mesh of triangles whose
/// centroid density exceeds the floor must be connected.
pub fn connectivity_check(mesh: &TriMesh, vertex_density: &[f64]) -> bool {
    mesh::support_connected(mesh, vertex_density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, solve_eigenbasis, BoundaryCondition};
    use crate::mesh::{generate_map, DistSpec, InfoDistribution, MapSpec};

    fn setup(h: f64, n_fields: usize, map: MapSpec) -> (TriMesh, FlowBasis) {
        let mesh = generate_map(&map).unwrap();
        let fm = assemble(&mesh).unwrap();
        let basis = solve_eigenbasis(&mesh, &fm, BoundaryCondition::Dirichlet, n_fields).unwrap();
        let p = InfoDistribution::build(&mesh, DistSpec::Uniform).unwrap();
        let flow = crate::flow::build_flow_basis(&mesh, &basis, &p, n_fields).unwrap();
        let _ = h;
        (mesh, flow)
    }

    #[test]
    fn schedule_row_count_and_determinism() {
        let s = sample_schedule(4, 5.0, 1.0, 9).unwrap();
        assert_eq!(s.rows.len(), 5);
        assert_eq!(s.switch_times, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let s2 = sample_schedule(4, 5.0, 1.0, 9).unwrap();
        assert_eq!(s, s2);
        let s3 = sample_schedule(4, 5.0, 1.0, 10).unwrap();
        assert_ne!(s, s3);
    }

    #[test]
    fn schedule_entries_are_uniform() {
        let s = sample_schedule(100, 100.0, 1.0, 3).unwrap();
        let all: Vec<f64> = s.rows.iter().flatten().cloned().collect();
        assert_eq!(all.len(), 10_000);
        assert!(all.iter().all(|c| (-1.0..=1.0).contains(c)));
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn schedule_lookup_is_right_continuous() {
        let s = sample_schedule(2, 3.0, 1.0, 0).unwrap();
        assert_eq!(s.row_index_at(0.0), 0);
        assert_eq!(s.row_index_at(0.999), 0);
        assert_eq!(s.row_index_at(1.0), 1);
        assert_eq!(s.row_index_at(2.5), 2);
        assert_eq!(s.row_index_at(99.0), 2);
    }

    #[test]
    fn zero_schedule_is_stationary() {
        let (mesh, flow) = setup(0.1, 4, MapSpec::square(1.0, 0.1));
        let schedule = CoefficientSchedule {
            switch_times: vec![0.0],
            rows: vec![vec![0.0; 4]],
            seed: None,
        };
        let traj = integrate(&mesh, &flow, &schedule, &[[0.3, 0.6]], 0.01, 1.0, 1.0).unwrap();
        for s in &traj.states[0] {
            assert_eq!(*s, [0.3, 0.6]);
        }
    }

    #[test]
    fn trajectories_stay_inside_all_maps() {
        for map in [
            MapSpec::square(1.0, 0.1),
            MapSpec::default_maze(1.0 / 27.0),
            MapSpec::default_rooms(0.06),
        ] {
            let (mesh, flow) = setup(0.1, 8, map);
            let start = mesh.centroid(0);
            for seed in 0..3 {
                let sched = sample_schedule(8, 3.0, 0.5, seed).unwrap();
                let traj =
                    integrate(&mesh, &flow, &sched, &[start], 0.01, 1.0, 3.0).unwrap();
                traj.validate(&mesh).unwrap();
            }
        }
    }

    #[test]
    fn refined_schedule_reproduces_trajectory() {
        let (mesh, flow) = setup(0.1, 6, MapSpec::square(1.0, 0.1));
        let sched = sample_schedule(6, 2.0, 0.5, 4).unwrap();
        let dt = 0.01;
        let traj = integrate(&mesh, &flow, &sched, &[[0.4, 0.4]], dt, 1.0, 2.0).unwrap();
        let refined = sched.refine_per_step(dt, 200);
        let traj2 = integrate(&mesh, &flow, &refined, &[[0.4, 0.4]], dt, 1.0, 2.0).unwrap();
        assert_eq!(traj.states, traj2.states);
    }

    #[test]
    fn shared_schedule_keeps_agents_apart() {
        let (mesh, flow) = setup(0.1, 6, MapSpec::square(1.0, 0.1));
        let sched = sample_schedule(6, 2.0, 0.5, 21).unwrap();
        let starts: Vec<Point> = (0..7)
            .map(|i| [0.2 + 0.1 * i as f64, 0.3 + 0.05 * i as f64])
            .collect();
        let traj = integrate(&mesh, &flow, &sched, &starts, 1e-3, 1.0, 2.0).unwrap();
        let initial_min = {
            let mut min = f64::INFINITY;
            for a in 0..7 {
                for b in (a + 1)..7 {
                    min = min.min(geom::dist(starts[a], starts[b]));
                }
            }
            min
        };
        let min = traj.min_pairwise_distance();
        assert!(min > 0.0);
        assert!(
            min > 1e-3 * initial_min,
            "agents nearly collided: {min} vs initial {initial_min}"
        );
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let (mesh, flow) = setup(0.05, 6, MapSpec::square(1.0, 0.05));
        let sched = sample_schedule(6, 1.0, 0.25, 13).unwrap();
        // Edge crossings on the piecewise-constant fields leave O(h·Δv)
        // local errors; dt = 2e-4 resolves them for full-scale coefficients.
        let dt = 2e-4;
        let steps = 5000;
        let starts: Vec<Point> = (0..20)
            .map(|i| [0.15 + 0.035 * i as f64, 0.25 + 0.025 * i as f64])
            .collect();
        // Large vmax so the clamp never engages.
        let traj = integrate(&mesh, &flow, &sched, &starts, dt, 1e9, 1.0).unwrap();
        let ends: Vec<Point> = traj.states.iter().map(|s| *s.last().unwrap()).collect();

        let fine = sched.refine_per_step(dt, steps);
        let reversed = CoefficientSchedule {
            switch_times: fine.switch_times.clone(),
            rows: (0..steps)
                .map(|t| fine.rows[steps - 1 - t].iter().map(|c| -c).collect())
                .collect(),
            seed: None,
        };
        let back = integrate(&mesh, &flow, &reversed, &ends, dt, 1e9, 1.0).unwrap();
        let mut sq = 0.0;
        for (a, s) in back.states.iter().zip(&starts) {
            let ret = *a.last().unwrap();
            sq += geom::dot(geom::sub(ret, *s), geom::sub(ret, *s));
        }
        let rms = (sq / starts.len() as f64).sqrt();
        assert!(rms < 1e-3, "return RMS {rms:e}");
    }

    #[test]
    fn connectivity_check_matches_support() {
        let mesh = generate_map(&MapSpec::default_rooms(0.06)).unwrap();
        assert!(connectivity_check(&mesh, &vec![1.0; mesh.num_vertices()]));
        let blocked: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|v| if v[0].abs() < 0.3 { 0.0 } else { 1.0 })
            .collect();
        assert!(!connectivity_check(&mesh, &blocked));
    }

    #[test]
    fn integrate_rejects_outside_start() {
        let (mesh, flow) = setup(0.25, 2, MapSpec::square(1.0, 0.25));
        let sched = sample_schedule(2, 1.0, 0.5, 0).unwrap();
        let err = integrate(&mesh, &flow, &sched, &[[2.0, 2.0]], 0.01, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain(..)));
    }
}
