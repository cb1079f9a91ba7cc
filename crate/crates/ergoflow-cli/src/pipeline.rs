//! Stage orchestration: mesh-gen → eig → fields → sample → optimize →
//! metric → report, with content-hash caching between stages. A rerun with
//! unchanged config and seeds recomputes nothing and leaves every artifact
//! byte-identical.

use std::path::{Path, PathBuf};

use ergoflow::fem::{self, BoundaryCondition, FemMatrices, SpectralBasis};
use ergoflow::flow::{self, FlowBasis};
use ergoflow::mesh::{self, InfoDistribution, TriMesh};
use ergoflow::metric::{self, FourierMetric, MetricSpec, SpectralCoeffs};
use ergoflow::optimizer::{descend, ErgodicProblem, IterationReport};
use ergoflow::sampler::{self, Trajectory};
use ergoflow::Result;

use crate::artifacts::{self, MetricRow};
use crate::cache;
use crate::config::Config;
use crate::render::{render_svg, RenderSpec};
use crate::report::report_tables;

pub struct Pipeline {
    pub cfg: Config,
    pub out: PathBuf,
    /// Recompute every stage, ignoring cached artifacts.
    pub force: bool,
}

/// What a full run produced; `recomputed` is per executed stage, in order.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub artifacts: Vec<PathBuf>,
    pub recomputed: Vec<bool>,
}

impl RunSummary {
    fn push(&mut self, path: &Path, recomputed: bool) {
        self.artifacts.push(path.to_path_buf());
        self.recomputed.push(recomputed);
    }

    pub fn any_recomputed(&self) -> bool {
        self.recomputed.iter().any(|&r| r)
    }
}

impl Pipeline {
    pub fn new(cfg: Config, out: Option<PathBuf>, seed: Option<u64>, force: bool) -> Pipeline {
        let mut cfg = cfg;
        if let Some(seed) = seed {
            cfg.run.seeds = vec![seed];
        }
        let out = out.unwrap_or_else(|| cfg.run.out_dir.clone());
        Pipeline { cfg, out, force }
    }

    pub fn mesh_path(&self) -> PathBuf {
        self.out.join("mesh.txt")
    }
    pub fn dist_path(&self) -> PathBuf {
        self.out.join("dist.txt")
    }
    pub fn basis_path(&self, bc: BoundaryCondition) -> PathBuf {
        match bc {
            BoundaryCondition::Dirichlet => self.out.join("basis_dirichlet.txt"),
            BoundaryCondition::Natural => self.out.join("basis_natural.txt"),
        }
    }
    pub fn fields_path(&self) -> PathBuf {
        self.out.join("fields.csv")
    }
    pub fn schedule_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}_schedule.csv"))
    }
    pub fn seed_traj_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}_sampled.csv"))
    }
    pub fn opt_schedule_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}_opt_schedule.csv"))
    }
    pub fn opt_traj_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}_optimized.csv"))
    }
    pub fn iterations_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}_iterations.csv"))
    }
    pub fn svg_path(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}.svg"))
    }
    pub fn metrics_path(&self) -> PathBuf {
        self.out.join("metrics.csv")
    }
    pub fn report_path(&self) -> PathBuf {
        self.out.join("report.md")
    }

    /// Produce-or-reuse an artifact keyed by `input_key`.
    fn ensure(
        &self,
        path: &Path,
        input_key: &str,
        produce: impl FnOnce() -> Result<String>,
    ) -> Result<(String, bool)> {
        if !self.force && cache::is_current(path, input_key) {
            return Ok((std::fs::read_to_string(path)?, false));
        }
        let content = produce()?;
        cache::store(path, &content, input_key)?;
        Ok((content, true))
    }

    pub fn stage_mesh(&self) -> Result<(TriMesh, String, bool)> {
        let spec = self.cfg.map_spec()?;
        let key = cache::hash_parts(&[format!("{spec:?}").as_bytes()]);
        let path = self.mesh_path();
        let (text, recomputed) =
            self.ensure(&path, &key, || Ok(mesh::mesh_to_string(&mesh::generate_map(&spec)?)))?;
        Ok((mesh::mesh_from_str(&text)?, text, recomputed))
    }

    pub fn stage_dist(
        &self,
        mesh: &TriMesh,
        mesh_text: &str,
    ) -> Result<(InfoDistribution, String, bool)> {
        let spec = self.cfg.dist_spec()?;
        let key = cache::hash_parts(&[mesh_text.as_bytes(), format!("{spec:?}").as_bytes()]);
        let path = self.dist_path();
        let (text, recomputed) = self.ensure(&path, &key, || {
            Ok(mesh::dist_to_string(&InfoDistribution::build(mesh, spec.clone())?))
        })?;
        // Rebuild from the analytic spec so downstream keeps exact evaluation;
        // the sidecar file is the language-neutral interchange format.
        let dist = InfoDistribution::build(mesh, spec)?;
        Ok((dist, text, recomputed))
    }

    pub fn stage_eig(
        &self,
        mesh: &TriMesh,
        mesh_text: &str,
        fm: &FemMatrices,
        bc: BoundaryCondition,
        count: usize,
    ) -> Result<(SpectralBasis, String, bool)> {
        let mesh_hash = cache::hash_bytes(mesh_text.as_bytes());
        let bc_name = match bc {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Natural => "natural",
        };
        let key = cache::hash_parts(&[
            mesh_hash.as_bytes(),
            bc_name.as_bytes(),
            count.to_string().as_bytes(),
        ]);
        let path = self.basis_path(bc);
        let (text, recomputed) = self.ensure(&path, &key, || {
            let basis = fem::solve_eigenbasis(mesh, fm, bc, count)?;
            Ok(artifacts::basis_to_string(&basis, &mesh_hash))
        })?;
        Ok((artifacts::basis_from_str(&text, &mesh_hash)?, text, recomputed))
    }

    pub fn stage_fields(
        &self,
        mesh: &TriMesh,
        dist: &InfoDistribution,
        dirichlet: &SpectralBasis,
        upstream: &[&str],
    ) -> Result<(FlowBasis, String, bool)> {
        let n = self.cfg.planner.n_fields;
        let mut parts: Vec<&[u8]> = upstream.iter().map(|s| s.as_bytes()).collect();
        let n_text = n.to_string();
        parts.push(n_text.as_bytes());
        let key = cache::hash_parts(&parts);
        let flow = flow::build_flow_basis(mesh, dirichlet, dist, n)?;
        let path = self.fields_path();
        let (text, recomputed) =
            self.ensure(&path, &key, || Ok(artifacts::fields_to_csv(mesh, &flow)))?;
        Ok((flow, text, recomputed))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn stage_sample(
        &self,
        seed: u64,
        mesh: &TriMesh,
        flow: &FlowBasis,
        fields_text: &str,
        summary: &mut RunSummary,
    ) -> Result<(Trajectory, String)> {
        let cfg = &self.cfg;
        let sched_key = cache::hash_parts(&[
            format!(
                "{} {} {} {seed}",
                cfg.planner.n_fields, cfg.horizon.t_final, cfg.planner.switch_interval
            )
            .as_bytes(),
        ]);
        let schedule = sampler::sample_schedule(
            cfg.planner.n_fields,
            cfg.horizon.t_final,
            cfg.planner.switch_interval,
            seed,
        )?;
        let sched_path = self.schedule_path(seed);
        let (_, sched_new) = self.ensure(&sched_path, &sched_key, || {
            Ok(artifacts::schedule_to_csv(&schedule))
        })?;
        summary.push(&sched_path, sched_new);

        let traj_key = cache::hash_parts(&[
            fields_text.as_bytes(),
            sched_key.as_bytes(),
            format!(
                "{:?} {} {} {}",
                cfg.agents.starts, cfg.horizon.dt, cfg.planner.vmax, cfg.horizon.t_final
            )
            .as_bytes(),
        ]);
        let traj = sampler::integrate(
            mesh,
            flow,
            &schedule,
            &cfg.agents.starts,
            cfg.horizon.dt,
            cfg.planner.vmax,
            cfg.horizon.t_final,
        )?;
        let traj_path = self.seed_traj_path(seed);
        let (traj_text, traj_new) =
            self.ensure(&traj_path, &traj_key, || Ok(artifacts::trajectory_to_csv(&traj)))?;
        summary.push(&traj_path, traj_new);
        Ok((traj, traj_text))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn stage_optimize(
        &self,
        seed: u64,
        mesh: &TriMesh,
        dist: &InfoDistribution,
        flow: &FlowBasis,
        natural: &SpectralBasis,
        fm: &FemMatrices,
        seed_traj: &Trajectory,
        seed_traj_text: &str,
        natural_text: &str,
        summary: &mut RunSummary,
    ) -> Result<Trajectory> {
        let cfg = &self.cfg;
        let planner_desc = format!(
            "eta={} kappa={} max_outer={} tol={} k={}",
            cfg.planner.eta,
            cfg.planner.kappa,
            cfg.planner.max_outer,
            cfg.planner.socp_tolerance,
            cfg.planner.k_trunc
        );
        let key = cache::hash_parts(&[
            seed_traj_text.as_bytes(),
            natural_text.as_bytes(),
            planner_desc.as_bytes(),
        ]);
        let opt_path = self.opt_traj_path(seed);
        let sched_path = self.opt_schedule_path(seed);
        let iter_path = self.iterations_path(seed);

        if !self.force
            && cache::is_current(&opt_path, &key)
            && cache::is_current(&sched_path, &key)
            && cache::is_current(&iter_path, &key)
        {
            let (_, states) =
                artifacts::trajectory_from_csv(&std::fs::read_to_string(&opt_path)?)?;
            let schedule =
                artifacts::schedule_from_csv(&std::fs::read_to_string(&sched_path)?)?;
            summary.push(&opt_path, false);
            summary.push(&sched_path, false);
            summary.push(&iter_path, false);
            return Ok(Trajectory {
                dt: cfg.horizon.dt,
                vmax: cfg.planner.vmax,
                states,
                schedule,
            });
        }

        let problem = ErgodicProblem {
            mesh,
            density: dist,
            flow,
            basis: natural,
            fm,
            metric: MetricSpec::new(natural, cfg.planner.k_trunc)?,
            steps: cfg.steps(),
            dt: cfg.horizon.dt,
            vmax: cfg.planner.vmax,
            eta: cfg.planner.eta,
            kappa: cfg.planner.kappa,
            max_outer: cfg.planner.max_outer,
            socp_tolerance: cfg.planner.socp_tolerance,
        };
        let (optimized, reports) = descend(&problem, seed_traj)?;
        cache::store(&opt_path, &artifacts::trajectory_to_csv(&optimized), &key)?;
        cache::store(&sched_path, &artifacts::schedule_to_csv(&optimized.schedule), &key)?;
        cache::store(&iter_path, &iterations_to_csv(&reports), &key)?;
        summary.push(&opt_path, true);
        summary.push(&sched_path, true);
        summary.push(&iter_path, true);
        Ok(optimized)
    }

    /// Full experiment: every stage for every seed, then metrics and report.
    pub fn run_all(&self) -> Result<RunSummary> {
        let mut summary = RunSummary::default();
        let (mesh, mesh_text, m_new) = self.stage_mesh()?;
        summary.push(&self.mesh_path(), m_new);
        let (dist, dist_text, d_new) = self.stage_dist(&mesh, &mesh_text)?;
        summary.push(&self.dist_path(), d_new);

        let fm = fem::assemble(&mesh)?;
        let (dirichlet, dir_text, dir_new) = self.stage_eig(
            &mesh,
            &mesh_text,
            &fm,
            BoundaryCondition::Dirichlet,
            self.cfg.planner.n_fields,
        )?;
        summary.push(&self.basis_path(BoundaryCondition::Dirichlet), dir_new);
        let (natural, nat_text, nat_new) = self.stage_eig(
            &mesh,
            &mesh_text,
            &fm,
            BoundaryCondition::Natural,
            self.cfg.planner.k_trunc,
        )?;
        summary.push(&self.basis_path(BoundaryCondition::Natural), nat_new);

        let (flow, fields_text, f_new) =
            self.stage_fields(&mesh, &dist, &dirichlet, &[&mesh_text, &dist_text, &dir_text])?;
        summary.push(&self.fields_path(), f_new);

        let fourier = FourierMetric::build(
            &mesh,
            &dist,
            mesh.bounding_box().0,
            mesh.bounding_box().1,
            256,
            self.cfg.planner.k_trunc,
        )?;
        let metric_spec = MetricSpec::new(&natural, self.cfg.planner.k_trunc)?;
        let xi_hat =
            metric::map_coefficients(&dist, &natural, &fm, self.cfg.planner.k_trunc)?;

        let mut rows = Vec::new();
        for &seed in &self.cfg.run.seeds {
            let (seed_traj, seed_traj_text) =
                self.stage_sample(seed, &mesh, &flow, &fields_text, &mut summary)?;
            let optimized = self.stage_optimize(
                seed,
                &mesh,
                &dist,
                &flow,
                &natural,
                &fm,
                &seed_traj,
                &seed_traj_text,
                &nat_text,
                &mut summary,
            )?;

            let xi = metric::trajectory_coefficients(
                &optimized.states,
                &natural,
                &mesh,
                self.cfg.planner.k_trunc,
            )?;
            let lb = metric::ergodicity(
                &SpectralCoeffs {
                    xi,
                    xi_hat: xi_hat.clone(),
                },
                &metric_spec,
            );
            let f_metric = fourier.evaluate(&optimized.states);
            rows.push(MetricRow {
                map: self.cfg.map_label(),
                case: self.cfg.case_label(),
                agents: optimized.num_agents(),
                metric_f: f_metric,
                metric_lb: lb,
                k_trunc: self.cfg.planner.k_trunc,
                horizon: self.cfg.horizon.t_final,
                seed,
                min_pair_dist: optimized.min_pairwise_distance(),
            });

            let svg_key = cache::hash_parts(&[
                mesh_text.as_bytes(),
                dist_text.as_bytes(),
                artifacts::trajectory_to_csv(&optimized).as_bytes(),
            ]);
            let svg_path = self.svg_path(seed);
            let (_, svg_new) = self.ensure(&svg_path, &svg_key, || {
                let spec = RenderSpec {
                    density: true,
                    wireframe: false,
                    ..RenderSpec::default()
                };
                render_svg(&mesh, Some(&dist), None, Some(&optimized.states), &spec)
            })?;
            summary.push(&svg_path, svg_new);
        }

        let metrics_csv = artifacts::metrics_to_csv(&rows);
        let metrics_key = cache::hash_bytes(metrics_csv.as_bytes());
        let metrics_path = self.metrics_path();
        let (metrics_text, metrics_new) =
            self.ensure(&metrics_path, &metrics_key, || Ok(metrics_csv))?;
        summary.push(&metrics_path, metrics_new);

        let report_key = cache::hash_bytes(metrics_text.as_bytes());
        let report_path = self.report_path();
        let (_, report_new) = self.ensure(&report_path, &report_key, || {
            Ok(report_tables(&artifacts::metrics_from_csv(&metrics_text)?))
        })?;
        summary.push(&report_path, report_new);
        Ok(summary)
    }
}

fn iterations_to_csv(reports: &[IterationReport]) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("trial,ergodicity,accepted,eta,socp_iterations,socp_primal,socp_dual\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{:.11e},{},{:.11e},{},{:.11e},{:.11e}",
            r.ergodicity,
            r.accepted as u8,
            r.eta,
            r.socp_iterations,
            r.socp_primal_residual,
            r.socp_dual_residual
        );
    }
    s
}
