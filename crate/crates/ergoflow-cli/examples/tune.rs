use std::time::Instant;

use ergoflow::fem::{assemble, solve_eigenbasis, BoundaryCondition};
use ergoflow::flow::build_flow_basis;
use ergoflow::mesh::{generate_map, DistSpec, InfoDistribution, MapSpec};
use ergoflow::metric::{self, FourierMetric, MetricSpec, SpectralCoeffs};
use ergoflow::optimizer::{descend, ErgodicProblem};
use ergoflow::sampler::{integrate, sample_schedule};

fn main() {
    let t0 = Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let h: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let n_fields: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(32);
    let k_trunc: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(200);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let max_outer: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(30);
    let eta: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.1);

    let mesh = generate_map(&MapSpec::square(1.0, h)).unwrap();
    let fm = assemble(&mesh).unwrap();
    println!("[{:?}] mesh {} vertices", t0.elapsed(), mesh.num_vertices());
    let dirichlet = solve_eigenbasis(&mesh, &fm, BoundaryCondition::Dirichlet, n_fields).unwrap();
    let natural = solve_eigenbasis(&mesh, &fm, BoundaryCondition::Natural, k_trunc).unwrap();
    println!("[{:?}] eigenbases done", t0.elapsed());
    let p = InfoDistribution::build(&mesh, DistSpec::Uniform).unwrap();
    let flow = build_flow_basis(&mesh, &dirichlet, &p, n_fields).unwrap();

    let schedule = sample_schedule(n_fields, 5.0, 0.5, seed).unwrap();
    let seed_traj = integrate(&mesh, &flow, &schedule, &[[0.5, 0.5]], 0.01, 1.0, 5.0).unwrap();
    let xi_hat = metric::map_coefficients(&p, &natural, &fm, k_trunc).unwrap();
    let spec = MetricSpec::new(&natural, k_trunc).unwrap();
    let eval = |states: &Vec<Vec<[f64;2]>>| {
        let xi = metric::trajectory_coefficients(states, &natural, &mesh, k_trunc).unwrap();
        metric::ergodicity(&SpectralCoeffs { xi, xi_hat: xi_hat.clone() }, &spec)
    };
    let seed_e = eval(&seed_traj.states);
    println!("[{:?}] seed LB = {seed_e:.5}", t0.elapsed());

    let problem = ErgodicProblem {
        mesh: &mesh, density: &p, flow: &flow, basis: &natural, fm: &fm,
        metric: MetricSpec::new(&natural, k_trunc).unwrap(),
        steps: 500, dt: 0.01, vmax: 1.0, eta, kappa: 1e-3,
        max_outer, socp_tolerance: 1e-7,
    };
    let (opt, reports) = descend(&problem, &seed_traj).unwrap();
    let final_e = eval(&opt.states);
    let accepted = reports.iter().filter(|r| r.accepted).count();
    let socp_iters: usize = reports.iter().map(|r| r.socp_iterations).sum();
    println!(
        "[{:?}] final LB = {final_e:.5} after {} trials ({accepted} accepted), socp iters {socp_iters}",
        t0.elapsed(), reports.len()
    );
    for r in reports.iter().take(12) {
        println!("  E={:.5} acc={} eta={:.4} socp={} pri={:.2e}", r.ergodicity, r.accepted, r.eta, r.socp_iterations, r.socp_primal_residual);
    }
    let fourier = FourierMetric::build(&mesh, &p, [0.0,0.0], [1.0,1.0], 256, 100).unwrap();
    let f = fourier.evaluate(&opt.states);
    let xi100 = metric::trajectory_coefficients(&opt.states, &natural, &mesh, 100.min(k_trunc)).unwrap();
    let spec100 = MetricSpec::new(&natural, 100.min(k_trunc)).unwrap();
    let lb100 = metric::ergodicity(&SpectralCoeffs { xi: xi100, xi_hat: xi_hat[..100.min(k_trunc)].to_vec() }, &spec100);
    println!("F(100) = {f:.5}, LB(100) = {lb100:.5}, |F-LB|/LB = {:.3}", (f - lb100).abs() / lb100);
}
