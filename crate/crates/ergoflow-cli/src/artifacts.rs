//! Deterministic text artifacts: trajectory/schedule/metric/field CSVs and
//! the eigenbasis cache format. Every writer formats numbers with fixed
//! significant digits so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use ergoflow::fem::{BoundaryCondition, SpectralBasis};
use ergoflow::flow::FlowBasis;
use ergoflow::mesh::TriMesh;
use ergoflow::sampler::{CoefficientSchedule, Trajectory};
use ergoflow::{Error, Result};

/// 12 significant digits, the trajectory/schedule CSV precision.
fn sig12(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut s = String::from("t,agent,x,y\n");
    for step in 0..traj.num_states() {
        let t = step as f64 * traj.dt;
        for (agent, path) in traj.states.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{agent},{},{}",
                sig12(t),
                sig12(path[step][0]),
                sig12(path[step][1])
            );
        }
    }
    s
}

pub fn schedule_to_csv(schedule: &CoefficientSchedule) -> String {
    let n = schedule.n_fields();
    let mut s = String::from("t_start");
    for i in 1..=n {
        let _ = write!(s, ",u_{i}");
    }
    s.push('\n');
    for (t, row) in schedule.switch_times.iter().zip(&schedule.rows) {
        let _ = write!(s, "{}", sig12(*t));
        for v in row {
            let _ = write!(s, ",{}", sig12(*v));
        }
        s.push('\n');
    }
    s
}

/// Per-triangle velocity table of every basis field.
pub fn fields_to_csv(mesh: &TriMesh, flow: &FlowBasis) -> String {
    let mut s = String::from("field,triangle,cx,cy,vx,vy\n");
    for (i, field) in flow.velocities.iter().enumerate() {
        for (t, v) in field.iter().enumerate() {
            let c = mesh.centroid(t);
            let _ = writeln!(
                s,
                "{i},{t},{},{},{},{}",
                sig12(c[0]),
                sig12(c[1]),
                sig12(v[0]),
                sig12(v[1])
            );
        }
    }
    s
}

/// One metric-report row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub map: String,
    pub case: String,
    pub agents: usize,
    pub metric_f: f64,
    pub metric_lb: f64,
    pub k_trunc: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Minimum inter-agent distance over the run; infinite when single-agent.
    pub min_pair_dist: f64,
}

pub const METRIC_HEADER: &str = "map,case,agents,metric_F,metric_LB,K_trunc,horizon,seed,min_pair_dist";

pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRIC_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.map,
            r.case,
            r.agents,
            sig12(r.metric_f),
            sig12(r.metric_lb),
            r.k_trunc,
            sig12(r.horizon),
            r.seed,
            if r.min_pair_dist.is_finite() {
                sig12(r.min_pair_dist)
            } else {
                "inf".to_string()
            }
        );
    }
    s
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == METRIC_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                line: 1,
                reason: format!("unexpected metric header {header:?}"),
            })
        }
        None => return Ok(rows),
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected 9 fields, got {}", parts.len()),
            });
        }
        let field = |s: &str, what: &str| -> Result<f64> {
            if s == "inf" {
                return Ok(f64::INFINITY);
            }
            s.parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        rows.push(MetricRow {
            map: parts[0].to_string(),
            case: parts[1].to_string(),
            agents: parts[2].parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("bad agent count: {:?}", parts[2]),
            })?,
            metric_f: field(parts[3], "metric_F")?,
            metric_lb: field(parts[4], "metric_LB")?,
            k_trunc: parts[5].parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("bad K_trunc: {:?}", parts[5]),
            })?,
            horizon: field(parts[6], "horizon")?,
            seed: parts[7].parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("bad seed: {:?}", parts[7]),
            })?,
            min_pair_dist: field(parts[8], "min_pair_dist")?,
        });
    }
    Ok(rows)
}

/// Load a trajectory CSV back into agent-major state tables.
pub fn trajectory_from_csv(text: &str) -> Result<(f64, Vec<Vec<[f64; 2]>>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "t,agent,x,y" => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                reason: format!("unexpected trajectory header {other:?}"),
            })
        }
    }
    let mut states: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                reason: "expected t,agent,x,y".into(),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("bad number {s:?}"),
            })
        };
        let t = parse(parts[0])?;
        let agent: usize = parts[1].parse().map_err(|_| Error::Parse {
            line: i + 1,
            reason: format!("bad agent {:?}", parts[1]),
        })?;
        while states.len() <= agent {
            states.push(Vec::new());
        }
        if agent == 0 {
            times.push(t);
        }
        states[agent].push([parse(parts[2])?, parse(parts[3])?]);
    }
    let dt = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
    Ok((dt, states))
}

pub fn schedule_from_csv(text: &str) -> Result<CoefficientSchedule> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty schedule file".into(),
    })?;
    if !header.starts_with("t_start") {
        return Err(Error::Parse {
            line: 1,
            reason: format!("unexpected schedule header {header:?}"),
        });
    }
    let n = header.split(',').count() - 1;
    let mut switch_times = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.parse().ok()).ok_or(Error::Parse {
                line: i + 1,
                reason: "bad schedule entry".into(),
            })
        };
        switch_times.push(parse(parts.next())?);
        let row: Vec<f64> = (0..n).map(|_| parse(parts.next())).collect::<Result<_>>()?;
        rows.push(row);
    }
    Ok(CoefficientSchedule {
        switch_times,
        rows,
        seed: None,
    })
}

// --- eigenbasis cache --------------------------------------------------------

pub fn basis_to_string(basis: &SpectralBasis, mesh_hash: &str) -> String {
    let bc = match basis.bc {
        BoundaryCondition::Dirichlet => "dirichlet",
        BoundaryCondition::Natural => "natural",
    };
    let nv = basis.vectors.first().map_or(0, Vec::len);
    let mut s = String::from("ergobasis 1\n");
    let _ = writeln!(s, "{mesh_hash}");
    let _ = writeln!(s, "{bc}");
    let _ = writeln!(s, "{} {}", basis.count(), nv);
    for l in &basis.eigenvalues {
        let _ = writeln!(s, "{l:.16e}");
    }
    for col in &basis.vectors {
        let mut first = true;
        for v in col {
            if !first {
                s.push(' ');
            }
            let _ = write!(s, "{v:.16e}");
            first = false;
        }
        s.push('\n');
    }
    s
}

pub fn basis_from_str(text: &str, expect_hash: &str) -> Result<SpectralBasis> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            line: 0,
            reason: format!("unexpected end of basis file, wanted {what}"),
        })
    };
    let (line, header) = next("header")?;
    if header.trim() != "ergobasis 1" {
        return Err(Error::Parse {
            line,
            reason: format!("expected 'ergobasis 1', got {header:?}"),
        });
    }
    let (line, hash) = next("mesh hash")?;
    if hash.trim() != expect_hash {
        return Err(Error::Parse {
            line,
            reason: "basis cache was built for a different mesh".into(),
        });
    }
    let (line, bc_str) = next("boundary condition")?;
    let bc = match bc_str.trim() {
        "dirichlet" => BoundaryCondition::Dirichlet,
        "natural" => BoundaryCondition::Natural,
        other => {
            return Err(Error::Parse {
                line,
                reason: format!("unknown boundary condition {other:?}"),
            })
        }
    };
    let (line, counts) = next("counts")?;
    let mut it = counts.split_whitespace();
    let parse_usize = |s: Option<&str>, what: &str| -> Result<usize> {
        s.and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
            line,
            reason: format!("bad {what}"),
        })
    };
    let count = parse_usize(it.next(), "mode count")?;
    let nv = parse_usize(it.next(), "vertex count")?;
    let mut eigenvalues = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, l) = next("eigenvalue")?;
        eigenvalues.push(l.trim().parse::<f64>().map_err(|_| Error::Parse {
            line,
            reason: format!("bad eigenvalue {l:?}"),
        })?);
    }
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, l) = next("eigenvector row")?;
        let col: Vec<f64> = l
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line,
                reason: "bad eigenvector entry".into(),
            })?;
        if col.len() != nv {
            return Err(Error::Parse {
                line,
                reason: format!("expected {nv} entries, got {}", col.len()),
            });
        }
        vectors.push(col);
    }
    Ok(SpectralBasis {
        bc,
        eigenvalues,
        vectors,
    })
}

pub fn write(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ergoflow::sampler;

    #[test]
    fn metric_rows_roundtrip() {
        let rows = vec![
            MetricRow {
                map: "square".into(),
                case: "uniform".into(),
                agents: 1,
                metric_f: 0.0022,
                metric_lb: 0.0021,
                k_trunc: 200,
                horizon: 5.0,
                seed: 7,
                min_pair_dist: f64::INFINITY,
            },
            MetricRow {
                map: "rooms".into(),
                case: "gaussians".into(),
                agents: 7,
                metric_f: 0.044,
                metric_lb: 0.34,
                k_trunc: 200,
                horizon: 1.0,
                seed: 0,
                min_pair_dist: 0.0125,
            },
        ];
        let csv = metrics_to_csv(&rows);
        let back = metrics_from_csv(&csv).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn schedule_header_counts_fields() {
        let s = sampler::sample_schedule(3, 1.0, 0.5, 1).unwrap();
        let csv = schedule_to_csv(&s);
        assert!(csv.starts_with("t_start,u_1,u_2,u_3\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn trajectory_csv_roundtrip_and_order() {
        let traj = Trajectory {
            dt: 0.5,
            vmax: 1.0,
            states: vec![
                vec![[0.0, 0.1], [0.2, 0.3]],
                vec![[1.0, 1.1], [1.2, 1.3]],
            ],
            schedule: CoefficientSchedule {
                switch_times: vec![0.0],
                rows: vec![vec![0.0]],
                seed: None,
            },
        };
        let csv = trajectory_to_csv(&traj);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,agent,x,y"));
        // (step, agent) ordering with agents inner.
        assert!(lines.next().unwrap().contains(",0,0.0"));
        assert!(lines.next().unwrap().starts_with("0.0"));
        let (dt, states) = trajectory_from_csv(&csv).unwrap();
        assert_eq!(dt, 0.5);
        assert_eq!(states, traj.states);
    }
}
