//! Triangulated free-space domains, the three test maps, information
//! distributions, and point location.
//!
//! Obstacles are never meshed: the mesh covers exactly the free space, so any
//! trajectory confined to the mesh is collision-free by construction. All
//! generators are deterministic functions of their spec.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{self, Point};

/// Barycentric slack for inside tests. A point is accepted as inside a
/// triangle when all coordinates are at least `-BARY_TOL`.
pub const BARY_TOL: f64 = 1e-12;

/// A boundary edge and the single triangle it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub v0: usize,
    pub v1: usize,
    pub triangle: usize,
}

/// Conforming triangle mesh of the free space.
///
/// Triangles are counter-clockwise; the adjacency table stores, for edge `j`
/// of triangle `t` (the edge from vertex `j` to vertex `(j+1)%3`), the index
/// of the neighboring triangle or `None` on the boundary.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub adjacency: Vec<[Option<usize>; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// True for vertices lying on the boundary.
    pub boundary_vertex: Vec<bool>,
    areas: Vec<f64>,
}

impl TriMesh {
    /// Build a mesh from raw vertex and triangle tables, deriving adjacency
    /// and boundary data and validating every invariant.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::MeshInvariant("mesh has no triangles".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::MeshInvariant(format!(
                    "vertex {i} has non-finite coordinates"
                )));
            }
        }
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::MeshInvariant(format!(
                        "triangle {t} references vertex {v} of {nv}"
                    )));
                }
            }
            let a2 = geom::signed_area2(
                vertices[tri[0]],
                vertices[tri[1]],
                vertices[tri[2]],
            );
            if !(a2 > 0.0) {
                return Err(Error::MeshInvariant(format!(
                    "triangle {t} has non-positive signed area {}",
                    0.5 * a2
                )));
            }
            areas.push(0.5 * a2);
        }

        // Directed edge map: a consistent CCW mesh has each undirected edge
        // traversed at most once per direction.
        let mut edge_map: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for j in 0..3 {
                let a = tri[j];
                let b = tri[(j + 1) % 3];
                if edge_map.insert((a, b), (t, j)).is_some() {
                    return Err(Error::MeshInvariant(format!(
                        "edge ({a}, {b}) traversed twice in the same direction; \
                         non-manifold or inconsistently oriented"
                    )));
                }
            }
        }

        let mut adjacency = vec![[None; 3]; triangles.len()];
        let mut boundary_edges = Vec::new();
        let mut boundary_vertex = vec![false; nv];
        for (t, tri) in triangles.iter().enumerate() {
            for j in 0..3 {
                let a = tri[j];
                let b = tri[(j + 1) % 3];
                match edge_map.get(&(b, a)) {
                    Some(&(s, _)) => adjacency[t][j] = Some(s),
                    None => {
                        boundary_edges.push(BoundaryEdge {
                            v0: a,
                            v1: b,
                            triangle: t,
                        });
                        boundary_vertex[a] = true;
                        boundary_vertex[b] = true;
                    }
                }
            }
        }
        boundary_edges.sort_by_key(|e| (e.v0, e.v1));

        let mesh = TriMesh {
            vertices,
            triangles,
            adjacency,
            boundary_edges,
            boundary_vertex,
            areas,
        };
        if !mesh.is_connected() {
            return Err(Error::MeshInvariant(
                "triangle adjacency graph has more than one connected component".into(),
            ));
        }
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
        ]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [
            self.vertices[tri[0]],
            self.vertices[tri[1]],
            self.vertices[tri[2]],
        ]
    }

    /// Constant gradients of the three P1 hat functions on triangle `t`,
    /// ordered like the triangle's vertices.
    pub fn hat_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [p0, p1, p2] = self.triangle_points(t);
        let inv2a = 1.0 / (2.0 * self.areas[t]);
        [
            geom::scale(geom::rot90(geom::sub(p2, p1)), inv2a),
            geom::scale(geom::rot90(geom::sub(p0, p2)), inv2a),
            geom::scale(geom::rot90(geom::sub(p1, p0)), inv2a),
        ]
    }

    /// Outward unit normal of a boundary edge (free space lies to its left).
    pub fn outward_normal(&self, e: &BoundaryEdge) -> Point {
        let d = geom::sub(self.vertices[e.v1], self.vertices[e.v0]);
        let n = [d[1], -d[0]];
        geom::scale(n, 1.0 / geom::norm(n))
    }

    fn is_connected(&self) -> bool {
        let n = self.triangles.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(t) = stack.pop() {
            for nb in self.adjacency[t].iter().flatten() {
                if !seen[*nb] {
                    seen[*nb] = true;
                    count += 1;
                    stack.push(*nb);
                }
            }
        }
        count == n
    }

    /// Locate `point` by scanning triangles in index order. Returns the
    /// lowest-index containing triangle, which fixes edge/vertex tie-breaks.
    pub fn locate_exhaustive(&self, point: Point) -> Option<(usize, [f64; 3])> {
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_points(t);
            let w = geom::barycentric(point, a, b, c);
            if w.iter().all(|&x| x >= -BARY_TOL) {
                return Some((t, w));
            }
        }
        None
    }

    /// Locate `point` by walking from `hint`. Agrees with
    /// [`locate_exhaustive`] for every query, including edge/vertex ties.
    pub fn locate(&self, point: Point, hint: Option<usize>) -> Option<(usize, [f64; 3])> {
        let mut t = match hint {
            Some(h) if h < self.triangles.len() => h,
            _ => 0,
        };
        let max_steps = 2 * self.triangles.len() + 4;
        for _ in 0..max_steps {
            let [a, b, c] = self.triangle_points(t);
            let w = geom::barycentric(point, a, b, c);
            let (jmin, &wmin) = w
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                .unwrap();
            if wmin >= -BARY_TOL {
                // On an edge or vertex several triangles contain the point;
                // re-scan so the walk matches the exhaustive tie-break.
                if w.iter().any(|&x| x <= BARY_TOL) {
                    return self.locate_exhaustive(point);
                }
                return Some((t, w));
            }
            // Negative coordinate jmin means the point lies beyond the edge
            // opposite vertex jmin, which is edge (jmin+1).
            match self.adjacency[t][(jmin + 1) % 3] {
                Some(nb) => t = nb,
                None => return self.locate_exhaustive(point),
            }
        }
        self.locate_exhaustive(point)
    }

    /// Nearest point on the boundary polyline, with its edge index.
    pub fn project_to_boundary(&self, point: Point) -> (Point, usize, f64) {
        let mut best = ([0.0, 0.0], 0usize, f64::INFINITY);
        for (i, e) in self.boundary_edges.iter().enumerate() {
            let q = geom::closest_point_on_segment(
                point,
                self.vertices[e.v0],
                self.vertices[e.v1],
            );
            let d = geom::dist(point, q);
            if d < best.2 {
                best = (q, i, d);
            }
        }
        best
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}

/// Map generator specification.
#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    /// Obstacle-free square of the given side length.
    Square { side: f64, h: f64 },
    /// Rectangular occupancy layout scaled to a square of the given side.
    /// `layout` rows are top-to-bottom strings of `.` (free) and `#` (wall).
    Maze {
        side: f64,
        h: f64,
        layout: Vec<String>,
    },
    /// Two circular rooms joined by two horizontal corridors.
    Rooms {
        radius: f64,
        corridor_length: f64,
        corridor_width: f64,
        corridor_offset: f64,
        h: f64,
    },
}

/// Serpentine 9x9 wall layout used as the default maze. Four walls with
/// alternating gaps force the back-and-forth snaking path.
pub fn default_maze_layout() -> Vec<String> {
    [
        ".........",
        "########.",
        ".........",
        ".########",
        ".........",
        "########.",
        ".........",
        ".########",
        ".........",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl MapSpec {
    pub fn square(side: f64, h: f64) -> Self {
        MapSpec::Square { side, h }
    }

    pub fn default_maze(h: f64) -> Self {
        MapSpec::Maze {
            side: 1.0,
            h,
            layout: default_maze_layout(),
        }
    }

    pub fn default_rooms(h: f64) -> Self {
        MapSpec::Rooms {
            radius: 0.7,
            corridor_length: 0.7,
            corridor_width: 0.16,
            corridor_offset: 0.28,
            h,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MapSpec::Square { side, h } => {
                if !(*side > 0.0 && side.is_finite()) {
                    return Err(Error::MapSpec(format!("square side must be > 0, got {side}")));
                }
                check_h(*h)?;
            }
            MapSpec::Maze { side, h, layout } => {
                if !(*side > 0.0 && side.is_finite()) {
                    return Err(Error::MapSpec(format!("maze side must be > 0, got {side}")));
                }
                check_h(*h)?;
                if layout.is_empty() || layout[0].is_empty() {
                    return Err(Error::MapSpec("maze layout is empty".into()));
                }
                let w = layout[0].len();
                for (r, row) in layout.iter().enumerate() {
                    if row.len() != w {
                        return Err(Error::MapSpec(format!(
                            "maze layout row {r} has length {}, expected {w}",
                            row.len()
                        )));
                    }
                    if let Some(c) = row.chars().find(|&c| c != '.' && c != '#') {
                        return Err(Error::MapSpec(format!(
                            "maze layout row {r} contains invalid character {c:?}"
                        )));
                    }
                }
                // One layout cell is both the wall thickness and the passage
                // width; it must be resolvable by at least two element layers.
                let cell = side / layout[0].len().max(layout.len()) as f64;
                if cell <= 2.0 * h {
                    return Err(Error::MapSpec(format!(
                        "maze passage width {cell:.4} must exceed 2h = {:.4}",
                        2.0 * h
                    )));
                }
            }
            MapSpec::Rooms {
                radius,
                corridor_length,
                corridor_width,
                corridor_offset,
                h,
            } => {
                check_h(*h)?;
                if !(*radius > 0.0) || !(*corridor_length > 0.0) || !(*corridor_width > 0.0) {
                    return Err(Error::MapSpec(
                        "rooms radius, corridor length and width must be > 0".into(),
                    ));
                }
                if *corridor_width <= 2.0 * h {
                    return Err(Error::MapSpec(format!(
                        "corridor width {corridor_width} must exceed 2h = {}",
                        2.0 * h
                    )));
                }
                if corridor_offset + corridor_width / 2.0 >= *radius {
                    return Err(Error::MapSpec(
                        "corridors must attach inside the rooms: offset + width/2 < radius".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        Err(Error::MapSpec(format!("resolution h must be > 0, got {h}")))
    } else {
        Ok(())
    }
}

/// Generate the mesh for a map spec. Free space is meshed on a uniform grid
/// (two triangles per free cell, diagonals alternating by cell parity);
/// obstacle cells are simply omitted.
pub fn generate_map(spec: &MapSpec) -> Result<TriMesh> {
    spec.validate()?;
    match spec {
        MapSpec::Square { side, h } => {
            let n = cells_for(*side, *h);
            grid_mesh([0.0, 0.0], [*side, *side], n, n, |_, _| true)
        }
        MapSpec::Maze { side, h, layout } => {
            let rows = layout.len();
            let cols = layout[0].len();
            // Integer refinements per layout cell keep walls exactly aligned
            // with element edges.
            let k = ((side / cols as f64) / h).round().max(1.0) as usize;
            let free: Vec<Vec<bool>> = layout
                .iter()
                .map(|row| row.chars().map(|c| c == '.').collect())
                .collect();
            let nx = cols * k;
            let ny = rows * k;
            grid_mesh([0.0, 0.0], [*side, *side], nx, ny, |i, j| {
                // Fine cell (i, j) with j counted bottom-up; layout rows are
                // top-down.
                let ci = i / k;
                let cj = rows - 1 - j / k;
                free[cj][ci]
            })
        }
        MapSpec::Rooms {
            radius,
            corridor_length,
            corridor_width,
            corridor_offset,
            h,
        } => {
            let cx = corridor_length / 2.0 + radius;
            let lo = [-(cx + radius), -radius];
            let hi = [cx + radius, *radius];
            let nx = cells_for(hi[0] - lo[0], *h);
            let ny = cells_for(hi[1] - lo[1], *h);
            let dx = (hi[0] - lo[0]) / nx as f64;
            let dy = (hi[1] - lo[1]) / ny as f64;
            let r2 = radius * radius;
            let half_w = corridor_width / 2.0;
            let inside = move |i: usize, j: usize| {
                let x = lo[0] + (i as f64 + 0.5) * dx;
                let y = lo[1] + (j as f64 + 0.5) * dy;
                let in_room = |sx: f64| {
                    let ddx = x - sx * cx;
                    ddx * ddx + y * y <= r2
                };
                let in_corridor = |sy: f64| {
                    x.abs() <= cx && (y - sy * corridor_offset).abs() <= half_w
                };
                in_room(1.0) || in_room(-1.0) || in_corridor(1.0) || in_corridor(-1.0)
            };
            grid_mesh(lo, hi, nx, ny, inside)
        }
    }
}

fn cells_for(extent: f64, h: f64) -> usize {
    ((extent / h).round() as usize).max(1)
}

fn grid_mesh(
    lo: Point,
    hi: Point,
    nx: usize,
    ny: usize,
    free: impl Fn(usize, usize) -> bool,
) -> Result<TriMesh> {
    let dx = (hi[0] - lo[0]) / nx as f64;
    let dy = (hi[1] - lo[1]) / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if free(i, j) {
                cells.push((i, j));
                for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
                    used[vid(i + di, j + dj)] = true;
                }
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::MapSpec("free space is empty".into()));
    }

    let mut remap = vec![usize::MAX; used.len()];
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if used[vid(i, j)] {
                remap[vid(i, j)] = vertices.len();
                vertices.push([lo[0] + i as f64 * dx, lo[1] + j as f64 * dy]);
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * cells.len());
    for (i, j) in cells {
        let v00 = remap[vid(i, j)];
        let v10 = remap[vid(i + 1, j)];
        let v11 = remap[vid(i + 1, j + 1)];
        let v01 = remap[vid(i, j + 1)];
        if (i + j) % 2 == 0 {
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        } else {
            triangles.push([v00, v10, v01]);
            triangles.push([v10, v11, v01]);
        }
    }

    TriMesh::new(vertices, triangles).map_err(|e| match e {
        Error::MeshInvariant(msg) if msg.contains("connected") => Error::MapSpec(
            "free space is disconnected; random flows cannot be ergodic on it".into(),
        ),
        other => other,
    })
}

/// Analytic form behind an information distribution, kept so quadrature
/// refinement studies can evaluate the true density off the vertices.
#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Uniform,
    GaussianMixture(Vec<Gaussian>),
    /// Loaded from file; only vertex values are known.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub center: Point,
    /// Symmetric covariance [[sxx, sxy], [sxy, syy]].
    pub cov: [[f64; 2]; 2],
    pub weight: f64,
}

impl Gaussian {
    pub fn isotropic(center: Point, sigma: f64, weight: f64) -> Self {
        Gaussian {
            center,
            cov: [[sigma * sigma, 0.0], [0.0, sigma * sigma]],
            weight,
        }
    }

    fn eval(&self, p: Point) -> f64 {
        let det = self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0];
        let d = geom::sub(p, self.center);
        let inv = [
            [self.cov[1][1] / det, -self.cov[0][1] / det],
            [-self.cov[1][0] / det, self.cov[0][0] / det],
        ];
        let q = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
            + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
        self.weight / (2.0 * std::f64::consts::PI * det.sqrt()) * (-0.5 * q).exp()
    }
}

/// Probability density over the mesh, stored per vertex and normalized so
/// the P1 quadrature integral over the free space is exactly 1.
#[derive(Debug, Clone)]
pub struct InfoDistribution {
    pub values: Vec<f64>,
    pub spec: DistSpec,
    /// Multiplier applied to the raw analytic density by normalization.
    scale: f64,
}

impl InfoDistribution {
    /// Build and normalize a distribution on `mesh`.
    ///
    /// Gaussian mixtures are evaluated at the vertices and normalized against
    /// the P1 quadrature (identically the mass-matrix inner product with 1).
    pub fn build(mesh: &TriMesh, spec: DistSpec) -> Result<Self> {
        let raw: Vec<f64> = match &spec {
            DistSpec::Uniform => vec![1.0; mesh.num_vertices()],
            DistSpec::GaussianMixture(components) => {
                if components.is_empty() {
                    return Err(Error::Distribution("mixture has no components".into()));
                }
                let total_weight: f64 = components.iter().map(|g| g.weight).sum();
                for (i, g) in components.iter().enumerate() {
                    let det = g.cov[0][0] * g.cov[1][1] - g.cov[0][1] * g.cov[1][0];
                    if !(g.weight > 0.0) {
                        return Err(Error::Distribution(format!(
                            "mixture weight {i} must be > 0"
                        )));
                    }
                    if !(det > 0.0) || !(g.cov[0][0] > 0.0) {
                        return Err(Error::Distribution(format!(
                            "mixture covariance {i} is not positive definite"
                        )));
                    }
                }
                let vals: Vec<f64> = mesh
                    .vertices
                    .iter()
                    .map(|&v| components.iter().map(|g| g.eval(v)).sum())
                    .collect();
                // A mixture whose mass sits on obstacles (or outside the map)
                // leaves only evaporated tails on the mesh; reject it.
                let mass = quadrature_integral(mesh, &vals);
                if mass < 1e-9 * total_weight {
                    return Err(Error::Distribution(
                        "mixture mass does not lie on the free space".into(),
                    ));
                }
                vals
            }
            DistSpec::Tabulated => {
                return Err(Error::Distribution(
                    "tabulated distributions must come from from_values or load".into(),
                ))
            }
        };
        Self::from_values(mesh, raw, spec)
    }

    /// Normalize explicit per-vertex values. Used by `build` and by the file
    /// loader (with `DistSpec::Tabulated`).
    pub fn from_values(mesh: &TriMesh, raw: Vec<f64>, spec: DistSpec) -> Result<Self> {
        if raw.len() != mesh.num_vertices() {
            return Err(Error::SizeMismatch {
                expected: mesh.num_vertices(),
                got: raw.len(),
            });
        }
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Distribution(
                "density values must be finite and non-negative".into(),
            ));
        }
        let mass = quadrature_integral(mesh, &raw);
        if !(mass > 0.0) {
            return Err(Error::Distribution("density integrates to zero".into()));
        }
        let scale = 1.0 / mass;
        let values: Vec<f64> = raw.iter().map(|v| v * scale).collect();
        let dist = InfoDistribution { values, spec, scale };
        if !dist.support_is_connected(mesh) {
            return Err(Error::Distribution(
                "density support is disconnected; unique ergodicity fails".into(),
            ));
        }
        Ok(dist)
    }

    /// Density floor used wherever 1/p appears: 1e-6 of the peak value.
    pub fn floor(&self) -> f64 {
        1e-6 * self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Density interpolated at a triangle's centroid.
    pub fn centroid_value(&self, mesh: &TriMesh, t: usize) -> f64 {
        let tri = mesh.triangles[t];
        (self.values[tri[0]] + self.values[tri[1]] + self.values[tri[2]]) / 3.0
    }

    /// Evaluate the normalized density at an arbitrary point: analytic for
    /// uniform and Gaussian specs, P1 interpolation for tabulated data.
    /// Returns `None` outside the free space.
    pub fn evaluate(&self, mesh: &TriMesh, point: Point, hint: Option<usize>) -> Option<f64> {
        let (t, w) = mesh.locate(point, hint)?;
        Some(match &self.spec {
            DistSpec::Uniform => self.scale,
            DistSpec::GaussianMixture(components) => {
                self.scale * components.iter().map(|g| g.eval(point)).sum::<f64>()
            }
            DistSpec::Tabulated => {
                let tri = mesh.triangles[t];
                w[0] * self.values[tri[0]] + w[1] * self.values[tri[1]] + w[2] * self.values[tri[2]]
            }
        })
    }

    /// Evaluate at an already-located point (no point location). Analytic
    /// specs use the exact density; tabulated data interpolates linearly.
    pub fn evaluate_local(&self, mesh: &TriMesh, t: usize, bary: [f64; 3], point: Point) -> f64 {
        match &self.spec {
            DistSpec::Uniform => self.scale,
            DistSpec::GaussianMixture(components) => {
                self.scale * components.iter().map(|g| g.eval(point)).sum::<f64>()
            }
            DistSpec::Tabulated => {
                let tri = mesh.triangles[t];
                bary[0] * self.values[tri[0]]
                    + bary[1] * self.values[tri[1]]
                    + bary[2] * self.values[tri[2]]
            }
        }
    }

    /// True when the triangles with centroid density above the floor form a
    /// single connected component.
    pub fn support_is_connected(&self, mesh: &TriMesh) -> bool {
        support_connected(mesh, &self.values)
    }
}

/// Connectivity of the density support at triangle level (Cor. precondition
/// for unique ergodicity). Exposed for the sampler's connectivity check.
pub fn support_connected(mesh: &TriMesh, vertex_density: &[f64]) -> bool {
    let floor = 1e-6 * vertex_density.iter().cloned().fold(0.0, f64::max);
    let above: Vec<bool> = (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangles[t];
            let c = (vertex_density[tri[0]] + vertex_density[tri[1]] + vertex_density[tri[2]]) / 3.0;
            c > floor
        })
        .collect();
    let total = above.iter().filter(|&&b| b).count();
    if total == 0 {
        return false;
    }
    let start = above.iter().position(|&b| b).unwrap();
    let mut seen = vec![false; mesh.num_triangles()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut count = 1;
    while let Some(t) = stack.pop() {
        for nb in mesh.adjacency[t].iter().flatten() {
            if above[*nb] && !seen[*nb] {
                seen[*nb] = true;
                count += 1;
                stack.push(*nb);
            }
        }
    }
    count == total
}

/// P1 quadrature of per-vertex values: sum over triangles of area times the
/// vertex mean. Equals `1ᵀ M v` for the consistent P1 mass matrix.
pub fn quadrature_integral(mesh: &TriMesh, vertex_values: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        total += mesh.area(t)
            * (vertex_values[tri[0]] + vertex_values[tri[1]] + vertex_values[tri[2]])
            / 3.0;
    }
    total
}

// --- text formats -----------------------------------------------------------

/// Serialize a mesh in the `ergomesh 1` text format (17 significant digits,
/// so coordinates round-trip bit-exact).
pub fn mesh_to_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    s.push_str("ergomesh 1\n");
    let _ = writeln!(s, "{}", mesh.num_vertices());
    let _ = writeln!(s, "{}", mesh.num_triangles());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{:.16e} {:.16e}", v[0], v[1]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn mesh_from_str(text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Parse {
                line: 0,
                reason: format!("unexpected end of file, expected {expect}"),
            })
    };

    let (line, header) = next("header")?;
    if header.trim() != "ergomesh 1" {
        return Err(Error::Parse {
            line,
            reason: format!("expected header 'ergomesh 1', got {header:?}"),
        });
    }
    let (line, nv_str) = next("vertex count")?;
    let nv: usize = parse_field(nv_str.trim(), line, "vertex count")?;
    let (line, nt_str) = next("triangle count")?;
    let nt: usize = parse_field(nt_str.trim(), line, "triangle count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = next("vertex line")?;
        let mut it = l.split_whitespace();
        let x: f64 = parse_field(it.next().unwrap_or(""), line, "x coordinate")?;
        let y: f64 = parse_field(it.next().unwrap_or(""), line, "y coordinate")?;
        if it.next().is_some() {
            return Err(Error::Parse {
                line,
                reason: "trailing data on vertex line".into(),
            });
        }
        vertices.push([x, y]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (line, l) = next("triangle line")?;
        let mut idx = [0usize; 3];
        let mut it = l.split_whitespace();
        for slot in &mut idx {
            let v: usize = parse_field(it.next().unwrap_or(""), line, "vertex index")?;
            if v >= nv {
                return Err(Error::Parse {
                    line,
                    reason: format!("triangle references vertex {v} of {nv}"),
                });
            }
            *slot = v;
        }
        if it.next().is_some() {
            return Err(Error::Parse {
                line,
                reason: "trailing data on triangle line".into(),
            });
        }
        triangles.push(idx);
    }
    TriMesh::new(vertices, triangles)
}

pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    mesh_from_str(&std::fs::read_to_string(path)?)
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("could not parse {what} from {s:?}"),
    })
}

/// Serialize a distribution in the `ergodist 1` sidecar format.
pub fn dist_to_string(dist: &InfoDistribution) -> String {
    let mut s = String::new();
    s.push_str("ergodist 1\n");
    let _ = writeln!(s, "{}", dist.values.len());
    for v in &dist.values {
        let _ = writeln!(s, "{v:.16e}");
    }
    s
}

pub fn save_distribution(dist: &InfoDistribution, path: &Path) -> Result<()> {
    std::fs::write(path, dist_to_string(dist))?;
    Ok(())
}

pub fn dist_from_str(text: &str, mesh: &TriMesh) -> Result<InfoDistribution> {
    let mut lines = text.lines().enumerate();
    let (line, header) = lines.next().map(|(i, l)| (i + 1, l)).ok_or(Error::Parse {
        line: 1,
        reason: "empty file".into(),
    })?;
    if header.trim() != "ergodist 1" {
        return Err(Error::Parse {
            line,
            reason: format!("expected header 'ergodist 1', got {header:?}"),
        });
    }
    let (line, n_str) = lines.next().map(|(i, l)| (i + 1, l)).ok_or(Error::Parse {
        line: 2,
        reason: "missing value count".into(),
    })?;
    let n: usize = parse_field(n_str.trim(), line, "value count")?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, l) = lines.next().map(|(i, l)| (i + 1, l)).ok_or(Error::Parse {
            line: 0,
            reason: "unexpected end of file in value list".into(),
        })?;
        values.push(parse_field::<f64>(l.trim(), line, "density value")?);
    }
    InfoDistribution::from_values(mesh, values, DistSpec::Tabulated)
}

pub fn load_distribution(path: &Path, mesh: &TriMesh) -> Result<InfoDistribution> {
    dist_from_str(&std::fs::read_to_string(path)?, mesh)
}
