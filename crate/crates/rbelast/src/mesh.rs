//! Conforming triangular meshes with subdomain regions and boundary tags.
//!
//! Meshes are either read from the line-oriented text format documented on
//! [`parse_mesh`] or produced by the structured generators. Triangles are
//! re-oriented to positive signed area on construction so assembly never has
//! to track orientation.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("malformed mesh file: {0}")]
    MalformedFile(String),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("bad region id {0} (regions must cover 1..=n_regions)")]
    BadRegionId(u32),
    #[error("invalid grading factor {0} (must be positive and finite)")]
    InvalidGrading(f64),
    #[error("degenerate triangle at index {0}")]
    DegenerateTriangle(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v: [u32; 3],
    pub region: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub v: [u32; 2],
    pub tag: u32,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub n_regions: u32,
}

/// What a boundary tag means for the problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BcKind {
    /// Constrain displacement components (u1 and/or u2) to zero.
    Dirichlet { fix: [bool; 2] },
    /// Normal traction of the given magnitude on the original domain.
    Traction { normal_stress: f64 },
    /// Output segment: integral of `multipliers . u` over the tagged edges.
    Output { multipliers: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryCondition {
    pub tag: u32,
    pub kind: BcKind,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_coords(&self, t: &Triangle) -> [[f64; 2]; 3] {
        [
            self.nodes[t.v[0] as usize],
            self.nodes[t.v[1] as usize],
            self.nodes[t.v[2] as usize],
        ]
    }

    pub fn signed_area(&self, t: &Triangle) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Fix orientation in place; errors on exactly degenerate triangles.
    pub fn orient_positive(&mut self) -> Result<(), MeshError> {
        for i in 0..self.triangles.len() {
            let area = self.signed_area(&self.triangles[i]);
            if area == 0.0 {
                return Err(MeshError::DegenerateTriangle(i));
            }
            if area < 0.0 {
                self.triangles[i].v.swap(1, 2);
            }
        }
        Ok(())
    }

    /// For every boundary edge, the index of its (unique) adjacent triangle.
    pub fn boundary_adjacency(&self) -> Result<Vec<usize>, MeshError> {
        let mut edge_to_tri: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let a = t.v[k];
                let b = t.v[(k + 1) % 3];
                edge_to_tri.entry(key(a, b)).or_default().push(ti);
            }
        }
        let mut adj = Vec::with_capacity(self.boundary_edges.len());
        for be in &self.boundary_edges {
            match edge_to_tri.get(&key(be.v[0], be.v[1])) {
                Some(tris) if tris.len() == 1 => adj.push(tris[0]),
                Some(tris) => {
                    return Err(MeshError::NonConforming(format!(
                        "boundary edge ({},{}) belongs to {} triangles",
                        be.v[0],
                        be.v[1],
                        tris.len()
                    )))
                }
                None => {
                    return Err(MeshError::NonConforming(format!(
                        "boundary edge ({},{}) does not match any triangle edge",
                        be.v[0], be.v[1]
                    )))
                }
            }
        }
        Ok(adj)
    }

    /// Outward unit normal of a boundary edge (requires positive triangle
    /// orientation, which construction guarantees).
    pub fn outward_normal(&self, edge_idx: usize, adjacent_tri: usize) -> [f64; 2] {
        let be = &self.boundary_edges[edge_idx];
        let a = self.nodes[be.v[0] as usize];
        let b = self.nodes[be.v[1] as usize];
        let t = &self.triangles[adjacent_tri];
        let other = t
            .v
            .iter()
            .find(|&&v| v != be.v[0] && v != be.v[1])
            .copied()
            .expect("adjacent triangle must contain the edge");
        let o = self.nodes[other as usize];
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let len = (dx * dx + dy * dy).sqrt();
        let mut n = [dy / len, -dx / len];
        // Point away from the interior vertex.
        let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
        if n[0] * (o[0] - mid[0]) + n[1] * (o[1] - mid[1]) > 0.0 {
            n = [-n[0], -n[1]];
        }
        n
    }
}

fn key(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Parse the text mesh format.
///
/// ```text
/// mesh 1
/// nodes <n>
/// x y            # n lines
/// triangles <m>
/// i j k region   # m lines, 0-based node indices
/// edges <b>
/// i j tag        # b lines
/// ```
///
/// `#` starts a comment; tokens are whitespace separated. Triangles listed
/// clockwise are silently re-oriented.
pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split_whitespace())
        .peekable();

    let mut expect = |what: &str| -> Result<String, MeshError> {
        tokens
            .next()
            .map(str::to_owned)
            .ok_or_else(|| MeshError::MalformedFile(format!("unexpected end of file, wanted {what}")))
    };

    let header = expect("header")?;
    if header != "mesh" {
        return Err(MeshError::MalformedFile(format!(
            "expected 'mesh' header, found '{header}'"
        )));
    }
    let version = expect("version")?;
    if version != "1" {
        return Err(MeshError::MalformedFile(format!(
            "unsupported mesh version '{version}'"
        )));
    }

    fn parse_count(tok: String, what: &str) -> Result<usize, MeshError> {
        tok.parse::<usize>()
            .map_err(|_| MeshError::MalformedFile(format!("bad {what} count '{tok}'")))
    }
    fn parse_f64(tok: String) -> Result<f64, MeshError> {
        tok.parse::<f64>()
            .map_err(|_| MeshError::MalformedFile(format!("bad number '{tok}'")))
    }
    fn parse_u32(tok: String) -> Result<u32, MeshError> {
        tok.parse::<u32>()
            .map_err(|_| MeshError::MalformedFile(format!("bad index '{tok}'")))
    }

    let kw = expect("'nodes'")?;
    if kw != "nodes" {
        return Err(MeshError::MalformedFile(format!("expected 'nodes', found '{kw}'")));
    }
    let n_nodes = parse_count(expect("node count")?, "node")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let x = parse_f64(expect("x")?)?;
        let y = parse_f64(expect("y")?)?;
        nodes.push([x, y]);
    }

    let kw = expect("'triangles'")?;
    if kw != "triangles" {
        return Err(MeshError::MalformedFile(format!(
            "expected 'triangles', found '{kw}'"
        )));
    }
    let n_tri = parse_count(expect("triangle count")?, "triangle")?;
    let mut triangles = Vec::with_capacity(n_tri);
    for _ in 0..n_tri {
        let i = parse_u32(expect("i")?)?;
        let j = parse_u32(expect("j")?)?;
        let k = parse_u32(expect("k")?)?;
        let region = parse_u32(expect("region")?)?;
        for v in [i, j, k] {
            if v as usize >= n_nodes {
                return Err(MeshError::MalformedFile(format!(
                    "triangle node index {v} out of range"
                )));
            }
        }
        triangles.push(Triangle { v: [i, j, k], region });
    }

    let kw = expect("'edges'")?;
    if kw != "edges" {
        return Err(MeshError::MalformedFile(format!("expected 'edges', found '{kw}'")));
    }
    let n_edges = parse_count(expect("edge count")?, "edge")?;
    let mut boundary_edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let i = parse_u32(expect("i")?)?;
        let j = parse_u32(expect("j")?)?;
        let tag = parse_u32(expect("tag")?)?;
        if i as usize >= n_nodes || j as usize >= n_nodes {
            return Err(MeshError::MalformedFile("edge node index out of range".into()));
        }
        boundary_edges.push(BoundaryEdge { v: [i, j], tag });
    }
    if tokens.peek().is_some() {
        return Err(MeshError::MalformedFile("trailing tokens after edge list".into()));
    }

    let n_regions = check_regions(&triangles)?;
    let mut mesh = Mesh {
        nodes,
        triangles,
        boundary_edges,
        n_regions,
    };
    mesh.orient_positive()?;
    check_conforming(&mesh)?;
    Ok(mesh)
}

/// Inverse of [`parse_mesh`]; `parse_mesh(&serialize_mesh(m))` reproduces `m`
/// up to triangle orientation (which parsing normalizes anyway).
pub fn serialize_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str("mesh 1\n");
    let _ = writeln!(out, "nodes {}", mesh.nodes.len());
    for n in &mesh.nodes {
        let _ = writeln!(out, "{:.17e} {:.17e}", n[0], n[1]);
    }
    let _ = writeln!(out, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {} {}", t.v[0], t.v[1], t.v[2], t.region);
    }
    let _ = writeln!(out, "edges {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let _ = writeln!(out, "{} {} {}", e.v[0], e.v[1], e.tag);
    }
    out
}

fn check_regions(triangles: &[Triangle]) -> Result<u32, MeshError> {
    let max = triangles.iter().map(|t| t.region).max().unwrap_or(0);
    let mut seen = vec![false; max as usize + 1];
    for t in triangles {
        if t.region == 0 {
            return Err(MeshError::BadRegionId(0));
        }
        seen[t.region as usize] = true;
    }
    for r in 1..=max {
        if !seen[r as usize] {
            return Err(MeshError::BadRegionId(r));
        }
    }
    Ok(max)
}

fn check_conforming(mesh: &Mesh) -> Result<(), MeshError> {
    // Every undirected edge may appear in at most two triangles, and node
    // pairs must match exactly (hanging nodes show up as edges used once
    // whose midpoint coincides with another node -- caught by the boundary
    // edge bookkeeping below).
    let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            *edge_count.entry(key(t.v[k], t.v[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    for (e, c) in &edge_count {
        if *c > 2 {
            return Err(MeshError::NonConforming(format!(
                "edge ({},{}) shared by {} triangles",
                e.0, e.1, c
            )));
        }
    }
    // Every single-triangle edge must be declared as a boundary edge.
    let declared: HashMap<(u32, u32), u32> = mesh
        .boundary_edges
        .iter()
        .map(|b| (key(b.v[0], b.v[1]), b.tag))
        .collect();
    if declared.len() != mesh.boundary_edges.len() {
        return Err(MeshError::NonConforming("duplicate boundary edge".into()));
    }
    for (e, c) in &edge_count {
        if *c == 1 && !declared.contains_key(e) {
            return Err(MeshError::NonConforming(format!(
                "edge ({},{}) lies on the boundary but carries no tag",
                e.0, e.1
            )));
        }
    }
    for e in declared.keys() {
        match edge_count.get(e) {
            Some(1) => {}
            Some(_) => {
                return Err(MeshError::NonConforming(format!(
                    "declared boundary edge ({},{}) is interior",
                    e.0, e.1
                )))
            }
            None => {
                return Err(MeshError::NonConforming(format!(
                    "declared boundary edge ({},{}) does not exist",
                    e.0, e.1
                )))
            }
        }
    }
    Ok(())
}

/// Geometric node positions for one graded axis: `n+1` coordinates over
/// `[a, b]` with consecutive cell widths in ratio `q`, smallest cells at `a`.
pub fn graded_axis(a: f64, b: f64, n: usize, q: f64) -> Vec<f64> {
    let mut widths = Vec::with_capacity(n);
    let mut w = 1.0;
    for _ in 0..n {
        widths.push(w);
        w *= 1.0 / q; // cells grow away from `a` when q < 1
    }
    let total: f64 = widths.iter().sum();
    let mut coords = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    coords.push(a);
    for wi in &widths {
        acc += wi / total;
        coords.push(a + (b - a) * acc);
    }
    *coords.last_mut().unwrap() = b;
    coords
}

/// Structured triangulation of the unit rectangle: `2*nx*ny` triangles.
///
/// `region_of(ix, iy, upper)` assigns the region id of each half-cell.
/// Boundary tags: 1 bottom, 2 right, 3 top, 4 left. A grading factor `q != 1`
/// grades cell widths geometrically toward the origin corner on both axes;
/// the smallest-to-largest cell width ratio is `q^(n-1)`.
pub fn generate_structured_rect(
    nx: usize,
    ny: usize,
    region_of: &dyn Fn(usize, usize, bool) -> u32,
    grading: Option<f64>,
) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::MalformedFile("nx, ny must be at least 1".into()));
    }
    let q = grading.unwrap_or(1.0);
    if !(q.is_finite() && q > 0.0) {
        return Err(MeshError::InvalidGrading(q));
    }
    let xs = graded_axis(0.0, 1.0, nx, q);
    let ys = graded_axis(0.0, 1.0, ny, q);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            nodes.push([xs[ix], ys[iy]]);
        }
    }
    let id = |ix: usize, iy: usize| (iy * (nx + 1) + ix) as u32;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (a, b, c, d) = (id(ix, iy), id(ix + 1, iy), id(ix + 1, iy + 1), id(ix, iy + 1));
            triangles.push(Triangle {
                v: [a, b, c],
                region: region_of(ix, iy, false),
            });
            triangles.push(Triangle {
                v: [a, c, d],
                region: region_of(ix, iy, true),
            });
        }
    }
    let mut boundary_edges = Vec::new();
    for ix in 0..nx {
        boundary_edges.push(BoundaryEdge { v: [id(ix, 0), id(ix + 1, 0)], tag: 1 });
        boundary_edges.push(BoundaryEdge {
            v: [id(ix, ny), id(ix + 1, ny)],
            tag: 3,
        });
    }
    for iy in 0..ny {
        boundary_edges.push(BoundaryEdge {
            v: [id(nx, iy), id(nx, iy + 1)],
            tag: 2,
        });
        boundary_edges.push(BoundaryEdge { v: [id(0, iy), id(0, iy + 1)], tag: 4 });
    }
    let n_regions = check_regions(&triangles)?;
    let mut mesh = Mesh {
        nodes,
        triangles,
        boundary_edges,
        n_regions,
    };
    mesh.orient_positive()?;
    check_conforming(&mesh)?;
    Ok(mesh)
}

/// Validation report entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation(pub String);

/// Check mesh invariants plus boundary-condition coverage. Returns an empty
/// report iff everything is consistent.
pub fn validate_mesh(mesh: &Mesh, bcs: &[BoundaryCondition]) -> Vec<Violation> {
    let mut report = Vec::new();
    for (i, t) in mesh.triangles.iter().enumerate() {
        if mesh.signed_area(t) <= 0.0 {
            report.push(Violation(format!("triangle {i} has non-positive area")));
        }
        if t.region == 0 || t.region > mesh.n_regions {
            report.push(Violation(format!("triangle {i} has region id {} out of range", t.region)));
        }
    }
    if let Err(e) = check_regions(&mesh.triangles) {
        report.push(Violation(format!("{e}")));
    }
    if let Err(e) = check_conforming(mesh) {
        report.push(Violation(format!("{e}")));
    }
    let mut seen = std::collections::HashSet::new();
    for be in &mesh.boundary_edges {
        if !seen.insert(key(be.v[0], be.v[1])) {
            report.push(Violation(format!(
                "duplicated boundary edge ({},{})",
                be.v[0], be.v[1]
            )));
        }
    }
    // A tag must map to exactly one kind.
    let mut tag_kinds: HashMap<u32, usize> = HashMap::new();
    for bc in bcs {
        *tag_kinds.entry(bc.tag).or_insert(0) += 1;
    }
    for (tag, n) in &tag_kinds {
        if *n > 1 {
            report.push(Violation(format!("tag {tag} mapped to {n} boundary conditions")));
        }
    }
    // Need at least one Dirichlet constraint to pin rigid motions.
    let has_dirichlet = bcs.iter().any(|bc| {
        matches!(bc.kind, BcKind::Dirichlet { fix } if fix[0] || fix[1])
            && mesh.boundary_edges.iter().any(|be| be.tag == bc.tag)
    });
    if !has_dirichlet {
        report.push(Violation("no Dirichlet constraint on any boundary edge".into()));
    }
    report
}

/// Incremental mesh builder used by the benchmark-problem generators.
///
/// Nodes are deduplicated on a quantized grid (snap tolerance ~1e-9), so
/// adjacent patches may compute shared-edge coordinates through different
/// floating-point expressions and still glue conformingly. Mesh feature
/// sizes must stay well above the snap tolerance, which every generator
/// here guarantees.
pub struct MeshBuilder {
    nodes: Vec<[f64; 2]>,
    lookup: HashMap<(i64, i64), u32>,
    triangles: Vec<Triangle>,
}

const SNAP: f64 = 1e-9;

impl MeshBuilder {
    pub fn new() -> Self {
        MeshBuilder {
            nodes: Vec::new(),
            lookup: HashMap::new(),
            triangles: Vec::new(),
        }
    }

    pub fn node(&mut self, p: [f64; 2]) -> u32 {
        let cx = (p[0] / SNAP).round() as i64;
        let cy = (p[1] / SNAP).round() as i64;
        // search the quantization cell and its neighbors for a close node
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if let Some(&i) = self.lookup.get(&(cx + dx, cy + dy)) {
                    let q = self.nodes[i as usize];
                    if (q[0] - p[0]).abs() <= SNAP && (q[1] - p[1]).abs() <= SNAP {
                        return i;
                    }
                }
            }
        }
        let i = self.nodes.len() as u32;
        self.nodes.push(p);
        self.lookup.insert((cx, cy), i);
        i
    }

    pub fn push_triangle(&mut self, a: u32, b: u32, c: u32, region: u32) {
        self.triangles.push(Triangle { v: [a, b, c], region });
    }

    /// Uniformly subdivided triangle patch with `n^2` elements; rows are
    /// optionally graded toward vertex `v0` with geometric factor `q` (the
    /// row spacing ratio; q < 1 concentrates nodes at `v0`).
    pub fn tri_patch(&mut self, v: [[f64; 2]; 3], n: usize, grade_q: Option<f64>, region: u32) {
        let rho = match grade_q {
            Some(q) if q != 1.0 => graded_axis(0.0, 1.0, n, q),
            _ => (0..=n).map(|k| k as f64 / n as f64).collect(),
        };
        // Node grid: row k has k+1 points; point (k, j) interpolates between
        // the directions v1-v0 and v2-v0 at radial fraction rho[k].
        let mut rows: Vec<Vec<u32>> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut row = Vec::with_capacity(k + 1);
            for j in 0..=k {
                let p = if k == 0 {
                    v[0]
                } else {
                    let s = j as f64 / k as f64;
                    let dir = [
                        (1.0 - s) * (v[1][0] - v[0][0]) + s * (v[2][0] - v[0][0]),
                        (1.0 - s) * (v[1][1] - v[0][1]) + s * (v[2][1] - v[0][1]),
                    ];
                    [v[0][0] + rho[k] * dir[0], v[0][1] + rho[k] * dir[1]]
                };
                row.push(self.node(p));
            }
            rows.push(row);
        }
        for k in 0..n {
            for j in 0..=k {
                let (a, b, c) = (rows[k][j], rows[k + 1][j], rows[k + 1][j + 1]);
                self.push_tri_oriented(a, b, c, region);
                if j < k {
                    let d = rows[k][j + 1];
                    self.push_tri_oriented(a, c, d, region);
                }
            }
        }
    }

    /// Structured rectangle patch from explicit axis coordinate vectors.
    pub fn rect_patch(&mut self, xs: &[f64], ys: &[f64], region: u32) {
        let nx = xs.len() - 1;
        let ny = ys.len() - 1;
        let mut grid = vec![vec![0u32; nx + 1]; ny + 1];
        for iy in 0..=ny {
            for ix in 0..=nx {
                grid[iy][ix] = self.node([xs[ix], ys[iy]]);
            }
        }
        for iy in 0..ny {
            for ix in 0..nx {
                let (a, b, c, d) = (grid[iy][ix], grid[iy][ix + 1], grid[iy + 1][ix + 1], grid[iy + 1][ix]);
                self.push_tri_oriented(a, b, c, region);
                self.push_tri_oriented(a, c, d, region);
            }
        }
    }

    fn push_tri_oriented(&mut self, a: u32, b: u32, c: u32, region: u32) {
        let pa = self.nodes[a as usize];
        let pb = self.nodes[b as usize];
        let pc = self.nodes[c as usize];
        let area2 = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        if area2 >= 0.0 {
            self.push_triangle(a, b, c, region);
        } else {
            self.push_triangle(a, c, b, region);
        }
    }

    /// Finalize: find boundary edges (edges with a single adjacent triangle)
    /// and tag them through `tag_of(endpoint_a, endpoint_b, midpoint)`.
    pub fn finish(
        self,
        tag_of: &dyn Fn([f64; 2], [f64; 2], [f64; 2]) -> u32,
    ) -> Result<Mesh, MeshError> {
        let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *edge_count.entry(key(t.v[k], t.v[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        let mut boundary_edges: Vec<BoundaryEdge> = edge_count
            .iter()
            .filter(|(_, c)| **c == 1)
            .map(|(e, _)| {
                let a = self.nodes[e.0 as usize];
                let b = self.nodes[e.1 as usize];
                let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
                BoundaryEdge {
                    v: [e.0, e.1],
                    tag: tag_of(a, b, mid),
                }
            })
            .collect();
        boundary_edges.sort_by_key(|b| (b.v[0], b.v[1]));
        let n_regions = check_regions(&self.triangles)?;
        let mut mesh = Mesh {
            nodes: self.nodes,
            triangles: self.triangles,
            boundary_edges,
            n_regions,
        };
        mesh.orient_positive()?;
        check_conforming(&mesh)?;
        Ok(mesh)
    }
}

impl Default for MeshBuilder {
    fn default() -> Self {
        Self::new()
    }
}
