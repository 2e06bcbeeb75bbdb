//! Triangulated 2D domains.
//!
//! Conventions: triangles are stored counter-clockwise (positive signed
//! area); boundary edges are exactly the edges owned by one triangle,
//! interior edges by two. Boundary edges carry an inflow/outflow/
//! characteristic tag once [`classify_boundary`] has run against a wind
//! field; assembly refuses unclassified meshes.
//!
//! Mesh text format (`plumetrace-mesh v1`):
//!
//! ```text
//! plumetrace-mesh v1
//! nodes N
//! x y            (N lines)
//! triangles M
//! i j k          (M lines, 0-based node indices)
//! boundary B
//! i j            (B lines, 0-based node indices)
//! ```

use crate::error::{Error, Result};
use crate::wind::{self, WindField};
use std::collections::HashMap;
use std::path::Path;

/// Classification of a boundary edge relative to the wind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// v·n < −tol: material enters; homogeneous Dirichlet is imposed here.
    Inflow,
    /// v·n > tol: material leaves.
    Outflow,
    /// |v·n| ≤ tol: no flow across the edge.
    Characteristic,
}

/// Relative tolerance (× max boundary wind magnitude) below which v·n
/// counts as zero during classification.
pub const DEFAULT_VN_TOL: f64 = 1e-12;

/// A validated triangulation.
#[derive(Debug, Clone)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    /// Stored in the owning triangle's CCW orientation, so the outward
    /// normal of each edge is its direction rotated clockwise by 90°.
    boundary_edges: Vec<[usize; 2]>,
    boundary_tags: Option<Vec<BoundaryTag>>,
}

impl Mesh {
    /// Builds and validates a mesh from raw parts. Triangles with negative
    /// signed area are flipped; zero-area triangles and dangling indices are
    /// rejected. `boundary_edges` must be exactly the topological boundary
    /// (edges shared by one triangle); their stored orientation is rewritten
    /// to match the owning triangle's CCW cycle.
    pub fn from_parts(
        nodes: Vec<[f64; 2]>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<[usize; 2]>,
    ) -> Result<Self> {
        let n = nodes.len();
        if n < 3 {
            return Err(Error::InvalidMesh(format!("{n} nodes is fewer than 3")));
        }
        for (i, p) in nodes.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidMesh(format!("node {i} has non-finite coordinates")));
            }
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= n {
                    return Err(Error::InvalidMesh(format!(
                        "triangle {t} references node {v}, but only {n} nodes exist"
                    )));
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let a = signed_area(&nodes, *tri);
            if a == 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate (zero area)")));
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }

        // Count how many triangles touch each undirected edge and remember
        // one owner per edge together with its CCW-oriented vertex pair.
        let mut edge_info: HashMap<(usize, usize), (usize, usize, [usize; 2])> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let entry = edge_info.entry(key).or_insert((0, t, [a, b]));
                entry.0 += 1;
                if entry.0 == 1 {
                    *entry = (1, t, [a, b]);
                }
            }
        }
        if let Some(((a, b), (count, ..))) = edge_info.iter().find(|(_, info)| info.0 > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge ({a}, {b}) is shared by {count} triangles"
            )));
        }

        let mut listed: Vec<(usize, usize)> = Vec::with_capacity(boundary_edges.len());
        for &[a, b] in &boundary_edges {
            if a >= n || b >= n {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({a}, {b}) references a missing node"
                )));
            }
            listed.push((a.min(b), a.max(b)));
        }
        listed.sort_unstable();
        if listed.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidMesh("duplicate boundary edge listed".into()));
        }
        let mut topological: Vec<(usize, usize)> = edge_info
            .iter()
            .filter(|(_, info)| info.0 == 1)
            .map(|(&key, _)| key)
            .collect();
        topological.sort_unstable();
        if listed != topological {
            return Err(Error::InvalidMesh(format!(
                "listed boundary ({} edges) does not match the topological boundary ({} edges)",
                listed.len(),
                topological.len()
            )));
        }

        // Store boundary edges in the owner's CCW orientation, in the order
        // they were listed.
        let mut oriented = Vec::with_capacity(boundary_edges.len());
        for &[a, b] in &boundary_edges {
            let key = (a.min(b), a.max(b));
            let &(_, _, cycle_pair) = edge_info.get(&key).expect("checked above");
            oriented.push(cycle_pair);
        }

        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges: oriented,
            boundary_tags: None,
        })
    }

    /// Structured triangulation of the rectangle [0, width] × [0, height]
    /// with nx × ny cells, each split into two CCW triangles.
    pub fn generate_rect(width: f64, height: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(width > 0.0) || !(height > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rectangle dimensions must be positive, got {width} x {height}"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter(format!(
                "cell counts must be positive, got {nx} x {ny}"
            )));
        }
        let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
        for iy in 0..=ny {
            for ix in 0..=nx {
                nodes.push([width * ix as f64 / nx as f64, height * iy as f64 / ny as f64]);
            }
        }
        let at = |ix: usize, iy: usize| iy * (nx + 1) + ix;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let (v00, v10) = (at(ix, iy), at(ix + 1, iy));
                let (v01, v11) = (at(ix, iy + 1), at(ix + 1, iy + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let mut boundary = Vec::with_capacity(2 * (nx + ny));
        for ix in 0..nx {
            boundary.push([at(ix, 0), at(ix + 1, 0)]);
        }
        for iy in 0..ny {
            boundary.push([at(nx, iy), at(nx, iy + 1)]);
        }
        for ix in (0..nx).rev() {
            boundary.push([at(ix + 1, ny), at(ix, ny)]);
        }
        for iy in (0..ny).rev() {
            boundary.push([at(0, iy + 1), at(0, iy)]);
        }
        Self::from_parts(nodes, triangles, boundary)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    /// Tag of each boundary edge; `None` until classification has run.
    pub fn boundary_tags(&self) -> Option<&[BoundaryTag]> {
        self.boundary_tags.as_deref()
    }

    /// (edge, tag) pairs; errors if the boundary is unclassified.
    pub fn tagged_boundary_edges(&self) -> Result<Vec<([usize; 2], BoundaryTag)>> {
        let tags = self.boundary_tags.as_ref().ok_or_else(|| {
            Error::InvalidMesh("boundary has not been classified against a wind field".into())
        })?;
        Ok(self
            .boundary_edges
            .iter()
            .zip(tags)
            .map(|(&e, &t)| (e, t))
            .collect())
    }

    /// Nodes lying on at least one inflow-tagged edge, sorted ascending.
    /// Errors if the boundary is unclassified.
    pub fn inflow_nodes(&self) -> Result<Vec<usize>> {
        let tags = self.boundary_tags.as_ref().ok_or_else(|| {
            Error::InvalidMesh("boundary has not been classified against a wind field".into())
        })?;
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .zip(tags)
            .filter(|(_, &t)| t == BoundaryTag::Inflow)
            .flat_map(|(&[a, b], _)| [a, b])
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.nodes, self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Element diameter: the longest edge of triangle `t`.
    pub fn triangle_diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Largest element diameter over the mesh.
    pub fn max_diameter(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.triangle_diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn triangle_centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangle_coords(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Oriented boundary integral ∮ x dy − y dx / 2 over the (CCW-oriented)
    /// boundary edges; equals the meshed area by the divergence theorem,
    /// holes included.
    pub fn boundary_shoelace(&self) -> f64 {
        self.boundary_edges
            .iter()
            .map(|&[a, b]| {
                let (pa, pb) = (self.nodes[a], self.nodes[b]);
                0.5 * (pa[0] * pb[1] - pb[0] * pa[1])
            })
            .sum()
    }

    /// Finds the triangle containing `p` and its barycentric coordinates.
    /// Points within `1e-12` of an edge (relative to the element scale) are
    /// accepted as inside.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle_coords(t);
            let area2 = 2.0 * signed_area(&self.nodes, self.triangles[t]);
            let la = cross(sub(b, p), sub(c, p)) / area2;
            let lb = cross(sub(c, p), sub(a, p)) / area2;
            let lc = cross(sub(a, p), sub(b, p)) / area2;
            let tol = -1e-12;
            if la >= tol && lb >= tol && lc >= tol {
                return Some((t, [la, lb, lc]));
            }
        }
        None
    }

    /// P1 interpolation of a nodal field at `p`.
    pub fn interpolate(&self, field: &[f64], p: [f64; 2]) -> Result<f64> {
        let (t, l) = self
            .locate(p)
            .ok_or(Error::PointOutsideDomain(p[0], p[1]))?;
        let [a, b, c] = self.triangles[t];
        Ok(l[0] * field[a] + l[1] * field[b] + l[2] * field[c])
    }

    /// Serializes to the `plumetrace-mesh v1` text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("plumetrace-mesh v1\n");
        s.push_str(&format!("nodes {}\n", self.nodes.len()));
        for p in &self.nodes {
            s.push_str(&format!("{} {}\n", p[0], p[1]));
        }
        s.push_str(&format!("triangles {}\n", self.triangles.len()));
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s.push_str(&format!("boundary {}\n", self.boundary_edges.len()));
        for e in &self.boundary_edges {
            s.push_str(&format!("{} {}\n", e[0], e[1]));
        }
        s
    }

    /// Parses the `plumetrace-mesh v1` text format and validates the mesh.
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let bad = |line: usize, msg: &str| Error::InvalidMesh(format!("line {line}: {msg}"));
        let mut cursor = 0usize;
        fn next<'a>(
            lines: &[(usize, &'a str)],
            cursor: &mut usize,
            what: &str,
        ) -> Result<(usize, &'a str)> {
            let item = lines
                .get(*cursor)
                .copied()
                .ok_or_else(|| Error::InvalidMesh(format!("unexpected end of file in {what}")))?;
            *cursor += 1;
            Ok(item)
        }
        fn expect_count(
            lines: &[(usize, &str)],
            cursor: &mut usize,
            keyword: &str,
        ) -> Result<usize> {
            let (line, l) = next(lines, cursor, keyword)?;
            let mut it = l.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(k), Some(cnt), None) if k == keyword => cnt.parse().map_err(|_| {
                    Error::InvalidMesh(format!("line {line}: bad count in `{keyword}` header"))
                }),
                _ => Err(Error::InvalidMesh(format!(
                    "line {line}: expected `{keyword} <count>`"
                ))),
            }
        }

        let (line, header) = next(&lines, &mut cursor, "header")?;
        if header != "plumetrace-mesh v1" {
            return Err(bad(line, "expected header `plumetrace-mesh v1`"));
        }

        let n_nodes = expect_count(&lines, &mut cursor, "nodes")?;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (line, l) = next(&lines, &mut cursor, "node list")?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(line, "bad node coordinate"))?;
            if vals.len() != 2 {
                return Err(bad(line, "expected `x y`"));
            }
            nodes.push([vals[0], vals[1]]);
        }

        let n_tris = expect_count(&lines, &mut cursor, "triangles")?;
        let mut triangles = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let (line, l) = next(&lines, &mut cursor, "triangle list")?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(line, "bad triangle index"))?;
            if vals.len() != 3 {
                return Err(bad(line, "expected `i j k`"));
            }
            triangles.push([vals[0], vals[1], vals[2]]);
        }

        let n_bnd = expect_count(&lines, &mut cursor, "boundary")?;
        let mut boundary = Vec::with_capacity(n_bnd);
        for _ in 0..n_bnd {
            let (line, l) = next(&lines, &mut cursor, "boundary list")?;
            let vals: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(line, "bad boundary index"))?;
            if vals.len() != 2 {
                return Err(bad(line, "expected `i j`"));
            }
            boundary.push([vals[0], vals[1]]);
        }
        if let Some(&(line, _)) = lines.get(cursor) {
            return Err(bad(line, "trailing content after boundary list"));
        }
        Self::from_parts(nodes, triangles, boundary)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// Tags every boundary edge by the sign of v·n at its midpoint, with outward
/// normals taken from the owning triangle's orientation. `tol_rel` (default
/// [`DEFAULT_VN_TOL`]) is scaled by the largest wind magnitude over boundary
/// midpoints; |v·n| at or below the scaled tolerance is Characteristic.
/// Idempotent: re-classifying with the same wind reproduces the same tags.
pub fn classify_boundary(mesh: &mut Mesh, wind: &WindField, tol_rel: Option<f64>) -> Result<()> {
    wind.validate_len(mesh.n_nodes())?;
    let tol_rel = tol_rel.unwrap_or(DEFAULT_VN_TOL);
    if !(tol_rel >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "classification tolerance must be nonnegative, got {tol_rel}"
        )));
    }
    let mid_winds: Vec<[f64; 2]> = mesh
        .boundary_edges
        .iter()
        .map(|&[a, b]| wind.at_combination(&[mesh.nodes[a], mesh.nodes[b]], &[a, b]))
        .collect();
    let vmax = mid_winds.iter().map(|&v| wind::norm(v)).fold(0.0, f64::max);
    let tol_vn = tol_rel * vmax;
    let tags = mesh
        .boundary_edges
        .iter()
        .zip(&mid_winds)
        .map(|(&[a, b], &v)| {
            // Outward normal of a CCW-oriented boundary edge (a → b): the
            // edge direction rotated clockwise by 90°, i.e. (dy, −dx).
            let d = sub(mesh.nodes[b], mesh.nodes[a]);
            let len = wind::norm(d);
            let n = [d[1] / len, -d[0] / len];
            let vn = v[0] * n[0] + v[1] * n[1];
            if vn < -tol_vn {
                BoundaryTag::Inflow
            } else if vn > tol_vn {
                BoundaryTag::Outflow
            } else {
                BoundaryTag::Characteristic
            }
        })
        .collect();
    mesh.boundary_tags = Some(tags);
    Ok(())
}

fn signed_area(nodes: &[[f64; 2]], tri: [usize; 3]) -> f64 {
    let [a, b, c] = [nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]];
    0.5 * cross(sub(b, a), sub(c, a))
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
