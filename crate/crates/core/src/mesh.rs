//! Quadrilateral meshes of the sudden-expansion channel.
//!
//! The domain is an inlet strip `[0, L_in] x [y_lo, y_hi]` attached to a main
//! channel `[L_in, L] x [0, H]`. Both blocks share one vertical spacing so the
//! grid is conforming across the expansion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Inlet,
    Wall,
    Outlet,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Inlet => "inlet",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Outlet => "outlet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inlet" => Some(BoundaryTag::Inlet),
            "wall" => Some(BoundaryTag::Wall),
            "outlet" => Some(BoundaryTag::Outlet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SymmetryMode {
    StructuredSymmetric,
    Unstructured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub inlet_length: f64,
    pub total_length: f64,
    pub inlet_lo: f64,
    pub inlet_hi: f64,
    pub height: f64,
}

impl Default for ChannelGeometry {
    fn default() -> Self {
        Self {
            inlet_length: 10.0,
            total_length: 50.0,
            inlet_lo: 2.5,
            inlet_hi: 5.0,
            height: 7.5,
        }
    }
}

impl ChannelGeometry {
    fn validate(&self) -> Result<()> {
        let ok = self.inlet_length > 0.0
            && self.total_length > self.inlet_length
            && self.inlet_hi > self.inlet_lo
            && self.inlet_lo > 0.0
            && self.height > self.inlet_hi;
        if !ok {
            return Err(invalid("geometry", format!("non-positive widths in {self:?}")));
        }
        Ok(())
    }

    pub fn symmetry_axis(&self) -> f64 {
        0.5 * self.height
    }
}

/// Block counts of a channel mesh before refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub geometry: ChannelGeometry,
    /// Cells along the inlet strip.
    pub nx_inlet: usize,
    /// Cells across the inlet strip.
    pub ny_inlet: usize,
    /// Cells along the main channel.
    pub nx_main: usize,
    /// Each level halves every cell in both directions.
    pub refinement: u32,
    pub symmetry: SymmetryMode,
    pub jitter_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeshPreset {
    /// 1275 vertices, jittered.
    CoarseUnstructured,
    /// 1541 vertices, jittered.
    DenseUnstructured,
    /// 935 vertices, mirror symmetric.
    Symmetric,
}

impl MeshPreset {
    pub const ALL: [MeshPreset; 3] = [MeshPreset::CoarseUnstructured, MeshPreset::DenseUnstructured, MeshPreset::Symmetric];

    pub fn name(self) -> &'static str {
        match self {
            MeshPreset::CoarseUnstructured => "coarse-unstructured",
            MeshPreset::DenseUnstructured => "dense-unstructured",
            MeshPreset::Symmetric => "symmetric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn spec(self) -> MeshSpec {
        let (nx_inlet, ny_inlet, nx_main, symmetry) = match self {
            MeshPreset::CoarseUnstructured => (22, 6, 58, SymmetryMode::Unstructured),
            MeshPreset::DenseUnstructured => (22, 6, 72, SymmetryMode::Unstructured),
            MeshPreset::Symmetric => (18, 4, 64, SymmetryMode::StructuredSymmetric),
        };
        MeshSpec {
            geometry: ChannelGeometry::default(),
            nx_inlet,
            ny_inlet,
            nx_main,
            refinement: 0,
            symmetry,
            jitter_seed: 2024,
        }
    }

    pub fn build(self) -> Result<ChannelMesh> {
        build_channel_mesh(&self.spec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Corner ids, counter-clockwise.
    pub quads: Vec<[usize; 4]>,
    pub boundary_edges: Vec<(usize, usize, BoundaryTag)>,
    pub symmetry: SymmetryMode,
    pub geometry: ChannelGeometry,
}

/// Uniform breakpoints `a..=b` with `n` cells.
fn breakpoints(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| if i == n { b } else { a + (b - a) * i as f64 / n as f64 })
        .collect()
}

/// Vertical breakpoints of the main block, built from the bottom half and
/// mirrored so that `y -> H - y` maps the set onto itself exactly.
fn main_rows(g: &ChannelGeometry, ny_inlet: usize) -> Result<Vec<f64>> {
    let h = (g.inlet_hi - g.inlet_lo) / ny_inlet as f64;
    let below = ((g.inlet_lo / h).round() as usize).max(1);
    let above = (((g.height - g.inlet_hi) / h).round() as usize).max(1);
    let mut ys = breakpoints(0.0, g.inlet_lo, below);
    ys.extend(breakpoints(g.inlet_lo, g.inlet_hi, ny_inlet).into_iter().skip(1));
    ys.extend(breakpoints(g.inlet_hi, g.height, above).into_iter().skip(1));
    let axis = g.symmetry_axis();
    let n = ys.len();
    if below == above && (g.inlet_lo + g.inlet_hi - g.height).abs() < 1e-12 * g.height {
        for j in 0..n / 2 {
            ys[n - 1 - j] = g.height - ys[j];
        }
        if n % 2 == 1 {
            ys[n / 2] = axis;
        }
    }
    if ys.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("geometry", "degenerate vertical spacing"));
    }
    Ok(ys)
}

pub fn build_channel_mesh(spec: &MeshSpec) -> Result<ChannelMesh> {
    let g = spec.geometry;
    g.validate()?;
    if spec.nx_inlet == 0 || spec.ny_inlet == 0 || spec.nx_main == 0 {
        return Err(invalid("mesh", "cell counts must be positive"));
    }
    let f = 1usize << spec.refinement;
    let (nx1, a, nx2) = (spec.nx_inlet * f, spec.ny_inlet * f, spec.nx_main * f);
    let ys = main_rows(&g, a)?;
    let j_lo = ys.iter().position(|&y| y == g.inlet_lo).expect("inlet row present");
    let xs_in = breakpoints(0.0, g.inlet_length, nx1);
    let xs_main = breakpoints(g.inlet_length, g.total_length, nx2);
    let ny2 = ys.len() - 1;

    let mut nodes = Vec::new();
    // inlet block columns 0..nx1 (column nx1 belongs to the main block)
    let mut inlet_id = vec![vec![0usize; a + 1]; nx1];
    for (i, &x) in xs_in.iter().take(nx1).enumerate() {
        for j in 0..=a {
            inlet_id[i][j] = nodes.len();
            nodes.push([x, ys[j_lo + j]]);
        }
    }
    let mut main_id = vec![vec![0usize; ny2 + 1]; nx2 + 1];
    for (i, &x) in xs_main.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            main_id[i][j] = nodes.len();
            nodes.push([x, y]);
        }
    }
    let inlet_node = |i: usize, j: usize| if i == nx1 { main_id[0][j_lo + j] } else { inlet_id[i][j] };

    let mut quads = Vec::new();
    for i in 0..nx1 {
        for j in 0..a {
            quads.push([
                inlet_node(i, j),
                inlet_node(i + 1, j),
                inlet_node(i + 1, j + 1),
                inlet_node(i, j + 1),
            ]);
        }
    }
    for i in 0..nx2 {
        for j in 0..ny2 {
            quads.push([main_id[i][j], main_id[i + 1][j], main_id[i + 1][j + 1], main_id[i][j + 1]]);
        }
    }

    let boundary_edges = tag_boundary(&nodes, &quads, &g);
    let mut mesh = ChannelMesh {
        nodes,
        quads,
        boundary_edges,
        symmetry: spec.symmetry,
        geometry: g,
    };
    if spec.symmetry == SymmetryMode::Unstructured {
        jitter(&mut mesh, spec.jitter_seed);
    }
    mesh.check_jacobians()?;
    Ok(mesh)
}

/// Edges used by exactly one quad, tagged from their position.
fn tag_boundary(nodes: &[[f64; 2]], quads: &[[usize; 4]], g: &ChannelGeometry) -> Vec<(usize, usize, BoundaryTag)> {
    use std::collections::HashMap;
    let mut count: HashMap<(usize, usize), (usize, usize, usize)> = HashMap::new();
    for q in quads {
        for k in 0..4 {
            let (p, r) = (q[k], q[(k + 1) % 4]);
            let key = (p.min(r), p.max(r));
            count.entry(key).or_insert((p, r, 0)).2 += 1;
        }
    }
    let tol = 1e-9 * g.total_length;
    let mut edges: Vec<(usize, usize, BoundaryTag)> = count
        .into_values()
        .filter(|e| e.2 == 1)
        .map(|(p, r, _)| {
            let (a, b) = (nodes[p], nodes[r]);
            let tag = if a[0].abs() < tol && b[0].abs() < tol {
                BoundaryTag::Inlet
            } else if (a[0] - g.total_length).abs() < tol && (b[0] - g.total_length).abs() < tol {
                BoundaryTag::Outlet
            } else {
                BoundaryTag::Wall
            };
            (p, r, tag)
        })
        .collect();
    edges.sort_by_key(|e| (e.0.min(e.1), e.0.max(e.1)));
    edges
}

/// Moves every interior vertex by a seeded displacement of at most 10% of
/// its shortest incident edge.
fn jitter(mesh: &mut ChannelMesh, seed: u64) {
    let n = mesh.nodes.len();
    let mut on_boundary = vec![false; n];
    for &(p, r, _) in &mesh.boundary_edges {
        on_boundary[p] = true;
        on_boundary[r] = true;
    }
    let mut min_edge = vec![f64::INFINITY; n];
    for q in &mesh.quads {
        for k in 0..4 {
            let (p, r) = (q[k], q[(k + 1) % 4]);
            let d = dist(mesh.nodes[p], mesh.nodes[r]);
            min_edge[p] = min_edge[p].min(d);
            min_edge[r] = min_edge[r].min(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        // draw for every node so the stream does not depend on the boundary
        let radius: f64 = rng.gen_range(0.0..=1.0);
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        if on_boundary[i] {
            continue;
        }
        let r = 0.1 * min_edge[i] * radius;
        mesh.nodes[i][0] += r * angle.cos();
        mesh.nodes[i][1] += r * angle.sin();
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Bilinear map of a quad: position and Jacobian at reference `(s, t)`.
pub fn bilinear(corners: &[[f64; 2]; 4], s: f64, t: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = [
        0.25 * (1.0 - s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 + t),
        0.25 * (1.0 - s) * (1.0 + t),
    ];
    let ds = [-0.25 * (1.0 - t), 0.25 * (1.0 - t), 0.25 * (1.0 + t), -0.25 * (1.0 + t)];
    let dt = [-0.25 * (1.0 - s), -0.25 * (1.0 + s), 0.25 * (1.0 + s), 0.25 * (1.0 - s)];
    let mut x = [0.0; 2];
    let mut jac = [[0.0; 2]; 2];
    for k in 0..4 {
        for d in 0..2 {
            x[d] += n[k] * corners[k][d];
            jac[d][0] += ds[k] * corners[k][d];
            jac[d][1] += dt[k] * corners[k][d];
        }
    }
    (x, jac)
}

pub fn det2(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

impl ChannelMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn corners(&self, e: usize) -> [[f64; 2]; 4] {
        self.quads[e].map(|k| self.nodes[k])
    }

    /// Fails on the first element whose mapping is not orientation-preserving
    /// at the 3x3 Gauss points or corners.
    pub fn check_jacobians(&self) -> Result<()> {
        let g = 0.6f64.sqrt();
        let pts = [-1.0, -g, 0.0, g, 1.0];
        for e in 0..self.quads.len() {
            let c = self.corners(e);
            for &s in &pts {
                for &t in &pts {
                    let d = det2(&bilinear(&c, s, t).1);
                    if !(d > 0.0) {
                        return Err(Error::SingularElement { element: e, det: d });
                    }
                }
            }
        }
        Ok(())
    }

    /// Element containing `p` and its reference coordinates.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 2])> {
        let tol = 1e-10;
        for e in 0..self.quads.len() {
            let c = self.corners(e);
            let (lo_x, hi_x) = c
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v[0]), a.1.max(v[0])));
            let (lo_y, hi_y) = c
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v[1]), a.1.max(v[1])));
            if p[0] < lo_x - 1e-9 || p[0] > hi_x + 1e-9 || p[1] < lo_y - 1e-9 || p[1] > hi_y + 1e-9 {
                continue;
            }
            // Newton inversion of the bilinear map
            let mut st = [0.0, 0.0];
            let mut ok = false;
            for _ in 0..30 {
                let (x, j) = bilinear(&c, st[0], st[1]);
                let r = [x[0] - p[0], x[1] - p[1]];
                let d = det2(&j);
                let ds = (j[1][1] * r[0] - j[0][1] * r[1]) / d;
                let dt = (-j[1][0] * r[0] + j[0][0] * r[1]) / d;
                st[0] -= ds;
                st[1] -= dt;
                if ds.abs() + dt.abs() < 1e-14 {
                    ok = true;
                    break;
                }
            }
            if ok && st[0].abs() <= 1.0 + tol && st[1].abs() <= 1.0 + tol {
                return Ok((e, [st[0].clamp(-1.0, 1.0), st[1].clamp(-1.0, 1.0)]));
            }
        }
        Err(Error::PointOutsideMesh { x: p[0], y: p[1] })
    }

    /// Vertex ids on at least one boundary edge with the given tag.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary_edges.iter().filter(|e| e.2 == tag).flat_map(|e| [e.0, e.1]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Plain-text form: header, coordinates, quads, tagged boundary edges.
    /// Coordinates use shortest round-trip formatting, so reading back is
    /// bit-exact.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "nodes {} quads {}", self.nodes.len(), self.quads.len());
        for p in &self.nodes {
            let _ = writeln!(s, "{:?} {:?}", p[0], p[1]);
        }
        for q in &self.quads {
            let _ = writeln!(s, "{} {} {} {}", q[0], q[1], q[2], q[3]);
        }
        for &(a, b, t) in &self.boundary_edges {
            let _ = writeln!(s, "{a} {b} {}", t.name());
        }
        s
    }

    pub fn from_text(text: &str, symmetry: SymmetryMode, geometry: ChannelGeometry) -> Result<Self> {
        let bad = |line: usize, what: &str| invalid("mesh", format!("line {}: {what}", line + 1));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| invalid("mesh", "empty file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 || h[0] != "nodes" || h[2] != "quads" {
            return Err(bad(0, "expected `nodes N quads M`"));
        }
        let nn: usize = h[1].parse().map_err(|_| bad(0, "node count"))?;
        let nq: usize = h[3].parse().map_err(|_| bad(0, "quad count"))?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let (i, l) = lines.next().ok_or_else(|| invalid("mesh", "truncated node list"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i, "coordinate"))?;
            if v.len() != 2 {
                return Err(bad(i, "expected `x y`"));
            }
            nodes.push([v[0], v[1]]);
        }
        let mut quads = Vec::with_capacity(nq);
        for _ in 0..nq {
            let (i, l) = lines.next().ok_or_else(|| invalid("mesh", "truncated quad list"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(i, "node id"))?;
            if v.len() != 4 || v.iter().any(|&k| k >= nn) {
                return Err(bad(i, "expected 4 valid node ids"));
            }
            quads.push([v[0], v[1], v[2], v[3]]);
        }
        let mut boundary_edges = Vec::new();
        for (i, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() != 3 {
                return Err(bad(i, "expected `n1 n2 tag`"));
            }
            let a: usize = v[0].parse().map_err(|_| bad(i, "node id"))?;
            let b: usize = v[1].parse().map_err(|_| bad(i, "node id"))?;
            let t = BoundaryTag::parse(v[2]).ok_or_else(|| bad(i, "unknown tag"))?;
            if a >= nn || b >= nn {
                return Err(bad(i, "node id out of range"));
            }
            boundary_edges.push((a, b, t));
        }
        let mesh = Self {
            nodes,
            quads,
            boundary_edges,
            symmetry,
            geometry,
        };
        mesh.check_jacobians()?;
        Ok(mesh)
    }
}

/// Horizontal inlet velocity `20 (y_hi - y)(y - y_lo)`, zero vertical part.
pub fn inlet_profile(x2: f64) -> Result<[f64; 2]> {
    let g = ChannelGeometry::default();
    inlet_profile_on(&g, x2)
}

pub fn inlet_profile_on(g: &ChannelGeometry, x2: f64) -> Result<[f64; 2]> {
    let tol = 1e-12 * g.height;
    if !(x2 >= g.inlet_lo - tol && x2 <= g.inlet_hi + tol) {
        return Err(invalid("x2", format!("{x2} outside the inlet [{}, {}]", g.inlet_lo, g.inlet_hi)));
    }
    Ok([(20.0 * (g.inlet_hi - x2) * (x2 - g.inlet_lo)).max(0.0), 0.0])
}
