//! Taylor-Hood (Q2 velocity, Q1 pressure) spaces on channel meshes and the
//! deterministic operator matrices.
//!
//! Unknown vectors are laid out `[v_x (n_q2), v_y (n_q2), p (n_p)]`. Q2 node
//! ids list mesh vertices first, so the pressure dof of a vertex and the Q2
//! node at that vertex share one id.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::mesh::{bilinear, det2, inlet_profile_on, BoundaryTag, ChannelMesh};
use crate::sparse::CsrMatrix;

/// Reference positions of the nine Q2 nodes: corners, edge midpoints
/// (bottom, right, top, left), centre.
const Q2_REF: [(usize, usize); 9] = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)];

fn lagrange2(s: f64) -> ([f64; 3], [f64; 3]) {
    (
        [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)],
        [s - 0.5, -2.0 * s, s + 0.5],
    )
}

/// Q2 values and reference gradients at `(s, t)`.
pub fn q2_shape(s: f64, t: f64) -> ([f64; 9], [[f64; 2]; 9]) {
    let (ls, dls) = lagrange2(s);
    let (lt, dlt) = lagrange2(t);
    let mut v = [0.0; 9];
    let mut g = [[0.0; 2]; 9];
    for (k, &(i, j)) in Q2_REF.iter().enumerate() {
        v[k] = ls[i] * lt[j];
        g[k] = [dls[i] * lt[j], ls[i] * dlt[j]];
    }
    (v, g)
}

pub fn q1_shape(s: f64, t: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 - t),
        0.25 * (1.0 + s) * (1.0 + t),
        0.25 * (1.0 - s) * (1.0 + t),
    ]
}

/// Quantities of one quadrature point of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadPoint {
    /// Gauss weight times Jacobian determinant.
    pub wdet: f64,
    pub phi: [f64; 9],
    /// Physical gradients of the Q2 functions.
    pub grad: [[f64; 2]; 9],
    pub psi: [f64; 4],
}

pub const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Local unknowns per element: 9 + 9 velocity, 4 pressure.
pub const LOCAL_DOFS: usize = 22;

#[derive(Debug, Clone)]
pub struct TaylorHoodSpace {
    pub mesh: ChannelMesh,
    pub n_q2: usize,
    pub n_p: usize,
    pub q2_coords: Vec<[f64; 2]>,
    /// Q2 node ids of each element in local order.
    pub elem_q2: Vec<[usize; 9]>,
    /// 3x3 Gauss data per element.
    pub qp: Vec<[QuadPoint; 9]>,
    /// Sorted `(unknown, value)` pairs for unit inflow scale.
    pub constraints: Vec<(usize, f64)>,
    pub is_constrained: Vec<bool>,
}

impl TaylorHoodSpace {
    pub fn new(mesh: ChannelMesh) -> Result<Self> {
        let nv = mesh.n_nodes();
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut elem_edges = Vec::with_capacity(mesh.quads.len());
        for q in &mesh.quads {
            let mut ids = [0usize; 4];
            for (k, id) in ids.iter_mut().enumerate() {
                let (a, b) = (q[k], q[(k + 1) % 4]);
                let key = (a.min(b), a.max(b));
                *id = *edge_id.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
            }
            elem_edges.push(ids);
        }
        let ne = edges.len();
        let n_q2 = nv + ne + mesh.quads.len();
        let mut q2_coords = mesh.nodes.clone();
        for &(a, b) in &edges {
            let (p, r) = (mesh.nodes[a], mesh.nodes[b]);
            q2_coords.push([0.5 * (p[0] + r[0]), 0.5 * (p[1] + r[1])]);
        }
        let mut elem_q2 = Vec::with_capacity(mesh.quads.len());
        let mut qp = Vec::with_capacity(mesh.quads.len());
        for (e, q) in mesh.quads.iter().enumerate() {
            let c = mesh.corners(e);
            q2_coords.push(bilinear(&c, 0.0, 0.0).0);
            let ed = elem_edges[e];
            elem_q2.push([q[0], q[1], q[2], q[3], nv + ed[0], nv + ed[1], nv + ed[2], nv + ed[3], nv + ne + e]);
            qp.push(element_quadrature(&c, e)?);
        }

        let mut space = Self {
            n_q2,
            n_p: nv,
            q2_coords,
            elem_q2,
            qp,
            constraints: Vec::new(),
            is_constrained: Vec::new(),
            mesh,
        };
        space.build_constraints(&edge_id)?;
        Ok(space)
    }

    fn build_constraints(&mut self, edge_id: &HashMap<(usize, usize), usize>) -> Result<()> {
        let nv = self.mesh.n_nodes();
        let mut prescribed: HashMap<usize, f64> = HashMap::new();
        let mut set = |dof: usize, value: f64| -> Result<()> {
            if let Some(&old) = prescribed.get(&dof) {
                if (old - value).abs() > 1e-12 * (1.0 + old.abs()) {
                    return Err(Error::ConflictingConstraint {
                        dof,
                        first: old,
                        second: value,
                    });
                }
            } else {
                prescribed.insert(dof, value);
            }
            Ok(())
        };
        for &(a, b, tag) in &self.mesh.boundary_edges {
            if tag == BoundaryTag::Outlet {
                continue;
            }
            let mid = nv + edge_id[&(a.min(b), a.max(b))];
            for node in [a, b, mid] {
                let value = match tag {
                    BoundaryTag::Inlet => inlet_profile_on(&self.mesh.geometry, self.q2_coords[node][1])?,
                    _ => [0.0, 0.0],
                };
                set(node, value[0])?;
                set(self.n_q2 + node, value[1])?;
            }
        }
        let mut constraints: Vec<(usize, f64)> = prescribed.into_iter().collect();
        constraints.sort_by_key(|c| c.0);
        let mut is_constrained = vec![false; self.n_unknowns()];
        for &(d, _) in &constraints {
            is_constrained[d] = true;
        }
        self.constraints = constraints;
        self.is_constrained = is_constrained;
        Ok(())
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.n_q2 + self.n_p
    }

    pub fn n_elements(&self) -> usize {
        self.elem_q2.len()
    }

    /// Global unknown ids of an element: v_x nodes, v_y nodes, pressure.
    pub fn local_dofs(&self, e: usize) -> [usize; LOCAL_DOFS] {
        let q = &self.elem_q2[e];
        let mut out = [0usize; LOCAL_DOFS];
        for k in 0..9 {
            out[k] = q[k];
            out[9 + k] = self.n_q2 + q[k];
        }
        for k in 0..4 {
            out[18 + k] = 2 * self.n_q2 + q[k];
        }
        out
    }

    /// Writes the prescribed values (times `inflow_scale`) into `x`.
    pub fn apply_constraints(&self, x: &mut [f64], inflow_scale: f64) {
        for &(d, v) in &self.constraints {
            x[d] = inflow_scale * v;
        }
    }

    /// Interpolation weights `(q2 node, weight)` of a point.
    pub fn point_weights(&self, p: [f64; 2]) -> Result<Vec<(usize, f64)>> {
        let (e, st) = self.mesh.locate(p)?;
        let (phi, _) = q2_shape(st[0], st[1]);
        Ok(self.elem_q2[e].iter().copied().zip(phi).collect())
    }

    /// Velocity component at a point for an unknown vector.
    pub fn eval_velocity(&self, x: &[f64], p: [f64; 2], component: usize) -> Result<f64> {
        let off = component * self.n_q2;
        Ok(self.point_weights(p)?.iter().map(|&(n, w)| w * x[off + n]).sum())
    }

    /// Involution of Q2 nodes under `y -> H - y`, if the mesh has one.
    pub fn mirror_map(&self) -> Result<Vec<usize>> {
        let h = self.mesh.geometry.height;
        let key = |p: [f64; 2]| ((p[0] * 1e8).round() as i64, (p[1] * 1e8).round() as i64);
        let index: HashMap<(i64, i64), usize> = self.q2_coords.iter().enumerate().map(|(i, &p)| (key(p), i)).collect();
        self.q2_coords
            .iter()
            .map(|&p| {
                index
                    .get(&key([p[0], h - p[1]]))
                    .copied()
                    .ok_or_else(|| invalid("mesh", format!("no mirror node for ({}, {})", p[0], p[1])))
            })
            .collect()
    }

    /// Mirror image of an unknown vector: `v_x` even, `v_y` odd, `p` even.
    pub fn mirror_state(&self, map: &[usize], x: &[f64]) -> Vec<f64> {
        let n = self.n_q2;
        let mut y = vec![0.0; x.len()];
        for i in 0..n {
            y[i] = x[map[i]];
            y[n + i] = -x[n + map[i]];
        }
        for j in 0..self.n_p {
            y[2 * n + j] = x[2 * n + map[j]];
        }
        y
    }
}

fn element_quadrature(c: &[[f64; 2]; 4], e: usize) -> Result<[QuadPoint; 9]> {
    let mut out = [QuadPoint {
        wdet: 0.0,
        phi: [0.0; 9],
        grad: [[0.0; 2]; 9],
        psi: [0.0; 4],
    }; 9];
    let mut k = 0;
    for &(s, ws) in &GAUSS3 {
        for &(t, wt) in &GAUSS3 {
            let (_, j) = bilinear(c, s, t);
            let det = det2(&j);
            if !(det > 0.0) {
                return Err(Error::SingularElement { element: e, det });
            }
            let (phi, gref) = q2_shape(s, t);
            let mut grad = [[0.0; 2]; 9];
            for a in 0..9 {
                // J^{-T} applied to the reference gradient
                grad[a][0] = (j[1][1] * gref[a][0] - j[1][0] * gref[a][1]) / det;
                grad[a][1] = (-j[0][1] * gref[a][0] + j[0][0] * gref[a][1]) / det;
            }
            out[k] = QuadPoint {
                wdet: ws * wt * det,
                phi,
                grad,
                psi: q1_shape(s, t),
            };
            k += 1;
        }
    }
    Ok(out)
}

/// Assembled linear operators. The convection form is not stored; it is
/// contracted element by element from the quadrature data of the space.
#[derive(Debug, Clone)]
pub struct FemTensors {
    /// Scalar Q2 stiffness `int grad phi_j . grad phi_n`.
    pub a: CsrMatrix,
    /// Pressure gradient coupling, rows `2 n_q2` velocity unknowns, columns
    /// pressure: `int psi_j d_c phi_n`.
    pub c: CsrMatrix,
    /// Divergence, `c` transposed.
    pub d: CsrMatrix,
}

pub fn assemble_fem_tensors(space: &TaylorHoodSpace) -> FemTensors {
    let n = space.n_q2;
    let mut a_rows = vec![Vec::new(); n];
    let mut c_rows = vec![Vec::new(); 2 * n];
    let mut d_rows = vec![Vec::new(); space.n_p];
    for q in &space.elem_q2 {
        for &r in q {
            a_rows[r].extend_from_slice(q);
            c_rows[r].extend_from_slice(&q[..4]);
            c_rows[n + r].extend_from_slice(&q[..4]);
        }
        for &j in &q[..4] {
            d_rows[j].extend(q.iter().copied());
            d_rows[j].extend(q.iter().map(|&m| n + m));
        }
    }
    let mut a = CsrMatrix::from_pattern(n, a_rows);
    let mut c = CsrMatrix::from_pattern(space.n_p, c_rows);
    let mut d = CsrMatrix::from_pattern(2 * n, d_rows);
    for (e, q) in space.elem_q2.iter().enumerate() {
        let mut ka = [[0.0; 9]; 9];
        let mut kc = [[[0.0; 4]; 9]; 2];
        for p in &space.qp[e] {
            for i in 0..9 {
                for j in 0..9 {
                    ka[i][j] += p.wdet * (p.grad[i][0] * p.grad[j][0] + p.grad[i][1] * p.grad[j][1]);
                }
                for comp in 0..2 {
                    for j in 0..4 {
                        kc[comp][i][j] += p.wdet * p.psi[j] * p.grad[i][comp];
                    }
                }
            }
        }
        for i in 0..9 {
            for j in 0..9 {
                let k = a.position(q[i], q[j]).expect("pattern");
                a.values[k] += ka[i][j];
            }
            for comp in 0..2 {
                for j in 0..4 {
                    let row = comp * n + q[i];
                    let k = c.position(row, q[j]).expect("pattern");
                    c.values[k] += kc[comp][i][j];
                    let k = d.position(q[j], row).expect("pattern");
                    d.values[k] += kc[comp][i][j];
                }
            }
        }
    }
    FemTensors { a, c, d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ChannelGeometry, MeshPreset, SymmetryMode};

    pub(crate) fn unit_square_mesh() -> ChannelMesh {
        ChannelMesh {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            quads: vec![[0, 1, 2, 3]],
            boundary_edges: vec![],
            symmetry: SymmetryMode::StructuredSymmetric,
            geometry: ChannelGeometry::default(),
        }
    }

    #[test]
    fn shape_partition_of_unity() {
        for &(s, t) in &[(0.3, -0.7), (1.0, 1.0), (-0.2, 0.0)] {
            let (v, g) = q2_shape(s, t);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(g.iter().map(|x| x[0]).sum::<f64>().abs() < 1e-14);
            assert!((q1_shape(s, t).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let (v, _) = q2_shape(1.0, 0.0);
        assert_eq!(v[5], 1.0);
    }

    #[test]
    fn reference_stiffness_matches_tensor_product() {
        // 1D quadratic stiffness and mass on [0,1]
        let k1 = [
            [7.0 / 3.0, -8.0 / 3.0, 1.0 / 3.0],
            [-8.0 / 3.0, 16.0 / 3.0, -8.0 / 3.0],
            [1.0 / 3.0, -8.0 / 3.0, 7.0 / 3.0],
        ];
        let m1 = [
            [2.0 / 15.0, 1.0 / 15.0, -1.0 / 30.0],
            [1.0 / 15.0, 8.0 / 15.0, 1.0 / 15.0],
            [-1.0 / 30.0, 1.0 / 15.0, 2.0 / 15.0],
        ];
        let space = TaylorHoodSpace::new(unit_square_mesh()).unwrap();
        let t = assemble_fem_tensors(&space);
        let q = space.elem_q2[0];
        for (a, &(ia, ja)) in Q2_REF.iter().enumerate() {
            for (b, &(ib, jb)) in Q2_REF.iter().enumerate() {
                let exact = k1[ia][ib] * m1[ja][jb] + m1[ia][ib] * k1[ja][jb];
                assert!((t.a.get(q[a], q[b]) - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constants_in_stiffness_kernel() {
        let space = TaylorHoodSpace::new(MeshPreset::CoarseUnstructured.build().unwrap()).unwrap();
        let t = assemble_fem_tensors(&space);
        let r = t.a.mul(&vec![3.0; space.n_q2]);
        assert!(r.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn linear_divergence_free_field() {
        let space = TaylorHoodSpace::new(MeshPreset::CoarseUnstructured.build().unwrap()).unwrap();
        let t = assemble_fem_tensors(&space);
        let n = space.n_q2;
        let mut v = vec![0.0; 2 * n];
        for (i, p) in space.q2_coords.iter().enumerate() {
            v[i] = p[0];
            v[n + i] = -p[1];
        }
        let div = t.d.mul(&v);
        assert!(div.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn divergence_is_gradient_transpose() {
        let space = TaylorHoodSpace::new(MeshPreset::Symmetric.build().unwrap()).unwrap();
        let t = assemble_fem_tensors(&space);
        for j in 0..space.n_p {
            for (col, v) in t.d.row(j) {
                assert_eq!(v, t.c.get(col, j));
            }
        }
    }

    #[test]
    fn linear_field_energy() {
        // u = 2x + 3y has energy 13 |Omega|
        let space = TaylorHoodSpace::new(MeshPreset::CoarseUnstructured.build().unwrap()).unwrap();
        let t = assemble_fem_tensors(&space);
        let u: Vec<f64> = space.q2_coords.iter().map(|p| 2.0 * p[0] + 3.0 * p[1]).collect();
        let au = t.a.mul(&u);
        let energy: f64 = u.iter().zip(&au).map(|(a, b)| a * b).sum();
        let area = 10.0 * 2.5 + 40.0 * 7.5;
        assert!((energy - 13.0 * area).abs() < 1e-10 * energy);
    }

    #[test]
    fn stiffness_symmetric_psd() {
        let space = TaylorHoodSpace::new(unit_square_mesh()).unwrap();
        let t = assemble_fem_tensors(&space);
        let d = t.a.to_dense();
        for i in 0..9 {
            for j in 0..9 {
                assert!((d[i * 9 + j] - d[j * 9 + i]).abs() < 1e-14);
            }
        }
        let (vals, _) = crate::dense::symmetric_eigen(9, &d).unwrap();
        assert!(vals[0] > -1e-12);
    }

    #[test]
    fn dirichlet_values() {
        let space = TaylorHoodSpace::new(MeshPreset::CoarseUnstructured.build().unwrap()).unwrap();
        let get = |d: usize| space.constraints.iter().find(|c| c.0 == d).map(|c| c.1);
        let mid = space.q2_coords.iter().position(|p| p[0] == 0.0 && p[1] == 3.75).unwrap();
        assert_eq!(get(mid), Some(31.25));
        assert_eq!(get(space.n_q2 + mid), Some(0.0));
        let wall = space.q2_coords.iter().position(|p| p[1] == 0.0 && p[0] == 30.0).unwrap();
        assert_eq!(get(wall), Some(0.0));
        for (i, p) in space.q2_coords.iter().enumerate() {
            if p[0] == 50.0 && p[1] > 0.0 && p[1] < 7.5 {
                assert!(get(i).is_none() && get(space.n_q2 + i).is_none());
            }
        }
        for j in 0..space.n_p {
            assert!(!space.is_constrained[2 * space.n_q2 + j]);
        }
    }

    #[test]
    fn mirror_map_preserves_operators() {
        let space = TaylorHoodSpace::new(MeshPreset::Symmetric.build().unwrap()).unwrap();
        let t = assemble_fem_tensors(&space);
        let m = space.mirror_map().unwrap();
        for i in 0..space.n_q2 {
            assert_eq!(m[m[i]], i);
            for (j, v) in t.a.row(i) {
                assert!((t.a.get(m[i], m[j]) - v).abs() < 1e-12);
            }
        }
        // D(v) for the mirrored field is the mirrored divergence
        let n = space.n_q2;
        let v: Vec<f64> = (0..2 * n).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        let mut vm = vec![0.0; 2 * n];
        for i in 0..n {
            vm[i] = v[m[i]];
            vm[n + i] = -v[n + m[i]];
        }
        let d1 = t.d.mul(&v);
        let d2 = t.d.mul(&vm);
        for j in 0..space.n_p {
            assert!((d2[j] - d1[m[j]]).abs() < 1e-12);
        }
        assert!(TaylorHoodSpace::new(MeshPreset::CoarseUnstructured.build().unwrap())
            .unwrap()
            .mirror_map()
            .is_err());
    }

    #[test]
    fn nodal_interpolation() {
        let space = TaylorHoodSpace::new(MeshPreset::CoarseUnstructured.build().unwrap()).unwrap();
        let x: Vec<f64> = (0..space.n_unknowns()).map(|k| k as f64).collect();
        let node = 500;
        let p = space.q2_coords[node];
        let v = space.eval_velocity(&x, p, 1).unwrap();
        assert!((v - x[space.n_q2 + node]).abs() < 1e-9);
    }
}
