//! Diffuse view factors between mesh elements.
//!
//! Dense factors are estimated once by Monte-Carlo ray casting with
//! occlusion against every face. Coarse meshes reuse them: each coarse node
//! takes the row of its nearest dense node on the same face, and the dense
//! columns are summed into the coarse element that contains each dense
//! node center.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::geometry::{Vec3, intersect_cylinder, intersect_rect};
use crate::mesh::{FaceMesh, Surface, SurfaceKind, node_offsets};
use crate::sparse::{CsrBuilder, CsrMatrix};
use crate::{Error, Result};

fn sq(x: f64) -> f64 {
    x * x
}

/// Default number of rays cast from each dense node.
pub const DEFAULT_RAYS_PER_NODE: usize = 10_000;

/// Offset applied to ray origins to avoid re-hitting the emitting face.
const RAY_EPS: f64 = 1e-9;

/// Square node-to-node view factor matrix plus the element areas it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFactorMatrix {
    n: usize,
    /// Row-major `F[i][j]`.
    values: Vec<f64>,
    areas: Vec<f64>,
    /// Rays per source node behind each row; zero when not a Monte-Carlo estimate.
    rays_per_node: usize,
}

impl ViewFactorMatrix {
    pub fn from_parts(n: usize, values: Vec<f64>, areas: Vec<f64>, rays_per_node: usize) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "view factor values",
                expected: n * n,
                got: values.len(),
            });
        }
        if areas.len() != n {
            return Err(Error::DimensionMismatch {
                context: "view factor areas",
                expected: n,
                got: areas.len(),
            });
        }
        Ok(Self {
            n,
            values,
            areas,
            rays_per_node,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn rays_per_node(&self) -> usize {
        self.rays_per_node
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().sum()).collect()
    }

    /// `1 − Σ_j F[i][j]` for every node.
    pub fn space_factors(&self) -> Vec<f64> {
        self.row_sums().into_iter().map(|s| 1.0 - s).collect()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_dense(self.n, self.n, &self.values)
    }

    /// Binomial standard error of entry `(i, j)`.
    pub fn std_error(&self, i: usize, j: usize) -> f64 {
        if self.rays_per_node == 0 {
            return 0.0;
        }
        let p = self.get(i, j);
        libm::sqrt((p * (1.0 - p)).max(0.0) / self.rays_per_node as f64)
    }

    /// Tolerance `ε_mc` used for row sums: three binomial standard errors of
    /// a row total estimated from `rays_per_node` rays.
    pub fn row_sum_tolerance(&self, i: usize) -> f64 {
        if self.rays_per_node == 0 {
            return 0.0;
        }
        let s = self.row(i).iter().sum::<f64>().clamp(0.0, 1.0);
        3.0 * libm::sqrt(s * (1.0 - s) / self.rays_per_node as f64)
    }

    /// Node-pair reciprocity statistics.
    pub fn reciprocity(&self) -> ReciprocityReport {
        let mut rep = ReciprocityReport::default();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let fij = self.get(i, j);
                let fji = self.get(j, i);
                if fij == 0.0 && fji == 0.0 {
                    continue;
                }
                let (ai, aj) = (self.areas[i], self.areas[j]);
                let diff = (ai * fij - aj * fji).abs();
                let sd = libm::sqrt(sq(ai * self.std_error(i, j)) + sq(aj * self.std_error(j, i)));
                rep.pairs += 1;
                rep.max_abs_violation = rep.max_abs_violation.max(diff);
                let scale = (ai * fij).max(aj * fji);
                rep.max_rel_violation = rep.max_rel_violation.max(diff / scale);
                if sd > 0.0 {
                    let z = diff / sd;
                    rep.max_z = rep.max_z.max(z);
                    if z > 3.0 {
                        rep.pairs_over_3sigma += 1;
                    }
                } else if diff > 0.0 {
                    rep.pairs_over_3sigma += 1;
                }
            }
        }
        rep
    }

    /// Face-to-face reciprocity: compares `A_I F_IJ` with `A_J F_JI` for every
    /// pair of faces, where the face totals are area-weighted sums of node
    /// rows. Returns `(I, J, |difference|, standard error)` per pair with any exchange.
    pub fn surface_reciprocity(&self, offsets: &[usize]) -> Vec<SurfacePairExchange> {
        let faces = offsets.len() - 1;
        let rays = self.rays_per_node.max(1) as f64;
        // exchange[I][J] = Σ_{i∈I} A_i Σ_{j∈J} F_ij and its binomial variance
        let mut exch = vec![0.0; faces * faces];
        let mut var = vec![0.0; faces * faces];
        for fi in 0..faces {
            for i in offsets[fi]..offsets[fi + 1] {
                let row = self.row(i);
                for fj in 0..faces {
                    let p: f64 = row[offsets[fj]..offsets[fj + 1]].iter().sum();
                    exch[fi * faces + fj] += self.areas[i] * p;
                    if self.rays_per_node > 0 {
                        var[fi * faces + fj] += sq(self.areas[i]) * p * (1.0 - p).max(0.0) / rays;
                    }
                }
            }
        }
        let mut out = Vec::new();
        for a in 0..faces {
            for b in (a + 1)..faces {
                let (x, y) = (exch[a * faces + b], exch[b * faces + a]);
                if x == 0.0 && y == 0.0 {
                    continue;
                }
                out.push(SurfacePairExchange {
                    first: a,
                    second: b,
                    forward: x,
                    backward: y,
                    std_error: libm::sqrt(var[a * faces + b] + var[b * faces + a]),
                });
            }
        }
        out
    }

    /// Same matrix with `A_i F_ij` replaced by the mean of both directions.
    pub fn symmetrized(&self) -> ViewFactorMatrix {
        let mut v = self.values.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                let ex = 0.5 * (self.areas[i] * self.get(i, j) + self.areas[j] * self.get(j, i));
                v[i * self.n + j] = ex / self.areas[i];
            }
        }
        ViewFactorMatrix {
            values: v,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReciprocityReport {
    pub pairs: usize,
    pub max_abs_violation: f64,
    pub max_rel_violation: f64,
    pub max_z: f64,
    pub pairs_over_3sigma: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePairExchange {
    pub first: usize,
    pub second: usize,
    /// `A_I F_IJ`
    pub forward: f64,
    /// `A_J F_JI`
    pub backward: f64,
    pub std_error: f64,
}

impl SurfacePairExchange {
    /// Number of standard errors separating the two directions.
    pub fn z_score(&self) -> f64 {
        let d = (self.forward - self.backward).abs();
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Faces and their meshes, ready for ray casting.
#[derive(Debug, Clone)]
pub struct Scene<'a> {
    surfaces: &'a [Surface],
    meshes: &'a [FaceMesh],
    offsets: Vec<usize>,
    /// Global node index → (surface, local element).
    owners: Vec<(usize, usize)>,
}

impl<'a> Scene<'a> {
    pub fn new(surfaces: &'a [Surface], meshes: &'a [FaceMesh]) -> Result<Self> {
        if surfaces.len() != meshes.len() {
            return Err(Error::DimensionMismatch {
                context: "scene meshes",
                expected: surfaces.len(),
                got: meshes.len(),
            });
        }
        for (s, m) in surfaces.iter().zip(meshes) {
            if m.surface_id != s.id {
                return Err(Error::SurfaceMismatch {
                    left: s.id,
                    right: m.surface_id,
                });
            }
            if m.areas.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::DegenerateGeometry {
                    surface_id: s.id,
                    what: "zero-area element",
                });
            }
        }
        let kinds: Vec<_> = surfaces.iter().map(|s| s.kind).collect();
        let ns: Vec<_> = meshes.iter().map(|m| m.n).collect();
        let offsets = node_offsets(&kinds, &ns);
        let mut owners = Vec::with_capacity(*offsets.last().unwrap());
        for (si, m) in meshes.iter().enumerate() {
            owners.extend((0..m.node_count()).map(|e| (si, e)));
        }
        Ok(Self {
            surfaces,
            meshes,
            offsets,
            owners,
        })
    }

    pub fn node_count(&self) -> usize {
        self.owners.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn areas(&self) -> Vec<f64> {
        self.meshes.iter().flat_map(|m| m.areas.iter().copied()).collect()
    }

    /// First face hit by a ray, with the global node index and the side hit.
    pub fn trace(&self, origin: Vec3, dir: Vec3, skip_surface: Option<usize>) -> Option<(usize, bool)> {
        let mut best: Option<(f64, usize, bool)> = None;
        for (si, s) in self.surfaces.iter().enumerate() {
            if Some(si) == skip_surface {
                continue;
            }
            let hit = match s.kind {
                SurfaceKind::Rectangular2D => intersect_rect(&s.frame, s.width, s.height, origin, dir, RAY_EPS),
                SurfaceKind::Cylindrical1D => {
                    intersect_cylinder(&s.frame, s.material.radius, s.height, origin, dir, RAY_EPS)
                }
            };
            let Some(h) = hit else { continue };
            if best.is_some_and(|(t, _, _)| t <= h.t) {
                continue;
            }
            let n = self.meshes[si].n;
            let cell = |x: f64, len: f64| (((x / len + 0.5) * n as f64) as usize).min(n - 1);
            let local = match s.kind {
                SurfaceKind::Rectangular2D => cell(h.b, s.height) * n + cell(h.a, s.width),
                SurfaceKind::Cylindrical1D => cell(h.b, s.height),
            };
            best = Some((h.t, self.offsets[si] + local, h.front));
        }
        best.map(|(_, node, front)| (node, front))
    }

    /// Whether anything other than `skip_surface` blocks the ray.
    pub fn occluded(&self, origin: Vec3, dir: Vec3, skip_surface: Option<usize>) -> bool {
        self.trace(origin, dir, skip_surface).is_some()
    }

    /// Monte-Carlo estimate of one row of the view factor matrix as sparse
    /// `(target node, factor)` pairs in ascending node order.
    ///
    /// Each node draws from its own ChaCha stream, so rows are independent of
    /// the order or thread they are computed on.
    pub fn trace_row(&self, node: usize, rays: usize, seed: u64) -> Vec<(usize, f64)> {
        let (si, e) = self.owners[node];
        let s = &self.surfaces[si];
        let b = self.meshes[si].local[e];
        let f = &s.frame;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(node as u64);
        let mut uniform = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let mut counts: Vec<(usize, u32)> = Vec::new();
        for _ in 0..rays {
            let (origin, normal, t1, t2) = match s.kind {
                SurfaceKind::Rectangular2D => {
                    let a = (b.a0 + (b.a1 - b.a0) * uniform() - 0.5) * s.width;
                    let h = (b.b0 + (b.b1 - b.b0) * uniform() - 0.5) * s.height;
                    (f.to_world(a, h), f.normal, f.u, f.v)
                }
                SurfaceKind::Cylindrical1D => {
                    let phi = 2.0 * PI * uniform();
                    let h = (b.b0 + (b.b1 - b.b0) * uniform() - 0.5) * s.height;
                    let radial = f.u * libm::cos(phi) + f.v * libm::sin(phi);
                    let p = f.center + f.normal * h + radial * s.material.radius;
                    (p, radial, f.normal, radial.cross(f.normal))
                }
            };
            let phi = 2.0 * PI * uniform();
            let r2 = uniform();
            let sin_t = libm::sqrt(r2);
            let cos_t = libm::sqrt(1.0 - r2);
            let dir = t1 * (libm::cos(phi) * sin_t) + t2 * (libm::sin(phi) * sin_t) + normal * cos_t;
            if let Some((target, true)) = self.trace(origin + normal * RAY_EPS, dir, Some(si)) {
                match counts.iter_mut().find(|(t, _)| *t == target) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((target, 1)),
                }
            }
        }
        counts.sort_unstable_by_key(|&(t, _)| t);
        counts.into_iter().map(|(t, c)| (t, c as f64 / rays as f64)).collect()
    }

    /// Assembles a matrix from rows computed by [`Scene::trace_row`].
    pub fn assemble(&self, rows: Vec<Vec<(usize, f64)>>, rays: usize) -> ViewFactorMatrix {
        let n = self.node_count();
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                values[i * n + j] = v;
            }
        }
        ViewFactorMatrix {
            n,
            values,
            areas: self.areas(),
            rays_per_node: rays,
        }
    }
}

/// Monte-Carlo view factors between all elements of the given meshes.
pub fn compute_viewfactors(
    surfaces: &[Surface],
    meshes: &[FaceMesh],
    rays_per_node: usize,
    seed: u64,
) -> Result<ViewFactorMatrix> {
    if rays_per_node == 0 {
        return Err(Error::InvalidSettings("rays_per_node must be at least 1"));
    }
    let scene = Scene::new(surfaces, meshes)?;
    let rows = (0..scene.node_count())
        .map(|i| scene.trace_row(i, rays_per_node, seed))
        .collect();
    Ok(scene.assemble(rows, rays_per_node))
}

/// Dense (n = 10) view factors for a spacecraft.
pub fn compute_dense_viewfactors(
    config: &crate::mesh::SpacecraftConfig,
    rays_per_node: usize,
    seed: u64,
) -> Result<ViewFactorMatrix> {
    config.validate()?;
    let meshes = config.dense_meshes();
    compute_viewfactors(&config.surfaces, &meshes, rays_per_node, seed)
}

/// Index of the dense node nearest to `p` among `candidates`; ties go to the
/// lowest index.
pub fn nearest_node(p: Vec3, candidates: &[Vec3]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in candidates.iter().enumerate() {
        let d = p.distance(*c);
        if d < best_d - 1e-12 {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Coarse element containing the center of dense element `i` along one axis.
fn containing_cell(i: usize, dense_n: usize, coarse_n: usize) -> usize {
    ((2 * i + 1) * coarse_n) / (2 * dense_n)
}

/// Maps each dense node to the coarse node whose element contains its center.
pub fn dense_to_coarse_assignment(dense: &[FaceMesh], coarse: &[FaceMesh]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut coarse_off = 0;
    for (d, c) in dense.iter().zip(coarse) {
        match d.kind {
            SurfaceKind::Rectangular2D => {
                for row in 0..d.n {
                    for col in 0..d.n {
                        let r = containing_cell(row, d.n, c.n);
                        let k = containing_cell(col, d.n, c.n);
                        out.push(coarse_off + r * c.n + k);
                    }
                }
            }
            SurfaceKind::Cylindrical1D => {
                for k in 0..d.n {
                    out.push(coarse_off + containing_cell(k, d.n, c.n));
                }
            }
        }
        coarse_off += c.node_count();
    }
    out
}

/// For each coarse node, the dense node (global index) nearest to it on the same face.
pub fn nearest_dense_rows(dense: &[FaceMesh], coarse: &[FaceMesh]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut dense_off = 0;
    for (d, c) in dense.iter().zip(coarse) {
        for p in &c.centers {
            out.push(dense_off + nearest_node(*p, &d.centers));
        }
        dense_off += d.node_count();
    }
    out
}

fn check_meshes(dense_vf_len: usize, dense: &[FaceMesh], coarse: &[FaceMesh]) -> Result<()> {
    let total: usize = dense.iter().map(|m| m.node_count()).sum();
    if total != dense_vf_len {
        return Err(Error::DimensionMismatch {
            context: "dense view factors vs dense meshes",
            expected: total,
            got: dense_vf_len,
        });
    }
    if dense.len() != coarse.len() {
        return Err(Error::DimensionMismatch {
            context: "coarse mesh count",
            expected: dense.len(),
            got: coarse.len(),
        });
    }
    for (d, c) in dense.iter().zip(coarse) {
        if d.surface_id != c.surface_id {
            return Err(Error::SurfaceMismatch {
                left: d.surface_id,
                right: c.surface_id,
            });
        }
    }
    Ok(())
}

/// Coarse view factors by nearest-dense-node rows and column aggregation.
pub fn lookup_coarse_viewfactors(
    dense: &ViewFactorMatrix,
    dense_meshes: &[FaceMesh],
    coarse_meshes: &[FaceMesh],
) -> Result<ViewFactorMatrix> {
    check_meshes(dense.len(), dense_meshes, coarse_meshes)?;
    let rows = nearest_dense_rows(dense_meshes, coarse_meshes);
    let assign = dense_to_coarse_assignment(dense_meshes, coarse_meshes);
    let nc = rows.len();
    let mut values = vec![0.0; nc * nc];
    for (i, &r) in rows.iter().enumerate() {
        let out = &mut values[i * nc..(i + 1) * nc];
        for (j, &v) in dense.row(r).iter().enumerate() {
            if v != 0.0 {
                out[assign[j]] += v;
            }
        }
    }
    let areas = coarse_meshes.iter().flat_map(|m| m.areas.iter().copied()).collect();
    ViewFactorMatrix::from_parts(nc, values, areas, dense.rays_per_node)
}

/// Sparse form of [`lookup_coarse_viewfactors`] working from a CSR dense matrix.
pub fn lookup_coarse_csr(
    dense: &CsrMatrix,
    dense_meshes: &[FaceMesh],
    coarse_meshes: &[FaceMesh],
) -> Result<CsrMatrix> {
    check_meshes(dense.rows(), dense_meshes, coarse_meshes)?;
    let rows = nearest_dense_rows(dense_meshes, coarse_meshes);
    let assign = dense_to_coarse_assignment(dense_meshes, coarse_meshes);
    let nc = rows.len();
    let mut b = CsrBuilder::new(nc);
    let mut acc = vec![0.0; nc];
    let mut seen = vec![false; nc];
    let mut touched: Vec<usize> = Vec::new();
    for &r in &rows {
        for (j, v) in dense.row(r) {
            let c = assign[j];
            if !seen[c] {
                seen[c] = true;
                touched.push(c);
            }
            acc[c] += v;
        }
        touched.sort_unstable();
        for &c in &touched {
            b.push(c, acc[c]);
            acc[c] = 0.0;
            seen[c] = false;
        }
        touched.clear();
        b.end_row();
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use crate::mesh::{Material, SpacecraftConfig};
    use alloc::string::ToString;

    fn plate(id: usize, center: Vec3, normal: Vec3) -> Surface {
        Surface {
            id,
            name: "plate".to_string(),
            kind: SurfaceKind::Rectangular2D,
            width: 1.0,
            height: 1.0,
            material: Material {
                ir_emissivity: 0.9,
                solar_absorptivity: 0.5,
                specific_heat: 900.0,
                conductivity: 100.0,
                density: 2700.0,
                thickness: 0.01,
                radius: 0.0,
            },
            frame: Frame::new(center, normal, Some(Vec3::X)).unwrap(),
        }
    }

    #[test]
    fn coplanar_plates_do_not_see_each_other() {
        let s = [
            plate(0, Vec3::default(), Vec3::Z),
            plate(1, Vec3::new(2.0, 0.0, 0.0), Vec3::Z),
        ];
        let m: Vec<_> = s.iter().map(|x| FaceMesh::uniform(x, 2)).collect();
        let vf = compute_viewfactors(&s, &m, 2000, 1).unwrap();
        assert!(vf.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn isolated_face_radiates_to_space() {
        let s = [plate(0, Vec3::default(), Vec3::Z)];
        let m = [FaceMesh::uniform(&s[0], 3)];
        let vf = compute_viewfactors(&s, &m, 500, 1).unwrap();
        assert!(vf.space_factors().iter().all(|&f| f == 1.0));
    }

    #[test]
    fn rows_are_deterministic_per_seed() {
        let c = SpacecraftConfig::default_spacecraft();
        let meshes = c.dense_meshes();
        let scene = Scene::new(&c.surfaces, &meshes).unwrap();
        assert_eq!(scene.trace_row(123, 300, 9), scene.trace_row(123, 300, 9));
        assert_ne!(scene.trace_row(123, 300, 9), scene.trace_row(123, 300, 10));
    }

    #[test]
    fn zero_rays_rejected() {
        let s = [plate(0, Vec3::default(), Vec3::Z)];
        let m = [FaceMesh::uniform(&s[0], 2)];
        assert!(compute_viewfactors(&s, &m, 0, 1).is_err());
    }

    #[test]
    fn containing_cell_partitions_dense_nodes() {
        for n in 2..=10 {
            let mut counts = vec![0; n];
            for i in 0..10 {
                counts[containing_cell(i, 10, n)] += 1;
            }
            assert!(counts.iter().all(|&c| c >= 1), "n={n}: {counts:?}");
        }
        assert_eq!(containing_cell(2, 10, 4), 1);
    }

    #[test]
    fn nearest_node_ties_go_to_lowest_index() {
        let c = [Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        assert_eq!(nearest_node(Vec3::default(), &c), 0);
        assert_eq!(nearest_node(Vec3::new(0.1, 0.0, 0.0), &c), 1);
    }
}
