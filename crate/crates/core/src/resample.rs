//! Moving loads and temperatures between a face's dense mesh and a coarser one.
//!
//! Every resampler here is linear in the field it acts on, so each one is
//! stored as a sparse weight matrix. Meshes are uniform and axis aligned in
//! normalized face coordinates, which makes the 2D operators Kronecker
//! products of 1D ones and lets all of them be tabulated once per node count.
//!
//! - Loads go dense → coarse by overlap: a coarse element collects the flux
//!   `Q_j / A_j` of every dense element times the overlapping measure. Total
//!   power on the face is preserved.
//! - Temperatures go dense → coarse by (bi)linear interpolation of the
//!   node-center field.
//! - Temperatures go coarse → dense by a natural cubic spline through the
//!   coarse centers (tensor product in 2D), held constant beyond the
//!   outermost coarse centers.

use alloc::vec;
use alloc::vec::Vec;

use crate::mesh::{FaceMesh, SurfaceKind};
use crate::sparse::{CsrBuilder, CsrMatrix};
use crate::{DENSE_N, Error, MAX_N, MIN_N, Result};

fn center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

/// `W[i][j]` = overlap of coarse cell `i` with fine cell `j` divided by the fine cell length.
pub fn overlap_weights_1d(fine_n: usize, coarse_n: usize) -> CsrMatrix {
    if fine_n == coarse_n {
        return CsrMatrix::identity(fine_n);
    }
    let mut b = CsrBuilder::new(fine_n);
    let (hf, hc) = (1.0 / fine_n as f64, 1.0 / coarse_n as f64);
    for i in 0..coarse_n {
        let (c0, c1) = (i as f64 * hc, (i + 1) as f64 * hc);
        for j in 0..fine_n {
            let (f0, f1) = (j as f64 * hf, (j + 1) as f64 * hf);
            let ov = c1.min(f1) - c0.max(f0);
            if ov > 1e-15 {
                b.push(j, ov / hf);
            }
        }
        b.end_row();
    }
    b.finish()
}

/// Piecewise-linear interpolation of a field known at `from_n` cell centers,
/// sampled at `to_n` cell centers; constant beyond the outer centers.
pub fn linear_weights_1d(from_n: usize, to_n: usize) -> CsrMatrix {
    if from_n == to_n {
        return CsrMatrix::identity(from_n);
    }
    let mut b = CsrBuilder::new(from_n);
    for i in 0..to_n {
        let x = center(i, to_n);
        let s = x * from_n as f64 - 0.5;
        if s <= 0.0 {
            b.push(0, 1.0);
        } else if s >= (from_n - 1) as f64 {
            b.push(from_n - 1, 1.0);
        } else {
            let k = s as usize;
            let t = s - k as f64;
            if t == 0.0 {
                b.push(k, 1.0);
            } else {
                b.push(k, 1.0 - t);
                b.push(k + 1, t);
            }
        }
        b.end_row();
    }
    b.finish()
}

/// Second derivatives of the natural cubic spline through equally spaced
/// knots (spacing `h`), by the tridiagonal (Thomas) solve.
fn natural_second_derivatives(y: &[f64], h: f64) -> Vec<f64> {
    let m = y.len();
    let mut out = vec![0.0; m];
    if m < 3 {
        return out;
    }
    // interior equations: M[k-1] + 4 M[k] + M[k+1] = 6 (y[k-1] - 2y[k] + y[k+1]) / h²
    let n = m - 2;
    let mut diag = vec![4.0; n];
    let mut rhs: Vec<f64> = (1..m - 1)
        .map(|k| 6.0 * (y[k - 1] - 2.0 * y[k] + y[k + 1]) / (h * h))
        .collect();
    for k in 1..n {
        let w = 1.0 / diag[k - 1];
        diag[k] -= w;
        rhs[k] -= w * rhs[k - 1];
    }
    out[n] = rhs[n - 1] / diag[n - 1];
    for k in (0..n - 1).rev() {
        out[k + 1] = (rhs[k] - out[k + 2]) / diag[k];
    }
    out
}

/// Evaluates the natural cubic spline through `y` at knots `center(k, m)`.
pub fn natural_spline_eval(y: &[f64], x: f64) -> f64 {
    let m = y.len();
    let h = 1.0 / m as f64;
    let x0 = center(0, m);
    let xl = center(m - 1, m);
    if x <= x0 {
        return y[0];
    }
    if x >= xl {
        return y[m - 1];
    }
    let mm = natural_second_derivatives(y, h);
    let k = (((x - x0) / h) as usize).min(m - 2);
    let xa = center(k, m);
    let a = (xa + h - x) / h;
    let b = (x - xa) / h;
    a * y[k] + b * y[k + 1] + ((a * a * a - a) * mm[k] + (b * b * b - b) * mm[k + 1]) * h * h / 6.0
}

/// Natural cubic spline through `from_n` centers evaluated at `to_n` centers.
pub fn spline_weights_1d(from_n: usize, to_n: usize) -> CsrMatrix {
    if from_n == to_n {
        return CsrMatrix::identity(from_n);
    }
    let mut dense = vec![0.0; to_n * from_n];
    let mut unit = vec![0.0; from_n];
    for k in 0..from_n {
        unit[k] = 1.0;
        for i in 0..to_n {
            dense[i * from_n + k] = natural_spline_eval(&unit, center(i, to_n));
        }
        unit[k] = 0.0;
    }
    CsrMatrix::from_dense(to_n, from_n, &dense)
}

fn lift(kind: SurfaceKind, w: &CsrMatrix) -> CsrMatrix {
    match kind {
        SurfaceKind::Rectangular2D => w.kron(w),
        SurfaceKind::Cylindrical1D => w.clone(),
    }
}

/// The three operators for one face kind at one coarse node count.
#[derive(Debug, Clone)]
pub struct FaceOperators {
    /// coarse × dense, flux preserving.
    pub load_down: CsrMatrix,
    /// coarse × dense, (bi)linear.
    pub temp_down: CsrMatrix,
    /// dense × coarse, cubic spline.
    pub temp_up: CsrMatrix,
}

/// Whole-craft operators for one nodalization (block diagonal over faces).
#[derive(Debug, Clone)]
pub struct CraftOperators {
    pub load_down: CsrMatrix,
    pub temp_down: CsrMatrix,
    pub temp_up: CsrMatrix,
}

/// Precomputed operators for every admissible node count and both face kinds.
/// Immutable once built, so it can be shared freely between threads.
#[derive(Debug, Clone)]
pub struct Resampler {
    dense_n: usize,
    /// Indexed by `n - MIN_N`; `[2D, 1D]`.
    table: Vec<[FaceOperators; 2]>,
}

impl Default for Resampler {
    fn default() -> Self {
        Self::new(DENSE_N)
    }
}

impl Resampler {
    pub fn new(dense_n: usize) -> Self {
        let table = (MIN_N..=MAX_N)
            .map(|n| {
                let load = overlap_weights_1d(dense_n, n);
                let down = linear_weights_1d(dense_n, n);
                let up = spline_weights_1d(n, dense_n);
                [SurfaceKind::Rectangular2D, SurfaceKind::Cylindrical1D].map(|k| FaceOperators {
                    load_down: lift(k, &load),
                    temp_down: lift(k, &down),
                    temp_up: lift(k, &up),
                })
            })
            .collect();
        Self { dense_n, table }
    }

    pub fn dense_n(&self) -> usize {
        self.dense_n
    }

    pub fn face(&self, kind: SurfaceKind, n: usize) -> Result<&FaceOperators> {
        crate::mesh::check_n(n)?;
        let k = if kind.is_2d() { 0 } else { 1 };
        Ok(&self.table[n - MIN_N][k])
    }

    pub fn craft(&self, kinds: &[SurfaceKind], nodalization: &[usize]) -> Result<CraftOperators> {
        if kinds.len() != nodalization.len() {
            return Err(Error::DimensionMismatch {
                context: "nodalization",
                expected: kinds.len(),
                got: nodalization.len(),
            });
        }
        let faces = kinds
            .iter()
            .zip(nodalization)
            .map(|(&k, &n)| self.face(k, n))
            .collect::<Result<Vec<_>>>()?;
        let pick = |f: fn(&FaceOperators) -> &CsrMatrix| {
            let blocks: Vec<&CsrMatrix> = faces.iter().map(|o| f(o)).collect();
            CsrMatrix::block_diag(&blocks)
        };
        Ok(CraftOperators {
            load_down: pick(|o| &o.load_down),
            temp_down: pick(|o| &o.temp_down),
            temp_up: pick(|o| &o.temp_up),
        })
    }
}

fn check_pair(a: &FaceMesh, b: &FaceMesh) -> Result<()> {
    if a.surface_id != b.surface_id {
        return Err(Error::SurfaceMismatch {
            left: a.surface_id,
            right: b.surface_id,
        });
    }
    for m in [a, b] {
        if m.measures.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::DegenerateGeometry {
                surface_id: m.surface_id,
                what: "zero-area element",
            });
        }
    }
    Ok(())
}

fn check_len(context: &'static str, field: &[f64], mesh: &FaceMesh) -> Result<()> {
    if field.len() != mesh.node_count() {
        return Err(Error::DimensionMismatch {
            context,
            expected: mesh.node_count(),
            got: field.len(),
        });
    }
    Ok(())
}

/// Overlap weights between two meshes of one face, from the element boxes.
fn face_overlap_matrix(fine: &FaceMesh, coarse: &FaceMesh) -> CsrMatrix {
    let fine_1d = if fine.kind.is_2d() { fine.n } else { fine.node_count() };
    let coarse_1d = if coarse.kind.is_2d() {
        coarse.n
    } else {
        coarse.node_count()
    };
    lift(fine.kind, &overlap_weights_1d(fine_1d, coarse_1d))
}

/// Flux-preserving load remap from `dense_mesh` to `sparse_mesh` of the same face.
///
/// `Q_S[i] = Σ_j A_c(i, j) · Q_D[j] / A_j`, where `A_c` is the overlap of the
/// elements (lengths on cylinders).
pub fn downsample_loads(dense_mesh: &FaceMesh, sparse_mesh: &FaceMesh, q_dense: &[f64]) -> Result<Vec<f64>> {
    check_pair(dense_mesh, sparse_mesh)?;
    check_len("dense loads", q_dense, dense_mesh)?;
    Ok(face_overlap_matrix(dense_mesh, sparse_mesh).mul_vec(q_dense))
}

/// Bilinear (plates) or linear (cylinders) sampling of the dense node field at sparse centers.
pub fn downsample_temperature(dense_mesh: &FaceMesh, sparse_mesh: &FaceMesh, t_dense: &[f64]) -> Result<Vec<f64>> {
    check_pair(dense_mesh, sparse_mesh)?;
    check_len("dense temperatures", t_dense, dense_mesh)?;
    let w = lift(dense_mesh.kind, &linear_weights_1d(dense_mesh.n, sparse_mesh.n));
    Ok(w.mul_vec(t_dense))
}

/// Natural cubic spline (tensor product on plates) from sparse centers to dense centers.
pub fn upsample_temperature(sparse_mesh: &FaceMesh, dense_mesh: &FaceMesh, t_sparse: &[f64]) -> Result<Vec<f64>> {
    check_pair(dense_mesh, sparse_mesh)?;
    if sparse_mesh.n < 2 {
        return Err(Error::NodeCountOutOfRange {
            n: sparse_mesh.n,
            min: 2,
            max: MAX_N,
        });
    }
    check_len("sparse temperatures", t_sparse, sparse_mesh)?;
    let w = lift(dense_mesh.kind, &spline_weights_1d(sparse_mesh.n, dense_mesh.n));
    Ok(w.mul_vec(t_sparse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::SpacecraftConfig;

    fn plate_meshes(n: usize) -> (FaceMesh, FaceMesh) {
        let c = SpacecraftConfig::default_spacecraft();
        (
            FaceMesh::uniform(&c.surfaces[0], 10),
            FaceMesh::uniform(&c.surfaces[0], n),
        )
    }

    fn cyl_meshes(n: usize) -> (FaceMesh, FaceMesh) {
        let c = SpacecraftConfig::default_spacecraft();
        (
            FaceMesh::uniform(&c.surfaces[6], 10),
            FaceMesh::uniform(&c.surfaces[6], n),
        )
    }

    #[test]
    fn uniform_load_splits_evenly() {
        let (d, s) = plate_meshes(2);
        let q = downsample_loads(&d, &s, &[10.0; 100]).unwrap();
        for v in q {
            assert!((v - 250.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_when_meshes_match() {
        let (d, s) = plate_meshes(10);
        let q: Vec<f64> = (0..100).map(|i| i as f64 * 0.37 + 1.0).collect();
        assert_eq!(downsample_loads(&d, &s, &q).unwrap(), q);
        assert_eq!(downsample_temperature(&d, &s, &q).unwrap(), q);
        assert_eq!(upsample_temperature(&s, &d, &q).unwrap(), q);
    }

    #[test]
    fn constants_are_fixed_points() {
        for n in 2..=10 {
            for (d, s) in [plate_meshes(n), cyl_meshes(n)] {
                let td = vec![300.0; d.node_count()];
                let ts = vec![300.0; s.node_count()];
                for v in downsample_temperature(&d, &s, &td).unwrap() {
                    assert!((v - 300.0).abs() < 1e-12);
                }
                for v in upsample_temperature(&s, &d, &ts).unwrap() {
                    assert!((v - 300.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_ramp_reproduced_at_sparse_centers() {
        let (d, s) = cyl_meshes(2);
        // 300 → 310 K across the ten dense centers
        let ramp: Vec<f64> = (0..10).map(|k| 300.0 + 10.0 * k as f64 / 9.0).collect();
        let out = downsample_temperature(&d, &s, &ramp).unwrap();
        // sparse centers at 0.25 and 0.75 → dense index coordinate 2 and 7
        let expect = [300.0 + 10.0 * 2.0 / 9.0, 300.0 + 10.0 * 7.0 / 9.0];
        for (o, e) in out.iter().zip(expect) {
            assert!((o - e).abs() < 1e-12, "{o} vs {e}");
        }
    }

    #[test]
    fn two_point_spline_is_linear_and_clamped() {
        let (d, s) = cyl_meshes(2);
        let out = upsample_temperature(&s, &d, &[290.0, 310.0]).unwrap();
        for (k, v) in out.iter().enumerate() {
            let x = (k as f64 + 0.5) / 10.0;
            let expect = if x <= 0.25 {
                290.0
            } else if x >= 0.75 {
                310.0
            } else {
                290.0 + 20.0 * (x - 0.25) / 0.5
            };
            assert!((v - expect).abs() < 1e-12, "{k}: {v} vs {expect}");
        }
    }

    #[test]
    fn mismatched_surfaces_rejected() {
        let c = SpacecraftConfig::default_spacecraft();
        let a = FaceMesh::uniform(&c.surfaces[0], 10);
        let b = FaceMesh::uniform(&c.surfaces[1], 3);
        assert!(matches!(
            downsample_loads(&a, &b, &[0.0; 100]),
            Err(Error::SurfaceMismatch { left: 0, right: 1 })
        ));
    }

    #[test]
    fn craft_operator_shapes() {
        let c = SpacecraftConfig::default_spacecraft();
        let r = Resampler::default();
        let ops = r.craft(&c.kinds(), &[3; 11]).unwrap();
        assert_eq!((ops.load_down.rows(), ops.load_down.cols()), (81, 830));
        assert_eq!((ops.temp_up.rows(), ops.temp_up.cols()), (830, 81));
    }
}
