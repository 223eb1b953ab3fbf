//! Spacecraft geometry, materials and uniform per-face nodalization.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::geometry::{Frame, Vec3};
use crate::{DENSE_N, Error, MAX_N, MIN_N, Result};

/// Thermo-optical and structural properties of a face.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Material {
    pub ir_emissivity: f64,
    pub solar_absorptivity: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// W/(m·K)
    pub conductivity: f64,
    /// kg/m³
    pub density: f64,
    /// Wall or sheet thickness, m.
    pub thickness: f64,
    /// Cylinder radius, m. Zero for rectangular faces.
    pub radius: f64,
}

impl Material {
    /// Checks the value ranges, naming the first offending field.
    pub fn validate(&self, surface: &str) -> Result<()> {
        let bad = |field: &'static str, reason: String| Error::InvalidSurface {
            surface: surface.to_string(),
            field,
            reason,
        };
        for (field, v) in [
            ("ir_emissivity", self.ir_emissivity),
            ("solar_absorptivity", self.solar_absorptivity),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(field, format!("{v} not in [0, 1]")));
            }
        }
        for (field, v) in [
            ("specific_heat", self.specific_heat),
            ("conductivity", self.conductivity),
            ("density", self.density),
            ("thickness", self.thickness),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(field, format!("{v} must be strictly positive")));
            }
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(bad("radius", format!("{} must be non-negative", self.radius)));
        }
        Ok(())
    }

    /// Heat capacity per unit of radiating area, J/(m²·K).
    pub fn areal_capacity(&self) -> f64 {
        self.density * self.specific_heat * self.thickness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SurfaceKind {
    /// Flat plate meshed on an n×n grid.
    Rectangular2D,
    /// Thin-walled cylinder meshed with n rings along its axis.
    Cylindrical1D,
}

impl SurfaceKind {
    pub fn node_count(self, n: usize) -> usize {
        match self {
            SurfaceKind::Rectangular2D => n * n,
            SurfaceKind::Cylindrical1D => n,
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(self, SurfaceKind::Rectangular2D)
    }
}

/// One face of the spacecraft.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub id: usize,
    pub name: String,
    pub kind: SurfaceKind,
    /// Width in m. For cylinders this is the circumference `2πr`.
    pub width: f64,
    /// Height in m, or the axial length for cylinders.
    pub height: f64,
    pub material: Material,
    pub frame: Frame,
}

impl Surface {
    /// Radiating area of the whole face.
    pub fn area(&self) -> f64 {
        match self.kind {
            SurfaceKind::Rectangular2D => self.width * self.height,
            SurfaceKind::Cylindrical1D => 2.0 * PI * self.material.radius * self.height,
        }
    }

    /// Length measure used when remapping loads: area for plates, axial length for cylinders.
    pub fn remap_measure(&self) -> f64 {
        match self.kind {
            SurfaceKind::Rectangular2D => self.width * self.height,
            SurfaceKind::Cylindrical1D => self.height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Error::InvalidSurface {
            surface: self.name.clone(),
            field,
            reason,
        };
        self.material.validate(&self.name)?;
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(bad("height", format!("{} must be > 0", self.height)));
        }
        match self.kind {
            SurfaceKind::Rectangular2D => {
                if !(self.width > 0.0 && self.width.is_finite()) {
                    return Err(bad("width", format!("{} must be > 0", self.width)));
                }
            }
            SurfaceKind::Cylindrical1D => {
                if self.material.radius <= 0.0 {
                    return Err(bad("radius", "cylinders need a positive radius".into()));
                }
            }
        }
        Ok(())
    }
}

/// The full spacecraft: faces in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacecraftConfig {
    pub surfaces: Vec<Surface>,
}

impl SpacecraftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.surfaces.is_empty() {
            return Err(Error::InvalidConfig("no surfaces".into()));
        }
        for (i, s) in self.surfaces.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidConfig(format!(
                    "surface `{}` has id {} but sits at position {i}",
                    s.name, s.id
                )));
            }
            s.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn kinds(&self) -> Vec<SurfaceKind> {
        self.surfaces.iter().map(|s| s.kind).collect()
    }

    /// Dense meshes (n = 10 on every face).
    pub fn dense_meshes(&self) -> Vec<FaceMesh> {
        self.surfaces.iter().map(|s| FaceMesh::uniform(s, DENSE_N)).collect()
    }

    pub fn meshes(&self, nodalization: &Nodalization) -> Result<Vec<FaceMesh>> {
        nodalization.validate(self)?;
        Ok(self
            .surfaces
            .iter()
            .zip(nodalization.per_surface())
            .map(|(s, &n)| FaceMesh::uniform(s, n))
            .collect())
    }

    /// The eleven-face reference spacecraft.
    ///
    /// Body frame: +x zenith, +y along-track, +z orbit normal. The main body
    /// is a unit cube whose −x side is the optical bench; the protrusion
    /// points to nadir from the bench and the two coplanar solar arrays sit
    /// on gimbal booms along ±y, facing +z.
    pub fn default_spacecraft() -> SpacecraftConfig {
        let main = Material {
            ir_emissivity: 0.82,
            solar_absorptivity: 0.45,
            specific_heat: 896.0,
            conductivity: 167.0,
            density: 2700.0,
            thickness: 0.01,
            radius: 0.0,
        };
        let bench = Material {
            ir_emissivity: 0.92,
            solar_absorptivity: 0.17,
            specific_heat: 1100.0,
            conductivity: 32.0,
            density: 1660.0,
            thickness: 0.002,
            radius: 0.0,
        };
        let protrusion = Material { radius: 0.10, ..bench };
        let gimbal = Material {
            ir_emissivity: 0.92,
            solar_absorptivity: 0.17,
            specific_heat: 502.0,
            conductivity: 7.2,
            density: 4429.0,
            thickness: 0.002,
            radius: 0.05,
        };
        let array = Material {
            ir_emissivity: 0.92,
            solar_absorptivity: 0.17,
            specific_heat: 920.0,
            conductivity: 1.7,
            density: 72.0,
            thickness: 0.013,
            radius: 0.0,
        };
        let v = Vec3::new;
        let rect = |name: &str, center: Vec3, normal: Vec3, u: Vec3, material: Material| {
            (
                name.to_string(),
                SurfaceKind::Rectangular2D,
                1.0,
                1.0,
                center,
                normal,
                u,
                material,
            )
        };
        let cyl = |name: &str, center: Vec3, axis: Vec3, u: Vec3, material: Material| {
            let circ = 2.0 * PI * material.radius;
            (
                name.to_string(),
                SurfaceKind::Cylindrical1D,
                circ,
                0.5,
                center,
                axis,
                u,
                material,
            )
        };
        let specs = vec![
            rect("Main +X", v(0.5, 0.0, 0.0), Vec3::X, Vec3::Y, main),
            rect("Main +Y", v(0.0, 0.5, 0.0), Vec3::Y, Vec3::X, main),
            rect("Main -Y", v(0.0, -0.5, 0.0), -Vec3::Y, Vec3::X, main),
            rect("Main +Z", v(0.0, 0.0, 0.5), Vec3::Z, Vec3::X, main),
            rect("Main -Z", v(0.0, 0.0, -0.5), -Vec3::Z, Vec3::X, main),
            rect("Optical Bench", v(-0.5, 0.0, 0.0), -Vec3::X, Vec3::Y, bench),
            cyl("Protrusion", v(-0.75, 0.0, 0.0), -Vec3::X, Vec3::Y, protrusion),
            cyl("Gimbal +Y", v(0.0, 0.75, 0.0), Vec3::Y, Vec3::X, gimbal),
            cyl("Gimbal -Y", v(0.0, -0.75, 0.0), -Vec3::Y, Vec3::X, gimbal),
            rect("Solar Array +Y", v(0.0, 1.5, 0.0), Vec3::Z, Vec3::X, array),
            rect("Solar Array -Y", v(0.0, -1.5, 0.0), Vec3::Z, Vec3::X, array),
        ];
        let surfaces = specs
            .into_iter()
            .enumerate()
            .map(|(id, (name, kind, width, height, c, n, u, material))| Surface {
                id,
                name,
                kind,
                width,
                height,
                material,
                frame: Frame::new(c, n, Some(u)).expect("default frames are valid"),
            })
            .collect();
        SpacecraftConfig { surfaces }
    }
}

/// Nodes per dimension for every surface, in config order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Nodalization(Vec<usize>);

impl Nodalization {
    pub fn new(per_surface: Vec<usize>) -> Self {
        Self(per_surface)
    }

    pub fn uniform(n: usize, surfaces: usize) -> Self {
        Self(vec![n; surfaces])
    }

    pub fn per_surface(&self) -> &[usize] {
        &self.0
    }

    pub fn validate(&self, config: &SpacecraftConfig) -> Result<()> {
        if self.0.len() != config.len() {
            return Err(Error::DimensionMismatch {
                context: "nodalization",
                expected: config.len(),
                got: self.0.len(),
            });
        }
        for &n in &self.0 {
            check_n(n)?;
        }
        Ok(())
    }
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if (MIN_N..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(Error::NodeCountOutOfRange {
            n,
            min: MIN_N,
            max: MAX_N,
        })
    }
}

/// Sum over surfaces of n² (plates) or n (cylinders).
pub fn total_node_count(nodalization: &Nodalization, config: &SpacecraftConfig) -> usize {
    config
        .surfaces
        .iter()
        .zip(nodalization.per_surface())
        .map(|(s, &n)| s.kind.node_count(n))
        .sum()
}

/// Element extent in normalized face coordinates, each in `[0, 1]`.
/// For cylinders only the axial interval `b0..b1` is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBox {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
}

/// Uniform mesh of one face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceMesh {
    pub surface_id: usize,
    pub kind: SurfaceKind,
    pub n: usize,
    /// Node centers in body coordinates (on the axis for cylinders).
    pub centers: Vec<Vec3>,
    /// Element corners: 4 per element for plates (counter-clockwise), the two
    /// axial end points for cylinders.
    pub corners: Vec<Vec3>,
    pub local: Vec<LocalBox>,
    /// Radiating area per element, m².
    pub areas: Vec<f64>,
    /// Remapping measure per element: area for plates, axial length for cylinders.
    pub measures: Vec<f64>,
    /// Lumped heat capacity per node, J/K.
    pub capacities: Vec<f64>,
}

impl FaceMesh {
    /// Mesh with any positive `n`; [`build_mesh`] enforces the model's node range.
    pub fn uniform(surface: &Surface, n: usize) -> FaceMesh {
        assert!(n >= 1, "mesh needs at least one node per dimension");
        let f = &surface.frame;
        let nf = n as f64;
        let mut centers = Vec::new();
        let mut corners = Vec::new();
        let mut local = Vec::new();
        let mut areas = Vec::new();
        let mut measures = Vec::new();
        match surface.kind {
            SurfaceKind::Rectangular2D => {
                let (w, h) = (surface.width, surface.height);
                let (dw, dh) = (w / nf, h / nf);
                for row in 0..n {
                    for col in 0..n {
                        let a0 = -0.5 * w + col as f64 * dw;
                        let b0 = -0.5 * h + row as f64 * dh;
                        let (a1, b1) = (a0 + dw, b0 + dh);
                        centers.push(f.to_world(0.5 * (a0 + a1), 0.5 * (b0 + b1)));
                        corners.extend([
                            f.to_world(a0, b0),
                            f.to_world(a1, b0),
                            f.to_world(a1, b1),
                            f.to_world(a0, b1),
                        ]);
                        local.push(LocalBox {
                            a0: col as f64 / nf,
                            a1: (col + 1) as f64 / nf,
                            b0: row as f64 / nf,
                            b1: (row + 1) as f64 / nf,
                        });
                        let area = (a1 - a0) * (b1 - b0);
                        areas.push(area);
                        measures.push(area);
                    }
                }
            }
            SurfaceKind::Cylindrical1D => {
                let l = surface.height;
                let dl = l / nf;
                let circ = 2.0 * core::f64::consts::PI * surface.material.radius;
                for k in 0..n {
                    let b0 = -0.5 * l + k as f64 * dl;
                    let b1 = b0 + dl;
                    centers.push(f.center + f.normal * (0.5 * (b0 + b1)));
                    corners.extend([f.center + f.normal * b0, f.center + f.normal * b1]);
                    local.push(LocalBox {
                        a0: 0.0,
                        a1: 1.0,
                        b0: k as f64 / nf,
                        b1: (k + 1) as f64 / nf,
                    });
                    areas.push((b1 - b0) * circ);
                    measures.push(b1 - b0);
                }
            }
        }
        let cap = surface.material.areal_capacity();
        let capacities = areas.iter().map(|a| a * cap).collect();
        FaceMesh {
            surface_id: surface.id,
            kind: surface.kind,
            n,
            centers,
            corners,
            local,
            areas,
            measures,
            capacities,
        }
    }

    pub fn node_count(&self) -> usize {
        self.centers.len()
    }
}

/// Uniform mesh with n ∈ [2, 10] nodes per dimension.
pub fn build_mesh(surface: &Surface, n: usize) -> Result<FaceMesh> {
    check_n(n)?;
    Ok(FaceMesh::uniform(surface, n))
}

/// Offsets of each surface's first node in the concatenated node vector.
pub fn node_offsets(kinds: &[SurfaceKind], nodalization: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(kinds.len() + 1);
    let mut acc = 0;
    out.push(0);
    for (k, &n) in kinds.iter().zip(nodalization) {
        acc += k.node_count(n);
        out.push(acc);
    }
    out
}
