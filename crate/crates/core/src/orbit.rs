//! Synthetic orbital heat loads on the dense mesh.
//!
//! Circular orbit, body frame fixed to the local vertical: +x zenith, +y
//! along-track, +z orbit normal. With orbit angle `ν` measured from the
//! sub-solar point the sun direction is `(cos β cos ν, −cos β sin ν, sin β)`.
//! Eclipse uses a cylindrical shadow with a short smooth penumbra.
//!
//! Absorbed load per node:
//! - direct sun `α S cos θ A`, zero when the node faces away or another face
//!   blocks the sun (plates); cylinders use their projected fraction `sin ψ / π`;
//! - albedo `α a S max(0, cos ν_sun) v_E A` and planet IR `ε q_IR v_E A`, where
//!   `v_E` is the view factor from the node to the planet sphere (tilted plate
//!   formula; cylinders use `(R / (R + h))² sin ψ / π`).

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

use crate::Result;
use crate::geometry::Vec3;
use crate::mesh::{FaceMesh, SpacecraftConfig, SurfaceKind};
use crate::radiation::Scene;

/// Orbit and environment parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OrbitSpec {
    /// Degrees, in `[0, 90]`.
    pub beta_deg: f64,
    /// s
    pub period: f64,
    pub samples_per_orbit: usize,
    /// W/m²
    pub solar_constant: f64,
    pub albedo: f64,
    /// W/m² at the planet surface.
    pub planet_ir: f64,
    /// m
    pub altitude: f64,
    /// m
    pub planet_radius: f64,
    /// Penumbra width at the spacecraft, m.
    pub penumbra: f64,
    /// Orbit angle at `t = 0`, rad.
    pub phase: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            beta_deg: 0.0,
            period: 5400.0,
            samples_per_orbit: 24,
            solar_constant: 1361.0,
            albedo: 0.3,
            planet_ir: 237.0,
            altitude: 500e3,
            planet_radius: 6371e3,
            penumbra: 50e3,
            phase: 0.0,
        }
    }
}

impl OrbitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=90.0).contains(&self.beta_deg) {
            return Err(crate::Error::InvalidSettings("beta angle must lie in [0, 90] degrees"));
        }
        if !(self.period > 0.0) {
            return Err(crate::Error::InvalidSettings("orbit period must be positive"));
        }
        if self.samples_per_orbit == 0 {
            return Err(crate::Error::InvalidSettings("need at least one sample per orbit"));
        }
        Ok(())
    }

    /// Evenly spaced sample times in `[0, period)`.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.samples_per_orbit)
            .map(|k| k as f64 * self.period / self.samples_per_orbit as f64)
            .collect()
    }

    fn angle(&self, time: f64) -> f64 {
        2.0 * PI * time / self.period + self.phase
    }

    /// Unit sun vector in the body frame.
    pub fn sun_direction(&self, time: f64) -> Vec3 {
        let b = self.beta_deg.to_radians();
        let nu = self.angle(time);
        Vec3::new(
            libm::cos(b) * libm::cos(nu),
            -libm::cos(b) * libm::sin(nu),
            libm::sin(b),
        )
    }

    /// Fraction of the solar disk visible: 0 in umbra, 1 in full sun.
    pub fn sunlit_fraction(&self, time: f64) -> f64 {
        let s = self.sun_direction(time);
        if s.x >= 0.0 {
            return 1.0;
        }
        let r = self.planet_radius + self.altitude;
        let d = r * libm::sqrt((1.0 - s.x * s.x).max(0.0));
        if d <= self.planet_radius {
            return 0.0;
        }
        let u = ((d - self.planet_radius) / self.penumbra).min(1.0);
        u * u * (3.0 - 2.0 * u)
    }

    /// `(R / (R + h))²`
    pub fn planet_view_scale(&self) -> f64 {
        let q = self.planet_radius / (self.planet_radius + self.altitude);
        q * q
    }
}

/// Per-node absorbed loads split by source.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadBreakdown {
    pub solar: Vec<f64>,
    pub albedo: Vec<f64>,
    pub planet_ir: Vec<f64>,
}

impl LoadBreakdown {
    pub fn total(&self) -> Vec<f64> {
        self.solar
            .iter()
            .zip(&self.albedo)
            .zip(&self.planet_ir)
            .map(|((s, a), i)| s + a + i)
            .collect()
    }
}

/// Geometry needed to evaluate loads; build once per spacecraft.
#[derive(Debug, Clone)]
pub struct LoadModel {
    config: SpacecraftConfig,
    meshes: Vec<FaceMesh>,
}

const NADIR: Vec3 = Vec3::new(-1.0, 0.0, 0.0);

impl LoadModel {
    pub fn new(config: &SpacecraftConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            meshes: config.dense_meshes(),
            config: config.clone(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.meshes.iter().map(FaceMesh::node_count).sum()
    }

    /// Cosine factor of a node toward direction `d` (projected fraction for cylinders).
    fn facing(&self, surface: usize, d: Vec3) -> f64 {
        let s = &self.config.surfaces[surface];
        match s.kind {
            SurfaceKind::Rectangular2D => s.frame.normal.dot(d).max(0.0),
            SurfaceKind::Cylindrical1D => {
                let c = s.frame.normal.dot(d);
                libm::sqrt((1.0 - c * c).max(0.0)) / PI
            }
        }
    }

    /// View factor from surface `surface` to the planet.
    fn earth_view(&self, surface: usize, spec: &OrbitSpec) -> f64 {
        let s = &self.config.surfaces[surface];
        match s.kind {
            SurfaceKind::Rectangular2D => plate_to_sphere(s.frame.normal.dot(NADIR), spec),
            SurfaceKind::Cylindrical1D => self.facing(surface, NADIR) * spec.planet_view_scale(),
        }
    }

    /// Point on the node facing `d`, nudged off the surface.
    fn probe(&self, surface: usize, center: Vec3, d: Vec3) -> Vec3 {
        let s = &self.config.surfaces[surface];
        match s.kind {
            SurfaceKind::Rectangular2D => center + s.frame.normal * 1e-9,
            SurfaceKind::Cylindrical1D => {
                let axis = s.frame.normal;
                let radial = d - axis * axis.dot(d);
                let r = radial.norm();
                if r < 1e-12 {
                    center
                } else {
                    center + radial * ((s.material.radius + 1e-9) / r)
                }
            }
        }
    }

    pub fn breakdown(&self, spec: &OrbitSpec, time: f64) -> Result<LoadBreakdown> {
        spec.validate()?;
        let scene = Scene::new(&self.config.surfaces, &self.meshes)?;
        let sun = spec.sun_direction(time);
        let lit = spec.sunlit_fraction(time);
        let sub_solar = sun.dot(-NADIR).max(0.0);
        let n = self.node_count();
        let mut out = LoadBreakdown {
            solar: Vec::with_capacity(n),
            albedo: Vec::with_capacity(n),
            planet_ir: Vec::with_capacity(n),
        };
        for (si, m) in self.meshes.iter().enumerate() {
            let mat = &self.config.surfaces[si].material;
            let f_sun = self.facing(si, sun);
            let f_earth = self.earth_view(si, spec);
            for (c, &a) in m.centers.iter().zip(&m.areas) {
                let direct = if lit > 0.0 && f_sun > 0.0 && !scene.occluded(self.probe(si, *c, sun), sun, Some(si)) {
                    mat.solar_absorptivity * spec.solar_constant * lit * f_sun * a
                } else {
                    0.0
                };
                out.solar.push(direct);
                out.albedo
                    .push(mat.solar_absorptivity * spec.albedo * spec.solar_constant * sub_solar * f_earth * a);
                out.planet_ir.push(mat.ir_emissivity * spec.planet_ir * f_earth * a);
            }
        }
        Ok(out)
    }

    /// Absorbed load per dense node, W.
    pub fn orbit_loads(&self, spec: &OrbitSpec, time: f64) -> Result<Vec<f64>> {
        Ok(self.breakdown(spec, time)?.total())
    }
}

/// View factor from a differential plate to a sphere, given the cosine of
/// the angle between the plate normal and the direction to the sphere center.
pub fn plate_to_sphere(cos_gamma: f64, spec: &OrbitSpec) -> f64 {
    let h = (spec.planet_radius + spec.altitude) / spec.planet_radius;
    let rho = libm::asin(1.0 / h);
    let gamma = libm::acos(cos_gamma.clamp(-1.0, 1.0));
    if gamma <= PI / 2.0 - rho {
        return cos_gamma / (h * h);
    }
    if gamma >= PI / 2.0 + rho {
        return 0.0;
    }
    let x = libm::sqrt(h * h - 1.0);
    let sg = libm::sin(gamma);
    let y = (-x * cos_gamma / sg).clamp(-1.0, 1.0);
    let root = libm::sqrt(1.0 - y * y);
    let f = (cos_gamma * libm::acos(y) - x * sg * root) / (PI * h * h) + libm::atan(sg * root / x) / PI;
    f.max(0.0)
}

/// Random orbit phase for orbit `index`, from its own stream of `seed`.
pub fn orbit_phase(seed: u64, index: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 * PI
}
