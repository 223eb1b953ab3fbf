//! `spacecraft.json`: the spacecraft description on disk.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "surfaces": [
//!     {
//!       "name": "Main +X",
//!       "kind": "rectangular",
//!       "width_m": 1.0,
//!       "height_m": 1.0,
//!       "position": [0.5, 0.0, 0.0],
//!       "normal": [1.0, 0.0, 0.0],
//!       "width_axis": [0.0, 1.0, 0.0],
//!       "material": {
//!         "ir_emissivity": 0.82,
//!         "solar_absorptivity": 0.45,
//!         "specific_heat": 896.0,
//!         "conductivity": 167.0,
//!         "density": 2700.0,
//!         "thickness": 0.01
//!       }
//!     }
//!   ]
//! }
//! ```
//!
//! Cylinders use `"kind": "cylindrical"`, give `radius_m`, and take
//! `height_m` as the axial length; `normal` is the axis. Their `width_m` is
//! the circumference and is derived from the radius, so it may be omitted.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use adaptherm_core::geometry::{Frame, Vec3};
use adaptherm_core::mesh::{Material, SpacecraftConfig, Surface, SurfaceKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindJson {
    Rectangular,
    Cylindrical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialJson {
    pub ir_emissivity: f64,
    pub solar_absorptivity: f64,
    pub specific_heat: f64,
    pub conductivity: f64,
    pub density: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceJson {
    pub name: String,
    pub kind: KindJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_m: Option<f64>,
    pub height_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_m: Option<f64>,
    pub position: [f64; 3],
    pub normal: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_axis: Option<[f64; 3]>,
    pub material: MaterialJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigJson {
    pub schema_version: u32,
    pub surfaces: Vec<SurfaceJson>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ConfigJson {
    pub fn from_config(c: &SpacecraftConfig) -> Self {
        let surfaces = c
            .surfaces
            .iter()
            .map(|s| {
                let m = &s.material;
                let cyl = s.kind == SurfaceKind::Cylindrical1D;
                SurfaceJson {
                    name: s.name.clone(),
                    kind: if cyl {
                        KindJson::Cylindrical
                    } else {
                        KindJson::Rectangular
                    },
                    width_m: (!cyl).then_some(s.width),
                    height_m: s.height,
                    radius_m: cyl.then_some(m.radius),
                    position: arr(s.frame.center),
                    normal: arr(s.frame.normal),
                    width_axis: Some(arr(s.frame.u)),
                    material: MaterialJson {
                        ir_emissivity: m.ir_emissivity,
                        solar_absorptivity: m.solar_absorptivity,
                        specific_heat: m.specific_heat,
                        conductivity: m.conductivity,
                        density: m.density,
                        thickness: m.thickness,
                    },
                }
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            surfaces,
        }
    }

    pub fn to_config(&self) -> Result<SpacecraftConfig> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "spacecraft config schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut surfaces = Vec::with_capacity(self.surfaces.len());
        for (id, s) in self.surfaces.iter().enumerate() {
            let field = |f: &str, why: &str| Error::Field {
                surface: s.name.clone(),
                field: f.to_string(),
                reason: why.to_string(),
            };
            let m = &s.material;
            let (kind, width, radius) = match s.kind {
                KindJson::Rectangular => {
                    let w = s
                        .width_m
                        .ok_or_else(|| field("width_m", "required for rectangular faces"))?;
                    if s.radius_m.is_some_and(|r| r != 0.0) {
                        return Err(field("radius_m", "only cylindrical faces have a radius"));
                    }
                    (SurfaceKind::Rectangular2D, w, 0.0)
                }
                KindJson::Cylindrical => {
                    let r = s
                        .radius_m
                        .ok_or_else(|| field("radius_m", "required for cylindrical faces"))?;
                    let circ = 2.0 * PI * r;
                    if let Some(w) = s.width_m
                        && (w - circ).abs() > 1e-9 * circ.abs().max(1.0)
                    {
                        return Err(field("width_m", "must equal the circumference 2πr"));
                    }
                    (SurfaceKind::Cylindrical1D, circ, r)
                }
            };
            let frame = Frame::new(v3(s.position), v3(s.normal), s.width_axis.map(v3))
                .ok_or_else(|| field("normal", "degenerate normal, position or width_axis"))?;
            surfaces.push(Surface {
                id,
                name: s.name.clone(),
                kind,
                width,
                height: s.height_m,
                material: Material {
                    ir_emissivity: m.ir_emissivity,
                    solar_absorptivity: m.solar_absorptivity,
                    specific_heat: m.specific_heat,
                    conductivity: m.conductivity,
                    density: m.density,
                    thickness: m.thickness,
                    radius,
                },
                frame,
            });
        }
        let c = SpacecraftConfig { surfaces };
        c.validate()?;
        Ok(c)
    }
}

pub fn parse_config(text: &str) -> Result<SpacecraftConfig> {
    let j: ConfigJson = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    j.to_config()
}

pub fn to_json(c: &SpacecraftConfig) -> String {
    let mut s = serde_json::to_string_pretty(&ConfigJson::from_config(c)).expect("config serializes");
    s.push('\n');
    s
}

pub fn load_config(path: &Path) -> Result<SpacecraftConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Default spacecraft unless a path is given.
pub fn load_or_default(path: Option<&Path>) -> Result<SpacecraftConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(SpacecraftConfig::default_spacecraft()),
    }
}

pub fn save_config(c: &SpacecraftConfig, path: &Path) -> Result<()> {
    fs::write(path, to_json(c)).map_err(|e| Error::io(path, e))
}

/// SHA-256 over everything that influences view factors.
pub fn geometry_hash(c: &SpacecraftConfig) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((c.surfaces.len() as u64).to_le_bytes());
    for s in &c.surfaces {
        h.update([s.kind as u8]);
        let f = &s.frame;
        for x in [
            s.width,
            s.height,
            s.material.radius,
            f.center.x,
            f.center.y,
            f.center.z,
            f.normal.x,
            f.normal.y,
            f.normal.z,
            f.u.x,
            f.u.y,
            f.u.z,
        ] {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    h.update((adaptherm_core::DENSE_N as u64).to_le_bytes());
    h.finalize().into()
}

/// Short hex digest of the whole configuration, for output headers.
pub fn config_hash(c: &SpacecraftConfig) -> String {
    let d = Sha256::digest(to_json(c).as_bytes());
    hex(&d[..8])
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
