//! `dataset.bin`: generated samples on disk.
//!
//! Little-endian throughout. Header:
//!
//! | bytes | field |
//! |------:|-------|
//! | 8 | magic `ADTHDS\0\0` |
//! | 4 | format version (u32, currently 1) |
//! | 8 | seed (u64) |
//! | 4 | dense node count `N` (u32) |
//! | 4 | orbit count `K` (u32) |
//! | 4 | sample count `S` (u32) |
//! | 8 | view-factor rays per node (u64) |
//! | 8 | view-factor seed (u64) |
//! | 32 | SHA-256 geometry hash (as in the view-factor cache) |
//! | 8 | solver time step, s (f64) |
//! | 8 | rollout duration, s (f64) |
//! | 8 | space sink temperature, K (f64) |
//!
//! The physics fields identify the high-fidelity model that produced the
//! targets, so later commands can rebuild exactly the same one.
//!
//! Then `K` orbit records of ten f64 and one u32, in this order: β (deg),
//! period (s), samples per orbit (u32), solar constant, albedo, planet IR,
//! altitude, planet radius, penumbra, phase.
//!
//! Then `S` sample records: orbit index (u32), β (f64), time (f64), then
//! `N` loads (W), `N` initial temperatures (K) and `N` target
//! temperatures (K), all f64.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use adaptherm_core::dataset::{Dataset, ThermalSample, generate_orbit};
use adaptherm_core::orbit::{LoadModel, OrbitSpec};
use adaptherm_core::piml::PhysicsContext;
use adaptherm_core::solver::SolverSettings;
use rayon::prelude::*;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ADTHDS\0\0";
const VERSION: u32 = 1;

/// Orbits are independent, so they run in parallel; samples within an orbit
/// are chained and stay sequential. Output order is orbit order.
pub fn generate_parallel(ctx: &PhysicsContext, loads: &LoadModel, orbits: &[OrbitSpec], seed: u64) -> Result<Dataset> {
    let parts: Vec<Vec<ThermalSample>> = orbits
        .par_iter()
        .enumerate()
        .map(|(i, o)| generate_orbit(ctx, loads, i, o))
        .collect::<adaptherm_core::Result<_>>()?;
    Ok(Dataset {
        seed,
        orbits: orbits.to_vec(),
        samples: parts.into_iter().flatten().collect(),
    })
}

/// How the targets were computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsKey {
    pub rays: u64,
    pub vf_seed: u64,
    pub geometry: [u8; 32],
    pub dt: f64,
    pub duration: f64,
    pub sink_temperature: f64,
}

impl PhysicsKey {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            dt: self.dt,
            duration: self.duration,
            space_sink_temperature: self.sink_temperature,
            ..SolverSettings::default()
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.at + n > self.b.len() {
            return Err(Error::Format(format!("dataset truncated at byte {}", self.at)));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn encode(d: &Dataset, key: &PhysicsKey) -> Result<Vec<u8>> {
    let n = d.samples.first().map_or(0, |s| s.loads.len());
    for s in &d.samples {
        if s.loads.len() != n || s.initial.len() != n || s.target.len() != n {
            return Err(Error::Format("samples disagree on the node count".into()));
        }
    }
    let mut w = Writer(Vec::with_capacity(40 + d.samples.len() * (20 + 24 * n)));
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u64(d.seed);
    w.u32(n as u32);
    w.u32(d.orbits.len() as u32);
    w.u32(d.samples.len() as u32);
    w.u64(key.rays);
    w.u64(key.vf_seed);
    w.0.extend_from_slice(&key.geometry);
    w.f64(key.dt);
    w.f64(key.duration);
    w.f64(key.sink_temperature);
    for o in &d.orbits {
        w.f64(o.beta_deg);
        w.f64(o.period);
        w.u32(o.samples_per_orbit as u32);
        for x in [
            o.solar_constant,
            o.albedo,
            o.planet_ir,
            o.altitude,
            o.planet_radius,
            o.penumbra,
            o.phase,
        ] {
            w.f64(x);
        }
    }
    for s in &d.samples {
        w.u32(s.orbit as u32);
        w.f64(s.beta_deg);
        w.f64(s.time);
        w.f64s(&s.loads);
        w.f64s(&s.initial);
        w.f64s(&s.target);
    }
    Ok(w.0)
}

pub fn decode(b: &[u8]) -> Result<(Dataset, PhysicsKey)> {
    let mut r = Reader { b, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("dataset version {version} unsupported")));
    }
    let seed = r.u64()?;
    let n = r.u32()? as usize;
    let k = r.u32()? as usize;
    let count = r.u32()? as usize;
    let key = PhysicsKey {
        rays: r.u64()?,
        vf_seed: r.u64()?,
        geometry: r.take(32)?.try_into().unwrap(),
        dt: r.f64()?,
        duration: r.f64()?,
        sink_temperature: r.f64()?,
    };
    let mut orbits = Vec::with_capacity(k);
    for _ in 0..k {
        let beta_deg = r.f64()?;
        let period = r.f64()?;
        let samples_per_orbit = r.u32()? as usize;
        orbits.push(OrbitSpec {
            beta_deg,
            period,
            samples_per_orbit,
            solar_constant: r.f64()?,
            albedo: r.f64()?,
            planet_ir: r.f64()?,
            altitude: r.f64()?,
            planet_radius: r.f64()?,
            penumbra: r.f64()?,
            phase: r.f64()?,
        });
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let orbit = r.u32()? as usize;
        if orbit >= k {
            return Err(Error::Format(format!("sample refers to orbit {orbit} of {k}")));
        }
        samples.push(ThermalSample {
            orbit,
            beta_deg: r.f64()?,
            time: r.f64()?,
            loads: r.f64s(n)?,
            initial: r.f64s(n)?,
            target: r.f64s(n)?,
        });
    }
    if r.at != b.len() {
        return Err(Error::Format(format!("{} trailing bytes", b.len() - r.at)));
    }
    Ok((Dataset { seed, orbits, samples }, key))
}

pub fn save(d: &Dataset, key: &PhysicsKey, path: &Path) -> Result<()> {
    let bytes = encode(d, key)?;
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(Dataset, PhysicsKey)> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&b).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Per-orbit summary for `dataset inspect`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitStats {
    pub orbit: usize,
    pub beta_deg: f64,
    pub samples: usize,
    pub min_target: f64,
    pub max_target: f64,
    pub mean_load_total: f64,
    pub eclipse_samples: usize,
}

pub fn orbit_stats(d: &Dataset) -> Vec<OrbitStats> {
    (0..d.orbits.len())
        .map(|o| {
            let s: Vec<&ThermalSample> = d.samples.iter().filter(|s| s.orbit == o).collect();
            let totals: Vec<f64> = s.iter().map(|x| x.loads.iter().sum()).collect();
            let peak = totals.iter().cloned().fold(0.0, f64::max);
            OrbitStats {
                orbit: o,
                beta_deg: d.orbits[o].beta_deg,
                samples: s.len(),
                min_target: s
                    .iter()
                    .flat_map(|x| x.target.iter())
                    .cloned()
                    .fold(f64::INFINITY, f64::min),
                max_target: s
                    .iter()
                    .flat_map(|x| x.target.iter())
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max),
                mean_load_total: totals.iter().sum::<f64>() / totals.len().max(1) as f64,
                // without direct sun the total drops well below the orbit peak
                eclipse_samples: totals.iter().filter(|t| **t < 0.5 * peak).count(),
            }
        })
        .collect()
}
