//! Dense view-factor matrices: parallel computation and the on-disk cache.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |------:|-------|
//! | 8     | magic `ADTHVF\0\0` |
//! | 4     | format version (u32, currently 1) |
//! | 8     | node count `N` (u64) |
//! | 8     | seed (u64) |
//! | 8     | rays per node (u64) |
//! | 32    | SHA-256 geometry hash |
//! | 8·N²  | `F_ij`, row-major f64 |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use adaptherm_core::mesh::SpacecraftConfig;
use adaptherm_core::radiation::{Scene, ViewFactorMatrix};
use rayon::prelude::*;

use crate::config::geometry_hash;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ADTHVF\0\0";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8 + 32;

/// Identifies a cached matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub nodes: u64,
    pub seed: u64,
    pub rays: u64,
    pub geometry: [u8; 32],
}

impl CacheKey {
    pub fn new(config: &SpacecraftConfig, rays: usize, seed: u64) -> Self {
        Self {
            nodes: config.dense_meshes().iter().map(|m| m.node_count()).sum::<usize>() as u64,
            seed,
            rays: rays as u64,
            geometry: geometry_hash(config),
        }
    }
}

/// Dense matrix with rows traced in parallel; identical to the sequential result.
pub fn compute_parallel(config: &SpacecraftConfig, rays: usize, seed: u64) -> Result<ViewFactorMatrix> {
    if rays == 0 {
        return Err(Error::Core(adaptherm_core::Error::InvalidSettings(
            "rays_per_node must be at least 1",
        )));
    }
    config.validate()?;
    let meshes = config.dense_meshes();
    let scene = Scene::new(&config.surfaces, &meshes)?;
    let rows: Vec<_> = (0..scene.node_count())
        .into_par_iter()
        .map(|i| scene.trace_row(i, rays, seed))
        .collect();
    Ok(scene.assemble(rows, rays))
}

pub fn write(path: &Path, key: &CacheKey, vf: &ViewFactorMatrix) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut put = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(path, e));
    put(MAGIC)?;
    put(&VERSION.to_le_bytes())?;
    put(&key.nodes.to_le_bytes())?;
    put(&key.seed.to_le_bytes())?;
    put(&key.rays.to_le_bytes())?;
    put(&key.geometry)?;
    let mut buf = Vec::with_capacity(vf.values().len() * 8);
    for v in vf.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    put(&buf)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Header and raw values of a cache file.
pub fn read(path: &Path) -> Result<(CacheKey, Vec<f64>)> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.len() < HEADER_LEN || &b[..8] != MAGIC {
        return Err(Error::Format(format!("{}: not a view-factor cache", path.display())));
    }
    let version = u32::from_le_bytes(b[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: cache version {version} unsupported",
            path.display()
        )));
    }
    let key = CacheKey {
        nodes: u64_at(&b, 12),
        seed: u64_at(&b, 20),
        rays: u64_at(&b, 28),
        geometry: b[36..68].try_into().unwrap(),
    };
    let n = key.nodes as usize;
    if b.len() != HEADER_LEN + 8 * n * n {
        return Err(Error::Format(format!(
            "{}: expected {} bytes of factors, found {}",
            path.display(),
            8 * n * n,
            b.len() - HEADER_LEN
        )));
    }
    let values = b[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((key, values))
}

/// Reads a cache and checks that it belongs to `config`.
pub fn load(path: &Path, config: &SpacecraftConfig) -> Result<ViewFactorMatrix> {
    let (key, values) = read(path)?;
    if key.geometry != geometry_hash(config) {
        return Err(Error::Format(format!(
            "{}: cache was computed for a different geometry",
            path.display()
        )));
    }
    let areas: Vec<f64> = config
        .dense_meshes()
        .iter()
        .flat_map(|m| m.areas.iter().copied())
        .collect();
    Ok(ViewFactorMatrix::from_parts(
        key.nodes as usize,
        values,
        areas,
        key.rays as usize,
    )?)
}

/// Loads `path` when its key matches, otherwise computes and writes it.
pub fn load_or_compute(path: &Path, config: &SpacecraftConfig, rays: usize, seed: u64) -> Result<ViewFactorMatrix> {
    let want = CacheKey::new(config, rays, seed);
    if path.exists()
        && let Ok((key, _)) = read(path)
        && key == want
    {
        return load(path, config);
    }
    let vf = compute_parallel(config, rays, seed)?;
    if let Some(dir) = path.parent()
        && !dir.as_os_str().is_empty()
    {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write(path, &want, &vf)?;
    Ok(vf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaptherm_core::radiation::compute_dense_viewfactors;

    #[test]
    fn parallel_matches_sequential() {
        let c = SpacecraftConfig::default_spacecraft();
        let a = compute_parallel(&c, 20, 5).unwrap();
        let b = compute_dense_viewfactors(&c, 20, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn round_trip_and_key_checks() {
        let dir = std::env::temp_dir().join(format!("adaptherm-vf-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vf.bin");
        let c = SpacecraftConfig::default_spacecraft();
        let vf = load_or_compute(&path, &c, 10, 3).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len() as usize, HEADER_LEN + 8 * 830 * 830);
        let again = load(&path, &c).unwrap();
        assert_eq!(vf, again);
        let mut other = c.clone();
        other.surfaces[0].height = 0.5;
        assert!(load(&path, &other).is_err());
        fs::write(&path, b"junk").unwrap();
        assert!(matches!(read(&path), Err(Error::Format(_))));
        fs::remove_dir_all(&dir).ok();
    }
}
