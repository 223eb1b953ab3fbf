//! Training records from synthetic orbits and the high-fidelity model.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::orbit::{LoadModel, OrbitSpec, orbit_phase};
use crate::piml::{PhysicsContext, SampleInput};
use crate::{Error, Result};

/// Isothermal start of every orbit, K.
pub const INITIAL_TEMPERATURE: f64 = 290.0;

/// One training record on the dense mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSample {
    pub orbit: usize,
    pub beta_deg: f64,
    /// s since the start of the orbit.
    pub time: f64,
    /// Absorbed load per node, W.
    pub loads: Vec<f64>,
    /// K
    pub initial: Vec<f64>,
    /// K, after the high-fidelity rollout.
    pub target: Vec<f64>,
}

impl ThermalSample {
    pub fn input(&self) -> SampleInput<'_> {
        SampleInput {
            loads: &self.loads,
            initial: &self.initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub orbits: Vec<OrbitSpec>,
    pub samples: Vec<ThermalSample>,
}

/// `count` orbits with β spread evenly over `[0°, 90°]` and seeded phases.
pub fn default_orbits(count: usize, samples_per_orbit: usize, seed: u64) -> Vec<OrbitSpec> {
    (0..count)
        .map(|i| OrbitSpec {
            beta_deg: if count > 1 {
                90.0 * i as f64 / (count - 1) as f64
            } else {
                0.0
            },
            samples_per_orbit,
            phase: orbit_phase(seed, i),
            ..OrbitSpec::default()
        })
        .collect()
}

/// Samples of one orbit. Each time point starts from the previous point's
/// result; the first starts isothermal.
pub fn generate_orbit(
    ctx: &PhysicsContext,
    loads: &LoadModel,
    orbit: usize,
    spec: &OrbitSpec,
) -> Result<Vec<ThermalSample>> {
    let wrap = |index: usize| {
        move |e: Error| Error::Sample {
            orbit,
            index,
            source: Box::new(e),
        }
    };
    let mut state = alloc::vec![INITIAL_TEMPERATURE; ctx.dense_nodes()];
    let mut out = Vec::with_capacity(spec.samples_per_orbit);
    for (index, time) in spec.sample_times().into_iter().enumerate() {
        let q = loads.orbit_loads(spec, time).map_err(wrap(index))?;
        let target = ctx.hf_forward(&q, &state).map_err(wrap(index))?;
        out.push(ThermalSample {
            orbit,
            beta_deg: spec.beta_deg,
            time,
            loads: q,
            initial: core::mem::replace(&mut state, target.clone()),
            target,
        });
    }
    Ok(out)
}

/// Sequential generation over all orbits.
pub fn generate_dataset(ctx: &PhysicsContext, loads: &LoadModel, orbits: &[OrbitSpec], seed: u64) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (i, o) in orbits.iter().enumerate() {
        samples.extend(generate_orbit(ctx, loads, i, o)?);
    }
    Ok(Dataset {
        seed,
        orbits: orbits.to_vec(),
        samples,
    })
}

impl Dataset {
    pub fn orbit_count(&self) -> usize {
        self.orbits.len()
    }

    /// Even orbit ids train, odd ones validate.
    pub fn split(&self) -> Result<(Vec<&ThermalSample>, Vec<&ThermalSample>)> {
        if self.orbits.len() < 2 {
            return Err(Error::TooFewOrbits(self.orbits.len()));
        }
        Ok(self.samples.iter().partition(|s| s.orbit % 2 == 0))
    }

    /// Largest absolute load over the given samples (1 if all loads vanish).
    pub fn max_abs_load<'a>(samples: impl IntoIterator<Item = &'a ThermalSample>) -> f64 {
        let m = samples
            .into_iter()
            .flat_map(|s| s.loads.iter())
            .fold(0.0f64, |m, q| m.max(libm::fabs(*q)));
        if m > 0.0 { m } else { 1.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn stub(orbits: usize) -> Dataset {
        Dataset {
            seed: 0,
            orbits: default_orbits(orbits, 2, 0),
            samples: (0..orbits)
                .flat_map(|o| {
                    (0..2).map(move |k| ThermalSample {
                        orbit: o,
                        beta_deg: 0.0,
                        time: k as f64,
                        loads: vec![o as f64],
                        initial: vec![290.0],
                        target: vec![291.0],
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn split_by_orbit_parity() {
        let d = stub(10);
        let (train, val) = d.split().unwrap();
        let mut tr: Vec<usize> = train.iter().map(|s| s.orbit).collect();
        let mut va: Vec<usize> = val.iter().map(|s| s.orbit).collect();
        tr.dedup();
        va.dedup();
        assert_eq!(tr, vec![0, 2, 4, 6, 8]);
        assert_eq!(va, vec![1, 3, 5, 7, 9]);
        assert_eq!(train.len() + val.len(), d.samples.len());
    }

    #[test]
    fn two_orbits_split_evenly_and_one_fails() {
        let d = stub(2);
        let (a, b) = d.split().unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        assert_eq!(stub(1).split().unwrap_err(), Error::TooFewOrbits(1));
    }

    #[test]
    fn default_betas_span_quarter_circle() {
        let o = default_orbits(10, 24, 5);
        let b: Vec<f64> = o.iter().map(|s| s.beta_deg).collect();
        assert_eq!(b, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0]);
        assert_eq!(o, default_orbits(10, 24, 5));
    }

    #[test]
    fn max_load_scale() {
        let d = stub(3);
        assert_eq!(Dataset::max_abs_load(&d.samples), 2.0);
        assert_eq!(Dataset::max_abs_load(&d.samples[..1]), 1.0);
    }
}
