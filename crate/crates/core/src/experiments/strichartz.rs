//! Strichartz quotient probe for the linear flow.
//!
//! For each datum the quotient is `‖u‖_{L^q([0,T]; L^r)} / ‖u₀‖_{L²}`,
//! with the time norm taken by the trapezoid rule over sampled times.

use rayon::prelude::*;
use serde::Serialize;

use super::manifest::check_pair;
use super::profiles::Profile;
use crate::domain::{build_domain, ModelParams};
use crate::error::{Error, Result};
use crate::functionals::{lebesgue_norm, time_norm};
use crate::operators::{LaplacianOp, Propagator, PropagatorConfig};

/// Grids, time sampling and data of a probe.
#[derive(Clone, Debug)]
pub struct StrichartzSetup {
    pub params: ModelParams,
    /// Interior nodes of the coarsest grid; level `k` uses `(N+1)2^k - 1`.
    pub base_num_radial: usize,
    pub resolutions: usize,
    pub dt: f64,
    pub steps: usize,
    pub sample_stride: usize,
    pub seed: u64,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolutionStats {
    pub num_radial: usize,
    pub max: f64,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairSummary {
    #[serde(serialize_with = "super::manifest::exponent_pairs::serialize_one")]
    pub q: f64,
    #[serde(serialize_with = "super::manifest::exponent_pairs::serialize_one")]
    pub r: f64,
    pub resolutions: Vec<ResolutionStats>,
    /// Largest over smallest ensemble-max across resolutions.
    pub variation: f64,
    /// `max |quotient - 1|` over every datum and resolution.
    pub max_unit_deviation: f64,
    /// `quotients[level][datum]`.
    pub quotients: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrichartzTable {
    pub ensemble_size: usize,
    pub t_final: f64,
    pub samples: usize,
    pub pairs: Vec<PairSummary>,
}

/// Runs the linear flow for every `(resolution, datum)` and tabulates the
/// quotients. Data are `setup.profile` realized on streams `0..ensemble_size`.
pub fn strichartz_quotient(
    setup: &StrichartzSetup,
    pairs: &[(f64, f64)],
    ensemble_size: usize,
) -> Result<StrichartzTable> {
    for &(q, r) in pairs {
        check_pair(setup.params.n, q, r)?;
    }
    if setup.resolutions == 0 || ensemble_size == 0 || setup.sample_stride == 0 {
        return Err(Error::OutOfRange(
            "resolutions, ensemble size and stride must be positive".into(),
        ));
    }
    let levels: Vec<usize> = (0..setup.resolutions)
        .map(|k| (setup.base_num_radial + 1) * (1 << k) - 1)
        .collect();
    let jobs: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|k| (0..ensemble_size).map(move |i| (k, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(k, i)| datum_quotients(setup, levels[k], i as u64, pairs))
        .collect::<Result<Vec<_>>>()?;
    let samples = results.first().map(|r| r.1).unwrap_or(0);
    let summaries = pairs
        .iter()
        .enumerate()
        .map(|(pi, &(q, r))| {
            let quotients: Vec<Vec<f64>> = (0..levels.len())
                .map(|k| {
                    (0..ensemble_size)
                        .map(|i| results[k * ensemble_size + i].0[pi])
                        .collect()
                })
                .collect();
            let resolutions: Vec<ResolutionStats> = quotients
                .iter()
                .zip(&levels)
                .map(|(qs, &nr)| ResolutionStats {
                    num_radial: nr,
                    max: qs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    median: median(qs),
                })
                .collect();
            let maxes: Vec<f64> = resolutions.iter().map(|s| s.max).collect();
            let hi = maxes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = maxes.iter().copied().fold(f64::INFINITY, f64::min);
            let max_unit_deviation = quotients.iter().flatten().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
            PairSummary {
                q,
                r,
                resolutions,
                variation: hi / lo,
                max_unit_deviation,
                quotients,
            }
        })
        .collect();
    Ok(StrichartzTable {
        ensemble_size,
        t_final: setup.dt * setup.steps as f64,
        samples,
        pairs: summaries,
    })
}

/// Quotients of one datum on one grid, and the number of time samples.
fn datum_quotients(
    setup: &StrichartzSetup,
    num_radial: usize,
    stream: u64,
    pairs: &[(f64, f64)],
) -> Result<(Vec<f64>, usize)> {
    let domain = build_domain(setup.params.clone(), num_radial, 1)?;
    let mut u = setup.profile.sample(&domain, setup.seed, stream)?;
    let norm0 = lebesgue_norm(&u, 2.0);
    if norm0 == 0.0 {
        return Err(Error::Degenerate("Strichartz quotient of zero data"));
    }
    let prop = Propagator::new(&LaplacianOp::new(&domain), PropagatorConfig::new(setup.dt)?)?;
    let mut exponents: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    exponents.sort_by(f64::total_cmp);
    exponents.dedup();
    let mut times = vec![0.0];
    let mut norms: Vec<Vec<f64>> = exponents.iter().map(|&r| vec![lebesgue_norm(&u, r)]).collect();
    let mut done = 0;
    while done < setup.steps {
        let chunk = setup.sample_stride.min(setup.steps - done);
        prop.evolve_linear(&mut u, chunk)?;
        done += chunk;
        u.time = done as f64 * setup.dt;
        if !u.is_finite() {
            return Err(Error::NonFiniteField { step: done });
        }
        times.push(u.time);
        for (series, &r) in norms.iter_mut().zip(&exponents) {
            series.push(lebesgue_norm(&u, r));
        }
    }
    let quotients = pairs
        .iter()
        .map(|&(q, r)| {
            let k = exponents.iter().position(|&e| e == r).unwrap_or(0);
            time_norm(&times, &norms[k], q) / norm0
        })
        .collect();
    Ok((quotients, times.len()))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}
