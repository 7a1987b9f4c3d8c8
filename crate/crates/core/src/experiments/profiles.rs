//! Named initial-data profiles.
//!
//! Radial profiles are closed-form functions of `r`. `angular` multiplies a
//! radial profile by `e^{iℓθ}` (n = 2 only). Eigenmodes are the sine modes of
//! the truncated interval in the symmetrized variable,
//! `r^{-(n-1)/2} sin(kπ(r-1)/(r_max-1))`.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::index;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{sample_polar, sample_radial_complex, DiscDomain, FieldState, ModelParams};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenTerm {
    pub k: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero {},
    /// `A (r-1)^a e^{-b(r-1)²}`, times `r^{-(n-1)/2}` when `symmetrized`.
    GaussianRing {
        #[serde(default = "unit")]
        amplitude: f64,
        power: u32,
        width: f64,
        #[serde(default)]
        symmetrized: bool,
    },
    /// `A (r-1)^a e^{-c(r-1)}`.
    ExpPolynomial {
        #[serde(default = "unit")]
        amplitude: f64,
        power: u32,
        rate: f64,
    },
    /// `A e · exp(-1/(1-s²))` with `s = (r-c)/ρ`, zero for `|s| ≥ 1`.
    CompactBump {
        #[serde(default = "unit")]
        amplitude: f64,
        center: f64,
        radius: f64,
    },
    Eigenmodes {
        modes: Vec<EigenTerm>,
    },
    /// Seeded sum of at most `max_modes` distinct modes `k ≤ max_index` with
    /// standard complex normal coefficients, scaled to `‖u₀‖_{L²} = scale`.
    RandomEigenmodes {
        #[serde(default = "eight")]
        max_modes: usize,
        #[serde(default = "sixteen")]
        max_index: usize,
        #[serde(default = "unit")]
        scale: f64,
    },
    Angular {
        mode: i64,
        radial: Box<Profile>,
    },
}

fn unit() -> f64 {
    1.0
}

fn eight() -> usize {
    8
}

fn sixteen() -> usize {
    16
}

impl Profile {
    pub fn validate(&self, params: &ModelParams, num_angular: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Manifest(msg));
        match self {
            Profile::Zero {} => Ok(()),
            Profile::GaussianRing { width, amplitude, .. } => {
                if !(*width > 0.0) || !amplitude.is_finite() {
                    return bad(format!("gaussian_ring needs width > 0 (got {width})"));
                }
                Ok(())
            }
            Profile::ExpPolynomial { rate, amplitude, .. } => {
                if !rate.is_finite() || !amplitude.is_finite() {
                    return bad("exp_polynomial parameters must be finite".into());
                }
                Ok(())
            }
            Profile::CompactBump { center, radius, .. } => {
                if !(*radius > 0.0) || center - radius < params.r_inner || center + radius > params.r_max {
                    return bad(format!(
                        "compact_bump support [{}, {}] must lie inside [1, r_max]",
                        center - radius,
                        center + radius
                    ));
                }
                Ok(())
            }
            Profile::Eigenmodes { modes } => {
                if modes.iter().any(|m| m.k == 0) {
                    return bad("eigenmode indices start at 1".into());
                }
                Ok(())
            }
            Profile::RandomEigenmodes {
                max_modes,
                max_index,
                scale,
            } => {
                if *max_modes == 0 || max_index < max_modes || !scale.is_finite() {
                    return bad("random_eigenmodes needs 1 ≤ max_modes ≤ max_index".into());
                }
                Ok(())
            }
            Profile::Angular { mode, radial } => {
                if params.n != 2 {
                    return bad("angular profiles require n = 2".into());
                }
                if num_angular < 2 {
                    return bad("angular profiles require num_angular > 1".into());
                }
                if mode.unsigned_abs() as usize >= num_angular.div_ceil(2) {
                    return bad(format!("angular mode {mode} is not resolved by {num_angular} points"));
                }
                if matches!(**radial, Profile::Angular { .. }) {
                    return bad("angular profiles cannot be nested".into());
                }
                radial.validate(params, num_angular)
            }
        }
    }

    /// Eigenmode combinations fill the whole truncated domain, so the
    /// validity horizon does not apply to them.
    pub fn is_domain_filling(&self) -> bool {
        match self {
            Profile::Eigenmodes { .. } | Profile::RandomEigenmodes { .. } => true,
            Profile::Angular { radial, .. } => radial.is_domain_filling(),
            _ => false,
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Profile::Angular { .. })
    }

    /// Replaces random coefficients by concrete ones drawn from
    /// `ChaCha8(seed)` on stream `stream`.
    pub fn realize(&self, params: &ModelParams, seed: u64, stream: u64) -> Profile {
        match self {
            Profile::RandomEigenmodes {
                max_modes,
                max_index,
                scale,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let count = rng.random_range(1..=*max_modes);
                let picks = index::sample(&mut rng, *max_index, count);
                let mut modes: Vec<EigenTerm> = picks
                    .iter()
                    .map(|i| EigenTerm {
                        k: i + 1,
                        re: rng.sample(StandardNormal),
                        im: rng.sample(StandardNormal),
                    })
                    .collect();
                modes.sort_by_key(|m| m.k);
                let norm_sq: f64 = modes.iter().map(|m| m.re * m.re + m.im * m.im).sum();
                let mode_mass = params.sphere_area() * 0.5 * (params.r_max - params.r_inner);
                let c = scale / (norm_sq * mode_mass).sqrt();
                for m in &mut modes {
                    m.re *= c;
                    m.im *= c;
                }
                Profile::Eigenmodes { modes }
            }
            Profile::Angular { mode, radial } => Profile::Angular {
                mode: *mode,
                radial: Box::new(radial.realize(params, seed, stream)),
            },
            other => other.clone(),
        }
    }

    /// Radial factor at `r`. Random profiles must be realized first.
    pub fn radial_value(&self, params: &ModelParams, r: f64) -> Result<Complex64> {
        let s = r - params.r_inner;
        let value = match self {
            Profile::Zero {} => Complex64::new(0.0, 0.0),
            Profile::GaussianRing {
                amplitude,
                power,
                width,
                symmetrized,
            } => {
                let mut v = amplitude * s.powi(*power as i32) * (-width * s * s).exp();
                if *symmetrized {
                    v /= r.powf(0.5 * (params.n as f64 - 1.0));
                }
                Complex64::new(v, 0.0)
            }
            Profile::ExpPolynomial { amplitude, power, rate } => {
                Complex64::new(amplitude * s.powi(*power as i32) * (-rate * s).exp(), 0.0)
            }
            Profile::CompactBump {
                amplitude,
                center,
                radius,
            } => {
                let x = (r - center) / radius;
                let v = if x.abs() < 1.0 {
                    amplitude * E * (-1.0 / (1.0 - x * x)).exp()
                } else {
                    0.0
                };
                Complex64::new(v, 0.0)
            }
            Profile::Eigenmodes { modes } => {
                let len = params.r_max - params.r_inner;
                let w = r.powf(-0.5 * (params.n as f64 - 1.0));
                modes
                    .iter()
                    .map(|m| Complex64::new(m.re, m.im) * (w * (m.k as f64 * PI * s / len).sin()))
                    .sum()
            }
            Profile::RandomEigenmodes { .. } => {
                return Err(Error::Manifest(
                    "random_eigenmodes must be realized before sampling".into(),
                ))
            }
            Profile::Angular { radial, .. } => return radial.radial_value(params, r),
        };
        Ok(value)
    }

    /// Samples the profile on `domain` at `t = 0`, realizing random data
    /// with `(seed, stream)`.
    pub fn sample(&self, domain: &Arc<DiscDomain>, seed: u64, stream: u64) -> Result<FieldState> {
        let params = &domain.params;
        let concrete = self.realize(params, seed, stream);
        // Realized profiles cannot fail; a NaN would be reported as a bad sample.
        let eval = |p: &Profile, r: f64| p.radial_value(params, r).unwrap_or(Complex64::new(f64::NAN, 0.0));
        match &concrete {
            Profile::Angular { mode, radial } => {
                let ell = *mode as f64;
                sample_polar(domain, |r, theta| {
                    eval(radial, r) * Complex64::from_polar(1.0, ell * theta)
                })
            }
            p => sample_radial_complex(domain, |r| eval(p, r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_domain;
    use crate::functionals::mass;

    fn domain(n: usize, nr: usize, na: usize) -> Arc<DiscDomain> {
        build_domain(ModelParams::new(n, 9.0, 11.0).unwrap(), nr, na).unwrap()
    }

    #[test]
    fn ring_matches_closed_form() {
        let d = domain(3, 99, 1);
        let p = Profile::GaussianRing {
            amplitude: 2.0,
            power: 3,
            width: 0.5,
            symmetrized: true,
        };
        let u = p.sample(&d, 0, 0).unwrap();
        for (z, &r) in u.values.iter().zip(&d.nodes) {
            let exact = 2.0 * (r - 1.0f64).powi(3) * (-0.5 * (r - 1.0f64).powi(2)).exp() / r;
            assert!((z.re - exact).abs() <= 1e-15 * exact.abs().max(1.0));
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn bump_is_compactly_supported() {
        let d = domain(3, 199, 1);
        let p = Profile::CompactBump {
            amplitude: 1.0,
            center: 4.0,
            radius: 1.5,
        };
        p.validate(&d.params, 1).unwrap();
        let u = p.sample(&d, 0, 0).unwrap();
        for (z, &r) in u.values.iter().zip(&d.nodes) {
            if (r - 4.0).abs() >= 1.5 {
                assert_eq!(z.re, 0.0);
            }
        }
        let peak = u.values.iter().map(|z| z.re).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-2);
        let outside = Profile::CompactBump {
            amplitude: 1.0,
            center: 1.5,
            radius: 1.0,
        };
        assert!(outside.validate(&d.params, 1).is_err());
    }

    #[test]
    fn random_data_are_seeded_and_normalized() {
        let d = domain(3, 1999, 1);
        let p = Profile::RandomEigenmodes {
            max_modes: 8,
            max_index: 16,
            scale: 1.0,
        };
        let a = p.realize(&d.params, 42, 3);
        let b = p.realize(&d.params, 42, 3);
        let c = p.realize(&d.params, 42, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let Profile::Eigenmodes { modes } = &a else {
            panic!("not realized")
        };
        assert!(!modes.is_empty() && modes.len() <= 8);
        assert!(modes.iter().all(|m| (1..=16).contains(&m.k)));
        let u = p.sample(&d, 42, 3).unwrap();
        assert!((mass(&u) - 1.0).abs() < 1e-5);
        assert!(p.is_domain_filling());
    }

    #[test]
    fn angular_wrapper_carries_the_mode() {
        let d = domain(2, 49, 8);
        let p = Profile::Angular {
            mode: 1,
            radial: Box::new(Profile::GaussianRing {
                amplitude: 1.0,
                power: 2,
                width: 1.0,
                symmetrized: false,
            }),
        };
        p.validate(&d.params, 8).unwrap();
        let u = p.sample(&d, 0, 0).unwrap();
        for a in 0..8 {
            let theta = d.angle(a);
            let z = u.row(a)[10];
            let base = u.row(0)[10].re;
            assert!((z - base * Complex64::from_polar(1.0, theta)).norm() < 1e-14);
        }
        assert!(p.validate(&d.params, 1).is_err());
        let d3 = domain(3, 49, 1);
        assert!(p.validate(&d3.params, 1).is_err());
    }

    #[test]
    fn parses_from_toml() {
        #[derive(Deserialize)]
        struct Wrap {
            data: Profile,
        }
        let w: Wrap = toml::from_str("[data]\nprofile = \"exp_polynomial\"\npower = 1\nrate = 1.0\n").unwrap();
        assert_eq!(
            w.data,
            Profile::ExpPolynomial {
                amplitude: 1.0,
                power: 1,
                rate: 1.0
            }
        );
        assert!(toml::from_str::<Wrap>("[data]\nprofile = \"zero\"\nextra = 1\n").is_err());
    }
}
