//! Built-in analytic metrics.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ChartMetric, Domain};
use crate::error::{Error, Result};
use crate::jet::{Jet3, PAIRS};
use crate::linalg::Vec3;

pub const ZOO_NAMES: [&str; 8] = [
    "flat_torus",
    "round_sphere",
    "hyperbolic_ball",
    "product_s2xr",
    "berger",
    "nil",
    "sol",
    "random_fourier",
];

#[derive(Clone, Debug, PartialEq)]
pub struct FourierMode {
    pair: (usize, usize),
    k: [f64; 3],
    amplitude: f64,
    phase: f64,
}

/// Analytic coefficient field of a zoo metric.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Flat,
    /// `λ δ_ij` with `λ = 4r² / (1 + |x|²)²`.
    Sphere { radius: f64 },
    /// `λ δ_ij` with `λ = 4 / (1 − |x|²)²`.
    Hyperbolic,
    ProductS2xR,
    /// Berger sphere in Hopf coordinates `(η, ξ1, ξ2)`.
    Berger { tau: f64 },
    Nil,
    Sol,
    RandomFourier { modes: Vec<FourierMode> },
}

fn vars(x: &Vec3) -> [Jet3; 3] {
    [Jet3::variable(0, x[0]), Jet3::variable(1, x[1]), Jet3::variable(2, x[2])]
}

fn conformal(c: &mut [[Jet3; 3]; 3], lambda: Jet3) {
    for i in 0..3 {
        c[i][i] = lambda;
    }
}

impl Field {
    /// Coefficient jets at `x`, both triangles filled.
    pub fn jets(&self, x: &Vec3) -> [[Jet3; 3]; 3] {
        let zero = Jet3::constant(0.0);
        let one = Jet3::constant(1.0);
        let mut c = [[zero; 3]; 3];
        let [x1, x2, x3] = vars(x);
        match self {
            Field::Flat => conformal(&mut c, one),
            Field::Sphere { radius } => {
                let q = x1.square() + x2.square() + x3.square() + 1.0;
                conformal(&mut c, q.powi(-2).scale(4.0 * radius * radius));
            }
            Field::Hyperbolic => {
                let q = (x1.square() + x2.square() + x3.square()).scale(-1.0) + 1.0;
                conformal(&mut c, q.powi(-2).scale(4.0));
            }
            Field::ProductS2xR => {
                let lambda = (x1.square() + x2.square() + 1.0).powi(-2).scale(4.0);
                c[0][0] = lambda;
                c[1][1] = lambda;
                c[2][2] = one;
            }
            Field::Berger { tau } => {
                let t = tau * tau - 1.0;
                let s2 = x1.sin().square();
                let c2 = x1.cos().square();
                c[0][0] = one;
                c[1][1] = s2 + s2.square().scale(t);
                c[2][2] = c2 + c2.square().scale(t);
                c[1][2] = (s2 * c2).scale(t);
            }
            Field::Nil => {
                c[0][0] = one;
                c[1][1] = x1.square() + 1.0;
                c[1][2] = -x1;
                c[2][2] = one;
            }
            Field::Sol => {
                c[0][0] = x3.scale(2.0).exp();
                c[1][1] = x3.scale(-2.0).exp();
                c[2][2] = one;
            }
            Field::RandomFourier { modes } => {
                conformal(&mut c, one);
                let xs = [x1, x2, x3];
                for m in modes {
                    let mut arg = Jet3::constant(m.phase);
                    for a in 0..3 {
                        if m.k[a] != 0.0 {
                            arg += xs[a].scale(TAU * m.k[a]);
                        }
                    }
                    let (i, j) = m.pair;
                    c[i][j] += arg.cos().scale(m.amplitude);
                }
            }
        }
        for &(i, j) in &PAIRS {
            c[j][i] = c[i][j];
        }
        c
    }
}

fn random_modes(seed: u64, amp: f64, per_pair: usize) -> Vec<FourierMode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::with_capacity(6 * per_pair);
    for &pair in &PAIRS {
        for _ in 0..per_pair {
            let k = loop {
                let k = [
                    f64::from(rng.gen_range(-2i32..=2)),
                    f64::from(rng.gen_range(-2i32..=2)),
                    f64::from(rng.gen_range(-2i32..=2)),
                ];
                if k != [0.0; 3] {
                    break k;
                }
            };
            modes.push(FourierMode {
                pair,
                k,
                amplitude: amp * rng.gen_range(-1.0..=1.0),
                phase: rng.gen_range(0.0..TAU),
            });
        }
    }
    modes
}

struct Params<'a> {
    name: &'a str,
    given: &'a BTreeMap<String, f64>,
    used: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn new(name: &'a str, given: &'a BTreeMap<String, f64>) -> Self {
        Self { name, given, used: BTreeMap::new() }
    }

    fn get(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.given.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(Error::Config(format!("{}: parameter {key} must be finite", self.name)));
        }
        self.used.insert(key.to_string(), v);
        Ok(v)
    }

    fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default)?;
        if v <= 0.0 {
            return Err(Error::Config(format!("{}: parameter {key} must be positive", self.name)));
        }
        Ok(v)
    }

    fn finish(self) -> Result<BTreeMap<String, f64>> {
        if let Some(extra) = self.given.keys().find(|k| !self.used.contains_key(*k)) {
            return Err(Error::Config(format!("{}: unknown parameter {extra}", self.name)));
        }
        Ok(self.used)
    }
}

/// Look up a built-in metric by name. Missing parameters take defaults.
pub fn zoo_metric(name: &str, params: &BTreeMap<String, f64>) -> Result<ChartMetric> {
    let mut p = Params::new(name, params);
    let nonperiodic = [false; 3];
    let (domain, periodic, field) = match name {
        "flat_torus" => {
            let period = p.positive("period", 1.0)?;
            (Domain::cube(0.0, period), [true; 3], Field::Flat)
        }
        "round_sphere" => {
            let radius = p.positive("radius", 1.0)?;
            (Domain::cube(-1.0, 1.0), nonperiodic, Field::Sphere { radius })
        }
        "hyperbolic_ball" => (Domain::cube(-0.5, 0.5), nonperiodic, Field::Hyperbolic),
        "product_s2xr" => (Domain::cube(-1.0, 1.0), nonperiodic, Field::ProductS2xR),
        "berger" => {
            let tau = p.positive("tau", 0.5)?;
            let domain = Domain {
                lo: [0.35, 0.0, 0.0],
                hi: [1.22, TAU, TAU],
            };
            (domain, [false, true, true], Field::Berger { tau })
        }
        "nil" => (Domain::cube(-2.5, 2.5), nonperiodic, Field::Nil),
        "sol" => (Domain::cube(-1.0, 1.0), nonperiodic, Field::Sol),
        "random_fourier" => {
            let seed = p.get("seed", 7.0)?;
            let amp = p.get("amp", 0.01)?;
            let per_pair = p.get("modes", 6.0)?;
            if seed < 0.0 || seed.fract() != 0.0 || per_pair < 0.0 || per_pair.fract() != 0.0 {
                return Err(Error::Config(
                    "random_fourier: seed and modes must be non-negative integers".into(),
                ));
            }
            if !(0.0..0.1).contains(&amp.abs()) {
                return Err(Error::Config("random_fourier: |amp| must be below 0.1".into()));
            }
            let modes = random_modes(seed as u64, amp, per_pair as usize);
            (Domain::cube(0.0, 1.0), [true; 3], Field::RandomFourier { modes })
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown zoo metric {name:?}; expected one of {}",
                ZOO_NAMES.join(", ")
            )))
        }
    };
    let used = p.finish()?;
    ChartMetric::from_parts(name, used, domain, periodic, field)
}
