//! Empirical ε-closeness checks and structural audits.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{is_full_cycle, vec_norm, vec_sub, C64, I, ONE};
use crate::random::complex_gaussian;
use crate::reservoir::{truncation_tail_bound, Coupling, InputStream, LinearReservoirSystem};

/// `count` streams of `len` samples drawn uniformly from the radius-`M` ball
/// of `ℂ^m`, reproducible from `seed`.
pub fn random_streams(m: usize, bound: f64, len: usize, count: usize, seed: u64) -> Result<Vec<InputStream>> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidArgument(format!("input bound must be positive, got {bound}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exponent = 1.0 / (2 * m.max(1)) as f64;
    (0..count)
        .map(|_| {
            let samples = (0..len).map(|_| ball_sample(&mut rng, m, bound, exponent)).collect();
            InputStream::new(m, bound, samples)
        })
        .collect()
}

fn ball_sample(rng: &mut ChaCha8Rng, m: usize, bound: f64, exponent: f64) -> Vec<C64> {
    let mut c: Vec<C64> = (0..m).map(|_| complex_gaussian(rng)).collect();
    let norm = vec_norm(&c);
    let u: f64 = rng.random();
    let radius = bound * u.powf(exponent);
    let scale = if norm > 0.0 { radius / norm } else { 0.0 };
    for z in &mut c {
        *z *= scale;
    }
    let after = vec_norm(&c);
    if after > bound {
        for z in &mut c {
            *z *= bound / after;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Location of the largest deviation: stream index and 1-based time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argmax {
    pub stream: usize,
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub stream_count: usize,
    pub stream_length: usize,
    pub bound: f64,
    pub max_deviation: f64,
    pub argmax: Option<Argmax>,
    /// Output error attributable to the finite stream length, summed over
    /// both systems.
    pub tail_bound: f64,
    pub epsilon: f64,
    pub verdict: Verdict,
}

impl ClosenessReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Output effect of truncating an infinite past to `len` samples:
/// `Lip · 2M‖V‖λ^{len}/(1-λ)`.
fn truncation_correction(r: &LinearReservoirSystem, lipschitz: f64, bound: f64, len: usize) -> Result<f64> {
    let horizon = (len as u64).saturating_sub(1);
    Ok(lipschitz * truncation_tail_bound(r.lambda(), r.input_norm()?, bound, horizon)?)
}

/// Lipschitz constant of the readout of `r` on its reachable state ball.
pub fn readout_lipschitz(r: &LinearReservoirSystem, bound: f64) -> Result<f64> {
    r.readout().lipschitz_on_ball(r.state_radius(bound)?)
}

/// Compares the outputs of `a` and `b` on every stream, using each readout's
/// own Lipschitz bound for the truncation correction.
pub fn measure_closeness(
    a: &LinearReservoirSystem,
    b: &LinearReservoirSystem,
    streams: &[InputStream],
    epsilon: f64,
) -> Result<ClosenessReport> {
    let bound = streams.iter().map(InputStream::bound).fold(0.0, f64::max);
    let lips = (readout_lipschitz(a, bound)?, readout_lipschitz(b, bound)?);
    measure_closeness_with_lipschitz(a, b, streams, epsilon, lips)
}

/// [`measure_closeness`] with caller-supplied readout Lipschitz constants.
pub fn measure_closeness_with_lipschitz(
    a: &LinearReservoirSystem,
    b: &LinearReservoirSystem,
    streams: &[InputStream],
    epsilon: f64,
    lipschitz: (f64, f64),
) -> Result<ClosenessReport> {
    if a.m() != b.m() {
        return Err(mismatch("input dimension of compared systems", a.m(), b.m()));
    }
    if a.d() != b.d() {
        return Err(mismatch("output dimension of compared systems", a.d(), b.d()));
    }
    let per_stream: Vec<Result<(f64, usize)>> = streams.par_iter().map(|u| stream_deviation(a, b, u)).collect();
    let mut max_deviation = 0.0;
    let mut argmax = None;
    for (s, res) in per_stream.into_iter().enumerate() {
        let (dev, t) = res?;
        if t > 0 && (argmax.is_none() || dev > max_deviation) {
            max_deviation = dev;
            argmax = Some(Argmax { stream: s, time: t });
        }
    }
    let bound = streams.iter().map(InputStream::bound).fold(0.0, f64::max);
    let len = streams.iter().map(InputStream::len).min().unwrap_or(0);
    let tail_bound = if streams.is_empty() {
        0.0
    } else {
        truncation_correction(a, lipschitz.0, bound, len)? + truncation_correction(b, lipschitz.1, bound, len)?
    };
    let verdict = if max_deviation + tail_bound < epsilon { Verdict::Pass } else { Verdict::Fail };
    Ok(ClosenessReport {
        stream_count: streams.len(),
        stream_length: len,
        bound,
        max_deviation,
        argmax,
        tail_bound,
        epsilon,
        verdict,
    })
}

/// Largest `‖y_t - y'_t‖₂` over one stream with its first 1-based time.
fn stream_deviation(a: &LinearReservoirSystem, b: &LinearReservoirSystem, u: &InputStream) -> Result<(f64, usize)> {
    let ya = a.outputs(u)?;
    let mut best = (0.0, 0);
    b.simulate_with(u, |step, _, y| {
        let dev = vec_norm(&vec_sub(&ya[step - 1], y));
        if best.1 == 0 || dev > best.0 {
            best = (dev, step);
        }
    })?;
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Scr,
    Cscr,
    Twin,
    Smcr,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Scr => "scr",
            Self::Cscr => "cscr",
            Self::Twin => "twin",
            Self::Smcr => "smcr",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scr" => Ok(Self::Scr),
            "cscr" => Ok(Self::Cscr),
            "twin" => Ok(Self::Twin),
            "smcr" => Ok(Self::Smcr),
            other => Err(Error::InvalidArgument(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub claim: Architecture,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the coupling and input alphabet of `r` against the definition of
/// the claimed architecture.
pub fn structural_audit(r: &LinearReservoirSystem, claim: Architecture) -> AuditReport {
    let mut violations = Vec::new();
    let structured = match r.coupling() {
        Coupling::Dense(w) => Coupling::from_dense(w.clone()),
        other => other.clone(),
    };
    match &structured {
        Coupling::Dense(_) => violations.push("W is not a nonnegative multiple of a permutation matrix".to_string()),
        Coupling::PermutationBlocks { scale, blocks } => {
            if !(*scale > 0.0 && *scale < 1.0) {
                violations.push(format!("cycle weight {scale} is not in (0, 1)"));
            }
            if (scale - r.lambda()).abs() > 1e-12 {
                violations.push(format!("‖W‖ = {} differs from the cycle weight {scale}", r.lambda()));
            }
            for (i, b) in blocks.iter().enumerate() {
                if !is_full_cycle(b) {
                    violations.push(format!("block {i} ({b:?}) is not a full cycle"));
                }
            }
            match claim {
                Architecture::Scr | Architecture::Cscr if blocks.len() != 1 => {
                    violations.push(format!("expected a single cycle, found {} blocks", blocks.len()));
                }
                Architecture::Twin if blocks.len() != 2 => {
                    violations.push(format!("expected two cycle blocks, found {}", blocks.len()));
                }
                Architecture::Smcr => {
                    if let Some(j) = blocks.iter().position(|b| b != &blocks[0]) {
                        violations.push(format!("block {j} differs from block 0"));
                    }
                }
                _ => {}
            }
        }
    }
    let alphabet: &[C64] = match claim {
        Architecture::Cscr => &[ONE, C64::new(-1.0, 0.0), I, C64::new(0.0, -1.0)],
        _ => &[ONE, C64::new(-1.0, 0.0)],
    };
    let v = r.v();
    'rows: for i in 0..v.rows() {
        for j in 0..v.cols() {
            if !alphabet.contains(&v[(i, j)]) {
                violations.push(format!("V[{i},{j}] = {} is outside the allowed alphabet", v[(i, j)]));
                if violations.len() > 32 {
                    violations.push("further violations omitted".into());
                    break 'rows;
                }
            }
        }
    }
    AuditReport { claim, violations }
}
