//! End-to-end synthesis: dilation, cyclization and a terminal construction,
//! with the `ε` budget split across the stages.

use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::cyclization::{cyclize_with_ell0, finite_horizon_drift, plan_cyclization, CyclizationPlan};
use crate::dilation::{choose_dilation_horizon, dilate_with_horizon, dilated_dimension};
use crate::error::{Error, Result};
use crate::harness::{measure_closeness, random_streams, structural_audit, Architecture, ClosenessReport};
use crate::linalg::unitarity_residual;
use crate::reservoir::{truncation_tail_bound, Coupling, InputStream, LinearReservoirSystem, Modulus};
use crate::scr_construct::{
    build_cscr_with_delta, build_cscr_with_denominator, build_smcr, build_twin_with_delta, build_twin_with_denominator,
    check_dense, check_dim, input_tolerance, rational_denominator, sign_basis, CscrBuild, TwinBuild, DEFAULT_MAX_DIM,
    STATE_DELTA_CAP,
};

/// `W/λ` counts as unitary when `‖(W/λ)*(W/λ) - I‖_F` is below this.
pub const UNITARY_SKIP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Smcr,
    Cscr,
    Twin,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Smcr => "smcr",
            Self::Cscr => "cscr",
            Self::Twin => "twin",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smcr" => Ok(Self::Smcr),
            "cscr" => Ok(Self::Cscr),
            "twin" => Ok(Self::Twin),
            other => Err(Error::InvalidArgument(format!("unknown target `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Empirical,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(Self::Analytic),
            "empirical" => Ok(Self::Empirical),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub mode: Mode,
    pub max_dim: usize,
    pub modulus: Option<Modulus>,
    /// Relative weights for the inexact stages (two for smcr, three
    /// otherwise); `None` splits `ε` equally.
    pub split: Option<Vec<f64>>,
    pub validation_seed: u64,
    pub validation_streams: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Analytic,
            max_dim: DEFAULT_MAX_DIM,
            modulus: None,
            split: None,
            validation_seed: 0x5c2_0001,
            validation_streams: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBudget {
    pub stage: String,
    pub epsilon: f64,
    pub delta: f64,
}

/// One inequality of a construction evaluated at the chosen parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl StageCheck {
    fn less(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs < rhs,
        }
    }

    fn equal(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs == rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDimension {
    pub stage: String,
    pub dimension: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub target: Target,
    pub epsilon_total: f64,
    pub bound: f64,
    pub lambda: f64,
    pub norm_v: f64,
    /// `M‖V‖/(1-λ)`.
    pub state_radius: f64,
    pub lipschitz: Option<f64>,
    pub per_stage: Vec<StageBudget>,
    pub skipped: Vec<String>,
    pub horizon: Option<usize>,
    pub cyclization_horizon: Option<usize>,
    pub delta0: Option<f64>,
    pub ell0: Option<usize>,
    pub n1: Option<u128>,
    pub rational_denominator: Option<u64>,
    pub k: Option<u64>,
    pub k_r: Option<u64>,
    pub k_i: Option<u64>,
    pub stage_dimensions: Vec<StageDimension>,
    pub checks: Vec<StageCheck>,
}

impl ErrorBudget {
    pub fn stage(&self, name: &str) -> Option<&StageBudget> {
        self.per_stage.iter().find(|s| s.stage == name)
    }

    fn set_dimension(&mut self, stage: &str, dimension: u128) {
        match self.stage_dimensions.iter_mut().find(|d| d.stage == stage) {
            Some(d) => d.dimension = dimension,
            None => self.stage_dimensions.push(StageDimension {
                stage: stage.to_string(),
                dimension,
            }),
        }
    }

    pub fn all_checks_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Guaranteed (or, in empirical mode, measured) output deviation a stage adds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCertificate {
    pub stage: String,
    pub epsilon: f64,
    pub bound: f64,
    pub empirical: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub target: Target,
    pub system: LinearReservoirSystem,
    pub budget: ErrorBudget,
    pub certificate: Vec<StageCertificate>,
    pub empirical: bool,
}

impl PipelineResult {
    pub fn certified_total(&self) -> f64 {
        self.certificate.iter().map(|c| c.bound).sum()
    }
}

pub const DILATION: &str = "dilation";
pub const CYCLIZATION: &str = "cyclization";

fn terminal_name(target: Target) -> &'static str {
    match target {
        Target::Smcr => "smcr",
        Target::Cscr => "cscr",
        Target::Twin => "twin",
    }
}

/// True when `W/λ` is unitary, so dilation would only add dimensions.
pub fn is_scaled_unitary(r: &LinearReservoirSystem) -> bool {
    match r.coupling() {
        Coupling::PermutationBlocks { .. } => r.lambda() > 0.0,
        Coupling::Dense(w) => r.lambda() > 0.0 && unitarity_residual(&w.scale(1.0 / r.lambda())) < UNITARY_SKIP_TOL,
    }
}

/// True when `W` is already `λ` times a single full cycle.
pub fn is_scaled_full_cycle(r: &LinearReservoirSystem) -> bool {
    r.coupling().as_scaled_full_cycle().is_some()
}

struct Conversion {
    modulus: Modulus,
    cap: f64,
}

impl Conversion {
    fn delta(&self, eps: f64) -> Result<f64> {
        self.modulus.delta_for(eps, self.cap)
    }

    fn output_bound(&self, state_err: f64, eps: f64) -> f64 {
        self.modulus.output_bound(state_err, eps, self.cap)
    }
}

fn conversion(r: &LinearReservoirSystem, bound: f64, modulus: Option<&Modulus>, inexact_stages: usize) -> Result<Conversion> {
    let radius = r.state_radius(bound)? + STATE_DELTA_CAP;
    let modulus = Modulus::resolve(r.readout(), radius, modulus)?;
    // affine readouts are globally Lipschitz; otherwise every intermediate
    // state must stay inside the ball the modulus was computed on
    let cap = if r.readout().is_affine() && matches!(modulus, Modulus::Lipschitz(_)) {
        f64::INFINITY
    } else {
        STATE_DELTA_CAP / inexact_stages as f64
    };
    Ok(Conversion { modulus, cap })
}

fn validate_inputs(r: &LinearReservoirSystem, epsilon: f64, bound: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("ε must be positive, got {epsilon}")));
    }
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("input bound M must be positive, got {bound}")));
    }
    if !(r.lambda() > 0.0) {
        return Err(Error::Precondition("the pipeline needs a nonzero coupling".into()));
    }
    Ok(())
}

/// Splits `ε` across the stages and derives every stage parameter that does
/// not depend on a constructed matrix.
pub fn plan_budget(
    r: &LinearReservoirSystem,
    epsilon: f64,
    bound: f64,
    target: Target,
    opts: &SynthesisOptions,
) -> Result<ErrorBudget> {
    validate_inputs(r, epsilon, bound)?;
    let (budget, _) = plan_inner(r, epsilon, bound, target, opts)?;
    Ok(budget)
}

fn plan_inner(
    r: &LinearReservoirSystem,
    epsilon: f64,
    bound: f64,
    target: Target,
    opts: &SynthesisOptions,
) -> Result<(ErrorBudget, Conversion)> {
    let lambda = r.lambda();
    let norm_v = r.input_norm()?;
    let inexact = if target == Target::Smcr { 2 } else { 3 };
    let conv = conversion(r, bound, opts.modulus.as_ref(), inexact)?;
    let shares = split_epsilon(epsilon, inexact, opts.split.as_deref())?;
    let mut per_stage = Vec::new();
    for (stage, &share) in [DILATION, CYCLIZATION].iter().zip(&shares) {
        per_stage.push(StageBudget {
            stage: stage.to_string(),
            epsilon: share,
            delta: conv.delta(share)?,
        });
    }
    per_stage.push(match target {
        Target::Smcr => StageBudget {
            stage: terminal_name(target).to_string(),
            epsilon: 0.0,
            delta: 0.0,
        },
        _ => StageBudget {
            stage: terminal_name(target).to_string(),
            epsilon: shares[2],
            delta: conv.delta(shares[2])?,
        },
    });

    let mut budget = ErrorBudget {
        target,
        epsilon_total: epsilon,
        bound,
        lambda,
        norm_v,
        state_radius: r.state_radius(bound)?,
        lipschitz: conv.modulus.lipschitz(),
        per_stage,
        skipped: Vec::new(),
        horizon: None,
        cyclization_horizon: None,
        delta0: None,
        ell0: None,
        n1: None,
        rational_denominator: None,
        k: None,
        k_r: None,
        k_i: None,
        stage_dimensions: vec![StageDimension {
            stage: "input".into(),
            dimension: r.n() as u128,
        }],
        checks: Vec::new(),
    };

    let mut n_current = r.n() as u128;
    if is_scaled_unitary(r) {
        budget.skipped.push(DILATION.into());
    } else {
        let delta = budget.per_stage[0].delta;
        let horizon = choose_dilation_horizon(lambda, norm_v, bound, delta)?;
        budget.horizon = Some(horizon);
        n_current = dilated_dimension(r.n(), horizon);
    }
    budget.set_dimension(DILATION, n_current);

    if is_scaled_full_cycle(r) {
        budget.skipped.push(CYCLIZATION.into());
    } else {
        let plan = plan_cyclization(lambda, norm_v, bound, n_current as usize, budget.per_stage[1].delta)?;
        record_plan(&mut budget, &plan);
        n_current = plan.n1;
    }
    budget.set_dimension(CYCLIZATION, n_current);

    match target {
        Target::Smcr => {
            budget.set_dimension("smcr", n_current * n_current * r.m() as u128);
        }
        Target::Cscr | Target::Twin => {
            let tol = input_tolerance(lambda, budget.per_stage[2].delta, bound) / 2.0;
            let basis = sign_basis(n_current.max(1) as usize, r.m().max(1));
            budget.rational_denominator = Some(rational_denominator(&basis, tol)?);
        }
    }
    Ok((budget, conv))
}

fn split_epsilon(epsilon: f64, stages: usize, weights: Option<&[f64]>) -> Result<Vec<f64>> {
    let Some(w) = weights else {
        return Ok(vec![epsilon / stages as f64; stages]);
    };
    if w.len() != stages || w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "ε split needs {stages} positive weights, got {w:?}"
        )));
    }
    let total: f64 = w.iter().sum();
    // shares never sum above ε
    Ok(w.iter().map(|x| epsilon * (x / total) * (1.0 - f64::EPSILON)).collect())
}

fn record_plan(budget: &mut ErrorBudget, plan: &CyclizationPlan) {
    budget.cyclization_horizon = Some(plan.horizon);
    budget.delta0 = Some(plan.delta0);
    budget.ell0 = Some(plan.ell0);
    budget.n1 = Some(plan.n1);
}

/// Builds a `target` system `ε`-close to `r` on `M`-bounded streams.
pub fn synthesize(
    r: &LinearReservoirSystem,
    epsilon: f64,
    bound: f64,
    target: Target,
    opts: &SynthesisOptions,
) -> Result<PipelineResult> {
    validate_inputs(r, epsilon, bound)?;
    let (mut budget, conv) = plan_inner(r, epsilon, bound, target, opts)?;
    let empirical = opts.mode == Mode::Empirical;
    let validation = if empirical {
        Some(validation_set(r, epsilon, bound, &conv, opts)?)
    } else {
        None
    };
    let mut certificate = Vec::new();
    let cap = opts.max_dim;

    // dilation
    let stage_eps = budget.per_stage[0].epsilon;
    let r_u = if budget.skipped.iter().any(|s| s == DILATION) {
        let residual = match r.coupling() {
            Coupling::Dense(w) => unitarity_residual(&w.scale(1.0 / r.lambda())),
            Coupling::PermutationBlocks { .. } => 0.0,
        };
        budget.checks.push(StageCheck::less("dilation skipped: unitarity residual of W/λ", residual, UNITARY_SKIP_TOL));
        certificate.push(StageCertificate {
            stage: DILATION.into(),
            epsilon: stage_eps,
            bound: 0.0,
            empirical: false,
        });
        r.clone()
    } else {
        let analytic = budget.horizon.expect("planned");
        let build = |h: usize| -> Result<LinearReservoirSystem> {
            let dim = check_dim(DILATION, dilated_dimension(r.n(), h), cap)?;
            check_dense(DILATION, dim as u128, dim as u128)?;
            Ok(dilate_with_horizon(r, h, bound)?.system)
        };
        let (horizon, system, cert) = match &validation {
            None => {
                let system = build(analytic)?;
                let tail = truncation_tail_bound(r.lambda(), budget.norm_v, bound, analytic as u64)?;
                (analytic, system, conv.output_bound(tail, stage_eps))
            }
            Some(streams) => {
                let (h, system, report) = shrink(analytic as u64, |h| {
                    let s = build(h as usize)?;
                    let rep = measure_closeness(r, &s, streams, stage_eps)?;
                    Ok((s, rep))
                })?;
                (h as usize, system, report.max_deviation + report.tail_bound)
            }
        };
        let tail = truncation_tail_bound(r.lambda(), budget.norm_v, bound, horizon as u64)?;
        let check_name = if empirical { "dilation tail at empirical horizon (informational)" } else { "dilation tail" };
        budget.checks.push(StageCheck {
            holds: empirical || tail < budget.per_stage[0].delta,
            ..StageCheck::less(check_name, tail, budget.per_stage[0].delta)
        });
        budget.horizon = Some(horizon);
        budget.set_dimension(DILATION, system.n() as u128);
        certificate.push(StageCertificate {
            stage: DILATION.into(),
            epsilon: stage_eps,
            bound: cert,
            empirical,
        });
        system
    };

    // cyclization
    let stage_eps = budget.per_stage[1].epsilon;
    let stage_delta = budget.per_stage[1].delta;
    let r_c = if is_scaled_full_cycle(&r_u) {
        if !budget.skipped.iter().any(|s| s == CYCLIZATION) {
            budget.skipped.push(CYCLIZATION.into());
        }
        budget.checks.push(StageCheck::equal("cyclization skipped: W is λ times a full cycle", 1.0, 1.0));
        certificate.push(StageCertificate {
            stage: CYCLIZATION.into(),
            epsilon: stage_eps,
            bound: 0.0,
            empirical: false,
        });
        r_u
    } else {
        let norm_v = r_u.input_norm()?;
        let plan = plan_cyclization(r_u.lambda(), norm_v, bound, r_u.n(), stage_delta)?;
        record_plan(&mut budget, &plan);
        let build = |ell0: usize| -> Result<(LinearReservoirSystem, f64, f64)> {
            let n1 = check_dim(CYCLIZATION, ell0 as u128 * r_u.n() as u128, cap)?;
            check_dense(CYCLIZATION, r_u.readout().output_dim().max(r_u.n()) as u128, n1 as u128)?;
            let c = cyclize_with_ell0(&r_u, ell0, bound)?;
            Ok((c.system, c.perturbation_norm, c.state_error_bound))
        };
        let (ell0, (system, perturbation, state_err), cert) = match &validation {
            None => {
                let out = build(plan.ell0)?;
                let cert = conv.output_bound(out.2, stage_eps);
                (plan.ell0, out, cert)
            }
            Some(streams) => {
                let (ell0, out, report) = shrink(plan.ell0 as u64, |ell0| {
                    let out = build(ell0 as usize)?;
                    let rep = measure_closeness(&r_u, &out.0, streams, stage_eps)?;
                    Ok((out, rep))
                })?;
                (ell0 as usize, out, report.max_deviation + report.tail_bound)
            }
        };
        let lambda = r_u.lambda();
        let tail = truncation_tail_bound(lambda, norm_v, bound, plan.horizon as u64)?;
        let drift = finite_horizon_drift(lambda, plan.horizon, bound, norm_v, plan.delta0);
        budget.checks.push(StageCheck::less("cyclization tail", tail, stage_delta / 2.0));
        budget.checks.push(StageCheck::less("cyclization finite-horizon drift", drift, stage_delta / 2.0));
        if empirical {
            budget.checks.push(StageCheck {
                holds: true,
                ..StageCheck::less(
                    "cyclization state bound at empirical grid (informational)",
                    state_err,
                    stage_delta,
                )
            });
        } else {
            budget.checks.push(StageCheck::less(
                "eigenvalue rounding ‖λA - λ(U ⊕ D)‖",
                lambda * perturbation,
                stage_delta.min(plan.delta0),
            ));
            budget.checks.push(StageCheck::less("cyclization state bound", state_err, stage_delta));
        }
        budget.ell0 = Some(ell0);
        budget.n1 = Some(system.n() as u128);
        budget.set_dimension(CYCLIZATION, system.n() as u128);
        certificate.push(StageCertificate {
            stage: CYCLIZATION.into(),
            epsilon: stage_eps,
            bound: cert,
            empirical,
        });
        system
    };

    // terminal construction
    let stage_eps = budget.per_stage[2].epsilon;
    let stage_delta = budget.per_stage[2].delta;
    let name = terminal_name(target);
    let n_c = r_c.n();
    let system = match target {
        Target::Smcr => {
            let s = build_smcr(&r_c, cap)?;
            certificate.push(StageCertificate {
                stage: name.into(),
                epsilon: 0.0,
                bound: 0.0,
                empirical: false,
            });
            s.system
        }
        Target::Cscr => {
            let tol = input_tolerance(r_c.lambda(), stage_delta, bound);
            let (build, cert): (CscrBuild, f64) = match &validation {
                None => {
                    let b = build_cscr_with_delta(&r_c, stage_delta, bound, cap)?;
                    let cert = conv.output_bound(b.state_error_bound, stage_eps);
                    (b, cert)
                }
                Some(streams) => {
                    let analytic = rational_denominator(&sign_basis(n_c, r_c.m()), tol / 2.0)?;
                    let (_, b, report) = shrink(analytic, |den| {
                        let b = build_cscr_with_denominator(&r_c, den, bound, cap)?;
                        let rep = measure_closeness(&r_c, &b.system, streams, stage_eps)?;
                        Ok((b, rep))
                    })?;
                    (b, report.max_deviation + report.tail_bound)
                }
            };
            let rat = &build.rationalization;
            budget.checks.push(StageCheck {
                holds: empirical || rat.residual < tol,
                ..StageCheck::less("rationalization residual", rat.residual, tol)
            });
            budget.checks.push(StageCheck::equal("gcd(k, n)", rat.k.gcd(&(n_c as u64)) as f64, 1.0));
            budget.rational_denominator = Some(rat.denominator);
            budget.k = Some(rat.k);
            budget.set_dimension(name, build.system.n() as u128);
            certificate.push(StageCertificate {
                stage: name.into(),
                epsilon: stage_eps,
                bound: cert,
                empirical,
            });
            build.system
        }
        Target::Twin => {
            let tol = input_tolerance(r_c.lambda(), stage_delta, bound) / 2.0;
            let (build, cert): (TwinBuild, f64) = match &validation {
                None => {
                    let b = build_twin_with_delta(&r_c, stage_delta, bound, cap)?;
                    let cert = conv.output_bound(b.state_error_bound, stage_eps);
                    (b, cert)
                }
                Some(streams) => {
                    let analytic = rational_denominator(&sign_basis(n_c, r_c.m()), tol)?;
                    let (_, b, report) = shrink(analytic, |den| {
                        let b = build_twin_with_denominator(&r_c, den, bound, cap)?;
                        let rep = measure_closeness(&r_c, &b.system, streams, stage_eps)?;
                        Ok((b, rep))
                    })?;
                    (b, report.max_deviation + report.tail_bound)
                }
            };
            for (label, rat) in [("real", &build.real), ("imaginary", &build.imag)] {
                budget.checks.push(StageCheck {
                    holds: empirical || rat.residual < tol,
                    ..StageCheck::less(&format!("{label} rationalization residual"), rat.residual, tol)
                });
                budget
                    .checks
                    .push(StageCheck::equal(&format!("gcd(k_{}, n)", &label[..1]), rat.k.gcd(&(n_c as u64)) as f64, 1.0));
            }
            budget.rational_denominator = Some(build.real.denominator);
            budget.k_r = Some(build.real.k);
            budget.k_i = Some(build.imag.k);
            budget.set_dimension(name, build.system.n() as u128);
            certificate.push(StageCertificate {
                stage: name.into(),
                epsilon: stage_eps,
                bound: cert,
                empirical,
            });
            build.system
        }
    };
    if target == Target::Smcr {
        budget.set_dimension(name, system.n() as u128);
    }
    let claim = match target {
        Target::Smcr => Architecture::Smcr,
        Target::Cscr => Architecture::Cscr,
        Target::Twin => Architecture::Twin,
    };
    let audit = structural_audit(&system, claim);
    budget.checks.push(StageCheck::equal(
        &format!("structural audit ({claim}) violations"),
        audit.violations.len() as f64,
        0.0,
    ));
    Ok(PipelineResult {
        target,
        system,
        budget,
        certificate,
        empirical,
    })
}

/// Fixed-seed streams long enough that truncation costs under `ε/100`.
fn validation_set(
    r: &LinearReservoirSystem,
    epsilon: f64,
    bound: f64,
    conv: &Conversion,
    opts: &SynthesisOptions,
) -> Result<Vec<InputStream>> {
    let lip = conv.modulus.lipschitz().ok_or_else(|| {
        Error::Capability("empirical mode needs a Lipschitz readout to size its validation streams".into())
    })?;
    let target = epsilon / 100.0 / lip.max(f64::MIN_POSITIVE);
    let len = choose_dilation_horizon(r.lambda(), r.input_norm()?, bound, target)? + 1;
    random_streams(r.m(), bound, len, opts.validation_streams, opts.validation_seed)
}

/// Smallest integer parameter in `[1, hi]` whose construction passes
/// validation, by bisection. Parameters whose construction exceeds the
/// dimension cap are treated as passing so the search moves below them.
fn shrink<T>(
    hi: u64,
    mut eval: impl FnMut(u64) -> Result<(T, ClosenessReport)>,
) -> Result<(u64, T, ClosenessReport)> {
    let (mut lo, mut hi) = (1u64, hi.max(1));
    let mut best: Option<(u64, T, ClosenessReport)> = None;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match eval(mid) {
            Ok((t, rep)) if rep.passed() => {
                hi = mid;
                best = Some((mid, t, rep));
            }
            Ok(_) => lo = mid + 1,
            Err(Error::DimensionCap { .. }) => hi = mid,
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(b) if b.0 == hi => Ok(b),
        _ => {
            let (t, rep) = eval(hi)?;
            Ok((hi, t, rep))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ComplexMatrix, PermutationSpec, C64};
    use crate::random::{random_complex_matrix, random_contraction};
    use crate::reservoir::Readout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: C64) -> LinearReservoirSystem {
        LinearReservoirSystem::new(
            ComplexMatrix::from_real_rows(&[vec![0.5]]).unwrap(),
            ComplexMatrix::from_rows(&[vec![v]]).unwrap(),
            Readout::identity(1),
        )
        .unwrap()
    }

    #[test]
    fn identity_readout_gives_delta_equal_epsilon() {
        let r = scalar(C64::new(1.0, 0.0));
        let b = plan_budget(&r, 0.3, 1.0, Target::Cscr, &SynthesisOptions::default()).unwrap();
        for s in &b.per_stage {
            assert!((s.delta - 0.1).abs() < 1e-15);
        }
        let s = plan_budget(&r, 0.3, 1.0, Target::Smcr, &SynthesisOptions::default()).unwrap();
        assert_eq!(s.per_stage[2].epsilon, 0.0);
        assert!((s.per_stage[0].epsilon - 0.15).abs() < 1e-15);
    }

    #[test]
    fn gain_two_halves_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let w = random_contraction(&mut rng, 2, 0.5);
        let v = random_complex_matrix(&mut rng, 2, 1);
        let r = LinearReservoirSystem::new(w, v, Readout::linear(ComplexMatrix::identity(2).scale(2.0))).unwrap();
        let b = plan_budget(&r, 0.3, 1.0, Target::Cscr, &SynthesisOptions::default()).unwrap();
        for s in &b.per_stage {
            assert!((s.delta - 0.05).abs() < 1e-15);
        }
        assert!(b.horizon.is_some() && b.ell0.is_some() && b.rational_denominator.is_some());
        let n_u = b.stage_dimensions[1].dimension;
        assert_eq!(n_u, (b.horizon.unwrap() as u128 + 1) * 2);
        assert_eq!(b.n1.unwrap(), b.ell0.unwrap() as u128 * n_u);
    }

    #[test]
    fn full_cycle_smcr_skips_to_exact() {
        let r = LinearReservoirSystem::with_coupling(
            Coupling::scaled_permutation(0.6, PermutationSpec::shift(3)),
            ComplexMatrix::from_real_rows(&[vec![0.2], vec![-0.1], vec![0.4]]).unwrap(),
            Readout::identity(3),
        )
        .unwrap();
        let res = synthesize(&r, 0.1, 1.0, Target::Smcr, &SynthesisOptions::default()).unwrap();
        assert_eq!(res.budget.skipped, vec![DILATION.to_string(), CYCLIZATION.to_string()]);
        assert_eq!(res.certified_total(), 0.0);
        assert_eq!(res.system.n(), 9);
        assert!(structural_audit(&res.system, Architecture::Smcr).passed());
        let streams = random_streams(1, 1.0, 40, 8, 3).unwrap();
        let rep = measure_closeness(&r, &res.system, &streams, 1e-9).unwrap();
        assert!(rep.max_deviation < 1e-10);
    }

    #[test]
    fn scalar_twin_analytic_and_empirical() {
        let r = scalar(C64::new(1.0, 1.0));
        let a = synthesize(&r, 0.5, 1.0, Target::Twin, &SynthesisOptions::default()).unwrap();
        assert!(a.budget.all_checks_hold());
        for c in &a.certificate {
            assert!(c.bound < c.epsilon || c.bound == 0.0);
        }
        assert!(a.certified_total() <= 0.5);
        let streams = random_streams(1, 1.0, 60, 32, 5).unwrap();
        assert!(measure_closeness(&r, &a.system, &streams, 0.5).unwrap().passed());
        let opts = SynthesisOptions {
            mode: Mode::Empirical,
            ..SynthesisOptions::default()
        };
        let e = synthesize(&r, 0.5, 1.0, Target::Twin, &opts).unwrap();
        assert!(e.empirical);
        assert!(e.system.n() <= a.system.n());
        assert!(measure_closeness(&r, &e.system, &streams, 0.5).unwrap().passed());
    }

    #[test]
    fn dense_pipeline_runs_all_stages() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let w = random_contraction(&mut rng, 2, 0.3);
        let v = random_complex_matrix(&mut rng, 2, 1);
        let v = v.scale(0.5 / crate::linalg::operator_norm(&v).unwrap());
        let r = LinearReservoirSystem::new(w, v, Readout::identity(2)).unwrap();
        let opts = SynthesisOptions {
            mode: Mode::Empirical,
            ..SynthesisOptions::default()
        };
        let res = synthesize(&r, 1.5, 1.0, Target::Smcr, &opts).unwrap();
        assert!(res.budget.skipped.is_empty());
        assert!(structural_audit(&res.system, Architecture::Smcr).passed());
        let streams = random_streams(1, 1.0, 40, 16, 9).unwrap();
        let rep = measure_closeness(&r, &res.system, &streams, 1.5).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn weighted_split() {
        let r = scalar(C64::new(1.0, 0.0));
        let opts = SynthesisOptions {
            split: Some(vec![1.0, 2.0, 1.0]),
            ..SynthesisOptions::default()
        };
        let b = plan_budget(&r, 0.4, 1.0, Target::Cscr, &opts).unwrap();
        assert!((b.per_stage[1].epsilon - 0.2).abs() < 1e-12);
        assert!(b.per_stage.iter().map(|s| s.epsilon).sum::<f64>() <= 0.4);
        let bad = SynthesisOptions {
            split: Some(vec![1.0, 1.0]),
            ..SynthesisOptions::default()
        };
        assert!(plan_budget(&r, 0.4, 1.0, Target::Cscr, &bad).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w = random_contraction(&mut rng, 3, 0.9);
        let v = random_complex_matrix(&mut rng, 3, 1);
        let r = LinearReservoirSystem::new(w, v, Readout::identity(3)).unwrap();
        let opts = SynthesisOptions {
            max_dim: 50,
            ..SynthesisOptions::default()
        };
        assert!(matches!(
            synthesize(&r, 0.1, 1.0, Target::Cscr, &opts),
            Err(Error::DimensionCap { .. })
        ));
    }
}
