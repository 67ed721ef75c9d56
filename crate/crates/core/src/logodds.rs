//! Multi-class categorical beliefs stored as log-odds against the free class.
//!
//! A cell belief over `K + 1` classes (class 0 is free space) is kept as the
//! vector `h[k] = ln(p[k] / p[0])`, so `h[0]` is always exactly zero. Bayesian
//! updates become additions and the PMF is recovered with a softmax.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-odds vector of length `K + 1`; element 0 is the free-class pivot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogOdds(Vec<f64>);

/// Probability mass function over the `K + 1` classes.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalPmf(Vec<f64>);

/// Relation of a map cell to one beam.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellRelation {
    /// The beam endpoint lies in the cell.
    Occupied,
    /// The beam passes through the cell before its endpoint.
    Free,
    /// The beam does not reach the cell.
    Unobserved,
}

impl LogOdds {
    /// Uniform belief (all zeros) over `K + 1` classes.
    pub fn uniform(num_classes: usize) -> Self {
        LogOdds(vec![0.0; num_classes + 1])
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidLogOdds(format!(
                "need at least 2 entries, got {}",
                values.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidLogOdds(format!(
                "pivot element must be 0, got {}",
                values[0]
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidLogOdds(format!("non-finite entry {v}")));
        }
        Ok(LogOdds(values))
    }

    /// Builds `[0, rest...]`.
    pub fn from_nonfree(rest: &[f64]) -> Result<Self> {
        let mut v = Vec::with_capacity(rest.len() + 1);
        v.push(0.0);
        v.extend_from_slice(rest);
        Self::new(v)
    }

    /// Number of non-free classes `K`.
    pub fn num_classes(&self) -> usize {
        self.0.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn softmax(&self) -> CategoricalPmf {
        CategoricalPmf(softmax(&self.0))
    }

    /// `ln(p[k] / p[0])` for every class.
    pub fn from_pmf(pmf: &CategoricalPmf) -> Result<Self> {
        let p0 = pmf.0[0];
        if p0 <= 0.0 {
            return Err(Error::DegeneratePivot);
        }
        let values = pmf
            .0
            .iter()
            .enumerate()
            .map(|(k, &p)| if k == 0 { 0.0 } else { (p / p0).ln() })
            .collect::<Vec<_>>();
        Self::new(values)
    }

    /// Shannon entropy of the implied PMF in nats.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.0)
    }

    /// Most likely class; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Log-odds of the free class against the union of all occupied classes,
    /// returned as a `K = 1` vector.
    pub fn collapse_binary(&self) -> LogOdds {
        LogOdds(vec![0.0, log_sum_exp(&self.0[1..])])
    }

    fn check_len(&self, other: &LogOdds) -> Result<()> {
        if self.0.len() != other.0.len() {
            return Err(Error::ClassCountMismatch {
                expected: self.num_classes(),
                got: other.num_classes(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for LogOdds {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        LogOdds::new(v)
    }
}

impl From<LogOdds> for Vec<f64> {
    fn from(h: LogOdds) -> Vec<f64> {
        h.0
    }
}

impl CategoricalPmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidLogOdds("pmf needs at least 2 entries".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidLogOdds(format!("probabilities out of [0,1]: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLogOdds(format!("pmf sums to {total}")));
        }
        Ok(CategoricalPmf(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// `ln Σ exp(x)` with max subtraction. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn softmax(h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    softmax_into(h, &mut out);
    out
}

pub fn softmax_into(h: &[f64], out: &mut [f64]) {
    let m = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &x) in out.iter_mut().zip(h) {
        *o = (x - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

pub fn entropy_of(h: &[f64]) -> f64 {
    let lse = log_sum_exp(h);
    h.iter()
        .map(|&x| {
            let lp = x - lse;
            let p = lp.exp();
            if p == 0.0 {
                0.0
            } else {
                -p * lp
            }
        })
        .sum()
}

pub(crate) fn argmax(h: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in h.iter().enumerate().skip(1) {
        if v > h[best] {
            best = k;
        }
    }
    best
}

/// Bayesian log-odds update `h + (l - h0)`; the pivot stays zero.
pub fn posterior_update(h: &LogOdds, l: &LogOdds, h0: &LogOdds) -> Result<LogOdds> {
    h.check_len(l)?;
    h.check_len(h0)?;
    let mut out = h.0.clone();
    posterior_update_in_place(&mut out, &l.0, &h0.0);
    Ok(LogOdds(out))
}

#[inline]
pub(crate) fn posterior_update_in_place(h: &mut [f64], l: &[f64], h0: &[f64]) {
    for k in 0..h.len() {
        h[k] += l[k] - h0[k];
    }
}

/// Elementwise `min(max(h, lo), hi)`.
pub fn clamp(h: &LogOdds, params: &SensorParams) -> LogOdds {
    let mut out = h.0.clone();
    clamp_in_place(&mut out, params);
    LogOdds(out)
}

#[inline]
pub(crate) fn clamp_in_place(h: &mut [f64], params: &SensorParams) {
    for k in 0..h.len() {
        h[k] = clamp_scalar(h[k], params.clamp_lo[k], params.clamp_hi[k]);
    }
}

#[inline]
pub(crate) fn clamp_scalar(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Inverse observation model log-odds for one cell.
pub fn inverse_observation(rel: CellRelation, class: usize, prior: &LogOdds, params: &SensorParams) -> Result<LogOdds> {
    params.check_classes(prior.num_classes())?;
    match rel {
        CellRelation::Occupied => params.hit_vector(class),
        CellRelation::Free => Ok(params.phi_minus.clone()),
        CellRelation::Unobserved => Ok(prior.clone()),
    }
}

/// Log-ratio kernel `ln(1ᵀe^h / 1ᵀe^(φ+h)) + φᵀσ(φ+h)`.
///
/// Evaluated in the equivalent form `Σ_k σ_k(φ+h) (φ_k - Δ)` with
/// `Δ = lse(φ+h) - lse(h)`, i.e. the KL divergence `KL(σ(φ+h) ‖ σ(h))`,
/// which stays well conditioned when |φ| is large.
pub fn f_logratio(phi: &[f64], h: &[f64]) -> f64 {
    debug_assert_eq!(phi.len(), h.len());
    let mut m_h = f64::NEG_INFINITY;
    let mut m_post = f64::NEG_INFINITY;
    for (&p, &x) in phi.iter().zip(h) {
        m_h = m_h.max(x);
        m_post = m_post.max(p + x);
    }
    let mut s_h = 0.0;
    let mut s_post = 0.0;
    for (&p, &x) in phi.iter().zip(h) {
        s_h += (x - m_h).exp();
        s_post += (p + x - m_post).exp();
    }
    let lse_post = m_post + s_post.ln();
    let delta = lse_post - (m_h + s_h.ln());
    phi.iter()
        .zip(h)
        .map(|(&p, &x)| (p + x - lse_post).exp() * (p - delta))
        .sum()
}

/// Parameters of the range-category inverse observation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSensorParams", into = "RawSensorParams")]
pub struct SensorParams {
    phi_plus: LogOdds,
    phi_minus: LogOdds,
    psi_plus: LogOdds,
    clamp_lo: Vec<f64>,
    clamp_hi: Vec<f64>,
    alpha: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSensorParams {
    phi_plus: Vec<f64>,
    phi_minus: Vec<f64>,
    psi_plus: Vec<f64>,
    clamp_lo: Vec<f64>,
    clamp_hi: Vec<f64>,
    alpha: f64,
}

impl TryFrom<RawSensorParams> for SensorParams {
    type Error = Error;
    fn try_from(r: RawSensorParams) -> Result<Self> {
        SensorParams::new(
            LogOdds::new(r.phi_plus)?,
            LogOdds::new(r.phi_minus)?,
            LogOdds::new(r.psi_plus)?,
            r.clamp_lo,
            r.clamp_hi,
            r.alpha,
        )
    }
}

impl From<SensorParams> for RawSensorParams {
    fn from(p: SensorParams) -> Self {
        RawSensorParams {
            phi_plus: p.phi_plus.0,
            phi_minus: p.phi_minus.0,
            psi_plus: p.psi_plus.0,
            clamp_lo: p.clamp_lo,
            clamp_hi: p.clamp_hi,
            alpha: p.alpha,
        }
    }
}

/// Free-cell log-odds increment of the default profile.
pub const DEFAULT_PHI_MINUS: f64 = -1.39;
/// Occupied-cell log-odds increment of the default profile.
pub const DEFAULT_PHI_PLUS: f64 = 0.41;
/// Probability that a hit reports the correct class in the default profile.
pub const DEFAULT_TRUE_POSITIVE_RATE: f64 = 0.65;
/// Default saturation limit for non-free log-odds entries.
pub const DEFAULT_CLAMP: f64 = 6.0;
pub const DEFAULT_ALPHA: f64 = 0.5;

impl SensorParams {
    pub fn new(
        phi_plus: LogOdds,
        phi_minus: LogOdds,
        psi_plus: LogOdds,
        clamp_lo: Vec<f64>,
        clamp_hi: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        let n = phi_plus.0.len();
        if phi_minus.0.len() != n || psi_plus.0.len() != n {
            return Err(Error::InvalidParams("parameter vectors differ in length".into()));
        }
        if clamp_lo.len() != n || clamp_hi.len() != n {
            return Err(Error::InvalidParams("clamp vectors differ in length".into()));
        }
        if clamp_lo[0] != 0.0 || clamp_hi[0] != 0.0 {
            return Err(Error::InvalidParams("pivot clamp limits must be 0".into()));
        }
        for k in 1..n {
            if !(clamp_lo[k] < clamp_hi[k]) {
                return Err(Error::InvalidParams(format!(
                    "clamp_lo[{k}]={} must be < clamp_hi[{k}]={}",
                    clamp_lo[k], clamp_hi[k]
                )));
            }
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha={alpha} outside (0,1)")));
        }
        Ok(SensorParams {
            phi_plus,
            phi_minus,
            psi_plus,
            clamp_lo,
            clamp_hi,
            alpha,
        })
    }

    /// Default profile for `K` classes with the given true-positive rate of a hit.
    ///
    /// `ψ⁺` is chosen so that `σ_{y+1}(φ⁺ + E_{y+1}ψ⁺) = tpr` for every class `y`.
    pub fn with_true_positive_rate(num_classes: usize, tpr: f64) -> Result<Self> {
        Self::with_hit_model(num_classes, tpr, DEFAULT_PHI_PLUS)
    }

    /// Like [`SensorParams::with_true_positive_rate`] with a chosen common
    /// hit increment `φ⁺` for the non-free classes. Negative values push the
    /// unreported classes down on every hit.
    pub fn with_hit_model(num_classes: usize, tpr: f64, phi_plus: f64) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidParams("K must be at least 1".into()));
        }
        if !(tpr > 0.0 && tpr < 1.0) {
            return Err(Error::InvalidParams(format!("true-positive rate {tpr} outside (0,1)")));
        }
        if !phi_plus.is_finite() {
            return Err(Error::InvalidParams(format!("phi_plus {phi_plus} not finite")));
        }
        let a = phi_plus.exp();
        let x = tpr / (1.0 - tpr) * (1.0 + (num_classes as f64 - 1.0) * a);
        let psi = x.ln() - phi_plus;
        let fill = |v: f64| {
            let mut out = vec![v; num_classes + 1];
            out[0] = 0.0;
            LogOdds(out)
        };
        let mut lo = vec![-DEFAULT_CLAMP; num_classes + 1];
        let mut hi = vec![DEFAULT_CLAMP; num_classes + 1];
        lo[0] = 0.0;
        hi[0] = 0.0;
        Self::new(
            fill(phi_plus),
            fill(DEFAULT_PHI_MINUS),
            fill(psi),
            lo,
            hi,
            DEFAULT_ALPHA,
        )
    }

    pub fn default_profile(num_classes: usize) -> Self {
        Self::with_true_positive_rate(num_classes, DEFAULT_TRUE_POSITIVE_RATE).expect("default profile is valid")
    }

    pub fn num_classes(&self) -> usize {
        self.phi_plus.num_classes()
    }

    pub fn phi_plus(&self) -> &LogOdds {
        &self.phi_plus
    }

    pub fn phi_minus(&self) -> &LogOdds {
        &self.phi_minus
    }

    pub fn psi_plus(&self) -> &LogOdds {
        &self.psi_plus
    }

    pub fn clamp_lo(&self) -> &[f64] {
        &self.clamp_lo
    }

    pub fn clamp_hi(&self) -> &[f64] {
        &self.clamp_hi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha={alpha} outside (0,1)")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidParams(format!("clamp {lo} must be < {hi}")));
        }
        for k in 1..self.clamp_lo.len() {
            self.clamp_lo[k] = lo;
            self.clamp_hi[k] = hi;
        }
        Ok(self)
    }

    /// `φ⁺ + E_{y+1} ψ⁺`: only entry `y` receives the class boost.
    pub fn hit_vector(&self, class: usize) -> Result<LogOdds> {
        let k = self.num_classes();
        if class == 0 || class > k {
            return Err(Error::InvalidClass { class, max: k });
        }
        let mut v = self.phi_plus.0.clone();
        v[class] += self.psi_plus.0[class];
        Ok(LogOdds(v))
    }

    pub fn check_classes(&self, k: usize) -> Result<()> {
        if self.num_classes() != k {
            return Err(Error::ClassCountMismatch {
                expected: k,
                got: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Occupied-versus-free collapse of the model for binary (`K = 1`) baselines.
    ///
    /// Each inverse-observation PMF is collapsed to free versus occupied; the
    /// hit model uses class 1's vector.
    pub fn collapse_binary(&self) -> SensorParams {
        let hit = self.hit_vector(1).expect("K >= 1").collapse_binary();
        let lo = self.clamp_lo[1..].iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.clamp_hi[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        SensorParams {
            phi_plus: hit,
            phi_minus: self.phi_minus.collapse_binary(),
            psi_plus: LogOdds(vec![0.0, 0.0]),
            clamp_lo: vec![0.0, lo],
            clamp_hi: vec![0.0, hi],
            alpha: self.alpha,
        }
    }
}
