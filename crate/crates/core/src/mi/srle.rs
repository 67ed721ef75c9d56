//! Mutual information over run-length encoded rays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logodds::{softmax_into, LogOdds, SensorParams};
use crate::mi::dense::{f_update, BeamMi, MiTerm, Scratch};

/// `ω` consecutive elements sharing the belief `chi_t` and prior `chi_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrleRun {
    pub width: usize,
    pub chi_t: LogOdds,
    pub chi_0: LogOdds,
}

impl SrleRun {
    pub fn new(width: usize, chi_t: LogOdds, chi_0: LogOdds) -> Self {
        SrleRun { width, chi_t, chi_0 }
    }
}

/// A ray traversal as an ordered list of runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SrleRay {
    runs: Vec<SrleRun>,
}

impl SrleRay {
    pub fn new(runs: Vec<SrleRun>) -> Self {
        SrleRay { runs }
    }

    /// Run-length encodes a per-element sequence, merging equal neighbours.
    pub fn encode(cells: &[(LogOdds, LogOdds)]) -> Self {
        let mut runs: Vec<SrleRun> = Vec::new();
        for (h, h0) in cells {
            match runs.last_mut() {
                Some(r) if r.chi_t == *h && r.chi_0 == *h0 => r.width += 1,
                _ => runs.push(SrleRun::new(1, h.clone(), h0.clone())),
            }
        }
        SrleRay { runs }
    }

    pub fn runs(&self) -> &[SrleRun] {
        &self.runs
    }

    pub fn num_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn num_elements(&self) -> usize {
        self.runs.iter().map(|r| r.width).sum()
    }

    /// Per-element beliefs.
    pub fn expand(&self) -> Vec<LogOdds> {
        self.runs
            .iter()
            .flat_map(|r| std::iter::repeat_n(r.chi_t.clone(), r.width))
            .collect()
    }

    /// Per-element `(belief, prior)` pairs.
    pub fn expand_pairs(&self) -> Vec<(LogOdds, LogOdds)> {
        self.runs
            .iter()
            .flat_map(|r| std::iter::repeat_n((r.chi_t.clone(), r.chi_0.clone()), r.width))
            .collect()
    }

    /// Drops the first element (the sensor's own cell).
    pub fn skip_first(mut self) -> Self {
        if let Some(first) = self.runs.first_mut() {
            first.width -= 1;
            if first.width == 0 {
                self.runs.remove(0);
            }
        }
        self
    }

    pub fn map_beliefs(self, f: impl Fn(&LogOdds) -> LogOdds) -> Self {
        let mut out: Vec<SrleRun> = Vec::with_capacity(self.runs.len());
        for r in self.runs {
            let (t, z) = (f(&r.chi_t), f(&r.chi_0));
            match out.last_mut() {
                Some(prev) if prev.chi_t == t && prev.chi_0 == z => prev.width += r.width,
                _ => out.push(SrleRun::new(r.width, t, z)),
            }
        }
        SrleRay { runs: out }
    }
}

/// `ln p(free)` for a log-odds vector, accurate when `p(free)` is near 1.
pub(crate) fn ln_free_prob(h: &[f64]) -> f64 {
    let m = h[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m <= 0.0 {
        let s: f64 = h[1..].iter().map(|v| v.exp()).sum();
        -s.ln_1p()
    } else {
        let s: f64 = (-m).exp() + h[1..].iter().map(|v| (v - m).exp()).sum::<f64>();
        -(m + s.ln())
    }
}

/// Geometric sums `G1 = Σ_{j<ω} x^j` and `G2 = Σ_{j<ω} j x^j` for `x = 1 - δ`.
///
/// Near `x = 1` the closed forms are 0/0; there the sums are expanded as a
/// finite binomial series in `δ`, whose first term is the `x = 1` limit.
pub(crate) fn geometric_sums(width: usize, ln_x: f64, delta: f64) -> (f64, f64) {
    let w = width as f64;
    if w * delta < 0.5 {
        // Σ_{j<ω} C(j,m) = C(ω,m+1), Σ_{j<ω} j C(j,m) = (m+1) C(ω,m+2) + m C(ω,m+1)
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        let mut c1 = w; // C(ω, m+1)
        let mut c2 = w * (w - 1.0) / 2.0; // C(ω, m+2)
        let mut pow = 1.0; // (-δ)^m
        for m in 0..width {
            let mf = m as f64;
            let t1 = pow * c1;
            let t2 = pow * ((mf + 1.0) * c2 + mf * c1);
            g1 += t1;
            g2 += t2;
            if t1.abs() <= g1.abs() * 1e-18 && t2.abs() <= g2.abs() * 1e-18 {
                break;
            }
            pow *= -delta;
            c1 = c2;
            c2 *= (w - mf - 2.0) / (mf + 3.0);
        }
        (g1, g2)
    } else {
        let one_minus_xw = -(w * ln_x).exp_m1();
        let x = ln_x.exp();
        let g1 = one_minus_xw / delta;
        let x_w1 = ((w - 1.0) * ln_x).exp();
        let g2 = x * (one_minus_xw - w * delta * x_w1) / (delta * delta);
        (g1, g2)
    }
}

struct RunStats {
    ln_pi0: f64,
    delta: f64,
    f_free: f64,
}

fn run_stats(run: &SrleRun, s: &mut Scratch, params: &SensorParams) -> RunStats {
    let h = run.chi_t.values();
    softmax_into(h, &mut s.pmf);
    RunStats {
        ln_pi0: ln_free_prob(h),
        delta: s.pmf[1..].iter().sum(),
        f_free: f_update(params.phi_minus().values(), run.chi_0.values(), h, &mut s.phi),
    }
}

fn check_ray(ray: &SrleRay, params: &SensorParams) -> Result<()> {
    if ray.runs.is_empty() {
        return Err(Error::EmptyRay);
    }
    let k = params.num_classes();
    for r in &ray.runs {
        if r.width == 0 {
            return Err(Error::Format("run of zero width".into()));
        }
        if r.chi_t.num_classes() != k || r.chi_0.num_classes() != k {
            return Err(Error::ClassCountMismatch {
                expected: k,
                got: r.chi_t.num_classes(),
            });
        }
    }
    Ok(())
}

/// Mutual information of a beam over an SRLE ray in `O(K·Q)`.
pub fn beam_mi_srle(ray: &SrleRay, params: &SensorParams) -> Result<BeamMi> {
    srle_impl(ray, params, false)
}

pub fn beam_mi_srle_terms(ray: &SrleRay, params: &SensorParams) -> Result<BeamMi> {
    srle_impl(ray, params, true)
}

fn srle_impl(ray: &SrleRay, params: &SensorParams, keep_terms: bool) -> Result<BeamMi> {
    check_ray(ray, params)?;
    let k = params.num_classes();
    let hits: Vec<LogOdds> = (1..=k).map(|y| params.hit_vector(y)).collect::<Result<_>>()?;
    let mut s = Scratch::new(k + 1);
    let mut ln_p_prefix = 0.0f64;
    let mut f_prefix = 0.0;
    let mut value = 0.0;
    let mut terms = keep_terms.then(Vec::new);
    for (q, run) in ray.runs.iter().enumerate() {
        let st = run_stats(run, &mut s, params);
        let (g1, g2) = geometric_sums(run.width, st.ln_pi0, st.delta);
        let p_prefix = ln_p_prefix.exp();
        for y in 1..=k {
            let f_hit = f_update(hits[y - 1].values(), run.chi_0.values(), run.chi_t.values(), &mut s.phi);
            let beta = f_hit + f_prefix;
            let theta = beta * g1 + st.f_free * g2;
            let rho = s.pmf[y] * p_prefix;
            value += rho * theta;
            if let Some(t) = terms.as_mut() {
                t.push(MiTerm {
                    index: q + 1,
                    class: y,
                    prob: rho,
                    cost: theta,
                });
            }
        }
        ln_p_prefix += run.width as f64 * st.ln_pi0;
        f_prefix += run.width as f64 * st.f_free;
    }
    Ok(BeamMi { value, terms })
}

/// Evaluation that recomputes each run's prefix from scratch, `O(K·Q²)`.
pub fn beam_mi_srle_direct(ray: &SrleRay, params: &SensorParams) -> Result<f64> {
    check_ray(ray, params)?;
    let k = params.num_classes();
    let mut s = Scratch::new(k + 1);
    let mut total = 0.0;
    for q in 0..ray.runs.len() {
        let mut ln_p = 0.0f64;
        let mut f_before = 0.0;
        for r in &ray.runs[..q] {
            let st = run_stats(r, &mut s, params);
            ln_p += r.width as f64 * st.ln_pi0;
            f_before += r.width as f64 * st.f_free;
        }
        let run = &ray.runs[q];
        let st = run_stats(run, &mut s, params);
        let (g1, g2) = geometric_sums(run.width, st.ln_pi0, st.delta);
        for y in 1..=k {
            let f_hit = f_update(
                params.hit_vector(y)?.values(),
                run.chi_0.values(),
                run.chi_t.values(),
                &mut s.phi,
            );
            total += s.pmf[y] * ln_p.exp() * ((f_hit + f_before) * g1 + st.f_free * g2);
        }
    }
    Ok(total)
}
