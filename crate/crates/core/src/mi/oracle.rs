//! Brute-force outcome-tree mutual information and random test instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logodds::{posterior_update, softmax, LogOdds, SensorParams};
use crate::mi::dense::beam_mi_dense;
use crate::mi::srle::{beam_mi_srle, SrleRay, SrleRun};

pub const ORACLE_MAX_CELLS: usize = 8;
pub const ORACLE_MAX_CLASSES: usize = 3;

/// Outcome-tree mutual information split by outcome type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleMi {
    /// Sum over all `(n, y)` hit outcomes.
    pub hit_outcomes: f64,
    /// Contribution of the outcome where the beam returns nothing.
    pub no_return: f64,
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

/// Enumerates every beam outcome and sums `P(outcome) · Σ KL(posterior ‖ belief)`.
pub fn beam_mi_oracle(cells: &[(LogOdds, LogOdds)], params: &SensorParams) -> Result<OracleMi> {
    let k = params.num_classes();
    if cells.len() > ORACLE_MAX_CELLS || k > ORACLE_MAX_CLASSES {
        return Err(Error::ScaleExceeded {
            cells: cells.len(),
            classes: k,
        });
    }
    if cells.is_empty() {
        return Err(Error::EmptyRay);
    }
    let belief: Vec<Vec<f64>> = cells.iter().map(|(h, _)| softmax(h.values())).collect();
    let free_kl: Vec<f64> = cells
        .iter()
        .zip(&belief)
        .map(|((h, h0), b)| {
            let post = posterior_update(h, params.phi_minus(), h0)?;
            Ok(kl(&softmax(post.values()), b))
        })
        .collect::<Result<_>>()?;

    let mut hit_outcomes = 0.0;
    for n in 0..cells.len() {
        let mut prob_prefix = 1.0;
        let mut kl_prefix = 0.0;
        for j in 0..n {
            prob_prefix *= belief[j][0];
            kl_prefix += free_kl[j];
        }
        let (h, h0) = &cells[n];
        for y in 1..=k {
            let post = posterior_update(h, &params.hit_vector(y)?, h0)?;
            let gain = kl_prefix + kl(&softmax(post.values()), &belief[n]);
            hit_outcomes += prob_prefix * belief[n][y] * gain;
        }
    }
    let p_none: f64 = belief.iter().map(|b| b[0]).product();
    let no_return = p_none * free_kl.iter().sum::<f64>();
    Ok(OracleMi {
        hit_outcomes,
        no_return,
    })
}

/// A self-contained mutual-information test case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiInstance {
    pub params: SensorParams,
    pub cells: Vec<(LogOdds, LogOdds)>,
}

/// A self-contained SRLE test case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrleInstance {
    pub params: SensorParams,
    pub ray: SrleRay,
}

fn random_vec<R: Rng>(rng: &mut R, k: usize, lo: f64, hi: f64) -> LogOdds {
    let rest: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
    LogOdds::from_nonfree(&rest).expect("finite")
}

pub fn random_params<R: Rng>(rng: &mut R, k: usize) -> SensorParams {
    let clamp = rng.random_range(3.0..8.0);
    SensorParams::new(
        random_vec(rng, k, -0.5, 2.5),
        random_vec(rng, k, -3.0, 0.5),
        random_vec(rng, k, -1.0, 3.0),
        std::iter::once(0.0).chain(std::iter::repeat_n(-clamp, k)).collect(),
        std::iter::once(0.0).chain(std::iter::repeat_n(clamp, k)).collect(),
        rng.random_range(0.1..0.9),
    )
    .expect("valid random parameters")
}

/// Log-odds whose free-class probability is exactly `pi0` up to rounding.
pub fn logodds_with_free_prob<R: Rng>(rng: &mut R, k: usize, pi0: f64) -> LogOdds {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let ratio = (1.0 - pi0) / pi0;
    let rest: Vec<f64> = w.iter().map(|x| (ratio * x / total).ln()).collect();
    LogOdds::from_nonfree(&rest).expect("finite")
}

/// Random dense instance with clamped beliefs and priors.
pub fn random_instance<R: Rng>(rng: &mut R, max_cells: usize, max_classes: usize) -> MiInstance {
    let k = rng.random_range(1..=max_classes);
    let n = rng.random_range(1..=max_cells);
    let params = random_params(rng, k);
    let lim = params.clamp_hi()[1];
    let cells = (0..n)
        .map(|_| (random_vec(rng, k, -lim, lim), random_vec(rng, k, -2.0, 2.0)))
        .collect();
    MiInstance { params, cells }
}

/// Random SRLE ray; about a third of the runs have `p(free)` equal to 0.5
/// or `1 - 1e-13`.
pub fn random_srle_instance<R: Rng>(
    rng: &mut R,
    max_runs: usize,
    max_width: usize,
    max_classes: usize,
) -> SrleInstance {
    let k = rng.random_range(1..=max_classes);
    let q = rng.random_range(1..=max_runs);
    let params = random_params(rng, k);
    let lim = params.clamp_hi()[1];
    let prior = random_vec(rng, k, -1.0, 1.0);
    let runs = (0..q)
        .map(|_| {
            let chi = match rng.random_range(0..6) {
                0 => logodds_with_free_prob(rng, k, 0.5),
                1 => logodds_with_free_prob(rng, k, 1.0 - 1e-13),
                _ => random_vec(rng, k, -lim, lim),
            };
            SrleRun::new(rng.random_range(1..=max_width), chi, prior.clone())
        })
        .collect();
    SrleInstance {
        params,
        ray: SrleRay::new(runs),
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both are zero.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// A replayable comparison between a closed form and its reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CheckCase {
    /// Dense recursion against the outcome tree.
    Dense(MiInstance),
    /// SRLE recursion against the expanded dense recursion.
    Srle(SrleInstance),
}

impl CheckCase {
    /// `(closed form, reference)`.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        match self {
            CheckCase::Dense(inst) => {
                let pairs = inst.cells.iter().map(|(h, h0)| (h.values(), h0.values()));
                let d = beam_mi_dense(pairs, &inst.params)?.value;
                Ok((d, beam_mi_oracle(&inst.cells, &inst.params)?.hit_outcomes))
            }
            CheckCase::Srle(inst) => {
                let s = beam_mi_srle(&inst.ray, &inst.params)?.value;
                let cells = inst.ray.expand_pairs();
                let d = beam_mi_dense(cells.iter().map(|(h, h0)| (h.values(), h0.values())), &inst.params)?.value;
                Ok((s, d))
            }
        }
    }

    pub fn relative_error(&self) -> Result<f64> {
        let (a, b) = self.evaluate()?;
        Ok(relative_error(a, b))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    /// Trials run per check; fewer than requested after a breach.
    pub trials: usize,
    pub worst_dense: f64,
    pub worst_srle: f64,
    /// First case above tolerance and its relative error.
    pub breach: Option<(CheckCase, f64)>,
}

/// Runs `trials` dense and SRLE comparisons at oracle scale, stopping at
/// the first one whose relative error exceeds `tolerance`.
pub fn check_suite(seed: u64, trials: usize, tolerance: f64) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport {
        trials: 0,
        worst_dense: 0.0,
        worst_srle: 0.0,
        breach: None,
    };
    for _ in 0..trials {
        report.trials += 1;
        let dense = CheckCase::Dense(random_instance(&mut rng, ORACLE_MAX_CELLS, ORACLE_MAX_CLASSES));
        let srle = CheckCase::Srle(random_srle_instance(&mut rng, 6, 16, ORACLE_MAX_CLASSES));
        for case in [dense, srle] {
            let err = case.relative_error()?;
            let worst = match case {
                CheckCase::Dense(_) => &mut report.worst_dense,
                CheckCase::Srle(_) => &mut report.worst_srle,
            };
            *worst = worst.max(err);
            if !(err <= tolerance) {
                report.breach = Some((case, err));
                return Ok(report);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_limits() {
        let p = SensorParams::default_profile(2);
        let cells = vec![(LogOdds::uniform(2), LogOdds::uniform(2)); 9];
        assert!(matches!(beam_mi_oracle(&cells, &p), Err(Error::ScaleExceeded { .. })));
        let p4 = SensorParams::default_profile(4);
        let c4 = vec![(LogOdds::uniform(4), LogOdds::uniform(4))];
        assert!(matches!(beam_mi_oracle(&c4, &p4), Err(Error::ScaleExceeded { .. })));
    }

    #[test]
    fn zero_information_params() {
        let zero = LogOdds::uniform(2);
        let p = SensorParams::new(
            zero.clone(),
            zero.clone(),
            zero.clone(),
            vec![0.0, -6.0, -6.0],
            vec![0.0, 6.0, 6.0],
            0.5,
        )
        .unwrap();
        let cells = vec![(LogOdds::from_nonfree(&[0.3, -1.0]).unwrap(), zero.clone()); 4];
        let o = beam_mi_oracle(&cells, &p).unwrap();
        assert_eq!(o.hit_outcomes, 0.0);
        assert_eq!(o.no_return, 0.0);
    }

    #[test]
    fn outcome_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let inst = random_instance(&mut rng, 8, 3);
            let b: Vec<Vec<f64>> = inst.cells.iter().map(|(h, _)| softmax(h.values())).collect();
            let mut total = 0.0;
            let mut prefix = 1.0;
            for p in &b {
                total += prefix * (1.0 - p[0]);
                prefix *= p[0];
            }
            total += prefix;
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn free_prob_helper() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 1..=3 {
            let h = logodds_with_free_prob(&mut rng, k, 0.5);
            assert!((softmax(h.values())[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn instances_serialize() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instance(&mut rng, 8, 3);
        let back: MiInstance = serde_json::from_str(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(back, inst);
        let s = random_srle_instance(&mut rng, 6, 16, 3);
        let back: SrleInstance = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn suite_passes_and_breach_replays() {
        let r = check_suite(11, 50, 1e-10).unwrap();
        assert_eq!(r.trials, 50);
        assert!(r.breach.is_none());
        let r = check_suite(11, 50, -1.0).unwrap();
        let (case, err) = r.breach.unwrap();
        let json = serde_json::to_string(&case).unwrap();
        let back: CheckCase = serde_json::from_str(&json).unwrap();
        assert_eq!(back.relative_error().unwrap(), err);
    }
}
