//! Per-beam mutual information over an explicit cell sequence.

use std::io::Write;

use crate::error::{Error, Result};
use crate::logodds::{f_logratio, softmax_into, LogOdds, SensorParams};

/// One `(n or q, k)` contribution to a beam's mutual information.
#[derive(Clone, Debug, PartialEq)]
pub struct MiTerm {
    /// 1-based cell (dense) or run (SRLE) position.
    pub index: usize,
    pub class: usize,
    /// `p(n,k)` or `ρ(q,k)`.
    pub prob: f64,
    /// `C(n,k)` or `Θ(q,k)`.
    pub cost: f64,
}

impl MiTerm {
    pub fn value(&self) -> f64 {
        self.prob * self.cost
    }
}

/// Mutual information between the map and one beam, in nats.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeamMi {
    pub value: f64,
    pub terms: Option<Vec<MiTerm>>,
}

impl BeamMi {
    pub fn write_terms_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,class,prob,cost,term")?;
        for t in self.terms.iter().flatten() {
            writeln!(w, "{},{},{:e},{:e},{:e}", t.index, t.class, t.prob, t.cost, t.value())?;
        }
        Ok(())
    }
}

pub(crate) struct Scratch {
    pub pmf: Vec<f64>,
    pub phi: Vec<f64>,
}

impl Scratch {
    pub fn new(len: usize) -> Self {
        Scratch {
            pmf: vec![0.0; len],
            phi: vec![0.0; len],
        }
    }
}

/// `f(l - h0, h)` for an arbitrary observation vector `l`.
#[inline]
pub(crate) fn f_update(l: &[f64], h0: &[f64], h: &[f64], phi: &mut [f64]) -> f64 {
    for k in 0..phi.len() {
        phi[k] = l[k] - h0[k];
    }
    f_logratio(phi, h)
}

fn check_cell(h: &[f64], h0: &[f64], params: &SensorParams) -> Result<()> {
    let k = params.num_classes();
    if h.len() != k + 1 || h0.len() != k + 1 {
        return Err(Error::ClassCountMismatch {
            expected: k,
            got: h.len().max(h0.len()) - 1,
        });
    }
    Ok(())
}

/// Mutual information of a beam over cells `(h_t, h_0)` in ray order.
///
/// One forward pass keeps the running no-return probability of the prefix
/// and the running sum of free-space log-ratios, so the cost is `O(K·N)`.
pub fn beam_mi_dense<'a, I>(cells: I, params: &SensorParams) -> Result<BeamMi>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    dense_impl(cells, params, false)
}

/// As [`beam_mi_dense`] but also returns every `(n, k)` term.
pub fn beam_mi_dense_terms<'a, I>(cells: I, params: &SensorParams) -> Result<BeamMi>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    dense_impl(cells, params, true)
}

fn dense_impl<'a, I>(cells: I, params: &SensorParams, keep_terms: bool) -> Result<BeamMi>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let k = params.num_classes();
    let mut s = Scratch::new(k + 1);
    let phi_minus = params.phi_minus().values();
    let mut hits: Vec<LogOdds> = Vec::with_capacity(k);
    for y in 1..=k {
        hits.push(params.hit_vector(y)?);
    }
    let mut p_prefix = 1.0;
    let mut f_prefix = 0.0;
    let mut value = 0.0;
    let mut terms = keep_terms.then(Vec::new);
    let mut n = 0;
    for (h, h0) in cells {
        check_cell(h, h0, params)?;
        n += 1;
        softmax_into(h, &mut s.pmf);
        for y in 1..=k {
            let cost = f_update(hits[y - 1].values(), h0, h, &mut s.phi) + f_prefix;
            let prob = s.pmf[y] * p_prefix;
            value += prob * cost;
            if let Some(t) = terms.as_mut() {
                t.push(MiTerm {
                    index: n,
                    class: y,
                    prob,
                    cost,
                });
            }
        }
        p_prefix *= s.pmf[0];
        f_prefix += f_update(phi_minus, h0, h, &mut s.phi);
    }
    if n == 0 {
        return Err(Error::EmptyRay);
    }
    Ok(BeamMi { value, terms })
}

/// Term-by-term evaluation without the running prefix, `O(K·N²)`.
pub fn beam_mi_dense_direct(cells: &[(LogOdds, LogOdds)], params: &SensorParams) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::EmptyRay);
    }
    let k = params.num_classes();
    let mut s = Scratch::new(k + 1);
    let mut total = 0.0;
    for n in 0..cells.len() {
        let (h, h0) = (cells[n].0.values(), cells[n].1.values());
        check_cell(h, h0, params)?;
        let mut p_before = 1.0;
        let mut f_before = 0.0;
        for (hj, h0j) in &cells[..n] {
            softmax_into(hj.values(), &mut s.pmf);
            p_before *= s.pmf[0];
            f_before += f_update(params.phi_minus().values(), h0j.values(), hj.values(), &mut s.phi);
        }
        softmax_into(h, &mut s.pmf);
        for y in 1..=k {
            let c = f_update(params.hit_vector(y)?.values(), h0, h, &mut s.phi) + f_before;
            total += s.pmf[y] * p_before * c;
        }
    }
    Ok(total)
}

pub(crate) fn pairs(cells: &[(LogOdds, LogOdds)]) -> impl Iterator<Item = (&[f64], &[f64])> {
    cells.iter().map(|(h, h0)| (h.values(), h0.values()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(hs: &[&[f64]]) -> Vec<(LogOdds, LogOdds)> {
        hs.iter()
            .map(|h| (LogOdds::from_nonfree(h).unwrap(), LogOdds::uniform(h.len())))
            .collect()
    }

    #[test]
    fn empty_ray_is_error() {
        let p = SensorParams::default_profile(2);
        assert!(matches!(beam_mi_dense(pairs(&[]), &p), Err(Error::EmptyRay)));
    }

    #[test]
    fn known_free_map_is_nearly_uninformative() {
        let p = SensorParams::default_profile(2);
        // clamp leakage grows with ray length: ~2.6e-3 nats at 20 cells
        let c = cells(&[&[-6.0, -6.0][..]; 6]);
        let mi = beam_mi_dense(pairs(&c), &p).unwrap().value;
        assert!((0.0..1e-3).contains(&mi), "{mi}");
    }

    #[test]
    fn single_binary_cell_by_hand() {
        // K = 1, uniform prior, φ⁺ = [0, a], φ⁻ = [0, -a]
        let a = 0.85;
        let p = SensorParams::new(
            LogOdds::from_nonfree(&[a]).unwrap(),
            LogOdds::from_nonfree(&[-a]).unwrap(),
            LogOdds::from_nonfree(&[0.0]).unwrap(),
            vec![0.0, -6.0],
            vec![0.0, 6.0],
            0.5,
        )
        .unwrap();
        let c = cells(&[&[0.0]]);
        let mi = beam_mi_dense(pairs(&c), &p).unwrap().value;
        // hit outcome probability 1/2, posterior occupancy sigmoid(a)
        let q = 1.0 / (1.0 + (-a).exp());
        let kl = q * (q / 0.5).ln() + (1.0 - q) * ((1.0 - q) / 0.5).ln();
        assert!((mi - 0.5 * kl).abs() < 1e-15);
    }

    #[test]
    fn terms_sum_to_value() {
        let p = SensorParams::default_profile(3);
        let c = cells(&[&[0.2, -1.0, 0.5], &[1.0, 2.0, -3.0], &[0.0, 0.0, 0.0]]);
        let mi = beam_mi_dense_terms(pairs(&c), &p).unwrap();
        let terms = mi.terms.as_ref().unwrap();
        assert_eq!(terms.len(), 9);
        let sum: f64 = terms.iter().map(MiTerm::value).sum();
        assert!((sum - mi.value).abs() < 1e-15);
        let mut buf = Vec::new();
        mi.write_terms_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 10);
    }

    #[test]
    fn class_count_checked() {
        let p = SensorParams::default_profile(3);
        let c = cells(&[&[0.2, -1.0]]);
        assert!(matches!(
            beam_mi_dense(pairs(&c), &p),
            Err(Error::ClassCountMismatch { .. })
        ));
    }
}
