//! Truncated per-node class beliefs: the three most likely classes plus a lump.

use arrayvec::ArrayVec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logodds::{clamp_scalar, log_sum_exp, LogOdds, SensorParams};

pub const TRACKED_CLASSES: usize = 3;

/// Up to three `(class, log-odds)` pairs sorted by decreasing log-odds, plus
/// the log-odds of all remaining occupied classes lumped together.
///
/// `others` is `-inf` when every occupied class is tracked.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSemantics {
    data: ArrayVec<(u16, f64), TRACKED_CLASSES>,
    others: f64,
}

/// Observation applied to a single element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeUpdate {
    Free,
    Hit(usize),
}

fn by_value_desc(a: &(u16, f64), b: &(u16, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl TruncatedSemantics {
    pub fn from_full(h: &LogOdds) -> Self {
        Self::from_values(h.values())
    }

    pub(crate) fn from_values(h: &[f64]) -> Self {
        let mut all: Vec<(u16, f64)> = (1..h.len()).map(|k| (k as u16, h[k])).collect();
        all.sort_by(by_value_desc);
        let rest: Vec<f64> = all.iter().skip(TRACKED_CLASSES).map(|e| e.1).collect();
        TruncatedSemantics {
            data: all.into_iter().take(TRACKED_CLASSES).collect(),
            others: log_sum_exp(&rest),
        }
    }

    /// Builds a node value from explicit entries; they are re-sorted.
    pub fn new(entries: &[(u16, f64)], others: f64) -> Result<Self> {
        if entries.len() > TRACKED_CLASSES {
            return Err(Error::InvalidLogOdds(format!("{} tracked classes", entries.len())));
        }
        let mut data: ArrayVec<(u16, f64), TRACKED_CLASSES> = entries.iter().copied().collect();
        if data.iter().any(|e| e.0 == 0 || !e.1.is_finite()) || others.is_nan() || others == f64::INFINITY {
            return Err(Error::InvalidLogOdds("bad tracked entry or lump".into()));
        }
        data.sort_by(by_value_desc);
        if data.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidLogOdds("duplicate tracked class".into()));
        }
        Ok(TruncatedSemantics { data, others })
    }

    pub fn entries(&self) -> &[(u16, f64)] {
        &self.data
    }

    pub fn others(&self) -> f64 {
        self.others
    }

    pub fn tracks(&self, class: usize) -> bool {
        self.data.iter().any(|e| e.0 as usize == class)
    }

    /// Log-odds of "occupied by any class" against free.
    pub fn occupancy(&self) -> f64 {
        let mut v: ArrayVec<f64, 4> = self.data.iter().map(|e| e.1).collect();
        v.push(self.others);
        log_sum_exp(&v)
    }

    /// Full `K + 1` log-odds vector; untracked classes share the lump evenly.
    pub fn to_full(&self, num_classes: usize) -> LogOdds {
        let mut h = vec![0.0; num_classes + 1];
        let untracked = num_classes - self.data.len();
        if untracked > 0 {
            let share = self.others - (untracked as f64).ln();
            h[1..].iter_mut().for_each(|v| *v = share);
        }
        for &(c, v) in &self.data {
            h[c as usize] = v;
        }
        LogOdds::new(h).expect("finite log-odds")
    }

    fn lump_members(&self, num_classes: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=num_classes).filter(move |&k| !self.tracks(k))
    }
}

fn mean_increment(members: impl Iterator<Item = usize>, l: &[f64], h0: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in members {
        sum += l[k] - h0[k];
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn lump_bounds(members: impl Iterator<Item = usize>, params: &SensorParams) -> (f64, f64) {
    members.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
        (lo.min(params.clamp_lo()[k]), hi.max(params.clamp_hi()[k]))
    })
}

fn clamp_lump(others: f64, lo: f64, hi: f64) -> f64 {
    if others == f64::NEG_INFINITY {
        others
    } else {
        clamp_scalar(others, lo, hi)
    }
}

/// Applies one free or hit observation to an element-level node value.
pub fn update_node(
    sem: &TruncatedSemantics,
    update: NodeUpdate,
    params: &SensorParams,
    prior: &LogOdds,
) -> Result<TruncatedSemantics> {
    let k = prior.num_classes();
    let h0 = prior.values();
    let l = match update {
        NodeUpdate::Free => params.phi_minus().clone(),
        NodeUpdate::Hit(y) => params.hit_vector(y)?,
    };
    let l = l.values();

    let mut out = sem.clone();
    let mut members: Vec<usize> = sem.lump_members(k).collect();
    if let NodeUpdate::Hit(y) = update {
        if !sem.tracks(y) {
            members.retain(|&m| m != y);
            let h_aux;
            if members.is_empty() {
                out.others = f64::NEG_INFINITY;
                h_aux = sem.others;
            } else {
                h_aux = sem.others + params.alpha().ln();
                out.others = sem.others + (1.0 - params.alpha()).ln();
            }
            let mut extended: ArrayVec<(u16, f64), 4> = out.data.iter().copied().collect();
            extended.push((y as u16, h_aux));
            for e in extended.iter_mut() {
                let c = e.0 as usize;
                e.1 += l[c] - h0[c];
            }
            if let Some(inc) = mean_increment(members.iter().copied(), l, h0) {
                out.others += inc;
            }
            extended.sort_by(by_value_desc);
            if extended.len() > TRACKED_CLASSES {
                let evicted = extended.pop().expect("four entries");
                members.push(evicted.0 as usize);
                out.others = log_sum_exp(&[out.others, evicted.1]);
            }
            out.data = extended.into_iter().collect();
            clamp_semantics(&mut out, &members, params);
            return Ok(out);
        }
    }
    for e in out.data.iter_mut() {
        let c = e.0 as usize;
        e.1 += l[c] - h0[c];
    }
    if let Some(inc) = mean_increment(members.iter().copied(), l, h0) {
        out.others += inc;
    }
    clamp_semantics(&mut out, &members, params);
    out.data.sort_by(by_value_desc);
    Ok(out)
}

fn clamp_semantics(sem: &mut TruncatedSemantics, members: &[usize], params: &SensorParams) {
    for e in sem.data.iter_mut() {
        let c = e.0 as usize;
        e.1 = clamp_scalar(e.1, params.clamp_lo()[c], params.clamp_hi()[c]);
    }
    let (lo, hi) = lump_bounds(members.iter().copied(), params);
    sem.others = clamp_lump(sem.others, lo, hi);
    sem.data.sort_by(by_value_desc);
}

/// Fusion of two sibling values into a parent value.
pub fn fuse_children(a: &TruncatedSemantics, b: &TruncatedSemantics, params: &SensorParams) -> TruncatedSemantics {
    let mut classes: ArrayVec<u16, 6> = ArrayVec::new();
    for &(c, _) in a.data.iter().chain(b.data.iter()) {
        if !classes.contains(&c) {
            classes.push(c);
        }
    }
    let slice = |s: &TruncatedSemantics| s.others - ((1 + classes.len() - s.data.len()) as f64).ln();
    let (oa, ob) = (slice(a), slice(b));
    let value = |s: &TruncatedSemantics, o: f64, c: u16| s.data.iter().find(|e| e.0 == c).map_or(o, |e| e.1);
    let mut fused: ArrayVec<(u16, f64), 6> = classes
        .iter()
        .map(|&c| (c, (value(a, oa, c) + value(b, ob, c)) / 2.0))
        .collect();
    fused.sort_by(by_value_desc);
    let mut rest: ArrayVec<f64, 7> = ArrayVec::new();
    rest.push((oa + ob) / 2.0);
    let mut out = TruncatedSemantics {
        data: ArrayVec::new(),
        others: 0.0,
    };
    for (i, e) in fused.into_iter().enumerate() {
        if i < TRACKED_CLASSES {
            out.data.push(e);
        } else {
            rest.push(e.1);
        }
    }
    out.others = log_sum_exp(&rest);
    let k = params.num_classes();
    let members: Vec<usize> = out.lump_members(k).collect();
    clamp_semantics(&mut out, &members, params);
    out
}

/// How an inner node's value is derived from its eight children.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    /// Pairwise fusion folded left over the children in Morton order.
    #[default]
    Fold,
    /// Arithmetic mean of the children's full log-odds vectors.
    Mean,
}

pub fn fuse_all(children: &[TruncatedSemantics], mode: FusionMode, params: &SensorParams) -> TruncatedSemantics {
    match mode {
        FusionMode::Fold => {
            let mut acc = children[0].clone();
            for c in &children[1..] {
                acc = fuse_children(&acc, c, params);
            }
            acc
        }
        FusionMode::Mean => {
            let k = params.num_classes();
            let mut mean = vec![0.0; k + 1];
            for c in children {
                for (m, v) in mean.iter_mut().zip(c.to_full(k).values()) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= children.len() as f64);
            TruncatedSemantics::from_values(&mean)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logodds::{clamp_in_place, posterior_update_in_place};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full(v: &[f64]) -> LogOdds {
        LogOdds::from_nonfree(v).unwrap()
    }

    #[test]
    fn full_round_trip_small_k() {
        let h = full(&[0.3, -1.2, 2.0]);
        let s = TruncatedSemantics::from_full(&h);
        assert_eq!(s.entries(), &[(3, 2.0), (1, 0.3), (2, -1.2)]);
        assert_eq!(s.others(), f64::NEG_INFINITY);
        assert_eq!(s.to_full(3), h);
    }

    #[test]
    fn lump_for_large_k() {
        let h = full(&[0.0, 1.0, 2.0, 3.0, -1.0]);
        let s = TruncatedSemantics::from_full(&h);
        assert_eq!(s.entries(), &[(4, 3.0), (3, 2.0), (2, 1.0)]);
        assert!((s.others() - log_sum_exp(&[0.0, -1.0])).abs() < 1e-15);
        let back = s.to_full(5);
        assert_eq!(back.values()[1], back.values()[5]);
        assert!((s.occupancy() - log_sum_exp(&h.values()[1..])).abs() < 1e-12);
    }

    #[test]
    fn tracked_update_matches_dense_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 1..=3 {
            let params = SensorParams::default_profile(k);
            let prior = full(&(0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>());
            let mut dense = prior.values().to_vec();
            let mut sem = TruncatedSemantics::from_full(&prior);
            for _ in 0..200 {
                let up = if rng.random_bool(0.5) {
                    NodeUpdate::Free
                } else {
                    NodeUpdate::Hit(rng.random_range(1..=k))
                };
                let l = match up {
                    NodeUpdate::Free => params.phi_minus().clone(),
                    NodeUpdate::Hit(y) => params.hit_vector(y).unwrap(),
                };
                posterior_update_in_place(&mut dense, l.values(), prior.values());
                clamp_in_place(&mut dense, &params);
                sem = update_node(&sem, up, &params, &prior).unwrap();
                assert_eq!(sem.to_full(k).values(), &dense[..]);
            }
        }
    }

    #[test]
    fn untracked_hit_splits_lump_by_alpha() {
        let k = 5;
        let params = SensorParams::default_profile(k);
        let prior = LogOdds::uniform(k);
        let sem = TruncatedSemantics::from_full(&prior);
        assert!(!sem.tracks(4));
        let out = update_node(&sem, NodeUpdate::Hit(4), &params, &prior).unwrap();
        let inc = params.hit_vector(4).unwrap().values()[4];
        let aux = sem.others() + 0.5f64.ln();
        assert!((aux - (sem.others() - 2f64.ln())).abs() < 1e-15);
        assert_eq!(out.entries()[0], (4, aux + inc));
        assert!(out.tracks(4));
        // evicted class 3 (lowest among equal values, ties keep lower ids)
        assert!(!out.tracks(3));
        let p = crate::logodds::softmax(&[
            0.0,
            out.entries()[0].1,
            out.entries()[1].1,
            out.entries()[2].1,
            out.others(),
        ]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lump_tracks_log_sum_exp_of_members() {
        // Uniform free increments keep lump members equal, so a single
        // untracked hit with alpha = 1/|lump| splits exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 4..=5 {
            for _ in 0..50 {
                let alpha = if k > 4 { 1.0 / (k - 3) as f64 } else { 0.5 };
                let params = SensorParams::default_profile(k)
                    .with_clamp(-100.0, 100.0)
                    .unwrap()
                    .with_alpha(alpha)
                    .unwrap();
                let prior = LogOdds::uniform(k);
                let mut dense = prior.values().to_vec();
                let mut sem = TruncatedSemantics::from_full(&prior);
                let mut split_done = false;
                for _ in 0..30 {
                    let up = match rng.random_range(0..3) {
                        0 => NodeUpdate::Free,
                        1 => {
                            let tracked: Vec<usize> = sem.entries().iter().map(|e| e.0 as usize).collect();
                            NodeUpdate::Hit(tracked[rng.random_range(0..tracked.len())])
                        }
                        _ if !split_done => {
                            split_done = true;
                            let untracked: Vec<usize> = (1..=k).filter(|&c| !sem.tracks(c)).collect();
                            NodeUpdate::Hit(untracked[rng.random_range(0..untracked.len())])
                        }
                        _ => NodeUpdate::Free,
                    };
                    let l = match up {
                        NodeUpdate::Free => params.phi_minus().clone(),
                        NodeUpdate::Hit(y) => params.hit_vector(y).unwrap(),
                    };
                    posterior_update_in_place(&mut dense, l.values(), prior.values());
                    sem = update_node(&sem, up, &params, &prior).unwrap();
                    for &(c, v) in sem.entries() {
                        assert!((v - dense[c as usize]).abs() < 1e-9, "class {c}");
                    }
                    let lump: Vec<f64> = (1..=k).filter(|&c| !sem.tracks(c)).map(|c| dense[c]).collect();
                    assert!((sem.others() - log_sum_exp(&lump)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn hit_on_zero_class_rejected() {
        let params = SensorParams::default_profile(2);
        let prior = LogOdds::uniform(2);
        let sem = TruncatedSemantics::from_full(&prior);
        assert!(matches!(
            update_node(&sem, NodeUpdate::Hit(0), &params, &prior),
            Err(Error::InvalidClass { .. })
        ));
    }

    #[test]
    fn self_fusion_is_fixed_point_and_symmetric() {
        let params = SensorParams::default_profile(5);
        let a = TruncatedSemantics::from_full(&full(&[0.5, -1.0, 2.0, 0.1, -3.0]));
        let b = TruncatedSemantics::from_full(&full(&[-0.5, 1.0, 1.5, -2.0, 0.7]));
        assert_eq!(fuse_children(&a, &a, &params), a);
        assert_eq!(fuse_children(&a, &b, &params), fuse_children(&b, &a, &params));
        let e = fuse_children(&a, &b, &params);
        assert!(e.entries().windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn disjoint_singletons_use_sliced_lumps() {
        let params = SensorParams::default_profile(4).with_clamp(-50.0, 50.0).unwrap();
        let a = TruncatedSemantics::new(&[(1, 2.0)], 0.3).unwrap();
        let b = TruncatedSemantics::new(&[(2, 1.0)], -0.5).unwrap();
        let e = fuse_children(&a, &b, &params);
        // |K_f| = 2, |d| = 1: each lump is split into 2 slices
        let oa = 0.3 - 2f64.ln();
        let ob = -0.5 - 2f64.ln();
        assert_eq!(e.entries(), &[(1, (2.0 + ob) / 2.0), (2, (oa + 1.0) / 2.0)]);
        assert_eq!(e.others(), (oa + ob) / 2.0);
    }

    #[test]
    fn fold_weights_for_small_k() {
        let params = SensorParams::default_profile(2);
        let kids: Vec<TruncatedSemantics> = (0..8)
            .map(|i| TruncatedSemantics::from_full(&full(&[i as f64 * 0.25 - 1.0, 1.0 - i as f64 * 0.125])))
            .collect();
        let fold = fuse_all(&kids, FusionMode::Fold, &params).to_full(2);
        let w = [
            1.0 / 128.0,
            1.0 / 128.0,
            1.0 / 64.0,
            1.0 / 32.0,
            1.0 / 16.0,
            1.0 / 8.0,
            1.0 / 4.0,
            1.0 / 2.0,
        ];
        for c in 1..=2 {
            let expect: f64 = kids.iter().zip(w).map(|(s, w)| w * s.to_full(2).values()[c]).sum();
            assert!((fold.values()[c] - expect).abs() < 1e-12);
        }
        let mean = fuse_all(&kids, FusionMode::Mean, &params).to_full(2);
        for c in 1..=2 {
            let expect: f64 = kids.iter().map(|s| s.to_full(2).values()[c]).sum::<f64>() / 8.0;
            assert!((mean.values()[c] - expect).abs() < 1e-12);
        }
    }
}
