//! `2^{-m}`-measures on the unit grid, (D,ℓ,R)-regular tree sets, branching
//! profiles, and convolution-flattening experiments.
//!
//! The flattening probe measures the exponential drop
//! `‖ρ∗μ^{(m)}‖_q ≤ 2^{-ε̂m}‖μ^{(m)}‖_q` of a convolution's q-norm; the
//! tree example (full branching on a set of levels `𝒮`, no branching off
//! it) is the canonical obstruction for which `‖μ∗μ‖_q ≈ ‖μ‖_q`.
//! Convolutions stay on the line (support may extend to `[0,2)`) rather
//! than wrapping around the circle.

use serde::Serialize;

use crate::measure::{compensated_sum, q_pow, DyadicHistogram};
use crate::{Error, Result};

/// Cap on materialized tree atoms: `D·|𝒮| ≤ 26` (atom count `2^{D|𝒮|}`).
pub const TREE_ATOM_BITS_CAP: u32 = 26;

/// A probability measure supported on `2^{-m}ℤ ∩ [0,1)`, indexed by
/// `j ∈ {0,…,2^m−1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    m: u32,
    atoms: Vec<(u64, f64)>, // sorted by index, positive masses
}

impl GridMeasure {
    pub fn new(m: u32, mut atoms: Vec<(u64, f64)>) -> Result<GridMeasure> {
        if m >= 63 {
            return Err(Error::Resource(format!("grid level {m} too deep for u64 indices")));
        }
        if atoms.is_empty() {
            return Err(Error::Validation("grid measure needs atoms".into()));
        }
        let cap = 1u64 << m;
        for (j, mass) in &atoms {
            if *j >= cap {
                return Err(Error::Validation(format!(
                    "index {j} outside the 2^{m} grid of [0,1)"
                )));
            }
            if !(*mass > 0.0) {
                return Err(Error::Validation("grid masses must be positive".into()));
            }
        }
        atoms.sort_unstable_by_key(|(j, _)| *j);
        let mut out: Vec<(u64, f64)> = Vec::with_capacity(atoms.len());
        for (j, mass) in atoms {
            match out.last_mut() {
                Some((last, acc)) if *last == j => *acc += mass,
                _ => out.push((j, mass)),
            }
        }
        let total = compensated_sum(out.iter().map(|(_, m)| *m).collect());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "grid measure total mass {total} is not 1"
            )));
        }
        Ok(GridMeasure { m, atoms: out })
    }

    /// Uniform mass `2^{-m}` on every grid point.
    pub fn uniform(m: u32) -> Result<GridMeasure> {
        if m > 26 {
            return Err(Error::Resource(format!("uniform grid at level {m} is too large")));
        }
        let n = 1u64 << m;
        let mass = 1.0 / n as f64;
        Ok(GridMeasure {
            m,
            atoms: (0..n).map(|j| (j, mass)).collect(),
        })
    }

    /// Point mass at grid index `j`.
    pub fn dirac(m: u32, j: u64) -> Result<GridMeasure> {
        GridMeasure::new(m, vec![(j, 1.0)])
    }

    /// The spoiler mixture `2^{-⌈θm⌉}·δ_0 + (1 − 2^{-⌈θm⌉})·uniform`:
    /// an exponentially small atom that prevents flattening beyond `ε ≈ θ`.
    pub fn obstruction(m: u32, theta: f64) -> Result<GridMeasure> {
        let c = (theta * m as f64).ceil();
        let eps = (-c).exp2();
        let n = 1u64 << m;
        let u = (1.0 - eps) / n as f64;
        let mut atoms: Vec<(u64, f64)> = (0..n).map(|j| (j, u)).collect();
        atoms.push((0, eps));
        GridMeasure::new(m, atoms)
    }

    /// Reinterpret a level-`m` histogram supported inside `[0,1)`.
    pub fn from_histogram(h: &DyadicHistogram) -> Result<GridMeasure> {
        let m = h.level();
        let atoms = h
            .bins_f64()
            .into_iter()
            .map(|(j, mass)| {
                if j < 0 || (j as u64) >= (1u64 << m) {
                    Err(Error::Validation(format!(
                        "histogram bin {j} lies outside [0,1) at level {m}"
                    )))
                } else {
                    Ok((j as u64, mass))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        GridMeasure::new(m, atoms)
    }

    pub fn level(&self) -> u32 {
        self.m
    }

    pub fn atoms(&self) -> &[(u64, f64)] {
        &self.atoms
    }

    pub fn support(&self) -> Vec<u64> {
        self.atoms.iter().map(|(j, _)| *j).collect()
    }

    pub fn q_power_sum(&self, q: f64) -> Result<f64> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Domain(format!("q = {q} out of range (1, ∞)")));
        }
        Ok(compensated_sum(
            self.atoms.iter().map(|(_, m)| q_pow(*m, q)).collect(),
        ))
    }

    pub fn q_norm(&self, q: f64) -> Result<f64> {
        Ok(self.q_power_sum(q)?.powf(1.0 / q))
    }

    /// Grid convolution on the line: output indices live in `[0, 2^{m+1})`.
    pub fn convolve_support_masses(&self, other: &GridMeasure) -> Result<Vec<(u64, f64)>> {
        if self.m != other.m {
            return Err(Error::Domain(format!(
                "grid level mismatch: {} vs {}",
                self.m, other.m
            )));
        }
        if self.m > 24 {
            return Err(Error::Resource(
                "grid convolution needs m ≤ 24 for the dense accumulator".into(),
            ));
        }
        let size = 1usize << (self.m + 1);
        let mut acc = vec![0.0f64; size];
        for (ja, ma) in &self.atoms {
            for (jb, mb) in &other.atoms {
                acc[(ja + jb) as usize] += ma * mb;
            }
        }
        Ok(acc
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m > 0.0)
            .map(|(j, m)| (j as u64, m))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Tree measures and regularity
// ---------------------------------------------------------------------------

/// Per-level branching data of a `2^{-ℓD}`-set under the `2^D`-ary tree.
#[derive(Clone, Debug, Serialize)]
pub struct BranchingProfile {
    pub d: u32,
    pub levels: u32,
    /// `R_s`: children per level-`s` node (constant by regularity).
    pub r: Vec<u64>,
    pub regular: bool,
    /// Levels with `R_s ≥ threshold`.
    pub branching_set: Vec<u32>,
    pub threshold: u64,
}

/// First irregularity found: two level-`s` parents with differing child
/// counts.
#[derive(Clone, Debug, Serialize)]
pub struct IrregularityWitness {
    pub level: u32,
    pub parent_a: u64,
    pub count_a: u64,
    pub parent_b: u64,
    pub count_b: u64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum RegularityOutcome {
    Regular(BranchingProfile),
    Irregular(IrregularityWitness),
}

/// Uniform measure on the (D,ℓ,R)-regular set with full branching `2^D` on
/// the levels in `𝒮` and a single (leftmost) child elsewhere. The atom
/// count is `2^{D|𝒮|}`.
pub fn build_tree_measure(d: u32, levels: u32, branching: &[u32]) -> Result<GridMeasure> {
    validate_tree_params(d, levels, branching)?;
    let m = d * levels;
    let s: Vec<u32> = {
        let mut v = branching.to_vec();
        v.sort_unstable();
        v
    };
    // Atom indices Σ_{s∈𝒮} X_s · 2^{D(ℓ−1−s)}, generated most-significant
    // level first so the output is already sorted.
    let mut atoms: Vec<u64> = vec![0];
    for &level in &s {
        let shift = d * (levels - 1 - level);
        let mut next = Vec::with_capacity(atoms.len() << d);
        for base in &atoms {
            for x in 0..(1u64 << d) {
                next.push(base + (x << shift));
            }
        }
        next.sort_unstable();
        atoms = next;
    }
    let mass = 1.0 / atoms.len() as f64;
    GridMeasure::new(m, atoms.into_iter().map(|j| (j, mass)).collect())
}

fn validate_tree_params(d: u32, levels: u32, branching: &[u32]) -> Result<()> {
    if d < 1 || levels < 1 {
        return Err(Error::Domain("tree needs D ≥ 1 and ℓ ≥ 1".into()));
    }
    if d * levels > 62 {
        return Err(Error::Resource(format!(
            "grid level D·ℓ = {} exceeds u64 indexing",
            d * levels
        )));
    }
    let mut seen = vec![false; levels as usize];
    for &s in branching {
        if s >= levels {
            return Err(Error::Domain(format!("branching level {s} out of range")));
        }
        if seen[s as usize] {
            return Err(Error::Domain(format!("duplicate branching level {s}")));
        }
        seen[s as usize] = true;
    }
    if d * branching.len() as u32 > TREE_ATOM_BITS_CAP {
        return Err(Error::Resource(format!(
            "2^{} atoms exceed the 2^{TREE_ATOM_BITS_CAP} materialization cap",
            d * branching.len() as u32
        )));
    }
    Ok(())
}

/// Check `(D, m/D, R)`-regularity of a sorted support at grid level `m`:
/// every level-`s` parent must have the same number of level-`(s+1)`
/// children. The branching set collects levels with `R_s ≥ threshold`.
pub fn regularity_check(
    support: &[u64],
    m: u32,
    d: u32,
    threshold: u64,
) -> Result<RegularityOutcome> {
    if d == 0 || m % d != 0 {
        return Err(Error::Domain(format!(
            "grid level {m} is not divisible by D = {d}"
        )));
    }
    if support.is_empty() {
        return Err(Error::Domain("empty support".into()));
    }
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let levels = m / d;
    let mut r = Vec::with_capacity(levels as usize);
    for s in 0..levels {
        let parent_shift = m - s * d;
        let child_shift = m - (s + 1) * d;
        let mut first: Option<(u64, u64)> = None; // (parent, count)
        let mut cur_parent = sorted[0] >> parent_shift;
        let mut cur_child = sorted[0] >> child_shift;
        let mut count = 1u64;
        let mut level_r: Option<u64> = None;
        let flush = |parent: u64,
                         count: u64,
                         level_r: &mut Option<u64>,
                         first: &mut Option<(u64, u64)>|
         -> Option<IrregularityWitness> {
            if first.is_none() {
                *first = Some((parent, count));
            }
            match level_r {
                None => {
                    *level_r = Some(count);
                    None
                }
                Some(rs) if *rs == count => None,
                Some(rs) => {
                    let (pa, ca) = first.unwrap();
                    Some(IrregularityWitness {
                        level: s,
                        parent_a: pa,
                        count_a: if pa == parent { count.min(ca) } else { ca },
                        parent_b: parent,
                        count_b: if *rs == ca { count } else { *rs },
                    })
                }
            }
        };
        for &idx in &sorted[1..] {
            let parent = idx >> parent_shift;
            let child = idx >> child_shift;
            if parent != cur_parent {
                if let Some(w) = flush(cur_parent, count, &mut level_r, &mut first) {
                    return Ok(RegularityOutcome::Irregular(w));
                }
                cur_parent = parent;
                cur_child = child;
                count = 1;
            } else if child != cur_child {
                cur_child = child;
                count += 1;
            }
        }
        if let Some(w) = flush(cur_parent, count, &mut level_r, &mut first) {
            return Ok(RegularityOutcome::Irregular(w));
        }
        r.push(level_r.unwrap());
    }
    let branching_set = r
        .iter()
        .enumerate()
        .filter(|(_, rs)| **rs >= threshold)
        .map(|(s, _)| s as u32)
        .collect();
    Ok(RegularityOutcome::Regular(BranchingProfile {
        d,
        levels,
        r,
        regular: true,
        branching_set,
        threshold,
    }))
}

// ---------------------------------------------------------------------------
// Flattening probes
// ---------------------------------------------------------------------------

/// Measured flattening of `ρ ∗ μ^{(m)}` against `μ^{(m)}`.
#[derive(Clone, Debug, Serialize)]
pub struct FlatteningReport {
    pub m: u32,
    pub q: f64,
    /// `log₂(‖ρ∗μ‖_q^q / ‖μ‖_q^q)` (≤ 0 by Young's inequality).
    pub log2_power_ratio: f64,
    /// `ε̂` from the norm form `‖ρ∗μ‖_q = 2^{-ε̂m}‖μ‖_q`, i.e.
    /// `−log2_power_ratio/(q·m)`.
    pub eps_hat: f64,
    /// `‖ρ‖_q^{q'}` with `q' = q/(q−1)`.
    pub rho_dual_norm: f64,
    /// `σ̂` with `‖ρ‖_q^{q'} = 2^{-σ̂m}`.
    pub sigma_hat: f64,
}

/// `log₂` ratio and flattening exponent of `ρ ∗ μm` against `μm` at a
/// common grid level (convolved on the line and kept at resolution
/// `2^{-m}`; the support may extend into `[0,2)`).
pub fn flattening_ratio(rho: &GridMeasure, mu: &GridMeasure, q: f64) -> Result<FlatteningReport> {
    if rho.level() != mu.level() {
        return Err(Error::Domain(format!(
            "grid level mismatch: ρ at {}, μ at {}",
            rho.level(),
            mu.level()
        )));
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Domain(format!("q = {q} out of range (1, ∞)")));
    }
    let m = mu.level();
    let conv = rho.convolve_support_masses(mu)?;
    let conv_ps = compensated_sum(conv.iter().map(|(_, mass)| q_pow(*mass, q)).collect());
    let mu_ps = mu.q_power_sum(q)?;
    let log2_power_ratio = conv_ps.log2() - mu_ps.log2();
    let qp = q / (q - 1.0);
    let rho_dual_norm = rho.q_norm(q)?.powf(qp);
    Ok(FlatteningReport {
        m,
        q,
        log2_power_ratio,
        eps_hat: -log2_power_ratio / (q * m as f64),
        rho_dual_norm,
        sigma_hat: -rho_dual_norm.log2() / m as f64,
    })
}

/// Per-level node counts of the self-convolution support.
#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionLevel {
    pub level: u32,
    /// Number of level-`s` nodes (as a float: counts grow past u64).
    pub nodes: f64,
    /// `N_{s+1}/N_s`.
    pub avg_children: f64,
}

/// Outcome of the tree self-convolution check `‖μ∗μ‖_q ≈ ‖μ‖_q`.
#[derive(Clone, Debug, Serialize)]
pub struct TreeConvolutionReport {
    pub d: u32,
    pub levels: u32,
    pub branching_set: Vec<u32>,
    pub q: f64,
    pub log2_self_conv_power: f64,
    pub log2_power: f64,
    /// `g = |log₂‖μ∗μ‖_q^q − log₂‖μ‖_q^q| / (D·ℓ)`.
    pub gap: f64,
    /// Branching of `supp(μ∗μ)`: carries give the level after each full
    /// run a second child.
    pub conv_levels: Vec<ConvolutionLevel>,
}

/// Maximal runs of consecutive levels in a sorted branching set.
fn runs_of(branching: &[u32]) -> Vec<(u32, u32)> {
    let mut s = branching.to_vec();
    s.sort_unstable();
    let mut runs: Vec<(u32, u32)> = Vec::new();
    for lvl in s {
        match runs.last_mut() {
            Some((start, len)) if *start + *len == lvl => *len += 1,
            _ => runs.push((lvl, 1)),
        }
    }
    runs
}

/// `Σ_k t(k)^q` for the triangular distribution of `X+Y`, `X,Y` uniform on
/// `{0,…,K−1}`: `t(k) = (K − |k − (K−1)|)/K²`.
fn triangular_power_sum(k_bits: u32, q: f64) -> f64 {
    let k = 1u64 << k_bits;
    let k2 = (k as f64) * (k as f64);
    let mut terms = Vec::with_capacity(k as usize);
    for j in 1..k {
        terms.push(2.0 * q_pow(j as f64 / k2, q));
    }
    terms.push(q_pow(1.0 / k as f64, q));
    compensated_sum(terms)
}

/// Self-convolution check for the tree measure: because distinct runs of
/// full-branching levels are separated by at least one no-branching level,
/// their digit sums (with the single carry bit each) occupy disjoint bit
/// fields, so `‖μ∗μ‖_q^q` factors over runs into triangular power sums.
/// A small normalized gap `g` certifies `‖μ∗μ‖_q ≈ ‖μ‖_q`.
pub fn tree_self_convolution_check(
    d: u32,
    levels: u32,
    branching: &[u32],
    q: f64,
) -> Result<TreeConvolutionReport> {
    validate_tree_params(d, levels, branching)?;
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Domain(format!("q = {q} out of range (1, ∞)")));
    }
    let runs = runs_of(branching);
    let mut log2_conv = 0.0f64;
    for (_, len) in &runs {
        log2_conv += triangular_power_sum(len * d, q).log2();
    }
    let s_bits: u32 = branching.len() as u32 * d;
    let log2_norm = (1.0 - q) * s_bits as f64;
    let m = d * levels;
    let gap = (log2_conv - log2_norm).abs() / m as f64;

    // Prefix counts of supp(μ∗μ): the run with levels [a, a+len) carries
    // M+1 = 2^{lenD+1}−1 values in the bit field ending at position
    // D(a+len); truncating at s·D bits keeps ⌊M/2^σ⌋+1 of them.
    let count_at = |s: u32| -> f64 {
        let mut n = 1.0f64;
        for &(a, len) in &runs {
            let field_end = d * (a + len);
            let max_v = (1u64 << (len * d + 1)) - 2;
            let sigma = field_end.saturating_sub(s * d);
            let kept = if sigma >= 64 { 1 } else { (max_v >> sigma) + 1 };
            n *= kept as f64;
        }
        n
    };
    let mut conv_levels = Vec::with_capacity(levels as usize + 1);
    for s in 0..=levels {
        let nodes = count_at(s);
        let avg_children = if s < levels {
            count_at(s + 1) / nodes
        } else {
            f64::NAN
        };
        conv_levels.push(ConvolutionLevel {
            level: s,
            nodes,
            avg_children,
        });
    }
    Ok(TreeConvolutionReport {
        d,
        levels,
        branching_set: {
            let mut s = branching.to_vec();
            s.sort_unstable();
            s
        },
        q,
        log2_self_conv_power: log2_conv,
        log2_power: log2_norm,
        gap,
        conv_levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::level_n_measure;
    use crate::spectrum::moment_sums;
    use crate::wifs::p_cantor;

    #[test]
    fn tree_measure_small_example() {
        // D=2, ℓ=2, 𝒮={0}: atoms {0, 1/4, 2/4, 3/4}, mass 1/4 each.
        let t = build_tree_measure(2, 2, &[0]).unwrap();
        assert_eq!(t.level(), 4);
        let atoms: Vec<(u64, f64)> = t.atoms().to_vec();
        assert_eq!(
            atoms.iter().map(|(j, _)| *j).collect::<Vec<_>>(),
            vec![0, 4, 8, 12]
        );
        assert!(atoms.iter().all(|(_, m)| *m == 0.25));
    }

    #[test]
    fn tree_measure_degenerate_cases() {
        // Full branching everywhere = uniform grid.
        let t = build_tree_measure(2, 2, &[0, 1]).unwrap();
        assert_eq!(t.atoms().len(), 16);
        assert_eq!(t, GridMeasure::uniform(4).unwrap());
        // No branching: δ_0.
        let t = build_tree_measure(2, 2, &[]).unwrap();
        assert_eq!(t.atoms(), &[(0u64, 1.0)]);
    }

    #[test]
    fn tree_cap_enforced() {
        assert!(matches!(
            build_tree_measure(14, 2, &[0, 1]),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn uniform_on_regular_set_has_exact_power_norm() {
        for (d, l, s) in [(2u32, 3u32, vec![0u32, 2]), (3, 2, vec![1]), (1, 4, vec![0, 1])] {
            let t = build_tree_measure(d, l, &s).unwrap();
            let n = t.atoms().len() as f64;
            for q in [1.5, 2.0, 3.0] {
                let ps = t.q_power_sum(q).unwrap();
                let expect = n.powf(1.0 - q);
                assert!((ps / expect - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regularity_recovers_construction() {
        let t = build_tree_measure(2, 2, &[0]).unwrap();
        match regularity_check(&t.support(), 4, 2, 2).unwrap() {
            RegularityOutcome::Regular(p) => {
                assert_eq!(p.r, vec![4, 1]);
                assert_eq!(p.branching_set, vec![0]);
            }
            RegularityOutcome::Irregular(w) => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn regularity_small_hand_cases() {
        // {0, 1/2} at D=1, ℓ=1: regular with R=(2).
        match regularity_check(&[0, 1], 1, 1, 2).unwrap() {
            RegularityOutcome::Regular(p) => assert_eq!(p.r, vec![2]),
            _ => panic!("expected regular"),
        }
        // {0, 1/4, 1/2} at D=2, ℓ=1: regular with R=(3).
        match regularity_check(&[0, 1, 2], 2, 2, 2).unwrap() {
            RegularityOutcome::Regular(p) => assert_eq!(p.r, vec![3]),
            _ => panic!("expected regular"),
        }
        // Same support at D=1, ℓ=2: level-1 parents have 2 vs 1 children.
        match regularity_check(&[0, 1, 2], 2, 1, 2).unwrap() {
            RegularityOutcome::Irregular(w) => {
                assert_eq!(w.level, 1);
                assert_ne!(w.count_a, w.count_b);
            }
            _ => panic!("expected irregular"),
        }
    }

    #[test]
    fn regularity_needs_divisible_level() {
        assert!(regularity_check(&[0], 5, 2, 2).is_err());
    }

    #[test]
    fn flattening_of_dirac_is_zero_exactly() {
        let w = p_cantor(3, &[0, 2]).unwrap();
        let mu = GridMeasure::from_histogram(
            &level_n_measure(&w, 7).unwrap().dyadic_bin(10).unwrap(),
        )
        .unwrap();
        for j in [0u64, 5, 1 << 9] {
            let rho = GridMeasure::dirac(10, j).unwrap();
            let rep = flattening_ratio(&rho, &mu, 2.0).unwrap();
            assert_eq!(rep.log2_power_ratio, 0.0);
            assert_eq!(rep.eps_hat, 0.0);
        }
    }

    #[test]
    fn flattening_is_never_positive() {
        // Young: ‖ρ∗μ‖_q ≤ ‖μ‖_q, so the log-ratio stays ≤ 0.
        let w = p_cantor(3, &[0, 2]).unwrap();
        let mu = GridMeasure::from_histogram(
            &level_n_measure(&w, 7).unwrap().dyadic_bin(10).unwrap(),
        )
        .unwrap();
        for rho in [
            GridMeasure::uniform(10).unwrap(),
            GridMeasure::obstruction(10, 0.1).unwrap(),
            mu.clone(),
        ] {
            for q in [1.5, 2.0, 3.0] {
                let rep = flattening_ratio(&rho, &mu, q).unwrap();
                assert!(rep.log2_power_ratio <= 0.0);
            }
        }
    }

    #[test]
    fn uniform_rho_flattens_cantor() {
        let w = p_cantor(3, &[0, 2]).unwrap();
        let m = 14;
        let mu = GridMeasure::from_histogram(
            &level_n_measure(&w, 9).unwrap().dyadic_bin(m).unwrap(),
        )
        .unwrap();
        let rho = GridMeasure::uniform(m).unwrap();
        let rep = flattening_ratio(&rho, &mu, 2.0).unwrap();
        assert!(
            rep.eps_hat >= 0.2 && rep.eps_hat <= 0.5,
            "ε̂ = {}",
            rep.eps_hat
        );
    }

    #[test]
    fn obstruction_limits_flattening() {
        let w = p_cantor(3, &[0, 2]).unwrap();
        let m = 14;
        let mu = GridMeasure::from_histogram(
            &level_n_measure(&w, 9).unwrap().dyadic_bin(m).unwrap(),
        )
        .unwrap();
        let rho = GridMeasure::obstruction(m, 0.1).unwrap();
        let rep = flattening_ratio(&rho, &mu, 2.0).unwrap();
        let bound = 0.1 + 2.0 / m as f64;
        assert!(rep.eps_hat <= bound, "ε̂ = {} > {}", rep.eps_hat, bound);
        // And ε̂ ≤ σ̂ + 2/m: the obstruction's own thinness is the ceiling.
        assert!(rep.eps_hat <= rep.sigma_hat + 2.0 / m as f64);
    }

    #[test]
    fn self_convolution_matches_brute_force() {
        for (d, l, s) in [
            (2u32, 3u32, vec![0u32]),
            (2, 3, vec![0, 2]),
            (2, 3, vec![0, 1]), // adjacent run
            (2, 3, vec![0, 1, 2]),
            (3, 2, vec![1]),
            (1, 4, vec![0, 2]),
            (2, 3, vec![]),
        ] {
            let t = build_tree_measure(d, l, &s).unwrap();
            let conv = t.convolve_support_masses(&t).unwrap();
            for q in [1.5, 2.0, 3.0] {
                let brute =
                    compensated_sum(conv.iter().map(|(_, mass)| q_pow(*mass, q)).collect());
                let rep = tree_self_convolution_check(d, l, &s, q).unwrap();
                assert!(
                    (rep.log2_self_conv_power - brute.log2()).abs() < 1e-9,
                    "run decomposition vs brute force at D={d} ℓ={l} 𝒮={s:?} q={q}: {} vs {}",
                    rep.log2_self_conv_power,
                    brute.log2()
                );
            }
            // Branching of the convolution support, against direct counting.
            let rep = tree_self_convolution_check(d, l, &s, 2.0).unwrap();
            let support: Vec<u64> = conv.iter().map(|(j, _)| *j).collect();
            let m = d * l;
            for lvl in 0..=l {
                // Index j encodes v = j·2^{-m}; a level-s node is ⌊v·2^{sD}⌋.
                let shift = m - lvl * d;
                let mut prefixes: Vec<u64> = support.iter().map(|j| j >> shift).collect();
                prefixes.sort_unstable();
                prefixes.dedup();
                assert_eq!(
                    rep.conv_levels[lvl as usize].nodes, prefixes.len() as f64,
                    "level {lvl} node count at D={d} ℓ={l} 𝒮={s:?}"
                );
            }
        }
    }

    #[test]
    fn empty_branching_gives_zero_gap() {
        let rep = tree_self_convolution_check(2, 3, &[], 2.0).unwrap();
        assert_eq!(rep.gap, 0.0);
    }

    #[test]
    fn full_branching_gap_is_small() {
        // 𝒮 = [ℓ]: one run; g = log₂(3/2)-ish per level over Dℓ.
        let rep = tree_self_convolution_check(8, 3, &[0, 1, 2], 2.0).unwrap();
        assert!(rep.gap <= 0.15, "g = {}", rep.gap);
    }

    #[test]
    fn build_tree_passes_its_own_regularity_check() {
        for (d, l, s) in [(2u32, 3u32, vec![0u32, 2]), (3, 2, vec![0]), (2, 4, vec![1, 3])] {
            let t = build_tree_measure(d, l, &s).unwrap();
            match regularity_check(&t.support(), d * l, d, 2).unwrap() {
                RegularityOutcome::Regular(p) => {
                    for (lvl, r) in p.r.iter().enumerate() {
                        let expect = if s.contains(&(lvl as u32)) { 1u64 << d } else { 1 };
                        assert_eq!(*r, expect);
                    }
                    assert_eq!(p.branching_set, s);
                }
                RegularityOutcome::Irregular(w) => panic!("unexpected witness {w:?}"),
            }
        }
    }

    #[test]
    fn grid_measure_rejects_bad_inputs() {
        assert!(GridMeasure::new(3, vec![(8, 1.0)]).is_err()); // out of range
        assert!(GridMeasure::new(3, vec![(0, 0.5)]).is_err()); // mass ≠ 1
        assert!(GridMeasure::new(3, vec![(0, -0.5), (1, 1.5)]).is_err());
        // Histogram outside [0,1).
        let m = crate::measure::DiscreteMeasure::dirac(crate::scalar::Scalar::rational(3, 2))
            .unwrap();
        let h = m.dyadic_bin(4).unwrap();
        assert!(GridMeasure::from_histogram(&h).is_err());
    }

    #[test]
    fn moment_sums_on_grid_match_histogram_path() {
        let w = p_cantor(3, &[0, 2]).unwrap();
        let h = level_n_measure(&w, 7).unwrap().dyadic_bin(10).unwrap();
        let g = GridMeasure::from_histogram(&h).unwrap();
        let a = moment_sums(&h, 2.0).unwrap();
        let b = g.q_power_sum(2.0).unwrap();
        assert!((a - b).abs() <= 1e-15);
    }
}
