//! Separation numbers `Γ_k`, exact-overlap detection, and certified
//! rational lower bounds realizing exponential separation.
//!
//! `Γ_k` is the minimal distance between distinct level-`k` maps, where the
//! distance between two similarities is `|t₁ − t₂|` when their ratios agree
//! and `1` otherwise. Exponential separation (`Γ_k > δ^k` for infinitely
//! many `k`) is an infinitely-many-`k` statement; this module reports finite
//! evidence (`min_k Γ_k^{1/k}`) plus, for rational parameters, an all-`k`
//! denominator certificate.

use std::cmp::Ordering;

use num::{BigInt, BigRational, Integer, One, Signed, Zero};
use serde::Serialize;

use crate::scalar::{Field, Scalar};
use crate::wifs::Wifs;
use crate::{Error, Result};

/// Default cap on enumerated words per level.
pub const DEFAULT_WORD_CAP: usize = 10_000_000;

/// Composed level-`k` map data: ratio product, translation `f_w(0)`, word.
struct LevelMap {
    ratio: Scalar,
    translation: Scalar,
    word: Vec<u8>,
}

/// Enumerate all `|I|^k` level-`k` maps in lexicographic word order.
fn enumerate_level(w: &Wifs, k: u32, cap: usize) -> Result<Vec<LevelMap>> {
    let n_words = (w.len() as u64).checked_pow(k);
    match n_words {
        Some(n) if n as usize <= cap => {}
        _ => {
            return Err(Error::Resource(format!(
                "level {k} would enumerate {}^{k} words (cap {cap}); \
                 use certificate mode for rational parameters",
                w.len()
            )))
        }
    }
    let mut out = Vec::with_capacity(n_words.unwrap() as usize);
    let mut word = Vec::with_capacity(k as usize);
    // f_{w₁…w_k}(0) = t_{w₁} + λ_{w₁} t_{w₂} + λ_{w₁}λ_{w₂} t_{w₃} + …
    fn rec(
        w: &Wifs,
        k: u32,
        word: &mut Vec<u8>,
        ratio_prefix: Scalar,
        trans_prefix: Scalar,
        out: &mut Vec<LevelMap>,
    ) -> Result<()> {
        if word.len() == k as usize {
            out.push(LevelMap {
                ratio: ratio_prefix,
                translation: trans_prefix,
                word: word.clone(),
            });
            return Ok(());
        }
        for (i, m) in w.maps().iter().enumerate() {
            word.push(i as u8);
            let t = trans_prefix.try_add(&ratio_prefix.try_mul(&m.translation)?)?;
            let r = ratio_prefix.try_mul(&m.ratio)?;
            rec(w, k, word, r, t, out)?;
            word.pop();
        }
        Ok(())
    }
    rec(w, k, &mut word, Scalar::one(), Scalar::zero(), &mut out)?;
    Ok(out)
}

/// The separation number `Γ_k` with a witness pair attaining it.
///
/// Enumeration sorts the level-`k` maps by (ratio, translation) and scans
/// adjacent gaps, which realizes the all-pairs minimum in O(N log N); ties
/// break to the lexicographically smallest witness.
pub fn separation_number(w: &Wifs, k: u32) -> Result<(Scalar, (Vec<u8>, Vec<u8>))> {
    separation_number_with_cap(w, k, DEFAULT_WORD_CAP)
}

pub fn separation_number_with_cap(
    w: &Wifs,
    k: u32,
    cap: usize,
) -> Result<(Scalar, (Vec<u8>, Vec<u8>))> {
    if k < 1 {
        return Err(Error::Domain("separation numbers need k ≥ 1".into()));
    }
    let mut maps = enumerate_level(w, k, cap)?;
    maps.sort_by(|a, b| {
        a.ratio
            .cmp_numeric(&b.ratio)
            .expect("common field")
            .then_with(|| {
                a.translation
                    .cmp_numeric(&b.translation)
                    .expect("common field")
            })
            .then_with(|| a.word.cmp(&b.word))
    });
    let mut best: Option<(Scalar, (Vec<u8>, Vec<u8>))> = None;
    let mut groups = 0usize;
    let mut group_heads: Vec<usize> = Vec::new();
    let mut i = 0usize;
    while i < maps.len() {
        groups += 1;
        group_heads.push(i);
        let mut j = i;
        while j + 1 < maps.len()
            && maps[j + 1]
                .ratio
                .cmp_numeric(&maps[i].ratio)
                .expect("common field")
                == Ordering::Equal
        {
            // Adjacent gap within the equal-ratio group.
            let gap = maps[j + 1]
                .translation
                .try_sub(&maps[j].translation)?
                .abs();
            let witness = (maps[j].word.clone(), maps[j + 1].word.clone());
            best = Some(match best {
                None => (gap, witness),
                Some((cur, cur_w)) => match gap.cmp_numeric(&cur).expect("common field") {
                    Ordering::Less => (gap, witness),
                    Ordering::Equal if witness < cur_w => (gap, witness),
                    _ => (cur, cur_w),
                },
            });
            j += 1;
        }
        i = j + 1;
    }
    if groups > 1 {
        // Pairs with distinct ratio products are at distance exactly 1.
        let one = Scalar::one();
        let witness = (
            maps[group_heads[0]].word.clone(),
            maps[group_heads[1]].word.clone(),
        );
        best = Some(match best {
            None => (one, witness),
            Some((cur, cur_w)) => {
                if one.cmp_numeric(&cur).expect("common field") == Ordering::Less {
                    (one, witness)
                } else {
                    (cur, cur_w)
                }
            }
        });
    }
    best.ok_or_else(|| Error::Domain("no distinct word pairs at this level".into()))
}

/// Earliest level `k ≤ k_max` at which two distinct words compose to the
/// identical map, with the (lexicographically smallest) witness pair.
/// Requires exact scalars: exact zero is undecidable for floats.
pub fn detect_exact_overlap(
    w: &Wifs,
    k_max: u32,
) -> Result<Option<(u32, (Vec<u8>, Vec<u8>))>> {
    detect_exact_overlap_with_cap(w, k_max, DEFAULT_WORD_CAP)
}

pub fn detect_exact_overlap_with_cap(
    w: &Wifs,
    k_max: u32,
    cap: usize,
) -> Result<Option<(u32, (Vec<u8>, Vec<u8>))>> {
    if !w.is_exact() {
        return Err(Error::Refusal(
            "exact overlap detection needs exact scalars: an exact zero is \
             undecidable from floats"
                .into(),
        ));
    }
    for k in 1..=k_max {
        let (gamma, witness) = separation_number_with_cap(w, k, cap)?;
        if gamma.is_zero() {
            return Ok(Some((k, witness)));
        }
    }
    Ok(None)
}

/// A denominator-based lower bound `Γ_k ≥ (den(λ)^{k−1}·den(t))^{-1}`,
/// realizing exponential separation with `δ = 1/(den(λ)·den(t))` for
/// rational parameters.
#[derive(Clone, Debug, Serialize)]
pub struct GammaCertificate {
    pub k: u32,
    /// lcm of ratio denominators.
    pub den_lambda: String,
    /// lcm of translation denominators.
    pub den_t: String,
    /// The certified bound `1/(den_lambda^{k−1}·den_t)` as a float.
    pub bound: f64,
    /// Exact integer numerator of the enumerated minimal difference over
    /// the common denominator `den_lambda^{k−1}·den_t`; positivity of this
    /// integer is the proof.
    pub witness_numerator: String,
    /// `1/(den_lambda·den_t)`: exponential-separation rate valid for all k.
    pub delta: f64,
    /// Scope note: certificates are restricted to rational parameters.
    pub note: String,
}

/// Emit a certified lower bound for `Γ_k`, or refuse (quadratic/float
/// scalars, or an exact overlap at this level).
pub fn certified_gamma_lower_bound(w: &Wifs, k: u32) -> Result<GammaCertificate> {
    certified_gamma_lower_bound_with_cap(w, k, DEFAULT_WORD_CAP)
}

pub fn certified_gamma_lower_bound_with_cap(
    w: &Wifs,
    k: u32,
    cap: usize,
) -> Result<GammaCertificate> {
    if w.field() != Field::Rational {
        return Err(Error::Refusal(
            "separation certificates are implemented for rational parameters only; \
             algebraic parameters of degree 2 (e.g. the golden ratio) would need \
             norm-form bounds that are not provided"
                .into(),
        ));
    }
    let mut den_lambda = BigInt::one();
    let mut den_t = BigInt::one();
    for m in w.maps() {
        let l = m.ratio.as_rational().expect("rational field");
        let t = m.translation.as_rational().expect("rational field");
        den_lambda = den_lambda.lcm(l.denom());
        den_t = den_t.lcm(t.denom());
    }
    let (gamma, _witness) = separation_number_with_cap(w, k, cap)?;
    let gamma = match gamma {
        Scalar::Rational(r) => r,
        _ => unreachable!("rational field"),
    };
    if gamma.is_zero() {
        return Err(Error::Refusal(format!(
            "exact overlap at level {k}: Γ_{k} = 0, no positive lower bound exists"
        )));
    }
    // Γ_k · den_lambda^{k-1} · den_t must be a positive integer.
    let common = num::pow::pow(den_lambda.clone(), (k - 1) as usize) * &den_t;
    let scaled = &gamma * BigRational::from_integer(common.clone());
    if !scaled.is_integer() || !scaled.is_positive() {
        return Err(Error::Invariant(format!(
            "certificate arithmetic failed: Γ_{k}·den^{}·den_t = {scaled} is not a \
             positive integer",
            k - 1
        )));
    }
    let bound = 1.0
        / (Scalar::Rational(BigRational::from_integer(common)).to_float().0);
    let delta = 1.0
        / (Scalar::Rational(BigRational::from_integer(&den_lambda * &den_t))
            .to_float()
            .0);
    Ok(GammaCertificate {
        k,
        den_lambda: den_lambda.to_str_radix(10),
        den_t: den_t.to_str_radix(10),
        bound,
        witness_numerator: scaled.to_integer().to_str_radix(10),
        delta,
        note: "rational-parameter certificate; quadratic parameters are refused".into(),
    })
}

/// One per-level record in a separation report.
#[derive(Clone, Debug, Serialize)]
pub struct GammaRecord {
    pub k: u32,
    /// `Γ_k` as a float (0 exactly when an overlap was found).
    pub value: f64,
    /// Exact value when the system is exact.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_exact: Option<Scalar>,
    pub overlap: bool,
    pub witness: (Vec<u8>, Vec<u8>),
}

/// Separation evidence over `k = 1..=k_max`: per-level `Γ_k` (with
/// witnesses), the fitted exponent `δ̂ = min_k Γ_k^{1/k}`, and a rational
/// certificate when available. `Γ` is non-increasing and an overlap at `k`
/// forces `Γ_j = 0` for all reported `j ≥ k`.
#[derive(Clone, Debug, Serialize)]
pub struct SeparationReport {
    pub gamma: Vec<GammaRecord>,
    /// `min_k Γ_k^{1/k}` over the computed range (0 after an overlap).
    pub delta_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<GammaCertificate>,
    /// Why the certificate is absent, when it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_refusal: Option<String>,
    /// Finite-evidence caveat: exponential separation is an
    /// infinitely-many-k statement.
    pub note: String,
}

pub fn separation_report(w: &Wifs, k_max: u32) -> Result<SeparationReport> {
    separation_report_with_cap(w, k_max, DEFAULT_WORD_CAP)
}

pub fn separation_report_with_cap(
    w: &Wifs,
    k_max: u32,
    cap: usize,
) -> Result<SeparationReport> {
    let mut gamma = Vec::new();
    let mut delta_hat = f64::INFINITY;
    let mut overlap_witness: Option<(Vec<u8>, Vec<u8>)> = None;
    for k in 1..=k_max {
        if let Some((wa, wb)) = &overlap_witness {
            // Extending both witness words by the same letter preserves the
            // zero difference.
            let mut wa = wa.clone();
            let mut wb = wb.clone();
            wa.push(0);
            wb.push(0);
            overlap_witness = Some((wa.clone(), wb.clone()));
            gamma.push(GammaRecord {
                k,
                value: 0.0,
                value_exact: w.is_exact().then(Scalar::zero),
                overlap: true,
                witness: (wa, wb),
            });
            delta_hat = 0.0;
            continue;
        }
        let (g, witness) = separation_number_with_cap(w, k, cap)?;
        let overlap = g.is_zero();
        let gf = g.to_float().0;
        if overlap {
            delta_hat = 0.0;
            overlap_witness = Some(witness.clone());
        } else {
            delta_hat = delta_hat.min(gf.powf(1.0 / k as f64));
        }
        gamma.push(GammaRecord {
            k,
            value: gf,
            value_exact: w.is_exact().then(|| g.clone()),
            overlap,
            witness,
        });
    }
    let (certificate, certificate_refusal) = if overlap_witness.is_none() {
        match certified_gamma_lower_bound_with_cap(w, k_max, cap) {
            Ok(c) => (Some(c), None),
            Err(Error::Refusal(msg)) => (None, Some(msg)),
            Err(e) => return Err(e),
        }
    } else {
        (None, Some("exact overlap found: Γ vanishes from that level on".into()))
    };
    Ok(SeparationReport {
        gamma,
        delta_hat,
        certificate,
        certificate_refusal,
        note: "finite evidence only: exponential separation asks for Γ_k > δ^k for \
               infinitely many k, which no finite computation can decide; rational \
               certificates extend the bound to every k"
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::level_n_measure;
    use crate::scalar::{big_rat, golden_contraction};
    use crate::wifs::{bernoulli, p_cantor, projected_product};

    fn cantor() -> Wifs {
        p_cantor(3, &[0, 2]).unwrap()
    }

    fn golden() -> Wifs {
        bernoulli(golden_contraction().unwrap()).unwrap()
    }

    #[test]
    fn cantor_gamma_one_and_two() {
        let (g1, _) = separation_number(&cantor(), 1).unwrap();
        assert_eq!(g1, Scalar::rational(2, 3));
        // Level-2 translations {0, 2/9, 2/3, 8/9}: minimal gap 2/9.
        let (g2, _) = separation_number(&cantor(), 2).unwrap();
        assert_eq!(g2, Scalar::rational(2, 9));
    }

    #[test]
    fn golden_gamma_vanishes_at_three() {
        let (g3, (wa, wb)) = separation_number(&golden(), 3).unwrap();
        assert!(g3.is_zero());
        let mut pair = [wa, wb];
        pair.sort();
        assert_eq!(pair[0], vec![0, 1, 1]); // λ + λ² …
        assert_eq!(pair[1], vec![1, 0, 0]); // … equals 1
    }

    #[test]
    fn overlap_detection_examples() {
        assert_eq!(detect_exact_overlap(&golden(), 5).unwrap().unwrap().0, 3);
        assert!(detect_exact_overlap(&cantor(), 10).unwrap().is_none());
        let proj = projected_product(3, &[0, 2], &Scalar::one()).unwrap();
        assert_eq!(detect_exact_overlap(&proj, 3).unwrap().unwrap().0, 1);
    }

    #[test]
    fn overlap_detection_refuses_floats() {
        let w = bernoulli(Scalar::Float(0.7)).unwrap();
        assert!(matches!(
            detect_exact_overlap(&w, 3),
            Err(Error::Refusal(_))
        ));
    }

    #[test]
    fn gamma_monotone_nonincreasing() {
        for w in [cantor(), bernoulli(Scalar::rational(2, 3)).unwrap()] {
            let mut prev: Option<Scalar> = None;
            for k in 1..=8 {
                let (g, _) = separation_number(&w, k).unwrap();
                if let Some(p) = prev {
                    assert_ne!(
                        g.cmp_numeric(&p).unwrap(),
                        Ordering::Greater,
                        "Γ increased at k={k}"
                    );
                }
                prev = Some(g);
            }
        }
    }

    #[test]
    fn certificates_for_rational_bernoulli() {
        // λ = 2/3: Γ_k·3^{k−1} is a positive integer, so Γ_k ≥ 3^{-(k-1)}.
        let w = bernoulli(Scalar::rational(2, 3)).unwrap();
        for k in 1..=12 {
            let cert = certified_gamma_lower_bound(&w, k).unwrap();
            assert_eq!(cert.den_lambda, "3");
            assert_eq!(cert.den_t, "1");
            let (g, _) = separation_number(&w, k).unwrap();
            let g = g.as_rational().unwrap().clone();
            let common = num::pow::pow(BigInt::from(3), (k - 1) as usize);
            let scaled = &g * BigRational::from_integer(common);
            assert!(scaled.is_integer() && scaled.is_positive());
            // Enumerated Γ_k dominates the certified bound exactly.
            assert!(g >= big_rat(1, 3i64.pow(k - 1)));
        }
    }

    #[test]
    fn certificate_bound_for_three_quarters() {
        let w = bernoulli(Scalar::rational(3, 4)).unwrap();
        for k in 1..=10 {
            let cert = certified_gamma_lower_bound(&w, k).unwrap();
            assert_eq!(cert.den_lambda, "4");
            let (g, _) = separation_number(&w, k).unwrap();
            assert!(g.as_rational().unwrap() >= &big_rat(1, 4i64.pow(k - 1)));
        }
    }

    #[test]
    fn cantor_certificate_level_two() {
        let cert = certified_gamma_lower_bound(&cantor(), 2).unwrap();
        // Γ_2 = 2/9 ≥ 1/9 (den_lambda = den_t = 3).
        assert_eq!(cert.den_lambda, "3");
        assert_eq!(cert.den_t, "3");
        assert!((cert.bound - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(cert.witness_numerator, "2");
    }

    #[test]
    fn certificate_refusals() {
        assert!(matches!(
            certified_gamma_lower_bound(&golden(), 3),
            Err(Error::Refusal(_))
        ));
        let proj = projected_product(3, &[0, 2], &Scalar::one()).unwrap();
        // Overlap at level 1: no positive bound.
        assert!(matches!(
            certified_gamma_lower_bound(&proj, 1),
            Err(Error::Refusal(_))
        ));
    }

    #[test]
    fn overlap_implies_atom_collapse() {
        // Overlap at k = 3 roughly halves the golden atom counts onward.
        for n in 3..=8u32 {
            let mu = level_n_measure(&golden(), n).unwrap();
            assert!((mu.len() as u64) < 2u64.pow(n), "n={n}: {}", mu.len());
        }
    }

    #[test]
    fn report_shape_and_delta_hat() {
        let rep = separation_report(&cantor(), 6).unwrap();
        assert_eq!(rep.gamma.len(), 6);
        assert!(rep.certificate.is_some());
        assert!(rep.delta_hat > 0.0);
        for rec in &rep.gamma {
            assert!(!rec.overlap);
        }
        let repg = separation_report(&golden(), 6).unwrap();
        assert_eq!(repg.delta_hat, 0.0);
        assert!(repg.gamma[2].overlap);
        // Γ_j = 0 reported for all j ≥ 3.
        assert!(repg.gamma[3..].iter().all(|r| r.overlap && r.value == 0.0));
        assert!(repg.certificate.is_none());
    }

    #[test]
    fn enumeration_cap_errors() {
        let w = cantor();
        assert!(matches!(
            separation_number_with_cap(&w, 10, 100),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn non_homogeneous_distinct_ratios_have_distance_one() {
        use crate::wifs::SimilarityMap;
        let w = Wifs::new(
            vec![
                SimilarityMap {
                    ratio: Scalar::rational(1, 2),
                    translation: Scalar::zero(),
                },
                SimilarityMap {
                    ratio: Scalar::rational(1, 3),
                    translation: Scalar::from_int(10),
                },
            ],
            vec![big_rat(1, 2), big_rat(1, 2)],
        )
        .unwrap();
        // Only cross-ratio pairs at k = 1: Γ₁ = 1 by the distance convention.
        let (g1, _) = separation_number(&w, 1).unwrap();
        assert_eq!(g1, Scalar::one());
    }
}
