//! Weighted iterated function systems on the line: validation, symbolic
//! (similarity) dimensions, normalization to the unit interval, the
//! negative-ratio squaring trick, and a preset catalog.

use num::{BigInt, BigRational, One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::scalar::{big_rat, Field, Scalar};
use crate::{Error, Result};

/// One contracting similarity `x ↦ λ x + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMap {
    pub ratio: Scalar,
    pub translation: Scalar,
}

/// A weighted IFS `(λ_i x + t_i, p_i)` with strictly positive exact rational
/// weights summing to one and `0 < |λ_i| < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Wifs {
    maps: Vec<SimilarityMap>,
    weights: Vec<BigRational>,
    homogeneous: bool,
    field: Field,
}

impl Wifs {
    /// Validates every invariant; the first violated one is reported and
    /// nothing is silently repaired.
    pub fn new(maps: Vec<SimilarityMap>, weights: Vec<BigRational>) -> Result<Wifs> {
        if maps.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 maps, got {}",
                maps.len()
            )));
        }
        if weights.len() != maps.len() {
            return Err(Error::Validation(format!(
                "{} maps but {} weights",
                maps.len(),
                weights.len()
            )));
        }
        // Common scalar field (errors on mixed quadratic fields).
        let mut field = Field::Rational;
        for m in &maps {
            field = field.join(m.ratio.field())?;
            field = field.join(m.translation.field())?;
        }
        for (i, m) in maps.iter().enumerate() {
            let a = m.ratio.abs();
            if a.sign() == 0 {
                return Err(Error::Validation(format!("map {i}: ratio is zero")));
            }
            if a.cmp_numeric(&Scalar::one())? != std::cmp::Ordering::Less {
                return Err(Error::Validation(format!(
                    "map {i}: |ratio| ≥ 1 is not contracting"
                )));
            }
        }
        let mut total = BigRational::zero();
        for (i, p) in weights.iter().enumerate() {
            if !p.is_positive() {
                return Err(Error::Validation(format!("weight {i} is not positive")));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::Validation(format!(
                "weights sum to {total}, expected exactly 1"
            )));
        }
        let homogeneous = maps
            .iter()
            .skip(1)
            .try_fold(true, |acc, m| -> Result<bool> {
                Ok(acc && m.ratio.cmp_numeric(&maps[0].ratio)? == std::cmp::Ordering::Equal)
            })?;
        Ok(Wifs {
            maps,
            weights,
            homogeneous,
            field,
        })
    }

    pub fn maps(&self) -> &[SimilarityMap] {
        &self.maps
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least 2 maps by construction
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_exact(&self) -> bool {
        self.field.is_exact()
    }

    /// The common contraction ratio of a homogeneous system.
    pub fn ratio(&self) -> Result<&Scalar> {
        if self.homogeneous {
            Ok(&self.maps[0].ratio)
        } else {
            Err(Error::Unsupported(
                "operation requires a homogeneous WIFS (all ratios equal); \
                 symbolic dimensions remain available for the general case"
                    .into(),
            ))
        }
    }

    /// |λ| of the homogeneous ratio as f64.
    pub fn ratio_f64(&self) -> Result<f64> {
        Ok(self.ratio()?.abs().to_float().0)
    }

    /// log₂(1/|λ|) for the homogeneous ratio.
    pub fn log2_inv_ratio(&self) -> Result<f64> {
        Ok(-self.ratio_f64()?.log2())
    }
}

/// Affine change of variables `x ↦ scale·x + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: Scalar,
    pub offset: Scalar,
}

impl AffineMap {
    pub fn identity() -> AffineMap {
        AffineMap {
            scale: Scalar::one(),
            offset: Scalar::zero(),
        }
    }

    pub fn apply(&self, x: &Scalar) -> Result<Scalar> {
        self.scale.try_mul(x)?.try_add(&self.offset)
    }

    pub fn is_identity(&self) -> bool {
        self.scale == Scalar::one() && self.offset == Scalar::zero()
    }
}

/// Symbolic dimension data at a fixed `q`: entropy over Lyapunov exponent,
/// the L^q similarity dimension `sdim_q = T(q)/(q−1)` where `T` solves
/// `Σ p_i^q |λ_i|^{−T} = 1`, and whether the `min(·,1)` clip was active.
#[derive(Clone, Debug, Serialize)]
pub struct DimensionReport {
    pub q: f64,
    /// Entropy / Lyapunov exponent.
    pub sdim: f64,
    /// `T(q)/(q−1)`.
    pub sdim_q: f64,
    /// Solution of `Σ p_i^q |λ_i|^{−T} = 1`.
    pub t_q: f64,
    /// `Σ p_i log₂(1/p_i)` in bits.
    pub entropy: f64,
    /// `Σ p_i log₂(1/|λ_i|)` in bits.
    pub lyapunov: f64,
    /// Whether `min(sdim_q, 1)` clipped.
    pub clipped: bool,
    /// `min(sdim_q, 1)`: the predicted L^q dimension under exponential
    /// separation.
    pub predicted_d: f64,
}

/// Symbolic dimensions of a valid WIFS at `q > 1`. Logarithms base 2.
pub fn similarity_dimensions(w: &Wifs, q: f64) -> Result<DimensionReport> {
    if !(q > 1.0) {
        return Err(Error::Domain(format!("q must exceed 1, got {q}")));
    }
    let ps: Vec<f64> = w
        .weights
        .iter()
        .map(|p| Scalar::Rational(p.clone()).to_float().0)
        .collect();
    let ls: Vec<f64> = w.maps.iter().map(|m| m.ratio.abs().to_float().0).collect();
    let entropy: f64 = ps.iter().map(|p| -p * p.log2()).sum();
    let lyapunov: f64 = ps.iter().zip(&ls).map(|(p, l)| -p * l.log2()).sum();
    let sdim = entropy / lyapunov;
    let t_q = if w.homogeneous {
        // Closed form: T = log₂ Σ p_i^q / log₂ λ.
        let sum_pq: f64 = ps.iter().map(|p| p.powf(q)).sum();
        sum_pq.log2() / ls[0].log2()
    } else {
        bisect_t(&ps, &ls, q)?
    };
    let sdim_q = t_q / (q - 1.0);
    let clipped = sdim_q > 1.0;
    Ok(DimensionReport {
        q,
        sdim,
        sdim_q,
        t_q,
        entropy,
        lyapunov,
        clipped,
        predicted_d: sdim_q.min(1.0),
    })
}

/// Residual of the defining equation at a trial `T`.
pub fn t_residual(w: &Wifs, q: f64, t: f64) -> f64 {
    let sum: f64 = w
        .weights
        .iter()
        .zip(&w.maps)
        .map(|(p, m)| {
            let pf = Scalar::Rational(p.clone()).to_float().0;
            let lf = m.ratio.abs().to_float().0;
            pf.powf(q) * lf.powf(-t)
        })
        .sum();
    sum - 1.0
}

/// Bisection for the general (non-homogeneous) `T(q)` on the bracket
/// `[0, 40]`; the map `T ↦ Σ p_i^q |λ_i|^{−T}` is strictly increasing.
fn bisect_t(ps: &[f64], ls: &[f64], q: f64) -> Result<f64> {
    let g = |t: f64| -> f64 {
        ps.iter()
            .zip(ls)
            .map(|(p, l)| p.powf(q) * l.powf(-t))
            .sum::<f64>()
            - 1.0
    };
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::Domain(
            "bisection bracket [0, 40] does not straddle the root of Σ p^q λ^{-T} = 1".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    if g(t).abs() > 1e-12 {
        return Err(Error::NonConvergence(format!(
            "T(q) bisection residual {} exceeds 1e-12",
            g(t)
        )));
    }
    Ok(t)
}

/// Exact attractor hull `[lo, hi]` when all ratios are positive
/// (`lo = min_i fp_i`, `hi = max_i fp_i` over the fixed points
/// `fp_i = t_i/(1−λ_i)`); a crude symmetric enclosure otherwise.
fn attractor_hull(w: &Wifs) -> Result<(Scalar, Scalar)> {
    let all_positive = w.maps.iter().all(|m| m.ratio.sign() > 0);
    if all_positive {
        let mut lo: Option<Scalar> = None;
        let mut hi: Option<Scalar> = None;
        for m in &w.maps {
            let one_minus = Scalar::one().try_sub(&m.ratio)?;
            let fp = m.translation.try_mul(&one_minus.recip_exact()?)?;
            lo = Some(match lo {
                None => fp.clone(),
                Some(cur) => {
                    if fp.cmp_numeric(&cur)? == std::cmp::Ordering::Less {
                        fp.clone()
                    } else {
                        cur
                    }
                }
            });
            hi = Some(match hi {
                None => fp,
                Some(cur) => {
                    if fp.cmp_numeric(&cur)? == std::cmp::Ordering::Greater {
                        fp
                    } else {
                        cur
                    }
                }
            });
        }
        Ok((lo.unwrap(), hi.unwrap()))
    } else {
        // |x| ≤ max|t| / (1 − max|λ|) for every attractor point.
        let mut max_t = Scalar::zero();
        let mut max_l = Scalar::zero();
        for m in &w.maps {
            let at = m.translation.abs();
            if at.cmp_numeric(&max_t)? == std::cmp::Ordering::Greater {
                max_t = at;
            }
            let al = m.ratio.abs();
            if al.cmp_numeric(&max_l)? == std::cmp::Ordering::Greater {
                max_l = al;
            }
        }
        let r = max_t.try_mul(&Scalar::one().try_sub(&max_l)?.recip_exact()?)?;
        Ok((r.neg(), r))
    }
}

/// Conjugate the system so its attractor lies inside `[0, 1−2^{-8}]`,
/// returning the conjugated WIFS and the affine change of variables.
/// Ratios and weights (hence all L^q dimensions) are unchanged. Systems
/// whose attractor hull already sits inside `[0, 1]` pass through with the
/// identity map.
pub fn normalize_to_unit(w: &Wifs) -> Result<(Wifs, AffineMap)> {
    let (lo, hi) = attractor_hull(w)?;
    let zero = Scalar::zero();
    let one = Scalar::one();
    if lo.cmp_numeric(&zero)? != std::cmp::Ordering::Less
        && hi.cmp_numeric(&one)? != std::cmp::Ordering::Greater
    {
        return Ok((w.clone(), AffineMap::identity()));
    }
    let width = hi.try_sub(&lo)?;
    // Smallest dyadic scale 2^{-k} with width·2^{-k} ≤ 255/256.
    let margin_cap = Scalar::rational(255, 256);
    let mut k = 0u32;
    let mut scale = Scalar::one();
    loop {
        let scaled = width.try_mul(&scale)?;
        if scaled.cmp_numeric(&margin_cap)? != std::cmp::Ordering::Greater {
            break;
        }
        k += 1;
        assert!(k < 4096, "normalize_to_unit: degenerate width");
        scale = Scalar::Rational(BigRational::new(
            BigInt::one(),
            BigInt::one() << k as usize,
        ));
    }
    let offset = scale.try_mul(&lo)?.neg();
    let g = AffineMap { scale, offset };
    let maps = w
        .maps
        .iter()
        .map(|m| -> Result<SimilarityMap> {
            // g∘f∘g⁻¹ keeps the ratio and sends t ↦ s·t + c(1−λ).
            let one_minus = Scalar::one().try_sub(&m.ratio)?;
            let t = g
                .scale
                .try_mul(&m.translation)?
                .try_add(&g.offset.try_mul(&one_minus)?)?;
            Ok(SimilarityMap {
                ratio: m.ratio.clone(),
                translation: t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Wifs::new(maps, w.weights.clone())?, g))
}

/// For a homogeneous system with `λ < 0`, return the squared system
/// `(f_i ∘ f_j, p_i p_j)` with ratio `λ² > 0` generating the same measure;
/// systems with `λ > 0` pass through unchanged.
pub fn square_if_negative(w: &Wifs) -> Result<Wifs> {
    let lambda = w.ratio()?.clone();
    if lambda.sign() > 0 {
        return Ok(w.clone());
    }
    let ratio = lambda.try_mul(&lambda)?;
    let mut maps = Vec::with_capacity(w.len() * w.len());
    let mut weights = Vec::with_capacity(w.len() * w.len());
    for (mi, pi) in w.maps.iter().zip(&w.weights) {
        for (mj, pj) in w.maps.iter().zip(&w.weights) {
            // f_i(f_j(x)) = λ²x + (t_i + λ t_j)
            let t = mi.translation.try_add(&lambda.try_mul(&mj.translation)?)?;
            maps.push(SimilarityMap {
                ratio: ratio.clone(),
                translation: t,
            });
            weights.push(pi * pj);
        }
    }
    Wifs::new(maps, weights)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Bernoulli convolution system `(λx, 1/2), (λx+1, 1/2)` for `λ ∈ (0,1)`.
pub fn bernoulli(lambda: Scalar) -> Result<Wifs> {
    if lambda.sign() <= 0 {
        return Err(Error::Validation("bernoulli preset needs λ ∈ (0,1)".into()));
    }
    Wifs::new(
        vec![
            SimilarityMap {
                ratio: lambda.clone(),
                translation: Scalar::zero(),
            },
            SimilarityMap {
                ratio: lambda,
                translation: Scalar::one(),
            },
        ],
        vec![big_rat(1, 2), big_rat(1, 2)],
    )
}

/// p-Cantor system: maps `(x+d)/p` over a proper digit subset
/// `D ⊊ {0,…,p−1}` with uniform weights. `p_cantor(3, &[0,2])` is the
/// middle-thirds Cantor measure.
pub fn p_cantor(p: u32, digits: &[u32]) -> Result<Wifs> {
    validate_digit_set(p, digits)?;
    let ratio = Scalar::rational(1, p as i64);
    let maps = digits
        .iter()
        .map(|&d| SimilarityMap {
            ratio: ratio.clone(),
            translation: Scalar::rational(d as i64, p as i64),
        })
        .collect();
    let uniform = big_rat(1, digits.len() as i64);
    Wifs::new(maps, vec![uniform; digits.len()])
}

/// Projection system for `Π_t(x,y) = x + ty` applied to the product of two
/// p-Cantor measures: the `|D|²` maps `(x + i + t·j)/p`, uniform weights.
pub fn projected_product(p: u32, digits: &[u32], t: &Scalar) -> Result<Wifs> {
    validate_digit_set(p, digits)?;
    let ratio = Scalar::rational(1, p as i64);
    let inv_p = Scalar::rational(1, p as i64);
    let mut maps = Vec::with_capacity(digits.len() * digits.len());
    for &i in digits {
        for &j in digits {
            let num =
                Scalar::from_int(i as i64).try_add(&t.try_mul(&Scalar::from_int(j as i64))?)?;
            maps.push(SimilarityMap {
                ratio: ratio.clone(),
                translation: num.try_mul(&inv_p)?,
            });
        }
    }
    let n = maps.len() as i64;
    Wifs::new(maps, vec![big_rat(1, n); n as usize])
}

fn validate_digit_set(p: u32, digits: &[u32]) -> Result<()> {
    if p < 2 {
        return Err(Error::Validation(format!("base p = {p} must be ≥ 2")));
    }
    if digits.len() < 2 {
        return Err(Error::Validation("digit set needs at least 2 digits".into()));
    }
    let mut seen = vec![false; p as usize];
    for &d in digits {
        if d >= p {
            return Err(Error::Validation(format!(
                "digit {d} out of range for base {p}"
            )));
        }
        if seen[d as usize] {
            return Err(Error::Validation(format!("duplicate digit {d}")));
        }
        seen[d as usize] = true;
    }
    if digits.len() as u32 == p {
        return Err(Error::Validation(
            "digit set must be a proper subset of {0,…,p−1}".into(),
        ));
    }
    Ok(())
}

/// Build a preset by name; `params` follow the JSON shorthand
/// `{"preset":"bernoulli","lambda":…}` etc.
pub fn preset(name: &str, params: &PresetParams) -> Result<Wifs> {
    match name {
        "bernoulli" => {
            let l = params
                .lambda
                .clone()
                .ok_or_else(|| Error::Validation("bernoulli preset needs lambda".into()))?;
            bernoulli(l)
        }
        "p_cantor" => {
            let p = params
                .p
                .ok_or_else(|| Error::Validation("p_cantor preset needs p".into()))?;
            let digits = params
                .digits
                .as_ref()
                .ok_or_else(|| Error::Validation("p_cantor preset needs digits".into()))?;
            p_cantor(p, digits)
        }
        "projected_product" => {
            let p = params
                .p
                .ok_or_else(|| Error::Validation("projected_product needs p".into()))?;
            let digits = params
                .digits
                .as_ref()
                .ok_or_else(|| Error::Validation("projected_product needs digits".into()))?;
            let t = params
                .t
                .clone()
                .ok_or_else(|| Error::Validation("projected_product needs t".into()))?;
            projected_product(p, digits, &t)
        }
        other => Err(Error::Validation(format!("unknown preset: {other}"))),
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PresetParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Scalar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digits: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Scalar>,
}

// ---------------------------------------------------------------------------
// JSON encoding: {"maps":[{"lambda":…,"t":…}],"weights":[…]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MapRepr {
    lambda: Scalar,
    t: Scalar,
}

#[derive(Serialize, Deserialize)]
struct WifsRepr {
    maps: Vec<MapRepr>,
    weights: Vec<Scalar>,
}

impl Serialize for Wifs {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = WifsRepr {
            maps: self
                .maps
                .iter()
                .map(|m| MapRepr {
                    lambda: m.ratio.clone(),
                    t: m.translation.clone(),
                })
                .collect(),
            weights: self
                .weights
                .iter()
                .map(|p| Scalar::Rational(p.clone()))
                .collect(),
        };
        repr.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Wifs {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = WifsRepr::deserialize(de)?;
        let maps = repr
            .maps
            .into_iter()
            .map(|m| SimilarityMap {
                ratio: m.lambda,
                translation: m.t,
            })
            .collect();
        let weights = repr
            .weights
            .into_iter()
            .map(|s| match s {
                Scalar::Rational(r) => Ok(r),
                other => Err(serde::de::Error::custom(format!(
                    "weights must be exact rationals, got {other}"
                ))),
            })
            .collect::<std::result::Result<Vec<_>, D::Error>>()?;
        Wifs::new(maps, weights).map_err(serde::de::Error::custom)
    }
}
