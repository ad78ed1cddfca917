//! Finite atomic measures and dyadic histograms.
//!
//! `DiscreteMeasure` holds finitely many weighted atoms with exact rational
//! masses; positions are exact scalars or (after demotion) floats. Atom
//! collapsing is mandatory at construction, so golden-ratio-type
//! coincidences keep the approximants `μ_n = Δ ∗ S_λΔ ∗ … ∗ S_{λ^{n-1}}Δ`
//! polynomially sized. `DyadicHistogram` is a level-`m` binning over the
//! half-open dyadic grid `[j·2^{-m}, (j+1)·2^{-m})`, with an invariant
//! fixed-point iteration for regimes where atom enumeration is infeasible.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write as IoWrite;

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

use crate::scalar::{big_rat, ratio_to_f64, Field, Scalar};
use crate::wifs::Wifs;
use crate::{Error, Result};

/// Default cap on projected atom counts for convolutions and `μ_n`.
pub const DEFAULT_ATOM_CAP: usize = 100_000_000;

/// Default guard bits for the invariant-histogram iteration.
pub const DEFAULT_GUARD_BITS: u32 = 4;

/// Hard memory cap: working level (m + guard bits) of the dense iteration.
pub const MAX_WORKING_LEVEL: u32 = 26;

// ---------------------------------------------------------------------------
// Compensated power sums, shared by measures, histograms and grid measures.
// ---------------------------------------------------------------------------

/// `x^q`, taking the exact integer-power path when `q` is a small integer.
pub fn q_pow(x: f64, q: f64) -> f64 {
    if q.fract() == 0.0 && (1.0..=64.0).contains(&q) {
        x.powi(q as i32)
    } else {
        x.powf(q)
    }
}

/// Exponent-sorted Kahan summation of nonnegative terms: masses span many
/// orders of magnitude and the small-mass tail must not be lost.
pub fn compensated_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_unstable_by(|a, b| a.total_cmp(b));
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// `Σ x_i^q` over positive masses with compensated summation.
pub fn q_power_sum_f64(masses: impl Iterator<Item = f64>, q: f64) -> f64 {
    compensated_sum(masses.map(|x| q_pow(x, q)).collect())
}

/// Entropy `Σ x log₂(1/x)` in bits.
pub fn entropy_bits_f64(masses: impl Iterator<Item = f64>) -> f64 {
    compensated_sum(masses.filter(|x| *x > 0.0).map(|x| -x * x.log2()).collect())
}

fn check_q_norm_exponent(q: f64) -> Result<()> {
    if q.is_infinite() && q > 0.0 {
        return Ok(());
    }
    if q > 1.0 && q.is_finite() {
        return Ok(());
    }
    Err(Error::Domain(format!(
        "q = {q} out of range: norms need q in (1, ∞]"
    )))
}

// ---------------------------------------------------------------------------
// DiscreteMeasure
// ---------------------------------------------------------------------------

/// Finitely supported probability measure with exact rational masses.
/// Atoms are kept sorted by position with no duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(Scalar, BigRational)>,
    field: Field,
}

impl DiscreteMeasure {
    /// Build from raw atoms: positions join into a common field (mixing
    /// exact and float demotes every position to float), duplicates collapse
    /// by exact equality (bit equality for floats), and the total mass must
    /// be exactly 1.
    pub fn from_atoms(atoms: Vec<(Scalar, BigRational)>) -> Result<DiscreteMeasure> {
        let m = Self::from_atoms_unnormalized(atoms)?;
        if !m.total_mass().is_one() {
            return Err(Error::Validation(format!(
                "total mass {} differs from 1",
                m.total_mass()
            )));
        }
        Ok(m)
    }

    fn from_atoms_unnormalized(atoms: Vec<(Scalar, BigRational)>) -> Result<DiscreteMeasure> {
        if atoms.is_empty() {
            return Err(Error::Validation("measure needs at least one atom".into()));
        }
        let mut field = Field::Rational;
        for (pos, mass) in &atoms {
            field = field.join(pos.field())?;
            if !mass.is_positive() {
                return Err(Error::Validation("atom masses must be positive".into()));
            }
        }
        let mut atoms: Vec<(Scalar, BigRational)> = if field == Field::Float {
            atoms
                .into_iter()
                .map(|(pos, mass)| (Scalar::Float(pos.to_float().0), mass))
                .collect()
        } else {
            atoms
        };
        atoms.sort_by(|a, b| {
            a.0.cmp_numeric(&b.0)
                .expect("positions share a field by construction")
        });
        // Mandatory collapsing of equal positions.
        let mut out: Vec<(Scalar, BigRational)> = Vec::with_capacity(atoms.len());
        for (pos, mass) in atoms {
            match out.last_mut() {
                Some((last, acc))
                    if last.cmp_numeric(&pos).expect("same field") == Ordering::Equal =>
                {
                    *acc += mass;
                }
                _ => out.push((pos, mass)),
            }
        }
        Ok(DiscreteMeasure { atoms: out, field })
    }

    /// Single unit atom at `pos`.
    pub fn dirac(pos: Scalar) -> Result<DiscreteMeasure> {
        Self::from_atoms(vec![(pos, BigRational::one())])
    }

    /// The translation distribution `Δ = Σ p_i δ_{t_i}` of a WIFS.
    pub fn delta_of(w: &Wifs) -> Result<DiscreteMeasure> {
        Self::from_atoms(
            w.maps()
                .iter()
                .zip(w.weights())
                .map(|(m, p)| (m.translation.clone(), p.clone()))
                .collect(),
        )
    }

    pub fn atoms(&self) -> &[(Scalar, BigRational)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_exact(&self) -> bool {
        self.field.is_exact()
    }

    pub fn total_mass(&self) -> BigRational {
        self.atoms.iter().map(|(_, m)| m).sum()
    }

    pub fn masses_f64(&self) -> Vec<f64> {
        self.atoms.iter().map(|(_, m)| ratio_to_f64(m).0).collect()
    }

    pub fn max_mass(&self) -> BigRational {
        self.atoms
            .iter()
            .map(|(_, m)| m)
            .max()
            .expect("nonempty")
            .clone()
    }

    /// Convolution: atoms `x+y` with masses `Σ a(x)b(y)`, collapsed exactly.
    pub fn convolve(&self, other: &DiscreteMeasure) -> Result<DiscreteMeasure> {
        self.convolve_with_cap(other, DEFAULT_ATOM_CAP)
    }

    pub fn convolve_with_cap(
        &self,
        other: &DiscreteMeasure,
        cap: usize,
    ) -> Result<DiscreteMeasure> {
        let pairs = self.len().checked_mul(other.len());
        match pairs {
            Some(p) if p <= cap => {}
            _ => {
                return Err(Error::Resource(format!(
                    "convolution would enumerate {} × {} atoms (cap {cap}); \
                     switch to the histogram pipeline for measures this large",
                    self.len(),
                    other.len()
                )))
            }
        }
        let mut atoms = Vec::with_capacity(self.len() * other.len());
        for (xa, ma) in &self.atoms {
            for (xb, mb) in &other.atoms {
                atoms.push((xa.try_add(xb)?, ma * mb));
            }
        }
        Self::from_atoms(atoms)
    }

    /// Pushforward under `x ↦ cx`, `c ≠ 0`. Masses are untouched.
    pub fn scale(&self, c: &Scalar) -> Result<DiscreteMeasure> {
        if c.is_zero() {
            return Err(Error::Domain("scale by zero is degenerate".into()));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|(x, m)| Ok((c.try_mul(x)?, m.clone())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_atoms(atoms)
    }

    /// Pushforward under `x ↦ x + c`.
    pub fn translate(&self, c: &Scalar) -> Result<DiscreteMeasure> {
        let atoms = self
            .atoms
            .iter()
            .map(|(x, m)| Ok((c.try_add(x)?, m.clone())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_atoms(atoms)
    }

    /// Normalized restriction to the half-open interval `[lo, hi)`.
    pub fn restrict_normalize(&self, lo: &Scalar, hi: &Scalar) -> Result<DiscreteMeasure> {
        let mut atoms = Vec::new();
        let mut total = BigRational::zero();
        for (x, m) in &self.atoms {
            let ge_lo = x.cmp_numeric(lo)? != Ordering::Less;
            let lt_hi = x.cmp_numeric(hi)? == Ordering::Less;
            if ge_lo && lt_hi {
                total += m;
                atoms.push((x.clone(), m.clone()));
            }
        }
        if atoms.is_empty() {
            return Err(Error::EmptyRestriction(format!(
                "measure gives zero mass to [{lo}, {hi})"
            )));
        }
        for (_, m) in &mut atoms {
            *m /= &total;
        }
        Self::from_atoms(atoms)
    }

    /// `‖·‖_q^q = Σ mass^q` for `q ∈ (1, ∞)` as a float.
    pub fn q_power_sum(&self, q: f64) -> Result<f64> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Domain(format!("q = {q} out of range (1, ∞)")));
        }
        Ok(q_power_sum_f64(self.masses_f64().into_iter(), q))
    }

    /// Exact `Σ mass^q` for integer `q ≥ 2`.
    pub fn q_power_sum_exact(&self, q: u32) -> Result<BigRational> {
        if q < 2 {
            return Err(Error::Domain("exact power sums need integer q ≥ 2".into()));
        }
        let mut s = BigRational::zero();
        for (_, m) in &self.atoms {
            s += num::pow::pow(m.clone(), q as usize);
        }
        Ok(s)
    }

    /// `‖·‖_q` for `q ∈ (1, ∞]`; `q = ∞` is the maximal mass.
    pub fn q_norm(&self, q: f64) -> Result<f64> {
        check_q_norm_exponent(q)?;
        if q.is_infinite() {
            return Ok(ratio_to_f64(&self.max_mass()).0);
        }
        Ok(self.q_power_sum(q)?.powf(1.0 / q))
    }

    /// Entropy `Σ m log₂(1/m)` in bits.
    pub fn entropy_bits(&self) -> f64 {
        entropy_bits_f64(self.masses_f64().into_iter())
    }

    /// Bin atoms into the level-`m` dyadic grid. The bin of an exact atom
    /// `x` is `⌊2^m x⌋` computed exactly; boundary atoms land in the right
    /// bin by the half-open convention. Float atoms within 4 ulps of a
    /// boundary are counted as boundary-ambiguous.
    pub fn dyadic_bin(&self, m: u32) -> Result<DyadicHistogram> {
        let two_m = Scalar::Rational(BigRational::from_integer(BigInt::one() << m as usize));
        let mut ambiguous = 0u64;
        if self.is_exact() {
            let mut bins: BTreeMap<i64, BigRational> = BTreeMap::new();
            for (x, mass) in &self.atoms {
                let j = two_m.try_mul(x)?.floor_exact()?;
                let j = j.to_i64().ok_or_else(|| {
                    Error::Resource("bin index exceeds i64 range".into())
                })?;
                *bins.entry(j).or_insert_with(BigRational::zero) += mass;
            }
            Ok(DyadicHistogram {
                level: m,
                bins: Bins::Exact(bins),
                boundary_ambiguous: 0,
            })
        } else {
            let mut bins: BTreeMap<i64, BigRational> = BTreeMap::new();
            let scale = (m as f64).exp2();
            for (x, mass) in &self.atoms {
                let t = x.to_float().0 * scale;
                let j = t.floor();
                let frac = t - j;
                let ulp_t = {
                    let a = t.abs().max(1.0);
                    f64::from_bits(a.to_bits() + 1) - a
                };
                if frac <= 4.0 * ulp_t || (1.0 - frac) <= 4.0 * ulp_t {
                    ambiguous += 1;
                }
                let j = j as i64;
                *bins.entry(j).or_insert_with(BigRational::zero) += mass;
            }
            Ok(DyadicHistogram {
                level: m,
                bins: Bins::Exact(bins),
                boundary_ambiguous: ambiguous,
            })
        }
    }
}

/// The n-fold approximant `μ_n = ∗_{j=0}^{n-1} S_{λ^j} Δ` of a homogeneous
/// exact WIFS, with collapsing after every convolution stage.
pub fn level_n_measure(w: &Wifs, n: u32) -> Result<DiscreteMeasure> {
    Ok(level_n_sequence(w, n)?.pop().expect("n ≥ 1"))
}

/// All approximants `μ_1, …, μ_n` (each built from the previous one).
pub fn level_n_sequence(w: &Wifs, n: u32) -> Result<Vec<DiscreteMeasure>> {
    if n < 1 {
        return Err(Error::Domain("level-n measures need n ≥ 1".into()));
    }
    if !w.is_exact() {
        return Err(Error::Unsupported(
            "level-n atom enumeration needs exact scalars; use the histogram pipeline".into(),
        ));
    }
    let lambda = w.ratio()?.clone();
    let delta = DiscreteMeasure::delta_of(w)?;
    let mut out = Vec::with_capacity(n as usize);
    let mut current = delta.clone();
    let mut lambda_pow = lambda.clone();
    out.push(current.clone());
    for _ in 1..n {
        let stage = delta.scale(&lambda_pow)?;
        current = current.convolve(&stage)?;
        lambda_pow = lambda_pow.try_mul(&lambda)?;
        out.push(current.clone());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// DyadicHistogram
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum Bins {
    Exact(BTreeMap<i64, BigRational>),
    Float(BTreeMap<i64, f64>),
}

/// Level-`m` binned measure on the grid `2^{-m}ℤ`: bin `j` is the half-open
/// interval `[j·2^{-m}, (j+1)·2^{-m})`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicHistogram {
    level: u32,
    bins: Bins,
    boundary_ambiguous: u64,
}

impl DyadicHistogram {
    pub fn from_exact_bins(level: u32, bins: BTreeMap<i64, BigRational>) -> Result<Self> {
        if bins.values().any(|m| !m.is_positive()) {
            return Err(Error::Validation("bin masses must be positive".into()));
        }
        Ok(DyadicHistogram {
            level,
            bins: Bins::Exact(bins),
            boundary_ambiguous: 0,
        })
    }

    pub fn from_float_bins(level: u32, bins: BTreeMap<i64, f64>) -> Result<Self> {
        if bins.values().any(|m| !(*m > 0.0)) {
            return Err(Error::Validation("bin masses must be positive".into()));
        }
        Ok(DyadicHistogram {
            level,
            bins: Bins::Float(bins),
            boundary_ambiguous: 0,
        })
    }

    /// Uniform mass over all `2^m` bins of `[0,1)`.
    pub fn uniform(level: u32) -> Result<Self> {
        if level > MAX_WORKING_LEVEL {
            return Err(Error::Resource(format!(
                "level {level} exceeds the memory cap {MAX_WORKING_LEVEL}"
            )));
        }
        let n = 1i64 << level;
        let mass = big_rat(1, n);
        Ok(DyadicHistogram {
            level,
            bins: Bins::Exact((0..n).map(|j| (j, mass.clone())).collect()),
            boundary_ambiguous: 0,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.bins, Bins::Exact(_))
    }

    pub fn num_bins(&self) -> usize {
        match &self.bins {
            Bins::Exact(b) => b.len(),
            Bins::Float(b) => b.len(),
        }
    }

    pub fn boundary_ambiguous(&self) -> u64 {
        self.boundary_ambiguous
    }

    pub fn exact_bins(&self) -> Option<&BTreeMap<i64, BigRational>> {
        match &self.bins {
            Bins::Exact(b) => Some(b),
            Bins::Float(_) => None,
        }
    }

    /// Bin indices with masses as floats, in ascending index order.
    pub fn bins_f64(&self) -> Vec<(i64, f64)> {
        match &self.bins {
            Bins::Exact(b) => b.iter().map(|(j, m)| (*j, ratio_to_f64(m).0)).collect(),
            Bins::Float(b) => b.iter().map(|(j, m)| (*j, *m)).collect(),
        }
    }

    pub fn masses_f64(&self) -> Vec<f64> {
        match &self.bins {
            Bins::Exact(b) => b.values().map(|m| ratio_to_f64(m).0).collect(),
            Bins::Float(b) => b.values().copied().collect(),
        }
    }

    pub fn total_mass_f64(&self) -> f64 {
        compensated_sum(self.masses_f64())
    }

    pub fn total_mass_exact(&self) -> Option<BigRational> {
        self.exact_bins().map(|b| b.values().sum())
    }

    pub fn max_mass_f64(&self) -> f64 {
        self.masses_f64().into_iter().fold(0.0, f64::max)
    }

    /// `Σ_J μ(J)^q` as a float.
    pub fn q_power_sum(&self, q: f64) -> Result<f64> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Domain(format!("q = {q} out of range (1, ∞)")));
        }
        Ok(q_power_sum_f64(self.masses_f64().into_iter(), q))
    }

    /// Exact `Σ_J μ(J)^q` for integer `q ≥ 2` on exact bins.
    pub fn q_power_sum_exact(&self, q: u32) -> Result<BigRational> {
        if q < 2 {
            return Err(Error::Domain("exact power sums need integer q ≥ 2".into()));
        }
        match &self.bins {
            Bins::Exact(b) => Ok(b
                .values()
                .map(|m| num::pow::pow(m.clone(), q as usize))
                .sum()),
            Bins::Float(_) => Err(Error::Domain(
                "exact power sum requested on a float histogram".into(),
            )),
        }
    }

    /// `‖·‖_q` for `q ∈ (1, ∞]`; `q = ∞` is the maximal bin mass.
    pub fn q_norm(&self, q: f64) -> Result<f64> {
        check_q_norm_exponent(q)?;
        if q.is_infinite() {
            return Ok(self.max_mass_f64());
        }
        Ok(self.q_power_sum(q)?.powf(1.0 / q))
    }

    pub fn entropy_bits(&self) -> f64 {
        entropy_bits_f64(self.masses_f64().into_iter())
    }

    /// Total variation distance `½ Σ |a_j − b_j|` between same-level
    /// histograms.
    pub fn tv_distance(&self, other: &DyadicHistogram) -> Result<f64> {
        if self.level != other.level {
            return Err(Error::Domain(format!(
                "level mismatch: {} vs {}",
                self.level, other.level
            )));
        }
        let a: BTreeMap<i64, f64> = self.bins_f64().into_iter().collect();
        let b: BTreeMap<i64, f64> = other.bins_f64().into_iter().collect();
        let mut diff = Vec::new();
        for (j, m) in &a {
            diff.push((m - b.get(j).copied().unwrap_or(0.0)).abs());
        }
        for (j, m) in &b {
            if !a.contains_key(j) {
                diff.push(m.abs());
            }
        }
        Ok(0.5 * compensated_sum(diff))
    }

    /// CSV export: columns `j, bin_left, mass`.
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,bin_left,mass")?;
        let w = (-(self.level as f64)).exp2();
        for (j, m) in self.bins_f64() {
            writeln!(out, "{},{},{}", j, j as f64 * w, m)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Invariant histogram iteration
// ---------------------------------------------------------------------------

/// Approximate `μ^{(m)}` by iterating the self-similarity operator
/// `ν ↦ bin_{m+g}(Σ_i p_i f_i ν)` from the uniform histogram at working
/// level `m+g` (guard bits `g`), downsampling at the end. Stops when
/// successive iterates differ by ≤ 1e−10 in total variation or after
/// `⌈(m+16)/log₂(1/λ)⌉` iterations.
pub fn invariant_histogram(w: &Wifs, m: u32) -> Result<DyadicHistogram> {
    invariant_histogram_with(w, m, DEFAULT_GUARD_BITS)
}

pub fn invariant_histogram_with(w: &Wifs, m: u32, guard_bits: u32) -> Result<DyadicHistogram> {
    let lambda = w.ratio()?.clone();
    if lambda.sign() <= 0 {
        return Err(Error::Unsupported(
            "invariant histogram needs λ > 0; square the system first".into(),
        ));
    }
    let working = m + guard_bits;
    if working > MAX_WORKING_LEVEL {
        return Err(Error::Resource(format!(
            "working level {working} = m + {guard_bits} guard bits exceeds the memory cap \
             {MAX_WORKING_LEVEL}; lower m or the guard bits, or use the atoms method"
        )));
    }
    // The iteration lives on [0,1): every map must keep the unit interval
    // invariant, i.e. t ≥ 0 and t + λ ≤ 1.
    let one = Scalar::one();
    for map in w.maps() {
        let t_ok = map.translation.sign() >= 0
            && map.translation.try_add(&lambda)?.cmp_numeric(&one)? != Ordering::Greater;
        if !t_ok {
            return Err(Error::Validation(
                "system is not normalized to [0,1): run normalize_to_unit first".into(),
            ));
        }
    }
    let size = 1usize << working;
    let lambda_f = w.ratio_f64()?;
    let maps_f: Vec<(f64, f64)> = w
        .maps()
        .iter()
        .zip(w.weights())
        .map(|(map, p)| {
            (
                map.translation.to_float().0,
                ratio_to_f64(p).0,
            )
        })
        .collect();
    let scale = (working as f64).exp2();
    let inv_scale = 1.0 / scale;
    let max_iters = (((m as f64) + 16.0) / -(lambda_f.log2())).ceil() as usize;

    let mut current = vec![1.0 / size as f64; size];
    let mut next = vec![0.0f64; size];
    let mut converged = false;
    for _ in 0..max_iters.max(1) {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (j, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let x = (j as f64 + 0.5) * inv_scale;
            for &(t, p) in &maps_f {
                let y = lambda_f * x + t;
                let idx = ((y * scale) as usize).min(size - 1);
                next[idx] += p * mass;
            }
        }
        let mut tv = 0.0f64;
        for (a, b) in current.iter().zip(next.iter()) {
            tv += (a - b).abs();
        }
        std::mem::swap(&mut current, &mut next);
        if 0.5 * tv <= 1e-10 {
            converged = true;
            break;
        }
    }
    let _ = converged; // the iteration cap alone already bounds the error by ~2^{-(m+16)}
    if current.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonConvergence(
            "invariant histogram iteration produced non-finite masses".into(),
        ));
    }
    // Downsample to level m (ascending order: deterministic sums).
    let mut bins: BTreeMap<i64, f64> = BTreeMap::new();
    for (j, &mass) in current.iter().enumerate() {
        if mass > 0.0 {
            *bins.entry((j >> guard_bits) as i64).or_insert(0.0) += mass;
        }
    }
    DyadicHistogram::from_float_bins(m, bins)
}
