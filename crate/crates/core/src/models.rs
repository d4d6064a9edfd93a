//! Model Hamiltonians, resonance sequences, conjugating generators and
//! closed-form predictions of normal-form coefficients.

use crate::bnf::{bnf_coefficient, normalize_to_order};
use crate::error::{Error, Result};
use crate::frequency::FrequencyVector;
use crate::scalar::{Backend, Scalar};
use crate::series::{ActionIndex, Monomial, PoissonSeries, SIGMA};
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "A3")]
    A3,
    #[serde(rename = "A3-tilde")]
    A3Tilde,
    #[serde(rename = "A4")]
    A4,
    #[serde(rename = "A4-tilde")]
    A4Tilde,
    #[serde(rename = "B")]
    B,
    #[serde(rename = "B-samesign")]
    BSameSign,
    #[serde(rename = "resonant-2dof")]
    Resonant2Dof,
    #[serde(rename = "saddle-2dof")]
    Saddle2Dof,
    #[serde(rename = "bare-saddle")]
    BareSaddle,
}

impl Family {
    pub fn dof(self) -> usize {
        match self {
            Family::A3 | Family::A3Tilde => 3,
            Family::A4 | Family::A4Tilde => 4,
            _ => 2,
        }
    }

    pub fn is_a_family(self) -> bool {
        matches!(self, Family::A3 | Family::A3Tilde | Family::A4 | Family::A4Tilde)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("family serializes");
        write!(f, "{}", s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceMode {
    L,
    R,
    B,
    #[serde(rename = "exact-resonant")]
    ExactResonant,
}

/// Desk-scale replacements for the astronomically small constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleProfile {
    /// Mode L keeps a convergent at index n when |gap| < 10^{-(n + gap_decades)}.
    pub gap_decades: i32,
    /// The action level 𝐈 fixed for I₃.
    pub action_level: f64,
    /// ε of the k̂ rule k̂ = ⌊(1+ε)l⌋.
    pub epsilon: f64,
    /// Escape must happen within slack × prediction (and not before prediction / slack).
    pub slack: f64,
    /// 𝐈·Σ_{j<n}|b_j| must stay below 𝐈^chi_exponent.
    pub chi_exponent: f64,
    /// The generator correction may move the start point by at most 𝐈^shift_exponent.
    pub shift_exponent: f64,
    /// Convergents scanned before giving up.
    pub max_convergents: usize,
}

impl Default for ScaleProfile {
    fn default() -> Self {
        ScaleProfile {
            gap_decades: 2,
            action_level: 1e-4,
            epsilon: 0.005,
            slack: 2.0,
            chi_exponent: 0.9,
            shift_exponent: 0.8,
            max_convergents: 200,
        }
    }
}

impl ScaleProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Profile(m));
        if !(self.action_level > 0.0 && self.action_level < 1.0) {
            return bad(format!("action_level {} must lie in (0,1)", self.action_level));
        }
        if self.gap_decades < 0 {
            return bad(format!("gap_decades {} must be >= 0", self.gap_decades));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.01) {
            return bad(format!("epsilon {} must lie in (0, 0.01)", self.epsilon));
        }
        if self.slack <= 1.0 {
            return bad(format!("slack {} must exceed 1", self.slack));
        }
        if !(0.0 < self.shift_exponent && self.shift_exponent < self.chi_exponent && self.chi_exponent < 1.0) {
            return bad("need 0 < shift_exponent < chi_exponent < 1".into());
        }
        Ok(())
    }

    pub fn gap_threshold(&self, n: usize) -> f64 {
        10f64.powi(-(n as i32 + self.gap_decades))
    }
}

/// Per-entry replacements (by position in the sequence).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntryOverride {
    pub position: usize,
    pub a: Option<String>,
    pub zeta: Option<String>,
    pub khat: Option<u32>,
    /// Replaces the computed gap kω₁ ± lω₂.
    pub gap: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceEntry {
    pub n: usize,
    pub k: u32,
    pub l: u32,
    /// kω₁ + lω₂ (kω₁ − lω₂ when ω₁ω₂ > 0).
    pub gap: Scalar,
    pub a: Scalar,
    /// a/gap; None on exact resonance.
    pub b: Option<Scalar>,
    pub zeta: Scalar,
    pub i4: Option<Scalar>,
    pub khat: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResonanceSequence {
    pub omega: FrequencyVector,
    pub mode: SequenceMode,
    pub profile: ScaleProfile,
    pub entries: Vec<SequenceEntry>,
}

/// Everything beyond ω, count and mode that shapes a sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceConstraints {
    pub first_index: usize,
    pub profile: ScaleProfile,
    pub overrides: Vec<EntryOverride>,
    /// Use these (k,l) instead of scanning convergents.
    pub pairs: Option<Vec<(u32, u32)>>,
}

fn same_sign(omega: &FrequencyVector) -> Result<bool> {
    if omega.dof() < 2 {
        return Err(Error::Model("resonance sequences need d >= 2".into()));
    }
    let (s1, s2) = (omega.values()[0].sign_re(), omega.values()[1].sign_re());
    if s1 == 0 || s2 == 0 {
        return Err(Error::Model("ω₁ and ω₂ must be nonzero".into()));
    }
    Ok(s1 == s2)
}

/// kω₁ + lω₂, or kω₁ − lω₂ for same-sign frequencies.
pub fn pair_gap(omega: &FrequencyVector, k: u32, l: u32) -> Result<Scalar> {
    let s = if same_sign(omega)? { -1 } else { 1 };
    let mut m = vec![0i64; omega.dof()];
    m[0] = k as i64;
    m[1] = s * l as i64;
    Ok(omega.pairing(&m))
}

/// Signed shift I4 = −(kω₁+lω₂)/k, so that k(ω₁+I4) + lω₂ = 0.
pub fn resonant_shift(omega: &FrequencyVector, k: u32, l: u32) -> Result<Scalar> {
    let gap = pair_gap(omega, k, l)?;
    Ok(-&(&gap / &Scalar::from_i64(k as i64, omega.backend())))
}

/// Convergents p/q of x > 0, as (q, p) = (k, l).
fn convergents(x: &Scalar, max: usize) -> Vec<(u32, u32)> {
    let backend = x.backend();
    let limit: u64 = match backend {
        Backend::Exact => u32::MAX as u64,
        Backend::Float(bits) => 1u64 << ((bits / 2).saturating_sub(8)).min(31),
    };
    let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
    let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
    let mut y = x.clone();
    let mut out = Vec::new();
    for _ in 0..max {
        let a = y.floor_re();
        let p = &a * &p1 + &p0;
        let q = &a * &q1 + &q0;
        match (q.to_u64(), p.to_u64()) {
            (Some(qq), Some(pp)) if qq <= limit && pp <= limit => out.push((qq as u32, pp as u32)),
            _ => break,
        }
        let frac = &y - &Scalar::real_rational(&num_rational::BigRational::from_integer(a), backend);
        if frac.is_zero() {
            break;
        }
        y = match frac.inv() {
            Ok(v) => v,
            Err(_) => break,
        };
        p0 = std::mem::replace(&mut p1, p);
        q0 = std::mem::replace(&mut q1, q);
    }
    out
}

fn default_coupling(n: usize, k: u32, l: u32, backend: Backend) -> Result<Scalar> {
    let e = -((n as i64) * (k as i64 + l as i64));
    Scalar::from_i64(e, backend).exp_real().map_err(|_| {
        Error::NotRepresentable(format!(
            "a_{n} = e^{e} on the exact backend; supply an override for entry {n}"
        ))
    })
}

pub fn resonance_sequence(
    omega: &FrequencyVector,
    count: usize,
    mode: SequenceMode,
    constraints: &SequenceConstraints,
) -> Result<ResonanceSequence> {
    constraints.profile.validate()?;
    let backend = omega.backend();
    let samesign = same_sign(omega)?;
    let profile = &constraints.profile;
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    if let Some(explicit) = &constraints.pairs {
        for &(k, l) in explicit.iter().take(count) {
            if k == 0 || l == 0 {
                return Err(Error::Model(format!("pair ({k},{l}) needs k, l >= 1")));
            }
            if mode == SequenceMode::ExactResonant && !pair_gap(omega, k, l)?.is_zero() {
                return Err(Error::Lattice(format!("({k},{l}) is not resonant")));
            }
            pairs.push((k, l));
        }
    } else if mode == SequenceMode::ExactResonant {
        let s = if samesign { -1 } else { 1 };
        let rel = omega
            .lattice()
            .iter()
            .find_map(|m| {
                let rest_zero = m[2..].iter().all(|&x| x == 0);
                let (k, l) = (m[0], s * m[1]);
                if !rest_zero {
                    None
                } else if k > 0 && l > 0 {
                    Some((k as u32, l as u32))
                } else if k < 0 && l < 0 {
                    Some((-k as u32, -l as u32))
                } else {
                    None
                }
            })
            .ok_or_else(|| Error::Lattice("no declared relation (k,l) with k,l >= 1".into()))?;
        pairs = (1..=count as u32).map(|m| (m * rel.0, m * rel.1)).collect();
    } else {
        if mode == SequenceMode::R && samesign {
            return Err(Error::Model("mode R needs ω₁ω₂ < 0".into()));
        }
        let ratio = &omega.values()[0] / &omega.values()[1];
        let x = if samesign { ratio } else { -&ratio };
        for (k, l) in convergents(&x, profile.max_convergents) {
            if pairs.len() == count {
                break;
            }
            if k == 0 || l == 0 || k + l <= 2 {
                continue;
            }
            if let Some(&(pk, pl)) = pairs.last() {
                if k + l <= pk + pl {
                    continue;
                }
            }
            let n = constraints.first_index + pairs.len();
            let gap = pair_gap(omega, k, l)?;
            if gap.is_zero() {
                continue;
            }
            let keep = match mode {
                SequenceMode::L => gap.abs_f64() < profile.gap_threshold(n),
                SequenceMode::B => gap.abs_f64() < 1.0 / k as f64,
                SequenceMode::R => gap.sign_re() < 0 && separated(k, l, &pairs),
                SequenceMode::ExactResonant => unreachable!(),
            };
            if keep {
                pairs.push((k, l));
            }
        }
    }
    if pairs.len() < count {
        return Err(Error::NotEnoughEntries { found: pairs.len(), wanted: count });
    }
    let mut entries = Vec::with_capacity(count);
    for (pos, &(k, l)) in pairs.iter().enumerate() {
        let n = constraints.first_index + pos;
        let ov = constraints.overrides.iter().find(|o| o.position == pos);
        let gap = match ov.and_then(|o| o.gap.as_deref()) {
            Some(t) => Scalar::parse_real(t, backend)?,
            None => pair_gap(omega, k, l)?,
        };
        let a = match ov.and_then(|o| o.a.as_deref()) {
            Some(t) => Scalar::parse_real(t, backend)?,
            None => default_coupling(n, k, l, backend)?,
        };
        let zeta = match ov.and_then(|o| o.zeta.as_deref()) {
            Some(t) => Scalar::parse_real(t, backend)?,
            None => Scalar::one(backend),
        };
        let b = (!gap.is_zero()).then(|| &a / &gap);
        let i4 = match mode {
            SequenceMode::R => Some(resonant_shift(omega, k, l)?),
            _ => None,
        };
        let khat = match (mode, ov.and_then(|o| o.khat)) {
            (_, Some(kh)) => Some(kh),
            (SequenceMode::B, None) => Some(((1.0 + profile.epsilon) * l as f64).floor() as u32),
            _ => None,
        };
        if let Some(kh) = khat {
            if kh < l || kh >= k {
                return Err(Error::Model(format!("k̂ = {kh} must satisfy l <= k̂ < k for ({k},{l})")));
            }
        }
        entries.push(SequenceEntry { n, k, l, gap, a, b, zeta, i4, khat });
    }
    Ok(ResonanceSequence { omega: omega.clone(), mode, profile: profile.clone(), entries })
}

/// No pair (k′,l′) with 0 < k′+l′ below k+l is resonant with (ω₁+I4)
/// where k(ω₁+I4) + lω₂ = 0; decided exactly as l′k ≠ k′l.
fn separated(k: u32, l: u32, _previous: &[(u32, u32)]) -> bool {
    for s in 1..(k + l) {
        for kp in 0..=s {
            let lp = s - kp;
            if lp as u64 * k as u64 == kp as u64 * l as u64 {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub sequence: ResonanceSequence,
    /// Number of coupling terms (leading entries of the sequence) included.
    pub terms: usize,
    /// Truncation degree of the built series.
    pub order: usize,
    /// Overrides the entry's a for the 2-dof saddles.
    pub coupling: Option<Scalar>,
    /// (pair index, cap) restrictions on u_j + v_j.
    pub pair_caps: Vec<(usize, usize)>,
}

impl ModelSpec {
    pub fn new(family: Family, sequence: ResonanceSequence, terms: usize, order: usize) -> ModelSpec {
        ModelSpec { family, sequence, terms, order, coupling: None, pair_caps: Vec::new() }
    }

    pub fn omega(&self) -> &FrequencyVector {
        &self.sequence.omega
    }

    pub fn backend(&self) -> Backend {
        self.sequence.omega.backend()
    }

    pub fn entry(&self, j: usize) -> Result<&SequenceEntry> {
        self.sequence
            .entries
            .get(j)
            .ok_or_else(|| Error::Model(format!("sequence has no entry at position {j}")))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.omega().dof();
        if d != self.family.dof() {
            return Err(Error::Model(format!("family {} needs d = {}, got d = {d}", self.family, self.family.dof())));
        }
        if self.terms > self.sequence.entries.len() {
            return Err(Error::Model(format!(
                "{} coupling terms requested but the sequence has {} entries",
                self.terms,
                self.sequence.entries.len()
            )));
        }
        let s = &self.omega().values()[0] * &self.omega().values()[1];
        match self.family {
            Family::BSameSign if s.sign_re() <= 0 => {
                return Err(Error::Model("B-samesign needs ω₁ω₂ > 0".into()))
            }
            Family::A3 | Family::A3Tilde | Family::A4 | Family::A4Tilde | Family::B if s.sign_re() >= 0 => {
                return Err(Error::Model(format!("family {} needs ω₁ω₂ < 0", self.family)))
            }
            Family::Resonant2Dof => {
                let e = self.entry(0)?;
                if !e.gap.is_zero() || !self.omega().in_lattice(&[e.k as i64, e.l as i64]) {
                    return Err(Error::Lattice(format!("resonant-2dof needs the declared relation ({},{})", e.k, e.l)));
                }
            }
            Family::Saddle2Dof | Family::BareSaddle => {
                self.entry(0)?;
            }
            _ => {}
        }
        for &(j, _) in &self.pair_caps {
            if j >= d {
                return Err(Error::Model(format!("pair cap on variable {} beyond d = {d}", j + 1)));
            }
        }
        Ok(())
    }
}

fn scal(n: i64, b: Backend) -> Scalar {
    Scalar::from_i64(n, b)
}

fn action_mono(d: usize, exps: &[(usize, u16)]) -> Monomial {
    let mut m = vec![0u16; d];
    for &(j, e) in exps {
        m[j] += e;
    }
    Monomial::action(&m)
}

/// c·(ξ₁^kξ₂^l ± η₁^kη₂^l), or with (ξ₁^kη₂^l ± η₁^kξ₂^l) when `samesign`,
/// times Π I_j^{e_j} for the listed extra action factors.
fn saddle_terms(
    d: usize,
    k: u32,
    l: u32,
    samesign: bool,
    odd: bool,
    coef: &Scalar,
    factor: &[(usize, u16)],
) -> Vec<(Monomial, Scalar)> {
    let base = action_mono(d, factor);
    let (mut u1, mut v1) = (vec![0u16; d], vec![0u16; d]);
    u1[0] = k as u16;
    if samesign {
        v1[1] = l as u16;
    } else {
        u1[1] = l as u16;
    }
    let m1 = Monomial::new(&u1, &v1).mul(&base);
    let m2 = Monomial::new(&v1, &u1).mul(&base);
    let c2 = if odd { -coef } else { coef.clone() };
    vec![(m1, coef.clone()), (m2, c2)]
}

/// c·F_{k,l} = c(ξ₁^kξ₂^l + η₁^kη₂^l) in the first two pairs of a d-dof series.
pub fn saddle_series(d: usize, order: usize, k: u32, l: u32, coef: &Scalar) -> Result<PoissonSeries> {
    if d < 2 {
        return Err(Error::Dimension { expected: 2, got: d });
    }
    PoissonSeries::from_terms(d, order, coef.backend(), saddle_terms(d, k, l, false, false, coef, &[]))
}

/// The integrable part H_ω of a family (full degree, no truncation).
fn integrable_terms(spec: &ModelSpec) -> Vec<(Monomial, Scalar)> {
    let w = spec.omega().values();
    let d = w.len();
    let b = spec.backend();
    let mut t: Vec<(Monomial, Scalar)> = (0..d).map(|j| (action_mono(d, &[(j, 1)]), w[j].clone())).collect();
    let one = scal(1, b);
    match spec.family {
        Family::A3Tilde => {
            t.push((action_mono(d, &[(2, 3), (0, 1)]), one.clone()));
            t.push((action_mono(d, &[(2, 4), (1, 1)]), one));
        }
        Family::A4 => t.push((action_mono(d, &[(3, 1), (0, 1)]), one)),
        Family::A4Tilde => {
            t.push((action_mono(d, &[(3, 1), (0, 1)]), one.clone()));
            t.push((action_mono(d, &[(3, 2), (1, 1)]), one.clone()));
            t.push((action_mono(d, &[(3, 3), (2, 1)]), one));
        }
        Family::B | Family::BSameSign => t.push((action_mono(d, &[(1, 1), (0, 1)]), one)),
        Family::BareSaddle => t.clear(),
        _ => {}
    }
    t
}

/// The coupling terms of the model, one group per included sequence entry.
fn coupling_terms(spec: &ModelSpec) -> Result<Vec<(usize, Vec<(Monomial, Scalar)>)>> {
    let d = spec.omega().dof();
    let mut out = Vec::new();
    let count = match spec.family {
        Family::Resonant2Dof | Family::Saddle2Dof | Family::BareSaddle => 1.min(spec.terms.max(1)),
        _ => spec.terms,
    };
    for j in 0..count {
        let e = spec.entry(j)?;
        let terms = match spec.family {
            Family::A3 | Family::A3Tilde | Family::A4 | Family::A4Tilde => {
                saddle_terms(d, e.k, e.l, false, false, &e.a, &[(2, 1)])
            }
            Family::B => saddle_terms(d, e.k, e.l, false, false, &(&e.zeta * &e.a), &[]),
            Family::BSameSign => saddle_terms(d, e.k, e.l, true, false, &(&e.zeta * &e.a), &[]),
            Family::Resonant2Dof | Family::Saddle2Dof => {
                let a = spec.coupling.clone().unwrap_or_else(|| e.a.clone());
                saddle_terms(d, e.k, e.l, false, false, &a, &[])
            }
            Family::BareSaddle => {
                let a = spec.coupling.clone().unwrap_or_else(|| scal(1, spec.backend()));
                saddle_terms(d, e.k, e.l, false, false, &a, &[])
            }
        };
        out.push((j, terms));
    }
    Ok(out)
}

fn apply_caps(s: PoissonSeries, caps: &[(usize, usize)]) -> PoissonSeries {
    caps.iter().fold(s, |acc, &(j, c)| acc.with_pair_cap(j, c))
}

pub fn build_model(spec: &ModelSpec) -> Result<PoissonSeries> {
    spec.validate()?;
    let d = spec.omega().dof();
    let b = spec.backend();
    let mut too_high = Vec::new();
    let mut all = Vec::new();
    for (m, c) in integrable_terms(spec) {
        if m.degree() > spec.order {
            too_high.push(format!("{m} (degree {})", m.degree()));
        }
        all.push((m, c));
    }
    for (j, group) in coupling_terms(spec)? {
        for (m, c) in group {
            if m.degree() > spec.order {
                too_high.push(format!("coupling {j}: {m} (degree {})", m.degree()));
            }
            all.push((m, c));
        }
    }
    if !too_high.is_empty() {
        return Err(Error::CouplingDegree { order: spec.order, terms: too_high.join(", ") });
    }
    let series = PoissonSeries::from_terms(d, spec.order, b, all)?;
    Ok(apply_caps(series, &spec.pair_caps))
}

/// The integrable part alone (couplings zeroed).
pub fn integrable_part(spec: &ModelSpec) -> Result<PoissonSeries> {
    spec.validate()?;
    let s = PoissonSeries::from_terms(spec.omega().dof(), spec.order, spec.backend(), integrable_terms(spec))?;
    Ok(apply_caps(s, &spec.pair_caps))
}

/// Which closed form to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormKind {
    Gamma,
    I3sqSeries,
    Order2Pattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignCaveat {
    /// Sign and magnitude agree with the normalization engine.
    Validated,
    /// Only the magnitude is asserted; the engine reports the opposite sign.
    MagnitudeOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormValue {
    pub index: ActionIndex,
    pub value: Scalar,
    pub caveat: SignCaveat,
}

/// The two order-two coefficients −a²k²/D at I₁^{k−1}I₂^l and −a²l²/D at I₁^kI₂^{l−1}
/// (as exponent pairs on I₁, I₂), with D the gap. k and l must fit in u16.
pub fn saddle_pair_coefficients(k: u32, l: u32, a: &Scalar, gap: &Scalar) -> [((u16, u16), Scalar); 2] {
    let b = a.backend();
    let a2 = a * a;
    let c1 = -&(&(&a2 * &scal(k as i64 * k as i64, b)) / gap);
    let c2 = -&(&(&a2 * &scal(l as i64 * l as i64, b)) / gap);
    let e = |x: u32| u16::try_from(x).expect("exponent fits u16");
    [((e(k - 1), e(l)), c1), ((e(k), e(l - 1)), c2)]
}

/// γ = (−1)^{k̂−l} a² k (k/D)^{k̂−l+1}.
pub fn gamma_closed_form(k: u32, l: u32, khat: u32, a: &Scalar, gap: &Scalar) -> Scalar {
    let b = a.backend();
    let p = khat - l;
    let ratio = &scal(k as i64, b) / gap;
    let mut v = &(&(a * a) * &scal(k as i64, b)) * &ratio.powi(p + 1);
    if p % 2 == 1 {
        v = -&v;
    }
    v
}

pub fn closed_form_coefficients(spec: &ModelSpec, which: ClosedFormKind, target: usize) -> Result<Vec<ClosedFormValue>> {
    spec.validate()?;
    let e = spec.entry(target)?;
    let d = spec.omega().dof();
    let idx = |i1: u16, i2: u16, i3: u16| {
        let mut m = vec![0u16; d];
        m[0] = i1;
        m[1] = i2;
        if d > 2 {
            m[2] = i3;
        }
        ActionIndex(m)
    };
    if e.gap.is_zero() {
        return Err(Error::ZeroDivisor(format!("entry {target} is exactly resonant")));
    }
    if e.k > u16::MAX as u32 || e.l > u16::MAX as u32 {
        return Err(Error::Target(format!("({}, {}) exceeds the action-index exponent range", e.k, e.l)));
    }
    match which {
        ClosedFormKind::Gamma => {
            if spec.family != Family::B {
                return Err(Error::Target(format!("gamma is defined for family B, not {}", spec.family)));
            }
            let khat = e.khat.ok_or_else(|| Error::Target("entry has no k̂".into()))?;
            Ok(vec![ClosedFormValue {
                index: idx((e.k - 1) as u16, khat as u16, 0),
                value: gamma_closed_form(e.k, e.l, khat, &e.a, &e.gap),
                caveat: SignCaveat::MagnitudeOnly,
            }])
        }
        ClosedFormKind::I3sqSeries => {
            if !matches!(spec.family, Family::A3 | Family::A3Tilde) {
                return Err(Error::Target(format!("i3sq-series is defined for A3 / A3-tilde, not {}", spec.family)));
            }
            Ok(saddle_pair_coefficients(e.k, e.l, &e.a, &e.gap)
                .into_iter()
                .map(|((i1, i2), value)| ClosedFormValue { index: idx(i1, i2, 2), value, caveat: SignCaveat::Validated })
                .collect())
        }
        ClosedFormKind::Order2Pattern => {
            if spec.family != Family::Saddle2Dof {
                return Err(Error::Target(format!("order2-pattern is defined for saddle-2dof, not {}", spec.family)));
            }
            let a = spec.coupling.clone().unwrap_or_else(|| e.a.clone());
            Ok(saddle_pair_coefficients(e.k, e.l, &a, &e.gap)
                .into_iter()
                .map(|((i1, i2), value)| ClosedFormValue { index: idx(i1, i2, 0), value, caveat: SignCaveat::Validated })
                .collect())
        }
    }
}

/// Options for generator_chi.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChiOptions {
    /// Expansion order M of the pole factor in I₂ (B families) or I₄ (A4 families).
    pub expansion_order: usize,
    /// Fix I₄ at this value for A4 families instead of expanding.
    pub i4: Option<Scalar>,
}

/// Σ_{m≤M} (−k)^m X^m / D^{m+1}: truncated expansion of 1/(D + kX) in the action of pair `var`.
pub fn pole_expansion(d: usize, order: usize, var: usize, k: u32, gap: &Scalar, m_max: usize) -> Result<PoissonSeries> {
    if gap.is_zero() {
        return Err(Error::ZeroDivisor("pole expansion with D = 0".into()));
    }
    let b = gap.backend();
    let inv = gap.inv()?;
    let mut terms = Vec::new();
    let mut c = inv.clone();
    for m in 0..=m_max {
        terms.push((action_mono(d, &[(var, m as u16)]), c.clone()));
        c = &(&c * &scal(-(k as i64), b)) * &inv;
    }
    PoissonSeries::from_terms(d, order, b, terms)
}

/// The conjugating generator of entry j, convention-adjusted by σ so that
/// {H_ω, χ_j} = −a_j I₃ F_j (A families) and {H_ω, χ_n} = −ζF̃ − ζ l I₁ F̃ U (B family).
pub fn generator_chi(spec: &ModelSpec, j: usize, order: usize, opts: &ChiOptions) -> Result<PoissonSeries> {
    spec.validate()?;
    let e = spec.entry(j)?;
    let d = spec.omega().dof();
    let b = spec.backend();
    // −iσ
    let unit = Scalar::i(b).mul_int(-SIGMA);
    let samesign = spec.family == Family::BSameSign;
    let factor: &[(usize, u16)] = if spec.family.is_a_family() { &[(2, 1)] } else { &[] };
    let amp = match spec.family {
        Family::B | Family::BSameSign => &e.zeta * &e.a,
        Family::Resonant2Dof | Family::Saddle2Dof => spec.coupling.clone().unwrap_or_else(|| e.a.clone()),
        Family::BareSaddle => spec.coupling.clone().unwrap_or_else(|| scal(1, b)),
        _ => e.a.clone(),
    };
    let odd = PoissonSeries::from_terms(d, order, b, saddle_terms(d, e.k, e.l, samesign, true, &amp, factor))?;
    let odd = odd.scale(&unit)?;
    let pole_var = match spec.family {
        Family::B | Family::BSameSign => Some(1),
        Family::A4 | Family::A4Tilde if opts.i4.is_none() => Some(3),
        _ => None,
    };
    let gap = match (spec.family, &opts.i4) {
        (Family::A4 | Family::A4Tilde, Some(i4)) => &e.gap + &(i4 * &scal(e.k as i64, b)),
        _ => e.gap.clone(),
    };
    if gap.is_zero() {
        return Err(Error::ZeroDivisor(format!("generator of entry {j}: kω₁+lω₂ = 0")));
    }
    let chi = match pole_var {
        Some(var) => {
            let u = pole_expansion(d, order, var, e.k, &gap, opts.expansion_order)?;
            odd.mul(&u, order)?
        }
        None => odd.scale(&gap.inv()?)?,
    };
    Ok(apply_caps(chi, &spec.pair_caps))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZetaChoice {
    pub zeta: Scalar,
    /// Γ(ζ) = c0 + c1 ζ + c2 ζ².
    pub coefficients: [Scalar; 3],
    pub gamma_at_choice: Scalar,
    pub index: ActionIndex,
}

/// Γ_n(ζ) for one value of ζ_n: coefficient of I₁^{k−1}I₂^{k̂} in the normal form.
pub fn gamma_of_zeta(spec: &ModelSpec, n: usize, zeta: &Scalar) -> Result<(ActionIndex, Scalar)> {
    if spec.family != Family::B {
        return Err(Error::Target("Γ(ζ) is defined for family B".into()));
    }
    let mut s = spec.clone();
    s.terms = s.terms.max(n + 1);
    let e = s.sequence.entries.get_mut(n).ok_or_else(|| Error::Model(format!("no entry {n}")))?;
    e.zeta = zeta.clone();
    let khat = e.khat.ok_or_else(|| Error::Target("entry has no k̂".into()))?;
    let idx = ActionIndex::new(&[(e.k - 1) as u16, khat as u16]);
    let weight = idx.weight();
    s.order = s.order.max(2 * weight);
    let h = build_model(&s)?;
    let r = normalize_to_order(&h, s.omega(), weight)?;
    Ok((idx.clone(), bnf_coefficient(&r, &idx)?))
}

/// Fit Γ(ζ) through ζ ∈ {0, 1/2, 1} and pick ζ ∈ [0,1] maximizing |Γ|.
pub fn choose_zeta(spec: &ModelSpec, n: usize) -> Result<ZetaChoice> {
    let b = spec.backend();
    let half = Scalar::ratio(1, 2, b);
    let (idx, g0) = gamma_of_zeta(spec, n, &Scalar::zero(b))?;
    let (_, gh) = gamma_of_zeta(spec, n, &half)?;
    let (_, g1) = gamma_of_zeta(spec, n, &Scalar::one(b))?;
    // c2 = 2(g1 − 2gh + g0), c1 = g1 − g0 − c2
    let c0 = g0.clone();
    let c2 = (&(&g1 - &gh.mul_int(2)) + &g0).mul_int(2);
    let c1 = &(&g1 - &g0) - &c2;
    let eval = |z: &Scalar| &(&c0 + &(&c1 * z)) + &(&c2 * &(z * z));
    let mut candidates = vec![Scalar::zero(b), Scalar::one(b)];
    if !c2.is_zero() {
        let vertex = -&(&c1 / &c2.mul_int(2));
        if vertex.sign_re() > 0 && (&Scalar::one(b) - &vertex).sign_re() > 0 {
            candidates.push(vertex);
        }
    }
    let mut best = candidates[0].clone();
    let mut best_val = eval(&best);
    for z in &candidates[1..] {
        let v = eval(z);
        if v.ln_abs() > best_val.ln_abs() {
            best = z.clone();
            best_val = v;
        }
    }
    Ok(ZetaChoice { zeta: best, coefficients: [c0, c1, c2], gamma_at_choice: best_val, index: idx })
}

/// Lower bound on ln|γ_n|/k_n implied by |kω₁+lω₂| < 1/k, k̂ − l ≥ ⌊εl⌋ and a_n = e^{−n(k+l)},
/// with l/k = r and ln k = ln_k. Returns (bound, bound ≥ n), the latter being |γ_n| ≥ e^{n k_n}.
pub fn gamma_growth_certificate(n: usize, ln_k: f64, r: f64, epsilon: f64) -> (f64, bool) {
    // ln|γ| ≥ −2n(k+l) + ln k + 2(k̂−l+1) ln k ≥ k(−2n(1+r) + 2εr ln k)
    let bound = -2.0 * n as f64 * (1.0 + r) + 2.0 * epsilon * r * ln_k;
    (bound, bound >= n as f64)
}

/// Exact integer floor helper for callers deriving k̂ from rational ε.
pub fn khat_rule(l: u32, epsilon: f64) -> u32 {
    ((1.0 + epsilon) * l as f64).floor() as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frequency::frequency_pairing;

    const E: Backend = Backend::Exact;
    const F: Backend = Backend::Float(256);

    fn omega_b() -> FrequencyVector {
        FrequencyVector::new(vec![scal(1, E), Scalar::ratio(-21, 10, E)]).unwrap()
    }

    fn one_override(positions: usize) -> SequenceConstraints {
        SequenceConstraints {
            overrides: (0..positions).map(|p| EntryOverride { position: p, a: Some("1".into()), ..Default::default() }).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn sqrt2_convergents() {
        let w = FrequencyVector::new(vec![scal(1, F), Scalar::parse_real("-sqrt(2)", F).unwrap()]).unwrap();
        let c = SequenceConstraints::default();
        let s = resonance_sequence(&w, 3, SequenceMode::B, &c).unwrap();
        let kl: Vec<(u32, u32)> = s.entries.iter().map(|e| (e.k, e.l)).collect();
        assert_eq!(kl, [(3, 2), (7, 5), (17, 12)]);
        // Independent oracle: gaps k − l√2 from f64 arithmetic.
        for e in &s.entries {
            let g = e.k as f64 - e.l as f64 * std::f64::consts::SQRT_2;
            assert!((e.gap.re_f64() - g).abs() < 1e-14);
        }
        assert!((s.entries[0].gap.abs_f64() - 0.171573).abs() < 1e-6);
        assert!((s.entries[1].gap.abs_f64() - 0.0710678).abs() < 1e-7);
        assert!((s.entries[2].gap.abs_f64() - 0.0294373).abs() < 1e-7);
    }

    #[test]
    fn mode_l_threshold_rejects_weak_gaps() {
        let w = FrequencyVector::new(vec![scal(1, F), Scalar::parse_real("-sqrt(2)", F).unwrap()]).unwrap();
        let few = SequenceConstraints { profile: ScaleProfile { max_convergents: 6, ..Default::default() }, ..Default::default() };
        let err = resonance_sequence(&w, 3, SequenceMode::L, &few).unwrap_err();
        assert!(matches!(err, Error::NotEnoughEntries { wanted: 3, .. }));
        let s = resonance_sequence(&w, 3, SequenceMode::L, &SequenceConstraints::default()).unwrap();
        for e in &s.entries {
            assert!(e.gap.abs_f64() < s.profile.gap_threshold(e.n));
        }
    }

    #[test]
    fn mode_l_finds_a_liouville_like_gap() {
        let w = FrequencyVector::new(vec![scal(1, F), Scalar::parse_real("-1999999999999/1000000000000", F).unwrap(), scal(1, F)]).unwrap();
        let c = SequenceConstraints { first_index: 1, ..Default::default() };
        let s = resonance_sequence(&w, 1, SequenceMode::L, &c).unwrap();
        assert_eq!((s.entries[0].k, s.entries[0].l), (2, 1));
        assert!((s.entries[0].gap.re_f64() - 1e-12).abs() < 1e-24);
        assert!((s.entries[0].a.re_f64() - (-3f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn exact_resonant_multiples() {
        let w = FrequencyVector::with_lattice(vec![scal(2, E), scal(-1, E)], vec![vec![1, 2]]).unwrap();
        let s = resonance_sequence(&w, 3, SequenceMode::ExactResonant, &one_override(3)).unwrap();
        let kl: Vec<(u32, u32)> = s.entries.iter().map(|e| (e.k, e.l)).collect();
        assert_eq!(kl, [(1, 2), (2, 4), (3, 6)]);
        assert!(s.entries.iter().all(|e| e.gap.is_zero() && e.b.is_none()));
    }

    #[test]
    fn mode_r_shift() {
        let w = FrequencyVector::new(vec![scal(1, F), Scalar::parse_real("-sqrt(2)", F).unwrap(), scal(1, F), scal(1, F)]).unwrap();
        let s = resonance_sequence(&w, 2, SequenceMode::R, &SequenceConstraints::default()).unwrap();
        assert_eq!((s.entries[0].k, s.entries[0].l), (7, 5));
        for e in &s.entries {
            let i4 = e.i4.clone().unwrap();
            assert!(i4.sign_re() > 0);
            let expect = (e.l as f64 * std::f64::consts::SQRT_2 - e.k as f64) / e.k as f64;
            assert!((i4.re_f64() - expect).abs() < 1e-15);
        }
        // (3,2): |3 − 2√2|/3 and the resonance identity with the signed shift.
        let s32 = resonant_shift(&w, 3, 2).unwrap();
        assert!((s32.abs_f64() - 0.0571910).abs() < 1e-7);
        let ident = &(&(&w.values()[0] + &s32) * &scal(3, F)) + &w.values()[1].mul_int(2);
        assert!(ident.is_zero() || ident.ln_abs() < -160.0);
        let we = FrequencyVector::new(vec![scal(1, E), Scalar::ratio(-7, 5, E)]).unwrap();
        let sh = resonant_shift(&we, 3, 2).unwrap();
        assert!((&(&(&we.values()[0] + &sh) * &scal(3, E)) + &we.values()[1].mul_int(2)).is_zero());
    }

    #[test]
    fn bare_saddle_shape() {
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &one_override(1)).unwrap();
        let spec = ModelSpec::new(Family::BareSaddle, seq, 1, 3);
        let h = build_model(&spec).unwrap();
        assert_eq!(h.len(), 2);
        assert!(h.is_real());
        assert_eq!(h.coefficient(&Monomial::new(&[2, 1], &[0, 0])), scal(1, E));
        assert_eq!(h.coefficient(&Monomial::new(&[0, 0], &[2, 1])), scal(1, E));
    }

    fn a3_spec(order: usize) -> ModelSpec {
        let w = FrequencyVector::new(vec![scal(1, E), Scalar::ratio(-21, 10, E), Scalar::ratio(1, 2, E)]).unwrap();
        let seq = resonance_sequence(&w, 1, SequenceMode::B, &one_override(1)).unwrap();
        ModelSpec::new(Family::A3, seq, 1, order)
    }

    #[test]
    fn a3_contains_coupled_monomial_and_commutes_with_i3() {
        let h = build_model(&a3_spec(6)).unwrap();
        assert_eq!(h.coefficient(&Monomial::new(&[2, 1, 1], &[0, 0, 1])), scal(1, E));
        let i3 = PoissonSeries::action(3, 6, 2, scal(1, E));
        assert!(h.bracket(&i3, 6).unwrap().is_zero());
        assert!(h.is_real());
    }

    #[test]
    fn coupling_degree_errors_instead_of_dropping() {
        let err = build_model(&a3_spec(4)).unwrap_err();
        assert!(matches!(err, Error::CouplingDegree { .. }), "{err}");
    }

    #[test]
    fn b_family_with_zero_zeta_is_integrable() {
        let c = SequenceConstraints {
            overrides: vec![EntryOverride { position: 0, a: Some("1".into()), zeta: Some("0".into()), ..Default::default() }],
            ..Default::default()
        };
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &c).unwrap();
        let spec = ModelSpec::new(Family::B, seq, 1, 4);
        assert_eq!(build_model(&spec).unwrap(), integrable_part(&spec).unwrap());
        assert_eq!(integrable_part(&spec).unwrap().len(), 3);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &one_override(1)).unwrap();
        let spec = ModelSpec::new(Family::A3, seq, 1, 6);
        assert!(matches!(build_model(&spec), Err(Error::Model(_))));
    }

    #[test]
    fn a3_generator_identity() {
        let spec = a3_spec(8);
        let chi = generator_chi(&spec, 0, 8, &ChiOptions::default()).unwrap();
        let hw = integrable_part(&spec).unwrap();
        let lhs = hw.bracket(&chi, 8).unwrap();
        let f = build_model(&spec).unwrap().sub(&hw).unwrap();
        assert_eq!(lhs, f.neg());
        assert!(chi.is_real());
    }

    #[test]
    fn b_generator_identity_up_to_expansion_order() {
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &one_override(1)).unwrap();
        let spec = ModelSpec::new(Family::B, seq, 1, 14);
        let m = 3;
        let chi = generator_chi(&spec, 0, 14, &ChiOptions { expansion_order: m, i4: None }).unwrap();
        let hw = integrable_part(&spec).unwrap();
        let ft = build_model(&spec).unwrap().sub(&hw).unwrap();
        let e = spec.entry(0).unwrap();
        let u = pole_expansion(2, 14, 1, e.k, &e.gap, m).unwrap();
        let i1 = PoissonSeries::action(2, 14, 0, scal(e.l as i64, E));
        let rhs = ft.neg().sub(&i1.mul(&ft, 14).unwrap().mul(&u, 14).unwrap()).unwrap();
        let residual = hw.bracket(&chi, 14).unwrap().sub(&rhs).unwrap();
        assert!(!residual.is_zero());
        for (mono, _) in residual.terms() {
            let i2_power = mono.u()[1].min(mono.v()[1]) as usize;
            assert!(i2_power > m, "residual term {mono} has I₂-power {i2_power}");
        }
    }

    #[test]
    fn pole_expansion_coefficients() {
        let u = pole_expansion(2, 10, 1, 2, &Scalar::ratio(-1, 10, E), 4).unwrap();
        for m in 0..=4u16 {
            let expect = &scal((-2i64).pow(m as u32), E) / &Scalar::ratio(-1, 10, E).powi(m as u32 + 1);
            assert_eq!(u.coefficient(&Monomial::action(&[0, m])), expect);
        }
    }

    #[test]
    fn resonant_two_dof_commutes() {
        let w = FrequencyVector::with_lattice(vec![scal(2, E), scal(-1, E)], vec![vec![1, 2]]).unwrap();
        let seq = resonance_sequence(&w, 1, SequenceMode::ExactResonant, &one_override(1)).unwrap();
        let spec = ModelSpec::new(Family::Resonant2Dof, seq, 1, 3);
        let h = build_model(&spec).unwrap();
        let hw = PoissonSeries::quadratic(w.values(), 3);
        let f = h.sub(&hw).unwrap();
        assert!(hw.bracket(&f, 3).unwrap().is_zero());
        let (_, class) = frequency_pairing(&Monomial::new(&[1, 2], &[0, 0]), &w).unwrap();
        assert_eq!(class, crate::frequency::Resonance::Resonant);
    }

    #[test]
    fn gamma_magnitude_and_pole_power() {
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &one_override(1)).unwrap();
        let spec = ModelSpec::new(Family::B, seq, 1, 4);
        let g = closed_form_coefficients(&spec, ClosedFormKind::Gamma, 0).unwrap();
        assert_eq!(g[0].value, scal(-40, E));
        assert_eq!(g[0].index, ActionIndex::new(&[1, 1]));
        // Raising k̂ − l by one multiplies |γ| by |k/D| = 20.
        let e = spec.entry(0).unwrap();
        let g3 = gamma_closed_form(3, 1, 2, &e.a, &Scalar::ratio(9, 10, E));
        let g3b = gamma_closed_form(3, 1, 3, &e.a, &Scalar::ratio(9, 10, E));
        assert_eq!(&g3b / &g3, Scalar::ratio(-30, 9, E));
    }

    #[test]
    fn engine_gamma_is_quadratic_with_opposite_sign() {
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &one_override(1)).unwrap();
        let spec = ModelSpec::new(Family::B, seq, 1, 4);
        let z = choose_zeta(&spec, 0).unwrap();
        assert_eq!(z.coefficients[2], scal(40, E));
        assert!(z.coefficients[1].is_zero());
        // The integrable part contributes the I₁I₂ term itself.
        assert_eq!(z.coefficients[0], scal(1, E));
        assert_eq!(z.zeta, scal(1, E));
    }

    #[test]
    fn gap_override_replaces_computed_gap() {
        let c = SequenceConstraints {
            overrides: vec![EntryOverride { position: 0, a: Some("1".into()), gap: Some("1/1000".into()), ..Default::default() }],
            pairs: Some(vec![(2, 1)]),
            ..Default::default()
        };
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &c).unwrap();
        assert_eq!(seq.entries[0].gap, Scalar::ratio(1, 1000, E));
        assert_eq!(seq.entries[0].b, Some(scal(1000, E)));
    }

    #[test]
    fn higher_pole_power_matches_closed_form() {
        // k = 3, l = 1, k̂ = 2 on ω = (1, −21/10): D = 9/10; ζ² coefficient vs −γ.
        let c = SequenceConstraints {
            overrides: vec![EntryOverride { position: 0, a: Some("1".into()), khat: Some(2), ..Default::default() }],
            pairs: Some(vec![(3, 1)]),
            ..Default::default()
        };
        let seq = resonance_sequence(&omega_b(), 1, SequenceMode::B, &c).unwrap();
        let spec = ModelSpec::new(Family::B, seq, 1, 8);
        let z = choose_zeta(&spec, 0).unwrap();
        let g = closed_form_coefficients(&spec, ClosedFormKind::Gamma, 0).unwrap();
        assert_eq!(z.coefficients[2], -&g[0].value);
    }

    #[test]
    fn i3sq_closed_form_value() {
        let spec = a3_spec(8);
        let v = closed_form_coefficients(&spec, ClosedFormKind::I3sqSeries, 0).unwrap();
        assert_eq!(v[0].index, ActionIndex::new(&[1, 1, 2]));
        assert_eq!(v[0].value, scal(40, E));
        assert_eq!(v[1].index, ActionIndex::new(&[2, 0, 2]));
        assert_eq!(v[1].value, scal(10, E));
    }

    #[test]
    fn growth_certificate_needs_large_n() {
        // Minimal admissible k_n = 10 e^{e^n}, l/k ≈ 1/θ with θ = 2.1, ε = 0.005.
        let ln_k = |n: usize| 10f64.ln() + (n as f64).exp();
        let r = 1.0 / 2.1;
        assert!(!gamma_growth_certificate(3, ln_k(3), r, 0.005).1);
        for n in 9..=20 {
            assert!(gamma_growth_certificate(n, ln_k(n), r, 0.005).1, "n = {n}");
        }
    }
}
