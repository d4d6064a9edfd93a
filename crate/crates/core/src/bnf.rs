//! Degree-by-degree Birkhoff normalization, coefficient access, the finite-order
//! Rüssmann check and growth probes of coefficient streams.

use crate::error::{Error, Result};
use crate::frequency::{split_resonant, FrequencyVector};
use crate::scalar::{Backend, Scalar};
use crate::series::{ActionIndex, Monomial, PoissonSeries, SIGMA};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// How nonresonant monomials of one degree are removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elimination {
    /// One generator per degree.
    Batched,
    /// One generator per monomial, in an order shuffled by the seed.
    Single { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub allow_resonant: bool,
    pub elimination: Elimination,
    /// Extra degrees above 2N kept in the transformed series (the remainder).
    pub remainder_degrees: usize,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions { allow_resonant: false, elimination: Elimination::Batched, remainder_degrees: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeLog {
    pub degree: usize,
    pub eliminated: usize,
    /// Smallest |⟨ω,u−v⟩| divided by at this degree; None when nothing was eliminated.
    pub min_divisor: Option<String>,
    #[serde(skip)]
    pub min_divisor_value: Option<Scalar>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalFormResult {
    pub omega: FrequencyVector,
    /// Achieved order: the normal form is exact through degree 2N in (ξ,η).
    pub order: usize,
    pub bnf: BTreeMap<ActionIndex, Scalar>,
    pub generators: Vec<(usize, PoissonSeries)>,
    /// Resonant non-action terms left in place (allow_resonant only).
    pub resonant: PoissonSeries,
    /// Terms of degree > 2N of the transformed Hamiltonian.
    pub remainder: PoissonSeries,
    pub log: Vec<DegreeLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BnfEntry {
    pub idx: Vec<u16>,
    pub re: String,
    pub im: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormJson {
    pub omega: Vec<String>,
    #[serde(rename = "N")]
    pub order: usize,
    pub bnf: Vec<BnfEntry>,
    pub log: Vec<DegreeLog>,
}

impl NormalFormResult {
    pub fn backend(&self) -> Backend {
        self.omega.backend()
    }

    /// The action part B_N as a series.
    pub fn bnf_series(&self) -> PoissonSeries {
        PoissonSeries::from_terms(
            self.omega.dof(),
            2 * self.order,
            self.backend(),
            self.bnf.iter().map(|(i, c)| (i.monomial(), c.clone())),
        )
        .expect("bnf entries match the frequency vector")
    }

    /// Entries ordered like the series (graded lexicographic).
    pub fn to_json(&self) -> NormalFormJson {
        let mut entries: Vec<(&ActionIndex, &Scalar)> = self.bnf.iter().collect();
        entries.sort_by(|a, b| a.0.monomial().cmp(&b.0.monomial()));
        NormalFormJson {
            omega: self.omega.to_strings(),
            order: self.order,
            bnf: entries
                .into_iter()
                .map(|(i, c)| {
                    let (re, im) = c.to_strings();
                    BnfEntry { idx: i.0.clone(), re, im }
                })
                .collect(),
            log: self.log.clone(),
        }
    }
}

/// Small deterministic generator for elimination-order shuffles.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator coefficient removing c·ξ^uη^v: c / (σ·i·⟨ω,u−v⟩).
pub fn elimination_coefficient(c: &Scalar, pairing: &Scalar) -> Scalar {
    (c / pairing).mul_i().mul_int(-SIGMA)
}

fn check_quadratic(h: &PoissonSeries, omega: &FrequencyVector) -> Result<()> {
    if let Some((m, _)) = h.terms().find(|(m, _)| m.degree() == 1) {
        return Err(Error::NonElliptic(format!("linear term {m}")));
    }
    let expected = PoissonSeries::quadratic(omega.values(), 2);
    let quad = h.degree_part(2).with_order(2);
    if !quad.terms().eq(expected.terms()) {
        return Err(Error::NonElliptic(format!("quadratic part {quad} differs from Σω_jI_j")));
    }
    Ok(())
}

pub fn normalize_to_order(h: &PoissonSeries, omega: &FrequencyVector, order: usize) -> Result<NormalFormResult> {
    normalize_with(h, omega, order, NormalizeOptions::default())
}

pub fn normalize_with(
    h: &PoissonSeries,
    omega: &FrequencyVector,
    order: usize,
    opts: NormalizeOptions,
) -> Result<NormalFormResult> {
    if h.dof() != omega.dof() {
        return Err(Error::Dimension { expected: omega.dof(), got: h.dof() });
    }
    if h.backend() != omega.backend() {
        return Err(Error::Backend(h.backend().to_string(), omega.backend().to_string()));
    }
    if !h.is_real() {
        return Err(Error::Model("normalization needs a real Hamiltonian".into()));
    }
    check_quadratic(h, omega)?;
    let top = 2 * order;
    let work = top + opts.remainder_degrees;
    let mut cur = h.truncated(work);
    let mut generators = Vec::new();
    let mut log = Vec::new();
    let mut resonant = PoissonSeries::zero(h.dof(), top, h.backend());
    let mut rng = match opts.elimination {
        Elimination::Single { seed } => seed,
        Elimination::Batched => 0,
    };
    for g in 3..=top {
        let part = cur.degree_part(g);
        let (res, non) = split_resonant(&part, omega)?;
        let res_non_action = res.filter(|m| !m.is_action());
        if let Some((m, _)) = res_non_action.terms().next() {
            if !opts.allow_resonant {
                return Err(Error::Resonant(m.to_string()));
            }
            resonant = resonant.add(&res_non_action.with_order(top))?;
        }
        let mut pieces: Vec<(Monomial, Scalar)> = Vec::new();
        let mut min_div: Option<Scalar> = None;
        for (m, c) in non.terms() {
            let p = omega.pairing(&m.charge());
            if p.is_zero() {
                return Err(Error::ZeroDivisor(m.to_string()));
            }
            let abs = if p.sign_re() < 0 { -&p } else { p.clone() };
            min_div = Some(match min_div {
                Some(cur_min) if (&cur_min - &abs).sign_re() <= 0 => cur_min,
                _ => abs,
            });
            pieces.push((m.clone(), elimination_coefficient(c, &p)));
        }
        log.push(DegreeLog {
            degree: g,
            eliminated: pieces.len(),
            min_divisor: min_div.as_ref().map(|s| s.to_strings().0),
            min_divisor_value: min_div,
        });
        if pieces.is_empty() {
            continue;
        }
        match opts.elimination {
            Elimination::Batched => {
                let chi = PoissonSeries::from_terms(h.dof(), work, h.backend(), pieces)?;
                cur = cur.lie_transform(&chi, work)?;
                generators.push((g, chi));
            }
            Elimination::Single { .. } => {
                // Fisher-Yates with the splitmix stream.
                for i in (1..pieces.len()).rev() {
                    let j = (splitmix(&mut rng) % (i as u64 + 1)) as usize;
                    pieces.swap(i, j);
                }
                for (m, c) in pieces {
                    // The monomial's current coefficient is unchanged by earlier
                    // same-degree steps, which only add higher-degree terms.
                    let chi = PoissonSeries::from_terms(h.dof(), work, h.backend(), [(m, c)])?;
                    cur = cur.lie_transform(&chi, work)?;
                    generators.push((g, chi));
                }
            }
        }
    }
    let mut bnf = BTreeMap::new();
    for (m, c) in cur.terms() {
        if m.degree() <= top {
            if let Some(idx) = m.action_index() {
                bnf.insert(idx, c.clone());
            }
        }
    }
    let remainder = cur.filter(|m| m.degree() > top);
    Ok(NormalFormResult { omega: omega.clone(), order, bnf, generators, resonant, remainder, log })
}

/// Stored coefficient of Π I_j^{m_j} (zero if absent).
pub fn bnf_coefficient(r: &NormalFormResult, idx: &ActionIndex) -> Result<Scalar> {
    if idx.0.len() != r.omega.dof() {
        return Err(Error::Dimension { expected: r.omega.dof(), got: idx.0.len() });
    }
    if idx.weight() > r.order {
        return Err(Error::BeyondOrder { index: idx.to_string(), order: r.order });
    }
    Ok(r.bnf.get(idx).cloned().unwrap_or_else(|| Scalar::zero(r.backend())))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RussmannVerdict {
    /// The gradient rows span ℝ^d: conclusive.
    Nondegenerate,
    /// Not conclusive: higher orders may still add independent rows.
    DegenerateAtOrder { witness: Vec<Scalar> },
}

pub fn russmann_rank(r: &NormalFormResult, order: usize) -> Result<RussmannVerdict> {
    if order > r.order {
        return Err(Error::BeyondOrder { index: format!("order {order}"), order: r.order });
    }
    russmann_rank_series(&r.bnf_series(), order)
}

/// Rüssmann check for an action polynomial B, using its terms of weight ≤ order.
pub fn russmann_rank_series(b: &PoissonSeries, order: usize) -> Result<RussmannVerdict> {
    let d = b.dof();
    let backend = b.backend();
    // rows[μ][j] = coefficient of I^μ in ∂B/∂I_j
    let mut rows: BTreeMap<Vec<u16>, Vec<Scalar>> = BTreeMap::new();
    for (m, c) in b.terms() {
        let Some(idx) = m.action_index() else { continue };
        if idx.weight() > order || idx.weight() == 0 {
            continue;
        }
        for j in 0..d {
            if idx.0[j] == 0 {
                continue;
            }
            let mut mu = idx.0.clone();
            mu[j] -= 1;
            let row = rows.entry(mu).or_insert_with(|| vec![Scalar::zero(backend); d]);
            row[j] = &row[j] + &c.mul_int(idx.0[j] as i64);
        }
    }
    let matrix: Vec<Vec<Scalar>> = rows.into_values().collect();
    let kernel = kernel_vector(matrix, d);
    Ok(match kernel {
        None => RussmannVerdict::Nondegenerate,
        Some(w) => RussmannVerdict::DegenerateAtOrder { witness: w },
    })
}

fn negligible(x: &Scalar, scale: f64) -> bool {
    match x.backend() {
        Backend::Exact => x.is_zero(),
        Backend::Float(bits) => {
            x.is_zero() || x.ln_abs() < scale.max(1e-300).ln() - (bits as f64 / 2.0) * std::f64::consts::LN_2
        }
    }
}

/// A nonzero kernel vector of the row matrix, or None if it has full column rank.
fn kernel_vector(mut m: Vec<Vec<Scalar>>, d: usize) -> Option<Vec<Scalar>> {
    let scale = m.iter().flatten().map(|x| x.abs_f64()).fold(0.0, f64::max);
    let backend = m.first().map(|r| r[0].backend());
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..d {
        let Some(p) = (row..m.len())
            .filter(|&i| !negligible(&m[i][col], scale))
            .max_by(|&a, &b| m[a][col].abs_f64().total_cmp(&m[b][col].abs_f64()))
        else {
            continue;
        };
        m.swap(row, p);
        let inv = m[row][col].inv().ok()?;
        m[row] = m[row].iter().map(|x| x * &inv).collect();
        for i in 0..m.len() {
            if i != row && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                let pr = m[row].clone();
                m[i] = m[i].iter().zip(&pr).map(|(a, b)| a - &(&f * b)).collect();
            }
        }
        pivots.push(col);
        row += 1;
    }
    if pivots.len() == d {
        return None;
    }
    let backend = backend.unwrap_or(Backend::Exact);
    let free = (0..d).find(|c| !pivots.contains(c)).expect("rank deficient");
    let mut w = vec![Scalar::zero(backend); d];
    w[free] = Scalar::one(backend);
    for (r, &pc) in pivots.iter().enumerate() {
        w[pc] = -&m[r][free];
    }
    Some(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrowthVerdict {
    /// All coefficients vanish.
    InfiniteRadius,
    /// Normalized roots strictly increase over at least three nonzero terms.
    RadiusToZero,
    /// Bounded roots; radius estimated as 1/max ρ.
    FiniteRadius,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub idx: Vec<u16>,
    pub weight: usize,
    pub ln_abs: f64,
    pub root: f64,
    pub running_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub rows: Vec<ProbeRow>,
    pub strictly_increasing: bool,
    /// 1 / sup ρ over the stream (∞ when every coefficient is zero).
    pub radius_estimate: f64,
    pub verdict: GrowthVerdict,
}

/// Normalized roots ρ_k = |c_k|^{1/|idx_k|} of a coefficient stream.
pub fn divergence_probe(coeffs: &[(ActionIndex, Scalar)]) -> Result<GrowthReport> {
    if coeffs.is_empty() {
        return Err(Error::Target("empty coefficient stream".into()));
    }
    let mut rows = Vec::new();
    let mut running = 0.0f64;
    for (idx, c) in coeffs {
        if c.is_zero() {
            continue;
        }
        let w = idx.weight();
        if w == 0 {
            return Err(Error::Target("constant term has no normalized root".into()));
        }
        let ln = c.ln_abs();
        let root = (ln / w as f64).exp();
        running = running.max(root);
        rows.push(ProbeRow { idx: idx.0.clone(), weight: w, ln_abs: ln, root, running_max: running });
    }
    if rows.is_empty() {
        return Ok(GrowthReport {
            rows,
            strictly_increasing: false,
            radius_estimate: f64::INFINITY,
            verdict: GrowthVerdict::InfiniteRadius,
        });
    }
    let strictly_increasing = rows.windows(2).all(|w| w[1].root > w[0].root);
    let verdict = if strictly_increasing && rows.len() >= 3 {
        GrowthVerdict::RadiusToZero
    } else {
        GrowthVerdict::FiniteRadius
    };
    Ok(GrowthReport { rows, strictly_increasing, radius_estimate: 1.0 / running, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: Backend = Backend::Exact;

    fn omega2() -> FrequencyVector {
        FrequencyVector::new(vec![Scalar::from_i64(1, E), Scalar::ratio(-21, 10, E)]).unwrap()
    }

    fn saddle_model(a: i64) -> PoissonSeries {
        let f = PoissonSeries::from_terms(
            2,
            8,
            E,
            [
                (Monomial::new(&[2, 1], &[0, 0]), Scalar::from_i64(a, E)),
                (Monomial::new(&[0, 0], &[2, 1]), Scalar::from_i64(a, E)),
            ],
        )
        .unwrap();
        PoissonSeries::quadratic(omega2().values(), 8).add(&f).unwrap()
    }

    #[test]
    fn action_polynomial_is_its_own_normal_form() {
        let h = PoissonSeries::quadratic(omega2().values(), 6)
            .add(&PoissonSeries::action(2, 6, 0, Scalar::one(E)).mul(&PoissonSeries::action(2, 6, 1, Scalar::one(E)), 6).unwrap())
            .unwrap();
        let r = normalize_to_order(&h, &omega2(), 3).unwrap();
        assert!(r.generators.is_empty());
        assert_eq!(r.bnf_series().with_order(6), h);
    }

    #[test]
    fn saddle_order_two_pattern() {
        // −a²(k² I₁^{k−1}I₂^l + l² I₁^k I₂^{l−1})/(kω₁+lω₂) with k=2, l=1, D = −1/10.
        let r = normalize_to_order(&saddle_model(1), &omega2(), 2).unwrap();
        assert_eq!(bnf_coefficient(&r, &ActionIndex::new(&[1, 1])).unwrap(), Scalar::from_i64(40, E));
        assert_eq!(bnf_coefficient(&r, &ActionIndex::new(&[2, 0])).unwrap(), Scalar::from_i64(10, E));
        assert_eq!(bnf_coefficient(&r, &ActionIndex::new(&[1, 0])).unwrap(), Scalar::one(E));
        assert!(bnf_coefficient(&r, &ActionIndex::new(&[0, 2])).unwrap().is_zero());
        assert!(bnf_coefficient(&r, &ActionIndex::new(&[0, 3])).is_err());
        assert_eq!(r.log[0].degree, 3);
        assert_eq!(r.log[0].eliminated, 2);
        assert_eq!(r.log[0].min_divisor.as_deref(), Some("1/10"));
    }

    #[test]
    fn elimination_order_does_not_matter() {
        let h = saddle_model(1).add(&PoissonSeries::from_terms(
            2,
            8,
            E,
            [
                (Monomial::new(&[1, 0], &[0, 2]), Scalar::ratio(1, 3, E)),
                (Monomial::new(&[0, 2], &[1, 0]), Scalar::ratio(1, 3, E)),
            ],
        ).unwrap()).unwrap();
        let batched = normalize_to_order(&h, &omega2(), 3).unwrap();
        for seed in [1, 7, 99] {
            let opts = NormalizeOptions { elimination: Elimination::Single { seed }, ..Default::default() };
            assert_eq!(normalize_with(&h, &omega2(), 3, opts).unwrap().bnf, batched.bnf);
        }
    }

    #[test]
    fn recorded_generators_reproduce_the_normal_form() {
        let h = saddle_model(2);
        let opts = NormalizeOptions { remainder_degrees: 2, ..Default::default() };
        let r = normalize_with(&h, &omega2(), 2, opts).unwrap();
        let mut cur = h.truncated(6);
        for (_, chi) in &r.generators {
            cur = cur.lie_transform(chi, 6).unwrap();
        }
        let expect = r.bnf_series().with_order(6).add(&r.remainder).unwrap();
        assert_eq!(cur, expect);
        assert!(r.remainder.terms().all(|(m, _)| m.degree() > 4));
    }

    #[test]
    fn resonant_terms_abort_unless_allowed() {
        let w = FrequencyVector::with_lattice(vec![Scalar::from_i64(2, E), Scalar::from_i64(-1, E)], vec![vec![1, 2]]).unwrap();
        let f = PoissonSeries::from_terms(
            2,
            6,
            E,
            [(Monomial::new(&[1, 2], &[0, 0]), Scalar::one(E)), (Monomial::new(&[0, 0], &[1, 2]), Scalar::one(E))],
        )
        .unwrap();
        let h = PoissonSeries::quadratic(w.values(), 6).add(&f).unwrap();
        assert!(matches!(normalize_to_order(&h, &w, 2), Err(Error::Resonant(_))));
        let opts = NormalizeOptions { allow_resonant: true, ..Default::default() };
        let r = normalize_with(&h, &w, 2, opts).unwrap();
        assert_eq!(r.resonant.len(), 2);
        // Incomplete lattice: same ω without the declared relation.
        let bare = FrequencyVector::new(w.values().to_vec()).unwrap();
        assert!(matches!(normalize_to_order(&h, &bare, 2), Err(Error::ZeroDivisor(_))));
    }

    #[test]
    fn non_elliptic_quadratic_part() {
        let h = PoissonSeries::quadratic(&[Scalar::from_i64(1, E), Scalar::from_i64(3, E)], 4);
        assert!(matches!(normalize_to_order(&h, &omega2(), 2), Err(Error::NonElliptic(_))));
    }

    #[test]
    fn russmann_examples() {
        let b = PoissonSeries::action(2, 4, 0, Scalar::one(E));
        match russmann_rank_series(&b, 2).unwrap() {
            RussmannVerdict::DegenerateAtOrder { witness } => {
                assert_eq!(witness, vec![Scalar::zero(E), Scalar::one(E)]);
            }
            v => panic!("unexpected {v:?}"),
        }
        let half = Scalar::ratio(1, 2, E);
        let i1 = PoissonSeries::action(2, 4, 0, Scalar::one(E));
        let i2 = PoissonSeries::action(2, 4, 1, Scalar::one(E));
        let b = PoissonSeries::quadratic(omega2().values(), 4)
            .add(&i1.mul(&i1, 4).unwrap().add(&i2.mul(&i2, 4).unwrap()).unwrap().scale(&half).unwrap())
            .unwrap();
        assert_eq!(russmann_rank_series(&b, 2).unwrap(), RussmannVerdict::Nondegenerate);
    }

    #[test]
    fn probe_examples() {
        let geo: Vec<(ActionIndex, Scalar)> =
            (1..8u16).map(|k| (ActionIndex::new(&[k, 0]), Scalar::from_i64(1 << k, E))).collect();
        let r = divergence_probe(&geo).unwrap();
        assert!((r.radius_estimate - 0.5).abs() < 1e-12);
        assert_eq!(r.verdict, GrowthVerdict::FiniteRadius);
        let zeros = vec![(ActionIndex::new(&[1, 0]), Scalar::zero(E))];
        let r = divergence_probe(&zeros).unwrap();
        assert_eq!(r.verdict, GrowthVerdict::InfiniteRadius);
        assert!(r.radius_estimate.is_infinite());
    }
}
