//! Sparse truncated power series in (ξ₁..ξ_d, η₁..η_d).

use crate::error::{Error, Result};
use crate::scalar::{Backend, Scalar};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Sign of the bracket: {F,G} = SIGMA · i · Σ_j (∂_ξj F ∂_ηj G − ∂_ηj F ∂_ξj G).
/// With −1 the elimination generator i·c/⟨ω,u−v⟩ cancels c·ξ^uη^v, and
/// dF/dt = {F,H} along ξ̇ = −i∂_ηH, η̇ = i∂_ξH.
pub const SIGMA: i64 = -1;

/// ξ^u η^v, stored as the concatenation (u₁..u_d, v₁..v_d).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial {
    exps: Vec<u16>,
}

impl Monomial {
    pub fn new(u: &[u16], v: &[u16]) -> Monomial {
        assert_eq!(u.len(), v.len(), "u and v must have equal length");
        assert!(!u.is_empty(), "monomial needs d >= 1");
        let mut exps = u.to_vec();
        exps.extend_from_slice(v);
        Monomial { exps }
    }

    pub fn one(d: usize) -> Monomial {
        Monomial { exps: vec![0; 2 * d] }
    }

    /// Π I_j^{m_j}.
    pub fn action(m: &[u16]) -> Monomial {
        Monomial::new(m, m)
    }

    pub fn dof(&self) -> usize {
        self.exps.len() / 2
    }

    pub fn u(&self) -> &[u16] {
        &self.exps[..self.dof()]
    }

    pub fn v(&self) -> &[u16] {
        &self.exps[self.dof()..]
    }

    pub fn exps(&self) -> &[u16] {
        &self.exps
    }

    pub fn degree(&self) -> usize {
        self.exps.iter().map(|&e| e as usize).sum()
    }

    pub fn pair_degree(&self, j: usize) -> usize {
        let d = self.dof();
        self.exps[j] as usize + self.exps[d + j] as usize
    }

    pub fn is_action(&self) -> bool {
        self.u() == self.v()
    }

    pub fn action_index(&self) -> Option<ActionIndex> {
        self.is_action().then(|| ActionIndex(self.u().to_vec()))
    }

    /// The monomial with u and v swapped (the conjugate partner).
    pub fn swapped(&self) -> Monomial {
        Monomial::new(self.v(), self.u())
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial { exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect() }
    }

    /// u − v as signed integers.
    pub fn charge(&self) -> Vec<i64> {
        self.u().iter().zip(self.v()).map(|(&a, &b)| a as i64 - b as i64).collect()
    }

    fn within(&self, order: usize, caps: &[Option<usize>]) -> bool {
        self.degree() <= order
            && caps
                .iter()
                .enumerate()
                .all(|(j, c)| c.map_or(true, |c| self.pair_degree(j) <= c))
    }
}

/// Graded lexicographic: total degree ascending, then exponent vector
/// (u₁..u_d, v₁..v_d) descending, so ξ₁ ≺ ξ₂ ≺ η₁ ≺ η₂ in degree one.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (name, exps) in [("xi", self.u()), ("eta", self.v())] {
            for (j, &e) in exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => parts.push(format!("{name}{}", j + 1)),
                    _ => parts.push(format!("{name}{}^{e}", j + 1)),
                }
            }
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("*"))
        }
    }
}

/// Exponents of Π I_j^{m_j}.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionIndex(pub Vec<u16>);

impl ActionIndex {
    pub fn new(m: &[u16]) -> ActionIndex {
        ActionIndex(m.to_vec())
    }

    pub fn monomial(&self) -> Monomial {
        Monomial::action(&self.0)
    }

    /// Degree in the actions (half the degree in ξ, η).
    pub fn weight(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }
}

impl fmt::Display for ActionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(j, &e)| if e == 1 { format!("I{}", j + 1) } else { format!("I{}^{e}", j + 1) })
            .collect();
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join("*"))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSeries {
    dof: usize,
    order: usize,
    backend: Backend,
    caps: Vec<Option<usize>>,
    terms: BTreeMap<Monomial, Scalar>,
    real: bool,
}

fn min_cap(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl PoissonSeries {
    pub fn zero(dof: usize, order: usize, backend: Backend) -> PoissonSeries {
        assert!(dof >= 1, "series needs d >= 1");
        PoissonSeries {
            dof,
            order,
            backend,
            caps: vec![None; dof],
            terms: BTreeMap::new(),
            real: true,
        }
    }

    /// Build from (monomial, coefficient) pairs; repeated monomials are summed,
    /// terms beyond the order are dropped, the reality flag is computed.
    pub fn from_terms<I>(dof: usize, order: usize, backend: Backend, terms: I) -> Result<PoissonSeries>
    where
        I: IntoIterator<Item = (Monomial, Scalar)>,
    {
        let mut s = PoissonSeries::zero(dof, order, backend);
        for (m, c) in terms {
            if m.dof() != dof {
                return Err(Error::Dimension { expected: dof, got: m.dof() });
            }
            if c.backend() != backend {
                return Err(Error::Backend(backend.to_string(), c.backend().to_string()));
            }
            s.add_term(m, c);
        }
        s.real = s.check_reality();
        Ok(s)
    }

    pub fn monomial(dof: usize, order: usize, m: Monomial, c: Scalar) -> Result<PoissonSeries> {
        let backend = c.backend();
        PoissonSeries::from_terms(dof, order, backend, [(m, c)])
    }

    /// c · I_j (j zero-based).
    pub fn action(dof: usize, order: usize, j: usize, c: Scalar) -> PoissonSeries {
        let mut m = vec![0u16; dof];
        m[j] = 1;
        PoissonSeries::monomial(dof, order, Monomial::action(&m), c).expect("consistent inputs")
    }

    /// Σ ω_j I_j.
    pub fn quadratic(omega: &[Scalar], order: usize) -> PoissonSeries {
        let d = omega.len();
        let backend = omega[0].backend();
        let mut s = PoissonSeries::zero(d, order, backend);
        for (j, w) in omega.iter().enumerate() {
            let mut m = vec![0u16; d];
            m[j] = 1;
            s.add_term(Monomial::action(&m), w.clone());
        }
        s.real = s.check_reality();
        s
    }

    /// Restrict the degree of the pair (ξ_j, η_j) to at most `cap` in this series and everything derived from it.
    pub fn with_pair_cap(mut self, j: usize, cap: usize) -> PoissonSeries {
        self.caps[j] = min_cap(self.caps[j], Some(cap));
        let (order, caps) = (self.order, self.caps.clone());
        self.terms.retain(|m, _| m.within(order, &caps));
        self
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn pair_caps(&self) -> &[Option<usize>] {
        &self.caps
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Scalar)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Scalar {
        self.terms.get(m).cloned().unwrap_or_else(|| Scalar::zero(self.backend))
    }

    pub fn min_degree(&self) -> Option<usize> {
        self.terms.keys().next().map(|m| m.degree())
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.terms.keys().next_back().map(|m| m.degree())
    }

    fn add_term(&mut self, m: Monomial, c: Scalar) {
        if c.is_zero() || !m.within(self.order, &self.caps) {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(existing) => {
                let sum = &*existing + &c;
                if sum.is_zero() {
                    self.terms.remove(&m);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    /// Coefficient of (u,v) equals the conjugate of the coefficient of (v,u) for every term.
    pub fn check_reality(&self) -> bool {
        self.terms.iter().all(|(m, c)| match self.terms.get(&m.swapped()) {
            Some(p) => *p == c.conj(),
            None => false,
        })
    }

    fn compatible(&self, other: &PoissonSeries) -> Result<()> {
        if self.dof != other.dof {
            return Err(Error::Dimension { expected: self.dof, got: other.dof });
        }
        if self.backend != other.backend {
            return Err(Error::Backend(self.backend.to_string(), other.backend.to_string()));
        }
        Ok(())
    }

    fn empty_like(&self, other: Option<&PoissonSeries>, order: usize) -> PoissonSeries {
        let mut s = PoissonSeries::zero(self.dof, order, self.backend);
        s.caps = self.caps.clone();
        if let Some(o) = other {
            s.caps = s.caps.iter().zip(&o.caps).map(|(&a, &b)| min_cap(a, b)).collect();
        }
        s
    }

    /// The series truncated to total degree ≤ order.
    pub fn truncated(&self, order: usize) -> PoissonSeries {
        let mut s = self.empty_like(None, order);
        for (m, c) in &self.terms {
            s.add_term(m.clone(), c.clone());
        }
        s.real = self.real;
        s
    }

    /// Same terms, larger nominal order (no terms are created).
    pub fn with_order(&self, order: usize) -> PoissonSeries {
        let mut s = self.truncated(order);
        s.order = order;
        s
    }

    pub fn degree_part(&self, g: usize) -> PoissonSeries {
        let mut s = self.empty_like(None, self.order);
        for (m, c) in self.terms.iter().filter(|(m, _)| m.degree() == g) {
            s.terms.insert(m.clone(), c.clone());
        }
        s.real = s.check_reality();
        s
    }

    pub fn filter<F: Fn(&Monomial) -> bool>(&self, keep: F) -> PoissonSeries {
        let mut s = self.empty_like(None, self.order);
        for (m, c) in self.terms.iter().filter(|(m, _)| keep(m)) {
            s.terms.insert(m.clone(), c.clone());
        }
        s.real = s.check_reality();
        s
    }

    pub fn action_part(&self) -> PoissonSeries {
        self.filter(|m| m.is_action())
    }

    pub fn add(&self, other: &PoissonSeries) -> Result<PoissonSeries> {
        self.add_order(other, self.order.max(other.order))
    }

    pub fn add_order(&self, other: &PoissonSeries, order: usize) -> Result<PoissonSeries> {
        self.compatible(other)?;
        let mut s = self.empty_like(Some(other), order);
        for (m, c) in self.terms.iter().chain(other.terms.iter()) {
            s.add_term(m.clone(), c.clone());
        }
        s.real = self.real && other.real || s.check_reality();
        Ok(s)
    }

    pub fn sub(&self, other: &PoissonSeries) -> Result<PoissonSeries> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> PoissonSeries {
        let mut s = self.clone();
        for c in s.terms.values_mut() {
            *c = -&*c;
        }
        s
    }

    pub fn scale(&self, c: &Scalar) -> Result<PoissonSeries> {
        if c.backend() != self.backend {
            return Err(Error::Backend(self.backend.to_string(), c.backend().to_string()));
        }
        let mut s = self.empty_like(None, self.order);
        for (m, a) in &self.terms {
            s.add_term(m.clone(), a * c);
        }
        s.real = self.real && c.is_real() || s.check_reality();
        Ok(s)
    }

    pub fn mul(&self, other: &PoissonSeries, order: usize) -> Result<PoissonSeries> {
        self.compatible(other)?;
        let mut s = self.empty_like(Some(other), order);
        let right: Vec<(&Monomial, &Scalar, usize)> =
            other.terms.iter().map(|(m, c)| (m, c, m.degree())).collect();
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            for &(mb, cb, db) in &right {
                if da + db > order {
                    break;
                }
                s.add_term(ma.mul(mb), ca * cb);
            }
        }
        s.real = self.real && other.real || s.check_reality();
        Ok(s)
    }

    /// {self, other} truncated at `order`.
    pub fn bracket(&self, other: &PoissonSeries, order: usize) -> Result<PoissonSeries> {
        self.compatible(other)?;
        let d = self.dof;
        let mut s = self.empty_like(Some(other), order);
        let right: Vec<(&Monomial, &Scalar, usize)> =
            other.terms.iter().map(|(m, c)| (m, c, m.degree())).collect();
        // Accumulate Σ σ·n_j·αβ, multiply by i once at the end.
        let mut acc: BTreeMap<Monomial, Scalar> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            for &(mb, cb, db) in &right {
                if da + db < 2 {
                    continue;
                }
                if da + db - 2 > order {
                    break;
                }
                let mut prod: Option<Scalar> = None;
                for j in 0..d {
                    let n = ma.exps[j] as i64 * mb.exps[d + j] as i64
                        - ma.exps[d + j] as i64 * mb.exps[j] as i64;
                    if n == 0 {
                        continue;
                    }
                    let mut m = ma.mul(mb);
                    m.exps[j] -= 1;
                    m.exps[d + j] -= 1;
                    if !m.within(order, &s.caps) {
                        continue;
                    }
                    let p = prod.get_or_insert_with(|| ca * cb);
                    let c = p.mul_int(SIGMA * n);
                    match acc.get_mut(&m) {
                        Some(e) => *e = &*e + &c,
                        None => {
                            acc.insert(m, c);
                        }
                    }
                }
            }
        }
        for (m, c) in acc {
            if !c.is_zero() {
                s.terms.insert(m, c.mul_i());
            }
        }
        s.real = self.real && other.real || s.check_reality();
        Ok(s)
    }

    /// H∘Φ¹_χ = Σ_k (1/k!) ad_χ^k H with ad_χ H = {H, χ}, truncated at `order`.
    pub fn lie_transform(&self, chi: &PoissonSeries, order: usize) -> Result<PoissonSeries> {
        self.compatible(chi)?;
        if let Some(low) = chi.min_degree() {
            if low <= 2 {
                return Err(Error::GeneratorDegree(low));
            }
        }
        let mut result = self.truncated(order);
        let mut term = result.clone();
        let mut k = 1i64;
        loop {
            let next = term.bracket(chi, order)?;
            if next.is_zero() {
                break;
            }
            term = next.scale(&Scalar::ratio(1, k, self.backend).to_backend(self.backend))?;
            result = result.add_order(&term, order)?;
            k += 1;
        }
        result.real = self.real && chi.real || result.check_reality();
        Ok(result)
    }

    /// ∂/∂ξ_j.
    pub fn d_xi(&self, j: usize) -> PoissonSeries {
        self.derivative(j)
    }

    /// ∂/∂η_j.
    pub fn d_eta(&self, j: usize) -> PoissonSeries {
        self.derivative(self.dof + j)
    }

    fn derivative(&self, var: usize) -> PoissonSeries {
        let mut s = self.empty_like(None, self.order);
        for (m, c) in &self.terms {
            let e = m.exps[var];
            if e == 0 {
                continue;
            }
            let mut dm = m.clone();
            dm.exps[var] -= 1;
            s.add_term(dm, c.mul_int(e as i64));
        }
        s.real = s.check_reality();
        s
    }

    /// Convert every coefficient to another backend.
    pub fn to_backend(&self, backend: Backend) -> PoissonSeries {
        let mut s = self.clone();
        s.backend = backend;
        s.terms = self.terms.iter().map(|(m, c)| (m.clone(), c.to_backend(backend))).collect();
        s.real = self.real;
        s
    }

    pub fn to_json(&self) -> SeriesJson {
        SeriesJson {
            d: self.dof,
            order: self.order,
            backend: self.backend,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| {
                    let (re, im) = c.to_strings();
                    TermJson { u: m.u().to_vec(), v: m.v().to_vec(), re, im }
                })
                .collect(),
        }
    }

    pub fn from_json(j: &SeriesJson) -> Result<PoissonSeries> {
        let mut terms = Vec::with_capacity(j.terms.len());
        for t in &j.terms {
            if t.u.len() != j.d || t.v.len() != j.d {
                return Err(Error::Dimension { expected: j.d, got: t.u.len().max(t.v.len()) });
            }
            terms.push((Monomial::new(&t.u, &t.v), Scalar::from_strings(&t.re, &t.im, j.backend)?));
        }
        PoissonSeries::from_terms(j.d, j.order, j.backend, terms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub u: Vec<u16>,
    pub v: Vec<u16>,
    pub re: String,
    pub im: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub d: usize,
    #[serde(rename = "N")]
    pub order: usize,
    pub backend: Backend,
    pub terms: Vec<TermJson>,
}

impl fmt::Display for PoissonSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(m, c)| format!("[{c}]*{m}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: Backend = Backend::Exact;

    fn c(n: i64) -> Scalar {
        Scalar::from_i64(n, E)
    }

    fn mono(u: &[u16], v: &[u16]) -> Monomial {
        Monomial::new(u, v)
    }

    fn saddle(k: u16, l: u16, order: usize) -> PoissonSeries {
        PoissonSeries::from_terms(
            2,
            order,
            E,
            [(mono(&[k, l], &[0, 0]), c(1)), (mono(&[0, 0], &[k, l]), c(1))],
        )
        .unwrap()
    }

    #[test]
    fn graded_lex_order() {
        let mut ms = vec![mono(&[0, 0], &[0, 1]), mono(&[1, 0], &[0, 0]), mono(&[1, 1], &[0, 0]), mono(&[0, 1], &[0, 0])];
        ms.sort();
        let shown: Vec<String> = ms.iter().map(|m| m.to_string()).collect();
        assert_eq!(shown, ["xi1", "xi2", "eta2", "xi1*xi2"]);
    }

    #[test]
    fn combine_examples() {
        let a = saddle(2, 1, 6);
        assert!(a.add(&a.neg()).unwrap().is_zero());
        let i1 = PoissonSeries::action(2, 4, 0, c(1));
        let i2 = PoissonSeries::action(2, 4, 1, c(1));
        let p = i1.mul(&i2, 4).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.coefficient(&Monomial::action(&[1, 1])), c(1));
        let x2 = PoissonSeries::monomial(2, 3, mono(&[2, 0], &[0, 0]), c(1)).unwrap();
        assert!(x2.mul(&x2, 3).unwrap().is_zero());
    }

    #[test]
    fn actions_commute() {
        let i1 = PoissonSeries::action(2, 4, 0, c(1));
        let i2 = PoissonSeries::action(2, 4, 1, c(1));
        assert!(i1.bracket(&i2, 4).unwrap().is_zero());
    }

    #[test]
    fn rotation_bracket_on_xi() {
        // Direct differentiation: ∂_ξ1 H_ω = ω₁η₁, ∂_η1 ξ₁ = 0, ∂_η1 H_ω = ω₁ξ₁, ∂_ξ1 ξ₁ = 1,
        // so {H_ω, ξ₁} = σ·i·(0 − ω₁ξ₁) = σ·(−i)·ω₁ξ₁.
        let h = PoissonSeries::quadratic(&[Scalar::ratio(3, 2, E), c(-2)], 4);
        let xi1 = PoissonSeries::monomial(2, 4, mono(&[1, 0], &[0, 0]), c(1)).unwrap();
        let b = h.bracket(&xi1, 4).unwrap();
        let expect = Scalar::ratio(3, 2, E).mul_i().mul_int(-SIGMA);
        assert_eq!(b.len(), 1);
        assert_eq!(b.coefficient(&mono(&[1, 0], &[0, 0])), expect);
    }

    #[test]
    fn saddle_with_its_odd_partner() {
        // Action part of {F, E} for F = ξ^K + η^K, E = ξ^K − η^K with K = (2,1):
        // −2iσ(k² I₁^{k−1}I₂^l + l² I₁^k I₂^{l−1}).
        let f = saddle(2, 1, 6);
        let e = PoissonSeries::from_terms(2, 6, E, [(mono(&[2, 1], &[0, 0]), c(1)), (mono(&[0, 0], &[2, 1]), c(-1))]).unwrap();
        let b = f.bracket(&e, 6).unwrap().action_part();
        let unit = Scalar::i(E).mul_int(-2 * SIGMA);
        assert_eq!(b.coefficient(&Monomial::action(&[1, 1])), unit.mul_int(4));
        assert_eq!(b.coefficient(&Monomial::action(&[2, 0])), unit.mul_int(1));
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn lie_transform_eliminates_a_monomial() {
        let w = [c(1), Scalar::ratio(-21, 10, E)];
        let hw = PoissonSeries::quadratic(&w, 6);
        let m = mono(&[2, 1], &[0, 0]);
        let coef = Scalar::ratio(3, 1, E);
        let h = hw.add(&PoissonSeries::monomial(2, 6, m.clone(), coef.clone()).unwrap()).unwrap();
        let pairing = Scalar::ratio(2 * 10 - 21, 10, E);
        let chi = PoissonSeries::monomial(2, 6, m.clone(), (&coef / &pairing).mul_i().mul_int(-SIGMA)).unwrap();
        let out = h.lie_transform(&chi, 6).unwrap();
        assert!(out.coefficient(&m).is_zero());
        for (mm, _) in out.terms() {
            assert!(mm.degree() == 2 || mm.degree() > 3, "unexpected term {mm}");
        }
    }

    #[test]
    fn lie_transform_rejects_low_generators() {
        let h = saddle(2, 1, 6);
        let chi = PoissonSeries::action(2, 6, 0, c(1));
        assert_eq!(h.lie_transform(&chi, 6), Err(Error::GeneratorDegree(2)));
        let zero = PoissonSeries::zero(2, 6, E);
        assert_eq!(h.lie_transform(&zero, 6).unwrap(), h);
    }

    #[test]
    fn pair_caps_truncate() {
        let f = saddle(2, 1, 8).with_pair_cap(0, 1);
        assert!(f.is_zero());
        let i1 = PoissonSeries::action(2, 8, 0, c(1)).with_pair_cap(0, 2);
        assert!(i1.mul(&i1, 8).unwrap().is_zero());
    }

    #[test]
    fn json_roundtrip() {
        let f = saddle(2, 1, 5).scale(&Scalar::ratio(-7, 3, E)).unwrap();
        let j = serde_json::to_string(&f.to_json()).unwrap();
        assert!(j.contains("\"N\":5"));
        assert!(j.contains("\"-7/3\""));
        let back = PoissonSeries::from_json(&serde_json::from_str(&j).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn reality_flag() {
        assert!(saddle(2, 1, 4).is_real());
        let one_sided = PoissonSeries::monomial(2, 4, mono(&[2, 1], &[0, 0]), c(1)).unwrap();
        assert!(!one_sided.is_real());
        let imag = saddle(2, 1, 4).scale(&Scalar::i(E)).unwrap();
        assert!(!imag.is_real());
    }
}
