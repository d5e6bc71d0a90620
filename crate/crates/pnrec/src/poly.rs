//! Sparse graded-commutative polynomials over exact rationals.
//!
//! A monomial is a sorted list of `(variable, exponent)` factors; odd
//! variables carry exponent exactly 1 and anticommute, so sorting a raw
//! factor word produces a Koszul sign in `{+1, -1, 0}`. Polynomials are
//! `BTreeMap`s from monomials to nonzero `BigRational` coefficients, which
//! keeps every operation deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::variable::{same_table, Parity, VarId, VarKind, VariableTable};

/// Exact coefficient type used everywhere in the crate.
pub type Coeff = BigRational;

/// Convenience constructor for integer coefficients.
pub fn coeff_int(n: i64) -> Coeff {
    Coeff::from_integer(n.into())
}

/// Convenience constructor for `a/b` coefficients. Panics on `b = 0`.
pub fn coeff_ratio(n: i64, d: i64) -> Coeff {
    Coeff::new(n.into(), d.into())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("operands belong to different variable tables")]
    TableMismatch,
    #[error("unknown variable {name}")]
    UnknownVariable { name: String },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown variable `{name}` at byte {offset}")]
    ParseUnknownVariable { offset: usize, name: String },
    #[error("odd variable `{name}` raised to power {exponent} at byte {offset}")]
    ParseOddPower { offset: usize, name: String, exponent: u32 },
}

/// Sorted monomial: factors ascend by variable id, exponents are positive,
/// and odd variables appear with exponent exactly 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    factors: Vec<(VarId, u32)>,
}

impl Monomial {
    pub fn unit() -> Self {
        Monomial { factors: Vec::new() }
    }

    pub fn is_unit(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factors(&self) -> &[(VarId, u32)] {
        &self.factors
    }

    /// Total degree: sum of exponents.
    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent_of(&self, v: VarId) -> u32 {
        self.factors
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, e)| e)
            .unwrap_or(0)
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.exponent_of(v) > 0
    }

    /// Parity of the monomial: number of odd factors mod 2.
    pub fn parity(&self, table: &VariableTable) -> Parity {
        let odd = self
            .factors
            .iter()
            .filter(|&&(v, e)| table.parity(v).is_odd() && e % 2 == 1)
            .count();
        if odd % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Z-grading: exponent-weighted sum of variable gradings.
    pub fn zgrade(&self, table: &VariableTable) -> i64 {
        self.factors
            .iter()
            .map(|&(v, e)| table.var(v).zgrade * e as i64)
            .sum()
    }
}

/// Monomials order by total degree, then lexicographically on the sorted
/// factor list. The order is only required to be total and stable; it fixes
/// term order in maps and in printed output.
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.degree(), &self.factors).cmp(&(other.degree(), &other.factors))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Sort a raw factor word into canonical form, accumulating the Koszul sign.
///
/// Transposing two odd blocks contributes -1; an odd variable occurring twice
/// (or with exponent >= 2) collapses the whole monomial to zero, reported as
/// sign 0 together with the unit monomial.
pub fn normalize_monomial(
    table: &VariableTable,
    raw: &[(VarId, u32)],
) -> Result<(Monomial, i64), AlgebraError> {
    let mut out: Vec<(VarId, u32)> = Vec::with_capacity(raw.len());
    let mut sign = 1i64;
    for &(v, e) in raw {
        if !table.contains(v) {
            return Err(AlgebraError::UnknownVariable { name: format!("#{}", v.0) });
        }
        if e == 0 {
            continue;
        }
        let odd = table.parity(v).is_odd();
        if odd && e >= 2 {
            return Ok((Monomial::unit(), 0));
        }
        // The incoming block starts at the right end; moving it to its sorted
        // position passes every block currently greater than v.
        let pos = out.partition_point(|&(w, _)| w <= v);
        if odd {
            let odd_passed = out[pos..]
                .iter()
                .filter(|&&(w, ee)| table.parity(w).is_odd() && ee % 2 == 1)
                .count();
            if odd_passed % 2 == 1 {
                sign = -sign;
            }
        }
        if pos > 0 && out[pos - 1].0 == v {
            if odd {
                return Ok((Monomial::unit(), 0));
            }
            out[pos - 1].1 += e;
        } else {
            out.insert(pos, (v, e));
        }
    }
    Ok((Monomial { factors: out }, sign))
}

/// Window truncation: `max_orbit` drops monomials containing a p/q variable
/// whose orbit index exceeds the bound in absolute value; `max_degree`, when
/// present, drops monomials of larger total degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationWindow {
    pub max_orbit: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<u32>,
}

impl TruncationWindow {
    pub fn orbit(max_orbit: u32) -> Self {
        TruncationWindow { max_orbit, max_degree: None }
    }

    pub fn keeps(&self, table: &VariableTable, m: &Monomial) -> bool {
        if let Some(d) = self.max_degree {
            if m.degree() > d {
                return false;
            }
        }
        m.factors().iter().all(|&(v, _)| self.keeps_var(table, v))
    }

    /// Whether the variable itself survives restriction to the window.
    /// Parameters (t, tau, Novikov) always do; p/q variables only while
    /// their orbit index stays within `max_orbit`.
    pub fn keeps_var(&self, table: &VariableTable, v: VarId) -> bool {
        let var = table.var(v);
        if matches!(var.kind, VarKind::P | VarKind::Q) {
            if let Some(orbit) = var.orbit_index {
                if orbit.unsigned_abs() > self.max_orbit as u64 {
                    return false;
                }
            }
        }
        true
    }
}

/// Sparse polynomial bound to a variable table.
#[derive(Debug, Clone)]
pub struct Polynomial {
    table: Arc<VariableTable>,
    terms: BTreeMap<Monomial, Coeff>,
}

impl PartialEq for Polynomial {
    fn eq(&self, other: &Self) -> bool {
        same_table(&self.table, &other.table) && self.terms == other.terms
    }
}

impl Eq for Polynomial {}

impl Polynomial {
    pub fn zero(table: &Arc<VariableTable>) -> Self {
        Polynomial { table: Arc::clone(table), terms: BTreeMap::new() }
    }

    pub fn one(table: &Arc<VariableTable>) -> Self {
        Self::constant(table, Coeff::one())
    }

    pub fn constant(table: &Arc<VariableTable>, c: Coeff) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Monomial::unit(), c);
        }
        Polynomial { table: Arc::clone(table), terms }
    }

    pub fn variable(table: &Arc<VariableTable>, v: VarId) -> Result<Self, AlgebraError> {
        let (m, sign) = normalize_monomial(table, &[(v, 1)])?;
        debug_assert_eq!(sign, 1);
        let mut terms = BTreeMap::new();
        terms.insert(m, Coeff::one());
        Ok(Polynomial { table: Arc::clone(table), terms })
    }

    /// Build from raw `(coefficient, factor word)` terms; words are
    /// normalized and like terms collected.
    pub fn from_terms(
        table: &Arc<VariableTable>,
        terms: &[(Coeff, Vec<(VarId, u32)>)],
    ) -> Result<Self, AlgebraError> {
        let mut out = Polynomial::zero(table);
        for (c, raw) in terms {
            let (m, sign) = normalize_monomial(table, raw)?;
            if sign != 0 && !c.is_zero() {
                out.add_term(m, c * coeff_int(sign));
            }
        }
        Ok(out)
    }

    pub fn table(&self) -> &Arc<VariableTable> {
        &self.table
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Coeff)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, m: &Monomial) -> Coeff {
        self.terms.get(m).cloned().unwrap_or_else(Coeff::zero)
    }

    /// Maximal total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::degree).max()
    }

    fn add_term(&mut self, m: Monomial, c: Coeff) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get() + &c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, AlgebraError> {
        if !same_table(&self.table, &other.table) {
            return Err(AlgebraError::TableMismatch);
        }
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, AlgebraError> {
        self.checked_add(&other.neg())
    }

    pub fn neg(&self) -> Polynomial {
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect();
        Polynomial { table: Arc::clone(&self.table), terms }
    }

    pub fn scale(&self, c: &Coeff) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(&self.table);
        }
        let terms = self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect();
        Polynomial { table: Arc::clone(&self.table), terms }
    }

    /// Graded product. Koszul signs come out of re-sorting the concatenated
    /// factor words.
    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, AlgebraError> {
        if !same_table(&self.table, &other.table) {
            return Err(AlgebraError::TableMismatch);
        }
        let mut out = Polynomial::zero(&self.table);
        let mut raw: Vec<(VarId, u32)> = Vec::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                raw.clear();
                raw.extend_from_slice(m1.factors());
                raw.extend_from_slice(m2.factors());
                let (m, sign) = normalize_monomial(&self.table, &raw)?;
                if sign != 0 {
                    out.add_term(m, c1 * c2 * coeff_int(sign));
                }
            }
        }
        Ok(out)
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut out = Polynomial::one(&self.table);
        for _ in 0..e {
            out = out.checked_mul(self).expect("same table");
        }
        out
    }

    /// Left graded partial derivative: the differentiated factor is commuted
    /// to the leftmost position (collecting a sign past odd factors) and then
    /// stripped.
    pub fn partial_derivative(&self, v: VarId) -> Result<Polynomial, AlgebraError> {
        if !self.table.contains(v) {
            return Err(AlgebraError::UnknownVariable { name: format!("#{}", v.0) });
        }
        let v_odd = self.table.parity(v).is_odd();
        let mut out = Polynomial::zero(&self.table);
        for (m, c) in &self.terms {
            let Some(idx) = m.factors().iter().position(|&(w, _)| w == v) else {
                continue;
            };
            let (_, e) = m.factors()[idx];
            let mut sign = 1i64;
            if v_odd {
                let odd_before = m.factors()[..idx]
                    .iter()
                    .filter(|&&(w, ee)| self.table.parity(w).is_odd() && ee % 2 == 1)
                    .count();
                if odd_before % 2 == 1 {
                    sign = -1;
                }
            }
            let mut factors = m.factors().to_vec();
            if e == 1 {
                factors.remove(idx);
            } else {
                factors[idx].1 = e - 1;
            }
            out.add_term(
                Monomial { factors },
                c * coeff_int(sign) * coeff_int(e as i64),
            );
        }
        Ok(out)
    }

    /// Drop terms outside the window. Linear and idempotent.
    pub fn truncate(&self, window: &TruncationWindow) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| window.keeps(&self.table, m))
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        Polynomial { table: Arc::clone(&self.table), terms }
    }

    /// Drop terms containing any of the listed variables (restriction to the
    /// subspace where they vanish).
    pub fn set_vars_to_zero(&self, vars: &[VarId]) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(m, _)| !vars.iter().any(|&v| m.contains(v)))
            .map(|(m, c)| (m.clone(), c.clone()))
            .collect();
        Polynomial { table: Arc::clone(&self.table), terms }
    }

    /// Parity if all terms agree (zero counts as even), `None` otherwise.
    pub fn parity(&self) -> Option<Parity> {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return Some(Parity::Even);
        };
        let p = first.parity(&self.table);
        for m in it {
            if m.parity(&self.table) != p {
                return None;
            }
        }
        Some(p)
    }

    /// Split into (even part, odd part).
    pub fn parity_parts(&self) -> (Polynomial, Polynomial) {
        let mut even = Polynomial::zero(&self.table);
        let mut odd = Polynomial::zero(&self.table);
        for (m, c) in &self.terms {
            match m.parity(&self.table) {
                Parity::Even => even.add_term(m.clone(), c.clone()),
                Parity::Odd => odd.add_term(m.clone(), c.clone()),
            }
        }
        (even, odd)
    }

    /// Common z-grade of all terms, if homogeneous (zero counts as any grade,
    /// reported as `Some(0)`).
    pub fn zgrade(&self) -> Option<i64> {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else {
            return Some(0);
        };
        let g = first.zgrade(&self.table);
        for m in it {
            if m.zgrade(&self.table) != g {
                return None;
            }
        }
        Some(g)
    }

    /// Total degree in p/q variables only (exponent-weighted), per monomial
    /// maximum; used by the Euler-homotopy reconstruction.
    pub fn pq_degree_of(&self, m: &Monomial) -> u32 {
        m.factors()
            .iter()
            .filter(|&&(v, _)| matches!(self.table.kind(v), VarKind::P | VarKind::Q))
            .map(|&(_, e)| e)
            .sum()
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial addition across tables")
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial subtraction across tables")
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial product across tables")
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial::neg(self)
    }
}

/// Canonical text form: terms in map order, coefficients as `a` or `a/b`,
/// `*` between all factors, `^` for exponents above 1. Round-trips through
/// the parser.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, "-")?;
            } else {
                write!(f, "+")?;
            }
            let a = c.abs();
            if m.is_unit() {
                write!(f, "{a}")?;
            } else {
                if !a.is_one() {
                    write!(f, "{a}*")?;
                }
                for (j, &(v, e)) in m.factors().iter().enumerate() {
                    if j > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{}", self.table.name(v))?;
                    if e > 1 {
                        write!(f, "^{e}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variable::Variable;

    fn mixed_table() -> Arc<VariableTable> {
        VariableTable::new(vec![
            Variable::orbit("q1", VarKind::Q, Parity::Even, 1, 1),
            Variable::orbit("q2", VarKind::Q, Parity::Even, 2, 2),
            Variable::orbit("th1", VarKind::Q, Parity::Odd, 1, 1),
            Variable::orbit("th2", VarKind::Q, Parity::Odd, 2, 2),
            Variable::parameter("t1", VarKind::T),
        ])
        .unwrap()
    }

    fn id(t: &Arc<VariableTable>, name: &str) -> VarId {
        t.id(name).unwrap()
    }

    #[test]
    fn normalize_sorts_and_merges() {
        let t = mixed_table();
        let (m, s) =
            normalize_monomial(&t, &[(id(&t, "q2"), 1), (id(&t, "q1"), 2), (id(&t, "q1"), 1)])
                .unwrap();
        assert_eq!(s, 1);
        assert_eq!(m.factors(), &[(id(&t, "q1"), 3), (id(&t, "q2"), 1)]);
    }

    #[test]
    fn normalize_counts_odd_transpositions() {
        let t = mixed_table();
        let (m, s) = normalize_monomial(&t, &[(id(&t, "th2"), 1), (id(&t, "th1"), 1)]).unwrap();
        assert_eq!(s, -1);
        assert_eq!(m.factors(), &[(id(&t, "th1"), 1), (id(&t, "th2"), 1)]);

        // Even blocks pass odd blocks freely.
        let (_, s) = normalize_monomial(&t, &[(id(&t, "th1"), 1), (id(&t, "q1"), 1)]).unwrap();
        assert_eq!(s, 1);
    }

    #[test]
    fn normalize_kills_odd_squares() {
        let t = mixed_table();
        let (_, s) = normalize_monomial(&t, &[(id(&t, "th1"), 2)]).unwrap();
        assert_eq!(s, 0);
        let (_, s) =
            normalize_monomial(&t, &[(id(&t, "th1"), 1), (id(&t, "q1"), 1), (id(&t, "th1"), 1)])
                .unwrap();
        assert_eq!(s, 0);
    }

    #[test]
    fn product_collects_cross_terms() {
        // (q1 + th1)(q1 - th1) = q1^2: the odd cross terms cancel.
        let t = mixed_table();
        let q1 = Polynomial::variable(&t, id(&t, "q1")).unwrap();
        let th1 = Polynomial::variable(&t, id(&t, "th1")).unwrap();
        let lhs = (&q1 + &th1).checked_mul(&(&q1 - &th1)).unwrap();
        assert_eq!(lhs, q1.pow(2));
    }

    #[test]
    fn product_koszul_sign_both_orders() {
        let t = mixed_table();
        let th1 = Polynomial::variable(&t, id(&t, "th1")).unwrap();
        let th2 = Polynomial::variable(&t, id(&t, "th2")).unwrap();
        let ab = &th1 * &th2;
        let ba = &th2 * &th1;
        assert_eq!(ba, ab.neg());
        assert!((&th1 * &th1).is_zero());
    }

    #[test]
    fn left_derivative_signs() {
        let t = mixed_table();
        let th1 = id(&t, "th1");
        let th2 = id(&t, "th2");
        let m = Polynomial::from_terms(&t, &[(coeff_int(1), vec![(th1, 1), (th2, 1)])]).unwrap();
        // d/dth2 (th1 th2) = -th1: th2 moves left past th1.
        let d = m.partial_derivative(th2).unwrap();
        let th1p = Polynomial::variable(&t, th1).unwrap();
        assert_eq!(d, th1p.neg());
        // d/dth1 (th1 th2) = th2.
        let d = m.partial_derivative(th1).unwrap();
        assert_eq!(d, Polynomial::variable(&t, th2).unwrap());
    }

    #[test]
    fn derivative_multiplies_by_even_exponent() {
        let t = mixed_table();
        let q1 = id(&t, "q1");
        let f = Polynomial::from_terms(&t, &[(coeff_ratio(3, 2), vec![(q1, 4)])]).unwrap();
        let d = f.partial_derivative(q1).unwrap();
        let expected = Polynomial::from_terms(&t, &[(coeff_int(6), vec![(q1, 3)])]).unwrap();
        assert_eq!(d, expected);
    }

    #[test]
    fn truncation_drops_high_orbits_and_degrees() {
        let t = mixed_table();
        let q1 = id(&t, "q1");
        let q2 = id(&t, "q2");
        let t1 = id(&t, "t1");
        let f = Polynomial::from_terms(
            &t,
            &[
                (coeff_int(1), vec![(q1, 1)]),
                (coeff_int(1), vec![(q2, 1)]),
                (coeff_int(1), vec![(t1, 5)]),
            ],
        )
        .unwrap();
        let w = TruncationWindow::orbit(1);
        let g = f.truncate(&w);
        assert_eq!(g.num_terms(), 2); // q2 dropped, t1^5 kept (no orbit)
        assert!(!g.terms.keys().any(|m| m.contains(q2)));

        let w = TruncationWindow { max_orbit: 9, max_degree: Some(1) };
        let g = f.truncate(&w);
        assert_eq!(g.num_terms(), 2); // t1^5 dropped by degree
        let gg = g.truncate(&w);
        assert_eq!(g, gg); // idempotent
    }

    #[test]
    fn parity_and_grade_detection() {
        let t = mixed_table();
        let q1 = Polynomial::variable(&t, id(&t, "q1")).unwrap();
        let th1 = Polynomial::variable(&t, id(&t, "th1")).unwrap();
        assert_eq!(q1.parity(), Some(Parity::Even));
        assert_eq!(th1.parity(), Some(Parity::Odd));
        assert_eq!((&q1 + &th1).parity(), None);
        let (e, o) = (&q1 + &th1).parity_parts();
        assert_eq!(e, q1);
        assert_eq!(o, th1);
    }

    #[test]
    fn display_formats_canonically() {
        let t = mixed_table();
        let q1 = id(&t, "q1");
        let t1 = id(&t, "t1");
        let f = Polynomial::from_terms(
            &t,
            &[
                (coeff_ratio(-1, 2), vec![(q1, 2)]),
                (coeff_int(3), vec![(q1, 1), (t1, 1)]),
                (coeff_int(1), vec![]),
            ],
        )
        .unwrap();
        assert_eq!(f.to_string(), "1+3*q1*t1-1/2*q1^2");
        assert_eq!(Polynomial::zero(&t).to_string(), "0");
    }
}
