//! Poisson pencils of explicit bivectors over even tables, jacobiators, and
//! the Lenard-Magri Casimir expansion.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_traits::Zero;
use thiserror::Error;

use crate::linalg::{solve, SolveOutcome};
use crate::poly::{AlgebraError, Coeff, Monomial, Polynomial};
use crate::tensor::{Bivector, Symmetry, TensorError};
use crate::variable::{same_table, VarId, VariableTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PencilError {
    #[error("bivector brackets require an all-even variable table")]
    OddVariablesUnsupported,
    #[error("operation requires an antisymmetric bivector")]
    NotAntisymmetric,
    #[error("jacobiator of {which} does not vanish at ({a},{b},{c})")]
    NotPoisson { which: &'static str, a: String, b: String, c: String },
    #[error("pencil structures are not compatible: jacobiator of the sum is nonzero at ({a},{b},{c})")]
    Incompatible { a: String, b: String, c: String },
    #[error("seed is not a Casimir of the first structure")]
    SeedNotCasimir,
    #[error("no solution of degree <= {degree} at recursion step {step}")]
    NoSolutionWithinDegree { degree: u32, step: usize },
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn require_even_antisymmetric(b: &Bivector) -> Result<(), PencilError> {
    if b.symmetry() != Symmetry::Antisymmetric {
        return Err(PencilError::NotAntisymmetric);
    }
    if b.table().ids().any(|v| b.table().parity(v).is_odd()) {
        return Err(PencilError::OddVariablesUnsupported);
    }
    Ok(())
}

/// Bracket of an explicit bivector: `{f,g}_B = sum_{ij} d_i f B^{ij} d_j g`.
pub fn bivector_bracket(
    b: &Bivector,
    f: &Polynomial,
    g: &Polynomial,
) -> Result<Polynomial, PencilError> {
    require_even_antisymmetric(b)?;
    if !same_table(b.table(), f.table()) || !same_table(b.table(), g.table()) {
        return Err(AlgebraError::TableMismatch.into());
    }
    let mut out = Polynomial::zero(b.table());
    for ((i, j), entry) in b.entries() {
        let di = f.partial_derivative(i)?;
        if di.is_zero() {
            continue;
        }
        let dj = g.partial_derivative(j)?;
        if dj.is_zero() {
            continue;
        }
        out = out.checked_add(&di.checked_mul(entry)?.checked_mul(&dj)?)?;
    }
    Ok(out)
}

/// Per-coordinate Hamiltonian derivations `a -> {v^a, f}_B = sum_j B^{aj} d_j f`;
/// zero components omitted.
pub fn coordinate_bracket_field(
    b: &Bivector,
    f: &Polynomial,
) -> Result<BTreeMap<VarId, Polynomial>, PencilError> {
    require_even_antisymmetric(b)?;
    if !same_table(b.table(), f.table()) {
        return Err(AlgebraError::TableMismatch.into());
    }
    let mut out: BTreeMap<VarId, Polynomial> = BTreeMap::new();
    for ((a, j), entry) in b.entries() {
        let dj = f.partial_derivative(j)?;
        if dj.is_zero() {
            continue;
        }
        let term = entry.checked_mul(&dj)?;
        use std::collections::btree_map::Entry;
        match out.entry(a) {
            Entry::Vacant(e) => {
                e.insert(term);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get().checked_add(&term)?;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }
    out.retain(|_, p| !p.is_zero());
    Ok(out)
}

pub fn is_casimir(b: &Bivector, f: &Polynomial) -> Result<bool, PencilError> {
    Ok(coordinate_bracket_field(b, f)?.is_empty())
}

/// Jacobiator on coordinate triples `a < b < c`:
/// `J^{abc} = {v^a, B^{bc}} + {v^b, B^{ca}} + {v^c, B^{ab}}`.
/// The bivector is Poisson iff the map is empty.
pub fn jacobiator(
    b: &Bivector,
) -> Result<BTreeMap<(VarId, VarId, VarId), Polynomial>, PencilError> {
    require_even_antisymmetric(b)?;
    let table = b.table();
    let ids: Vec<VarId> = table.ids().collect();
    let mut out = BTreeMap::new();
    for (i, &va) in ids.iter().enumerate() {
        for (j, &vb) in ids.iter().enumerate().skip(i + 1) {
            for &vc in ids.iter().skip(j + 1) {
                let mut acc = hamiltonian_of(b, va, &b.entry(vb, vc))?;
                acc = acc.checked_add(&hamiltonian_of(b, vb, &b.entry(vc, va))?)?;
                acc = acc.checked_add(&hamiltonian_of(b, vc, &b.entry(va, vb))?)?;
                if !acc.is_zero() {
                    out.insert((va, vb, vc), acc);
                }
            }
        }
    }
    Ok(out)
}

fn hamiltonian_of(b: &Bivector, a: VarId, f: &Polynomial) -> Result<Polynomial, PencilError> {
    let mut out = Polynomial::zero(b.table());
    if f.is_zero() {
        return Ok(out);
    }
    for j in b.table().ids() {
        let entry = b.entry(a, j);
        if entry.is_zero() {
            continue;
        }
        let dj = f.partial_derivative(j)?;
        if dj.is_zero() {
            continue;
        }
        out = out.checked_add(&entry.checked_mul(&dj)?)?;
    }
    Ok(out)
}

/// Compatible pair of Poisson bivectors; all three jacobiators (P1, P2,
/// P1+P2) are checked to vanish at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoissonPencil {
    p1: Bivector,
    p2: Bivector,
}

impl PoissonPencil {
    pub fn new(p1: Bivector, p2: Bivector) -> Result<Self, PencilError> {
        if !same_table(p1.table(), p2.table()) {
            return Err(AlgebraError::TableMismatch.into());
        }
        for (b, which) in [(&p1, "P1"), (&p2, "P2")] {
            if let Some((&(a, bb, c), _)) = jacobiator(b)?.iter().next() {
                let t = b.table();
                return Err(PencilError::NotPoisson {
                    which,
                    a: t.name(a).to_string(),
                    b: t.name(bb).to_string(),
                    c: t.name(c).to_string(),
                });
            }
        }
        let sum = p1.checked_add(&p2)?;
        if let Some((&(a, bb, c), _)) = jacobiator(&sum)?.iter().next() {
            let t = sum.table();
            return Err(PencilError::Incompatible {
                a: t.name(a).to_string(),
                b: t.name(bb).to_string(),
                c: t.name(c).to_string(),
            });
        }
        Ok(PoissonPencil { p1, p2 })
    }

    pub fn table(&self) -> &Arc<VariableTable> {
        self.p1.table()
    }

    pub fn p1(&self) -> &Bivector {
        &self.p1
    }

    pub fn p2(&self) -> &Bivector {
        &self.p2
    }
}

/// Output of `casimir_expand`: the seed `c_{-1}` and the computed
/// coefficients `c_0, c_1, ...`, plus per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CasimirTower {
    pub seed: Polynomial,
    pub coefficients: Vec<Polynomial>,
    /// Kernel dimension of the linear system actually solved at each step
    /// (nontrivial freedom beyond additive constants, which are excluded
    /// from the ansatz).
    pub kernel_dims: Vec<usize>,
    /// The seed is a common Casimir of both structures: the recursion
    /// degenerates and every coefficient is zero.
    pub resonant: bool,
    /// Some coefficient is a common Casimir, closing the tower; later
    /// coefficients are all zero.
    pub terminated: bool,
}

impl CasimirTower {
    /// All entries `c_{-1}, c_0, ...` in recursion order.
    pub fn entries(&self) -> Vec<&Polynomial> {
        std::iter::once(&self.seed).chain(self.coefficients.iter()).collect()
    }

    /// Re-check the defining relation `{v^a, c_{i+1}}_1 = {v^a, c_i}_2`.
    pub fn verify(&self, pencil: &PoissonPencil) -> Result<bool, PencilError> {
        let all = self.entries();
        for w in all.windows(2) {
            let lhs = coordinate_bracket_field(pencil.p1(), w[1])?;
            let rhs = coordinate_bracket_field(pencil.p2(), w[0])?;
            if lhs != rhs {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Lenard-Magri expansion: solve `P1 dc_{i+1} = P2 dc_i` step by step on a
/// polynomial ansatz of total degree 1..=D.
///
/// Each step first tries the augmented system that also demands
/// `P2 dc_{i+1} = 0`: when a step can close the tower with a common Casimir
/// it does, which keeps later coefficients zero instead of sprouting
/// arbitrary kernel elements. Free coordinates of whichever system gets
/// solved are set to zero, making the output deterministic.
pub fn casimir_expand(
    pencil: &PoissonPencil,
    seed: &Polynomial,
    order: usize,
    degree_bound: Option<u32>,
) -> Result<CasimirTower, PencilError> {
    let table = pencil.table();
    if !same_table(table, seed.table()) {
        return Err(AlgebraError::TableMismatch.into());
    }
    if !is_casimir(pencil.p1(), seed)? {
        return Err(PencilError::SeedNotCasimir);
    }
    let resonant = is_casimir(pencil.p2(), seed)?;
    let degree = degree_bound.unwrap_or(seed.degree().unwrap_or(0) + order as u32 + 1);

    let ansatz = monomials_up_to(table, degree);
    // Images of each ansatz monomial under both coordinate-bracket maps.
    let mut images1 = Vec::with_capacity(ansatz.len());
    let mut images2 = Vec::with_capacity(ansatz.len());
    for m in &ansatz {
        let poly = monomial_poly(table, m)?;
        images1.push(coordinate_bracket_field(pencil.p1(), &poly)?);
        images2.push(coordinate_bracket_field(pencil.p2(), &poly)?);
    }

    let mut coefficients = Vec::with_capacity(order);
    let mut kernel_dims = Vec::with_capacity(order);
    let mut terminated = false;
    let mut prev = seed.clone();
    for step in 0..order {
        let rhs = coordinate_bracket_field(pencil.p2(), &prev)?;
        if rhs.is_empty() {
            terminated = true;
        }
        // Try [P1 dc = rhs, P2 dc = 0] first, then the plain step.
        let zero_rhs: BTreeMap<VarId, Polynomial> = BTreeMap::new();
        let attempt = solve_step(&ansatz, &[(&images1, &rhs), (&images2, &zero_rhs)]);
        let (solution, kernel_dim) = match attempt {
            Some(ok) => ok,
            None => match solve_step(&ansatz, &[(&images1, &rhs)]) {
                Some(ok) => ok,
                None => {
                    return Err(PencilError::NoSolutionWithinDegree { degree, step });
                }
            },
        };
        let mut next = Polynomial::zero(table);
        for (x, m) in solution.iter().zip(&ansatz) {
            if !x.is_zero() {
                let poly = monomial_poly(table, m)?.scale(x);
                next = next.checked_add(&poly)?;
            }
        }
        coefficients.push(next.clone());
        kernel_dims.push(kernel_dim);
        prev = next;
    }
    Ok(CasimirTower { seed: seed.clone(), coefficients, kernel_dims, resonant, terminated })
}

/// Assemble and solve the block system `sum_m x_m L[m] = target` for the
/// given (images, target) blocks; returns the canonical solution and kernel
/// dimension, or None when inconsistent.
fn solve_step(
    ansatz: &[Monomial],
    blocks: &[(&Vec<BTreeMap<VarId, Polynomial>>, &BTreeMap<VarId, Polynomial>)],
) -> Option<(Vec<Coeff>, usize)> {
    // Row space: (block, coordinate, monomial) triples present anywhere.
    let mut rows: BTreeSet<(usize, VarId, Monomial)> = BTreeSet::new();
    for (bi, (images, target)) in blocks.iter().enumerate() {
        for img in images.iter() {
            for (&a, p) in img {
                for (m, _) in p.terms() {
                    rows.insert((bi, a, m.clone()));
                }
            }
        }
        for (&a, p) in target.iter() {
            for (m, _) in p.terms() {
                rows.insert((bi, a, m.clone()));
            }
        }
    }
    let rows: Vec<(usize, VarId, Monomial)> = rows.into_iter().collect();
    let mut matrix = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    for (bi, a, m) in &rows {
        let (images, target) = blocks[*bi];
        let mut row = Vec::with_capacity(ansatz.len());
        for img in images.iter() {
            let c = img.get(a).map(|p| p.coeff(m)).unwrap_or_else(Coeff::zero);
            row.push(c);
        }
        matrix.push(row);
        b.push(target.get(a).map(|p| p.coeff(m)).unwrap_or_else(Coeff::zero));
    }
    match solve(&matrix, &b) {
        SolveOutcome::Solved { x, kernel_dim } => Some((x, kernel_dim)),
        SolveOutcome::Inconsistent => None,
    }
}

fn monomial_poly(table: &Arc<VariableTable>, m: &Monomial) -> Result<Polynomial, PencilError> {
    Ok(Polynomial::from_terms(
        table,
        &[(Coeff::from_integer(1.into()), m.factors().to_vec())],
    )?)
}

/// All monomials of total degree 1..=max over the table (even variables
/// assumed; constants excluded as pure bracket gauge).
fn monomials_up_to(table: &Arc<VariableTable>, max: u32) -> Vec<Monomial> {
    let ids: Vec<VarId> = table.ids().collect();
    let mut acc: Vec<Vec<(VarId, u32)>> = vec![Vec::new()];
    for &v in &ids {
        let mut next = Vec::new();
        for word in &acc {
            let used: u32 = word.iter().map(|&(_, e)| e).sum();
            for e in 0..=(max - used) {
                let mut w = word.clone();
                if e > 0 {
                    w.push((v, e));
                }
                next.push(w);
            }
        }
        acc = next;
    }
    let mut out: Vec<Monomial> = Vec::new();
    for word in acc {
        if word.is_empty() {
            continue;
        }
        let (m, sign) = crate::poly::normalize_monomial(table, &word).expect("known vars");
        debug_assert_eq!(sign, 1);
        out.push(m);
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_polynomial;
    use crate::variable::{VarKind, Variable};

    fn xyz_table() -> Arc<VariableTable> {
        VariableTable::new(vec![
            Variable::parameter("x", VarKind::T),
            Variable::parameter("y", VarKind::T),
            Variable::parameter("z", VarKind::T),
        ])
        .unwrap()
    }

    fn poly(t: &Arc<VariableTable>, s: &str) -> Polynomial {
        parse_polynomial(t, s).unwrap()
    }

    fn antisym(
        t: &Arc<VariableTable>,
        entries: &[(&str, &str, &str)],
    ) -> Bivector {
        let mut list = Vec::new();
        for (a, b, expr) in entries {
            let p = poly(t, expr);
            let ia = t.id(a).unwrap();
            let ib = t.id(b).unwrap();
            list.push(((ia, ib), p.clone()));
            list.push(((ib, ia), p.neg()));
        }
        Bivector::new(t, list, Symmetry::Antisymmetric).unwrap()
    }

    fn so3(t: &Arc<VariableTable>) -> Bivector {
        antisym(t, &[("x", "y", "z"), ("y", "z", "x"), ("z", "x", "y")])
    }

    fn constant_xy(t: &Arc<VariableTable>) -> Bivector {
        antisym(t, &[("x", "y", "1")])
    }

    #[test]
    fn jacobiator_detects_broken_so3() {
        let t = xyz_table();
        assert!(jacobiator(&so3(&t)).unwrap().is_empty());
        assert!(jacobiator(&constant_xy(&t)).unwrap().is_empty());
        // {x,y} = z, {y,z} = x, {z,x} = x: J(x,y,z) = -z.
        let broken = antisym(&t, &[("x", "y", "z"), ("y", "z", "x"), ("z", "x", "x")]);
        let j = jacobiator(&broken).unwrap();
        let key = (t.id("x").unwrap(), t.id("y").unwrap(), t.id("z").unwrap());
        assert_eq!(j.get(&key), Some(&poly(&t, "-z")));
    }

    #[test]
    fn pencil_construction_checks_compatibility() {
        let t = xyz_table();
        assert!(PoissonPencil::new(constant_xy(&t), so3(&t)).is_ok());
        // {x,y} = z and {y,z} = y are separately Poisson but incompatible.
        let a = antisym(&t, &[("x", "y", "z")]);
        let b = antisym(&t, &[("y", "z", "y")]);
        assert!(jacobiator(&a).unwrap().is_empty());
        assert!(jacobiator(&b).unwrap().is_empty());
        let err = PoissonPencil::new(a, b).unwrap_err();
        assert!(matches!(err, PencilError::Incompatible { .. }));
    }

    #[test]
    fn casimir_expand_so3_tower() {
        let t = xyz_table();
        let pencil = PoissonPencil::new(constant_xy(&t), so3(&t)).unwrap();
        let tower = casimir_expand(&pencil, &poly(&t, "z"), 3, None).unwrap();
        assert_eq!(tower.coefficients.len(), 3);
        assert_eq!(tower.coefficients[0], poly(&t, "-1/2*x^2-1/2*y^2-1/2*z^2"));
        assert!(tower.coefficients[1].is_zero());
        assert!(tower.coefficients[2].is_zero());
        assert!(!tower.resonant);
        assert!(tower.terminated);
        assert!(tower.verify(&pencil).unwrap());
        // All tower entries commute in both structures.
        for f in tower.entries() {
            for g in tower.entries() {
                assert!(bivector_bracket(pencil.p1(), f, g).unwrap().is_zero());
                assert!(bivector_bracket(pencil.p2(), f, g).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn degenerate_pencil_sets_resonance() {
        let t = xyz_table();
        let pencil = PoissonPencil::new(constant_xy(&t), constant_xy(&t)).unwrap();
        let tower = casimir_expand(&pencil, &poly(&t, "z"), 2, None).unwrap();
        assert!(tower.resonant);
        assert!(tower.coefficients.iter().all(|c| c.is_zero()));
    }

    #[test]
    fn seed_must_be_casimir() {
        let t = xyz_table();
        let pencil = PoissonPencil::new(constant_xy(&t), so3(&t)).unwrap();
        let err = casimir_expand(&pencil, &poly(&t, "x"), 1, None).unwrap_err();
        assert_eq!(err, PencilError::SeedNotCasimir);
    }
}
