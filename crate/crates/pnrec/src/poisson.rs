//! The structural Poisson bracket pairing p-variables with q-variables,
//! weighted by orbit multiplicities, plus Hamiltonian vector fields and
//! their inversion.
//!
//! Orientation: `hamiltonian_vector_field` returns `X_h` with components
//! `X_h^A = {v^A, h}`, so on the p-side `X_h^{p} = kappa * dh/dq` and on the
//! q-side `X_h^{q} = -kappa * dh/dp` for an even pair, `+kappa * dh/dp` for
//! an odd one. This is the orientation under which the recursion seeds
//! reproduce the worked circle-model values; the opposite one flips every
//! descendant field's sign.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::Zero;
use thiserror::Error;

use crate::poly::{coeff_int, AlgebraError, Coeff, Polynomial};
use crate::tensor::{TensorError, VectorField};
use crate::variable::{same_table, Parity, VarId, VarKind, VariableTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoissonError {
    #[error("unpaired p-variable `{name}`")]
    UnpairedP { name: String },
    #[error("p-variable `{name}` matches more than one q-variable")]
    AmbiguousPairing { name: String },
    #[error("pair ({p},{q}) mixes parities")]
    PairParityMismatch { p: String, q: String },
    #[error("field has a component along `{name}`, which is not a paired p/q variable")]
    ComponentOutsidePairs { name: String },
    #[error(
        "no Hamiltonian integrates the field: mixed partials differ at ({var_a},{var_b})"
    )]
    InconsistentSystem { var_a: String, var_b: String },
    #[error("no Hamiltonian reproduces the field, though its mixed partials are consistent")]
    NotHamiltonian,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One canonical pair `(p, q)` with its multiplicity weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub p: VarId,
    pub q: VarId,
    pub kappa: u64,
}

/// The structural bracket. An even pair contributes the weighted Darboux
/// term
/// `kappa_g (df/dp_g dg/dq_g - (-1)^{|f||g|} dg/dp_g df/dq_g)`,
/// an odd pair the symmetric pairing
/// `(-1)^{|f|+1} kappa_g (df/dp_g dg/dq_g + df/dq_g dg/dp_g)`.
/// The odd-pair dressing is the unique extension of the even-pair bracket
/// for which graded antisymmetry, the Leibniz rule
/// `{f,gh} = {f,g}h + (-1)^{|f||g|} g {f,h}`, and Jacobi hold in every
/// parity sector.
///
/// Pairing is derived from the table: each p-kind variable is matched with
/// the unique q-kind variable carrying the same kappa and the same absolute
/// orbit index. Unpaired q-kind variables are inert (the bracket ignores
/// them); unpaired p-kind variables are rejected.
#[derive(Debug, Clone)]
pub struct StructuralPoisson {
    table: Arc<VariableTable>,
    pairs: Vec<Pair>,
}

impl PartialEq for StructuralPoisson {
    fn eq(&self, other: &Self) -> bool {
        same_table(&self.table, &other.table) && self.pairs == other.pairs
    }
}

impl Eq for StructuralPoisson {}

fn orbit_key(table: &VariableTable, v: VarId) -> (u64, Option<u64>) {
    let var = table.var(v);
    let kappa = table.kappa(v).expect("p/q variables carry a multiplicity");
    (kappa, var.orbit_index.map(|k| k.unsigned_abs()))
}

impl StructuralPoisson {
    pub fn new(table: &Arc<VariableTable>) -> Result<Self, PoissonError> {
        let qs: Vec<VarId> = table.ids_of_kind(VarKind::Q);
        let mut pairs = Vec::new();
        for p in table.ids_of_kind(VarKind::P) {
            let key = orbit_key(table, p);
            let mut matches = qs.iter().copied().filter(|&q| orbit_key(table, q) == key);
            let Some(q) = matches.next() else {
                return Err(PoissonError::UnpairedP { name: table.name(p).to_string() });
            };
            if matches.next().is_some() {
                return Err(PoissonError::AmbiguousPairing {
                    name: table.name(p).to_string(),
                });
            }
            if table.parity(p) != table.parity(q) {
                return Err(PoissonError::PairParityMismatch {
                    p: table.name(p).to_string(),
                    q: table.name(q).to_string(),
                });
            }
            let kappa = table.kappa(p).expect("p-kind variable carries a multiplicity");
            pairs.push(Pair { p, q, kappa });
        }
        Ok(StructuralPoisson { table: Arc::clone(table), pairs })
    }

    pub fn table(&self) -> &Arc<VariableTable> {
        &self.table
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    fn pair_members(&self) -> impl Iterator<Item = VarId> + '_ {
        self.pairs.iter().flat_map(|pr| [pr.p, pr.q])
    }

    /// The structural bracket, extended bilinearly over parity parts.
    pub fn bracket(&self, f: &Polynomial, g: &Polynomial) -> Result<Polynomial, PoissonError> {
        if !same_table(&self.table, f.table()) || !same_table(&self.table, g.table()) {
            return Err(AlgebraError::TableMismatch.into());
        }
        let (fe, fo) = f.parity_parts();
        let (ge, go) = g.parity_parts();
        let mut out = Polynomial::zero(&self.table);
        for (fp, pf) in [(&fe, Parity::Even), (&fo, Parity::Odd)] {
            if fp.is_zero() {
                continue;
            }
            for (gp, pg) in [(&ge, Parity::Even), (&go, Parity::Odd)] {
                if gp.is_zero() {
                    continue;
                }
                out = out.checked_add(&self.bracket_homogeneous(fp, pf, gp, pg)?)?;
            }
        }
        Ok(out)
    }

    fn bracket_homogeneous(
        &self,
        f: &Polynomial,
        pf: Parity,
        g: &Polynomial,
        pg: Parity,
    ) -> Result<Polynomial, PoissonError> {
        let darboux_sign = if pf.is_odd() && pg.is_odd() { -1i64 } else { 1 };
        let mut out = Polynomial::zero(&self.table);
        for pr in &self.pairs {
            let kappa = coeff_int(pr.kappa as i64);
            let df_p = f.partial_derivative(pr.p)?;
            let dg_q = g.partial_derivative(pr.q)?;
            let dg_p = g.partial_derivative(pr.p)?;
            let df_q = f.partial_derivative(pr.q)?;
            if self.table.parity(pr.p).is_odd() {
                // Symmetric pairing; all four factor orders matter.
                let sign = if pf.is_odd() { 1 } else { -1 };
                let scale = kappa * coeff_int(sign);
                if !df_p.is_zero() && !dg_q.is_zero() {
                    out = out.checked_add(&df_p.checked_mul(&dg_q)?.scale(&scale))?;
                }
                if !df_q.is_zero() && !dg_p.is_zero() {
                    out = out.checked_add(&df_q.checked_mul(&dg_p)?.scale(&scale))?;
                }
            } else {
                if !df_p.is_zero() && !dg_q.is_zero() {
                    out = out.checked_add(&df_p.checked_mul(&dg_q)?.scale(&kappa))?;
                }
                if !dg_p.is_zero() && !df_q.is_zero() {
                    let term =
                        dg_p.checked_mul(&df_q)?.scale(&(kappa * coeff_int(darboux_sign)));
                    out = out.checked_sub(&term)?;
                }
            }
        }
        Ok(out)
    }

    /// `X_h` with `X_h(f) = {f, h}`; see the module docs for the component
    /// formulas and the orientation choice.
    pub fn hamiltonian_vector_field(&self, h: &Polynomial) -> Result<VectorField, PoissonError> {
        if !same_table(&self.table, h.table()) {
            return Err(AlgebraError::TableMismatch.into());
        }
        let mut comps: Vec<(VarId, Polynomial)> = Vec::new();
        for pr in &self.pairs {
            let kappa = coeff_int(pr.kappa as i64);
            let p_comp = h.partial_derivative(pr.q)?.scale(&kappa);
            if !p_comp.is_zero() {
                comps.push((pr.p, p_comp));
            }
            // X^{q} = -kappa dh/dp on an even pair, +kappa dh/dp on an odd one.
            let sign = if self.table.parity(pr.q).is_odd() { 1 } else { -1 };
            let q_comp = h.partial_derivative(pr.p)?.scale(&(kappa * coeff_int(sign)));
            if !q_comp.is_zero() {
                comps.push((pr.q, q_comp));
            }
        }
        Ok(VectorField::new(&self.table, comps)?)
    }

    /// Invert `hamiltonian_vector_field`: find `h` with `X_h = Y`.
    ///
    /// Reconstruction goes through the Euler homotopy `H = sum_i x_i G_i`
    /// with each monomial divided by its degree in paired variables, then
    /// checks the candidate exactly. The part of `h` free of paired
    /// variables is fixed by the normalization rule.
    pub fn integrate_hamiltonian(
        &self,
        y: &VectorField,
        normalization: Normalization,
    ) -> Result<Polynomial, PoissonError> {
        if !same_table(&self.table, y.table()) {
            return Err(AlgebraError::TableMismatch.into());
        }
        match normalization {
            Normalization::ZeroPairedFree => {}
        }
        let paired: Vec<VarId> = self.pair_members().collect();
        for (v, _) in y.components() {
            if !paired.contains(&v) {
                return Err(PoissonError::ComponentOutsidePairs {
                    name: self.table.name(v).to_string(),
                });
            }
        }

        // Target gradient G_v = dh/dv implied by X_h = Y.
        let mut grad: BTreeMap<VarId, Polynomial> = BTreeMap::new();
        for pr in &self.pairs {
            let inv_kappa = Coeff::new(1.into(), (pr.kappa as i64).into());
            grad.insert(pr.q, y.component(pr.p).scale(&inv_kappa));
            let sign = if self.table.parity(pr.q).is_odd() { 1 } else { -1 };
            grad.insert(
                pr.p,
                y.component(pr.q).scale(&(inv_kappa * coeff_int(sign))),
            );
        }
        let h = self.euler_reconstruct(&grad)?;
        let back = self.hamiltonian_vector_field(&h)?;
        if back == *y {
            return Ok(h);
        }

        // Y does not integrate: report the first failing exactness condition.
        for (&i, gi) in &grad {
            if self.table.parity(i).is_odd() && !gi.partial_derivative(i)?.is_zero() {
                return Err(PoissonError::InconsistentSystem {
                    var_a: self.table.name(i).to_string(),
                    var_b: self.table.name(i).to_string(),
                });
            }
            for (&j, gj) in &grad {
                if j <= i {
                    continue;
                }
                let lhs = gj.partial_derivative(i)?;
                let sign = if self.table.parity(i).is_odd() && self.table.parity(j).is_odd() {
                    -1
                } else {
                    1
                };
                let rhs = gi.partial_derivative(j)?.scale(&coeff_int(sign));
                if lhs != rhs {
                    return Err(PoissonError::InconsistentSystem {
                        var_a: self.table.name(i).to_string(),
                        var_b: self.table.name(j).to_string(),
                    });
                }
            }
        }
        Err(PoissonError::NotHamiltonian)
    }

    /// Euler homotopy: `h = sum over monomials of (coeff / paired-degree)`,
    /// built from `H = sum_v x_v * G_v`. Monomials free of paired variables
    /// are dropped (zero normalization).
    fn euler_reconstruct(
        &self,
        grad: &BTreeMap<VarId, Polynomial>,
    ) -> Result<Polynomial, PoissonError> {
        let paired: Vec<VarId> = self.pair_members().collect();
        let mut big = Polynomial::zero(&self.table);
        for (&v, g) in grad {
            if g.is_zero() {
                continue;
            }
            let xv = Polynomial::variable(&self.table, v)?;
            big = big.checked_add(&xv.checked_mul(g)?)?;
        }
        let mut terms: Vec<(Coeff, Vec<(VarId, u32)>)> = Vec::new();
        for (m, c) in big.terms() {
            let deg: u32 = m
                .factors()
                .iter()
                .filter(|&&(v, _)| paired.contains(&v))
                .map(|&(_, e)| e)
                .sum();
            if deg == 0 {
                continue;
            }
            let scaled = c / Coeff::from_integer(deg.into());
            if !scaled.is_zero() {
                terms.push((scaled, m.factors().to_vec()));
            }
        }
        Ok(Polynomial::from_terms(&self.table, &terms)?)
    }
}

/// Normalization rule for `integrate_hamiltonian`: the reconstruction is
/// unique only up to terms free of paired variables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Set the paired-variable-free part of `h` to zero.
    #[default]
    ZeroPairedFree,
}
