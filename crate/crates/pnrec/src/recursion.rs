//! Descendant recursion machinery: the endomorphism-driven step for vector
//! fields, the bivector-driven step for Hamiltonians, tower drivers, the
//! Euler weight operator, and pairwise commutativity verification on a
//! certified sub-window.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::poisson::{Normalization, PoissonError, StructuralPoisson};
use crate::poly::{AlgebraError, Coeff, Polynomial, TruncationWindow};
use crate::ring::{c_coefficients, CohomologyRing, RingError};
use crate::tensor::{lie_bracket, Endomorphism11, OneForm, TensorError, VectorField};
use crate::variable::{same_table, Parity, VarId, VarKind, VariableTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecursionError {
    #[error("no primary field declared for class {class}")]
    MissingPrimary { class: usize },
    #[error("coefficient table has no level {0}")]
    MissingLevel(i64),
    #[error("max orbit {max_orbit} cannot certify any sub-window; need at least {required}")]
    WindowTooSmall { max_orbit: u32, required: u32 },
    #[error("hamiltonian towers need a structural bracket for verification")]
    MissingBracket,
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// Class index -> scalar coefficient, one recursion level for one fixed
/// source class.
pub type CoefficientMap = BTreeMap<usize, Polynomial>;
/// Level -> CoefficientMap; levels run from -1 upward.
pub type CoefficientTable = BTreeMap<i64, CoefficientMap>;

/// One step of the vector-field recursion:
/// `X_n = N(X_{n-1}) + sum_mu C^mu_{n-1} X_{mu,0}`.
pub fn ch_step(
    n_op: &Endomorphism11,
    x_prev: &VectorField,
    c: &CoefficientMap,
    primaries: &BTreeMap<usize, VectorField>,
) -> Result<VectorField, RecursionError> {
    let mut out = n_op.apply(x_prev)?;
    for (&mu, cmu) in c {
        if cmu.is_zero() {
            continue;
        }
        let x_mu = primaries.get(&mu).ok_or(RecursionError::MissingPrimary { class: mu })?;
        out = out.checked_add(&x_mu.scale_poly(cmu)?)?;
    }
    Ok(out)
}

/// Closed form of the same recursion:
/// `X_n = sum_{k=0..n} sum_mu C^mu_{n-k-1} N^k(X_{mu,0})`,
/// with the level -1 coefficients playing the Kronecker delta.
pub fn ch_closed_form(
    n_op: &Endomorphism11,
    primaries: &BTreeMap<usize, VectorField>,
    c_table: &CoefficientTable,
    n: usize,
) -> Result<VectorField, RecursionError> {
    let mut powered = primaries.clone();
    let mut out = VectorField::zero(n_op.table());
    for k in 0..=n {
        let level = n as i64 - k as i64 - 1;
        let c = c_table.get(&level).ok_or(RecursionError::MissingLevel(level))?;
        for (&mu, cmu) in c {
            if cmu.is_zero() {
                continue;
            }
            let base =
                powered.get(&mu).ok_or(RecursionError::MissingPrimary { class: mu })?;
            out = out.checked_add(&base.scale_poly(cmu)?)?;
        }
        if k < n {
            for x in powered.values_mut() {
                *x = n_op.apply(x)?;
            }
        }
    }
    Ok(out)
}

/// One step of the Hamiltonian recursion: contract the bivector with the
/// differential, keep the paired components (the parameter equation is
/// void), and invert the structural bracket.
///
/// The raw step is exact for quadratic and cubic sources. From quartic
/// output on, a finite orbit window loses contraction columns and the
/// resulting field stops being a bracket gradient: the step then fails
/// with `InconsistentSystem`, meaning the recursion leaves the computable
/// class at this window. `sft_tower` works around that by shrinking the
/// window per level.
pub fn sft_step(
    p: &StructuralPoisson,
    omega: &crate::tensor::Bivector,
    h_prev: &Polynomial,
    normalization: Normalization,
) -> Result<Polynomial, RecursionError> {
    sft_step_windowed(p, omega, h_prev, normalization, None)
}

fn sft_step_windowed(
    p: &StructuralPoisson,
    omega: &crate::tensor::Bivector,
    h_prev: &Polynomial,
    normalization: Normalization,
    sub: Option<&TruncationWindow>,
) -> Result<Polynomial, RecursionError> {
    let df = OneForm::differential(h_prev)?;
    let y = omega.contract(&df)?;
    let paired: BTreeSet<VarId> = p.pairs().iter().flat_map(|pr| [pr.p, pr.q]).collect();
    let restricted = VectorField::new(
        p.table(),
        y.components()
            .filter(|(v, _)| paired.contains(v))
            .map(|(v, c)| (v, c.clone()))
            .collect::<Vec<_>>(),
    )?;
    let restricted = match sub {
        Some(w) => restricted.truncate(w),
        None => restricted,
    };
    Ok(p.integrate_hamiltonian(&restricted, normalization)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TowerKind {
    ChVectorFields,
    SftHamiltonians,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TowerEntry {
    Field(VectorField),
    Hamiltonian(Polynomial),
}

impl TowerEntry {
    pub fn field(&self) -> Option<&VectorField> {
        match self {
            TowerEntry::Field(x) => Some(x),
            TowerEntry::Hamiltonian(_) => None,
        }
    }

    pub fn hamiltonian(&self) -> Option<&Polynomial> {
        match self {
            TowerEntry::Field(_) => None,
            TowerEntry::Hamiltonian(h) => Some(h),
        }
    }
}

/// Levels of one recursion run. `levels[i]` holds the entries of level
/// `first_level + i`, keyed by class index.
#[derive(Debug, Clone, PartialEq)]
pub struct DescendantTower {
    pub kind: TowerKind,
    pub first_level: i64,
    pub levels: Vec<BTreeMap<usize, TowerEntry>>,
}

impl DescendantTower {
    pub fn level(&self, n: i64) -> Option<&BTreeMap<usize, TowerEntry>> {
        usize::try_from(n - self.first_level).ok().and_then(|i| self.levels.get(i))
    }

    pub fn last_level(&self) -> i64 {
        self.first_level + self.levels.len() as i64 - 1
    }

    pub fn entry(&self, n: i64, class: usize) -> Option<&TowerEntry> {
        self.level(n).and_then(|m| m.get(&class))
    }
}

/// Build the vector-field tower X_{alpha,0..levels}. Coefficients come from
/// the ring; coordinates bound to classes without a declared primary are
/// frozen to zero first (those sectors are outside the computable data, as
/// in the tau = 0 restriction of the circle model).
pub fn ch_tower(
    n_op: &Endomorphism11,
    primaries: &BTreeMap<usize, VectorField>,
    ring: &CohomologyRing,
    table: &Arc<VariableTable>,
    alpha: usize,
    levels: usize,
) -> Result<DescendantTower, RecursionError> {
    if !same_table(n_op.table(), table) {
        return Err(AlgebraError::TableMismatch.into());
    }
    let class_vars = ring.class_variables(table)?;
    let frozen: Vec<VarId> = class_vars
        .iter()
        .enumerate()
        .filter(|(i, _)| !primaries.contains_key(i))
        .map(|(_, &v)| v)
        .collect();
    let mut x = primaries
        .get(&alpha)
        .ok_or(RecursionError::MissingPrimary { class: alpha })?
        .clone();
    let mut tower = vec![BTreeMap::from([(alpha, TowerEntry::Field(x.clone()))])];
    for n in 1..=levels {
        let raw = c_coefficients(ring, table, n as i64 - 1, alpha)?;
        let mut c = CoefficientMap::new();
        for (mu, poly) in raw {
            let restricted = poly.set_vars_to_zero(&frozen);
            if !restricted.is_zero() {
                c.insert(mu, restricted);
            }
        }
        x = ch_step(n_op, &x, &c, primaries)?;
        tower.push(BTreeMap::from([(alpha, TowerEntry::Field(x.clone()))]));
    }
    Ok(DescendantTower { kind: TowerKind::ChVectorFields, first_level: 0, levels: tower })
}

/// Level -1..levels coefficient table for a fixed class, with the same
/// frozen-sector restriction as `ch_tower`.
pub fn coefficient_table(
    ring: &CohomologyRing,
    table: &Arc<VariableTable>,
    primaries: &BTreeMap<usize, VectorField>,
    alpha: usize,
    levels: usize,
) -> Result<CoefficientTable, RecursionError> {
    let class_vars = ring.class_variables(table)?;
    let frozen: Vec<VarId> = class_vars
        .iter()
        .enumerate()
        .filter(|(i, _)| !primaries.contains_key(i))
        .map(|(_, &v)| v)
        .collect();
    let mut out = CoefficientTable::new();
    for level in -1..=(levels as i64 - 1) {
        let raw = c_coefficients(ring, table, level, alpha)?;
        let mut c = CoefficientMap::new();
        for (mu, poly) in raw {
            let restricted = poly.set_vars_to_zero(&frozen);
            if !restricted.is_zero() {
                c.insert(mu, restricted);
            }
        }
        out.insert(level, c);
    }
    Ok(out)
}

/// Build the Hamiltonian tower h_{alpha,-1..levels} from its seed
/// (the coordinate dual to the class in the index-raised basis).
///
/// Levels -1, 0 and 1 are exact on the model window `window`. Each further
/// level halves the certified orbit window and restricts the contraction to
/// it before inverting the bracket: a kept monomial only contracts through
/// columns the previous (twice as wide) window already carried, so the
/// restriction is again an exact bracket gradient. Level n >= 2 is stored
/// exact on orbit indices up to `window.max_orbit >> (n - 1)`; when that
/// hits zero the tower cannot reach the requested level and the driver
/// reports the window bound it would have needed.
pub fn sft_tower(
    p: &StructuralPoisson,
    omega: &crate::tensor::Bivector,
    seed: &Polynomial,
    alpha: usize,
    levels: usize,
    window: &TruncationWindow,
) -> Result<DescendantTower, RecursionError> {
    let mut h = seed.clone();
    let mut tower = vec![BTreeMap::from([(alpha, TowerEntry::Hamiltonian(h.clone()))])];
    let mut exact = window.max_orbit;
    for level in 0..=levels as i64 {
        let sub = if level >= 2 {
            exact /= 2;
            if exact < 1 {
                let required = 1u32 << (level - 1).min(31);
                return Err(RecursionError::WindowTooSmall {
                    max_orbit: window.max_orbit,
                    required,
                });
            }
            Some(TruncationWindow::orbit(exact))
        } else {
            None
        };
        h = sft_step_windowed(p, omega, &h, Normalization::ZeroPairedFree, sub.as_ref())?;
        tower.push(BTreeMap::from([(alpha, TowerEntry::Hamiltonian(h.clone()))]));
    }
    Ok(DescendantTower { kind: TowerKind::SftHamiltonians, first_level: -1, levels: tower })
}

/// Termwise weight operator `D(m) = (2 - deg_pq(m) - deg_t(m)) m`; Novikov
/// variables carry weight zero.
pub fn euler_operator(f: &Polynomial) -> Polynomial {
    let table = f.table();
    let mut terms = Vec::new();
    for (m, c) in f.terms() {
        let mut weight = 2i64;
        for &(v, e) in m.factors() {
            match table.kind(v) {
                VarKind::P | VarKind::Q | VarKind::T | VarKind::Tau => weight -= e as i64,
                VarKind::Novikov => {}
            }
        }
        if weight != 0 {
            let scaled = c * Coeff::from_integer(weight.into());
            terms.push((scaled, m.factors().to_vec()));
        }
    }
    Polynomial::from_terms(table, &terms).expect("terms from the same table")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommutePair {
    pub level_a: i64,
    pub class_a: usize,
    pub level_b: i64,
    pub class_b: usize,
    pub ok: bool,
    /// Canonical text of the nonzero residual, absent when ok.
    pub residual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommuteReport {
    /// Sub-window on which the pairwise results are exact.
    pub certified_max_orbit: u32,
    pub pairs: Vec<CommutePair>,
}

impl CommuteReport {
    pub fn all_commute(&self) -> bool {
        self.pairs.iter().all(|p| p.ok)
    }
}

/// Check all pairwise brackets of tower entries on the certified sub-window.
///
/// Vector-field towers (nonnegative orbit indices throughout, so index sums
/// are conserved inside the table) are exact on the full window, which is
/// certified unchanged. Hamiltonian towers built by `sft_tower` carry
/// per-level exact windows J_n (`max_orbit` through level 1, halved per
/// level after); for entries whose monomials conserve the orbit index sum,
/// a bracket monomial inside orbit window w contracts only through indices
/// up to `(f - 1) * w` where f is the smaller factor count of the pair, so
/// the pair is exact on `w = min(J_a, J_b) / (f - 1)`. The certified window
/// is the minimum over pairs; brackets that vanish identically (a diagonal
/// of even entries, or either side free of paired variables) impose no
/// bound.
pub fn verify_commuting(
    p: Option<&StructuralPoisson>,
    tower: &DescendantTower,
    window: &TruncationWindow,
) -> Result<CommuteReport, RecursionError> {
    let flat: Vec<(i64, usize, &TowerEntry)> = tower
        .levels
        .iter()
        .enumerate()
        .flat_map(|(i, m)| {
            let level = tower.first_level + i as i64;
            m.iter().map(move |(&class, e)| (level, class, e))
        })
        .collect();
    let (certified, sub) = match tower.kind {
        TowerKind::ChVectorFields => (window.max_orbit, *window),
        TowerKind::SftHamiltonians => {
            let max = window.max_orbit;
            let exact_window = |level: i64| -> u32 {
                if level <= 1 {
                    max
                } else {
                    max >> (level - 1).min(31)
                }
            };
            let window_divisor = |level: i64| -> u32 {
                if level <= 1 {
                    1
                } else {
                    1u32 << (level - 1).min(31)
                }
            };
            let paired_factors = |e: &TowerEntry| -> u32 {
                match e {
                    TowerEntry::Hamiltonian(h) => {
                        h.terms().map(|(m, _)| h.pq_degree_of(m)).max().unwrap_or(0)
                    }
                    TowerEntry::Field(_) => 0,
                }
            };
            let mut w = max;
            let mut required = 1u32;
            for (i, &(la, _, ea)) in flat.iter().enumerate() {
                for (j, &(lb, _, eb)) in flat.iter().enumerate().skip(i) {
                    if i == j {
                        let odd = ea
                            .hamiltonian()
                            .is_some_and(|h| h.parity() == Some(Parity::Odd));
                        if !odd {
                            continue;
                        }
                    }
                    let f = paired_factors(ea).min(paired_factors(eb));
                    if f < 2 {
                        continue;
                    }
                    let j_min = exact_window(la).min(exact_window(lb));
                    w = w.min(j_min / (f - 1));
                    required =
                        required.max((f - 1) * window_divisor(la).max(window_divisor(lb)));
                }
            }
            if w < 1 {
                return Err(RecursionError::WindowTooSmall { max_orbit: max, required });
            }
            (w, TruncationWindow::orbit(w))
        }
    };
    let mut pairs = Vec::new();
    for (i, &(la, ca, ea)) in flat.iter().enumerate() {
        for &(lb, cb, eb) in flat.iter().skip(i) {
            let (ok, residual) = match (ea, eb) {
                (TowerEntry::Field(xa), TowerEntry::Field(xb)) => {
                    let br = lie_bracket(xa, xb)?.truncate(&sub);
                    (br.is_zero(), (!br.is_zero()).then(|| br.to_string()))
                }
                (TowerEntry::Hamiltonian(ha), TowerEntry::Hamiltonian(hb)) => {
                    let p = p.ok_or(RecursionError::MissingBracket)?;
                    let br = p.bracket(ha, hb)?.truncate(&sub);
                    (br.is_zero(), (!br.is_zero()).then(|| br.to_string()))
                }
                _ => (false, Some("mixed tower entries".into())),
            };
            pairs.push(CommutePair {
                level_a: la,
                class_a: ca,
                level_b: lb,
                class_b: cb,
                ok,
                residual,
            });
        }
    }
    Ok(CommuteReport { certified_max_orbit: certified, pairs })
}
