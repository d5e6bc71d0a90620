//! Formal graded variables and the table that owns them.
//!
//! Every polynomial, tensor and model in this crate refers back to one
//! `VariableTable`. The table fixes the global variable order (declaration
//! order), which in turn fixes the canonical sorted form of monomials and the
//! Koszul signs produced while sorting.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parity of a variable or of a homogeneous polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn is_odd(self) -> bool {
        self == Parity::Odd
    }

    /// Parity of a product of two homogeneous factors.
    pub fn combine(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parity::Even => write!(f, "even"),
            Parity::Odd => write!(f, "odd"),
        }
    }
}

/// The role a variable plays. Orbit variables (`p`/`q`) carry a multiplicity
/// weight and an orbit index; `t`/`tau` are even/odd deformation parameters;
/// `novikov` variables are inert even parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    T,
    Tau,
    P,
    Q,
    Novikov,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VarKind::T => "t",
            VarKind::Tau => "tau",
            VarKind::P => "p",
            VarKind::Q => "q",
            VarKind::Novikov => "novikov",
        };
        write!(f, "{s}")
    }
}

/// One formal variable.
///
/// `kappa` is the orbit multiplicity (positive, `p`/`q` kinds only, defaults
/// to 1 when absent); `orbit_index` is the signed orbit label used by window
/// truncation; `cz` is an optional integer index carried as metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub parity: Parity,
    #[serde(default, skip_serializing_if = "is_zero_i64")]
    pub zgrade: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_index: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cz: Option<i64>,
}

fn is_zero_i64(v: &i64) -> bool {
    *v == 0
}

impl Variable {
    /// Even variable with no extra structure.
    pub fn parameter(name: &str, kind: VarKind) -> Self {
        Variable {
            name: name.to_string(),
            kind,
            parity: if kind == VarKind::Tau { Parity::Odd } else { Parity::Even },
            zgrade: 0,
            kappa: None,
            orbit_index: None,
            cz: None,
        }
    }

    /// Orbit variable of the given kind with multiplicity `kappa` and signed
    /// orbit index.
    pub fn orbit(name: &str, kind: VarKind, parity: Parity, kappa: u64, orbit_index: i64) -> Self {
        Variable {
            name: name.to_string(),
            kind,
            parity,
            zgrade: 0,
            kappa: Some(kappa),
            orbit_index: Some(orbit_index),
            cz: None,
        }
    }
}

/// Index of a variable inside its table; the declaration order is the global
/// variable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VariableError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("variable name `{0}` is not an identifier")]
    BadName(String),
    #[error("variable `{0}`: kappa is only meaningful on p/q variables")]
    KappaNotAllowed(String),
    #[error("variable `{0}`: kappa must be positive")]
    KappaZero(String),
    #[error("variable `{0}` of kind {1} must be {2}")]
    ParityKindMismatch(String, VarKind, Parity),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Registry of variables. Immutable once built; shared via `Arc`.
#[derive(Debug, PartialEq, Eq)]
pub struct VariableTable {
    vars: Vec<Variable>,
    by_name: BTreeMap<String, VarId>,
}

impl VariableTable {
    pub fn new(vars: Vec<Variable>) -> Result<Arc<Self>, VariableError> {
        let mut by_name = BTreeMap::new();
        for (i, v) in vars.iter().enumerate() {
            if !is_identifier(&v.name) {
                return Err(VariableError::BadName(v.name.clone()));
            }
            if by_name.insert(v.name.clone(), VarId(i as u32)).is_some() {
                return Err(VariableError::DuplicateName(v.name.clone()));
            }
            match v.kind {
                VarKind::P | VarKind::Q => {
                    if v.kappa == Some(0) {
                        return Err(VariableError::KappaZero(v.name.clone()));
                    }
                }
                kind => {
                    if v.kappa.is_some() {
                        return Err(VariableError::KappaNotAllowed(v.name.clone()));
                    }
                    let required = if kind == VarKind::Tau { Parity::Odd } else { Parity::Even };
                    if v.parity != required {
                        return Err(VariableError::ParityKindMismatch(v.name.clone(), kind, required));
                    }
                }
            }
        }
        Ok(Arc::new(VariableTable { vars, by_name }))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0 as usize]
    }

    pub fn contains(&self, id: VarId) -> bool {
        (id.0 as usize) < self.vars.len()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.var(id).name
    }

    pub fn parity(&self, id: VarId) -> Parity {
        self.var(id).parity
    }

    pub fn kind(&self, id: VarId) -> VarKind {
        self.var(id).kind
    }

    /// Orbit multiplicity with the default of 1 for p/q variables.
    pub fn kappa(&self, id: VarId) -> Option<u64> {
        let v = self.var(id);
        match v.kind {
            VarKind::P | VarKind::Q => Some(v.kappa.unwrap_or(1)),
            _ => None,
        }
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len() as u32).map(VarId)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    /// Ids of variables whose kind satisfies the predicate, in declaration
    /// order.
    pub fn ids_of_kind(&self, kind: VarKind) -> Vec<VarId> {
        self.ids().filter(|&id| self.kind(id) == kind).collect()
    }
}

/// Pointer-equality fast path, structural equality fallback. Operations
/// accept polynomials from distinct but identical tables (e.g. one rebuilt
/// from a serialized model).
pub fn same_table(a: &Arc<VariableTable>, b: &Arc<VariableTable>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}
