//! Model bundles: a variable table plus the structural data that lives on it
//! (recursion operator, bracket bivector, primaries, coefficient ring, and
//! optionally a Poisson pencil), with a JSON document format for loading and
//! saving them, builders for the circle worked examples, and the closed-form
//! oracles those examples are checked against.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::One;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parse::parse_polynomial;
use crate::pencil::PoissonPencil;
use crate::poisson::StructuralPoisson;
use crate::poly::{coeff_int, Coeff, Polynomial, TruncationWindow};
use crate::ring::{c_coefficients, CohomologyClass, CohomologyRing};
use crate::tensor::{Bivector, Endomorphism11, Symmetry, VectorField};
use crate::variable::{Parity, VarId, VarKind, Variable, VariableTable};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("document syntax: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("no builtin model named `{0}`")]
    UnknownBuiltin(String),
    #[error("no closed form at level {0}")]
    InvalidLevel(i64),
    #[error("component {component} lies outside the window (max orbit {max_orbit})")]
    OutOfWindow { component: u32, max_orbit: u32 },
    #[error("closed form needs a component index")]
    MissingComponent,
}

fn invalid(path: impl Into<String>, message: impl ToString) -> ModelError {
    ModelError::Invalid { path: path.into(), message: message.to_string() }
}

/// Everything the checks need, bundled over one table. Sections are optional:
/// a recursion model carries `n` and `primaries`, a bracket model carries
/// `omega`, a bihamiltonian model carries `pencil`.
#[derive(Debug, Clone)]
pub struct Model {
    pub table: Arc<VariableTable>,
    pub window: TruncationWindow,
    pub structural_poisson: Option<StructuralPoisson>,
    pub n: Option<Endomorphism11>,
    pub omega: Option<Bivector>,
    pub primaries: BTreeMap<usize, VectorField>,
    pub ring: Option<CohomologyRing>,
    pub pencil: Option<PoissonPencil>,
    pub grading_checks: bool,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.to_document() == other.to_document()
    }
}

/// On-disk form of a [`Model`]. Field order here is the serialization order,
/// so documents produced by [`Model::to_document`] are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub variables: Vec<Variable>,
    pub window: TruncationWindow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endomorphism: Option<Vec<EndoEntryDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bivector: Option<BivectorDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primaries: Option<BTreeMap<String, Vec<ComponentDoc>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pencil: Option<PencilDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<FlagsDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndoEntryDoc {
    pub lower: String,
    pub upper: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BivectorEntryDoc {
    pub a: String,
    pub b: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BivectorDoc {
    pub symmetry: Symmetry,
    pub entries: Vec<BivectorEntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDoc {
    pub var: String,
    pub expr: String,
}

/// Ring section. Rationals are decimal strings like `"1"` or `"-1/2"`.
/// `eta` is the Poincare pairing recomputed by the loader; a stored value
/// that disagrees is rejected rather than silently replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingDoc {
    pub basis: Vec<String>,
    pub degrees: Vec<i64>,
    pub parities: Vec<Parity>,
    pub products: Vec<Vec<Vec<String>>>,
    pub integral: Vec<String>,
    pub eta: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PencilDoc {
    #[serde(rename = "P1")]
    pub p1: Vec<BivectorEntryDoc>,
    #[serde(rename = "P2")]
    pub p2: Vec<BivectorEntryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlagsDoc {
    #[serde(default)]
    pub grading_checks: bool,
}

fn coeff_from_str(s: &str, path: &str) -> Result<Coeff, ModelError> {
    Coeff::from_str(s.trim()).map_err(|e| invalid(path, format!("bad rational `{s}`: {e}")))
}

fn parse_expr(
    table: &Arc<VariableTable>,
    expr: &str,
    path: &str,
) -> Result<Polynomial, ModelError> {
    parse_polynomial(table, expr).map_err(|e| invalid(path, e))
}

fn lookup(table: &VariableTable, name: &str, path: &str) -> Result<VarId, ModelError> {
    table.id(name).ok_or_else(|| invalid(path, format!("unknown variable `{name}`")))
}

impl Model {
    /// Parse and validate a JSON model document.
    pub fn from_document(doc: &ModelDoc) -> Result<Model, ModelError> {
        let table = VariableTable::new(doc.variables.clone())
            .map_err(|e| invalid("variables", e))?;
        let structural_poisson = Some(
            StructuralPoisson::new(&table).map_err(|e| invalid("variables", e))?,
        );

        let n = match &doc.endomorphism {
            None => None,
            Some(rows) => {
                let mut entries = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    let path = format!("endomorphism[{i}]");
                    let lower = lookup(&table, &row.lower, &path)?;
                    let upper = lookup(&table, &row.upper, &path)?;
                    let p = parse_expr(&table, &row.expr, &path)?;
                    entries.push(((lower, upper), p));
                }
                Some(
                    Endomorphism11::new(&table, entries)
                        .map_err(|e| invalid("endomorphism", e))?,
                )
            }
        };

        let omega = match &doc.bivector {
            None => None,
            Some(b) => Some(bivector_from_doc(
                &table,
                &b.entries,
                b.symmetry,
                "bivector.entries",
            )?),
        };

        let mut primaries = BTreeMap::new();
        if let Some(map) = &doc.primaries {
            for (key, comps) in map {
                let class: usize = key.parse().map_err(|_| {
                    invalid("primaries", format!("class key `{key}` is not a class index"))
                })?;
                let mut components = Vec::with_capacity(comps.len());
                for (i, c) in comps.iter().enumerate() {
                    let path = format!("primaries.{key}[{i}]");
                    let v = lookup(&table, &c.var, &path)?;
                    components.push((v, parse_expr(&table, &c.expr, &path)?));
                }
                let field = VectorField::new(&table, components)
                    .map_err(|e| invalid(format!("primaries.{key}"), e))?;
                primaries.insert(class, field);
            }
        }

        let ring = match &doc.ring {
            None => None,
            Some(r) => Some(ring_from_doc(r, &table)?),
        };

        let pencil = match &doc.pencil {
            None => None,
            Some(p) => {
                let p1 = bivector_from_doc(
                    &table,
                    &p.p1,
                    Symmetry::Antisymmetric,
                    "pencil.P1",
                )?;
                let p2 = bivector_from_doc(
                    &table,
                    &p.p2,
                    Symmetry::Antisymmetric,
                    "pencil.P2",
                )?;
                Some(PoissonPencil::new(p1, p2).map_err(|e| invalid("pencil", e))?)
            }
        };

        let grading_checks = doc.flags.as_ref().map(|f| f.grading_checks).unwrap_or(false);
        let model = Model {
            table,
            window: doc.window,
            structural_poisson,
            n,
            omega,
            primaries,
            ring,
            pencil,
            grading_checks,
        };
        if grading_checks {
            model.check_gradings()?;
        }
        Ok(model)
    }

    /// Degree bookkeeping for graded models: an endomorphism entry `N_a^b`
    /// must carry z-grade `z(b) - z(a) - 2`, a bivector entry `w^{ab}` must
    /// carry `z(a) + z(b) - 2`. Models with all grades zero fail these, which
    /// is why the circle builders leave the flag off.
    fn check_gradings(&self) -> Result<(), ModelError> {
        let z = |v: VarId| self.table.var(v).zgrade;
        if let Some(n) = &self.n {
            for ((lo, up), p) in n.entries() {
                let want = z(up) - z(lo) - 2;
                let got = p.zgrade().ok_or_else(|| {
                    invalid(
                        format!("endomorphism[{}->{}]", self.table.name(lo), self.table.name(up)),
                        "entry is not z-homogeneous",
                    )
                })?;
                if got != want {
                    return Err(invalid(
                        format!("endomorphism[{}->{}]", self.table.name(lo), self.table.name(up)),
                        format!("z-grade {got}, expected {want}"),
                    ));
                }
            }
        }
        if let Some(omega) = &self.omega {
            for ((a, b), p) in omega.entries() {
                let want = z(a) + z(b) - 2;
                let got = p.zgrade().ok_or_else(|| {
                    invalid(
                        format!("bivector[{},{}]", self.table.name(a), self.table.name(b)),
                        "entry is not z-homogeneous",
                    )
                })?;
                if got != want {
                    return Err(invalid(
                        format!("bivector[{},{}]", self.table.name(a), self.table.name(b)),
                        format!("z-grade {got}, expected {want}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Serialize back to the document form. Deterministic: variables in table
    /// order, tensor entries in id order, expressions in canonical display.
    pub fn to_document(&self) -> ModelDoc {
        let name = |v: VarId| self.table.name(v).to_string();
        let variables = self.table.ids().map(|v| self.table.var(v).clone()).collect();
        let endomorphism = self.n.as_ref().map(|n| {
            n.entries()
                .map(|((lo, up), p)| EndoEntryDoc {
                    lower: name(lo),
                    upper: name(up),
                    expr: p.to_string(),
                })
                .collect()
        });
        let bivector = self.omega.as_ref().map(|o| BivectorDoc {
            symmetry: o.symmetry(),
            entries: bivector_to_doc(o, &self.table),
        });
        let primaries = if self.primaries.is_empty() {
            None
        } else {
            Some(
                self.primaries
                    .iter()
                    .map(|(class, field)| {
                        let comps = field
                            .components()
                            .map(|(v, p)| ComponentDoc { var: name(v), expr: p.to_string() })
                            .collect();
                        (class.to_string(), comps)
                    })
                    .collect(),
            )
        };
        let ring = self.ring.as_ref().map(ring_to_doc);
        let pencil = self.pencil.as_ref().map(|pc| PencilDoc {
            p1: bivector_to_doc(pc.p1(), &self.table),
            p2: bivector_to_doc(pc.p2(), &self.table),
        });
        let flags =
            if self.grading_checks { Some(FlagsDoc { grading_checks: true }) } else { None };
        ModelDoc {
            variables,
            window: self.window,
            endomorphism,
            bivector,
            primaries,
            ring,
            pencil,
            flags,
        }
    }

    /// Hex SHA-256 of the canonical document serialization. Stable across
    /// runs, changes whenever any model content changes.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(&self.to_document()).expect("document serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed of the Hamiltonian descendant tower: the first t-kind coordinate.
    pub fn sft_seed(&self) -> Result<Polynomial, ModelError> {
        let t = self
            .table
            .ids_of_kind(VarKind::T)
            .into_iter()
            .next()
            .ok_or_else(|| invalid("variables", "no t-kind parameter to seed the tower"))?;
        Ok(Polynomial::variable(&self.table, t).expect("id from this table"))
    }

    /// Coefficient polynomials `C^mu_{alpha,n}` for this model's ring, with
    /// unbound class coordinates frozen to zero (the tau = 0 restriction).
    pub fn c_table(
        &self,
        n: i64,
        alpha: usize,
    ) -> Result<BTreeMap<usize, Polynomial>, ModelError> {
        let ring = self.ring.as_ref().ok_or_else(|| invalid("ring", "model has no ring"))?;
        let mut out = c_coefficients(ring, &self.table, n, alpha)
            .map_err(|e| invalid("ring", e))?;
        let frozen: Vec<VarId> = ring
            .class_variables(&self.table)
            .map_err(|e| invalid("ring", e))?
            .into_iter()
            .enumerate()
            .filter(|(mu, _)| !self.primaries.contains_key(mu))
            .map(|(_, v)| v)
            .collect();
        for p in out.values_mut() {
            *p = p.set_vars_to_zero(&frozen);
        }
        Ok(out)
    }
}

fn bivector_from_doc(
    table: &Arc<VariableTable>,
    rows: &[BivectorEntryDoc],
    symmetry: Symmetry,
    path: &str,
) -> Result<Bivector, ModelError> {
    let mut entries = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let a = lookup(table, &row.a, &p)?;
        let b = lookup(table, &row.b, &p)?;
        entries.push(((a, b), parse_expr(table, &row.expr, &p)?));
    }
    Bivector::new(table, entries, symmetry).map_err(|e| invalid(path, e))
}

fn bivector_to_doc(b: &Bivector, table: &VariableTable) -> Vec<BivectorEntryDoc> {
    b.entries()
        .map(|((x, y), p)| BivectorEntryDoc {
            a: table.name(x).to_string(),
            b: table.name(y).to_string(),
            expr: p.to_string(),
        })
        .collect()
}

fn ring_from_doc(doc: &RingDoc, table: &Arc<VariableTable>) -> Result<CohomologyRing, ModelError> {
    let dim = doc.basis.len();
    if doc.degrees.len() != dim || doc.parities.len() != dim {
        return Err(invalid("ring", "basis, degrees, and parities disagree on length"));
    }
    let classes = doc
        .basis
        .iter()
        .zip(&doc.degrees)
        .zip(&doc.parities)
        .map(|((name, &degree), &parity)| CohomologyClass {
            name: name.clone(),
            degree,
            parity,
        })
        .collect();
    let mut products = Vec::with_capacity(dim);
    for (i, plane) in doc.products.iter().enumerate() {
        let mut rows = Vec::with_capacity(plane.len());
        for (j, row) in plane.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (k, s) in row.iter().enumerate() {
                out.push(coeff_from_str(s, &format!("ring.products[{i}][{j}][{k}]"))?);
            }
            rows.push(out);
        }
        products.push(rows);
    }
    let integral = doc
        .integral
        .iter()
        .enumerate()
        .map(|(i, s)| coeff_from_str(s, &format!("ring.integral[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let ring = CohomologyRing::new(classes, products, integral)
        .map_err(|e| invalid("ring", e))?;

    let mut declared = Vec::with_capacity(doc.eta.len());
    for (i, row) in doc.eta.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (j, s) in row.iter().enumerate() {
            out.push(coeff_from_str(s, &format!("ring.eta[{i}][{j}]"))?);
        }
        declared.push(out);
    }
    if declared != ring.eta() {
        return Err(invalid("ring.eta", "declared pairing disagrees with the computed one"));
    }
    ring.class_variables(table).map_err(|e| invalid("ring", e))?;
    Ok(ring)
}

fn ring_to_doc(ring: &CohomologyRing) -> RingDoc {
    RingDoc {
        basis: ring.classes().iter().map(|c| c.name.clone()).collect(),
        degrees: ring.classes().iter().map(|c| c.degree).collect(),
        parities: ring.classes().iter().map(|c| c.parity).collect(),
        products: ring
            .products()
            .iter()
            .map(|plane| {
                plane
                    .iter()
                    .map(|row| row.iter().map(Coeff::to_string).collect())
                    .collect()
            })
            .collect(),
        integral: ring.integral_functional().iter().map(Coeff::to_string).collect(),
        eta: ring
            .eta()
            .iter()
            .map(|row| row.iter().map(Coeff::to_string).collect())
            .collect(),
    }
}

/// Parse a model document from JSON text.
pub fn load_model(text: &str) -> Result<Model, ModelError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    Model::from_document(&doc)
}

/// Read and parse a model document from a file.
pub fn load_model_file(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p)
        .map_err(|source| ModelError::Io { path: p.display().to_string(), source })?;
    load_model(&text)
}

/// Builtin models by name: `s1_ch_K<n>` and `s1_sft_K<n>`.
pub fn builtin(name: &str) -> Option<Model> {
    let parse_k = |rest: &str| rest.parse::<u32>().ok().filter(|&k| (1..=64).contains(&k));
    if let Some(k) = name.strip_prefix("s1_ch_K").and_then(parse_k) {
        return Some(build_s1_ch_model(k));
    }
    if let Some(k) = name.strip_prefix("s1_sft_K").and_then(parse_k) {
        return Some(build_s1_sft_model(k));
    }
    None
}

/// A builtin name, or else a path to a model document.
pub fn resolve_model(spec: &str) -> Result<Model, ModelError> {
    if let Some(model) = builtin(spec) {
        return Ok(model);
    }
    if spec.starts_with("s1_") && !Path::new(spec).exists() {
        return Err(ModelError::UnknownBuiltin(spec.to_string()));
    }
    load_model_file(spec)
}

/// Circle recursion model cut at `max_orbit`: one even coordinate per orbit
/// multiple, kappa_k = k, the recursion operator N_k^l = ((l-k)/k) q^{l-k}
/// for l > k, the degree-zero primary with components k q^k, and the circle
/// ring. The odd parameter backs the ring's odd class; no primary is declared
/// for it, so descendant computations freeze it to zero.
pub fn build_s1_ch_model(max_orbit: u32) -> Model {
    assert!(max_orbit >= 1, "window must keep at least one orbit");
    let k = max_orbit as i64;
    let mut vars: Vec<Variable> = (1..=k)
        .map(|i| Variable::orbit(&format!("q{i}"), VarKind::Q, Parity::Even, i as u64, i))
        .collect();
    vars.push(Variable::parameter("t1", VarKind::T));
    vars.push(Variable::parameter("tau1", VarKind::Tau));
    let table = VariableTable::new(vars).expect("circle table is well formed");
    let q = |i: i64| table.id(&format!("q{i}")).expect("orbit coordinate");

    let mut entries = Vec::new();
    for lo in 1..=k {
        for up in (lo + 1)..=k {
            let d = up - lo;
            let p = Polynomial::from_terms(
                &table,
                &[(Coeff::new(BigInt::from(d), BigInt::from(lo)), vec![(q(d), 1)])],
            )
            .expect("entry over this table");
            entries.push(((q(lo), q(up)), p));
        }
    }
    let n = Endomorphism11::new(&table, entries).expect("valid entries");

    let components: Vec<(VarId, Polynomial)> = (1..=k)
        .map(|i| {
            let p = Polynomial::from_terms(&table, &[(coeff_int(i), vec![(q(i), 1)])])
                .expect("component over this table");
            (q(i), p)
        })
        .collect();
    let primary = VectorField::new(&table, components).expect("valid components");

    let structural_poisson =
        Some(StructuralPoisson::new(&table).expect("no p-kind coordinates"));
    Model {
        window: TruncationWindow::orbit(max_orbit),
        structural_poisson,
        n: Some(n),
        omega: None,
        primaries: BTreeMap::from([(0usize, primary)]),
        ring: Some(CohomologyRing::circle()),
        pencil: None,
        grading_checks: false,
        table,
    }
}

/// Circle bracket model cut at `max_orbit`: conjugate pairs v^k (momentum)
/// and v^{-k} (position) with kappa_k = k, one even t parameter, and the
/// symmetric bracket bivector w^{kl} = (k+l) v^{k+l}, where index 0 means the
/// t column and entries vanish when k+l = 0 or |k+l| exceeds the window.
pub fn build_s1_sft_model(max_orbit: u32) -> Model {
    assert!(max_orbit >= 1, "window must keep at least one orbit");
    let k = max_orbit as i64;
    let mut vars: Vec<Variable> = (1..=k)
        .map(|i| Variable::orbit(&format!("v{i}"), VarKind::P, Parity::Even, i as u64, i))
        .collect();
    vars.extend(
        (1..=k).map(|i| Variable::orbit(&format!("vn{i}"), VarKind::Q, Parity::Even, i as u64, -i)),
    );
    vars.push(Variable::parameter("t1", VarKind::T));
    let table = VariableTable::new(vars).expect("circle table is well formed");
    let var_of = |i: i64| {
        let name = match i {
            0 => "t1".to_string(),
            i if i > 0 => format!("v{i}"),
            i => format!("vn{}", -i),
        };
        table.id(&name).expect("indexed coordinate")
    };

    let mut entries = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            let s = a + b;
            if s == 0 || s.abs() > k {
                continue;
            }
            let p = Polynomial::from_terms(&table, &[(coeff_int(s), vec![(var_of(s), 1)])])
                .expect("entry over this table");
            entries.push(((var_of(a), var_of(b)), p));
        }
    }
    let omega =
        Bivector::new(&table, entries, Symmetry::Symmetric).expect("symmetric by construction");

    let structural_poisson =
        Some(StructuralPoisson::new(&table).expect("momenta pair with positions"));
    Model {
        window: TruncationWindow::orbit(max_orbit),
        structural_poisson,
        n: None,
        omega: Some(omega),
        primaries: BTreeMap::new(),
        ring: None,
        pencil: None,
        grading_checks: false,
        table,
    }
}

/// Which circle closed form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S1Kind {
    /// Component `l` of the degree-one descendant field at level n:
    /// (l/(n+1)!) sum of q^{k_1}...q^{k_{n+1}} over nonnegative k_i summing
    /// to l, reading q^0 as t.
    ChField,
    /// Hamiltonian at level n: t at level -1, else (1/(n+2)!) times the sum
    /// of v^{k_1}...v^{k_{n+2}} over nonzero in-window tuples summing to 0.
    SftHamiltonian,
}

fn inv_factorial(m: u32) -> Coeff {
    let mut f = BigInt::one();
    for i in 2..=m as u64 {
        f *= i;
    }
    Coeff::new(BigInt::one(), f)
}

/// Closed-form values of the circle towers, used as oracles against the
/// step-by-step recursion output.
pub fn s1_closed_forms(
    model: &Model,
    kind: S1Kind,
    n: i64,
    component: Option<u32>,
) -> Result<Polynomial, ModelError> {
    match kind {
        S1Kind::ChField => {
            let l = component.ok_or(ModelError::MissingComponent)?;
            if n < 0 {
                return Err(ModelError::InvalidLevel(n));
            }
            if l < 1 || l > model.window.max_orbit {
                return Err(ModelError::OutOfWindow {
                    component: l,
                    max_orbit: model.window.max_orbit,
                });
            }
            ch_component(model, n as u32, l)
        }
        S1Kind::SftHamiltonian => {
            if n < -1 {
                return Err(ModelError::InvalidLevel(n));
            }
            if n == -1 {
                return model.sft_seed();
            }
            sft_level(model, n as u32)
        }
    }
}

fn orbit_ids(table: &Arc<VariableTable>) -> BTreeMap<i64, VarId> {
    table
        .ids()
        .filter_map(|v| table.var(v).orbit_index.map(|i| (i, v)))
        .collect()
}

fn ch_component(model: &Model, n: u32, l: u32) -> Result<Polynomial, ModelError> {
    let table = &model.table;
    let orbits = orbit_ids(table);
    let t = model.sft_seed()?;
    let t_id = t.table().ids_of_kind(VarKind::T)[0];
    let var_of = |i: u32| -> Result<VarId, ModelError> {
        if i == 0 {
            return Ok(t_id);
        }
        orbits
            .get(&(i as i64))
            .copied()
            .ok_or_else(|| invalid("variables", format!("no orbit coordinate for index {i}")))
    };

    // Ordered tuples (k_1, ..., k_{n+1}) of nonnegative parts summing to l.
    let slots = n + 1;
    let mut terms: Vec<(Coeff, Vec<(VarId, u32)>)> = Vec::new();
    let coeff = coeff_int(l as i64) * inv_factorial(slots);
    let mut stack: Vec<(Vec<u32>, u32)> = vec![(Vec::new(), l)];
    while let Some((prefix, rest)) = stack.pop() {
        if prefix.len() as u32 == slots - 1 {
            let mut tuple = prefix;
            tuple.push(rest);
            let mut factors = Vec::with_capacity(tuple.len());
            for part in tuple {
                factors.push((var_of(part)?, 1));
            }
            terms.push((coeff.clone(), factors));
            continue;
        }
        for part in 0..=rest {
            let mut next = prefix.clone();
            next.push(part);
            stack.push((next, rest - part));
        }
    }
    Polynomial::from_terms(table, &terms).map_err(|e| invalid("variables", e))
}

fn sft_level(model: &Model, n: u32) -> Result<Polynomial, ModelError> {
    let table = &model.table;
    let orbits = orbit_ids(table);
    let w = model.window.max_orbit as i64;
    let slots = n + 2;
    let coeff = inv_factorial(slots);
    let mut terms: Vec<(Coeff, Vec<(VarId, u32)>)> = Vec::new();
    let mut stack: Vec<(Vec<i64>, i64)> = vec![(Vec::new(), 0)];
    while let Some((prefix, sum)) = stack.pop() {
        if prefix.len() as u32 == slots - 1 {
            let last = -sum;
            if last == 0 || last.abs() > w {
                continue;
            }
            let mut tuple = prefix;
            tuple.push(last);
            let mut factors = Vec::with_capacity(tuple.len());
            for part in tuple {
                let v = orbits.get(&part).copied().ok_or_else(|| {
                    invalid("variables", format!("no orbit coordinate for index {part}"))
                })?;
                factors.push((v, 1));
            }
            terms.push((coeff.clone(), factors));
            continue;
        }
        for part in -w..=w {
            if part == 0 {
                continue;
            }
            let mut next = prefix.clone();
            next.push(part);
            stack.push((next, sum + part));
        }
    }
    Polynomial::from_terms(table, &terms).map_err(|e| invalid("variables", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::coeff_ratio;

    fn poly(table: &Arc<VariableTable>, s: &str) -> Polynomial {
        parse_polynomial(table, s).unwrap()
    }

    #[test]
    fn builtin_documents_round_trip() {
        for model in [build_s1_ch_model(4), build_s1_sft_model(3)] {
            let doc = model.to_document();
            let json = serde_json::to_string_pretty(&doc).unwrap();
            let back = load_model(&json).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.fingerprint(), model.fingerprint());
        }
    }

    #[test]
    fn recursion_operator_entries() {
        let m = build_s1_ch_model(5);
        let n = m.n.as_ref().unwrap();
        let q = |i: i64| m.table.id(&format!("q{i}")).unwrap();
        assert_eq!(n.entry(q(2), q(5)), poly(&m.table, "3/2*q3"));
        assert!(n.entry(q(3), q(2)).is_zero());
        let primary = &m.primaries[&0];
        assert_eq!(primary.component(q(3)), poly(&m.table, "3*q3"));
    }

    #[test]
    fn bracket_entries_and_pairing() {
        let m = build_s1_sft_model(5);
        let o = m.omega.as_ref().unwrap();
        let id = |name: &str| m.table.id(name).unwrap();
        assert_eq!(o.entry(id("v2"), id("v3")), poly(&m.table, "5*v5"));
        assert!(o.entry(id("v1"), id("vn1")).is_zero());
        assert_eq!(o.entry(id("t1"), id("v2")), poly(&m.table, "2*v2"));
        assert_eq!(o.entry(id("v4"), id("v2")), poly(&m.table, "0"));
        let p = m.structural_poisson.as_ref().unwrap();
        let h = poly(&m.table, "v1*vn1");
        // kappa_1 = 1: {vn1, v1*vn1} = -vn1.
        assert_eq!(p.bracket(&poly(&m.table, "vn1"), &h).unwrap(), poly(&m.table, "-vn1"));
        // kappa_3 = 3 scales the pairing.
        let h3 = poly(&m.table, "v3*vn3");
        assert_eq!(p.bracket(&poly(&m.table, "vn3"), &h3).unwrap(), poly(&m.table, "-3*vn3"));
        assert_eq!(p.bracket(&poly(&m.table, "v3"), &h3).unwrap(), poly(&m.table, "3*v3"));
    }

    #[test]
    fn closed_forms_match_printed_values() {
        let ch = build_s1_ch_model(4);
        let x31 = s1_closed_forms(&ch, S1Kind::ChField, 1, Some(3)).unwrap();
        assert_eq!(x31, poly(&ch.table, "3*t1*q3+3*q1*q2"));
        for l in 1..=4u32 {
            let x = s1_closed_forms(&ch, S1Kind::ChField, 0, Some(l)).unwrap();
            assert_eq!(x, poly(&ch.table, &format!("{l}*q{l}")));
        }

        let sft = build_s1_sft_model(3);
        let h0 = s1_closed_forms(&sft, S1Kind::SftHamiltonian, 0, None).unwrap();
        assert_eq!(h0, poly(&sft.table, "v1*vn1+v2*vn2+v3*vn3"));
        let h1 = s1_closed_forms(&sft, S1Kind::SftHamiltonian, 1, None).unwrap();
        assert_eq!(
            h1,
            poly(&sft.table, "1/2*v1^2*vn2+v1*v2*vn3+1/2*v2*vn1^2+v3*vn1*vn2"),
        );
        let seed = s1_closed_forms(&sft, S1Kind::SftHamiltonian, -1, None).unwrap();
        assert_eq!(seed, poly(&sft.table, "t1"));
        let h2 = s1_closed_forms(&sft, S1Kind::SftHamiltonian, 2, None).unwrap();
        let probe = poly(&sft.table, "v1^3*vn3");
        let (m, _) = probe.terms().next().unwrap();
        assert_eq!(h2.coeff(m), coeff_ratio(1, 6));
    }

    #[test]
    fn closed_form_bounds() {
        let ch = build_s1_ch_model(3);
        assert!(matches!(
            s1_closed_forms(&ch, S1Kind::ChField, 0, Some(4)),
            Err(ModelError::OutOfWindow { component: 4, max_orbit: 3 })
        ));
        assert!(matches!(
            s1_closed_forms(&ch, S1Kind::ChField, -1, Some(1)),
            Err(ModelError::InvalidLevel(-1))
        ));
        assert!(matches!(
            s1_closed_forms(&ch, S1Kind::ChField, 0, None),
            Err(ModelError::MissingComponent)
        ));
        let sft = build_s1_sft_model(2);
        assert!(matches!(
            s1_closed_forms(&sft, S1Kind::SftHamiltonian, -2, None),
            Err(ModelError::InvalidLevel(-2))
        ));
    }

    #[test]
    fn window_cut_is_monotone() {
        // Entries present in the small model agree with the large one.
        let small = build_s1_ch_model(4);
        let large = build_s1_ch_model(6);
        let ns = small.n.as_ref().unwrap();
        let nl = large.n.as_ref().unwrap();
        for ((lo, up), p) in ns.entries() {
            let entry = nl.entry(
                large.table.id(small.table.name(lo)).unwrap(),
                large.table.id(small.table.name(up)).unwrap(),
            );
            assert_eq!(entry.to_string(), p.to_string());
        }

        let small = build_s1_sft_model(3);
        let large = build_s1_sft_model(5);
        let os = small.omega.as_ref().unwrap();
        let ol = large.omega.as_ref().unwrap();
        for ((a, b), p) in os.entries() {
            let entry = ol.entry(
                large.table.id(small.table.name(a)).unwrap(),
                large.table.id(small.table.name(b)).unwrap(),
            );
            assert_eq!(entry.to_string(), p.to_string());
        }
    }

    #[test]
    fn builtin_names() {
        assert!(builtin("s1_ch_K8").is_some());
        assert!(builtin("s1_sft_K12").is_some());
        assert!(builtin("s1_ch_K0").is_none());
        assert!(builtin("s1_ch_").is_none());
        assert!(builtin("other").is_none());
        assert!(matches!(resolve_model("s1_ch_Kx"), Err(ModelError::UnknownBuiltin(_))));
    }

    #[test]
    fn loader_rejects_bad_documents() {
        // Unknown top-level key.
        let err = load_model(r#"{"variables": [], "window": {"max_orbit": 1}, "extra": 1}"#)
            .unwrap_err();
        assert!(matches!(err, ModelError::Syntax(_)));

        // Momentum coordinate with no matching position.
        let err = load_model(
            r#"{
                "variables": [
                    {"name": "v1", "kind": "p", "parity": "even", "kappa": 1, "orbit_index": 1}
                ],
                "window": {"max_orbit": 1}
            }"#,
        )
        .unwrap_err();
        match err {
            ModelError::Invalid { path, message } => {
                assert_eq!(path, "variables");
                assert!(message.contains("unpaired p-variable `v1`"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }

        // Bivector entry referencing a variable that does not exist.
        let err = load_model(
            r#"{
                "variables": [{"name": "x", "kind": "novikov", "parity": "even"}],
                "window": {"max_orbit": 0},
                "bivector": {"symmetry": "symmetric",
                             "entries": [{"a": "x", "b": "y", "expr": "x"}]}
            }"#,
        )
        .unwrap_err();
        match err {
            ModelError::Invalid { path, .. } => assert_eq!(path, "bivector.entries[0]"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ring_document_checks_pairing() {
        let m = build_s1_ch_model(2);
        let mut doc = m.to_document();
        let ring = doc.ring.as_mut().unwrap();
        ring.eta[0][1] = "2".into();
        let err = Model::from_document(&doc).unwrap_err();
        match err {
            ModelError::Invalid { path, .. } => assert_eq!(path, "ring.eta"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn grading_checks_enforce_entry_grades() {
        let base = r#"{
            "variables": [
                {"name": "a", "kind": "q", "parity": "even", "kappa": 1, "orbit_index": 1},
                {"name": "b", "kind": "q", "parity": "even", "zgrade": ZB, "kappa": 2, "orbit_index": 2},
                {"name": "c", "kind": "novikov", "parity": "even", "zgrade": 2}
            ],
            "window": {"max_orbit": 2},
            "endomorphism": [{"lower": "a", "upper": "b", "expr": "c"}],
            "flags": {"grading_checks": true}
        }"#;
        // z(entry) = 2 must equal z(b) - z(a) - 2, so z(b) = 4 passes.
        assert!(load_model(&base.replace("ZB", "4")).is_ok());
        let err = load_model(&base.replace("ZB", "5")).unwrap_err();
        match err {
            ModelError::Invalid { path, message } => {
                assert_eq!(path, "endomorphism[a->b]");
                assert!(message.contains("expected 3"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
