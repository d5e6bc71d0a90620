//! Finite graded rings with an integration functional and the induced
//! nondegenerate pairing. These supply the coefficient polynomials of the
//! descendant recursion.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::linalg::invert;
use crate::poly::{AlgebraError, Coeff, Polynomial};
use crate::variable::{Parity, VarId, VarKind, VariableTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RingError {
    #[error("ring must have at least one basis class")]
    EmptyBasis,
    #[error("structure data has inconsistent dimensions")]
    DimensionMismatch,
    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),
    #[error("class `{0}`: parity must match degree mod 2")]
    ParityDegreeMismatch(String),
    #[error("product of `{0}` and `{1}` violates degree additivity")]
    DegreeAdditivity(String, String),
    #[error("product is not graded-commutative at (`{0}`, `{1}`)")]
    NotGradedCommutative(String, String),
    #[error("product is not associative at (`{0}`, `{1}`, `{2}`)")]
    NotAssociative(String, String, String),
    #[error("integral of `{0}` is nonzero below top degree")]
    IntegralOffTop(String),
    #[error("pairing matrix is degenerate")]
    DegenerateEta,
    #[error("no unused {kind} variable available for class `{class}`")]
    MissingClassVariable { kind: &'static str, class: String },
    #[error("coefficient level must be >= -1, got {0}")]
    InvalidLevel(i64),
    #[error("class index {0} out of range")]
    UnknownClass(usize),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohomologyClass {
    pub name: String,
    pub degree: i64,
    pub parity: Parity,
}

/// Graded-commutative associative ring on a finite basis, with an integration
/// functional supported in top degree. The pairing eta_{ab} = integral of
/// theta_a theta_b is computed and inverted at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohomologyRing {
    classes: Vec<CohomologyClass>,
    /// products[i][j][k]: coefficient of theta_k in theta_i * theta_j.
    products: Vec<Vec<Vec<Coeff>>>,
    integral: Vec<Coeff>,
    eta: Vec<Vec<Coeff>>,
    eta_inverse: Vec<Vec<Coeff>>,
}

impl CohomologyRing {
    pub fn new(
        classes: Vec<CohomologyClass>,
        products: Vec<Vec<Vec<Coeff>>>,
        integral: Vec<Coeff>,
    ) -> Result<Self, RingError> {
        let dim = classes.len();
        if dim == 0 {
            return Err(RingError::EmptyBasis);
        }
        if products.len() != dim
            || products.iter().any(|row| row.len() != dim)
            || products.iter().flatten().any(|v| v.len() != dim)
            || integral.len() != dim
        {
            return Err(RingError::DimensionMismatch);
        }
        let mut seen = BTreeMap::new();
        for c in &classes {
            if seen.insert(c.name.clone(), ()).is_some() {
                return Err(RingError::DuplicateClass(c.name.clone()));
            }
            if (c.degree.rem_euclid(2) == 1) != c.parity.is_odd() {
                return Err(RingError::ParityDegreeMismatch(c.name.clone()));
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    if !products[i][j][k].is_zero()
                        && classes[k].degree != classes[i].degree + classes[j].degree
                    {
                        return Err(RingError::DegreeAdditivity(
                            classes[i].name.clone(),
                            classes[j].name.clone(),
                        ));
                    }
                }
                let sign = match (classes[i].parity, classes[j].parity) {
                    (Parity::Odd, Parity::Odd) => -Coeff::one(),
                    _ => Coeff::one(),
                };
                for k in 0..dim {
                    if products[i][j][k] != products[j][i][k].clone() * sign.clone() {
                        return Err(RingError::NotGradedCommutative(
                            classes[i].name.clone(),
                            classes[j].name.clone(),
                        ));
                    }
                }
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        let mut lhs = Coeff::zero();
                        let mut rhs = Coeff::zero();
                        for m in 0..dim {
                            lhs += products[i][j][m].clone() * products[m][k][l].clone();
                            rhs += products[j][k][m].clone() * products[i][m][l].clone();
                        }
                        if lhs != rhs {
                            return Err(RingError::NotAssociative(
                                classes[i].name.clone(),
                                classes[j].name.clone(),
                                classes[k].name.clone(),
                            ));
                        }
                    }
                }
            }
        }
        let top = classes.iter().map(|c| c.degree).max().expect("nonempty");
        for (c, v) in classes.iter().zip(&integral) {
            if !v.is_zero() && c.degree != top {
                return Err(RingError::IntegralOffTop(c.name.clone()));
            }
        }
        let mut eta = vec![vec![Coeff::zero(); dim]; dim];
        for a in 0..dim {
            for b in 0..dim {
                for k in 0..dim {
                    eta[a][b] += products[a][b][k].clone() * integral[k].clone();
                }
            }
        }
        let eta_inverse = invert(&eta).ok_or(RingError::DegenerateEta)?;
        Ok(CohomologyRing { classes, products, integral, eta, eta_inverse })
    }

    /// H*(circle): unity in degree 0 and one odd class in degree 1.
    pub fn circle() -> Self {
        let one = Coeff::one();
        let zero = Coeff::zero();
        CohomologyRing::new(
            vec![
                CohomologyClass { name: "one".into(), degree: 0, parity: Parity::Even },
                CohomologyClass { name: "dphi".into(), degree: 1, parity: Parity::Odd },
            ],
            vec![
                vec![vec![one.clone(), zero.clone()], vec![zero.clone(), one.clone()]],
                vec![vec![zero.clone(), one.clone()], vec![zero.clone(), zero.clone()]],
            ],
            vec![zero, one],
        )
        .expect("circle ring data is valid")
    }

    pub fn dim(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[CohomologyClass] {
        &self.classes
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn products(&self) -> &[Vec<Vec<Coeff>>] {
        &self.products
    }

    pub fn integral_functional(&self) -> &[Coeff] {
        &self.integral
    }

    pub fn top_degree(&self) -> i64 {
        self.classes.iter().map(|c| c.degree).max().expect("nonempty")
    }

    pub fn eta(&self) -> &[Vec<Coeff>] {
        &self.eta
    }

    pub fn eta_inverse(&self) -> &[Vec<Coeff>] {
        &self.eta_inverse
    }

    /// Bind each class to a coordinate of the table: even classes consume
    /// t-kind variables in declaration order, odd classes consume tau-kind
    /// variables likewise.
    pub fn class_variables(&self, table: &VariableTable) -> Result<Vec<VarId>, RingError> {
        let mut ts = table.ids_of_kind(VarKind::T).into_iter();
        let mut taus = table.ids_of_kind(VarKind::Tau).into_iter();
        self.classes
            .iter()
            .map(|c| match c.parity {
                Parity::Even => ts.next().ok_or(RingError::MissingClassVariable {
                    kind: "t",
                    class: c.name.clone(),
                }),
                Parity::Odd => taus.next().ok_or(RingError::MissingClassVariable {
                    kind: "tau",
                    class: c.name.clone(),
                }),
            })
            .collect()
    }

    /// Multiply two ring elements with polynomial coefficients. Moving
    /// theta_i across the coefficient of b costs the Koszul sign, so the
    /// odd part of that coefficient flips for odd theta_i.
    pub fn element_mul(
        &self,
        a: &[Polynomial],
        b: &[Polynomial],
    ) -> Result<Vec<Polynomial>, RingError> {
        assert_eq!(a.len(), self.dim());
        assert_eq!(b.len(), self.dim());
        let table = a[0].table();
        let mut out = vec![Polynomial::zero(table); self.dim()];
        for (i, ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                if bj.is_zero() {
                    continue;
                }
                let moved = if self.classes[i].parity.is_odd() {
                    let (even, odd) = bj.parity_parts();
                    even.checked_sub(&odd)?
                } else {
                    bj.clone()
                };
                let prod = ai.checked_mul(&moved)?;
                for (k, c) in self.products[i][j].iter().enumerate() {
                    if !c.is_zero() {
                        out[k] = out[k].checked_add(&prod.scale(c))?;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Apply the integration functional to an element.
    pub fn integrate(&self, elem: &[Polynomial]) -> Result<Polynomial, RingError> {
        assert_eq!(elem.len(), self.dim());
        let mut out = Polynomial::zero(elem[0].table());
        for (e, c) in elem.iter().zip(&self.integral) {
            if !c.is_zero() {
                out = out.checked_add(&e.scale(c))?;
            }
        }
        Ok(out)
    }

    /// The universal element t = sum_alpha t^alpha theta_alpha with each
    /// coefficient the bound coordinate variable.
    pub fn universal_element(
        &self,
        table: &Arc<VariableTable>,
    ) -> Result<Vec<Polynomial>, RingError> {
        let vars = self.class_variables(table)?;
        vars.into_iter().map(|v| Ok(Polynomial::variable(table, v)?)).collect()
    }
}

/// Descendant coefficients
/// `C^mu_{alpha,n} = sum_nu d/dt^alpha d/dt^nu (integral of t^(n+3)/(n+3)!) eta^{nu mu}`,
/// returned as the map mu -> polynomial (zero entries omitted). Level
/// n = -1 reproduces the Kronecker delta.
pub fn c_coefficients(
    ring: &CohomologyRing,
    table: &Arc<VariableTable>,
    n: i64,
    alpha: usize,
) -> Result<BTreeMap<usize, Polynomial>, RingError> {
    if n < -1 {
        return Err(RingError::InvalidLevel(n));
    }
    if alpha >= ring.dim() {
        return Err(RingError::UnknownClass(alpha));
    }
    let vars = ring.class_variables(table)?;
    let t = ring.universal_element(table)?;
    let r = (n + 3) as u32;
    let mut power = t.clone();
    let mut factorial = Coeff::one();
    for step in 2..=r {
        power = ring.element_mul(&power, &t)?;
        factorial *= Coeff::from_integer((step as i64).into());
    }
    let integrated = ring.integrate(&power)?.scale(&(Coeff::one() / factorial));
    let d_alpha_first = integrated.partial_derivative(vars[alpha])?;
    let mut out = BTreeMap::new();
    for mu in 0..ring.dim() {
        let mut acc = Polynomial::zero(table);
        for nu in 0..ring.dim() {
            let w = &ring.eta_inverse()[nu][mu];
            if w.is_zero() {
                continue;
            }
            let second = d_alpha_first.partial_derivative(vars[nu])?;
            acc = acc.checked_add(&second.scale(w))?;
        }
        if !acc.is_zero() {
            out.insert(mu, acc);
        }
    }
    Ok(out)
}
