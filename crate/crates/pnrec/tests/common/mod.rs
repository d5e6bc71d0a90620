//! Shared randomized corpus for the integration suites. Every generator is
//! seeded explicitly, so a failing case number reproduces exactly.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pnrec::poisson::{Normalization, StructuralPoisson};
use pnrec::poly::{coeff_int, coeff_ratio, Polynomial, TruncationWindow};
use pnrec::tensor::{
    lie_bracket, lie_derivative_endomorphism, nijenhuis_torsion, torsion_via_brackets,
    Endomorphism11, VectorField,
};
use pnrec::variable::{Parity, VarId, VarKind, Variable, VariableTable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Six variables of mixed parity and kind for the ring-law suites.
pub fn mixed_table() -> Arc<VariableTable> {
    VariableTable::new(vec![
        Variable::parameter("x", VarKind::Novikov),
        Variable::parameter("t1", VarKind::T),
        Variable::parameter("tau1", VarKind::Tau),
        Variable::parameter("tau2", VarKind::Tau),
        Variable::orbit("q1", VarKind::Q, Parity::Even, 1, 1),
        Variable::orbit("q2", VarKind::Q, Parity::Even, 2, 2),
    ])
    .unwrap()
}

/// Conjugate pairs (two even, one odd) plus a parameter, for bracket suites.
pub fn paired_table() -> Arc<VariableTable> {
    VariableTable::new(vec![
        Variable::orbit("p1", VarKind::P, Parity::Even, 1, 1),
        Variable::orbit("p2", VarKind::P, Parity::Even, 2, 2),
        Variable::orbit("pth", VarKind::P, Parity::Odd, 3, 3),
        Variable::orbit("q1", VarKind::Q, Parity::Even, 1, -1),
        Variable::orbit("q2", VarKind::Q, Parity::Even, 2, -2),
        Variable::orbit("qth", VarKind::Q, Parity::Odd, 3, -3),
        Variable::parameter("t1", VarKind::T),
    ])
    .unwrap()
}

/// Three even coordinates for the torsion and Lie-derivative suites.
pub fn even_table() -> Arc<VariableTable> {
    VariableTable::new(vec![
        Variable::parameter("x", VarKind::Novikov),
        Variable::parameter("y", VarKind::Novikov),
        Variable::parameter("z", VarKind::Novikov),
    ])
    .unwrap()
}

pub fn random_poly(
    rng: &mut ChaCha8Rng,
    table: &Arc<VariableTable>,
    max_terms: usize,
    max_degree: u32,
) -> Polynomial {
    let ids: Vec<VarId> = table.ids().collect();
    let n_terms = rng.gen_range(0..=max_terms);
    let mut terms = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let deg = rng.gen_range(0..=max_degree);
        let mut factors = Vec::with_capacity(deg as usize);
        for _ in 0..deg {
            factors.push((ids[rng.gen_range(0..ids.len())], 1u32));
        }
        let num = rng.gen_range(-6i64..=6);
        let den = rng.gen_range(1i64..=4);
        terms.push((coeff_ratio(num, den), factors));
    }
    Polynomial::from_terms(table, &terms).unwrap()
}

pub fn random_homogeneous(
    rng: &mut ChaCha8Rng,
    table: &Arc<VariableTable>,
    parity: Parity,
) -> Polynomial {
    let (even, odd) = random_poly(rng, table, 5, 4).parity_parts();
    match parity {
        Parity::Even => even,
        Parity::Odd => odd,
    }
}

fn random_parity(rng: &mut ChaCha8Rng) -> Parity {
    if rng.gen_bool(0.5) {
        Parity::Even
    } else {
        Parity::Odd
    }
}

fn sign_of(p: Parity, q: Parity) -> i64 {
    if p == Parity::Odd && q == Parity::Odd {
        -1
    } else {
        1
    }
}

/// Associativity and graded commutativity over the mixed table.
pub fn suite_ring_laws(cases: usize) {
    let table = mixed_table();
    let mut rng = rng(101);
    for case in 0..cases {
        let f = random_poly(&mut rng, &table, 5, 4);
        let g = random_poly(&mut rng, &table, 5, 4);
        let h = random_poly(&mut rng, &table, 5, 4);
        let fg = f.checked_mul(&g).unwrap();
        let gh = g.checked_mul(&h).unwrap();
        assert_eq!(
            fg.checked_mul(&h).unwrap(),
            f.checked_mul(&gh).unwrap(),
            "associativity, case {case}"
        );

        let pf = random_parity(&mut rng);
        let pg = random_parity(&mut rng);
        let fh = random_homogeneous(&mut rng, &table, pf);
        let gh = random_homogeneous(&mut rng, &table, pg);
        let lhs = fh.checked_mul(&gh).unwrap();
        let rhs = gh.checked_mul(&fh).unwrap().scale(&coeff_int(sign_of(pf, pg)));
        assert_eq!(lhs, rhs, "graded commutativity, case {case}");
    }
}

/// Graded Leibniz for partial derivatives, and signed symmetry of seconds.
pub fn suite_leibniz(cases: usize) {
    let table = mixed_table();
    let ids: Vec<VarId> = table.ids().collect();
    let mut rng = rng(102);
    for case in 0..cases {
        let pf = random_parity(&mut rng);
        let f = random_homogeneous(&mut rng, &table, pf);
        let g = random_poly(&mut rng, &table, 5, 4);
        let v = ids[rng.gen_range(0..ids.len())];
        let sign = sign_of(table.parity(v), pf);
        let lhs = f.checked_mul(&g).unwrap().partial_derivative(v).unwrap();
        let rhs = f
            .partial_derivative(v)
            .unwrap()
            .checked_mul(&g)
            .unwrap()
            .checked_add(
                &f.checked_mul(&g.partial_derivative(v).unwrap())
                    .unwrap()
                    .scale(&coeff_int(sign)),
            )
            .unwrap();
        assert_eq!(lhs, rhs, "graded Leibniz, case {case}");

        let u = ids[rng.gen_range(0..ids.len())];
        let w = ids[rng.gen_range(0..ids.len())];
        let second = f.partial_derivative(w).unwrap().partial_derivative(u).unwrap();
        let swapped = f
            .partial_derivative(u)
            .unwrap()
            .partial_derivative(w)
            .unwrap()
            .scale(&coeff_int(sign_of(table.parity(u), table.parity(w))));
        assert_eq!(second, swapped, "derivative order, case {case}");
    }
}

/// parse(print(f)) is the identity on normalized polynomials.
pub fn suite_parser_round_trip(cases: usize) {
    let table = mixed_table();
    let mut rng = rng(103);
    for case in 0..cases {
        let f = random_poly(&mut rng, &table, 6, 4);
        let back = pnrec::parse::parse_polynomial(&table, &f.to_string()).unwrap();
        assert_eq!(back, f, "round trip, case {case}");
    }
}

/// Orbit truncation commutes with addition and in-window derivatives.
pub fn suite_truncate(cases: usize) {
    let table = mixed_table();
    let mut rng = rng(104);
    let window = TruncationWindow::orbit(1);
    let in_window: Vec<VarId> = table
        .ids()
        .filter(|&v| window.keeps_var(&table, v))
        .collect();
    for case in 0..cases {
        let f = random_poly(&mut rng, &table, 6, 4);
        let g = random_poly(&mut rng, &table, 6, 4);
        let sum = f.checked_add(&g).unwrap().truncate(&window);
        assert_eq!(
            sum,
            f.truncate(&window).checked_add(&g.truncate(&window)).unwrap(),
            "truncate vs addition, case {case}"
        );
        let v = in_window[rng.gen_range(0..in_window.len())];
        assert_eq!(
            f.partial_derivative(v).unwrap().truncate(&window),
            f.truncate(&window).partial_derivative(v).unwrap(),
            "truncate vs derivative, case {case}"
        );
    }
}

/// Graded antisymmetry, graded Leibniz, and even Jacobi for the structural
/// bracket over the paired table.
pub fn suite_bracket_laws(cases: usize) {
    let table = paired_table();
    let p = StructuralPoisson::new(&table).unwrap();
    let mut rng = rng(105);
    for case in 0..cases {
        let pf = random_parity(&mut rng);
        let pg = random_parity(&mut rng);
        let f = random_homogeneous(&mut rng, &table, pf);
        let g = random_homogeneous(&mut rng, &table, pg);
        let fg = p.bracket(&f, &g).unwrap();
        let gf = p.bracket(&g, &f).unwrap();
        assert_eq!(
            fg,
            gf.scale(&coeff_int(-sign_of(pf, pg))),
            "graded antisymmetry, case {case}"
        );

        let h = random_poly(&mut rng, &table, 4, 3);
        let gh = g.checked_mul(&h).unwrap();
        let lhs = p.bracket(&f, &gh).unwrap();
        let rhs = p
            .bracket(&f, &g)
            .unwrap()
            .checked_mul(&h)
            .unwrap()
            .checked_add(
                &g.checked_mul(&p.bracket(&f, &h).unwrap())
                    .unwrap()
                    .scale(&coeff_int(sign_of(pf, pg))),
            )
            .unwrap();
        assert_eq!(lhs, rhs, "graded Leibniz, case {case}");

        let a = random_homogeneous(&mut rng, &table, Parity::Even);
        let b = random_homogeneous(&mut rng, &table, Parity::Even);
        let c = random_homogeneous(&mut rng, &table, Parity::Even);
        let jac = p
            .bracket(&a, &p.bracket(&b, &c).unwrap())
            .unwrap()
            .checked_add(&p.bracket(&b, &p.bracket(&c, &a).unwrap()).unwrap())
            .unwrap()
            .checked_add(&p.bracket(&c, &p.bracket(&a, &b).unwrap()).unwrap())
            .unwrap();
        assert!(jac.is_zero(), "Jacobi, case {case}: residual {jac}");
    }
}

/// integrate_hamiltonian is a right inverse of the field map on its image.
pub fn suite_integrate_round_trip(cases: usize) {
    let table = paired_table();
    let p = StructuralPoisson::new(&table).unwrap();
    let mut rng = rng(106);
    for case in 0..cases {
        let h = random_poly(&mut rng, &table, 5, 4);
        let y = p.hamiltonian_vector_field(&h).unwrap();
        let back = p.integrate_hamiltonian(&y, Normalization::ZeroPairedFree).unwrap();
        let again = p.hamiltonian_vector_field(&back).unwrap();
        assert_eq!(again, y, "round trip, case {case}");
    }
}

fn random_endomorphism(rng: &mut ChaCha8Rng, table: &Arc<VariableTable>) -> Endomorphism11 {
    let ids: Vec<VarId> = table.ids().collect();
    let mut entries = Vec::new();
    for &a in &ids {
        for &b in &ids {
            if rng.gen_bool(0.5) {
                entries.push(((a, b), random_poly(rng, table, 2, 2)));
            }
        }
    }
    Endomorphism11::new(table, entries).unwrap()
}

fn random_field(rng: &mut ChaCha8Rng, table: &Arc<VariableTable>) -> VectorField {
    let components: Vec<(VarId, Polynomial)> = table
        .ids()
        .map(|v| (v, random_poly(rng, table, 3, 2)))
        .collect();
    VectorField::new(table, components).unwrap()
}

/// The torsion tensor evaluated on coordinate fields agrees with the
/// bracket-side computation, with no sign correction.
pub fn suite_torsion_oracle(cases: usize) {
    let table = even_table();
    let ids: Vec<VarId> = table.ids().collect();
    let mut rng = rng(107);
    for case in 0..cases {
        let n = random_endomorphism(&mut rng, &table);
        let torsion = nijenhuis_torsion(&n).unwrap();
        for &a in &ids {
            for &b in &ids {
                let da = VectorField::coordinate(&table, a).unwrap();
                let db = VectorField::coordinate(&table, b).unwrap();
                assert_eq!(
                    torsion.apply(&da, &db).unwrap(),
                    torsion_via_brackets(&n, &da, &db).unwrap(),
                    "oracle equivalence, case {case}"
                );
            }
        }
    }
}

/// Jacobi identity for the field bracket and the Leibniz rule tying the Lie
/// derivative of an endomorphism to brackets, on the even corpus.
pub fn suite_lie_laws(cases: usize) {
    let table = even_table();
    let mut rng = rng(108);
    for case in 0..cases {
        let x = random_field(&mut rng, &table);
        let y = random_field(&mut rng, &table);
        let z = random_field(&mut rng, &table);
        let jac = lie_bracket(&lie_bracket(&x, &y).unwrap(), &z)
            .unwrap()
            .checked_add(&lie_bracket(&lie_bracket(&y, &z).unwrap(), &x).unwrap())
            .unwrap()
            .checked_add(&lie_bracket(&lie_bracket(&z, &x).unwrap(), &y).unwrap())
            .unwrap();
        assert!(jac.is_zero(), "field Jacobi, case {case}");

        let n = random_endomorphism(&mut rng, &table);
        let lhs = lie_bracket(&x, &n.apply(&y).unwrap()).unwrap();
        let rhs = lie_derivative_endomorphism(&x, &n)
            .unwrap()
            .apply(&y)
            .unwrap()
            .checked_add(&n.apply(&lie_bracket(&x, &y).unwrap()).unwrap())
            .unwrap();
        assert_eq!(lhs, rhs, "Lie derivative Leibniz, case {case}");
    }
}
