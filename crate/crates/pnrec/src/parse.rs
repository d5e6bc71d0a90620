//! Expression parser for the canonical polynomial syntax.
//!
//! Grammar (ASCII whitespace between tokens is ignored):
//!
//! ```text
//! expr   := [ '+' | '-' ] term ( ( '+' | '-' ) term )*
//! term   := factor ( '*' factor )*
//! factor := atom [ '^' uint ]
//! atom   := uint [ '/' uint ] | ident | '(' expr ')'
//! ```
//!
//! Errors carry the byte offset of the offending token. An explicit power
//! `^e` with `e >= 2` on an odd variable is rejected; the same square formed
//! by repeated multiplication collapses to zero silently, matching the
//! algebra.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::Zero;

use crate::poly::{AlgebraError, Coeff, Polynomial};
use crate::variable::VariableTable;

pub fn parse_polynomial(
    table: &Arc<VariableTable>,
    input: &str,
) -> Result<Polynomial, AlgebraError> {
    let mut p = Parser { table, bytes: input.as_bytes(), pos: 0 };
    p.skip_ws();
    let poly = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(poly)
}

struct Parser<'a> {
    table: &'a Arc<VariableTable>,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> AlgebraError {
        AlgebraError::Parse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Polynomial, AlgebraError> {
        self.skip_ws();
        let mut negate = false;
        if self.eat(b'-') {
            negate = true;
        } else {
            self.eat(b'+');
        }
        let mut acc = self.term()?;
        if negate {
            acc = acc.neg();
        }
        loop {
            self.skip_ws();
            let sub = match self.peek() {
                Some(b'+') => false,
                Some(b'-') => true,
                _ => break,
            };
            self.pos += 1;
            let t = self.term()?;
            acc = if sub { acc.checked_sub(&t)? } else { acc.checked_add(&t)? };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial, AlgebraError> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            if !self.eat(b'*') {
                break;
            }
            let f = self.factor()?;
            acc = acc.checked_mul(&f)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Polynomial, AlgebraError> {
        self.skip_ws();
        let atom_start = self.pos;
        let (base, ident) = self.atom()?;
        self.skip_ws();
        if !self.eat(b'^') {
            return Ok(base);
        }
        self.skip_ws();
        let exp_u64 = self.uint()?;
        let exp: u32 = exp_u64
            .try_into()
            .map_err(|_| self.err("exponent too large"))?;
        if exp >= 2 {
            if let Some(name) = ident {
                let v = self.table.id(&name).expect("ident resolved by atom");
                if self.table.parity(v).is_odd() {
                    return Err(AlgebraError::ParseOddPower {
                        offset: atom_start,
                        name,
                        exponent: exp,
                    });
                }
            }
        }
        Ok(base.pow(exp))
    }

    /// Returns the parsed atom plus the variable name when the atom was a
    /// bare identifier (needed for the odd-power check).
    fn atom(&mut self) -> Result<(Polynomial, Option<String>), AlgebraError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.skip_ws();
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok((inner, None))
            }
            Some(b) if b.is_ascii_digit() => {
                let num = self.uint_big()?;
                self.skip_ws();
                let c = if self.eat(b'/') {
                    self.skip_ws();
                    let den_pos = self.pos;
                    let den = self.uint_big()?;
                    if den.is_zero() {
                        return Err(AlgebraError::Parse {
                            offset: den_pos,
                            message: "zero denominator".to_string(),
                        });
                    }
                    Coeff::new(num, den)
                } else {
                    Coeff::from_integer(num)
                };
                Ok((Polynomial::constant(self.table, c), None))
            }
            Some(b) if b == b'_' || b.is_ascii_alphabetic() => {
                let start = self.pos;
                while self
                    .peek()
                    .map(|c| c == b'_' || c.is_ascii_alphanumeric())
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.bytes[start..self.pos])
                    .expect("ascii ident")
                    .to_string();
                let Some(v) = self.table.id(&name) else {
                    return Err(AlgebraError::ParseUnknownVariable { offset: start, name });
                };
                Ok((Polynomial::variable(self.table, v)?, Some(name)))
            }
            _ => Err(self.err("expected number, variable, or `(`")),
        }
    }

    fn uint(&mut self) -> Result<u64, AlgebraError> {
        let start = self.pos;
        let big = self.uint_big()?;
        u64::try_from(big).map_err(|_| AlgebraError::Parse {
            offset: start,
            message: "integer too large".to_string(),
        })
    }

    fn uint_big(&mut self) -> Result<BigInt, AlgebraError> {
        let start = self.pos;
        while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected unsigned integer"));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<BigInt>().map_err(|_| AlgebraError::Parse {
            offset: start,
            message: "bad integer literal".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{coeff_int, coeff_ratio};
    use crate::variable::{Parity, VarKind, Variable, VariableTable};

    fn table() -> Arc<VariableTable> {
        VariableTable::new(vec![
            Variable::orbit("q1", VarKind::Q, Parity::Even, 1, 1),
            Variable::orbit("q2", VarKind::Q, Parity::Even, 2, 2),
            Variable::orbit("th1", VarKind::Q, Parity::Odd, 1, 1),
            Variable::parameter("t1", VarKind::T),
        ])
        .unwrap()
    }

    #[test]
    fn parses_signs_rationals_powers() {
        let t = table();
        let q1 = t.id("q1").unwrap();
        let t1 = t.id("t1").unwrap();
        let p = parse_polynomial(&t, "-1/2*q1^2 + 3*q1*t1 - (q1 - 2)").unwrap();
        let expected = Polynomial::from_terms(
            &t,
            &[
                (coeff_ratio(-1, 2), vec![(q1, 2)]),
                (coeff_int(3), vec![(q1, 1), (t1, 1)]),
                (coeff_int(-1), vec![(q1, 1)]),
                (coeff_int(2), vec![]),
            ],
        )
        .unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn display_round_trips() {
        let t = table();
        let q1 = t.id("q1").unwrap();
        let q2 = t.id("q2").unwrap();
        let th1 = t.id("th1").unwrap();
        let f = Polynomial::from_terms(
            &t,
            &[
                (coeff_ratio(7, 3), vec![(q1, 2), (q2, 1)]),
                (coeff_int(-1), vec![(th1, 1)]),
                (coeff_ratio(1, 2), vec![]),
            ],
        )
        .unwrap();
        let g = parse_polynomial(&t, &f.to_string()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn odd_square_by_multiplication_is_zero() {
        let t = table();
        let p = parse_polynomial(&t, "th1*th1").unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn explicit_odd_power_is_an_error() {
        let t = table();
        let err = parse_polynomial(&t, "q1 + th1^2").unwrap_err();
        assert_eq!(
            err,
            AlgebraError::ParseOddPower { offset: 5, name: "th1".to_string(), exponent: 2 }
        );
    }

    #[test]
    fn unknown_variable_reports_offset() {
        let t = table();
        let err = parse_polynomial(&t, "q1*zz").unwrap_err();
        assert_eq!(
            err,
            AlgebraError::ParseUnknownVariable { offset: 3, name: "zz".to_string() }
        );
    }

    #[test]
    fn syntax_errors_report_offset() {
        let t = table();
        let err = parse_polynomial(&t, "q1 + ").unwrap_err();
        assert!(matches!(err, AlgebraError::Parse { offset: 5, .. }));
        let err = parse_polynomial(&t, "1/0").unwrap_err();
        assert!(matches!(err, AlgebraError::Parse { offset: 2, .. }));
        let err = parse_polynomial(&t, "(q1").unwrap_err();
        assert!(matches!(err, AlgebraError::Parse { offset: 3, .. }));
    }
}
