//! Closed-form spatial expressions in the room coordinates `x` (ξ₁) and `y` (ξ₂).
//!
//! Shapes, forcing terms and observation weights are written as strings in a
//! small arithmetic grammar (`+ - * / ^`, `sin`, `cos`, `exp`, `pi`, ...) and
//! evaluated at quadrature points.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone)]
pub struct ScalarExpr {
    source: String,
    expr: meval::Expr,
}

impl ScalarExpr {
    pub fn parse(source: &str) -> Result<Self> {
        let expr: meval::Expr = source.parse().map_err(|e: meval::Error| Error::Expression {
            expr: source.to_string(),
            reason: e.to_string(),
        })?;
        let parsed = ScalarExpr {
            source: source.to_string(),
            expr,
        };
        // Catches unknown identifiers up front instead of at the first quadrature point.
        let ctx = meval::Context::new();
        parsed.eval_in(&ctx, 0.3, 0.7).map_err(|e| Error::Expression {
            expr: source.to_string(),
            reason: e.to_string(),
        })?;
        Ok(parsed)
    }

    pub fn constant(value: f64) -> Self {
        Self::parse(&format!("{value:e}")).expect("numeric literal parses")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn eval_in(&self, ctx: &meval::Context, x: f64, y: f64) -> std::result::Result<f64, meval::Error> {
        self.expr.eval_with_context(((("x", x), ("y", y)), ctx))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let ctx = meval::Context::new();
        self.eval_in(&ctx, x, y).unwrap_or(f64::NAN)
    }

    /// Evaluates at many points, building the function table once.
    pub fn eval_points(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let ctx = meval::Context::new();
        points
            .iter()
            .map(|p| self.eval_in(&ctx, p[0], p[1]).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn is_zero_literal(&self) -> bool {
        self.source.trim().parse::<f64>().map(|v| v == 0.0).unwrap_or(false)
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.source)
    }
}

impl PartialEq for ScalarExpr {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Serialize for ScalarExpr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for ScalarExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        ScalarExpr::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_grammar() {
        let e = ScalarExpr::parse("5*sin(2*pi*x)*cos(2*pi*y) + 2^3 - exp(0)").unwrap();
        let v = e.eval(0.25, 0.0);
        assert!((v - (5.0 + 8.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn bump_vanishes_at_endpoints() {
        let e = ScalarExpr::parse("exp(-0.00004/((5/8-y)*(7/8-y))^2)").unwrap();
        assert_eq!(e.eval(0.0, 5.0 / 8.0), 0.0);
        assert_eq!(e.eval(0.0, 7.0 / 8.0), 0.0);
        let mid = e.eval(0.0, 0.75);
        assert!(mid > 0.8 && mid < 0.9);
    }

    #[test]
    fn rejects_unknown_identifier() {
        assert!(matches!(ScalarExpr::parse("z + 1"), Err(Error::Expression { .. })));
        assert!(ScalarExpr::parse("sin(").is_err());
    }
}
