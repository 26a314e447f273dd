//! Commutative semiring abstraction and the concrete instances used by the
//! aggregation engine and the range-sum backends.

use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AlgebraError {
    #[error("unknown semiring `{0}`")]
    UnknownSemiring(String),
    #[error("integer overflow in counting semiring")]
    Overflow,
    #[error("value {0} does not belong to the {1} carrier")]
    TypeMismatch(Value, &'static str),
    #[error("cannot parse `{0}` as a {1} weight")]
    BadWeight(String, &'static str),
}

/// Tagged value in one of the supported carriers. The tropical carriers use
/// floats with an explicit infinity sentinel; `Set` is the power-set
/// semigroup used to exercise general range-sum backends.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Set(BTreeSet<i64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => {
                if *r == f64::INFINITY {
                    write!(f, "inf")
                } else if *r == f64::NEG_INFINITY {
                    write!(f, "-inf")
                } else {
                    write!(f, "{r}")
                }
            }
            Value::Set(s) => {
                write!(f, "{{")?;
                for (i, x) in s.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemiringKind {
    Boolean,
    Counting,
    Tropical,
    MaxTropical,
    SetUnion,
}

impl SemiringKind {
    pub fn name(self) -> &'static str {
        match self {
            SemiringKind::Boolean => "boolean",
            SemiringKind::Counting => "counting",
            SemiringKind::Tropical => "tropical",
            SemiringKind::MaxTropical => "max_tropical",
            SemiringKind::SetUnion => "setunion",
        }
    }
}

/// A semiring instance: the two operations, their identities and capability
/// flags that drive range-sum backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Semiring {
    pub kind: SemiringKind,
    pub has_additive_inverse: bool,
    pub plus_idempotent: bool,
}

impl Semiring {
    pub fn instance(name: &str) -> Result<Semiring, AlgebraError> {
        let kind = match name {
            "boolean" => SemiringKind::Boolean,
            "counting" => SemiringKind::Counting,
            "tropical" => SemiringKind::Tropical,
            "max_tropical" => SemiringKind::MaxTropical,
            "setunion" => SemiringKind::SetUnion,
            other => return Err(AlgebraError::UnknownSemiring(other.to_string())),
        };
        Ok(Semiring::of(kind))
    }

    pub fn of(kind: SemiringKind) -> Semiring {
        let (has_additive_inverse, plus_idempotent) = match kind {
            SemiringKind::Boolean => (false, true),
            SemiringKind::Counting => (true, false),
            SemiringKind::Tropical => (false, true),
            SemiringKind::MaxTropical => (false, true),
            SemiringKind::SetUnion => (false, true),
        };
        Semiring {
            kind,
            has_additive_inverse,
            plus_idempotent,
        }
    }

    pub fn zero(&self) -> Value {
        match self.kind {
            SemiringKind::Boolean => Value::Bool(false),
            SemiringKind::Counting => Value::Int(0),
            SemiringKind::Tropical => Value::Real(f64::INFINITY),
            SemiringKind::MaxTropical => Value::Real(f64::NEG_INFINITY),
            SemiringKind::SetUnion => Value::Set(BTreeSet::new()),
        }
    }

    pub fn one(&self) -> Value {
        match self.kind {
            SemiringKind::Boolean => Value::Bool(true),
            SemiringKind::Counting => Value::Int(1),
            SemiringKind::Tropical | SemiringKind::MaxTropical => Value::Real(0.0),
            // The set semigroup takes union for both operations; the empty
            // set is the identity of either.
            SemiringKind::SetUnion => Value::Set(BTreeSet::new()),
        }
    }

    pub fn is_zero(&self, v: &Value) -> bool {
        *v == self.zero()
    }

    fn as_bool(&self, v: &Value) -> Result<bool, AlgebraError> {
        match v {
            Value::Bool(b) => Ok(*b),
            _ => Err(AlgebraError::TypeMismatch(v.clone(), self.kind.name())),
        }
    }

    fn as_int(&self, v: &Value) -> Result<i64, AlgebraError> {
        match v {
            Value::Int(i) => Ok(*i),
            _ => Err(AlgebraError::TypeMismatch(v.clone(), self.kind.name())),
        }
    }

    fn as_real(&self, v: &Value) -> Result<f64, AlgebraError> {
        match v {
            Value::Real(r) => Ok(*r),
            _ => Err(AlgebraError::TypeMismatch(v.clone(), self.kind.name())),
        }
    }

    fn as_set<'v>(&self, v: &'v Value) -> Result<&'v BTreeSet<i64>, AlgebraError> {
        match v {
            Value::Set(s) => Ok(s),
            _ => Err(AlgebraError::TypeMismatch(v.clone(), self.kind.name())),
        }
    }

    pub fn plus(&self, a: &Value, b: &Value) -> Result<Value, AlgebraError> {
        Ok(match self.kind {
            SemiringKind::Boolean => Value::Bool(self.as_bool(a)? | self.as_bool(b)?),
            SemiringKind::Counting => Value::Int(
                self.as_int(a)?
                    .checked_add(self.as_int(b)?)
                    .ok_or(AlgebraError::Overflow)?,
            ),
            SemiringKind::Tropical => Value::Real(self.as_real(a)?.min(self.as_real(b)?)),
            SemiringKind::MaxTropical => Value::Real(self.as_real(a)?.max(self.as_real(b)?)),
            SemiringKind::SetUnion => {
                Value::Set(self.as_set(a)?.union(self.as_set(b)?).copied().collect())
            }
        })
    }

    pub fn times(&self, a: &Value, b: &Value) -> Result<Value, AlgebraError> {
        Ok(match self.kind {
            SemiringKind::Boolean => Value::Bool(self.as_bool(a)? & self.as_bool(b)?),
            SemiringKind::Counting => Value::Int(
                self.as_int(a)?
                    .checked_mul(self.as_int(b)?)
                    .ok_or(AlgebraError::Overflow)?,
            ),
            SemiringKind::Tropical | SemiringKind::MaxTropical => {
                Value::Real(self.as_real(a)? + self.as_real(b)?)
            }
            SemiringKind::SetUnion => {
                Value::Set(self.as_set(a)?.union(self.as_set(b)?).copied().collect())
            }
        })
    }

    /// Additive inverse, for carriers that have one.
    pub fn neg(&self, a: &Value) -> Option<Result<Value, AlgebraError>> {
        match self.kind {
            SemiringKind::Counting => Some(match self.as_int(a) {
                Ok(i) => i
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or(AlgebraError::Overflow),
                Err(e) => Err(e),
            }),
            _ => None,
        }
    }

    pub fn sum(&self, values: impl IntoIterator<Item = Value>) -> Result<Value, AlgebraError> {
        let mut acc = self.zero();
        for v in values {
            acc = self.plus(&acc, &v)?;
        }
        Ok(acc)
    }

    pub fn product(&self, values: impl IntoIterator<Item = Value>) -> Result<Value, AlgebraError> {
        let mut acc = self.one();
        for v in values {
            acc = self.times(&acc, &v)?;
        }
        Ok(acc)
    }

    /// Parses a weight from its CSV / query-file spelling.
    pub fn parse_weight(&self, text: &str) -> Result<Value, AlgebraError> {
        let bad = || AlgebraError::BadWeight(text.to_string(), self.kind.name());
        let t = text.trim();
        Ok(match self.kind {
            SemiringKind::Boolean => match t {
                "true" | "1" => Value::Bool(true),
                "false" | "0" => Value::Bool(false),
                _ => return Err(bad()),
            },
            SemiringKind::Counting => Value::Int(t.parse::<i64>().map_err(|_| bad())?),
            SemiringKind::Tropical | SemiringKind::MaxTropical => match t {
                "inf" => Value::Real(f64::INFINITY),
                "-inf" => Value::Real(f64::NEG_INFINITY),
                _ => Value::Real(t.parse::<f64>().map_err(|_| bad())?),
            },
            SemiringKind::SetUnion => {
                let inner = t
                    .strip_prefix('{')
                    .and_then(|s| s.strip_suffix('}'))
                    .ok_or_else(bad)?;
                let mut set = BTreeSet::new();
                for part in inner.split(';').filter(|p| !p.trim().is_empty()) {
                    set.insert(part.trim().parse::<i64>().map_err(|_| bad())?);
                }
                Value::Set(set)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn instance_flags_and_units() {
        let counting = Semiring::instance("counting").unwrap();
        assert!(counting.has_additive_inverse);
        assert!(!counting.plus_idempotent);
        assert_eq!(
            counting.plus(&Value::Int(2), &Value::Int(3)).unwrap(),
            Value::Int(5)
        );
        assert_eq!(
            counting.times(&Value::Int(2), &Value::Int(3)).unwrap(),
            Value::Int(6)
        );
        assert_eq!(counting.zero(), Value::Int(0));
        assert_eq!(counting.one(), Value::Int(1));

        let trop = Semiring::instance("tropical").unwrap();
        assert!(trop.plus_idempotent);
        assert_eq!(
            trop.plus(&Value::Real(4.0), &Value::Real(7.0)).unwrap(),
            Value::Real(4.0)
        );
        assert_eq!(
            trop.times(&Value::Real(4.0), &Value::Real(7.0)).unwrap(),
            Value::Real(11.0)
        );
        assert_eq!(trop.zero(), Value::Real(f64::INFINITY));
        assert_eq!(trop.one(), Value::Real(0.0));

        let boolean = Semiring::instance("boolean").unwrap();
        assert_eq!(
            boolean
                .plus(&Value::Bool(false), &Value::Bool(true))
                .unwrap(),
            Value::Bool(true)
        );
        assert_eq!(
            boolean
                .times(&Value::Bool(true), &Value::Bool(false))
                .unwrap(),
            Value::Bool(false)
        );

        assert!(Semiring::instance("galois").is_err());
    }

    fn random_value(s: &Semiring, rng: &mut StdRng) -> Value {
        match s.kind {
            SemiringKind::Boolean => Value::Bool(rng.gen()),
            SemiringKind::Counting => Value::Int(rng.gen_range(-40..40)),
            SemiringKind::Tropical => {
                if rng.gen_ratio(1, 16) {
                    Value::Real(f64::INFINITY)
                } else {
                    Value::Real(rng.gen_range(-30..30) as f64 * 0.5)
                }
            }
            SemiringKind::MaxTropical => {
                if rng.gen_ratio(1, 16) {
                    Value::Real(f64::NEG_INFINITY)
                } else {
                    Value::Real(rng.gen_range(-30..30) as f64 * 0.5)
                }
            }
            SemiringKind::SetUnion => {
                let n = rng.gen_range(0..4);
                Value::Set((0..n).map(|_| rng.gen_range(0..10)).collect())
            }
        }
    }

    #[test]
    fn semiring_laws_hold_on_random_triples() {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for kind in [
            SemiringKind::Boolean,
            SemiringKind::Counting,
            SemiringKind::Tropical,
            SemiringKind::MaxTropical,
            SemiringKind::SetUnion,
        ] {
            let s = Semiring::of(kind);
            for _ in 0..10_000 {
                let a = random_value(&s, &mut rng);
                let b = random_value(&s, &mut rng);
                let c = random_value(&s, &mut rng);
                let plus = |x: &Value, y: &Value| s.plus(x, y).unwrap();
                let times = |x: &Value, y: &Value| s.times(x, y).unwrap();
                // Commutative monoids.
                assert_eq!(plus(&a, &b), plus(&b, &a));
                assert_eq!(times(&a, &b), times(&b, &a));
                assert_eq!(plus(&plus(&a, &b), &c), plus(&a, &plus(&b, &c)));
                assert_eq!(times(&times(&a, &b), &c), times(&a, &times(&b, &c)));
                assert_eq!(plus(&a, &s.zero()), a);
                assert_eq!(times(&a, &s.one()), a);
                // Distributivity.
                assert_eq!(
                    times(&a, &plus(&b, &c)),
                    plus(&times(&a, &b), &times(&a, &c))
                );
                // Annihilation; the set semigroup is not a semiring and is
                // exempt (its zero is the union identity, not an annihilator).
                if kind != SemiringKind::SetUnion {
                    assert_eq!(times(&a, &s.zero()), s.zero());
                }
                if s.has_additive_inverse {
                    let n = s.neg(&a).unwrap().unwrap();
                    assert_eq!(plus(&a, &n), s.zero());
                }
                if s.plus_idempotent {
                    assert_eq!(plus(&a, &a), a);
                }
            }
        }
    }

    #[test]
    fn counting_overflow_is_an_error() {
        let s = Semiring::of(SemiringKind::Counting);
        assert_eq!(
            s.plus(&Value::Int(i64::MAX), &Value::Int(1)),
            Err(AlgebraError::Overflow)
        );
        assert_eq!(
            s.times(&Value::Int(i64::MAX / 2), &Value::Int(3)),
            Err(AlgebraError::Overflow)
        );
    }

    #[test]
    fn weight_parsing() {
        let trop = Semiring::of(SemiringKind::Tropical);
        assert_eq!(
            trop.parse_weight("inf").unwrap(),
            Value::Real(f64::INFINITY)
        );
        assert_eq!(trop.parse_weight("2.5").unwrap(), Value::Real(2.5));
        let counting = Semiring::of(SemiringKind::Counting);
        assert!(counting.parse_weight("abc").is_err());
        let set = Semiring::of(SemiringKind::SetUnion);
        assert_eq!(
            set.parse_weight("{1;2;3}").unwrap(),
            Value::Set([1, 2, 3].into_iter().collect())
        );
        assert_eq!(set.parse_weight("{}").unwrap(), Value::Set(BTreeSet::new()));
    }
}
