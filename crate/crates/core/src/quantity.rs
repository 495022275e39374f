//! Exact rational quantities and unit-tagged wrappers.
//!
//! Rates are kept as arbitrary-precision rationals so that golden values stay
//! exact; they are rendered as decimals only for display. The unit newtypes
//! make it impossible to divide, say, kilometres per year by events per year
//! without going through the named conversion functions.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::QuantityError;

/// An exact rational number.
///
/// Serialized as a string: a terminating decimal when the value has one of
/// reasonable length, `p/q` otherwise. Deserialization also accepts JSON
/// numbers and scientific notation (`1.25e-7`).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Exact(BigRational);

impl Exact {
    pub fn zero() -> Self {
        Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Exact(BigRational::one())
    }

    pub fn from_integer(n: i64) -> Self {
        Exact(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Exact(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    /// `10^exp` for any integer exponent.
    pub fn pow10(exp: i32) -> Self {
        let p = BigInt::from(10u32).pow(exp.unsigned_abs());
        if exp >= 0 {
            Exact(BigRational::from_integer(p))
        } else {
            Exact(BigRational::new(BigInt::one(), p))
        }
    }

    /// Converts a finite float through its shortest round-trip decimal form,
    /// so `0.999` becomes exactly `999/1000`.
    pub fn from_f64(x: f64) -> Result<Self, QuantityError> {
        if !x.is_finite() {
            return Err(QuantityError::NotFinite);
        }
        format!("{x:e}").parse()
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Division that reports a zero divisor instead of panicking.
    pub fn checked_div(&self, rhs: &Exact) -> Option<Exact> {
        if rhs.is_zero() {
            None
        } else {
            Some(Exact(&self.0 / &rhs.0))
        }
    }

    /// Smallest integer `d >= 0` with `10^d >= self`. Zero for values `<= 1`.
    pub fn ceil_log10(&self) -> u32 {
        let mut d = 0u32;
        while Exact::pow10(d as i32) < *self {
            d += 1;
        }
        d
    }

    /// Three-significant-figure scientific rendering, e.g. `1.25e-7`.
    pub fn display_sci(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        format!("{:.2e}", self.to_f64())
    }

    /// Terminating decimal rendering if the denominator has only factors 2
    /// and 5 and the expansion is short; `None` otherwise.
    fn terminating_decimal(&self) -> Option<String> {
        let denom = self.0.denom().clone();
        let mut d = denom.clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let (mut twos, mut fives) = (0u32, 0u32);
        while (&d % &two).is_zero() {
            d /= &two;
            twos += 1;
        }
        while (&d % &five).is_zero() {
            d /= &five;
            fives += 1;
        }
        if !d.is_one() {
            return None;
        }
        let places = twos.max(fives);
        if places > 30 {
            return None;
        }
        let scaled = &self.0 * BigRational::from_integer(BigInt::from(10u32).pow(places));
        let digits = scaled.to_integer();
        let negative = digits.is_negative();
        let mut s = digits.abs().to_string();
        if places > 0 {
            let p = places as usize;
            if s.len() <= p {
                s = format!("{}{}", "0".repeat(p + 1 - s.len()), s);
            }
            s.insert(s.len() - p, '.');
        }
        if negative {
            s.insert(0, '-');
        }
        Some(s)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.terminating_decimal() {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exact({self})")
    }
}

impl FromStr for Exact {
    type Err = QuantityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: Exact = n.parse()?;
            let d: Exact = d.parse()?;
            return n
                .checked_div(&d)
                .ok_or_else(|| QuantityError::Malformed(s.to_string()));
        }
        parse_decimal(s).ok_or_else(|| QuantityError::Malformed(s.to_string()))
    }
}

fn parse_decimal(s: &str) -> Option<Exact> {
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let digits = if negative { -digits } else { digits };
    let scale = exponent.checked_sub(i32::try_from(frac_part.len()).ok()?)?;
    Some(Exact(BigRational::from_integer(digits)) * Exact::pow10(scale))
}

impl From<i64> for Exact {
    fn from(n: i64) -> Self {
        Exact::from_integer(n)
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(i64),
            Float(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Int(n) => Ok(Exact::from_integer(n)),
            Repr::Float(x) => Exact::from_f64(x).map_err(serde::de::Error::custom),
        }
    }
}

impl JsonSchema for Exact {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Exact".into()
    }

    fn json_schema(_: &mut schemars::SchemaGenerator) -> schemars::Schema {
        schemars::json_schema!({
            "description": "Exact rational: decimal, scientific notation, or p/q",
            "type": ["string", "number"],
            "pattern": "^-?[0-9]*\\.?[0-9]*([eE][-+]?[0-9]+)?(/-?[0-9]*\\.?[0-9]*([eE][-+]?[0-9]+)?)?$"
        })
    }
}

macro_rules! exact_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Exact {
            type Output = Exact;
            fn $method(self, rhs: Exact) -> Exact {
                Exact($trait::$method(self.0, rhs.0))
            }
        }
        impl<'a> $trait<&'a Exact> for &'a Exact {
            type Output = Exact;
            fn $method(self, rhs: &'a Exact) -> Exact {
                Exact($trait::$method(&self.0, &rhs.0))
            }
        }
    };
}

exact_binop!(Add, add);
exact_binop!(Sub, sub);
exact_binop!(Mul, mul);
exact_binop!(Div, div);

impl std::iter::Sum for Exact {
    fn sum<I: Iterator<Item = Exact>>(iter: I) -> Exact {
        iter.fold(Exact::zero(), |a, b| a + b)
    }
}

/// Defines a unit-tagged, non-negative quantity newtype over [`Exact`].
macro_rules! unit_quantity {
    ($(#[$doc:meta])* $name:ident, $unit:literal) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
        #[serde(try_from = "Exact", into = "Exact")]
        #[schemars(with = "Exact")]
        pub struct $name(Exact);

        impl TryFrom<Exact> for $name {
            type Error = QuantityError;
            fn try_from(value: Exact) -> Result<Self, Self::Error> {
                $name::new(value)
            }
        }

        impl From<$name> for Exact {
            fn from(q: $name) -> Exact {
                q.0
            }
        }

        impl $name {
            pub const UNIT: &'static str = $unit;

            pub fn new(value: Exact) -> Result<Self, QuantityError> {
                if value.is_negative() {
                    Err(QuantityError::Negative { unit: $unit, value: value.to_string() })
                } else {
                    Ok(Self(value))
                }
            }

            pub fn zero() -> Self {
                Self(Exact::zero())
            }

            pub fn value(&self) -> &Exact {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0.display_sci(), $unit)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({} {})", stringify!($name), self.0, $unit)
            }
        }
    };
}

unit_quantity!(
    /// Operating or driving hours accumulated per year.
    HoursPerYear,
    "h/yr"
);
unit_quantity!(
    /// Count of (harm) events per year.
    EventsPerYear,
    "1/yr"
);
unit_quantity!(
    /// Count of (harm) events per operating hour; the unit of every risk rate.
    EventsPerHour,
    "1/h"
);
unit_quantity!(
    /// Distance driven per year.
    KmPerYear,
    "km/yr"
);
unit_quantity!(
    /// Average speed.
    KmPerHour,
    "km/h"
);

impl Add for EventsPerHour {
    type Output = EventsPerHour;
    fn add(self, rhs: EventsPerHour) -> EventsPerHour {
        EventsPerHour(self.0 + rhs.0)
    }
}

impl EventsPerHour {
    /// The rate thinned by a probability; stays non-negative.
    pub fn scale(&self, p: &Probability) -> EventsPerHour {
        EventsPerHour(&self.0 * p.value())
    }
}

impl std::iter::Sum for EventsPerHour {
    fn sum<I: Iterator<Item = EventsPerHour>>(iter: I) -> EventsPerHour {
        iter.fold(EventsPerHour::zero(), |a, b| a + b)
    }
}

/// A probability in `[0, 1]`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "Exact", into = "Exact")]
#[schemars(with = "Exact")]
pub struct Probability(Exact);

impl Probability {
    pub fn new(value: Exact) -> Result<Self, QuantityError> {
        if value.is_negative() || value > Exact::one() {
            Err(QuantityError::NotAProbability(value.to_string()))
        } else {
            Ok(Probability(value))
        }
    }

    pub fn zero() -> Self {
        Probability(Exact::zero())
    }

    pub fn one() -> Self {
        Probability(Exact::one())
    }

    pub fn value(&self) -> &Exact {
        &self.0
    }

    pub fn complement(&self) -> Probability {
        Probability(Exact::one() - self.0.clone())
    }
}

impl TryFrom<Exact> for Probability {
    type Error = QuantityError;
    fn try_from(value: Exact) -> Result<Self, Self::Error> {
        Probability::new(value)
    }
}

impl From<Probability> for Exact {
    fn from(p: Probability) -> Exact {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Probability({})", self.0)
    }
}
