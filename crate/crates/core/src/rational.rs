//! Exact quantities.
//!
//! Demands, capacities and transported amounts are kept as exact rationals so
//! that saturation tests such as `x == d(S)` never depend on a tolerance.
//! Distances and monetary costs stay `f64`.

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};

pub type Rational = Ratio<i128>;

pub fn rat(n: i128) -> Rational {
    Rational::from_integer(n)
}

pub fn ratio(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

pub fn to_f64(r: &Rational) -> f64 {
    let (n, d) = (*r.numer(), *r.denom());
    let q = n / d;
    q as f64 + (n - q * d) as f64 / d as f64
}

pub fn sum<'a, I: IntoIterator<Item = &'a Rational>>(it: I) -> Rational {
    it.into_iter().fold(Rational::zero(), |acc, x| acc + x)
}

/// Parses `"3"`, `"-2"`, `"7/4"` or a plain decimal such as `"0.125"`.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parameter(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| bad())?;
        let d: i128 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 30 {
            return Err(bad());
        }
        let neg = int.starts_with('-');
        let int_part: i128 = if int.is_empty() || int == "-" || int == "+" {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let scale = 10i128.pow(frac.len() as u32);
        let frac_part: i128 = frac.parse().map_err(|_| bad())?;
        let mag = int_part.abs() * scale + frac_part;
        return Ok(Rational::new(if neg { -mag } else { mag }, scale));
    }
    s.parse::<i128>().map(rat).map_err(|_| bad())
}

/// Canonical text form: integers without denominator, otherwise `p/q`.
pub fn format(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Serde adapter storing a rational as its canonical string.
pub mod serde_str {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub mod serde_str_vec {
    use super::Rational;
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&super::format(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter()
            .map(|s| super::parse(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse("3").unwrap(), rat(3));
        assert_eq!(parse("7/4").unwrap(), ratio(7, 4));
        assert_eq!(parse("0.5").unwrap(), ratio(1, 2));
        assert_eq!(parse("-1.25").unwrap(), ratio(-5, 4));
        assert_eq!(parse(".25").unwrap(), ratio(1, 4));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("1.").is_err());
    }

    #[test]
    fn format_round_trips() {
        for r in [rat(0), rat(12), ratio(10, 3), ratio(-7, 2)] {
            assert_eq!(parse(&format(&r)).unwrap(), r);
        }
    }
}
