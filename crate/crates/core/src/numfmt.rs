//! Byte-stable float formatting shared by exports and CLI output.

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

/// 17 significant digits in scientific notation, e.g. `6.6666666666666663e-1`.
/// Round-trips exactly through `str::parse::<f64>`.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Serializes an `f64` into JSON as a 17-significant-digit number literal.
/// Non-finite values become `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

/// Serde helper for `f64` fields: `#[serde(serialize_with = "numfmt::f17")]`.
pub fn f17<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    F17(*x).serialize(s)
}

pub fn f17_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&F17(*x))?;
    }
    seq.end()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(fmt17(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt17(2.0 / 3.0), "6.6666666666666663e-1");
        assert_eq!(fmt17(0.0), "0.0000000000000000e0");
        assert_eq!(serde_json::to_string(&F17(1.0)).unwrap(), "1.0000000000000000e0");
        assert_eq!(serde_json::to_string(&F17(f64::NAN)).unwrap(), "null");
    }

    proptest! {
        #[test]
        fn round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
            let json = serde_json::to_string(&F17(x)).unwrap();
            prop_assert_eq!(serde_json::from_str::<f64>(&json).unwrap(), x);
        }
    }
}
