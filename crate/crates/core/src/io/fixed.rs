use serde::de::{Deserialize, Deserializer};
use serde::ser::{Error as _, Serialize, Serializer};
use serde_json::value::RawValue;

/// A real number that serialises with exactly four decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed4(pub f64);

fn format4(v: f64) -> String {
    // Avoid "-0.0000".
    let s = format!("{v:.4}");
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        "0.0000".to_string()
    } else {
        s
    }
}

/// The value a number takes after a write/read round trip.
pub fn quantize4(v: f64) -> f64 {
    format4(v).parse().expect("formatted float parses")
}

impl Serialize for Fixed4 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("cannot write non-finite number {}", self.0)));
        }
        let raw = RawValue::from_string(format4(self.0)).map_err(S::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fixed4 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Fixed4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_formatting() {
        assert_eq!(serde_json::to_string(&Fixed4(1.0)).unwrap(), "1.0000");
        assert_eq!(serde_json::to_string(&Fixed4(-0.00001)).unwrap(), "0.0000");
        assert_eq!(serde_json::to_string(&[Fixed4(2.5), Fixed4(1.0 / 3.0)]).unwrap(), "[2.5000,0.3333]");
        assert!(serde_json::to_string(&Fixed4(f64::NAN)).is_err());
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(v in -1e6..1e6f64) {
            let q = quantize4(v);
            prop_assert_eq!(quantize4(q), q);
            prop_assert!((q - v).abs() <= 5.0001e-5);
            let text = serde_json::to_string(&Fixed4(v)).unwrap();
            let back: Fixed4 = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.0, q);
        }
    }
}
