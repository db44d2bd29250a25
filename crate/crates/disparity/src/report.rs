//! JSON reports: sorted keys, floats rounded to 10 significant digits,
//! non-finite numbers as `null`.

use serde::Serialize;
use serde_json::{Map, Number, Value};

use crate::error::Result;

pub const SIGNIFICANT_DIGITS: usize = 10;

pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in place; integers are left alone.
pub fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            Number::from_f64(round_sig(x) + 0.0).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

pub fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

/// Pretty JSON with a trailing newline.
pub fn render(report: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&normalize(report.clone()))?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn rounding_and_nulls() {
        assert_eq!(round_sig(2.0 / 3.0), 0.6666666667);
        assert_eq!(round_sig(-123456.789012345), -123456.789);
        let v = normalize(json!({"b": 1.0 / 3.0, "a": [f64::NAN, 7], "c": -0.0}));
        assert_eq!(
            render(&v).unwrap(),
            "{\n  \"a\": [\n    null,\n    7\n  ],\n  \"b\": 0.3333333333,\n  \"c\": 0.0\n}\n"
        );
    }

    proptest! {
        #[test]
        fn render_parse_render_is_identical(xs in proptest::collection::vec(-1e12f64..1e12, 0..20), k in any::<u32>()) {
            let v = json!({"xs": xs, "k": k, "nested": {"z": xs.first().copied(), "a": "s"}});
            let once = render(&v).unwrap();
            let back: Value = serde_json::from_str(&once).unwrap();
            prop_assert_eq!(&once, &render(&back).unwrap());
        }
    }
}
