//! Text formats: CSV for curves and sweeps, plus serde helpers.

use std::io::Write;

use crate::params::LogMomentCurve;

/// Serde adapter for `f64` that also accepts the strings `"inf"`,
/// `"-inf"` and `"infinity"`; infinite values serialize as `"inf"`/`"-inf"`.
pub mod extended_f64 {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() {
            s.serialize_str(if *value > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                    "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Writes the per-step curve as CSV with header `lambda,alpha_per_step`.
pub fn write_curve_csv<W: Write>(curve: &LogMomentCurve, mut out: W) -> std::io::Result<()> {
    writeln!(out, "lambda,alpha_per_step")?;
    for (lambda, alpha) in curve.per_step() {
        writeln!(out, "{lambda},{alpha}")?;
    }
    Ok(())
}

/// Parses the CSV produced by [`write_curve_csv`] back into `(lambda, alpha)` pairs.
pub fn read_curve_csv(text: &str) -> Result<Vec<(u32, f64)>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("lambda,alpha_per_step") => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (a, b) = l.split_once(',').ok_or_else(|| format!("malformed row {l:?}"))?;
            let lambda = a.parse::<u32>().map_err(|e| format!("{l:?}: {e}"))?;
            let alpha = b.parse::<f64>().map_err(|e| format!("{l:?}: {e}"))?;
            Ok((lambda, alpha))
        })
        .collect()
}
