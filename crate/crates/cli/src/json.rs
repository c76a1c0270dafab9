use serde_json::Value;

/// A float rounded to 9 significant digits; non-finite values become the
/// strings `inf`, `-inf` and `nan`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::from("nan")
    } else if x.is_infinite() {
        Value::from(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
        Value::from(rounded)
    }
}

pub fn nums(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(num).collect())
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}
