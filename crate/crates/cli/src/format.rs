/// `x` rounded to `digits` significant digits for display.
pub fn sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (digits as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.prec$e}", prec = digits - 1)
    }
}

/// Display precision used on the terminal.
pub fn show(x: f64) -> String {
    sig(x, 6)
}

/// Full precision for files.
pub fn full(x: f64) -> String {
    equipoise::data::fmt_roundtrip(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig(17.523456789, 6), "17.5235");
        assert_eq!(sig(0.000123456789, 6), "0.000123457");
        assert_eq!(sig(1234567.0, 6), "1.23457e6");
        assert_eq!(sig(-3.0, 6), "-3.00000");
    }

    #[test]
    fn full_precision_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(full(x).parse::<f64>().unwrap(), x);
        }
    }
}
