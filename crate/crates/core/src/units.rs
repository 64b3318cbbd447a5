//! Physical constants and logarithmic unit helpers.

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Powers below this level are treated as zero when converted to dB.
pub const POWER_FLOOR_W: f64 = 1e-15;

pub const THZ: f64 = 1e12;
pub const GHZ: f64 = 1e9;

#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[inline]
pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * db_to_lin(dbm)
}

/// Converts watts to dBm, mapping anything under [`POWER_FLOOR_W`] to `-inf`.
#[inline]
pub fn watt_to_dbm(w: f64) -> f64 {
    if w < POWER_FLOOR_W {
        f64::NEG_INFINITY
    } else {
        lin_to_db(w / 1e-3)
    }
}

/// dB/km to a power attenuation coefficient in 1/km.
#[inline]
pub fn db_per_km_to_neper(alpha_db: f64) -> f64 {
    alpha_db * std::f64::consts::LN_10 / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert!((dbm_to_watt(0.0) - 1e-3).abs() < 1e-18);
        assert!((watt_to_dbm(1e-3)).abs() < 1e-12);
        assert!((lin_to_db(db_to_lin(13.7)) - 13.7).abs() < 1e-12);
        assert_eq!(watt_to_dbm(1e-16), f64::NEG_INFINITY);
        assert!((db_per_km_to_neper(0.2) - 0.046_051_7).abs() < 1e-6);
    }
}
