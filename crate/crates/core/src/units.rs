//! Decibel conversions. Everything downstream works on linear scale.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for i in -300..=300 {
            let db = i as f64 * 0.37;
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-11);
            assert!((watts_to_dbm(dbm_to_watts(db)) - db).abs() < 1e-11);
        }
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
    }
}
