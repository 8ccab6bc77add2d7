//! The six two-path unencoded fidelities, written out term by term
//! (binomial expansion of the stored-qudit factor, D = 7).

pub fn f50(p1: f64, _p2: f64, _pd: f64) -> f64 {
    p1.powi(5)
}

pub fn f41(p1: f64, p2: f64, pd: f64) -> f64 {
    let q = 1.0 - pd;
    p1.powi(4)
        * p2
        * (q.powi(4)
            + 4.0 / 7.0 * pd * q.powi(3)
            + 6.0 / 49.0 * pd.powi(2) * q.powi(2)
            + 4.0 / 343.0 * pd.powi(3) * q
            + pd.powi(4) / 2401.0)
}

pub fn f32_(p1: f64, p2: f64, pd: f64) -> f64 {
    let q = 1.0 - pd;
    p1.powi(3)
        * p2.powi(2)
        * (q.powi(3) + 3.0 / 7.0 * pd * q.powi(2) + 3.0 / 49.0 * pd.powi(2) * q + pd.powi(3) / 343.0)
}

pub fn f23(p1: f64, p2: f64, pd: f64) -> f64 {
    let q = 1.0 - pd;
    p1.powi(2) * p2.powi(3) * (q.powi(2) + 2.0 / 7.0 * pd * q + pd.powi(2) / 49.0)
}

pub fn f14(p1: f64, p2: f64, pd: f64) -> f64 {
    p1 * p2.powi(4) * ((1.0 - pd) + pd / 7.0)
}

pub fn f05(_p1: f64, p2: f64, _pd: f64) -> f64 {
    p2.powi(5)
}

pub type Closed = fn(f64, f64, f64) -> f64;

pub const CASES: [(&str, Closed); 6] = [
    ("5+0/u7", f50),
    ("4+1/u7", f41),
    ("3+2/u7", f32_),
    ("2+3/u7", f23),
    ("1+4/u7", f14),
    ("0+5/u7", f05),
];
