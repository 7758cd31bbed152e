//! Currency amounts are integer cents so that every transfer is exact and the
//! money ledger balances to the cent.

pub type Cents = i64;

pub fn to_cents(dollars: f64) -> Cents {
    (dollars * 100.0).round() as Cents
}

pub fn to_dollars(cents: Cents) -> f64 {
    cents as f64 / 100.0
}
