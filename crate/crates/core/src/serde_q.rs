//! Serialization of exact rationals as `{ "num": .., "den": .. }`.

use serde::ser::SerializeStruct;
use serde::Serializer;

use crate::exact::Q;

pub fn ser<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
    let mut st = s.serialize_struct("Rational", 2)?;
    st.serialize_field("num", &x.numer().to_string())?;
    st.serialize_field("den", &x.denom().to_string())?;
    st.end()
}

pub fn ser_opt<S: Serializer>(x: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser(v, s),
        None => s.serialize_none(),
    }
}
