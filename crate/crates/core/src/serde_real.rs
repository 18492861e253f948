//! JSON has no encoding for NaN or infinities; non-finite reals round-trip
//! through `null`.

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::Deserialize;

use crate::scalar::Real;

fn encode<T: Real>(x: &T) -> Option<&T> {
    if x.is_finite() {
        Some(x)
    } else {
        None
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&encode(x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        let raw: Vec<Option<T>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or_else(T::nan)).collect())
    }
}

pub mod array3 {
    use super::*;

    pub fn serialize<T: Real, S: Serializer>(v: &[T; 3], s: S) -> Result<S::Ok, S::Error> {
        super::vec::serialize(&v[..], s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<[T; 3], D::Error> {
        let raw: [Option<T>; 3] = <[Option<T>; 3]>::deserialize(d)?;
        Ok(raw.map(|x| x.unwrap_or_else(T::nan)))
    }
}
