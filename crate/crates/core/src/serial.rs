//! Serde adapters writing floats as 17-significant-digit decimal strings so
//! fitted parameters round-trip bit-exactly through JSON.

use ndarray::{Array1, Array2};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::num::Scalar;

pub fn format_decimal(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_decimal<T: Scalar, E: serde::de::Error>(s: &str) -> Result<T, E> {
    let v: f64 = s
        .parse()
        .map_err(|_| E::custom(format!("invalid decimal {s:?}")))?;
    T::from_f64(v).ok_or_else(|| E::custom("value out of range"))
}

pub mod decimal_vec {
    use super::*;

    pub fn serialize<T: Scalar, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        let strs: Vec<String> = v.iter().map(|x| format_decimal(x.as_f64())).collect();
        strs.serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        let strs = Vec::<String>::deserialize(d)?;
        strs.iter().map(|s| parse_decimal(s)).collect()
    }
}

pub mod decimal_array2 {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Repr {
        shape: [usize; 2],
        data: Vec<String>,
    }

    pub fn serialize<T: Scalar, S: Serializer>(a: &Array2<T>, s: S) -> Result<S::Ok, S::Error> {
        let (r, c) = a.dim();
        Repr {
            shape: [r, c],
            data: a.iter().map(|x| format_decimal(x.as_f64())).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Array2<T>, D::Error> {
        let repr = Repr::deserialize(d)?;
        let data = repr
            .data
            .iter()
            .map(|s| parse_decimal(s))
            .collect::<Result<Vec<T>, _>>()?;
        Array2::from_shape_vec((repr.shape[0], repr.shape[1]), data).map_err(D::Error::custom)
    }
}

pub mod decimal_array1 {
    use super::*;

    pub fn serialize<T: Scalar, S: Serializer>(a: &Array1<T>, s: S) -> Result<S::Ok, S::Error> {
        super::decimal_vec::serialize(a.as_slice().expect("contiguous"), s)
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(d: D) -> Result<Array1<T>, D::Error> {
        super::decimal_vec::deserialize(d).map(Array1::from)
    }
}
