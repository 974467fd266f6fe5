//! Serialize `DVector<f64>` as a plain JSON array.

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    v.as_slice().serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
    Vec::<f64>::deserialize(d).map(DVector::from_vec)
}

pub mod many {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = v.iter().map(|r| r.as_slice()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        Vec::<Vec<f64>>::deserialize(d).map(|rows| rows.into_iter().map(DVector::from_vec).collect())
    }
}

/// Matrix as the list of its columns.
pub mod columns {
    use nalgebra::DMatrix;
    use serde::de::Error as _;

    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let cols: Vec<Vec<f64>> = m.column_iter().map(|c| c.iter().copied().collect()).collect();
        cols.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let cols = Vec::<Vec<f64>>::deserialize(d)?;
        let rows = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != rows) {
            return Err(D::Error::custom("ragged matrix columns"));
        }
        Ok(DMatrix::from_iterator(rows, cols.len(), cols.into_iter().flatten()))
    }
}

/// Complex numbers as `[re, im]` pairs.
pub mod complex {
    use nalgebra::Complex;

    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex<f64>], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex<f64>>, D::Error> {
        Vec::<[f64; 2]>::deserialize(d).map(|v| v.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
    }
}
