use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector has no cosine")]
    ZeroNorm,
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<(), VectorError> {
    if u.len() != v.len() {
        return Err(VectorError::DimensionMismatch(u.len(), v.len()));
    }
    Ok(())
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, VectorError> {
    check_dims(u, v)?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub fn euclidean(u: &[f64], v: &[f64]) -> Result<f64, VectorError> {
    check_dims(u, v)?;
    Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

/// `(cosine, euclidean)` of two raw (unnormalized) vectors.
pub fn vector_metrics(u: &[f64], v: &[f64]) -> Result<(f64, f64), VectorError> {
    Ok((cosine(u, v)?, euclidean(u, v)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_orthogonal() {
        let u = [1.0, 2.0, -3.0];
        let (c, e) = vector_metrics(&u, &u).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        assert_eq!(e, 0.0);
        let (c, e) = vector_metrics(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(c, 0.0);
        assert!((e - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(cosine(&[1.0], &[1.0, 2.0]), Err(VectorError::DimensionMismatch(1, 2)));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), Err(VectorError::ZeroNorm));
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]), Ok(5.0));
    }
}
