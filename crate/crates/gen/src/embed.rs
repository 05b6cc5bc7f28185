use flashchan::PECycle;

use crate::element::Element;
use crate::error::{GenError, Result};
use crate::tensor::Tensor;

/// Length of the P/E feature vector and of the latent vector.
pub const EMBED_DIM: usize = 6;

/// `[p^¼, p^½, p, p², p³, p⁴]` for `p = pe / pe_max`.
pub fn pe_embed<T: Element>(pe: PECycle, pe_max: PECycle) -> Result<Vec<T>> {
    if pe.0 > pe_max.0 || pe_max.0 == 0 {
        return Err(GenError::PeOutOfRange { pe: pe.0, pe_max: pe_max.0 });
    }
    let p = pe.0 as f64 / pe_max.0 as f64;
    Ok([p.sqrt().sqrt(), p.sqrt(), p, p * p, p * p * p, p * p * p * p]
        .iter()
        .map(|&v| T::cst(v))
        .collect())
}

/// Appends `vectors[i]` to sample `i` of `fm` as spatially constant channels.
pub fn st_concat<T: Element>(fm: &Tensor<T>, vectors: &[Vec<T>]) -> Tensor<T> {
    assert_eq!(fm.n, vectors.len(), "one vector per sample");
    Tensor::concat(&[fm, &Tensor::replicate(vectors, fm.h, fm.w)])
}
