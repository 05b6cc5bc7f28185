use crate::element::Element;

/// Dense NCHW activation tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor payload length");
        Tensor { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Elements per sample.
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let l = self.sample_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            data: self.data.iter().map(|&x| f(x)).collect(),
            ..*self
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Concatenates along channels; all parts share `n`, `h` and `w`.
    pub fn concat(parts: &[&Tensor<T>]) -> Self {
        let (n, h, w) = (parts[0].n, parts[0].h, parts[0].w);
        assert!(parts.iter().all(|p| p.n == n && p.h == h && p.w == w), "concat shape mismatch");
        let c = parts.iter().map(|p| p.c).sum();
        let mut data = Vec::with_capacity(n * c * h * w);
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(p.sample(i));
            }
        }
        Tensor { n, c, h, w, data }
    }

    /// Inverse of [`Tensor::concat`]: splits channels into the given widths.
    pub fn split(&self, widths: &[usize]) -> Vec<Tensor<T>> {
        assert_eq!(widths.iter().sum::<usize>(), self.c, "split widths");
        let plane = self.plane();
        let mut out: Vec<Tensor<T>> = widths.iter().map(|&c| Tensor::zeros(self.n, c, self.h, self.w)).collect();
        for i in 0..self.n {
            let s = self.sample(i);
            let mut off = 0;
            for (t, &c) in out.iter_mut().zip(widths) {
                t.sample_mut(i).copy_from_slice(&s[off..off + c * plane]);
                off += c * plane;
            }
        }
        out
    }

    /// Per-sample vectors replicated over an `h×w` grid, one channel per
    /// vector entry.
    pub fn replicate(vectors: &[Vec<T>], h: usize, w: usize) -> Self {
        let c = vectors.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(vectors.len() * c * h * w);
        for v in vectors {
            assert_eq!(v.len(), c, "replicated vectors differ in length");
            for &x in v {
                data.extend(std::iter::repeat(x).take(h * w));
            }
        }
        Tensor {
            n: vectors.len(),
            c,
            h,
            w,
            data,
        }
    }

    /// Adjoint of [`Tensor::replicate`]: per-sample, per-channel sums.
    pub fn channel_sums(&self) -> Vec<Vec<T>> {
        let plane = self.plane();
        (0..self.n)
            .map(|i| {
                self.sample(i)
                    .chunks(plane.max(1))
                    .map(|ch| ch.iter().fold(T::zero(), |a, &b| a + b))
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor::from_vec(2, 1, 2, 2, (0..8).map(|x| x as f64).collect());
        let b = Tensor::from_vec(2, 2, 2, 2, (0..16).map(|x| 100.0 + x as f64).collect());
        let c = Tensor::concat(&[&a, &b]);
        assert_eq!(c.c, 3);
        assert_eq!(&c.sample(1)[..4], a.sample(1));
        let parts = c.split(&[1, 2]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn replicate_and_sum_are_adjoint() {
        let v = vec![vec![1.0f64, 2.0], vec![3.0, -1.0]];
        let r = Tensor::replicate(&v, 3, 2);
        assert_eq!(r.shape(), [2, 2, 3, 2]);
        let s = r.channel_sums();
        assert_eq!(s, vec![vec![6.0, 12.0], vec![18.0, -6.0]]);
    }
}
