use crate::error::{EfsError, Result};

/// `n` points in `d` dimensions, stored row-major. Row `i` is particle `x_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl ParticleSet {
    /// Builds a set from row-major data. Every entry must be finite.
    pub fn from_flat(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(EfsError::invalid("dimension must be at least 1"));
        }
        if data.len() != n * d {
            return Err(EfsError::invalid(format!(
                "expected {} values for {n} x {d} points, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EfsError::invalid(format!(
                "non-finite coordinate at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(ParticleSet { data, n, d })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| EfsError::invalid("empty point list"))?;
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(EfsError::invalid(format!(
                    "row {i} has {} coordinates, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(data, rows.len(), d)
    }

    /// Skips validation; callers guarantee finiteness and shape.
    pub(crate) fn from_flat_unchecked(data: Vec<f64>, n: usize, d: usize) -> Self {
        debug_assert_eq!(data.len(), n * d);
        ParticleSet { data, n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Requires at least `min` points.
    pub fn require_len(&self, min: usize) -> Result<()> {
        if self.n < min {
            return Err(EfsError::invalid(format!(
                "need at least {min} points, got {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn require_dim(&self, d: usize) -> Result<()> {
        if self.d != d {
            return Err(EfsError::DimensionMismatch {
                expected: d,
                found: self.d,
            });
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.d];
        for r in self.rows() {
            for (ci, x) in c.iter_mut().zip(r) {
                *ci += x;
            }
        }
        let inv = 1.0 / self.n as f64;
        c.iter_mut().for_each(|v| *v *= inv);
        c
    }

    /// Applies `f` to every row, producing a set of the same shape.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut out = vec![0.0; self.data.len()];
        for (src, dst) in self.rows().zip(out.chunks_exact_mut(self.d)) {
            f(src, dst);
        }
        Self::from_flat(out, self.n, self.d)
    }

    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        self.require_dim(shift.len())?;
        self.map_rows(|src, dst| {
            for ((o, x), c) in dst.iter_mut().zip(src).zip(shift) {
                *o = x + c;
            }
        })
    }

    /// Rows reordered so that new row `i` is old row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(EfsError::invalid("permutation length differs from n"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            if i >= self.n {
                return Err(EfsError::IndexOutOfRange {
                    index: i,
                    len: self.n,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self::from_flat_unchecked(data, self.n, self.d))
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nan() {
        let err = ParticleSet::from_flat(vec![0.0, f64::NAN], 1, 2).unwrap_err();
        assert!(matches!(err, EfsError::InvalidInput(_)));
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(ParticleSet::from_rows(&[vec![0.0, 1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn centroid_and_translate() {
        let ps = ParticleSet::from_rows(&[[0.0, 0.0], [2.0, 4.0]]).unwrap();
        assert_eq!(ps.centroid(), vec![1.0, 2.0]);
        let t = ps.translated(&[1.0, -1.0]).unwrap();
        assert_eq!(t.row(1), &[3.0, 3.0]);
    }

    #[test]
    fn permute_rows() {
        let ps = ParticleSet::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let p = ps.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.as_flat(), &[2.0, 0.0, 1.0]);
        assert!(ps.permuted(&[0, 1, 5]).is_err());
    }
}
