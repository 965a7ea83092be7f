use num_complex::Complex64;

use crate::error::AlgebraError;

/// Default largest matrix size accepted by [`permanent`].
pub const PERMANENT_CAP: usize = 24;

/// Permanent by Ryser's formula with Gray-code subset order, `O(2ⁿ·n)`.
pub fn permanent(m: &[Vec<Complex64>]) -> Result<Complex64, AlgebraError> {
    permanent_with_cap(m, PERMANENT_CAP)
}

pub fn permanent_with_cap(m: &[Vec<Complex64>], cap: usize) -> Result<Complex64, AlgebraError> {
    let n = m.len();
    if let Some(row) = m.iter().find(|r| r.len() != n) {
        return Err(AlgebraError::NotSquare(n, row.len()));
    }
    if n > cap {
        return Err(AlgebraError::PermanentCap { n, cap });
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    // per(A) = (-1)^n Σ_S (-1)^{|S|} Π_i Σ_{j∈S} a_ij
    let mut row_sums = vec![Complex64::default(); n];
    let mut in_set = vec![false; n];
    let mut total = Complex64::default();
    let mut size = 0usize;
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        if in_set[j] {
            in_set[j] = false;
            size -= 1;
            for (r, row) in row_sums.iter_mut().zip(m) {
                *r -= row[j];
            }
        } else {
            in_set[j] = true;
            size += 1;
            for (r, row) in row_sums.iter_mut().zip(m) {
                *r += row[j];
            }
        }
        let prod = row_sums.iter().fold(Complex64::new(1.0, 0.0), |a, b| a * b);
        if size % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(if n % 2 == 0 { total } else { -total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn small_cases() {
        let id = vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(1.0)]];
        assert_eq!(permanent(&id).unwrap(), c(1.0));
        let ones = vec![vec![c(1.0); 3]; 3];
        assert_eq!(permanent(&ones).unwrap(), c(6.0));
        let m = vec![vec![c(1.0), c(2.0)], vec![c(3.0), c(4.0)]];
        assert_eq!(permanent(&m).unwrap(), c(10.0));
        assert_eq!(permanent(&[]).unwrap(), c(1.0));
    }

    #[test]
    fn all_ones_gives_factorial() {
        let mut fact = 1.0;
        for n in 1..=9 {
            fact *= n as f64;
            assert_eq!(permanent(&vec![vec![c(1.0); n]; n]).unwrap(), c(fact));
        }
    }

    #[test]
    fn caps_and_shape() {
        let m = vec![vec![c(1.0); 3]; 3];
        assert!(matches!(permanent_with_cap(&m, 2), Err(AlgebraError::PermanentCap { n: 3, cap: 2 })));
        assert!(matches!(permanent(&[vec![c(1.0), c(2.0)]]), Err(AlgebraError::NotSquare(1, 2))));
    }
}
