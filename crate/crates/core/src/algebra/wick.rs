//! Vacuum expectations of creation/annihilation words and of products of
//! fields `φ_f = a_f + a†_f`.
//!
//! Both take the table `xi[i][j] = ξ(f_i, f_j)` over the functions the
//! word refers to. The algebra is `[a_f, a†_g] = ξ(g, f)` with `a_f|0⟩ = 0`.

use num_complex::Complex64;

use super::permanent::permanent;
use crate::error::AlgebraError;

/// Longest word accepted by [`vacuum_expectation`].
pub const MONOMIAL_CAP: usize = 16;

/// Largest field product accepted by [`wightman`].
pub const WIGHTMAN_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Create,
    Annihilate,
}

/// Ordered product of `a_f` / `a†_f`, read left to right; functions are
/// indices into the ξ table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct OperatorMonomial {
    pub factors: Vec<(OpKind, usize)>,
}

impl OperatorMonomial {
    pub fn new(factors: Vec<(OpKind, usize)>) -> Self {
        OperatorMonomial { factors }
    }

    pub fn create(mut self, f: usize) -> Self {
        self.factors.push((OpKind::Create, f));
        self
    }

    pub fn annihilate(mut self, f: usize) -> Self {
        self.factors.push((OpKind::Annihilate, f));
        self
    }
}

fn check_indices(factors: &[(OpKind, usize)], n: usize) -> Result<(), AlgebraError> {
    match factors.iter().find(|(_, i)| *i >= n) {
        Some((_, i)) => Err(AlgebraError::IndexOutOfRange(*i)),
        None => Ok(()),
    }
}

/// `⟨0| word |0⟩`.
///
/// The word is brought to anti-normal order (annihilators left) using
/// `a†_f a_g = a_g a†_f - ξ(f, g)`; each anti-normal word
/// `a_{f_1}…a_{f_K} a†_{g_1}…a†_{g_J}` then contributes
/// `δ_{JK} per[ξ(g_j, f_k)]`.
pub fn vacuum_expectation(word: &OperatorMonomial, xi: &[Vec<Complex64>]) -> Result<Complex64, AlgebraError> {
    if word.factors.len() > MONOMIAL_CAP {
        return Err(AlgebraError::MonomialCap { len: word.factors.len(), cap: MONOMIAL_CAP });
    }
    check_indices(&word.factors, xi.len())?;
    Ok(anti_normal(word.factors.clone(), xi))
}

fn anti_normal(w: Vec<(OpKind, usize)>, xi: &[Vec<Complex64>]) -> Complex64 {
    let creators = w.iter().filter(|f| f.0 == OpKind::Create).count();
    if 2 * creators != w.len() {
        return Complex64::default();
    }
    // ⟨0|a† = 0 and a|0⟩ = 0
    if w.first().is_some_and(|f| f.0 == OpKind::Create) || w.last().is_some_and(|f| f.0 == OpKind::Annihilate) {
        return Complex64::default();
    }
    let swap = w.windows(2).position(|p| p[0].0 == OpKind::Create && p[1].0 == OpKind::Annihilate);
    match swap {
        None => {
            let k = w.len() / 2;
            let (ann, cre) = w.split_at(k);
            let m: Vec<Vec<Complex64>> =
                cre.iter().map(|&(_, g)| ann.iter().map(|&(_, f)| xi[g][f]).collect()).collect();
            permanent(&m).expect("word length is capped below the permanent cap")
        }
        Some(p) => {
            let (f, g) = (w[p].1, w[p + 1].1);
            let mut swapped = w.clone();
            swapped.swap(p, p + 1);
            let mut shorter = w;
            shorter.drain(p..p + 2);
            anti_normal(swapped, xi) - xi[f][g] * anti_normal(shorter, xi)
        }
    }
}

/// `⟨0|φ_{f_1}…φ_{f_n}|0⟩` as the sum over perfect matchings of
/// `Π_{(i<j)} ξ(f_j, f_i)`.
pub fn wightman(xi: &[Vec<Complex64>]) -> Result<Complex64, AlgebraError> {
    let n = xi.len();
    if n > WIGHTMAN_CAP {
        return Err(AlgebraError::WightmanCap { n, cap: WIGHTMAN_CAP });
    }
    if n % 2 == 1 {
        return Ok(Complex64::default());
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(matchings(&idx, xi))
}

fn matchings(rest: &[usize], xi: &[Vec<Complex64>]) -> Complex64 {
    if rest.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let i = rest[0];
    let mut total = Complex64::default();
    for k in 1..rest.len() {
        let j = rest[k];
        let remaining: Vec<usize> = rest[1..].iter().copied().filter(|&x| x != j).collect();
        total += xi[j][i] * matchings(&remaining, xi);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Vec<Vec<Complex64>> {
        // hermitian, PSD-ish values; exact structure is irrelevant here
        let raw = [[2.0, 0.3, -0.1, 0.5], [0.3, 1.5, 0.2, 0.0], [-0.1, 0.2, 1.1, 0.4], [0.5, 0.0, 0.4, 0.9]];
        let im = [[0.0, 0.1, 0.2, -0.3], [-0.1, 0.0, 0.05, 0.2], [-0.2, -0.05, 0.0, 0.1], [0.3, -0.2, -0.1, 0.0]];
        (0..4).map(|i| (0..4).map(|j| Complex64::new(raw[i][j], im[i][j])).collect()).collect()
    }

    #[test]
    fn two_point_words() {
        let x = table();
        let w = OperatorMonomial::default().annihilate(0).create(1);
        assert_eq!(vacuum_expectation(&w, &x).unwrap(), x[1][0]);
        let w = OperatorMonomial::default().create(1).annihilate(0);
        assert_eq!(vacuum_expectation(&w, &x).unwrap(), Complex64::default());
    }

    #[test]
    fn anti_normal_word_is_a_permanent() {
        let x = table();
        let w = OperatorMonomial::default().annihilate(0).annihilate(1).create(2).create(3);
        let want = x[2][0] * x[3][1] + x[2][1] * x[3][0];
        assert!((vacuum_expectation(&w, &x).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn rewriting_handles_mixed_order() {
        // a_0 a†_1 a_2 a†_3 = a_0 (a_2 a†_1 - ξ(1,2)) a†_3
        let x = table();
        let w = OperatorMonomial::default().annihilate(0).create(1).annihilate(2).create(3);
        let want = (x[1][0] * x[3][2] + x[3][0] * x[1][2]) - x[1][2] * x[3][0];
        assert!((vacuum_expectation(&w, &x).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn wightman_low_orders() {
        let x = table();
        let two: Vec<Vec<Complex64>> = (0..2).map(|i| x[i][..2].to_vec()).collect();
        assert_eq!(wightman(&two).unwrap(), x[1][0]);
        let three: Vec<Vec<Complex64>> = (0..3).map(|i| x[i][..3].to_vec()).collect();
        assert_eq!(wightman(&three).unwrap(), Complex64::default());
        let four = wightman(&x).unwrap();
        let want = x[1][0] * x[3][2] + x[2][0] * x[3][1] + x[3][0] * x[2][1];
        assert!((four - want).norm() < 1e-14);
    }

    #[test]
    fn caps() {
        let x = vec![vec![Complex64::default(); 13]; 13];
        assert!(matches!(wightman(&x), Err(AlgebraError::WightmanCap { .. })));
        let w = OperatorMonomial::new(vec![(OpKind::Create, 0); 17]);
        assert!(matches!(vacuum_expectation(&w, &x), Err(AlgebraError::MonomialCap { .. })));
        let w = OperatorMonomial::default().annihilate(20).create(0);
        assert!(matches!(vacuum_expectation(&w, &x), Err(AlgebraError::IndexOutOfRange(20))));
    }
}
