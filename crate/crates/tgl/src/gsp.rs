//! Graph signal processing on symmetric shifts.
//!
//! The shift operator generalises the delay of classical DSP to graphs: a
//! square matrix whose eigenbasis plays the role of the Fourier basis. This
//! module restricts shifts to real symmetric matrices (undirected graphs),
//! where the eigenvector matrix is orthonormal and the inverse transform is
//! exactly the transpose. Directed graphs are rejected rather than silently
//! mis-handled.

use crate::graph::{laplacian, normalized_laplacian};
use crate::{symmetric_eig, Error, Matrix, Result};

/// Choice of shift operator for spectral analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKind {
    Adjacency,
    Laplacian,
    NormalizedLaplacian,
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adj" | "adjacency" => Ok(ShiftKind::Adjacency),
            "lap" | "laplacian" => Ok(ShiftKind::Laplacian),
            "nlap" | "normalized-laplacian" => Ok(ShiftKind::NormalizedLaplacian),
            other => Err(Error::Config(format!("unknown shift kind {other:?}"))),
        }
    }
}

/// Eigendecomposition of a chosen shift: eigenvalues ascending, orthonormal
/// eigenvectors as columns. The Fourier operator is `V^T` and its inverse
/// is `V`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub shift_kind: ShiftKind,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

/// Materialise the shift matrix for an adjacency matrix.
pub fn shift_matrix(a: &Matrix, kind: ShiftKind) -> Result<Matrix> {
    match kind {
        ShiftKind::Adjacency => Ok(a.clone()),
        ShiftKind::Laplacian => laplacian(a),
        ShiftKind::NormalizedLaplacian => normalized_laplacian(a),
    }
}

/// Eigendecompose the chosen shift of `a`. Fails with
/// [`Error::NotSymmetric`] when the shift is asymmetric, which is where
/// directed graphs end up.
pub fn build_basis(a: &Matrix, kind: ShiftKind) -> Result<SpectralBasis> {
    let shift = shift_matrix(a, kind)?;
    let eig = symmetric_eig(&shift)?;
    Ok(SpectralBasis {
        shift_kind: kind,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    })
}

impl SpectralBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// Forward transform `V^T x`.
    pub fn gft(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.eigenvectors.transpose().matvec(x)
    }

    /// Inverse transform `V y`.
    pub fn igft(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        self.eigenvectors.matvec(y)
    }

    /// Graph convolution of a signal with a filter signal: transform both,
    /// multiply pointwise in the spectral domain, transform back.
    pub fn convolve(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let xs = self.gft(x)?;
        let gs = self.gft(g)?;
        let prod: Vec<f64> = xs.iter().zip(&gs).map(|(a, b)| a * b).collect();
        self.igft(&prod)
    }

    /// Apply a diagonal spectral response: `V diag(response) V^T x`.
    pub fn filter(&self, response: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if response.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "filter response of length {} for basis of size {}",
                response.len(),
                self.len()
            )));
        }
        let mut y = self.gft(x)?;
        for (yi, r) in y.iter_mut().zip(response) {
            *yi *= r;
        }
        self.igft(&y)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "signal of length {} for basis of size {}",
                x.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

/// Evaluate a polynomial in the shift applied to a signal,
/// `(sum_k coeffs[k] S^k) x`, by Horner iteration. No eigendecomposition is
/// involved; the polynomial degree is capped at `n - 1`, the degree bound
/// of the characteristic polynomial.
pub fn apply_poly_filter(shift: &Matrix, coeffs: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if !shift.is_square() {
        return Err(Error::NotSquare {
            rows: shift.rows(),
            cols: shift.cols(),
        });
    }
    let n = shift.rows();
    if x.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "signal of length {} for {}x{} shift",
            x.len(),
            n,
            n
        )));
    }
    if coeffs.is_empty() {
        return Err(Error::InvalidArgument("empty coefficient list".into()));
    }
    if coeffs.len() > n {
        return Err(Error::InvalidArgument(format!(
            "filter degree {} exceeds the shift degree bound {}",
            coeffs.len() - 1,
            n - 1
        )));
    }
    let mut y: Vec<f64> = x.iter().map(|v| v * coeffs[coeffs.len() - 1]).collect();
    for &c in coeffs[..coeffs.len() - 1].iter().rev() {
        y = shift.matvec(&y)?;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += c * xi;
        }
    }
    Ok(y)
}

/// Chebyshev signals `[T_0(M) x, T_1(M) x, ..., T_K(M) x]` from the
/// recurrence `T_k = 2 M T_{k-1} - T_{k-2}` with `T_0 = I`, `T_1 = M`.
pub fn chebyshev_signals(m: &Matrix, order: usize, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    if !m.is_square() || m.rows() != x.len() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} operator against signal of length {}",
            m.rows(),
            m.cols(),
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(order + 1);
    out.push(x.to_vec());
    if order == 0 {
        return Ok(out);
    }
    out.push(m.matvec(x)?);
    for k in 2..=order {
        let prev = m.matvec(&out[k - 1])?;
        let next: Vec<f64> = prev
            .iter()
            .zip(&out[k - 2])
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        out.push(next);
    }
    Ok(out)
}

/// Scalar Chebyshev values `T_k(v)` for `k = 0..=order`.
pub fn chebyshev_scalar(v: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push(1.0);
    if order == 0 {
        return out;
    }
    out.push(v);
    for k in 2..=order {
        let next = 2.0 * v * out[k - 1] - out[k - 2];
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GraphSnapshot;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn k2_adjacency() -> Matrix {
        GraphSnapshot::new(0.0, vec![1, 2], vec![(1, 2)], None, None, false)
            .unwrap()
            .adjacency(false, 0)
            .unwrap()
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn k2_normalized_laplacian_spectrum() {
        let basis = build_basis(&k2_adjacency(), ShiftKind::NormalizedLaplacian).unwrap();
        assert_abs_diff_eq!(basis.eigenvalues[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(basis.eigenvalues[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn edgeless_laplacian_is_all_zero() {
        let a = Matrix::zeros(3, 3);
        let basis = build_basis(&a, ShiftKind::Laplacian).unwrap();
        for l in &basis.eigenvalues {
            assert_abs_diff_eq!(*l, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn directed_shift_rejected() {
        let mut a = Matrix::zeros(2, 2);
        a.set(0, 1, 1.0);
        assert!(matches!(
            build_basis(&a, ShiftKind::Adjacency),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn gft_of_eigenvector_is_basis_vector() {
        let basis = build_basis(&k2_adjacency(), ShiftKind::NormalizedLaplacian).unwrap();
        let v1 = basis.eigenvectors.column(1);
        let spectral = basis.gft(&v1).unwrap();
        assert_abs_diff_eq!(spectral[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(spectral[1].abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_signal_on_k2_lands_on_the_zero_mode() {
        let basis = build_basis(&k2_adjacency(), ShiftKind::NormalizedLaplacian).unwrap();
        let s = basis.gft(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(s[0].abs(), 2.0f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(s[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn inverse_round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GraphSnapshot::new(
            0.0,
            (1..=5).collect(),
            vec![(1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (2, 5)],
            None,
            None,
            false,
        )
        .unwrap();
        let basis = build_basis(&g.adjacency(false, 0).unwrap(), ShiftKind::NormalizedLaplacian)
            .unwrap();
        for _ in 0..10 {
            let x = random_signal(&mut rng, 5);
            let back = basis.igft(&basis.gft(&x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            let spectral = basis.gft(&x).unwrap();
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm(&spectral), norm(&x), epsilon = 1e-10);
        }
    }

    #[test]
    fn all_pass_filter_is_identity_and_convolution_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GraphSnapshot::new(
            0.0,
            (1..=4).collect(),
            vec![(1, 2), (2, 3), (3, 4), (1, 4)],
            None,
            None,
            false,
        )
        .unwrap();
        let basis =
            build_basis(&g.adjacency(false, 0).unwrap(), ShiftKind::NormalizedLaplacian).unwrap();
        let x = random_signal(&mut rng, 4);
        // filter signal whose transform is all ones
        let ones = vec![1.0; 4];
        let g_sig = basis.igft(&ones).unwrap();
        let out = basis.convolve(&x, &g_sig).unwrap();
        for (a, b) in out.iter().zip(&x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        let h = random_signal(&mut rng, 4);
        let xy = basis.convolve(&x, &h).unwrap();
        let yx = basis.convolve(&h, &x).unwrap();
        for (a, b) in xy.iter().zip(&yx) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn convolution_equals_diagonalised_form() {
        // x (*) g = V diag(V^T g) V^T x
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GraphSnapshot::new(
            0.0,
            (1..=6).collect(),
            vec![(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 6), (2, 6)],
            None,
            None,
            false,
        )
        .unwrap();
        let basis =
            build_basis(&g.adjacency(false, 0).unwrap(), ShiftKind::NormalizedLaplacian).unwrap();
        let x = random_signal(&mut rng, 6);
        let filt = random_signal(&mut rng, 6);
        let via_convolve = basis.convolve(&x, &filt).unwrap();
        let response = basis.gft(&filt).unwrap();
        let via_filter = basis.filter(&response, &x).unwrap();
        for (a, b) in via_convolve.iter().zip(&via_filter) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn poly_filter_identity_and_shift() {
        let a = k2_adjacency();
        let shift = shift_matrix(&a, ShiftKind::NormalizedLaplacian).unwrap();
        let x = vec![0.3, -0.7];
        assert_eq!(apply_poly_filter(&shift, &[1.0], &x).unwrap(), x);
        let sx = shift.matvec(&x).unwrap();
        let filtered = apply_poly_filter(&shift, &[0.0, 1.0], &x).unwrap();
        for (a, b) in filtered.iter().zip(&sx) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn poly_filter_matches_spectral_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let g = GraphSnapshot::new(
            0.0,
            (1..=7).collect(),
            vec![(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (1, 7), (2, 5)],
            None,
            None,
            false,
        )
        .unwrap();
        let a = g.adjacency(false, 0).unwrap();
        let shift = shift_matrix(&a, ShiftKind::NormalizedLaplacian).unwrap();
        let basis = build_basis(&a, ShiftKind::NormalizedLaplacian).unwrap();
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = random_signal(&mut rng, 7);
            let spatial = apply_poly_filter(&shift, &coeffs, &x).unwrap();
            let response: Vec<f64> = basis
                .eigenvalues
                .iter()
                .map(|&l| coeffs.iter().rev().fold(0.0, |acc, &c| acc * l + c))
                .collect();
            let spectral = basis.filter(&response, &x).unwrap();
            for (a, b) in spatial.iter().zip(&spectral) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn poly_filter_degree_bound() {
        let shift = shift_matrix(&k2_adjacency(), ShiftKind::Laplacian).unwrap();
        let x = vec![1.0, 0.0];
        assert!(matches!(
            apply_poly_filter(&shift, &[1.0, 1.0, 1.0], &x),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn chebyshev_recurrence_holds() {
        let m = Matrix::from_rows(&[vec![0.5, 0.2], vec![0.2, -0.3]]).unwrap();
        let x = vec![1.0, -2.0];
        let t = chebyshev_signals(&m, 3, &x).unwrap();
        assert_eq!(t[0], x);
        let t2_direct: Vec<f64> = m
            .matvec(&m.matvec(&x).unwrap())
            .unwrap()
            .iter()
            .zip(&x)
            .map(|(a, b)| 2.0 * a - b)
            .collect();
        for (a, b) in t[2].iter().zip(&t2_direct) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn chebyshev_of_diagonal_cosines() {
        // T_k(diag(cos phi)) has diagonal entries cos(k phi)
        let phis = [0.3, 1.1, 2.4];
        let m = Matrix::diag(&phis.map(f64::cos));
        let x = vec![1.0; 3];
        let t = chebyshev_signals(&m, 4, &x).unwrap();
        for (k, tk) in t.iter().enumerate() {
            for (i, &phi) in phis.iter().enumerate() {
                assert_abs_diff_eq!(tk[i], (k as f64 * phi).cos(), epsilon = 1e-10);
            }
        }
    }
}
