/// Numerical tolerances used across the pipeline.
///
/// All thresholds are relative to the natural scale of the quantity they
/// guard (operator norm, Frobenius norm of a Gram matrix, ...) unless noted.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Off-diagonal stopping threshold for the Jacobi eigensolver,
    /// relative to the Frobenius norm of the input.
    pub eig: f64,
    /// Singular values below `rank * sigma_max` are treated as zero.
    pub rank: f64,
    /// Eigenvalues in `[-clamp * scale, 0)` are clamped to zero before
    /// taking square roots or Cholesky factors; anything lower is an error.
    pub clamp: f64,
    /// Allowed commutator / contraction slack when validating input tuples.
    pub tuple: f64,
    /// Residual budget for least-squares-defined operators (Douglas solves,
    /// transfer-function lifts).
    pub solve: f64,
    /// Convergence threshold for fixed-point iterations (norm-limit of
    /// power compressions).
    pub iterate: f64,
    /// Iteration cap for the power-compression limit.
    pub iterate_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eig: 1e-12,
            rank: 1e-10,
            clamp: 1e-10,
            tuple: 1e-10,
            solve: 1e-8,
            iterate: 1e-12,
            iterate_cap: 100_000,
        }
    }
}

impl Tolerances {
    /// Variant with a looser tuple-validation threshold, used for derived
    /// tuples (compressions pick up a few ulps of commutator noise).
    pub fn relaxed(self, tuple: f64) -> Self {
        Tolerances { tuple, ..self }
    }
}
