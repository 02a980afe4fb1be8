//! Thin safe wrapper over `matrixmultiply::sgemm` for row-major buffers.

/// Storage of a matrix operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    /// Stored as the logical `rows x cols` matrix, row-major.
    Normal,
    /// Stored row-major as the transpose of the logical matrix.
    Transposed,
}

/// `c = a * b + (if accumulate { c } else { 0 })` where `a` is logically
/// `m x k`, `b` is `k x n` and `c` is `m x n` row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_op: Op,
    b: &[f32],
    b_op: Op,
    c: &mut [f32],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = match a_op {
        Op::Normal => (k as isize, 1),
        Op::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match b_op {
        Op::Normal => (n as isize, 1),
        Op::Transposed => (1, k as isize),
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee every strided access of the three
    // operands stays inside its slice, and `c` does not alias `a` or `b`
    // because it is borrowed mutably.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
