//! Opt-in multiplication counting for the complexity audit.
//!
//! Kernels report the real multiplications they perform. Counting is
//! thread-local and off unless a closure runs under [`count_multiplications`],
//! so the hot paths pay one thread-local lookup per kernel call.
//!
//! Convention: a complex-by-complex product is four real multiplications, a
//! real-by-complex product two, a real-by-real product one. The complex
//! multiplication equivalent of a tally is its real count divided by four.

use std::cell::RefCell;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kernel {
    /// `H^H H`
    Gram,
    /// Cholesky factorization of `H^H H + rho I`.
    Cholesky,
    /// `H^H r`
    MatchedFilter,
    /// Forward plus backward substitution with the stored factor.
    TriangularSolve,
    /// Scalar-by-vector products inside the iterate updates.
    VectorScale,
    /// Dense matrix-vector products (diagnostics, baselines, power iteration).
    MatVec,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gram => "gram",
            Kernel::Cholesky => "cholesky",
            Kernel::MatchedFilter => "matched_filter",
            Kernel::TriangularSolve => "triangular_solve",
            Kernel::VectorScale => "vector_scale",
            Kernel::MatVec => "matvec",
        }
    }
}

/// Real multiplications per kernel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MulTally {
    real: BTreeMap<Kernel, u64>,
}

impl MulTally {
    pub fn real_mults(&self, kernel: Kernel) -> u64 {
        self.real.get(&kernel).copied().unwrap_or(0)
    }

    pub fn complex_equivalent(&self, kernel: Kernel) -> f64 {
        self.real_mults(kernel) as f64 / 4.0
    }

    pub fn total_complex_equivalent(&self) -> f64 {
        self.real.values().sum::<u64>() as f64 / 4.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (Kernel, u64)> + '_ {
        self.real.iter().map(|(k, v)| (*k, *v))
    }
}

thread_local! {
    static TALLY: RefCell<Option<MulTally>> = const { RefCell::new(None) };
}

pub(crate) fn record(kernel: Kernel, real_mults: u64) {
    TALLY.with(|t| {
        if let Some(tally) = t.borrow_mut().as_mut() {
            *tally.real.entry(kernel).or_insert(0) += real_mults;
        }
    });
}

/// Runs `f` with counting enabled on this thread and returns its tally.
///
/// Nested calls are not supported: the inner call's tally replaces the outer one.
pub fn count_multiplications<R>(f: impl FnOnce() -> R) -> (R, MulTally) {
    TALLY.with(|t| *t.borrow_mut() = Some(MulTally::default()));
    let out = f();
    let tally = TALLY.with(|t| t.borrow_mut().take()).unwrap_or_default();
    (out, tally)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disabled_by_default() {
        record(Kernel::Gram, 10);
        let ((), tally) = count_multiplications(|| record(Kernel::Gram, 8));
        assert_eq!(tally.real_mults(Kernel::Gram), 8);
        assert_eq!(tally.complex_equivalent(Kernel::Gram), 2.0);
    }

    #[test]
    fn counting_is_per_thread() {
        let ((), tally) = count_multiplications(|| {
            std::thread::spawn(|| record(Kernel::MatVec, 100)).join().unwrap();
            record(Kernel::MatVec, 4);
        });
        assert_eq!(tally.real_mults(Kernel::MatVec), 4);
    }
}
