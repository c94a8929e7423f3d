//! Full-resolution implicit time stepping of the diffusion equation with
//! the coefficient frozen at the previous iterate.

use crate::error::Result;
use crate::fvm::{self, PixelGrid};
use crate::scalar::Real;
use crate::sparse::cg_solve;

/// Uniform time discretization of `[0, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScheme<T> {
    t_max: T,
    n_steps: usize,
}

impl<T: Real> TimeScheme<T> {
    /// `n_steps = 0` is the degenerate empty scheme (no evolution).
    pub fn new(t_max: T, n_steps: usize) -> crate::Result<Self> {
        if !(t_max >= T::zero()) {
            return Err(crate::Error::InvalidParameter(format!(
                "t_max must be nonnegative, got {t_max}"
            )));
        }
        Ok(Self { t_max, n_steps })
    }

    pub fn t_max(&self) -> T {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn tau(&self) -> T {
        if self.n_steps == 0 {
            T::zero()
        } else {
            self.t_max / T::from_usize_c(self.n_steps)
        }
    }
}

/// Solver knobs shared by the fine and coarse time steppers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub cg_tol: T,
    pub cg_max_iter: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            cg_tol: T::from_f64_c(1e-8),
            // 0 means the grid-derived default 10n.
            cg_max_iter: 0,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub(crate) fn max_iter_for(&self, n: usize) -> usize {
        if self.cg_max_iter == 0 {
            10 * n
        } else {
            self.cg_max_iter
        }
    }
}

/// One implicit Euler step: assemble `M + tau L` from the previous iterate
/// and solve for the new one.
///
/// The solve runs in increment form `A d = b - A I_prev`, `I_new = I_prev + d`:
/// the increment right-hand side sums to zero (L has zero row sums), and
/// unpreconditioned CG then keeps every iterate's total mass equal to the
/// previous step's up to the solver tolerance.
pub fn implicit_step<T: Real>(
    i_prev: &[T],
    grid: &PixelGrid,
    lambda: T,
    tau: T,
    opts: &SolverOptions<T>,
) -> Result<Vec<T>> {
    let faces = fvm::face_weights_of_channel(i_prev, grid, lambda)?;
    let a = fvm::implicit_system_from_faces(&faces, tau);
    // b - A I_prev with b = I_prev, so rhs = I_prev - A I_prev.
    let mut rhs = a.matvec(i_prev);
    for (r, &p) in rhs.iter_mut().zip(i_prev) {
        *r = p - *r;
    }
    let delta = cg_solve(&a, &rhs, opts.cg_tol, opts.max_iter_for(grid.cell_count()))?;
    Ok(i_prev
        .iter()
        .zip(&delta)
        .map(|(&p, &d)| p + d)
        .collect())
}

/// Runs `scheme.n_steps` implicit steps from `i0`. The observer is invoked
/// with `(n, iterate)` after each step; it does not see the initial state.
pub fn denoise_fine<T: Real, F>(
    i0: &[T],
    grid: &PixelGrid,
    scheme: &TimeScheme<T>,
    lambda: T,
    opts: &SolverOptions<T>,
    mut observer: F,
) -> Result<Vec<T>>
where
    F: FnMut(usize, &[T]),
{
    if i0.len() != grid.cell_count() {
        return Err(crate::Error::DimensionMismatch(format!(
            "channel has {} values but grid is {}x{}",
            i0.len(),
            grid.nx(),
            grid.ny()
        )));
    }
    let tau = scheme.tau();
    let mut current = i0.to_vec();
    for n in 1..=scheme.n_steps() {
        current = implicit_step(&current, grid, lambda, tau, opts)?;
        observer(n, &current);
    }
    Ok(current)
}
