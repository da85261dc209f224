//! Posterior sampling for the lattice model.
//!
//! Each sweep draws the classification exactly given the fields, then
//! updates every block (the level set, and each non-constant class) given
//! the classification. Blocks are conditionally independent and run
//! concurrently, each on its own random stream, so results do not depend
//! on the thread count.

pub mod chain;
pub mod gamma;
pub mod interweave;
pub mod likelihood;
pub mod pcn;
pub mod priors;
pub mod state;
pub mod store;
pub mod theta;

pub use chain::{run_chain, BlockDiagnostics, Chain, ChainConfig, ChainOutput, Diagnostics};
pub use gamma::gibbs_gamma;
pub use priors::{PriorConfig, RangeBounds};
pub use state::{Block, ChainState, ClassState, FieldState, FitData, FitOrders, FitSpec, LevelSetState};
pub use store::{posterior_summaries, BlockLayout, ParamSummary, PosteriorSummary, SampleStore};

use crate::lattice::{CountGrid, Lattice};

/// Log-intensity for a constant class: the mean count per unit area over
/// cells holding at most one point. With no points there, half a point is
/// spread over those cells instead.
pub fn constant_class_default(counts: &CountGrid, lattice: &Lattice) -> f64 {
    let low: Vec<u32> = counts.counts.iter().copied().filter(|&c| c <= 1).collect();
    let n = low.len().max(1) as f64;
    let total = low.iter().sum::<u32>() as f64;
    let m = if total > 0.0 { total / n } else { 0.5 / n };
    (m / lattice.cell_area()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::lattice::Margins;

    #[test]
    fn constant_class_from_sparse_cells() {
        let l = Lattice::new(Window::new(0.0, 0.0, 4.0, 1.0).unwrap(), 4, 1, Margins::uniform(1.0)).unwrap();
        let mut c = CountGrid::zeros(&l);
        c.counts = vec![0, 1, 5, 1];
        assert!((constant_class_default(&c, &l) - (2.0f64 / 3.0).ln()).abs() < 1e-12);
        c.counts = vec![0, 0, 5, 7];
        assert!((constant_class_default(&c, &l) - 0.25f64.ln()).abs() < 1e-12);
    }
}
