//! Fixtures shared by the criterion benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vcpanel::bspline::Basis;
use vcpanel::montecarlo::{gen_additive_dgp, gen_interactive_dgp};
use vcpanel::selection::common_bases;
use vcpanel::PanelData;

/// A simulated interactive-effects panel with cubic bases and four interior knots.
pub fn interactive(n: usize, t: usize, seed: u64) -> (PanelData, Vec<Basis>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (panel, _) = gen_interactive_dgp(n, t, &mut rng).expect("valid sizes");
    let bases = common_bases(&panel, 3, 4).expect("valid basis");
    (panel, bases)
}

/// Same as [`interactive`] for the additive design.
pub fn additive(n: usize, t: usize, seed: u64) -> (PanelData, Vec<Basis>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (panel, _) = gen_additive_dgp(n, t, &mut rng).expect("valid sizes");
    let bases = common_bases(&panel, 3, 4).expect("valid basis");
    (panel, bases)
}
