//! Fixed-seed fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shiftbin_core::instances::{draw_dataset, random_index};
use shiftbin_core::{Dataset, ShiftInstance, ShiftKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn instance(kind: ShiftKind, family_k: usize) -> ShiftInstance {
    let tau = (kind == ShiftKind::GroupShift).then_some(0.5);
    random_index(kind, family_k, tau, &mut rng(1))
        .expect("valid family size")
        .instance()
}

pub fn dataset(instance: &ShiftInstance, n_min: usize, rho: usize) -> Dataset {
    draw_dataset(instance, rho * n_min, n_min, &mut rng(2)).expect("n_maj >= n_min")
}
