pub mod analyze;
pub mod report;
pub mod simulate;

/// Per-molecule seed derivation: splitmix64 over the run seed and index, so
/// molecules are independent and the set is reproducible.
pub fn molecule_seed(run_seed: u64, index: u64) -> u64 {
    let mut z = run_seed
        .wrapping_add((index + 1).wrapping_mul(0x9e3779b97f4a7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
