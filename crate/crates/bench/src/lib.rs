// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the benchmarks in `benches/`.

use idma_core::config::SimConfig;
use idma_core::memsys::MemPreset;

/// Piece copy of `total` bytes on the base engine with a 32-bit bus.
pub fn piece_copy(nax: u32, preset: MemPreset, total: u64, piece: u64) -> SimConfig {
    SimConfig::piece_copy(nax, preset, total, piece)
}

/// Noise-free linear samples `y = Σ (j + 1) x_j` over `n` features.
pub fn linear_samples(rows: usize, n: usize) -> Vec<(Vec<f64>, f64)> {
    (0..rows)
        .map(|i| {
            let f: Vec<f64> = (0..n).map(|j| ((i * 7 + j * 13) % 31) as f64 + 1.0).collect();
            let y = f.iter().enumerate().map(|(j, x)| (j + 1) as f64 * x).sum();
            (f, y)
        })
        .collect()
}
