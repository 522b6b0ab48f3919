//! Deterministic coordinate selection with explicit tie handling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Scores within this relative distance of the maximum count as tied.
pub const TIE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreakMode {
    /// Lowest index among tied coordinates; the default, fully deterministic.
    LowestIndex,
    /// Uniform choice among tied coordinates from a seeded stream.
    SeededRandom(u64),
}

#[derive(Debug, Clone)]
pub struct CoordinatePicker {
    rng: Option<ChaCha8Rng>,
}

impl CoordinatePicker {
    pub fn new(mode: TieBreakMode) -> Self {
        let rng = match mode {
            TieBreakMode::LowestIndex => None,
            TieBreakMode::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        CoordinatePicker { rng }
    }

    /// Argmax over `score(0..n)` with ties resolved per mode. Ties are scores
    /// within `TIE_REL_TOL` relative of the max; when every score is zero all
    /// coordinates tie. NaN scores never win.
    pub fn pick_max(&mut self, n: usize, score: impl Fn(usize) -> f64) -> usize {
        assert!(n > 0, "cannot pick from zero coordinates");
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            let s = score(i);
            if s > best {
                best = s;
            }
        }
        // All-NaN guard: fall back to the first coordinate.
        if best == f64::NEG_INFINITY {
            return 0;
        }
        let cutoff = best - TIE_REL_TOL * best.abs();
        match &mut self.rng {
            None => {
                for i in 0..n {
                    if score(i) >= cutoff {
                        return i;
                    }
                }
                unreachable!("max vanished between passes")
            }
            Some(rng) => {
                let ties = (0..n).filter(|&i| score(i) >= cutoff).count();
                let pick = rng.random_range(0..ties);
                let mut seen = 0;
                for i in 0..n {
                    if score(i) >= cutoff {
                        if seen == pick {
                            return i;
                        }
                        seen += 1;
                    }
                }
                unreachable!("tie count changed between passes")
            }
        }
    }
}
