/// Counter-based SplitMix64: the n-th output is a pure function of
/// `(seed, n)`, so searcher randomness is reproducible on any platform.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    seed: u64,
    counter: u64,
}

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { seed, counter: 0 }
    }

    pub fn at(seed: u64, index: u64) -> u64 {
        let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = SplitMix64::at(self.seed, self.counter);
        self.counter += 1;
        v
    }
}
