use super::DoeError;

const BITS: usize = 32;

/// Primitive-polynomial degree `s`, coefficient bits `a` and initial direction
/// integers `m` for dimensions 2 and up. Dimension 1 is the van der Corput
/// sequence.
const DIRECTIONS: &[(u32, u32, &[u32])] = &[
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
];

/// Largest supported dimension.
pub const MAX_DIM: usize = DIRECTIONS.len() + 1;

fn direction_vectors(dim: usize) -> Vec<[u32; BITS]> {
    let mut out = Vec::with_capacity(dim);
    let mut first = [0u32; BITS];
    for (k, v) in first.iter_mut().enumerate() {
        *v = 1 << (BITS - 1 - k);
    }
    out.push(first);
    for &(s, a, m) in DIRECTIONS.iter().take(dim.saturating_sub(1)) {
        let s = s as usize;
        let mut v = [0u32; BITS];
        for k in 0..BITS {
            if k < s {
                v[k] = m[k] << (BITS - 1 - k);
            } else {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        x ^= v[k - j];
                    }
                }
                v[k] = x;
            }
        }
        out.push(v);
    }
    out
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Nested uniform scramble of one 32-bit coordinate: each bit is flipped by a
/// hash of the seed, the dimension and every more significant bit.
fn owen_scramble(x: u32, seed: u64, dim: usize) -> u32 {
    let base = mix(seed ^ mix(dim as u64 + 1));
    let mut out = 0u32;
    for j in 0..BITS {
        let shift = BITS - 1 - j;
        let prefix = if j == 0 { 0 } else { (x >> (shift + 1)) as u64 };
        let node = mix(base ^ mix(((j as u64) << 40) ^ prefix));
        let bit = ((x >> shift) & 1) ^ (node & 1) as u32;
        out |= bit << shift;
    }
    out
}

/// Gray-code Sobol generator with optional Owen scramble and digital shift.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    dirs: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u64,
    scramble: Option<(u64, Vec<u32>)>,
}

impl SobolSequence {
    pub fn new(dim: usize, scramble_seed: Option<u64>) -> Result<Self, DoeError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(DoeError::UnsupportedDimension { dim, max: MAX_DIM });
        }
        let scramble = scramble_seed.map(|s| {
            let shift = (0..dim).map(|d| (mix(s ^ mix(0xD1B5 + d as u64)) >> 32) as u32).collect();
            (s, shift)
        });
        Ok(SobolSequence { dirs: direction_vectors(dim), state: vec![0; dim], index: 0, scramble })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Next point in `[0, 1)^d`. The unscrambled sequence starts at the origin.
    pub fn next_point(&mut self) -> Vec<f64> {
        let scale = 1.0 / (1u64 << BITS) as f64;
        let point = match &self.scramble {
            None => self.state.iter().map(|&x| x as f64 * scale).collect(),
            Some((seed, shift)) => self
                .state
                .iter()
                .enumerate()
                .map(|(d, &x)| ((owen_scramble(x, *seed, d) ^ shift[d]) as f64 + 0.5) * scale)
                .collect(),
        };
        let c = (!self.index).trailing_zeros() as usize;
        if c < BITS {
            for (s, dir) in self.state.iter_mut().zip(&self.dirs) {
                *s ^= dir[c];
            }
        }
        self.index += 1;
        point
    }

    pub fn take_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.next_point()).collect()
    }
}

/// `count` Sobol points in `[0,1)^dim`, scrambled when a seed is given.
pub fn sobol_points(dim: usize, count: usize, scramble_seed: Option<u64>) -> Result<Vec<Vec<f64>>, DoeError> {
    Ok(SobolSequence::new(dim, scramble_seed)?.take_points(count))
}
