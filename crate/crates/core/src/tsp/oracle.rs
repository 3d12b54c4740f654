//! Plain-Rust reference for the TSP evaluator, used to check the generated
//! VM code and to find optimal tours by exhaustive search.

use crate::types::Hash256;

use super::{TspInstance, SUBGRID};

/// Perturbed position of every city, in distance units. Coordinate `m`
/// (x of city k is `2k`, y is `2k + 1`) moves by a two's-complement 9-bit
/// value taken from context word `m % 4` at bit offset `9 * (m / 4)`.
pub fn perturbed_positions(inst: &TspInstance, ctx: &Hash256) -> Vec<(i64, i64)> {
    let offset = |m: usize| -> i64 {
        let word = u64::from_be_bytes(ctx.0[8 * (m % 4)..8 * (m % 4) + 8].try_into().unwrap());
        let raw = ((word >> (9 * (m / 4))) & 0x1ff) as i64;
        if raw >= 256 {
            raw - 512
        } else {
            raw
        }
    };
    let scale = SUBGRID as i64;
    inst.cities
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            (
                x as i64 * scale + offset(2 * k),
                y as i64 * scale + offset(2 * k + 1),
            )
        })
        .collect()
}

fn floor_sqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

fn distance(a: (i64, i64), b: (i64, i64)) -> u64 {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    floor_sqrt(dx * dx + dy * dy)
}

/// Closed tour length, or `None` if `tour` is not a permutation of the cities.
pub fn tour_length(inst: &TspInstance, tour: &[u8], ctx: &Hash256) -> Option<u64> {
    let n = inst.len();
    if tour.len() != n {
        return None;
    }
    let mut seen = vec![false; n];
    for &c in tour {
        let c = c as usize;
        if c >= n || std::mem::replace(&mut seen[c], true) {
            return None;
        }
    }
    let pos = perturbed_positions(inst, ctx);
    Some(
        (0..n)
            .map(|i| distance(pos[tour[i] as usize], pos[tour[(i + 1) % n] as usize]))
            .sum(),
    )
}

/// Shortest tour by trying every permutation that starts at city 0.
/// Returns the lexicographically first shortest tour.
pub fn brute_force_optimum(inst: &TspInstance, ctx: &Hash256) -> (Vec<u8>, u64) {
    let n = inst.len() as u8;
    let mut rest: Vec<u8> = (1..n).collect();
    let mut best: Option<(Vec<u8>, u64)> = None;
    loop {
        let tour: Vec<u8> = std::iter::once(0).chain(rest.iter().copied()).collect();
        let len = tour_length(inst, &tour, ctx).expect("permutation");
        if best.as_ref().is_none_or(|(_, b)| len < *b) {
            best = Some((tour, len));
        }
        if !next_permutation(&mut rest) {
            break;
        }
    }
    best.expect("at least one tour")
}

fn next_permutation(v: &mut [u8]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len())
        .rev()
        .find(|&j| v[j] > v[i - 1])
        .expect("pivot exists");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsp::DISTANCE_SCALE;

    #[test]
    fn unit_square_by_hand() {
        let inst = TspInstance::unit_square();
        assert_eq!(
            tour_length(&inst, &[0, 1, 2, 3], &Hash256::ZERO),
            Some(4 * DISTANCE_SCALE)
        );
        // crossing tour: two sides plus two diagonals of floor(sqrt(2) * 2^24)
        let diag = 23_726_566;
        assert_eq!(
            tour_length(&inst, &[0, 2, 1, 3], &Hash256::ZERO),
            Some(2 * DISTANCE_SCALE + 2 * diag)
        );
        assert_eq!(
            brute_force_optimum(&inst, &Hash256::ZERO).1,
            4 * DISTANCE_SCALE
        );
    }

    #[test]
    fn permutations_enumerated() {
        let mut v = vec![1u8, 2, 3, 4];
        let mut count = 1;
        while next_permutation(&mut v) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn perturbation_stays_within_one_grid_step() {
        let inst = TspInstance::unit_square();
        let ctx = Hash256([0xff; 32]);
        for ((x, y), &(cx, cy)) in perturbed_positions(&inst, &ctx)
            .into_iter()
            .zip(&inst.cities)
        {
            assert!((x - cx as i64 * 256).abs() <= 256);
            assert!((y - cy as i64 * 256).abs() <= 256);
        }
    }
}
