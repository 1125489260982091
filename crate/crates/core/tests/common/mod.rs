// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference implementations used as test oracles. None of this
//! shares code with the library paths it checks.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod gradcheck;

pub mod naive {
    //! Array-based Othello: `cells[r][c]` is 0 empty, 1 black, 2 white.

    pub type Cells = [[u8; 8]; 8];

    const DIRS: [(i32, i32); 8] = [
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, -1),
        (0, 1),
        (1, -1),
        (1, 0),
        (1, 1),
    ];

    pub fn from_masks(black: u64, white: u64) -> Cells {
        let mut cells = [[0u8; 8]; 8];
        for r in 0..8 {
            for c in 0..8 {
                let bit = 1u64 << (r * 8 + c);
                if black & bit != 0 {
                    cells[r][c] = 1;
                } else if white & bit != 0 {
                    cells[r][c] = 2;
                }
            }
        }
        cells
    }

    pub fn to_masks(cells: &Cells) -> (u64, u64) {
        let (mut black, mut white) = (0u64, 0u64);
        for r in 0..8 {
            for c in 0..8 {
                let bit = 1u64 << (r * 8 + c);
                match cells[r][c] {
                    1 => black |= bit,
                    2 => white |= bit,
                    _ => {}
                }
            }
        }
        (black, white)
    }

    fn on_board(r: i32, c: i32) -> bool {
        (0..8).contains(&r) && (0..8).contains(&c)
    }

    /// Cells flipped by `me` playing at (r, c).
    pub fn flips(cells: &Cells, me: u8, r: usize, c: usize) -> Vec<(usize, usize)> {
        if cells[r][c] != 0 {
            return Vec::new();
        }
        let them = 3 - me;
        let mut out = Vec::new();
        for (dr, dc) in DIRS {
            let mut line = Vec::new();
            let (mut rr, mut cc) = (r as i32 + dr, c as i32 + dc);
            while on_board(rr, cc) && cells[rr as usize][cc as usize] == them {
                line.push((rr as usize, cc as usize));
                rr += dr;
                cc += dc;
            }
            if !line.is_empty() && on_board(rr, cc) && cells[rr as usize][cc as usize] == me {
                out.extend(line);
            }
        }
        out
    }

    pub fn legal_moves(cells: &Cells, me: u8) -> Vec<usize> {
        let mut out = Vec::new();
        for r in 0..8 {
            for c in 0..8 {
                if !flips(cells, me, r, c).is_empty() {
                    out.push(r * 8 + c);
                }
            }
        }
        out
    }

    pub fn play(cells: &Cells, me: u8, tile: usize) -> Option<Cells> {
        let (r, c) = (tile / 8, tile % 8);
        let f = flips(cells, me, r, c);
        if f.is_empty() {
            return None;
        }
        let mut next = *cells;
        next[r][c] = me;
        for (fr, fc) in f {
            next[fr][fc] = me;
        }
        Some(next)
    }

    pub fn initial() -> Cells {
        let mut cells = [[0u8; 8]; 8];
        cells[3][3] = 2;
        cells[4][4] = 2;
        cells[3][4] = 1;
        cells[4][3] = 1;
        cells
    }

    /// Leaf count with passes counted as plies and finished games as leaves.
    pub fn perft(cells: &Cells, me: u8, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        let moves = legal_moves(cells, me);
        if moves.is_empty() {
            if legal_moves(cells, 3 - me).is_empty() {
                return 1;
            }
            return perft(cells, 3 - me, depth - 1);
        }
        moves
            .into_iter()
            .map(|t| perft(&play(cells, me, t).unwrap(), 3 - me, depth - 1))
            .sum()
    }

    /// Stability by sweeping every tile, re-applying the three rules until
    /// a sweep changes nothing.
    pub fn stability(cells: &Cells, eight_adjacent_edges: bool) -> u64 {
        let mut stable = [[false; 8]; 8];
        let is_corner = |r: usize, c: usize| (r == 0 || r == 7) && (c == 0 || c == 7);
        let is_edge = |r: usize, c: usize| (r == 0 || r == 7 || c == 0 || c == 7) && !is_corner(r, c);
        loop {
            let mut changed = false;
            for r in 0..8 {
                for c in 0..8 {
                    if cells[r][c] == 0 || stable[r][c] {
                        continue;
                    }
                    let mark = if is_corner(r, c) {
                        true
                    } else if is_edge(r, c) {
                        DIRS.iter().any(|&(dr, dc)| {
                            let diagonal = dr != 0 && dc != 0;
                            if diagonal && !eight_adjacent_edges {
                                return false;
                            }
                            let (rr, cc) = (r as i32 + dr, c as i32 + dc);
                            on_board(rr, cc) && stable[rr as usize][cc as usize]
                        })
                    } else {
                        DIRS.iter()
                            .all(|&(dr, dc)| stable[(r as i32 + dr) as usize][(c as i32 + dc) as usize])
                    };
                    if mark {
                        stable[r][c] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut mask = 0u64;
        for r in 0..8 {
            for c in 0..8 {
                if stable[r][c] {
                    mask |= 1 << (r * 8 + c);
                }
            }
        }
        mask
    }
}

/// Exhaustive pairwise AUROC: fraction of (positive, negative) pairs where
/// the positive scores higher, ties counting one half.
pub fn pairwise_auroc(values: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &vi) in values.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &vj) in values.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if vi > vj {
                wins += 1.0;
            } else if vi == vj {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Central difference of `f` at `x` along every coordinate, in f64.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}
