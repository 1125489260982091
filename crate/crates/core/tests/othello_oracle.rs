// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::naive;
use owml::othello::{
    board_trajectory, perft, random_game, stability_map, stability_map_with, Board, EdgeAdjacency, Player,
    Tile,
};
use proptest::prelude::*;

fn colour(p: Player) -> u8 {
    match p {
        Player::Black => 1,
        Player::White => 2,
    }
}

fn reachable_positions(n: usize) -> Vec<Board> {
    let mut out = Vec::with_capacity(n);
    let mut seed = 0;
    while out.len() < n {
        out.push(Board::initial());
        for step in board_trajectory(&random_game(seed)) {
            out.push(step.board);
        }
        seed += 1;
    }
    out.truncate(n);
    out
}

#[test]
fn bitboard_matches_array_scan_on_reachable_positions() {
    let mut mismatches = 0;
    for board in reachable_positions(10_000) {
        let cells = naive::from_masks(board.black(), board.white());
        for side in [board, board.pass()] {
            let me = colour(side.to_move());
            let expected: Vec<usize> = naive::legal_moves(&cells, me);
            let got: Vec<usize> = Tile::iter_mask(side.legal_moves()).map(Tile::index).collect();
            if expected != got {
                mismatches += 1;
                continue;
            }
            for t in got {
                let after = side.apply_move(Tile::new(t).unwrap()).unwrap();
                let want = naive::to_masks(&naive::play(&cells, me, t).unwrap());
                if (after.black(), after.white()) != want {
                    mismatches += 1;
                }
            }
        }
    }
    assert_eq!(mismatches, 0);
}

#[test]
fn perft_matches_brute_force() {
    let cells = naive::initial();
    let expected: Vec<u64> = (1..=5).map(|d| naive::perft(&cells, 1, d)).collect();
    let got: Vec<u64> = (1..=5).map(|d| perft(&Board::initial(), d)).collect();
    assert_eq!(got, expected);
    assert_eq!(&got[..2], &[4, 12]);
}

#[test]
fn stability_analytic_cases() {
    assert_eq!(stability_map(&Board::empty(Player::Black)).count(), 0);
    let corner = Board::from_masks(1 << 63, 0, Player::Black).unwrap();
    assert_eq!(stability_map(&corner).stable_mask, 1 << 63);
    let full = Board::from_masks(0x0F0F_0F0F_F0F0_F0F0, 0xF0F0_F0F0_0F0F_0F0F, Player::Black).unwrap();
    assert_eq!(stability_map(&full).count(), 28);
    assert_eq!(
        naive::stability(&naive::from_masks(full.black(), full.white()), false).count_ones(),
        28
    );
}

#[test]
fn stability_matches_sweep_on_game_positions() {
    for board in reachable_positions(3_000) {
        let cells = naive::from_masks(board.black(), board.white());
        assert_eq!(stability_map(&board).stable_mask, naive::stability(&cells, false));
        assert_eq!(
            stability_map_with(&board, EdgeAdjacency::Eight).stable_mask,
            naive::stability(&cells, true)
        );
    }
}

fn arb_board() -> impl Strategy<Value = Board> {
    (any::<u64>(), any::<u64>(), any::<u64>()).prop_map(|(occ, colour, extra)| {
        // Bias towards dense boards so the edge and interior rules fire.
        let occupied = occ | extra;
        Board::from_masks(occupied & colour, occupied & !colour, Player::Black).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn stability_matches_sweep_on_random_boards(board in arb_board()) {
        let cells = naive::from_masks(board.black(), board.white());
        let s = stability_map(&board);
        prop_assert_eq!(s.stable_mask, naive::stability(&cells, false));
        prop_assert_eq!(s.stable_mask & !board.occupied(), 0);
    }

    #[test]
    fn adding_discs_never_unsets_stability(board in arb_board(), extra in any::<u64>()) {
        let more = Board::from_masks(board.black() | (extra & board.empty_tiles()), board.white(), Player::Black).unwrap();
        let before = stability_map(&board).stable_mask;
        let after = stability_map(&more).stable_mask;
        prop_assert_eq!(before & !after, 0);
    }

    #[test]
    fn legal_moves_match_on_random_boards(board in arb_board(), white_to_move in any::<bool>()) {
        let board = if white_to_move { board.pass() } else { board };
        let cells = naive::from_masks(board.black(), board.white());
        let got: Vec<usize> = Tile::iter_mask(board.legal_moves()).map(Tile::index).collect();
        prop_assert_eq!(got, naive::legal_moves(&cells, colour(board.to_move())));
    }
}

#[test]
fn random_game_replays_identically() {
    let a: Vec<_> = (0..50).map(random_game).collect();
    let b: Vec<_> = (0..50).map(random_game).collect();
    assert_eq!(a, b);
}
