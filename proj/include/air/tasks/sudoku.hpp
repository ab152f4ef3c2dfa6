#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "air/tasks/puzzle.hpp"

namespace air::tasks {

/// Box side for a supported sudoku side (4 -> 2, 9 -> 3).
std::size_t sudoku_box(std::size_t side);

/// Smallest givens count accepted by `gen_sudoku` for `side`.
std::size_t sudoku_min_givens(std::size_t side);

struct OracleResult {
    int count = 0;                     // 0, 1 or 2 (capped)
    std::vector<int> first_solution;   // empty when count == 0
};

/// Exhaustive backtracking count of completions, capped at 2. Cells are
/// chosen by fewest candidates (ties -> lowest index) and values tried in
/// ascending order, so the first solution is deterministic. A grid whose
/// givens already clash has count 0.
OracleResult sudoku_oracle(std::span<const int> grid, std::size_t side);

/// Uniquely solvable puzzle with exactly `givens` filled cells. Throws
/// std::invalid_argument below the minimum and std::runtime_error (naming
/// the seed) if bounded retries fail.
PuzzleInstance gen_sudoku(std::size_t side, std::size_t givens, std::uint64_t seed);

/// Validity-preserving relabelling: out[r][c] = digit_map[src[rows[r]][cols[c]]],
/// with src the transposed grid when `transpose` is set.
struct SudokuTransform {
    std::vector<int> digit_map;  // size side + 1; digit_map[0] == 0
    std::vector<std::size_t> rows;
    std::vector<std::size_t> cols;
    bool transpose = false;

    static SudokuTransform identity(std::size_t side);
    /// Random digit bijection, band/stack permutations, line permutations within
    /// each band/stack, and a coin-flip transpose.
    static SudokuTransform random(std::size_t side, std::mt19937_64& rng);
};

std::vector<int> apply_transform(std::span<const int> grid, std::size_t side, const SudokuTransform& t);
PuzzleInstance apply_transform(const PuzzleInstance& p, const SudokuTransform& t);
PuzzleInstance augment_sudoku(const PuzzleInstance& p, std::uint64_t seed);

/// Cells whose digit equals another cell's digit in a shared row, column
/// or box. BLANK cells never clash. Sorted ascending.
std::vector<int> violations_sudoku(std::span<const int> grid, std::size_t side);

}  // namespace air::tasks
