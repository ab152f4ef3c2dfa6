#include "air/tasks/sudoku.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <numeric>
#include <stdexcept>
#include <string>

namespace air::tasks {

namespace {

// Verified 17-given puzzles with unique solutions. Nine-by-nine requests
// below what random digging reaches start from one of these.
constexpr std::array<std::string_view, 8> kSeventeenGivenBank = {
    "000000010400000000020000000000050407008000300001090000300400200050100000000806000",
    "000000010400000000020000000000050604008000300001090000300400200050100000000807000",
    "000000012000035000000600070700000300000400800100000000000120000080000040050000600",
    "000000012003600000000007000410020000000500300700000600280000040000300500000000000",
    "000000012008030000000000040120500000000004700060000000507000300000620000000100000",
    "000000013000030080070000000000206000030000900000010000600500204000400700100000000",
    "000000013000200000000000080000760200008000400010000000200000750600340000000008000",
    "000000013000500070000802000000400900107000000000000200890000050040000600000010000",
};

// Below this many givens a 9x9 request goes straight to the bank.
constexpr std::size_t kDigFloor9 = 24;

void require_side(std::size_t side) {
    if (side != 4 && side != 9) {
        throw std::invalid_argument("sudoku: unsupported side " + std::to_string(side) + " (expected 4 or 9)");
    }
}

class Solver {
public:
    Solver(std::span<const int> grid, std::size_t side)
        : side_(side), box_(sudoku_box(side)), grid_(grid.begin(), grid.end()),
          rows_(side, 0), cols_(side, 0), boxes_(side, 0) {
        if (grid.size() != side * side) {
            throw std::invalid_argument("sudoku_oracle: expected " + std::to_string(side * side) + " cells");
        }
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            const int v = grid_[i];
            if (v < 0 || v > static_cast<int>(side)) {
                throw std::invalid_argument("sudoku_oracle: cell value " + std::to_string(v) + " out of range");
            }
            if (v == sudoku_token::blank) continue;
            const unsigned bit = 1u << v;
            const std::size_t r = i / side, c = i % side, b = box_index(r, c);
            if ((rows_[r] | cols_[c] | boxes_[b]) & bit) consistent_ = false;
            rows_[r] |= bit;
            cols_[c] |= bit;
            boxes_[b] |= bit;
        }
    }

    OracleResult run() {
        OracleResult result;
        if (consistent_) search(result);
        return result;
    }

private:
    std::size_t box_index(std::size_t r, std::size_t c) const { return (r / box_) * box_ + c / box_; }

    unsigned candidates(std::size_t i) const {
        const std::size_t r = i / side_, c = i % side_;
        const unsigned full = ((1u << (side_ + 1)) - 1u) & ~1u;
        return full & ~(rows_[r] | cols_[c] | boxes_[box_index(r, c)]);
    }

    void search(OracleResult& result) {
        std::size_t best = grid_.size();
        int best_count = 99;
        unsigned best_mask = 0;
        for (std::size_t i = 0; i < grid_.size(); ++i) {
            if (grid_[i] != sudoku_token::blank) continue;
            const unsigned mask = candidates(i);
            const int n = std::popcount(mask);
            if (n < best_count) {
                best = i;
                best_count = n;
                best_mask = mask;
                if (n == 0) return;
            }
        }
        if (best == grid_.size()) {
            if (result.count == 0) result.first_solution = grid_;
            ++result.count;
            return;
        }
        const std::size_t r = best / side_, c = best % side_, b = box_index(r, c);
        for (int v = 1; v <= static_cast<int>(side_) && result.count < 2; ++v) {
            const unsigned bit = 1u << v;
            if (!(best_mask & bit)) continue;
            grid_[best] = v;
            rows_[r] |= bit;
            cols_[c] |= bit;
            boxes_[b] |= bit;
            search(result);
            rows_[r] &= ~bit;
            cols_[c] &= ~bit;
            boxes_[b] &= ~bit;
            grid_[best] = sudoku_token::blank;
        }
    }

    std::size_t side_;
    std::size_t box_;
    std::vector<int> grid_;
    std::vector<unsigned> rows_, cols_, boxes_;
    bool consistent_ = true;
};

std::vector<std::size_t> permute_lines(std::size_t side, std::mt19937_64& rng) {
    const std::size_t box = sudoku_box(side);
    std::vector<std::size_t> groups(box);
    std::iota(groups.begin(), groups.end(), 0);
    std::shuffle(groups.begin(), groups.end(), rng);
    std::vector<std::size_t> lines;
    lines.reserve(side);
    for (std::size_t g : groups) {
        std::vector<std::size_t> inner(box);
        std::iota(inner.begin(), inner.end(), 0);
        std::shuffle(inner.begin(), inner.end(), rng);
        for (std::size_t i : inner) lines.push_back(g * box + i);
    }
    return lines;
}

std::vector<int> random_solution(std::size_t side, std::mt19937_64& rng) {
    const std::size_t box = sudoku_box(side);
    std::vector<int> grid(side * side, sudoku_token::blank);
    auto ok = [&](std::size_t i, int v) {
        const std::size_t r = i / side, c = i % side;
        for (std::size_t k = 0; k < side; ++k) {
            if (grid[r * side + k] == v || grid[k * side + c] == v) return false;
        }
        const std::size_t br = r / box * box, bc = c / box * box;
        for (std::size_t a = 0; a < box; ++a)
            for (std::size_t b = 0; b < box; ++b)
                if (grid[(br + a) * side + bc + b] == v) return false;
        return true;
    };
    auto fill = [&](auto& self, std::size_t i) -> bool {
        if (i == grid.size()) return true;
        std::vector<int> digits(side);
        std::iota(digits.begin(), digits.end(), 1);
        std::shuffle(digits.begin(), digits.end(), rng);
        for (int v : digits) {
            if (!ok(i, v)) continue;
            grid[i] = v;
            if (self(self, i + 1)) return true;
            grid[i] = sudoku_token::blank;
        }
        return false;
    };
    fill(fill, 0);
    return grid;
}

PuzzleInstance make_instance(std::size_t side, std::vector<int> input, std::vector<int> target,
                             std::uint64_t seed) {
    PuzzleInstance p;
    p.kind = TaskKind::sudoku;
    p.side = side;
    p.input = std::move(input);
    p.target = std::move(target);
    p.seed = seed;
    return p;
}

PuzzleInstance from_bank(std::size_t givens, std::uint64_t seed, std::mt19937_64& rng) {
    const std::string_view text = kSeventeenGivenBank[rng() % kSeventeenGivenBank.size()];
    std::vector<int> base(text.size());
    std::transform(text.begin(), text.end(), base.begin(), [](char ch) { return ch - '0'; });
    const auto solved = sudoku_oracle(base, 9);
    if (solved.count != 1) throw std::logic_error("sudoku bank entry is not uniquely solvable");
    const auto t = SudokuTransform::random(9, rng);
    std::vector<int> input = apply_transform(base, 9, t);
    std::vector<int> target = apply_transform(solved.first_solution, 9, t);
    std::vector<std::size_t> blanks;
    for (std::size_t i = 0; i < input.size(); ++i)
        if (input[i] == sudoku_token::blank) blanks.push_back(i);
    std::shuffle(blanks.begin(), blanks.end(), rng);
    // Adding solution cells to a unique puzzle keeps it unique.
    for (std::size_t k = 0; k + 17 < givens; ++k) input[blanks[k]] = target[blanks[k]];
    return make_instance(9, std::move(input), std::move(target), seed);
}

}  // namespace

std::size_t sudoku_box(std::size_t side) {
    require_side(side);
    return side == 4 ? 2 : 3;
}

std::size_t sudoku_min_givens(std::size_t side) {
    require_side(side);
    return side == 4 ? 4 : 17;
}

OracleResult sudoku_oracle(std::span<const int> grid, std::size_t side) {
    require_side(side);
    return Solver(grid, side).run();
}

PuzzleInstance gen_sudoku(std::size_t side, std::size_t givens, std::uint64_t seed) {
    require_side(side);
    const std::size_t cells = side * side;
    if (givens < sudoku_min_givens(side) || givens > cells) {
        throw std::invalid_argument("gen_sudoku: " + std::to_string(givens) + " givens outside [" +
                                    std::to_string(sudoku_min_givens(side)) + ", " + std::to_string(cells) +
                                    "] for side " + std::to_string(side));
    }
    std::mt19937_64 rng(seed);
    const int attempts = side == 4 ? 2000 : (givens >= kDigFloor9 ? 40 : 0);
    for (int a = 0; a < attempts; ++a) {
        std::vector<int> solution = random_solution(side, rng);
        std::vector<int> grid = solution;
        std::vector<std::size_t> order(cells);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t filled = cells;
        for (std::size_t i : order) {
            if (filled == givens) break;
            const int keep = grid[i];
            grid[i] = sudoku_token::blank;
            if (sudoku_oracle(grid, side).count == 1) {
                --filled;
            } else {
                grid[i] = keep;
            }
        }
        if (filled == givens) return make_instance(side, std::move(grid), std::move(solution), seed);
    }
    if (side == 9) return from_bank(givens, seed, rng);
    throw std::runtime_error("gen_sudoku: no unique puzzle with " + std::to_string(givens) +
                             " givens after " + std::to_string(attempts) + " attempts (side " +
                             std::to_string(side) + ", seed " + std::to_string(seed) + ")");
}

SudokuTransform SudokuTransform::identity(std::size_t side) {
    require_side(side);
    SudokuTransform t;
    t.digit_map.resize(side + 1);
    std::iota(t.digit_map.begin(), t.digit_map.end(), 0);
    t.rows.resize(side);
    std::iota(t.rows.begin(), t.rows.end(), 0);
    t.cols = t.rows;
    return t;
}

SudokuTransform SudokuTransform::random(std::size_t side, std::mt19937_64& rng) {
    SudokuTransform t = identity(side);
    std::shuffle(t.digit_map.begin() + 1, t.digit_map.end(), rng);
    t.rows = permute_lines(side, rng);
    t.cols = permute_lines(side, rng);
    t.transpose = (rng() & 1u) != 0;
    return t;
}

std::vector<int> apply_transform(std::span<const int> grid, std::size_t side, const SudokuTransform& t) {
    if (grid.size() != side * side || t.rows.size() != side || t.cols.size() != side ||
        t.digit_map.size() != side + 1) {
        throw std::invalid_argument("apply_transform: transform does not match grid side " + std::to_string(side));
    }
    std::vector<int> out(grid.size());
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const std::size_t sr = t.rows[r], sc = t.cols[c];
            const int v = t.transpose ? grid[sc * side + sr] : grid[sr * side + sc];
            out[r * side + c] = t.digit_map[static_cast<std::size_t>(v)];
        }
    }
    return out;
}

PuzzleInstance apply_transform(const PuzzleInstance& p, const SudokuTransform& t) {
    if (p.kind != TaskKind::sudoku) throw std::invalid_argument("apply_transform: not a sudoku instance");
    PuzzleInstance out = p;
    out.input = apply_transform(p.input, p.side, t);
    out.target = apply_transform(p.target, p.side, t);
    return out;
}

PuzzleInstance augment_sudoku(const PuzzleInstance& p, std::uint64_t seed) {
    if (p.kind != TaskKind::sudoku) throw std::invalid_argument("augment_sudoku: not a sudoku instance");
    std::mt19937_64 rng(seed);
    return apply_transform(p, SudokuTransform::random(p.side, rng));
}

std::vector<int> violations_sudoku(std::span<const int> grid, std::size_t side) {
    const std::size_t box = sudoku_box(side);
    if (grid.size() != side * side) throw std::invalid_argument("violations_sudoku: wrong cell count");
    std::vector<char> flagged(grid.size(), 0);
    auto scan = [&](auto cell_of) {
        std::vector<int> seen(side + 1, 0);
        for (std::size_t k = 0; k < side; ++k) {
            const int v = grid[cell_of(k)];
            if (v > 0 && v <= static_cast<int>(side)) ++seen[static_cast<std::size_t>(v)];
        }
        for (std::size_t k = 0; k < side; ++k) {
            const std::size_t i = cell_of(k);
            const int v = grid[i];
            if (v > 0 && v <= static_cast<int>(side) && seen[static_cast<std::size_t>(v)] > 1) flagged[i] = 1;
        }
    };
    for (std::size_t u = 0; u < side; ++u) {
        scan([&](std::size_t k) { return u * side + k; });
        scan([&](std::size_t k) { return k * side + u; });
        const std::size_t br = u / box * box, bc = u % box * box;
        scan([&](std::size_t k) { return (br + k / box) * side + bc + k % box; });
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < flagged.size(); ++i)
        if (flagged[i]) out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace air::tasks
