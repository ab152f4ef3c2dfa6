#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace air::tasks {

enum class TaskKind { sudoku, maze };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

/// Sudoku ids: 0 = BLANK, d = digit d (1..side). BLANK is both the input
/// "unfilled" marker and the decoded "undecided" marker.
namespace sudoku_token {
inline constexpr int blank = 0;
}

/// Maze ids. PAD is the decoded "undecided" marker; it never appears in
/// generated inputs or targets.
namespace maze_token {
inline constexpr int pad = 0;
inline constexpr int wall = 1;
inline constexpr int open = 2;
inline constexpr int start = 3;
inline constexpr int goal = 4;
inline constexpr int solution = 5;
inline constexpr int vocab = 6;
}  // namespace maze_token

struct PuzzleInstance {
    TaskKind kind = TaskKind::sudoku;
    std::size_t side = 0;
    std::vector<int> input;   // row-major, side * side token ids
    std::vector<int> target;  // row-major, side * side token ids
    std::uint64_t seed = 0;

    std::size_t cells() const noexcept { return side * side; }
};

/// Sudoku: side + 1 (digits plus BLANK); maze: 6.
std::size_t vocab_size(TaskKind kind, std::size_t side);
int undecided_token(TaskKind kind);

/// Symbol grids, one character per cell, row-major.
/// Sudoku: '.' BLANK, '1'..'9' digits. Maze: '_' PAD, '#' WALL, '.' OPEN,
/// 'S' START, 'G' GOAL, 'o' SOLUTION.
std::vector<int> encode_grid(TaskKind kind, std::size_t side, std::string_view symbols);
std::string decode_grid(TaskKind kind, std::size_t side, std::span<const int> ids);

/// Token sequences fed to and expected from the model.
std::pair<std::vector<int>, std::vector<int>> encode_puzzle(const PuzzleInstance& p);

/// Multi-line rendering for logs and the CLI.
std::string render_grid(TaskKind kind, std::size_t side, std::span<const int> ids);

/// Stream seed for instance `index` of a dataset drawn with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace air::tasks
