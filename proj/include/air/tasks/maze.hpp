#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "air/tasks/puzzle.hpp"

namespace air::tasks {

/// Perfect maze on a side x side board. Rooms sit at even coordinates and
/// are joined by a randomized depth-first carve; START and GOAL are two
/// distinct rooms. The target copies the input and marks the interior of
/// the shortest START-GOAL path as SOLUTION.
PuzzleInstance gen_maze(std::size_t side, std::uint64_t seed);

/// True for every token a walker may stand on (not WALL, not PAD).
bool maze_passable(int token);

/// Cell holding `token` (START or GOAL); throws if absent or repeated.
int maze_find(std::span<const int> grid, int token);

/// Shortest 4-connected path from `from` to `to` over passable cells,
/// endpoints included; nullopt when disconnected.
std::optional<std::vector<int>> maze_shortest_path(std::span<const int> grid, std::size_t side, int from, int to);

/// Positions where `decoded` differs from `truth`, ascending.
std::vector<int> maze_error_set(std::span<const int> decoded, std::span<const int> truth);

}  // namespace air::tasks
