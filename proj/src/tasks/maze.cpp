#include "air/tasks/maze.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <stdexcept>
#include <string>

namespace air::tasks {

namespace {

constexpr std::array<std::pair<int, int>, 4> kSteps = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};

}  // namespace

bool maze_passable(int token) {
    return token == maze_token::open || token == maze_token::start || token == maze_token::goal ||
           token == maze_token::solution;
}

int maze_find(std::span<const int> grid, int token) {
    int found = -1;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] != token) continue;
        if (found >= 0) throw std::invalid_argument("maze_find: token " + std::to_string(token) + " repeated");
        found = static_cast<int>(i);
    }
    if (found < 0) throw std::invalid_argument("maze_find: token " + std::to_string(token) + " absent");
    return found;
}

std::optional<std::vector<int>> maze_shortest_path(std::span<const int> grid, std::size_t side, int from, int to) {
    const int n = static_cast<int>(side * side);
    if (grid.size() != side * side) throw std::invalid_argument("maze_shortest_path: wrong cell count");
    if (from < 0 || from >= n || to < 0 || to >= n) throw std::out_of_range("maze_shortest_path: cell off board");
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<int> queue{from};
    parent[static_cast<std::size_t>(from)] = from;
    const int s = static_cast<int>(side);
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int cur = queue[head];
        if (cur == to) break;
        for (auto [dr, dc] : kSteps) {
            const int r = cur / s + dr, c = cur % s + dc;
            if (r < 0 || r >= s || c < 0 || c >= s) continue;
            const int next = r * s + c;
            if (parent[static_cast<std::size_t>(next)] >= 0 || !maze_passable(grid[static_cast<std::size_t>(next)])) continue;
            parent[static_cast<std::size_t>(next)] = cur;
            queue.push_back(next);
        }
    }
    if (parent[static_cast<std::size_t>(to)] < 0) return std::nullopt;
    std::vector<int> path{to};
    while (path.back() != from) path.push_back(parent[static_cast<std::size_t>(path.back())]);
    std::reverse(path.begin(), path.end());
    return path;
}

PuzzleInstance gen_maze(std::size_t side, std::uint64_t seed) {
    if (side < 5) throw std::invalid_argument("gen_maze: side " + std::to_string(side) + " below 5");
    const int s = static_cast<int>(side);
    std::mt19937_64 rng(seed);
    std::vector<int> grid(side * side, maze_token::wall);
    std::vector<int> rooms;
    for (int r = 0; r < s; r += 2)
        for (int c = 0; c < s; c += 2) rooms.push_back(r * s + c);

    std::vector<char> visited(side * side, 0);
    std::vector<int> stack{rooms[rng() % rooms.size()]};
    visited[static_cast<std::size_t>(stack.back())] = 1;
    grid[static_cast<std::size_t>(stack.back())] = maze_token::open;
    while (!stack.empty()) {
        const int cur = stack.back();
        std::vector<int> options;
        for (auto [dr, dc] : kSteps) {
            const int r = cur / s + 2 * dr, c = cur % s + 2 * dc;
            if (r < 0 || r >= s || c < 0 || c >= s) continue;
            if (!visited[static_cast<std::size_t>(r * s + c)]) options.push_back(r * s + c);
        }
        if (options.empty()) {
            stack.pop_back();
            continue;
        }
        const int next = options[rng() % options.size()];
        grid[static_cast<std::size_t>((cur + next) / 2)] = maze_token::open;
        grid[static_cast<std::size_t>(next)] = maze_token::open;
        visited[static_cast<std::size_t>(next)] = 1;
        stack.push_back(next);
    }

    std::shuffle(rooms.begin(), rooms.end(), rng);
    const int start = rooms[0], goal = rooms[1];
    grid[static_cast<std::size_t>(start)] = maze_token::start;
    grid[static_cast<std::size_t>(goal)] = maze_token::goal;

    const auto path = maze_shortest_path(grid, side, start, goal);
    if (!path) throw std::runtime_error("gen_maze: start and goal disconnected (seed " + std::to_string(seed) + ")");
    PuzzleInstance p;
    p.kind = TaskKind::maze;
    p.side = side;
    p.input = grid;
    p.target = grid;
    for (std::size_t k = 1; k + 1 < path->size(); ++k) p.target[static_cast<std::size_t>((*path)[k])] = maze_token::solution;
    p.seed = seed;
    return p;
}

std::vector<int> maze_error_set(std::span<const int> decoded, std::span<const int> truth) {
    if (decoded.size() != truth.size()) {
        throw std::invalid_argument("maze_error_set: shapes differ (" + std::to_string(decoded.size()) + " vs " +
                                    std::to_string(truth.size()) + ")");
    }
    std::vector<int> out;
    for (std::size_t i = 0; i < decoded.size(); ++i)
        if (decoded[i] != truth[i]) out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace air::tasks
