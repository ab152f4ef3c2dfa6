#pragma once

#include <string_view>
#include <vector>

#include <json.hpp>

#include "air/tasks/puzzle.hpp"

namespace air::tasks {

enum class NeighborhoodKind { sudoku, n4, n8, n5x5 };

std::string_view to_string(NeighborhoodKind kind);

/// Precomputed neighborhood tables for one board. Sudoku boards carry the
/// row/column/box table; maze boards carry the three clipped windows. A
/// cell is never its own neighbor; lists are ascending.
class BoardGeometry {
public:
    BoardGeometry(TaskKind kind, std::size_t side);

    TaskKind kind() const noexcept { return kind_; }
    std::size_t side() const noexcept { return side_; }
    std::size_t cells() const noexcept { return side_ * side_; }
    std::size_t box() const noexcept { return box_; }  // 0 for mazes

    bool supports(NeighborhoodKind kind) const noexcept;
    const std::vector<int>& neighborhood(int q, NeighborhoodKind kind) const;
    bool contains(int q, NeighborhoodKind kind, int other) const;

    nlohmann::json to_json() const;

private:
    TaskKind kind_;
    std::size_t side_;
    std::size_t box_ = 0;
    std::vector<std::vector<int>> sudoku_, n4_, n8_, n5x5_;
    std::vector<std::vector<char>> membership_[4];
};

}  // namespace air::tasks
