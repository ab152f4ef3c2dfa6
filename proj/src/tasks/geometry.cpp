#include "air/tasks/geometry.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "air/tasks/sudoku.hpp"

namespace air::tasks {

namespace {

std::vector<std::vector<int>> window(std::size_t side, int radius, bool manhattan) {
    const int s = static_cast<int>(side);
    std::vector<std::vector<int>> table(side * side);
    for (int q = 0; q < s * s; ++q) {
        const int r = q / s, c = q % s;
        for (int rr = r - radius; rr <= r + radius; ++rr) {
            for (int cc = c - radius; cc <= c + radius; ++cc) {
                if (rr < 0 || rr >= s || cc < 0 || cc >= s || (rr == r && cc == c)) continue;
                if (manhattan && std::abs(rr - r) + std::abs(cc - c) > radius) continue;
                table[static_cast<std::size_t>(q)].push_back(rr * s + cc);
            }
        }
    }
    return table;
}

}  // namespace

std::string_view to_string(NeighborhoodKind kind) {
    switch (kind) {
        case NeighborhoodKind::sudoku: return "sudoku";
        case NeighborhoodKind::n4: return "n4";
        case NeighborhoodKind::n8: return "n8";
        case NeighborhoodKind::n5x5: return "n5x5";
    }
    return "?";
}

BoardGeometry::BoardGeometry(TaskKind kind, std::size_t side) : kind_(kind), side_(side) {
    if (side == 0) throw std::invalid_argument("BoardGeometry: side must be positive");
    if (kind == TaskKind::sudoku) {
        box_ = sudoku_box(side);
        const std::size_t b = box_;
        sudoku_.resize(cells());
        for (std::size_t q = 0; q < cells(); ++q) {
            const std::size_t r = q / side, c = q % side;
            for (std::size_t o = 0; o < cells(); ++o) {
                const std::size_t orow = o / side, ocol = o % side;
                const bool shares = orow == r || ocol == c || (orow / b == r / b && ocol / b == c / b);
                if (shares && o != q) sudoku_[q].push_back(static_cast<int>(o));
            }
        }
    } else {
        n4_ = window(side, 1, true);
        n8_ = window(side, 1, false);
        n5x5_ = window(side, 2, false);
    }
    for (auto nk : {NeighborhoodKind::sudoku, NeighborhoodKind::n4, NeighborhoodKind::n8, NeighborhoodKind::n5x5}) {
        if (!supports(nk)) continue;
        auto& m = membership_[static_cast<int>(nk)];
        m.assign(cells(), std::vector<char>(cells(), 0));
        for (std::size_t q = 0; q < cells(); ++q)
            for (int o : neighborhood(static_cast<int>(q), nk)) m[q][static_cast<std::size_t>(o)] = 1;
    }
}

bool BoardGeometry::supports(NeighborhoodKind kind) const noexcept {
    return (kind == NeighborhoodKind::sudoku) == (kind_ == TaskKind::sudoku);
}

const std::vector<int>& BoardGeometry::neighborhood(int q, NeighborhoodKind kind) const {
    if (q < 0 || static_cast<std::size_t>(q) >= cells()) {
        throw std::out_of_range("neighborhood: cell " + std::to_string(q) + " off a " + std::to_string(side_) + "x" +
                                std::to_string(side_) + " board");
    }
    if (!supports(kind)) {
        throw std::invalid_argument("neighborhood: " + std::string(to_string(kind)) + " not defined for " +
                                    std::string(to_string(kind_)) + " boards");
    }
    const auto i = static_cast<std::size_t>(q);
    switch (kind) {
        case NeighborhoodKind::sudoku: return sudoku_[i];
        case NeighborhoodKind::n4: return n4_[i];
        case NeighborhoodKind::n8: return n8_[i];
        case NeighborhoodKind::n5x5: return n5x5_[i];
    }
    throw std::logic_error("neighborhood: bad kind");
}

bool BoardGeometry::contains(int q, NeighborhoodKind kind, int other) const {
    (void)neighborhood(q, kind);
    if (other < 0 || static_cast<std::size_t>(other) >= cells()) return false;
    return membership_[static_cast<int>(kind)][static_cast<std::size_t>(q)][static_cast<std::size_t>(other)] != 0;
}

nlohmann::json BoardGeometry::to_json() const {
    nlohmann::json j;
    j["kind"] = std::string(to_string(kind_));
    j["side"] = side_;
    if (box_) j["box"] = box_;
    nlohmann::json tables = nlohmann::json::object();
    for (auto nk : {NeighborhoodKind::sudoku, NeighborhoodKind::n4, NeighborhoodKind::n8, NeighborhoodKind::n5x5}) {
        if (!supports(nk)) continue;
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t q = 0; q < cells(); ++q) rows.push_back(neighborhood(static_cast<int>(q), nk));
        tables[std::string(to_string(nk))] = std::move(rows);
    }
    j["neighborhoods"] = std::move(tables);
    return j;
}

}  // namespace air::tasks
