#include "air/tasks/puzzle.hpp"

#include <stdexcept>

namespace air::tasks {

namespace {

constexpr std::string_view kMazeSymbols = "_#.SGo";

void require_cells(std::size_t side, std::size_t n, const char* what) {
    if (n != side * side) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(side * side) +
                                    " cells, got " + std::to_string(n));
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::string_view to_string(TaskKind kind) { return kind == TaskKind::sudoku ? "sudoku" : "maze"; }

TaskKind parse_task_kind(std::string_view text) {
    if (text == "sudoku") return TaskKind::sudoku;
    if (text == "maze") return TaskKind::maze;
    throw std::invalid_argument("unknown task kind '" + std::string(text) + "'");
}

std::size_t vocab_size(TaskKind kind, std::size_t side) {
    return kind == TaskKind::sudoku ? side + 1 : static_cast<std::size_t>(maze_token::vocab);
}

int undecided_token(TaskKind kind) {
    return kind == TaskKind::sudoku ? sudoku_token::blank : maze_token::pad;
}

std::vector<int> encode_grid(TaskKind kind, std::size_t side, std::string_view symbols) {
    require_cells(side, symbols.size(), "encode_grid");
    std::vector<int> ids;
    ids.reserve(symbols.size());
    for (char ch : symbols) {
        if (kind == TaskKind::sudoku) {
            if (ch == '.') {
                ids.push_back(sudoku_token::blank);
            } else if (ch >= '1' && ch <= '9' && static_cast<std::size_t>(ch - '0') <= side) {
                ids.push_back(ch - '0');
            } else {
                throw std::invalid_argument(std::string("encode_grid: unknown sudoku symbol '") + ch + "'");
            }
        } else {
            const auto pos = kMazeSymbols.find(ch);
            if (pos == std::string_view::npos) {
                throw std::invalid_argument(std::string("encode_grid: unknown maze symbol '") + ch + "'");
            }
            ids.push_back(static_cast<int>(pos));
        }
    }
    return ids;
}

std::string decode_grid(TaskKind kind, std::size_t side, std::span<const int> ids) {
    require_cells(side, ids.size(), "decode_grid");
    const auto vocab = static_cast<int>(vocab_size(kind, side));
    std::string out;
    out.reserve(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= vocab) {
            throw std::invalid_argument("decode_grid: token id " + std::to_string(id) + " outside vocabulary");
        }
        if (kind == TaskKind::sudoku) {
            out.push_back(id == sudoku_token::blank ? '.' : static_cast<char>('0' + id));
        } else {
            out.push_back(kMazeSymbols[static_cast<std::size_t>(id)]);
        }
    }
    return out;
}

std::pair<std::vector<int>, std::vector<int>> encode_puzzle(const PuzzleInstance& p) {
    require_cells(p.side, p.input.size(), "encode_puzzle input");
    require_cells(p.side, p.target.size(), "encode_puzzle target");
    // Validates every id against the vocabulary.
    (void)decode_grid(p.kind, p.side, p.input);
    (void)decode_grid(p.kind, p.side, p.target);
    return {p.input, p.target};
}

std::string render_grid(TaskKind kind, std::size_t side, std::span<const int> ids) {
    const std::string flat = decode_grid(kind, side, ids);
    std::string out;
    for (std::size_t r = 0; r < side; ++r) {
        out.append(flat, r * side, side);
        out.push_back('\n');
    }
    return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ (index + 1) * 0xD1B54A32D192ED03ull);
}

}  // namespace air::tasks
