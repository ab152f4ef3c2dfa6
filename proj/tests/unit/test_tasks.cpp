#include <doctest.h>

#include <algorithm>
#include <deque>
#include <filesystem>
#include <set>

#include "air/tasks/dataset.hpp"
#include "air/tasks/geometry.hpp"
#include "air/tasks/maze.hpp"
#include "air/tasks/sudoku.hpp"
#include "oracle/task_oracles.hpp"

using namespace air::tasks;
namespace oracle = air::oracle;

namespace {

bool valid_complete(const std::vector<int>& g, std::size_t side) {
    return std::find(g.begin(), g.end(), 0) == g.end() && violations_sudoku(g, side).empty();
}

using oracle::brute_count;

int bfs_oracle(const std::vector<int>& g, int side, int from, int to) { return oracle::bfs_distance(g, side, from, to); }

}  // namespace

TEST_CASE("sudoku oracle basic cases") {
    const auto solved = encode_grid(TaskKind::sudoku, 4, "1234341221434321");
    auto r = sudoku_oracle(solved, 4);
    CHECK(r.count == 1);
    CHECK(r.first_solution == solved);

    std::vector<int> dup(16, 0);
    dup[0] = 1;
    dup[3] = 1;
    CHECK(sudoku_oracle(dup, 4).count == 0);

    const std::vector<int> empty(16, 0);
    CHECK(sudoku_oracle(empty, 4).count == 2);
    CHECK(brute_count(empty, 4) == 288);
    CHECK_THROWS_AS(sudoku_oracle(std::vector<int>(15, 0), 4), std::invalid_argument);
}

TEST_CASE("oracle count agrees with brute-force enumeration on random 4x4 grids") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> g(16, 0);
        const int filled = 2 + static_cast<int>(rng() % 8);
        for (int k = 0; k < filled; ++k) g[rng() % 16] = 1 + static_cast<int>(rng() % 4);
        const int brute = std::min(brute_count(g, 4, 2), 2);
        CHECK(sudoku_oracle(g, 4).count == brute);
    }
}

TEST_CASE("generated sudokus are unique and consistent with their targets") {
    for (std::size_t givens : {4u, 6u, 8u, 15u}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto p = gen_sudoku(4, givens, seed);
            CHECK(std::count_if(p.input.begin(), p.input.end(), [](int v) { return v != 0; }) ==
                  static_cast<long>(givens));
            CHECK(valid_complete(p.target, 4));
            const auto r = sudoku_oracle(p.input, 4);
            CHECK(r.count == 1);
            CHECK(r.first_solution == p.target);
            for (std::size_t i = 0; i < 16; ++i) CHECK((p.input[i] == 0 || p.input[i] == p.target[i]));
        }
    }
    CHECK_THROWS_AS(gen_sudoku(4, 3, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_sudoku(9, 16, 0), std::invalid_argument);
    CHECK_THROWS_AS(gen_sudoku(5, 10, 0), std::invalid_argument);
}

TEST_CASE("nine-by-nine generation covers the bank path and the dig path") {
    for (std::size_t givens : {17u, 20u, 30u}) {
        const auto p = gen_sudoku(9, givens, 100 + givens);
        CHECK(std::count_if(p.input.begin(), p.input.end(), [](int v) { return v != 0; }) ==
              static_cast<long>(givens));
        const auto r = sudoku_oracle(p.input, 9);
        CHECK(r.count == 1);
        CHECK(r.first_solution == p.target);
    }
}

TEST_CASE("sudoku generation is deterministic in the seed") {
    CHECK(gen_sudoku(4, 6, 7).input == gen_sudoku(4, 6, 7).input);
    CHECK(gen_sudoku(9, 17, 7).input == gen_sudoku(9, 17, 7).input);
}

TEST_CASE("augmentation preserves validity and uniqueness") {
    const auto base = gen_sudoku(9, 22, 3);
    const auto same = apply_transform(base, SudokuTransform::identity(9));
    CHECK(same.input == base.input);
    CHECK(same.target == base.target);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto a = augment_sudoku(base, seed);
        CHECK(valid_complete(a.target, 9));
        const auto r = sudoku_oracle(a.input, 9);
        CHECK(r.count == 1);
        CHECK(r.first_solution == a.target);
    }
}

TEST_CASE("violation set") {
    std::vector<int> g(16, 0);
    CHECK(violations_sudoku(g, 4).empty());
    g[0] = 3;
    g[2] = 3;
    CHECK(violations_sudoku(g, 4) == std::vector<int>{0, 2});
    g[5] = 3;  // same box as cell 0
    CHECK(violations_sudoku(g, 4) == std::vector<int>{0, 2, 5});
    CHECK(violations_sudoku(encode_grid(TaskKind::sudoku, 4, "1234341221434321"), 4).empty());
}

TEST_CASE("maze shortest path matches an independent BFS") {
    for (std::size_t side : {5u, 10u, 11u, 30u}) {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const auto p = gen_maze(side, seed);
            CHECK(std::count(p.input.begin(), p.input.end(), maze_token::solution) == 0);
            const int s = maze_find(p.input, maze_token::start);
            const int g = maze_find(p.input, maze_token::goal);
            const int dist = bfs_oracle(p.input, static_cast<int>(side), s, g);
            REQUIRE(dist > 0);
            const auto marked = std::count(p.target.begin(), p.target.end(), maze_token::solution);
            CHECK(marked + 2 == dist + 1);
            // Path cells are connected: BFS restricted to path cells reaches the goal.
            std::vector<int> only_path(p.target.size(), maze_token::wall);
            for (std::size_t i = 0; i < p.target.size(); ++i)
                if (p.target[i] == maze_token::solution || p.target[i] == maze_token::start ||
                    p.target[i] == maze_token::goal)
                    only_path[i] = maze_token::open;
            CHECK(bfs_oracle(only_path, static_cast<int>(side), s, g) == dist);
            for (std::size_t i = 0; i < p.target.size(); ++i)
                if (p.target[i] != maze_token::solution) CHECK(p.target[i] == p.input[i]);
        }
    }
    CHECK_THROWS_AS(gen_maze(4, 0), std::invalid_argument);
}

TEST_CASE("maze error set") {
    const auto p = gen_maze(10, 1);
    CHECK(maze_error_set(p.target, p.target).empty());
    auto d = p.target;
    d[7] = d[7] == maze_token::pad ? maze_token::wall : maze_token::pad;
    CHECK(maze_error_set(d, p.target) == std::vector<int>{7});
    CHECK_THROWS_AS(maze_error_set(std::vector<int>(3), std::vector<int>(4)), std::invalid_argument);
}

TEST_CASE("encoding round-trips") {
    const std::string sym = "1.3..41.2.3.4..1";
    CHECK(decode_grid(TaskKind::sudoku, 4, encode_grid(TaskKind::sudoku, 4, sym)) == sym);
    const auto m = gen_maze(10, 5);
    const std::string ms = decode_grid(TaskKind::maze, 10, m.target);
    CHECK(encode_grid(TaskKind::maze, 10, ms) == m.target);
    CHECK_THROWS_AS(encode_grid(TaskKind::sudoku, 4, "1.3..41.2.3.4..x"), std::invalid_argument);
    CHECK_THROWS_AS(encode_grid(TaskKind::sudoku, 4, "1.3..41.2.3.4..5"), std::invalid_argument);
    CHECK(vocab_size(TaskKind::sudoku, 9) == 10);
    CHECK(vocab_size(TaskKind::maze, 30) == 6);
    const auto s = gen_sudoku(4, 6, 0);
    for (std::size_t i = 0; i < 16; ++i) CHECK((s.input[i] == sudoku_token::blank) == (s.input[i] != s.target[i]));
}

TEST_CASE("sudoku neighborhoods") {
    const BoardGeometry g9(TaskKind::sudoku, 9);
    for (int q = 0; q < 81; ++q) {
        const auto& n = g9.neighborhood(q, NeighborhoodKind::sudoku);
        CHECK(n.size() == 20);
        CHECK(std::find(n.begin(), n.end(), q) == n.end());
        for (int o : n) CHECK(g9.contains(o, NeighborhoodKind::sudoku, q));
    }
    const BoardGeometry g4(TaskKind::sudoku, 4);
    CHECK(g4.neighborhood(0, NeighborhoodKind::sudoku).size() == 7);
    CHECK_THROWS_AS(g9.neighborhood(81, NeighborhoodKind::sudoku), std::out_of_range);
    CHECK_THROWS_AS(g9.neighborhood(0, NeighborhoodKind::n4), std::invalid_argument);
}

TEST_CASE("maze windows are nested and clipped") {
    const BoardGeometry g(TaskKind::maze, 30);
    CHECK(g.neighborhood(0, NeighborhoodKind::n4).size() == 2);
    CHECK(g.neighborhood(0, NeighborhoodKind::n8).size() == 3);
    CHECK(g.neighborhood(0, NeighborhoodKind::n5x5).size() == 8);
    const int interior = 5 * 30 + 5;
    CHECK(g.neighborhood(interior, NeighborhoodKind::n4).size() == 4);
    CHECK(g.neighborhood(interior, NeighborhoodKind::n8).size() == 8);
    CHECK(g.neighborhood(interior, NeighborhoodKind::n5x5).size() == 24);
    for (int q = 0; q < 900; q += 7) {
        const auto& a = g.neighborhood(q, NeighborhoodKind::n4);
        const auto& b = g.neighborhood(q, NeighborhoodKind::n8);
        const auto& c = g.neighborhood(q, NeighborhoodKind::n5x5);
        CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
        CHECK(std::includes(c.begin(), c.end(), b.begin(), b.end()));
        CHECK(std::find(c.begin(), c.end(), q) == c.end());
    }
    const auto j = g.to_json();
    CHECK(j["neighborhoods"]["n8"][0].size() == 3);
}

TEST_CASE("dataset jsonl round-trip and per-index determinism") {
    const DatasetSpec spec{TaskKind::sudoku, 4, 12, 6, 42};
    const auto data = generate_dataset(spec);
    CHECK(generate_instance(spec, 7).input == data[7].input);
    const auto path = std::filesystem::temp_directory_path() / "air_test_dataset.jsonl";
    write_dataset_jsonl(path, data);
    const auto back = read_dataset_jsonl(path);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].input == data[i].input);
        CHECK(back[i].target == data[i].target);
        CHECK(back[i].seed == data[i].seed);
    }
    std::filesystem::remove(path);
}
