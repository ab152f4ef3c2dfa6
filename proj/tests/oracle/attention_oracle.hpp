#pragma once

// Naive re-derivations of the attention statistics, written directly from
// the definitions with no shared code beyond the trace types. Used as the
// reference in unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <vector>

#include "air/analysis/analysis.hpp"

namespace air::oracle {

using analysis::AttentionStatRow;
using analysis::QueryClass;
using recurrence::RolloutTrace;
using tasks::PuzzleInstance;
using tasks::TaskKind;

enum class Hood { sudoku, n4, n8, n5x5 };

inline bool in_hood(Hood h, std::size_t side, int q, int k) {
    if (q == k) return false;
    const int s = static_cast<int>(side);
    const int qr = q / s, qc = q % s, kr = k / s, kc = k % s;
    const int dr = std::abs(qr - kr), dc = std::abs(qc - kc);
    switch (h) {
        case Hood::sudoku: {
            int box = 1;
            while (box * box < s) ++box;
            return qr == kr || qc == kc || (qr / box == kr / box && qc / box == kc / box);
        }
        case Hood::n4: return dr + dc == 1;
        case Hood::n8: return dr <= 1 && dc <= 1;
        case Hood::n5x5: return dr <= 2 && dc <= 2;
    }
    return false;
}

inline std::vector<int> hood(Hood h, std::size_t side, int q) {
    std::vector<int> out;
    for (int k = 0; k < static_cast<int>(side * side); ++k)
        if (in_hood(h, side, q, k)) out.push_back(k);
    return out;
}

// Sudoku: cells whose non-blank digit repeats among their 20 peers.
inline std::vector<char> violated_cells(const PuzzleInstance& p, const std::vector<int>& grid) {
    std::vector<char> v(p.cells(), 0);
    for (std::size_t i = 0; i < p.cells(); ++i) {
        if (p.kind == TaskKind::maze) {
            v[i] = grid[i] != p.target[i];
            continue;
        }
        if (grid[i] == 0) continue;
        for (std::size_t j = 0; j < p.cells(); ++j)
            if (in_hood(Hood::sudoku, p.side, static_cast<int>(i), static_cast<int>(j)) && grid[j] == grid[i]) v[i] = 1;
    }
    return v;
}

inline double weight(const Tensor& t, std::size_t b, std::size_t h, std::size_t prefix, int q, int k) {
    const std::size_t heads = t.shape()[1], sp = t.shape()[2];
    return t[((b * heads + h) * sp + prefix + static_cast<std::size_t>(q)) * sp + prefix + static_cast<std::size_t>(k)];
}

inline double entropy(const Tensor& t, std::size_t b, std::size_t h, std::size_t prefix, int q, std::size_t cells) {
    double z = 0.0;
    for (std::size_t k = 0; k < cells; ++k) z += weight(t, b, h, prefix, q, static_cast<int>(k));
    double e = 0.0;
    for (std::size_t k = 0; k < cells; ++k) {
        const double p = weight(t, b, h, prefix, q, static_cast<int>(k)) / z;
        if (p > 0) e += -p * std::log(p);
    }
    return e / std::log(static_cast<double>(cells));
}

// Head-averaged sum over `keys` of (L - H) weights.
inline double mass_diff(const Tensor& L, std::size_t pl, const Tensor& H, std::size_t ph, std::size_t b, int q,
                        const std::vector<int>& keys) {
    const std::size_t heads = L.shape()[1];
    double acc = 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
        double m = 0.0;
        for (int k : keys) m += weight(L, b, h, pl, q, k) - weight(H, b, h, ph, q, k);
        acc += m;
    }
    return acc / static_cast<double>(heads);
}

inline std::vector<int> entry_grid(const RolloutTrace& tr, std::size_t b, std::size_t cycle) {
    const std::vector<int>* g = &tr.initial_H;
    if (cycle > 0)
        for (const auto& s : tr.steps)
            if (s.cycle + 1 == cycle) g = &s.grid_H;
    return {g->begin() + static_cast<long>(b * tr.cells), g->begin() + static_cast<long>((b + 1) * tr.cells)};
}

inline std::vector<AttentionStatRow> stat_rows(const RolloutTrace& tr, std::size_t b, const PuzzleInstance& p,
                                               std::size_t puzzle_id) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    const bool sudoku = p.kind == TaskKind::sudoku;
    std::vector<std::size_t> cycles;
    for (const auto& a : tr.attention) {
        bool seen = false;
        for (auto c : cycles) seen |= c == a.cycle;
        if (!seen) cycles.push_back(a.cycle);
    }
    std::sort(cycles.begin(), cycles.end());
    std::vector<AttentionStatRow> rows;
    for (std::size_t c : cycles) {
        const recurrence::AttentionRecord *la = nullptr, *ha = nullptr;
        for (const auto& a : tr.attention) {
            if (a.cycle != c) continue;
            if (a.level == model::Level::L && !la) la = &a;
            if (a.level == model::Level::H && !ha) ha = &a;
        }
        const auto v = violated_cells(p, entry_grid(tr, b, c));
        for (std::size_t layer = 0; layer < la->layers.size(); ++layer) {
            const Tensor& L = la->layers[layer];
            const Tensor& H = ha->layers[layer];
            const std::size_t heads = L.shape()[1];
            for (int q = 0; q < static_cast<int>(p.cells()); ++q) {
                const bool query = sudoku ? p.input[static_cast<std::size_t>(q)] == 0
                                          : p.target[static_cast<std::size_t>(q)] == tasks::maze_token::solution;
                if (!query) continue;
                const auto n = hood(sudoku ? Hood::sudoku : Hood::n4, p.side, q);
                std::vector<int> in, out;
                for (int k : n) (v[static_cast<std::size_t>(k)] ? in : out).push_back(k);
                AttentionStatRow r{puzzle_id, in.empty() ? QueryClass::control : QueryClass::adjacent, layer, c, q,
                                   nan, 0.0, 0.0, nan, nan, nan, nan};
                for (std::size_t h = 0; h < heads; ++h)
                    r.d_ent += entropy(H, b, h, ha->prefix, q, p.cells()) - entropy(L, b, h, la->prefix, q, p.cells());
                r.d_ent /= static_cast<double>(heads);
                r.d_viol = mass_diff(L, la->prefix, H, ha->prefix, b, q, in);
                if (sudoku) {
                    r.d_nbr = mass_diff(L, la->prefix, H, ha->prefix, b, q, n);
                } else {
                    for (auto [hk, field] : {std::pair{Hood::n4, &r.d_rho4}, std::pair{Hood::n8, &r.d_rho8},
                                             std::pair{Hood::n5x5, &r.d_rho5x5}}) {
                        const auto keys = hood(hk, p.side, q);
                        *field = mass_diff(L, la->prefix, H, ha->prefix, b, q, keys) / static_cast<double>(keys.size());
                    }
                }
                if (!in.empty() && !out.empty())
                    r.d_rho_viol = mass_diff(L, la->prefix, H, ha->prefix, b, q, in) / static_cast<double>(in.size()) -
                                   mass_diff(L, la->prefix, H, ha->prefix, b, q, out) / static_cast<double>(out.size());
                rows.push_back(r);
            }
        }
    }
    return rows;
}

// Random positive rows normalised over S' keys.
inline Tensor random_attention(std::size_t batch, std::size_t heads, std::size_t sp, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(0.3, 1.0);
    Tensor t({batch, heads, sp, sp});
    for (std::size_t r = 0; r < batch * heads * sp; ++r) {
        double z = 0.0;
        for (std::size_t k = 0; k < sp; ++k) z += (t[r * sp + k] = g(rng) + 1e-12);
        for (std::size_t k = 0; k < sp; ++k) t[r * sp + k] /= z;
    }
    return t;
}

// Synthetic trace over `puzzles` (one batch row each) with random decoded
// grids per cycle and random captures at the L and H sub-steps of `cycles`.
inline RolloutTrace synthetic_trace(const std::vector<PuzzleInstance>& puzzles, std::size_t cycles, std::size_t layers,
                                    std::size_t heads, std::size_t prefix, std::mt19937_64& rng) {
    RolloutTrace tr;
    tr.batch = puzzles.size();
    tr.cells = puzzles.front().cells();
    const int vocab = static_cast<int>(tasks::vocab_size(puzzles.front().kind, puzzles.front().side));
    auto grid = [&](bool near_target) {
        std::vector<int> g;
        for (const auto& p : puzzles)
            for (std::size_t i = 0; i < p.cells(); ++i)
                g.push_back(near_target && rng() % 4 != 0 ? p.target[i] : static_cast<int>(rng() % static_cast<std::uint64_t>(vocab)));
        return g;
    };
    tr.initial_H = grid(false);
    tr.initial_L = grid(false);
    std::size_t t = 0;
    for (std::size_t c = 0; c < cycles; ++c) {
        for (std::size_t sub = 0; sub < 6; ++sub, ++t) {
            const auto level = sub % 3 == 2 ? model::Level::H : model::Level::L;
            tr.steps.push_back({t, c, sub, level, false, grid(true), grid(true)});
            if (sub == 0 || sub == 2) {
                recurrence::AttentionRecord a{t, c, sub, level, {}, prefix};
                for (std::size_t l = 0; l < layers; ++l)
                    a.layers.push_back(random_attention(tr.batch, heads, tr.cells + prefix, rng));
                tr.attention.push_back(std::move(a));
            }
        }
    }
    return tr;
}

inline double max_row_error(const std::vector<AttentionStatRow>& a, const std::vector<AttentionStatRow>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].cls != b[i].cls || a[i].layer != b[i].layer || a[i].cycle != b[i].cycle || a[i].query != b[i].query ||
            a[i].puzzle != b[i].puzzle)
            return std::numeric_limits<double>::infinity();
        const double x[] = {a[i].d_nbr, a[i].d_ent, a[i].d_viol, a[i].d_rho4, a[i].d_rho8, a[i].d_rho5x5, a[i].d_rho_viol};
        const double y[] = {b[i].d_nbr, b[i].d_ent, b[i].d_viol, b[i].d_rho4, b[i].d_rho8, b[i].d_rho5x5, b[i].d_rho_viol};
        for (int f = 0; f < 7; ++f) {
            if (std::isnan(x[f]) != std::isnan(y[f])) return std::numeric_limits<double>::infinity();
            if (!std::isnan(x[f])) worst = std::max(worst, std::abs(x[f] - y[f]));
        }
    }
    return worst;
}

}  // namespace air::oracle
