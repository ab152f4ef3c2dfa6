#include "air/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "air/tasks/maze.hpp"
#include "air/tasks/sudoku.hpp"

namespace air::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> row_of(const std::vector<int>& flat, std::size_t b, std::size_t cells) {
    if (flat.size() < (b + 1) * cells) throw std::out_of_range("trace grid shorter than batch row");
    return {flat.begin() + static_cast<long>(b * cells), flat.begin() + static_cast<long>((b + 1) * cells)};
}

void check_capture(const Tensor& t, std::size_t b, std::size_t prefix, std::size_t cells) {
    if (t.rank() != 4 || t.dim(2) != t.dim(3)) throw std::invalid_argument("attention capture must be [B, heads, S', S']");
    if (b >= t.dim(0)) throw std::out_of_range("attention capture: batch row out of range");
    if (prefix + cells > t.dim(2)) throw std::invalid_argument("attention capture shorter than prefix + cells");
}

std::vector<char> flags(const std::vector<int>& cells_set, std::size_t n) {
    std::vector<char> f(n, 0);
    for (int c : cells_set) f[static_cast<std::size_t>(c)] = 1;
    return f;
}

std::vector<int> query_cells(const PuzzleInstance& p) {
    std::vector<int> q;
    for (std::size_t i = 0; i < p.cells(); ++i) {
        const bool is_query = p.kind == tasks::TaskKind::sudoku ? p.input[i] == tasks::sudoku_token::blank
                                                                : p.target[i] == tasks::maze_token::solution;
        if (is_query) q.push_back(static_cast<int>(i));
    }
    return q;
}

std::vector<char> violation_flags(const PuzzleInstance& p, const std::vector<int>& grid) {
    return flags(p.kind == tasks::TaskKind::sudoku ? tasks::violations_sudoku(grid, p.side)
                                                   : tasks::maze_error_set(grid, p.target),
                 p.cells());
}

bool touches(const std::vector<int>& nbr, const std::vector<char>& violated) {
    return std::any_of(nbr.begin(), nbr.end(), [&](int k) { return violated[static_cast<std::size_t>(k)] != 0; });
}

void check_trace_puzzle(const RolloutTrace& trace, std::size_t b, const PuzzleInstance& p) {
    if (b >= trace.batch) throw std::out_of_range("attention contrasts: batch row out of range");
    if (trace.cells != p.cells()) throw std::invalid_argument("attention contrasts: puzzle size differs from trace");
}

}  // namespace

// ---- content changes -------------------------------------------------------

nlohmann::json ContentChangeSeries::to_json() const {
    return {{"state", model::to_string(state)},
            {"per_step", per_step},
            {"total", total},
            {"rewrites", rewrites},
            {"commitments", commitments},
            {"uncommitments", uncommitments}};
}

ContentChangeSeries content_change_series(const std::vector<std::vector<int>>& grids, Level state, int undecided) {
    if (grids.size() < 2) throw std::invalid_argument("content_change_series: need at least two grids");
    ContentChangeSeries s;
    s.state = state;
    for (std::size_t t = 1; t < grids.size(); ++t) {
        const auto& a = grids[t - 1];
        const auto& b = grids[t];
        if (a.size() != b.size())
            throw std::invalid_argument("content_change_series: grid " + std::to_string(t) + " has " +
                                        std::to_string(b.size()) + " cells, expected " + std::to_string(a.size()));
        std::size_t c = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i] == b[i]) continue;
            ++c;
            if (a[i] == undecided) {
                ++s.commitments;
            } else if (b[i] == undecided) {
                ++s.uncommitments;
            } else {
                ++s.rewrites;
            }
        }
        s.per_step.push_back(c);
        s.total += c;
    }
    return s;
}

void accumulate(ContentChangeSeries& a, const ContentChangeSeries& b) {
    if (a.per_step.empty()) {
        a = b;
        return;
    }
    if (a.per_step.size() != b.per_step.size()) throw std::invalid_argument("accumulate: series lengths differ");
    for (std::size_t i = 0; i < a.per_step.size(); ++i) a.per_step[i] += b.per_step[i];
    a.total += b.total;
    a.rewrites += b.rewrites;
    a.commitments += b.commitments;
    a.uncommitments += b.uncommitments;
}

// ---- freeze experiment -----------------------------------------------------

Level FreezeReport::active() const noexcept { return which == recurrence::FreezePolicy::freeze_H ? Level::L : Level::H; }

nlohmann::json FreezeReport::to_json() const {
    auto cond = [](const FreezeCondition& c) {
        return nlohmann::json{{"exact_match", c.exact_match}, {"H", c.H.to_json()}, {"L", c.L.to_json()}};
    };
    const auto& act = [&](const FreezeCondition& c) { return active() == Level::H ? c.H : c.L; };
    return {{"condition", recurrence::to_string(which)},
            {"active_state", model::to_string(active())},
            {"puzzles", puzzles},
            {"normal", cond(normal)},
            {"frozen", cond(frozen)},
            {"active_total", {{"normal", act(normal).total}, {"frozen", act(frozen).total}}}};
}

FreezeReport freeze_experiment(const Model& m, const std::vector<PuzzleInstance>& data, recurrence::FreezePolicy which,
                               const RecurrenceConfig& cfg, std::size_t batch_size) {
    if (cfg.single_state) throw std::invalid_argument("freeze_experiment: requires a two-state configuration");
    if (which == recurrence::FreezePolicy::none) throw std::invalid_argument("freeze_experiment: no state to freeze");
    if (data.empty()) throw std::invalid_argument("freeze_experiment: empty dataset");
    if (batch_size == 0) throw std::invalid_argument("freeze_experiment: batch_size must be positive");
    const std::size_t cells = data.front().cells();
    const int undecided = tasks::undecided_token(data.front().kind);

    FreezeReport rep;
    rep.which = which;
    rep.puzzles = data.size();
    auto run = [&](RecurrenceConfig c, FreezeCondition& out) {
        std::size_t correct = 0;
        for (std::size_t start = 0; start < data.size(); start += batch_size) {
            const std::size_t n = std::min(batch_size, data.size() - start);
            std::vector<int> tokens;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = data[start + i];
                if (p.cells() != cells) throw std::invalid_argument("freeze_experiment: puzzles differ in size");
                tokens.insert(tokens.end(), p.input.begin(), p.input.end());
            }
            const RolloutTrace tr = recurrence::run_rollout(m, tokens, n, c, {true, false});
            for (std::size_t i = 0; i < n; ++i) {
                accumulate(out.H, content_change_series(tr.state_series(Level::H, i), Level::H, undecided));
                accumulate(out.L, content_change_series(tr.state_series(Level::L, i), Level::L, undecided));
                correct += row_of(tr.final_tokens, i, cells) == data[start + i].target;
            }
        }
        out.exact_match = static_cast<double>(correct) / static_cast<double>(data.size());
    };
    RecurrenceConfig normal = cfg;
    normal.freeze = recurrence::FreezePolicy::none;
    RecurrenceConfig frozen = cfg;
    frozen.freeze = which;
    run(normal, rep.normal);
    run(frozen, rep.frozen);
    return rep;
}

// ---- attention statistics --------------------------------------------------

std::string_view to_string(QueryClass c, tasks::TaskKind kind) {
    if (c == QueryClass::control) return "control";
    return kind == tasks::TaskKind::sudoku ? "violation_adjacent" : "error_adjacent";
}

double normalized_entropy(std::span<const double> raw) {
    if (raw.size() < 2) throw std::invalid_argument("normalized_entropy: need at least two keys");
    double z = 0.0;
    for (double w : raw) {
        if (w < 0.0) throw std::invalid_argument("normalized_entropy: negative weight");
        z += w;
    }
    if (!(z > 0.0)) throw std::invalid_argument("normalized_entropy: weights sum to zero");
    // Summing n equal terms need not round back to log(n).
    if (std::all_of(raw.begin(), raw.end(), [&](double w) { return w == raw.front(); })) return 1.0;
    double h = 0.0;
    for (double w : raw) {
        const double p = w / z;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(raw.size()));
}

std::vector<double> query_weights(const Tensor& layer, std::size_t b, std::size_t head, std::size_t prefix,
                                  std::size_t cells, int q) {
    check_capture(layer, b, prefix, cells);
    if (head >= layer.dim(1)) throw std::out_of_range("query_weights: head out of range");
    if (q < 0 || static_cast<std::size_t>(q) >= cells) throw std::out_of_range("query_weights: query off the board");
    const std::size_t sp = layer.dim(2);
    const std::size_t base = ((b * layer.dim(1) + head) * sp + prefix + static_cast<std::size_t>(q)) * sp + prefix;
    std::vector<double> w(cells);
    for (std::size_t k = 0; k < cells; ++k) w[k] = layer[base + k];
    return w;
}

QueryStats query_stats(const LayerPair& p, int q, const std::vector<int>& nbr, const std::vector<char>& violated) {
    if (p.L.dim(1) != p.H.dim(1)) throw std::invalid_argument("query_stats: L and H head counts differ");
    if (violated.size() != p.cells) throw std::invalid_argument("query_stats: violation flags do not cover the board");
    const std::size_t heads = p.L.dim(1);
    std::size_t n_in = 0;
    for (int k : nbr) n_in += violated[static_cast<std::size_t>(k)] != 0;
    const std::size_t n_out = nbr.size() - n_in;
    QueryStats s;
    s.control_eligible = n_in > 0 && n_out > 0;
    for (std::size_t h = 0; h < heads; ++h) {
        const auto wl = query_weights(p.L, p.b, h, p.prefix_L, p.cells, q);
        const auto wh = query_weights(p.H, p.b, h, p.prefix_H, p.cells, q);
        double mass = 0.0, in = 0.0, out = 0.0;
        for (int k : nbr) {
            const double d = wl[static_cast<std::size_t>(k)] - wh[static_cast<std::size_t>(k)];
            mass += d;
            (violated[static_cast<std::size_t>(k)] ? in : out) += d;
        }
        s.d_mass += mass;
        s.d_viol += in;
        s.d_ent += normalized_entropy(wh) - normalized_entropy(wl);
        if (s.control_eligible)
            s.d_rho_viol += in / static_cast<double>(n_in) - out / static_cast<double>(n_out);
    }
    const double inv = 1.0 / static_cast<double>(heads);
    s.d_mass *= inv;
    s.d_viol *= inv;
    s.d_ent *= inv;
    s.d_rho_viol *= inv;
    return s;
}

double density_contrast(const LayerPair& p, int q, const std::vector<int>& nbr) {
    if (nbr.empty()) throw std::invalid_argument("density_contrast: empty neighborhood");
    const std::size_t heads = p.L.dim(1);
    double acc = 0.0;
    for (std::size_t h = 0; h < heads; ++h) {
        const auto wl = query_weights(p.L, p.b, h, p.prefix_L, p.cells, q);
        const auto wh = query_weights(p.H, p.b, h, p.prefix_H, p.cells, q);
        for (int k : nbr) acc += wl[static_cast<std::size_t>(k)] - wh[static_cast<std::size_t>(k)];
    }
    return acc / static_cast<double>(heads) / static_cast<double>(nbr.size());
}

std::vector<int> grid_at_cycle_entry(const RolloutTrace& trace, std::size_t b, std::size_t cycle) {
    if (cycle == 0) return row_of(trace.initial_H, b, trace.cells);
    const recurrence::SubStepRecord* last = nullptr;
    for (const auto& s : trace.steps)
        if (s.cycle == cycle - 1) last = &s;
    if (last == nullptr)
        throw std::runtime_error("trace has no decoded grids for cycle " + std::to_string(cycle - 1));
    return row_of(last->grid_H, b, trace.cells);
}

std::vector<std::size_t> captured_cycles(const RolloutTrace& trace) {
    std::set<std::size_t> cycles;
    for (const auto& a : trace.attention) cycles.insert(a.cycle);
    for (std::size_t c : cycles) {
        for (Level lv : {Level::L, Level::H})
            if (trace.find_attention(c, lv) == nullptr)
                throw std::runtime_error("attention capture missing for cycle " + std::to_string(c) + " (" +
                                         std::string(model::to_string(lv)) + "-update)");
    }
    return {cycles.begin(), cycles.end()};
}

namespace {

template <typename Fn>
void for_each_capture(const RolloutTrace& trace, std::size_t b, std::size_t cells, Fn&& fn) {
    for (std::size_t c : captured_cycles(trace)) {
        const auto* la = trace.find_attention(c, Level::L);
        const auto* ha = trace.find_attention(c, Level::H);
        if (la->layers.size() != ha->layers.size())
            throw std::runtime_error("attention capture layer counts differ at cycle " + std::to_string(c));
        for (std::size_t layer = 0; layer < la->layers.size(); ++layer) {
            const LayerPair p{la->layers[layer], la->prefix, ha->layers[layer], ha->prefix, b, cells};
            fn(c, layer, p);
        }
    }
}

AttentionStatRow blank_row(std::size_t puzzle_id, std::size_t cycle, std::size_t layer, int q) {
    return {puzzle_id, QueryClass::control, layer, cycle, q, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
}

}  // namespace

std::vector<AttentionStatRow> sudoku_attention_contrasts(const RolloutTrace& trace, std::size_t b,
                                                         const PuzzleInstance& puzzle, std::size_t puzzle_id) {
    if (puzzle.kind != tasks::TaskKind::sudoku) throw std::invalid_argument("sudoku_attention_contrasts: not a sudoku");
    check_trace_puzzle(trace, b, puzzle);
    const tasks::BoardGeometry geo(puzzle.kind, puzzle.side);
    const auto queries = query_cells(puzzle);
    std::vector<AttentionStatRow> rows;
    std::size_t cached_cycle = SIZE_MAX;
    std::vector<char> violated;
    for_each_capture(trace, b, puzzle.cells(), [&](std::size_t c, std::size_t layer, const LayerPair& p) {
        if (c != cached_cycle) {
            violated = violation_flags(puzzle, grid_at_cycle_entry(trace, b, c));
            cached_cycle = c;
        }
        for (int q : queries) {
            const auto& nbr = geo.neighborhood(q, tasks::NeighborhoodKind::sudoku);
            const QueryStats s = query_stats(p, q, nbr, violated);
            AttentionStatRow r = blank_row(puzzle_id, c, layer, q);
            r.cls = touches(nbr, violated) ? QueryClass::adjacent : QueryClass::control;
            r.d_nbr = s.d_mass;
            r.d_ent = s.d_ent;
            r.d_viol = s.d_viol;
            if (s.control_eligible) r.d_rho_viol = s.d_rho_viol;
            rows.push_back(r);
        }
    });
    return rows;
}

std::vector<AttentionStatRow> maze_attention_contrasts(const RolloutTrace& trace, std::size_t b,
                                                       const PuzzleInstance& puzzle, std::size_t puzzle_id) {
    if (puzzle.kind != tasks::TaskKind::maze) throw std::invalid_argument("maze_attention_contrasts: not a maze");
    check_trace_puzzle(trace, b, puzzle);
    const tasks::BoardGeometry geo(puzzle.kind, puzzle.side);
    const auto queries = query_cells(puzzle);
    std::vector<AttentionStatRow> rows;
    std::size_t cached_cycle = SIZE_MAX;
    std::vector<char> violated;
    for_each_capture(trace, b, puzzle.cells(), [&](std::size_t c, std::size_t layer, const LayerPair& p) {
        if (c != cached_cycle) {
            violated = violation_flags(puzzle, grid_at_cycle_entry(trace, b, c));
            cached_cycle = c;
        }
        for (int q : queries) {
            const auto& n4 = geo.neighborhood(q, tasks::NeighborhoodKind::n4);
            const QueryStats s = query_stats(p, q, n4, violated);
            AttentionStatRow r = blank_row(puzzle_id, c, layer, q);
            r.cls = touches(n4, violated) ? QueryClass::adjacent : QueryClass::control;
            r.d_rho4 = s.d_mass / static_cast<double>(n4.size());
            r.d_rho8 = density_contrast(p, q, geo.neighborhood(q, tasks::NeighborhoodKind::n8));
            r.d_rho5x5 = density_contrast(p, q, geo.neighborhood(q, tasks::NeighborhoodKind::n5x5));
            r.d_ent = s.d_ent;
            r.d_viol = s.d_viol;
            if (s.control_eligible) r.d_rho_viol = s.d_rho_viol;
            rows.push_back(r);
        }
    });
    return rows;
}

std::vector<ControlValue> within_neighborhood_control(const RolloutTrace& trace, std::size_t b,
                                                      const PuzzleInstance& puzzle, tasks::NeighborhoodKind kind) {
    const bool ok = puzzle.kind == tasks::TaskKind::sudoku ? kind == tasks::NeighborhoodKind::sudoku
                                                           : kind == tasks::NeighborhoodKind::n4;
    if (!ok)
        throw std::invalid_argument("within_neighborhood_control: neighborhood " + std::string(tasks::to_string(kind)) +
                                    " does not apply to " + std::string(tasks::to_string(puzzle.kind)));
    check_trace_puzzle(trace, b, puzzle);
    const tasks::BoardGeometry geo(puzzle.kind, puzzle.side);
    const auto queries = query_cells(puzzle);
    std::vector<ControlValue> out;
    std::size_t cached_cycle = SIZE_MAX;
    std::vector<char> violated;
    for_each_capture(trace, b, puzzle.cells(), [&](std::size_t c, std::size_t layer, const LayerPair& p) {
        if (c != cached_cycle) {
            violated = violation_flags(puzzle, grid_at_cycle_entry(trace, b, c));
            cached_cycle = c;
        }
        for (int q : queries) {
            const QueryStats s = query_stats(p, q, geo.neighborhood(q, kind), violated);
            if (s.control_eligible) out.push_back({layer, c, q, s.d_rho_viol});
        }
    });
    return out;
}

// ---- committedness ---------------------------------------------------------

nlohmann::json CommittednessProfile::to_json() const {
    return {{"undecided_H", undecided_H}, {"undecided_L", undecided_L}, {"shift_L", shift_L}};
}

std::size_t count_undecided(std::span<const int> grid, int undecided) {
    return static_cast<std::size_t>(std::count(grid.begin(), grid.end(), undecided));
}

CommittednessProfile committedness_profile(const RolloutTrace& trace, std::size_t b, int undecided) {
    if (b >= trace.batch) throw std::out_of_range("committedness_profile: batch row out of range");
    const std::size_t cells = trace.cells;
    CommittednessProfile p;
    p.undecided_H.push_back(count_undecided(row_of(trace.initial_H, b, cells), undecided));
    if (!trace.single_state) p.undecided_L.push_back(count_undecided(row_of(trace.initial_L, b, cells), undecided));
    // L-update grids: z_L after each L sub-step (single-state: the state after L-level sub-steps).
    std::vector<std::vector<int>> l_grids{row_of(trace.single_state ? trace.initial_H : trace.initial_L, b, cells)};
    for (const auto& s : trace.steps) {
        const auto h = row_of(s.grid_H, b, cells);
        p.undecided_H.push_back(count_undecided(h, undecided));
        if (!trace.single_state) p.undecided_L.push_back(count_undecided(row_of(s.grid_L, b, cells), undecided));
        if (s.level == Level::L && !s.skipped) l_grids.push_back(trace.single_state ? h : row_of(s.grid_L, b, cells));
    }
    for (std::size_t t = 1; t < l_grids.size(); ++t) {
        std::size_t shift = 0;
        for (std::size_t i = 0; i < cells; ++i)
            shift += (l_grids[t][i] == undecided) != (l_grids[t - 1][i] == undecided);
        p.shift_L.push_back(shift);
    }
    return p;
}

// ---- aggregation -----------------------------------------------------------

const std::vector<std::string>& metric_names(tasks::TaskKind kind) {
    static const std::vector<std::string> sudoku{"d_nbr", "d_ent", "d_viol", "d_rho_viol"};
    static const std::vector<std::string> maze{"d_rho4", "d_rho8", "d_rho5x5", "d_ent", "d_viol", "d_rho_viol"};
    return kind == tasks::TaskKind::sudoku ? sudoku : maze;
}

double metric_value(const AttentionStatRow& r, const std::string& metric) {
    if (metric == "d_nbr") return r.d_nbr;
    if (metric == "d_ent") return r.d_ent;
    if (metric == "d_viol") return r.d_viol;
    if (metric == "d_rho4") return r.d_rho4;
    if (metric == "d_rho8") return r.d_rho8;
    if (metric == "d_rho5x5") return r.d_rho5x5;
    if (metric == "d_rho_viol") return r.d_rho_viol;
    throw std::invalid_argument("unknown metric '" + metric + "'");
}

std::pair<double, double> mean_ci95(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_ci95: no values");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

std::vector<SummaryRow> aggregate_report(const std::vector<AttentionStatRow>& rows, tasks::TaskKind kind) {
    std::set<std::size_t> layers;
    for (const auto& r : rows) layers.insert(r.layer);
    std::vector<SummaryRow> out;
    for (const auto& metric : metric_names(kind)) {
        for (QueryClass cls : {QueryClass::adjacent, QueryClass::control}) {
            for (std::size_t layer : layers) {
                std::map<std::size_t, std::pair<double, std::size_t>> per_puzzle;
                for (const auto& r : rows) {
                    if (r.cls != cls || r.layer != layer) continue;
                    const double v = metric_value(r, metric);
                    if (std::isnan(v)) continue;
                    auto& acc = per_puzzle[r.puzzle];
                    acc.first += v;
                    ++acc.second;
                }
                SummaryRow s{std::string(to_string(cls, kind)), layer, metric, kNaN, kNaN, per_puzzle.size(), ""};
                if (per_puzzle.empty()) {
                    s.note = "warning: empty group";
                } else {
                    std::vector<double> means;
                    for (const auto& [id, acc] : per_puzzle) means.push_back(acc.first / static_cast<double>(acc.second));
                    std::tie(s.mean, s.ci95) = mean_ci95(means);
                    if (s.n == 1) s.note = "n=1";
                }
                out.push_back(s);
            }
        }
    }
    return out;
}

std::string fmt6(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string rows_csv(const std::vector<AttentionStatRow>& rows, tasks::TaskKind kind) {
    std::string s = "puzzle,class,layer,cycle,query,d_nbr,d_ent,d_viol,d_rho4,d_rho8,d_rho5x5,d_rho_viol\n";
    for (const auto& r : rows) {
        s += std::to_string(r.puzzle) + "," + std::string(to_string(r.cls, kind)) + "," + std::to_string(r.layer) + "," +
             std::to_string(r.cycle) + "," + std::to_string(r.query);
        for (double v : {r.d_nbr, r.d_ent, r.d_viol, r.d_rho4, r.d_rho8, r.d_rho5x5, r.d_rho_viol}) s += "," + fmt6(v);
        s += "\n";
    }
    return s;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string s = "class,layer,metric,mean,ci95,n\n";
    for (const auto& r : rows)
        s += r.cls + "," + std::to_string(r.layer) + "," + r.metric + "," + fmt6(r.mean) + "," + fmt6(r.ci95) + "," +
             std::to_string(r.n) + "\n";
    return s;
}

}  // namespace air::analysis
