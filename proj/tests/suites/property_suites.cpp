#include "suites/property_suites.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>

#include "air/analysis/analysis.hpp"
#include "air/tasks/dataset.hpp"
#include "air/tasks/geometry.hpp"
#include "air/tasks/maze.hpp"
#include "air/tasks/sudoku.hpp"
#include "air/tensor/gradcheck.hpp"
#include "air/tensor/ops.hpp"
#include "air/training/training.hpp"
#include "oracle/attention_oracle.hpp"
#include "oracle/task_oracles.hpp"

namespace air::suites {

namespace {

using model::Level;
using model::LevelTokenMode;
using model::Model;
using model::ModelConfig;
using recurrence::LatentPair;
using recurrence::OperatorForm;
using recurrence::RecurrenceConfig;
using tasks::PuzzleInstance;
using tasks::TaskKind;

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

Tensor uniform_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

std::vector<Tensor> grads_of(const Model& m) {
    std::vector<Tensor> g;
    for (const auto& p : m.parameters()) g.push_back(p.var.has_grad() ? p.var.grad() : Tensor(p.var.shape()));
    return g;
}

double max_grad_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) return INFINITY;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_abs_diff(a[i], b[i]));
    return worst;
}

ModelConfig small_model(std::size_t vocab, std::size_t d, std::size_t layers, std::size_t heads, std::uint64_t seed) {
    ModelConfig c;
    c.vocab = vocab;
    c.d_model = d;
    c.layers = layers;
    c.heads = heads;
    c.seed = seed;
    return c;
}

struct OpCase {
    std::string name;
    std::vector<Shape> shapes;
    std::function<Var(const std::vector<Var>&, std::mt19937_64&)> op;
};

}  // namespace

SuiteResult gradient_suite(std::size_t trials, std::uint64_t seed) {
    Timer timer;
    std::mt19937_64 rng(seed);
    const std::vector<double> pos{0.0, 1.0, 2.0, 5.0};
    const std::vector<double> rows{3.0, 1.0, 0.0, 2.0};
    auto ids = [](std::mt19937_64& r, std::size_t n, int vocab) {
        std::vector<int> v(n);
        for (auto& x : v) x = static_cast<int>(r() % static_cast<std::uint64_t>(vocab));
        return v;
    };
    const Model block(small_model(5, 8, 1, 2, seed));
    ModelConfig grid_cfg = small_model(5, 8, 1, 2, seed + 1);
    grid_cfg.rope_grid = 2;
    const Model grid_block(grid_cfg);

    const std::vector<OpCase> cases = {
        {"add", {{3, 4}, {3, 4}}, [](const auto& v, auto&) { return add(v[0], v[1]); }},
        {"sub", {{3, 4}, {3, 4}}, [](const auto& v, auto&) { return sub(v[0], v[1]); }},
        {"mul", {{3, 4}, {3, 4}}, [](const auto& v, auto&) { return mul(v[0], v[1]); }},
        {"scale", {{3, 4}}, [](const auto& v, auto&) { return scale(v[0], -1.7); }},
        {"tanh", {{3, 4}}, [](const auto& v, auto&) { return tanh(v[0]); }},
        {"gelu", {{3, 4}}, [](const auto& v, auto&) { return gelu(v[0]); }},
        {"silu", {{3, 4}}, [](const auto& v, auto&) { return silu(v[0]); }},
        {"add_row", {{2, 3, 4}, {4}}, [](const auto& v, auto&) { return add_row(v[0], v[1]); }},
        {"broadcast_rows", {{4}}, [](const auto& v, auto&) { return broadcast_rows(v[0], 2, 3); }},
        {"matmul", {{2, 3, 4}, {4, 5}}, [](const auto& v, auto&) { return matmul(v[0], v[1]); }},
        {"bmm", {{2, 3, 4}, {2, 4, 5}}, [](const auto& v, auto&) { return bmm(v[0], v[1]); }},
        {"bmm_nt", {{2, 3, 4}, {2, 5, 4}}, [](const auto& v, auto&) { return bmm_nt(v[0], v[1]); }},
        {"softmax_last", {{3, 6}}, [](const auto& v, auto&) { return softmax_last(v[0]); }},
        {"rms_norm", {{3, 6}, {6}}, [](const auto& v, auto&) { return rms_norm(v[0], v[1]); }},
        {"layer_norm", {{3, 6}, {6}}, [](const auto& v, auto&) { return layer_norm(v[0], v[1]); }},
        {"embedding", {{4, 3}},
         [&](const auto& v, auto& r) { return embedding(ids(r, 6, 4), {2, 3}, v[0]); }},
        {"rope", {{2, 4, 6}}, [&](const auto& v, auto&) { return rope(v[0], pos); }},
        {"rope_axial", {{2, 4, 8}}, [&](const auto& v, auto&) { return rope_axial(v[0], pos, rows); }},
        {"concat_seq", {{2, 3, 4}, {2, 1, 4}}, [](const auto& v, auto&) { return concat_seq(v[0], v[1]); }},
        {"slice_seq", {{2, 5, 3}}, [](const auto& v, auto&) { return slice_seq(v[0], 1, 3); }},
        {"split_heads", {{2, 3, 8}}, [](const auto& v, auto&) { return split_heads(v[0], 2); }},
        {"merge_heads", {{4, 3, 2}}, [](const auto& v, auto&) { return merge_heads(v[0], 2); }},
        {"sum", {{3, 4}}, [](const auto& v, auto&) { return sum(v[0]); }},
        {"mean", {{3, 4}}, [](const auto& v, auto&) { return mean(v[0]); }},
        {"stablemax_ce", {{2, 3, 5}},
         [&](const auto& v, auto& r) { return training::stablemax_ce(v[0], ids(r, 6, 5)); }},
        {"softmax_ce", {{2, 3, 5}},
         [&](const auto& v, auto& r) { return training::softmax_ce(v[0], ids(r, 6, 5)); }},
        {"attention_block", {{1, 4, 8}}, [&](const auto& v, auto&) { return block.core_forward(v[0], Level::L); }},
        {"attention_block_axial", {{1, 4, 8}},
         [&](const auto& v, auto&) { return grid_block.core_forward(v[0], Level::L); }},
    };

    SuiteResult r;
    r.name = "gradients";
    double worst = 0.0;
    std::string worst_op;
    std::size_t checks = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        for (const auto& c : cases) {
            std::vector<Tensor> inputs;
            for (const auto& s : c.shapes) inputs.push_back(uniform_tensor(s, rng, -2.0, 2.0));
            // Draw the op's own randomness once so every evaluation sees the same ids.
            const std::uint64_t op_seed = rng();
            auto apply = [&](const std::vector<Var>& v) {
                std::mt19937_64 op_rng(op_seed);
                return c.op(v, op_rng);
            };
            std::vector<Var> probe;
            for (const auto& t : inputs) probe.emplace_back(t);
            const Shape out_shape = apply(probe).shape();
            const Tensor weights = uniform_tensor(out_shape, rng, -1.0, 1.0);
            const auto g = gradcheck([&](const std::vector<Var>& v) { return sum(mul(apply(v), Var(weights))); },
                                     inputs, 1e-5);
            ++checks;
            if (g.max_rel_error > worst || !std::isfinite(g.max_rel_error)) {
                worst = std::isfinite(g.max_rel_error) ? g.max_rel_error : INFINITY;
                worst_op = c.name;
            }
            auto& per_op = r.data["per_op"][c.name];
            per_op = std::max(per_op.is_number() ? per_op.get<double>() : 0.0, g.max_rel_error);
        }
    }
    r.seconds = timer.seconds();
    r.passed = worst < 1e-4 && r.seconds < 60.0;
    r.detail = std::to_string(cases.size()) + " ops x " + std::to_string(trials) + " trials, max rel err " + sci(worst) +
               " (" + worst_op + "), " + sci(r.seconds) + " s; need < 1e-4 and < 60 s";
    r.data["checks"] = checks;
    r.data["worst"] = worst;
    return r;
}

SuiteResult truncation_suite(std::uint64_t seed) {
    Timer timer;
    SuiteResult r;
    r.name = "truncated gradient";
    double worst_grad = 0.0;
    bool bitwise = true;

    // Cycle-level: scheduled gradients against an explicit final L, H graph.
    for (auto [n_L, n_H] : {std::pair{1, 0}, std::pair{2, 1}, std::pair{0, 2}}) {
        Model m(small_model(5, 16, 2, 2, seed));
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(n_L * 3 + n_H));
        std::vector<int> tok(6);
        for (auto& t : tok) t = static_cast<int>(rng() % 5);
        RecurrenceConfig c;
        c.n_L = n_L;
        c.n_H = n_H;
        auto grads = [&](bool manual) {
            for (auto& p : m.parameters()) p.var.zero_grad();
            const Var x = m.encode(tok, 1);
            LatentPair s = recurrence::init_latents(m, 1, 6);
            Var out;
            if (!manual) {
                out = recurrence::run_cycle(m, s, x, c, 0, true).z_H;
            } else {
                {
                    NoGradGuard g;
                    for (std::size_t k = 0; k < 4; ++k)
                        s = k == 2 ? recurrence::h_update(m, s, x, c) : recurrence::l_update(m, s, x, c);
                }
                const Var zl0 = detach(s.z_L), zh0 = detach(s.z_H);
                const Var zl = m.core_forward(add(add(zl0, zh0), scale(x, n_L)), Level::L);
                out = m.core_forward(add(add(zh0, zl), scale(x, n_H)), Level::H);
            }
            backward(mean(m.head_logits(out)));
            return grads_of(m);
        };
        worst_grad = std::max(worst_grad, max_grad_diff(grads(false), grads(true)));
    }

    // Training-level: one supervised live cycle inside a multi-cycle step.
    {
        Model m(small_model(5, 16, 2, 2, seed + 10));
        const auto batch = tasks::generate_dataset({TaskKind::sudoku, 4, 3, 10, seed + 10});
        RecurrenceConfig c;
        const std::size_t cycles = 4, live = 2;
        std::vector<double> w(cycles, 0.0);
        w[live] = 1.0;
        for (auto& p : m.parameters()) p.var.zero_grad();
        training::accumulate_step_gradients(m, batch, c, cycles, training::LossKind::stablemax, w);
        const auto scheduled = grads_of(m);
        for (auto& p : m.parameters()) p.var.zero_grad();
        std::vector<int> inputs, targets;
        for (const auto& p : batch) {
            inputs.insert(inputs.end(), p.input.begin(), p.input.end());
            targets.insert(targets.end(), p.target.begin(), p.target.end());
        }
        const Var x = m.encode(inputs, batch.size());
        LatentPair s = recurrence::init_latents(m, batch.size(), 16);
        {
            NoGradGuard g;
            for (std::size_t k = 0; k < live; ++k) s = recurrence::run_cycle(m, s, x, c, k, false);
            s = recurrence::l_update(m, s, x, c);
            s = recurrence::l_update(m, s, x, c);
            s = recurrence::h_update(m, s, x, c);
            s = recurrence::l_update(m, s, x, c);
        }
        const Var zl0 = detach(s.z_L), zh0 = detach(s.z_H);
        const Var zl = m.core_forward(add(add(zl0, zh0), x), Level::L);
        const Var zh = m.core_forward(add(zh0, zl), Level::H);
        backward(training::stablemax_ce(m.head_logits(zh), targets));
        worst_grad = std::max(worst_grad, max_grad_diff(scheduled, grads_of(m)));
    }

    // Forward: truncation boundaries and explicit detaches change no value.
    {
        Model m(small_model(5, 16, 2, 2, seed + 20));
        std::mt19937_64 rng(seed + 20);
        const Var x(uniform_tensor({2, 9, 16}, rng, -1.0, 1.0), true);
        RecurrenceConfig c;
        LatentPair a = recurrence::init_latents(m, 2, 9), b = a;
        for (std::size_t k = 0; k < 4; ++k) {
            a = recurrence::run_cycle(m, a, x, c, k, true);
            b = recurrence::run_cycle(m, b, x, c, k, false);
            bitwise &= a.z_H.value() == b.z_H.value() && a.z_L.value() == b.z_L.value();
            a = {detach(a.z_H), detach(a.z_L)};
        }
    }

    r.seconds = timer.seconds();
    r.passed = worst_grad <= 1e-10 && bitwise;
    r.detail = "max |grad diff| " + sci(worst_grad) + " (need <= 1e-10), forward bitwise " +
               (bitwise ? "identical" : "DIFFERENT");
    r.data = {{"max_grad_diff", worst_grad}, {"forward_bitwise", bitwise}};
    return r;
}

SuiteResult config_grid_suite(std::size_t d_model, std::uint64_t seed) {
    Timer timer;
    SuiteResult r;
    r.name = "config grid";
    struct Variant {
        std::string label;
        int n_L, n_H, delta;
        OperatorForm op = OperatorForm::additive;
        LevelTokenMode mode = LevelTokenMode::none;
        bool single = false;
        bool tied = true;
    };
    const std::vector<Variant> variants = {
        {"L_Hx", 0, 1, 1},
        {"Lx_H", 1, 0, 1},
        {"L_H2x", 0, 2, 2},
        {"L2x_H", 2, 0, 2},
        {"Lx_H2x", 1, 2, 1},
        {"L2x_Hx", 2, 1, 1},
        {"Lx_Hx", 1, 1, 0},
        {"L2x_H2x", 2, 2, 0},
        {"L2x_H2x+addition", 2, 2, 0, OperatorForm::additive, LevelTokenMode::addition},
        {"L2x_H2x+prepend_strip", 2, 2, 0, OperatorForm::additive, LevelTokenMode::prepend_strip},
        {"L2x_H2x+prepend_no_strip", 2, 2, 0, OperatorForm::additive, LevelTokenMode::prepend_no_strip},
        {"Lx_H+linear", 1, 0, 1, OperatorForm::linear},
        {"Lx_H+nonlinear", 1, 0, 1, OperatorForm::nonlinear},
        {"Lx_H+sign_flip", 1, 0, 1, OperatorForm::sign_flip},
        {"Lx_H+hadamard", 1, 0, 1, OperatorForm::hadamard},
        {"single_state", 1, 0, 1, OperatorForm::additive, LevelTokenMode::none, true},
        {"Lx_H+untied", 1, 0, 1, OperatorForm::additive, LevelTokenMode::none, false, false},
    };
    const PuzzleInstance p = tasks::generate_instance({TaskKind::sudoku, 9, 1, 17, seed}, 0);
    const std::size_t S = p.cells();
    std::vector<std::string> failures;
    for (const auto& v : variants) {
        std::vector<std::string> bad;
        try {
            ModelConfig mc = small_model(tasks::vocab_size(p.kind, p.side), d_model, 2, 8, seed);
            mc.level_tokens = v.mode != LevelTokenMode::none;
            mc.operator_matrix = v.op == OperatorForm::linear || v.op == OperatorForm::nonlinear;
            mc.untied = !v.tied;
            const Model m(mc);
            RecurrenceConfig c;
            c.n_L = v.n_L;
            c.n_H = v.n_H;
            c.operator_form = v.op;
            c.level_token_mode = v.mode;
            c.single_state = v.single;
            c.tied = v.tied;
            c.validate();
            c.check_model(m);
            if (c.delta() != v.delta) bad.push_back("delta " + std::to_string(c.delta()));
            const auto tr = v.single ? recurrence::single_state_rollout(m, p.input, 1, c, {true, true})
                                     : recurrence::run_rollout(m, p.input, 1, c, {true, true});
            if (tr.steps.size() != c.total_substeps()) bad.push_back("sub-steps " + std::to_string(tr.steps.size()));
            for (const auto& s : tr.steps) {
                if (s.grid_H.size() != S || s.grid_L.size() != (v.single ? 0 : S)) {
                    bad.push_back("decoded length at t=" + std::to_string(s.t));
                    break;
                }
            }
            if (tr.final_tokens.size() != S) bad.push_back("final length");
            const std::size_t prefix = v.mode == LevelTokenMode::prepend_strip || v.mode == LevelTokenMode::prepend_no_strip;
            if (tr.attention.size() != 2 * c.record_cycles.size()) bad.push_back("attention records");
            for (const auto& a : tr.attention)
                for (const auto& t : a.layers)
                    if (t.shape() != Shape{1, 8, S + prefix, S + prefix}) bad.push_back("attention shape");
            if (!v.single) {
                const std::size_t expect = v.mode == LevelTokenMode::prepend_no_strip ? S + 1 : S;
                bool lengths_ok = true;
                const Var x = m.encode(p.input, 1);
                LatentPair s = recurrence::init_latents(m, 1, S);
                NoGradGuard g;
                for (std::size_t k = 0; k < 2; ++k)
                    s = recurrence::run_cycle(m, s, x, c, k, true, [&](const recurrence::SubStepEvent& e) {
                        const std::size_t written = e.level == Level::L ? e.states.z_L.dim(1) : e.states.z_H.dim(1);
                        lengths_ok &= written == expect;
                    });
                if (!lengths_ok) bad.push_back("state length");
            }
        } catch (const std::exception& e) {
            bad.push_back(std::string("threw: ") + e.what());
        }
        r.data["variants"][v.label] = bad.empty() ? "ok" : bad.front();
        if (!bad.empty()) failures.push_back(v.label + ": " + bad.front());
    }
    r.seconds = timer.seconds();
    r.passed = failures.empty() && r.seconds < 120.0;
    r.detail = std::to_string(variants.size()) + " variants at D=" + std::to_string(d_model) + ", " +
               std::to_string(variants.size() - failures.size()) + " ok, " + sci(r.seconds) + " s (need < 120 s)";
    if (!failures.empty()) r.detail += "; first failure " + failures.front();
    return r;
}

SuiteResult attention_oracle_suite(std::size_t tensors, std::uint64_t seed) {
    Timer timer;
    SuiteResult r;
    r.name = "attention oracle";
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    bool control_zero = true, entropy_exact = true;
    std::size_t rows_checked = 0, controls_checked = 0;

    for (std::size_t n : {81u, 900u}) {
        entropy_exact &= analysis::normalized_entropy(std::vector<double>(n, 1.0 / static_cast<double>(n))) == 1.0;
        entropy_exact &= analysis::normalized_entropy(std::vector<double>(n, 0.37)) == 1.0;
    }

    auto check_trace = [&](const std::vector<PuzzleInstance>& ps, const recurrence::RolloutTrace& tr) {
        const bool sudoku = ps.front().kind == TaskKind::sudoku;
        for (std::size_t b = 0; b < ps.size(); ++b) {
            const auto got = sudoku ? analysis::sudoku_attention_contrasts(tr, b, ps[b], b)
                                    : analysis::maze_attention_contrasts(tr, b, ps[b], b);
            const auto want = oracle::stat_rows(tr, b, ps[b], b);
            worst = std::max(worst, oracle::max_row_error(got, want));
            rows_checked += got.size();
            for (const auto& row : got)
                if (row.cls == analysis::QueryClass::control) control_zero &= row.d_viol == 0.0;
            const auto ctl = analysis::within_neighborhood_control(
                tr, b, ps[b], sudoku ? tasks::NeighborhoodKind::sudoku : tasks::NeighborhoodKind::n4);
            std::size_t i = 0;
            for (const auto& w : want) {
                if (std::isnan(w.d_rho_viol)) continue;
                if (i >= ctl.size() || ctl[i].query != w.query || ctl[i].layer != w.layer || ctl[i].cycle != w.cycle) {
                    worst = INFINITY;
                    break;
                }
                worst = std::max(worst, std::abs(ctl[i].value - w.d_rho_viol));
                ++i, ++controls_checked;
            }
            if (i != ctl.size()) worst = INFINITY;
        }
    };

    const std::size_t cycles = 2, layers = 2;
    const std::size_t per_trace = cycles * 2 * layers;

    // Sudoku board: 9x9 with varying givens.
    std::vector<PuzzleInstance> sudokus;
    for (std::size_t i = 0; i < 6; ++i)
        sudokus.push_back(tasks::generate_instance({TaskKind::sudoku, 9, 1, 22 + 4 * i, seed + i}, 0));
    std::size_t sudoku_tensors = 0;
    for (std::size_t t = 0; sudoku_tensors < tensors; ++t) {
        const std::vector<PuzzleInstance> ps{sudokus[t % 6], sudokus[(t + 1) % 6]};
        check_trace(ps, oracle::synthetic_trace(ps, cycles, layers, 4, t % 2, rng));
        sudoku_tensors += per_trace;
    }

    // Maze board: one 30x30 trace plus smaller clipped boards.
    std::size_t maze_tensors = 0;
    {
        const std::vector<PuzzleInstance> ps{tasks::gen_maze(30, seed)};
        check_trace(ps, oracle::synthetic_trace(ps, cycles, layers, 1, 0, rng));
        maze_tensors += per_trace;
    }
    const std::size_t sides[] = {7, 9, 11, 13, 15};
    for (std::size_t t = 0; maze_tensors < tensors; ++t) {
        const std::size_t side = sides[t % 5];
        const std::vector<PuzzleInstance> ps{tasks::gen_maze(side, seed + 2 * t), tasks::gen_maze(side, seed + 2 * t + 1)};
        check_trace(ps, oracle::synthetic_trace(ps, cycles, layers, 2, t % 2, rng));
        maze_tensors += per_trace;
    }

    r.seconds = timer.seconds();
    r.passed = worst <= 1e-12 && control_zero && entropy_exact && controls_checked > 0;
    r.detail = std::to_string(sudoku_tensors) + " sudoku + " + std::to_string(maze_tensors) +
               " maze tensors, max |diff| " + sci(worst) + " (need <= 1e-12) over " + std::to_string(rows_checked) +
               " rows and " + std::to_string(controls_checked) + " controls; uniform entropy " +
               (entropy_exact ? "exactly 1" : "NOT 1");
    r.data = {{"max_abs_diff", worst},       {"rows", rows_checked},       {"controls", controls_checked},
              {"sudoku_tensors", sudoku_tensors}, {"maze_tensors", maze_tensors}, {"control_dviol_zero", control_zero},
              {"uniform_entropy_exact", entropy_exact}};
    return r;
}

SuiteResult geometry_suite(std::uint64_t seed) {
    Timer timer;
    SuiteResult r;
    r.name = "geometry";
    std::size_t unique4 = 0, unique9 = 0, maze_ok = 0, nbr_ok = 0;
    auto consistent = [](const PuzzleInstance& p) {
        for (std::size_t i = 0; i < p.cells(); ++i) {
            if (p.input[i] != 0 && p.input[i] != p.target[i]) return false;
            if (p.target[i] == 0 || !oracle::digit_fits(p.target, p.side, i, p.target[i])) return false;
        }
        return true;
    };
    for (std::size_t i = 0; i < 100; ++i) {
        const auto p = tasks::generate_instance({TaskKind::sudoku, 4, 100, 8, seed}, i);
        unique4 += oracle::brute_count(p.input, 4, 3) == 1 && consistent(p);
    }
    for (std::size_t i = 0; i < 10; ++i) {
        const auto p = tasks::generate_instance({TaskKind::sudoku, 9, 10, 17, seed + 1}, i);
        unique9 += oracle::count_solutions(p.input, 9, 2) == 1 && consistent(p);
    }
    for (std::size_t i = 0; i < 100; ++i) {
        const auto p = tasks::generate_instance({TaskKind::maze, 30, 100, 0, seed + 2}, i);
        int s = -1, g = -1;
        for (std::size_t c = 0; c < p.cells(); ++c) {
            if (p.input[c] == tasks::maze_token::start) s = static_cast<int>(c);
            if (p.input[c] == tasks::maze_token::goal) g = static_cast<int>(c);
        }
        if (s < 0 || g < 0) continue;
        const int dist = oracle::bfs_distance(p.input, 30, s, g);
        std::vector<int> path_only(p.cells(), tasks::maze_token::wall);
        long marked = 0;
        for (std::size_t c = 0; c < p.cells(); ++c) {
            const int t = p.target[c];
            marked += t == tasks::maze_token::solution;
            if (t == tasks::maze_token::solution || t == tasks::maze_token::start || t == tasks::maze_token::goal)
                path_only[c] = tasks::maze_token::open;
        }
        maze_ok += dist > 0 && marked + 1 == dist && oracle::bfs_distance(path_only, 30, s, g) == dist;
    }
    const tasks::BoardGeometry board(TaskKind::sudoku, 9);
    for (int q = 0; q < 81; ++q) {
        const auto& n = board.neighborhood(q, tasks::NeighborhoodKind::sudoku);
        nbr_ok += n.size() == 20 && n == oracle::hood(oracle::Hood::sudoku, 9, q);
    }
    r.seconds = timer.seconds();
    r.passed = unique4 == 100 && unique9 == 10 && maze_ok == 100 && nbr_ok == 81;
    r.detail = "unique 4x4 " + std::to_string(unique4) + "/100, unique 9x9 " + std::to_string(unique9) +
               "/10, maze paths = BFS " + std::to_string(maze_ok) + "/100, |N(q)|=20 " + std::to_string(nbr_ok) + "/81";
    r.data = {{"unique4", unique4}, {"unique9", unique9}, {"maze_ok", maze_ok}, {"neighborhood_ok", nbr_ok}};
    return r;
}

SuiteResult freeze_suite(std::uint64_t seed) {
    Timer timer;
    SuiteResult r;
    r.name = "freeze";
    const auto data = tasks::generate_dataset({TaskKind::sudoku, 9, 3, 30, seed});
    const Model m(small_model(10, 32, 2, 4, seed));
    std::vector<std::string> bad;
    for (auto which : {recurrence::FreezePolicy::freeze_H, recurrence::FreezePolicy::freeze_L}) {
        const Level frozen = which == recurrence::FreezePolicy::freeze_H ? Level::H : Level::L;
        const std::string tag = recurrence::to_string(which);
        RecurrenceConfig c;
        c.freeze = which;
        std::vector<int> tokens;
        for (const auto& p : data) tokens.insert(tokens.end(), p.input.begin(), p.input.end());
        const auto tr = recurrence::run_rollout(m, tokens, data.size(), c, {true, false});
        if (tr.steps.size() != 96) bad.push_back(tag + ": " + std::to_string(tr.steps.size()) + " sub-steps");
        const std::vector<int>& initial = frozen == Level::H ? tr.initial_H : tr.initial_L;
        for (const auto& s : tr.steps) {
            if ((frozen == Level::H ? s.grid_H : s.grid_L) != initial) {
                bad.push_back(tag + ": frozen grid changed at t=" + std::to_string(s.t));
                break;
            }
        }
        const auto report = analysis::freeze_experiment(m, data, which, c);
        const auto& own = frozen == Level::H ? report.frozen.H : report.frozen.L;
        bool silent = own.total == 0;
        for (auto v : own.per_step) silent &= v == 0;
        if (!silent) bad.push_back(tag + ": frozen series not zero");
        const auto j = report.to_json();
        if (!j.contains("normal") || !j.contains("frozen")) bad.push_back(tag + ": report lacks a condition");
        r.data[tag] = j["active_total"];
    }
    r.seconds = timer.seconds();
    r.passed = bad.empty();
    r.detail = bad.empty() ? "freeze_H and freeze_L: frozen grid constant over 96 sub-steps, series zero, paired report"
                           : bad.front();
    return r;
}

}  // namespace air::suites
