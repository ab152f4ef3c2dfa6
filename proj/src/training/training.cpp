#include "air/training/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "air/tasks/sudoku.hpp"
#include "air/tensor/ops.hpp"
#include "air/util/atomic_file.hpp"

namespace air::training {

namespace {

void check_targets(const char* op, const Var& logits, std::span<const int> targets) {
    const std::size_t v = logits.dim(-1);
    if (logits.value().numel() / v != targets.size())
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(targets.size()) + " targets for logits " +
                                    shape_str(logits.shape()));
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= v)
            throw std::invalid_argument(std::string(op) + ": target id " + std::to_string(t) + " outside vocabulary");
    for (double x : logits.value().data())
        if (!std::isfinite(x)) throw std::runtime_error(std::string(op) + ": non-finite logits");
}

double stablemax_ds(double x) { return x >= 0.0 ? 1.0 : 1.0 / ((1.0 - x) * (1.0 - x)); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

double stablemax_s(double x) { return x >= 0.0 ? x + 1.0 : 1.0 / (1.0 - x); }

Tensor stablemax_probs(const Tensor& logits) {
    const std::size_t v = logits.dim(-1), rows = logits.numel() / v;
    Tensor p(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += (p[r * v + j] = stablemax_s(logits[r * v + j]));
        for (std::size_t j = 0; j < v; ++j) p[r * v + j] /= z;
    }
    return p;
}

Var stablemax_ce(const Var& logits, std::span<const int> targets) {
    check_targets("stablemax_ce", logits, targets);
    const std::size_t v = logits.dim(-1), rows = targets.size();
    const Tensor& x = logits.value();
    std::vector<double> sums(rows);
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += stablemax_s(x[r * v + j]);
        sums[r] = z;
        loss += std::log(z) - std::log(stablemax_s(x[r * v + static_cast<std::size_t>(targets[r])]));
    }
    std::vector<int> tg(targets.begin(), targets.end());
    return make_op("stablemax_ce", Tensor::scalar(loss / static_cast<double>(rows)), {logits},
                   [v, rows, sums = std::move(sums), tg = std::move(tg)](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       Tensor& g = in.grad_buffer();
                       const Tensor& x = in.value;
                       const double scale = self.grad[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < v; ++j) g[r * v + j] += scale * stablemax_ds(x[r * v + j]) / sums[r];
                           const std::size_t t = r * v + static_cast<std::size_t>(tg[r]);
                           g[t] -= scale * stablemax_ds(x[t]) / stablemax_s(x[t]);
                       }
                   });
}

Var softmax_ce(const Var& logits, std::span<const int> targets) {
    check_targets("softmax_ce", logits, targets);
    const std::size_t v = logits.dim(-1), rows = targets.size();
    const Tensor& x = logits.value();
    Tensor p(logits.shape());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = x[r * v];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, x[r * v + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < v; ++j) z += (p[r * v + j] = std::exp(x[r * v + j] - mx));
        for (std::size_t j = 0; j < v; ++j) p[r * v + j] /= z;
        loss += std::log(z) + mx - x[r * v + static_cast<std::size_t>(targets[r])];
    }
    std::vector<int> tg(targets.begin(), targets.end());
    return make_op("softmax_ce", Tensor::scalar(loss / static_cast<double>(rows)), {logits},
                   [v, rows, p = std::move(p), tg = std::move(tg)](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       Tensor& g = in.grad_buffer();
                       const double scale = self.grad[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < v; ++j) g[r * v + j] += scale * p[r * v + j];
                           g[r * v + static_cast<std::size_t>(tg[r])] -= scale;
                       }
                   });
}

Var cross_entropy(LossKind kind, const Var& logits, std::span<const int> targets) {
    return kind == LossKind::stablemax ? stablemax_ce(logits, targets) : softmax_ce(logits, targets);
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
    if (warmup_steps < 1) throw std::invalid_argument("train: warmup_steps must be at least 1");
    if (batch_size == 0 || steps == 0) throw std::invalid_argument("train: batch_size and steps must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train: betas must lie in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr", lr},
            {"betas", {beta1, beta2}},
            {"weight_decay", weight_decay},
            {"warmup_steps", warmup_steps},
            {"batch_size", batch_size},
            {"steps", steps},
            {"seed", seed},
            {"eval_every", eval_every},
            {"eval_batch", eval_batch},
            {"checkpoint_every", checkpoint_every},
            {"cycles_per_step", cycles_per_step},
            {"augment", augment},
            {"loss", loss == LossKind::stablemax ? "stablemax" : "softmax"},
            {"optimizer", optimizer == OptimizerKind::adam_atan2 ? "adam_atan2" : "adamw"},
            {"atan2_a", atan2_a},
            {"atan2_b", atan2_b},
            {"adamw_eps", adamw_eps}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    if (j.contains("betas")) {
        c.beta1 = j.at("betas").at(0);
        c.beta2 = j.at("betas").at(1);
    }
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.cycles_per_step = j.value("cycles_per_step", c.cycles_per_step);
    c.augment = j.value("augment", c.augment);
    const std::string loss = j.value("loss", std::string("stablemax"));
    if (loss != "stablemax" && loss != "softmax") throw std::invalid_argument("train: unknown loss '" + loss + "'");
    c.loss = loss == "stablemax" ? LossKind::stablemax : LossKind::softmax;
    const std::string opt = j.value("optimizer", std::string("adam_atan2"));
    if (opt != "adam_atan2" && opt != "adamw") throw std::invalid_argument("train: unknown optimizer '" + opt + "'");
    c.optimizer = opt == "adam_atan2" ? OptimizerKind::adam_atan2 : OptimizerKind::adamw;
    c.atan2_a = j.value("atan2_a", c.atan2_a);
    c.atan2_b = j.value("atan2_b", c.atan2_b);
    c.adamw_eps = j.value("adamw_eps", c.adamw_eps);
    c.validate();
    return c;
}

void adam_atan2_step(const std::vector<Var>& params, OptimizerState& state, const TrainConfig& cfg, double lr_t) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.shape());
            state.v.emplace_back(p.shape());
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_atan2_step: state/parameter count mismatch");
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - lr_t * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var p = params[i];
        Tensor& theta = p.mutable_value();
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        if (m.shape() != theta.shape()) throw std::invalid_argument("adam_atan2_step: moment shape mismatch");
        const Tensor* g = p.has_grad() ? &p.grad() : nullptr;
        for (std::size_t k = 0; k < theta.numel(); ++k) {
            const double gk = g ? (*g)[k] : 0.0;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            const double mh = m[k] / c1, vh = v[k] / c2;
            const double step = cfg.optimizer == OptimizerKind::adam_atan2
                                    ? cfg.atan2_a * std::atan2(mh, cfg.atan2_b * std::sqrt(vh))
                                    : mh / (std::sqrt(vh) + cfg.adamw_eps);
            theta[k] = theta[k] * decay - lr_t * step;
        }
    }
}

double lr_schedule(const TrainConfig& cfg, std::size_t step) {
    if (step < 1) throw std::invalid_argument("lr_schedule: step must be at least 1");
    if (step >= cfg.warmup_steps) return cfg.lr;
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

double exact_match(const std::vector<std::vector<int>>& predictions, const std::vector<tasks::PuzzleInstance>& data) {
    if (data.empty()) throw std::invalid_argument("exact_match: empty dataset");
    if (predictions.size() != data.size()) throw std::invalid_argument("exact_match: prediction count mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) correct += predictions[i] == data[i].target;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate_exact_match(const Model& m, const std::vector<tasks::PuzzleInstance>& data, const RecurrenceConfig& cfg,
                            std::size_t batch_size) {
    if (data.empty()) throw std::invalid_argument("evaluate_exact_match: empty dataset");
    std::vector<std::vector<int>> inputs;
    inputs.reserve(data.size());
    for (const auto& p : data) inputs.push_back(p.input);
    return exact_match(recurrence::predict(m, inputs, cfg, batch_size), data);
}

StepOutcome accumulate_step_gradients(const Model& m, const std::vector<tasks::PuzzleInstance>& batch,
                                      const RecurrenceConfig& rcfg, std::size_t cycles, LossKind loss,
                                      const std::vector<double>& cycle_weights) {
    if (batch.empty()) throw std::invalid_argument("train: empty batch");
    if (!cycle_weights.empty() && cycle_weights.size() != cycles)
        throw std::invalid_argument("train: cycle weight count mismatch");
    const std::size_t cells = batch.front().cells();
    std::vector<int> inputs, targets;
    for (const auto& p : batch) {
        if (p.cells() != cells) throw std::invalid_argument("train: puzzles in a batch differ in size");
        inputs.insert(inputs.end(), p.input.begin(), p.input.end());
        targets.insert(targets.end(), p.target.begin(), p.target.end());
    }
    const Var x = m.encode(inputs, batch.size());
    recurrence::LatentPair st = recurrence::init_latents(m, batch.size(), cells);
    StepOutcome out;
    for (std::size_t c = 0; c < cycles; ++c) {
        st = recurrence::run_cycle(m, st, x, rcfg, c, true);
        const Var l = cross_entropy(loss, m.head_logits(recurrence::cells_of(st.z_H, cells)), targets);
        out.cycle_losses.push_back(l.value().item());
        if (!std::isfinite(out.cycle_losses.back())) return out;
        const double w = cycle_weights.empty() ? 1.0 / static_cast<double>(cycles) : cycle_weights[c];
        if (w != 0.0) backward(scale(l, w));
        st = {detach(st.z_H), detach(st.z_L)};
    }
    return out;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::string s = "step,loss,exact_match,lr\n";
    for (const auto& r : rows)
        s += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.exact_match) + "," + fmt(r.lr) + "\n";
    return s;
}

TrainResult train(Model& m, const TrainConfig& cfg, const std::vector<tasks::PuzzleInstance>& train_data,
                  const std::vector<tasks::PuzzleInstance>& eval_data, const RecurrenceConfig& rcfg,
                  const std::filesystem::path& out_dir, const TrainHooks& hooks) {
    cfg.validate();
    rcfg.validate();
    rcfg.check_model(m);
    if (train_data.empty()) throw std::invalid_argument("train: empty training set");
    if (eval_data.empty()) throw std::invalid_argument("train: empty evaluation set");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t cycles = cfg.cycles_per_step ? cfg.cycles_per_step : rcfg.max_cycles;

    std::vector<Var> params;
    for (const auto& p : m.parameters()) params.push_back(p.var);
    OptimizerState opt;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    TrainResult result;
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    auto save = [&](const std::string& name, std::size_t step) {
        if (out_dir.empty()) return;
        m.save(out_dir / name, {{"step", step}, {"train", cfg.to_json()}, {"recurrence", rcfg.to_json()}});
    };

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        std::vector<tasks::PuzzleInstance> batch;
        batch.reserve(cfg.batch_size);
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto& p = train_data[order[cursor++]];
            if (cfg.augment && p.kind == tasks::TaskKind::sudoku) {
                batch.push_back(tasks::augment_sudoku(p, rng()));
            } else {
                batch.push_back(p);
            }
        }
        for (auto& p : params) p.zero_grad();
        const StepOutcome so = accumulate_step_gradients(m, batch, rcfg, cycles, cfg.loss);
        const double loss = std::accumulate(so.cycle_losses.begin(), so.cycle_losses.end(), 0.0) /
                            static_cast<double>(so.cycle_losses.size());
        if (!std::isfinite(loss)) {
            save("diagnostic", step);
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     (out_dir.empty() ? "" : "; diagnostic checkpoint in " + (out_dir / "diagnostic").string()));
        }
        loss_sum += loss;
        ++loss_n;
        const double lr_t = lr_schedule(cfg, step);
        adam_atan2_step(params, opt, cfg, lr_t);

        const bool eval_now = (cfg.eval_every && step % cfg.eval_every == 0) || step == cfg.steps;
        if (eval_now) {
            const double em = evaluate_exact_match(m, eval_data, rcfg, cfg.eval_batch);
            MetricRow row{step, loss_sum / static_cast<double>(loss_n), em, lr_t};
            loss_sum = 0.0;
            loss_n = 0;
            result.metrics.push_back(row);
            if (result.metrics.size() == 1 || em > result.peak_exact_match) {
                result.peak_exact_match = em;
                result.peak_step = step;
                save("best", step);
            }
            if (hooks.on_eval) hooks.on_eval(row);
            if (!out_dir.empty()) write_text_atomic(out_dir / "metrics.csv", metrics_csv(result.metrics));
        }
        if (cfg.checkpoint_every && step % cfg.checkpoint_every == 0) save("checkpoint_step" + std::to_string(step), step);
    }
    result.final_exact_match = result.metrics.back().exact_match;
    result.steps = cfg.steps;
    save("checkpoint", cfg.steps);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace air::training
