#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/recurrence/recurrence.hpp"
#include "air/tasks/puzzle.hpp"

namespace air::training {

using model::Model;
using recurrence::RecurrenceConfig;

enum class LossKind { stablemax, softmax };
enum class OptimizerKind { adam_atan2, adamw };

/// Piecewise-rational positive map: x + 1 for x >= 0, 1 / (1 - x) below.
double stablemax_s(double x);
/// Per-position normalised stablemax probabilities of logits [..., V].
Tensor stablemax_probs(const Tensor& logits);

/// Mean over positions of -log p(target), p from stablemax. Throws on
/// non-finite logits or target ids outside [0, V).
Var stablemax_ce(const Var& logits, std::span<const int> targets);
Var softmax_ce(const Var& logits, std::span<const int> targets);
Var cross_entropy(LossKind kind, const Var& logits, std::span<const int> targets);

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 1.0;
    std::size_t warmup_steps = 2000;
    std::size_t batch_size = 768;
    std::size_t steps = 1000;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;
    std::size_t eval_batch = 128;
    std::size_t checkpoint_every = 0;  // 0: only final and best checkpoints
    std::size_t cycles_per_step = 0;   // supervised cycles per step; 0 -> max_cycles
    bool augment = true;               // on-the-fly sudoku relabelling
    LossKind loss = LossKind::stablemax;
    OptimizerKind optimizer = OptimizerKind::adam_atan2;
    double atan2_a = 1.0;  // update = a * atan2(m_hat, b * sqrt(v_hat))
    double atan2_b = 1.0;
    double adamw_eps = 1e-8;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct OptimizerState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

/// One optimizer step over `params` using their accumulated gradients
/// (missing gradients count as zero). Decoupled weight decay
/// theta <- theta (1 - lr_t wd) is applied before the moment update.
void adam_atan2_step(const std::vector<Var>& params, OptimizerState& state, const TrainConfig& cfg, double lr_t);

/// Linear warmup to cfg.lr over warmup_steps, then constant. step >= 1.
double lr_schedule(const TrainConfig& cfg, std::size_t step);

/// Fraction of puzzles whose predictions equal their targets at every cell.
double exact_match(const std::vector<std::vector<int>>& predictions, const std::vector<tasks::PuzzleInstance>& data);
double evaluate_exact_match(const Model& m, const std::vector<tasks::PuzzleInstance>& data, const RecurrenceConfig& cfg,
                            std::size_t batch_size = 128);

struct MetricRow {
    std::size_t step;
    double loss;
    double exact_match;
    double lr;
};

struct TrainResult {
    std::vector<MetricRow> metrics;
    double peak_exact_match = 0.0;
    std::size_t peak_step = 0;
    double final_exact_match = 0.0;
    std::size_t steps = 0;
    double seconds = 0.0;
};

/// Per-step losses of every supervised cycle (exposed for tests).
struct StepOutcome {
    std::vector<double> cycle_losses;
};

/// One training step: every supervised cycle runs the truncated schedule,
/// its z_H is decoded and scored, gradients accumulate with weight
/// 1/cycles, and both states are detached before the next cycle. The
/// optimizer is not stepped. `cycle_weights`, when given, replaces the
/// uniform weights.
StepOutcome accumulate_step_gradients(const Model& m, const std::vector<tasks::PuzzleInstance>& batch,
                                      const RecurrenceConfig& rcfg, std::size_t cycles, LossKind loss,
                                      const std::vector<double>& cycle_weights = {});

struct TrainHooks {
    std::function<void(const MetricRow&)> on_eval;
};

/// Runs cfg.steps optimizer steps. When `out_dir` is non-empty, writes
/// metrics.csv, checkpoint/ (final) and best/ (peak eval). A non-finite
/// loss saves diagnostic/ and throws std::runtime_error.
TrainResult train(Model& m, const TrainConfig& cfg, const std::vector<tasks::PuzzleInstance>& train_data,
                  const std::vector<tasks::PuzzleInstance>& eval_data, const RecurrenceConfig& rcfg,
                  const std::filesystem::path& out_dir = {}, const TrainHooks& hooks = {});

std::string metrics_csv(const std::vector<MetricRow>& rows);

}  // namespace air::training
