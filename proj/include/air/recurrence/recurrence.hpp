#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/model/model.hpp"

namespace air::recurrence {

using model::Level;
using model::LevelTokenMode;
using model::Model;

enum class OperatorForm { additive, linear, nonlinear, sign_flip, hadamard };
enum class FreezePolicy { none, freeze_H, freeze_L };

std::string to_string(OperatorForm v);
std::string to_string(FreezePolicy v);
OperatorForm parse_operator_form(const std::string& s);
FreezePolicy parse_freeze_policy(const std::string& s);

std::vector<std::size_t> default_record_cycles();

struct RecurrenceConfig {
    int n_L = 1;
    int n_H = 0;
    OperatorForm operator_form = OperatorForm::additive;
    LevelTokenMode level_token_mode = LevelTokenMode::none;
    bool tied = true;
    bool single_state = false;
    std::size_t C_L = 2;
    std::size_t C_H = 2;
    std::size_t max_cycles = 16;
    FreezePolicy freeze = FreezePolicy::none;
    std::size_t freeze_onset = 0;  // first cycle whose updates of the frozen state are skipped
    std::vector<std::size_t> record_cycles = default_record_cycles();

    int delta() const noexcept { return n_L > n_H ? n_L - n_H : n_H - n_L; }
    std::size_t substeps_per_cycle() const noexcept { return (C_L + 1) * C_H; }
    std::size_t total_substeps() const noexcept { return max_cycles * substeps_per_cycle(); }
    /// Update type of in-cycle sub-step `sub`.
    Level substep_level(std::size_t sub) const noexcept { return sub % (C_L + 1) == C_L ? Level::H : Level::L; }

    void validate() const;
    /// Throws when the model lacks what this configuration needs.
    void check_model(const Model& m) const;
    nlohmann::json to_json() const;
    static RecurrenceConfig from_json(const nlohmann::json& j);
};

/// The two recurrent states [B, S(+1), D]. Under prepend_no_strip a state
/// carries its level-token slot at position 0 once it has been written.
/// In single-state mode the one state lives in z_H and z_L is unused.
struct LatentPair {
    Var z_H;
    Var z_L;
};

LatentPair init_latents(const Model& m, std::size_t batch, std::size_t cells);

/// Puzzle-cell view [B, S, D] of a state (drops a level-token slot).
Var cells_of(const Var& z, std::size_t cells);

/// L-update argument over puzzle cells.
Var apply_operator_form(const Model& m, const Var& x, const Var& z_L, const Var& z_H, const RecurrenceConfig& cfg);

/// Sub-step bodies. `capture` receives the core call's attention.
LatentPair l_update(const Model& m, const LatentPair& s, const Var& x, const RecurrenceConfig& cfg,
                    model::AttentionCapture* capture = nullptr);
LatentPair h_update(const Model& m, const LatentPair& s, const Var& x, const RecurrenceConfig& cfg,
                    model::AttentionCapture* capture = nullptr);
/// Single-state step z <- f(z + a x).
LatentPair single_update(const Model& m, const LatentPair& s, const Var& x, int a, Level level,
                         const RecurrenceConfig& cfg, model::AttentionCapture* capture = nullptr);

/// Called after every sub-step of a cycle.
struct SubStepEvent {
    std::size_t cycle;
    std::size_t sub;  // index within the cycle
    Level level;
    bool skipped;     // frozen state, update not applied
    const LatentPair& states;
    const model::AttentionCapture* capture;  // set when attention was requested for this sub-step
};
using SubStepHook = std::function<void(const SubStepEvent&)>;
/// Decides per (cycle, sub) whether the core call should capture attention.
using CapturePredicate = std::function<bool(std::size_t cycle, std::size_t sub)>;

/// One cycle (L x C_L, H) x C_H. With `truncate`, every sub-step except the
/// final L and final H runs without graph recording, so gradients flow
/// through exactly two core applications. Freeze is honoured for cycles
/// at or after cfg.freeze_onset.
LatentPair run_cycle(const Model& m, const LatentPair& s, const Var& x, const RecurrenceConfig& cfg,
                     std::size_t cycle, bool truncate = true, const SubStepHook& hook = {},
                     const CapturePredicate& want_capture = {});

struct SubStepRecord {
    std::size_t t;      // global sub-step index
    std::size_t cycle;
    std::size_t sub;
    Level level;
    bool skipped;
    std::vector<int> grid_H;  // [B*S] decoded z_H after the sub-step
    std::vector<int> grid_L;  // empty in single-state mode
};

struct AttentionRecord {
    std::size_t t;
    std::size_t cycle;
    std::size_t sub;
    Level level;
    std::vector<Tensor> layers;  // [B, heads, S', S'] each
    std::size_t prefix = 0;      // leading level-token key slots
};

struct RolloutOptions {
    bool record_grids = true;
    bool record_attention = false;
};

struct RolloutTrace {
    std::size_t batch = 0;
    std::size_t cells = 0;
    bool single_state = false;
    std::vector<int> initial_H;  // decoded initial states
    std::vector<int> initial_L;
    std::vector<SubStepRecord> steps;
    std::vector<AttentionRecord> attention;
    Tensor final_logits;          // [B, S, V] from the final z_H
    std::vector<int> final_tokens;

    /// Decoded grids of `which` at its own scheduled update positions,
    /// preceded by the initial grid, for batch row `b`.
    std::vector<std::vector<int>> state_series(Level which, std::size_t b = 0) const;
    const AttentionRecord* find_attention(std::size_t cycle, Level level) const;
};

/// Inference rollout over a batch of token sequences (row-major [B*S]).
RolloutTrace run_rollout(const Model& m, const std::vector<int>& tokens, std::size_t batch, const RecurrenceConfig& cfg,
                         const RolloutOptions& opts = {});
RolloutTrace single_state_rollout(const Model& m, const std::vector<int>& tokens, std::size_t batch,
                                  const RecurrenceConfig& cfg, const RolloutOptions& opts = {});

/// Final decoded z_H for every puzzle, evaluated in chunks of `batch_size`.
std::vector<std::vector<int>> predict(const Model& m, const std::vector<std::vector<int>>& inputs,
                                      const RecurrenceConfig& cfg, std::size_t batch_size = 64);

/// trace.jsonl (one record per sub-step), attention.bin, trace_meta.json.
void write_trace(const std::filesystem::path& dir, const RolloutTrace& trace, const nlohmann::json& meta = {});
RolloutTrace read_trace(const std::filesystem::path& dir);

}  // namespace air::recurrence
