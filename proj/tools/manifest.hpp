#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/model/model.hpp"
#include "air/recurrence/recurrence.hpp"
#include "air/tasks/puzzle.hpp"
#include "air/training/training.hpp"

namespace air::cli {

/// Invalid manifest content or override; reported with code "manifest".
class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TaskSpec {
    tasks::TaskKind kind = tasks::TaskKind::sudoku;
    std::size_t side = 9;
    std::size_t givens = 0;  // sudoku only; 0 -> 17 on 9x9, 8 on 4x4
    std::size_t train_count = 1000;
    std::size_t eval_count = 1000;
    std::uint64_t seed = 0;
    std::string train_data;  // JSONL path; empty -> generate
    std::string eval_data;
};

struct AnalysisSpec {
    std::size_t puzzles = 1000;         // eval puzzles used by freeze and attn-stats
    std::size_t rollout_puzzles = 1;    // puzzles traced by rollout
    bool rollout_attention = true;
    std::size_t batch_size = 64;
    recurrence::FreezePolicy freeze = recurrence::FreezePolicy::freeze_H;
    std::vector<std::string> classes = {"adjacent", "control"};
    bool charts = true;
};

struct Manifest {
    TaskSpec task;
    model::ModelConfig model;
    recurrence::RecurrenceConfig recurrence;
    training::TrainConfig train;
    AnalysisSpec analysis;
    std::string output_dir = "runs";
    std::string checkpoint;

    Manifest();

    /// Full JSON with every field; what gets echoed into run directories.
    nlohmann::json to_json() const;
    /// Missing fields take their defaults; unknown keys are rejected.
    static Manifest from_json(const nlohmann::json& j);
    static Manifest load(const std::filesystem::path& path);

    /// Recomputes derived model fields (vocab, level tokens, g, untied) and
    /// checks cross-section consistency.
    void finalize();
};

/// Defaults overlaid with `partial` (unknown keys rejected).
nlohmann::json complete_manifest_json(const nlohmann::json& partial);

/// Applies `path=value` with a dotted key path, e.g. `model.d_model=64`, to
/// a complete manifest JSON. The value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);
void set_path(nlohmann::json& j, const std::string& path, const nlohmann::json& value);

/// Table-style variant name, e.g. "Lx_H", "L2x_H2x+prepend_strip".
std::string variant_label(const recurrence::RecurrenceConfig& c);

}  // namespace air::cli
