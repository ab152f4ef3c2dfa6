#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "air/tasks/puzzle.hpp"

namespace air::tasks {

struct DatasetSpec {
    TaskKind kind = TaskKind::sudoku;
    std::size_t side = 4;
    std::size_t count = 100;
    std::size_t givens = 8;  // sudoku only
    std::uint64_t seed = 0;
};

/// Instance i is drawn from derive_seed(spec.seed, i), so any prefix or
/// single record can be regenerated independently.
PuzzleInstance generate_instance(const DatasetSpec& spec, std::size_t index);
std::vector<PuzzleInstance> generate_dataset(const DatasetSpec& spec);

nlohmann::json instance_to_json(const PuzzleInstance& p, std::size_t index);
PuzzleInstance instance_from_json(const nlohmann::json& j);

/// One JSON object per line: {kind, side, seed, index, input, target}.
void write_dataset_jsonl(const std::filesystem::path& path, const std::vector<PuzzleInstance>& data);
std::vector<PuzzleInstance> read_dataset_jsonl(const std::filesystem::path& path);

}  // namespace air::tasks
