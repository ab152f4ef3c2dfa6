#include "air/tasks/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "air/tasks/maze.hpp"
#include "air/tasks/sudoku.hpp"
#include "air/util/atomic_file.hpp"

namespace air::tasks {

PuzzleInstance generate_instance(const DatasetSpec& spec, std::size_t index) {
    const std::uint64_t seed = derive_seed(spec.seed, index);
    return spec.kind == TaskKind::sudoku ? gen_sudoku(spec.side, spec.givens, seed) : gen_maze(spec.side, seed);
}

std::vector<PuzzleInstance> generate_dataset(const DatasetSpec& spec) {
    std::vector<PuzzleInstance> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) out.push_back(generate_instance(spec, i));
    return out;
}

nlohmann::json instance_to_json(const PuzzleInstance& p, std::size_t index) {
    return {{"kind", std::string(to_string(p.kind))},
            {"side", p.side},
            {"seed", p.seed},
            {"index", index},
            {"input", p.input},
            {"target", p.target}};
}

PuzzleInstance instance_from_json(const nlohmann::json& j) {
    PuzzleInstance p;
    try {
        p.kind = parse_task_kind(j.at("kind").get<std::string>());
        p.side = j.at("side").get<std::size_t>();
        p.seed = j.value("seed", std::uint64_t{0});
        p.input = j.at("input").get<std::vector<int>>();
        p.target = j.at("target").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("dataset record: ") + e.what());
    }
    (void)encode_puzzle(p);
    return p;
}

void write_dataset_jsonl(const std::filesystem::path& path, const std::vector<PuzzleInstance>& data) {
    std::ostringstream os;
    for (std::size_t i = 0; i < data.size(); ++i) os << instance_to_json(data[i], i).dump() << '\n';
    write_text_atomic(path, os.str());
}

std::vector<PuzzleInstance> read_dataset_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset " + path.string());
    std::vector<PuzzleInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(instance_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace air::tasks
