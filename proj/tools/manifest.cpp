#include "manifest.hpp"

#include <fstream>

#include "air/tasks/sudoku.hpp"

namespace air::cli {

using nlohmann::json;

namespace {

constexpr std::string_view kClasses[] = {"adjacent", "control"};

json task_json(const TaskSpec& t) {
    return {{"kind", std::string(tasks::to_string(t.kind))},
            {"side", t.side},
            {"givens", t.givens},
            {"train_count", t.train_count},
            {"eval_count", t.eval_count},
            {"seed", t.seed},
            {"train_data", t.train_data},
            {"eval_data", t.eval_data}};
}

TaskSpec task_from(const json& j) {
    TaskSpec t;
    t.kind = tasks::parse_task_kind(j.value("kind", std::string(tasks::to_string(t.kind))));
    t.side = j.value("side", t.side);
    t.givens = j.value("givens", t.givens);
    t.train_count = j.value("train_count", t.train_count);
    t.eval_count = j.value("eval_count", t.eval_count);
    t.seed = j.value("seed", t.seed);
    t.train_data = j.value("train_data", t.train_data);
    t.eval_data = j.value("eval_data", t.eval_data);
    return t;
}

json analysis_json(const AnalysisSpec& a) {
    return {{"puzzles", a.puzzles},
            {"rollout_puzzles", a.rollout_puzzles},
            {"rollout_attention", a.rollout_attention},
            {"batch_size", a.batch_size},
            {"freeze", recurrence::to_string(a.freeze)},
            {"classes", a.classes},
            {"charts", a.charts}};
}

AnalysisSpec analysis_from(const json& j) {
    AnalysisSpec a;
    a.puzzles = j.value("puzzles", a.puzzles);
    a.rollout_puzzles = j.value("rollout_puzzles", a.rollout_puzzles);
    a.rollout_attention = j.value("rollout_attention", a.rollout_attention);
    a.batch_size = j.value("batch_size", a.batch_size);
    a.freeze = recurrence::parse_freeze_policy(j.value("freeze", recurrence::to_string(a.freeze)));
    a.classes = j.value("classes", a.classes);
    a.charts = j.value("charts", a.charts);
    return a;
}

void reject_unknown(const json& given, const json& defaults, const std::string& where) {
    if (!given.is_object()) throw ManifestError(where + " must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!defaults.contains(key)) throw ManifestError("unknown key '" + path + "'");
        if (defaults[key].is_object()) reject_unknown(value, defaults[key], path);
    }
}

}  // namespace

Manifest::Manifest() {
    // Desk defaults that differ from the library types: the model tracks
    // the task vocabulary, everything else mirrors the full-scale recipe.
    model.vocab = tasks::vocab_size(task.kind, task.side);
}

json Manifest::to_json() const {
    return {{"task", task_json(task)},
            {"model", model.to_json()},
            {"recurrence", recurrence.to_json()},
            {"train", train.to_json()},
            {"analysis", analysis_json(analysis)},
            {"output_dir", output_dir},
            {"checkpoint", checkpoint}};
}

Manifest Manifest::from_json(const json& j) {
    reject_unknown(j, Manifest().to_json(), "");
    Manifest m;
    try {
        if (j.contains("task")) m.task = task_from(j["task"]);
        if (j.contains("model")) m.model = model::ModelConfig::from_json(j["model"]);
        if (j.contains("recurrence")) m.recurrence = recurrence::RecurrenceConfig::from_json(j["recurrence"]);
        if (j.contains("train")) m.train = training::TrainConfig::from_json(j["train"]);
        if (j.contains("analysis")) m.analysis = analysis_from(j["analysis"]);
        m.output_dir = j.value("output_dir", m.output_dir);
        m.checkpoint = j.value("checkpoint", m.checkpoint);
    } catch (const json::exception& e) {
        throw ManifestError(e.what());
    } catch (const std::invalid_argument& e) {
        throw ManifestError(e.what());
    }
    m.finalize();
    return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ManifestError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

json complete_manifest_json(const json& partial) {
    json full = Manifest().to_json();
    reject_unknown(partial, full, "");
    full.merge_patch(partial);
    return full;
}

void set_path(json& j, const std::string& path, const json& value) {
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key)) throw ManifestError("unknown key '" + path + "'");
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (node->is_object()) throw ManifestError("'" + path + "' is a section, not a field");
    *node = value;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ManifestError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    set_path(j, key, value);
}

void Manifest::finalize() {
    try {
        model.vocab = tasks::vocab_size(task.kind, task.side);
        model.level_tokens = recurrence.level_token_mode != model::LevelTokenMode::none;
        model.operator_matrix = recurrence.operator_form == recurrence::OperatorForm::linear ||
                                recurrence.operator_form == recurrence::OperatorForm::nonlinear;
        model.untied = !recurrence.tied;
        model.validate();
        recurrence.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ManifestError(e.what());
    }
    if (task.kind == tasks::TaskKind::sudoku) {
        if (task.givens == 0) task.givens = task.side == 4 ? 8 : 17;
        if (task.side != 4 && task.side != 9) throw ManifestError("task.side must be 4 or 9 for sudoku");
        if (task.givens < tasks::sudoku_min_givens(task.side) || task.givens >= task.side * task.side)
            throw ManifestError("task.givens " + std::to_string(task.givens) + " out of range for side " +
                                std::to_string(task.side));
    } else if (task.side < 5) {
        throw ManifestError("task.side must be at least 5 for mazes");
    }
    if (model.rope_grid != 0 && model.rope_grid != task.side)
        throw ManifestError("model.rope_grid must be 0 or the board side " + std::to_string(task.side));
    for (auto c : recurrence.record_cycles)
        if (c >= recurrence.max_cycles)
            throw ManifestError("recurrence.record_cycles entry " + std::to_string(c) + " is not below max_cycles " +
                                std::to_string(recurrence.max_cycles));
    if (analysis.batch_size == 0) throw ManifestError("analysis.batch_size must be positive");
    for (const auto& c : analysis.classes)
        if (c != kClasses[0] && c != kClasses[1])
            throw ManifestError("analysis.classes entry '" + c + "' is not adjacent or control");
    if (analysis.freeze == recurrence::FreezePolicy::none)
        throw ManifestError("analysis.freeze must be freeze_H or freeze_L");
}

std::string variant_label(const recurrence::RecurrenceConfig& c) {
    if (c.single_state) return "single_state";
    auto part = [](const char* state, int n) {
        return std::string(state) + (n == 0 ? "" : n == 1 ? "x" : std::to_string(n) + "x");
    };
    std::string s = part("L", c.n_L) + "_" + part("H", c.n_H);
    if (c.level_token_mode != model::LevelTokenMode::none) s += "+" + model::to_string(c.level_token_mode);
    if (c.operator_form != recurrence::OperatorForm::additive) s += "+" + recurrence::to_string(c.operator_form);
    if (!c.tied) s += "+untied";
    return s;
}

}  // namespace air::cli
