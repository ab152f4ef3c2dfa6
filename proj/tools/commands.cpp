#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "air/analysis/analysis.hpp"
#include "air/tasks/dataset.hpp"
#include "air/util/atomic_file.hpp"
#include "manifest.hpp"
#include "suites/property_suites.hpp"

namespace air::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using tasks::PuzzleInstance;
using tasks::TaskKind;

namespace {

// Eval puzzles come from their own seed stream so they never alias the
// training stream at any count.
constexpr std::uint64_t kEvalStream = 0xe7a1'0000'0000'0001ULL;
// Attention held in memory at once by attn-stats.
constexpr double kAttentionBudgetBytes = 512.0 * 1024 * 1024;

struct CodedError : std::runtime_error {
    int code;
    std::string tag;
    CodedError(int c, std::string t, const std::string& msg) : std::runtime_error(msg), code(c), tag(std::move(t)) {}
};

[[noreturn]] void usage_error(const std::string& msg) { throw CodedError(kUsage, "usage", msg); }

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

std::string fixed6(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

/// Options every subcommand shares.
struct Common {
    std::string manifest;
    std::vector<std::string> sets;
    std::string out;

    void attach(CLI::App* app) {
        app->add_option("-m,--manifest", manifest, "Manifest JSON (defaults apply to missing fields)");
        app->add_option("--set", sets, "Override a manifest field, e.g. --set model.d_model=64")->take_all();
        app->add_option("--out", out, "Output directory (default: $AIR_OUTPUT_DIR or output_dir, timestamped)");
    }
};

struct Run {
    Manifest m;
    fs::path dir;
};

/// Manifest file + flag overrides (`flag_sets` first, then --set), echoed
/// into a fresh output directory.
Run prepare(const std::string& command, const Common& common, const std::vector<std::pair<std::string, json>>& flag_sets,
            std::ostream& out, bool needs_checkpoint = false) {
    json partial = json::object();
    if (!common.manifest.empty()) {
        std::ifstream in(common.manifest);
        if (!in) throw ManifestError("cannot open " + common.manifest);
        partial = json::parse(in, nullptr, false);
        if (partial.is_discarded()) throw ManifestError(common.manifest + ": not valid JSON");
    }
    json j = complete_manifest_json(partial);
    for (const auto& [path, value] : flag_sets) set_path(j, path, value);
    for (const auto& s : common.sets) apply_override(j, s);
    // Paths are made absolute so the echoed manifest re-runs from anywhere.
    for (const char* key : {"checkpoint"}) {
        const std::string p = j[key].get<std::string>();
        if (!p.empty()) j[key] = fs::absolute(p).lexically_normal().string();
    }
    for (const char* key : {"train_data", "eval_data"}) {
        const std::string p = j["task"][key].get<std::string>();
        if (!p.empty()) j["task"][key] = fs::absolute(p).lexically_normal().string();
    }
    Run run{Manifest::from_json(j), {}};
    if (needs_checkpoint && run.m.checkpoint.empty())
        usage_error("a checkpoint is required (--checkpoint or manifest field checkpoint)");

    if (!common.out.empty()) {
        run.dir = common.out;
    } else {
        const char* env = std::getenv("AIR_OUTPUT_DIR");
        const fs::path root = env && *env ? fs::path(env) : fs::path(run.m.output_dir);
        const std::string stem = command + "_" + timestamp();
        run.dir = root / stem;
        for (int k = 2; fs::exists(run.dir); ++k) run.dir = root / (stem + "_" + std::to_string(k));
    }
    fs::create_directories(run.dir);
    write_text_atomic(run.dir / "manifest.json", run.m.to_json().dump(2) + "\n");
    out << "output: " << run.dir.string() << "\n";
    return run;
}

std::vector<PuzzleInstance> read_split(const std::string& path, const TaskSpec& t, std::size_t count) {
    auto data = tasks::read_dataset_jsonl(path);
    for (const auto& p : data)
        if (p.kind != t.kind || p.side != t.side)
            throw std::invalid_argument(path + ": records do not match task " + std::string(tasks::to_string(t.kind)) +
                                        " side " + std::to_string(t.side));
    if (data.size() > count) data.resize(count);
    return data;
}

std::vector<PuzzleInstance> train_split(const Manifest& m) {
    const TaskSpec& t = m.task;
    if (!t.train_data.empty()) return read_split(t.train_data, t, t.train_count);
    return tasks::generate_dataset({t.kind, t.side, t.train_count, t.givens, t.seed});
}

/// Distinct from every training input; a record whose input already
/// appears in the training split is skipped.
std::vector<PuzzleInstance> eval_split(const Manifest& m) {
    const TaskSpec& t = m.task;
    if (!t.eval_data.empty()) return read_split(t.eval_data, t, t.eval_count);
    std::set<std::vector<int>> seen;
    for (const auto& p : train_split(m)) seen.insert(p.input);
    const tasks::DatasetSpec spec{t.kind, t.side, t.eval_count, t.givens, tasks::derive_seed(t.seed, kEvalStream)};
    std::vector<PuzzleInstance> out;
    const std::size_t limit = 20 * t.eval_count + 1000;
    for (std::size_t i = 0; out.size() < t.eval_count; ++i) {
        if (i >= limit)
            throw std::runtime_error("could draw only " + std::to_string(out.size()) + " evaluation puzzles distinct from "
                                     "the training split; lower task.eval_count or task.train_count");
        auto p = tasks::generate_instance(spec, i);
        if (seen.insert(p.input).second) out.push_back(std::move(p));
    }
    return out;
}

std::vector<PuzzleInstance> first_n(std::vector<PuzzleInstance> v, std::size_t n) {
    if (v.size() > n) v.resize(n);
    return v;
}

model::Model load_model(const Manifest& m) {
    if (m.checkpoint.empty()) usage_error("a checkpoint is required (--checkpoint or manifest field checkpoint)");
    auto [model, extra] = model::Model::load(m.checkpoint);
    if (model.config().vocab != m.model.vocab)
        throw std::invalid_argument("checkpoint vocabulary " + std::to_string(model.config().vocab) +
                                    " does not match task vocabulary " + std::to_string(m.model.vocab));
    if (model.config().rope_grid != 0 && model.config().rope_grid != m.task.side)
        throw std::invalid_argument("checkpoint uses a " + std::to_string(model.config().rope_grid) +
                                    "-wide rotary grid but the task side is " + std::to_string(m.task.side));
    m.recurrence.check_model(model);
    return std::move(model);
}

std::vector<int> flatten_inputs(const std::vector<PuzzleInstance>& data, std::size_t begin, std::size_t end) {
    std::vector<int> tokens;
    for (std::size_t i = begin; i < end; ++i) tokens.insert(tokens.end(), data[i].input.begin(), data[i].input.end());
    return tokens;
}

recurrence::RolloutTrace rollout(const model::Model& model, const std::vector<int>& tokens, std::size_t batch,
                                 const recurrence::RecurrenceConfig& cfg, recurrence::RolloutOptions opts) {
    return cfg.single_state ? recurrence::single_state_rollout(model, tokens, batch, cfg, opts)
                            : recurrence::run_rollout(model, tokens, batch, cfg, opts);
}

// ---- subcommands -----------------------------------------------------------

struct GenDataArgs {
    Common common;
    std::string kind, split = "train";
    std::size_t side = 0, count = 0, givens = 0;
    std::uint64_t seed = 0;
    CLI::Option *o_kind{}, *o_side{}, *o_count{}, *o_givens{}, *o_seed{};
};

void gen_data(const GenDataArgs& a, std::ostream& out) {
    std::vector<std::pair<std::string, json>> sets;
    if (a.o_kind->count()) sets.emplace_back("task.kind", a.kind);
    if (a.o_side->count()) sets.emplace_back("task.side", a.side);
    if (a.o_givens->count()) sets.emplace_back("task.givens", a.givens);
    if (a.o_seed->count()) sets.emplace_back("task.seed", a.seed);
    if (a.o_count->count()) sets.emplace_back(a.split == "train" ? "task.train_count" : "task.eval_count", a.count);
    Run run = prepare("gen-data", a.common, sets, out);
    const auto data = a.split == "train" ? train_split(run.m) : eval_split(run.m);
    tasks::write_dataset_jsonl(run.dir / "data.jsonl", data);
    out << "wrote " << data.size() << " " << a.split << " records to " << (run.dir / "data.jsonl").string() << "\n";
}

struct TrainArgs {
    Common common;
    std::size_t steps = 0;
    CLI::Option* o_steps{};
};

void train(const TrainArgs& a, std::ostream& out) {
    std::vector<std::pair<std::string, json>> sets;
    if (a.o_steps->count()) sets.emplace_back("train.steps", a.steps);
    Run run = prepare("train", a.common, sets, out);
    const Manifest& m = run.m;
    const auto train_data = train_split(m);
    const auto eval_data = eval_split(m);
    model::Model model(m.model);
    out << "variant " << variant_label(m.recurrence) << ", " << model.parameter_count() << " parameters, "
        << train_data.size() << " train / " << eval_data.size() << " eval puzzles\n";
    training::TrainHooks hooks;
    hooks.on_eval = [&](const training::MetricRow& r) {
        out << "step " << r.step << " loss " << analysis::fmt6(r.loss) << " exact_match " << analysis::fmt6(r.exact_match)
            << "\n" << std::flush;
    };
    const auto result = training::train(model, m.train, train_data, eval_data, m.recurrence, run.dir, hooks);
    const json summary = {{"variant", variant_label(m.recurrence)},
                          {"n_L", m.recurrence.n_L},
                          {"n_H", m.recurrence.n_H},
                          {"delta", m.recurrence.delta()},
                          {"model_seed", m.model.seed},
                          {"train_seed", m.train.seed},
                          {"steps", result.steps},
                          {"train_puzzles", train_data.size()},
                          {"eval_puzzles", eval_data.size()},
                          {"final_exact_match", result.final_exact_match},
                          {"peak_exact_match", result.peak_exact_match},
                          {"peak_step", result.peak_step},
                          {"seconds", result.seconds}};
    write_text_atomic(run.dir / "train_summary.json", summary.dump(2) + "\n");
    out << "final exact_match " << analysis::fmt6(result.final_exact_match) << ", peak "
        << analysis::fmt6(result.peak_exact_match) << " at step " << result.peak_step << ", "
        << analysis::fmt6(result.seconds) << " s\n";
}

struct ModelArgs {
    Common common;
    std::string checkpoint;
    std::size_t puzzles = 0;
    CLI::Option *o_checkpoint{}, *o_puzzles{};

    void attach(CLI::App* app, const char* puzzles_help) {
        common.attach(app);
        o_checkpoint = app->add_option("--checkpoint", checkpoint, "Checkpoint directory (train output checkpoint/ or best/)");
        o_puzzles = app->add_option("--puzzles", puzzles, puzzles_help);
    }
    std::vector<std::pair<std::string, json>> sets(const char* puzzles_key) const {
        std::vector<std::pair<std::string, json>> s;
        if (o_checkpoint->count()) s.emplace_back("checkpoint", checkpoint);
        if (o_puzzles->count() && puzzles_key) s.emplace_back(puzzles_key, puzzles);
        return s;
    }
};

void eval(const ModelArgs& a, std::ostream& out) {
    Run run = prepare("eval", a.common, a.sets("task.eval_count"), out, true);
    const Manifest& m = run.m;
    const auto model = load_model(m);
    const auto data = eval_split(m);
    std::vector<std::vector<int>> inputs;
    for (const auto& p : data) inputs.push_back(p.input);
    const auto preds = recurrence::predict(model, inputs, m.recurrence, m.train.eval_batch);
    std::ostringstream csv;
    csv << "index,exact,cells_correct\n";
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::size_t cells = 0;
        for (std::size_t c = 0; c < data[i].cells(); ++c) cells += preds[i][c] == data[i].target[c];
        const bool exact = cells == data[i].cells();
        correct += exact;
        csv << i << "," << exact << "," << cells << "\n";
    }
    const double em = training::exact_match(preds, data);
    write_text_atomic(run.dir / "predictions.csv", csv.str());
    const json report = {{"variant", variant_label(m.recurrence)},
                         {"checkpoint", m.checkpoint},
                         {"freeze", recurrence::to_string(m.recurrence.freeze)},
                         {"puzzles", data.size()},
                         {"correct", correct},
                         {"exact_match", em}};
    write_text_atomic(run.dir / "eval.json", report.dump(2) + "\n");
    out << "exact_match " << analysis::fmt6(em) << " (" << correct << "/" << data.size() << ")\n";
}

void rollout_cmd(const ModelArgs& a, std::ostream& out) {
    Run run = prepare("rollout", a.common, a.sets("analysis.rollout_puzzles"), out, true);
    const Manifest& m = run.m;
    const auto model = load_model(m);
    const auto data = first_n(eval_split(m), m.analysis.rollout_puzzles);
    const auto tr = rollout(model, flatten_inputs(data, 0, data.size()), data.size(), m.recurrence,
                            {true, m.analysis.rollout_attention});
    recurrence::write_trace(run.dir / "trace", tr,
                            {{"variant", variant_label(m.recurrence)}, {"checkpoint", m.checkpoint}});

    const int undecided = tasks::undecided_token(m.task.kind);
    json profiles = json::array();
    std::ostringstream changes, undecided_csv;
    changes << "puzzle,state,t,changes\n";
    undecided_csv << "puzzle,t,undecided_H,undecided_L\n";
    for (std::size_t b = 0; b < data.size(); ++b) {
        const auto prof = analysis::committedness_profile(tr, b, undecided);
        profiles.push_back(prof.to_json());
        for (std::size_t t = 0; t < prof.undecided_H.size(); ++t)
            undecided_csv << b << "," << t << "," << prof.undecided_H[t] << ","
                          << (t < prof.undecided_L.size() ? std::to_string(prof.undecided_L[t]) : "") << "\n";
        for (auto level : {model::Level::H, model::Level::L}) {
            if (level == model::Level::L && tr.single_state) continue;
            const auto series = analysis::content_change_series(tr.state_series(level, b), level, undecided);
            for (std::size_t t = 0; t < series.per_step.size(); ++t)
                changes << b << "," << model::to_string(level) << "," << t + 1 << "," << series.per_step[t] << "\n";
        }
    }
    write_text_atomic(run.dir / "committedness.json", json{{"puzzles", profiles}}.dump(2) + "\n");
    write_text_atomic(run.dir / "committedness.csv", undecided_csv.str());
    write_text_atomic(run.dir / "content_change.csv", changes.str());

    // Decoded grids of the first puzzle, one block per sub-step.
    std::ostringstream text;
    const std::size_t S = data.front().cells();
    auto grid = [&](const std::vector<int>& all) { return std::vector<int>(all.begin(), all.begin() + static_cast<long>(S)); };
    text << "input\n" << tasks::render_grid(m.task.kind, m.task.side, data.front().input) << "\n";
    for (const auto& s : tr.steps) {
        text << "t=" << s.t << " cycle=" << s.cycle << " sub=" << s.sub << " " << model::to_string(s.level)
             << (s.skipped ? " (frozen)" : "") << "\nz_H\n"
             << tasks::render_grid(m.task.kind, m.task.side, grid(s.grid_H)) << "\n";
        if (!s.grid_L.empty()) text << "z_L\n" << tasks::render_grid(m.task.kind, m.task.side, grid(s.grid_L)) << "\n";
    }
    write_text_atomic(run.dir / "decoded.txt", text.str());
    out << "traced " << data.size() << " puzzle(s), " << tr.steps.size() << " sub-steps, " << tr.attention.size()
        << " attention captures\n";
}

struct FreezeArgs {
    ModelArgs base;
    std::string which;
    CLI::Option* o_which{};
};

void freeze(const FreezeArgs& a, std::ostream& out) {
    auto sets = a.base.sets("analysis.puzzles");
    if (a.o_which->count()) {
        const std::string w = a.which == "H" || a.which == "freeze_H" ? "freeze_H"
                              : a.which == "L" || a.which == "freeze_L" ? "freeze_L"
                                                                        : "";
        if (w.empty()) usage_error("--which must be H or L");
        sets.emplace_back("analysis.freeze", w);
    }
    Run run = prepare("freeze", a.base.common, sets, out, true);
    const Manifest& m = run.m;
    const auto model = load_model(m);
    const auto data = first_n(eval_split(m), m.analysis.puzzles);
    const auto rep = analysis::freeze_experiment(model, data, m.analysis.freeze, m.recurrence, m.analysis.batch_size);
    json j = rep.to_json();
    j["variant"] = variant_label(m.recurrence);
    j["checkpoint"] = m.checkpoint;
    write_text_atomic(run.dir / "freeze_report.json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "condition,state,t,changes\n";
    for (auto [name, cond] : {std::pair{"normal", &rep.normal}, std::pair{"frozen", &rep.frozen}})
        for (const auto* s : {&cond->H, &cond->L})
            for (std::size_t t = 0; t < s->per_step.size(); ++t)
                csv << name << "," << model::to_string(s->state) << "," << t + 1 << "," << s->per_step[t] << "\n";
    write_text_atomic(run.dir / "freeze_series.csv", csv.str());

    const auto active = rep.active();
    const auto& an = active == model::Level::H ? rep.normal.H : rep.normal.L;
    const auto& af = active == model::Level::H ? rep.frozen.H : rep.frozen.L;
    if (m.analysis.charts) {
        auto as_double = [](const std::vector<std::size_t>& v) { return std::vector<double>(v.begin(), v.end()); };
        const std::string state = model::to_string(active);
        write_text_atomic(run.dir / "freeze_series.svg",
                          analysis::svg_line_chart("z_" + state + " content changes per update (" +
                                                       recurrence::to_string(m.analysis.freeze) + ")",
                                                   {{"normal", as_double(an.per_step)}, {"frozen", as_double(af.per_step)}}));
    }
    out << recurrence::to_string(m.analysis.freeze) << ": active z_" << model::to_string(active) << " changes "
        << an.total << " -> " << af.total << ", exact_match " << analysis::fmt6(rep.normal.exact_match) << " -> "
        << analysis::fmt6(rep.frozen.exact_match) << " over " << rep.puzzles << " puzzles\n";
}

struct AttnArgs {
    ModelArgs base;
    std::string cycles;
    CLI::Option* o_cycles{};
};

std::vector<std::size_t> parse_cycles(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long v = std::stol(item, &used);
            if (used != item.size() || v < 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            usage_error("--cycles expects comma-separated cycle indices, got '" + text + "'");
        }
    }
    if (out.empty()) usage_error("--cycles is empty");
    return out;
}

void attn_stats(const AttnArgs& a, std::ostream& out, std::ostream& err) {
    auto sets = a.base.sets("analysis.puzzles");
    if (a.o_cycles->count()) sets.emplace_back("recurrence.record_cycles", parse_cycles(a.cycles));
    Run run = prepare("attn-stats", a.base.common, sets, out, true);
    const Manifest& m = run.m;
    if (m.recurrence.level_token_mode == model::LevelTokenMode::prepend_strip ||
        m.recurrence.level_token_mode == model::LevelTokenMode::prepend_no_strip)
        throw std::invalid_argument("attn-stats: prepend level-token variants are excluded from attention analysis");
    const auto model = load_model(m);
    const auto data = first_n(eval_split(m), m.analysis.puzzles);
    const TaskKind kind = m.task.kind;
    const auto hood = kind == TaskKind::sudoku ? tasks::NeighborhoodKind::sudoku : tasks::NeighborhoodKind::n4;

    // Batch and cycle chunking keep the captured attention within budget.
    const auto& mc = model.config();
    const double per_row_cycle = 2.0 * static_cast<double>(mc.layers * mc.heads) *
                                 std::pow(static_cast<double>(m.task.side * m.task.side), 2) * sizeof(double);
    const auto& cycles = m.recurrence.record_cycles;
    std::size_t chunk = cycles.size(), batch = m.analysis.batch_size;
    if (per_row_cycle * static_cast<double>(cycles.size()) <= kAttentionBudgetBytes) {
        batch = std::min(batch, std::max<std::size_t>(1, static_cast<std::size_t>(
                                                          kAttentionBudgetBytes / (per_row_cycle * cycles.size()))));
    } else {
        batch = 1;
        chunk = std::max<std::size_t>(1, static_cast<std::size_t>(kAttentionBudgetBytes / per_row_cycle));
    }

    std::vector<analysis::AttentionStatRow> rows;
    std::ostringstream control;
    control << "puzzle,layer,cycle,query,value\n";
    for (std::size_t begin = 0; begin < data.size(); begin += batch) {
        const std::size_t end = std::min(data.size(), begin + batch);
        const auto tokens = flatten_inputs(data, begin, end);
        std::vector<std::vector<analysis::AttentionStatRow>> per_row(end - begin);
        std::vector<std::vector<analysis::ControlValue>> per_ctl(end - begin);
        for (std::size_t c0 = 0; c0 < cycles.size(); c0 += chunk) {
            auto cfg = m.recurrence;
            cfg.record_cycles.assign(cycles.begin() + static_cast<long>(c0),
                                     cycles.begin() + static_cast<long>(std::min(cycles.size(), c0 + chunk)));
            const auto tr = rollout(model, tokens, end - begin, cfg, {true, true});
            for (std::size_t b = 0; b < end - begin; ++b) {
                const auto& p = data[begin + b];
                auto r = kind == TaskKind::sudoku ? analysis::sudoku_attention_contrasts(tr, b, p, begin + b)
                                                  : analysis::maze_attention_contrasts(tr, b, p, begin + b);
                per_row[b].insert(per_row[b].end(), r.begin(), r.end());
                auto c = analysis::within_neighborhood_control(tr, b, p, hood);
                per_ctl[b].insert(per_ctl[b].end(), c.begin(), c.end());
            }
        }
        for (std::size_t b = 0; b < end - begin; ++b) {
            rows.insert(rows.end(), per_row[b].begin(), per_row[b].end());
            for (const auto& c : per_ctl[b])
                control << begin + b << "," << c.layer << "," << c.cycle << "," << c.query << ","
                        << analysis::fmt6(c.value) << "\n";
        }
    }

    auto summary = analysis::aggregate_report(rows, kind);
    std::set<std::string> keep;
    for (const auto& c : m.analysis.classes)
        keep.insert(std::string(analysis::to_string(c == "control" ? analysis::QueryClass::control
                                                                    : analysis::QueryClass::adjacent,
                                                    kind)));
    std::erase_if(summary, [&](const analysis::SummaryRow& r) { return !keep.count(r.cls); });

    for (const auto& r : summary)
        if (r.n == 0) err << "warning: no puzzles in class " << r.cls << " (layer " << r.layer << ", " << r.metric << ")\n";
    write_text_atomic(run.dir / "rows.csv", analysis::rows_csv(rows, kind));
    write_text_atomic(run.dir / "summary.csv", analysis::summary_csv(summary));
    write_text_atomic(run.dir / "control.csv", control.str());

    std::map<std::string, std::set<std::size_t>> puzzles_per_class;
    for (const auto& r : rows) puzzles_per_class[std::string(analysis::to_string(r.cls, kind))].insert(r.puzzle);
    json counts = json::object();
    for (const auto& [cls, ids] : puzzles_per_class) counts[cls] = ids.size();
    json warnings = json::array();
    for (const auto& r : summary)
        if (!r.note.empty() && r.note != "n=1") warnings.push_back(r.note);
    const json meta = {
        {"variant", variant_label(m.recurrence)},
        {"checkpoint", m.checkpoint},
        {"puzzles", data.size()},
        {"cycles", cycles},
        {"compared_sub_steps", "first L-update (sub-step 0) and first H-update (sub-step C_L) of each listed cycle"},
        {"queries", kind == TaskKind::sudoku ? "blank input cells" : "solution-path cells of the target"},
        {"neighborhood", kind == TaskKind::sudoku ? "row, column and box peers" : "4-neighborhood (density windows 4, 8, 5x5)"},
        {"violation_set", kind == TaskKind::sudoku
                              ? "cells whose decoded z_H digit clashes with a peer, decoded at cycle entry"
                              : "cells where decoded z_H differs from the target, decoded at cycle entry"},
        {"weights", "raw per-head weights over puzzle-cell keys; entropy over the renormalised distribution / log(cells)"},
        {"aggregation", "each puzzle's queries (all listed cycles) are averaged within a class first; the summary is the "
                        "mean over puzzles with 1.96 sd / sqrt(n); a puzzle counts in every class where it has a query"},
        {"puzzles_per_class", counts},
        {"warnings", warnings}};
    write_text_atomic(run.dir / "report_meta.json", meta.dump(2) + "\n");

    if (m.analysis.charts) {
        for (const auto& metric : analysis::metric_names(kind)) {
            std::vector<analysis::Bar> bars;
            for (const auto& r : summary)
                if (r.metric == metric && r.n > 0) bars.push_back({"layer " + std::to_string(r.layer), r.cls, r.mean, r.ci95});
            write_text_atomic(run.dir / ("attn_" + metric + ".svg"),
                              analysis::svg_bar_chart(metric + " by layer (mean, 95% CI over puzzles)", bars));
        }
    }
    out << rows.size() << " query rows from " << data.size() << " puzzles, " << summary.size() << " summary rows\n";
}

struct ReportArgs {
    Common common;
    std::vector<std::string> runs;
};

void report(const ReportArgs& a, std::ostream& out) {
    if (a.runs.empty()) usage_error("report needs at least one run directory");
    Run run = prepare("report", a.common, {}, out);
    struct Entry {
        std::string dir, variant;
        int n_L, n_H, delta;
        std::map<std::string, double> metrics;
    };
    std::vector<Entry> entries;
    for (const auto& d : a.runs) {
        const fs::path dir(d);
        if (!fs::exists(dir / "manifest.json")) throw std::invalid_argument(d + ": no manifest.json");
        const Manifest rm = Manifest::load(dir / "manifest.json");
        Entry e{fs::absolute(dir).lexically_normal().string(), variant_label(rm.recurrence), rm.recurrence.n_L,
                rm.recurrence.n_H, rm.recurrence.delta(), {}};
        if (fs::exists(dir / "train_summary.json")) {
            const json s = json::parse(read_text(dir / "train_summary.json"));
            e.metrics["final_exact_match"] = s.at("final_exact_match").get<double>();
            e.metrics["peak_exact_match"] = s.at("peak_exact_match").get<double>();
        }
        if (fs::exists(dir / "eval.json"))
            e.metrics["eval_exact_match"] = json::parse(read_text(dir / "eval.json")).at("exact_match").get<double>();
        if (e.metrics.empty()) throw std::invalid_argument(d + ": neither train_summary.json nor eval.json");
        entries.push_back(std::move(e));
    }

    struct Group {
        int n_L, n_H, delta;
        std::map<std::string, std::vector<double>> values;
    };
    std::map<std::string, Group> groups;
    for (const auto& e : entries) {
        auto& g = groups.try_emplace(e.variant, Group{e.n_L, e.n_H, e.delta, {}}).first->second;
        for (const auto& [k, v] : e.metrics) g.values[k].push_back(v);
    }
    std::ostringstream csv;
    csv << "variant,n_L,n_H,delta,metric,mean,ci95,n\n";
    json jgroups = json::object();
    std::vector<analysis::Bar> bars;
    for (const auto& [name, g] : groups) {
        for (const auto& [metric, vals] : g.values) {
            const auto [mean, ci] = analysis::mean_ci95(vals);
            csv << name << "," << g.n_L << "," << g.n_H << "," << g.delta << "," << metric << "," << analysis::fmt6(mean)
                << "," << analysis::fmt6(ci) << "," << vals.size() << "\n";
            jgroups[name][metric] = {{"mean", mean}, {"ci95", ci}, {"n", vals.size()}, {"values", vals}};
            if (metric != "peak_exact_match") bars.push_back({name, metric, mean, ci});
        }
    }
    write_text_atomic(run.dir / "variants.csv", csv.str());

    // Directional flag: default asymmetric (1,0) against symmetric (1,1).
    json direction = nullptr;
    const auto asym = groups.find("Lx_H"), sym = groups.find("Lx_Hx");
    if (asym != groups.end() && sym != groups.end()) {
        const std::string metric = asym->second.values.count("eval_exact_match") && sym->second.values.count("eval_exact_match")
                                       ? "eval_exact_match"
                                       : "final_exact_match";
        if (asym->second.values.count(metric) && sym->second.values.count(metric)) {
            const auto [am, ac] = analysis::mean_ci95(asym->second.values.at(metric));
            const auto [sm, sc] = analysis::mean_ci95(sym->second.values.at(metric));
            direction = {{"metric", metric},
                         {"asymmetric", {{"variant", "Lx_H"}, {"mean", am}, {"ci95", ac}, {"n", asym->second.values.at(metric).size()}}},
                         {"symmetric", {{"variant", "Lx_Hx"}, {"mean", sm}, {"ci95", sc}, {"n", sym->second.values.at(metric).size()}}},
                         {"expected", "asymmetric >= symmetric"},
                         {"holds", am >= sm},
                         {"gating", false}};
            out << "direction (" << metric << "): Lx_H " << fixed6(am) << " +/- " << fixed6(ac) << " vs Lx_Hx "
                << fixed6(sm) << " +/- " << fixed6(sc) << "; expected asymmetric >= symmetric "
                << (am >= sm ? "holds" : "does not hold") << " (non-gating)\n";
        }
    }
    json jruns = json::array();
    for (const auto& e : entries) jruns.push_back({{"dir", e.dir}, {"variant", e.variant}, {"metrics", e.metrics}});
    write_text_atomic(run.dir / "report.json",
                      json{{"runs", jruns}, {"groups", jgroups}, {"direction", direction}}.dump(2) + "\n");
    if (run.m.analysis.charts)
        write_text_atomic(run.dir / "variants.svg", analysis::svg_bar_chart("exact match by variant (mean, 95% CI)", bars));
    out << entries.size() << " runs in " << groups.size() << " variant groups\n";
}

struct SelftestArgs {
    Common common;
    bool quick = false;
};

void selftest(const SelftestArgs& a, std::ostream& out) {
    Run run = prepare("selftest", a.common, {}, out);
    const std::size_t trials = a.quick ? 10 : 100, tensors = a.quick ? 100 : 1000;
    std::vector<suites::SuiteResult> results;
    auto record = [&](suites::SuiteResult r) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n" << std::flush;
        results.push_back(std::move(r));
    };
    record(suites::gradient_suite(trials));
    record(suites::truncation_suite());
    record(suites::config_grid_suite(a.quick ? 32 : 64));
    record(suites::attention_oracle_suite(tensors));
    record(suites::geometry_suite());
    record(suites::freeze_suite());
    json j = json::array();
    std::vector<std::string> failed;
    for (const auto& r : results) {
        j.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"seconds", r.seconds}, {"data", r.data}});
        if (!r.passed) failed.push_back(r.name);
    }
    write_text_atomic(run.dir / "selftest.json", j.dump(2) + "\n");
    if (!failed.empty()) {
        std::string names;
        for (const auto& f : failed) names += (names.empty() ? "" : ", ") + f;
        throw CodedError(kSelftestFailed, "selftest", "failed suites: " + names);
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-state shared-weight recurrent Transformer: data, training, rollouts and analysis", "air"};
    app.require_subcommand(1);
    app.fallthrough(false);

    GenDataArgs gen;
    auto* c_gen = app.add_subcommand("gen-data", "Write a dataset split as JSONL");
    gen.common.attach(c_gen);
    gen.o_kind = c_gen->add_option("--kind", gen.kind, "sudoku or maze")->check(CLI::IsMember({"sudoku", "maze"}));
    gen.o_side = c_gen->add_option("--side", gen.side, "Board side");
    gen.o_count = c_gen->add_option("--count", gen.count, "Number of records");
    gen.o_givens = c_gen->add_option("--givens", gen.givens, "Sudoku givens");
    gen.o_seed = c_gen->add_option("--seed", gen.seed, "Task seed");
    c_gen->add_option("--split", gen.split, "train or eval")->check(CLI::IsMember({"train", "eval"}));

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "Train a model; writes metrics.csv, checkpoint/ and best/");
    tr.common.attach(c_train);
    tr.o_steps = c_train->add_option("--steps", tr.steps, "Optimizer steps");

    ModelArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Exact match of a checkpoint on the eval split");
    ev.attach(c_eval, "Eval puzzles");

    ModelArgs ro;
    auto* c_roll = app.add_subcommand("rollout", "Decode both states at every sub-step");
    ro.attach(c_roll, "Puzzles to trace");

    FreezeArgs fr;
    auto* c_freeze = app.add_subcommand("freeze", "Paired normal and frozen rollouts");
    fr.base.attach(c_freeze, "Eval puzzles");
    fr.o_which = c_freeze->add_option("--which", fr.which, "State to freeze: H or L");

    AttnArgs at;
    auto* c_attn = app.add_subcommand("attn-stats", "Attention contrasts between the first L and H updates");
    at.base.attach(c_attn, "Eval puzzles");
    at.o_cycles = c_attn->add_option("--cycles", at.cycles, "Comma-separated cycles, e.g. 2,4,6,8,10,12,14,15");

    ReportArgs rp;
    auto* c_report = app.add_subcommand("report", "Compare runs by variant");
    rp.common.attach(c_report);
    c_report->add_option("runs", rp.runs, "Run directories (train or eval outputs)");

    SelftestArgs st;
    auto* c_self = app.add_subcommand("selftest", "Gradient, oracle and geometry property suites");
    st.common.attach(c_self);
    c_self->add_flag("--quick", st.quick, "Fewer trials");

    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return kOk;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return kOk;
        } catch (const CLI::ParseError& e) {
            usage_error(e.what());
        }
        if (c_gen->parsed()) gen_data(gen, out);
        else if (c_train->parsed()) train(tr, out);
        else if (c_eval->parsed()) eval(ev, out);
        else if (c_roll->parsed()) rollout_cmd(ro, out);
        else if (c_freeze->parsed()) freeze(fr, out);
        else if (c_attn->parsed()) attn_stats(at, out, err);
        else if (c_report->parsed()) report(rp, out);
        else if (c_self->parsed()) selftest(st, out);
        return kOk;
    } catch (const CodedError& e) {
        err << "error: " << e.tag << ": " << one_line(e.what()) << "\n";
        return e.code;
    } catch (const ManifestError& e) {
        err << "error: manifest: " << one_line(e.what()) << "\n";
        return kManifest;
    } catch (const json::exception& e) {
        err << "error: manifest: " << one_line(e.what()) << "\n";
        return kManifest;
    } catch (const std::invalid_argument& e) {
        err << "error: invalid_input: " << one_line(e.what()) << "\n";
        return kInvalidInput;
    } catch (const std::out_of_range& e) {
        err << "error: invalid_input: " << one_line(e.what()) << "\n";
        return kInvalidInput;
    } catch (const std::exception& e) {
        err << "error: runtime: " << one_line(e.what()) << "\n";
        return kRuntime;
    }
}

}  // namespace air::cli
