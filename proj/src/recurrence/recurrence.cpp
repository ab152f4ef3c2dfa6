#include "air/recurrence/recurrence.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "air/tensor/ops.hpp"
#include "air/tensor/serialize.hpp"
#include "air/util/atomic_file.hpp"

namespace air::recurrence {

namespace {

Var add_scaled(const Var& base, const Var& x, int n) {
    if (n == 0) return base;
    return add(base, n == 1 ? x : scale(x, static_cast<double>(n)));
}

/// Wraps the level-token machinery around one core call on a cell argument.
Var core_with_level(const Model& m, const Var& arg, const Var& own, Level level, const RecurrenceConfig& cfg,
                    model::AttentionCapture* capture) {
    const std::size_t cells = arg.dim(1);
    model::LevelTokenResult lt;
    if (cfg.level_token_mode == LevelTokenMode::prepend_no_strip && own.dim(1) == cells + 1) {
        lt = m.apply_level_token(concat_seq(slice_seq(own, 0, 1), arg), cfg.level_token_mode, level, true);
    } else {
        lt = m.apply_level_token(arg, cfg.level_token_mode, level, false);
    }
    return Model::apply_fixup(m.core_forward(lt.input, level, capture), lt.fixup);
}

std::vector<int> decode_cells(const Model& m, const Var& z, std::size_t cells) {
    return m.decode_head(cells_of(z, cells)).second;
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const char* what) {
    for (const auto& [name, v] : options)
        if (s == name) return v;
    throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

Level parse_level(const std::string& s) {
    if (s == "L") return Level::L;
    if (s == "H") return Level::H;
    throw std::invalid_argument("unknown update type '" + s + "'");
}

}  // namespace

std::string to_string(OperatorForm v) {
    switch (v) {
        case OperatorForm::additive: return "additive";
        case OperatorForm::linear: return "linear";
        case OperatorForm::nonlinear: return "nonlinear";
        case OperatorForm::sign_flip: return "sign_flip";
        case OperatorForm::hadamard: return "hadamard";
    }
    return "?";
}

std::string to_string(FreezePolicy v) {
    switch (v) {
        case FreezePolicy::none: return "none";
        case FreezePolicy::freeze_H: return "freeze_H";
        case FreezePolicy::freeze_L: return "freeze_L";
    }
    return "?";
}

OperatorForm parse_operator_form(const std::string& s) {
    return parse_enum<OperatorForm>(s,
                                    {{"additive", OperatorForm::additive},
                                     {"linear", OperatorForm::linear},
                                     {"nonlinear", OperatorForm::nonlinear},
                                     {"sign_flip", OperatorForm::sign_flip},
                                     {"hadamard", OperatorForm::hadamard}},
                                    "operator form");
}

FreezePolicy parse_freeze_policy(const std::string& s) {
    return parse_enum<FreezePolicy>(s,
                                    {{"none", FreezePolicy::none},
                                     {"freeze_H", FreezePolicy::freeze_H},
                                     {"H", FreezePolicy::freeze_H},
                                     {"freeze_L", FreezePolicy::freeze_L},
                                     {"L", FreezePolicy::freeze_L}},
                                    "freeze policy");
}

std::vector<std::size_t> default_record_cycles() { return {2, 4, 6, 8, 10, 12, 14, 15}; }

void RecurrenceConfig::validate() const {
    if (n_L < 0 || n_H < 0) throw std::invalid_argument("recurrence: injection counts must be nonnegative");
    if (C_L == 0 || C_H == 0 || max_cycles == 0)
        throw std::invalid_argument("recurrence: C_L, C_H and max_cycles must be positive");
    if (single_state) {
        if (freeze != FreezePolicy::none) throw std::invalid_argument("recurrence: single_state excludes freeze");
        if (!tied) throw std::invalid_argument("recurrence: single_state requires tied parameters");
        if (operator_form != OperatorForm::additive)
            throw std::invalid_argument("recurrence: single_state supports only the additive operator form");
    }
}

void RecurrenceConfig::check_model(const Model& m) const {
    if (level_token_mode != LevelTokenMode::none && !m.has_level_tokens())
        throw std::invalid_argument("recurrence: level-token mode " + model::to_string(level_token_mode) +
                                    " needs a model with level tokens");
    if ((operator_form == OperatorForm::linear || operator_form == OperatorForm::nonlinear) && !m.has_g())
        throw std::invalid_argument("recurrence: operator form " + to_string(operator_form) + " needs g");
    if (tied == m.config().untied)
        throw std::invalid_argument(std::string("recurrence: config is ") + (tied ? "tied" : "untied") +
                                    " but the model is " + (m.config().untied ? "untied" : "tied"));
}

nlohmann::json RecurrenceConfig::to_json() const {
    return {{"n_L", n_L},
            {"n_H", n_H},
            {"delta", delta()},
            {"operator_form", to_string(operator_form)},
            {"level_token_mode", model::to_string(level_token_mode)},
            {"tied", tied},
            {"single_state", single_state},
            {"C_L", C_L},
            {"C_H", C_H},
            {"max_cycles", max_cycles},
            {"freeze", to_string(freeze)},
            {"freeze_onset", freeze_onset},
            {"record_cycles", record_cycles}};
}

RecurrenceConfig RecurrenceConfig::from_json(const nlohmann::json& j) {
    RecurrenceConfig c;
    c.n_L = j.value("n_L", c.n_L);
    c.n_H = j.value("n_H", c.n_H);
    c.operator_form = parse_operator_form(j.value("operator_form", to_string(c.operator_form)));
    c.level_token_mode = model::parse_level_token_mode(j.value("level_token_mode", model::to_string(c.level_token_mode)));
    c.tied = j.value("tied", c.tied);
    c.single_state = j.value("single_state", c.single_state);
    c.C_L = j.value("C_L", c.C_L);
    c.C_H = j.value("C_H", c.C_H);
    c.max_cycles = j.value("max_cycles", c.max_cycles);
    c.freeze = parse_freeze_policy(j.value("freeze", to_string(c.freeze)));
    c.freeze_onset = j.value("freeze_onset", c.freeze_onset);
    c.record_cycles = j.value("record_cycles", c.record_cycles);
    c.validate();
    return c;
}

LatentPair init_latents(const Model& m, std::size_t batch, std::size_t cells) {
    auto [h, l] = m.init_states(batch, cells);
    return {h, l};
}

Var cells_of(const Var& z, std::size_t cells) {
    if (z.dim(1) == cells) return z;
    if (z.dim(1) == cells + 1) return slice_seq(z, 1, cells);
    throw std::invalid_argument("cells_of: state length " + std::to_string(z.dim(1)) + " for " +
                                std::to_string(cells) + " cells");
}

Var apply_operator_form(const Model& m, const Var& x, const Var& z_L, const Var& z_H, const RecurrenceConfig& cfg) {
    const Var base = add(z_L, z_H);
    switch (cfg.operator_form) {
        case OperatorForm::additive: return add_scaled(base, x, cfg.n_L);
        case OperatorForm::linear: return add_scaled(base, matmul(x, m.g()), cfg.n_L);
        case OperatorForm::nonlinear: return add_scaled(base, tanh(matmul(x, m.g())), cfg.n_L);
        case OperatorForm::sign_flip: return add_scaled(base, x, -cfg.n_L);
        case OperatorForm::hadamard: return add(z_L, mul(add(z_H, z_L), x));
    }
    throw std::logic_error("apply_operator_form: bad form");
}

LatentPair l_update(const Model& m, const LatentPair& s, const Var& x, const RecurrenceConfig& cfg,
                    model::AttentionCapture* capture) {
    const std::size_t cells = x.dim(1);
    const Var arg = apply_operator_form(m, x, cells_of(s.z_L, cells), cells_of(s.z_H, cells), cfg);
    return {s.z_H, core_with_level(m, arg, s.z_L, Level::L, cfg, capture)};
}

LatentPair h_update(const Model& m, const LatentPair& s, const Var& x, const RecurrenceConfig& cfg,
                    model::AttentionCapture* capture) {
    const std::size_t cells = x.dim(1);
    const Var arg = add_scaled(add(cells_of(s.z_H, cells), cells_of(s.z_L, cells)), x, cfg.n_H);
    return {core_with_level(m, arg, s.z_H, Level::H, cfg, capture), s.z_L};
}

LatentPair single_update(const Model& m, const LatentPair& s, const Var& x, int a, Level level,
                         const RecurrenceConfig& cfg, model::AttentionCapture* capture) {
    const Var arg = add_scaled(cells_of(s.z_H, x.dim(1)), x, a);
    return {core_with_level(m, arg, s.z_H, level, cfg, capture), s.z_L};
}

LatentPair run_cycle(const Model& m, const LatentPair& s, const Var& x, const RecurrenceConfig& cfg,
                     std::size_t cycle, bool truncate, const SubStepHook& hook, const CapturePredicate& want_capture) {
    const std::size_t total = cfg.substeps_per_cycle();
    const bool freezing = cfg.freeze != FreezePolicy::none && cycle >= cfg.freeze_onset;
    LatentPair cur = s;
    for (std::size_t sub = 0; sub < total; ++sub) {
        const Level level = cfg.substep_level(sub);
        const bool skipped = freezing && ((level == Level::H && cfg.freeze == FreezePolicy::freeze_H) ||
                                          (level == Level::L && cfg.freeze == FreezePolicy::freeze_L));
        const bool capture = !skipped && want_capture && want_capture(cycle, sub);
        model::AttentionCapture cap;
        if (!skipped) {
            auto step = [&] {
                model::AttentionCapture* c = capture ? &cap : nullptr;
                if (cfg.single_state) return single_update(m, cur, x, level == Level::L ? cfg.n_L : cfg.n_H, level, cfg, c);
                return level == Level::L ? l_update(m, cur, x, cfg, c) : h_update(m, cur, x, cfg, c);
            };
            if (truncate && sub + 2 < total) {
                NoGradGuard guard;
                cur = step();
            } else {
                cur = step();
            }
        }
        if (hook) hook({cycle, sub, level, skipped, cur, capture ? &cap : nullptr});
    }
    return cur;
}

std::vector<std::vector<int>> RolloutTrace::state_series(Level which, std::size_t b) const {
    if (b >= batch) throw std::out_of_range("state_series: batch row out of range");
    if (single_state && which == Level::L) throw std::invalid_argument("state_series: single-state trace has no z_L");
    auto row = [&](const std::vector<int>& g) {
        return std::vector<int>(g.begin() + static_cast<long>(b * cells), g.begin() + static_cast<long>((b + 1) * cells));
    };
    std::vector<std::vector<int>> out{row(which == Level::H ? initial_H : initial_L)};
    for (const auto& s : steps) {
        if (!single_state && s.level != which) continue;
        out.push_back(row(which == Level::H ? s.grid_H : s.grid_L));
    }
    return out;
}

const AttentionRecord* RolloutTrace::find_attention(std::size_t cycle, Level level) const {
    for (const auto& a : attention)
        if (a.cycle == cycle && a.level == level) return &a;
    return nullptr;
}

namespace {

RolloutTrace rollout_impl(const Model& m, const std::vector<int>& tokens, std::size_t batch,
                          const RecurrenceConfig& cfg, const RolloutOptions& opts) {
    cfg.validate();
    cfg.check_model(m);
    if (batch == 0 || tokens.empty() || tokens.size() % batch != 0)
        throw std::invalid_argument("run_rollout: token count does not split into the batch");
    NoGradGuard guard;
    const std::size_t cells = tokens.size() / batch;
    const Var x = m.encode(tokens, batch);
    LatentPair st = init_latents(m, batch, cells);

    RolloutTrace trace;
    trace.batch = batch;
    trace.cells = cells;
    trace.single_state = cfg.single_state;
    if (opts.record_grids) {
        trace.initial_H = decode_cells(m, st.z_H, cells);
        if (!cfg.single_state) trace.initial_L = decode_cells(m, st.z_L, cells);
    }
    const std::set<std::size_t> rec(cfg.record_cycles.begin(), cfg.record_cycles.end());
    CapturePredicate want;
    if (opts.record_attention) {
        want = [&](std::size_t cycle, std::size_t sub) { return rec.count(cycle) && (sub == 0 || sub == cfg.C_L); };
    }
    const std::size_t per = cfg.substeps_per_cycle();
    std::vector<int> last_H = trace.initial_H, last_L = trace.initial_L;
    SubStepHook hook = [&](const SubStepEvent& e) {
        const std::size_t t = e.cycle * per + e.sub;
        if (opts.record_grids) {
            if (!e.skipped) {
                if (cfg.single_state || e.level == Level::H) {
                    last_H = decode_cells(m, e.states.z_H, cells);
                } else {
                    last_L = decode_cells(m, e.states.z_L, cells);
                }
            }
            trace.steps.push_back({t, e.cycle, e.sub, e.level, e.skipped, last_H, last_L});
        }
        if (e.capture) {
            const std::size_t keys = e.capture->layers.front().dim(-1);
            trace.attention.push_back({t, e.cycle, e.sub, e.level, e.capture->layers, keys - cells});
        }
    };
    for (std::size_t c = 0; c < cfg.max_cycles; ++c) st = run_cycle(m, st, x, cfg, c, false, hook, want);
    auto [logits, tokens_out] = m.decode_head(cells_of(st.z_H, cells));
    trace.final_logits = logits.value();
    trace.final_tokens = std::move(tokens_out);
    return trace;
}

}  // namespace

RolloutTrace run_rollout(const Model& m, const std::vector<int>& tokens, std::size_t batch, const RecurrenceConfig& cfg,
                         const RolloutOptions& opts) {
    return rollout_impl(m, tokens, batch, cfg, opts);
}

RolloutTrace single_state_rollout(const Model& m, const std::vector<int>& tokens, std::size_t batch,
                                  const RecurrenceConfig& cfg, const RolloutOptions& opts) {
    if (!cfg.single_state) throw std::invalid_argument("single_state_rollout: config is not single_state");
    return rollout_impl(m, tokens, batch, cfg, opts);
}

std::vector<std::vector<int>> predict(const Model& m, const std::vector<std::vector<int>>& inputs,
                                      const RecurrenceConfig& cfg, std::size_t batch_size) {
    std::vector<std::vector<int>> out;
    out.reserve(inputs.size());
    if (batch_size == 0) batch_size = 1;
    for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, inputs.size() - start);
        const std::size_t cells = inputs[start].size();
        std::vector<int> flat;
        flat.reserve(n * cells);
        for (std::size_t i = 0; i < n; ++i) {
            if (inputs[start + i].size() != cells) throw std::invalid_argument("predict: puzzles differ in size");
            flat.insert(flat.end(), inputs[start + i].begin(), inputs[start + i].end());
        }
        const auto trace = rollout_impl(m, flat, n, cfg, {false, false});
        for (std::size_t i = 0; i < n; ++i)
            out.emplace_back(trace.final_tokens.begin() + static_cast<long>(i * cells),
                             trace.final_tokens.begin() + static_cast<long>((i + 1) * cells));
    }
    return out;
}

void write_trace(const std::filesystem::path& dir, const RolloutTrace& trace, const nlohmann::json& meta) {
    std::filesystem::create_directories(dir);
    std::ostringstream lines;
    for (const auto& s : trace.steps) {
        nlohmann::json j = {{"t", s.t},           {"cycle", s.cycle},   {"sub", s.sub},
                            {"type", model::to_string(s.level)}, {"skipped", s.skipped}, {"z_H", s.grid_H}};
        if (!trace.single_state) j["z_L"] = s.grid_L;
        lines << j.dump() << '\n';
    }
    write_text_atomic(dir / "trace.jsonl", lines.str());

    std::vector<TensorRecord> records;
    for (const auto& a : trace.attention) {
        for (std::size_t l = 0; l < a.layers.size(); ++l) {
            records.push_back({"attention",
                               a.layers[l],
                               {{"t", a.t},
                                {"cycle", a.cycle},
                                {"sub", a.sub},
                                {"type", model::to_string(a.level)},
                                {"layer", l},
                                {"prefix", a.prefix}}});
        }
    }
    if (!trace.final_logits.empty()) records.push_back({"final_logits", trace.final_logits, {}});
    save_tensor_file(dir / "attention.bin", records);

    nlohmann::json m = {{"batch", trace.batch},
                        {"cells", trace.cells},
                        {"single_state", trace.single_state},
                        {"initial_H", trace.initial_H},
                        {"initial_L", trace.initial_L},
                        {"final_tokens", trace.final_tokens},
                        {"meta", meta.is_null() ? nlohmann::json::object() : meta}};
    write_text_atomic(dir / "trace_meta.json", m.dump() + "\n");
}

RolloutTrace read_trace(const std::filesystem::path& dir) {
    RolloutTrace trace;
    const auto meta = nlohmann::json::parse(read_text(dir / "trace_meta.json"));
    trace.batch = meta.at("batch");
    trace.cells = meta.at("cells");
    trace.single_state = meta.at("single_state");
    trace.initial_H = meta.at("initial_H").get<std::vector<int>>();
    trace.initial_L = meta.at("initial_L").get<std::vector<int>>();
    trace.final_tokens = meta.at("final_tokens").get<std::vector<int>>();

    std::istringstream lines(read_text(dir / "trace.jsonl"));
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        SubStepRecord s{j.at("t"), j.at("cycle"), j.at("sub"), parse_level(j.at("type")), j.at("skipped"),
                        j.at("z_H").get<std::vector<int>>(), {}};
        if (j.contains("z_L")) s.grid_L = j.at("z_L").get<std::vector<int>>();
        trace.steps.push_back(std::move(s));
    }

    for (auto& r : load_tensor_file(dir / "attention.bin")) {
        if (r.name == "final_logits") {
            trace.final_logits = std::move(r.tensor);
            continue;
        }
        const std::size_t t = r.meta.at("t");
        if (trace.attention.empty() || trace.attention.back().t != t) {
            trace.attention.push_back({t, r.meta.at("cycle"), r.meta.at("sub"), parse_level(r.meta.at("type")), {},
                                       r.meta.at("prefix")});
        }
        trace.attention.back().layers.push_back(std::move(r.tensor));
    }
    return trace;
}

}  // namespace air::recurrence
