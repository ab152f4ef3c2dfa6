#include "air/model/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "air/tensor/ops.hpp"
#include "air/tensor/serialize.hpp"
#include "air/util/atomic_file.hpp"

namespace air::model {

namespace {

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const char* what) {
    for (const auto& [name, v] : options)
        if (s == name) return v;
    throw std::invalid_argument(std::string("unknown ") + what + " '" + s + "'");
}

bool all_finite(const Tensor& t) {
    for (double v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

std::string to_string(NormKind v) { return v == NormKind::rms ? "rms" : "layer"; }
std::string to_string(Activation v) { return v == Activation::gelu ? "gelu" : "silu"; }
std::string to_string(Level v) { return v == Level::L ? "L" : "H"; }
std::string to_string(LevelTokenMode v) {
    switch (v) {
        case LevelTokenMode::none: return "none";
        case LevelTokenMode::addition: return "addition";
        case LevelTokenMode::prepend_strip: return "prepend_strip";
        case LevelTokenMode::prepend_no_strip: return "prepend_no_strip";
    }
    return "?";
}

NormKind parse_norm_kind(const std::string& s) {
    return parse_enum<NormKind>(s, {{"rms", NormKind::rms}, {"layer", NormKind::layer}}, "norm");
}
Activation parse_activation(const std::string& s) {
    return parse_enum<Activation>(s, {{"gelu", Activation::gelu}, {"silu", Activation::silu}}, "activation");
}
LevelTokenMode parse_level_token_mode(const std::string& s) {
    return parse_enum<LevelTokenMode>(s,
                                      {{"none", LevelTokenMode::none},
                                       {"addition", LevelTokenMode::addition},
                                       {"prepend_strip", LevelTokenMode::prepend_strip},
                                       {"prepend_no_strip", LevelTokenMode::prepend_no_strip}},
                                      "level-token mode");
}

void ModelConfig::validate() const {
    if (vocab < 2) throw std::invalid_argument("model: vocab must be at least 2");
    if (d_model == 0 || layers == 0 || heads == 0 || mlp_ratio == 0)
        throw std::invalid_argument("model: d_model, layers, heads and mlp_ratio must be positive");
    if (d_model % heads != 0)
        throw std::invalid_argument("model: d_model " + std::to_string(d_model) + " not divisible by heads " +
                                    std::to_string(heads));
    if ((d_model / heads) % 2 != 0) throw std::invalid_argument("model: head width must be even for rotary pairs");
    if (rope_grid > 0 && (d_model / heads) % 4 != 0)
        throw std::invalid_argument("model: axial rotary needs a head width divisible by 4");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab", vocab},
            {"d_model", d_model},
            {"layers", layers},
            {"heads", heads},
            {"mlp_ratio", mlp_ratio},
            {"norm", to_string(norm)},
            {"activation", to_string(activation)},
            {"rope_base", rope_base},
            {"rope_grid", rope_grid},
            {"norm_eps", norm_eps},
            {"final_norm", final_norm},
            {"level_tokens", level_tokens},
            {"operator_matrix", operator_matrix},
            {"untied", untied},
            {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab = j.value("vocab", c.vocab);
    c.d_model = j.value("d_model", c.d_model);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.norm = parse_norm_kind(j.value("norm", to_string(c.norm)));
    c.activation = parse_activation(j.value("activation", to_string(c.activation)));
    c.rope_base = j.value("rope_base", c.rope_base);
    c.rope_grid = j.value("rope_grid", c.rope_grid);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    c.final_norm = j.value("final_norm", c.final_norm);
    c.level_tokens = j.value("level_tokens", c.level_tokens);
    c.operator_matrix = j.value("operator_matrix", c.operator_matrix);
    c.untied = j.value("untied", c.untied);
    c.seed = j.value("seed", c.seed);
    return c;
}

Tensor truncated_normal(const Shape& shape, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(shape);
    for (double& v : t.data()) {
        double z;
        do {
            z = dist(rng);
        } while (z < -2.0 || z > 2.0);
        v = z * std;
    }
    return t;
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t d = cfg_.d_model, hidden = d * cfg_.mlp_ratio;
    const double wstd = 1.0 / std::sqrt(static_cast<double>(d));
    const double w2std = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto param = [&](const Shape& s, double std) { return Var(truncated_normal(s, std, rng), true); };
    auto ones = [&] { return Var(Tensor({d}, 1.0), true); };

    h0_ = truncated_normal({d}, 1.0, rng);
    l0_ = truncated_normal({d}, 1.0, rng);
    embedding_ = param({cfg_.vocab, d}, 1.0);
    auto make_block = [&] {
        BlockParams b;
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            LayerParams p;
            p.norm1 = ones();
            p.wq = param({d, d}, wstd);
            p.wk = param({d, d}, wstd);
            p.wv = param({d, d}, wstd);
            p.wo = param({d, d}, wstd);
            p.norm2 = ones();
            p.w1 = param({d, hidden}, wstd);
            p.w2 = param({hidden, d}, w2std);
            b.layers.push_back(std::move(p));
        }
        if (cfg_.final_norm) b.out_norm = ones();
        return b;
    };
    block_L_ = make_block();
    head_ = param({d, cfg_.vocab}, wstd);
    if (cfg_.level_tokens) {
        tau_L_ = param({d}, 1.0);
        tau_H_ = param({d}, 1.0);
    }
    if (cfg_.operator_matrix) g_ = param({d, d}, wstd);
    if (cfg_.untied) block_H_ = make_block();
}

Var Model::encode(std::span<const int> tokens, std::size_t batch) const {
    if (batch == 0 || tokens.size() % batch != 0)
        throw std::invalid_argument("encode: " + std::to_string(tokens.size()) + " tokens do not split into " +
                                    std::to_string(batch) + " sequences");
    return air::embedding(tokens, {batch, tokens.size() / batch}, embedding_);
}

std::pair<Var, Var> Model::init_states(std::size_t batch, std::size_t seq) const {
    return {broadcast_rows(Var(h0_), batch, seq), broadcast_rows(Var(l0_), batch, seq)};
}

const BlockParams& Model::block(Level which) const {
    return (which == Level::H && cfg_.untied) ? block_H_ : block_L_;
}

BlockParams& Model::block(Level which) { return (which == Level::H && cfg_.untied) ? block_H_ : block_L_; }

const Var& Model::tau(Level which) const {
    if (!tau_L_.defined()) throw std::invalid_argument("level tokens requested but the model has no tau_L/tau_H");
    return which == Level::L ? tau_L_ : tau_H_;
}

const Var& Model::g() const {
    if (!g_.defined()) throw std::invalid_argument("operator form needs g but the model has no operator matrix");
    return g_;
}

Var Model::norm(const Var& x, const Var& gain) const {
    return cfg_.norm == NormKind::rms ? rms_norm(x, gain, cfg_.norm_eps) : layer_norm(x, gain, cfg_.norm_eps);
}

Var Model::activate(const Var& x) const { return cfg_.activation == Activation::gelu ? gelu(x) : silu(x); }

Var Model::core_forward(const Var& x, Level which, AttentionCapture* capture) const {
    if (x.value().rank() != 3 || x.dim(2) != cfg_.d_model)
        throw std::invalid_argument("core_forward: expected [B, S, " + std::to_string(cfg_.d_model) + "], got " +
                                    shape_str(x.shape()));
    const std::size_t batch = x.dim(0), seq = x.dim(1), heads = cfg_.heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model / heads));
    std::vector<double> positions(seq), rows, cols;
    for (std::size_t s = 0; s < seq; ++s) positions[s] = static_cast<double>(s);
    if (cfg_.rope_grid > 0) {
        // Leading level-token slots sit at (-1, -1).
        const std::size_t side = cfg_.rope_grid, cells = side * side;
        if (seq < cells || seq > cells + 1)
            throw std::invalid_argument("core_forward: sequence of " + std::to_string(seq) + " does not fit a " +
                                        std::to_string(side) + "x" + std::to_string(side) + " rotary grid");
        const std::size_t prefix = seq - cells;
        rows.assign(seq, -1.0);
        cols.assign(seq, -1.0);
        for (std::size_t c = 0; c < cells; ++c) {
            rows[prefix + c] = static_cast<double>(c / side);
            cols[prefix + c] = static_cast<double>(c % side);
        }
    }
    auto rotate = [&](const Var& t) {
        return cfg_.rope_grid > 0 ? rope_axial(t, rows, cols, cfg_.rope_base) : rope(t, positions, cfg_.rope_base);
    };

    const BlockParams& b = block(which);
    if (capture) capture->layers.clear();
    Var h = x;
    for (std::size_t l = 0; l < b.layers.size(); ++l) {
        const LayerParams& p = b.layers[l];
        Var a = norm(h, p.norm1);
        Var q = rotate(split_heads(matmul(a, p.wq), heads));
        Var k = rotate(split_heads(matmul(a, p.wk), heads));
        Var v = split_heads(matmul(a, p.wv), heads);
        Var attn = softmax_last(scale(bmm_nt(q, k), inv_sqrt_dh));
        if (capture) capture->layers.push_back(attn.value().reshaped({batch, heads, seq, seq}));
        h = add(h, matmul(merge_heads(bmm(attn, v), heads), p.wo));
        h = add(h, matmul(activate(matmul(norm(h, p.norm2), p.w1)), p.w2));
        if (!all_finite(h.value()))
            throw std::runtime_error("core_forward: non-finite activations at layer " + std::to_string(l));
    }
    return b.out_norm.defined() ? norm(h, b.out_norm) : h;
}

LevelTokenResult Model::apply_level_token(const Var& z, LevelTokenMode mode, Level which, bool token_present) const {
    switch (mode) {
        case LevelTokenMode::none: return {z, {}};
        case LevelTokenMode::addition: return {add_row(z, tau(which)), {}};
        case LevelTokenMode::prepend_strip:
            return {concat_seq(broadcast_rows(tau(which), z.dim(0), 1), z), {true}};
        case LevelTokenMode::prepend_no_strip:
            if (token_present) return {z, {}};
            return {concat_seq(broadcast_rows(tau(which), z.dim(0), 1), z), {}};
    }
    throw std::logic_error("apply_level_token: bad mode");
}

Var Model::apply_fixup(const Var& out, const LevelFixup& fixup) {
    return fixup.strip ? slice_seq(out, 1, out.dim(1) - 1) : out;
}

Var Model::head_logits(const Var& z) const { return matmul(z, head_); }

std::vector<int> Model::argmax_tokens(const Tensor& logits) {
    const std::size_t v = logits.dim(-1), rows = logits.numel() / v;
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < v; ++j)
            if (logits[r * v + j] > logits[r * v + best]) best = j;
        out[r] = static_cast<int>(best);
    }
    return out;
}

std::pair<Var, std::vector<int>> Model::decode_head(const Var& z) const {
    Var logits = head_logits(z);
    return {logits, argmax_tokens(logits.value())};
}

AttentionTerms Model::logit_decomposition(const Tensor& x, const Tensor& tau, std::size_t layer,
                                          std::size_t head) const {
    const std::size_t d = cfg_.d_model;
    if (x.rank() != 2 || x.dim(1) != d || tau.shape() != Shape{d})
        throw std::invalid_argument("logit_decomposition: expected X [S, D] and tau [D]");
    if (layer >= cfg_.layers || head >= cfg_.heads)
        throw std::out_of_range("logit_decomposition: layer/head out of range");
    const std::size_t s = x.dim(0), dh = d / cfg_.heads, off = head * dh;
    const LayerParams& p = block_L_.layers[layer];
    auto project = [&](const std::vector<double>& row, const Tensor& w) {
        std::vector<double> out(dh, 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < dh; ++j) out[j] += row[i] * w[i * d + off + j];
        return out;
    };
    std::vector<std::vector<double>> xq(s), xk(s);
    for (std::size_t i = 0; i < s; ++i) {
        std::vector<double> row(x.data().begin() + static_cast<long>(i * d),
                                x.data().begin() + static_cast<long>((i + 1) * d));
        xq[i] = project(row, p.wq.value());
        xk[i] = project(row, p.wk.value());
    }
    const std::vector<double> trow(tau.data().begin(), tau.data().end());
    const auto tq = project(trow, p.wq.value()), tk = project(trow, p.wk.value());
    auto dot = [dh](const std::vector<double>& a, const std::vector<double>& b) {
        double r = 0.0;
        for (std::size_t j = 0; j < dh; ++j) r += a[j] * b[j];
        return r;
    };
    AttentionTerms t{Tensor({s, s}), Tensor({s, s}), Tensor({s, s}), Tensor({s, s})};
    const double c = dot(tq, tk);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            t.t1[i * s + j] = dot(xq[i], xk[j]);
            t.t2[i * s + j] = dot(xq[i], tk);
            t.t3[i * s + j] = dot(tq, xk[j]);
            t.t4[i * s + j] = c;
        }
    }
    return t;
}

std::vector<Model::Named> Model::parameters() const {
    std::vector<Named> out{{"embedding", embedding_}};
    auto add_block = [&](const BlockParams& b, const std::string& prefix) {
        for (std::size_t l = 0; l < b.layers.size(); ++l) {
            const auto& p = b.layers[l];
            const std::string s = prefix + ".layer" + std::to_string(l) + ".";
            out.push_back({s + "norm1", p.norm1});
            out.push_back({s + "wq", p.wq});
            out.push_back({s + "wk", p.wk});
            out.push_back({s + "wv", p.wv});
            out.push_back({s + "wo", p.wo});
            out.push_back({s + "norm2", p.norm2});
            out.push_back({s + "w1", p.w1});
            out.push_back({s + "w2", p.w2});
        }
        if (b.out_norm.defined()) out.push_back({prefix + ".out_norm", b.out_norm});
    };
    add_block(block_L_, "core");
    if (cfg_.untied) add_block(block_H_, "core_H");
    out.push_back({"head", head_});
    if (tau_L_.defined()) {
        out.push_back({"tau_L", tau_L_});
        out.push_back({"tau_H", tau_H_});
    }
    if (g_.defined()) out.push_back({"g", g_});
    return out;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.var.value().numel();
    return n;
}

void Model::copy_block_L_to_H() {
    if (!cfg_.untied) throw std::logic_error("copy_block_L_to_H: model is tied");
    auto copy = [](const Var& from, Var& to) { to.mutable_value() = from.value(); };
    for (std::size_t l = 0; l < block_L_.layers.size(); ++l) {
        const auto& a = block_L_.layers[l];
        auto& b = block_H_.layers[l];
        copy(a.norm1, b.norm1);
        copy(a.wq, b.wq);
        copy(a.wk, b.wk);
        copy(a.wv, b.wv);
        copy(a.wo, b.wo);
        copy(a.norm2, b.norm2);
        copy(a.w1, b.w1);
        copy(a.w2, b.w2);
    }
    if (block_L_.out_norm.defined()) copy(block_L_.out_norm, block_H_.out_norm);
}

void Model::save(const std::filesystem::path& dir, const nlohmann::json& extra) const {
    std::filesystem::create_directories(dir);
    std::vector<TensorRecord> records{{"h0", h0_, {}}, {"l0", l0_, {}}};
    nlohmann::json names = nlohmann::json::array({"h0", "l0"});
    for (const auto& p : parameters()) {
        records.push_back({p.name, p.var.value(), {}});
        names.push_back(p.name);
    }
    save_tensor_file(dir / "params.bin", records);
    const nlohmann::json manifest = {{"format", "air-checkpoint-1"},
                                     {"config", cfg_.to_json()},
                                     {"tensors", names},
                                     {"extra", extra.is_null() ? nlohmann::json::object() : extra}};
    write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::pair<Model, nlohmann::json> Model::load(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint " + dir.string() + ": bad manifest: " + e.what());
    }
    Model m(ModelConfig::from_json(manifest.at("config")));
    const auto records = load_tensor_file(dir / "params.bin");
    std::map<std::string, const Tensor*> by_name;
    for (const auto& r : records) by_name[r.name] = &r.tensor;
    auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error("checkpoint " + dir.string() + ": missing tensor " + name);
        if (it->second->shape() != shape)
            throw std::runtime_error("checkpoint " + dir.string() + ": tensor " + name + " has shape " +
                                     shape_str(it->second->shape()) + ", expected " + shape_str(shape));
        return *it->second;
    };
    m.h0_ = fetch("h0", m.h0_.shape());
    m.l0_ = fetch("l0", m.l0_.shape());
    for (auto& p : m.parameters()) p.var.mutable_value() = fetch(p.name, p.var.shape());
    return {std::move(m), manifest.value("extra", nlohmann::json::object())};
}

}  // namespace air::model
