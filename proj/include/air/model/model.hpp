#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/tensor/autograd.hpp"

namespace air::model {

enum class NormKind { rms, layer };
enum class Activation { gelu, silu };
enum class Level { L, H };
enum class LevelTokenMode { none, addition, prepend_strip, prepend_no_strip };

std::string to_string(NormKind v);
std::string to_string(Activation v);
std::string to_string(Level v);
std::string to_string(LevelTokenMode v);
NormKind parse_norm_kind(const std::string& s);
Activation parse_activation(const std::string& s);
LevelTokenMode parse_level_token_mode(const std::string& s);

struct ModelConfig {
    std::size_t vocab = 10;
    std::size_t d_model = 512;
    std::size_t layers = 4;
    std::size_t heads = 8;
    std::size_t mlp_ratio = 4;
    NormKind norm = NormKind::rms;
    Activation activation = Activation::gelu;
    double rope_base = 10000.0;
    std::size_t rope_grid = 0;  // > 0: axial row/column rotary over a rope_grid x rope_grid board
    double norm_eps = 1e-6;
    bool final_norm = true;      // normalise the block output
    bool level_tokens = false;   // allocate tau_L, tau_H
    bool operator_matrix = false;  // allocate g
    bool untied = false;         // separate parameter set for H-updates
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct LayerParams {
    Var norm1, wq, wk, wv, wo, norm2, w1, w2;
};

struct BlockParams {
    std::vector<LayerParams> layers;
    Var out_norm;  // undefined unless ModelConfig::final_norm
};

/// Post-softmax attention of one core call: per layer a [B, heads, S', S']
/// tensor.
struct AttentionCapture {
    std::vector<Tensor> layers;
};

/// What to undo after a core call made on a level-token argument.
struct LevelFixup {
    bool strip = false;
};

struct LevelTokenResult {
    Var input;
    LevelFixup fixup;
};

struct AttentionTerms {
    Tensor t1, t2, t3, t4;  // each [S, S]
};

class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const noexcept { return cfg_; }

    /// tokens [B*S] row-major -> [B, S, D]. Throws std::out_of_range on id >= V.
    Var encode(std::span<const int> tokens, std::size_t batch) const;
    /// Single sequence -> [1, S, D].
    Var encode_input(std::span<const int> tokens) const { return encode(tokens, 1); }

    /// Broadcast copies of h0 (first) and l0 (second), each [B, S, D].
    std::pair<Var, Var> init_states(std::size_t batch, std::size_t seq) const;

    /// Shared block f on x[B, S', D]. `which` picks the parameter set when
    /// untied (ignored otherwise).
    Var core_forward(const Var& x, Level which, AttentionCapture* capture = nullptr) const;

    /// Level-token argument preparation. Under prepend_no_strip pass
    /// `token_present` once the state already carries its prefix slot.
    LevelTokenResult apply_level_token(const Var& z, LevelTokenMode mode, Level which,
                                       bool token_present = false) const;
    static Var apply_fixup(const Var& out, const LevelFixup& fixup);

    /// logits [B, S, V].
    Var head_logits(const Var& z) const;
    /// Argmax per position, lowest id on ties.
    static std::vector<int> argmax_tokens(const Tensor& logits);
    std::pair<Var, std::vector<int>> decode_head(const Var& z) const;

    /// Bilinear attention logit split for addition-mode level tokens,
    /// before rotary rotation and scaling: (X + tau) Wq_h Wk_h^T (X + tau)^T.
    AttentionTerms logit_decomposition(const Tensor& x, const Tensor& tau, std::size_t layer,
                                       std::size_t head) const;

    const Var& embedding() const noexcept { return embedding_; }
    const BlockParams& block(Level which) const;
    BlockParams& block(Level which);
    const Var& head() const noexcept { return head_; }
    const Tensor& h0() const noexcept { return h0_; }
    const Tensor& l0() const noexcept { return l0_; }
    const Var& tau(Level which) const;
    const Var& g() const;
    bool has_g() const noexcept { return g_.defined(); }
    bool has_level_tokens() const noexcept { return tau_L_.defined(); }

    struct Named {
        std::string name;
        Var var;
    };
    /// Trainable parameters in a fixed order.
    std::vector<Named> parameters() const;
    std::size_t parameter_count() const;

    /// Copies theta_L into theta_H (untied mode only).
    void copy_block_L_to_H();

    void save(const std::filesystem::path& dir, const nlohmann::json& extra = {}) const;
    /// Returns the model and the manifest's "extra" object.
    static std::pair<Model, nlohmann::json> load(const std::filesystem::path& dir);

private:
    ModelConfig cfg_;
    Var embedding_;
    BlockParams block_L_;
    BlockParams block_H_;  // empty unless untied
    Var head_;
    Tensor h0_, l0_;
    Var tau_L_, tau_H_, g_;

    Var norm(const Var& x, const Var& gain) const;
    Var activate(const Var& x) const;
};

/// Truncated normal: N(0, std^2) resampled outside [-2 std, 2 std].
Tensor truncated_normal(const Shape& shape, double std, std::mt19937_64& rng);

}  // namespace air::model
