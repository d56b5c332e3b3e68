#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "xpb/corpus.hpp"
#include "xpb/history.hpp"

namespace xpb::recurrent {

enum class AttentionMode { None, DotProduct, SelfAttention };

struct RecurrentConfig {
    int embedding_dim = 8;
    int hidden_dim = 16;
    AttentionMode attention = AttentionMode::DotProduct;
    double learning_rate = 0.0003;
    int epochs = 30;
    int batch_size = 64;
    double l2_penalty = 0.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

/// H=16, E=8, lr=0.0003: capacity matched to the synthetic task.
RecurrentConfig right_sized_config(AttentionMode mode, std::uint64_t seed);
/// E=16, lr=0.001: deliberately oversized/overspeeded variant.
RecurrentConfig oversized_config(AttentionMode mode, std::uint64_t seed);

/// All trainable parameters in one flat vector:
///   embedding (V+1 rows of E, row 0 frozen at zero)
///   lstm weights (4H x (E+H), gate row blocks i,f,g,o; columns x then h)
///   lstm biases (4H)
///   attention Wq,Wk,Wv (H x H each, SelfAttention only)
///   output weights (H) and bias (1)
struct RecurrentModel {
    corpus::Vocabulary vocabulary;
    int embedding_dim = 0;
    int hidden_dim = 0;
    AttentionMode attention = AttentionMode::None;
    std::vector<double> params;

    std::size_t off_embedding() const { return 0; }
    std::size_t off_lstm_w() const;
    std::size_t off_lstm_b() const;
    std::size_t off_attention() const;  // Wq; Wk and Wv follow at H*H strides
    std::size_t off_out_w() const;
    std::size_t off_out_b() const;
    std::size_t param_count() const;

    const double* embedding_row(int index) const;
};

/// Everything the forward pass computed. Padding positions (index 0) are
/// skipped by the recurrence: `positions` lists the original positions that
/// fed the cell, the per-step vectors run over those effective steps, and
/// `alpha` runs over the ORIGINAL positions with zeros at padding slots. An
/// all-padding input yields zero context and the output-bias logit.
struct ForwardTrace {
    std::vector<int> positions;
    std::vector<std::vector<double>> x;   // effective step embeddings, E each
    std::vector<std::vector<double>> gi, gf, gg, go;  // gate activations, H each
    std::vector<std::vector<double>> c, h;            // cell and hidden states
    std::vector<double> scores;           // DotProduct: raw per-step scores
    std::vector<std::vector<double>> q, k, v;         // SelfAttention internals
    std::vector<std::vector<double>> attn_rows;       // SelfAttention: softmax rows
    std::vector<std::vector<double>> attn_out;        // SelfAttention: per-step outputs
    std::vector<double> alpha;            // one weight per original position
    std::vector<double> context;          // H
    double logit = 0.0;
    double probability = 0.5;
};

/// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, +1 forget bias, zero padding row.
RecurrentModel init_model(const RecurrentConfig& config, const corpus::Vocabulary& vocab);

ForwardTrace forward(const RecurrentModel& model, const corpus::IndexSequence& seq);

struct Example {
    corpus::IndexSequence seq;
    int label = 0;
    std::int64_t id = 0;
};

/// Mean BCE loss over the batch (plus l2/2 * ||params||^2 outside the frozen
/// padding row when l2 > 0); accumulates exact gradients into `grad`, which
/// is resized and zeroed here. Returns the loss.
double loss_and_gradients(const RecurrentModel& model, const std::vector<Example>& batch,
                          double l2, std::vector<double>& grad);

using SimilarityProbe = std::function<double(const RecurrentModel&)>;

/// Adam mini-batch training. Records are canonicalized by id before the
/// seeded epoch shuffle, so input order cannot affect the trajectory.
/// Returns the best-validation-AUC epoch snapshot plus the full history.
std::pair<RecurrentModel, TrainingHistory> fit(const RecurrentModel& init,
                                               const corpus::Dataset& train,
                                               const corpus::Dataset& val,
                                               const RecurrentConfig& config,
                                               const SimilarityProbe& probe = nullptr);

void save_recurrent(const RecurrentModel& model, const std::filesystem::path& path);
RecurrentModel load_recurrent(const std::filesystem::path& path);

}  // namespace xpb::recurrent
