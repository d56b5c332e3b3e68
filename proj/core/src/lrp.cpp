#include <cmath>
#include <vector>

#include "xpb/attrib.hpp"

namespace xpb::attrib {

std::vector<double> epsilon_share(const std::vector<double>& contributions,
                                  double relevance, double eps) {
    double total = 0.0;
    for (double z : contributions) total += z;
    const double denom = total + (total >= 0.0 ? eps : -eps);
    std::vector<double> out(contributions.size());
    for (std::size_t i = 0; i < contributions.size(); ++i)
        out[i] = contributions[i] / denom * relevance;
    return out;
}

namespace {

/// Layer split used by the propagation below. The denominator is the full
/// pre-activation (bias included) plus a sign-consistent stabilizer; the bias
/// and stabilizer mass is reassigned to the inputs in proportion to their
/// contribution magnitudes. Every split therefore hands on exactly the
/// relevance it received, zero contributions receive exactly zero, and the
/// eps -> 0 limit on a bias-free layer is the bare epsilon rule.
std::vector<double> layer_share(const std::vector<double>& contributions, double bias,
                                double relevance, double eps) {
    double pre = bias;
    double magnitude = 0.0;
    for (double z : contributions) {
        pre += z;
        magnitude += std::fabs(z);
    }
    std::vector<double> out(contributions.size(), 0.0);
    if (magnitude == 0.0) return out;
    const double stabilizer = pre >= 0.0 ? eps : -eps;
    const double denom = pre + stabilizer;
    const double mass = bias + stabilizer;
    for (std::size_t i = 0; i < contributions.size(); ++i)
        out[i] = (contributions[i] + mass * std::fabs(contributions[i]) / magnitude) / denom *
                 relevance;
    return out;
}

}  // namespace

Attribution lrp_lstm(const recurrent::RecurrentModel& model,
                     const corpus::IndexSequence& seq, double eps) {
    if (eps <= 0.0) throw ConfigError("lrp eps must be positive");
    const auto trace = recurrent::forward(model, seq);
    const auto E = static_cast<std::size_t>(model.embedding_dim);
    const auto H = static_cast<std::size_t>(model.hidden_dim);
    const std::size_t n = trace.positions.size();

    Attribution out;
    out.method = Method::Lrp;
    out.space = UnitSpace::SequenceSpace;
    out.scores.assign(seq.indices.size(), 0.0);
    if (n == 0) return out;

    const double* W = model.params.data() + model.off_lstm_w();
    const double* B = model.params.data() + model.off_lstm_b();
    const double* out_w = model.params.data() + model.off_out_w();
    const double out_b = model.params[model.off_out_b()];

    // Output layer: the logit splits over the context dimensions.
    std::vector<double> ctx_contrib(H);
    for (std::size_t j = 0; j < H; ++j) ctx_contrib[j] = out_w[j] * trace.context[j];
    const std::vector<double> r_ctx = layer_share(ctx_contrib, out_b, trace.logit, eps);

    // Pooling layer: context relevance lands on per-step hidden states.
    // Attention weights act as fixed mixing coefficients; in self-attention
    // the query/key projections shape them but receive no relevance.
    std::vector<std::vector<double>> r_h(n, std::vector<double>(H, 0.0));
    switch (model.attention) {
        case recurrent::AttentionMode::None:
            r_h[n - 1] = r_ctx;
            break;
        case recurrent::AttentionMode::DotProduct: {
            std::vector<double> contrib(n);
            for (std::size_t j = 0; j < H; ++j) {
                for (std::size_t i = 0; i < n; ++i)
                    contrib[i] = trace.alpha[static_cast<std::size_t>(trace.positions[i])] *
                                 trace.h[i][j];
                const auto share = layer_share(contrib, 0.0, r_ctx[j], eps);
                for (std::size_t i = 0; i < n; ++i) r_h[i][j] += share[i];
            }
            break;
        }
        case recurrent::AttentionMode::SelfAttention: {
            const double* Wv = model.params.data() + model.off_attention() + 2 * H * H;
            std::vector<std::vector<double>> r_v(n, std::vector<double>(H, 0.0));
            std::vector<double> contrib(n);
            for (std::size_t d = 0; d < H; ++d) {
                for (std::size_t i = 0; i < n; ++i)
                    contrib[i] = trace.attn_out[i][d] / static_cast<double>(n);
                const auto share = layer_share(contrib, 0.0, r_ctx[d], eps);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j)
                        contrib[j] = trace.attn_rows[i][j] * trace.v[j][d];
                    const auto vshare = layer_share(contrib, 0.0, share[i], eps);
                    for (std::size_t j = 0; j < n; ++j) r_v[j][d] += vshare[j];
                }
            }
            std::vector<double> hcontrib(H);
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t d = 0; d < H; ++d) {
                    for (std::size_t e = 0; e < H; ++e)
                        hcontrib[e] = Wv[d * H + e] * trace.h[j][e];
                    const auto share = layer_share(hcontrib, 0.0, r_v[j][d], eps);
                    for (std::size_t e = 0; e < H; ++e) r_h[j][e] += share[e];
                }
            }
            break;
        }
    }

    // Recurrence, newest step first. The output gate and tanh pass relevance
    // straight through to the cell; the cell splits between carry and input
    // candidate; the candidate distributes over [x_t ; h_{t-1}] through its
    // pre-activation weights, the gate bias folded into the denominator.
    std::vector<double> r_c(H, 0.0);
    std::vector<double> concat(E + H), wrow(E + H);
    for (std::size_t t = n; t-- > 0;) {
        for (std::size_t lane = 0; lane < H; ++lane) r_c[lane] += r_h[t][lane];

        std::vector<double> r_c_prev(H, 0.0), r_g(H, 0.0);
        for (std::size_t lane = 0; lane < H; ++lane) {
            const double carry =
                trace.gf[t][lane] * (t > 0 ? trace.c[t - 1][lane] : 0.0);
            const double fresh = trace.gi[t][lane] * trace.gg[t][lane];
            const auto share = layer_share({carry, fresh}, 0.0, r_c[lane], eps);
            r_c_prev[lane] = share[0];
            r_g[lane] = share[1];
        }

        for (std::size_t e = 0; e < E; ++e) concat[e] = trace.x[t][e];
        for (std::size_t lane = 0; lane < H; ++lane)
            concat[E + lane] = t > 0 ? trace.h[t - 1][lane] : 0.0;

        double step_score = 0.0;
        for (std::size_t lane = 0; lane < H; ++lane) {
            const double* row = W + (2 * H + lane) * (E + H);
            for (std::size_t e = 0; e < E + H; ++e) wrow[e] = row[e] * concat[e];
            const auto share = layer_share(wrow, B[2 * H + lane], r_g[lane], eps);
            for (std::size_t e = 0; e < E; ++e) step_score += share[e];
            if (t > 0)
                for (std::size_t e = 0; e < H; ++e) r_h[t - 1][e] += share[E + e];
        }
        out.scores[static_cast<std::size_t>(trace.positions[t])] = step_score;
        r_c = r_c_prev;
    }
    return out;
}

Attribution lrp_lstm(const recurrent::RecurrentModel& model,
                     const corpus::EventSequence& record, double eps) {
    Attribution out = lrp_lstm(model, corpus::encode_indices(record, model.vocabulary), eps);
    out.target = record.id;
    return out;
}

}  // namespace xpb::attrib
