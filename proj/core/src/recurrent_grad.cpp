#include <algorithm>
#include <cmath>
#include <numeric>

#include "xpb/metrics.hpp"
#include "xpb/recurrent.hpp"
#include "xpb/rng.hpp"

namespace xpb::recurrent {

namespace {

/// Backward pass for one record; dz is dLoss/dlogit.
void backward_record(const RecurrentModel& model, const corpus::IndexSequence& seq,
                     const ForwardTrace& tr, double dz, std::vector<double>& grad) {
    const auto E = static_cast<std::size_t>(model.embedding_dim);
    const auto H = static_cast<std::size_t>(model.hidden_dim);
    const double* W = model.params.data() + model.off_lstm_w();
    const double* w_out = model.params.data() + model.off_out_w();
    double* dW = grad.data() + model.off_lstm_w();
    double* db = grad.data() + model.off_lstm_b();
    double* dw_out = grad.data() + model.off_out_w();

    const std::size_t n = tr.positions.size();
    grad[model.off_out_b()] += dz;
    if (n == 0) return;

    std::vector<double> dctx(H);
    for (std::size_t j = 0; j < H; ++j) {
        dw_out[j] += dz * tr.context[j];
        dctx[j] = dz * w_out[j];
    }

    std::vector<std::vector<double>> dh_acc(n, std::vector<double>(H, 0.0));
    switch (model.attention) {
        case AttentionMode::None: {
            for (std::size_t j = 0; j < H; ++j) dh_acc[n - 1][j] += dctx[j];
            break;
        }
        case AttentionMode::DotProduct: {
            std::vector<double> a(n), dalpha(n);
            for (std::size_t i = 0; i < n; ++i)
                a[i] = tr.alpha[static_cast<std::size_t>(tr.positions[i])];
            for (std::size_t i = 0; i < n; ++i) {
                double d = 0.0;
                for (std::size_t j = 0; j < H; ++j) {
                    d += dctx[j] * tr.h[i][j];
                    dh_acc[i][j] += a[i] * dctx[j];
                }
                dalpha[i] = d;
            }
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += a[i] * dalpha[i];
            const auto& query = tr.h[n - 1];
            for (std::size_t i = 0; i < n; ++i) {
                const double ds = a[i] * (dalpha[i] - dot);
                for (std::size_t j = 0; j < H; ++j) {
                    dh_acc[i][j] += ds * query[j];
                    dh_acc[n - 1][j] += ds * tr.h[i][j];
                }
            }
            break;
        }
        case AttentionMode::SelfAttention: {
            const double* Wq = model.params.data() + model.off_attention();
            const double* Wk = Wq + H * H;
            const double* Wv = Wk + H * H;
            double* dWq = grad.data() + model.off_attention();
            double* dWk = dWq + H * H;
            double* dWv = dWk + H * H;
            const double inv_scale = 1.0 / std::sqrt(static_cast<double>(H));
            const double inv_n = 1.0 / static_cast<double>(n);

            std::vector<std::vector<double>> dq(n, std::vector<double>(H, 0.0));
            std::vector<std::vector<double>> dk(n, std::vector<double>(H, 0.0));
            std::vector<std::vector<double>> dv(n, std::vector<double>(H, 0.0));
            std::vector<double> dA(n), dS(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& row = tr.attn_rows[i];
                // context = mean_i attn_out[i], so dLoss/d(attn_out[i]) = dctx/n.
                double rowdot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    double d = 0.0;
                    for (std::size_t c = 0; c < H; ++c) d += dctx[c] * inv_n * tr.v[j][c];
                    dA[j] = d;
                    rowdot += row[j] * d;
                    for (std::size_t c = 0; c < H; ++c) dv[j][c] += row[j] * dctx[c] * inv_n;
                }
                for (std::size_t j = 0; j < n; ++j) {
                    dS[j] = row[j] * (dA[j] - rowdot);
                    for (std::size_t c = 0; c < H; ++c) {
                        dq[i][c] += dS[j] * tr.k[j][c] * inv_scale;
                        dk[j][c] += dS[j] * tr.q[i][c] * inv_scale;
                    }
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t r = 0; r < H; ++r) {
                    for (std::size_t c = 0; c < H; ++c) {
                        dWq[r * H + c] += dq[i][r] * tr.h[i][c];
                        dWk[r * H + c] += dk[i][r] * tr.h[i][c];
                        dWv[r * H + c] += dv[i][r] * tr.h[i][c];
                        dh_acc[i][c] += Wq[r * H + c] * dq[i][r] + Wk[r * H + c] * dk[i][r] +
                                        Wv[r * H + c] * dv[i][r];
                    }
                }
            }
            break;
        }
    }

    // Backward through time; dc carries across steps.
    std::vector<double> dh(H), dc(H, 0.0), da(4 * H), dx(E), dh_prev(H);
    for (std::size_t t = n; t-- > 0;) {
        dh = dh_acc[t];  // pooling term plus the recurrence term folded in below
        const auto& gi = tr.gi[t];
        const auto& gf = tr.gf[t];
        const auto& gg = tr.gg[t];
        const auto& go = tr.go[t];
        for (std::size_t j = 0; j < H; ++j) {
            const double tc = std::tanh(tr.c[t][j]);
            const double dgo = dh[j] * tc;
            dc[j] += dh[j] * go[j] * (1.0 - tc * tc);
            const double c_prev = t > 0 ? tr.c[t - 1][j] : 0.0;
            const double di = dc[j] * gg[j];
            const double df = dc[j] * c_prev;
            const double dg = dc[j] * gi[j];
            da[j] = di * gi[j] * (1.0 - gi[j]);
            da[H + j] = df * gf[j] * (1.0 - gf[j]);
            da[2 * H + j] = dg * (1.0 - gg[j] * gg[j]);
            da[3 * H + j] = dgo * go[j] * (1.0 - go[j]);
            dc[j] *= gf[j];  // becomes the carry for step t-1
        }
        std::fill(dx.begin(), dx.end(), 0.0);
        std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
        const std::vector<double>* h_prev = t > 0 ? &tr.h[t - 1] : nullptr;
        for (std::size_t r = 0; r < 4 * H; ++r) {
            const double* row = W + r * (E + H);
            double* drow = dW + r * (E + H);
            const double d = da[r];
            if (d == 0.0) continue;
            db[r] += d;
            for (std::size_t j = 0; j < E; ++j) {
                drow[j] += d * tr.x[t][j];
                dx[j] += row[j] * d;
            }
            if (h_prev) {
                for (std::size_t j = 0; j < H; ++j) {
                    drow[E + j] += d * (*h_prev)[j];
                    dh_prev[j] += row[E + j] * d;
                }
            }
        }
        const int token = seq.indices[static_cast<std::size_t>(tr.positions[t])];
        double* demb = grad.data() + static_cast<std::size_t>(token) * E;
        for (std::size_t j = 0; j < E; ++j) demb[j] += dx[j];
        if (t > 0)
            for (std::size_t j = 0; j < H; ++j) dh_acc[t - 1][j] += dh_prev[j];
    }
}

std::vector<Example> encode_examples(const corpus::Dataset& ds) {
    std::vector<Example> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records)
        out.push_back({corpus::encode_indices(r, ds.vocabulary), r.label, r.id});
    return out;
}

}  // namespace

double loss_and_gradients(const RecurrentModel& model, const std::vector<Example>& batch,
                          double l2, std::vector<double>& grad) {
    if (batch.empty()) throw DegenerateDataset("gradient of an empty batch");
    grad.assign(model.params.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& ex : batch) {
        ForwardTrace tr = forward(model, ex.seq);
        const double p = std::clamp(tr.probability, 1e-12, 1.0 - 1e-12);
        loss += (ex.label == 1 ? -std::log(p) : -std::log(1.0 - p)) * inv_n;
        backward_record(model, ex.seq, tr, (tr.probability - ex.label) * inv_n, grad);
    }
    if (l2 > 0.0) {
        const auto E = static_cast<std::size_t>(model.embedding_dim);
        for (std::size_t p = E; p < model.params.size(); ++p) {  // skip the padding row
            loss += 0.5 * l2 * model.params[p] * model.params[p];
            grad[p] += l2 * model.params[p];
        }
    }
    std::fill(grad.begin(), grad.begin() + model.embedding_dim, 0.0);
    return loss;
}

std::pair<RecurrentModel, TrainingHistory> fit(const RecurrentModel& init,
                                               const corpus::Dataset& train,
                                               const corpus::Dataset& val,
                                               const RecurrentConfig& config,
                                               const SimilarityProbe& probe) {
    config.validate();
    if (init.params.size() != init.param_count())
        throw ModelError("initial model has a malformed parameter vector");
    if (!(train.vocabulary == val.vocabulary) || !(train.vocabulary == init.vocabulary))
        throw SchemaError("model, train, and validation vocabularies must agree");

    std::vector<Example> examples = encode_examples(train);
    std::sort(examples.begin(), examples.end(),
              [](const Example& a, const Example& b) { return a.id < b.id; });
    int positives = 0;
    for (const auto& ex : examples) positives += ex.label;
    if (examples.empty() || positives == 0 || positives == static_cast<int>(examples.size()))
        throw DegenerateDataset("training split must contain both classes");

    std::vector<Example> val_examples = encode_examples(val);
    std::vector<int> val_labels;
    for (const auto& ex : val_examples) val_labels.push_back(ex.label);

    TrainingHistory history;
    if (config.epochs == 0) return {init, history};

    RecurrentModel work = init;
    std::vector<double> m(work.params.size(), 0.0), v(work.params.size(), 0.0);
    std::vector<double> grad;
    RecurrentModel best = work;
    double best_auc = -1.0;
    long step = 0;
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, "epoch", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int batches = 0;
        std::vector<Example> batch;
        for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
            batch.clear();
            const std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
            for (std::size_t i = at; i < end; ++i) batch.push_back(examples[order[i]]);
            loss_sum += loss_and_gradients(work, batch, config.l2_penalty, grad);
            ++batches;
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t p = 0; p < work.params.size(); ++p) {
                m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
                v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
                work.params[p] -=
                    config.learning_rate * (m[p] / c1) / (std::sqrt(v[p] / c2) + adam_eps);
            }
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.train_loss = loss_sum / batches;
        std::vector<double> val_scores;
        val_scores.reserve(val_examples.size());
        for (const auto& ex : val_examples)
            val_scores.push_back(forward(work, ex.seq).probability);
        stat.val_auc = metrics::auc(val_labels, val_scores);
        if (probe) stat.val_similarity = probe(work);
        if (stat.val_auc > best_auc) {
            best_auc = stat.val_auc;
            best = work;
        }
        history.entries.push_back(stat);
    }
    return {std::move(best), std::move(history)};
}

}  // namespace xpb::recurrent
