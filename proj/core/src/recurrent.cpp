#include "xpb/recurrent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "xpb/metrics.hpp"
#include "xpb/rng.hpp"

namespace xpb::recurrent {

namespace {

using json = nlohmann::ordered_json;

std::string mode_name(AttentionMode m) {
    switch (m) {
        case AttentionMode::None: return "none";
        case AttentionMode::DotProduct: return "dot";
        case AttentionMode::SelfAttention: return "self";
    }
    throw ModelError("unreachable attention mode");
}

AttentionMode mode_from_name(const std::string& s) {
    if (s == "none") return AttentionMode::None;
    if (s == "dot") return AttentionMode::DotProduct;
    if (s == "self") return AttentionMode::SelfAttention;
    throw SchemaError("unknown attention mode: " + s);
}

void softmax_inplace(std::vector<double>& v) {
    const double peak = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - peak);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

}  // namespace

void RecurrentConfig::validate() const {
    if (embedding_dim < 1 || hidden_dim < 1)
        throw ConfigError("embedding and hidden dims must be at least 1");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (l2_penalty < 0.0) throw ConfigError("l2 penalty must be non-negative");
}

RecurrentConfig right_sized_config(AttentionMode mode, std::uint64_t seed) {
    RecurrentConfig cfg;
    cfg.embedding_dim = 8;
    cfg.hidden_dim = 16;
    cfg.learning_rate = 0.0003;
    cfg.attention = mode;
    cfg.seed = seed;
    return cfg;
}

RecurrentConfig oversized_config(AttentionMode mode, std::uint64_t seed) {
    RecurrentConfig cfg = right_sized_config(mode, seed);
    cfg.embedding_dim = 16;
    cfg.learning_rate = 0.001;
    return cfg;
}

std::size_t RecurrentModel::off_lstm_w() const {
    return (vocabulary.size() + 1) * static_cast<std::size_t>(embedding_dim);
}

std::size_t RecurrentModel::off_lstm_b() const {
    const auto H = static_cast<std::size_t>(hidden_dim);
    const auto E = static_cast<std::size_t>(embedding_dim);
    return off_lstm_w() + 4 * H * (E + H);
}

std::size_t RecurrentModel::off_attention() const {
    return off_lstm_b() + 4 * static_cast<std::size_t>(hidden_dim);
}

std::size_t RecurrentModel::off_out_w() const {
    const auto H = static_cast<std::size_t>(hidden_dim);
    return off_attention() + (attention == AttentionMode::SelfAttention ? 3 * H * H : 0);
}

std::size_t RecurrentModel::off_out_b() const {
    return off_out_w() + static_cast<std::size_t>(hidden_dim);
}

std::size_t RecurrentModel::param_count() const { return off_out_b() + 1; }

const double* RecurrentModel::embedding_row(int index) const {
    return params.data() + static_cast<std::size_t>(index) * embedding_dim;
}

RecurrentModel init_model(const RecurrentConfig& config, const corpus::Vocabulary& vocab) {
    config.validate();
    RecurrentModel m;
    m.vocabulary = vocab;
    m.embedding_dim = config.embedding_dim;
    m.hidden_dim = config.hidden_dim;
    m.attention = config.attention;
    m.params.assign(m.param_count(), 0.0);

    const double scale = 1.0 / std::sqrt(static_cast<double>(config.hidden_dim));
    Rng rng(derive_seed(config.seed, "init"));
    for (std::size_t p = 0; p < m.params.size(); ++p)
        m.params[p] = (2.0 * rng.uniform() - 1.0) * scale;

    // Padding embedding stays zero; biases restart at zero with the forget
    // gate opened so early training does not wash out the cell state.
    std::fill(m.params.begin(), m.params.begin() + static_cast<std::ptrdiff_t>(m.embedding_dim),
              0.0);
    const auto H = static_cast<std::size_t>(m.hidden_dim);
    double* b = m.params.data() + m.off_lstm_b();
    for (std::size_t j = 0; j < 4 * H; ++j) b[j] = (j >= H && j < 2 * H) ? 1.0 : 0.0;
    m.params[m.off_out_b()] = 0.0;
    return m;
}

ForwardTrace forward(const RecurrentModel& model, const corpus::IndexSequence& seq) {
    if (seq.indices.empty()) throw EmptySequence("forward on an empty sequence");
    if (model.params.size() != model.param_count())
        throw ModelError("parameter vector does not match the model shape");
    const int V = static_cast<int>(model.vocabulary.size());
    const auto E = static_cast<std::size_t>(model.embedding_dim);
    const auto H = static_cast<std::size_t>(model.hidden_dim);
    const double* W = model.params.data() + model.off_lstm_w();
    const double* b = model.params.data() + model.off_lstm_b();

    ForwardTrace tr;
    tr.alpha.assign(seq.indices.size(), 0.0);

    std::vector<double> h_prev(H, 0.0), c_prev(H, 0.0);
    for (std::size_t pos = 0; pos < seq.indices.size(); ++pos) {
        const int idx = seq.indices[pos];
        if (idx < 0 || idx > V)
            throw UnknownToken("sequence index " + std::to_string(idx) + " out of range");
        if (idx == corpus::kPaddingIndex) continue;

        std::vector<double> x(model.embedding_row(idx), model.embedding_row(idx) + E);
        std::vector<double> gi(H), gf(H), gg(H), go(H), c(H), h(H);
        for (std::size_t r = 0; r < 4 * H; ++r) {
            const double* row = W + r * (E + H);
            double a = b[r];
            for (std::size_t j = 0; j < E; ++j) a += row[j] * x[j];
            for (std::size_t j = 0; j < H; ++j) a += row[E + j] * h_prev[j];
            const std::size_t lane = r % H;
            if (r < H) gi[lane] = metrics::sigmoid(a);
            else if (r < 2 * H) gf[lane] = metrics::sigmoid(a);
            else if (r < 3 * H) gg[lane] = std::tanh(a);
            else go[lane] = metrics::sigmoid(a);
        }
        for (std::size_t j = 0; j < H; ++j) {
            c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
            h[j] = go[j] * std::tanh(c[j]);
        }
        tr.positions.push_back(static_cast<int>(pos));
        tr.x.push_back(std::move(x));
        tr.gi.push_back(std::move(gi));
        tr.gf.push_back(std::move(gf));
        tr.gg.push_back(std::move(gg));
        tr.go.push_back(std::move(go));
        tr.c.push_back(c);
        tr.h.push_back(h);
        c_prev = std::move(c);
        h_prev = std::move(h);
    }

    const std::size_t n = tr.positions.size();
    tr.context.assign(H, 0.0);
    if (n > 0) {
        switch (model.attention) {
            case AttentionMode::None: {
                tr.context = tr.h.back();
                tr.alpha[static_cast<std::size_t>(tr.positions.back())] = 1.0;
                break;
            }
            case AttentionMode::DotProduct: {
                const auto& query = tr.h.back();
                tr.scores.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < H; ++j) s += tr.h[i][j] * query[j];
                    tr.scores[i] = s;
                }
                std::vector<double> a = tr.scores;
                softmax_inplace(a);
                for (std::size_t i = 0; i < n; ++i) {
                    tr.alpha[static_cast<std::size_t>(tr.positions[i])] = a[i];
                    for (std::size_t j = 0; j < H; ++j) tr.context[j] += a[i] * tr.h[i][j];
                }
                break;
            }
            case AttentionMode::SelfAttention: {
                const double* Wq = model.params.data() + model.off_attention();
                const double* Wk = Wq + H * H;
                const double* Wv = Wk + H * H;
                auto project = [&](const double* P, const std::vector<double>& in) {
                    std::vector<double> out(H, 0.0);
                    for (std::size_t r = 0; r < H; ++r)
                        for (std::size_t j = 0; j < H; ++j) out[r] += P[r * H + j] * in[j];
                    return out;
                };
                for (std::size_t i = 0; i < n; ++i) {
                    tr.q.push_back(project(Wq, tr.h[i]));
                    tr.k.push_back(project(Wk, tr.h[i]));
                    tr.v.push_back(project(Wv, tr.h[i]));
                }
                const double inv_scale = 1.0 / std::sqrt(static_cast<double>(H));
                for (std::size_t i = 0; i < n; ++i) {
                    std::vector<double> row(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t d = 0; d < H; ++d) s += tr.q[i][d] * tr.k[j][d];
                        row[j] = s * inv_scale;
                    }
                    softmax_inplace(row);
                    std::vector<double> out(H, 0.0);
                    for (std::size_t j = 0; j < n; ++j)
                        for (std::size_t d = 0; d < H; ++d) out[d] += row[j] * tr.v[j][d];
                    tr.attn_rows.push_back(std::move(row));
                    tr.attn_out.push_back(std::move(out));
                }
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t d = 0; d < H; ++d)
                        tr.context[d] += tr.attn_out[i][d] / static_cast<double>(n);
                // Attention a position receives, averaged over queries.
                for (std::size_t j = 0; j < n; ++j) {
                    double received = 0.0;
                    for (std::size_t i = 0; i < n; ++i) received += tr.attn_rows[i][j];
                    tr.alpha[static_cast<std::size_t>(tr.positions[j])] =
                        received / static_cast<double>(n);
                }
                break;
            }
        }
    }

    const double* w_out = model.params.data() + model.off_out_w();
    double z = model.params[model.off_out_b()];
    for (std::size_t j = 0; j < H; ++j) z += w_out[j] * tr.context[j];
    tr.logit = z;
    tr.probability = metrics::sigmoid(z);
    return tr;
}

void save_recurrent(const RecurrentModel& model, const std::filesystem::path& path) {
    json vocab = json::array();
    for (const auto& e : model.vocabulary.entries())
        vocab.push_back({{"name", e.name},
                         {"category", std::string(1, corpus::category_letter(e.category))}});
    json doc = {{"version", 1},
                {"kind", "recurrent"},
                {"embedding_dim", model.embedding_dim},
                {"hidden_dim", model.hidden_dim},
                {"attention", mode_name(model.attention)},
                {"vocab", std::move(vocab)},
                {"params", model.params}};
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << doc.dump() << '\n';
}

RecurrentModel load_recurrent(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open for reading: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ParseError("malformed model file", 1);
    if (!doc.contains("kind") || doc["kind"] != "recurrent" || doc["version"] != 1)
        throw SchemaError("not a version-1 recurrent model file");

    RecurrentModel m;
    std::vector<std::pair<std::string, corpus::TokenCategory>> spec;
    for (const auto& e : doc.at("vocab"))
        spec.emplace_back(e.at("name").get<std::string>(),
                          corpus::category_from_letter(e.at("category").get<std::string>().at(0)));
    m.vocabulary = corpus::build_vocabulary(spec);
    m.embedding_dim = doc.at("embedding_dim").get<int>();
    m.hidden_dim = doc.at("hidden_dim").get<int>();
    m.attention = mode_from_name(doc.at("attention").get<std::string>());
    m.params = doc.at("params").get<std::vector<double>>();
    if (m.params.size() != m.param_count())
        throw SchemaError("parameter count does not match the declared shape");
    return m;
}

}  // namespace xpb::recurrent
