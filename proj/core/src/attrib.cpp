#include "xpb/attrib.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "xpb/rng.hpp"

namespace xpb::attrib {

namespace {

struct Row {
    std::uint64_t mask = 0;
    double weight = 0.0;
    double value = 0.0;
};

std::vector<std::uint8_t> bits_of(std::uint64_t mask, std::size_t M) {
    std::vector<std::uint8_t> out(M, 0);
    for (std::size_t j = 0; j < M; ++j) out[j] = (mask >> j) & 1u;
    return out;
}

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

/// Kernel mass of one subset size: C(M,s) * w(s) = (M-1)/(s*(M-s)).
double size_mass(std::size_t M, std::size_t s) {
    return static_cast<double>(M - 1) /
           (static_cast<double>(s) * static_cast<double>(M - s));
}

/// Next subset of the same popcount (Gosper); mask must be nonzero.
std::uint64_t next_subset(std::uint64_t mask) {
    const std::uint64_t c = mask & (~mask + 1);
    const std::uint64_t r = mask + c;
    return (((r ^ mask) >> 2) / c) | r;
}

/// Solves the kernel-weighted least squares with the efficiency constraint
/// eliminated through the last unit.
std::vector<double> solve_constrained(const std::vector<Row>& rows, std::size_t M,
                                      double v0, double delta, double ridge) {
    const std::size_t D = M - 1;
    std::vector<double> A(D * D, 0.0), b(D, 0.0), x(D);
    std::vector<double> xr(D);
    for (const Row& r : rows) {
        const double zlast = (r.mask >> (M - 1)) & 1u ? 1.0 : 0.0;
        const double y = r.value - v0 - zlast * delta;
        for (std::size_t j = 0; j < D; ++j)
            xr[j] = static_cast<double>((r.mask >> j) & 1u) - zlast;
        for (std::size_t j = 0; j < D; ++j) {
            if (xr[j] == 0.0) continue;
            const double wj = r.weight * xr[j];
            b[j] += wj * y;
            for (std::size_t k = 0; k < D; ++k) A[j * D + k] += wj * xr[k];
        }
    }
    for (std::size_t j = 0; j < D; ++j) A[j * D + j] += ridge;

    // Gaussian elimination with partial pivoting.
    std::vector<std::size_t> perm(D);
    for (std::size_t j = 0; j < D; ++j) perm[j] = j;
    for (std::size_t col = 0; col < D; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < D; ++r)
            if (std::abs(A[perm[r] * D + col]) > std::abs(A[perm[pivot] * D + col])) pivot = r;
        std::swap(perm[col], perm[pivot]);
        const double diag = A[perm[col] * D + col];
        if (std::abs(diag) < 1e-12) {
            if (ridge < 1e-8)
                return solve_constrained(rows, M, v0, delta, 1e-8);
            throw EvaluationError("singular coalition design matrix");
        }
        for (std::size_t r = col + 1; r < D; ++r) {
            const double f = A[perm[r] * D + col] / diag;
            if (f == 0.0) continue;
            for (std::size_t k = col; k < D; ++k) A[perm[r] * D + k] -= f * A[perm[col] * D + k];
            b[perm[r]] -= f * b[perm[col]];
        }
    }
    for (std::size_t col = D; col-- > 0;) {
        double s = b[perm[col]];
        for (std::size_t k = col + 1; k < D; ++k) s -= A[perm[col] * D + k] * x[k];
        x[col] = s / A[perm[col] * D + col];
    }

    std::vector<double> phi(M, 0.0);
    double sum = 0.0;
    for (std::size_t j = 0; j < D; ++j) {
        phi[j] = x[j];
        sum += x[j];
    }
    phi[M - 1] = delta - sum;
    return phi;
}

std::vector<Row> enumerate_all(const CoalitionValue& value, std::size_t M) {
    std::vector<Row> rows;
    rows.reserve((std::size_t{1} << M) - 2);
    const std::uint64_t full = (std::uint64_t{1} << M) - 1;
    for (std::uint64_t mask = 1; mask < full; ++mask) {
        const auto s = static_cast<std::size_t>(std::popcount(mask));
        const double w = size_mass(M, s) / binomial(M, s);
        rows.push_back({mask, w, value(bits_of(mask, M))});
    }
    return rows;
}

std::vector<Row> sample_hybrid(const CoalitionValue& value, std::size_t M,
                               const ShapConfig& cfg) {
    const auto budget = static_cast<std::size_t>(cfg.coalition_samples);
    if (budget < 2 * M + 4)
        throw ConfigError("coalition budget below 2*units + 4");

    std::vector<Row> rows;
    std::vector<std::uint8_t> complete(M, 0);
    std::size_t remaining = budget;

    // Complete size pairs, outside-in; the kernel mass is largest there.
    for (std::size_t s = 1; s <= M / 2; ++s) {
        const std::size_t partner = M - s;
        const bool paired = partner != s;
        const double count = binomial(M, s) * (paired ? 2.0 : 1.0);
        if (count > static_cast<double>(remaining)) break;
        for (std::size_t side = 0; side < (paired ? 2u : 1u); ++side) {
            const std::size_t sz = side == 0 ? s : partner;
            const double w = size_mass(M, sz) / binomial(M, sz);
            std::uint64_t mask = (std::uint64_t{1} << sz) - 1;
            const std::uint64_t limit = std::uint64_t{1} << M;
            while (mask < limit) {
                rows.push_back({mask, w, value(bits_of(mask, M))});
                if (mask == 0) break;
                mask = next_subset(mask);
            }
            complete[sz] = 1;
        }
        remaining -= static_cast<std::size_t>(count);
    }

    std::vector<std::size_t> open;
    double open_mass = 0.0;
    for (std::size_t s = 1; s < M; ++s) {
        if (!complete[s]) {
            open.push_back(s);
            open_mass += size_mass(M, s);
        }
    }
    if (open.empty() || remaining == 0) return rows;

    // Paired sampling over the open sizes, deduplicated by accumulating
    // draw counts per mask.
    Rng rng(cfg.seed);
    std::map<std::uint64_t, int> counts;
    std::size_t draws = 0;
    std::vector<std::size_t> deck(M);
    while (draws < remaining) {
        double pick = rng.uniform() * open_mass;
        std::size_t s = open.back();
        for (std::size_t cand : open) {
            pick -= size_mass(M, cand);
            if (pick <= 0.0) {
                s = cand;
                break;
            }
        }
        for (std::size_t j = 0; j < M; ++j) deck[j] = j;
        std::uint64_t mask = 0;
        for (std::size_t j = 0; j < s; ++j) {
            std::swap(deck[j], deck[j + rng.index(M - j)]);
            mask |= std::uint64_t{1} << deck[j];
        }
        ++counts[mask];
        ++draws;
        if (draws < remaining) {
            const std::uint64_t complement = ((std::uint64_t{1} << M) - 1) & ~mask;
            ++counts[complement];
            ++draws;
        }
    }
    for (const auto& [mask, count] : counts) {
        const double w = open_mass * static_cast<double>(count) / static_cast<double>(draws);
        rows.push_back({mask, w, value(bits_of(mask, M))});
    }
    return rows;
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::KernelShap: return "kernel_shap";
        case Method::ExactShapley: return "exact_shapley";
        case Method::Lrp: return "lrp";
        case Method::DotAttention: return "dot_attention";
        case Method::SelfAttention: return "self_attention";
    }
    throw Error("unreachable method");
}

BackgroundSet sample_background(const corpus::Dataset& train, std::size_t size,
                                std::uint64_t seed) {
    if (train.records.empty()) throw DegenerateDataset("empty training split");
    if (size == 0) throw DegenerateDataset("background size must be positive");
    Rng rng(seed);
    auto picks = rng.sample_without_replacement(train.records.size(), size);
    BackgroundSet out;
    out.counts.reserve(picks.size());
    for (std::size_t i : picks)
        out.counts.push_back(corpus::encode_counts(train.records[i], train.vocabulary).values);
    return out;
}

Attribution kernel_shap(const CoalitionValue& value, std::size_t units,
                        const ShapConfig& cfg) {
    const std::size_t M = units;
    if (M == 0) throw DegenerateInstance("no units to attribute");
    if (M > 63) throw TooManyUnits("too many units for 64-bit coalition masks");

    const double v0 = value(std::vector<std::uint8_t>(M, 0));
    const double vfull = value(std::vector<std::uint8_t>(M, 1));
    const double delta = vfull - v0;

    Attribution out;
    out.method = Method::KernelShap;
    out.baseline = v0;
    out.scores.assign(M, 0.0);
    if (M == 1) {
        out.scores[0] = delta;
        return out;
    }

    const bool exact = cfg.strategy == ShapConfig::Strategy::ForceExact ||
                       (cfg.strategy == ShapConfig::Strategy::Auto && M <= 13);
    if (exact && M > 20) throw ConfigError("exact enumeration forced beyond 2^20 coalitions");
    const std::vector<Row> rows = exact ? enumerate_all(value, M) : sample_hybrid(value, M, cfg);
    out.scores = solve_constrained(rows, M, v0, delta, cfg.l2_regularization);
    return out;
}

Attribution exact_shapley(const CoalitionValue& value, std::size_t units) {
    const std::size_t M = units;
    if (M == 0) throw DegenerateInstance("no units to attribute");
    if (M > 16) throw TooManyUnits("exact enumeration capped at 16 units");

    const std::uint64_t total = std::uint64_t{1} << M;
    std::vector<double> v(total);
    for (std::uint64_t mask = 0; mask < total; ++mask) v[mask] = value(bits_of(mask, M));

    // w(s) = s! (M-s-1)! / M!, built without overflow via running products.
    std::vector<double> w(M);
    for (std::size_t s = 0; s < M; ++s) {
        double log_w = 0.0;
        for (std::size_t i = 1; i <= s; ++i) log_w += std::log(static_cast<double>(i));
        for (std::size_t i = 1; i <= M - s - 1; ++i) log_w += std::log(static_cast<double>(i));
        for (std::size_t i = 1; i <= M; ++i) log_w -= std::log(static_cast<double>(i));
        w[s] = std::exp(log_w);
    }

    Attribution out;
    out.method = Method::ExactShapley;
    out.baseline = v[0];
    out.scores.assign(M, 0.0);
    for (std::size_t j = 0; j < M; ++j) {
        const std::uint64_t bit = std::uint64_t{1} << j;
        double phi = 0.0;
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            if (mask & bit) continue;
            phi += w[static_cast<std::size_t>(std::popcount(mask))] * (v[mask | bit] - v[mask]);
        }
        out.scores[j] = phi;
    }
    return out;
}

namespace {

CoalitionValue gbt_value(const gbt::GbtModel& model, const std::vector<int>& x,
                         const BackgroundSet& background) {
    if (background.size() == 0) throw DegenerateDataset("empty background set");
    for (const auto& row : background.counts)
        if (row.size() != x.size()) throw DimensionError("background width mismatch");
    return [&model, x, &background](const std::vector<std::uint8_t>& mask) {
        std::vector<int> masked = x;
        double sum = 0.0;
        for (const auto& b : background.counts) {
            for (std::size_t j = 0; j < mask.size(); ++j) masked[j] = mask[j] ? x[j] : b[j];
            sum += gbt::predict_gbt(model, corpus::CountVector{masked});
        }
        return sum / static_cast<double>(background.size());
    };
}

CoalitionValue lstm_value(const recurrent::RecurrentModel& model,
                          const corpus::IndexSequence& seq) {
    return [&model, seq](const std::vector<std::uint8_t>& mask) {
        corpus::IndexSequence masked = seq;
        for (std::size_t j = 0; j < mask.size(); ++j)
            if (!mask[j]) masked.indices[j] = corpus::kPaddingIndex;
        return recurrent::forward(model, masked).probability;
    };
}

}  // namespace

Attribution shap_for_gbt(const gbt::GbtModel& model, const corpus::EventSequence& record,
                         const BackgroundSet& background, const ShapConfig& cfg) {
    const auto x = corpus::encode_counts(record, model.vocabulary).values;
    Attribution out = kernel_shap(gbt_value(model, x, background), x.size(), cfg);
    out.space = UnitSpace::CountSpace;
    out.target = record.id;
    return out;
}

Attribution shap_for_lstm(const recurrent::RecurrentModel& model,
                          const corpus::EventSequence& record, const ShapConfig& cfg) {
    const auto seq = corpus::encode_indices(record, model.vocabulary);
    Attribution out = kernel_shap(lstm_value(model, seq), seq.indices.size(), cfg);
    out.space = UnitSpace::SequenceSpace;
    out.target = record.id;
    return out;
}

Attribution exact_shapley_for_gbt(const gbt::GbtModel& model,
                                  const corpus::EventSequence& record,
                                  const BackgroundSet& background) {
    const auto x = corpus::encode_counts(record, model.vocabulary).values;
    Attribution out = exact_shapley(gbt_value(model, x, background), x.size());
    out.space = UnitSpace::CountSpace;
    out.target = record.id;
    return out;
}

Attribution exact_shapley_for_lstm(const recurrent::RecurrentModel& model,
                                   const corpus::EventSequence& record) {
    const auto seq = corpus::encode_indices(record, model.vocabulary);
    Attribution out = exact_shapley(lstm_value(model, seq), seq.indices.size());
    out.space = UnitSpace::SequenceSpace;
    out.target = record.id;
    return out;
}

Attribution attention_attribution(const recurrent::RecurrentModel& model,
                                  const corpus::EventSequence& record) {
    if (model.attention == recurrent::AttentionMode::None)
        throw NoAttention("model pools without attention weights");
    const auto seq = corpus::encode_indices(record, model.vocabulary);
    const auto trace = recurrent::forward(model, seq);
    Attribution out;
    out.method = model.attention == recurrent::AttentionMode::DotProduct
                     ? Method::DotAttention
                     : Method::SelfAttention;
    out.space = UnitSpace::SequenceSpace;
    out.target = record.id;
    out.scores = trace.alpha;
    return out;
}

}  // namespace xpb::attrib
