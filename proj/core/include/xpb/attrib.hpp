#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "xpb/corpus.hpp"
#include "xpb/gbt.hpp"
#include "xpb/recurrent.hpp"

namespace xpb::attrib {

enum class Method { KernelShap, ExactShapley, Lrp, DotAttention, SelfAttention };

enum class UnitSpace {
    CountSpace,     // unit = vocabulary entry position, score count = V
    SequenceSpace,  // unit = sequence position, score count = length
};

std::string method_name(Method m);

struct Attribution {
    Method method = Method::KernelShap;
    UnitSpace space = UnitSpace::CountSpace;
    std::int64_t target = 0;
    std::vector<double> scores;  // one per unit
    double baseline = 0.0;       // expected masked output; Shapley methods only
};

/// Count rows drawn from the training split; masking source for the
/// count-space evaluator.
struct BackgroundSet {
    std::vector<std::vector<int>> counts;

    std::size_t size() const { return counts.size(); }
};

BackgroundSet sample_background(const corpus::Dataset& train, std::size_t size,
                                std::uint64_t seed);

struct ShapConfig {
    enum class Strategy { Auto, ForceExact, ForceSampled };

    int coalition_samples = 2048;
    double l2_regularization = 0.0;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::Auto;
};

/// Coalition value oracle: mask[j] says unit j keeps its observed state;
/// returns the (background-averaged) model output for that masked instance.
using CoalitionValue = std::function<double(const std::vector<std::uint8_t>&)>;

/// Shapley-kernel weighted least squares on coalition values. All 2^M
/// coalitions are enumerated for M <= 13 (unless forced otherwise); larger M
/// enumerates complete outside-in size pairs and fills the remaining budget
/// with paired sampling. The efficiency identity sum(phi) = v(full) - v(empty)
/// is enforced exactly by constraint elimination.
Attribution kernel_shap(const CoalitionValue& value, std::size_t units,
                        const ShapConfig& cfg);

/// Classic factorial-weighted enumeration over all 2^M coalitions; the oracle
/// kernel_shap is checked against. Throws TooManyUnits above 16 units.
Attribution exact_shapley(const CoalitionValue& value, std::size_t units);

/// Count-space adapter: units are the V features; masking swaps a feature's
/// count for the background observation's count, averaging over the set.
Attribution shap_for_gbt(const gbt::GbtModel& model, const corpus::EventSequence& record,
                         const BackgroundSet& background, const ShapConfig& cfg);

/// Sequence-space adapter: units are positions; masking replaces the token
/// index with padding (frozen zero embedding), so no background is consumed.
Attribution shap_for_lstm(const recurrent::RecurrentModel& model,
                          const corpus::EventSequence& record, const ShapConfig& cfg);

Attribution exact_shapley_for_gbt(const gbt::GbtModel& model,
                                  const corpus::EventSequence& record,
                                  const BackgroundSet& background);
Attribution exact_shapley_for_lstm(const recurrent::RecurrentModel& model,
                                   const corpus::EventSequence& record);

/// Scores are the forward-pass attention weights, bit-for-bit.
Attribution attention_attribution(const recurrent::RecurrentModel& model,
                                  const corpus::EventSequence& record);

/// Relevance propagation from the logit down to per-position scores; padding
/// positions score zero. Every layer split divides by its full pre-activation
/// (bias included) plus a sign-consistent eps stabilizer, and reassigns the
/// bias and stabilizer mass to the inputs in proportion to contribution
/// magnitude. Each split therefore hands on exactly the relevance it
/// received, so the position scores sum to the logit to float precision, and
/// zero contributions always receive exactly zero relevance.
Attribution lrp_lstm(const recurrent::RecurrentModel& model,
                     const corpus::IndexSequence& seq, double eps = 1e-3);

/// Record convenience wrapper; stamps the record id on the result.
Attribution lrp_lstm(const recurrent::RecurrentModel& model,
                     const corpus::EventSequence& record, double eps = 1e-3);

/// Bare epsilon-rule share of `relevance` across additive contributions,
/// exposed for direct checking; the propagation's bias-free layer rule
/// converges to this closed form as eps -> 0.
std::vector<double> epsilon_share(const std::vector<double>& contributions,
                                  double relevance, double eps);

}  // namespace xpb::attrib
