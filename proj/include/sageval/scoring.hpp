#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sageval/aspects.hpp"
#include "sageval/llm.hpp"

namespace sageval {

/// Probability mass over the ordinal scores 1..5.
///
/// A distribution built from samples also keeps the raw counts, so the
/// expected score can be evaluated as an exact ratio of integers.
class ScoreDistribution {
public:
    using Mass = std::array<double, kMaxScore - kMinScore + 1>;
    using Counts = std::array<long long, kMaxScore - kMinScore + 1>;

    /// Throws InvariantError unless every p is in [0,1] and the total is 1
    /// within 1e-9.
    static ScoreDistribution from_mass(const Mass& mass);
    static ScoreDistribution from_counts(const Counts& counts);
    static ScoreDistribution point_mass(int score);

    double p(int score) const;
    const Mass& mass() const { return mass_; }
    const std::optional<Counts>& counts() const { return counts_; }

    nlohmann::json to_json() const;
    static ScoreDistribution from_json(const nlohmann::json& value);

    bool operator==(const ScoreDistribution&) const = default;

private:
    ScoreDistribution() = default;

    Mass mass_{};
    std::optional<Counts> counts_;
};

inline constexpr double kMassTolerance = 1e-9;

/// Probability-weighted score: sum over s of p(s) * s. Always in [1,5].
double expected_score(const ScoreDistribution& d);

/// p(s) = count(s) / n. Throws EmptySamples, or OutOfRangeScore for a sample
/// outside 1..5.
ScoreDistribution distribution_from_samples(std::span<const int> scores);

/// Exponentiates the alternatives at one token position that are exactly a
/// score token "1".."5" (surrounding whitespace ignored) and renormalizes
/// over those. Throws NoScoreTokensFound.
ScoreDistribution distribution_from_logprobs(const llm::TokenLogprob& position);

/// Index of the token covering byte `offset` of the concatenated token text.
std::optional<std::size_t> token_at_offset(const std::vector<llm::TokenLogprob>& tokens, std::size_t offset);

}  // namespace sageval
