#include "sageval/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "sageval/errors.hpp"

namespace sageval {

using nlohmann::json;

namespace {

constexpr std::size_t kSupport = kMaxScore - kMinScore + 1;

std::size_t slot(int score) { return static_cast<std::size_t>(score - kMinScore); }

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

}  // namespace

ScoreDistribution ScoreDistribution::from_mass(const Mass& mass) {
    double total = 0.0;
    for (std::size_t i = 0; i < kSupport; ++i) {
        if (!(mass[i] >= 0.0 && mass[i] <= 1.0)) {
            throw InvariantError("p(" + std::to_string(i + kMinScore) + ") is outside [0,1]");
        }
        total += mass[i];
    }
    if (std::abs(total - 1.0) > kMassTolerance) {
        throw InvariantError("score mass sums to " + std::to_string(total) + ", not 1");
    }
    ScoreDistribution d;
    d.mass_ = mass;
    return d;
}

ScoreDistribution ScoreDistribution::from_counts(const Counts& counts) {
    long long n = 0;
    for (auto c : counts) {
        if (c < 0) throw InvariantError("negative score count");
        n += c;
    }
    if (n == 0) throw EmptySamples("no samples to build a score distribution from");
    ScoreDistribution d;
    for (std::size_t i = 0; i < kSupport; ++i) {
        d.mass_[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
    }
    d.counts_ = counts;
    return d;
}

ScoreDistribution ScoreDistribution::point_mass(int score) {
    if (score < kMinScore || score > kMaxScore) throw OutOfRangeScore(score);
    Counts counts{};
    counts[slot(score)] = 1;
    return from_counts(counts);
}

double ScoreDistribution::p(int score) const {
    if (score < kMinScore || score > kMaxScore) return 0.0;
    return mass_[slot(score)];
}

json ScoreDistribution::to_json() const {
    json mass = json::object();
    for (std::size_t i = 0; i < kSupport; ++i) mass[std::to_string(i + kMinScore)] = mass_[i];
    json out = {{"mass", std::move(mass)}};
    if (counts_) out["counts"] = *counts_;
    return out;
}

ScoreDistribution ScoreDistribution::from_json(const json& value) {
    try {
        if (auto it = value.find("counts"); it != value.end()) {
            return from_counts(it->get<Counts>());
        }
        Mass mass{};
        for (std::size_t i = 0; i < kSupport; ++i) {
            mass[i] = value.at("mass").value(std::to_string(i + kMinScore), 0.0);
        }
        return from_mass(mass);
    } catch (const json::exception& e) {
        throw SchemaError("distribution", e.what());
    }
}

double expected_score(const ScoreDistribution& d) {
    double result = 0.0;
    if (const auto& counts = d.counts()) {
        long long weighted = 0;
        long long n = 0;
        for (std::size_t i = 0; i < kSupport; ++i) {
            weighted += (*counts)[i] * static_cast<long long>(i + kMinScore);
            n += (*counts)[i];
        }
        result = static_cast<double>(weighted) / static_cast<double>(n);
    } else {
        for (std::size_t i = 0; i < kSupport; ++i) {
            result += d.mass()[i] * static_cast<double>(i + kMinScore);
        }
    }
    // The mass may total 1 +/- 1e-9; keep the result on the scale.
    return std::clamp(result, static_cast<double>(kMinScore), static_cast<double>(kMaxScore));
}

ScoreDistribution distribution_from_samples(std::span<const int> scores) {
    if (scores.empty()) throw EmptySamples("no score samples");
    ScoreDistribution::Counts counts{};
    for (int s : scores) {
        if (s < kMinScore || s > kMaxScore) throw OutOfRangeScore(s);
        ++counts[slot(s)];
    }
    return ScoreDistribution::from_counts(counts);
}

ScoreDistribution distribution_from_logprobs(const llm::TokenLogprob& position) {
    std::vector<llm::TokenAlternative> candidates = position.top_alternatives;
    if (candidates.empty()) candidates.push_back({position.token, position.logprob});

    ScoreDistribution::Mass raw{};
    double total = 0.0;
    for (const auto& alt : candidates) {
        const auto tok = trim(alt.token);
        if (tok.size() != 1 || tok[0] < '0' + kMinScore || tok[0] > '0' + kMaxScore) continue;
        const double p = std::exp(alt.logprob);
        raw[slot(tok[0] - '0')] += p;
        total += p;
    }
    if (total <= 0.0) {
        throw NoScoreTokensFound("no score token 1..5 among the alternatives for '" + position.token + "'");
    }
    for (auto& p : raw) p /= total;
    return ScoreDistribution::from_mass(raw);
}

std::optional<std::size_t> token_at_offset(const std::vector<llm::TokenLogprob>& tokens, std::size_t offset) {
    std::size_t begin = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::size_t end = begin + tokens[i].token.size();
        if (offset >= begin && offset < end) return i;
        begin = end;
    }
    return std::nullopt;
}

}  // namespace sageval
