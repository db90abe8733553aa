#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sageval/aspects.hpp"
#include "sageval/evaluator.hpp"
#include "sageval/form.hpp"
#include "sageval/llm.hpp"
#include "sageval/scoring.hpp"

namespace sageval {

enum class Direction { negative, positive };
std::string_view to_string(Direction d);

struct Rectification {
    std::string aspect_id;
    double original_expected = 0.0;
    ScoreDistribution rectified_distribution = ScoreDistribution::point_mass(kMinScore);
    double rectified_expected = 0.0;
    Direction direction = Direction::negative;
    std::string rationale;

    bool operator==(const Rectification&) const = default;
};

/// Builds a rectification from the two expected scores. Returns nullopt when
/// they are equal, since no-op rectifications are not recorded.
std::optional<Rectification> make_rectification(std::string aspect_id, double original_expected,
                                                ScoreDistribution rectified, std::string rationale);

struct ToneCorrection {
    std::string original_label;
    std::string label;
    std::string rationale;

    bool operator==(const ToneCorrection&) const = default;
};

struct SageVerdict {
    std::string form_id;
    std::vector<Rectification> rectifications;  // at most one per aspect
    std::vector<DefinitionRevision> revisions;
    std::vector<AspectSuggestion> suggestions;  // at most 3
    std::optional<ToneCorrection> tone_correction;
    int samples_parsed = 0;
    std::vector<std::string> raw_completions;

    const Rectification* find(std::string_view aspect_id) const;
    bool operator==(const SageVerdict&) const = default;
};

/// One aspect line of a critique: AGREE, a replacement score, or (for the
/// tone aspect) a replacement label.
struct AspectVote {
    bool agree = false;
    std::optional<int> score;
    std::optional<std::string> label;
    std::string rationale;
    std::size_t value_offset = 0;  // byte offset of the score digits in the parsed text
};

/// Grammar-level parse of one critique completion.
struct ParsedCritique {
    std::map<std::string, AspectVote> votes;  // keyed by aspect_id
    std::vector<DefinitionRevision> revisions;
    std::vector<AspectSuggestion> suggestions;
};

/// Throws UnparseableVerdict, UnknownAspectInVerdict, TooManySuggestions or
/// OutOfRangeScore.
ParsedCritique parse_critique(std::string_view text, const AspectRegistry& registry);

/// Aggregates critique samples against the first pass. An ordinal aspect is
/// rectified iff a strict majority of samples replace its score; the
/// rectified distribution is the empirical distribution of those
/// replacements. `logprob_distributions` (keyed by aspect_id) override the
/// empirical distribution when SAGE's own token probabilities are known.
SageVerdict verdict_from_samples(const FirstPassRecord& first_pass, const AspectRegistry& registry,
                                 const std::vector<ParsedCritique>& samples,
                                 const std::map<std::string, ScoreDistribution>& logprob_distributions = {});

/// Single-completion convenience: parse then aggregate.
SageVerdict parse_critique_response(std::string_view text, const AspectRegistry& registry,
                                    const FirstPassRecord& first_pass);

/// Throws PartialFirstPass.
llm::ChatRequest build_critique_prompt(const Form& form, const FirstPassRecord& first_pass,
                                       const AspectRegistry& registry, const AgentConfig& config);

SageVerdict critique(const Form& form, const FirstPassRecord& first_pass, const AspectRegistry& registry,
                     llm::Backend& backend, const AgentConfig& config);

struct FinalScore {
    std::string aspect_id;
    double first_pass_expected = 0.0;
    double final_expected = 0.0;
    bool rectified = false;

    bool operator==(const FinalScore&) const = default;
};

struct FinalRecord {
    std::string form_id;
    std::vector<FinalScore> scores;  // ordinal aspects, first-pass order
    std::optional<std::string> first_pass_tone;
    std::optional<std::string> final_tone;
    std::string first_pass_ref;
    std::string verdict_ref;

    const FinalScore* find(std::string_view aspect_id) const;
    bool operator==(const FinalRecord&) const = default;
};

/// Throws FormMismatch.
FinalRecord finalize_scores(const FirstPassRecord& first_pass, const SageVerdict& verdict);

nlohmann::json to_json(const Rectification& r);
Rectification rectification_from_json(const nlohmann::json& value);
nlohmann::json to_json(const SageVerdict& v);
SageVerdict verdict_from_json(const nlohmann::json& value);
nlohmann::json to_json(const FinalRecord& r);
FinalRecord final_record_from_json(const nlohmann::json& value);

}  // namespace sageval
