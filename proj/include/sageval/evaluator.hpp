#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sageval/aspects.hpp"
#include "sageval/form.hpp"
#include "sageval/llm.hpp"
#include "sageval/scoring.hpp"

namespace sageval {

enum class ProbabilitySource { logprobs, sampling };
std::string_view to_string(ProbabilitySource source);

/// Which probability source to try first. `logprobs` falls back to sampling
/// when the backend returns no usable score-token alternatives.
enum class ProbabilityPreference { logprobs, sampling };

struct AgentConfig {
    std::string model_id = "gpt-4";
    int sample_count = 20;
    double temperature = 1.0;
    int max_tokens = 512;
    ProbabilityPreference preference = ProbabilityPreference::logprobs;
    // Appended to the evaluator prompt when set (self-reflection variant).
    std::string reflection_instruction;
};

// ---- output grammar -------------------------------------------------------

struct ScoreReply {
    int score = 0;
    std::string reasoning;

    bool operator==(const ScoreReply&) const = default;
};

/// Finds the first `Score: <n>` anywhere in the text (markdown emphasis and
/// surrounding prose tolerated) and the reasoning after `Reasoning:`, or the
/// text following the score when no reasoning label exists.
/// Throws UnparseableResponse or OutOfRangeScore.
ScoreReply parse_score_response(std::string_view text);

/// Label after `Tone:`, lowercased with whitespace collapsed.
/// Throws UnparseableResponse.
std::string parse_tone_response(std::string_view text);

std::string format_score_reply(int score, std::string_view reasoning);
std::string format_tone_reply(std::string_view label, std::string_view reasoning);

/// Byte offset of the score digits matched by parse_score_response, if any.
std::optional<std::size_t> score_digit_offset(std::string_view text);

// ---- first pass -----------------------------------------------------------

std::vector<std::string> default_exemplars(OutputKind kind);

/// System + user messages for one (form, aspect) pair, configured for
/// sampling mode (config.sample_count completions at config.temperature).
llm::ChatRequest build_first_pass_prompt(const Form& form, const AspectDefinition& aspect,
                                         std::span<const std::string> exemplars, const AgentConfig& config);

/// Same messages, one greedy completion with token log-probabilities.
llm::ChatRequest logprob_variant(llm::ChatRequest request);

struct AspectAssessment {
    std::string aspect_id;
    int aspect_version = 1;
    OutputKind output_kind = OutputKind::ordinal_1_to_5;
    std::optional<ScoreDistribution> distribution;  // ordinal aspects
    std::optional<double> expected_score;           // ordinal aspects
    std::optional<std::string> tone_label;          // categorical aspects
    std::string reasoning;
    std::vector<std::string> raw_completions;
    ProbabilitySource probability_source = ProbabilitySource::sampling;

    bool operator==(const AspectAssessment&) const = default;
};

struct AspectFailure {
    std::string aspect_id;
    std::string error_kind;
    std::string message;

    bool operator==(const AspectFailure&) const = default;
};

struct FirstPassRecord {
    std::string form_id;
    std::string model_id;
    std::vector<AspectAssessment> assessments;  // registry order
    std::vector<AspectFailure> failures;
    // Wall-clock bounds; kept out of the record file so runs stay reproducible.
    std::string started_at;
    std::string finished_at;

    bool partial() const { return !failures.empty(); }
    const AspectAssessment* find(std::string_view aspect_id) const;
};

nlohmann::json to_json(const AspectAssessment& a);
AspectAssessment assessment_from_json(const nlohmann::json& value);
nlohmann::json to_json(const FirstPassRecord& r);
FirstPassRecord first_pass_from_json(const nlohmann::json& value);

/// Majority label; ties go to the label seen first.
std::string majority_label(std::span<const std::string> labels);

/// Scores one aspect. Throws on gateway errors or when no completion parses.
AspectAssessment assess_aspect(const Form& form, const AspectDefinition& aspect, llm::Backend& backend,
                               const AgentConfig& config);

/// One assessment per current registry aspect, requested concurrently. A
/// failed aspect is recorded in `failures`, never dropped.
FirstPassRecord evaluate_form(const Form& form, const AspectRegistry& registry, llm::Backend& backend,
                              const AgentConfig& config);

std::string utc_timestamp();

}  // namespace sageval
