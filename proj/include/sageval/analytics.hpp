#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sageval/aspects.hpp"
#include "sageval/sage.hpp"

namespace sageval::analytics {

// ---- disagreement tallies ---------------------------------------------------

struct DisagreementRow {
    std::string aspect_id;
    std::string short_code;
    std::string name;
    long long neg = 0;
    long long pos = 0;
    long long total = 0;
    long long definition_changes = 0;
    long long tone_changes = 0;  // label replacements on the categorical aspect

    bool operator==(const DisagreementRow&) const = default;
};

struct DisagreementTable {
    std::vector<DisagreementRow> rows;  // registry order, then unseen ids sorted
    std::size_t dataset_size = 0;
    long long neg_total = 0;
    long long pos_total = 0;

    /// neg_total / (neg_total + pos_total); nullopt when there were none.
    std::optional<double> negative_share() const;
    const DisagreementRow* find(std::string_view aspect_id) const;

    nlohmann::json to_json() const;
    std::string to_markdown() const;

    bool operator==(const DisagreementTable&) const = default;
};

/// Throws DuplicateForm when two verdicts share a form id, InvariantError when
/// there are more verdicts than forms.
DisagreementTable tally_disagreements(std::span<const SageVerdict> verdicts, std::size_t dataset_size,
                                      const AspectRegistry& registry = AspectRegistry::with_predefined());

// ---- rank correlation ---------------------------------------------------------

/// Midranks (1-based; ties share the average of their positions).
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of midranks. Throws LengthMismatch or DegenerateInput.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Tie-corrected tau-b, O(n log n). Throws LengthMismatch or DegenerateInput.
double kendall_tau(std::span<const double> x, std::span<const double> y);

// ---- human annotations --------------------------------------------------------

using FormAspect = std::pair<std::string, std::string>;  // (form_id, aspect_id)

/// One annotator's labels.
struct AnnotationSet {
    std::string annotator_id;
    std::map<FormAspect, int> scores;
    std::map<FormAspect, std::string> labels;  // categorical aspect rows

    bool operator==(const AnnotationSet&) const = default;
};

/// CSV with header `annotator_id,form_id,aspect_id,score[,label]`. Aspect
/// columns accept ids or short codes. Annotators come back in first-seen
/// order. Throws AnnotationError.
std::vector<AnnotationSet> parse_annotations_csv(std::string_view text,
                                                 const AspectRegistry& registry = AspectRegistry::with_predefined());

enum class AggregationPolicy { mean, median, per_annotator };
std::string_view to_string(AggregationPolicy policy);
std::optional<AggregationPolicy> aggregation_policy_from_string(std::string_view text);

struct HumanScores {
    AggregationPolicy policy = AggregationPolicy::mean;
    std::map<FormAspect, double> aggregate;  // mean / median policies
    std::vector<std::pair<std::string, std::map<FormAspect, double>>> per_annotator;

    std::vector<std::string> form_ids() const;
};

double median(std::vector<double> values);

/// Aggregates ordinal scores. When `forms` and `aspects` are given every pair
/// must be covered (by every annotator under per_annotator), else
/// MissingAnnotation.
HumanScores aggregate_human(std::span<const AnnotationSet> annotations, AggregationPolicy policy,
                            std::span<const std::string> forms = {}, std::span<const std::string> aspects = {});

enum class ScoreStage { first_pass, final };

struct AspectCorrelation {
    std::string aspect_id;
    std::string short_code;
    std::optional<double> spearman_rho;
    std::optional<double> kendall_tau;
    std::size_t n = 0;
    std::string note;  // set when a value is undefined (constant input)
};

struct CorrelationReport {
    AggregationPolicy policy = AggregationPolicy::mean;
    ScoreStage stage = ScoreStage::final;
    std::vector<AspectCorrelation> aspects;

    const AspectCorrelation* find(std::string_view aspect_id) const;
    nlohmann::json to_json() const;
};

/// Ordinal predefined aspects only; the tone aspect has no rank order.
/// Throws FormSetMismatch, MissingAnnotation, or InvariantError for < 2 forms.
CorrelationReport correlation_report(std::span<const FinalRecord> system, const HumanScores& human,
                                     ScoreStage stage = ScoreStage::final);

/// Table layout: one row per stage, one column per aspect code with "rho / tau".
std::string correlation_markdown(std::span<const CorrelationReport> rows);

// ---- suggested-aspect mining ----------------------------------------------------

/// Lowercase, punctuation to spaces, whitespace collapsed, trailing
/// "scores" singularized.
std::string canonicalize_aspect_name(std::string_view name);

struct TermShare {
    std::string canonical_term;
    long long frequency = 0;
    double share = 0.0;

    bool operator==(const TermShare&) const = default;
};

struct AspectTermDistribution {
    std::vector<TermShare> terms;  // frequency desc, then term asc
    long long total = 0;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

AspectTermDistribution mine_aspect_terms(std::span<const AspectSuggestion> suggestions);

}  // namespace sageval::analytics
