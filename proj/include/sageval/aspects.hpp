#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sageval {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;

enum class OutputKind { ordinal_1_to_5, categorical_tone };
enum class AspectOrigin { predefined, sage_revised, sage_suggested };

std::string_view to_string(OutputKind kind);
std::string_view to_string(AspectOrigin origin);

/// One scoring criterion. Ordinal aspects are scored on the fixed 1..5 scale;
/// the tone aspect yields a free-text label instead.
struct AspectDefinition {
    std::string aspect_id;
    std::string short_code;  // table abbreviation, e.g. "AENG"
    std::string name;
    std::string description;
    std::vector<std::string> evaluation_steps;
    OutputKind output_kind = OutputKind::ordinal_1_to_5;
    AspectOrigin origin = AspectOrigin::predefined;
    int version = 1;

    bool is_ordinal() const { return output_kind == OutputKind::ordinal_1_to_5; }
    static constexpr int min_score() { return kMinScore; }
    static constexpr int max_score() { return kMaxScore; }

    bool operator==(const AspectDefinition&) const = default;
};

struct DefinitionRevision {
    std::string aspect_id;
    std::string revised_description;
    std::string rationale;
    std::string source_form_id;

    bool operator==(const DefinitionRevision&) const = default;
};

struct AspectSuggestion {
    std::string name;
    std::string description;
    std::string rationale;
    std::string source_form_id;

    bool operator==(const AspectSuggestion&) const = default;
};

inline constexpr std::size_t kMaxSuggestionsPerForm = 3;

/// The eight criteria every form is scored on, in table order.
const std::vector<AspectDefinition>& predefined_aspects();

/// Lowercase, runs of non-alphanumerics become one underscore, no leading or
/// trailing underscore. "Creativity Score" -> "creativity_score".
std::string slugify(std::string_view name);

/// Append-only, versioned collection of aspect definitions. Mutating
/// operations return a new registry and leave this one untouched.
class AspectRegistry {
public:
    AspectRegistry() = default;
    static AspectRegistry with_predefined();

    /// Every (aspect_id, version) entry in insertion order.
    const std::vector<AspectDefinition>& entries() const { return entries_; }
    /// Latest version of each aspect, ordered by first registration.
    std::vector<AspectDefinition> current() const;

    const AspectDefinition* latest(std::string_view aspect_id) const;
    const AspectDefinition* find(std::string_view aspect_id, int version) const;
    /// Matches aspect_id, short code or display name, case-insensitively.
    const AspectDefinition* lookup(std::string_view id_or_code) const;

    /// Throws UnknownAspect or NoOpRevision.
    AspectRegistry apply_revision(const DefinitionRevision& revision) const;
    /// Throws DuplicateAspect when the slug collides with a predefined aspect.
    /// A repeat of an already-suggested aspect is retained for mining without
    /// adding a new definition.
    AspectRegistry register_suggested_aspect(const AspectSuggestion& suggestion) const;

    const std::vector<DefinitionRevision>& revisions() const { return revisions_; }
    const std::vector<AspectSuggestion>& suggestions() const { return suggestions_; }

    nlohmann::json to_json() const;
    static AspectRegistry from_json(const nlohmann::json& value);

    bool operator==(const AspectRegistry&) const = default;

private:
    std::vector<AspectDefinition> entries_;
    std::vector<DefinitionRevision> revisions_;
    std::vector<AspectSuggestion> suggestions_;
};

nlohmann::json to_json(const AspectDefinition& def);
AspectDefinition aspect_from_json(const nlohmann::json& value);
nlohmann::json to_json(const DefinitionRevision& rev);
DefinitionRevision revision_from_json(const nlohmann::json& value);
nlohmann::json to_json(const AspectSuggestion& s);
AspectSuggestion suggestion_from_json(const nlohmann::json& value);

}  // namespace sageval
