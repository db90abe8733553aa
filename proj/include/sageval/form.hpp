#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sageval {

enum class QuestionKind { single_choice, multi_choice, likert_rating, open_text };

std::string_view to_string(QuestionKind kind);
std::optional<QuestionKind> question_kind_from_string(std::string_view text);

struct LikertScale {
    int min = 1;
    int max = 5;
    std::vector<std::string> labels;

    bool operator==(const LikertScale&) const = default;
};

struct Question {
    std::string text;
    QuestionKind kind = QuestionKind::open_text;
    std::vector<std::string> options;
    std::optional<LikertScale> scale;

    bool operator==(const Question&) const = default;
};

struct Section {
    std::string title;  // empty for the anonymous section of a sectionless form
    std::string description;
    std::vector<Question> questions;

    bool operator==(const Section&) const = default;
};

/// One reference-free document under evaluation: a survey, form or quiz.
struct Form {
    std::string id;
    std::string title;
    std::string description;
    std::string user_prompt;  // the original generation ask
    std::vector<Section> sections;

    std::size_t question_count() const;

    bool operator==(const Form&) const = default;
};

/// Word limit the source dataset used for generation prompts. Longer prompts
/// are linted as warnings only.
inline constexpr std::size_t kUserPromptWordLimit = 50;

struct Violation {
    enum class Severity { error, warning };

    Severity severity = Severity::error;
    std::string path;
    std::string message;

    bool is_error() const { return severity == Severity::error; }
    bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_form(const Form& form);

/// Parses one form object. Unknown fields are ignored and logged; their JSON
/// paths are appended to `unknown_fields` when provided. Throws SchemaError
/// for missing or ill-typed required fields and InvariantError when the
/// parsed form fails validation.
Form parse_form(const nlohmann::json& document, const std::string& path = "$",
                std::vector<std::string>* unknown_fields = nullptr);
Form parse_form(std::string_view json_text);

/// Schema checks only (SchemaError); the result may still have violations.
Form parse_form_structure(const nlohmann::json& document, const std::string& path = "$",
                          std::vector<std::string>* unknown_fields = nullptr);

nlohmann::json serialize_form(const Form& form);

/// Parses a dataset file: a JSON array of form objects. Every element must
/// parse, and ids must be unique.
std::vector<Form> parse_dataset(std::string_view json_text);

/// Canonical plain-text rendering used inside agent prompts. Pure function of
/// the Form value.
std::string render_form_for_prompt(const Form& form);

std::size_t word_count(std::string_view text);

}  // namespace sageval
