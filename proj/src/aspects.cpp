#include "sageval/aspects.hpp"

#include <algorithm>
#include <cctype>

#include "sageval/errors.hpp"

namespace sageval {

using nlohmann::json;

std::string_view to_string(OutputKind kind) {
    return kind == OutputKind::ordinal_1_to_5 ? "ordinal_1_to_5" : "categorical_tone";
}

std::string_view to_string(AspectOrigin origin) {
    switch (origin) {
        case AspectOrigin::predefined: return "predefined";
        case AspectOrigin::sage_revised: return "sage_revised";
        case AspectOrigin::sage_suggested: return "sage_suggested";
    }
    return "predefined";
}

namespace {

OutputKind output_kind_from(const std::string& s) {
    if (s == "ordinal_1_to_5") return OutputKind::ordinal_1_to_5;
    if (s == "categorical_tone") return OutputKind::categorical_tone;
    throw SchemaError("output_kind", "unknown output kind '" + s + "'");
}

AspectOrigin origin_from(const std::string& s) {
    if (s == "predefined") return AspectOrigin::predefined;
    if (s == "sage_revised") return AspectOrigin::sage_revised;
    if (s == "sage_suggested") return AspectOrigin::sage_suggested;
    throw SchemaError("origin", "unknown origin '" + s + "'");
}

std::string scale_step(const std::string& name) {
    return "Assign a score for " + name +
           " on a scale of 1 to 5, where 1 is the lowest and 5 is the highest based on the Evaluation Criteria.";
}

std::vector<AspectDefinition> build_predefined() {
    const std::string read_form = "Read the generated output form/survey/quiz text carefully";
    const std::string responder =
        "Assume that you are the responder of the form/survey/quiz generated, and now read the generated "
        "output form/survey/quiz text carefully.";
    const std::string looks_at =
        "This criteria looks at the generated output text and then tries to judge whether the questions across "
        "all sections (if present) and the form ";

    std::vector<AspectDefinition> out;
    out.push_back({"accuracy", "ACC", "Accuracy",
                   "Accuracy analyzes the output text and judges whether there are any inaccuracies, missing, or "
                   "unfactual content with respect to the user prompt, i.e., the original prompt intention.",
                   {read_form + " and identify the main theme across all sections and questions, and option "
                                "choices (for the case of multichoice and single choice questions).",
                    "Check if the general theme of the content in form/survey/quiz is aligned to the theme of the "
                    "prompt (user ask), and if it presents them in a clear and logical order.",
                    scale_step("Accuracy")},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"semantic_diversity", "SEMD", "Semantic Diversity",
                   looks_at + "are diverse, meaning they are semantically different and there are no duplicates.",
                   {read_form + " and ensure that there are no duplicates.",
                    "Also check if the content in form/survey/quiz is semantically rich and aligns to the theme of "
                    "the prompt (user ask), while being diverse/different from each other.",
                    scale_step("Semantic Diversity")},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"cohesion", "COH", "Cohesion",
                   looks_at +
                       "are fluent and are grammatically correct, meaning the title, description, questions, options "
                       "(in case of single choice, multichoice and rating), section titles, and section description "
                       "have no typos, or grammatical errors.",
                   {read_form + " and ensure that there are no typos or grammatical errors.",
                    "Also check if the content in form/survey/quiz is fluent in english and coherent to understand.",
                    scale_step("Cohesion")},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"relevancy", "RELEV", "Relevancy",
                   looks_at + "are relevant with respect to the prompt (user ask)?",
                   {read_form + " and ensure that all questions, section titles and options are relevant and "
                                "important to the \"user ask\".",
                    scale_step("Relevancy")},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"audience_understandability", "AUND", "Audience Understandability",
                   looks_at +
                       "would be understandable by the audience responding to the survey/quiz without any further "
                       "clarifications?",
                   {responder,
                    "After reading through the contents of the form/survey/quiz generated, please assign a "
                    "\"Audience Understandability\" score on a scale of 1 to 5, where 1 is the lowest and 5 is the "
                    "highest based on the Evaluation Criteria."},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"audience_engagement", "AENG", "Audience Engagement",
                   looks_at + "would be engaging for the audience responding to the survey/quiz.",
                   {responder,
                    "After reading through the contents of the form/survey/quiz generated, please assign a "
                    "\"Audience Engagement\" score on a scale of 1 to 5, where 1 is the lowest and 5 is the highest "
                    "based on the Evaluation Criteria."},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"fairness", "FAIR", "Fairness",
                   looks_at +
                       "are fair and without any bias that may cause any form of discomfort to any section of the "
                       "society, especially minority groups.",
                   {read_form + " and ensure that all questions, section titles, title of the form, description of "
                                "the form are generated in a language that is fair, without any bias, or harmful "
                                "content, that may cause discomfort to the responders.",
                    "Also check if the content in form/survey/quiz should be flagged on any Responsible AI "
                    "standards.",
                    scale_step("Fairness")},
                   OutputKind::ordinal_1_to_5});
    out.push_back({"sentiment_tone", "SENT", "Sentiment/Tone type",
                   "This criteria looks at the generated output text and then tries to identify the sentiment of the "
                   "content by analyzing the questions across all sections (if present) and the form.",
                   {read_form + " and identify from the language of all questions, section titles, title of the "
                                "form, description of the form the sentiment it conveys.",
                    "Unlike the previous evaluation criteria which assign a score on a scale of 1 to 5, here please "
                    "output tone/sentiment of the generated content (questions)."},
                   OutputKind::categorical_tone});
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

}  // namespace

const std::vector<AspectDefinition>& predefined_aspects() {
    static const std::vector<AspectDefinition> aspects = build_predefined();
    return aspects;
}

std::string slugify(std::string_view name) {
    std::string out;
    bool pending_sep = false;
    for (unsigned char c : name) {
        if (std::isalnum(c)) {
            if (pending_sep && !out.empty()) out.push_back('_');
            pending_sep = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_sep = true;
        }
    }
    return out;
}

AspectRegistry AspectRegistry::with_predefined() {
    AspectRegistry r;
    r.entries_ = predefined_aspects();
    return r;
}

std::vector<AspectDefinition> AspectRegistry::current() const {
    std::vector<AspectDefinition> out;
    for (const auto& e : entries_) {
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& d) { return d.aspect_id == e.aspect_id; });
        if (it == out.end()) {
            out.push_back(e);
        } else if (e.version > it->version) {
            *it = e;
        }
    }
    return out;
}

const AspectDefinition* AspectRegistry::latest(std::string_view aspect_id) const {
    const AspectDefinition* best = nullptr;
    for (const auto& e : entries_) {
        if (e.aspect_id == aspect_id && (!best || e.version > best->version)) best = &e;
    }
    return best;
}

const AspectDefinition* AspectRegistry::find(std::string_view aspect_id, int version) const {
    for (const auto& e : entries_) {
        if (e.aspect_id == aspect_id && e.version == version) return &e;
    }
    return nullptr;
}

const AspectDefinition* AspectRegistry::lookup(std::string_view id_or_code) const {
    const std::string key = lower(id_or_code);
    for (const auto& e : entries_) {
        if (e.aspect_id == key || lower(e.short_code) == key) return latest(e.aspect_id);
    }
    const std::string slug = slugify(id_or_code);
    if (slug.empty()) return nullptr;
    for (const auto& e : entries_) {
        if (slug == e.aspect_id || slug == slugify(e.name)) return latest(e.aspect_id);
    }
    return nullptr;
}

AspectRegistry AspectRegistry::apply_revision(const DefinitionRevision& revision) const {
    const AspectDefinition* current_def = latest(revision.aspect_id);
    if (!current_def) throw UnknownAspect("no aspect '" + revision.aspect_id + "' in registry");
    if (current_def->description == revision.revised_description) {
        throw NoOpRevision("revision of '" + revision.aspect_id + "' repeats the current description");
    }
    AspectDefinition next = *current_def;
    next.description = revision.revised_description;
    next.origin = AspectOrigin::sage_revised;
    next.version = current_def->version + 1;

    AspectRegistry out = *this;
    out.entries_.push_back(std::move(next));
    out.revisions_.push_back(revision);
    return out;
}

AspectRegistry AspectRegistry::register_suggested_aspect(const AspectSuggestion& suggestion) const {
    const std::string id = slugify(suggestion.name);
    if (id.empty()) throw InvariantError("suggested aspect name is empty");
    if (const AspectDefinition* first = find(id, 1); first && first->origin == AspectOrigin::predefined) {
        throw DuplicateAspect("suggested aspect '" + suggestion.name + "' collides with predefined '" + id + "'");
    }
    const AspectDefinition* existing = latest(id);
    AspectRegistry out = *this;
    out.suggestions_.push_back(suggestion);
    if (!existing) {
        AspectDefinition def;
        def.aspect_id = id;
        std::string code = id;
        std::transform(code.begin(), code.end(), code.begin(), [](unsigned char c) { return std::toupper(c); });
        def.short_code = code;
        def.name = suggestion.name;
        def.description = suggestion.description.empty() ? suggestion.name : suggestion.description;
        def.evaluation_steps = {"Read the generated output form/survey/quiz text carefully with respect to " +
                                    suggestion.name + ".",
                                "Assign a score for " + suggestion.name +
                                    " on a scale of 1 to 5, where 1 is the lowest and 5 is the highest."};
        def.output_kind = OutputKind::ordinal_1_to_5;
        def.origin = AspectOrigin::sage_suggested;
        def.version = 1;
        out.entries_.push_back(std::move(def));
    }
    return out;
}

json to_json(const AspectDefinition& d) {
    return {{"aspect_id", d.aspect_id},
            {"short_code", d.short_code},
            {"name", d.name},
            {"description", d.description},
            {"evaluation_steps", d.evaluation_steps},
            {"output_kind", std::string(to_string(d.output_kind))},
            {"origin", std::string(to_string(d.origin))},
            {"version", d.version}};
}

AspectDefinition aspect_from_json(const json& v) {
    try {
        AspectDefinition d;
        d.aspect_id = v.at("aspect_id").get<std::string>();
        d.short_code = v.value("short_code", "");
        d.name = v.at("name").get<std::string>();
        d.description = v.at("description").get<std::string>();
        d.evaluation_steps = v.at("evaluation_steps").get<std::vector<std::string>>();
        d.output_kind = output_kind_from(v.at("output_kind").get<std::string>());
        d.origin = origin_from(v.at("origin").get<std::string>());
        d.version = v.at("version").get<int>();
        return d;
    } catch (const json::exception& e) {
        throw SchemaError("aspect", e.what());
    }
}

json to_json(const DefinitionRevision& r) {
    return {{"aspect_id", r.aspect_id},
            {"revised_description", r.revised_description},
            {"rationale", r.rationale},
            {"source_form_id", r.source_form_id}};
}

DefinitionRevision revision_from_json(const json& v) {
    try {
        return {v.at("aspect_id").get<std::string>(), v.at("revised_description").get<std::string>(),
                v.value("rationale", ""), v.value("source_form_id", "")};
    } catch (const json::exception& e) {
        throw SchemaError("revision", e.what());
    }
}

json to_json(const AspectSuggestion& s) {
    return {{"name", s.name},
            {"description", s.description},
            {"rationale", s.rationale},
            {"source_form_id", s.source_form_id}};
}

AspectSuggestion suggestion_from_json(const json& v) {
    try {
        return {v.at("name").get<std::string>(), v.value("description", ""), v.value("rationale", ""),
                v.value("source_form_id", "")};
    } catch (const json::exception& e) {
        throw SchemaError("suggestion", e.what());
    }
}

json AspectRegistry::to_json() const {
    json entries = json::array();
    for (const auto& e : entries_) entries.push_back(sageval::to_json(e));
    json revisions = json::array();
    for (const auto& r : revisions_) revisions.push_back(sageval::to_json(r));
    json suggestions = json::array();
    for (const auto& s : suggestions_) suggestions.push_back(sageval::to_json(s));
    return {{"entries", std::move(entries)}, {"revisions", std::move(revisions)}, {"suggestions", std::move(suggestions)}};
}

AspectRegistry AspectRegistry::from_json(const json& v) {
    AspectRegistry r;
    for (const auto& e : v.at("entries")) r.entries_.push_back(aspect_from_json(e));
    for (const auto& e : v.value("revisions", json::array())) r.revisions_.push_back(revision_from_json(e));
    for (const auto& e : v.value("suggestions", json::array())) r.suggestions_.push_back(suggestion_from_json(e));
    return r;
}

}  // namespace sageval
