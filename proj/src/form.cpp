#include "sageval/form.hpp"

#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sageval/errors.hpp"

namespace sageval {

using nlohmann::json;

std::string_view to_string(QuestionKind kind) {
    switch (kind) {
        case QuestionKind::single_choice: return "single_choice";
        case QuestionKind::multi_choice: return "multi_choice";
        case QuestionKind::likert_rating: return "likert_rating";
        case QuestionKind::open_text: return "open_text";
    }
    return "open_text";
}

std::optional<QuestionKind> question_kind_from_string(std::string_view text) {
    if (text == "single_choice") return QuestionKind::single_choice;
    if (text == "multi_choice") return QuestionKind::multi_choice;
    if (text == "likert_rating") return QuestionKind::likert_rating;
    if (text == "open_text") return QuestionKind::open_text;
    return std::nullopt;
}

std::size_t Form::question_count() const {
    std::size_t n = 0;
    for (const auto& s : sections) n += s.questions.size();
    return n;
}

std::size_t word_count(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return count;
}

namespace {

bool is_choice(QuestionKind kind) {
    return kind == QuestionKind::single_choice || kind == QuestionKind::multi_choice;
}

void check_question(const Question& q, const std::string& path, std::vector<Violation>& out) {
    auto error = [&](std::string sub, std::string msg) {
        out.push_back({Violation::Severity::error, path + sub, std::move(msg)});
    };
    if (q.text.empty()) error(".text", "question text is empty");
    if (is_choice(q.kind)) {
        std::set<std::string> distinct(q.options.begin(), q.options.end());
        if (distinct.size() < 2) {
            error(".options", std::string(to_string(q.kind)) + " requires at least 2 distinct options");
        }
        if (q.scale) error(".scale", "scale is only allowed on likert_rating questions");
    } else if (q.kind == QuestionKind::likert_rating) {
        if (!q.scale) {
            error(".scale", "likert_rating requires a scale");
        } else if (q.scale->min >= q.scale->max) {
            error(".scale", "likert_rating requires scale.min < scale.max");
        }
    } else {
        if (!q.options.empty()) error(".options", "open_text questions take no options");
        if (q.scale) error(".scale", "open_text questions take no scale");
    }
}

}  // namespace

std::vector<Violation> validate_form(const Form& form) {
    std::vector<Violation> out;
    if (form.id.empty()) {
        out.push_back({Violation::Severity::error, "id", "form id is empty"});
    }
    if (form.sections.empty()) {
        out.push_back({Violation::Severity::error, "sections", "form has no sections"});
    }
    for (std::size_t si = 0; si < form.sections.size(); ++si) {
        const auto& section = form.sections[si];
        const std::string spath = "sections[" + std::to_string(si) + "]";
        if (section.questions.empty()) {
            out.push_back({Violation::Severity::error, spath + ".questions", "section has no questions"});
        }
        for (std::size_t qi = 0; qi < section.questions.size(); ++qi) {
            check_question(section.questions[qi], spath + ".questions[" + std::to_string(qi) + "]", out);
        }
    }
    if (!form.sections.empty() && form.question_count() == 0) {
        out.push_back({Violation::Severity::error, "sections", "form has no questions"});
    }
    if (const auto words = word_count(form.user_prompt); words > kUserPromptWordLimit) {
        out.push_back({Violation::Severity::warning, "user_prompt",
                       "user_prompt has " + std::to_string(words) + " words (limit " +
                           std::to_string(kUserPromptWordLimit) + ")"});
    }
    return out;
}

namespace {

class Reader {
public:
    explicit Reader(std::vector<std::string>* unknown) : unknown_(unknown) {}

    const json& require(const json& obj, const std::string& path, const char* key) {
        auto it = obj.find(key);
        if (it == obj.end()) throw SchemaError(path + "." + key, "required field is missing");
        return *it;
    }

    std::string string_field(const json& obj, const std::string& path, const char* key, bool required) {
        auto it = obj.find(key);
        if (it == obj.end() || (!required && it->is_null())) {
            if (required) throw SchemaError(path + "." + key, "required field is missing");
            return {};
        }
        if (!it->is_string()) throw SchemaError(path + "." + key, "expected a string");
        return it->get<std::string>();
    }

    void expect_object(const json& value, const std::string& path) {
        if (!value.is_object()) throw SchemaError(path, "expected an object");
    }

    const json* array_field(const json& obj, const std::string& path, const char* key) {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return nullptr;
        if (!it->is_array()) throw SchemaError(path + "." + key, "expected an array");
        return &*it;
    }

    void note_unknown(const json& obj, const std::string& path, std::initializer_list<std::string_view> known) {
        for (const auto& [key, _] : obj.items()) {
            bool found = false;
            for (auto k : known) found = found || k == key;
            if (!found) {
                spdlog::warn("ignoring unknown field {}.{}", path, key);
                if (unknown_) unknown_->push_back(path + "." + key);
            }
        }
    }

    std::vector<std::string> string_list(const json& arr, const std::string& path) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_string()) {
                throw SchemaError(path + "[" + std::to_string(i) + "]", "expected a string");
            }
            out.push_back(arr[i].get<std::string>());
        }
        return out;
    }

    int int_field(const json& obj, const std::string& path, const char* key) {
        const json& v = require(obj, path, key);
        if (!v.is_number_integer()) throw SchemaError(path + "." + key, "expected an integer");
        return v.get<int>();
    }

    Question question(const json& q, const std::string& path) {
        expect_object(q, path);
        note_unknown(q, path, {"text", "kind", "options", "scale"});
        Question out;
        out.text = string_field(q, path, "text", true);
        const std::string kind = string_field(q, path, "kind", true);
        auto parsed = question_kind_from_string(kind);
        if (!parsed) {
            throw SchemaError(path + ".kind",
                              "unknown kind '" + kind + "' (single_choice|multi_choice|likert_rating|open_text)");
        }
        out.kind = *parsed;
        if (const json* opts = array_field(q, path, "options")) {
            out.options = string_list(*opts, path + ".options");
        }
        if (auto it = q.find("scale"); it != q.end() && !it->is_null()) {
            const std::string spath = path + ".scale";
            expect_object(*it, spath);
            note_unknown(*it, spath, {"min", "max", "labels"});
            LikertScale scale;
            scale.min = int_field(*it, spath, "min");
            scale.max = int_field(*it, spath, "max");
            if (const json* labels = array_field(*it, spath, "labels")) {
                scale.labels = string_list(*labels, spath + ".labels");
            }
            out.scale = std::move(scale);
        }
        return out;
    }

    std::vector<Question> questions(const json& arr, const std::string& path) {
        std::vector<Question> out;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            out.push_back(question(arr[i], path + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

private:
    std::vector<std::string>* unknown_;
};

}  // namespace

Form parse_form_structure(const json& document, const std::string& path, std::vector<std::string>* unknown_fields) {
    Reader r(unknown_fields);
    r.expect_object(document, path);
    r.note_unknown(document, path, {"id", "title", "description", "user_prompt", "sections", "questions"});

    Form form;
    form.id = r.string_field(document, path, "id", true);
    form.title = r.string_field(document, path, "title", true);
    form.description = r.string_field(document, path, "description", false);
    form.user_prompt = r.string_field(document, path, "user_prompt", false);

    const json* sections = r.array_field(document, path, "sections");
    const json* loose = r.array_field(document, path, "questions");
    if (sections && loose) {
        throw SchemaError(path, "form has both 'sections' and top-level 'questions'");
    }
    if (sections) {
        for (std::size_t i = 0; i < sections->size(); ++i) {
            const std::string spath = path + ".sections[" + std::to_string(i) + "]";
            const json& s = (*sections)[i];
            r.expect_object(s, spath);
            r.note_unknown(s, spath, {"title", "description", "questions"});
            Section section;
            section.title = r.string_field(s, spath, "title", false);
            section.description = r.string_field(s, spath, "description", false);
            const json* qs = r.array_field(s, spath, "questions");
            if (!qs) throw SchemaError(spath + ".questions", "required field is missing");
            section.questions = r.questions(*qs, spath + ".questions");
            form.sections.push_back(std::move(section));
        }
    } else if (loose) {
        // Sectionless form: one anonymous section.
        Section section;
        section.questions = r.questions(*loose, path + ".questions");
        form.sections.push_back(std::move(section));
    } else {
        throw SchemaError(path + ".sections", "required field is missing");
    }
    return form;
}

Form parse_form(const json& document, const std::string& path, std::vector<std::string>* unknown_fields) {
    Form form = parse_form_structure(document, path, unknown_fields);
    for (const auto& v : validate_form(form)) {
        if (v.is_error()) {
            throw InvariantError((form.id.empty() ? path : form.id) + ": " + v.path + ": " + v.message);
        }
    }
    return form;
}

Form parse_form(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError("$", std::string("malformed JSON: ") + e.what());
    }
    return parse_form(doc);
}

json serialize_form(const Form& form) {
    json sections = json::array();
    for (const auto& s : form.sections) {
        json questions = json::array();
        for (const auto& q : s.questions) {
            json jq = {{"text", q.text}, {"kind", std::string(to_string(q.kind))}, {"options", q.options}};
            if (q.scale) {
                jq["scale"] = {{"min", q.scale->min}, {"max", q.scale->max}, {"labels", q.scale->labels}};
            }
            questions.push_back(std::move(jq));
        }
        sections.push_back({{"title", s.title}, {"description", s.description}, {"questions", std::move(questions)}});
    }
    return {{"id", form.id},
            {"title", form.title},
            {"description", form.description},
            {"user_prompt", form.user_prompt},
            {"sections", std::move(sections)}};
}

std::vector<Form> parse_dataset(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError("$", std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_array()) throw SchemaError("$", "dataset must be a JSON array of forms");
    std::vector<Form> forms;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        Form form = parse_form(doc[i], "$[" + std::to_string(i) + "]");
        if (!ids.insert(form.id).second) {
            throw InvariantError("duplicate form id '" + form.id + "'");
        }
        forms.push_back(std::move(form));
    }
    return forms;
}

namespace {

std::string kind_tag(const Question& q) {
    switch (q.kind) {
        case QuestionKind::single_choice: return "[single choice]";
        case QuestionKind::multi_choice: return "[multiple choice]";
        case QuestionKind::open_text: return "[open text]";
        case QuestionKind::likert_rating: {
            std::string tag = "[likert rating";
            if (q.scale) {
                tag += " " + std::to_string(q.scale->min) + "-" + std::to_string(q.scale->max);
                if (!q.scale->labels.empty()) {
                    tag += ": ";
                    for (std::size_t i = 0; i < q.scale->labels.size(); ++i) {
                        if (i) tag += " | ";
                        tag += q.scale->labels[i];
                    }
                }
            }
            return tag + "]";
        }
    }
    return "";
}

std::string option_label(std::size_t index) {
    // a, b, ..., z, aa, ab, ...
    std::string label;
    ++index;
    while (index > 0) {
        --index;
        label.insert(label.begin(), static_cast<char>('a' + index % 26));
        index /= 26;
    }
    return label;
}

}  // namespace

std::string render_form_for_prompt(const Form& form) {
    std::ostringstream out;
    out << "Title: " << form.title << "\n";
    if (!form.description.empty()) out << "Description: " << form.description << "\n";
    std::size_t number = 0;
    for (std::size_t si = 0; si < form.sections.size(); ++si) {
        const auto& s = form.sections[si];
        out << "\nSection " << (si + 1);
        if (!s.title.empty()) out << ": " << s.title;
        out << "\n";
        if (!s.description.empty()) out << "Section description: " << s.description << "\n";
        for (const auto& q : s.questions) {
            out << ++number << ". " << q.text << " " << kind_tag(q) << "\n";
            for (std::size_t oi = 0; oi < q.options.size(); ++oi) {
                out << "   " << option_label(oi) << ") " << q.options[oi] << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace sageval
