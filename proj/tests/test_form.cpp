#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "sageval/errors.hpp"
#include "sageval/form.hpp"
#include "sageval/io.hpp"
#include "test_util.hpp"

using namespace sageval;
using nlohmann::json;

namespace {

json minimal_doc() {
    return json::parse(R"({"id": "f1", "title": "T", "sections": [{"questions": [{"text": "Q1", "kind": "open_text"}]}]})");
}

std::vector<json> sample_docs() {
    return io::read_json_file(support::sample_dir() / "forms.json").get<std::vector<json>>();
}

}  // namespace

TEST(Form, MinimalDocumentHasOneQuestion) {
    const Form f = parse_form(minimal_doc());
    EXPECT_EQ(f.question_count(), 1u);
    EXPECT_EQ(f.sections.size(), 1u);
    EXPECT_EQ(f.sections[0].questions[0].kind, QuestionKind::open_text);
}

TEST(Form, SingleChoiceWithOneOptionIsInvariantError) {
    auto doc = minimal_doc();
    doc["sections"][0]["questions"][0] = {{"text", "Pick"}, {"kind", "single_choice"}, {"options", {"only"}}};
    EXPECT_THROW(parse_form(doc), InvariantError);
}

TEST(Form, DuplicateOptionsDoNotCountTwice) {
    auto doc = minimal_doc();
    doc["sections"][0]["questions"][0] = {{"text", "Pick"}, {"kind", "multi_choice"}, {"options", {"a", "a"}}};
    EXPECT_THROW(parse_form(doc), InvariantError);
}

TEST(Form, SchemaErrorsCarryPath) {
    auto doc = minimal_doc();
    doc.erase("id");
    try {
        parse_form(doc);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_NE(e.path().find("id"), std::string::npos);
    }
    doc = minimal_doc();
    doc["sections"][0]["questions"][0]["kind"] = "ranking";
    EXPECT_THROW(parse_form(doc), SchemaError);
    doc = minimal_doc();
    doc["title"] = 5;
    EXPECT_THROW(parse_form(doc), SchemaError);
    EXPECT_THROW(parse_form(std::string_view("{not json")), SchemaError);
}

TEST(Form, UnknownFieldsAreReportedNotFatal) {
    auto doc = minimal_doc();
    doc["theme_color"] = "blue";
    doc["sections"][0]["questions"][0]["required"] = true;
    std::vector<std::string> unknown;
    const Form f = parse_form(doc, "$", &unknown);
    EXPECT_EQ(f.id, "f1");
    ASSERT_EQ(unknown.size(), 2u);
    EXPECT_EQ(unknown[0], "$.theme_color");
}

TEST(Form, SectionlessFormBecomesOneAnonymousSection) {
    const Form f = parse_form(std::string_view(
        R"({"id": "q", "title": "Quiz", "questions": [{"text": "A?", "kind": "open_text"}, {"text": "B?", "kind": "open_text"}]})"));
    ASSERT_EQ(f.sections.size(), 1u);
    EXPECT_TRUE(f.sections[0].title.empty());
    EXPECT_EQ(f.question_count(), 2u);
}

TEST(Form, RoundTripOverSampleDataset) {
    for (const auto& doc : sample_docs()) {
        const Form f = parse_form(doc);
        EXPECT_EQ(parse_form(serialize_form(f)), f) << f.id;
        // Accepted documents never fail validation.
        for (const auto& v : validate_form(f)) EXPECT_FALSE(v.is_error()) << f.id << " " << v.message;
    }
}

TEST(Form, DatasetRejectsDuplicateIds) {
    const auto text = "[" + minimal_doc().dump() + "," + minimal_doc().dump() + "]";
    EXPECT_THROW(parse_dataset(text), InvariantError);
    EXPECT_EQ(parse_dataset("[" + minimal_doc().dump() + "]").size(), 1u);
    EXPECT_THROW(parse_dataset("{}"), SchemaError);
}

TEST(Form, RenderNumbersQuestionsAndTagsKinds) {
    const std::string text = render_form_for_prompt(parse_form(minimal_doc()));
    EXPECT_NE(text.find("1. Q1"), std::string::npos);
    EXPECT_NE(text.find("[open text]"), std::string::npos);
}

TEST(Form, RenderIsPureFunctionOfValue) {
    const Form a = parse_form(minimal_doc());
    const Form b = parse_form(minimal_doc());
    EXPECT_EQ(render_form_for_prompt(a), render_form_for_prompt(b));
    EXPECT_EQ(render_form_for_prompt(a), render_form_for_prompt(a));
}

TEST(Form, RenderMatchesGoldenFiles) {
    for (const auto& doc : sample_docs()) {
        const Form f = parse_form(doc);
        const auto diff =
            support::golden_mismatch(support::golden_dir() / "render" / (f.id + ".txt"), render_form_for_prompt(f));
        EXPECT_TRUE(diff.empty()) << diff;
    }
}

TEST(Form, ValidateValidFormIsEmpty) { EXPECT_TRUE(validate_form(parse_form(minimal_doc())).empty()); }

TEST(Form, LikertWithEqualBoundsIsOneError) {
    Form f = parse_form(minimal_doc());
    f.sections[0].questions[0] = {"Rate", QuestionKind::likert_rating, {}, LikertScale{3, 3, {}}};
    const auto v = validate_form(f);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_TRUE(v[0].is_error());
}

TEST(Form, SixtyWordPromptIsOnlyAWarning) {
    Form f = parse_form(minimal_doc());
    for (int i = 0; i < 60; ++i) f.user_prompt += "word ";
    const auto v = validate_form(f);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].severity, Violation::Severity::warning);
    EXPECT_NO_THROW(parse_form(serialize_form(f)));
}

TEST(Form, StructuralViolations) {
    Form f;
    f.id = "";
    EXPECT_GE(validate_form(f).size(), 2u);  // empty id and no sections
    Form g = parse_form(minimal_doc());
    g.sections.push_back({});
    EXPECT_EQ(validate_form(g).size(), 1u);
    Form h = parse_form(minimal_doc());
    h.sections[0].questions[0].options = {"stray"};
    EXPECT_EQ(validate_form(h).size(), 1u);
}
