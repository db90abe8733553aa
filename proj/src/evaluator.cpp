#include "sageval/evaluator.hpp"

#include <charconv>
#include <climits>
#include <ctime>
#include <future>
#include <map>
#include <regex>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sageval/errors.hpp"

namespace sageval {

using nlohmann::json;

std::string_view to_string(ProbabilitySource source) {
    return source == ProbabilitySource::logprobs ? "logprobs" : "sampling";
}

namespace {

const std::regex& score_pattern() {
    static const std::regex re(R"(\bscore\b[\s*_`]*[:=][\s*_`]*([+-]?)(\d+)(\.\d+)?)", std::regex::icase);
    return re;
}

const std::regex& reasoning_pattern() {
    static const std::regex re(R"(\breasoning\b[\s*_`]*[:=])", std::regex::icase);
    return re;
}

const std::regex& tone_pattern() {
    static const std::regex re(R"(\btone\b[ \t*_`]*[:=][ \t*_`]*([^\n]*))", std::regex::icase);
    return re;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string strip(std::string_view s, std::string_view junk = " \t\r\n") {
    const auto first = s.find_first_not_of(junk);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(junk);
    return std::string(s.substr(first, last - first + 1));
}

// Drops code-fence lines, leading list/quote markers and outer emphasis.
std::string clean_prose(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::string out;
    while (std::getline(in, line)) {
        if (strip(line).rfind("```", 0) == 0) continue;
        if (!out.empty()) out += '\n';
        out += line;
    }
    const auto first = out.find_first_not_of(" \t\r\n*_`-:>");
    if (first == std::string::npos) return {};
    return strip(std::string_view(out).substr(first), " \t\r\n*_`");
}

struct ScoreMatch {
    std::size_t begin = 0;        // start of the whole match
    std::size_t end = 0;          // one past the match
    std::size_t digit_offset = 0;
    long long value = 0;
    bool fractional = false;
};

std::optional<ScoreMatch> find_score(std::string_view text) {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(text.begin(), text.end(), m, score_pattern())) return std::nullopt;
    ScoreMatch out;
    out.begin = static_cast<std::size_t>(m.position(0));
    out.end = out.begin + static_cast<std::size_t>(m.length(0));
    out.digit_offset = static_cast<std::size_t>(m.position(2));
    const std::string digits = m.str(2);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out.value);
    if (ec == std::errc::result_out_of_range) out.value = LLONG_MAX;
    if (m.str(1) == "-") out.value = -out.value;
    if (m[3].matched) {
        const std::string frac = m.str(3);
        out.fractional = frac.find_first_not_of(".0") != std::string::npos;
    }
    return out;
}

std::string extract_reasoning(std::string_view text, std::size_t stop_before, std::size_t fallback_from) {
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(text.begin(), text.end(), m, reasoning_pattern())) {
        const std::size_t start = static_cast<std::size_t>(m.position(0) + m.length(0));
        const std::size_t stop = (stop_before > start && stop_before != std::string_view::npos) ? stop_before
                                                                                                 : text.size();
        return clean_prose(text.substr(start, stop - start));
    }
    if (fallback_from < text.size()) return clean_prose(text.substr(fallback_from));
    return {};
}

std::string normalize_label(std::string_view raw) {
    std::string s(raw);
    for (const char* sep : {" | ", "|", " — ", " – ", " - ", ";", "(", ","}) {
        if (auto pos = s.find(sep); pos != std::string::npos) s.erase(pos);
    }
    s = strip(s, " \t\r\n*_`.!:\"'");
    std::string out;
    bool pending = false;
    for (unsigned char c : s) {
        if (is_space(static_cast<char>(c))) {
            pending = true;
            continue;
        }
        if (pending && !out.empty()) out += ' ';
        pending = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

}  // namespace

ScoreReply parse_score_response(std::string_view text) {
    const auto match = find_score(text);
    if (!match) throw UnparseableResponse("no 'Score:' line found");
    if (match->fractional) throw UnparseableResponse("score is not an integer");
    if (match->value < kMinScore || match->value > kMaxScore) throw OutOfRangeScore(match->value);

    ScoreReply reply;
    reply.score = static_cast<int>(match->value);
    reply.reasoning = extract_reasoning(text, match->begin, match->end);
    return reply;
}

std::optional<std::size_t> score_digit_offset(std::string_view text) {
    const auto match = find_score(text);
    if (!match) return std::nullopt;
    return match->digit_offset;
}

std::string parse_tone_response(std::string_view text) {
    std::match_results<std::string_view::const_iterator> m;
    // Prefer a line that starts with the label over a mention inside prose.
    std::size_t line_start = 0;
    while (line_start <= text.size()) {
        auto line_end = text.find('\n', line_start);
        if (line_end == std::string_view::npos) line_end = text.size();
        const std::string_view line = text.substr(line_start, line_end - line_start);
        const auto first = line.find_first_not_of(" \t>#*_-`");
        if (first != std::string_view::npos) {
            const std::string_view rest = line.substr(first);
            if (std::regex_search(rest.begin(), rest.end(), m, tone_pattern()) && m.position(0) == 0) {
                auto label = normalize_label(m.str(1));
                if (!label.empty()) return label;
            }
        }
        line_start = line_end + 1;
    }
    if (std::regex_search(text.begin(), text.end(), m, tone_pattern())) {
        auto label = normalize_label(m.str(1));
        if (!label.empty()) return label;
    }
    throw UnparseableResponse("no 'Tone:' label found");
}

std::string format_score_reply(int score, std::string_view reasoning) {
    return "Score: " + std::to_string(score) + "\nReasoning: " + std::string(reasoning);
}

std::string format_tone_reply(std::string_view label, std::string_view reasoning) {
    return "Tone: " + std::string(label) + "\nReasoning: " + std::string(reasoning);
}

std::vector<std::string> default_exemplars(OutputKind kind) {
    if (kind == OutputKind::categorical_tone) {
        return {format_tone_reply("neutral-informative",
                                  "The questions ask for facts in plain, even language without emotional cues."),
                format_tone_reply("positive", "The title and questions are upbeat and encouraging throughout.")};
    }
    return {format_score_reply(4, "The questions follow the theme of the user ask, but one question drifts into an "
                                  "unrelated topic."),
            format_score_reply(2, "Several questions repeat each other and the options do not cover likely answers.")};
}

llm::ChatRequest build_first_pass_prompt(const Form& form, const AspectDefinition& aspect,
                                         std::span<const std::string> exemplars, const AgentConfig& config) {
    const bool ordinal = aspect.is_ordinal();
    std::ostringstream system;
    system << "You are an Evaluator Agent. Your task is to evaluate an open-ended, reference-free "
              "form/survey/quiz that a language model generated from a user's request. There is no reference "
              "answer to compare against: judge the generated content on its own merits, one evaluation aspect "
              "at a time, and always explain the reasoning behind your assessment.";

    std::ostringstream user;
    user << "Evaluation aspect: " << aspect.name << " (" << aspect.short_code << ")\n\n";
    user << "Evaluation Criteria:\n" << aspect.description << "\n";
    if (ordinal) {
        user << "Assign a score from " << kMinScore << " to " << kMaxScore << ", where " << kMinScore
             << " is the lowest and " << kMaxScore << " is the highest.\n";
    } else {
        user << "Do not assign a numeric score; output the tone/sentiment of the generated content as a short "
                "label.\n";
    }
    user << "\nEvaluation Steps:\n";
    for (std::size_t i = 0; i < aspect.evaluation_steps.size(); ++i) {
        user << (i + 1) << ". " << aspect.evaluation_steps[i] << "\n";
    }
    if (!exemplars.empty()) {
        user << "\nExample responses (format only):\n";
        for (const auto& ex : exemplars) user << "---\n" << ex << "\n";
        user << "---\n";
    }
    user << "\nUser ask (the prompt the form was generated from):\n"
         << (form.user_prompt.empty() ? "(not provided)" : form.user_prompt) << "\n";
    user << "\nGenerated form:\n" << render_form_for_prompt(form) << "\n";
    if (ordinal) {
        user << "Respond with one line `Score: <" << kMinScore << "-" << kMaxScore
             << ">` followed by one line `Reasoning: <why you assigned this score>`.";
    } else {
        user << "Respond with one line `Tone: <label>` followed by one line `Reasoning: <why this tone>`.";
    }
    if (!config.reflection_instruction.empty()) user << "\n\n" << config.reflection_instruction;

    llm::ChatRequest request;
    request.messages = {{llm::Role::system, system.str()}, {llm::Role::user, user.str()}};
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    request.sample_count = config.sample_count;
    request.want_logprobs = false;
    request.model_id = config.model_id;
    return request;
}

llm::ChatRequest logprob_variant(llm::ChatRequest request) {
    request.sample_count = 1;
    request.temperature = 0.0;
    request.want_logprobs = true;
    return request;
}

const AspectAssessment* FirstPassRecord::find(std::string_view aspect_id) const {
    for (const auto& a : assessments) {
        if (a.aspect_id == aspect_id) return &a;
    }
    return nullptr;
}

std::string majority_label(std::span<const std::string> labels) {
    if (labels.empty()) throw EmptySamples("no labels");
    std::vector<std::pair<std::string, int>> tally;  // first-seen order
    for (const auto& l : labels) {
        auto it = std::find_if(tally.begin(), tally.end(), [&](const auto& e) { return e.first == l; });
        if (it == tally.end()) {
            tally.emplace_back(l, 1);
        } else {
            ++it->second;
        }
    }
    auto best = tally.begin();
    for (auto it = tally.begin(); it != tally.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return best->first;
}

namespace {

constexpr std::string_view kNoReasoning = "(no reasoning given)";

std::string concat_tokens(const std::vector<llm::TokenLogprob>& tokens) {
    std::string out;
    for (const auto& t : tokens) out += t.token;
    return out;
}

std::optional<AspectAssessment> try_logprob_mode(const Form& form, const AspectDefinition& aspect,
                                                 llm::Backend& backend, const AgentConfig& config,
                                                 const std::vector<std::string>& exemplars) {
    const auto request = logprob_variant(build_first_pass_prompt(form, aspect, exemplars, config));
    const auto response = backend.complete(request);
    const auto& completion = response.completions.front();
    if (!completion.token_logprobs || completion.token_logprobs->empty()) return std::nullopt;
    try {
        const ScoreReply reply = parse_score_response(completion.text);
        const std::string joined = concat_tokens(*completion.token_logprobs);
        const auto offset = score_digit_offset(joined);
        if (!offset) return std::nullopt;
        const auto index = token_at_offset(*completion.token_logprobs, *offset);
        if (!index) return std::nullopt;
        AspectAssessment a;
        a.aspect_id = aspect.aspect_id;
        a.aspect_version = aspect.version;
        a.output_kind = aspect.output_kind;
        a.distribution = distribution_from_logprobs((*completion.token_logprobs)[*index]);
        a.expected_score = expected_score(*a.distribution);
        a.reasoning = reply.reasoning.empty() ? std::string(kNoReasoning) : reply.reasoning;
        a.raw_completions = {completion.text};
        a.probability_source = ProbabilitySource::logprobs;
        return a;
    } catch (const Error& e) {
        spdlog::info("form {} aspect {}: logprob mode unusable ({}); falling back to sampling", form.id,
                     aspect.aspect_id, e.what());
        return std::nullopt;
    }
}

}  // namespace

AspectAssessment assess_aspect(const Form& form, const AspectDefinition& aspect, llm::Backend& backend,
                               const AgentConfig& config) {
    const auto exemplars = default_exemplars(aspect.output_kind);
    if (aspect.is_ordinal() && config.preference == ProbabilityPreference::logprobs) {
        if (auto a = try_logprob_mode(form, aspect, backend, config, exemplars)) return std::move(*a);
    }

    const auto request = build_first_pass_prompt(form, aspect, exemplars, config);
    const auto response = backend.complete(request);

    AspectAssessment a;
    a.aspect_id = aspect.aspect_id;
    a.aspect_version = aspect.version;
    a.output_kind = aspect.output_kind;
    a.probability_source = ProbabilitySource::sampling;
    std::optional<std::string> first_reasoning;
    std::string last_error;

    if (aspect.is_ordinal()) {
        std::vector<int> scores;
        for (const auto& c : response.completions) {
            a.raw_completions.push_back(c.text);
            try {
                auto reply = parse_score_response(c.text);
                scores.push_back(reply.score);
                if (!first_reasoning) first_reasoning = reply.reasoning;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        if (scores.empty()) {
            throw UnparseableResponse("none of " + std::to_string(response.completions.size()) +
                                      " completions had a usable score (last: " + last_error + ")");
        }
        a.distribution = distribution_from_samples(scores);
        a.expected_score = expected_score(*a.distribution);
    } else {
        std::vector<std::string> labels;
        for (const auto& c : response.completions) {
            a.raw_completions.push_back(c.text);
            try {
                labels.push_back(parse_tone_response(c.text));
                if (!first_reasoning) first_reasoning = extract_reasoning(c.text, std::string_view::npos, c.text.size());
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        if (labels.empty()) {
            throw UnparseableResponse("none of " + std::to_string(response.completions.size()) +
                                      " completions had a tone label (last: " + last_error + ")");
        }
        a.tone_label = majority_label(labels);
    }
    a.reasoning = (first_reasoning && !first_reasoning->empty()) ? *first_reasoning : std::string(kNoReasoning);
    return a;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

FirstPassRecord evaluate_form(const Form& form, const AspectRegistry& registry, llm::Backend& backend,
                              const AgentConfig& config) {
    FirstPassRecord record;
    record.form_id = form.id;
    record.model_id = config.model_id;
    record.started_at = utc_timestamp();

    const auto aspects = registry.current();
    std::vector<std::future<AspectAssessment>> pending;
    pending.reserve(aspects.size());
    for (const auto& aspect : aspects) {
        pending.push_back(std::async(std::launch::async, [&form, aspect, &backend, &config] {
            return assess_aspect(form, aspect, backend, config);
        }));
    }
    // Collected in registry order regardless of completion order.
    for (std::size_t i = 0; i < aspects.size(); ++i) {
        try {
            record.assessments.push_back(pending[i].get());
        } catch (const Error& e) {
            spdlog::error("form {} aspect {} failed: {}", form.id, aspects[i].aspect_id, e.what());
            record.failures.push_back({aspects[i].aspect_id, e.kind(), e.what()});
        } catch (const std::exception& e) {
            spdlog::error("form {} aspect {} failed: {}", form.id, aspects[i].aspect_id, e.what());
            record.failures.push_back({aspects[i].aspect_id, "Error", e.what()});
        }
    }
    record.finished_at = utc_timestamp();
    return record;
}

json to_json(const AspectAssessment& a) {
    json out = {{"aspect_id", a.aspect_id},
                {"aspect_version", a.aspect_version},
                {"output_kind", std::string(to_string(a.output_kind))},
                {"probability_source", std::string(to_string(a.probability_source))},
                {"reasoning", a.reasoning},
                {"raw_completions", a.raw_completions}};
    if (a.distribution) out["distribution"] = a.distribution->to_json();
    if (a.expected_score) out["expected_score"] = *a.expected_score;
    if (a.tone_label) out["tone_label"] = *a.tone_label;
    return out;
}

AspectAssessment assessment_from_json(const json& v) {
    try {
        AspectAssessment a;
        a.aspect_id = v.at("aspect_id").get<std::string>();
        a.aspect_version = v.at("aspect_version").get<int>();
        a.output_kind = v.at("output_kind").get<std::string>() == "categorical_tone" ? OutputKind::categorical_tone
                                                                                     : OutputKind::ordinal_1_to_5;
        a.probability_source = v.at("probability_source").get<std::string>() == "logprobs"
                                   ? ProbabilitySource::logprobs
                                   : ProbabilitySource::sampling;
        a.reasoning = v.at("reasoning").get<std::string>();
        a.raw_completions = v.value("raw_completions", std::vector<std::string>{});
        if (auto it = v.find("distribution"); it != v.end()) a.distribution = ScoreDistribution::from_json(*it);
        if (auto it = v.find("expected_score"); it != v.end()) a.expected_score = it->get<double>();
        if (auto it = v.find("tone_label"); it != v.end()) a.tone_label = it->get<std::string>();
        return a;
    } catch (const json::exception& e) {
        throw SchemaError("assessment", e.what());
    }
}

json to_json(const FirstPassRecord& r) {
    json assessments = json::array();
    for (const auto& a : r.assessments) assessments.push_back(to_json(a));
    json failures = json::array();
    for (const auto& f : r.failures) {
        failures.push_back({{"aspect_id", f.aspect_id}, {"error", f.error_kind}, {"message", f.message}});
    }
    return {{"form_id", r.form_id},
            {"model_id", r.model_id},
            {"partial", r.partial()},
            {"assessments", std::move(assessments)},
            {"failures", std::move(failures)}};
}

FirstPassRecord first_pass_from_json(const json& v) {
    try {
        FirstPassRecord r;
        r.form_id = v.at("form_id").get<std::string>();
        r.model_id = v.value("model_id", "");
        for (const auto& a : v.at("assessments")) r.assessments.push_back(assessment_from_json(a));
        for (const auto& f : v.value("failures", json::array())) {
            r.failures.push_back({f.at("aspect_id").get<std::string>(), f.value("error", ""), f.value("message", "")});
        }
        return r;
    } catch (const json::exception& e) {
        throw SchemaError("first_pass", e.what());
    }
}

}  // namespace sageval
