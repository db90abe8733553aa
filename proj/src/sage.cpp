#include "sageval/sage.hpp"

#include <algorithm>
#include <charconv>
#include <climits>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sageval/errors.hpp"
#include "sageval/io.hpp"

namespace sageval {

using nlohmann::json;

std::string_view to_string(Direction d) { return d == Direction::negative ? "negative" : "positive"; }

std::optional<Rectification> make_rectification(std::string aspect_id, double original_expected,
                                                ScoreDistribution rectified, std::string rationale) {
    const double rectified_expected = expected_score(rectified);
    if (rectified_expected == original_expected) return std::nullopt;
    Rectification r;
    r.aspect_id = std::move(aspect_id);
    r.original_expected = original_expected;
    r.rectified_distribution = std::move(rectified);
    r.rectified_expected = rectified_expected;
    r.direction = rectified_expected < original_expected ? Direction::negative : Direction::positive;
    r.rationale = std::move(rationale);
    return r;
}

const Rectification* SageVerdict::find(std::string_view aspect_id) const {
    for (const auto& r : rectifications) {
        if (r.aspect_id == aspect_id) return &r;
    }
    return nullptr;
}

const FinalScore* FinalRecord::find(std::string_view aspect_id) const {
    for (const auto& s : scores) {
        if (s.aspect_id == aspect_id) return &s;
    }
    return nullptr;
}

// ---- critique grammar ------------------------------------------------------

namespace {

std::string strip(std::string_view s, std::string_view junk = " \t\r\n") {
    const auto first = s.find_first_not_of(junk);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(junk);
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string collapse_label(std::string_view raw) {
    std::string out;
    bool pending = false;
    for (unsigned char c : strip(raw, " \t\r\n*_`.!\"'")) {
        if (std::isspace(c)) {
            pending = true;
            continue;
        }
        if (pending && !out.empty()) out += ' ';
        pending = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

// Separators between a verdict value and its rationale.
constexpr std::string_view kSeparators[] = {" — ", " – ", " - ", "—", "–", " | ", "|", ": ", ";"};

std::pair<std::string, std::string> split_value(std::string_view value) {
    std::size_t best = std::string_view::npos;
    std::size_t best_len = 0;
    for (auto sep : kSeparators) {
        const auto pos = value.find(sep);
        if (pos != std::string_view::npos && pos < best) {
            best = pos;
            best_len = sep.size();
        }
    }
    if (best == std::string_view::npos) return {strip(value), {}};
    return {strip(value.substr(0, best)), strip(value.substr(best + best_len), " \t\r\n*_`")};
}

enum class Block { none, verdicts, definition, new_aspect };

struct Line {
    std::string text;     // markdown-stripped
    std::size_t offset;   // byte offset of text[0] in the original
};

std::vector<Line> logical_lines(std::string_view text) {
    std::vector<Line> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view raw = text.substr(start, end - start);
        const auto first = raw.find_first_not_of(" \t>#*_`-");
        if (first != std::string_view::npos && raw.substr(first).rfind("``", 0) != 0) {
            std::string body = strip(raw.substr(first));
            // Trailing emphasis from "**VERDICTS**" style headings.
            while (!body.empty() && (body.back() == '*' || body.back() == '_')) body.pop_back();
            out.push_back({body, start + first});
        }
        start = end + 1;
    }
    return out;
}

const std::regex& verdict_line() {
    // KEY: VALUE, e.g. "AENG: 2 (too generic)" or "Audience Engagement: AGREE".
    static const std::regex re(R"(^([A-Za-z][A-Za-z0-9_/ -]*?)[ \t*_`]*[:=][ \t*_`]*(.*)$)");
    return re;
}

const std::regex& score_value() {
    static const std::regex re(R"(^([+-]?)(\d+)(\.\d+)?(?:\s*/\s*5)?\b(.*)$)");
    return re;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i]))) {
            return false;
        }
    }
    return true;
}

// "NEW_ASPECT", "New Aspect 2", "NEW-ASPECT: Creativity Score".
bool is_new_aspect_header(const std::string& s, std::string& inline_rest) {
    static const std::regex re(R"(^new[ \t_-]*aspect\b[ \t*_`]*(?:#?\d+)?[ \t*_`.)]*(?::[ \t]*(.*))?$)",
                               std::regex::icase);
    std::smatch m;
    if (!std::regex_match(s, m, re)) return false;
    inline_rest = m[1].matched ? strip(m.str(1), " \t*_`") : std::string();
    return true;
}

struct FieldLine {
    std::string key;  // lowercase
    std::string value;
};

std::optional<FieldLine> field(std::string_view line) {
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon > 24) return std::nullopt;
    std::string key = lower(strip(line.substr(0, colon), " \t*_`"));
    if (key.find_first_not_of("abcdefghijklmnopqrstuvwxyz _") != std::string::npos) return std::nullopt;
    return FieldLine{key, strip(line.substr(colon + 1), " \t*_`")};
}

struct DefinitionDraft {
    std::string aspect_key;
    std::string revised;
    std::string rationale;
    std::string* last = nullptr;
};

struct SuggestionDraft {
    std::string name;
    std::string description;
    std::string rationale;
    std::string* last = nullptr;
};

void append(std::string& target, const std::string& text) {
    if (!target.empty()) target += ' ';
    target += text;
}

}  // namespace

ParsedCritique parse_critique(std::string_view text, const AspectRegistry& registry) {
    ParsedCritique out;
    Block block = Block::none;
    bool saw_verdict_header = false;
    std::vector<DefinitionDraft> definitions;
    std::vector<SuggestionDraft> suggestions;

    for (auto& line : logical_lines(text)) {
        const std::string& s = line.text;
        std::string inline_rest;

        if (starts_with_ci(s, "verdicts") || lower(s) == "verdict" || starts_with_ci(s, "verdict:")) {
            block = Block::verdicts;
            saw_verdict_header = true;
            continue;
        }
        if (starts_with_ci(s, "definition") &&
            (s.size() == 10 || !std::isalpha(static_cast<unsigned char>(s[10])))) {
            // "Definition: <text>" inside a block is a field, not a new section.
            std::string rest = strip(s.substr(10), " \t:*_`");
            const bool in_block = block == Block::definition || block == Block::new_aspect;
            if (rest.empty() || registry.lookup(rest) || (!in_block && rest.find(' ') == std::string::npos)) {
                block = Block::definition;
                definitions.push_back({});
                definitions.back().aspect_key = std::move(rest);
                continue;
            }
        }
        if (is_new_aspect_header(s, inline_rest)) {
            block = Block::new_aspect;
            suggestions.push_back({});
            suggestions.back().name = inline_rest;
            continue;
        }

        if (block == Block::definition) {
            auto& d = definitions.back();
            if (auto f = field(s)) {
                if (f->key == "aspect") {
                    d.aspect_key = f->value;
                    d.last = nullptr;
                } else if (f->key == "revised" || f->key == "revised definition" || f->key == "definition" ||
                           f->key == "description" || f->key == "revised description") {
                    d.revised = f->value;
                    d.last = &d.revised;
                } else if (f->key == "rationale" || f->key == "reason") {
                    d.rationale = f->value;
                    d.last = &d.rationale;
                } else if (d.last) {
                    append(*d.last, s);
                }
            } else if (d.last) {
                append(*d.last, s);
            } else if (d.revised.empty()) {
                d.revised = s;
                d.last = &d.revised;
            }
            continue;
        }
        if (block == Block::new_aspect) {
            auto& g = suggestions.back();
            if (auto f = field(s)) {
                if (f->key == "name" || f->key == "aspect") {
                    g.name = f->value;
                    g.last = nullptr;
                } else if (f->key == "description" || f->key == "definition") {
                    g.description = f->value;
                    g.last = &g.description;
                } else if (f->key == "rationale" || f->key == "reason") {
                    g.rationale = f->value;
                    g.last = &g.rationale;
                } else if (g.last) {
                    append(*g.last, s);
                }
            } else if (g.last) {
                append(*g.last, s);
            }
            continue;
        }

        std::smatch m;
        if (!std::regex_match(s, m, verdict_line())) continue;
        const std::string key = m.str(1);
        const std::string value = strip(m.str(2), " \t*_`");
        const auto lead = m.str(2).find_first_not_of(" \t*_`");
        const std::size_t value_offset =
            line.offset + static_cast<std::size_t>(m.position(2)) + (lead == std::string::npos ? 0 : lead);
        const bool verdict_shaped =
            starts_with_ci(value, "agree") ||
            (!value.empty() && (std::isdigit(static_cast<unsigned char>(value[0])) || value[0] == '-' ||
                                value[0] == '+'));
        const AspectDefinition* aspect = registry.lookup(key);
        if (!aspect) {
            // Multi-word unknown keys are more likely prose than a misnamed aspect.
            const bool single_token = key.find_first_of(" /-") == std::string::npos;
            if (verdict_shaped && single_token && (block == Block::verdicts || key.find_first_of("abcdefghijklmnopqrstuvwxyz") ==
                                                                   std::string::npos)) {
                throw UnknownAspectInVerdict("verdict names unknown aspect '" + key + "'");
            }
            continue;
        }
        if (out.votes.count(aspect->aspect_id)) continue;  // first verdict wins

        AspectVote vote;
        if (starts_with_ci(value, "agree")) {
            vote.agree = true;
            vote.rationale = split_value(value.substr(5)).second;
            if (vote.rationale.empty()) vote.rationale = strip(value.substr(5), " \t—–-|:;*_`");
        } else if (aspect->is_ordinal()) {
            std::smatch sm;
            if (!std::regex_match(value, sm, score_value())) {
                throw UnparseableVerdict("verdict for " + aspect->short_code + " is neither AGREE nor a score: '" +
                                         value + "'");
            }
            if (sm[3].matched && sm.str(3).find_first_not_of(".0") != std::string::npos) {
                throw UnparseableVerdict("replacement score for " + aspect->short_code + " is not an integer");
            }
            long long n = 0;
            const std::string digits = sm.str(2);
            auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
            if (ec == std::errc::result_out_of_range) n = LLONG_MAX;
            if (sm.str(1) == "-") n = -n;
            if (n < kMinScore || n > kMaxScore) throw OutOfRangeScore(n);
            vote.score = static_cast<int>(n);
            vote.value_offset = value_offset + static_cast<std::size_t>(sm.position(2));
            vote.rationale = strip(sm.str(4), " \t—–-|:;,.*_`");
        } else {
            auto [label, rationale] = split_value(value);
            label = collapse_label(label);
            if (label.empty()) throw UnparseableVerdict("empty tone label for " + aspect->short_code);
            vote.label = label;
            vote.rationale = rationale;
        }
        out.votes.emplace(aspect->aspect_id, std::move(vote));
    }

    for (auto& d : definitions) {
        const AspectDefinition* aspect = registry.lookup(d.aspect_key);
        if (!aspect) throw UnknownAspectInVerdict("DEFINITION names unknown aspect '" + d.aspect_key + "'");
        if (d.revised.empty()) throw UnparseableVerdict("DEFINITION for " + aspect->short_code + " has no text");
        out.revisions.push_back({aspect->aspect_id, d.revised, d.rationale, {}});
    }
    if (suggestions.size() > kMaxSuggestionsPerForm) {
        throw TooManySuggestions(std::to_string(suggestions.size()) + " NEW_ASPECT sections (at most " +
                                 std::to_string(kMaxSuggestionsPerForm) + ")");
    }
    for (auto& g : suggestions) {
        if (strip(g.name).empty()) throw UnparseableVerdict("NEW_ASPECT section without a name");
        out.suggestions.push_back({g.name, g.description, g.rationale, {}});
    }
    if (out.votes.empty() && !saw_verdict_header && out.revisions.empty() && out.suggestions.empty()) {
        throw UnparseableVerdict("no verdict lines found");
    }
    return out;
}

SageVerdict verdict_from_samples(const FirstPassRecord& first_pass, const AspectRegistry& registry,
                                 const std::vector<ParsedCritique>& samples,
                                 const std::map<std::string, ScoreDistribution>& logprob_distributions) {
    SageVerdict verdict;
    verdict.form_id = first_pass.form_id;
    verdict.samples_parsed = static_cast<int>(samples.size());
    const std::size_t n = samples.size();
    if (n == 0) throw UnparseableVerdict("no parsed critique samples");

    for (const auto& assessment : first_pass.assessments) {
        const std::string& id = assessment.aspect_id;
        if (assessment.output_kind == OutputKind::ordinal_1_to_5) {
            std::vector<int> replacements;
            std::string rationale;
            for (const auto& sample : samples) {
                auto it = sample.votes.find(id);
                if (it == sample.votes.end() || !it->second.score) continue;
                replacements.push_back(*it->second.score);
                if (rationale.empty()) rationale = it->second.rationale;
            }
            if (2 * replacements.size() <= n || !assessment.expected_score) continue;
            auto lp = logprob_distributions.find(id);
            ScoreDistribution dist =
                lp != logprob_distributions.end() ? lp->second : distribution_from_samples(replacements);
            if (auto r = make_rectification(id, *assessment.expected_score, std::move(dist), rationale)) {
                verdict.rectifications.push_back(std::move(*r));
            }
        } else if (assessment.tone_label) {
            std::vector<std::string> labels;
            std::string rationale;
            for (const auto& sample : samples) {
                auto it = sample.votes.find(id);
                if (it == sample.votes.end() || !it->second.label || *it->second.label == *assessment.tone_label) {
                    continue;
                }
                labels.push_back(*it->second.label);
                if (rationale.empty()) rationale = it->second.rationale;
            }
            if (2 * labels.size() > n) {
                verdict.tone_correction = ToneCorrection{*assessment.tone_label, majority_label(labels), rationale};
            }
        }
    }

    std::vector<std::string> revised_aspects;
    for (const auto& sample : samples) {
        for (const auto& rev : sample.revisions) {
            if (std::find(revised_aspects.begin(), revised_aspects.end(), rev.aspect_id) != revised_aspects.end()) {
                continue;
            }
            const AspectDefinition* current_def = registry.latest(rev.aspect_id);
            if (current_def && current_def->description == rev.revised_description) continue;
            revised_aspects.push_back(rev.aspect_id);
            DefinitionRevision r = rev;
            r.source_form_id = first_pass.form_id;
            verdict.revisions.push_back(std::move(r));
        }
    }

    // Suggestions: most frequent across samples, first appearance breaks ties.
    struct Tally {
        std::string key;
        AspectSuggestion first;
        int count = 0;
        std::size_t order = 0;
    };
    std::vector<Tally> tally;
    for (const auto& sample : samples) {
        for (const auto& s : sample.suggestions) {
            const std::string key = slugify(s.name);
            auto it = std::find_if(tally.begin(), tally.end(), [&](const Tally& t) { return t.key == key; });
            if (it == tally.end()) {
                tally.push_back({key, s, 1, tally.size()});
            } else {
                ++it->count;
            }
        }
    }
    std::stable_sort(tally.begin(), tally.end(), [](const Tally& a, const Tally& b) {
        return a.count != b.count ? a.count > b.count : a.order < b.order;
    });
    for (std::size_t i = 0; i < tally.size() && i < kMaxSuggestionsPerForm; ++i) {
        AspectSuggestion s = tally[i].first;
        s.source_form_id = first_pass.form_id;
        verdict.suggestions.push_back(std::move(s));
    }
    return verdict;
}

SageVerdict parse_critique_response(std::string_view text, const AspectRegistry& registry,
                                    const FirstPassRecord& first_pass) {
    SageVerdict v = verdict_from_samples(first_pass, registry, {parse_critique(text, registry)});
    v.raw_completions = {std::string(text)};
    return v;
}

llm::ChatRequest build_critique_prompt(const Form& form, const FirstPassRecord& first_pass,
                                       const AspectRegistry& registry, const AgentConfig& config) {
    if (first_pass.partial()) {
        throw PartialFirstPass("first pass for form " + first_pass.form_id + " is missing " +
                               std::to_string(first_pass.failures.size()) + " aspect(s)");
    }
    std::ostringstream system;
    system << "You are the SAGE Agent, a wiser meta-reviewer. Another agent (the Evaluator Agent) has already "
              "scored a generated form/survey/quiz on a set of predefined aspects. Examine the form "
              "yourself, assess each of the Evaluator Agent's scores and its reasoning, and rectify the scores "
              "you disagree with. There is no reference answer; rely on the form and the aspect definitions.";

    std::ostringstream user;
    user << "User ask (the prompt the form was generated from):\n"
         << (form.user_prompt.empty() ? "(not provided)" : form.user_prompt) << "\n\n";
    user << "Generated form:\n" << render_form_for_prompt(form) << "\n";
    user << "First-pass assessments:\n";
    std::vector<std::string> codes;
    for (const auto& a : first_pass.assessments) {
        const AspectDefinition* def = registry.find(a.aspect_id, a.aspect_version);
        if (!def) def = registry.latest(a.aspect_id);
        if (!def) throw UnknownAspect("first pass references unknown aspect '" + a.aspect_id + "'");
        codes.push_back(def->short_code);
        user << "\n### " << def->name << " (" << def->short_code << ")\n";
        user << "Definition: " << def->description << "\n";
        user << "Evaluation steps:\n";
        for (std::size_t i = 0; i < def->evaluation_steps.size(); ++i) {
            user << "  " << (i + 1) << ". " << def->evaluation_steps[i] << "\n";
        }
        if (a.expected_score) {
            user << "First-pass score: " << fmt::format("{:.2f}", *a.expected_score) << " (scale " << kMinScore
                 << "-" << kMaxScore << ")\n";
        } else if (a.tone_label) {
            user << "First-pass tone: " << *a.tone_label << "\n";
        }
        user << "First-pass reasoning: " << a.reasoning << "\n";
    }

    user << "\nTasks:\n"
            "1. For every aspect, either agree with the first-pass assessment or rectify it with a replacement "
            "score from "
         << kMinScore << " to " << kMaxScore
         << " (for the tone aspect, a replacement tone label), with a rationale.\n"
            "2. Separately, if an aspect definition does not adequately cover what it should measure for this "
            "form, propose a revised definition.\n"
            "3. Optionally, suggest at most "
         << kMaxSuggestionsPerForm
         << " new aspects that would increase evaluation coverage, measuring gaps the predefined aspects miss.\n\n";
    user << "Output format (use these exact section headers):\n"
            "VERDICTS\n";
    for (const auto& code : codes) user << code << ": AGREE  |  or  " << code << ": <replacement> — <rationale>\n";
    user << "\nDEFINITION <aspect code>   (zero or more sections)\n"
            "Revised: <revised definition>\n"
            "Rationale: <why the definition should change>\n\n"
            "NEW_ASPECT   (zero to "
         << kMaxSuggestionsPerForm
         << " sections, at most " << kMaxSuggestionsPerForm
         << ")\n"
            "Name: <aspect name>\n"
            "Description: <what it measures>\n"
            "Rationale: <which gap it covers>\n";

    llm::ChatRequest request;
    request.messages = {{llm::Role::system, system.str()}, {llm::Role::user, user.str()}};
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    request.sample_count = config.sample_count;
    request.want_logprobs = false;
    request.model_id = config.model_id;
    return request;
}

namespace {

std::optional<SageVerdict> critique_with_logprobs(const FirstPassRecord& first_pass, const AspectRegistry& registry,
                                                  llm::Backend& backend, const llm::ChatRequest& base) {
    const auto response = backend.complete(logprob_variant(base));
    const auto& completion = response.completions.front();
    if (!completion.token_logprobs || completion.token_logprobs->empty()) return std::nullopt;
    std::string joined;
    for (const auto& t : *completion.token_logprobs) joined += t.token;
    try {
        ParsedCritique parsed = parse_critique(joined, registry);
        std::map<std::string, ScoreDistribution> dists;
        for (const auto& [id, vote] : parsed.votes) {
            if (!vote.score) continue;
            const auto index = token_at_offset(*completion.token_logprobs, vote.value_offset);
            if (!index) continue;
            try {
                dists.emplace(id, distribution_from_logprobs((*completion.token_logprobs)[*index]));
            } catch (const NoScoreTokensFound&) {
                dists.emplace(id, ScoreDistribution::point_mass(*vote.score));
            }
        }
        SageVerdict v = verdict_from_samples(first_pass, registry, {std::move(parsed)}, dists);
        v.raw_completions = {completion.text};
        return v;
    } catch (const Error& e) {
        spdlog::info("form {}: critique logprob mode unusable ({}); falling back to sampling", first_pass.form_id,
                     e.what());
        return std::nullopt;
    }
}

}  // namespace

SageVerdict critique(const Form& form, const FirstPassRecord& first_pass, const AspectRegistry& registry,
                     llm::Backend& backend, const AgentConfig& config) {
    const auto request = build_critique_prompt(form, first_pass, registry, config);
    if (config.preference == ProbabilityPreference::logprobs) {
        if (auto v = critique_with_logprobs(first_pass, registry, backend, request)) return std::move(*v);
    }
    const auto response = backend.complete(request);
    std::vector<ParsedCritique> samples;
    std::vector<std::string> raw;
    std::string last_error;
    for (const auto& c : response.completions) {
        raw.push_back(c.text);
        try {
            samples.push_back(parse_critique(c.text, registry));
        } catch (const Error& e) {
            last_error = std::string(e.kind()) + ": " + e.what();
        }
    }
    if (samples.empty()) {
        throw UnparseableVerdict("none of " + std::to_string(response.completions.size()) +
                                 " critique samples parsed (last: " + last_error + ")");
    }
    SageVerdict v = verdict_from_samples(first_pass, registry, samples);
    v.raw_completions = std::move(raw);
    return v;
}

FinalRecord finalize_scores(const FirstPassRecord& first_pass, const SageVerdict& verdict) {
    if (first_pass.form_id != verdict.form_id) {
        throw FormMismatch("verdict for '" + verdict.form_id + "' applied to first pass of '" + first_pass.form_id +
                           "'");
    }
    FinalRecord out;
    out.form_id = first_pass.form_id;
    out.first_pass_ref = "first_pass/" + io::safe_file_stem(first_pass.form_id) + ".json";
    out.verdict_ref = "sage/" + io::safe_file_stem(verdict.form_id) + ".json";
    for (const auto& a : first_pass.assessments) {
        if (a.expected_score) {
            FinalScore s{a.aspect_id, *a.expected_score, *a.expected_score, false};
            if (const Rectification* r = verdict.find(a.aspect_id)) {
                s.final_expected = r->rectified_expected;
                s.rectified = true;
            }
            out.scores.push_back(s);
        } else if (a.tone_label) {
            out.first_pass_tone = a.tone_label;
            out.final_tone = verdict.tone_correction ? verdict.tone_correction->label : *a.tone_label;
        }
    }
    return out;
}

json to_json(const Rectification& r) {
    return {{"aspect_id", r.aspect_id},
            {"original_expected", r.original_expected},
            {"rectified_distribution", r.rectified_distribution.to_json()},
            {"rectified_expected", r.rectified_expected},
            {"direction", std::string(to_string(r.direction))},
            {"rationale", r.rationale}};
}

Rectification rectification_from_json(const json& v) {
    try {
        Rectification r;
        r.aspect_id = v.at("aspect_id").get<std::string>();
        r.original_expected = v.at("original_expected").get<double>();
        r.rectified_distribution = ScoreDistribution::from_json(v.at("rectified_distribution"));
        r.rectified_expected = v.at("rectified_expected").get<double>();
        const std::string dir = v.at("direction").get<std::string>();
        if (dir != "negative" && dir != "positive") throw SchemaError("direction", "unknown direction '" + dir + "'");
        r.direction = dir == "negative" ? Direction::negative : Direction::positive;
        r.rationale = v.value("rationale", "");
        const bool lowered = r.rectified_expected < r.original_expected;
        if (r.rectified_expected == r.original_expected || lowered != (r.direction == Direction::negative)) {
            throw InvariantError("rectification of '" + r.aspect_id + "' has inconsistent direction");
        }
        return r;
    } catch (const json::exception& e) {
        throw SchemaError("rectification", e.what());
    }
}

json to_json(const SageVerdict& v) {
    json rects = json::array();
    for (const auto& r : v.rectifications) rects.push_back(to_json(r));
    json revs = json::array();
    for (const auto& r : v.revisions) revs.push_back(to_json(r));
    json sugg = json::array();
    for (const auto& s : v.suggestions) sugg.push_back(to_json(s));
    json tone = nullptr;
    if (v.tone_correction) {
        tone = {{"original_label", v.tone_correction->original_label},
                {"label", v.tone_correction->label},
                {"rationale", v.tone_correction->rationale}};
    }
    return {{"form_id", v.form_id},
            {"rectifications", std::move(rects)},
            {"revisions", std::move(revs)},
            {"suggestions", std::move(sugg)},
            {"tone_correction", std::move(tone)},
            {"samples_parsed", v.samples_parsed},
            {"raw_completions", v.raw_completions}};
}

SageVerdict verdict_from_json(const json& v) {
    try {
        SageVerdict out;
        out.form_id = v.at("form_id").get<std::string>();
        for (const auto& r : v.value("rectifications", json::array())) {
            auto rect = rectification_from_json(r);
            if (out.find(rect.aspect_id)) {
                throw InvariantError("verdict for '" + out.form_id + "' rectifies '" + rect.aspect_id + "' twice");
            }
            out.rectifications.push_back(std::move(rect));
        }
        for (const auto& r : v.value("revisions", json::array())) out.revisions.push_back(revision_from_json(r));
        for (const auto& s : v.value("suggestions", json::array())) out.suggestions.push_back(suggestion_from_json(s));
        if (out.suggestions.size() > kMaxSuggestionsPerForm) {
            throw TooManySuggestions("verdict for '" + out.form_id + "' carries " +
                                     std::to_string(out.suggestions.size()) + " suggestions");
        }
        if (auto it = v.find("tone_correction"); it != v.end() && !it->is_null()) {
            out.tone_correction = ToneCorrection{it->value("original_label", ""), it->at("label").get<std::string>(),
                                                 it->value("rationale", "")};
        }
        out.samples_parsed = v.value("samples_parsed", 0);
        out.raw_completions = v.value("raw_completions", std::vector<std::string>{});
        return out;
    } catch (const json::exception& e) {
        throw SchemaError("verdict", e.what());
    }
}

json to_json(const FinalRecord& r) {
    json scores = json::array();
    for (const auto& s : r.scores) {
        scores.push_back({{"aspect_id", s.aspect_id},
                          {"first_pass_expected", s.first_pass_expected},
                          {"final_expected", s.final_expected},
                          {"rectified", s.rectified}});
    }
    json out = {{"form_id", r.form_id},
                {"scores", std::move(scores)},
                {"first_pass_tone", r.first_pass_tone ? json(*r.first_pass_tone) : json(nullptr)},
                {"final_tone", r.final_tone ? json(*r.final_tone) : json(nullptr)},
                {"provenance", {{"first_pass", r.first_pass_ref}, {"verdict", r.verdict_ref}}}};
    return out;
}

FinalRecord final_record_from_json(const json& v) {
    try {
        FinalRecord r;
        r.form_id = v.at("form_id").get<std::string>();
        for (const auto& s : v.at("scores")) {
            r.scores.push_back({s.at("aspect_id").get<std::string>(), s.at("first_pass_expected").get<double>(),
                                s.at("final_expected").get<double>(), s.value("rectified", false)});
        }
        if (auto it = v.find("first_pass_tone"); it != v.end() && !it->is_null()) r.first_pass_tone = it->get<std::string>();
        if (auto it = v.find("final_tone"); it != v.end() && !it->is_null()) r.final_tone = it->get<std::string>();
        if (auto it = v.find("provenance"); it != v.end()) {
            r.first_pass_ref = it->value("first_pass", "");
            r.verdict_ref = it->value("verdict", "");
        }
        return r;
    } catch (const json::exception& e) {
        throw SchemaError("final_record", e.what());
    }
}

}  // namespace sageval
