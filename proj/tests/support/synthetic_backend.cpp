#include "synthetic_backend.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <regex>
#include <sstream>

#include <fmt/format.h>

namespace sageval::support {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string field(const std::string& text, const std::regex& re) {
    std::smatch m;
    return std::regex_search(text, m, re) ? m.str(1) : std::string();
}

const std::string& user_text(const llm::ChatRequest& r) {
    for (const auto& m : r.messages) {
        if (m.role == llm::Role::user) return m.content;
    }
    static const std::string empty;
    return empty;
}

std::string form_title(const llm::ChatRequest& r) {
    static const std::regex re(R"(Title: ([^\n]*))");
    return field(user_text(r), re);
}

// Probability over 1..5 peaked at `peak`.
std::array<double, 5> peaked(int peak, double top) {
    std::array<double, 5> p{};
    double rest = 1.0 - top;
    int neighbours = (peak > 1) + (peak < 5);
    for (int s = 1; s <= 5; ++s) {
        if (s == peak) p[s - 1] = top;
        else if (std::abs(s - peak) == 1) p[s - 1] = rest * 0.8 / neighbours;
    }
    double far = 0;
    for (double v : p) far += v;
    const double leftover = 1.0 - far;
    int others = 0;
    for (int s = 1; s <= 5; ++s) others += std::abs(s - peak) > 1;
    for (int s = 1; s <= 5; ++s) {
        if (std::abs(s - peak) > 1) p[s - 1] = leftover / others;
    }
    return p;
}

int draw(const std::array<double, 5>& p, std::mt19937_64& rng) {
    std::discrete_distribution<int> d(p.begin(), p.end());
    return d(rng) + 1;
}

std::vector<llm::TokenLogprob> tokenize_with_alternatives(const std::string& text,
                                                          const std::map<std::size_t, std::array<double, 5>>& at) {
    std::vector<llm::TokenLogprob> out;
    std::size_t offset = 0;
    for (auto& tok : synthetic_tokens(text)) {
        llm::TokenLogprob t;
        t.token = tok;
        t.logprob = -0.01;
        if (auto it = at.find(offset); it != at.end()) {
            const auto& p = it->second;
            const int chosen = tok[0] - '0';
            t.logprob = std::log(p[chosen - 1]);
            for (int s = 1; s <= 5; ++s) t.top_alternatives.push_back({std::to_string(s), std::log(p[s - 1])});
            std::stable_sort(t.top_alternatives.begin(), t.top_alternatives.end(),
                             [](const auto& a, const auto& b) { return a.logprob > b.logprob; });
        }
        offset += tok.size();
        out.push_back(std::move(t));
    }
    return out;
}

const std::array<const char*, 4> kReasons = {
    "The questions stay on one theme and are easy to follow.",
    "Some questions drift from the stated goal of the form.",
    "Options are clear, though one question repeats an earlier idea.",
    "The wording is plain and suits the intended respondents.",
};

std::string score_text(int score, std::mt19937_64& rng) {
    const std::string reason = kReasons[rng() % kReasons.size()];
    switch (rng() % 5) {
        case 0: return fmt::format("**Score:** {}\nReasoning: {}", score, reason);
        case 1: return fmt::format("Let me look at this form.\nScore: {}\nReasoning: {}", score, reason);
        case 2: return fmt::format("Reasoning: {}\nScore: {}", reason, score);
        default: return fmt::format("Score: {}\nReasoning: {}", score, reason);
    }
}

const std::array<const char*, 3> kTones = {"neutral", "friendly", "formal"};

std::string expected_tone(std::string_view title) { return kTones[fnv1a(title, 99) % kTones.size()]; }

llm::ChatResponse first_pass(const llm::ChatRequest& r, const SyntheticOptions& o, std::mt19937_64& rng) {
    static const std::regex code_re(R"(Evaluation aspect: [^\n]*\((\w+)\))");
    const std::string title = form_title(r);
    const std::string code = field(user_text(r), code_re);
    llm::ChatResponse resp;
    if (code == "SENT") {
        const std::string tone = expected_tone(title);
        for (int i = 0; i < r.sample_count; ++i) {
            const bool off = rng() % 4 == 0;
            const std::string label = off ? kTones[(rng() % kTones.size())] : tone;
            resp.completions.push_back({fmt::format("Tone: {}\nReasoning: The wording reads as {}.", label, label),
                                        std::nullopt});
        }
    } else {
        const int peak = std::min(5, latent_quality(title, code) + (evaluator_overrates(title, code) ? 1 : 0));
        const auto p = peaked(peak, 0.55 + 0.3 * static_cast<double>(fnv1a(title + code) % 100) / 100.0);
        if (r.want_logprobs) {
            const std::string text = fmt::format("Score: {}\nReasoning: {}", peak, kReasons[fnv1a(code) % 4]);
            llm::Completion c{text, std::nullopt};
            if (!o.no_logprob_titles.count(title)) c.token_logprobs = tokenize_with_alternatives(text, {{7, p}});
            resp.completions.push_back(std::move(c));
        } else {
            for (int i = 0; i < r.sample_count; ++i) resp.completions.push_back({score_text(draw(p, rng), rng), {}});
        }
    }
    return resp;
}

struct Seen {
    std::string code;
    double score = 0;
    std::string tone;
};

std::vector<Seen> seen_in_critique(const std::string& user) {
    static const std::regex re(R"(### [^\n]*\((\w+)\)\n(?:[^\n]*\n)*?First-pass (score|tone): ([^\s]+))");
    std::vector<Seen> out;
    for (auto it = std::sregex_iterator(user.begin(), user.end(), re); it != std::sregex_iterator(); ++it) {
        Seen s;
        s.code = (*it)[1];
        if ((*it)[2] == "score") s.score = std::stod((*it)[3]);
        else s.tone = (*it)[3];
        out.push_back(std::move(s));
    }
    return out;
}

const std::array<const char*, 5> kSuggestions = {"Creativity Score", "Content Quality Score", "Question Clarity",
                                                 "Inclusivity", "Creativity scores"};

std::string critique_text(const std::string& title, const std::vector<Seen>& seen, const SyntheticOptions& o,
                          std::mt19937_64& rng, std::map<std::size_t, std::array<double, 5>>* digit_dists) {
    std::ostringstream out;
    if (rng() % 3 == 0) out << "I reviewed each assessment against the form.\n\n";
    out << "VERDICTS\n";
    for (const auto& s : seen) {
        if (o.sage_always_agrees) {
            out << s.code << ": AGREE\n";
            continue;
        }
        if (s.code == "SENT") {
            const std::string tone = expected_tone(title);
            if (s.tone != tone && rng() % 10 < 8) {
                out << "SENT: " << tone << " — the form mostly reads as " << tone << "\n";
            } else {
                out << "SENT: AGREE\n";
            }
            continue;
        }
        const int truth = latent_quality(title, s.code);
        const double gap = s.score - truth;
        const bool rectify = (gap > 0.5 && rng() % 100 < 85) || (gap < -0.5 && rng() % 100 < 60);
        if (!rectify) {
            out << s.code << ": AGREE\n";
            continue;
        }
        int score = truth;
        if (rng() % 5 == 0) score = std::clamp(truth + (gap > 0 ? 1 : -1), 1, 5);
        if (static_cast<double>(score) == s.score) score = truth;
        const std::string prefix = s.code + ": ";
        const std::size_t here = static_cast<std::size_t>(out.tellp()) + prefix.size();
        if (digit_dists) (*digit_dists)[here] = peaked(score, 0.7);
        out << prefix << score << " — the first pass "
            << (gap > 0 ? "overlooks weaknesses in this aspect" : "is too harsh here") << "\n";
    }
    if (o.sage_always_agrees) return out.str();

    const std::uint64_t h = fnv1a(title, 5);
    if (h % 2 == 0) {
        out << "\nDEFINITION SENT\n"
               "Revised: Assess whether the tone fits the audience and purpose of the form, not only its "
               "politeness.\n"
               "Rationale: Tone should be judged against who answers the form.\n";
    }
    if (h % 3 == 0) {
        out << "\nDEFINITION ACC\n"
               "Revised: Check that facts, options and instructions in every section are correct and consistent "
               "with the central theme.\n"
               "Rationale: Accuracy should also cover answer options.\n";
    }
    const std::size_t n = h % 4;  // 0..3 suggestions
    for (std::size_t i = 0; i < n; ++i) {
        const char* name = kSuggestions[(h / 7 + i) % kSuggestions.size()];
        out << "\nNEW_ASPECT\nName: " << name << "\nDescription: Measures " << name
            << " of the questions.\nRationale: Not covered by the predefined aspects.\n";
    }
    return out.str();
}

llm::ChatResponse critique(const llm::ChatRequest& r, const SyntheticOptions& o, std::mt19937_64& rng) {
    const std::string title = form_title(r);
    const auto seen = seen_in_critique(user_text(r));
    llm::ChatResponse resp;
    if (r.want_logprobs) {
        if (!o.logprob_critique_titles.count(title)) {
            resp.completions.push_back({critique_text(title, seen, o, rng, nullptr), std::nullopt});
            return resp;
        }
        std::map<std::size_t, std::array<double, 5>> dists;
        const std::string text = critique_text(title, seen, o, rng, &dists);
        resp.completions.push_back({text, tokenize_with_alternatives(text, dists)});
        return resp;
    }
    for (int i = 0; i < r.sample_count; ++i) resp.completions.push_back({critique_text(title, seen, o, rng, nullptr), {}});
    return resp;
}

}  // namespace

int latent_quality(std::string_view title, std::string_view code) {
    return 2 + static_cast<int>(fnv1a(code, fnv1a(title)) % 3);
}

bool evaluator_overrates(std::string_view title, std::string_view code) {
    return fnv1a(code, fnv1a(title, 17)) % 3 != 0;
}

std::vector<std::string> synthetic_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto cls = [](unsigned char c) { return std::isalpha(c) ? 1 : std::isdigit(c) ? 2 : 0; };
    while (i < text.size()) {
        const int k = cls(static_cast<unsigned char>(text[i]));
        std::size_t j = i + 1;
        // Multi-byte UTF-8 sequences stay whole.
        if (k == 0 && (static_cast<unsigned char>(text[i]) & 0x80)) {
            while (j < text.size() && (static_cast<unsigned char>(text[j]) & 0xC0) == 0x80) ++j;
        } else if (k != 0) {
            while (j < text.size() && cls(static_cast<unsigned char>(text[j])) == k) ++j;
        }
        out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

bool is_critique_request(const llm::ChatRequest& request) {
    return !request.messages.empty() && request.messages.front().content.rfind("You are the SAGE Agent", 0) == 0;
}

llm::ChatResponse synthetic_complete(const llm::ChatRequest& request, const SyntheticOptions& options) {
    const std::string fp = llm::fingerprint(request);
    std::mt19937_64 rng(std::stoull(fp.substr(0, 15), nullptr, 16) ^ options.seed);
    llm::ChatResponse resp = is_critique_request(request) ? critique(request, options, rng) : first_pass(request, options, rng);
    std::size_t prompt_chars = 0;
    for (const auto& m : request.messages) prompt_chars += m.content.size();
    std::size_t completion_chars = 0;
    for (const auto& c : resp.completions) completion_chars += c.text.size();
    resp.usage = {static_cast<long long>(prompt_chars / 4), static_cast<long long>(completion_chars / 4)};
    return resp;
}

}  // namespace sageval::support
