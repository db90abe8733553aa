#include "sageval/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "sageval/errors.hpp"

namespace sageval::analytics {

using nlohmann::json;

// ---- disagreement tallies ---------------------------------------------------

std::optional<double> DisagreementTable::negative_share() const {
    const long long all = neg_total + pos_total;
    if (all == 0) return std::nullopt;
    return static_cast<double>(neg_total) / static_cast<double>(all);
}

const DisagreementRow* DisagreementTable::find(std::string_view aspect_id) const {
    for (const auto& r : rows) {
        if (r.aspect_id == aspect_id) return &r;
    }
    return nullptr;
}

json DisagreementTable::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"aspect_id", r.aspect_id},
                             {"short_code", r.short_code},
                             {"name", r.name},
                             {"neg", r.neg},
                             {"pos", r.pos},
                             {"total", r.total},
                             {"definition_changes", r.definition_changes},
                             {"tone_changes", r.tone_changes}});
    }
    const auto share = negative_share();
    return {{"dataset_size", dataset_size},
            {"rows", std::move(rows_json)},
            {"neg_total", neg_total},
            {"pos_total", pos_total},
            {"negative_share", share ? json(*share) : json(nullptr)}};
}

std::string DisagreementTable::to_markdown() const {
    std::ostringstream out;
    out << "| Scoring Criteria | Neg | Pos | Total | Definition | Tone changes |\n";
    out << "|---|---:|---:|---:|---:|---:|\n";
    for (const auto& r : rows) {
        out << "| " << r.name << " | " << r.neg << " | " << r.pos << " | " << r.total << " | "
            << r.definition_changes << " | " << r.tone_changes << " |\n";
    }
    out << "\nforms: " << dataset_size << "\n";
    if (const auto share = negative_share()) {
        out << "negative share: " << fmt::format("{:.2f}", *share) << "\n";
    } else {
        out << "negative share: n/a\n";
    }
    return out.str();
}

DisagreementTable tally_disagreements(std::span<const SageVerdict> verdicts, std::size_t dataset_size,
                                      const AspectRegistry& registry) {
    if (verdicts.size() > dataset_size) {
        throw InvariantError(std::to_string(verdicts.size()) + " verdicts for a dataset of " +
                             std::to_string(dataset_size) + " forms");
    }
    DisagreementTable table;
    table.dataset_size = dataset_size;
    std::map<std::string, std::size_t> index;
    auto row_for = [&](const std::string& id) -> DisagreementRow& {
        auto it = index.find(id);
        if (it != index.end()) return table.rows[it->second];
        DisagreementRow row;
        row.aspect_id = id;
        if (const AspectDefinition* def = registry.latest(id)) {
            row.short_code = def->short_code;
            row.name = def->name;
        } else {
            row.name = id;
        }
        index.emplace(id, table.rows.size());
        table.rows.push_back(std::move(row));
        return table.rows.back();
    };
    for (const auto& def : registry.current()) {
        if (def.origin != AspectOrigin::sage_suggested) row_for(def.aspect_id);
    }
    const std::size_t registry_rows = table.rows.size();

    std::set<std::string> seen;
    for (const auto& v : verdicts) {
        if (!seen.insert(v.form_id).second) throw DuplicateForm("two verdicts for form '" + v.form_id + "'");
        std::set<std::string> rectified_here;
        for (const auto& r : v.rectifications) {
            if (!rectified_here.insert(r.aspect_id).second) {
                throw InvariantError("form '" + v.form_id + "' rectifies '" + r.aspect_id + "' twice");
            }
            auto& row = row_for(r.aspect_id);
            (r.direction == Direction::negative ? row.neg : row.pos) += 1;
        }
        std::set<std::string> revised_here;
        for (const auto& rev : v.revisions) {
            // A form counts once per aspect.
            if (revised_here.insert(rev.aspect_id).second) row_for(rev.aspect_id).definition_changes += 1;
        }
        if (v.tone_correction) {
            for (const auto& def : registry.current()) {
                if (!def.is_ordinal()) {
                    row_for(def.aspect_id).tone_changes += 1;
                    break;
                }
            }
        }
    }
    std::sort(table.rows.begin() + static_cast<std::ptrdiff_t>(registry_rows), table.rows.end(),
              [](const auto& a, const auto& b) { return a.aspect_id < b.aspect_id; });
    for (auto& r : table.rows) {
        r.total = r.neg + r.pos;
        table.neg_total += r.neg;
        table.pos_total += r.pos;
    }
    return table;
}

// ---- rank correlation ---------------------------------------------------------

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw LengthMismatch("vectors have lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
    }
    if (x.size() < 2) throw DegenerateInput("need at least 2 observations");
    for (auto v : {x, y}) {
        for (double d : v) {
            if (!std::isfinite(d)) throw DegenerateInput("non-finite value");
        }
        if (std::all_of(v.begin(), v.end(), [&](double d) { return d == v.front(); })) {
            throw DegenerateInput("constant vector has no rank order");
        }
    }
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

long long tie_pairs(std::span<const double> sorted) {
    long long pairs = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i + 1;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const long long t = static_cast<long long>(j - i);
        pairs += t * (t - 1) / 2;
        i = j;
    }
    return pairs;
}

// Merge sort that counts inversions (strictly greater pairs out of order).
long long sort_count_swaps(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    long long swaps = sort_count_swaps(v, buf, lo, mid) + sort_count_swaps(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<long long>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
        i = j;
    }
    return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[order[i]];
        ys[i] = y[order[i]];
    }
    const long long n0 = static_cast<long long>(n) * static_cast<long long>(n - 1) / 2;
    const long long x_ties = tie_pairs(xs);
    long long joint_ties = 0;
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i + 1;
            while (j < n && xs[j] == xs[i] && ys[j] == ys[i]) ++j;
            const long long t = static_cast<long long>(j - i);
            joint_ties += t * (t - 1) / 2;
            i = j;
        }
    }
    std::vector<double> buf(n);
    const long long swaps = sort_count_swaps(ys, buf, 0, n);  // ys is now sorted
    const long long y_ties = tie_pairs(ys);

    // concordant - discordant = n0 - x_ties - y_ties + joint_ties - 2*swaps
    const double numerator = static_cast<double>(n0 - x_ties - y_ties + joint_ties - 2 * swaps);
    const double denominator =
        std::sqrt(static_cast<double>(n0 - x_ties)) * std::sqrt(static_cast<double>(n0 - y_ties));
    return std::clamp(numerator / denominator, -1.0, 1.0);
}

// ---- human annotations --------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    bool any = false;
    std::size_t i = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !cell.empty()) {
                row.push_back(std::move(cell));
                rows.push_back(std::move(row));
            }
            row.clear();
            cell.clear();
            any = false;
        } else {
            cell += c;
            any = true;
        }
    }
    if (quoted) throw AnnotationError("unterminated quoted field");
    if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::vector<AnnotationSet> parse_annotations_csv(std::string_view text, const AspectRegistry& registry) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw AnnotationError("annotation file is empty");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[trim(rows[0][i])] = i;
    for (const char* required : {"annotator_id", "form_id", "aspect_id", "score"}) {
        if (!col.count(required)) throw AnnotationError(std::string("header is missing column '") + required + "'");
    }
    const auto label_col = col.count("label") ? std::optional<std::size_t>(col["label"]) : std::nullopt;

    std::vector<AnnotationSet> sets;
    std::map<std::string, std::size_t> by_annotator;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = "line " + std::to_string(r + 1);
        auto cell = [&](std::size_t c) { return c < row.size() ? trim(row[c]) : std::string(); };
        const std::string annotator = cell(col["annotator_id"]);
        const std::string form = cell(col["form_id"]);
        const std::string aspect_key = cell(col["aspect_id"]);
        const std::string score_text = cell(col["score"]);
        const std::string label = label_col ? cell(*label_col) : std::string();
        if (annotator.empty() || form.empty() || aspect_key.empty()) {
            throw AnnotationError(where + ": annotator_id, form_id and aspect_id are required");
        }
        const AspectDefinition* aspect = registry.lookup(aspect_key);
        if (!aspect) throw AnnotationError(where + ": unknown aspect '" + aspect_key + "'");

        auto [it, inserted] = by_annotator.emplace(annotator, sets.size());
        if (inserted) sets.push_back({annotator, {}, {}});
        AnnotationSet& set = sets[it->second];
        const FormAspect key{form, aspect->aspect_id};
        if (set.scores.count(key) || set.labels.count(key)) {
            throw AnnotationError(where + ": duplicate annotation for (" + annotator + ", " + form + ", " +
                                  aspect->aspect_id + ")");
        }
        if (!aspect->is_ordinal()) {
            if (label.empty() && score_text.empty()) throw AnnotationError(where + ": tone row has no label");
            set.labels[key] = label.empty() ? score_text : label;
            continue;
        }
        int score = 0;
        try {
            std::size_t used = 0;
            score = std::stoi(score_text, &used);
            if (used != score_text.size()) throw std::invalid_argument("trailing text");
        } catch (const std::exception&) {
            throw AnnotationError(where + ": score '" + score_text + "' is not an integer");
        }
        if (score < kMinScore || score > kMaxScore) {
            throw AnnotationError(where + ": score " + std::to_string(score) + " is outside 1..5");
        }
        set.scores[key] = score;
    }
    return sets;
}

std::string_view to_string(AggregationPolicy policy) {
    switch (policy) {
        case AggregationPolicy::mean: return "mean";
        case AggregationPolicy::median: return "median";
        case AggregationPolicy::per_annotator: return "per-annotator";
    }
    return "mean";
}

std::optional<AggregationPolicy> aggregation_policy_from_string(std::string_view text) {
    if (text == "mean") return AggregationPolicy::mean;
    if (text == "median") return AggregationPolicy::median;
    if (text == "per-annotator" || text == "per_annotator") return AggregationPolicy::per_annotator;
    return std::nullopt;
}

std::vector<std::string> HumanScores::form_ids() const {
    std::set<std::string> ids;
    for (const auto& [key, _] : aggregate) ids.insert(key.first);
    for (const auto& [_, series] : per_annotator) {
        for (const auto& [key, __] : series) ids.insert(key.first);
    }
    return {ids.begin(), ids.end()};
}

double median(std::vector<double> values) {
    if (values.empty()) throw EmptySamples("median of no values");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
}

HumanScores aggregate_human(std::span<const AnnotationSet> annotations, AggregationPolicy policy,
                            std::span<const std::string> forms, std::span<const std::string> aspects) {
    HumanScores out;
    out.policy = policy;
    if (policy == AggregationPolicy::per_annotator) {
        for (const auto& set : annotations) {
            std::map<FormAspect, double> series;
            for (const auto& [key, score] : set.scores) series[key] = score;
            for (const auto& f : forms) {
                for (const auto& a : aspects) {
                    if (!series.count({f, a})) {
                        throw MissingAnnotation("annotator " + set.annotator_id + " has no score for (" + f + ", " +
                                                a + ")");
                    }
                }
            }
            out.per_annotator.emplace_back(set.annotator_id, std::move(series));
        }
        return out;
    }
    std::map<FormAspect, std::vector<double>> pooled;
    for (const auto& set : annotations) {
        for (const auto& [key, score] : set.scores) pooled[key].push_back(score);
    }
    for (const auto& f : forms) {
        for (const auto& a : aspects) {
            if (!pooled.count({f, a})) throw MissingAnnotation("no annotation for (" + f + ", " + a + ")");
        }
    }
    for (auto& [key, values] : pooled) {
        if (policy == AggregationPolicy::mean) {
            // Integer sum, one division: exact for the 1..5 scale.
            out.aggregate[key] = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
        } else {
            out.aggregate[key] = median(values);
        }
    }
    return out;
}

const AspectCorrelation* CorrelationReport::find(std::string_view aspect_id) const {
    for (const auto& a : aspects) {
        if (a.aspect_id == aspect_id) return &a;
    }
    return nullptr;
}

json CorrelationReport::to_json() const {
    json rows = json::array();
    for (const auto& a : aspects) {
        rows.push_back({{"aspect_id", a.aspect_id},
                        {"short_code", a.short_code},
                        {"spearman_rho", a.spearman_rho ? json(*a.spearman_rho) : json(nullptr)},
                        {"kendall_tau", a.kendall_tau ? json(*a.kendall_tau) : json(nullptr)},
                        {"n", a.n},
                        {"aggregation_policy", std::string(to_string(policy))},
                        {"note", a.note}});
    }
    return {{"stage", stage == ScoreStage::final ? "final" : "first_pass"},
            {"aggregation_policy", std::string(to_string(policy))},
            {"aspects", std::move(rows)}};
}

namespace {

struct PairCorrelation {
    std::optional<double> rho;
    std::optional<double> tau;
    std::string note;
};

PairCorrelation correlate(std::span<const double> sys, std::span<const double> hum) {
    PairCorrelation out;
    try {
        out.rho = spearman_rho(sys, hum);
        out.tau = kendall_tau(sys, hum);
    } catch (const DegenerateInput& e) {
        out.rho.reset();
        out.tau.reset();
        out.note = std::string("degenerate: ") + e.what();
    }
    return out;
}

}  // namespace

CorrelationReport correlation_report(std::span<const FinalRecord> system, const HumanScores& human, ScoreStage stage) {
    std::set<std::string> system_forms;
    for (const auto& r : system) {
        if (!system_forms.insert(r.form_id).second) throw DuplicateForm("two final records for '" + r.form_id + "'");
    }
    const auto human_ids = human.form_ids();
    const std::set<std::string> human_forms(human_ids.begin(), human_ids.end());
    if (system_forms != human_forms) {
        std::vector<std::string> diff;
        std::set_symmetric_difference(system_forms.begin(), system_forms.end(), human_forms.begin(), human_forms.end(),
                                      std::back_inserter(diff));
        std::string listed;
        for (std::size_t i = 0; i < diff.size() && i < 5; ++i) listed += (i ? ", " : "") + diff[i];
        throw FormSetMismatch("system and human form sets differ (" + std::to_string(diff.size()) +
                              " forms, e.g. " + listed + ")");
    }
    if (system.size() < 2) throw InvariantError("correlation needs at least 2 forms");

    CorrelationReport report;
    report.policy = human.policy;
    report.stage = stage;
    for (const auto& def : predefined_aspects()) {
        if (!def.is_ordinal()) continue;
        AspectCorrelation row;
        row.aspect_id = def.aspect_id;
        row.short_code = def.short_code;
        row.n = system.size();

        std::vector<double> sys;
        for (const auto& r : system) {
            const FinalScore* s = r.find(def.aspect_id);
            if (!s) throw MissingAnnotation("final record for '" + r.form_id + "' has no " + def.aspect_id + " score");
            sys.push_back(stage == ScoreStage::final ? s->final_expected : s->first_pass_expected);
        }
        auto human_series = [&](const std::map<FormAspect, double>& scores, const std::string& who) {
            std::vector<double> out;
            for (const auto& r : system) {
                auto it = scores.find({r.form_id, def.aspect_id});
                if (it == scores.end()) {
                    throw MissingAnnotation(who + "no annotation for (" + r.form_id + ", " + def.aspect_id + ")");
                }
                out.push_back(it->second);
            }
            return out;
        };

        if (human.policy == AggregationPolicy::per_annotator) {
            double rho_sum = 0, tau_sum = 0;
            int used = 0;
            for (const auto& [annotator, scores] : human.per_annotator) {
                const auto hum = human_series(scores, "annotator " + annotator + ": ");
                const auto c = correlate(sys, hum);
                if (!c.rho) continue;
                rho_sum += *c.rho;
                tau_sum += *c.tau;
                ++used;
            }
            if (used > 0) {
                row.spearman_rho = rho_sum / used;
                row.kendall_tau = tau_sum / used;
            }
            const int skipped = static_cast<int>(human.per_annotator.size()) - used;
            if (skipped > 0) row.note = fmt::format("{} annotator series degenerate and skipped", skipped);
        } else {
            const auto c = correlate(sys, human_series(human.aggregate, ""));
            row.spearman_rho = c.rho;
            row.kendall_tau = c.tau;
            row.note = c.note;
        }
        report.aspects.push_back(std::move(row));
    }
    return report;
}

std::string correlation_markdown(std::span<const CorrelationReport> rows) {
    std::ostringstream out;
    out << "| Scoring Criteria |";
    std::vector<std::string> codes;
    for (const auto& def : predefined_aspects()) {
        if (!def.is_ordinal()) continue;
        codes.push_back(def.aspect_id);
        out << " " << def.short_code << " (ρ / τ) |";
    }
    out << "\n|---|";
    for (std::size_t i = 0; i < codes.size(); ++i) out << "---|";
    out << "\n";
    auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("n/a"); };
    for (const auto& report : rows) {
        out << "| " << (report.stage == ScoreStage::final ? "final" : "first_pass") << " |";
        for (const auto& id : codes) {
            const AspectCorrelation* a = report.find(id);
            out << " " << (a ? cell(a->spearman_rho) + " / " + cell(a->kendall_tau) : std::string("n/a")) << " |";
        }
        out << "\n";
    }
    if (!rows.empty()) out << "\naggregation: " << to_string(rows.front().policy) << "\n";
    return out.str();
}

// ---- suggested-aspect mining ----------------------------------------------------

std::string canonicalize_aspect_name(std::string_view name) {
    std::vector<std::string> words;
    std::string word;
    for (unsigned char c : name) {
        if (std::isalnum(c)) {
            word += static_cast<char>(std::tolower(c));
        } else if (c == '\'') {
            continue;  // "audience's" -> "audiences"
        } else if (!word.empty()) {
            words.push_back(std::move(word));
            word.clear();
        }
    }
    if (!word.empty()) words.push_back(std::move(word));
    if (!words.empty() && words.back() == "scores") words.back() = "score";
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

json AspectTermDistribution::to_json() const {
    json rows = json::array();
    for (const auto& t : terms) {
        rows.push_back({{"canonical_term", t.canonical_term}, {"frequency", t.frequency}, {"share", t.share}});
    }
    return {{"total", total}, {"terms", std::move(rows)}};
}

std::string AspectTermDistribution::to_csv() const {
    std::ostringstream out;
    out << "canonical_term,frequency,share\n";
    for (const auto& t : terms) {
        out << '"' << t.canonical_term << "\"," << t.frequency << "," << fmt::format("{:.6f}", t.share) << "\n";
    }
    return out.str();
}

AspectTermDistribution mine_aspect_terms(std::span<const AspectSuggestion> suggestions) {
    std::map<std::string, long long> counts;
    long long total = 0;
    for (const auto& s : suggestions) {
        std::string term = canonicalize_aspect_name(s.name);
        if (term.empty()) continue;
        ++counts[term];
        ++total;
    }
    AspectTermDistribution out;
    out.total = total;
    for (const auto& [term, count] : counts) {
        out.terms.push_back({term, count, static_cast<double>(count) / static_cast<double>(total)});
    }
    // std::map iteration is already lexicographic, so a stable sort by
    // frequency leaves ties in term order.
    std::stable_sort(out.terms.begin(), out.terms.end(),
                     [](const TermShare& a, const TermShare& b) { return a.frequency > b.frequency; });
    return out;
}

}  // namespace sageval::analytics
