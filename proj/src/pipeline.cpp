#include "sageval/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "sageval/errors.hpp"
#include "sageval/io.hpp"
#include "sageval/sage.hpp"

namespace sageval::pipeline {

using nlohmann::json;

// ---- config -------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
    return out;
}

fs::path resolve(const fs::path& base, const std::string& value) {
    fs::path p(value);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (dataset_path.empty()) throw ConfigError("dataset_path is required");
    if (run_id.empty() || run_id != io::safe_file_stem(run_id)) {
        throw ConfigError("run_id '" + run_id + "' must be non-empty and use only [A-Za-z0-9._-]");
    }
    if (sample_count < 1) throw ConfigError("sample_count must be >= 1");
    if (concurrency_limit < 1) throw ConfigError("concurrency_limit must be >= 1");
    if (max_in_flight_requests < 1) throw ConfigError("max_in_flight_requests must be >= 1");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (!(temperature >= 0.0 && temperature <= 2.0)) throw ConfigError("temperature must be within [0, 2]");
    if (evaluator_model_id.empty() || sage_model_id.empty()) throw ConfigError("model ids must be non-empty");
    if (backend.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

AgentConfig RunConfig::evaluator_agent() const {
    AgentConfig a;
    a.model_id = evaluator_model_id;
    a.sample_count = sample_count;
    a.temperature = temperature;
    a.max_tokens = max_tokens;
    a.preference = probability_source;
    a.reflection_instruction = reflection_instruction;
    return a;
}

AgentConfig RunConfig::sage_agent() const {
    AgentConfig a = evaluator_agent();
    a.model_id = sage_model_id;
    a.reflection_instruction.clear();
    return a;
}

json RunConfig::snapshot() const {
    json scripted = json::array();
    for (const auto& d : scripted_fixture_dirs) scripted.push_back(d.generic_string());
    return {{"dataset_path", dataset_path.generic_string()},
            {"output_dir", output_dir.generic_string()},
            {"run_id", run_id},
            {"endpoint_url", backend.endpoint_url},
            {"api_key_env", backend.api_key_env_var},
            {"timeout_ms", backend.timeout.count()},
            {"max_retries", backend.max_retries},
            {"retry_base_delay_ms", backend.retry_base_delay.count()},
            {"evaluator_model_id", evaluator_model_id},
            {"sage_model_id", sage_model_id},
            {"sample_count", sample_count},
            {"temperature", temperature},
            {"max_tokens", max_tokens},
            {"concurrency_limit", concurrency_limit},
            {"max_in_flight_requests", max_in_flight_requests},
            {"probability_source", probability_source == ProbabilityPreference::logprobs ? "logprobs" : "sampling"},
            {"aggregation_policy", std::string(analytics::to_string(aggregation_policy))},
            {"random_seed", random_seed},
            {"reflection_instruction", reflection_instruction},
            {"scripted_fixture_dirs", std::move(scripted)}};
}

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
    RunConfig c;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected 'key = value'", lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(fmt::format("config line {}: duplicate key '{}'", lineno, key));

        if (key == "dataset_path") c.dataset_path = resolve(base_dir, value);
        else if (key == "output_dir") c.output_dir = resolve(base_dir, value);
        else if (key == "run_id") c.run_id = value;
        else if (key == "endpoint_url") c.backend.endpoint_url = value;
        else if (key == "api_key_env") c.backend.api_key_env_var = value;
        else if (key == "timeout_ms") c.backend.timeout = std::chrono::milliseconds(parse_number<long long>(key, value));
        else if (key == "max_retries") c.backend.max_retries = parse_number<int>(key, value);
        else if (key == "retry_base_delay_ms")
            c.backend.retry_base_delay = std::chrono::milliseconds(parse_number<long long>(key, value));
        else if (key == "evaluator_model_id") c.evaluator_model_id = value;
        else if (key == "sage_model_id") c.sage_model_id = value;
        else if (key == "sample_count") c.sample_count = parse_number<int>(key, value);
        else if (key == "temperature") c.temperature = parse_number<double>(key, value);
        else if (key == "max_tokens") c.max_tokens = parse_number<int>(key, value);
        else if (key == "concurrency_limit") c.concurrency_limit = parse_number<int>(key, value);
        else if (key == "max_in_flight_requests") c.max_in_flight_requests = parse_number<int>(key, value);
        else if (key == "probability_source") {
            if (value == "logprobs") c.probability_source = ProbabilityPreference::logprobs;
            else if (value == "sampling") c.probability_source = ProbabilityPreference::sampling;
            else throw ConfigError("probability_source must be 'logprobs' or 'sampling'");
        } else if (key == "aggregation_policy") {
            const auto p = analytics::aggregation_policy_from_string(value);
            if (!p) throw ConfigError("aggregation_policy must be mean, median or per-annotator");
            c.aggregation_policy = *p;
        } else if (key == "random_seed") c.random_seed = parse_number<std::uint64_t>(key, value);
        else if (key == "reflection_instruction") c.reflection_instruction = value;
        else if (key == "scripted_fixture_dirs") {
            for (const auto& d : split_list(value)) c.scripted_fixture_dirs.push_back(resolve(base_dir, d));
        } else {
            throw ConfigError(fmt::format("config line {}: unknown key '{}'", lineno, key));
        }
    }
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::string text;
    try {
        text = io::read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(text, path.parent_path());
}

// ---- manifest -----------------------------------------------------------------

std::string_view to_string(FormStatus status) {
    switch (status) {
        case FormStatus::pending: return "pending";
        case FormStatus::first_pass_done: return "first_pass_done";
        case FormStatus::critiqued: return "critiqued";
        case FormStatus::finalized: return "finalized";
        case FormStatus::failed: return "failed";
    }
    return "pending";
}

std::optional<FormStatus> form_status_from_string(std::string_view text) {
    for (auto s : {FormStatus::pending, FormStatus::first_pass_done, FormStatus::critiqued, FormStatus::finalized,
                   FormStatus::failed}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

FormEntry* RunManifest::find(std::string_view form_id) {
    for (auto& f : forms) {
        if (f.form_id == form_id) return &f;
    }
    return nullptr;
}

const FormEntry* RunManifest::find(std::string_view form_id) const {
    return const_cast<RunManifest*>(this)->find(form_id);
}

void RunManifest::advance(std::string_view form_id, FormStatus next, std::string reason) {
    FormEntry* f = find(form_id);
    if (!f) throw InvariantError("manifest has no form '" + std::string(form_id) + "'");
    const bool ok = f->status == FormStatus::failed        ? false
                    : next == FormStatus::failed           ? f->status != FormStatus::finalized
                                                           : static_cast<int>(next) > static_cast<int>(f->status);
    if (!ok) {
        throw InvariantError(fmt::format("form '{}': status cannot move from {} to {}", form_id, to_string(f->status),
                                         to_string(next)));
    }
    f->status = next;
    f->reason = next == FormStatus::failed ? std::move(reason) : std::string();
    f->updated_at = utc_timestamp();
    updated_at = f->updated_at;
}

json RunManifest::to_json() const {
    json entries = json::array();
    for (const auto& f : forms) {
        json e = {{"form_id", f.form_id}, {"status", std::string(pipeline::to_string(f.status))}, {"updated_at", f.updated_at}};
        if (f.status == FormStatus::failed) e["reason"] = f.reason;
        entries.push_back(std::move(e));
    }
    return {{"run_id", run_id},
            {"created_at", created_at},
            {"updated_at", updated_at},
            {"config", config},
            {"registry_entries", registry_entries},
            {"backend_calls", backend_calls},
            {"cache_hits", cache_hits},
            {"forms", std::move(entries)}};
}

RunManifest RunManifest::from_json(const json& value) {
    try {
        RunManifest m;
        m.run_id = value.at("run_id").get<std::string>();
        m.created_at = value.value("created_at", "");
        m.updated_at = value.value("updated_at", "");
        m.config = value.value("config", json::object());
        m.registry_entries = value.value("registry_entries", std::size_t{0});
        m.backend_calls = value.value("backend_calls", 0LL);
        m.cache_hits = value.value("cache_hits", 0LL);
        for (const auto& e : value.at("forms")) {
            FormEntry f;
            f.form_id = e.at("form_id").get<std::string>();
            const auto status = form_status_from_string(e.at("status").get<std::string>());
            if (!status) throw SchemaError("$.forms", "unknown status '" + e.at("status").get<std::string>() + "'");
            f.status = *status;
            f.reason = e.value("reason", "");
            f.updated_at = e.value("updated_at", "");
            m.forms.push_back(std::move(f));
        }
        return m;
    } catch (const json::exception& e) {
        throw SchemaError("manifest", e.what());
    }
}

fs::path RunPaths::first_pass(const std::string& form_id) const {
    return root / "first_pass" / (io::safe_file_stem(form_id) + ".json");
}
fs::path RunPaths::verdict(const std::string& form_id) const {
    return root / "sage" / (io::safe_file_stem(form_id) + ".json");
}
fs::path RunPaths::final_record(const std::string& form_id) const {
    return root / "final" / (io::safe_file_stem(form_id) + ".json");
}

// ---- dataset --------------------------------------------------------------------

std::vector<DatasetEntry> read_dataset_lenient(const fs::path& path) {
    const std::string text = io::read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError("$", std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw SchemaError("$", "dataset must be a JSON array of forms");
    std::vector<DatasetEntry> out;
    std::set<std::string> ids;
    std::set<std::string> stems;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const json& element = doc[i];
        DatasetEntry entry;
        if (element.is_object() && element.contains("id") && element["id"].is_string() &&
            !element["id"].get<std::string>().empty()) {
            entry.form_id = element["id"].get<std::string>();
        } else {
            entry.form_id = fmt::format("#{}", i);
        }
        if (!ids.insert(entry.form_id).second) throw DuplicateForm("dataset repeats form id '" + entry.form_id + "'");
        if (!stems.insert(io::safe_file_stem(entry.form_id)).second) {
            throw DuplicateForm("form id '" + entry.form_id + "' collides with another id after filename escaping");
        }
        try {
            entry.form = parse_form(element, fmt::format("$[{}]", i));
        } catch (const Error& e) {
            entry.error = e.kind() + ": " + e.what();
        }
        out.push_back(std::move(entry));
    }
    return out;
}

// ---- evaluate -------------------------------------------------------------------

namespace {

std::unique_ptr<llm::Backend> build_backend(const RunConfig& config) {
    if (!config.scripted_fixture_dirs.empty()) {
        return std::make_unique<llm::ScriptedBackend>(config.scripted_fixture_dirs);
    }
    if (config.backend.endpoint_url.empty()) {
        throw ConfigError("endpoint_url is required unless scripted fixtures are given");
    }
    return std::make_unique<llm::HttpBackend>(config.backend);
}

bool records_present(const RunPaths& paths, const std::string& form_id) {
    return fs::exists(paths.first_pass(form_id)) && fs::exists(paths.verdict(form_id)) &&
           fs::exists(paths.final_record(form_id));
}

// Registry after SAGE feedback, folded in dataset order so the snapshot does
// not depend on which form finished first.
AspectRegistry fold_registry(const RunManifest& manifest, const RunPaths& paths) {
    AspectRegistry registry = AspectRegistry::with_predefined();
    for (const auto& f : manifest.forms) {
        if (f.status != FormStatus::finalized) continue;
        const SageVerdict v = verdict_from_json(io::read_json_file(paths.verdict(f.form_id)));
        for (const auto& rev : v.revisions) {
            try {
                registry = registry.apply_revision(rev);
            } catch (const NoOpRevision&) {
                spdlog::info("form {}: revision of {} repeats the current definition", f.form_id, rev.aspect_id);
            } catch (const Error& e) {
                spdlog::warn("form {}: revision of {} skipped ({})", f.form_id, rev.aspect_id, e.kind());
            }
        }
        for (const auto& s : v.suggestions) {
            try {
                registry = registry.register_suggested_aspect(s);
            } catch (const Error& e) {
                spdlog::warn("form {}: suggestion '{}' skipped ({})", f.form_id, s.name, e.kind());
            }
        }
    }
    return registry;
}

}  // namespace

EvaluateResult cmd_evaluate(const RunConfig& config, llm::Backend* backend) {
    config.validate();
    const auto dataset = read_dataset_lenient(config.dataset_path);

    RunPaths paths{config.output_dir / config.run_id};
    fs::create_directories(paths.root);

    RunManifest manifest;
    if (fs::exists(paths.manifest())) {
        const RunManifest previous = RunManifest::from_json(io::read_json_file(paths.manifest()));
        if (previous.run_id != config.run_id) {
            throw ConfigError("run directory belongs to run '" + previous.run_id + "'");
        }
        manifest.created_at = previous.created_at;
        for (const auto& d : dataset) {
            const FormEntry* old = previous.find(d.form_id);
            manifest.forms.push_back(old ? *old : FormEntry{d.form_id, FormStatus::pending, {}, {}});
        }
    } else {
        manifest.created_at = utc_timestamp();
        for (const auto& d : dataset) manifest.forms.push_back({d.form_id, FormStatus::pending, {}, {}});
    }
    manifest.run_id = config.run_id;
    manifest.config = config.snapshot();
    manifest.updated_at = utc_timestamp();

    std::unique_ptr<llm::Backend> owned;
    if (!backend) {
        owned = build_backend(config);
        backend = owned.get();
    }
    llm::ThrottledBackend throttled(*backend, config.max_in_flight_requests);
    llm::CachingBackend cached(throttled, paths.cache());

    std::mutex manifest_mutex;
    auto record = [&](const std::string& form_id, FormStatus status, std::string reason = {}) {
        std::lock_guard lock(manifest_mutex);
        FormEntry* f = manifest.find(form_id);
        if (f->status == FormStatus::finalized || f->status == FormStatus::failed) return;
        if (status != FormStatus::failed && static_cast<int>(status) <= static_cast<int>(f->status)) return;
        manifest.advance(form_id, status, std::move(reason));
        if (status == FormStatus::failed) spdlog::warn("form {} failed: {}", form_id, f->reason);
        io::write_json_atomic(paths.manifest(), manifest.to_json());
    };

    EvaluateResult result;
    result.run_dir = paths.root;
    std::vector<const DatasetEntry*> work;
    for (const auto& d : dataset) {
        const FormEntry* f = manifest.find(d.form_id);
        if (f->status == FormStatus::finalized && records_present(paths, d.form_id)) {
            ++result.skipped;
            continue;
        }
        if (f->status == FormStatus::failed) continue;
        if (!d.form) {
            record(d.form_id, FormStatus::failed, d.error);
            continue;
        }
        work.push_back(&d);
    }
    {
        std::lock_guard lock(manifest_mutex);
        io::write_json_atomic(paths.manifest(), manifest.to_json());
    }

    const AspectRegistry registry = AspectRegistry::with_predefined();
    const AgentConfig evaluator_cfg = config.evaluator_agent();
    const AgentConfig sage_cfg = config.sage_agent();

    auto run_form = [&](const Form& form) {
        try {
            const FirstPassRecord fp = evaluate_form(form, registry, cached, evaluator_cfg);
            io::write_json_atomic(paths.first_pass(form.id), to_json(fp));
            if (fp.partial()) {
                const auto& f = fp.failures.front();
                record(form.id, FormStatus::failed,
                       fmt::format("PartialFirstPass: {} aspect(s) failed, first {}: {}: {}", fp.failures.size(),
                                   f.aspect_id, f.error_kind, f.message));
                return;
            }
            record(form.id, FormStatus::first_pass_done);
            const SageVerdict verdict = critique(form, fp, registry, cached, sage_cfg);
            io::write_json_atomic(paths.verdict(form.id), to_json(verdict));
            record(form.id, FormStatus::critiqued);
            io::write_json_atomic(paths.final_record(form.id), to_json(finalize_scores(fp, verdict)));
            record(form.id, FormStatus::finalized);
        } catch (const Error& e) {
            record(form.id, FormStatus::failed, e.kind() + ": " + e.what());
        } catch (const std::exception& e) {
            record(form.id, FormStatus::failed, std::string("InternalError: ") + e.what());
        }
    };

    std::atomic<std::size_t> next{0};
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(config.concurrency_limit), work.size());
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < work.size(); i = next++) run_form(*work[i]->form);
        });
    }
    pool.clear();  // joins

    const AspectRegistry updated = fold_registry(manifest, paths);
    io::write_json_atomic(paths.aspects(), updated.to_json());

    std::lock_guard lock(manifest_mutex);
    manifest.registry_entries = updated.entries().size();
    manifest.backend_calls = cached.inner_calls();
    manifest.cache_hits = cached.cache_hits();
    manifest.updated_at = utc_timestamp();
    io::write_json_atomic(paths.manifest(), manifest.to_json());

    for (const auto& f : manifest.forms) {
        if (f.status == FormStatus::finalized) ++result.finalized;
        if (f.status == FormStatus::failed) ++result.failed;
    }
    result.backend_calls = cached.inner_calls();
    result.cache_hits = cached.cache_hits();
    spdlog::info("run {}: {} finalized, {} failed, {} backend calls, {} cache hits", config.run_id, result.finalized,
                 result.failed, result.backend_calls, result.cache_hits);
    return result;
}

// ---- metaeval -------------------------------------------------------------------

namespace {

RunManifest load_manifest(const fs::path& run_dir) {
    const fs::path p = run_dir / "manifest.json";
    if (!fs::exists(p)) throw EmptyRun("no manifest.json in " + run_dir.string());
    return RunManifest::from_json(io::read_json_file(p));
}

AspectRegistry load_registry(const RunPaths& paths) {
    if (!fs::exists(paths.aspects())) return AspectRegistry::with_predefined();
    return AspectRegistry::from_json(io::read_json_file(paths.aspects()));
}

json correlation_cell(const analytics::AspectCorrelation* a) {
    if (!a) return nullptr;
    return {{"spearman_rho", a->spearman_rho ? json(*a->spearman_rho) : json(nullptr)},
            {"kendall_tau", a->kendall_tau ? json(*a->kendall_tau) : json(nullptr)},
            {"note", a->note}};
}

}  // namespace

MetaevalResult cmd_metaeval(const fs::path& run_dir, const fs::path& annotations_path,
                            analytics::AggregationPolicy policy) {
    const RunPaths paths{run_dir};
    const RunManifest manifest = load_manifest(run_dir);
    std::vector<FinalRecord> finals;
    for (const auto& f : manifest.forms) {
        if (f.status == FormStatus::finalized) {
            finals.push_back(final_record_from_json(io::read_json_file(paths.final_record(f.form_id))));
        }
    }
    if (finals.size() < 2) {
        throw EmptyRun(fmt::format("meta-evaluation needs at least 2 finalized forms, run has {}", finals.size()));
    }
    const auto sets = analytics::parse_annotations_csv(io::read_text_file(annotations_path), load_registry(paths));
    const auto human = analytics::aggregate_human(sets, policy);

    MetaevalResult out;
    out.first_pass = analytics::correlation_report(finals, human, analytics::ScoreStage::first_pass);
    out.final = analytics::correlation_report(finals, human, analytics::ScoreStage::final);

    json aspects = json::array();
    for (const auto& a : out.final.aspects) {
        aspects.push_back({{"aspect_id", a.aspect_id},
                           {"short_code", a.short_code},
                           {"n", a.n},
                           {"first_pass", correlation_cell(out.first_pass.find(a.aspect_id))},
                           {"final", correlation_cell(&a)}});
    }
    const json doc = {{"run_id", manifest.run_id},
                      {"aggregation_policy", std::string(analytics::to_string(policy))},
                      {"forms", finals.size()},
                      {"aspects", std::move(aspects)}};
    const analytics::CorrelationReport both[] = {out.first_pass, out.final};
    out.markdown = analytics::correlation_markdown(both);
    out.json_path = run_dir / "metaeval" / "correlations.json";
    out.markdown_path = run_dir / "metaeval" / "correlations.md";
    io::write_json_atomic(out.json_path, doc);
    io::write_file_atomic(out.markdown_path, out.markdown);
    return out;
}

// ---- report ---------------------------------------------------------------------

ReportResult cmd_report(const fs::path& run_dir) {
    const RunPaths paths{run_dir};
    const RunManifest manifest = load_manifest(run_dir);
    std::vector<SageVerdict> verdicts;
    for (const auto& f : manifest.forms) {
        if ((f.status == FormStatus::critiqued || f.status == FormStatus::finalized) &&
            fs::exists(paths.verdict(f.form_id))) {
            verdicts.push_back(verdict_from_json(io::read_json_file(paths.verdict(f.form_id))));
        }
    }
    if (verdicts.empty()) throw EmptyRun("run " + manifest.run_id + " has no SAGE verdicts");

    ReportResult out;
    out.disagreements = analytics::tally_disagreements(verdicts, manifest.forms.size(), load_registry(paths));
    std::vector<AspectSuggestion> suggestions;
    for (const auto& v : verdicts) suggestions.insert(suggestions.end(), v.suggestions.begin(), v.suggestions.end());
    out.terms = analytics::mine_aspect_terms(suggestions);

    std::ostringstream md;
    md << "## Score rectifications\n\n" << out.disagreements.to_markdown();
    md << "\n## Suggested aspects\n\n";
    if (out.terms.terms.empty()) {
        md << "none\n";
    } else {
        md << "| Term | Frequency | Share |\n|---|---:|---:|\n";
        for (const auto& t : out.terms.terms) {
            md << "| " << t.canonical_term << " | " << t.frequency << " | " << fmt::format("{:.3f}", t.share) << " |\n";
        }
    }
    out.markdown = md.str();

    io::write_json_atomic(run_dir / "report" / "disagreements.json", out.disagreements.to_json());
    io::write_file_atomic(run_dir / "report" / "disagreements.md", out.markdown);
    io::write_json_atomic(run_dir / "report" / "aspect_terms.json", out.terms.to_json());
    io::write_file_atomic(run_dir / "report" / "aspect_terms.csv", out.terms.to_csv());
    return out;
}

// ---- validate -------------------------------------------------------------------

bool ValidateResult::has_errors() const {
    return std::any_of(items.begin(), items.end(),
                       [](const LintItem& i) { return i.severity == Violation::Severity::error; });
}

void ValidateResult::print(std::ostream& out) const {
    std::size_t errors = 0;
    for (const auto& i : items) {
        const bool err = i.severity == Violation::Severity::error;
        errors += err;
        out << (err ? "error   " : "warning ") << i.where << ": " << i.message << "\n";
    }
    out << fmt::format("{} forms checked, {} errors, {} warnings\n", forms_checked, errors, items.size() - errors);
}

ValidateResult cmd_validate(const fs::path& dataset_path, const std::optional<fs::path>& annotations_path) {
    using Severity = Violation::Severity;
    ValidateResult out;
    auto add = [&](Severity s, std::string where, std::string message) {
        out.items.push_back({s, std::move(where), std::move(message)});
    };

    json doc;
    try {
        doc = json::parse(io::read_text_file(dataset_path));
    } catch (const json::parse_error& e) {
        add(Severity::error, dataset_path.string(), std::string("not valid JSON: ") + e.what());
        return out;
    } catch (const IoError& e) {
        add(Severity::error, dataset_path.string(), e.what());
        return out;
    }
    if (!doc.is_array()) {
        add(Severity::error, "$", "dataset must be a JSON array of forms");
        return out;
    }

    std::set<std::string> ids;
    std::vector<std::string> valid_ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        ++out.forms_checked;
        const std::string path = fmt::format("$[{}]", i);
        std::vector<std::string> unknown;
        Form form;
        try {
            form = parse_form_structure(doc[i], path, &unknown);
        } catch (const SchemaError& e) {
            add(Severity::error, e.path(), e.reason());
            continue;
        }
        const std::string where = form.id.empty() ? path : form.id;
        if (!form.id.empty() && !ids.insert(form.id).second) {
            add(Severity::error, where, "duplicate form id");
        }
        for (const auto& u : unknown) add(Severity::warning, u, "unknown field ignored");
        bool ok = true;
        for (const auto& v : validate_form(form)) {
            ok = ok && !v.is_error();
            add(v.severity, where + (v.path.empty() ? "" : " " + v.path), v.message);
        }
        if (ok) valid_ids.push_back(form.id);
    }

    if (annotations_path) {
        std::vector<analytics::AnnotationSet> sets;
        try {
            sets = analytics::parse_annotations_csv(io::read_text_file(*annotations_path));
        } catch (const Error& e) {
            add(Severity::error, annotations_path->string(), e.what());
            return out;
        }
        std::set<std::string> reported;
        std::set<analytics::FormAspect> covered;
        for (const auto& set : sets) {
            for (const auto& [key, _] : set.scores) {
                covered.insert(key);
                if (!ids.count(key.first) && reported.insert(key.first).second) {
                    add(Severity::error, annotations_path->string(),
                        "annotation references unknown form_id '" + key.first + "'");
                }
            }
            for (const auto& [key, _] : set.labels) {
                if (!ids.count(key.first) && reported.insert(key.first).second) {
                    add(Severity::error, annotations_path->string(),
                        "annotation references unknown form_id '" + key.first + "'");
                }
            }
        }
        for (const auto& id : valid_ids) {
            std::vector<std::string> missing;
            for (const auto& def : predefined_aspects()) {
                if (def.is_ordinal() && !covered.count({id, def.aspect_id})) missing.push_back(def.short_code);
            }
            if (!missing.empty()) {
                std::string list;
                for (std::size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
                add(Severity::warning, id, "no human score for " + list);
            }
        }
    }
    return out;
}

}  // namespace sageval::pipeline
