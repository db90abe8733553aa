#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sageval/analytics.hpp"
#include "sageval/evaluator.hpp"
#include "sageval/form.hpp"
#include "sageval/llm.hpp"

namespace sageval::pipeline {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitFormFailures = 2;

struct RunConfig {
    fs::path dataset_path;
    fs::path output_dir = "runs";
    std::string run_id = "run";
    llm::BackendConfig backend;
    std::string evaluator_model_id = "gpt-4";
    std::string sage_model_id = "gpt-4";
    int sample_count = 20;
    double temperature = 1.0;
    int max_tokens = 512;
    int concurrency_limit = 4;     // forms in flight
    int max_in_flight_requests = 8;  // backend calls in flight across all forms
    ProbabilityPreference probability_source = ProbabilityPreference::logprobs;
    analytics::AggregationPolicy aggregation_policy = analytics::AggregationPolicy::mean;
    std::uint64_t random_seed = 0;
    std::string reflection_instruction;
    // Replay directories; when non-empty no network backend is built.
    std::vector<fs::path> scripted_fixture_dirs;

    /// Throws ConfigError.
    void validate() const;
    AgentConfig evaluator_agent() const;
    AgentConfig sage_agent() const;
    /// Everything except secrets (only the env var name is kept).
    nlohmann::json snapshot() const;
};

/// `key = value` lines; `#` starts a comment. Relative paths resolve against
/// the config file's directory. Throws ConfigError.
RunConfig parse_run_config(std::string_view text, const fs::path& base_dir = {});
RunConfig load_run_config(const fs::path& path);

enum class FormStatus { pending, first_pass_done, critiqued, finalized, failed };
std::string_view to_string(FormStatus status);
std::optional<FormStatus> form_status_from_string(std::string_view text);

struct FormEntry {
    std::string form_id;
    FormStatus status = FormStatus::pending;
    std::string reason;  // failed only
    std::string updated_at;
};

struct RunManifest {
    std::string run_id;
    nlohmann::json config;
    std::string created_at;
    std::string updated_at;
    std::size_t registry_entries = 0;
    long long backend_calls = 0;  // calls that reached the backend during the latest invocation
    long long cache_hits = 0;
    std::vector<FormEntry> forms;  // dataset order

    FormEntry* find(std::string_view form_id);
    const FormEntry* find(std::string_view form_id) const;
    /// Throws InvariantError on a backwards transition or any move out of failed.
    void advance(std::string_view form_id, FormStatus next, std::string reason = {});

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& value);
};

struct RunPaths {
    fs::path root;
    fs::path manifest() const { return root / "manifest.json"; }
    fs::path aspects() const { return root / "aspects.json"; }
    fs::path cache() const { return root / "cache"; }
    fs::path first_pass(const std::string& form_id) const;
    fs::path verdict(const std::string& form_id) const;
    fs::path final_record(const std::string& form_id) const;
};

struct EvaluateResult {
    fs::path run_dir;
    std::size_t finalized = 0;
    std::size_t failed = 0;
    std::size_t skipped = 0;  // already finalized by an earlier invocation
    long long backend_calls = 0;
    long long cache_hits = 0;
    int exit_code() const { return failed ? kExitFormFailures : kExitOk; }
};

/// Runs every form through first pass, critique and finalization. A form that
/// fails is marked failed in the manifest; the run goes on. `backend`
/// overrides the one the config would build. Throws ConfigError, SchemaError
/// (unreadable dataset) or DuplicateForm.
EvaluateResult cmd_evaluate(const RunConfig& config, llm::Backend* backend = nullptr);

struct MetaevalResult {
    analytics::CorrelationReport first_pass;
    analytics::CorrelationReport final;
    fs::path json_path;
    fs::path markdown_path;
    std::string markdown;
};

/// Reads finalized forms of a run and writes metaeval/correlations.{json,md}.
MetaevalResult cmd_metaeval(const fs::path& run_dir, const fs::path& annotations_path,
                            analytics::AggregationPolicy policy);

struct ReportResult {
    analytics::DisagreementTable disagreements;
    analytics::AspectTermDistribution terms;
    std::string markdown;
};

/// Writes report/disagreements.{json,md} and report/aspect_terms.{json,csv}.
/// Throws EmptyRun when no verdicts exist.
ReportResult cmd_report(const fs::path& run_dir);

struct LintItem {
    Violation::Severity severity = Violation::Severity::error;
    std::string where;
    std::string message;
};

struct ValidateResult {
    std::vector<LintItem> items;
    std::size_t forms_checked = 0;
    bool has_errors() const;
    int exit_code() const { return has_errors() ? kExitConfigError : kExitOk; }
    void print(std::ostream& out) const;
};

ValidateResult cmd_validate(const fs::path& dataset_path, const std::optional<fs::path>& annotations_path = {});

/// Lenient dataset read: one entry per array element, holding either the
/// parsed form or the reason it was rejected. Throws SchemaError when the
/// file is not a JSON array, DuplicateForm on repeated ids.
struct DatasetEntry {
    std::string form_id;
    std::optional<Form> form;
    std::string error;
};
std::vector<DatasetEntry> read_dataset_lenient(const fs::path& path);

}  // namespace sageval::pipeline
