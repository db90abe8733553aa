#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sageval/errors.hpp"
#include "sageval/pipeline.hpp"

namespace pl = sageval::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"sageval: reference-free evaluation of generated forms"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    auto* evaluate = app.add_subcommand("evaluate", "Score every form: first pass, critique, finalize");
    std::string config_path, dataset, out_dir, run_id;
    std::vector<std::string> scripted;
    evaluate->add_option("--config", config_path, "Key-value config file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--dataset", dataset, "Override dataset_path");
    evaluate->add_option("--out", out_dir, "Override output_dir");
    evaluate->add_option("--run-id", run_id, "Override run_id");
    evaluate->add_option("--scripted", scripted, "Replay fixtures from this directory (repeatable)")
        ->check(CLI::ExistingDirectory);

    auto* metaeval = app.add_subcommand("metaeval", "Correlate run scores with human annotations");
    std::string run_dir, annotations, policy = "mean";
    metaeval->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    metaeval->add_option("--annotations", annotations, "Annotation CSV")->required()->check(CLI::ExistingFile);
    metaeval->add_option("--policy", policy, "mean | median | per-annotator")
        ->check(CLI::IsMember({"mean", "median", "per-annotator"}));

    auto* report = app.add_subcommand("report", "Rectification tallies and suggested-aspect terms");
    report->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    auto* validate = app.add_subcommand("validate", "Lint a dataset and optional annotations");
    std::string lint_annotations;
    validate->add_option("--dataset", dataset, "Dataset JSON")->required();
    validate->add_option("--annotations", lint_annotations, "Annotation CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : pl::kExitConfigError;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (evaluate->parsed()) {
            pl::RunConfig config = pl::load_run_config(config_path);
            if (!dataset.empty()) config.dataset_path = dataset;
            if (!out_dir.empty()) config.output_dir = out_dir;
            if (!run_id.empty()) config.run_id = run_id;
            if (!scripted.empty()) config.scripted_fixture_dirs.assign(scripted.begin(), scripted.end());
            const auto result = pl::cmd_evaluate(config);
            std::cout << "run: " << result.run_dir.string() << "\n"
                      << "finalized: " << result.finalized << ", failed: " << result.failed
                      << ", skipped: " << result.skipped << "\n"
                      << "backend calls: " << result.backend_calls << ", cache hits: " << result.cache_hits << "\n";
            return result.exit_code();
        }
        if (metaeval->parsed()) {
            const auto result =
                pl::cmd_metaeval(run_dir, annotations, *sageval::analytics::aggregation_policy_from_string(policy));
            std::cout << result.markdown << "\nwrote " << result.json_path.string() << "\n";
            return pl::kExitOk;
        }
        if (report->parsed()) {
            const auto result = pl::cmd_report(run_dir);
            std::cout << result.markdown;
            return pl::kExitOk;
        }
        if (validate->parsed()) {
            std::optional<std::filesystem::path> ann;
            if (!lint_annotations.empty()) ann = lint_annotations;
            const auto result = pl::cmd_validate(dataset, ann);
            result.print(std::cout);
            return result.exit_code();
        }
    } catch (const sageval::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
        return pl::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pl::kExitConfigError;
    }
    return pl::kExitConfigError;
}
