#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "sageval/aspects.hpp"
#include "sageval/evaluator.hpp"
#include "sageval/scoring.hpp"

#ifndef SAGEVAL_SOURCE_DIR
#error "SAGEVAL_SOURCE_DIR must be defined by the build"
#endif

namespace sageval::support {

inline std::filesystem::path source_dir() { return SAGEVAL_SOURCE_DIR; }
inline std::filesystem::path sample_dir() { return source_dir() / "data" / "sample"; }
inline std::filesystem::path fixture_dir() { return source_dir() / "tests" / "fixtures"; }
inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Two-point distribution over floor(x) and floor(x)+1 whose mean is x.
ScoreDistribution distribution_with_mean(double x);

// A complete first pass over the predefined aspects. Ordinal aspects not in
// `scores` get `fallback`.
FirstPassRecord make_first_pass(const std::string& form_id, const std::map<std::string, double>& scores,
                                double fallback = 3.0, const std::string& tone = "neutral");

std::string read_file(const std::filesystem::path& p);

// Empty when `actual` equals the golden file byte for byte. With
// SAGEVAL_UPDATE_GOLDEN=1 in the environment the golden is rewritten instead.
std::string golden_mismatch(const std::filesystem::path& golden, const std::string& actual);

}  // namespace sageval::support
