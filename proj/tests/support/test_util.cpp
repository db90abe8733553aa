#include "test_util.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace sageval::support {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("sageval-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

ScoreDistribution distribution_with_mean(double x) {
    ScoreDistribution::Mass mass{};
    const int lo = std::min(4, static_cast<int>(std::floor(x)));
    const double frac = x - lo;
    mass[lo - 1] = 1.0 - frac;
    mass[lo] = frac;
    return ScoreDistribution::from_mass(mass);
}

FirstPassRecord make_first_pass(const std::string& form_id, const std::map<std::string, double>& scores,
                                double fallback, const std::string& tone) {
    FirstPassRecord r;
    r.form_id = form_id;
    r.model_id = "test-model";
    for (const auto& def : predefined_aspects()) {
        AspectAssessment a;
        a.aspect_id = def.aspect_id;
        a.aspect_version = def.version;
        a.output_kind = def.output_kind;
        a.reasoning = "synthetic";
        if (def.is_ordinal()) {
            auto it = scores.find(def.aspect_id);
            a.distribution = distribution_with_mean(it == scores.end() ? fallback : it->second);
            a.expected_score = expected_score(*a.distribution);
        } else {
            a.tone_label = tone;
        }
        r.assessments.push_back(std::move(a));
    }
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string golden_mismatch(const fs::path& golden, const std::string& actual) {
    const char* update = std::getenv("SAGEVAL_UPDATE_GOLDEN");
    if (update && std::string(update) == "1") {
        fs::create_directories(golden.parent_path());
        std::ofstream(golden, std::ios::binary) << actual;
        return {};
    }
    if (!fs::exists(golden)) return "missing golden file " + golden.string();
    const std::string expected = read_file(golden);
    if (expected == actual) return {};
    std::size_t i = 0;
    while (i < expected.size() && i < actual.size() && expected[i] == actual[i]) ++i;
    return golden.string() + " differs at byte " + std::to_string(i);
}

}  // namespace sageval::support
