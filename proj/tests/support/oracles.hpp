#pragma once

// Reference implementations written straight from the definitions, kept
// deliberately naive so they share no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

namespace sageval::oracle {

// Sum over s of p(s) * s, scores 1..5.
inline double weighted_sum(const std::vector<double>& mass) {
    double total = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i) total += mass[i] * static_cast<double>(i + 1);
    return total;
}

// Rank of v[i] = 1 + (#values below) + (#ties other than itself) / 2.
inline std::vector<double> midranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double below = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) below += 1;
            else if (v[j] == v[i] && j != i) equal += 1;
        }
        r[i] = 1.0 + below + equal / 2.0;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
    }
    const double ma = sa / n, mb = sb / n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(midranks(x), midranks(y));
}

// Tau-b by visiting all n(n-1)/2 pairs.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
    long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0, n0 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            ++n0;
            const double dx = x[i] - x[j];
            const double dy = y[i] - y[j];
            if (dx == 0) ++tied_x;
            if (dy == 0) ++tied_y;
            if (dx == 0 || dy == 0) continue;
            if ((dx > 0) == (dy > 0)) ++concordant;
            else ++discordant;
        }
    }
    return static_cast<double>(concordant - discordant) /
           std::sqrt(static_cast<double>(n0 - tied_x) * static_cast<double>(n0 - tied_y));
}

}  // namespace sageval::oracle
