#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace uhfseg {

struct GroupSample {
    std::string group_label;
    std::vector<double> values;
};

struct MannWhitneyResult {
    double u;       // min(U_a, U_b)
    double p;       // two-sided
    bool exact;     // exact enumeration vs normal approximation
};

namespace stats_detail {

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Number of size-k subsets of {1..n} with each possible rank sum, via the
// classic DP over the Mann-Whitney U distribution.
inline std::vector<double> u_distribution(int n1, int n2) {
    // recurrence N(u; m1, m2) = N(u - m2; m1 - 1, m2) + N(u; m1, m2 - 1),
    // memoized over (m1, m2)
    std::map<std::pair<int, int>, std::vector<double>> memo;
    std::function<const std::vector<double>&(int, int)> count = [&](int m1, int m2)
        -> const std::vector<double>& {
        auto key = std::make_pair(m1, m2);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        std::vector<double> v(n1 * n2 + 1, 0.0);
        if (m1 == 0 || m2 == 0) {
            v[0] = 1.0;
        } else {
            const auto& a = count(m1 - 1, m2);
            const auto& b = count(m1, m2 - 1);
            for (int u = 0; u <= n1 * n2; ++u) {
                double s = (u >= m2 ? a[u - m2] : 0.0) + b[u];
                v[u] = s;
            }
        }
        return memo.emplace(key, std::move(v)).first->second;
    };
    return count(n1, n2);
}

inline bool has_ties(std::vector<double> pooled) {
    std::sort(pooled.begin(), pooled.end());
    return std::adjacent_find(pooled.begin(), pooled.end()) != pooled.end();
}

}  // namespace stats_detail

// Two-sided Mann-Whitney U. Exact enumeration when n_a + n_b <= 12 and the
// pooled sample is tie-free; otherwise normal approximation with midranks,
// tie-corrected variance and continuity correction.
inline MannWhitneyResult mann_whitney_u(const GroupSample& a, const GroupSample& b) {
    std::size_t n1 = a.values.size(), n2 = b.values.size();
    if (n1 == 0 || n2 == 0) throw std::invalid_argument("mann_whitney_u: empty sample");

    // midranks of the pooled sample
    struct Obs {
        double v;
        int grp;
    };
    std::vector<Obs> pooled;
    pooled.reserve(n1 + n2);
    for (double v : a.values) pooled.push_back({v, 0});
    for (double v : b.values) pooled.push_back({v, 1});
    std::sort(pooled.begin(), pooled.end(), [](const Obs& x, const Obs& y) { return x.v < y.v; });

    double rank_sum_a = 0;
    double tie_term = 0;
    std::size_t i = 0, n = pooled.size();
    while (i < n) {
        std::size_t j = i;
        while (j < n && pooled[j].v == pooled[i].v) ++j;
        double midrank = (i + 1 + j) / 2.0;  // average of ranks i+1..j
        std::size_t t = j - i;
        if (t > 1) tie_term += double(t) * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].grp == 0) rank_sum_a += midrank;
        i = j;
    }
    double ua = rank_sum_a - n1 * (n1 + 1) / 2.0;
    double ub = double(n1) * n2 - ua;
    double umin = std::min(ua, ub);

    bool tie_free = tie_term == 0;
    if (n1 + n2 <= 12 && tie_free) {
        auto dist = stats_detail::u_distribution(static_cast<int>(n1), static_cast<int>(n2));
        double total = 0, tail = 0;
        for (std::size_t u = 0; u < dist.size(); ++u) {
            total += dist[u];
            if (u <= umin + 1e-9) tail += dist[u];
        }
        double p = std::min(1.0, 2.0 * tail / total);
        return {umin, p, true};
    }

    double mu = double(n1) * n2 / 2.0;
    double nn = double(n);
    double var = (double(n1) * n2 / 12.0) * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (var <= 0) return {umin, 1.0, false};
    double z = std::max(0.0, std::abs(ua - mu) - 0.5) / std::sqrt(var);
    double p = std::min(1.0, 2.0 * stats_detail::normal_sf(z));
    return {umin, p, false};
}

struct TestResult {
    std::string name;
    double u = 0;
    double p_raw;
    double p_adjusted;
    bool significant;
    bool exact = false;
};

// Bonferroni: adjusted p = min(1, p*m); significant iff raw p < alpha/m.
inline std::vector<TestResult> bonferroni(const std::vector<std::pair<std::string, double>>& pvals,
                                          double alpha, std::size_t m) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("bonferroni: alpha must be in (0,1)");
    if (m < pvals.size()) throw std::invalid_argument("bonferroni: m smaller than test count");
    double threshold = alpha / static_cast<double>(m);
    std::vector<TestResult> out;
    for (const auto& [name, p] : pvals)
        out.push_back({name, 0, p, std::min(1.0, p * static_cast<double>(m)), p < threshold});
    return out;
}

inline double bonferroni_threshold(double alpha, std::size_t m) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("bonferroni: alpha must be in (0,1)");
    return alpha / static_cast<double>(m);
}

}  // namespace uhfseg
