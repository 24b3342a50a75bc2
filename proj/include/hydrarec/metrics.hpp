#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hydrarec/data.hpp"

namespace hydrarec {

// Scores over the dense vocabulary (index 0 = padding, ignored) for one
// user's history. Must return n_items + 1 entries.
using Scorer = std::function<std::vector<double>(const std::vector<int64_t>& history)>;

struct EvalResult {
    double hr = 0.0, ndcg = 0.0, mrr = 0.0;
    int k = 0;
    int64_t n_users = 0;
};

// Full-vocabulary ranking of each user's test target against train history +
// validation target as context; history items are excluded as candidates.
// Score ties rank the smaller item id first.
EvalResult evaluate(const Scorer& scorer, const Split& split, int k, bool use_test = true);

// Rank of `target` under `scores` among candidates not in `exclude`.
// 1-based; ties broken toward smaller item ids.
int64_t rank_of_target(const std::vector<double>& scores, int64_t target,
                       const std::vector<int64_t>& exclude);

Scorer popularity_scorer(const Split& split);

struct LatencyResult {
    double mean = 0.0;   // seconds per user
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_kept = 0;  // samples surviving outlier removal
};

// Seconds spent serving one user (injectable for tests; production passes a
// wall-clock wrapper around the model).
using UserTimer = std::function<double(int64_t user_index)>;

// Bootstrap latency protocol: n_samples random user samples of sample_size
// (clamped to the population), mean per-user time each; 1.5*IQR outlier
// removal across samples; 95% percentile bootstrap CI over the survivors.
LatencyResult latency_bootstrap(int64_t n_users, const UserTimer& timer, uint64_t seed,
                                int n_samples = 30, int64_t sample_size = 1500);

struct MetricsReport {
    EvalResult eval;
    LatencyResult latency;
    std::string model_tag;
    int64_t param_count = 0;
    int64_t param_count_no_embedding = 0;

    std::string to_json() const;
};

}  // namespace hydrarec
