#include "hydrarec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace hydrarec {

int64_t rank_of_target(const std::vector<double>& scores, int64_t target,
                       const std::vector<int64_t>& exclude) {
    if (target < 1 || target >= static_cast<int64_t>(scores.size()))
        throw std::invalid_argument("rank_of_target: target out of vocabulary");
    std::unordered_set<int64_t> skip(exclude.begin(), exclude.end());
    if (skip.count(target)) throw std::invalid_argument("rank_of_target: target excluded");
    const double ts = scores[static_cast<size_t>(target)];
    int64_t rank = 1;
    for (int64_t i = 1; i < static_cast<int64_t>(scores.size()); ++i) {
        if (i == target || skip.count(i)) continue;
        const double s = scores[static_cast<size_t>(i)];
        if (s > ts || (s == ts && i < target)) ++rank;
    }
    return rank;
}

EvalResult evaluate(const Scorer& scorer, const Split& split, int k, bool use_test) {
    if (k < 1) throw std::invalid_argument("evaluate: k must be >= 1");
    EvalResult r;
    r.k = k;
    for (const auto& u : split.users) {
        std::vector<int64_t> history = u.train_items;
        int64_t target;
        if (use_test) {
            history.push_back(u.valid_target);
            target = u.test_target;
        } else {
            target = u.valid_target;
        }
        const auto scores = scorer(history);
        if (scores.size() != static_cast<size_t>(split.n_items) + 1)
            throw std::runtime_error("evaluate: scorer returned wrong vocabulary size");
        // the target may also appear earlier in the history; never exclude it
        std::vector<int64_t> exclude;
        for (int64_t it : history)
            if (it != target) exclude.push_back(it);
        const int64_t rank = rank_of_target(scores, target, exclude);
        if (rank <= k) {
            r.hr += 1.0;
            r.ndcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
            r.mrr += 1.0 / static_cast<double>(rank);
        }
        ++r.n_users;
    }
    if (r.n_users > 0) {
        r.hr /= static_cast<double>(r.n_users);
        r.ndcg /= static_cast<double>(r.n_users);
        r.mrr /= static_cast<double>(r.n_users);
    }
    return r;
}

Scorer popularity_scorer(const Split& split) {
    std::vector<double> counts(static_cast<size_t>(split.n_items) + 1, 0.0);
    for (const auto& u : split.users) {
        for (int64_t it : u.train_items) counts[static_cast<size_t>(it)] += 1.0;
        counts[static_cast<size_t>(u.valid_target)] += 1.0;
    }
    return [counts](const std::vector<int64_t>&) { return counts; };
}

LatencyResult latency_bootstrap(int64_t n_users, const UserTimer& timer, uint64_t seed,
                                int n_samples, int64_t sample_size) {
    if (n_users < 1) throw std::invalid_argument("latency_bootstrap: no users");
    if (n_samples < 1 || sample_size < 1)
        throw std::invalid_argument("latency_bootstrap: bad sample configuration");
    sample_size = std::min(sample_size, n_users);

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int64_t> pick(0, n_users - 1);

    // warmup pass, excluded from timing
    timer(pick(rng));

    std::vector<double> sample_means;
    sample_means.reserve(static_cast<size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        double total = 0.0;
        for (int64_t i = 0; i < sample_size; ++i) total += timer(pick(rng));
        sample_means.push_back(total / static_cast<double>(sample_size));
    }

    // 1.5*IQR outlier removal across sample means
    std::vector<double> sorted = sample_means;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(sorted.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    const double q1 = quantile(0.25), q3 = quantile(0.75);
    const double iqr = q3 - q1;
    const double lo_fence = q1 - 1.5 * iqr, hi_fence = q3 + 1.5 * iqr;
    std::vector<double> kept;
    for (double m : sample_means)
        if (m >= lo_fence && m <= hi_fence) kept.push_back(m);
    if (kept.size() < 5)
        throw std::runtime_error("too few samples after outlier removal");

    LatencyResult r;
    r.n_kept = static_cast<int>(kept.size());
    for (double m : kept) r.mean += m;
    r.mean /= static_cast<double>(kept.size());

    // 95% percentile bootstrap over the surviving sample means
    const int n_boot = 1000;
    std::vector<double> boot(n_boot);
    std::uniform_int_distribution<size_t> bi(0, kept.size() - 1);
    for (int b = 0; b < n_boot; ++b) {
        double acc = 0.0;
        for (size_t i = 0; i < kept.size(); ++i) acc += kept[bi(rng)];
        boot[static_cast<size_t>(b)] = acc / static_cast<double>(kept.size());
    }
    std::sort(boot.begin(), boot.end());
    r.ci_low = boot[24];    // 2.5th percentile of 1000
    r.ci_high = boot[974];  // 97.5th percentile
    return r;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["model_tag"] = model_tag;
    j["k"] = eval.k;
    j["hr_at_k"] = eval.hr;
    j["ndcg_at_k"] = eval.ndcg;
    j["mrr_at_k"] = eval.mrr;
    j["n_users"] = eval.n_users;
    j["latency_mean_s"] = latency.mean;
    j["latency_ci"] = {latency.ci_low, latency.ci_high};
    j["param_count"] = param_count;
    j["param_count_no_embedding"] = param_count_no_embedding;
    return j.dump(2) + "\n";
}

}  // namespace hydrarec
