#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hydrarec/data.hpp"
#include "hydrarec/model.hpp"

namespace hydrarec {

enum class PairSource { RatingPair, NegativeSampled };

struct PreferencePair {
    int64_t user = 0;
    std::vector<int64_t> context;  // nonempty history preceding the pair items
    int64_t winner = 0;
    int64_t loser = 0;
    PairSource source = PairSource::RatingPair;
};

struct OrpoConfig {
    double lambda = 0.05;
    double lr = 5e-6;
    int warmup_steps = 100;  // inverse-sqrt schedule
    int epochs = 5;
};

// Inverse-sqrt learning rate with linear warmup; step is 1-based.
double orpo_lr_at(const OrpoConfig& cfg, int64_t step);

// --- scalar odds math, all in log-space -------------------------------------

// p/(1-p) with p = exp(avg_logp); throws on p >= 1 - 1e-12 (saturation).
double odds_from_avg_logp(double avg_logp);

// avg_logp - log1p(-exp(avg_logp)); same saturation guard.
double log_odds_from_avg_logp(double avg_logp);

// -log sigmoid(log odds(w) - log odds(l)); inputs are average log-likelihoods.
double or_loss_value(double avg_logp_w, double avg_logp_l);

// --- graph-level pieces ------------------------------------------------------

// Mean next-item log-probability over target positions: target[j] is scored
// after context + targets[0..j). Single-item targets are the m = 1 case.
Var avg_log_likelihood(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                       const std::vector<int64_t>& context,
                       const std::vector<int64_t>& targets);

// log odds from an average log-probability node (scalar).
Var log_odds(Graph& g, Var avg_logp);

Var or_loss(Graph& g, Var avg_logp_w, Var avg_logp_l);

// Mean over pairs of [winner NLL + lambda * OR loss].
Var orpo_loss(Graph& g, const ModelVars& m, const ModelConfig& cfg,
              const std::vector<PreferencePair>& batch, double lambda);

// Three-way check of the OR-loss gradient on one pair: autodiff of the loss,
// the analytic delta(d)*h(d) product assembled from autodiff log P gradients
// only, and central finite differences. Returns the max relative error.
double or_gradient_identity_check(const ModelParams& p, const PreferencePair& pair,
                                  double fd_step = 3e-6);

// --- pair construction -------------------------------------------------------

enum class PairMode { RatingPairs, NegativeSampled, Both };

struct PairBuildReport {
    int64_t rating_pairs = 0;
    int64_t negative_sampled = 0;
    int64_t skipped_short = 0;  // users with fewer than 3 interactions
    int64_t skipped_tie = 0;    // part-1 users whose last two ratings tie
    int64_t skipped_no_candidate = 0;  // part-2 users with no unseen item
};

// Part 1: per user, the final two rated items; higher rating wins, ties skip.
// Part 2: final item as winner, the sampler's lowest-scored unseen item as
// loser. Sampler: co-occurrence-weighted popularity (items sharing users with
// the history weigh more), ties toward the smaller item id.
std::vector<PreferencePair> build_preference_pairs(const Dataset& data, PairMode mode,
                                                   PairBuildReport* report = nullptr);

// One record per line: user, context items, winner, loser, source tag.
void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path);
std::vector<PreferencePair> load_pairs(const std::string& path);

}  // namespace hydrarec
