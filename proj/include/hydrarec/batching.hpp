#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hydrarec/optim.hpp"

namespace hydrarec {

struct WlsFit {
    double c1 = 0.0;  // intercept, houses the curvature term
    double c2 = 0.0;  // slope against 1/sqrt(B), houses the noise term
};

// Closed-form weighted least squares of beta-hat against 1/sqrt(B), with
// exponential forgetting weights (1-alpha)^(K-k). Requires at least two
// observations with at least two distinct batch sizes.
WlsFit wls_fit(const std::vector<BetaObservation>& history, double alpha);

struct BatchControllerConfig {
    int64_t b0 = 32;
    double alpha = 0.01;   // forgetting factor
    double lambda = 2.0;   // epoch shrink divisor
    double tau = 0.1;      // plateau tolerance
    bool current_epoch_only = true;  // WLS history scope
};

struct BatchControllerState {
    BatchControllerConfig cfg;
    int64_t b = 0;  // current batch size, positive multiple of b0
    std::vector<BetaObservation> history;
    size_t epoch_begin = 0;  // first history index of the current epoch
    int64_t epoch = 0;
    WlsFit fit;
    bool have_fit = false;
    bool plateaued = false;
    int64_t b_star = 0;  // plateau batch size; meaningful only while plateaued
};

BatchControllerState make_controller(const BatchControllerConfig& cfg);

// Records a (B, beta-hat) pair. Observations taken with r == 0 must be
// discarded by the caller before this point.
void controller_observe(BatchControllerState& s, BetaObservation obs);

// Next batch size: grow by B0 until the fitted noise term is negligible
// against the curvature term, then hold B* until the epoch ends.
int64_t decide_batch(BatchControllerState& s);

// Epoch boundary: shrink B by lambda (rounded to a multiple of B0, half up,
// floored at B0) and clear the plateau.
void epoch_reset(BatchControllerState& s);

// Fractional-epoch x-coordinate shared by all comparison curves.
double scaled_epoch_axis(int64_t samples_consumed, int64_t dataset_size);

// Epoch-shuffled index loader. A macro-batch is m = B/B0 consecutive base
// batches; the final macro-batch of an epoch may be partial.
class MacroBatchLoader {
public:
    MacroBatchLoader(int64_t dataset_size, int64_t b0, uint64_t seed);

    void start_epoch(int64_t epoch);  // reshuffles deterministically
    // Returns up to `b` indices (b must be a multiple of b0); sets *epoch_ended
    // when the epoch is exhausted by this call.
    std::vector<int64_t> next_macrobatch(int64_t b, bool* epoch_ended);
    bool exhausted() const { return cursor_ >= static_cast<int64_t>(order_.size()); }
    int64_t dataset_size() const { return static_cast<int64_t>(order_.size()); }

private:
    std::vector<int64_t> order_;
    int64_t b0_;
    uint64_t seed_;
    int64_t cursor_ = 0;
};

}  // namespace hydrarec
