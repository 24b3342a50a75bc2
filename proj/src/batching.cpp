#include "hydrarec/batching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace hydrarec {

WlsFit wls_fit(const std::vector<BetaObservation>& history, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("wls_fit: alpha must be in [0,1)");
    if (history.size() < 2) throw std::invalid_argument("wls_fit: need at least 2 observations");
    std::set<int64_t> distinct;
    for (const auto& o : history) distinct.insert(o.batch_size);
    if (distinct.size() < 2) throw std::invalid_argument("insufficient batch diversity");

    const size_t K = history.size() - 1;
    double sw = 0, swz = 0, swzz = 0, swy = 0, swzy = 0;
    for (size_t k = 0; k < history.size(); ++k) {
        const double w = std::pow(1.0 - alpha, static_cast<double>(K - k));
        const double z = 1.0 / std::sqrt(static_cast<double>(history[k].batch_size));
        const double y = history[k].beta_hat;
        sw += w;
        swz += w * z;
        swzz += w * z * z;
        swy += w * y;
        swzy += w * z * y;
    }
    const double det = sw * swzz - swz * swz;
    if (std::abs(det) < 1e-300) throw std::invalid_argument("insufficient batch diversity");
    WlsFit f;
    f.c1 = (swzz * swy - swz * swzy) / det;
    f.c2 = (sw * swzy - swz * swy) / det;
    return f;
}

BatchControllerState make_controller(const BatchControllerConfig& cfg) {
    if (cfg.b0 < 1) throw std::invalid_argument("controller: b0 must be positive");
    if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0)
        throw std::invalid_argument("controller: alpha must be in (0,1)");
    if (cfg.lambda <= 1.0) throw std::invalid_argument("controller: lambda must exceed 1");
    if (cfg.tau <= 0.0) throw std::invalid_argument("controller: tau must be positive");
    BatchControllerState s;
    s.cfg = cfg;
    s.b = cfg.b0;
    return s;
}

void controller_observe(BatchControllerState& s, BetaObservation obs) {
    if (obs.batch_size < 1 || obs.batch_size % s.cfg.b0 != 0)
        throw std::invalid_argument("controller_observe: B must be a positive multiple of B0");
    s.history.push_back(obs);
}

int64_t decide_batch(BatchControllerState& s) {
    if (s.plateaued) return s.b = s.b_star;
    const std::vector<BetaObservation> window(
        s.history.begin() + (s.cfg.current_epoch_only
                                 ? static_cast<std::ptrdiff_t>(s.epoch_begin)
                                 : 0),
        s.history.end());
    try {
        s.fit = wls_fit(window, s.cfg.alpha);
        s.have_fit = true;
    } catch (const std::invalid_argument&) {
        s.have_fit = false;
        return s.b += s.cfg.b0;  // grow once to create batch diversity
    }
    // c2 houses sigma*r >= 0; a negative fit is a noise artifact, clamp it
    const double noise = std::max(s.fit.c2, 0.0) / std::sqrt(static_cast<double>(s.b));
    const double scale = std::max(std::abs(s.fit.c1), 1e-12);
    if (noise > s.cfg.tau * scale) return s.b += s.cfg.b0;
    s.plateaued = true;
    s.b_star = s.b;
    return s.b;
}

void epoch_reset(BatchControllerState& s) {
    const double units = static_cast<double>(s.b) / s.cfg.lambda / static_cast<double>(s.cfg.b0);
    const int64_t m = std::max<int64_t>(1, static_cast<int64_t>(std::floor(units + 0.5)));
    s.b = m * s.cfg.b0;
    s.plateaued = false;
    s.b_star = 0;
    s.have_fit = false;
    s.epoch_begin = s.history.size();
    ++s.epoch;
}

double scaled_epoch_axis(int64_t samples_consumed, int64_t dataset_size) {
    if (dataset_size <= 0) throw std::invalid_argument("scaled_epoch_axis: empty dataset");
    return static_cast<double>(samples_consumed) / static_cast<double>(dataset_size);
}

MacroBatchLoader::MacroBatchLoader(int64_t dataset_size, int64_t b0, uint64_t seed)
    : b0_(b0), seed_(seed) {
    if (dataset_size < 1) throw std::invalid_argument("loader: empty dataset");
    if (b0 < 1) throw std::invalid_argument("loader: b0 must be positive");
    order_.resize(static_cast<size_t>(dataset_size));
    std::iota(order_.begin(), order_.end(), 0);
    start_epoch(0);
}

void MacroBatchLoader::start_epoch(int64_t epoch) {
    std::iota(order_.begin(), order_.end(), 0);
    std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(epoch + 1)));
    std::shuffle(order_.begin(), order_.end(), rng);
    cursor_ = 0;
}

std::vector<int64_t> MacroBatchLoader::next_macrobatch(int64_t b, bool* epoch_ended) {
    if (b < 1 || b % b0_ != 0)
        throw std::invalid_argument("next_macrobatch: B must be a positive multiple of B0");
    if (exhausted()) throw std::runtime_error("next_macrobatch: epoch already exhausted");
    const int64_t remaining = static_cast<int64_t>(order_.size()) - cursor_;
    const int64_t take = std::min(b, remaining);
    std::vector<int64_t> out(order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    if (epoch_ended) *epoch_ended = exhausted();
    return out;
}

}  // namespace hydrarec
