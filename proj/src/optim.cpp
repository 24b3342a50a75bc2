#include "hydrarec/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace hydrarec {

UsgmState usgm_init(std::vector<double> x0, double diameter, double eta0,
                    const GradOracle& oracle) {
    if (diameter <= 0.0) throw std::invalid_argument("usgm_init: D must be positive");
    if (eta0 <= 0.0) throw std::invalid_argument("usgm_init: eta0 must be positive");
    UsgmState s;
    s.x = std::move(x0);
    StochGrad g0 = oracle(s.x);
    if (g0.grad.size() != s.x.size())
        throw std::invalid_argument("usgm_init: oracle gradient dimension mismatch");
    s.g = std::move(g0.grad);
    s.last_loss = g0.loss;
    s.H = 1.0 / eta0;
    s.D = diameter;
    return s;
}

std::vector<double> usgm_propose(const UsgmState& s) {
    if (s.H == 0.0) throw std::runtime_error("usgm_propose: H is zero");
    std::vector<double> x = s.x;
    for (size_t i = 0; i < x.size(); ++i) x[i] -= s.g[i] / s.H;
    return x;
}

double compute_beta_hat(const std::vector<double>& g_next, const std::vector<double>& g,
                        const std::vector<double>& x_next, const std::vector<double>& x) {
    const size_t n = x.size();
    if (g_next.size() != n || g.size() != n || x_next.size() != n)
        throw std::invalid_argument("compute_beta_hat: dimension mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += (g_next[i] - g[i]) * (x_next[i] - x[i]);
    return acc;
}

double update_H(double H, double beta_hat, double r, double D) {
    if (r < 0.0 || D <= 0.0 || H < 0.0) throw std::invalid_argument("update_H: bad arguments");
    const double numerator = std::max(beta_hat - 0.5 * H * r * r, 0.0);
    return H + numerator / (D * D + 0.5 * r * r);
}

UsgmStepInfo usgm_step(UsgmState& s, const GradOracle& oracle) {
    std::vector<double> x_next = usgm_propose(s);
    StochGrad gn = oracle(x_next);
    if (gn.grad.size() != s.x.size())
        throw std::invalid_argument("usgm_step: oracle gradient dimension mismatch");
    double r2 = 0.0;
    for (size_t i = 0; i < s.x.size(); ++i) {
        const double d = x_next[i] - s.x[i];
        r2 += d * d;
    }
    const double r = std::sqrt(r2);
    const double beta = compute_beta_hat(gn.grad, s.g, x_next, s.x);
    s.H = update_H(s.H, beta, r, s.D);
    s.x = std::move(x_next);
    s.g = std::move(gn.grad);
    s.last_loss = gn.loss;
    ++s.k;
    return UsgmStepInfo{beta, r, s.H, gn.loss, gn.batch_size};
}

void sgd_step(std::vector<double>& x, const std::vector<double>& g, double lr) {
    if (g.size() != x.size()) throw std::invalid_argument("sgd_step: dimension mismatch");
    for (size_t i = 0; i < x.size(); ++i) x[i] -= lr * g[i];
}

AdamState adam_init(size_t dim, double lr) {
    AdamState s;
    s.m.assign(dim, 0.0);
    s.v.assign(dim, 0.0);
    s.lr = lr;
    return s;
}

void adam_step(AdamState& s, std::vector<double>& x, const std::vector<double>& g) {
    if (g.size() != x.size() || s.m.size() != x.size())
        throw std::invalid_argument("adam_step: dimension mismatch");
    ++s.t;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (size_t i = 0; i < x.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g[i] * g[i];
        x[i] -= s.lr * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + s.eps);
    }
}

}  // namespace hydrarec
