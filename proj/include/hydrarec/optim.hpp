#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace hydrarec {

// One stochastic gradient evaluation at a parameter vector.
struct StochGrad {
    std::vector<double> grad;
    double loss = 0.0;
    int64_t batch_size = 1;
};
using GradOracle = std::function<StochGrad(const std::vector<double>& x)>;

// (batch size, beta-hat) pair consumed by the batching controller.
struct BetaObservation {
    int64_t batch_size = 0;
    double beta_hat = 0.0;
    int64_t step = 0;
};

// Universal Stochastic Gradient Method state. H is the inverse step size and
// never decreases; D is the diameter prior, fixed for the run. Euclidean norm
// throughout, dom f = R^n (no projection).
struct UsgmState {
    std::vector<double> x;  // current iterate
    std::vector<double> g;  // last stochastic gradient, evaluated at x
    double H = 0.0;
    double D = 1.0;
    int64_t k = 0;
    double last_loss = 0.0;
};

// H0 = 1/eta0; g0 drawn from the oracle at x0.
UsgmState usgm_init(std::vector<double> x0, double diameter, double eta0,
                    const GradOracle& oracle);

// x - g/H. Errors when H == 0.
std::vector<double> usgm_propose(const UsgmState& s);

// <g_next - g, x_next - x>; may be negative under noise.
double compute_beta_hat(const std::vector<double>& g_next, const std::vector<double>& g,
                        const std::vector<double>& x_next, const std::vector<double>& x);

// H + [beta - H r^2 / 2]_+ / (D^2 + r^2 / 2)
double update_H(double H, double beta_hat, double r, double D);

struct UsgmStepInfo {
    double beta_hat = 0.0;
    double r = 0.0;
    double H = 0.0;      // after the update
    double loss = 0.0;   // oracle loss at the new iterate
    int64_t batch_size = 1;
};

// One full iteration: propose, query the oracle at the proposal, measure
// r and beta-hat, update H, advance the iterate.
UsgmStepInfo usgm_step(UsgmState& s, const GradOracle& oracle);

void sgd_step(std::vector<double>& x, const std::vector<double>& g, double lr);

struct AdamState {
    std::vector<double> m, v;
    int64_t t = 0;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};
AdamState adam_init(size_t dim, double lr);
void adam_step(AdamState& s, std::vector<double>& x, const std::vector<double>& g);

}  // namespace hydrarec
