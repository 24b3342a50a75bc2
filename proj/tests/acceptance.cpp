// Acceptance gate: one pass/fail line per criterion.
//
//   acceptance                  run everything (dataset criteria skip if the
//                               files are absent)
//   acceptance --skip-datasets  property criteria only
//   acceptance --only-datasets  dataset criteria only; exits 77 when no
//                               dataset file is present
//   acceptance --data-dir DIR   where to look for ml-100k/u.data and
//                               ml-1m/ratings.dat (default: data)
//
// Exit code: 0 all executed criteria passed, 1 any failure, 77 dataset-only
// invocation with no datasets available.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hydrarec/batching.hpp"
#include "hydrarec/config.hpp"
#include "hydrarec/data.hpp"
#include "hydrarec/graph.hpp"
#include "hydrarec/metrics.hpp"
#include "hydrarec/model.hpp"
#include "hydrarec/optim.hpp"
#include "hydrarec/orpo.hpp"
#include "hydrarec/train.hpp"

using namespace hydrarec;
namespace fs = std::filesystem;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.v) v = u(rng);
    return t;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// ---------------------------------------------------------------------------
// 1. Gradient correctness: primitives < 1e-6, full <= 1k-parameter model < 1e-4.
// ---------------------------------------------------------------------------
bool criterion_1(std::string& detail) {
    const double t0 = now_s();
    std::mt19937_64 rng(42);
    using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;
    struct Case {
        Builder build;
        std::vector<Shape> shapes;
        double lo, hi;
    };
    auto red = [](Graph& g, Var v) { return g.sum(g.mul(v, v)); };
    std::vector<Case> cases = {
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.add(p[0], p[1])); },
         {{3, 4}, {4}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.sub(p[0], p[1])); },
         {{3, 4}, {3, 4}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.mul(p[0], p[1])); },
         {{2, 3}, {3}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.matmul(p[0], p[1])); },
         {{3, 4}, {4, 2}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.matmul(p[0], p[1])); },
         {{3, 4}, {4}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.exp(p[0])); }, {{5}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.log(p[0])); }, {{5}}, 0.2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.sigmoid(p[0])); },
         {{5}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.softplus(p[0])); },
         {{5}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.gelu(p[0])); }, {{5}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.powc(p[0], -0.5)); },
         {{5}}, 0.3, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.softmax(p[0])); },
         {{2, 5}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.log_softmax(p[0])); },
         {{2, 5}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) {
             return g.mul(g.sum(p[0]), g.sum(p[0]));
         }, {{3, 3}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) {
             return g.mul(g.mean(p[0]), g.mean(p[0]));
         }, {{3, 3}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.slice_rows(p[0], 1, 2)); },
         {{4, 3}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) {
             return red(g, g.concat_rows({p[0], p[1]}));
         }, {{2, 3}, {3}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.transpose(p[0])); },
         {{3, 4}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.reverse_rows(p[0])); },
         {{4, 2}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) { return red(g, g.rows(p[0], {2, 0, 2})); },
         {{3, 4}}, -2, 2},
        {[&](Graph& g, const std::vector<Var>& p) {
             return red(g, g.layer_norm(p[0], p[1], p[2]));
         }, {{3, 4}, {4}, {4}}, -2, 2},
    };
    double worst_prim = 0.0;
    for (const auto& c : cases)
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Tensor> params;
            for (const Shape& s : c.shapes) params.push_back(random_tensor(s, rng, c.lo, c.hi));
            worst_prim = std::max(worst_prim, finite_diff_check(c.build, params, 1e-5));
        }

    ModelConfig mc;
    mc.vocab = 5;
    mc.d_model = 3;
    mc.n_state = 2;
    mc.n_layers = 1;
    mc.max_len = 8;
    double worst_model = 0.0;
    int64_t n_params = 0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        ModelParams p = ModelParams::init(mc, seed);
        n_params = p.param_count();
        std::vector<Tensor> leaves;
        for (const auto& [name, t] : p.named_params()) leaves.push_back(*t);
        worst_model = std::max(
            worst_model, finite_diff_check(
                             [&](Graph& g, const std::vector<Var>& vars) {
                                 ModelVars m = assemble_model_vars(mc, vars);
                                 return next_item_nll(g, m, mc, {1, 2, 3}, 4);
                             },
                             leaves, 1e-5));
    }
    const double dt = now_s() - t0;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "primitives %.2e < 1e-6, %lld-param model %.2e < 1e-4, %.1f s < 60 s",
                  worst_prim, static_cast<long long>(n_params), worst_model, dt);
    detail = buf;
    return worst_prim < 1e-6 && n_params <= 1000 && worst_model < 1e-4 && dt < 60.0;
}

// ---------------------------------------------------------------------------
// 2. Scan oracle equivalence: selective_scan vs the brute-force recurrence.
// ---------------------------------------------------------------------------
double softplus_ref(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

Tensor scan_oracle(const Tensor& x, const SsmLayerParams& p) {
    const int64_t T = x.shape[0], D = x.shape[1], N = p.a_log.shape[0];
    std::vector<double> xp(static_cast<size_t>(T * D), 0.0);
    for (int64_t t = 0; t < T; ++t)
        for (int64_t d = 0; d < D; ++d)
            for (int64_t e = 0; e < D; ++e) xp[t * D + d] += x.v[t * D + e] * p.in_proj.v[e * D + d];
    std::vector<double> h(static_cast<size_t>(D * N), 0.0), y(static_cast<size_t>(T * D), 0.0);
    for (int64_t t = 0; t < T; ++t) {
        double dt_raw = p.delta_b.v[0];
        for (int64_t d = 0; d < D; ++d) dt_raw += xp[t * D + d] * p.delta_w.v[d];
        const double dt = softplus_ref(dt_raw);
        std::vector<double> bsel(static_cast<size_t>(N), 0.0), csel(static_cast<size_t>(N), 0.0);
        for (int64_t n = 0; n < N; ++n)
            for (int64_t d = 0; d < D; ++d) {
                bsel[n] += xp[t * D + d] * p.b_proj.v[d * N + n];
                csel[n] += xp[t * D + d] * p.c_proj.v[d * N + n];
            }
        for (int64_t n = 0; n < N; ++n) {
            const double a_bar = std::exp(-dt * std::exp(p.a_log.v[n]));
            const double b_bar = dt * bsel[n];
            for (int64_t d = 0; d < D; ++d)
                h[d * N + n] = a_bar * h[d * N + n] + xp[t * D + d] * b_bar;
        }
        for (int64_t d = 0; d < D; ++d)
            for (int64_t n = 0; n < N; ++n) y[t * D + d] += csel[n] * h[d * N + n];
    }
    Tensor out({T, D});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t d = 0; d < D; ++d)
            for (int64_t e = 0; e < D; ++e)
                out.v[t * D + d] += y[t * D + e] * p.out_proj.v[e * D + d];
    return out;
}

bool criterion_2(std::string& detail) {
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int64_t> td(1, 32), dd(1, 6), nd(1, 8);
        const int64_t T = td(rng), D = dd(rng), N = nd(rng);
        SsmLayerParams p;
        p.a_log = random_tensor({N}, rng, -1, 1);
        p.delta_w = random_tensor({D, 1}, rng, -1, 1);
        p.delta_b = random_tensor({1}, rng, -1, 1);
        p.b_proj = random_tensor({D, N}, rng, -1, 1);
        p.c_proj = random_tensor({D, N}, rng, -1, 1);
        p.in_proj = random_tensor({D, D}, rng, -1, 1);
        p.out_proj = random_tensor({D, D}, rng, -1, 1);
        Tensor x = random_tensor({T, D}, rng, -1, 1);

        Graph g;
        SsmLayerVars v{g.input(p.a_log), g.input(p.delta_w), g.input(p.delta_b),
                       g.input(p.b_proj), g.input(p.c_proj), g.input(p.in_proj),
                       g.input(p.out_proj)};
        const Tensor& got = g.val(selective_scan(g, g.input(x), v));
        const Tensor want = scan_oracle(x, p);
        for (size_t i = 0; i < got.v.size(); ++i)
            worst = std::max(worst, std::abs(got.v[i] - want.v[i]));
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "max abs deviation %.2e < 1e-10 over 50 seeds", worst);
    detail = buf;
    return worst < 1e-10;
}

// ---------------------------------------------------------------------------
// 3. USGM mechanics: hand cases, monotone H, quadratic convergence.
// ---------------------------------------------------------------------------
bool criterion_3(std::string& detail) {
    const bool hand = update_H(2.0, 1.0, 1.0, 1.0) == 2.0 &&
                      std::abs(update_H(0.0, 1.0, 1.0, 1.0) - 2.0 / 3.0) < 1e-15 &&
                      std::abs(update_H(2.0, 3.0, 1.0, 1.0) - 10.0 / 3.0) < 1e-15;

    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    GradOracle noise_oracle = [&](const std::vector<double>& x) {
        std::vector<double> g(x.size());
        for (auto& v : g) v = n(rng);
        return StochGrad{g, 0.0, 1};
    };
    UsgmState s = usgm_init({0.0, 0.0, 0.0}, 1.0, 1.0, noise_oracle);
    bool monotone = true;
    double prev = s.H;
    for (int i = 0; i < 10000; ++i) {
        usgm_step(s, noise_oracle);
        if (s.H < prev) monotone = false;
        prev = s.H;
    }

    const std::vector<double> lam{0.5, 1.0, 2.0, 4.0};
    const std::vector<double> c{1.0, -2.0, 0.5, 3.0};
    GradOracle quad = [&](const std::vector<double>& x) {
        std::vector<double> g(x.size());
        double f = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            g[i] = lam[i] * (x[i] - c[i]);
            f += 0.5 * lam[i] * (x[i] - c[i]) * (x[i] - c[i]);
        }
        return StochGrad{g, f, 1};
    };
    std::vector<double> x0{0.0, 0.0, 0.0, 0.0};
    double dist = 0.0;
    for (size_t i = 0; i < x0.size(); ++i) dist += (x0[i] - c[i]) * (x0[i] - c[i]);
    UsgmState q = usgm_init(x0, std::sqrt(dist) * 1.5, 1e-2, quad);
    int converged_at = -1;
    for (int k = 0; k < 5000; ++k) {
        UsgmStepInfo info = usgm_step(q, quad);
        if (info.loss < 1e-6) {
            converged_at = k + 1;
            break;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "hand cases %s, H monotone over 10k steps %s, quadratic f-f* < 1e-6 at step %d",
                  hand ? "exact" : "BROKEN", monotone ? "yes" : "NO", converged_at);
    detail = buf;
    return hand && monotone && converged_at > 0;
}

// ---------------------------------------------------------------------------
// 4. WLS recovery under Normal(0, 0.01) noise and on exact-line data.
// ---------------------------------------------------------------------------
bool criterion_4(std::string& detail) {
    const std::vector<int64_t> bs{32, 64, 128, 256, 512, 1024};
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        std::mt19937_64 rng(3000 + t);
        std::uniform_real_distribution<double> uc1(1.0, 5.0), uc2(2.0, 8.0);
        std::normal_distribution<double> n(0.0, 0.01);
        const double c1 = uc1(rng), c2 = uc2(rng);
        std::vector<BetaObservation> h;
        for (int k = 0; k < 48; ++k) {
            const int64_t b = bs[static_cast<size_t>(k) % bs.size()];
            h.push_back({b, c1 + c2 / std::sqrt(static_cast<double>(b)) + n(rng), k});
        }
        const WlsFit f = wls_fit(h, 0.01);
        if (std::abs(f.c1 - c1) <= 0.05 * c1 && std::abs(f.c2 - c2) <= 0.05 * c2) ++ok;
    }

    std::vector<BetaObservation> exact;
    int64_t k = 0;
    for (int64_t b : bs) exact.push_back({b, 3.0 + 5.0 / std::sqrt(static_cast<double>(b)), k++});
    const WlsFit fe = wls_fit(exact, 0.01);
    const double exact_err = std::max(std::abs(fe.c1 - 3.0), std::abs(fe.c2 - 5.0));

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "(c1,c2) within 5%% in %d/100 trials (need 95), exact line error %.2e < 1e-9",
                  ok, exact_err);
    detail = buf;
    return ok >= 95 && exact_err < 1e-9;
}

// ---------------------------------------------------------------------------
// 5. Controller behavior on a stochastic quadratic oracle.
// ---------------------------------------------------------------------------
struct QuadSim {
    double lam, sigma, r;
    int dim;
    std::mt19937_64 rng;
};

double quad_beta(QuadSim& q, int64_t b) {
    std::normal_distribution<double> n(0.0, q.sigma);
    double nn = 0.0;
    for (int i = 0; i < q.dim; ++i) {
        const double x = n(q.rng);
        nn += x * x;
    }
    return q.lam * q.r * q.r + std::sqrt(nn) * q.r / std::sqrt(static_cast<double>(b));
}

int64_t run_quad_epoch(BatchControllerState& s, QuadSim& q, int steps) {
    for (int k = 0; k < steps; ++k) {
        controller_observe(s, {s.b, quad_beta(q, s.b), k});
        decide_batch(s);
    }
    return s.plateaued ? s.b_star : 0;
}

int64_t run_line_epoch(BatchControllerState& s, double c1, double c2, double noise, int steps,
                       std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, noise);
    for (int k = 0; k < steps; ++k) {
        const double beta = c1 + c2 / std::sqrt(static_cast<double>(s.b)) + n(rng);
        controller_observe(s, {s.b, beta, k});
        decide_batch(s);
    }
    return s.plateaued ? s.b_star : 0;
}

bool criterion_5(std::string& detail) {
    // grow -> plateau -> shrink at epoch end -> re-plateau near the prior B*
    int good = 0;
    for (int t = 0; t < 100; ++t) {
        QuadSim q{1.0, 1.2, 80.0, 6400, std::mt19937_64(50 + t)};
        BatchControllerState s = make_controller({32, 0.01, 2.0, 0.1, true});
        const int64_t b_start = s.b;
        const int64_t bstar1 = run_quad_epoch(s, q, 80);
        if (bstar1 == 0) continue;
        const bool grew = bstar1 > b_start;
        epoch_reset(s);
        const bool shrank = s.b < bstar1;
        const int64_t bstar2 = run_quad_epoch(s, q, 80);
        if (grew && shrank && bstar2 != 0 && std::llabs(bstar2 - bstar1) <= 32) ++good;
    }

    // stability: current-epoch-only fits vs all-history fits
    int agree = 0;
    for (int t = 0; t < 100; ++t) {
        std::mt19937_64 rng(1000 + t);
        std::uniform_real_distribution<double> uc1(0.5, 2.0), ur(1.5, 3.0);
        const double c1 = uc1(rng), c2 = c1 * ur(rng);
        BatchControllerConfig cur{32, 0.01, 2.0, 0.1, true};
        BatchControllerConfig all = cur;
        all.current_epoch_only = false;
        BatchControllerState sc = make_controller(cur);
        BatchControllerState sa = make_controller(all);
        std::mt19937_64 rng_c(7 * t + 1), rng_a(7 * t + 1);
        for (int e = 0; e < 2; ++e) {
            run_line_epoch(sc, c1, c2, 2e-4, 80, rng_c);
            run_line_epoch(sa, c1, c2, 2e-4, 80, rng_a);
            if (e == 0) {
                epoch_reset(sc);
                epoch_reset(sa);
            }
        }
        if (sc.plateaued && sa.plateaued && std::llabs(sc.b_star - sa.b_star) <= 32) ++agree;
    }

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "grow/plateau/shrink/re-plateau %d/100 (need 90), "
                  "epoch-scope fits agree %d/100 (need 90)",
                  good, agree);
    detail = buf;
    return good >= 90 && agree >= 90;
}

// ---------------------------------------------------------------------------
// 6. ORPO gradient identity and L_OR = log 2 at equal likelihoods.
// ---------------------------------------------------------------------------
bool criterion_6(std::string& detail) {
    ModelConfig mc;
    mc.vocab = 6;
    mc.d_model = 3;
    mc.n_state = 2;
    mc.n_layers = 1;
    mc.max_len = 8;
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int64_t> item(1, 5), len(1, 3);
        PreferencePair pair;
        pair.user = 1;
        const int64_t l = len(rng);
        for (int64_t i = 0; i < l; ++i) pair.context.push_back(item(rng));
        pair.winner = item(rng);
        do pair.loser = item(rng);
        while (pair.loser == pair.winner);
        ModelParams p = ModelParams::init(mc, seed * 31 + 7);
        worst = std::max(worst, or_gradient_identity_check(p, pair));
    }

    double log2_err = 0.0;
    for (double a : {-0.25, -1.0, -2.5})
        log2_err = std::max(log2_err, std::abs(or_loss_value(a, a) - std::log(2.0)));

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "three-way max rel err %.2e < 1e-6 over 50 instances, "
                  "|L_OR - log 2| %.2e < 1e-12 at equal likelihoods",
                  worst, log2_err);
    detail = buf;
    return worst < 1e-6 && log2_err < 1e-12;
}

// ---------------------------------------------------------------------------
// 9. Metrics correctness: NDCG formula and rank edge cases.
// ---------------------------------------------------------------------------
bool criterion_9(std::string& detail) {
    Split s;
    s.n_items = 20;
    s.users.push_back({1, {1, 2}, 3, 4});

    // rank 10 of the test target (9 non-history items scored above it)
    EvalResult r10 = evaluate(
        [](const std::vector<int64_t>&) {
            std::vector<double> sc(21, 0.0);
            for (int i = 11; i <= 19; ++i) sc[static_cast<size_t>(i)] = 2.0;
            sc[4] = 1.0;
            return sc;
        },
        s, 10, true);
    const double ndcg_err = std::abs(r10.ndcg - 1.0 / std::log2(11.0));
    const bool rank10_ok = ndcg_err < 1e-12 && r10.hr == 1.0 &&
                           std::abs(r10.mrr - 0.1) < 1e-15;

    // rank 1: every metric exactly 1
    EvalResult r1 = evaluate(
        [](const std::vector<int64_t>&) {
            std::vector<double> sc(21, 0.0);
            sc[4] = 1.0;
            return sc;
        },
        s, 10, true);
    const bool rank1_ok = r1.hr == 1.0 && r1.ndcg == 1.0 && r1.mrr == 1.0;

    // rank k exactly at the cutoff, and rank k+1 just outside it
    auto rank_n_scorer = [](int above) {
        return [above](const std::vector<int64_t>&) {
            std::vector<double> sc(21, 0.0);
            for (int i = 11; i < 11 + above; ++i) sc[static_cast<size_t>(i)] = 2.0;
            sc[4] = 1.0;
            return sc;
        };
    };
    EvalResult rk = evaluate(rank_n_scorer(4), s, 5, true);  // rank 5, k = 5
    const bool rank_k_ok = rk.hr == 1.0 && std::abs(rk.mrr - 0.2) < 1e-15 &&
                           std::abs(rk.ndcg - 1.0 / std::log2(6.0)) < 1e-12;
    EvalResult rk1 = evaluate(rank_n_scorer(5), s, 5, true);  // rank 6, k = 5
    const bool rank_k1_ok = rk1.hr == 0.0 && rk1.ndcg == 0.0 && rk1.mrr == 0.0;

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "|NDCG@10(rank 10) - 1/log2(11)| = %.2e < 1e-12; rank 1/k/k+1 edges %s",
                  ndcg_err, (rank1_ok && rank_k_ok && rank_k1_ok) ? "exact" : "BROKEN");
    detail = buf;
    return rank10_ok && rank1_ok && rank_k_ok && rank_k1_ok;
}

// ---------------------------------------------------------------------------
// 10. Latency harness calibration against Normal(10 ms, 1 ms).
// ---------------------------------------------------------------------------
bool criterion_10(std::string& detail) {
    int covered = 0;
    for (int t = 0; t < 100; ++t) {
        std::mt19937_64 rng(500 + t);
        std::normal_distribution<double> n(10e-3, 1e-3);
        UserTimer timer = [&](int64_t) { return n(rng); };
        LatencyResult r = latency_bootstrap(2000, timer, 900 + t);  // default 30 x 1500
        if (r.ci_low <= 10e-3 && 10e-3 <= r.ci_high) ++covered;
    }
    // the default protocol keeps 30 samples when nothing is an outlier
    const LatencyResult c = latency_bootstrap(100, [](int64_t) { return 1e-3; }, 7);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "95%% CI covers the true mean in %d/100 trials (need 90), "
                  "default protocol keeps %d/30 samples",
                  covered, c.n_kept);
    detail = buf;
    return covered >= 90 && c.n_kept == 30;
}

// ---------------------------------------------------------------------------
// 11. Determinism: two identical train runs are bit-identical.
// ---------------------------------------------------------------------------
bool criterion_11(std::string& detail) {
    TempDir tmp("hr_acceptance_det");
    {
        std::ofstream out(tmp.file("u.data"));
        for (int u = 1; u <= 12; ++u)
            for (int t = 0; t < 9; ++t)
                out << u << '\t' << (u + t) % 9 + 1 << '\t' << (t % 2 ? 3 : 5) << '\t'
                    << 1000 + t << '\n';
    }
    TrainConfig cfg;
    cfg.dataset = tmp.file("u.data");
    cfg.min_item_count = 1;
    cfg.d_model = 8;
    cfg.n_state = 2;
    cfg.layers = 1;
    cfg.max_len = 8;
    cfg.optimizer = "usgm-adaptive";
    cfg.epochs = 2;
    cfg.lr = 0.1;
    cfg.b0 = 4;
    cfg.seed = 5;

    cfg.out_dir = tmp.file("a");
    TrainResult a = train(cfg);
    cfg.out_dir = tmp.file("b");
    TrainResult b = train(cfg);

    const bool traces = read_file(a.optimizer_trace_path) == read_file(b.optimizer_trace_path) &&
                        read_file(a.controller_trace_path) == read_file(b.controller_trace_path);
    const bool ckpt = read_file(a.checkpoint_path) == read_file(b.checkpoint_path);
    const bool report = read_file(a.report_path) == read_file(b.report_path);
    char buf[160];
    std::snprintf(buf, sizeof buf, "traces %s, checkpoint %s, report %s",
                  traces ? "bit-identical" : "DIFFER", ckpt ? "bit-identical" : "DIFFER",
                  report ? "bit-identical" : "DIFFER");
    detail = buf;
    return traces && ckpt && report;
}

// ---------------------------------------------------------------------------
// 7. End-to-end optimizer comparison on ML-100k (needs the dataset file).
// ---------------------------------------------------------------------------
bool criterion_7(const std::string& path, std::string& detail) {
    const double t0 = now_s();
    TempDir tmp("hr_acceptance_e2e");

    TrainConfig cfg;
    cfg.dataset = path;
    cfg.format = "movielens-100k";
    cfg.d_model = 64;
    cfg.n_state = 16;
    cfg.layers = 2;
    cfg.max_len = 50;
    cfg.epochs = 10;
    cfg.b0 = 32;
    cfg.seed = 1;
    cfg.eval_k = 10;

    cfg.optimizer = "usgm-adaptive";
    cfg.lr = 1.0;  // eta0; H adapts upward from 1/eta0
    cfg.out_dir = tmp.file("usgm");
    TrainResult usgm = train(cfg);

    cfg.optimizer = "adam";
    cfg.lr = 1e-3;
    cfg.out_dir = tmp.file("adam");
    TrainResult adam = train(cfg);

    Dataset d = load_dataset(path, DatasetFormat::MovieLens100k, cfg.min_item_count);
    Split split = leave_one_out_split(d, cfg.min_length);
    EvalResult pop = evaluate(popularity_scorer(split), split, 10, true);

    const double dt = now_s() - t0;
    const bool loss_ok = usgm.final_train_loss <= 1.10 * adam.final_train_loss;
    const bool hr_ok = usgm.test.hr >= 2.0 * pop.hr;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "final loss usgm %.4f vs adam %.4f (need <= 1.10x), "
                  "HR@10 %.4f vs popularity %.4f (need >= 2x), %.0f s < 1800 s",
                  usgm.final_train_loss, adam.final_train_loss, usgm.test.hr, pop.hr, dt);
    detail = buf;
    return loss_ok && hr_ok && dt < 1800.0;
}

// ---------------------------------------------------------------------------
// 8. Ingestion fidelity: exact ML-1M counts (needs the dataset file).
// ---------------------------------------------------------------------------
bool criterion_8(const std::string& path, std::string& detail) {
    Dataset d = load_dataset(path, DatasetFormat::MovieLens1M, 5);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "users %lld (want 6041), items %lld (want 3417), reviews %lld (want 999611)",
                  static_cast<long long>(d.user_slots()), static_cast<long long>(d.item_slots()),
                  static_cast<long long>(d.review_count()));
    detail = buf;
    return d.user_slots() == 6041 && d.item_slots() == 3417 && d.review_count() == 999611;
}

struct Outcome {
    int passed = 0, failed = 0, skipped = 0;
    void report(int id, const char* title, int status, const std::string& detail) {
        const char* tag = status > 0 ? "PASS" : (status < 0 ? "FAIL" : "SKIP");
        std::printf("criterion %2d %s  %s: %s\n", id, tag, title, detail.c_str());
        std::fflush(stdout);
        (status > 0 ? passed : (status < 0 ? failed : skipped))++;
    }
    void run(int id, const char* title, const std::function<bool(std::string&)>& fn) {
        std::string detail;
        bool ok = false;
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("unexpected exception: ") + e.what();
        }
        report(id, title, ok ? 1 : -1, detail);
    }
};

}  // namespace

int main(int argc, char** argv) {
    bool run_core = true, run_data = true;
    std::string data_dir = "data";
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--skip-datasets")
            run_data = false;
        else if (a == "--only-datasets")
            run_core = false;
        else if (a == "--data-dir" && i + 1 < argc)
            data_dir = argv[++i];
        else if (a.rfind("--data-dir=", 0) == 0)
            data_dir = a.substr(11);
        else {
            std::fprintf(stderr, "unknown argument: %s\n", a.c_str());
            return 1;
        }
    }

    Outcome out;
    if (run_core) {
        out.run(1, "gradient correctness", criterion_1);
        out.run(2, "scan oracle equivalence", criterion_2);
        out.run(3, "USGM mechanics", criterion_3);
        out.run(4, "WLS recovery", criterion_4);
        out.run(5, "controller behavior", criterion_5);
        out.run(6, "ORPO gradient identity", criterion_6);
        out.run(9, "metrics correctness", criterion_9);
        out.run(10, "latency harness calibration", criterion_10);
        out.run(11, "determinism", criterion_11);
    }

    int data_attempted = 0;
    if (run_data) {
        const std::string ml100k = data_dir + "/ml-100k/u.data";
        const std::string ml1m = data_dir + "/ml-1m/ratings.dat";
        if (fs::exists(ml100k)) {
            ++data_attempted;
            out.run(7, "end-to-end optimizer comparison",
                    [&](std::string& d) { return criterion_7(ml100k, d); });
        } else {
            out.report(7, "end-to-end optimizer comparison", 0, "missing " + ml100k);
        }
        if (fs::exists(ml1m)) {
            ++data_attempted;
            out.run(8, "ingestion fidelity",
                    [&](std::string& d) { return criterion_8(ml1m, d); });
        } else {
            out.report(8, "ingestion fidelity", 0, "missing " + ml1m);
        }
    }

    std::printf("%d passed, %d failed, %d skipped\n", out.passed, out.failed, out.skipped);
    if (out.failed > 0) return 1;
    if (!run_core && run_data && data_attempted == 0) return 77;
    return 0;
}
