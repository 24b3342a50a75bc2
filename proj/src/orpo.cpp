#include "hydrarec/orpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hydrarec {

namespace {

constexpr double kSaturation = 1e-12;

void check_unsaturated(double avg_logp, const char* who) {
    if (!(avg_logp < 0.0) || std::exp(avg_logp) >= 1.0 - kSaturation)
        throw std::domain_error(std::string(who) + ": probability saturated at 1");
}

}  // namespace

double orpo_lr_at(const OrpoConfig& cfg, int64_t step) {
    if (step < 1) throw std::invalid_argument("orpo_lr_at: step is 1-based");
    const double w = static_cast<double>(std::max(cfg.warmup_steps, 1));
    const double s = static_cast<double>(step);
    if (s <= w) return cfg.lr * s / w;
    return cfg.lr * std::sqrt(w / s);
}

double odds_from_avg_logp(double avg_logp) {
    check_unsaturated(avg_logp, "odds");
    const double p = std::exp(avg_logp);
    return p / (1.0 - p);
}

double log_odds_from_avg_logp(double avg_logp) {
    check_unsaturated(avg_logp, "log_odds");
    return avg_logp - std::log1p(-std::exp(avg_logp));
}

double or_loss_value(double avg_logp_w, double avg_logp_l) {
    const double z = log_odds_from_avg_logp(avg_logp_w) - log_odds_from_avg_logp(avg_logp_l);
    // -log sigmoid(z) = softplus(-z), stable on both tails
    if (-z > 30.0) return -z;
    return std::log1p(std::exp(-z));
}

Var avg_log_likelihood(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                       const std::vector<int64_t>& context,
                       const std::vector<int64_t>& targets) {
    if (targets.empty()) throw std::invalid_argument("avg_log_likelihood: empty targets");
    std::vector<int64_t> items = context;
    Var acc;
    for (size_t j = 0; j < targets.size(); ++j) {
        Var lp = g.pick(model_log_probs(g, m, cfg, items), targets[j]);
        acc = j == 0 ? lp : g.add(acc, lp);
        items.push_back(targets[j]);
    }
    return g.scale(acc, 1.0 / static_cast<double>(targets.size()));
}

Var log_odds(Graph& g, Var avg_logp) {
    check_unsaturated(g.val(avg_logp).item(), "log_odds");
    // logp - log(1 - exp(logp))
    Var one_minus_p = g.add_const(g.neg(g.exp(avg_logp)), 1.0);
    return g.sub(avg_logp, g.log(one_minus_p));
}

Var or_loss(Graph& g, Var avg_logp_w, Var avg_logp_l) {
    Var z = g.sub(log_odds(g, avg_logp_w), log_odds(g, avg_logp_l));
    return g.softplus(g.neg(z));
}

Var orpo_loss(Graph& g, const ModelVars& m, const ModelConfig& cfg,
              const std::vector<PreferencePair>& batch, double lambda) {
    if (batch.empty()) throw std::invalid_argument("orpo_loss: empty batch");
    if (lambda < 0.0) throw std::invalid_argument("orpo_loss: lambda must be >= 0");
    Var acc;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& pr = batch[i];
        Var lw = avg_log_likelihood(g, m, cfg, pr.context, {pr.winner});
        Var ll = avg_log_likelihood(g, m, cfg, pr.context, {pr.loser});
        Var term = g.neg(lw);  // SFT: winner NLL
        if (lambda > 0.0) term = g.add(term, g.scale(or_loss(g, lw, ll), lambda));
        acc = i == 0 ? term : g.add(acc, term);
    }
    return g.scale(acc, 1.0 / static_cast<double>(batch.size()));
}

double or_gradient_identity_check(const ModelParams& p, const PreferencePair& pair,
                                  double fd_step) {
    const ModelConfig cfg = p.cfg;
    std::vector<Tensor> leaves;
    for (const auto& [name, t] : p.named_params()) leaves.push_back(*t);

    auto build = [&](Graph& g, const std::vector<Var>& vars) {
        ModelVars m = assemble_model_vars(cfg, vars);
        Var lw = avg_log_likelihood(g, m, cfg, pair.context, {pair.winner});
        Var ll = avg_log_likelihood(g, m, cfg, pair.context, {pair.loser});
        return or_loss(g, lw, ll);
    };

    // (a) autodiff of the OR loss vs (c) central finite differences
    const double ad_vs_fd = finite_diff_check(build, leaves, fd_step);

    // (b) the analytic product: grad = -delta(d) * h(d) with
    // delta = [1 + odds_w/odds_l]^-1 and
    // h = grad log P_w / (1 - P_w) - grad log P_l / (1 - P_l),
    // assembled from autodiff gradients of the two log-likelihoods only.
    Graph g;
    std::vector<Var> vars;
    for (const auto& t : leaves) vars.push_back(g.input(t));
    ModelVars m = assemble_model_vars(cfg, vars);
    Var lw = avg_log_likelihood(g, m, cfg, pair.context, {pair.winner});
    Var ll = avg_log_likelihood(g, m, cfg, pair.context, {pair.loser});
    Var loss = or_loss(g, lw, ll);
    GradientMap auto_grad = g.backward(loss, vars);
    GradientMap grad_w = g.backward(lw, vars);
    GradientMap grad_l = g.backward(ll, vars);

    const double pw = std::exp(g.val(lw).item());
    const double pl = std::exp(g.val(ll).item());
    const double log_or =
        log_odds_from_avg_logp(g.val(lw).item()) - log_odds_from_avg_logp(g.val(ll).item());
    const double delta = 1.0 / (1.0 + std::exp(log_or));

    double ad_vs_analytic = 0.0;
    for (const Var& v : vars) {
        const Tensor& ga = auto_grad.at(v.id);
        const Tensor& gw = grad_w.at(v.id);
        const Tensor& gl = grad_l.at(v.id);
        for (size_t i = 0; i < ga.v.size(); ++i) {
            const double h = gw.v[i] / (1.0 - pw) - gl.v[i] / (1.0 - pl);
            const double analytic = -delta * h;
            const double err = std::abs(ga.v[i] - analytic) / std::max(1.0, std::abs(analytic));
            ad_vs_analytic = std::max(ad_vs_analytic, err);
        }
    }
    return std::max(ad_vs_fd, ad_vs_analytic);
}

namespace {

// Co-occurrence-weighted popularity: score(i | history) = sum over history
// items j of the number of users who interacted with both i and j.
struct CoocSampler {
    int64_t n_items;
    std::vector<uint32_t> cooc;  // (n_items+1)^2, row-major

    explicit CoocSampler(const Dataset& data) : n_items(data.n_items) {
        const size_t side = static_cast<size_t>(n_items) + 1;
        cooc.assign(side * side, 0);
        for (const auto& u : data.users) {
            std::vector<int64_t> uniq;
            uniq.reserve(u.events.size());
            for (const auto& ev : u.events) uniq.push_back(ev.item);
            std::sort(uniq.begin(), uniq.end());
            uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
            for (int64_t a : uniq)
                for (int64_t b : uniq)
                    ++cooc[static_cast<size_t>(a) * side + static_cast<size_t>(b)];
        }
    }

    // Lowest-scored item not in the history; ties toward the smaller id.
    // Returns 0 when every item is in the history.
    int64_t worst_unseen(const std::vector<int64_t>& history) const {
        const size_t side = static_cast<size_t>(n_items) + 1;
        std::unordered_set<int64_t> seen(history.begin(), history.end());
        int64_t best = 0;
        uint64_t best_score = 0;
        for (int64_t i = 1; i <= n_items; ++i) {
            if (seen.count(i)) continue;
            uint64_t score = 0;
            for (int64_t j : history) score += cooc[static_cast<size_t>(i) * side + static_cast<size_t>(j)];
            if (best == 0 || score < best_score) {
                best = i;
                best_score = score;
            }
        }
        return best;
    }
};

}  // namespace

std::vector<PreferencePair> build_preference_pairs(const Dataset& data, PairMode mode,
                                                   PairBuildReport* report) {
    PairBuildReport local;
    PairBuildReport& rep = report ? *report : local;
    rep = PairBuildReport{};

    const bool want_rating = mode != PairMode::NegativeSampled;
    const bool want_sampled = mode != PairMode::RatingPairs;
    std::unique_ptr<CoocSampler> sampler;
    if (want_sampled) sampler = std::make_unique<CoocSampler>(data);

    std::vector<PreferencePair> out;
    for (const auto& u : data.users) {
        const size_t n = u.events.size();
        if (n < 3) {
            ++rep.skipped_short;
            continue;
        }
        if (want_rating) {
            const Interaction& a = u.events[n - 2];
            const Interaction& b = u.events[n - 1];
            if (a.rating == b.rating) {
                ++rep.skipped_tie;
            } else {
                PreferencePair pr;
                pr.user = u.user;
                for (size_t i = 0; i + 2 < n; ++i) pr.context.push_back(u.events[i].item);
                pr.winner = a.rating > b.rating ? a.item : b.item;
                pr.loser = a.rating > b.rating ? b.item : a.item;
                pr.source = PairSource::RatingPair;
                out.push_back(std::move(pr));
            }
        }
        if (want_sampled) {
            std::vector<int64_t> history;
            for (size_t i = 0; i + 1 < n; ++i) history.push_back(u.events[i].item);
            std::vector<int64_t> full = history;
            full.push_back(u.events[n - 1].item);
            const int64_t loser = sampler->worst_unseen(full);
            if (loser == 0) {
                ++rep.skipped_no_candidate;
            } else {
                PreferencePair pr;
                pr.user = u.user;
                pr.context = std::move(history);
                pr.winner = u.events[n - 1].item;
                pr.loser = loser;
                pr.source = PairSource::NegativeSampled;
                out.push_back(std::move(pr));
            }
        }
    }
    rep.rating_pairs = static_cast<int64_t>(
        std::count_if(out.begin(), out.end(),
                      [](const PreferencePair& p) { return p.source == PairSource::RatingPair; }));
    rep.negative_sampled = static_cast<int64_t>(out.size()) - rep.rating_pairs;
    return out;
}

void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open pair file for writing: " + path);
    for (const auto& p : pairs) {
        out << p.user << '\t';
        for (size_t i = 0; i < p.context.size(); ++i)
            out << (i ? " " : "") << p.context[i];
        out << '\t' << p.winner << '\t' << p.loser << '\t'
            << (p.source == PairSource::RatingPair ? "rating-pair" : "negative-sampled")
            << '\n';
    }
    if (!out) throw std::runtime_error("failed writing pair file: " + path);
}

std::vector<PreferencePair> load_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pair file: " + path);
    std::vector<PreferencePair> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string user, ctx, winner, loser, tag;
        if (!std::getline(fields, user, '\t') || !std::getline(fields, ctx, '\t') ||
            !std::getline(fields, winner, '\t') || !std::getline(fields, loser, '\t') ||
            !std::getline(fields, tag, '\t'))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed pair record");
        PreferencePair p;
        try {
            p.user = std::stoll(user);
            std::istringstream cs(ctx);
            int64_t item;
            while (cs >> item) p.context.push_back(item);
            p.winner = std::stoll(winner);
            p.loser = std::stoll(loser);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed pair record");
        }
        if (tag == "rating-pair")
            p.source = PairSource::RatingPair;
        else if (tag == "negative-sampled")
            p.source = PairSource::NegativeSampled;
        else
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": unknown source tag " + tag);
        if (p.context.empty() || p.winner == p.loser)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": invalid pair");
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace hydrarec
