#include "hydrarec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "hydrarec/batching.hpp"
#include "hydrarec/optim.hpp"
#include "hydrarec/orpo.hpp"

namespace hydrarec {

namespace {

struct Corpus {
    Dataset data;
    Split split;
    ModelConfig mc;
    std::vector<std::vector<int64_t>> train_seqs;  // users with >= 2 train items
};

Corpus load_corpus(const TrainConfig& cfg) {
    Corpus c;
    c.data = load_dataset(cfg.dataset, dataset_format_from_string(cfg.format),
                          cfg.min_item_count);
    c.split = leave_one_out_split(c.data, cfg.min_length);
    if (c.split.users.empty())
        throw std::runtime_error("no users survive the leave-one-out split");
    c.mc.vocab = c.split.n_items + 1;
    c.mc.d_model = cfg.d_model;
    c.mc.n_state = cfg.n_state;
    c.mc.n_layers = cfg.layers;
    c.mc.max_len = cfg.max_len;
    for (const auto& u : c.split.users)
        if (u.train_items.size() >= 2) c.train_seqs.push_back(u.train_items);
    if (c.train_seqs.empty())
        throw std::runtime_error("no user has enough history to form a training sequence");
    return c;
}

std::string csv_num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Mean sequence loss and flat gradient over one macro-batch, one example
// graph at a time to bound peak memory.
double batch_grad(ModelParams& p, const Corpus& c, const std::vector<double>& x,
                  const std::vector<int64_t>& idx, std::vector<double>& grad_out) {
    p.unflatten(x);
    grad_out.assign(x.size(), 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (int64_t i : idx) {
        Graph g;
        ModelVars m = bind_model(g, p);
        Var l = sequence_nll(g, m, c.mc, c.train_seqs[static_cast<size_t>(i)]);
        loss += g.val(l).item() * inv;
        GradientMap grads = g.backward(l, m.ordered);
        size_t off = 0;
        for (const Var& v : m.ordered) {
            const Tensor& gt = grads.at(v.id);
            for (size_t j = 0; j < gt.v.size(); ++j) grad_out[off + j] += gt.v[j] * inv;
            off += gt.v.size();
        }
    }
    return loss;
}

MetricsReport finish_run(const TrainConfig& cfg, ModelParams& p, const Corpus& c,
                         TrainResult& result, const std::string& model_tag) {
    result.test = evaluate(model_scorer(p), c.split, cfg.eval_k, true);

    MetricsReport rep;
    rep.eval = result.test;
    rep.model_tag = model_tag;
    rep.param_count = p.param_count();
    rep.param_count_no_embedding = p.param_count_excluding_embedding();
    if (cfg.bench) {
        const Scorer scorer = model_scorer(p);
        const auto& users = c.split.users;
        UserTimer timer = [&](int64_t ui) {
            const auto& u = users[static_cast<size_t>(ui)];
            std::vector<int64_t> history = u.train_items;
            history.push_back(u.valid_target);
            const auto t0 = std::chrono::steady_clock::now();
            scorer(history);
            const auto t1 = std::chrono::steady_clock::now();
            return std::chrono::duration<double>(t1 - t0).count();
        };
        rep.latency = latency_bootstrap(static_cast<int64_t>(users.size()), timer, cfg.seed);
    }

    namespace fs = std::filesystem;
    result.checkpoint_path = (fs::path(cfg.out_dir) / "checkpoint.txt").string();
    result.report_path = (fs::path(cfg.out_dir) / "report.json").string();
    p.save(result.checkpoint_path);
    std::ofstream rf(result.report_path);
    rf << rep.to_json();
    if (!rf) throw std::runtime_error("failed writing report: " + result.report_path);
    return rep;
}

}  // namespace

Scorer model_scorer(const ModelParams& p) {
    return [&p](const std::vector<int64_t>& history) {
        const Tensor probs = model_forward(p, history);
        return probs.v;
    };
}

TrainResult train(const TrainConfig& cfg) {
    Corpus c = load_corpus(cfg);
    ModelParams p = ModelParams::init(c.mc, cfg.seed);
    std::vector<double> x = p.flatten();

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    TrainResult result;
    result.optimizer_trace_path = (fs::path(cfg.out_dir) / "optimizer_trace.csv").string();
    result.controller_trace_path = (fs::path(cfg.out_dir) / "controller_trace.csv").string();
    std::ofstream ot(result.optimizer_trace_path);
    ot << "step,epoch_x,batch_size,loss,beta_hat,H,r\n";
    std::ofstream ct(result.controller_trace_path);
    ct << "step,B,c1,c2,plateaued,B_star,epoch\n";

    const int64_t n_train = static_cast<int64_t>(c.train_seqs.size());
    MacroBatchLoader loader(n_train, std::min(cfg.b0, n_train), cfg.seed);

    const bool usgm = cfg.optimizer == "usgm-adaptive" || cfg.optimizer == "usgm-fixed";
    const bool adaptive = cfg.optimizer == "usgm-adaptive";

    BatchControllerState ctrl = make_controller({cfg.b0, cfg.alpha, cfg.lambda, cfg.tau, true});
    UsgmState us;
    AdamState adam = adam_init(x.size(), cfg.lr);
    std::vector<double> grad(x.size(), 0.0);

    int64_t step = 0;
    int64_t samples = 0;
    bool usgm_primed = false;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        loader.start_epoch(epoch);
        double epoch_loss = 0.0;
        int64_t epoch_steps = 0;
        if (adaptive && epoch > 0) epoch_reset(ctrl);

        while (!loader.exhausted()) {
            const int64_t want = adaptive ? ctrl.b : cfg.b0;
            bool ended = false;
            const std::vector<int64_t> idx = loader.next_macrobatch(want, &ended);
            const bool full = static_cast<int64_t>(idx.size()) == want;

            if (usgm && !usgm_primed) {
                // the priming oracle call of the method consumes one batch
                GradOracle oracle = [&](const std::vector<double>& xx) {
                    std::vector<double> gg;
                    const double l = batch_grad(p, c, xx, idx, gg);
                    return StochGrad{std::move(gg), l, static_cast<int64_t>(idx.size())};
                };
                us = usgm_init(x, cfg.diameter, cfg.lr, oracle);
                x = us.x;
                usgm_primed = true;
                samples += static_cast<int64_t>(idx.size());
                continue;
            }

            ++step;
            double loss;
            double beta = 0.0, H = 0.0, r = 0.0;
            if (usgm) {
                GradOracle oracle = [&](const std::vector<double>& xx) {
                    std::vector<double> gg;
                    const double l = batch_grad(p, c, xx, idx, gg);
                    return StochGrad{std::move(gg), l, static_cast<int64_t>(idx.size())};
                };
                UsgmStepInfo info = usgm_step(us, oracle);
                x = us.x;
                loss = info.loss;
                beta = info.beta_hat;
                H = info.H;
                r = info.r;
                if (adaptive) {
                    if (full && r > 0.0) controller_observe(ctrl, {want, beta, step});
                    decide_batch(ctrl);
                    ct << step << ',' << want << ',' << csv_num(ctrl.have_fit ? ctrl.fit.c1 : 0.0)
                       << ',' << csv_num(ctrl.have_fit ? ctrl.fit.c2 : 0.0) << ','
                       << (ctrl.plateaued ? 1 : 0) << ',' << ctrl.b_star << ',' << epoch << '\n';
                }
            } else {
                loss = batch_grad(p, c, x, idx, grad);
                if (cfg.optimizer == "adam")
                    adam_step(adam, x, grad);
                else
                    sgd_step(x, grad, cfg.lr);
            }

            samples += static_cast<int64_t>(idx.size());
            epoch_loss += loss;
            ++epoch_steps;
            ot << step << ',' << csv_num(scaled_epoch_axis(samples, n_train)) << ','
               << idx.size() << ',' << csv_num(loss) << ',' << csv_num(beta) << ','
               << csv_num(H) << ',' << csv_num(r) << '\n';
        }

        p.unflatten(x);
        result.valid = evaluate(model_scorer(p), c.split, cfg.eval_k, false);
        if (epoch_steps > 0)
            result.final_train_loss = epoch_loss / static_cast<double>(epoch_steps);
    }
    if (!ot || !ct) throw std::runtime_error("failed writing trace files");
    ot.close();
    ct.close();

    p.unflatten(x);
    result.report = finish_run(cfg, p, c, result, cfg.optimizer);
    return result;
}

TrainResult orpo_train(const TrainConfig& cfg) {
    Corpus c = load_corpus(cfg);
    ModelParams p = cfg.init_checkpoint.empty() ? ModelParams::init(c.mc, cfg.seed)
                                                : ModelParams::load(cfg.init_checkpoint);
    if (p.cfg.vocab != c.mc.vocab)
        throw std::runtime_error("init_checkpoint vocabulary does not match the dataset");
    std::vector<double> x = p.flatten();

    PairMode mode = cfg.pair_mode == "rating-pairs"
                        ? PairMode::RatingPairs
                        : (cfg.pair_mode == "negative-sampled" ? PairMode::NegativeSampled
                                                               : PairMode::Both);
    std::vector<PreferencePair> pairs = build_preference_pairs(c.data, mode);
    std::erase_if(pairs, [](const PreferencePair& pr) { return pr.context.empty(); });
    if (pairs.empty()) throw std::runtime_error("no preference pairs could be built");

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    TrainResult result;
    result.optimizer_trace_path = (fs::path(cfg.out_dir) / "optimizer_trace.csv").string();
    result.controller_trace_path = (fs::path(cfg.out_dir) / "controller_trace.csv").string();
    std::ofstream ot(result.optimizer_trace_path);
    ot << "step,epoch_x,batch_size,loss,beta_hat,H,r\n";
    std::ofstream ct(result.controller_trace_path);  // not used by orpo-train
    ct << "step,B,c1,c2,plateaued,B_star,epoch\n";

    OrpoConfig ocfg{cfg.orpo_lambda, cfg.orpo_lr, cfg.orpo_warmup, cfg.orpo_epochs};
    const int64_t n_pairs = static_cast<int64_t>(pairs.size());
    MacroBatchLoader loader(n_pairs, std::min(cfg.b0, n_pairs), cfg.seed);

    int64_t step = 0, samples = 0;
    for (int epoch = 0; epoch < ocfg.epochs; ++epoch) {
        loader.start_epoch(epoch);
        double epoch_loss = 0.0;
        int64_t epoch_steps = 0;
        while (!loader.exhausted()) {
            bool ended = false;
            const std::vector<int64_t> idx = loader.next_macrobatch(cfg.b0, &ended);
            std::vector<PreferencePair> batch;
            batch.reserve(idx.size());
            for (int64_t i : idx) batch.push_back(pairs[static_cast<size_t>(i)]);

            ++step;
            p.unflatten(x);
            Graph g;
            ModelVars m = bind_model(g, p);
            Var loss = orpo_loss(g, m, c.mc, batch, ocfg.lambda);
            GradientMap grads = g.backward(loss, m.ordered);
            const double lr = orpo_lr_at(ocfg, step);
            size_t off = 0;
            for (const Var& v : m.ordered) {
                const Tensor& gt = grads.at(v.id);
                for (size_t j = 0; j < gt.v.size(); ++j) x[off + j] -= lr * gt.v[j];
                off += gt.v.size();
            }

            samples += static_cast<int64_t>(idx.size());
            epoch_loss += g.val(loss).item();
            ++epoch_steps;
            ot << step << ',' << csv_num(scaled_epoch_axis(samples, n_pairs)) << ','
               << idx.size() << ',' << csv_num(g.val(loss).item()) << ",0,0,0\n";
        }
        p.unflatten(x);
        result.valid = evaluate(model_scorer(p), c.split, cfg.eval_k, false);
        if (epoch_steps > 0)
            result.final_train_loss = epoch_loss / static_cast<double>(epoch_steps);
    }
    if (!ot) throw std::runtime_error("failed writing trace files");
    ot.close();
    ct.close();

    p.unflatten(x);
    result.report = finish_run(cfg, p, c, result, "orpo-" + cfg.pair_mode);
    return result;
}

}  // namespace hydrarec
