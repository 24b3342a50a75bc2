#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hydrarec/config.hpp"
#include "hydrarec/data.hpp"
#include "hydrarec/graph.hpp"
#include "hydrarec/metrics.hpp"
#include "hydrarec/model.hpp"
#include "hydrarec/orpo.hpp"
#include "hydrarec/train.hpp"

using namespace hydrarec;

namespace {

TrainConfig config_from(const std::string& path, const std::vector<std::string>& extras) {
    ConfigMap m = parse_config_file(path);
    apply_overrides(m, extras);
    return make_train_config(m);
}

Split split_for(const TrainConfig& cfg, Dataset* data_out = nullptr) {
    Dataset d = load_dataset(cfg.dataset, dataset_format_from_string(cfg.format),
                             cfg.min_item_count);
    Split s = leave_one_out_split(d, cfg.min_length);
    if (data_out) *data_out = std::move(d);
    return s;
}

int run_train(const std::string& config_path, const std::vector<std::string>& extras,
              bool orpo) {
    const TrainConfig cfg = config_from(config_path, extras);
    const TrainResult r = orpo ? orpo_train(cfg) : train(cfg);
    std::cout << r.report.to_json();
    std::cout << "checkpoint=" << r.checkpoint_path << "\n";
    std::cout << "final_train_loss=" << r.final_train_loss << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dataset,
             const std::string& format, int k, int min_item_count, int min_length) {
    TrainConfig cfg;
    cfg.dataset = dataset;
    cfg.format = format;
    cfg.min_item_count = min_item_count;
    cfg.min_length = min_length;
    const Split split = split_for(cfg);
    ModelParams p = ModelParams::load(checkpoint);
    if (p.cfg.vocab != split.n_items + 1)
        throw std::runtime_error("checkpoint vocabulary does not match the dataset");
    MetricsReport rep;
    rep.eval = evaluate(model_scorer(p), split, k, true);
    rep.model_tag = checkpoint;
    rep.param_count = p.param_count();
    rep.param_count_no_embedding = p.param_count_excluding_embedding();
    std::cout << rep.to_json();
    return 0;
}

int run_bench(const std::string& checkpoint, const std::string& dataset,
              const std::string& format, int n_samples, int64_t sample_size, uint64_t seed,
              int min_item_count, int min_length) {
    TrainConfig cfg;
    cfg.dataset = dataset;
    cfg.format = format;
    cfg.min_item_count = min_item_count;
    cfg.min_length = min_length;
    const Split split = split_for(cfg);
    ModelParams p = ModelParams::load(checkpoint);
    if (p.cfg.vocab != split.n_items + 1)
        throw std::runtime_error("checkpoint vocabulary does not match the dataset");
    const Scorer scorer = model_scorer(p);
    UserTimer timer = [&](int64_t ui) {
        const auto& u = split.users[static_cast<size_t>(ui)];
        std::vector<int64_t> history = u.train_items;
        history.push_back(u.valid_target);
        const auto t0 = std::chrono::steady_clock::now();
        scorer(history);
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(t1 - t0).count();
    };
    const LatencyResult r = latency_bootstrap(static_cast<int64_t>(split.users.size()), timer,
                                              seed, n_samples, sample_size);
    nlohmann::ordered_json j;
    j["latency_mean_s"] = r.mean;
    j["latency_ci"] = {r.ci_low, r.ci_high};
    j["samples_kept"] = r.n_kept;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_pairs(const std::string& dataset, const std::string& out, const std::string& format,
              const std::string& mode, int min_item_count) {
    Dataset d = load_dataset(dataset, dataset_format_from_string(format), min_item_count);
    PairMode pm = mode == "rating-pairs"
                      ? PairMode::RatingPairs
                      : (mode == "negative-sampled" ? PairMode::NegativeSampled : PairMode::Both);
    if (mode != "rating-pairs" && mode != "negative-sampled" && mode != "both")
        throw std::invalid_argument("mode must be rating-pairs, negative-sampled, or both");
    PairBuildReport rep;
    const auto pairs = build_preference_pairs(d, pm, &rep);
    save_pairs(pairs, out);
    std::cout << "pairs=" << pairs.size() << " rating_pairs=" << rep.rating_pairs
              << " negative_sampled=" << rep.negative_sampled
              << " skipped_short=" << rep.skipped_short << " skipped_tie=" << rep.skipped_tie
              << " skipped_no_candidate=" << rep.skipped_no_candidate << "\n";
    return 0;
}

int run_ingest(const std::string& dataset, const std::string& format, int min_item_count) {
    Dataset d = load_dataset(dataset, dataset_format_from_string(format), min_item_count);
    std::cout << "users=" << d.user_slots() << " items=" << d.item_slots()
              << " reviews=" << d.review_count() << "\n";
    return 0;
}

int run_grad_check() {
    // full tiny model against central finite differences
    ModelConfig mc;
    mc.vocab = 5;
    mc.d_model = 3;
    mc.n_state = 2;
    mc.n_layers = 1;
    mc.max_len = 8;
    double worst_model = 0.0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        ModelParams p = ModelParams::init(mc, seed);
        std::vector<Tensor> leaves;
        for (const auto& [name, t] : p.named_params()) leaves.push_back(*t);
        const double err = finite_diff_check(
            [&](Graph& g, const std::vector<Var>& vars) {
                ModelVars m = assemble_model_vars(mc, vars);
                return next_item_nll(g, m, mc, {1, 2, 3}, 4);
            },
            leaves, 1e-5);
        worst_model = std::max(worst_model, err);
    }
    std::cout << "model_fd_max_rel_err=" << worst_model << "\n";

    // ORPO gradient identity, three-way
    double worst_orpo = 0.0;
    const PreferencePair pair{1, {1, 2}, 3, 4, PairSource::RatingPair};
    for (uint64_t seed = 11; seed <= 15; ++seed) {
        ModelParams p = ModelParams::init(mc, seed);
        worst_orpo = std::max(worst_orpo, or_gradient_identity_check(p, pair));
    }
    std::cout << "orpo_identity_max_rel_err=" << worst_orpo << "\n";

    if (worst_model >= 1e-4 || worst_orpo >= 1e-6)
        throw std::runtime_error("gradient check exceeded tolerance");
    std::cout << "grad-check: ok\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hydrarec: sequential recommendation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train_cmd = app.add_subcommand("train", "run the training driver");
    train_cmd->add_option("config", config_path, "flat key=value config file")->required();
    train_cmd->allow_extras();

    std::string orpo_config_path;
    auto* orpo_cmd = app.add_subcommand("orpo-train", "ORPO fine-tuning on preference pairs");
    orpo_cmd->add_option("config", orpo_config_path, "flat key=value config file")->required();
    orpo_cmd->allow_extras();

    std::string eval_ckpt, eval_data, eval_format = "movielens-100k";
    int eval_k = 10, eval_minitem = 5, eval_minlen = 3;
    auto* eval_cmd = app.add_subcommand("eval", "ranking metrics on the test split");
    eval_cmd->add_option("checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("dataset", eval_data)->required();
    eval_cmd->add_option("--format", eval_format);
    eval_cmd->add_option("--k", eval_k);
    eval_cmd->add_option("--min-item-count", eval_minitem);
    eval_cmd->add_option("--min-length", eval_minlen);

    std::string bench_ckpt, bench_data, bench_format = "movielens-100k";
    int bench_samples = 30, bench_minitem = 5, bench_minlen = 3;
    int64_t bench_size = 1500;
    uint64_t bench_seed = 1;
    auto* bench_cmd = app.add_subcommand("bench", "bootstrap latency harness");
    bench_cmd->add_option("checkpoint", bench_ckpt)->required();
    bench_cmd->add_option("dataset", bench_data)->required();
    bench_cmd->add_option("--format", bench_format);
    bench_cmd->add_option("--samples", bench_samples);
    bench_cmd->add_option("--sample-size", bench_size);
    bench_cmd->add_option("--seed", bench_seed);
    bench_cmd->add_option("--min-item-count", bench_minitem);
    bench_cmd->add_option("--min-length", bench_minlen);

    std::string pairs_data, pairs_out, pairs_format = "movielens-100k", pairs_mode = "both";
    int pairs_minitem = 5;
    auto* pairs_cmd = app.add_subcommand("pairs", "construct ORPO preference pairs");
    pairs_cmd->add_option("dataset", pairs_data)->required();
    pairs_cmd->add_option("out", pairs_out)->required();
    pairs_cmd->add_option("--format", pairs_format);
    pairs_cmd->add_option("--mode", pairs_mode);
    pairs_cmd->add_option("--min-item-count", pairs_minitem);

    std::string ingest_data, ingest_format = "movielens-100k";
    int ingest_minitem = 5;
    auto* ingest_cmd = app.add_subcommand("ingest", "print dataset summary counts");
    ingest_cmd->add_option("dataset", ingest_data)->required();
    ingest_cmd->add_option("--format", ingest_format);
    ingest_cmd->add_option("--min-item-count", ingest_minitem);

    auto* grad_cmd = app.add_subcommand("grad-check", "run the finite-difference suites");
    (void)grad_cmd;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: usage: " << e.what() << "\n";
        return 1;
    }

    try {
        if (train_cmd->parsed()) return run_train(config_path, train_cmd->remaining(), false);
        if (orpo_cmd->parsed())
            return run_train(orpo_config_path, orpo_cmd->remaining(), true);
        if (eval_cmd->parsed())
            return run_eval(eval_ckpt, eval_data, eval_format, eval_k, eval_minitem,
                            eval_minlen);
        if (bench_cmd->parsed())
            return run_bench(bench_ckpt, bench_data, bench_format, bench_samples, bench_size,
                             bench_seed, bench_minitem, bench_minlen);
        if (pairs_cmd->parsed())
            return run_pairs(pairs_data, pairs_out, pairs_format, pairs_mode, pairs_minitem);
        if (ingest_cmd->parsed()) return run_ingest(ingest_data, ingest_format, ingest_minitem);
        if (grad_cmd->parsed()) return run_grad_check();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: validation: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
