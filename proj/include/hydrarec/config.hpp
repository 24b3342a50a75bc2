#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hydrarec {

// Flat key=value text; '#' starts a comment, blank lines ignored.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_file(const std::string& path);

// Applies --key=value flags on top of the file values. Malformed flags throw.
void apply_overrides(ConfigMap& cfg, const std::vector<std::string>& args);

struct TrainConfig {
    // data
    std::string dataset;                    // required path
    std::string format = "movielens-100k";  // movielens-100k | movielens-1m | amazon-csv
    int min_item_count = 5;
    int min_length = 3;

    // model
    int64_t d_model = 64;
    int64_t n_state = 16;
    int layers = 2;
    int64_t max_len = 50;

    // optimization
    std::string optimizer = "usgm-adaptive";  // usgm-adaptive | usgm-fixed | adam | sgd
    int epochs = 10;
    double lr = 1e-3;        // adam/sgd step; usgm eta0
    double diameter = 10.0;  // usgm D
    int64_t b0 = 32;
    double alpha = 0.01;  // controller forgetting
    double lambda = 2.0;  // controller epoch shrink
    double tau = 0.1;     // controller plateau tolerance

    // orpo-train
    double orpo_lambda = 0.05;
    double orpo_lr = 5e-6;
    int orpo_warmup = 100;
    int orpo_epochs = 5;
    std::string pair_mode = "both";  // rating-pairs | negative-sampled | both
    std::string init_checkpoint;     // optional warm start for orpo-train

    // bookkeeping
    uint64_t seed = 1;
    int eval_k = 10;
    bool bench = false;  // run the latency bootstrap after training
    std::string out_dir = "run";
};

// Converts and validates; every problem is reported in one exception message.
TrainConfig make_train_config(const ConfigMap& m);

}  // namespace hydrarec
