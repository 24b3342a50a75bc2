#pragma once

#include <string>

#include "hydrarec/config.hpp"
#include "hydrarec/metrics.hpp"
#include "hydrarec/model.hpp"

namespace hydrarec {

struct TrainResult {
    double final_train_loss = 0.0;  // mean step loss over the last epoch
    EvalResult valid;               // last-epoch validation metrics
    EvalResult test;
    MetricsReport report;
    std::string checkpoint_path;
    std::string optimizer_trace_path;
    std::string controller_trace_path;
    std::string report_path;
};

// Next-item training over the leave-one-out split. Writes, under out_dir:
// checkpoint.txt, optimizer_trace.csv, controller_trace.csv, report.json.
// Bit-deterministic for a fixed config and seed.
TrainResult train(const TrainConfig& cfg);

// ORPO fine-tuning on preference pairs built from the dataset; starts from
// init_checkpoint when given, otherwise from seed initialization.
TrainResult orpo_train(const TrainConfig& cfg);

// Scores over the dense vocabulary via a full model forward per user.
Scorer model_scorer(const ModelParams& p);

}  // namespace hydrarec
