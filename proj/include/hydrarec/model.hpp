#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hydrarec/graph.hpp"

namespace hydrarec {

// Learnable pieces of one selective-scan direction.
// a_log {N} parameterizes the diagonal continuous state matrix as -exp(a_log);
// delta_w {D,1} + delta_b {1} produce the step size through softplus.
struct SsmLayerParams {
    Tensor a_log;
    Tensor delta_w, delta_b;
    Tensor b_proj, c_proj;    // {D,N} each
    Tensor in_proj, out_proj;  // {D,D} each
};

struct PffnParams {
    Tensor w1;  // {D,4D}
    Tensor b1;  // {4D}
    Tensor w2;  // {4D,D}
    Tensor b2;  // {D}
};

struct HydraLayerParams {
    SsmLayerParams forward, backward;
    PffnParams pffn;
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;  // {D} each
};

struct ModelConfig {
    int64_t vocab = 0;  // includes padding id 0
    int64_t d_model = 64;
    int64_t n_state = 16;
    int n_layers = 2;
    int64_t max_len = 50;
};

struct ModelParams {
    ModelConfig cfg;
    Tensor embedding;  // {vocab, d_model}, tied with the prediction head
    std::vector<HydraLayerParams> layers;

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);

    // Stable (module, name) enumeration; defines flattening and checkpoint order.
    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;

    int64_t param_count() const;
    int64_t param_count_excluding_embedding() const;

    std::vector<double> flatten() const;
    void unflatten(const std::vector<double>& flat);

    void save(const std::string& path) const;  // bit-exact round trip
    static ModelParams load(const std::string& path);
};

// Graph-bound handles for one forward pass.
struct SsmLayerVars {
    Var a_log, delta_w, delta_b, b_proj, c_proj, in_proj, out_proj;
};
struct PffnVars {
    Var w1, b1, w2, b2;
};
struct HydraLayerVars {
    SsmLayerVars forward, backward;
    PffnVars pffn;
    Var ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
};
struct ModelVars {
    Var embedding;
    std::vector<HydraLayerVars> layers;
    std::vector<Var> ordered;  // same order as ModelParams::named_params
};

ModelVars bind_model(Graph& g, const ModelParams& p);

// Rebuild the ModelVars structure from leaves given in named_params order.
ModelVars assemble_model_vars(const ModelConfig& cfg, const std::vector<Var>& ordered);

// ZOH for A, Euler for B: A_bar[t] = exp(delta[t] * (-exp(a_log))),
// B_bar[t] = delta[t] * b_cont[t]. delta {T}, a_log {N}, b_cont {T,N}.
std::pair<Tensor, Tensor> discretize(const Tensor& delta, const Tensor& a_log,
                                     const Tensor& b_cont);

// Sequential left-to-right selective scan over x {T,D}.
Var selective_scan(Graph& g, Var x, const SsmLayerVars& p);

Var pffn(Graph& g, Var h, const PffnVars& p);

// LayerNorm(H + PFFN(LayerNorm(H + fwd(H) + rev(bwd(rev(H))))))
Var hydra_layer(Graph& g, Var h, const HydraLayerVars& p);

Var predict_scores(Graph& g, Var h_last, Var embedding);  // softmax(h E^T)

// Log-probabilities over the vocabulary for the next item after `items`.
// Leading padding (id 0) is stripped; the sequence is truncated to the last
// cfg.max_len real items.
Var model_log_probs(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                    const std::vector<int64_t>& items);

// Convenience: probability vector over the vocabulary on a fresh graph.
Tensor model_forward(const ModelParams& p, const std::vector<int64_t>& items);

// -log P(target | items), built on the caller's graph.
Var next_item_nll(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                  const std::vector<int64_t>& items, int64_t target);

// Mean next-item NLL over every position of the sequence: position t is
// predicted from the prefix ending at t-1, in one forward pass. The sequence
// is truncated to the last max_len + 1 items; needs >= 2 real items.
Var sequence_nll(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                 const std::vector<int64_t>& items);

}  // namespace hydrarec
