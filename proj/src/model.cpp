#include "hydrarec/model.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace hydrarec {

namespace {

Tensor normal_tensor(Shape s, std::mt19937_64& rng, double stddev) {
    Tensor t(std::move(s));
    std::normal_distribution<double> n(0.0, stddev);
    for (auto& x : t.v) x = n(rng);
    return t;
}

SsmLayerParams init_ssm(const ModelConfig& c, std::mt19937_64& rng) {
    SsmLayerParams p;
    const int64_t D = c.d_model, N = c.n_state;
    // A° spans [-1, -N]: a_log[i] = log(1 + i), the S4D-style real init
    p.a_log = Tensor({N});
    for (int64_t i = 0; i < N; ++i) p.a_log.v[i] = std::log(1.0 + static_cast<double>(i));
    p.delta_w = normal_tensor({D, 1}, rng, 0.02);
    p.delta_b = Tensor({1});
    p.b_proj = normal_tensor({D, N}, rng, 0.02);
    p.c_proj = normal_tensor({D, N}, rng, 0.02);
    p.in_proj = normal_tensor({D, D}, rng, 0.02);
    p.out_proj = normal_tensor({D, D}, rng, 0.02);
    return p;
}

PffnParams init_pffn(const ModelConfig& c, std::mt19937_64& rng) {
    const int64_t D = c.d_model;
    PffnParams p;
    p.w1 = normal_tensor({D, 4 * D}, rng, 0.02);
    p.b1 = Tensor({4 * D});
    p.w2 = normal_tensor({4 * D, D}, rng, 0.02);
    p.b2 = Tensor({D});
    return p;
}

Tensor ones(int64_t n) {
    Tensor t({n});
    for (auto& x : t.v) x = 1.0;
    return t;
}

void enumerate_ssm(const std::string& prefix, SsmLayerParams& p,
                   std::vector<std::pair<std::string, Tensor*>>& out) {
    out.emplace_back(prefix + ".a_log", &p.a_log);
    out.emplace_back(prefix + ".delta_w", &p.delta_w);
    out.emplace_back(prefix + ".delta_b", &p.delta_b);
    out.emplace_back(prefix + ".b_proj", &p.b_proj);
    out.emplace_back(prefix + ".c_proj", &p.c_proj);
    out.emplace_back(prefix + ".in_proj", &p.in_proj);
    out.emplace_back(prefix + ".out_proj", &p.out_proj);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.vocab < 2 || cfg.d_model < 1 || cfg.n_state < 1 || cfg.n_layers < 1 ||
        cfg.max_len < 1)
        throw std::invalid_argument("ModelParams::init: invalid configuration");
    std::mt19937_64 rng(seed);
    ModelParams m;
    m.cfg = cfg;
    m.embedding = normal_tensor({cfg.vocab, cfg.d_model}, rng, 0.02);
    for (int l = 0; l < cfg.n_layers; ++l) {
        HydraLayerParams layer;
        layer.forward = init_ssm(cfg, rng);
        layer.backward = init_ssm(cfg, rng);
        layer.pffn = init_pffn(cfg, rng);
        layer.ln1_gamma = ones(cfg.d_model);
        layer.ln1_beta = Tensor({cfg.d_model});
        layer.ln2_gamma = ones(cfg.d_model);
        layer.ln2_beta = Tensor({cfg.d_model});
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_params() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("embedding", &embedding);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layer" + std::to_string(l);
        enumerate_ssm(p + ".fwd", layers[l].forward, out);
        enumerate_ssm(p + ".bwd", layers[l].backward, out);
        out.emplace_back(p + ".pffn.w1", &layers[l].pffn.w1);
        out.emplace_back(p + ".pffn.b1", &layers[l].pffn.b1);
        out.emplace_back(p + ".pffn.w2", &layers[l].pffn.w2);
        out.emplace_back(p + ".pffn.b2", &layers[l].pffn.b2);
        out.emplace_back(p + ".ln1_gamma", &layers[l].ln1_gamma);
        out.emplace_back(p + ".ln1_beta", &layers[l].ln1_beta);
        out.emplace_back(p + ".ln2_gamma", &layers[l].ln2_gamma);
        out.emplace_back(p + ".ln2_beta", &layers[l].ln2_beta);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named_params() const {
    auto mut = const_cast<ModelParams*>(this)->named_params();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
}

int64_t ModelParams::param_count() const {
    int64_t n = 0;
    for (auto& [name, t] : named_params()) n += t->size();
    return n;
}

int64_t ModelParams::param_count_excluding_embedding() const {
    return param_count() - embedding.size();
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(param_count()));
    for (auto& [name, t] : named_params()) flat.insert(flat.end(), t->v.begin(), t->v.end());
    return flat;
}

void ModelParams::unflatten(const std::vector<double>& flat) {
    if (static_cast<int64_t>(flat.size()) != param_count())
        throw std::invalid_argument("unflatten: size mismatch");
    size_t off = 0;
    for (auto& [name, t] : named_params()) {
        std::copy(flat.begin() + off, flat.begin() + off + t->v.size(), t->v.begin());
        off += t->v.size();
    }
}

void ModelParams::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f << "hydrarec-checkpoint v1\n";
    f << cfg.vocab << ' ' << cfg.d_model << ' ' << cfg.n_state << ' ' << cfg.n_layers << ' '
      << cfg.max_len << '\n';
    char buf[64];
    for (auto& [name, t] : named_params()) {
        f << "param " << name << ' ' << t->shape.size();
        for (int64_t e : t->shape) f << ' ' << e;
        f << '\n';
        for (size_t i = 0; i < t->v.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", t->v[i]);  // hex floats: bit-exact
            f << buf << (i + 1 == t->v.size() ? '\n' : ' ');
        }
    }
    f << "end\n";
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParams ModelParams::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string magic, version;
    f >> magic >> version;
    if (magic != "hydrarec-checkpoint" || version != "v1")
        throw std::runtime_error("bad checkpoint header in " + path);
    ModelConfig cfg;
    f >> cfg.vocab >> cfg.d_model >> cfg.n_state >> cfg.n_layers >> cfg.max_len;
    if (!f) throw std::runtime_error("bad checkpoint config in " + path);
    ModelParams m = init(cfg, 0);
    for (auto& [name, t] : m.named_params()) {
        std::string tag, got;
        size_t rank;
        f >> tag >> got >> rank;
        if (tag != "param" || got != name)
            throw std::runtime_error("checkpoint parameter mismatch: expected " + name +
                                     ", got " + got);
        Shape s(rank);
        for (auto& e : s) f >> e;
        if (s != t->shape) throw std::runtime_error("checkpoint shape mismatch for " + name);
        for (auto& x : t->v) {
            std::string tok;
            f >> tok;
            x = std::strtod(tok.c_str(), nullptr);
        }
        if (!f) throw std::runtime_error("truncated checkpoint values for " + name);
    }
    std::string tail;
    f >> tail;
    if (tail != "end") throw std::runtime_error("missing checkpoint trailer in " + path);
    return m;
}

namespace {
SsmLayerVars bind_ssm(Graph& g, const SsmLayerParams& p, std::vector<Var>& ordered) {
    SsmLayerVars v;
    ordered.push_back(v.a_log = g.input(p.a_log));
    ordered.push_back(v.delta_w = g.input(p.delta_w));
    ordered.push_back(v.delta_b = g.input(p.delta_b));
    ordered.push_back(v.b_proj = g.input(p.b_proj));
    ordered.push_back(v.c_proj = g.input(p.c_proj));
    ordered.push_back(v.in_proj = g.input(p.in_proj));
    ordered.push_back(v.out_proj = g.input(p.out_proj));
    return v;
}
}  // namespace

ModelVars bind_model(Graph& g, const ModelParams& p) {
    ModelVars m;
    m.ordered.push_back(m.embedding = g.input(p.embedding));
    for (const auto& layer : p.layers) {
        HydraLayerVars v;
        v.forward = bind_ssm(g, layer.forward, m.ordered);
        v.backward = bind_ssm(g, layer.backward, m.ordered);
        m.ordered.push_back(v.pffn.w1 = g.input(layer.pffn.w1));
        m.ordered.push_back(v.pffn.b1 = g.input(layer.pffn.b1));
        m.ordered.push_back(v.pffn.w2 = g.input(layer.pffn.w2));
        m.ordered.push_back(v.pffn.b2 = g.input(layer.pffn.b2));
        m.ordered.push_back(v.ln1_gamma = g.input(layer.ln1_gamma));
        m.ordered.push_back(v.ln1_beta = g.input(layer.ln1_beta));
        m.ordered.push_back(v.ln2_gamma = g.input(layer.ln2_gamma));
        m.ordered.push_back(v.ln2_beta = g.input(layer.ln2_beta));
        m.layers.push_back(v);
    }
    return m;
}

ModelVars assemble_model_vars(const ModelConfig& cfg, const std::vector<Var>& ordered) {
    const size_t per_layer = 7 + 7 + 4 + 4;
    if (ordered.size() != 1 + per_layer * static_cast<size_t>(cfg.n_layers))
        throw std::invalid_argument("assemble_model_vars: wrong number of leaves");
    ModelVars m;
    m.ordered = ordered;
    size_t i = 0;
    m.embedding = ordered[i++];
    auto take_ssm = [&]() {
        SsmLayerVars v;
        v.a_log = ordered[i++];
        v.delta_w = ordered[i++];
        v.delta_b = ordered[i++];
        v.b_proj = ordered[i++];
        v.c_proj = ordered[i++];
        v.in_proj = ordered[i++];
        v.out_proj = ordered[i++];
        return v;
    };
    for (int l = 0; l < cfg.n_layers; ++l) {
        HydraLayerVars v;
        v.forward = take_ssm();
        v.backward = take_ssm();
        v.pffn.w1 = ordered[i++];
        v.pffn.b1 = ordered[i++];
        v.pffn.w2 = ordered[i++];
        v.pffn.b2 = ordered[i++];
        v.ln1_gamma = ordered[i++];
        v.ln1_beta = ordered[i++];
        v.ln2_gamma = ordered[i++];
        v.ln2_beta = ordered[i++];
        m.layers.push_back(v);
    }
    return m;
}

std::pair<Tensor, Tensor> discretize(const Tensor& delta, const Tensor& a_log,
                                     const Tensor& b_cont) {
    if (delta.shape.size() != 1 || a_log.shape.size() != 1 || b_cont.shape.size() != 2)
        throw std::invalid_argument("discretize: want delta {T}, a_log {N}, b_cont {T,N}");
    const int64_t T = delta.shape[0], N = a_log.shape[0];
    if (b_cont.shape[0] != T || b_cont.shape[1] != N)
        throw std::invalid_argument("discretize: b_cont shape " + shape_str(b_cont.shape) +
                                    " does not match T=" + std::to_string(T) +
                                    ", N=" + std::to_string(N));
    for (double d : delta.v)
        if (d <= 0.0) throw std::invalid_argument("discretize: delta must be positive");
    Tensor a_bar({T, N}), b_bar({T, N});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t n = 0; n < N; ++n) {
            a_bar.v[t * N + n] = std::exp(-delta.v[t] * std::exp(a_log.v[n]));
            b_bar.v[t * N + n] = delta.v[t] * b_cont.v[t * N + n];
        }
    return {a_bar, b_bar};
}

Var selective_scan(Graph& g, Var x, const SsmLayerVars& p) {
    const Tensor& xt = g.val(x);
    if (xt.shape.size() != 2)
        throw std::invalid_argument("selective_scan: input must be {T,D}, got " +
                                    shape_str(xt.shape));
    const int64_t T = xt.shape[0];
    const int64_t D = xt.shape[1];
    const int64_t N = g.val(p.a_log).shape[0];
    if (T < 1) throw std::invalid_argument("selective_scan: empty sequence");

    Var xp = g.matmul(x, p.in_proj);                                   // {T,D}
    Var delta = g.softplus(g.add(g.matmul(xp, p.delta_w), p.delta_b));  // {T,1}
    Var b_sel = g.matmul(xp, p.b_proj);                                // {T,N}
    Var c_sel = g.matmul(xp, p.c_proj);                                // {T,N}
    Var a_diag = g.neg(g.exp(p.a_log));                                // {N}, entries < 0

    Var h = g.input(Tensor({D, N}));  // h_0 = 0
    std::vector<Var> outputs;
    outputs.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        Var dt = g.reshape(g.slice_rows(delta, t, 1), Shape{});
        Var bt = g.reshape(g.slice_rows(b_sel, t, 1), Shape{N});
        Var ct = g.reshape(g.slice_rows(c_sel, t, 1), Shape{N});
        Var xrow = g.slice_rows(xp, t, 1);  // {1,D}
        Var a_bar = g.exp(g.mul(a_diag, dt));  // {N}, in (0,1)
        Var b_bar = g.mul(bt, dt);             // {N}
        Var inject = g.matmul(g.reshape(xrow, Shape{D, 1}), g.reshape(b_bar, Shape{1, N}));
        h = g.add(g.mul(h, a_bar), inject);  // {D,N}
        outputs.push_back(g.matmul(h, ct));  // {D}
    }
    Var y = g.concat_rows(outputs);  // {T,D}
    return g.matmul(y, p.out_proj);
}

Var pffn(Graph& g, Var h, const PffnVars& p) {
    return g.add(g.matmul(g.gelu(g.add(g.matmul(h, p.w1), p.b1)), p.w2), p.b2);
}

Var hydra_layer(Graph& g, Var h, const HydraLayerVars& p) {
    Var fwd = selective_scan(g, h, p.forward);
    Var bwd = g.reverse_rows(selective_scan(g, g.reverse_rows(h), p.backward));
    Var mixed = g.layer_norm(g.add(h, g.add(fwd, bwd)), p.ln1_gamma, p.ln1_beta);
    return g.layer_norm(g.add(h, pffn(g, mixed, p.pffn)), p.ln2_gamma, p.ln2_beta);
}

Var predict_scores(Graph& g, Var h_last, Var embedding) {
    return g.softmax(g.matmul(embedding, h_last));
}

namespace {
std::vector<int64_t> normalize_items(const ModelConfig& cfg, const std::vector<int64_t>& items) {
    std::vector<int64_t> ids;
    for (int64_t id : items) {
        if (id == 0) {
            if (!ids.empty())
                throw std::invalid_argument("model_forward: padding id 0 after a real item");
            continue;  // left padding
        }
        if (id < 1 || id >= cfg.vocab)
            throw std::invalid_argument("model_forward: unknown item id " + std::to_string(id));
        ids.push_back(id);
    }
    if (ids.empty()) throw std::invalid_argument("model_forward: empty item sequence");
    if (static_cast<int64_t>(ids.size()) > cfg.max_len)
        ids.erase(ids.begin(), ids.end() - cfg.max_len);
    return ids;
}
}  // namespace

Var model_log_probs(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                    const std::vector<int64_t>& items) {
    std::vector<int64_t> ids = normalize_items(cfg, items);
    const int64_t T = static_cast<int64_t>(ids.size());
    Var h = g.rows(m.embedding, ids);  // {T,D}
    for (const auto& layer : m.layers) h = hydra_layer(g, h, layer);
    Var h_last = g.reshape(g.slice_rows(h, T - 1, 1), Shape{cfg.d_model});
    return g.log_softmax(g.matmul(m.embedding, h_last));
}

Tensor model_forward(const ModelParams& p, const std::vector<int64_t>& items) {
    Graph g;
    ModelVars m = bind_model(g, p);
    Var lp = model_log_probs(g, m, p.cfg, items);
    Tensor probs = g.val(lp);
    for (auto& x : probs.v) x = std::exp(x);
    return probs;
}

Var next_item_nll(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                  const std::vector<int64_t>& items, int64_t target) {
    if (target < 1 || target >= cfg.vocab)
        throw std::invalid_argument("next_item_nll: unknown target id " + std::to_string(target));
    return g.neg(g.pick(model_log_probs(g, m, cfg, items), target));
}

Var sequence_nll(Graph& g, const ModelVars& m, const ModelConfig& cfg,
                 const std::vector<int64_t>& items) {
    std::vector<int64_t> ids;
    for (int64_t id : items) {
        if (id == 0) {
            if (!ids.empty())
                throw std::invalid_argument("sequence_nll: padding id 0 after a real item");
            continue;
        }
        if (id < 1 || id >= cfg.vocab)
            throw std::invalid_argument("sequence_nll: unknown item id " + std::to_string(id));
        ids.push_back(id);
    }
    if (ids.size() < 2) throw std::invalid_argument("sequence_nll: need at least 2 real items");
    if (static_cast<int64_t>(ids.size()) > cfg.max_len + 1)
        ids.erase(ids.begin(), ids.end() - (cfg.max_len + 1));
    const int64_t T = static_cast<int64_t>(ids.size());

    std::vector<int64_t> inputs(ids.begin(), ids.end() - 1);
    Var h = g.rows(m.embedding, inputs);  // {T-1, D}
    for (const auto& layer : m.layers) h = hydra_layer(g, h, layer);
    Var logits = g.matmul(h, g.transpose(m.embedding));  // {T-1, V}
    Var lsm = g.log_softmax(logits);
    Var acc;
    for (int64_t t = 0; t < T - 1; ++t) {
        Var row = g.reshape(g.slice_rows(lsm, t, 1), Shape{cfg.vocab});
        Var lp = g.pick(row, ids[static_cast<size_t>(t + 1)]);
        acc = t == 0 ? lp : g.add(acc, lp);
    }
    return g.scale(acc, -1.0 / static_cast<double>(T - 1));
}

}  // namespace hydrarec
