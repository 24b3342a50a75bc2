#include "hydrarec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hydrarec {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

void require_finite(const Tensor& t, const std::string& where) {
    for (double x : t.v)
        if (!std::isfinite(x)) throw std::runtime_error(where + ": non-finite value produced");
}

namespace {

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of an elementwise binary under leading-axis broadcast.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return a;
    if (shape_numel(b) == 1) return a;
    if (shape_numel(a) == 1) return b;
    if (is_suffix(b, a)) return a;
    if (is_suffix(a, b)) return b;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                " and " + shape_str(b));
}

// grad of the broadcast operand: sum over the expanded leading axes
void accumulate_reduced(Tensor& into, const Tensor& g) {
    const int64_t n = into.size();
    for (int64_t i = 0; i < g.size(); ++i) into.v[static_cast<size_t>(i % n)] += g.v[static_cast<size_t>(i)];
}

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Graph::input(Tensor t) {
    require_finite(t, "input");
    nodes_.push_back(Node{std::move(t), {}, nullptr});
    return Var{static_cast<int>(nodes_.size()) - 1, this};
}

const Tensor& Graph::val(Var x) const {
    check(x, "val");
    return nodes_[static_cast<size_t>(x.id)].val;
}

void Graph::check(Var x, const char* op) const {
    if (!x.valid() || x.g != this || x.id >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument(std::string(op) + ": Var does not belong to this graph");
}

Var Graph::emit(Tensor val, std::vector<int> parents, BackFn back, const char* op) {
    require_finite(val, op);
    nodes_.push_back(Node{std::move(val), std::move(parents), std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1, this};
}

// ---- elementwise binaries ----

Var Graph::add(Var a, Var b) {
    check(a, "add");
    check(b, "add");
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Shape os = broadcast_shape(ta.shape, tb.shape, "add");
    Tensor out(os);
    const int64_t na = ta.size(), nb = tb.size();
    for (int64_t i = 0; i < out.size(); ++i)
        out.v[i] = ta.v[i % na] + tb.v[i % nb];
    return emit(std::move(out), {a.id, b.id},
                [](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    accumulate_reduced(*pg[0], g);
                    accumulate_reduced(*pg[1], g);
                },
                "add");
}

Var Graph::sub(Var a, Var b) {
    check(a, "sub");
    check(b, "sub");
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Shape os = broadcast_shape(ta.shape, tb.shape, "sub");
    Tensor out(os);
    const int64_t na = ta.size(), nb = tb.size();
    for (int64_t i = 0; i < out.size(); ++i)
        out.v[i] = ta.v[i % na] - tb.v[i % nb];
    return emit(std::move(out), {a.id, b.id},
                [](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    accumulate_reduced(*pg[0], g);
                    Tensor neg(g.shape);
                    for (size_t i = 0; i < g.v.size(); ++i) neg.v[i] = -g.v[i];
                    accumulate_reduced(*pg[1], neg);
                },
                "sub");
}

Var Graph::mul(Var a, Var b) {
    check(a, "mul");
    check(b, "mul");
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Shape os = broadcast_shape(ta.shape, tb.shape, "mul");
    Tensor out(os);
    const int64_t na = ta.size(), nb = tb.size();
    for (int64_t i = 0; i < out.size(); ++i)
        out.v[i] = ta.v[i % na] * tb.v[i % nb];
    return emit(std::move(out), {a.id, b.id},
                [na, nb](const Graph& gr, int self, const Tensor& g,
                         const std::vector<Tensor*>& pg) {
                    const auto& node = gr.nodes_ref(self);
                    const Tensor& ta2 = gr.val(node.parents[0]);
                    const Tensor& tb2 = gr.val(node.parents[1]);
                    Tensor ga(g.shape), gb(g.shape);
                    for (int64_t i = 0; i < g.size(); ++i) {
                        ga.v[i] = g.v[i] * tb2.v[i % nb];
                        gb.v[i] = g.v[i] * ta2.v[i % na];
                    }
                    accumulate_reduced(*pg[0], ga);
                    accumulate_reduced(*pg[1], gb);
                },
                "mul");
}

// ---- matmul ----

Var Graph::matmul(Var a, Var b) {
    check(a, "matmul");
    check(b, "matmul");
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    const size_t ra = A.shape.size(), rb = B.shape.size();
    if (ra == 0 || rb == 0 || ra > 2 || rb > 2)
        throw std::invalid_argument("matmul: ranks must be 1 or 2, got " + shape_str(A.shape) +
                                    " and " + shape_str(B.shape));
    const int64_t m = (ra == 2) ? A.shape[0] : 1;
    const int64_t k = (ra == 2) ? A.shape[1] : A.shape[0];
    const int64_t kb = (rb == 2) ? B.shape[0] : B.shape[0];
    const int64_t n = (rb == 2) ? B.shape[1] : 1;
    if (k != kb)
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(A.shape) +
                                    " vs " + shape_str(B.shape));
    Shape os;
    if (ra == 2 && rb == 2) os = {m, n};
    else if (ra == 1 && rb == 2) os = {n};
    else if (ra == 2 && rb == 1) os = {m};
    // 1-D x 1-D -> scalar (empty shape)
    Tensor out(os);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += A.v[i * k + p] * B.v[p * n + j];
            out.v[i * n + j] = acc;
        }
    auto back = [m, n, k](const Graph& gr, int self, const Tensor& g,
                          const std::vector<Tensor*>& pg) {
        const auto& node = gr.nodes_ref(self);
        const Tensor& A2 = gr.val(node.parents[0]);
        const Tensor& B2 = gr.val(node.parents[1]);
        // dA += g . B^T, dB += A^T . g (in flattened m,k,n terms)
        for (int64_t i = 0; i < m; ++i)
            for (int64_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (int64_t j = 0; j < n; ++j) acc += g.v[i * n + j] * B2.v[p * n + j];
                pg[0]->v[i * k + p] += acc;
            }
        for (int64_t p = 0; p < k; ++p)
            for (int64_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int64_t i = 0; i < m; ++i) acc += A2.v[i * k + p] * g.v[i * n + j];
                pg[1]->v[p * n + j] += acc;
            }
    };
    return emit(std::move(out), {a.id, b.id}, back, "matmul");
}

// ---- unaries ----

namespace {
// f(x) and f'(x) as a pair, applied elementwise
template <typename F>
Tensor map_tensor(const Tensor& t, F f) {
    Tensor out(t.shape);
    out.v.resize(t.v.size());
    for (size_t i = 0; i < t.v.size(); ++i) out.v[i] = f(t.v[i]);
    return out;
}
}  // namespace

#define HR_UNARY(NAME, FWD, BWD)                                                            \
    Var Graph::NAME(Var x) {                                                                \
        check(x, #NAME);                                                                    \
        const Tensor& t = val(x);                                                           \
        Tensor out = map_tensor(t, [](double u) { return (FWD); });                         \
        return emit(std::move(out), {x.id},                                                 \
                    [](const Graph& gr, int self, const Tensor& g,                          \
                       const std::vector<Tensor*>& pg) {                                    \
                        const auto& node = gr.nodes_ref(self);                              \
                        const Tensor& in = gr.val(node.parents[0]);                         \
                        const Tensor& outv = node.val;                                      \
                        (void)outv;                                                         \
                        for (size_t i = 0; i < g.v.size(); ++i) {                           \
                            const double u = in.v[i];                                       \
                            const double y = outv.v[i];                                     \
                            (void)u;                                                        \
                            (void)y;                                                       \
                            pg[0]->v[i] += g.v[i] * (BWD);                                  \
                        }                                                                   \
                    },                                                                      \
                    #NAME);                                                                 \
    }

HR_UNARY(exp, std::exp(u), y)
HR_UNARY(log, std::log(u), 1.0 / u)
HR_UNARY(sigmoid, 1.0 / (1.0 + std::exp(-u)), y * (1.0 - y))
HR_UNARY(softplus, stable_softplus(u), 1.0 / (1.0 + std::exp(-u)))

#undef HR_UNARY

Var Graph::gelu(Var x) {
    check(x, "gelu");
    const Tensor& t = val(x);
    Tensor out = map_tensor(t, [](double u) {
        return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluA * u * u * u)));
    });
    return emit(std::move(out), {x.id},
                [](const Graph& gr, int self, const Tensor& g, const std::vector<Tensor*>& pg) {
                    const auto& node = gr.nodes_ref(self);
                    const Tensor& in = gr.val(node.parents[0]);
                    for (size_t i = 0; i < g.v.size(); ++i) {
                        const double u = in.v[i];
                        const double th = std::tanh(kGeluC * (u + kGeluA * u * u * u));
                        const double d = 0.5 * (1.0 + th) +
                                         0.5 * u * (1.0 - th * th) * kGeluC *
                                             (1.0 + 3.0 * kGeluA * u * u);
                        pg[0]->v[i] += g.v[i] * d;
                    }
                },
                "gelu");
}

Var Graph::powc(Var x, double p) {
    check(x, "powc");
    const Tensor& t = val(x);
    Tensor out = map_tensor(t, [p](double u) { return std::pow(u, p); });
    return emit(std::move(out), {x.id},
                [p](const Graph& gr, int self, const Tensor& g, const std::vector<Tensor*>& pg) {
                    const auto& node = gr.nodes_ref(self);
                    const Tensor& in = gr.val(node.parents[0]);
                    for (size_t i = 0; i < g.v.size(); ++i)
                        pg[0]->v[i] += g.v[i] * p * std::pow(in.v[i], p - 1.0);
                },
                "powc");
}

Var Graph::scale(Var x, double c) {
    check(x, "scale");
    Tensor out = map_tensor(val(x), [c](double u) { return c * u; });
    return emit(std::move(out), {x.id},
                [c](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < g.v.size(); ++i) pg[0]->v[i] += c * g.v[i];
                },
                "scale");
}

Var Graph::add_const(Var x, double c) {
    check(x, "add_const");
    Tensor out = map_tensor(val(x), [c](double u) { return u + c; });
    return emit(std::move(out), {x.id},
                [](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < g.v.size(); ++i) pg[0]->v[i] += g.v[i];
                },
                "add_const");
}

// ---- softmax family ----

namespace {
void check_rank12(const Tensor& t, const char* op) {
    if (t.shape.size() != 1 && t.shape.size() != 2)
        throw std::invalid_argument(std::string(op) + ": expects rank 1 or 2, got " +
                                    shape_str(t.shape));
}
}  // namespace

Var Graph::softmax(Var x) {
    check(x, "softmax");
    const Tensor& t = val(x);
    check_rank12(t, "softmax");
    const int64_t nr = (t.shape.size() == 2) ? t.shape[0] : 1;
    const int64_t nc = t.shape.back();
    Tensor out(t.shape);
    for (int64_t r = 0; r < nr; ++r) {
        const double* in = &t.v[r * nc];
        double* o = &out.v[r * nc];
        double mx = in[0];
        for (int64_t j = 1; j < nc; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (int64_t j = 0; j < nc; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (int64_t j = 0; j < nc; ++j) o[j] /= z;
    }
    return emit(std::move(out), {x.id},
                [nr, nc](const Graph& gr, int self, const Tensor& g,
                         const std::vector<Tensor*>& pg) {
                    const Tensor& y = gr.nodes_ref(self).val;
                    for (int64_t r = 0; r < nr; ++r) {
                        double dot = 0.0;
                        for (int64_t j = 0; j < nc; ++j) dot += g.v[r * nc + j] * y.v[r * nc + j];
                        for (int64_t j = 0; j < nc; ++j)
                            pg[0]->v[r * nc + j] += y.v[r * nc + j] * (g.v[r * nc + j] - dot);
                    }
                },
                "softmax");
}

Var Graph::log_softmax(Var x) {
    check(x, "log_softmax");
    const Tensor& t = val(x);
    check_rank12(t, "log_softmax");
    const int64_t nr = (t.shape.size() == 2) ? t.shape[0] : 1;
    const int64_t nc = t.shape.back();
    Tensor out(t.shape);
    for (int64_t r = 0; r < nr; ++r) {
        const double* in = &t.v[r * nc];
        double* o = &out.v[r * nc];
        double mx = in[0];
        for (int64_t j = 1; j < nc; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (int64_t j = 0; j < nc; ++j) z += std::exp(in[j] - mx);
        const double lz = mx + std::log(z);
        for (int64_t j = 0; j < nc; ++j) o[j] = in[j] - lz;
    }
    return emit(std::move(out), {x.id},
                [nr, nc](const Graph& gr, int self, const Tensor& g,
                         const std::vector<Tensor*>& pg) {
                    const Tensor& y = gr.nodes_ref(self).val;
                    for (int64_t r = 0; r < nr; ++r) {
                        double gs = 0.0;
                        for (int64_t j = 0; j < nc; ++j) gs += g.v[r * nc + j];
                        for (int64_t j = 0; j < nc; ++j)
                            pg[0]->v[r * nc + j] += g.v[r * nc + j] - std::exp(y.v[r * nc + j]) * gs;
                    }
                },
                "log_softmax");
}

// ---- reductions ----

Var Graph::sum(Var x) {
    check(x, "sum");
    const Tensor& t = val(x);
    double acc = 0.0;
    for (double u : t.v) acc += u;
    return emit(Tensor::scalar(acc), {x.id},
                [](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < pg[0]->v.size(); ++i) pg[0]->v[i] += g.v[0];
                },
                "sum");
}

Var Graph::mean(Var x) {
    check(x, "mean");
    const Tensor& t = val(x);
    const double n = static_cast<double>(t.size());
    double acc = 0.0;
    for (double u : t.v) acc += u;
    return emit(Tensor::scalar(acc / n), {x.id},
                [n](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < pg[0]->v.size(); ++i) pg[0]->v[i] += g.v[0] / n;
                },
                "mean");
}

// ---- structural ops ----

Var Graph::slice_rows(Var x, int64_t begin, int64_t count) {
    check(x, "slice_rows");
    const Tensor& t = val(x);
    check_rank12(t, "slice_rows");
    const int64_t nr = t.shape[0];
    const int64_t nc = (t.shape.size() == 2) ? t.shape[1] : 1;
    if (begin < 0 || count < 1 || begin + count > nr)
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + "," +
                                    std::to_string(begin + count) + ") out of " +
                                    std::to_string(nr) + " rows");
    Shape os = t.shape;
    os[0] = count;
    Tensor out(os);
    std::copy(t.v.begin() + begin * nc, t.v.begin() + (begin + count) * nc, out.v.begin());
    return emit(std::move(out), {x.id},
                [begin, nc](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < g.v.size(); ++i)
                        pg[0]->v[static_cast<size_t>(begin * nc) + i] += g.v[i];
                },
                "slice_rows");
}

Var Graph::pick(Var x, int64_t index) {
    check(x, "pick");
    const Tensor& t = val(x);
    if (t.shape.size() != 1)
        throw std::invalid_argument("pick: expects rank 1, got " + shape_str(t.shape));
    if (index < 0 || index >= t.shape[0])
        throw std::invalid_argument("pick: index " + std::to_string(index) + " out of " +
                                    std::to_string(t.shape[0]));
    return emit(Tensor::scalar(t.v[static_cast<size_t>(index)]), {x.id},
                [index](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    pg[0]->v[static_cast<size_t>(index)] += g.v[0];
                },
                "pick");
}

Var Graph::concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty input list");
    int64_t nc = -1, nr = 0;
    std::vector<int> parents;
    for (Var x : xs) {
        check(x, "concat_rows");
        const Tensor& t = val(x);
        check_rank12(t, "concat_rows");
        const int64_t c = t.shape.back();
        const int64_t r = (t.shape.size() == 2) ? t.shape[0] : 1;
        if (nc < 0) nc = c;
        if (c != nc)
            throw std::invalid_argument("concat_rows: column mismatch " + std::to_string(c) +
                                        " vs " + std::to_string(nc));
        nr += r;
        parents.push_back(x.id);
    }
    Tensor out(Shape{nr, nc});
    size_t off = 0;
    for (Var x : xs) {
        const Tensor& t = val(x);
        std::copy(t.v.begin(), t.v.end(), out.v.begin() + off);
        off += t.v.size();
    }
    return emit(std::move(out), std::move(parents),
                [](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    size_t off2 = 0;
                    for (Tensor* p : pg) {
                        for (size_t i = 0; i < p->v.size(); ++i) p->v[i] += g.v[off2 + i];
                        off2 += p->v.size();
                    }
                },
                "concat_rows");
}

Var Graph::transpose(Var x) {
    check(x, "transpose");
    const Tensor& t = val(x);
    if (t.shape.size() != 2)
        throw std::invalid_argument("transpose: expects rank 2, got " + shape_str(t.shape));
    const int64_t nr = t.shape[0], nc = t.shape[1];
    Tensor out(Shape{nc, nr});
    for (int64_t i = 0; i < nr; ++i)
        for (int64_t j = 0; j < nc; ++j) out.v[j * nr + i] = t.v[i * nc + j];
    return emit(std::move(out), {x.id},
                [nr, nc](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (int64_t i = 0; i < nr; ++i)
                        for (int64_t j = 0; j < nc; ++j) pg[0]->v[i * nc + j] += g.v[j * nr + i];
                },
                "transpose");
}

Var Graph::reshape(Var x, Shape s) {
    check(x, "reshape");
    const Tensor& t = val(x);
    if (shape_numel(s) != t.size())
        throw std::invalid_argument("reshape: " + shape_str(t.shape) + " to " + shape_str(s));
    Tensor out(std::move(s));
    out.v = t.v;
    return emit(std::move(out), {x.id},
                [](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < g.v.size(); ++i) pg[0]->v[i] += g.v[i];
                },
                "reshape");
}

Var Graph::reverse_rows(Var x) {
    check(x, "reverse_rows");
    const Tensor& t = val(x);
    check_rank12(t, "reverse_rows");
    const int64_t nr = t.shape[0];
    const int64_t nc = (t.shape.size() == 2) ? t.shape[1] : 1;
    Tensor out(t.shape);
    for (int64_t r = 0; r < nr; ++r)
        std::copy(t.v.begin() + r * nc, t.v.begin() + (r + 1) * nc,
                  out.v.begin() + (nr - 1 - r) * nc);
    return emit(std::move(out), {x.id},
                [nr, nc](const Graph&, int, const Tensor& g, const std::vector<Tensor*>& pg) {
                    for (int64_t r = 0; r < nr; ++r)
                        for (int64_t j = 0; j < nc; ++j)
                            pg[0]->v[(nr - 1 - r) * nc + j] += g.v[r * nc + j];
                },
                "reverse_rows");
}

Var Graph::rows(Var table, std::vector<int64_t> ids) {
    check(table, "rows");
    const Tensor& t = val(table);
    if (t.shape.size() != 2)
        throw std::invalid_argument("rows: table must be rank 2, got " + shape_str(t.shape));
    const int64_t nr = t.shape[0], nc = t.shape[1];
    for (int64_t id : ids)
        if (id < 0 || id >= nr)
            throw std::invalid_argument("rows: id " + std::to_string(id) + " out of " +
                                        std::to_string(nr));
    Tensor out(Shape{static_cast<int64_t>(ids.size()), nc});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(t.v.begin() + ids[i] * nc, t.v.begin() + (ids[i] + 1) * nc,
                  out.v.begin() + static_cast<int64_t>(i) * nc);
    return emit(std::move(out), {table.id},
                [ids = std::move(ids), nc](const Graph&, int, const Tensor& g,
                                           const std::vector<Tensor*>& pg) {
                    for (size_t i = 0; i < ids.size(); ++i)
                        for (int64_t j = 0; j < nc; ++j)
                            pg[0]->v[ids[i] * nc + j] += g.v[static_cast<int64_t>(i) * nc + j];
                },
                "rows");
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    check(x, "layer_norm");
    check(gamma, "layer_norm");
    check(beta, "layer_norm");
    const Tensor& t = val(x);
    check_rank12(t, "layer_norm");
    const int64_t nr = (t.shape.size() == 2) ? t.shape[0] : 1;
    const int64_t nc = t.shape.back();
    const Tensor& gm = val(gamma);
    const Tensor& bt = val(beta);
    if (gm.size() != nc || bt.size() != nc)
        throw std::invalid_argument("layer_norm: gamma/beta must have " + std::to_string(nc) +
                                    " entries");
    Tensor out(t.shape);
    for (int64_t r = 0; r < nr; ++r) {
        const double* in = &t.v[r * nc];
        double mu = 0.0;
        for (int64_t j = 0; j < nc; ++j) mu += in[j];
        mu /= nc;
        double var = 0.0;
        for (int64_t j = 0; j < nc; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= nc;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < nc; ++j)
            out.v[r * nc + j] = (in[j] - mu) * inv * gm.v[j] + bt.v[j];
    }
    return emit(std::move(out), {x.id, gamma.id, beta.id},
                [nr, nc, eps](const Graph& gr, int self, const Tensor& g,
                              const std::vector<Tensor*>& pg) {
                    const auto& node = gr.nodes_ref(self);
                    const Tensor& in = gr.val(node.parents[0]);
                    const Tensor& gm2 = gr.val(node.parents[1]);
                    for (int64_t r = 0; r < nr; ++r) {
                        const double* xr = &in.v[r * nc];
                        double mu = 0.0;
                        for (int64_t j = 0; j < nc; ++j) mu += xr[j];
                        mu /= nc;
                        double var = 0.0;
                        for (int64_t j = 0; j < nc; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                        var /= nc;
                        const double inv = 1.0 / std::sqrt(var + eps);
                        double mg = 0.0, mgx = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                        for (int64_t j = 0; j < nc; ++j) {
                            const double xh = (xr[j] - mu) * inv;
                            const double dxh = g.v[r * nc + j] * gm2.v[j];
                            mg += dxh;
                            mgx += dxh * xh;
                            pg[1]->v[j] += g.v[r * nc + j] * xh;  // dgamma
                            pg[2]->v[j] += g.v[r * nc + j];       // dbeta
                        }
                        mg /= nc;
                        mgx /= nc;
                        for (int64_t j = 0; j < nc; ++j) {
                            const double xh = (xr[j] - mu) * inv;
                            const double dxh = g.v[r * nc + j] * gm2.v[j];
                            pg[0]->v[r * nc + j] += inv * (dxh - mg - xh * mgx);
                        }
                    }
                },
                "layer_norm");
}

// ---- backward ----

GradientMap Graph::backward(Var loss, const std::vector<Var>& params) const {
    check(loss, "backward");
    if (!val(loss).is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(val(loss).shape));
    std::vector<std::unique_ptr<Tensor>> grads(nodes_.size());
    auto ensure = [&](int id) -> Tensor* {
        auto& slot = grads[static_cast<size_t>(id)];
        if (!slot) slot = std::make_unique<Tensor>(nodes_[static_cast<size_t>(id)].val.shape);
        return slot.get();
    };
    ensure(loss.id)->v[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        const auto& slot = grads[static_cast<size_t>(id)];
        if (!slot) continue;
        const Node& node = nodes_[static_cast<size_t>(id)];
        if (!node.back) continue;
        std::vector<Tensor*> pg;
        pg.reserve(node.parents.size());
        for (int p : node.parents) pg.push_back(ensure(p));
        node.back(*this, id, *slot, pg);
    }
    GradientMap out;
    for (Var p : params) {
        check(p, "backward");
        if (out.count(p.id)) throw std::invalid_argument("backward: duplicate parameter handle");
        const auto& slot = grads[static_cast<size_t>(p.id)];
        out.emplace(p.id, slot ? *slot : Tensor(nodes_[static_cast<size_t>(p.id)].val.shape));
    }
    return out;
}

double finite_diff_check(const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                         const std::vector<Tensor>& params, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
    Graph g;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(g.input(p));
    Var loss = build(g, vars);
    GradientMap gm = g.backward(loss, vars);

    auto eval = [&](const std::vector<Tensor>& ps) {
        Graph h;
        std::vector<Var> vs;
        for (const Tensor& p : ps) vs.push_back(h.input(p));
        return h.val(build(h, vs)).item();
    };

    double worst = 0.0;
    std::vector<Tensor> work = params;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor& analytic = gm.at(vars[pi].id);
        for (size_t i = 0; i < work[pi].v.size(); ++i) {
            const double orig = work[pi].v[i];
            work[pi].v[i] = orig + step;
            const double fp = eval(work);
            work[pi].v[i] = orig - step;
            const double fm = eval(work);
            work[pi].v[i] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic.v[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
    }
    return worst;
}

}  // namespace hydrarec
