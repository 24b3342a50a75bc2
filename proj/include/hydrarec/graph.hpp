#pragma once

#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "hydrarec/tensor.hpp"

namespace hydrarec {

class Graph;

// Handle into a Graph's tape. Invalidated when the graph is destroyed.
struct Var {
    int id = -1;
    Graph* g = nullptr;
    bool valid() const { return id >= 0 && g != nullptr; }
};

// Gradients keyed by the node id of each requested parameter.
using GradientMap = std::map<int, Tensor>;

// Tape-based reverse-mode autodiff over dense double tensors. One graph per
// forward pass; single-threaded per graph.
class Graph {
public:
    Var input(Tensor t);  // leaf: parameter or constant

    const Tensor& val(Var x) const;
    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].val; }
    size_t num_nodes() const { return nodes_.size(); }

    // Elementwise binaries. Broadcasting: equal shapes, a scalar operand, or
    // one operand's shape being a suffix of the other's (leading-axis
    // expansion of the smaller one).
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);

    // matmul: {m,k}x{k,n}->{m,n}; {k}x{k,n}->{n}; {m,k}x{k}->{m}; {k}x{k}->{}
    Var matmul(Var a, Var b);

    Var exp(Var x);
    Var log(Var x);
    Var sigmoid(Var x);
    Var softplus(Var x);
    Var gelu(Var x);  // tanh approximation
    Var powc(Var x, double p);
    Var scale(Var x, double c);
    Var add_const(Var x, double c);
    Var neg(Var x) { return scale(x, -1.0); }

    // Last-axis softmax with max subtraction; 1-D or 2-D input.
    Var softmax(Var x);
    Var log_softmax(Var x);

    Var sum(Var x);   // all elements -> scalar
    Var mean(Var x);  // all elements -> scalar

    Var slice_rows(Var x, int64_t begin, int64_t count);  // along axis 0
    Var pick(Var x, int64_t index);                       // 1-D -> scalar
    Var concat_rows(const std::vector<Var>& xs);          // 1-D inputs become rows
    Var transpose(Var x);                                 // 2-D
    Var reshape(Var x, Shape s);
    Var reverse_rows(Var x);
    Var rows(Var table, std::vector<int64_t> ids);  // gather rows of {V,D}

    // Per-row normalization of {D} or {T,D}: (x - mu)/sqrt(var + eps)*gamma + beta.
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

    // Reverse-mode sweep from a scalar loss. Nodes are visited in strictly
    // decreasing id order, so accumulation is deterministic and repeated runs
    // are bit-identical. Parameters that are not ancestors of the loss get a
    // zero gradient of their own shape.
    GradientMap backward(Var loss, const std::vector<Var>& params) const;

private:
    using BackFn = std::function<void(const Graph&, int self, const Tensor& gout,
                                      const std::vector<Tensor*>& parent_grads)>;
    struct Node {
        Tensor val;
        std::vector<int> parents;
        BackFn back;  // empty for leaves
    };
    std::vector<Node> nodes_;

    const Node& nodes_ref(int id) const { return nodes_[static_cast<size_t>(id)]; }

    Var emit(Tensor val, std::vector<int> parents, BackFn back, const char* op);
    void check(Var x, const char* op) const;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function built on a fresh graph from the given leaves.
double finite_diff_check(const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                         const std::vector<Tensor>& params, double step);

}  // namespace hydrarec
