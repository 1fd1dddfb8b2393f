#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "visage/tensor.hpp"

namespace visage::nn {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the computation graph.  Non-leaf nodes remember their parents
// and a closure that routes the output gradient back to them; backward() runs
// the closures in reverse topological order.
struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    bool trainable = false;  // leaf parameter updated by an optimizer
    std::string name;        // non-empty for registered parameters
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad();
    void zero_grad();
    bool has_grad() const { return grad.numel() == value.numel() && grad.numel() > 0; }
};

// While a NoGradGuard is alive, ops compute values only: the resulting nodes
// carry no parents and no backward closures.  Guards nest.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Graph entry points.
Var constant(Tensor value);                       // never receives gradient
Var leaf(Tensor value, bool trainable = false);   // gradient sink (inputs, params)

// Backpropagate from a scalar root (shape [1]).  Gradients accumulate; call
// zero_grad on parameters between steps.
void backward(const Var& root);

// ---------------------------------------------------------------------------
// Ops.  Shapes follow the tensor conventions: vectors [N], token matrices
// [L,D], feature maps [C,H,W], conv weights [Cout,Cin,K,K].
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b);              // elementwise, same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);              // elementwise (Hadamard)
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var silu(const Var& a);

// y[co] = sum_ci,ky,kx w[co,ci,ky,kx] * xpad[ci, y*stride+ky, x*stride+kx] + b[co]
// Zero padding `pad` on all sides.  Pass an empty Var for no bias.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride = 1, int pad = 1);

// x [M] -> [N] or x [L,M] -> [L,N]; w [N,M], optional b [N].
Var linear(const Var& x, const Var& w, const Var& b);

Var matmul(const Var& a, const Var& b);           // [M,K] x [K,N] -> [M,N]
Var transpose(const Var& a);                      // [M,N] -> [N,M]
Var softmax_rows(const Var& a);                   // row-wise softmax on [L,C]

// Group normalization over [C,H,W] with per-channel affine gamma/beta [C].
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups,
               double eps = 1e-5);

Var channel_scale(const Var& x, const Var& s);    // x [C,H,W] * s[C]
Var channel_bias(const Var& x, const Var& b);     // x [C,H,W] + b[C]
Var concat_channels(const Var& a, const Var& b);  // [Ca+Cb, H, W]
Var upsample_nearest2(const Var& x);              // [C,H,W] -> [C,2H,2W]

// Feature-map <-> token-sequence views for attention: [C,H,W] <-> [H*W,C].
Var chw_to_tokens(const Var& x);
Var tokens_to_chw(const Var& x, int h, int w);

Var reshape(const Var& x, std::vector<int> shape);

Var mean_all(const Var& x);                       // scalar [1]
Var mean_rows(const Var& x);                      // [L,C] -> [C], mean over rows
Var mse(const Var& a, const Var& b);              // scalar mean squared error
Var sum(const std::vector<Var>& xs);              // n-ary elementwise sum

// ---------------------------------------------------------------------------
// Parameter registry: ordered, uniquely named leaf tensors.  Networks allocate
// their weights through one registry so that checkpoints, optimizers and
// freeze flags can address them by name prefix (e.g. "lca.", "backbone.").
// ---------------------------------------------------------------------------
class ParamRegistry {
public:
    Var add(const std::string& name, Tensor init, bool trainable = true);
    Var find(const std::string& name) const;  // throws NotFound
    bool contains(const std::string& name) const;
    const std::vector<Var>& all() const { return ordered_; }
    std::vector<Var> with_prefix(const std::string& prefix) const;
    void set_trainable(const std::string& prefix, bool trainable);
    void zero_grad();
    std::size_t total_elements(const std::string& prefix = "") const;

private:
    std::vector<Var> ordered_;
    std::unordered_map<std::string, Var> by_name_;
};

// Fan-in scaled Gaussian initializers.
Tensor init_conv_weight(int cout, int cin, int k, Rng& rng);
Tensor init_linear_weight(int n, int m, Rng& rng);

}  // namespace visage::nn
