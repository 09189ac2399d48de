#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "metadet/tensor.hpp"

namespace metadet {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the computational graph. The vjp callback expresses the
// backward rule in terms of graph primitives, so gradients produced by
// grad(create_graph=true) are themselves differentiable.
struct Node : std::enable_shared_from_this<Node> {
    Tensor value;
    const char* op = "leaf";
    std::vector<NodePtr> parents;
    bool requires_grad = false;
    // Given (self, adjoint-of-self), returns one adjoint contribution per
    // parent (nullptr for parents that need no gradient).
    std::function<std::vector<NodePtr>(const NodePtr&, const NodePtr&)> vjp;
};

// Leaf constructors.
NodePtr constant(Tensor value);                 // no gradient tracking
NodePtr leaf(Tensor value, bool requires_grad = true);
NodePtr detach(const NodePtr& a);

// Elementwise binary; operands must have equal shapes or either side may be
// a one-element scalar.
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);

// Elementwise unary.
NodePtr neg(const NodePtr& a);
NodePtr relu(const NodePtr& a);
NodePtr exp(const NodePtr& a);
NodePtr log(const NodePtr& a);
NodePtr sqrt(const NodePtr& a);
NodePtr square(const NodePtr& a);
NodePtr sigmoid(const NodePtr& a);
NodePtr abs(const NodePtr& a);
NodePtr clamp(const NodePtr& a, double lo, double hi);

// Dispatch by name, the generic elementwise entry point.
NodePtr elementwise(const std::string& op, const NodePtr& a, const NodePtr& b = nullptr);

// Reductions over an axis subset; empty axes list means "all".
NodePtr reduce_sum(const NodePtr& a, std::vector<int64_t> axes = {});
NodePtr reduce_mean(const NodePtr& a, std::vector<int64_t> axes = {});
NodePtr reduce_max(const NodePtr& a, std::vector<int64_t> axes = {});

// Structural / linear primitives.
NodePtr reshape(const NodePtr& a, std::vector<int64_t> shape);
// out[k] = indices[k] < 0 ? 0 : a[indices[k]]   (flat indexing)
NodePtr gather(const NodePtr& a, std::shared_ptr<const std::vector<int64_t>> indices,
               std::vector<int64_t> out_shape);
// out[indices[k]] += a[k]; indices < 0 are skipped
NodePtr scatter_add(const NodePtr& a, std::shared_ptr<const std::vector<int64_t>> indices,
                    std::vector<int64_t> out_shape);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr transpose2d(const NodePtr& a);

// Cross-correlation with per-output-channel bias.
// input [C_in,H,W], kernel [C_out,C_in,kh,kw], bias [C_out].
NodePtr conv2d(const NodePtr& input, const NodePtr& kernel, const NodePtr& bias,
               int64_t stride, int64_t padding);

// Reverse-mode gradient of a one-element scalar w.r.t. the given nodes.
// With create_graph=true the results stay connected to the graph (higher
// order derivatives available); with false they are detached constants.
// Nodes unreachable from `scalar` yield zero tensors.
std::vector<NodePtr> grad(const NodePtr& scalar, const std::vector<NodePtr>& wrt,
                          bool create_graph);

double scalar_value(const NodePtr& a);

}  // namespace metadet
