#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cet/tensor.hpp"

namespace cet {

// A learnable tensor with an accumulated gradient of the same shape.
struct Param {
    Tensor value;
    Tensor grad;
    std::string name;

    Param() = default;
    Param(std::string n, Tensor v) : value(std::move(v)), grad(Tensor::zeros_like(value)), name(std::move(n)) {}

    void zero_grad() { grad.fill(0); }
};

// Reverse-mode tape. Each op records its output value and a closure that
// scatters the output gradient into its inputs; backward() replays the
// closures once, in reverse creation order. Build with recording=false for
// a value-only forward pass (inference).
class Tape {
public:
    using Id = std::int32_t;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }

    // Leaves -------------------------------------------------------------
    Id input(Tensor v);                 // data; gradient retained on the node
    Id param(Param& p);                 // backward adds into p.grad
    Id constant(Tensor v) { return input(std::move(v)); }

    // Primitive ops --------------------------------------------------------
    Id matmul(Id a, Id b);              // A.B
    Id matmul_nt(Id a, Id b);           // A.B^T
    Id add(Id a, Id b);                 // elementwise; b may be rank-1, broadcast over rows
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);                 // elementwise; same broadcast rule as add
    Id scale(Id a, real c);
    Id relu(Id a);
    Id tanh_op(Id a);
    Id softmax_rows(Id a);              // per-row softmax, max-subtracted
    Id layer_norm(Id x, Id gain, Id shift); // per-row mean-0/var-1 then affine, eps 1e-5
    Id mean(Id a);                      // full reduction to a scalar
    Id sum(Id a);

    // Row plumbing ---------------------------------------------------------
    Id slice_rows(Id a, std::size_t row0, std::size_t nrows);
    Id gather_rows(Id a, std::vector<std::size_t> idx);
    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(const std::vector<Id>& parts);
    Id tile_rows(Id a, std::size_t times);
    Id row_scale(Id a, std::vector<real> w);       // row r scaled by constant w[r]
    Id group_mean_rows(Id a, std::size_t group);   // mean over consecutive row groups
    Id group_head_rows(Id a, std::size_t group);   // first row of each group
    Id prepend_group_head(Id a, Id head, std::size_t group); // insert `head` before each group

    // Access ---------------------------------------------------------------
    const Tensor& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].val; }
    // Gradient accumulated on a node after backward(); zeros if untouched.
    Tensor grad(Id id) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Seeds the (scalar) node with gradient 1 and replays all closures.
    void backward(Id top);

    void clear() { nodes_.clear(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;               // lazily allocated
        std::function<void()> back;
    };

    Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Id push(Tensor v) {
        nodes_.push_back(Node{std::move(v), Tensor(), nullptr});
        return static_cast<Id>(nodes_.size() - 1);
    }

    // Gradient buffer of a node, allocated on first touch.
    Tensor& gbuf(Id id);
    bool has_grad(Id id) const { return !node(id).grad.empty(); }

    bool recording_ = true;
    std::vector<Node> nodes_;
};

// Max over all parameter entries of |analytic - central difference| /
// max(1, |central difference|), at step h. `build` must assemble the scalar
// loss on the given tape from the current parameter values. Entries where
// both gradients are below 1e-8 in magnitude are skipped (inactive regions,
// e.g. dead relus, where the comparison carries no signal).
double grad_check(const std::function<Tape::Id(Tape&)>& build,
                  const std::vector<Param*>& params, double h = 1e-5);

} // namespace cet
