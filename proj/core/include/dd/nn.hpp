#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "dd/errors.hpp"
#include "dd/rng.hpp"

namespace dd::nn {

// Dense row-major tensor. Values are held in double precision so that
// gradients survive finite-difference verification at tight tolerances;
// checkpoints store 32-bit floats.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s);

    std::int64_t numel() const;
    std::int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    static Tensor zeros(std::vector<std::int64_t> shape);
    static Tensor full(std::vector<std::int64_t> shape, double value);
    static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, double stddev);
};

bool same_shape(const Tensor& a, const Tensor& b);

// Named trainable tensor with a gradient accumulator.
struct Param {
    std::string name;
    Tensor w;
    Tensor g;

    Param() = default;
    Param(std::string name, Tensor init);

    void zero_grad();
};

// Eagerly evaluated computation graph with a reverse-mode tape. Node ids
// index into the tape; backward() seeds the chosen scalar node and runs
// the tape in reverse, accumulating into Param::g for bound leaves.
//
// Matrices are (rows, cols); vectors are rank-1. All ops validate shapes
// and throw DomainError on mismatch.
class Graph {
public:
    using NodeId = int;

    NodeId constant(Tensor t);
    NodeId input(const Param& frozen);  // value copy, no gradient flow
    NodeId param(Param& p);             // gradient accumulates into p.g

    // (m,k) x (k,n) -> (m,n)
    NodeId matmul(NodeId a, NodeId b);
    // Same shape, or (m,n) + (n) row broadcast.
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId gelu(NodeId a);
    // Normalizes each row of x to zero mean / unit variance, then applies
    // elementwise gain and bias (both shaped (cols)).
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias);
    // Gathers rows (0-based) from a (num, k) table -> (rows.size(), k).
    NodeId select_rows(NodeId table, std::vector<std::int64_t> rows);
    // Stacks row blocks vertically; all parts must share cols.
    NodeId vstack(const std::vector<NodeId>& parts);
    // Rows [r0, r1) of a -> (r1-r0, cols).
    NodeId slice_rows(NodeId a, std::int64_t r0, std::int64_t r1);
    // Masked single-head attention over (T, d) query/key/value. mask is a
    // row-major T*T byte matrix; mask[i*T+j] != 0 lets row i attend to
    // row j. Masked scores never receive weight, even for rows whose
    // visible set is empty (their output is zero).
    NodeId attention(NodeId q, NodeId k, NodeId v, const std::vector<std::uint8_t>& mask);
    // Mean over active rows of -log softmax(logits)[target]. targets are
    // 0-based column indices per row; rows with active[i] == 0 are
    // excluded. Scalar output.
    NodeId softmax_cross_entropy(NodeId logits, const std::vector<std::int64_t>& targets,
                                 const std::vector<std::uint8_t>& active);
    // Mean squared error over active rows (all elements of those rows).
    // target must be a constant/input node. Scalar output.
    NodeId mean_squared_error(NodeId pred, NodeId target,
                              const std::vector<std::uint8_t>& active);
    // wa*a + wb*b for scalar nodes.
    NodeId add_weighted(NodeId a, NodeId b, double wa, double wb);

    const Tensor& value(NodeId id) const;
    const Tensor& gradient(NodeId id) const;

    // Seeds d(node) = 1 and propagates. The node must be scalar.
    void backward(NodeId id);

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void()> back;
        Param* bound = nullptr;
    };

    NodeId push(Tensor val);
    Node& at(NodeId id);

    std::vector<Node> nodes_;
};

// Decoupled weight-decay Adam.
struct AdamwConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

class AdamW {
public:
    AdamW(std::vector<Param*> params, AdamwConfig cfg);

    // Applies one update from the accumulated gradients. Throws
    // NumericError naming the parameter if a gradient is non-finite.
    void step();
    void zero_grad();
    std::int64_t steps_taken() const { return t_; }
    AdamwConfig& config() { return cfg_; }

private:
    std::vector<Param*> params_;
    AdamwConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

// Exponential moving average of parameters. swap() exchanges shadow and
// live values; call it once to evaluate with averaged weights and again
// to resume training.
class Ema {
public:
    Ema(std::vector<Param*> params, double decay);

    void update();
    void swap();
    bool swapped_in() const { return swapped_; }
    double decay() const { return decay_; }
    const Tensor& shadow(std::size_t i) const { return shadow_[i]; }

private:
    std::vector<Param*> params_;
    double decay_;
    std::vector<Tensor> shadow_;
    bool swapped_ = false;
};

// Checkpoint payload helpers: named parameter blobs stored as f32.
void write_params(std::ostream& os, const std::vector<const Param*>& params);
void read_params(std::istream& is, const std::vector<Param*>& params);

}  // namespace dd::nn
