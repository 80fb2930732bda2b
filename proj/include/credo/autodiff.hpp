#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace credo::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Every tensor is a dense (rows x cols) matrix of doubles; scalars are 1x1.
// That covers everything this project computes on: batches are rows, features
// are columns.
enum class Op : std::uint8_t {
    Constant,
    Input,
    Add,
    Sub,
    Mul,      // elementwise
    MatMul,
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Square,
    Reciprocal,
    Step,     // heaviside(x), zero derivative everywhere it matters
    RowMax,   // rowwise max, treated as locally constant in backward
    Sum,      // all elements -> 1x1
    Mean,     // all elements -> 1x1
    SumRows,  // B x C -> 1 x C
    SumCols,  // B x C -> B x 1
    RepeatRows,       // 1 x C -> n x C
    RepeatCols,       // B x 1 -> B x n
    BroadcastScalar,  // 1 x 1 -> r x c
    Concat,           // side by side along columns
    SliceCols,
    EmbedCols,  // place block into a wider zero matrix
    Transpose,
    Scale,  // multiply by a fixed scalar
};

const char* op_name(Op op);

/// Thrown when a forward evaluation produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
  public:
    explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

class Graph;

/// Lightweight handle to a node in a Graph. Copies are cheap; the forward
/// value lives in the graph.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}

    Graph* graph() const { return graph_; }
    int id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    /// Value of a 1x1 tensor.
    double scalar() const;

  private:
    Graph* graph_ = nullptr;
    int id_ = -1;
};

/// Dynamically built computation graph. Nodes are appended in evaluation
/// order, so parents always have smaller ids and the insertion order is a
/// topological order. backward() emits the gradient computation as new nodes
/// of the same graph, which is what makes gradient-valued objectives (double
/// backpropagation) trainable.
class Graph {
  public:
    Tensor input(Matrix value);
    Tensor constant(Matrix value);
    Tensor constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

    /// Overwrite the value of an Input/Constant leaf; call recompute() after.
    void set_value(const Tensor& leaf, Matrix value);

    /// Re-evaluate every non-leaf node in insertion order. Deterministic:
    /// identical leaf values reproduce identical node values bit for bit.
    void recompute();

    /// Reverse-mode differentiation of a scalar output with respect to the
    /// given nodes. Gradients are returned as graph nodes, so any scalar
    /// function of them can be passed to backward() again for higher orders.
    std::vector<Tensor> backward(const Tensor& output, const std::vector<Tensor>& wrt);

    std::size_t size() const { return nodes_.size(); }
    Op op_of(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }
    const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    Tensor emit(Op op, std::vector<int> parents, double attr = 0.0, int i0 = 0, int i1 = 0);

  private:
    struct Node {
        Op op;
        std::vector<int> parents;
        Matrix value;
        double attr = 0.0;  // Scale factor
        int i0 = 0;         // op-specific: offsets, counts, target shapes
        int i1 = 0;
    };

    Matrix eval(const Node& node) const;
    void check_owns(const Tensor& t, const char* what) const;

    std::vector<Node> nodes_;
};

// Graph-building free functions. Shape mismatches throw std::invalid_argument
// naming the op and the offending shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor step(const Tensor& x);
Tensor row_max(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_rows(const Tensor& x);
Tensor sum_cols(const Tensor& x);
Tensor repeat_rows(const Tensor& x, int n);
Tensor repeat_cols(const Tensor& x, int n);
Tensor broadcast_scalar(const Tensor& x, int rows, int cols);
Tensor concat(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int offset, int count);
Tensor embed_cols(const Tensor& x, int offset, int total_cols);
Tensor transpose(const Tensor& x);
Tensor scale(const Tensor& x, double factor);

/// x * w + b applied per row: x is B x D, w is D x K, b is 1 x K.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

/// Replace column `col` of a batch with the constant alpha. Gradient into the
/// replaced column is zero, which is the do-operation on an input feature.
Tensor clamp_feature(const Tensor& x, int col, double alpha);

/// Numerically stable rowwise softmax; rows sum to 1.
Tensor softmax_rows(const Tensor& logits);

/// Rowwise log-softmax, for cross-entropy losses.
Tensor log_softmax_rows(const Tensor& logits);

/// Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
/// Test oracle: intentionally independent of backward().
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                  double h);

struct AdamState {
    Vector m;
    Vector v;
    long step = 0;
};

/// One Adam update with bias correction. Allocates moment buffers on first use.
void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace credo::ad
