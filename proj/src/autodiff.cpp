#include "credo/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace credo::ad {

namespace {

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch (" + shape_str(a) +
                                " vs " + shape_str(b) + ")");
}

[[noreturn]] void shape_error(Op op, const Matrix& a, const std::string& expectation) {
    throw std::invalid_argument(std::string(op_name(op)) + ": got shape " + shape_str(a) + ", " +
                                expectation);
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Input: return "input";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::Relu: return "relu";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Square: return "square";
        case Op::Reciprocal: return "reciprocal";
        case Op::Step: return "step";
        case Op::RowMax: return "row_max";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::SumRows: return "sum_rows";
        case Op::SumCols: return "sum_cols";
        case Op::RepeatRows: return "repeat_rows";
        case Op::RepeatCols: return "repeat_cols";
        case Op::BroadcastScalar: return "broadcast_scalar";
        case Op::Concat: return "concat";
        case Op::SliceCols: return "slice_cols";
        case Op::EmbedCols: return "embed_cols";
        case Op::Transpose: return "transpose";
        case Op::Scale: return "scale";
    }
    return "?";
}

const Matrix& Tensor::value() const {
    if (!graph_) throw std::logic_error("Tensor: empty handle");
    return graph_->value_of(id_);
}

double Tensor::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) {
        throw std::invalid_argument("Tensor::scalar: tensor is " + shape_str(v) + ", not 1x1");
    }
    return v(0, 0);
}

Tensor Graph::input(Matrix value) {
    nodes_.push_back(Node{Op::Input, {}, std::move(value), 0.0, 0, 0});
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Graph::constant(Matrix value) {
    nodes_.push_back(Node{Op::Constant, {}, std::move(value), 0.0, 0, 0});
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::check_owns(const Tensor& t, const char* what) const {
    if (t.graph() != this || t.id() < 0 || t.id() >= static_cast<int>(nodes_.size())) {
        throw std::invalid_argument(std::string(what) + ": tensor does not belong to this graph");
    }
}

void Graph::set_value(const Tensor& leaf, Matrix value) {
    check_owns(leaf, "set_value");
    Node& node = nodes_[static_cast<std::size_t>(leaf.id())];
    if (node.op != Op::Input && node.op != Op::Constant) {
        throw std::invalid_argument("set_value: node is not a leaf");
    }
    if (node.value.rows() != value.rows() || node.value.cols() != value.cols()) {
        shape_error(node.op, value, "expected " + shape_str(node.value));
    }
    node.value = std::move(value);
}

void Graph::recompute() {
    for (Node& node : nodes_) {
        if (node.op == Op::Input || node.op == Op::Constant) continue;
        node.value = eval(node);
    }
}

Tensor Graph::emit(Op op, std::vector<int> parents, double attr, int i0, int i1) {
    Node node{op, std::move(parents), Matrix(), attr, i0, i1};
    node.value = eval(node);
    if (!node.value.allFinite()) {
        throw NonFiniteError(std::string(op_name(op)) + ": non-finite forward value");
    }
    nodes_.push_back(std::move(node));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix Graph::eval(const Node& node) const {
    auto p = [&](int k) -> const Matrix& {
        return nodes_[static_cast<std::size_t>(node.parents[static_cast<std::size_t>(k)])].value;
    };
    switch (node.op) {
        case Op::Constant:
        case Op::Input:
            return node.value;
        case Op::Add:
            if (p(0).rows() != p(1).rows() || p(0).cols() != p(1).cols())
                shape_error(node.op, p(0), p(1));
            return p(0) + p(1);
        case Op::Sub:
            if (p(0).rows() != p(1).rows() || p(0).cols() != p(1).cols())
                shape_error(node.op, p(0), p(1));
            return p(0) - p(1);
        case Op::Mul:
            if (p(0).rows() != p(1).rows() || p(0).cols() != p(1).cols())
                shape_error(node.op, p(0), p(1));
            return p(0).cwiseProduct(p(1));
        case Op::MatMul:
            if (p(0).cols() != p(1).rows()) shape_error(node.op, p(0), p(1));
            return p(0) * p(1);
        case Op::Relu:
            return p(0).cwiseMax(0.0);
        case Op::Tanh:
            return p(0).array().tanh().matrix();
        case Op::Sigmoid:
            return (1.0 + (-p(0).array()).exp()).inverse().matrix();
        case Op::Exp:
            return p(0).array().exp().matrix();
        case Op::Log:
            return p(0).array().log().matrix();
        case Op::Square:
            return p(0).array().square().matrix();
        case Op::Reciprocal:
            return p(0).array().inverse().matrix();
        case Op::Step:
            return (p(0).array() > 0.0).cast<double>().matrix();
        case Op::RowMax:
            return p(0).rowwise().maxCoeff();
        case Op::Sum:
            return Matrix::Constant(1, 1, p(0).sum());
        case Op::Mean:
            return Matrix::Constant(1, 1, p(0).mean());
        case Op::SumRows:
            return p(0).colwise().sum();
        case Op::SumCols:
            return p(0).rowwise().sum();
        case Op::RepeatRows:
            if (p(0).rows() != 1) shape_error(node.op, p(0), "expected a single row");
            return p(0).replicate(node.i0, 1);
        case Op::RepeatCols:
            if (p(0).cols() != 1) shape_error(node.op, p(0), "expected a single column");
            return p(0).replicate(1, node.i0);
        case Op::BroadcastScalar:
            if (p(0).size() != 1) shape_error(node.op, p(0), "expected 1x1");
            return Matrix::Constant(node.i0, node.i1, p(0)(0, 0));
        case Op::Concat: {
            if (p(0).rows() != p(1).rows()) shape_error(node.op, p(0), p(1));
            Matrix out(p(0).rows(), p(0).cols() + p(1).cols());
            out.leftCols(p(0).cols()) = p(0);
            out.rightCols(p(1).cols()) = p(1);
            return out;
        }
        case Op::SliceCols:
            if (node.i0 < 0 || node.i1 <= 0 || node.i0 + node.i1 > p(0).cols())
                shape_error(node.op, p(0),
                            "cannot slice columns [" + std::to_string(node.i0) + ", " +
                                std::to_string(node.i0 + node.i1) + ")");
            return p(0).middleCols(node.i0, node.i1);
        case Op::EmbedCols: {
            if (node.i0 < 0 || node.i0 + p(0).cols() > node.i1)
                shape_error(node.op, p(0),
                            "cannot embed at column " + std::to_string(node.i0) + " of " +
                                std::to_string(node.i1));
            Matrix out = Matrix::Zero(p(0).rows(), node.i1);
            out.middleCols(node.i0, p(0).cols()) = p(0);
            return out;
        }
        case Op::Transpose:
            return p(0).transpose();
        case Op::Scale:
            return node.attr * p(0);
    }
    throw std::logic_error("eval: unknown op");
}

namespace {

Tensor node_of(Graph* g, int id) { return Tensor(g, id); }

}  // namespace

std::vector<Tensor> Graph::backward(const Tensor& output, const std::vector<Tensor>& wrt) {
    check_owns(output, "backward");
    if (output.value().size() != 1) {
        throw std::invalid_argument("backward: output must be scalar, got shape " +
                                    shape_str(output.value()));
    }
    for (const Tensor& t : wrt) check_owns(t, "backward wrt");

    const int root = output.id();
    // Ancestors of the output; adjoints only flow there.
    std::vector<char> reachable(static_cast<std::size_t>(root) + 1, 0);
    reachable[static_cast<std::size_t>(root)] = 1;
    for (int id = root; id >= 0; --id) {
        if (!reachable[static_cast<std::size_t>(id)]) continue;
        for (int pid : nodes_[static_cast<std::size_t>(id)].parents)
            reachable[static_cast<std::size_t>(pid)] = 1;
    }

    // adjoint[id] = node id of the accumulated gradient of `output` w.r.t. node id
    std::vector<int> adjoint(static_cast<std::size_t>(root) + 1, -1);
    adjoint[static_cast<std::size_t>(root)] = constant(Matrix::Ones(1, 1)).id();

    auto accumulate = [&](int target, const Tensor& contribution) {
        int& slot = adjoint[static_cast<std::size_t>(target)];
        slot = slot < 0 ? contribution.id() : add(node_of(this, slot), contribution).id();
    };

    for (int id = root; id >= 0; --id) {
        if (!reachable[static_cast<std::size_t>(id)] || adjoint[static_cast<std::size_t>(id)] < 0)
            continue;
        // Copy ingredients: emitting adjoint nodes reallocates nodes_.
        const Op op = nodes_[static_cast<std::size_t>(id)].op;
        const std::vector<int> parents = nodes_[static_cast<std::size_t>(id)].parents;
        const double attr = nodes_[static_cast<std::size_t>(id)].attr;
        const int i0 = nodes_[static_cast<std::size_t>(id)].i0;
        Tensor g = node_of(this, adjoint[static_cast<std::size_t>(id)]);
        Tensor y = node_of(this, id);
        auto parent = [&](int k) { return node_of(this, parents[static_cast<std::size_t>(k)]); };

        switch (op) {
            case Op::Constant:
            case Op::Input:
                break;
            case Op::Add:
                accumulate(parents[0], g);
                accumulate(parents[1], g);
                break;
            case Op::Sub:
                accumulate(parents[0], g);
                accumulate(parents[1], scale(g, -1.0));
                break;
            case Op::Mul:
                accumulate(parents[0], mul(g, parent(1)));
                accumulate(parents[1], mul(g, parent(0)));
                break;
            case Op::MatMul:
                accumulate(parents[0], matmul(g, transpose(parent(1))));
                accumulate(parents[1], matmul(transpose(parent(0)), g));
                break;
            case Op::Relu:
                accumulate(parents[0], mul(g, step(parent(0))));
                break;
            case Op::Step:
            case Op::RowMax:
                // zero derivative (a.e. for step; locally constant argmax for row_max)
                break;
            case Op::Tanh: {
                Tensor ones = constant(Matrix::Ones(y.rows(), y.cols()));
                accumulate(parents[0], mul(g, sub(ones, square(y))));
                break;
            }
            case Op::Sigmoid: {
                Tensor ones = constant(Matrix::Ones(y.rows(), y.cols()));
                accumulate(parents[0], mul(g, mul(y, sub(ones, y))));
                break;
            }
            case Op::Exp:
                accumulate(parents[0], mul(g, y));
                break;
            case Op::Log:
                accumulate(parents[0], mul(g, reciprocal(parent(0))));
                break;
            case Op::Reciprocal:
                accumulate(parents[0], mul(g, scale(square(y), -1.0)));
                break;
            case Op::Square:
                accumulate(parents[0], mul(g, scale(parent(0), 2.0)));
                break;
            case Op::Sum:
                accumulate(parents[0], broadcast_scalar(g, static_cast<int>(parent(0).rows()),
                                                        static_cast<int>(parent(0).cols())));
                break;
            case Op::Mean: {
                const double inv = 1.0 / static_cast<double>(parent(0).value().size());
                accumulate(parents[0],
                           scale(broadcast_scalar(g, static_cast<int>(parent(0).rows()),
                                                  static_cast<int>(parent(0).cols())),
                                 inv));
                break;
            }
            case Op::SumRows:
                accumulate(parents[0], repeat_rows(g, static_cast<int>(parent(0).rows())));
                break;
            case Op::SumCols:
                accumulate(parents[0], repeat_cols(g, static_cast<int>(parent(0).cols())));
                break;
            case Op::RepeatRows:
                accumulate(parents[0], sum_rows(g));
                break;
            case Op::RepeatCols:
                accumulate(parents[0], sum_cols(g));
                break;
            case Op::BroadcastScalar:
                accumulate(parents[0], sum(g));
                break;
            case Op::Concat: {
                const int ca = static_cast<int>(parent(0).cols());
                const int cb = static_cast<int>(parent(1).cols());
                accumulate(parents[0], slice_cols(g, 0, ca));
                accumulate(parents[1], slice_cols(g, ca, cb));
                break;
            }
            case Op::SliceCols:
                accumulate(parents[0],
                           embed_cols(g, i0, static_cast<int>(parent(0).cols())));
                break;
            case Op::EmbedCols:
                accumulate(parents[0], slice_cols(g, i0, static_cast<int>(parent(0).cols())));
                break;
            case Op::Transpose:
                accumulate(parents[0], transpose(g));
                break;
            case Op::Scale:
                accumulate(parents[0], scale(g, attr));
                break;
        }
    }

    std::vector<Tensor> grads;
    grads.reserve(wrt.size());
    for (const Tensor& t : wrt) {
        int slot = t.id() <= root ? adjoint[static_cast<std::size_t>(t.id())] : -1;
        if (slot >= 0) {
            grads.push_back(node_of(this, slot));
        } else {
            grads.push_back(constant(Matrix::Zero(t.rows(), t.cols())));
        }
    }
    return grads;
}

namespace {

Graph* common_graph(const Tensor& a, const Tensor& b, Op op) {
    if (!a.valid() || !b.valid() || a.graph() != b.graph()) {
        throw std::invalid_argument(std::string(op_name(op)) +
                                    ": operands belong to different graphs");
    }
    return a.graph();
}

Tensor unary(Op op, const Tensor& x, double attr = 0.0, int i0 = 0, int i1 = 0) {
    if (!x.valid()) throw std::invalid_argument(std::string(op_name(op)) + ": empty tensor");
    return x.graph()->emit(op, {x.id()}, attr, i0, i1);
}

Tensor binary(Op op, const Tensor& a, const Tensor& b) {
    return common_graph(a, b, op)->emit(op, {a.id(), b.id()});
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Op::Mul, a, b); }
Tensor matmul(const Tensor& a, const Tensor& b) { return binary(Op::MatMul, a, b); }
Tensor relu(const Tensor& x) { return unary(Op::Relu, x); }
Tensor tanh(const Tensor& x) { return unary(Op::Tanh, x); }
Tensor sigmoid(const Tensor& x) { return unary(Op::Sigmoid, x); }
Tensor exp(const Tensor& x) { return unary(Op::Exp, x); }
Tensor log(const Tensor& x) { return unary(Op::Log, x); }
Tensor square(const Tensor& x) { return unary(Op::Square, x); }
Tensor reciprocal(const Tensor& x) { return unary(Op::Reciprocal, x); }
Tensor step(const Tensor& x) { return unary(Op::Step, x); }
Tensor row_max(const Tensor& x) { return unary(Op::RowMax, x); }
Tensor sum(const Tensor& x) { return unary(Op::Sum, x); }
Tensor mean(const Tensor& x) { return unary(Op::Mean, x); }
Tensor sum_rows(const Tensor& x) { return unary(Op::SumRows, x); }
Tensor sum_cols(const Tensor& x) { return unary(Op::SumCols, x); }
Tensor repeat_rows(const Tensor& x, int n) { return unary(Op::RepeatRows, x, 0.0, n); }
Tensor repeat_cols(const Tensor& x, int n) { return unary(Op::RepeatCols, x, 0.0, n); }
Tensor broadcast_scalar(const Tensor& x, int rows, int cols) {
    return unary(Op::BroadcastScalar, x, 0.0, rows, cols);
}
Tensor concat(const Tensor& a, const Tensor& b) { return binary(Op::Concat, a, b); }
Tensor slice_cols(const Tensor& x, int offset, int count) {
    return unary(Op::SliceCols, x, 0.0, offset, count);
}
Tensor embed_cols(const Tensor& x, int offset, int total_cols) {
    return unary(Op::EmbedCols, x, 0.0, offset, total_cols);
}
Tensor transpose(const Tensor& x) { return unary(Op::Transpose, x); }
Tensor scale(const Tensor& x, double factor) { return unary(Op::Scale, x, factor); }

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor xw = matmul(x, w);
    return add(xw, repeat_rows(b, static_cast<int>(x.rows())));
}

Tensor clamp_feature(const Tensor& x, int col, double alpha) {
    const int rows = static_cast<int>(x.rows());
    const int cols = static_cast<int>(x.cols());
    if (col < 0 || col >= cols) {
        throw std::invalid_argument("clamp_feature: column " + std::to_string(col) +
                                    " out of range for width " + std::to_string(cols));
    }
    Matrix mask = Matrix::Ones(rows, cols);
    mask.col(col).setZero();
    Matrix fill = Matrix::Zero(rows, cols);
    fill.col(col).setConstant(alpha);
    Graph* g = x.graph();
    return add(mul(x, g->constant(mask)), g->constant(fill));
}

Tensor softmax_rows(const Tensor& logits) {
    const int k = static_cast<int>(logits.cols());
    Tensor shifted = sub(logits, repeat_cols(row_max(logits), k));
    Tensor e = exp(shifted);
    Tensor norm = reciprocal(sum_cols(e));
    return mul(e, repeat_cols(norm, k));
}

Tensor log_softmax_rows(const Tensor& logits) {
    const int k = static_cast<int>(logits.cols());
    Tensor shifted = sub(logits, repeat_cols(row_max(logits), k));
    Tensor lse = log(sum_cols(exp(shifted)));  // >= 1 per row, log is safe
    return sub(shifted, repeat_cols(lse, k));
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                  double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    Vector grad(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double up = f(probe);
        probe(i) = x(i) - h;
        const double down = f(probe);
        probe(i) = x(i);
        grad(i) = (up - down) / (2.0 * h);
    }
    return grad;
}

void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: params/grads size mismatch (" +
                                    std::to_string(params.size()) + " vs " +
                                    std::to_string(grads.size()) + ")");
    }
    if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
    if (state.m.size() == 0) {
        state.m = Vector::Zero(params.size());
        state.v = Vector::Zero(params.size());
        state.step = 0;
    }
    state.step += 1;
    state.m = beta1 * state.m + (1.0 - beta1) * grads;
    state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseProduct(grads).eval();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    params -= lr * (state.m / c1).cwiseQuotient(((state.v / c2).cwiseSqrt().array() + eps).matrix());
}

}  // namespace credo::ad
