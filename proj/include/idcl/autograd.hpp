#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major matrices.
//
// A Var is a handle to a node in a dynamically built expression graph. Every op
// returns a fresh node holding its value and a closure that pushes the incoming
// gradient to its parents. Nodes that do not depend on any trainable leaf keep
// neither parents nor a closure, so constant subexpressions cost nothing on the
// backward pass.

#include "idcl/tensor.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

namespace idcl::ag {

struct Node {
    Matrix value;
    Matrix grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Matrix&)> backward;

    Matrix& grad_buffer() {
        if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
        return grad;
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] const Matrix& value() const { return node_->value; }
    /// Direct access for optimizers and checkpoint loading; invalidates graphs built on top.
    [[nodiscard]] Matrix& mutable_value() { return node_->value; }
    [[nodiscard]] const Matrix& grad() const { return node_->grad; }
    [[nodiscard]] bool has_grad() const { return node_->grad.size() != 0; }
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    [[nodiscard]] Index rows() const { return node_->value.rows(); }
    [[nodiscard]] Index cols() const { return node_->value.cols(); }
    [[nodiscard]] double scalar() const { return node_->value(0, 0); }
    [[nodiscard]] const std::shared_ptr<Node>& node() const { return node_; }

    void zero_grad() { node_->grad.resize(0, 0); }

    /// Identity of the underlying node, used to check parameter sharing.
    [[nodiscard]] bool same_node(const Var& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<Node> node_;
};

inline Var parameter(Matrix value) { return Var(std::move(value), true); }
inline Var constant(Matrix value) { return Var(std::move(value), false); }
inline Var scalar_constant(double v) { return Var(Matrix::Constant(1, 1, v), false); }

namespace detail {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables graph recording on this thread for its lifetime (inference passes).
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

inline void accumulate(const Var& v, const Matrix& g) {
    if (v.requires_grad()) v.node()->grad_buffer() += g;
}

template <class Backward>
Var make_op(Matrix value, std::initializer_list<Var> parents, Backward&& backward) {
    Var out(std::move(value), false);
    bool any = false;
    if (grad_mode()) {
        for (const auto& p : parents) any = any || p.requires_grad();
    }
    if (any) {
        auto& node = *out.node();
        node.requires_grad = true;
        for (const auto& p : parents) {
            if (p.requires_grad()) node.parents.push_back(p.node());
        }
        node.backward = std::forward<Backward>(backward);
    }
    return out;
}

template <class Backward>
Var make_op_n(Matrix value, const std::vector<Var>& parents, Backward&& backward) {
    Var out(std::move(value), false);
    bool any = false;
    if (grad_mode()) {
        for (const auto& p : parents) any = any || p.requires_grad();
    }
    if (any) {
        auto& node = *out.node();
        node.requires_grad = true;
        for (const auto& p : parents) {
            if (p.requires_grad()) node.parents.push_back(p.node());
        }
        node.backward = std::forward<Backward>(backward);
    }
    return out;
}

inline void require_scalar(const Var& s, const char* op) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw ShapeError(std::string(op) + ": expected a 1x1 scalar, got " + shape_str(s.rows(), s.cols()));
    }
}

}  // namespace detail

/// Runs reverse accumulation from a scalar root. Gradients accumulate into leaves.
inline void backward(const Var& root) {
    detail::require_scalar(root, "backward");
    if (!root.requires_grad()) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer().setConstant(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad.size() != 0) node->backward(node->grad);
    }
}

inline Var stop_gradient(const Var& a) { return constant(a.value()); }

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    return detail::make_op(a.value() + b.value(), {a, b}, [a, b](const Matrix& g) {
        detail::accumulate(a, g);
        detail::accumulate(b, g);
    });
}

inline Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    return detail::make_op(a.value() - b.value(), {a, b}, [a, b](const Matrix& g) {
        detail::accumulate(a, g);
        detail::accumulate(b, -g);
    });
}

inline Var hadamard(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "hadamard");
    return detail::make_op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) detail::accumulate(a, g.cwiseProduct(b.value()));
        if (b.requires_grad()) detail::accumulate(b, g.cwiseProduct(a.value()));
    });
}

inline Var scale(const Var& a, double s) {
    return detail::make_op(a.value() * s, {a}, [a, s](const Matrix& g) { detail::accumulate(a, g * s); });
}

/// a + c for a constant matrix c of the same shape.
inline Var add_constant(const Var& a, const Matrix& c) {
    require_same_shape(a.value(), c, "add_constant");
    return detail::make_op(a.value() + c, {a}, [a](const Matrix& g) { detail::accumulate(a, g); });
}

/// a + c·I for square a.
inline Var add_identity(const Var& a, double c) {
    if (a.rows() != a.cols()) throw ShapeError("add_identity: matrix is not square");
    Matrix v = a.value();
    v.diagonal().array() += c;
    return detail::make_op(std::move(v), {a}, [a](const Matrix& g) { detail::accumulate(a, g); });
}

/// a · s where s is a 1x1 Var.
inline Var scale_by(const Var& a, const Var& s) {
    detail::require_scalar(s, "scale_by");
    const double sv = s.scalar();
    return detail::make_op(a.value() * sv, {a, s}, [a, s, sv](const Matrix& g) {
        if (a.requires_grad()) detail::accumulate(a, g * sv);
        if (s.requires_grad()) detail::accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    });
}

inline Var reciprocal(const Var& a) {
    Matrix v = a.value().cwiseInverse();
    return detail::make_op(v, {a}, [a, v](const Matrix& g) {
        detail::accumulate(a, -g.cwiseProduct(v).cwiseProduct(v));
    });
}

inline Var log(const Var& a) {
    return detail::make_op(a.value().array().log().matrix(), {a}, [a](const Matrix& g) {
        detail::accumulate(a, g.cwiseQuotient(a.value()));
    });
}

inline Var tanh(const Var& a) {
    Matrix v = a.value().array().tanh().matrix();
    return detail::make_op(v, {a}, [a, v](const Matrix& g) {
        detail::accumulate(a, g.cwiseProduct((1.0 - v.array().square()).matrix()));
    });
}

/// log(1 + exp(x)), evaluated without overflow.
inline Var softplus(const Var& a) {
    Matrix v = a.value().unaryExpr([](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
    return detail::make_op(std::move(v), {a}, [a](const Matrix& g) {
        Matrix sig = a.value().unaryExpr([](double x) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
        detail::accumulate(a, g.cwiseProduct(sig));
    });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& a) {
    return detail::make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](const Matrix& g) {
        detail::accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

inline Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ShapeError("mean: empty matrix");
    return scale(sum(a), 1.0 / n);
}

inline Var squared_norm(const Var& a) {
    return detail::make_op(Matrix::Constant(1, 1, a.value().squaredNorm()), {a}, [a](const Matrix& g) {
        detail::accumulate(a, a.value() * (2.0 * g(0, 0)));
    });
}

/// Row sums as a column (n x 1).
inline Var row_sum(const Var& a) {
    Matrix v = a.value().rowwise().sum();
    return detail::make_op(std::move(v), {a}, [a](const Matrix& g) {
        detail::accumulate(a, g.replicate(1, a.cols()));
    });
}

/// Row-wise dot products of two equally shaped matrices (n x 1).
inline Var row_dot(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "row_dot");
    return row_sum(hadamard(a, b));
}

/// Main diagonal of a square matrix as a column.
inline Var diagonal(const Var& a) {
    if (a.rows() != a.cols()) throw ShapeError("diagonal: matrix is not square");
    Matrix v = a.value().diagonal();
    return detail::make_op(std::move(v), {a}, [a](const Matrix& g) {
        Matrix full = Matrix::Zero(a.rows(), a.cols());
        full.diagonal() = g.col(0);
        detail::accumulate(a, full);
    });
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
    }
    return detail::make_op(a.value() * b.value(), {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) detail::accumulate(a, g * b.value().transpose());
        if (b.requires_grad()) detail::accumulate(b, a.value().transpose() * g);
    });
}

/// a · bᵀ
inline Var matmul_nt(const Var& a, const Var& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()) + "ᵀ");
    }
    return detail::make_op(a.value() * b.value().transpose(), {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) detail::accumulate(a, g * b.value());
        if (b.requires_grad()) detail::accumulate(b, g.transpose() * a.value());
    });
}

/// aᵀ · b
inline Var matmul_tn(const Var& a, const Var& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + shape_str(a.rows(), a.cols()) + "ᵀ x " + shape_str(b.rows(), b.cols()));
    }
    return detail::make_op(a.value().transpose() * b.value(), {a, b}, [a, b](const Matrix& g) {
        if (a.requires_grad()) detail::accumulate(a, b.value() * g.transpose());
        if (b.requires_grad()) detail::accumulate(b, a.value() * g);
    });
}

/// A · x for a constant sparse A.
inline Var spmm(std::shared_ptr<const SparseMatrix> A, const Var& x) {
    if (A->cols() != x.rows()) {
        throw ShapeError("spmm: adjacency " + shape_str(A->rows(), A->cols()) + " vs features " +
                         shape_str(x.rows(), x.cols()));
    }
    Matrix v = (*A) * x.value();
    return detail::make_op(std::move(v), {x}, [A, x](const Matrix& g) {
        detail::accumulate(x, Matrix(A->transpose() * g));
    });
}

/// Zᵀ diag(w) Z for Z (n x d) and a column of weights w (n x 1).
inline Var weighted_gram(const Var& z, const Var& w) {
    if (w.cols() != 1 || w.rows() != z.rows()) {
        throw ShapeError("weighted_gram: weights " + shape_str(w.rows(), w.cols()) + " vs rows of " +
                         shape_str(z.rows(), z.cols()));
    }
    Matrix wz = w.value().col(0).asDiagonal() * z.value();
    Matrix v = z.value().transpose() * wz;
    return detail::make_op(std::move(v), {z, w}, [z, w](const Matrix& g) {
        const Matrix gs = g + g.transpose();
        if (z.requires_grad()) detail::accumulate(z, w.value().col(0).asDiagonal() * (z.value() * gs));
        if (w.requires_grad()) {
            Matrix zg = z.value() * g;
            detail::accumulate(w, zg.cwiseProduct(z.value()).rowwise().sum());
        }
    });
}

/// log det of a symmetric positive-definite matrix via Cholesky.
inline Var logdet_spd(const Var& m) {
    if (m.rows() != m.cols()) throw ShapeError("logdet_spd: matrix is not square");
    Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(m.value()));
    if (llt.info() != Eigen::Success) throw NumericalError("logdet_spd: matrix is not positive definite");
    const Eigen::MatrixXd& L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    return detail::make_op(Matrix::Constant(1, 1, logdet), {m}, [m, llt](const Matrix& g) {
        Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
        Matrix sym = 0.5 * (inv + inv.transpose());
        detail::accumulate(m, sym * g(0, 0));
    });
}

// ---------------------------------------------------------------------------
// Structural ops

/// Selects rows by index; gradients scatter-add back.
inline Var gather_rows(const Var& x, std::span<const int> idx) {
    Matrix v(static_cast<Index>(idx.size()), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= x.rows()) throw ShapeError("gather_rows: index out of range");
        v.row(static_cast<Index>(r)) = x.value().row(idx[r]);
    }
    std::vector<int> rows(idx.begin(), idx.end());
    return detail::make_op(std::move(v), {x}, [x, rows = std::move(rows)](const Matrix& g) {
        Matrix& buf = x.node()->grad_buffer();
        for (std::size_t r = 0; r < rows.size(); ++r) buf.row(rows[r]) += g.row(static_cast<Index>(r));
    });
}

inline Var slice_rows(const Var& x, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > x.rows()) throw ShapeError("slice_rows: out of range");
    Matrix v = x.value().middleRows(start, count);
    return detail::make_op(std::move(v), {x}, [x, start, count](const Matrix& g) {
        x.node()->grad_buffer().middleRows(start, count) += g;
    });
}

inline Var slice_cols(const Var& x, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > x.cols()) throw ShapeError("slice_cols: out of range");
    Matrix v = x.value().middleCols(start, count);
    return detail::make_op(std::move(v), {x}, [x, start, count](const Matrix& g) {
        x.node()->grad_buffer().middleCols(start, count) += g;
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Index rows = parts.front().rows();
    Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    Index offset = 0;
    for (const auto& p : parts) {
        v.middleCols(offset, p.cols()) = p.value();
        offset += p.cols();
    }
    return detail::make_op_n(std::move(v), parts, [parts](const Matrix& g) {
        Index off = 0;
        for (const auto& p : parts) {
            if (p.requires_grad()) detail::accumulate(p, g.middleCols(off, p.cols()));
            off += p.cols();
        }
    });
}

/// Repeats a 1 x c row n times.
inline Var broadcast_rows(const Var& row, Index n) {
    if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a single row");
    Matrix v = row.value().replicate(n, 1);
    return detail::make_op(std::move(v), {row}, [row](const Matrix& g) {
        detail::accumulate(row, g.colwise().sum());
    });
}

/// Repeats an n x 1 column c times.
inline Var broadcast_cols(const Var& col, Index c) {
    if (col.cols() != 1) throw ShapeError("broadcast_cols: expected a single column");
    Matrix v = col.value().replicate(1, c);
    return detail::make_op(std::move(v), {col}, [col](const Matrix& g) {
        detail::accumulate(col, g.rowwise().sum());
    });
}

/// a + bias, with a 1 x c bias broadcast over rows.
inline Var add_row(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw ShapeError("add_row: bias " + shape_str(bias.rows(), bias.cols()) + " vs " + shape_str(a.rows(), a.cols()));
    }
    Matrix v = a.value().rowwise() + bias.value().row(0);
    return detail::make_op(std::move(v), {a, bias}, [a, bias](const Matrix& g) {
        detail::accumulate(a, g);
        if (bias.requires_grad()) detail::accumulate(bias, g.colwise().sum());
    });
}

// ---------------------------------------------------------------------------
// Row-wise normalizations

inline Var row_softmax(const Var& a) {
    Matrix v = a.value();
    for (Index r = 0; r < v.rows(); ++r) {
        const double mx = v.row(r).maxCoeff();
        v.row(r) = (v.row(r).array() - mx).exp().matrix();
        v.row(r) /= v.row(r).sum();
    }
    return detail::make_op(v, {a}, [a, v](const Matrix& g) {
        ColVector dots = g.cwiseProduct(v).rowwise().sum();
        Matrix ga = v.cwiseProduct(g - dots.replicate(1, g.cols()));
        detail::accumulate(a, ga);
    });
}

/// log Σ_j exp(a_rj) per row, as an n x 1 column; -inf entries are ignored.
inline Var row_logsumexp(const Var& a) {
    Matrix v(a.rows(), 1);
    Matrix weights(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
        const double mx = a.value().row(r).maxCoeff();
        if (!std::isfinite(mx)) throw NumericalError("row_logsumexp: row without finite entries");
        weights.row(r) = (a.value().row(r).array() - mx).exp().matrix();
        const double s = weights.row(r).sum();
        v(r, 0) = mx + std::log(s);
        weights.row(r) /= s;
    }
    return detail::make_op(std::move(v), {a}, [a, weights](const Matrix& g) {
        detail::accumulate(a, weights.cwiseProduct(g.replicate(1, weights.cols())));
    });
}

inline Var row_log_softmax(const Var& a) {
    Matrix lse(a.rows(), 1);
    for (Index r = 0; r < a.rows(); ++r) {
        const double mx = a.value().row(r).maxCoeff();
        lse(r, 0) = mx + std::log((a.value().row(r).array() - mx).exp().sum());
    }
    Matrix v = a.value() - lse.replicate(1, a.cols());
    return detail::make_op(v, {a}, [a, v](const Matrix& g) {
        Matrix p = v.array().exp().matrix();
        ColVector gsum = g.rowwise().sum();
        detail::accumulate(a, g - p.cwiseProduct(gsum.replicate(1, g.cols())));
    });
}

/// Scales each row to unit length; norms below eps are floored at eps.
inline Var row_normalize(const Var& a, double eps = 1e-12) {
    ColVector norms = a.value().rowwise().norm();
    ColVector denom = norms.cwiseMax(eps);
    Matrix v = denom.cwiseInverse().asDiagonal() * a.value();
    return detail::make_op(v, {a}, [a, v, norms, denom, eps](const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (Index r = 0; r < g.rows(); ++r) {
            if (norms(r) > eps) {
                const double proj = g.row(r).dot(v.row(r));
                ga.row(r) = (g.row(r) - proj * v.row(r)) / denom(r);
            } else {
                ga.row(r) = g.row(r) / eps;
            }
        }
        detail::accumulate(a, ga);
    });
}

}  // namespace idcl::ag
