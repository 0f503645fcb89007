#pragma once

#include "idcl/autograd.hpp"

namespace idcl {

/// Paired scores ŷ = ⟨z_u, z_i⟩ per row (B x 1).
inline ag::Var predict_scores(const ag::Var& users, const ag::Var& items) {
    if (users.rows() != items.rows() || users.cols() != items.cols()) {
        throw ShapeError("predict_scores: " + shape_str(users.rows(), users.cols()) + " vs " + shape_str(items.rows(), items.cols()));
    }
    return ag::row_dot(users, items);
}

/// Dense user x item score matrix for ranking.
inline Matrix score_matrix(const Matrix& users, const Matrix& items) {
    if (users.cols() != items.cols()) throw ShapeError("score_matrix: embedding widths differ");
    return users * items.transpose();
}

/// mean of -log σ(pos - neg), written as softplus(neg - pos).
inline ag::Var bpr_loss(const ag::Var& pos, const ag::Var& neg) {
    require_same_shape(pos.value(), neg.value(), "bpr_loss");
    return ag::mean(ag::softplus(ag::sub(neg, pos)));
}

}  // namespace idcl
