#pragma once

// Coding-rate-reduction regularizer. All quantities are in nats.

#include "idcl/autograd.hpp"

namespace idcl {

struct RateReport {
    double total = 0;    // R(Z, ε)
    double compact = 0;  // R^c(Z, ε | Π)
    double reduction = 0;
    int degenerate_groups = 0;
};

namespace detail {

inline void require_finite(const Matrix& m, const char* op) {
    if (!m.allFinite()) throw NumericalError(std::string(op) + ": non-finite input");
}

/// tr(w)/(2F) log det(I + d/(tr(w) ε²) Zᵀ diag(w) Z); `trace` is sum(w).
inline ag::Var group_term(const ag::Var& z, const ag::Var& weights, const ag::Var& trace, double eps) {
    const double f = static_cast<double>(z.rows());
    const double d = static_cast<double>(z.cols());
    ag::Var gram = ag::scale_by(ag::weighted_gram(z, weights), ag::scale(ag::reciprocal(trace), d / (eps * eps)));
    ag::Var logdet = ag::logdet_spd(ag::add_identity(gram, 1.0));
    return ag::scale(ag::scale_by(logdet, trace), 1.0 / (2.0 * f));
}

}  // namespace detail

/// R(Z, ε) = ½ log det(I + d/(F ε²) ZᵀZ) for Z of shape F x d. Evaluated as a
/// single group with unit membership so that R^c with one full group matches it
/// bit for bit.
inline ag::Var coding_rate(const ag::Var& z, double eps) {
    if (z.rows() < 1) throw ShapeError("coding_rate: need at least one row");
    if (!(eps > 0)) throw ConfigError("coding_rate: epsilon must be positive");
    detail::require_finite(z.value(), "coding_rate");
    ag::Var ones = ag::constant(Matrix::Ones(z.rows(), 1));
    return detail::group_term(z, ones, ag::sum(ones), eps);
}

/// R^c(Z, ε | Π) = Σ_k tr(Π_k)/(2F) log det(I + d/(tr(Π_k) ε²) Zᵀ Π_k Z), with the
/// diagonal of Π_k given as column k of `membership` (F x K). Groups with
/// tr(Π_k) < 1e-8 contribute zero and are counted in `degenerate`.
inline ag::Var group_compactness(const ag::Var& z, const ag::Var& membership, double eps, int* degenerate = nullptr) {
    if (membership.rows() != z.rows()) {
        throw ShapeError("group_compactness: membership " + shape_str(membership.rows(), membership.cols()) +
                         " vs features " + shape_str(z.rows(), z.cols()));
    }
    if (!(eps > 0)) throw ConfigError("group_compactness: epsilon must be positive");
    detail::require_finite(z.value(), "group_compactness");
    detail::require_finite(membership.value(), "group_compactness");
    ag::Var total = ag::scalar_constant(0.0);
    int skipped = 0;
    for (Index k = 0; k < membership.cols(); ++k) {
        ag::Var weights = ag::slice_cols(membership, k, 1);
        ag::Var trace = ag::sum(weights);
        if (trace.scalar() < 1e-8) {
            ++skipped;
            continue;
        }
        total = ag::add(total, detail::group_term(z, weights, trace, eps));
    }
    if (degenerate) *degenerate = skipped;
    return total;
}

/// L_ΔR = -R(Z, ε) + R^c(Z, ε | Π).
inline ag::Var rate_reduction_loss(const ag::Var& z, const ag::Var& membership, double eps) {
    return ag::sub(group_compactness(z, membership, eps), coding_rate(z, eps));
}

inline RateReport rate_report(const Matrix& z, const Matrix& membership, double eps) {
    RateReport r;
    r.total = coding_rate(ag::constant(z), eps).scalar();
    r.compact = group_compactness(ag::constant(z), ag::constant(membership), eps, &r.degenerate_groups).scalar();
    r.reduction = r.total - r.compact;
    return r;
}

}  // namespace idcl
