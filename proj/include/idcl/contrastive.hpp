#pragma once

// Intent-wise contrastive objective: behavior confidence over intents from the
// semantic-basis prototypes, and one NT-Xent subtask per intent.

#include "idcl/autograd.hpp"

#include <limits>
#include <vector>

namespace idcl {

/// Logits cos(z_{e,k}, b_k) / τ, B x K. Norms are floored at 1e-12.
inline ag::Var intent_logits(const std::vector<ag::Var>& slices, const ag::Var& bases, double tau) {
    if (!(tau > 0)) throw ConfigError("intent_logits: temperature must be positive");
    if (static_cast<Index>(slices.size()) != bases.rows()) {
        throw ShapeError("intent_logits: " + std::to_string(slices.size()) + " slices for " + std::to_string(bases.rows()) + " bases");
    }
    ag::Var unit_bases = ag::row_normalize(bases);
    std::vector<ag::Var> cols;
    cols.reserve(slices.size());
    for (std::size_t k = 0; k < slices.size(); ++k) {
        if (slices[k].cols() != bases.cols()) throw ShapeError("intent_logits: slice and basis widths differ");
        cols.push_back(ag::matmul_nt(ag::row_normalize(slices[k]), ag::slice_rows(unit_bases, static_cast<Index>(k), 1)));
    }
    return ag::scale(ag::concat_cols(cols), 1.0 / tau);
}

/// p_θ(k|e): row-softmax of the intent logits.
inline ag::Var intent_confidence(const std::vector<ag::Var>& slices, const ag::Var& bases, double tau) {
    return ag::row_softmax(intent_logits(slices, bases, tau));
}

/// log p_θ(e'|e,k) for every anchor in the batch (B x 1). Augmented views of the
/// other behaviors in the batch act as negatives. With `exclude_positive` the
/// denominator runs over j ≠ e only.
inline ag::Var subtask_logprob(const ag::Var& anchors, const ag::Var& positives, double tau, bool exclude_positive = false) {
    if (!(tau > 0)) throw ConfigError("subtask_logprob: temperature must be positive");
    if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
        throw ShapeError("subtask_logprob: anchors " + shape_str(anchors.rows(), anchors.cols()) + " vs positives " +
                         shape_str(positives.rows(), positives.cols()));
    }
    if (anchors.rows() < 2) throw ShapeError("subtask_logprob: need a batch of at least 2 behaviors");
    ag::Var sim = ag::scale(ag::matmul_nt(ag::row_normalize(anchors), ag::row_normalize(positives)), 1.0 / tau);
    if (!exclude_positive) return ag::diagonal(ag::row_log_softmax(sim));
    Matrix mask = Matrix::Zero(sim.rows(), sim.cols());
    mask.diagonal().setConstant(-std::numeric_limits<double>::infinity());
    return ag::sub(ag::diagonal(sim), ag::row_logsumexp(ag::add_constant(sim, mask)));
}

/// Stacks per-intent B x 1 columns into B x K.
inline ag::Var stack_subtasks(const std::vector<ag::Var>& per_intent) { return ag::concat_cols(per_intent); }

/// Confidence-weighted form: mean_e Σ_k -p(k|e) log p(e'|e,k).
inline ag::Var icl_loss(const ag::Var& confidence, const ag::Var& logprobs) {
    require_same_shape(confidence.value(), logprobs.value(), "icl_loss");
    return ag::scale(ag::sum(ag::hadamard(confidence, logprobs)), -1.0 / static_cast<double>(confidence.rows()));
}

/// Expectation inside the log: mean_e -log Σ_k p(k|e) p(e'|e,k), from log-probabilities.
inline ag::Var icl_loss_exact(const ag::Var& log_confidence, const ag::Var& logprobs) {
    require_same_shape(log_confidence.value(), logprobs.value(), "icl_loss_exact");
    return ag::scale(ag::sum(ag::row_logsumexp(ag::add(log_confidence, logprobs))),
                     -1.0 / static_cast<double>(log_confidence.rows()));
}

}  // namespace idcl
