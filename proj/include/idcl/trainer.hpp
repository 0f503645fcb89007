#pragma once

// Multi-task training: BPR + λ₁·ICL + λ₂·ΔR + λ₃·‖Θ‖², Adam, early stopping.

#include "idcl/coding_rate.hpp"
#include "idcl/contrastive.hpp"
#include "idcl/data.hpp"
#include "idcl/evaluator.hpp"
#include "idcl/model.hpp"
#include "idcl/optim.hpp"
#include "idcl/ranking.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace idcl {

struct LossWeights {
    double icl = 0;
    double rate_reduction = 0;
    double l2 = 0;
};

struct LossBreakdown {
    double bpr = 0;
    double icl = 0;
    double rate_reduction = 0;
    double l2 = 0;
    double total = 0;
};

/// Weighted sum of already-evaluated terms; a non-finite term aborts with its name.
inline LossBreakdown combine_losses(double bpr, double icl, double rate_reduction, double l2, const LossWeights& w) {
    const std::pair<const char*, double> terms[] = {{"bpr", bpr}, {"icl", icl}, {"rate_reduction", rate_reduction}, {"l2", l2}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) throw NumericalError(std::string("loss component '") + name + "' is not finite");
    }
    return {bpr, icl, rate_reduction, l2, bpr + w.icl * icl + w.rate_reduction * rate_reduction + w.l2 * l2};
}

/// Differentiable loss terms for one step; undefined terms count as zero.
struct LossTerms {
    ag::Var bpr;
    ag::Var icl;
    ag::Var rate_reduction;
    ag::Var l2;
};

struct WeightedLoss {
    ag::Var total;
    LossBreakdown breakdown;
};

inline WeightedLoss total_loss(const LossTerms& terms, const LossWeights& w) {
    if (!terms.bpr.defined()) throw ConfigError("total_loss: missing BPR term");
    auto value = [](const ag::Var& v) { return v.defined() ? v.scalar() : 0.0; };
    WeightedLoss out;
    out.breakdown = combine_losses(value(terms.bpr), value(terms.icl), value(terms.rate_reduction), value(terms.l2), w);
    out.total = terms.bpr;
    const std::pair<const ag::Var*, double> weighted[] = {{&terms.icl, w.icl}, {&terms.rate_reduction, w.rate_reduction}, {&terms.l2, w.l2}};
    for (const auto& [term, weight] : weighted) {
        if (term->defined() && weight != 0.0) out.total = ag::add(out.total, ag::scale(*term, weight));
    }
    return out;
}

inline LossWeights loss_weights(const TrainConfig& c) { return {c.effective_lambda_icl(), c.effective_lambda_cr(), c.lambda_l2}; }

/// Builds every loss term of one step. `augmented` may be null when the
/// contrastive term is disabled.
inline LossTerms compute_losses(const IdclModel& model, const ViewEmbeddings& original, const ViewEmbeddings* augmented,
                                const BprBatch& batch, const TrainConfig& cfg) {
    const auto b = batch.size();
    if (b == 0) throw DataError("compute_losses: empty batch");
    std::vector<int> users(b), pos(b), neg(b);
    for (std::size_t k = 0; k < b; ++k) {
        users[k] = batch.triples[k].user;
        pos[k] = batch.triples[k].pos;
        neg[k] = batch.triples[k].neg;
    }
    LossTerms terms;
    ag::Var zu = model.users(original, users);
    ag::Var zi = model.items(original, pos);
    ag::Var zj = model.items(original, neg);
    terms.bpr = bpr_loss(predict_scores(zu, zi), predict_scores(zu, zj));

    const double w_icl = cfg.effective_lambda_icl();
    const double w_cr = cfg.effective_lambda_cr();
    if (model.has_disentangler() && (w_icl > 0 || w_cr > 0)) {
        DisentangledBehavior dis = disentangle_behavior(behavior_embedding(zu, zi), original.bases, model.behavior_heads());
        ag::Var logits = intent_logits(dis.slices, original.bases, cfg.tau);
        ag::Var confidence = ag::row_softmax(logits);

        if (w_cr > 0) {
            ag::Var membership = cfg.stop_grad_pi ? ag::stop_gradient(confidence) : confidence;
            terms.rate_reduction = rate_reduction_loss(dis.concatenated, membership, cfg.epsilon);
        }

        if (w_icl > 0 && b >= 2) {
            if (!augmented) throw ConfigError("compute_losses: contrastive term needs the augmented view");
            const auto n = static_cast<Index>(std::min<std::size_t>(static_cast<std::size_t>(cfg.icl_batch), b));
            std::span<const int> sub_users(users.data(), static_cast<std::size_t>(n));
            std::span<const int> sub_items(pos.data(), static_cast<std::size_t>(n));
            DisentangledBehavior aug = model.disentangle(*augmented, sub_users, sub_items);
            std::vector<ag::Var> per_intent;
            per_intent.reserve(dis.slices.size());
            for (std::size_t k = 0; k < dis.slices.size(); ++k) {
                per_intent.push_back(subtask_logprob(ag::slice_rows(dis.slices[k], 0, n), aug.slices[k], cfg.tau, cfg.exclude_positive));
            }
            ag::Var logprobs = stack_subtasks(per_intent);
            ag::Var sub_logits = ag::slice_rows(logits, 0, n);
            if (cfg.stop_grad_confidence) sub_logits = ag::stop_gradient(sub_logits);
            terms.icl = cfg.exact_log_expectation ? icl_loss_exact(ag::row_log_softmax(sub_logits), logprobs)
                                                  : icl_loss(ag::row_softmax(sub_logits), logprobs);
        }
    }

    ag::Var l2 = ag::scalar_constant(0.0);
    for (const auto& [name, p] : model.parameters()) l2 = ag::add(l2, ag::squared_norm(p));
    terms.l2 = l2;
    return terms;
}

struct EpochStats {
    int epoch = 0;
    LossBreakdown loss;  // mean over batches
    std::optional<double> val_recall;
    double seconds = 0;
};

struct FitResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_recall = -1;
    int evaluations = 0;
    bool aborted = false;
    std::string abort_reason;
};

inline void write_log_header(std::ostream& os) { os << "epoch,bpr,icl,dR,total,val_recall@20\n"; }

inline void write_log_line(std::ostream& os, const EpochStats& s) {
    os << s.epoch << ',' << s.loss.bpr << ',' << s.loss.icl << ',' << s.loss.rate_reduction << ',' << s.loss.total << ',';
    if (s.val_recall) os << *s.val_recall;
    os << '\n' << std::flush;
}

class Trainer {
public:
    Trainer(IdclModel& model, const InteractionGraph& graph, const DatasetSplit& split)
        : model_(model),
          graph_(graph),
          split_(split),
          edges_(training_edges(graph, split)),
          adjacency_(std::make_shared<const SparseMatrix>(normalized_adjacency(edges_))),
          positives_(graph, split),
          optimizer_(parameter_list(model), model.config().lr),
          rng_(model.config().seed ^ 0x5eed5eed5eed5eedULL) {
        if (split.train_edges.empty()) throw DataError("Trainer: no training edges");
    }

    [[nodiscard]] const std::shared_ptr<const SparseMatrix>& adjacency() const { return adjacency_; }
    [[nodiscard]] int epochs_run() const { return epoch_; }

    /// One pass over the training behaviors with a fresh augmented view.
    EpochStats train_epoch() {
        const auto start = std::chrono::steady_clock::now();
        const auto& cfg = model_.config();
        const LossWeights weights = loss_weights(cfg);
        std::shared_ptr<const SparseMatrix> aug_adj;
        if (model_.has_disentangler() && weights.icl > 0) {
            const auto aug = edge_dropout(edges_, cfg.dropout, rng_());
            aug_adj = std::make_shared<const SparseMatrix>(normalized_adjacency(edges_, aug));
        }
        auto batches = epoch_batches(graph_, split_, positives_, static_cast<std::size_t>(cfg.batch_size), rng_);
        EpochStats stats;
        stats.epoch = ++epoch_;
        for (const auto& batch : batches) {
            ViewEmbeddings original = model_.encode(adjacency_);
            std::optional<ViewEmbeddings> augmented;
            if (aug_adj) augmented = model_.encode(aug_adj);
            LossTerms terms = compute_losses(model_, original, augmented ? &*augmented : nullptr, batch, cfg);
            WeightedLoss loss = total_loss(terms, weights);
            optimizer_.zero_grad();
            ag::backward(loss.total);
            optimizer_.step();
            stats.loss.bpr += loss.breakdown.bpr;
            stats.loss.icl += loss.breakdown.icl;
            stats.loss.rate_reduction += loss.breakdown.rate_reduction;
            stats.loss.l2 += loss.breakdown.l2;
            stats.loss.total += loss.breakdown.total;
        }
        const double n = static_cast<double>(batches.size());
        stats.loss.bpr /= n;
        stats.loss.icl /= n;
        stats.loss.rate_reduction /= n;
        stats.loss.l2 /= n;
        stats.loss.total /= n;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return stats;
    }

    [[nodiscard]] double validation_recall() const {
        EvalOptions opts;
        opts.topk = {20};
        opts.capped_recall_denominator = model_.config().recall_capped_denominator;
        return evaluate(model_, graph_, split_, adjacency_, Fold::val, opts).metrics.at("recall@20");
    }

    /// Trains until validation Recall@20 fails to improve for `patience`
    /// consecutive evaluations, then restores the best parameters.
    FitResult fit(std::ostream* log = nullptr) {
        const auto& cfg = model_.config();
        if (split_.val_edges.empty()) throw DataError("fit: validation fold is empty");
        FitResult result;
        std::map<std::string, Matrix> best = model_.snapshot();
        int stale = 0;
        if (log) write_log_header(*log);
        try {
            while (epoch_ < cfg.max_epochs) {
                EpochStats stats = train_epoch();
                if (stats.epoch % cfg.eval_every == 0 || epoch_ == cfg.max_epochs) {
                    const double recall = validation_recall();
                    stats.val_recall = recall;
                    ++result.evaluations;
                    if (recall > result.best_val_recall) {
                        result.best_val_recall = recall;
                        result.best_epoch = stats.epoch;
                        best = model_.snapshot();
                        stale = 0;
                    } else {
                        ++stale;
                    }
                }
                if (log) write_log_line(*log, stats);
                result.history.push_back(stats);
                if (stale >= cfg.patience) break;
            }
        } catch (const NumericalError& e) {
            result.aborted = true;
            result.abort_reason = e.what();
        }
        model_.assign(best);
        return result;
    }

private:
    static std::vector<ag::Var> parameter_list(const IdclModel& model) {
        std::vector<ag::Var> out;
        for (const auto& [name, p] : model.parameters()) out.push_back(p);
        return out;
    }

    IdclModel& model_;
    const InteractionGraph& graph_;
    const DatasetSplit& split_;
    EdgeSet edges_;
    std::shared_ptr<const SparseMatrix> adjacency_;
    PositiveIndex positives_;
    Adam optimizer_;
    std::mt19937_64 rng_;
    int epoch_ = 0;
};

}  // namespace idcl
