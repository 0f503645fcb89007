#pragma once

// All-ranking top-K evaluation with Recall@K and NDCG@K.

#include "idcl/data.hpp"
#include "idcl/model.hpp"
#include "idcl/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace idcl {

struct RankedItems {
    std::vector<int> items;
    bool truncated = false;  // fewer than K unmasked items were available
};

/// Top-K items by descending score, ties broken by ascending item id; masked
/// items never appear.
inline RankedItems rank_items(std::span<const double> scores, const std::vector<bool>& mask, int k) {
    if (mask.size() != scores.size()) throw ShapeError("rank_items: mask length differs from item count");
    if (k < 1) throw ConfigError("rank_items: K must be >= 1");
    RankedItems out;
    out.items.reserve(scores.size());
    for (int i = 0; i < static_cast<int>(scores.size()); ++i)
        if (!mask[static_cast<std::size_t>(i)]) out.items.push_back(i);
    const auto better = [&](int a, int b) {
        const double sa = scores[static_cast<std::size_t>(a)];
        const double sb = scores[static_cast<std::size_t>(b)];
        return sa > sb || (sa == sb && a < b);
    };
    if (static_cast<int>(out.items.size()) <= k) {
        out.truncated = static_cast<int>(out.items.size()) < k;
        std::sort(out.items.begin(), out.items.end(), better);
    } else {
        std::partial_sort(out.items.begin(), out.items.begin() + k, out.items.end(), better);
        out.items.resize(static_cast<std::size_t>(k));
    }
    return out;
}

namespace detail {

inline int hits_in_prefix(std::span<const int> ranked, std::span<const int> relevant_sorted, int k) {
    int hits = 0;
    const int n = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < n; ++r)
        if (std::binary_search(relevant_sorted.begin(), relevant_sorted.end(), ranked[static_cast<std::size_t>(r)])) ++hits;
    return hits;
}

}  // namespace detail

/// |top-K ∩ relevant| / |relevant|, or / min(K, |relevant|) with `capped_denominator`.
inline double recall_at_k(std::span<const int> ranked, std::span<const int> relevant_sorted, int k,
                          bool capped_denominator = false) {
    if (relevant_sorted.empty()) throw DataError("recall_at_k: no relevant items");
    const double denom = capped_denominator ? static_cast<double>(std::min<std::size_t>(static_cast<std::size_t>(k), relevant_sorted.size()))
                                             : static_cast<double>(relevant_sorted.size());
    return detail::hits_in_prefix(ranked, relevant_sorted, k) / denom;
}

/// Binary-gain DCG with 1/log₂(rank+1) discount, over the ideal DCG.
inline double ndcg_at_k(std::span<const int> ranked, std::span<const int> relevant_sorted, int k) {
    if (relevant_sorted.empty()) throw DataError("ndcg_at_k: no relevant items");
    double dcg = 0;
    const int n = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < n; ++r) {
        if (std::binary_search(relevant_sorted.begin(), relevant_sorted.end(), ranked[static_cast<std::size_t>(r)])) {
            dcg += 1.0 / std::log2(r + 2.0);
        }
    }
    double idcg = 0;
    const int ideal = std::min<int>(k, static_cast<int>(relevant_sorted.size()));
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(r + 2.0);
    return dcg / idcg;
}

using MetricValues = std::map<std::string, double>;

struct EvalResult {
    MetricValues metrics;  // "recall@K", "ndcg@K"
    int users_evaluated = 0;
};

struct EvalOptions {
    std::vector<int> topk{20, 50, 100};
    bool capped_recall_denominator = false;
    int user_chunk = 1024;
};

/// Ranks every non-excluded item for every user that has relevant items and
/// averages the metrics over those users.
inline EvalResult evaluate_embeddings(const Matrix& users, const Matrix& items,
                                      const std::vector<std::vector<int>>& excluded,
                                      const std::vector<std::vector<int>>& relevant, const EvalOptions& options) {
    if (static_cast<Index>(excluded.size()) != users.rows() || static_cast<Index>(relevant.size()) != users.rows()) {
        throw ShapeError("evaluate: per-user lists do not match the user count");
    }
    if (options.topk.empty()) throw ConfigError("evaluate: empty cutoff list");
    const int k_max = *std::max_element(options.topk.begin(), options.topk.end());
    const int n_items = static_cast<int>(items.rows());
    EvalResult result;
    for (int k : options.topk) {
        result.metrics["recall@" + std::to_string(k)] = 0;
        result.metrics["ndcg@" + std::to_string(k)] = 0;
    }
    std::vector<bool> mask(static_cast<std::size_t>(n_items));
    for (Index start = 0; start < users.rows(); start += options.user_chunk) {
        const Index count = std::min<Index>(options.user_chunk, users.rows() - start);
        const Matrix scores = score_matrix(users.middleRows(start, count), items);
        for (Index r = 0; r < count; ++r) {
            const auto u = static_cast<std::size_t>(start + r);
            if (relevant[u].empty()) continue;
            std::fill(mask.begin(), mask.end(), false);
            for (int i : excluded[u]) mask[static_cast<std::size_t>(i)] = true;
            const auto ranked = rank_items(std::span<const double>(scores.row(r).data(), static_cast<std::size_t>(n_items)), mask, k_max);
            for (int k : options.topk) {
                result.metrics["recall@" + std::to_string(k)] += recall_at_k(ranked.items, relevant[u], k, options.capped_recall_denominator);
                result.metrics["ndcg@" + std::to_string(k)] += ndcg_at_k(ranked.items, relevant[u], k);
            }
            ++result.users_evaluated;
        }
    }
    if (result.users_evaluated == 0) throw DataError("evaluate: no user has held-out items");
    for (auto& [name, v] : result.metrics) v /= result.users_evaluated;
    return result;
}

/// Final user and item embeddings on the training graph.
inline std::pair<Matrix, Matrix> final_embeddings(const IdclModel& model, const std::shared_ptr<const SparseMatrix>& adjacency) {
    ag::NoGradGuard no_grad;
    auto view = model.encode(adjacency);
    return {model.all_users(view).value(), model.all_items(view).value()};
}

/// Evaluates on the validation or test fold. Training items are always excluded;
/// for the test fold validation items are excluded as well.
inline EvalResult evaluate(const IdclModel& model, const InteractionGraph& graph, const DatasetSplit& split,
                           const std::shared_ptr<const SparseMatrix>& adjacency, Fold fold, const EvalOptions& options) {
    if (fold == Fold::train) throw ConfigError("evaluate: the training fold is not a held-out fold");
    auto excluded = items_by_user(graph, split, Fold::train);
    if (fold == Fold::test) {
        auto val = items_by_user(graph, split, Fold::val);
        for (std::size_t u = 0; u < excluded.size(); ++u) {
            excluded[u].insert(excluded[u].end(), val[u].begin(), val[u].end());
        }
    }
    const auto relevant = items_by_user(graph, split, fold);
    const auto [users, items] = final_embeddings(model, adjacency);
    return evaluate_embeddings(users, items, excluded, relevant, options);
}

/// Per-metric values across runs with mean and sample standard deviation (0 for one run).
struct MetricSummary {
    std::vector<double> values;
    double mean = 0;
    double stddev = 0;
};

using MetricsReport = std::map<std::string, MetricSummary>;

inline MetricsReport aggregate_runs(const std::vector<MetricValues>& runs) {
    if (runs.empty()) throw DataError("aggregate_runs: no runs");
    MetricsReport report;
    for (const auto& run : runs)
        for (const auto& [name, v] : run) report[name].values.push_back(v);
    for (auto& [name, s] : report) {
        const double n = static_cast<double>(s.values.size());
        s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
        double ss = 0;
        for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = s.values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    }
    return report;
}

}  // namespace idcl
