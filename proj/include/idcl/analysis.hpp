#pragma once

// Interpretability exports: intent block similarity, behavior distributions,
// intent proportions and raw embedding tables.

#include "idcl/contrastive.hpp"
#include "idcl/data.hpp"
#include "idcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace idcl {

struct BlockSimilarity {
    Matrix similarity;               // cosine similarity over all sampled rows
    Matrix block_means;              // K x K, NaN where a group was empty
    std::vector<int> group_sizes;    // sampled rows per group
    std::vector<int> omitted_groups;

    /// Mean over diagonal blocks, excluding each row's similarity with itself.
    [[nodiscard]] double mean_within() const {
        double s = 0;
        long n = 0;
        Index offset = 0;
        for (int size : group_sizes) {
            for (Index a = offset; a < offset + size; ++a)
                for (Index b = offset; b < offset + size; ++b)
                    if (a != b) {
                        s += similarity(a, b);
                        ++n;
                    }
            offset += size;
        }
        return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    }

    /// Mean over all off-diagonal blocks.
    [[nodiscard]] double mean_cross() const {
        std::vector<int> group(static_cast<std::size_t>(similarity.rows()));
        Index offset = 0;
        for (std::size_t g = 0; g < group_sizes.size(); ++g) {
            for (int r = 0; r < group_sizes[g]; ++r) group[static_cast<std::size_t>(offset + r)] = static_cast<int>(g);
            offset += group_sizes[g];
        }
        double s = 0;
        long n = 0;
        for (Index a = 0; a < similarity.rows(); ++a)
            for (Index b = 0; b < similarity.cols(); ++b)
                if (group[static_cast<std::size_t>(a)] != group[static_cast<std::size_t>(b)]) {
                    s += similarity(a, b);
                    ++n;
                }
        return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    }
};

/// Cosine similarity between the rows of all groups, stacked in group order.
inline BlockSimilarity block_similarity(const std::vector<Matrix>& groups) {
    BlockSimilarity out;
    Index total = 0;
    Index width = -1;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        out.group_sizes.push_back(static_cast<int>(groups[g].rows()));
        if (groups[g].rows() == 0) {
            out.omitted_groups.push_back(static_cast<int>(g));
            continue;
        }
        if (width >= 0 && groups[g].cols() != width) throw ShapeError("block_similarity: groups differ in width");
        width = groups[g].cols();
        total += groups[g].rows();
    }
    Matrix stacked(total, std::max<Index>(width, 0));
    Index offset = 0;
    for (const auto& g : groups) {
        if (g.rows() == 0) continue;
        stacked.middleRows(offset, g.rows()) = g;
        offset += g.rows();
    }
    for (Index r = 0; r < stacked.rows(); ++r) {
        const double n = stacked.row(r).norm();
        stacked.row(r) /= std::max(n, 1e-12);
    }
    out.similarity = stacked * stacked.transpose();
    out.similarity = 0.5 * (out.similarity + out.similarity.transpose());
    for (Index r = 0; r < out.similarity.rows(); ++r) {
        if (stacked.row(r).squaredNorm() > 0) out.similarity(r, r) = 1.0;
    }

    const auto k = static_cast<Index>(groups.size());
    out.block_means = Matrix::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    std::vector<Index> starts(groups.size());
    offset = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        starts[g] = offset;
        offset += groups[g].rows();
    }
    for (Index a = 0; a < k; ++a) {
        for (Index b = 0; b < k; ++b) {
            const Index ra = groups[static_cast<std::size_t>(a)].rows();
            const Index rb = groups[static_cast<std::size_t>(b)].rows();
            if (ra == 0 || rb == 0) continue;
            out.block_means(a, b) = out.similarity.block(starts[static_cast<std::size_t>(a)], starts[static_cast<std::size_t>(b)], ra, rb).mean();
        }
    }
    return out;
}

/// Slices and intent distributions for a list of behaviors on one view.
struct BehaviorPass {
    std::vector<Matrix> slices;  // K matrices of F x Δd
    Matrix distribution;         // F x K
};

inline BehaviorPass behavior_pass(const IdclModel& model, const ViewEmbeddings& view, const std::vector<Behavior>& behaviors,
                                  std::size_t chunk = 4096) {
    if (!model.has_disentangler()) throw ConfigError("behavior analysis needs the disentangler");
    ag::NoGradGuard no_grad;
    const int k = model.config().intents;
    const int dd = model.config().delta_dim();
    const auto f = static_cast<Index>(behaviors.size());
    BehaviorPass out;
    out.slices.assign(static_cast<std::size_t>(k), Matrix(f, dd));
    out.distribution.resize(f, k);
    for (std::size_t start = 0; start < behaviors.size(); start += chunk) {
        const std::size_t end = std::min(behaviors.size(), start + chunk);
        std::vector<int> users, items;
        for (std::size_t e = start; e < end; ++e) {
            users.push_back(behaviors[e].user);
            items.push_back(behaviors[e].item);
        }
        auto dis = model.disentangle(view, users, items);
        const auto rows = static_cast<Index>(end - start);
        out.distribution.middleRows(static_cast<Index>(start), rows) = intent_confidence(dis.slices, view.bases, model.config().tau).value();
        for (int h = 0; h < k; ++h) out.slices[static_cast<std::size_t>(h)].middleRows(static_cast<Index>(start), rows) = dis.slices[static_cast<std::size_t>(h)].value();
    }
    return out;
}

inline std::vector<Behavior> training_behaviors(const InteractionGraph& graph, const DatasetSplit& split) {
    std::vector<Behavior> out;
    out.reserve(split.train_edges.size());
    for (int e : split.train_edges) out.push_back(graph.behaviors[static_cast<std::size_t>(e)]);
    return out;
}

inline std::vector<int> argmax_rows(const Matrix& m) {
    std::vector<int> out(static_cast<std::size_t>(m.rows()));
    for (Index r = 0; r < m.rows(); ++r) {
        Index idx = 0;
        m.row(r).maxCoeff(&idx);
        out[static_cast<std::size_t>(r)] = static_cast<int>(idx);
    }
    return out;
}

namespace detail {

template <class Rng>
std::vector<int> sample_without_replacement(std::vector<int> pool, int n, Rng& rng) {
    std::shuffle(pool.begin(), pool.end(), rng);
    if (static_cast<int>(pool.size()) > n) pool.resize(static_cast<std::size_t>(n));
    return pool;
}

}  // namespace detail

/// Samples up to `n_samples` training behaviors from each intent group (group =
/// argmax of p_θ(k|e)) and compares their k-th slices.
inline BlockSimilarity intent_block_similarity(const IdclModel& model, const ViewEmbeddings& view, const InteractionGraph& graph,
                                               const DatasetSplit& split, int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ConfigError("intent_block_similarity: n_samples must be >= 1");
    const auto pass = behavior_pass(model, view, training_behaviors(graph, split));
    const auto groups = argmax_rows(pass.distribution);
    const int k = model.config().intents;
    std::vector<std::vector<int>> members(static_cast<std::size_t>(k));
    for (int e = 0; e < static_cast<int>(groups.size()); ++e) members[static_cast<std::size_t>(groups[static_cast<std::size_t>(e)])].push_back(e);
    std::mt19937_64 rng(seed);
    std::vector<Matrix> blocks;
    for (int h = 0; h < k; ++h) {
        const auto picked = detail::sample_without_replacement(members[static_cast<std::size_t>(h)], n_samples, rng);
        Matrix block(static_cast<Index>(picked.size()), model.config().delta_dim());
        for (std::size_t r = 0; r < picked.size(); ++r) block.row(static_cast<Index>(r)) = pass.slices[static_cast<std::size_t>(h)].row(picked[r]);
        blocks.push_back(std::move(block));
    }
    return block_similarity(blocks);
}

/// User-side analogue: sampled users' readouts cut into K contiguous Δd blocks.
inline BlockSimilarity user_block_similarity(const IdclModel& model, const ViewEmbeddings& view, int n_samples, std::uint64_t seed) {
    const int n_users = model.shape().num_users;
    std::vector<int> all(static_cast<std::size_t>(n_users));
    std::iota(all.begin(), all.end(), 0);
    std::mt19937_64 rng(seed);
    const auto picked = detail::sample_without_replacement(all, n_samples, rng);
    const int k = model.config().intents;
    const int dd = model.config().delta_dim();
    std::vector<Matrix> blocks(static_cast<std::size_t>(k), Matrix(static_cast<Index>(picked.size()), dd));
    for (std::size_t r = 0; r < picked.size(); ++r)
        for (int h = 0; h < k; ++h) blocks[static_cast<std::size_t>(h)].row(static_cast<Index>(r)) = view.readout.value().row(picked[r]).segment(h * dd, dd);
    return block_similarity(blocks);
}

/// Fraction of training behaviors whose most confident intent is k.
inline std::vector<double> intent_proportions(const Matrix& distribution) {
    if (distribution.rows() == 0) throw DataError("intent_proportions: no behaviors");
    std::vector<double> out(static_cast<std::size_t>(distribution.cols()), 0.0);
    for (int k : argmax_rows(distribution)) out[static_cast<std::size_t>(k)] += 1.0;
    for (double& v : out) v /= static_cast<double>(distribution.rows());
    return out;
}

inline std::vector<double> intent_proportions(const IdclModel& model, const ViewEmbeddings& view, const InteractionGraph& graph,
                                              const DatasetSplit& split) {
    return intent_proportions(behavior_pass(model, view, training_behaviors(graph, split)).distribution);
}

/// Shannon entropy in nats.
inline double entropy(const std::vector<double>& p) {
    double h = 0;
    for (double v : p)
        if (v > 0) h -= v * std::log(v);
    return h;
}

/// p_θ(k|e) rows for the requested (user, item) raw-id pairs, which must be behaviors of the graph.
inline Matrix behavior_distribution_export(const IdclModel& model, const ViewEmbeddings& view, const InteractionGraph& graph,
                                           const std::vector<RawPair>& pairs) {
    std::vector<Behavior> behaviors;
    for (const auto& p : pairs) {
        auto u = graph.users.find(p.user);
        auto i = graph.items.find(p.item);
        if (!u) throw DataError("unknown user id '" + p.user + "'");
        if (!i) throw DataError("unknown item id '" + p.item + "'");
        const Behavior b{*u, *i};
        if (std::find(graph.behaviors.begin(), graph.behaviors.end(), b) == graph.behaviors.end()) {
            throw DataError("(" + p.user + ", " + p.item + ") is not an observed behavior");
        }
        behaviors.push_back(b);
    }
    if (behaviors.empty()) return Matrix(0, model.config().intents);
    return behavior_pass(model, view, behaviors).distribution;
}

// ---------------------------------------------------------------------------
// Tables: one-line comma-separated header, then `id,v0,v1,...`.

struct Table {
    std::vector<std::string> header;
    std::vector<std::string> ids;
    Matrix values;
};

inline void write_table(const std::filesystem::path& path, const Table& t) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t c = 0; c < t.header.size(); ++c) out << (c ? "," : "") << t.header[c];
    out << '\n';
    out.precision(17);
    for (Index r = 0; r < t.values.rows(); ++r) {
        out << t.ids[static_cast<std::size_t>(r)];
        for (Index c = 0; c < t.values.cols(); ++c) out << ',' << t.values(r, c);
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + path.string());
}

inline Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty table");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        t.ids.push_back(cell);
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ParseError(path.string(), lineno, "non-numeric cell '" + cell + "'");
            }
        }
        if (row.size() + 1 != t.header.size()) throw ParseError(path.string(), lineno, "column count differs from header");
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size() > 0 ? t.header.size() - 1 : 0));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    return t;
}

inline std::vector<std::string> numbered_header(const std::string& id_col, const std::string& prefix, Index n) {
    std::vector<std::string> h{id_col};
    for (Index c = 0; c < n; ++c) h.push_back(prefix + std::to_string(c));
    return h;
}

enum class EmbeddingKind { user, item, behavior_slice };

/// Raw vectors for external dimensionality reduction. Behavior slices cover the
/// training behaviors and use `slice` to pick the intent.
inline Table export_embeddings(const IdclModel& model, const ViewEmbeddings& view, const InteractionGraph& graph,
                               const DatasetSplit& split, EmbeddingKind kind, int slice = 0) {
    Table t;
    switch (kind) {
        case EmbeddingKind::user:
            t.values = view.readout.value().topRows(graph.num_users());
            t.ids = graph.users.names();
            t.header = numbered_header("user", "d", t.values.cols());
            break;
        case EmbeddingKind::item:
            t.values = view.readout.value().middleRows(graph.num_users(), graph.num_items());
            t.ids = graph.items.names();
            t.header = numbered_header("item", "d", t.values.cols());
            break;
        case EmbeddingKind::behavior_slice: {
            if (slice < 0 || slice >= model.config().intents) throw ConfigError("export_embeddings: slice out of range");
            const auto behaviors = training_behaviors(graph, split);
            t.values = behavior_pass(model, view, behaviors).slices[static_cast<std::size_t>(slice)];
            for (const auto& b : behaviors) t.ids.push_back(graph.users.name(b.user) + ":" + graph.items.name(b.item));
            t.header = numbered_header("behavior", "d", t.values.cols());
            break;
        }
    }
    return t;
}

/// Intents whose confidence ranks in the top m of each row.
inline std::vector<std::vector<int>> top_intents(const Matrix& distribution, int m) {
    std::vector<std::vector<int>> out;
    for (Index r = 0; r < distribution.rows(); ++r) {
        std::vector<int> idx(static_cast<std::size_t>(distribution.cols()));
        std::iota(idx.begin(), idx.end(), 0);
        const int take = std::clamp(m, 0, static_cast<int>(idx.size()));
        std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](int a, int b) {
            return distribution(r, a) > distribution(r, b) || (distribution(r, a) == distribution(r, b) && a < b);
        });
        idx.resize(static_cast<std::size_t>(take));
        out.push_back(std::move(idx));
    }
    return out;
}

}  // namespace idcl
