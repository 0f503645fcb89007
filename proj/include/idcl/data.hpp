#pragma once

// Interaction ingestion, the user-item-concept graph, holdout splits, BPR
// sampling and edge-dropout augmentation.

#include "idcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace idcl {

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim_eol(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) s.remove_suffix(1);
    return s;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

struct PairHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
        const std::size_t h1 = std::hash<std::string>{}(p.first);
        return h1 ^ (std::hash<std::string>{}(p.second) + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Raw tables

struct RawPair {
    std::string user;
    std::string item;
    friend bool operator==(const RawPair&, const RawPair&) = default;
};

/// Deduplicated implicit-feedback pairs in order of first appearance.
struct InteractionTable {
    std::vector<RawPair> pairs;
};

struct ConceptRow {
    std::string item;
    std::string concept_name;
    friend bool operator==(const ConceptRow&, const ConceptRow&) = default;
};

struct LoadOptions {
    /// Rows with rating below this value are discarded.
    double rating_threshold = 1.0;
};

/// Reads `user \t item \t rating \t timestamp` rows.
inline InteractionTable load_interactions(const std::filesystem::path& path, const LoadOptions& options = {}) {
    auto in = detail::open_input(path);
    InteractionTable table;
    std::unordered_set<std::pair<std::string, std::string>, detail::PairHash> seen;
    std::string line;
    std::size_t lineno = 0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto trimmed = detail::trim_eol(line);
        if (trimmed.empty()) continue;
        const auto fields = detail::split_tabs(trimmed);
        if (fields.size() != 4) {
            throw ParseError(path.string(), lineno,
                             "expected 4 tab-separated fields (user, item, rating, timestamp), got " +
                                 std::to_string(fields.size()));
        }
        if (fields[0].empty() || fields[1].empty()) throw ParseError(path.string(), lineno, "empty user or item id");
        double rating = 0;
        try {
            std::size_t used = 0;
            rating = std::stod(std::string(fields[2]), &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
            (void)std::stoll(std::string(fields[3]));
        } catch (const std::exception&) {
            throw ParseError(path.string(), lineno, "non-numeric rating or timestamp");
        }
        ++rows;
        if (rating < options.rating_threshold) continue;
        std::pair<std::string, std::string> key{std::string(fields[0]), std::string(fields[1])};
        if (seen.insert(key).second) table.pairs.push_back({std::move(key.first), std::move(key.second)});
    }
    if (rows == 0) throw DataError(path.string() + ": no interactions");
    return table;
}

/// Reads `item \t concept_name` membership rows; duplicates are dropped.
inline std::vector<ConceptRow> load_item_concepts(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    std::vector<ConceptRow> rows;
    std::unordered_set<std::pair<std::string, std::string>, detail::PairHash> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto trimmed = detail::trim_eol(line);
        if (trimmed.empty()) continue;
        const auto fields = detail::split_tabs(trimmed);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            throw ParseError(path.string(), lineno, "expected `item \\t concept_name`");
        }
        std::pair<std::string, std::string> key{std::string(fields[0]), std::string(fields[1])};
        if (seen.insert(key).second) rows.push_back({std::move(key.first), std::move(key.second)});
    }
    if (rows.empty()) throw DataError(path.string() + ": no item-concept rows");
    return rows;
}

// ---------------------------------------------------------------------------
// Graph

/// Raw id to contiguous index table, in insertion order.
class IdMap {
public:
    int intern(const std::string& name) {
        auto [it, inserted] = index_.try_emplace(name, static_cast<int>(names_.size()));
        if (inserted) names_.push_back(name);
        return it->second;
    }
    [[nodiscard]] std::optional<int> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    [[nodiscard]] int at(const std::string& name) const {
        auto id = find(name);
        if (!id) throw DataError("unknown id '" + name + "'");
        return *id;
    }
    [[nodiscard]] const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
    [[nodiscard]] int size() const { return static_cast<int>(names_.size()); }
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, int> index_;
};

struct Behavior {
    int user;
    int item;
    friend bool operator==(const Behavior&, const Behavior&) = default;
};

struct ItemConcept {
    int item;
    int concept_id;
    friend bool operator==(const ItemConcept&, const ItemConcept&) = default;
};

/// Tripartite user-item-concept graph. Node numbering for propagation is
/// users [0, N), items [N, N+M), concepts [N+M, N+M+R).
struct InteractionGraph {
    IdMap users;
    IdMap items;
    IdMap concepts;
    std::vector<Behavior> behaviors;           // O⁺, |O⁺| = F
    std::vector<ItemConcept> item_concepts;    // P⁺

    [[nodiscard]] int num_users() const { return users.size(); }
    [[nodiscard]] int num_items() const { return items.size(); }
    [[nodiscard]] int num_concepts() const { return concepts.size(); }
    [[nodiscard]] int num_nodes() const { return num_users() + num_items() + num_concepts(); }
    [[nodiscard]] int num_behaviors() const { return static_cast<int>(behaviors.size()); }

    [[nodiscard]] int user_node(int u) const { return u; }
    [[nodiscard]] int item_node(int i) const { return num_users() + i; }
    [[nodiscard]] int concept_node(int c) const { return num_users() + num_items() + c; }
};

struct GraphOptions {
    /// Concept rows naming items absent from the interactions are dropped (true) or rejected (false).
    bool drop_unknown_items = true;
    /// When set, concepts outside this list are rejected and ids follow its order.
    std::optional<std::vector<std::string>> concept_vocabulary;
};

inline InteractionGraph build_graph(const InteractionTable& interactions, const std::vector<ConceptRow>& item_concepts,
                                    const GraphOptions& options = {}) {
    InteractionGraph g;
    g.behaviors.reserve(interactions.pairs.size());
    std::unordered_set<std::int64_t> seen_behaviors;
    for (const auto& p : interactions.pairs) {
        const int u = g.users.intern(p.user);
        const int i = g.items.intern(p.item);
        const std::int64_t key = (static_cast<std::int64_t>(u) << 32) | static_cast<std::uint32_t>(i);
        if (seen_behaviors.insert(key).second) g.behaviors.push_back({u, i});
    }
    if (g.behaviors.empty()) throw DataError("build_graph: no interactions");

    if (options.concept_vocabulary) {
        for (const auto& name : *options.concept_vocabulary) g.concepts.intern(name);
    }
    std::unordered_set<std::int64_t> seen_memberships;
    for (const auto& row : item_concepts) {
        int c = 0;
        if (options.concept_vocabulary) {
            auto found = g.concepts.find(row.concept_name);
            if (!found) throw DataError("build_graph: item '" + row.item + "' references unknown concept '" + row.concept_name + "'");
            c = *found;
        } else {
            c = g.concepts.intern(row.concept_name);
        }
        auto item = g.items.find(row.item);
        if (!item) {
            if (options.drop_unknown_items) continue;
            throw DataError("build_graph: concept row references item '" + row.item + "' with no interactions");
        }
        const std::int64_t key = (static_cast<std::int64_t>(*item) << 32) | static_cast<std::uint32_t>(c);
        if (seen_memberships.insert(key).second) g.item_concepts.push_back({*item, c});
    }

    std::vector<int> concept_degree(static_cast<std::size_t>(g.num_concepts()), 0);
    for (const auto& e : g.item_concepts) ++concept_degree[static_cast<std::size_t>(e.concept_id)];
    for (int c = 0; c < g.num_concepts(); ++c) {
        if (concept_degree[static_cast<std::size_t>(c)] == 0) {
            throw DataError("build_graph: concept '" + g.concepts.name(c) + "' has no items after filtering");
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Splits

enum class Fold : std::uint8_t { train = 0, val = 1, test = 2 };

inline std::string_view fold_name(Fold f) {
    switch (f) {
        case Fold::train: return "train";
        case Fold::val: return "val";
        case Fold::test: return "test";
    }
    return "train";
}

inline Fold parse_fold(std::string_view s) {
    if (s == "train") return Fold::train;
    if (s == "val") return Fold::val;
    if (s == "test") return Fold::test;
    throw DataError("unknown fold '" + std::string(s) + "'");
}

/// Partition of O⁺ into train, validation and test behaviors.
struct DatasetSplit {
    std::vector<Fold> fold;  // one entry per behavior of the graph
    std::vector<int> train_edges;
    std::vector<int> val_edges;
    std::vector<int> test_edges;
    std::uint64_t seed = 0;

    static DatasetSplit from_folds(std::vector<Fold> folds, std::uint64_t seed) {
        DatasetSplit s;
        s.fold = std::move(folds);
        s.seed = seed;
        for (int e = 0; e < static_cast<int>(s.fold.size()); ++e) {
            switch (s.fold[static_cast<std::size_t>(e)]) {
                case Fold::train: s.train_edges.push_back(e); break;
                case Fold::val: s.val_edges.push_back(e); break;
                case Fold::test: s.test_edges.push_back(e); break;
            }
        }
        return s;
    }
};

namespace detail {

inline std::vector<std::vector<int>> edges_by_user(const InteractionGraph& g) {
    std::vector<std::vector<int>> by_user(static_cast<std::size_t>(g.num_users()));
    for (int e = 0; e < g.num_behaviors(); ++e) by_user[static_cast<std::size_t>(g.behaviors[static_cast<std::size_t>(e)].user)].push_back(e);
    return by_user;
}

inline int rounded_count(double frac, std::size_t n) {
    return static_cast<int>(std::floor(frac * static_cast<double>(n) + 0.5));
}

}  // namespace detail

/// Holds out a fraction of every user's interactions for validation and test.
/// Users keep at least one training edge; a single-interaction user stays in train.
inline DatasetSplit split_holdout(const InteractionGraph& g, double val_frac, double test_frac, std::uint64_t seed) {
    if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1.0) {
        throw ConfigError("split_holdout: need val_frac, test_frac >= 0 and val_frac + test_frac < 1");
    }
    std::mt19937_64 rng(seed);
    std::vector<Fold> folds(g.behaviors.size(), Fold::train);
    for (auto& edges : detail::edges_by_user(g)) {
        if (edges.size() < 2) continue;
        std::shuffle(edges.begin(), edges.end(), rng);
        int n_test = detail::rounded_count(test_frac, edges.size());
        int n_val = detail::rounded_count(val_frac, edges.size());
        const int n = static_cast<int>(edges.size());
        while (n_test + n_val > n - 1) {
            if (n_val > 0) --n_val; else --n_test;
        }
        for (int k = 0; k < n_test; ++k) folds[static_cast<std::size_t>(edges[static_cast<std::size_t>(k)])] = Fold::test;
        for (int k = n_test; k < n_test + n_val; ++k) folds[static_cast<std::size_t>(edges[static_cast<std::size_t>(k)])] = Fold::val;
    }
    return DatasetSplit::from_folds(std::move(folds), seed);
}

/// Held-out-user protocol: `heldout_users` validation users and as many test
/// users are drawn among users with at least two interactions; for each of them
/// `heldout_frac` of their interactions are held out, the rest stay in the graph.
inline DatasetSplit split_heldout_users(const InteractionGraph& g, int heldout_users, double heldout_frac, std::uint64_t seed) {
    if (heldout_users < 0) throw ConfigError("split_heldout_users: negative user count");
    if (heldout_frac <= 0 || heldout_frac >= 1) throw ConfigError("split_heldout_users: heldout_frac must be in (0, 1)");
    std::mt19937_64 rng(seed);
    auto by_user = detail::edges_by_user(g);
    std::vector<int> eligible;
    for (int u = 0; u < g.num_users(); ++u) {
        if (by_user[static_cast<std::size_t>(u)].size() >= 2) eligible.push_back(u);
    }
    if (2 * static_cast<std::size_t>(heldout_users) > eligible.size()) {
        throw ConfigError("split_heldout_users: not enough users with >= 2 interactions");
    }
    std::shuffle(eligible.begin(), eligible.end(), rng);
    std::vector<Fold> folds(g.behaviors.size(), Fold::train);
    for (int k = 0; k < 2 * heldout_users; ++k) {
        const Fold target = k < heldout_users ? Fold::val : Fold::test;
        auto& edges = by_user[static_cast<std::size_t>(eligible[static_cast<std::size_t>(k)])];
        std::shuffle(edges.begin(), edges.end(), rng);
        const int n = static_cast<int>(edges.size());
        const int n_out = std::clamp(detail::rounded_count(heldout_frac, edges.size()), 1, n - 1);
        for (int j = 0; j < n_out; ++j) folds[static_cast<std::size_t>(edges[static_cast<std::size_t>(j)])] = target;
    }
    return DatasetSplit::from_folds(std::move(folds), seed);
}

/// Sorted item lists per user for the given fold.
inline std::vector<std::vector<int>> items_by_user(const InteractionGraph& g, const DatasetSplit& split, Fold fold) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(g.num_users()));
    for (int e = 0; e < g.num_behaviors(); ++e) {
        if (split.fold[static_cast<std::size_t>(e)] == fold) {
            const auto& b = g.behaviors[static_cast<std::size_t>(e)];
            out[static_cast<std::size_t>(b.user)].push_back(b.item);
        }
    }
    for (auto& v : out) std::sort(v.begin(), v.end());
    return out;
}

/// Writes `user \t item \t fold` in behavior order.
inline void write_split_manifest(const std::filesystem::path& path, const InteractionGraph& g, const DatasetSplit& split) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (int e = 0; e < g.num_behaviors(); ++e) {
        const auto& b = g.behaviors[static_cast<std::size_t>(e)];
        out << g.users.name(b.user) << '\t' << g.items.name(b.item) << '\t' << fold_name(split.fold[static_cast<std::size_t>(e)]) << '\n';
    }
    if (!out) throw DataError("write failed for " + path.string());
}

struct SplitManifest {
    InteractionTable interactions;
    std::vector<Fold> folds;
};

inline SplitManifest read_split_manifest(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    SplitManifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto trimmed = detail::trim_eol(line);
        if (trimmed.empty()) continue;
        const auto f = detail::split_tabs(trimmed);
        if (f.size() != 3) throw ParseError(path.string(), lineno, "expected `user \\t item \\t fold`");
        m.interactions.pairs.push_back({std::string(f[0]), std::string(f[1])});
        try {
            m.folds.push_back(parse_fold(f[2]));
        } catch (const DataError& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    if (m.folds.empty()) throw DataError(path.string() + ": empty split manifest");
    return m;
}

// ---------------------------------------------------------------------------
// BPR sampling

struct BprTriple {
    int user;
    int pos;
    int neg;
    int behavior;  // index into InteractionGraph::behaviors
};

struct BprBatch {
    std::vector<BprTriple> triples;
    [[nodiscard]] std::size_t size() const { return triples.size(); }
};

/// Training positives per user with O(log n) membership checks.
class PositiveIndex {
public:
    PositiveIndex(const InteractionGraph& g, const DatasetSplit& split)
        : items_(items_by_user(g, split, Fold::train)), num_items_(g.num_items()) {}

    [[nodiscard]] bool contains(int user, int item) const {
        const auto& v = items_[static_cast<std::size_t>(user)];
        return std::binary_search(v.begin(), v.end(), item);
    }
    [[nodiscard]] const std::vector<int>& items(int user) const { return items_[static_cast<std::size_t>(user)]; }
    [[nodiscard]] int num_items() const { return num_items_; }

private:
    std::vector<std::vector<int>> items_;
    int num_items_;
};

/// Uniform draw from the items the user has not interacted with in training.
/// Rejection sampling is bounded; after that the complement is enumerated.
template <class Rng>
int sample_negative(Rng& rng, const PositiveIndex& positives, int user, int max_rejections = 64) {
    const int m = positives.num_items();
    const auto& pos = positives.items(user);
    if (static_cast<int>(pos.size()) >= m) {
        throw DataError("sample_negative: user " + std::to_string(user) + " has interacted with every item");
    }
    std::uniform_int_distribution<int> item_dist(0, m - 1);
    for (int t = 0; t < max_rejections; ++t) {
        const int j = item_dist(rng);
        if (!std::binary_search(pos.begin(), pos.end(), j)) return j;
    }
    const int n_free = m - static_cast<int>(pos.size());
    int target = std::uniform_int_distribution<int>(0, n_free - 1)(rng);
    for (int j = 0, p = 0; j < m; ++j) {
        if (p < static_cast<int>(pos.size()) && pos[static_cast<std::size_t>(p)] == j) {
            ++p;
            continue;
        }
        if (target-- == 0) return j;
    }
    throw DataError("sample_negative: complement enumeration failed");
}

/// Draws `batch_size` training behaviors uniformly with replacement, each with one negative.
inline BprBatch sample_bpr_batch(const InteractionGraph& g, const DatasetSplit& split, const PositiveIndex& positives,
                                 std::size_t batch_size, std::uint64_t seed) {
    if (batch_size == 0) throw ConfigError("sample_bpr_batch: batch_size must be >= 1");
    if (split.train_edges.empty()) throw DataError("sample_bpr_batch: no training edges");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, split.train_edges.size() - 1);
    BprBatch batch;
    batch.triples.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) {
        const int e = split.train_edges[pick(rng)];
        const auto& b = g.behaviors[static_cast<std::size_t>(e)];
        batch.triples.push_back({b.user, b.item, sample_negative(rng, positives, b.user), e});
    }
    return batch;
}

/// One pass over the shuffled training behaviors, cut into batches.
template <class Rng>
std::vector<BprBatch> epoch_batches(const InteractionGraph& g, const DatasetSplit& split, const PositiveIndex& positives,
                                    std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw ConfigError("epoch_batches: batch_size must be >= 1");
    std::vector<int> order = split.train_edges;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<BprBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        BprBatch batch;
        const std::size_t end = std::min(order.size(), start + batch_size);
        batch.triples.reserve(end - start);
        for (std::size_t k = start; k < end; ++k) {
            const auto& b = g.behaviors[static_cast<std::size_t>(order[k])];
            batch.triples.push_back({b.user, b.item, sample_negative(rng, positives, b.user), order[k]});
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// Propagation graph and augmentation

/// Undirected edge list over the joint node numbering.
struct EdgeSet {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;
};

/// Every behavior plus every item-concept membership.
inline EdgeSet full_edges(const InteractionGraph& g) {
    EdgeSet s{g.num_nodes(), {}};
    s.edges.reserve(g.behaviors.size() + g.item_concepts.size());
    for (const auto& b : g.behaviors) s.edges.emplace_back(g.user_node(b.user), g.item_node(b.item));
    for (const auto& m : g.item_concepts) s.edges.emplace_back(g.item_node(m.item), g.concept_node(m.concept_id));
    return s;
}

/// Training behaviors plus every item-concept membership.
inline EdgeSet training_edges(const InteractionGraph& g, const DatasetSplit& split) {
    EdgeSet s{g.num_nodes(), {}};
    s.edges.reserve(split.train_edges.size() + g.item_concepts.size());
    for (int e : split.train_edges) {
        const auto& b = g.behaviors[static_cast<std::size_t>(e)];
        s.edges.emplace_back(g.user_node(b.user), g.item_node(b.item));
    }
    for (const auto& m : g.item_concepts) s.edges.emplace_back(g.item_node(m.item), g.concept_node(m.concept_id));
    return s;
}

struct AugmentedGraph {
    std::vector<bool> keep;  // parallel to EdgeSet::edges
    double dropout = 0;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t surviving() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true)); }
};

/// Keeps each edge independently with probability 1 - dropout.
inline AugmentedGraph edge_dropout(const EdgeSet& edges, double dropout, std::uint64_t seed) {
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("edge_dropout: ratio must be in [0, 1)");
    AugmentedGraph aug{std::vector<bool>(edges.edges.size(), true), dropout, seed};
    if (dropout == 0.0) return aug;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < aug.keep.size(); ++k) aug.keep[k] = unit(rng) >= dropout;
    return aug;
}

/// Symmetric normalization D^{-1/2} A D^{-1/2} without self-loops. Isolated
/// nodes get an all-zero row.
inline SparseMatrix normalized_adjacency(const EdgeSet& edges, const std::vector<bool>* keep = nullptr) {
    if (edges.num_nodes <= 0) throw DataError("normalized_adjacency: empty graph");
    if (keep && keep->size() != edges.edges.size()) throw ShapeError("normalized_adjacency: mask length mismatch");
    std::vector<double> degree(static_cast<std::size_t>(edges.num_nodes), 0.0);
    for (std::size_t k = 0; k < edges.edges.size(); ++k) {
        if (keep && !(*keep)[k]) continue;
        const auto [a, b] = edges.edges[k];
        if (a < 0 || b < 0 || a >= edges.num_nodes || b >= edges.num_nodes) throw DataError("normalized_adjacency: node out of range");
        if (a == b) continue;
        degree[static_cast<std::size_t>(a)] += 1;
        degree[static_cast<std::size_t>(b)] += 1;
    }
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(2 * edges.edges.size());
    for (std::size_t k = 0; k < edges.edges.size(); ++k) {
        if (keep && !(*keep)[k]) continue;
        const auto [a, b] = edges.edges[k];
        if (a == b) continue;
        const double w = 1.0 / std::sqrt(degree[static_cast<std::size_t>(a)] * degree[static_cast<std::size_t>(b)]);
        triplets.emplace_back(a, b, w);
        triplets.emplace_back(b, a, w);
    }
    SparseMatrix adj(edges.num_nodes, edges.num_nodes);
    adj.setFromTriplets(triplets.begin(), triplets.end());
    return adj;
}

inline SparseMatrix normalized_adjacency(const EdgeSet& edges, const AugmentedGraph& aug) {
    return normalized_adjacency(edges, &aug.keep);
}

}  // namespace idcl
