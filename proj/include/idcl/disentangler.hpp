#pragma once

// Concept-aware semantic bases and per-intent behavior projection.

#include "idcl/autograd.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace idcl {

using NamedParameters = std::vector<std::pair<std::string, ag::Var>>;

/// Stack of affine layers, each followed by tanh.
class ProjectionHead {
public:
    ProjectionHead() = default;

    ProjectionHead(int in_dim, int out_dim, bool two_layer, std::mt19937_64& rng) {
        if (in_dim <= 0 || out_dim <= 0) throw ConfigError("ProjectionHead: dimensions must be positive");
        layers_.push_back(make_layer(in_dim, out_dim, rng));
        if (two_layer) layers_.push_back(make_layer(out_dim, out_dim, rng));
    }

    [[nodiscard]] ag::Var operator()(const ag::Var& x) const {
        if (layers_.empty()) throw ConfigError("ProjectionHead: uninitialized");
        ag::Var h = x;
        for (const auto& layer : layers_) {
            if (h.cols() != layer.weight.rows()) {
                throw ShapeError("ProjectionHead: input width " + std::to_string(h.cols()) + ", expected " +
                                 std::to_string(layer.weight.rows()));
            }
            h = ag::tanh(ag::add_row(ag::matmul(h, layer.weight), layer.bias));
        }
        return h;
    }

    [[nodiscard]] int in_dim() const { return static_cast<int>(layers_.front().weight.rows()); }
    [[nodiscard]] int out_dim() const { return static_cast<int>(layers_.back().weight.cols()); }

    void collect(const std::string& prefix, NamedParameters& out) const {
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            out.emplace_back(prefix + "." + std::to_string(l) + ".weight", layers_[l].weight);
            out.emplace_back(prefix + "." + std::to_string(l) + ".bias", layers_[l].bias);
        }
    }

private:
    struct Affine {
        ag::Var weight;
        ag::Var bias;
    };

    static Affine make_layer(int in_dim, int out_dim, std::mt19937_64& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(in_dim, out_dim);
        Matrix b(1, out_dim);
        for (Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
        for (Index i = 0; i < b.size(); ++i) b.data()[i] = dist(rng);
        return {ag::parameter(std::move(w)), ag::parameter(std::move(b))};
    }

    std::vector<Affine> layers_;
};

/// Soft assignment of concepts to intents, S = row-softmax(Z_c W₁), R x K.
inline ag::Var concept_assignment(const ag::Var& concepts, const ag::Var& w1) {
    if (concepts.cols() != w1.rows()) {
        throw ShapeError("concept_assignment: concepts " + shape_str(concepts.rows(), concepts.cols()) + " vs W1 " +
                         shape_str(w1.rows(), w1.cols()));
    }
    return ag::row_softmax(ag::matmul(concepts, w1));
}

/// Semantic bases Z_B = g_s(Sᵀ Z_c), K x Δd. With `normalized`, each cluster
/// embedding is divided by its total assignment mass first.
inline ag::Var semantic_bases(const ag::Var& assignment, const ag::Var& concepts, const ProjectionHead& gs,
                              bool normalized = false) {
    if (assignment.rows() != concepts.rows()) {
        throw ShapeError("semantic_bases: assignment " + shape_str(assignment.rows(), assignment.cols()) +
                         " vs concepts " + shape_str(concepts.rows(), concepts.cols()));
    }
    ag::Var clusters = ag::matmul_tn(assignment, concepts);
    if (normalized) {
        ag::Var mass = ag::matmul_tn(assignment, ag::constant(Matrix::Ones(assignment.rows(), 1)));
        clusters = ag::hadamard(clusters, ag::broadcast_cols(ag::reciprocal(mass), clusters.cols()));
    }
    return gs(clusters);
}

/// Per-intent slices z_{e,k} (B x Δd each) and their concatenation (B x d).
struct DisentangledBehavior {
    std::vector<ag::Var> slices;
    ag::Var concatenated;

    [[nodiscard]] int intents() const { return static_cast<int>(slices.size()); }
};

inline DisentangledBehavior disentangle_behavior(const ag::Var& behavior, const ag::Var& bases,
                                                 const std::vector<ProjectionHead>& heads) {
    const auto k_count = static_cast<Index>(heads.size());
    if (bases.rows() != k_count) {
        throw ConfigError("disentangle_behavior: " + std::to_string(heads.size()) + " heads for " +
                          std::to_string(bases.rows()) + " bases");
    }
    DisentangledBehavior out;
    out.slices.reserve(heads.size());
    const Index batch = behavior.rows();
    for (Index k = 0; k < k_count; ++k) {
        ag::Var basis = ag::broadcast_rows(ag::slice_rows(bases, k, 1), batch);
        out.slices.push_back(heads[static_cast<std::size_t>(k)](ag::concat_cols({behavior, basis})));
    }
    out.concatenated = ag::concat_cols(out.slices);
    return out;
}

}  // namespace idcl
