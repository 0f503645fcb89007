#pragma once

// Parameter-free graph convolution over the joint user-item-concept graph.

#include "idcl/autograd.hpp"

#include <memory>
#include <random>
#include <span>
#include <vector>

namespace idcl {

/// Layer outputs z^(0..L): z^(l) = A · z^(l-1).
inline std::vector<ag::Var> propagate(const std::shared_ptr<const SparseMatrix>& adjacency, const ag::Var& layer0, int layers) {
    if (layers < 1) throw ConfigError("propagate: need at least one layer");
    if (adjacency->rows() != layer0.rows() || adjacency->cols() != layer0.rows()) {
        throw ShapeError("propagate: adjacency " + shape_str(adjacency->rows(), adjacency->cols()) +
                         " does not match embeddings " + shape_str(layer0.rows(), layer0.cols()));
    }
    std::vector<ag::Var> out;
    out.reserve(static_cast<std::size_t>(layers) + 1);
    out.push_back(layer0);
    for (int l = 1; l <= layers; ++l) out.push_back(ag::spmm(adjacency, out.back()));
    return out;
}

/// Uniform mean of all layer outputs.
inline ag::Var readout(const std::vector<ag::Var>& layers) {
    if (layers.empty()) throw ShapeError("readout: no layers");
    ag::Var acc = layers.front();
    for (std::size_t l = 1; l < layers.size(); ++l) acc = ag::add(acc, layers[l]);
    return ag::scale(acc, 1.0 / static_cast<double>(layers.size()));
}

/// Entangled behavior representation z_u ⊙ z_i.
inline ag::Var behavior_embedding(const ag::Var& users, const ag::Var& items) {
    if (users.rows() != items.rows() || users.cols() != items.cols()) {
        throw ShapeError("behavior_embedding: " + shape_str(users.rows(), users.cols()) + " vs " +
                         shape_str(items.rows(), items.cols()));
    }
    return ag::hadamard(users, items);
}

inline Matrix normal_init(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

}  // namespace idcl
