#pragma once

// IDCL model: shared graph encoder, semantic bases and intent projection heads.

#include "idcl/config.hpp"
#include "idcl/contrastive.hpp"
#include "idcl/disentangler.hpp"
#include "idcl/encoder.hpp"

#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace idcl {

struct GraphShape {
    int num_users = 0;
    int num_items = 0;
    int num_concepts = 0;
    [[nodiscard]] int num_nodes() const { return num_users + num_items + num_concepts; }
};

/// Encoder output for one view of the graph.
struct ViewEmbeddings {
    ag::Var readout;  // (N+M+R) x d
    ag::Var bases;    // K x Δd, undefined for the encoder-only variant
};

class IdclModel {
public:
    IdclModel(const TrainConfig& config, const GraphShape& shape) : config_(config), shape_(shape) {
        config_.validate();
        if (shape.num_users <= 0 || shape.num_items <= 0) throw ConfigError("IdclModel: empty graph");
        std::mt19937_64 rng(config_.seed);
        layer0_ = ag::parameter(normal_init(shape.num_nodes(), config_.dim, config_.init_std, rng));
        if (config_.uses_disentangler()) {
            if (shape.num_concepts <= 0) throw ConfigError("IdclModel: the disentangler needs at least one concept");
            const int k = config_.intents;
            const int dd = config_.delta_dim();
            const double bound = 1.0 / std::sqrt(static_cast<double>(config_.dim));
            std::uniform_real_distribution<double> dist(-bound, bound);
            Matrix w1(config_.dim, k);
            for (Index i = 0; i < w1.size(); ++i) w1.data()[i] = dist(rng);
            w1_ = ag::parameter(std::move(w1));
            gs_ = ProjectionHead(config_.dim, dd, config_.two_layer_heads, rng);
            gb_.reserve(static_cast<std::size_t>(k));
            for (int h = 0; h < k; ++h) gb_.emplace_back(config_.dim + dd, dd, config_.two_layer_heads, rng);
        }
    }

    [[nodiscard]] const TrainConfig& config() const { return config_; }
    [[nodiscard]] const GraphShape& shape() const { return shape_; }
    [[nodiscard]] bool has_disentangler() const { return config_.uses_disentangler(); }

    [[nodiscard]] const ag::Var& layer0() const { return layer0_; }
    [[nodiscard]] const ag::Var& assignment_weights() const { return w1_; }
    [[nodiscard]] const ProjectionHead& semantic_head() const { return gs_; }
    [[nodiscard]] const std::vector<ProjectionHead>& behavior_heads() const { return gb_; }

    /// Checkpoint names: emb.layer0, dis.W1, dis.gs.*, dis.gb.{k}.*
    [[nodiscard]] NamedParameters parameters() const {
        NamedParameters out{{"emb.layer0", layer0_}};
        if (has_disentangler()) {
            out.emplace_back("dis.W1", w1_);
            gs_.collect("dis.gs", out);
            for (std::size_t k = 0; k < gb_.size(); ++k) gb_[k].collect("dis.gb." + std::to_string(k), out);
        }
        return out;
    }

    /// Encodes one view; bases are derived from that view's concept embeddings.
    [[nodiscard]] ViewEmbeddings encode(const std::shared_ptr<const SparseMatrix>& adjacency) const {
        ViewEmbeddings v;
        v.readout = readout(propagate(adjacency, layer0_, config_.layers));
        if (has_disentangler()) {
            ag::Var concepts = ag::slice_rows(v.readout, shape_.num_users + shape_.num_items, shape_.num_concepts);
            v.bases = semantic_bases(concept_assignment(concepts, w1_), concepts, gs_, config_.normalized_aggregation);
        }
        return v;
    }

    [[nodiscard]] ag::Var users(const ViewEmbeddings& v, std::span<const int> ids) const {
        return ag::gather_rows(v.readout, ids);
    }

    [[nodiscard]] ag::Var items(const ViewEmbeddings& v, std::span<const int> ids) const {
        std::vector<int> nodes(ids.begin(), ids.end());
        for (int& n : nodes) n += shape_.num_users;
        return ag::gather_rows(v.readout, nodes);
    }

    [[nodiscard]] ag::Var all_users(const ViewEmbeddings& v) const { return ag::slice_rows(v.readout, 0, shape_.num_users); }
    [[nodiscard]] ag::Var all_items(const ViewEmbeddings& v) const {
        return ag::slice_rows(v.readout, shape_.num_users, shape_.num_items);
    }

    /// Disentangled slices for the given (user, item) behaviors.
    [[nodiscard]] DisentangledBehavior disentangle(const ViewEmbeddings& v, std::span<const int> user_ids,
                                                   std::span<const int> item_ids) const {
        if (!has_disentangler()) throw ConfigError("disentangle: the encoder-only variant has no projection heads");
        return disentangle_behavior(behavior_embedding(users(v, user_ids), items(v, item_ids)), v.bases, gb_);
    }

    /// p_θ(k|e) for the given behaviors (B x K), evaluated without gradient tracking.
    [[nodiscard]] Matrix behavior_distribution(const ViewEmbeddings& v, std::span<const int> user_ids,
                                               std::span<const int> item_ids) const {
        ag::NoGradGuard no_grad;
        auto d = disentangle(v, user_ids, item_ids);
        return intent_confidence(d.slices, v.bases, config_.tau).value();
    }

    /// Replaces parameter values; names and shapes must match exactly.
    void assign(const std::map<std::string, Matrix>& tensors) {
        auto params = parameters();
        for (const auto& [name, var] : params) {
            auto it = tensors.find(name);
            if (it == tensors.end()) throw ConfigError("checkpoint is missing tensor '" + name + "'");
            if (it->second.rows() != var.rows() || it->second.cols() != var.cols()) {
                throw ShapeError("tensor '" + name + "' has shape " + shape_str(it->second.rows(), it->second.cols()) +
                                 ", model expects " + shape_str(var.rows(), var.cols()));
            }
        }
        if (tensors.size() != params.size()) throw ConfigError("checkpoint has tensors the model does not define");
        for (auto& [name, var] : params) var.mutable_value() = tensors.at(name);
    }

    [[nodiscard]] std::map<std::string, Matrix> snapshot() const {
        std::map<std::string, Matrix> out;
        for (const auto& [name, var] : parameters()) out.emplace(name, var.value());
        return out;
    }

private:
    TrainConfig config_;
    GraphShape shape_;
    ag::Var layer0_;
    ag::Var w1_;
    ProjectionHead gs_;
    std::vector<ProjectionHead> gb_;
};

}  // namespace idcl
