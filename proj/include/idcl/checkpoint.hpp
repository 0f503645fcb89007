#pragma once

// Checkpoint archive: a magic line, one JSON metadata line, then named tensors
// stored as raw little-endian doubles.
//
//   IDCL-CHECKPOINT 1
//   {"config": "...", "dim": 64, ...}
//   tensor <name> <rows> <cols>\n<rows*cols*8 bytes>\n
//   ...
//   end

#include "idcl/model.hpp"

#include <json.hpp>

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <map>
#include <string>

namespace idcl {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

struct Checkpoint {
    nlohmann::json metadata = nlohmann::json::object();
    std::map<std::string, Matrix> tensors;
};

inline constexpr std::string_view kCheckpointMagic = "IDCL-CHECKPOINT 1";

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out << kCheckpointMagic << '\n' << ckpt.metadata.dump() << '\n';
    for (const auto& [name, m] : ckpt.tensors) {
        out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        out << '\n';
    }
    out << "end\n";
    if (!out) throw CheckpointError("write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic) throw CheckpointError(path.string() + ": not an IDCL checkpoint");
    Checkpoint ckpt;
    if (!std::getline(in, line)) throw CheckpointError(path.string() + ": missing metadata");
    try {
        ckpt.metadata = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": bad metadata: " + e.what());
    }
    while (std::getline(in, line)) {
        if (line == "end") return ckpt;
        std::istringstream header(line);
        std::string tag, name;
        Index rows = 0, cols = 0;
        if (!(header >> tag >> name >> rows >> cols) || tag != "tensor" || rows < 0 || cols < 0) {
            throw CheckpointError(path.string() + ": bad tensor header '" + line + "'");
        }
        Matrix m(rows, cols);
        in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!in || in.get() != '\n') throw CheckpointError(path.string() + ": truncated tensor '" + name + "'");
        ckpt.tensors.emplace(name, std::move(m));
    }
    throw CheckpointError(path.string() + ": missing end marker");
}

/// Packs the model parameters, its config and caller-supplied metadata.
inline Checkpoint make_checkpoint(const IdclModel& model, nlohmann::json extra = nlohmann::json::object()) {
    Checkpoint ckpt;
    ckpt.metadata = std::move(extra);
    const auto& c = model.config();
    ckpt.metadata["config"] = c.to_text();
    ckpt.metadata["variant"] = std::string(variant_name(c.variant));
    ckpt.metadata["dim"] = c.dim;
    ckpt.metadata["intents"] = c.intents;
    ckpt.metadata["layers"] = c.layers;
    ckpt.metadata["num_users"] = model.shape().num_users;
    ckpt.metadata["num_items"] = model.shape().num_items;
    ckpt.metadata["num_concepts"] = model.shape().num_concepts;
    ckpt.tensors = model.snapshot();
    return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const IdclModel& model,
                            nlohmann::json extra = nlohmann::json::object()) {
    write_checkpoint(path, make_checkpoint(model, std::move(extra)));
}

/// Rebuilds a model from a checkpoint. When `expected` is given, d, K, L and the
/// variant must agree with it.
inline IdclModel load_checkpoint(const std::filesystem::path& path, const TrainConfig* expected = nullptr) {
    Checkpoint ckpt = read_checkpoint(path);
    TrainConfig cfg;
    try {
        cfg = TrainConfig::from_text(ckpt.metadata.at("config").get<std::string>());
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError(path.string() + ": metadata has no config");
    }
    if (expected) {
        if (expected->dim != cfg.dim || expected->intents != cfg.intents || expected->layers != cfg.layers ||
            expected->variant != cfg.variant) {
            throw CheckpointError(path.string() + ": checkpoint (d=" + std::to_string(cfg.dim) + ", K=" +
                                  std::to_string(cfg.intents) + ", L=" + std::to_string(cfg.layers) + ", " +
                                  std::string(variant_name(cfg.variant)) + ") does not match the requested model (d=" +
                                  std::to_string(expected->dim) + ", K=" + std::to_string(expected->intents) +
                                  ", L=" + std::to_string(expected->layers) + ", " +
                                  std::string(variant_name(expected->variant)) + ")");
        }
    }
    GraphShape shape{ckpt.metadata.at("num_users").get<int>(), ckpt.metadata.at("num_items").get<int>(),
                     ckpt.metadata.at("num_concepts").get<int>()};
    IdclModel model(cfg, shape);
    model.assign(ckpt.tensors);
    return model;
}

}  // namespace idcl
