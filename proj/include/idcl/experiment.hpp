#pragma once

// Experiment plumbing shared by the command-line tool and the acceptance
// runner: prepared datasets, run directories, manifests and reports.
//
//   <root>/<dataset>/prepared/{split.tsv, item_concepts.tsv, prepared.json}
//   <root>/<dataset>/<variant>/<seed>/{checkpoint.bin, log.csv, metrics.txt, manifest.json, analysis/}

#include "idcl/analysis.hpp"
#include "idcl/checkpoint.hpp"
#include "idcl/trainer.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace idcl {

namespace fs = std::filesystem;

inline constexpr std::string_view kCodeVersion = "idcl 1.0.0";

class ExperimentError : public std::runtime_error {
public:
    explicit ExperimentError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ExperimentError("cannot open " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
    if (!out) throw ExperimentError("cannot write " + p.string());
}

/// Keeps large temporaries on the heap instead of fresh mmap'd pages; training
/// allocates many multi-megabyte matrices per step and otherwise spends a large
/// share of its time in page faults.
inline void tune_allocator() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

// ---------------------------------------------------------------------------
// Prepared datasets

struct DatasetFiles {
    fs::path ratings;
    fs::path concepts;
};

inline DatasetFiles dataset_files(const fs::path& dir) { return {dir / "ratings.tsv", dir / "item_concepts.tsv"}; }

struct PreparedData {
    InteractionGraph graph;
    DatasetSplit split;
    std::string dataset_hash;
    fs::path dir;
};

inline fs::path prepared_dir(const fs::path& root, const std::string& dataset) { return root / dataset / "prepared"; }

inline std::string split_description(const TrainConfig& cfg) {
    std::ostringstream os;
    if (cfg.heldout_users > 0) {
        os << "heldout-users n=" << cfg.heldout_users << " frac=" << detail::format_double(cfg.heldout_frac);
    } else {
        os << "holdout val=" << detail::format_double(cfg.val_frac) << " test=" << detail::format_double(cfg.test_frac);
    }
    os << " rating>=" << detail::format_double(cfg.rating_threshold);
    return os.str();
}

inline DatasetSplit make_split(const InteractionGraph& g, const TrainConfig& cfg, std::uint64_t seed) {
    if (cfg.heldout_users > 0) return split_heldout_users(g, cfg.heldout_users, cfg.heldout_frac, seed);
    return split_holdout(g, cfg.val_frac, cfg.test_frac, seed);
}

/// Reads the raw files, builds the graph and split, and materializes them under
/// `out`. Re-running with the same inputs is a no-op; different contents are
/// refused rather than overwritten.
inline PreparedData prepare_dataset(const DatasetFiles& files, const TrainConfig& cfg, std::uint64_t split_seed, const fs::path& out) {
    if (!fs::exists(files.ratings)) {
        throw ExperimentError("interaction file " + files.ratings.string() +
                              " not found (for MovieLens run `python3 tools/fetch_movielens.py --out " +
                              files.ratings.parent_path().string() + "`)");
    }
    if (!fs::exists(files.concepts)) {
        throw ExperimentError("item-concept file " + files.concepts.string() +
                              " not found; it must list `item \\t concept` rows (for MovieLens run tools/fetch_movielens.py)");
    }
    auto table = load_interactions(files.ratings, {cfg.rating_threshold});
    auto concepts = load_item_concepts(files.concepts);
    PreparedData p;
    p.graph = build_graph(table, concepts);
    p.split = make_split(p.graph, cfg, split_seed);
    p.dir = out;

    std::ostringstream split_text;
    for (int e = 0; e < p.graph.num_behaviors(); ++e) {
        const auto& b = p.graph.behaviors[static_cast<std::size_t>(e)];
        split_text << p.graph.users.name(b.user) << '\t' << p.graph.items.name(b.item) << '\t'
                   << fold_name(p.split.fold[static_cast<std::size_t>(e)]) << '\n';
    }
    std::ostringstream concept_text;
    for (const auto& row : concepts) concept_text << row.item << '\t' << row.concept_name << '\n';
    p.dataset_hash = hex64(fnv1a(concept_text.str(), fnv1a(split_text.str())));

    nlohmann::json meta = {{"dataset_hash", p.dataset_hash},
                           {"split_seed", split_seed},
                           {"split", split_description(cfg)},
                           {"num_users", p.graph.num_users()},
                           {"num_items", p.graph.num_items()},
                           {"num_concepts", p.graph.num_concepts()},
                           {"num_behaviors", p.graph.num_behaviors()},
                           {"train", p.split.train_edges.size()},
                           {"val", p.split.val_edges.size()},
                           {"test", p.split.test_edges.size()},
                           {"concepts", p.graph.concepts.names()},
                           {"source_ratings", files.ratings.string()},
                           {"source_ratings_hash", hex64(fnv1a(read_bytes(files.ratings)))},
                           {"code_version", kCodeVersion}};

    const auto split_path = out / "split.tsv";
    if (fs::exists(split_path)) {
        const auto existing = read_bytes(split_path);
        const auto existing_concepts = fs::exists(out / "item_concepts.tsv") ? read_bytes(out / "item_concepts.tsv") : "";
        if (existing != split_text.str() || existing_concepts != concept_text.str()) {
            throw ExperimentError(out.string() + " already holds a different prepared split; remove it or choose another --out");
        }
        return p;
    }
    fs::create_directories(out);
    write_bytes(split_path, split_text.str());
    write_bytes(out / "item_concepts.tsv", concept_text.str());
    write_bytes(out / "prepared.json", meta.dump(2) + "\n");
    return p;
}

inline PreparedData load_prepared(const fs::path& dir) {
    const auto split_path = dir / "split.tsv";
    if (!fs::exists(split_path)) {
        throw ExperimentError("no prepared split in " + dir.string() + " (run `idcl prepare` first)");
    }
    auto manifest = read_split_manifest(split_path);
    auto concepts = load_item_concepts(dir / "item_concepts.tsv");
    PreparedData p;
    p.graph = build_graph(manifest.interactions, concepts);
    if (p.graph.num_behaviors() != static_cast<int>(manifest.folds.size())) {
        throw ExperimentError(split_path.string() + ": duplicate behaviors in split manifest");
    }
    const auto meta = nlohmann::json::parse(read_bytes(dir / "prepared.json"));
    p.split = DatasetSplit::from_folds(manifest.folds, meta.at("split_seed").get<std::uint64_t>());
    p.dataset_hash = meta.at("dataset_hash").get<std::string>();
    p.dir = dir;
    const auto recomputed = hex64(fnv1a(read_bytes(dir / "item_concepts.tsv"), fnv1a(read_bytes(split_path))));
    if (recomputed != p.dataset_hash) throw ExperimentError(dir.string() + ": prepared files do not match their recorded hash");
    return p;
}

// ---------------------------------------------------------------------------
// Run manifests

struct RunManifest {
    std::string config_text;
    std::string config_hash;
    std::string dataset_hash;
    std::string code_version{kCodeVersion};
    std::vector<std::uint64_t> seeds;
    std::string layout = "<root>/<dataset>/<variant>/<seed>";
    std::vector<std::string> files;  // relative to the manifest's directory

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"config", config_text},   {"config_hash", config_hash}, {"dataset_hash", dataset_hash},
                {"code_version", code_version}, {"seeds", seeds},         {"layout", layout},
                {"files", files}};
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.config_text = j.at("config").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.dataset_hash = j.at("dataset_hash").get<std::string>();
        m.code_version = j.at("code_version").get<std::string>();
        m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        m.layout = j.at("layout").get<std::string>();
        m.files = j.at("files").get<std::vector<std::string>>();
        return m;
    }

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline void write_manifest(const fs::path& path, const RunManifest& m) { write_bytes(path, m.to_json().dump(2) + "\n"); }

inline RunManifest read_manifest(const fs::path& path) {
    try {
        return RunManifest::from_json(nlohmann::json::parse(read_bytes(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ExperimentError(path.string() + ": malformed manifest: " + e.what());
    }
}

inline fs::path run_dir(const fs::path& root, const std::string& dataset, Variant v, std::uint64_t seed) {
    return root / dataset / std::string(variant_name(v)) / std::to_string(seed);
}

// ---------------------------------------------------------------------------
// Metrics files: `key = value` lines.

inline void write_metrics(const fs::path& path, const std::map<std::string, double>& values) {
    std::ostringstream os;
    os.precision(10);
    for (const auto& [k, v] : values) os << k << " = " << v << '\n';
    write_bytes(path, os.str());
}

inline std::map<std::string, double> read_metrics(const fs::path& path) {
    std::map<std::string, double> out;
    std::istringstream in(read_bytes(path));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        out[line.substr(0, eq)] = std::stod(line.substr(eq + 3));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training runs

struct RunResult {
    FitResult fit;
    EvalResult val;
    EvalResult test;
    fs::path dir;
    double seconds = 0;
};

inline EvalOptions eval_options(const TrainConfig& cfg) {
    EvalOptions o;
    o.topk = cfg.topk;
    o.capped_recall_denominator = cfg.recall_capped_denominator;
    return o;
}

/// Trains one (variant, seed) run into `dir`. An existing run is never replaced
/// unless `overwrite` is set.
inline RunResult train_run(const PreparedData& data, const TrainConfig& cfg, const fs::path& dir, bool overwrite,
                           std::ostream* progress = nullptr) {
    cfg.validate();
    if (fs::exists(dir / "manifest.json") && !overwrite) {
        const auto existing = read_manifest(dir / "manifest.json");
        throw ExperimentError(dir.string() + " already holds a run (config " + existing.config_hash +
                              "); pass --overwrite to replace it or choose another --out");
    }
    fs::create_directories(dir);
    const auto start = std::chrono::steady_clock::now();
    IdclModel model(cfg, {data.graph.num_users(), data.graph.num_items(), data.graph.num_concepts()});
    Trainer trainer(model, data.graph, data.split);

    std::ofstream log(dir / "log.csv");
    struct Tee : std::streambuf {
        std::streambuf* a;
        std::streambuf* b;
        int overflow(int c) override {
            if (c == EOF) return !EOF;
            if (b) b->sputc(static_cast<char>(c));
            return a->sputc(static_cast<char>(c));
        }
        int sync() override {
            if (b) b->pubsync();
            return a->pubsync();
        }
    } tee;
    tee.a = log.rdbuf();
    tee.b = progress ? progress->rdbuf() : nullptr;
    std::ostream log_stream(&tee);

    RunResult r;
    r.dir = dir;
    r.fit = trainer.fit(&log_stream);
    log_stream.flush();
    r.val = evaluate(model, data.graph, data.split, trainer.adjacency(), Fold::val, eval_options(cfg));
    if (!data.split.test_edges.empty()) {
        r.test = evaluate(model, data.graph, data.split, trainer.adjacency(), Fold::test, eval_options(cfg));
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    save_checkpoint(dir / "checkpoint.bin", model,
                    {{"dataset_hash", data.dataset_hash}, {"best_epoch", r.fit.best_epoch}, {"code_version", kCodeVersion}});
    std::map<std::string, double> metrics;
    for (const auto& [k, v] : r.val.metrics) metrics["val." + k] = v;
    for (const auto& [k, v] : r.test.metrics) metrics["test." + k] = v;
    metrics["best_epoch"] = r.fit.best_epoch;
    metrics["epochs"] = static_cast<double>(r.fit.history.size());
    metrics["aborted"] = r.fit.aborted ? 1 : 0;
    metrics["seconds"] = r.seconds;
    write_metrics(dir / "metrics.txt", metrics);

    RunManifest m;
    m.config_text = cfg.to_text();
    m.config_hash = cfg.hash();
    m.dataset_hash = data.dataset_hash;
    m.seeds = {cfg.seed};
    m.files = {"checkpoint.bin", "log.csv", "metrics.txt"};
    write_manifest(dir / "manifest.json", m);
    if (r.fit.aborted) throw NumericalError("training aborted: " + r.fit.abort_reason + " (best checkpoint kept in " + dir.string() + ")");
    return r;
}

struct LoadedRun {
    IdclModel model;
    RunManifest manifest;
    std::shared_ptr<const SparseMatrix> adjacency;
};

/// Loads a finished run and checks that it was trained on `data`.
inline LoadedRun load_run(const PreparedData& data, const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw ExperimentError("no run in " + dir.string());
    auto manifest = read_manifest(dir / "manifest.json");
    if (manifest.dataset_hash != data.dataset_hash) {
        throw ExperimentError(dir.string() + " was trained on dataset " + manifest.dataset_hash + ", not on the prepared dataset " +
                              data.dataset_hash);
    }
    auto cfg = TrainConfig::from_text(manifest.config_text);
    auto model = load_checkpoint(dir / "checkpoint.bin", &cfg);
    if (model.shape().num_users != data.graph.num_users() || model.shape().num_items != data.graph.num_items() ||
        model.shape().num_concepts != data.graph.num_concepts()) {
        throw ExperimentError(dir.string() + ": checkpoint graph size differs from the prepared dataset");
    }
    auto adj = std::make_shared<const SparseMatrix>(normalized_adjacency(training_edges(data.graph, data.split)));
    return {std::move(model), std::move(manifest), std::move(adj)};
}

inline EvalResult evaluate_run(const PreparedData& data, const fs::path& dir, Fold fold) {
    auto run = load_run(data, dir);
    return evaluate(run.model, data.graph, data.split, run.adjacency, fold, eval_options(run.model.config()));
}

// ---------------------------------------------------------------------------
// Analysis exports

struct AnalysisSummary {
    double within = 0;
    double cross = 0;
    std::vector<double> proportions;
    double entropy = 0;
    std::vector<std::string> files;
};

struct AnalysisOptions {
    int samples = 500;
    std::uint64_t seed = 0;
    int top_m = 3;
    std::string user;  // raw id for the behavior-distribution export; empty picks the first user
    bool embeddings = true;
};

inline Table matrix_table(const Matrix& m, const std::string& id_col, const std::string& prefix) {
    Table t;
    t.values = m;
    t.header = numbered_header(id_col, prefix, m.cols());
    for (Index r = 0; r < m.rows(); ++r) t.ids.push_back(std::to_string(r));
    return t;
}

/// Writes the interpretability tables into `<run>/analysis/` and lists them in
/// `analysis/manifest.json`. File names carry the checkpoint hash and seed.
inline AnalysisSummary analyze_run(const PreparedData& data, const fs::path& dir, const AnalysisOptions& opts) {
    auto run = load_run(data, dir);
    if (!run.model.has_disentangler()) throw ExperimentError("analyze: the " + std::string(variant_name(run.model.config().variant)) + " variant has no intents");
    const auto out = dir / "analysis";
    fs::create_directories(out);
    const std::string tag = hex64(fnv1a(read_bytes(dir / "checkpoint.bin"))) + "_s" + std::to_string(opts.seed);
    auto name = [&](const std::string& stem) { return stem + "_" + tag + ".csv"; };

    ag::NoGradGuard no_grad;
    const auto view = run.model.encode(run.adjacency);
    AnalysisSummary s;
    auto emit = [&](const std::string& file, const Table& t) {
        write_table(out / file, t);
        s.files.push_back(file);
    };

    const auto blocks = intent_block_similarity(run.model, view, data.graph, data.split, opts.samples, opts.seed);
    s.within = blocks.mean_within();
    s.cross = blocks.mean_cross();
    emit(name("intent_similarity"), matrix_table(blocks.similarity, "row", "c"));
    emit(name("intent_block_means"), matrix_table(blocks.block_means, "intent", "k"));
    const auto users = user_block_similarity(run.model, view, opts.samples, opts.seed);
    emit(name("user_block_means"), matrix_table(users.block_means, "block", "k"));

    const auto pass = behavior_pass(run.model, view, training_behaviors(data.graph, data.split));
    s.proportions = intent_proportions(pass.distribution);
    s.entropy = entropy(s.proportions);
    Table props;
    props.header = {"intent", "proportion"};
    props.values.resize(static_cast<Index>(s.proportions.size()), 1);
    for (std::size_t k = 0; k < s.proportions.size(); ++k) {
        props.ids.push_back(std::to_string(k));
        props.values(static_cast<Index>(k), 0) = s.proportions[k];
    }
    emit(name("intent_proportions"), props);

    // radar data: one user's training behaviors, with the top-m intents as labels
    const int uid = opts.user.empty() ? 0 : data.graph.users.at(opts.user);
    std::vector<RawPair> pairs;
    for (int e : data.split.train_edges) {
        const auto& b = data.graph.behaviors[static_cast<std::size_t>(e)];
        if (b.user == uid) pairs.push_back({data.graph.users.name(b.user), data.graph.items.name(b.item)});
    }
    const auto dist = behavior_distribution_export(run.model, view, data.graph, pairs);
    Table radar = matrix_table(dist, "item", "p");
    const auto top = top_intents(dist, opts.top_m);
    radar.header.push_back("top" + std::to_string(opts.top_m));
    radar.values.conservativeResize(Eigen::NoChange, radar.values.cols() + 1);
    for (std::size_t r = 0; r < pairs.size(); ++r) {
        radar.ids[r] = pairs[r].item;
        // bit mask of the top-m intents, so the table stays numeric
        double mask = 0;
        for (int k : top[r]) mask += std::ldexp(1.0, k);
        radar.values(static_cast<Index>(r), radar.values.cols() - 1) = mask;
    }
    emit(name("behavior_distribution_user" + data.graph.users.name(uid)), radar);

    if (opts.embeddings) {
        emit(name("embeddings_user"), export_embeddings(run.model, view, data.graph, data.split, EmbeddingKind::user));
        emit(name("embeddings_item"), export_embeddings(run.model, view, data.graph, data.split, EmbeddingKind::item));
    }

    nlohmann::json summary = {{"within_intent_similarity", s.within},
                              {"cross_intent_similarity", s.cross},
                              {"proportion_entropy", s.entropy},
                              {"omitted_intents", blocks.omitted_groups},
                              {"samples_per_intent", opts.samples},
                              {"seed", opts.seed},
                              {"files", s.files},
                              {"config_hash", run.manifest.config_hash},
                              {"dataset_hash", run.manifest.dataset_hash}};
    write_bytes(out / "manifest.json", summary.dump(2) + "\n");

    auto manifest = run.manifest;
    for (const auto& f : s.files) {
        const auto rel = "analysis/" + f;
        if (std::find(manifest.files.begin(), manifest.files.end(), rel) == manifest.files.end()) manifest.files.push_back(rel);
    }
    if (std::find(manifest.files.begin(), manifest.files.end(), "analysis/manifest.json") == manifest.files.end()) {
        manifest.files.push_back("analysis/manifest.json");
    }
    write_manifest(dir / "manifest.json", manifest);
    return s;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_mean_std(const MetricSummary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << s.mean << "±" << s.stddev;
    return os.str();
}

/// Method x metric grid with mean±std cells.
inline std::string report_grid(const std::vector<std::pair<std::string, MetricsReport>>& rows, const std::vector<std::string>& metrics) {
    std::ostringstream os;
    os << std::left << std::setw(10) << "method";
    for (const auto& m : metrics) os << ' ' << std::setw(16) << m;
    os << '\n';
    for (const auto& [method, report] : rows) {
        os << std::setw(10) << method;
        for (const auto& m : metrics) {
            auto it = report.find(m);
            os << ' ' << std::setw(16) << (it == report.end() ? std::string("-") : format_mean_std(it->second));
        }
        os << '\n';
    }
    return os.str();
}

inline std::vector<std::string> default_report_metrics(const std::vector<int>& topk) {
    std::vector<std::string> out;
    for (int k : topk) out.push_back("recall@" + std::to_string(k));
    for (int k : topk) out.push_back("ndcg@" + std::to_string(k));
    return out;
}

}  // namespace idcl
