#include "idcl/idcl.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace idcl;

struct Common {
    std::string config;
    std::string dataset = "ml-100k";
    std::string out = "runs";
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "config file (key = value lines)")->check(CLI::ExistingFile);
    cmd->add_option("--dataset", c.dataset, "dataset name")->capture_default_str();
    cmd->add_option("--out", c.out, "root directory for prepared data and runs")->capture_default_str();
    cmd->add_option("--set", c.overrides, "config override key=value (repeatable)");
}

TrainConfig load_config(const Common& c) {
    TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::from_file(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        const auto tok = s.substr(start, comma - start);
        std::size_t used = 0;
        std::uint64_t v = 0;
        try {
            v = std::stoull(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (tok.empty() || used != tok.size()) throw ConfigError("invalid seed '" + tok + "'");
        out.push_back(v);
        start = comma + 1;
    }
    return out;
}

std::vector<std::uint64_t> resolve_seeds(std::optional<std::uint64_t> seed, const std::string& seeds, std::uint64_t fallback) {
    if (seed && !seeds.empty()) throw ConfigError("give either --seed or --seeds, not both");
    if (seed) return {*seed};
    if (!seeds.empty()) return parse_seeds(seeds);
    return {fallback};
}

std::vector<Variant> parse_variants(const std::string& s) {
    std::vector<Variant> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(parse_variant(s.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

MetricsReport collect(const PreparedData& data, const fs::path& root, const std::string& dataset, Variant v,
                      const std::vector<std::uint64_t>& seeds, Fold fold, std::ostream& os) {
    std::vector<MetricValues> runs;
    for (auto seed : seeds) {
        const auto dir = run_dir(root, dataset, v, seed);
        auto r = evaluate_run(data, dir, fold);
        os << variant_name(v) << " seed " << seed << ":";
        for (const auto& [k, val] : r.metrics) os << ' ' << k << '=' << val;
        os << '\n';
        runs.push_back(std::move(r.metrics));
    }
    return aggregate_runs(runs);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Intent-disentangled contrastive recommender"};
    app.require_subcommand(1);

    Common prep_c, train_c, eval_c, analyze_c, compare_c;

    auto* prepare = app.add_subcommand("prepare", "build the graph and the train/val/test split");
    add_common(prepare, prep_c);
    std::string data_dir;
    std::optional<std::uint64_t> split_seed;
    prepare->add_option("--data-dir", data_dir, "directory with ratings.tsv and item_concepts.tsv (default data/<dataset>)");
    prepare->add_option("--seed", split_seed, "split seed (default train.seed)");

    auto* train = app.add_subcommand("train", "train one or more seeds of a variant");
    add_common(train, train_c);
    std::string train_variant, train_seeds;
    std::optional<std::uint64_t> train_seed;
    bool overwrite = false, deterministic = false, quiet = false;
    train->add_option("--variant", train_variant, "idcl | lightgcn | no-icl | no-cr (default from config)");
    train->add_option("--seed", train_seed, "model seed");
    train->add_option("--seeds", train_seeds, "comma-separated model seeds");
    train->add_flag("--overwrite", overwrite, "replace an existing run directory");
    train->add_flag("--deterministic", deterministic, "single-threaded linear algebra");
    train->add_flag("--quiet", quiet, "do not echo the training log");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "re-evaluate saved checkpoints on the test fold");
    add_common(evaluate_cmd, eval_c);
    std::string eval_variant = "idcl", eval_seeds, eval_fold = "test";
    std::optional<std::uint64_t> eval_seed;
    evaluate_cmd->add_option("--variant", eval_variant)->capture_default_str();
    evaluate_cmd->add_option("--seed", eval_seed);
    evaluate_cmd->add_option("--seeds", eval_seeds);
    evaluate_cmd->add_option("--fold", eval_fold, "val | test")->capture_default_str();

    auto* analyze = app.add_subcommand("analyze", "export intent similarity, proportions and embeddings");
    add_common(analyze, analyze_c);
    std::string analyze_variant = "idcl";
    std::optional<std::uint64_t> analyze_seed;
    AnalysisOptions aopts;
    bool no_embeddings = false;
    analyze->add_option("--variant", analyze_variant)->capture_default_str();
    analyze->add_option("--seed", analyze_seed, "run seed (default train.seed)");
    analyze->add_option("--samples", aopts.samples, "behaviors sampled per intent")->capture_default_str();
    analyze->add_option("--analysis-seed", aopts.seed, "sampling seed")->capture_default_str();
    analyze->add_option("--top-m", aopts.top_m, "intents highlighted per behavior")->capture_default_str();
    analyze->add_option("--user", aopts.user, "raw user id for the behavior-distribution export");
    analyze->add_flag("--no-embeddings", no_embeddings, "skip the embedding exports");

    auto* compare = app.add_subcommand("compare", "method x metric grid with mean±std over seeds");
    add_common(compare, compare_c);
    std::string compare_variants = "idcl,lightgcn,no-icl,no-cr", compare_seeds, compare_fold = "test";
    std::optional<std::uint64_t> compare_seed;
    compare->add_option("--variants", compare_variants)->capture_default_str();
    compare->add_option("--seed", compare_seed);
    compare->add_option("--seeds", compare_seeds);
    compare->add_option("--fold", compare_fold, "val | test")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    tune_allocator();

    try {
        if (*prepare) {
            const auto cfg = load_config(prep_c);
            const fs::path dir = data_dir.empty() ? fs::path("data") / prep_c.dataset : fs::path(data_dir);
            const auto out = prepared_dir(prep_c.out, prep_c.dataset);
            const auto p = prepare_dataset(dataset_files(dir), cfg, split_seed.value_or(cfg.seed), out);
            std::cout << "prepared " << out.string() << ": " << p.graph.num_users() << " users, " << p.graph.num_items()
                      << " items, " << p.graph.num_concepts() << " concepts, " << p.graph.num_behaviors() << " behaviors ("
                      << p.split.train_edges.size() << "/" << p.split.val_edges.size() << "/" << p.split.test_edges.size()
                      << " train/val/test), dataset hash " << p.dataset_hash << "\n";
        } else if (*train) {
            if (deterministic) Eigen::setNbThreads(1);
            auto cfg = load_config(train_c);
            if (!train_variant.empty()) cfg.variant = parse_variant(train_variant);
            const auto data = load_prepared(prepared_dir(train_c.out, train_c.dataset));
            std::vector<MetricValues> tests;
            for (auto seed : resolve_seeds(train_seed, train_seeds, cfg.seed)) {
                cfg.seed = seed;
                const auto dir = run_dir(train_c.out, train_c.dataset, cfg.variant, seed);
                std::cerr << "training " << variant_name(cfg.variant) << " seed " << seed << " -> " << dir.string() << "\n";
                const auto r = train_run(data, cfg, dir, overwrite, quiet ? nullptr : &std::cerr);
                std::cout << variant_name(cfg.variant) << " seed " << seed << ": best epoch " << r.fit.best_epoch << ", val recall@20 "
                          << r.val.metrics.at("recall@20");
                if (!r.test.metrics.empty()) std::cout << ", test recall@20 " << r.test.metrics.at("recall@20");
                std::cout << " (" << std::fixed << std::setprecision(1) << r.seconds << std::defaultfloat << " s)\n";
                if (!r.test.metrics.empty()) tests.push_back(r.test.metrics);
            }
            if (tests.size() > 1) std::cout << report_grid({{std::string(variant_name(cfg.variant)), aggregate_runs(tests)}}, default_report_metrics(cfg.topk));
        } else if (*evaluate_cmd) {
            const auto cfg = load_config(eval_c);
            const auto data = load_prepared(prepared_dir(eval_c.out, eval_c.dataset));
            const auto v = parse_variant(eval_variant);
            const auto fold = parse_fold(eval_fold);
            const auto report = collect(data, eval_c.out, eval_c.dataset, v, resolve_seeds(eval_seed, eval_seeds, cfg.seed), fold, std::cout);
            std::cout << report_grid({{std::string(variant_name(v)), report}}, default_report_metrics(cfg.topk));
        } else if (*analyze) {
            const auto cfg = load_config(analyze_c);
            const auto data = load_prepared(prepared_dir(analyze_c.out, analyze_c.dataset));
            aopts.embeddings = !no_embeddings;
            const auto dir = run_dir(analyze_c.out, analyze_c.dataset, parse_variant(analyze_variant), analyze_seed.value_or(cfg.seed));
            const auto s = analyze_run(data, dir, aopts);
            std::cout << "within-intent similarity " << s.within << ", cross-intent similarity " << s.cross << ", proportion entropy "
                      << s.entropy << " nats\n";
            for (const auto& f : s.files) std::cout << (dir / "analysis" / f).string() << "\n";
        } else if (*compare) {
            const auto cfg = load_config(compare_c);
            const auto data = load_prepared(prepared_dir(compare_c.out, compare_c.dataset));
            const auto fold = parse_fold(compare_fold);
            const auto seeds = resolve_seeds(compare_seed, compare_seeds, cfg.seed);
            std::vector<std::pair<std::string, MetricsReport>> rows;
            for (auto v : parse_variants(compare_variants)) {
                rows.emplace_back(std::string(variant_name(v)), collect(data, compare_c.out, compare_c.dataset, v, seeds, fold, std::cerr));
            }
            const auto metrics = default_report_metrics(cfg.topk);
            std::ostringstream os;
            os << report_grid(rows, metrics);
            const auto base = std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.first == "idcl"; });
            if (base != rows.end() && rows.size() > 1) {
                os << "\nrelative to idcl (mean difference)\n";
                for (const auto& [name, report] : rows) {
                    if (name == "idcl") continue;
                    os << std::left << std::setw(10) << name;
                    for (const auto& m : metrics) {
                        std::ostringstream cell;
                        cell << std::showpos << std::fixed << std::setprecision(4)
                             << report.at(m).mean - base->second.at(m).mean;
                        os << ' ' << std::setw(16) << cell.str();
                    }
                    os << '\n';
                }
            }
            std::cout << os.str();
            write_bytes(fs::path(compare_c.out) / compare_c.dataset / ("compare_" + compare_fold + ".txt"), os.str());
        }
    } catch (const std::exception& e) {
        std::cerr << "idcl: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
