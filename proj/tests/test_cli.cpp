#include "idcl/idcl.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using namespace idcl;

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const char* bin = std::getenv("IDCL_BIN");
        if (!bin) GTEST_SKIP() << "IDCL_BIN not set";
        bin_ = bin;
        root_ = fs::temp_directory_path() / ("idcl_cli_" + std::to_string(::getpid()) + "_" +
                                             ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_ / "data");
        write_dataset(root_ / "data", 1);
        write_file(root_ / "tiny.conf",
                   "model.dim = 8\nmodel.intents = 2\nmodel.layers = 2\nicl.batch = 8\ntrain.batch_size = 32\n"
                   "train.max_epochs = 3\ntrain.patience = 2\ntrain.seed = 5\nloss.lambda_icl = 0.2\nloss.lambda_cr = 0.1\n");
    }

    void TearDown() override {
        if (!root_.empty()) fs::remove_all(root_);
    }

    static void write_file(const fs::path& p, const std::string& s) {
        std::ofstream out(p);
        out << s;
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }

    static void write_dataset(const fs::path& dir, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::ostringstream ratings, concepts;
        for (int u = 0; u < 14; ++u) {
            for (int i = 0; i < 30; ++i) {
                if (std::uniform_real_distribution<>(0, 1)(rng) < 0.35) ratings << "u" << u << "\ti" << i << "\t" << 1 + rng() % 5 << "\t" << 1000 + i << "\n";
            }
        }
        for (int i = 0; i < 30; ++i) {
            concepts << "i" << i << "\tg" << i % 4 << "\n";
            if (i % 5 == 0) concepts << "i" << i << "\tg" << (i + 1) % 4 << "\n";
        }
        write_file(dir / "ratings.tsv", ratings.str());
        write_file(dir / "item_concepts.tsv", concepts.str());
    }

    Outcome run(const std::string& args) const {
        const auto out = root_ / "stdout.txt";
        const auto err = root_ / "stderr.txt";
        const std::string cmd = "cd '" + root_.string() + "' && '" + bin_ + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        return {WEXITSTATUS(status), slurp(out), slurp(err)};
    }

    Outcome prepare() const { return run("prepare --dataset tiny --data-dir data --out runs --config tiny.conf"); }

    Outcome train(const std::string& extra = "") const {
        return run("train --dataset tiny --out runs --config tiny.conf --quiet " + extra);
    }

    fs::path run_path(const std::string& variant, int seed) const { return root_ / "runs" / "tiny" / variant / std::to_string(seed); }

    std::string bin_;
    fs::path root_;
};

TEST_F(CliTest, PrepareIsIdempotent) {
    auto first = prepare();
    ASSERT_EQ(first.code, 0) << first.err;
    const auto dir = root_ / "runs" / "tiny" / "prepared";
    const auto manifest = slurp(dir / "prepared.json");
    const auto split = slurp(dir / "split.tsv");
    auto second = prepare();
    ASSERT_EQ(second.code, 0) << second.err;
    EXPECT_EQ(slurp(dir / "prepared.json"), manifest);
    EXPECT_EQ(slurp(dir / "split.tsv"), split);
    EXPECT_EQ(first.out, second.out);
}

TEST_F(CliTest, PrepareRefusesDifferentSplitInPlace) {
    ASSERT_EQ(prepare().code, 0);
    auto r = run("prepare --dataset tiny --data-dir data --out runs --config tiny.conf --seed 99");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("different prepared split"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingConceptFileIsActionable) {
    fs::remove(root_ / "data" / "item_concepts.tsv");
    auto r = prepare();
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("item-concept file"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("item \\t concept"), std::string::npos) << r.err;
}

TEST_F(CliTest, MalformedRatingsReportLine) {
    write_file(root_ / "data" / "ratings.tsv", "u0\ti0\t5\t1\nu1\ti1\tfive\t2\n");
    auto r = prepare();
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find(":2"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainWritesRunLayout) {
    ASSERT_EQ(prepare().code, 0);
    auto r = train("--seed 3");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto dir = run_path("idcl", 3);
    for (const char* f : {"checkpoint.bin", "log.csv", "metrics.txt", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;

    const auto m = read_manifest(dir / "manifest.json");
    auto cfg = TrainConfig::from_file(root_ / "tiny.conf");
    cfg.seed = 3;
    EXPECT_EQ(m.config_hash, cfg.hash());
    EXPECT_EQ(TrainConfig::from_text(m.config_text).hash(), m.config_hash);
    EXPECT_EQ(m.seeds, std::vector<std::uint64_t>{3});
    const auto prepared = nlohmann::json::parse(slurp(root_ / "runs" / "tiny" / "prepared" / "prepared.json"));
    EXPECT_EQ(m.dataset_hash, prepared.at("dataset_hash").get<std::string>());
    for (const auto& f : m.files) EXPECT_TRUE(fs::exists(dir / f)) << f;

    const auto log = slurp(dir / "log.csv");
    EXPECT_EQ(log.rfind("epoch,bpr,icl,dR,total,val_recall@20\n", 0), 0u);
    EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);

    auto loaded = load_checkpoint(dir / "checkpoint.bin", &cfg);
    EXPECT_EQ(loaded.config().hash(), cfg.hash());
}

TEST_F(CliTest, TrainRefusesSilentOverwrite) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seed 3").code, 0);
    const auto before = slurp(run_path("idcl", 3) / "checkpoint.bin");
    auto again = train("--seed 3 --set train.lr=0.01");
    EXPECT_NE(again.code, 0);
    EXPECT_NE(again.err.find("--overwrite"), std::string::npos) << again.err;
    EXPECT_EQ(slurp(run_path("idcl", 3) / "checkpoint.bin"), before);
    EXPECT_EQ(train("--seed 3 --overwrite --set train.lr=0.01").code, 0);
}

TEST_F(CliTest, TrainIsDeterministic) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seed 4 --deterministic").code, 0);
    const auto first = slurp(run_path("idcl", 4) / "checkpoint.bin");
    ASSERT_EQ(train("--seed 4 --deterministic --overwrite").code, 0);
    EXPECT_EQ(slurp(run_path("idcl", 4) / "checkpoint.bin"), first);
}

TEST_F(CliTest, TrainWithoutPrepareFails) {
    auto r = train("--seed 1");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("idcl prepare"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvaluateReproducesTrainingMetrics) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seeds 1,2").code, 0);
    auto r = run("evaluate --dataset tiny --out runs --config tiny.conf --seeds 1,2");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto metrics = read_metrics(run_path("idcl", 2) / "metrics.txt");
    EXPECT_NE(r.out.find("seed 2:"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("±"), std::string::npos) << r.out;

    auto data = load_prepared(root_ / "runs" / "tiny" / "prepared");
    const auto again = evaluate_run(data, run_path("idcl", 2), Fold::test);
    EXPECT_NEAR(again.metrics.at("recall@20"), metrics.at("test.recall@20"), 1e-9);
}

TEST_F(CliTest, EvaluateRefusesForeignDataset) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seed 1").code, 0);
    fs::create_directories(root_ / "other");
    write_dataset(root_ / "other", 2);
    ASSERT_EQ(run("prepare --dataset tiny --data-dir other --out runs2 --config tiny.conf").code, 0);
    fs::create_directories(root_ / "runs2" / "tiny" / "idcl");
    fs::copy(run_path("idcl", 1), root_ / "runs2" / "tiny" / "idcl" / "1", fs::copy_options::recursive);
    auto r = run("evaluate --dataset tiny --out runs2 --config tiny.conf --seed 1");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("trained on dataset"), std::string::npos) << r.err;
}

TEST_F(CliTest, AnalyzeWritesListedFiles) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seed 1").code, 0);
    auto r = run("analyze --dataset tiny --out runs --config tiny.conf --seed 1 --samples 20 --top-m 1");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto dir = run_path("idcl", 1);
    const auto summary = nlohmann::json::parse(slurp(dir / "analysis" / "manifest.json"));
    const auto files = summary.at("files").get<std::vector<std::string>>();
    EXPECT_GE(files.size(), 6u);
    const auto m = read_manifest(dir / "manifest.json");
    for (const auto& f : files) {
        EXPECT_TRUE(fs::exists(dir / "analysis" / f)) << f;
        EXPECT_NE(std::find(m.files.begin(), m.files.end(), "analysis/" + f), m.files.end()) << f;
        EXPECT_NE(f.find("_s0.csv"), std::string::npos) << f;
    }
    const auto props = std::find_if(files.begin(), files.end(), [](const auto& f) { return f.rfind("intent_proportions", 0) == 0; });
    ASSERT_NE(props, files.end());
    const auto t = read_table(dir / "analysis" / *props);
    EXPECT_NEAR(t.values.sum(), 1.0, 1e-9);
    EXPECT_EQ(t.values.rows(), 2);
}

TEST_F(CliTest, AnalyzeRejectsEncoderOnlyVariant) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seed 1 --variant lightgcn").code, 0);
    auto r = run("analyze --dataset tiny --out runs --config tiny.conf --seed 1 --variant lightgcn");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("no intents"), std::string::npos) << r.err;
}

TEST_F(CliTest, CompareEmitsGridAndAblationRows) {
    ASSERT_EQ(prepare().code, 0);
    for (const char* v : {"idcl", "lightgcn", "no-cr"}) ASSERT_EQ(train(std::string("--seeds 1,2 --variant ") + v).code, 0) << v;
    auto r = run("compare --dataset tiny --out runs --config tiny.conf --seeds 1,2 --variants idcl,lightgcn,no-cr");
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* s : {"method", "recall@20", "ndcg@100", "idcl", "lightgcn", "no-cr", "relative to idcl", "±"}) {
        EXPECT_NE(r.out.find(s), std::string::npos) << s << "\n" << r.out;
    }
    EXPECT_TRUE(fs::exists(root_ / "runs" / "tiny" / "compare_test.txt"));
}

TEST_F(CliTest, CompareFailsOnMissingRun) {
    ASSERT_EQ(prepare().code, 0);
    ASSERT_EQ(train("--seed 1").code, 0);
    auto r = run("compare --dataset tiny --out runs --config tiny.conf --seeds 1 --variants idcl,no-icl");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("no run in"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrorsExitNonzero) {
    EXPECT_NE(run("").code, 0);
    EXPECT_NE(run("frobnicate").code, 0);
    ASSERT_EQ(prepare().code, 0);
    auto bad_variant = train("--variant bogus");
    EXPECT_NE(bad_variant.code, 0);
    EXPECT_FALSE(bad_variant.err.empty());
    auto bad_key = train("--set model.width=3");
    EXPECT_NE(bad_key.code, 0);
    EXPECT_NE(bad_key.err.find("model.width"), std::string::npos) << bad_key.err;
    auto both = train("--seed 1 --seeds 1,2");
    EXPECT_NE(both.code, 0);
}

}  // namespace
