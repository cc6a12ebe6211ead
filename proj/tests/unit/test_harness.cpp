#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <set>

#include "onepass/harness/bench.hpp"
#include "onepass/harness/config.hpp"
#include "onepass/harness/experiment.hpp"
#include "onepass/harness/report.hpp"
#include "support/models.hpp"

using namespace onepass;
using namespace onepass::testing_support;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("onepass_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> csv_header(const std::string& text) {
    const auto first = text.find('\n');
    const auto second = text.find('\n', first + 1);
    return split_list(text.substr(first + 1, second - first - 1));
}

// A complete miniature lab on disk: corpus, tokenizer, split, untrained
// checkpoint and a config exercising every table with tiny budgets.
fs::path write_mini_lab(const fs::path& dir) {
    std::string corpus;
    for (int i = 0; i < 120; ++i)
        corpus += "the parser reads token " + std::to_string(i % 17) + " and returns a value for line " +
                  std::to_string(i) + ".\n";
    io::write_file(dir / "corpus.txt", corpus);
    const auto tok = Tokenizer::build(corpus, 300);
    io::write_file(dir / "tok.txt", tok.serialize());
    save_split(dir / "split.txt", make_split(tok.encode(corpus), 0.2));
    auto cfg = tiny_config(16, 300, 1);
    cfg.max_positions = 64;
    save_checkpoint(dir / "model.ptlm", lively_weights(cfg, 1, 2.f));
    io::write_file(dir / "lab.cfg",
                   "checkpoint = model.ptlm\n"
                   "tokenizer = tok.txt\n"
                   "corpus = corpus.txt\n"
                   "split = split.txt\n"
                   "tables = arrangement, sharing, capacity, interp, distance, bench\n"
                   "arrangement = e_then_m\n"
                   "max_steps = 25\n"
                   "arrangement_lengths = 1, 2\n"
                   "ladder = 1, 2, 4\n"
                   "seeds = 0, 1\n"
                   "texts = 2\n"
                   "sources = seen, random, generated\n"
                   "context_length = 8\n"
                   "text_length = 4\n"
                   "group_size = 2\n"
                   "group_length = 3\n"
                   "restarts = 2\n"
                   "interp_texts = 1\n"
                   "interp_length = 3\n"
                   "bezier_steps = 10\n"
                   "distance_contexts = 2\n"
                   "distance_continuations = 2\n"
                   "distance_length = 3\n"
                   "bench_lengths = 2\n"
                   "bench_repetitions = 1\n");
    return dir / "lab.cfg";
}

}  // namespace

TEST(Config, ParsesKeyValueText) {
    const auto kv = parse_key_values("# comment\n  seeds = 3, 4 # trailing\n\ntexts=7\r\n");
    EXPECT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv.at("seeds"), "3, 4");
    const auto cfg = ExperimentConfig::from_key_values(kv);
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(cfg.texts, 7u);
}

TEST(Config, RejectsMalformedText) {
    EXPECT_THROW(parse_key_values("seeds 3\n"), ConfigError);
    EXPECT_THROW(parse_key_values(" = 3\n"), ConfigError);
    EXPECT_THROW(parse_key_values("a = 1\na = 2\n"), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_key_values({{"sneeds", "1"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_key_values({{"texts", "seven"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_key_values({{"texts", "-1"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_key_values({{"bos_first", "maybe"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_key_values({{"share", "both"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_key_values({{"arrangement", "m_then_e"}}), ConfigError);
}

TEST(Config, CanonicalTextRoundtrips) {
    auto cfg = ExperimentConfig::from_key_values({{"seeds", "5,6"}, {"learning_rate", "0.003"}, {"ladder", "2,8"}});
    const auto again = ExperimentConfig::from_key_values(parse_key_values(cfg.canonical_text()));
    EXPECT_EQ(again.canonical_text(), cfg.canonical_text());
    EXPECT_EQ(again.hash(), cfg.hash());
    EXPECT_EQ(again.opt, cfg.opt);
}

TEST(Config, HashIgnoresPathsAndWorkers) {
    auto a = ExperimentConfig::from_key_values({{"checkpoint", "/x/a.ptlm"}, {"workers", "1"}});
    auto b = ExperimentConfig::from_key_values({{"checkpoint", "/y/b.ptlm"}, {"workers", "8"}});
    EXPECT_EQ(a.hash(), b.hash());
    b.seeds = {9};
    EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, ValidationCatchesBadSetups) {
    const auto dir = scratch("validate");
    const auto path = write_mini_lab(dir);
    auto cfg = ExperimentConfig::load(path);
    EXPECT_NO_THROW(cfg.validate());
    auto bad = cfg;
    bad.seeds.clear();
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.seeds = {0};
    EXPECT_THROW(bad.validate(), ConfigError);  // interpolation needs two
    bad = cfg;
    bad.tables.push_back("plots");
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.sources.push_back("web");
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.checkpoint = dir / "missing.ptlm";
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = cfg;
    bad.opt.learning_rate = -1;
    EXPECT_THROW(bad.validate(), ConfigError);
    fs::remove_all(dir);
}

TEST(Csv, HeaderCarriesProvenance) {
    CsvTable t("demo", {"a", "b"});
    t.add({"1", "x"});
    EXPECT_THROW(t.add({"1"}), InputError);
    EXPECT_THROW(t.add({"1", "x,y"}), InputError);
    const auto text = t.render({0xdeadbeef, 0x01234567, 0x89abcdef});
    EXPECT_EQ(text, "# onepass demo v1 model=deadbeef tokenizer=01234567 config=89abcdef\na,b\n1,x\n");
}

TEST(Csv, NumbersRoundtrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5, 0.0}) EXPECT_EQ(std::strtod(fmt(v).c_str(), nullptr), v);
    EXPECT_EQ(fmt(0.5), "0.5");
    EXPECT_EQ(fmt(std::size_t{42}), "42");
}

TEST(Jobs, ResultsFollowJobOrder) {
    for (std::size_t workers : {1u, 3u, 8u}) {
        std::vector<std::string> errs;
        const auto out = run_jobs<int>(
            20,
            [](std::size_t i) -> int {
                if (i % 7 == 3) throw InputError("job " + std::to_string(i));
                return static_cast<int>(i * i);
            },
            workers, &errs);
        ASSERT_EQ(out.size(), 20u);
        for (std::size_t i = 0; i < 20; ++i) {
            if (i % 7 == 3) {
                EXPECT_FALSE(out[i].has_value());
                EXPECT_EQ(errs[i], InputError("job " + std::to_string(i)).what());
            } else {
                EXPECT_EQ(*out[i], static_cast<int>(i * i));
                EXPECT_TRUE(errs[i].empty());
            }
        }
    }
    EXPECT_TRUE(run_jobs<int>(0, [](std::size_t) { return 1; }, 4).empty());
}

TEST(Jobs, DeterministicModeForcesOneWorker) {
    setenv("ONEPASS_DETERMINISTIC", "1", 1);
    EXPECT_EQ(worker_count(8), 1u);
    setenv("ONEPASS_DETERMINISTIC", "0", 1);
    EXPECT_EQ(worker_count(8), 8u);
    unsetenv("ONEPASS_DETERMINISTIC");
}

TEST(Bench, OnePassIsOneForwardAndReferenceIsN) {
    auto cfg = tiny_config(16, 16, 1);
    cfg.max_positions = 80;
    const Transformer<float> model(lively_weights(cfg, 2));
    ProtoSolution s;
    s.e = std::vector<float>(16, 0.3f);
    s.m = std::vector<float>(16, -0.2f);
    s.arrangement = {ArrangementKind::EThenM, true};
    s.N = 64;
    const auto text = one_pass_decode(model, solution_input(model, s), s.layout().guided);
    const auto b = bench_throughput(model, s, text, 3);
    EXPECT_EQ(b.one_pass_forward_count, 1u);
    EXPECT_EQ(b.ar_forward_count, 64u);
    EXPECT_EQ(b.repetitions, 3u);
    EXPECT_GT(b.one_pass_seconds, 0);
    EXPECT_DOUBLE_EQ(b.throughput_ratio, b.ar_seconds / b.one_pass_seconds);

    auto wrong = text;
    wrong[5] = static_cast<TokenId>((wrong[5] + 1) % 16);
    EXPECT_THROW(bench_throughput(model, s, wrong, 1), InputError);
    EXPECT_THROW(bench_throughput(model, s, text, 0), ConfigError);
}

TEST(TrainingTime, MeansPerLength) {
    std::vector<ProtoSolution> runs(3);
    runs[0].N = 4;
    runs[0].timing = {2.0, 1.5, 10};
    runs[1].N = 4;
    runs[1].timing = {4.0, 3.5, 30};
    runs[2].N = 8;
    runs[2].timing = {1.0, 0.5, 5};
    const auto rows = record_training_time(runs, "tiny");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].N, 4u);
    EXPECT_EQ(rows[0].runs, 2u);
    EXPECT_DOUBLE_EQ(rows[0].mean_seconds, 3.0);
    EXPECT_DOUBLE_EQ(rows[0].mean_steps, 20.0);
    EXPECT_DOUBLE_EQ(rows[0].mean_step_seconds_sum, 2.5);
    EXPECT_EQ(rows[1].model, "tiny");
    EXPECT_TRUE(record_training_time({}, "x").empty());
}

TEST(Experiment, WritesEveryTableWithDocumentedColumns) {
    const auto dir = scratch("tables");
    auto cfg = ExperimentConfig::load(write_mini_lab(dir));
    cfg.output = dir / "out";
    const auto res = run_experiment(cfg);
    for (const auto& f : res.failures) ADD_FAILURE() << f.table << " " << f.job << ": " << f.message;

    const std::map<std::string, std::vector<std::string>> schema{
        {"arrangement.csv", {"arrangement", "N", "text_id", "seed", "accuracy", "c_tokens", "steps_used", "h_lm"}},
        {"arrangement_summary.csv", {"arrangement", "N", "texts", "mean_best_accuracy"}},
        {"sharing.csv", {"share", "group", "text_id", "restart", "seed", "accuracy", "c_tokens", "steps_used"}},
        {"sharing_summary.csv", {"share", "group", "text_id", "restarts", "max_accuracy", "avg_accuracy"}},
        {"capacity.csv",
         {"source", "text_id", "N", "best_accuracy", "best_c_tokens", "best_seed", "best_steps", "h_lm", "seeds_run"}},
        {"capacity_summary.csv", {"source", "text_id", "max_N", "c_tokens_at_max", "h_lm_at_max"}},
        {"interp.csv", {"text_id", "curve", "tau", "accuracy"}},
        {"interp_summary.csv",
         {"text_id", "seed_a", "seed_b", "accuracy_a", "accuracy_b", "linear_mean", "bezier_mean", "length_ratio"}},
        {"distance.csv",
         {"text_a", "context_a", "seed_a", "text_b", "context_b", "seed_b", "group", "embedding_distance",
          "tfidf_distance", "proxy_semantic_distance", "vector"}},
        {"distance_summary.csv", {"group", "pairs", "mean", "p10", "p50", "p90", "vector"}},
        {"bench.csv",
         {"text_id", "N", "lossless", "one_pass_seconds", "ar_seconds", "ar_cached_seconds", "one_pass_forwards",
          "ar_forwards", "throughput_ratio", "cached_throughput_ratio"}},
        {"training_time.csv", {"model", "N", "runs", "mean_seconds", "mean_steps", "mean_step_seconds_sum"}}};
    const Lab lab = Lab::load(cfg);
    const std::string stamp = "model=" + io::hex32(lab.prov.model_checksum) +
                              " tokenizer=" + io::hex32(lab.prov.tokenizer_checksum) +
                              " config=" + io::hex32(cfg.hash());
    for (const auto& [file, columns] : schema) {
        ASSERT_TRUE(fs::exists(cfg.output / file)) << file;
        const auto text = io::read_file(cfg.output / file);
        EXPECT_EQ(csv_header(text), columns) << file;
        EXPECT_NE(text.substr(0, text.find('\n')).find(stamp), std::string::npos) << file;
    }

    const auto summary = nlohmann::json::parse(io::read_file(cfg.output / "summary.json"));
    EXPECT_EQ(summary["model_checksum"], io::hex32(lab.prov.model_checksum));
    EXPECT_EQ(summary["config_hash"], io::hex32(cfg.hash()));
    EXPECT_EQ(summary["seeds"], nlohmann::json(cfg.seeds));
    std::set<std::string> listed;
    for (const auto& f : summary["files"]) {
        listed.insert(f["path"].get<std::string>());
        EXPECT_EQ(f["crc32"], io::hex32(io::crc32(io::read_file(cfg.output / f["path"].get<std::string>()))));
    }
    EXPECT_TRUE(listed.count("capacity.csv"));
    EXPECT_FALSE(listed.count("bench.csv"));
    std::size_t solutions = 0;
    for (const auto& p : listed)
        if (p.rfind("solutions/", 0) == 0) {
            ++solutions;
            const auto s = load_solution(cfg.output / p);
            EXPECT_EQ(s.model_checksum, lab.prov.model_checksum);
            EXPECT_EQ(s.tokenizer_checksum, lab.prov.tokenizer_checksum);
            EXPECT_EQ(s.config_hash, cfg.hash());
        }
    EXPECT_GT(solutions, 10u);
    fs::remove_all(dir);
}

TEST(Experiment, FailingTableIsRecordedAndOthersStillRun) {
    const auto dir = scratch("failures");
    auto cfg = ExperimentConfig::load(write_mini_lab(dir));
    cfg.output = dir / "out";
    cfg.tables = {"sharing", "capacity"};
    cfg.group_size = 50;  // more than the available texts
    const auto res = run_experiment(cfg);
    ASSERT_EQ(res.failures.size(), 1u);
    EXPECT_EQ(res.failures[0].table, "sharing");
    EXPECT_TRUE(fs::exists(cfg.output / "capacity.csv"));
    const auto summary = nlohmann::json::parse(io::read_file(cfg.output / "summary.json"));
    EXPECT_EQ(summary["failures"].size(), 1u);
    fs::remove_all(dir);
}

TEST(Experiment, SingleThreadedRunsAreByteIdentical) {
    setenv("ONEPASS_DETERMINISTIC", "1", 1);
    const auto dir = scratch("determinism");
    auto cfg = ExperimentConfig::load(write_mini_lab(dir));
    cfg.output = dir / "a";
    const auto a = run_experiment(cfg);
    cfg.output = dir / "b";
    const auto b = run_experiment(cfg);
    unsetenv("ONEPASS_DETERMINISTIC");
    ASSERT_EQ(a.files, b.files);
    for (const auto& f : a.files) EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
    EXPECT_EQ(io::read_file(dir / "a" / "summary.json"), io::read_file(dir / "b" / "summary.json"));
    fs::remove_all(dir);
}
