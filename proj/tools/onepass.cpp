// Command-line front end. Every subcommand that touches a model accepts
// --config plus one flag per config key; flags override the file.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "onepass/cramming/probe.hpp"
#include "onepass/harness/experiment.hpp"
#include "onepass/tinylm/pretrain.hpp"

using namespace onepass;

namespace {

struct ConfigFlags {
    std::filesystem::path file;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "key = value config file");
        for (const auto& [k, v] : ExperimentConfig{}.to_key_values()) {
            std::string flag = "--" + k;
            for (auto& c : flag)
                if (c == '_') c = '-';
            app->add_option(flag, values[k], "config key " + k + " (default: " + (v.empty() ? "none" : v) + ")");
        }
    }

    ExperimentConfig resolve() const {
        KeyValues kv;
        if (!file.empty()) kv = parse_key_values(io::read_file(file));
        KeyValues cli;
        for (const auto& [k, v] : values)
            if (!v.empty()) cli[k] = v;
        auto cfg = ExperimentConfig::from_key_values(kv, file.parent_path());
        // Command-line paths are relative to the working directory.
        auto merged = cfg.to_key_values();
        for (const auto& [k, v] : cli) merged[k] = v;
        return ExperimentConfig::from_key_values(merged);
    }
};

std::vector<TargetText> pick_texts(const Lab& lab, const ExperimentConfig& cfg, const std::string& source,
                                   std::size_t count, std::size_t N) {
    return lab.texts(text_source_from_string(source), count, N, cfg.context_length);
}

void print_failures(const ExperimentResult& r) {
    for (const auto& f : r.failures) std::fprintf(stderr, "failed: %s %s: %s\n", f.table.c_str(), f.job.c_str(), f.message.c_str());
    std::printf("wrote %zu files to %s, %zu failures\n", r.files.size() + r.timing_files.size() + 1,
                r.output.string().c_str(), r.failures.size());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"proto-token reconstruction lab"};
    app.require_subcommand(1);

    // build-tokenizer
    auto* tok_cmd = app.add_subcommand("build-tokenizer", "learn a byte-pair vocabulary from a corpus");
    std::filesystem::path tok_corpus, tok_out;
    std::size_t tok_vocab = 512;
    tok_cmd->add_option("--corpus", tok_corpus)->required();
    tok_cmd->add_option("--vocab", tok_vocab);
    tok_cmd->add_option("--out", tok_out)->required();

    // gen-data
    auto* gen_cmd = app.add_subcommand("gen-data", "write a split manifest or a set of target texts");
    ConfigFlags gen_flags;
    gen_flags.attach(gen_cmd);
    std::filesystem::path gen_split_out, gen_out;
    double gen_fraction = 0.05;
    std::string gen_source;
    std::size_t gen_count = 10, gen_length = 32;
    gen_cmd->add_option("--make-split", gen_split_out, "write a seen/unseen split of the tokenized corpus");
    gen_cmd->add_option("--unseen-fraction", gen_fraction);
    gen_cmd->add_option("--source", gen_source, "random, seen, unseen or generated");
    gen_cmd->add_option("--count", gen_count);
    gen_cmd->add_option("--length", gen_length);
    gen_cmd->add_option("--out", gen_out, "texts as JSON");

    // pretrain
    auto* pre_cmd = app.add_subcommand("pretrain", "train the desk model on the seen split");
    ConfigFlags pre_flags;
    pre_flags.attach(pre_cmd);
    PretrainSpec pre_spec;
    std::string pre_positional = "rotary";
    std::uint64_t pre_init_seed = 0;
    std::filesystem::path pre_out;
    pre_cmd->add_option("--steps", pre_spec.steps);
    pre_cmd->add_option("--context", pre_spec.context);
    pre_cmd->add_option("--batch", pre_spec.batch);
    pre_cmd->add_option("--lr", pre_spec.lr);
    pre_cmd->add_option("--seed", pre_spec.seed, "data order seed");
    pre_cmd->add_option("--init-seed", pre_init_seed);
    pre_cmd->add_option("--positional", pre_positional, "rotary or learned");
    pre_cmd->add_option("--out", pre_out)->required();

    // cram
    auto* cram_cmd = app.add_subcommand("cram", "optimise proto-tokens for one text");
    ConfigFlags cram_flags;
    cram_flags.attach(cram_cmd);
    std::string cram_source = "seen";
    std::size_t cram_index = 0, cram_length = 16;
    std::uint64_t cram_seed = 0;
    std::filesystem::path cram_out;
    cram_cmd->add_option("--source", cram_source);
    cram_cmd->add_option("--index", cram_index, "text index within the source");
    cram_cmd->add_option("--length", cram_length);
    cram_cmd->add_option("--seed", cram_seed);
    cram_cmd->add_option("--out", cram_out, "solution JSON");

    // connect
    auto* con_cmd = app.add_subcommand("connect", "fit a Bezier path between two solutions of the same text");
    ConfigFlags con_flags;
    con_flags.attach(con_cmd);
    std::filesystem::path con_a, con_b, con_out;
    std::uint64_t con_seed = 0;
    con_cmd->add_option("--a", con_a)->required();
    con_cmd->add_option("--b", con_b)->required();
    con_cmd->add_option("--seed", con_seed);
    con_cmd->add_option("--out", con_out, "CSV of accuracy along both paths");

    // probe
    auto* probe_cmd = app.add_subcommand("probe", "generate from a solution's prefix");
    ConfigFlags probe_flags;
    probe_flags.attach(probe_cmd);
    std::filesystem::path probe_sol;
    std::size_t probe_n = 32;
    std::uint64_t probe_seed = 0;
    bool probe_sample = false;
    probe_cmd->add_option("--solution", probe_sol)->required();
    probe_cmd->add_option("--tokens", probe_n);
    probe_cmd->add_option("--seed", probe_seed);
    probe_cmd->add_flag("--sample", probe_sample, "sample at temperature 1 instead of greedy");

    // table runners
    const std::vector<std::pair<std::string, std::string>> table_cmds{
        {"sweep", "capacity"}, {"share", "sharing"}, {"interp", "interp"},
        {"dist", "distance"},  {"bench", "bench"},   {"arrange", "arrangement"}};
    std::map<std::string, ConfigFlags> table_flags;
    std::map<std::string, CLI::App*> table_apps;
    for (const auto& [cmd, table] : table_cmds) {
        table_apps[cmd] = app.add_subcommand(cmd, "write the " + table + " table");
        table_flags[cmd].attach(table_apps[cmd]);
    }
    auto* run_cmd = app.add_subcommand("run", "run every table named in the config");
    ConfigFlags run_flags;
    run_flags.attach(run_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*tok_cmd) {
            const auto tok = Tokenizer::build(io::read_file(tok_corpus), tok_vocab);
            io::write_file(tok_out, tok.serialize());
            std::printf("tokenizer: %zu ids, checksum %s\n", tok.vocab_size(), io::hex32(tok.checksum()).c_str());
        } else if (*gen_cmd) {
            const auto cfg = gen_flags.resolve();
            if (!gen_split_out.empty()) {
                const auto tok = Tokenizer::deserialize(io::read_file(cfg.tokenizer));
                const auto ids = tok.encode(io::read_file(cfg.corpus));
                const auto split = make_split(ids, gen_fraction);
                save_split(gen_split_out, split);
                std::printf("split: %zu tokens, %zu seen, %zu unseen\n", split.tokens, split.seen.front().size(),
                            split.unseen.front().size());
            }
            if (!gen_source.empty()) {
                const auto lab = Lab::load(cfg);
                nlohmann::ordered_json j = nlohmann::ordered_json::array();
                for (const auto& t : pick_texts(lab, cfg, gen_source, gen_count, gen_length))
                    j.push_back({{"text_id", t.text_id},
                                 {"source", to_string(t.source)},
                                 {"context_id", t.context_id},
                                 {"ids", t.ids},
                                 {"text", lab.tokenizer.decode(t.ids)}});
                if (gen_out.empty())
                    std::cout << j.dump(1) << "\n";
                else
                    io::write_file(gen_out, j.dump(1) + "\n");
            }
            if (gen_split_out.empty() && gen_source.empty()) throw ConfigError("gen-data needs --make-split or --source");
        } else if (*pre_cmd) {
            const auto cfg = pre_flags.resolve();
            const auto tok = Tokenizer::deserialize(io::read_file(cfg.tokenizer));
            const auto ids = tok.encode(io::read_file(cfg.corpus));
            const auto split = load_split(cfg.split);
            auto mc = desk_config();
            mc.vocab = static_cast<std::uint32_t>(tok.vocab_size());
            mc.positional = positional_scheme_from_string(pre_positional);
            const auto seen = split.gather(ids, TextSource::Seen);
            const auto unseen = split.gather(ids, TextSource::Unseen);
            auto res = pretrain(init_weights<float>(mc, pre_init_seed), seen, pre_spec, [](std::size_t s, double loss) {
                if (s % 100 == 0) std::fprintf(stderr, "step %zu loss %.4f\n", s, loss);
            });
            const Transformer<float> model(std::move(res.weights));
            std::printf("held-out cross-entropy %.4f nats/token (ln V = %.4f)\n",
                        heldout_cross_entropy(model, unseen, pre_spec.context), std::log(double(mc.vocab)));
            save_checkpoint(pre_out, model.weights());
        } else if (*cram_cmd) {
            const auto cfg = cram_flags.resolve();
            const auto lab = Lab::load(cfg);
            const auto texts = pick_texts(lab, cfg, cram_source, cram_index + 1, cram_length);
            const auto& t = texts.back();
            const auto s = lab.stamp(cram(lab.lm(), t.ids, cfg.arrangement, cfg.opt, cram_seed, cfg.bos_first), t.text_id);
            std::printf("%s: accuracy %.4f (%zu/%zu), steps %zu, h_lm %.3f\n", t.text_id.c_str(), s.final_accuracy,
                        s.c_tokens, s.N, s.steps_used, s.h_lm);
            if (!cram_out.empty()) save_solution(cram_out, s);
        } else if (*con_cmd) {
            const auto cfg = con_flags.resolve();
            const auto lab = Lab::load(cfg);
            const auto a = load_solution(con_a), b = load_solution(con_b);
            if (a.final_accuracy < 1.0) throw InputError("connect needs a lossless first solution to recover its text");
            const auto targets = one_pass_decode(lab.lm(), solution_input(lab.lm(), a), a.layout().guided);
            const auto sp = PointSpace::of(a);
            const auto taus = default_tau_grid();
            BezierSpec bs;
            bs.steps = cfg.bezier_steps;
            const auto fit = fit_bezier(lab.lm(), a.point(), b.point(), sp, targets, bs, con_seed);
            const auto lin = linear_interp_accuracy(lab.lm(), a, b, targets, taus);
            const auto bez = curve_accuracy(lab.lm(), fit.curve, sp, targets, taus);
            CsvTable t("connect", {"tau", "linear_accuracy", "bezier_accuracy"});
            for (std::size_t k = 0; k < taus.size(); ++k) t.add({fmt(taus[k]), fmt(lin[k]), fmt(bez[k])});
            const std::string csv = t.render(lab.prov);
            if (con_out.empty())
                std::cout << csv;
            else
                io::write_file(con_out, csv);
            std::printf("length ratio %.6f\n", curve_length_ratio(fit.curve));
        } else if (*probe_cmd) {
            const auto cfg = probe_flags.resolve();
            const auto lab = Lab::load(cfg);
            const auto s = load_solution(probe_sol);
            SamplingSpec sampling;
            if (probe_sample) sampling = {SamplingMode::Multinomial, 1.0, probe_seed};
            const auto rep = probe_as_context(lab.lm(), s, s.bos_first, probe_n, sampling, {}, {}, DocStats{});
            std::cout << lab.tokenizer.decode(rep.ids) << "\n";
        } else if (*run_cmd) {
            print_failures(run_experiment(run_flags.resolve()));
        } else {
            for (const auto& [cmd, table] : table_cmds)
                if (*table_apps[cmd]) {
                    auto cfg = table_flags[cmd].resolve();
                    cfg.tables = {table};
                    print_failures(run_experiment(cfg));
                }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
