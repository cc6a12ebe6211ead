#pragma once

// Runs the configured tables against one frozen model and writes solution
// files, CSV tables and a summary record into the output directory.
//
// Output layout:
//   solutions/<table>/<run>.json
//   <table>.csv (+ <table>_summary.csv where a table aggregates runs)
//   bench.csv, training_time.csv   wall-clock data, not reproducible
//   summary.json                   checksums, config, file list, failures

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "onepass/cramming/cram.hpp"
#include "onepass/cramming/solution_io.hpp"
#include "onepass/cramming/sweep.hpp"
#include "onepass/datagen/datagen.hpp"
#include "onepass/geometry/bezier.hpp"
#include "onepass/geometry/distance.hpp"
#include "onepass/harness/bench.hpp"
#include "onepass/harness/config.hpp"
#include "onepass/harness/report.hpp"
#include "onepass/tinylm/checkpoint.hpp"

namespace onepass {

// Everything a run reads, loaded and cross-checked once.
struct Lab {
    std::unique_ptr<Transformer<float>> model;
    Tokenizer tokenizer;
    std::vector<TokenId> ids;
    SplitManifest split;
    Provenance prov;

    static Lab load(const ExperimentConfig& cfg) {
        Lab lab;
        lab.model = std::make_unique<Transformer<float>>(load_checkpoint(cfg.checkpoint));
        lab.tokenizer = Tokenizer::deserialize(io::read_file(cfg.tokenizer));
        if (lab.tokenizer.vocab_size() > lab.model->config().vocab)
            throw ConfigError("tokenizer vocabulary is larger than the model's");
        lab.ids = lab.tokenizer.encode(io::read_file(cfg.corpus));
        lab.split = load_split(cfg.split);
        if (lab.split.tokens != lab.ids.size() || lab.split.corpus_checksum != ids_checksum(lab.ids))
            throw ConfigError("split manifest does not match the tokenized corpus");
        lab.prov = {weights_checksum(lab.model->weights()), lab.tokenizer.checksum(), cfg.hash()};
        return lab;
    }

    const Transformer<float>& lm() const { return *model; }

    // `count` texts of length N from a source. Generated texts continue
    // held-out contexts; context i uses sampling seed i.
    std::vector<TargetText> texts(TextSource source, std::size_t count, std::size_t N, std::size_t context_length) const {
        std::vector<TargetText> out;
        switch (source) {
            case TextSource::Seen:
            case TextSource::Unseen:
                return spread_slices(ids, split, source, count, N);
            case TextSource::Random: {
                const auto usable = usable_ids(tokenizer.vocab_size());
                for (std::size_t i = 0; i < count; ++i) out.push_back(random_token_text(usable, N, i));
                return out;
            }
            case TextSource::Generated: {
                const auto contexts = spread_slices(ids, split, TextSource::Unseen, count, context_length);
                for (std::size_t i = 0; i < count; ++i) out.push_back(model_continuation(lm(), contexts[i], N, i));
                return out;
            }
        }
        return out;
    }

    ProtoSolution stamp(ProtoSolution s, const std::string& text_id) const {
        s.text_id = text_id;
        s.model_checksum = prov.model_checksum;
        s.tokenizer_checksum = prov.tokenizer_checksum;
        s.config_hash = prov.config_hash;
        return s;
    }
};

struct Failure {
    std::string table, job, message;
};

struct ExperimentResult {
    std::filesystem::path output;
    std::vector<std::string> files;         // relative paths of reproducible outputs
    std::vector<std::string> timing_files;  // relative paths of wall-clock outputs
    std::vector<Failure> failures;
    std::vector<ProtoSolution> runs;  // every cram run, for the training-time table
};

namespace detail {

inline std::string solution_name(const ProtoSolution& s) {
    return s.text_id + "_" + to_string(s.arrangement) + "_s" + std::to_string(s.seed) + ".json";
}

class ExperimentWriter {
   public:
    ExperimentWriter(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult& res)
        : cfg_(cfg), lab_(lab), res_(res) {}

    void solution(const std::string& table, const ProtoSolution& s) {
        const std::string rel = "solutions/" + table + "/" + solution_name(s);
        io::write_file(cfg_.output / rel, serialize_solution(s));
        res_.files.push_back(rel);
    }

    void csv(const CsvTable& t, bool timing = false) {
        const std::string rel = t.name() + ".csv";
        io::write_file(cfg_.output / rel, t.render(lab_.prov));
        (timing ? res_.timing_files : res_.files).push_back(rel);
    }

    void failures(const std::string& table, const std::vector<std::string>& errs,
                  const std::function<std::string(std::size_t)>& describe) {
        for (std::size_t i = 0; i < errs.size(); ++i)
            if (!errs[i].empty()) res_.failures.push_back({table, describe(i), errs[i]});
    }

   private:
    const ExperimentConfig& cfg_;
    const Lab& lab_;
    ExperimentResult& res_;
};

}  // namespace detail

// Best-of-seeds accuracy for every arrangement and length, on prefixes of
// seen texts.
inline void run_arrangement_table(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult& res,
                                  detail::ExperimentWriter& out) {
    std::size_t longest = 0;
    for (auto n : cfg.arrangement_lengths) longest = std::max(longest, n);
    const auto base = lab.texts(TextSource::Seen, cfg.texts, longest, cfg.context_length);
    const auto& arrs = all_arrangements();
    struct Job {
        std::size_t arr, len, text, seed;
    };
    std::vector<Job> jobs;
    for (std::size_t a = 0; a < arrs.size(); ++a)
        for (std::size_t l = 0; l < cfg.arrangement_lengths.size(); ++l)
            for (std::size_t t = 0; t < base.size(); ++t)
                for (std::size_t s = 0; s < cfg.seeds.size(); ++s) jobs.push_back({a, l, t, s});
    auto text_id = [&](const Job& j) {
        return base[j.text].text_id + "-p" + std::to_string(cfg.arrangement_lengths[j.len]);
    };
    std::vector<std::string> errs;
    const auto sols = run_jobs<ProtoSolution>(
        jobs.size(),
        [&](std::size_t i) {
            const auto& j = jobs[i];
            const auto prefix = std::span(base[j.text].ids).first(cfg.arrangement_lengths[j.len]);
            return lab.stamp(cram(lab.lm(), prefix, arrs[j.arr], cfg.opt, cfg.seeds[j.seed], cfg.bos_first), text_id(j));
        },
        worker_count(cfg.workers), &errs);
    out.failures("arrangement", errs, [&](std::size_t i) { return text_id(jobs[i]) + "/" + to_string(arrs[jobs[i].arr]); });

    CsvTable runs("arrangement", {"arrangement", "N", "text_id", "seed", "accuracy", "c_tokens", "steps_used", "h_lm"});
    CsvTable summary("arrangement_summary", {"arrangement", "N", "texts", "mean_best_accuracy"});
    for (std::size_t a = 0; a < arrs.size(); ++a)
        for (std::size_t l = 0; l < cfg.arrangement_lengths.size(); ++l) {
            double sum = 0;
            std::size_t counted = 0;
            for (std::size_t t = 0; t < base.size(); ++t) {
                double best = -1;
                for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
                    const std::size_t i = ((a * cfg.arrangement_lengths.size() + l) * base.size() + t) * cfg.seeds.size() + s;
                    if (!sols[i]) continue;
                    const auto& r = *sols[i];
                    runs.add({to_string(r.arrangement), fmt(r.N), r.text_id, fmt(r.seed), fmt(r.final_accuracy),
                              fmt(r.c_tokens), fmt(r.steps_used), fmt(r.h_lm)});
                    out.solution("arrangement", r);
                    res.runs.push_back(r);
                    best = std::max(best, r.final_accuracy);
                }
                if (best >= 0) {
                    sum += best;
                    ++counted;
                }
            }
            summary.add({to_string(arrs[a]), fmt(cfg.arrangement_lengths[l]), fmt(counted),
                         counted ? fmt(sum / double(counted)) : "nan"});
        }
    out.csv(runs);
    out.csv(summary);
}

// Groups of seen texts optimised with no sharing, a shared e, and a shared m.
inline void run_sharing_table(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult& res,
                              detail::ExperimentWriter& out) {
    const auto texts = lab.texts(TextSource::Seen, cfg.texts, cfg.group_length, cfg.context_length);
    const std::size_t groups = texts.size() / cfg.group_size;
    if (groups == 0) throw ConfigError("fewer texts than one sharing group");
    const std::vector<Share> modes{Share::None, Share::E, Share::M};
    struct Job {
        std::size_t mode, group, restart;
    };
    std::vector<Job> jobs;
    for (std::size_t m = 0; m < modes.size(); ++m)
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t r = 0; r < cfg.restarts; ++r) jobs.push_back({m, g, r});
    std::vector<std::string> errs;
    const auto out_runs = run_jobs<std::vector<ProtoSolution>>(
        jobs.size(),
        [&](std::size_t i) {
            const auto& j = jobs[i];
            std::vector<std::vector<TokenId>> ids;
            for (std::size_t k = 0; k < cfg.group_size; ++k) ids.push_back(texts[j.group * cfg.group_size + k].ids);
            auto sols = cram_group(lab.lm(), ids, cfg.arrangement, cfg.opt, cfg.seeds[0] + j.restart, modes[j.mode],
                                   cfg.bos_first);
            for (std::size_t k = 0; k < sols.size(); ++k)
                sols[k] = lab.stamp(std::move(sols[k]), texts[j.group * cfg.group_size + k].text_id + "-share_" +
                                                            to_string(modes[j.mode]));
            return sols;
        },
        worker_count(cfg.workers), &errs);
    out.failures("sharing", errs, [&](std::size_t i) {
        return "group" + std::to_string(jobs[i].group) + "/" + to_string(modes[jobs[i].mode]) + "/r" +
               std::to_string(jobs[i].restart);
    });

    CsvTable runs("sharing", {"share", "group", "text_id", "restart", "seed", "accuracy", "c_tokens", "steps_used"});
    CsvTable summary("sharing_summary", {"share", "group", "text_id", "restarts", "max_accuracy", "avg_accuracy"});
    for (std::size_t m = 0; m < modes.size(); ++m)
        for (std::size_t g = 0; g < groups; ++g) {
            SharedGroupResult agg;
            for (std::size_t r = 0; r < cfg.restarts; ++r) {
                const std::size_t i = (m * groups + g) * cfg.restarts + r;
                if (!out_runs[i]) continue;
                agg.runs.push_back(*out_runs[i]);
                for (const auto& s : *out_runs[i]) {
                    runs.add({to_string(modes[m]), fmt(g), s.text_id, fmt(r), fmt(s.seed), fmt(s.final_accuracy),
                              fmt(s.c_tokens), fmt(s.steps_used)});
                    out.solution("sharing", s);
                    res.runs.push_back(s);
                }
            }
            if (agg.runs.empty()) continue;
            for (std::size_t k = 0; k < cfg.group_size; ++k)
                summary.add({to_string(modes[m]), fmt(g), agg.runs[0][k].text_id, fmt(agg.runs.size()),
                             fmt(agg.max_accuracy(k)), fmt(agg.mean_accuracy(k))});
        }
    out.csv(runs);
    out.csv(summary);
}

// Longest reconstructable prefix per text and source.
inline void run_capacity_table(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult&, detail::ExperimentWriter& out) {
    std::vector<TargetText> texts;
    for (const auto& src : cfg.sources) {
        auto t = lab.texts(text_source_from_string(src), cfg.texts, cfg.text_length, cfg.context_length);
        texts.insert(texts.end(), t.begin(), t.end());
    }
    SweepSpec spec;
    if (!cfg.ladder.empty()) spec.ladder = cfg.ladder;
    spec.threshold = cfg.threshold;
    spec.seeds = cfg.seeds;
    spec.arrangement = cfg.arrangement;
    std::vector<std::string> errs;
    const auto results = run_jobs<CapacityResult>(
        texts.size(), [&](std::size_t i) { return capacity_sweep(lab.lm(), texts[i].ids, spec, cfg.opt); },
        worker_count(cfg.workers), &errs);
    out.failures("capacity", errs, [&](std::size_t i) { return texts[i].text_id; });

    CsvTable rows("capacity", {"source", "text_id", "N", "best_accuracy", "best_c_tokens", "best_seed", "best_steps",
                               "h_lm", "seeds_run"});
    CsvTable summary("capacity_summary", {"source", "text_id", "max_N", "c_tokens_at_max", "h_lm_at_max"});
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!results[i]) continue;
        const auto& r = *results[i];
        const std::string src = to_string(texts[i].source);
        for (const auto& row : r.rows)
            rows.add({src, texts[i].text_id, fmt(row.N), fmt(row.best_accuracy), fmt(row.best_c_tokens),
                      fmt(row.best_seed), fmt(row.best_steps), fmt(row.h_lm), fmt(row.accuracies.size())});
        summary.add({src, texts[i].text_id, r.max_N ? fmt(*r.max_N) : "none", fmt(r.c_tokens_at_max), fmt(r.h_lm_at_max)});
    }
    out.csv(rows);
    out.csv(summary);
}

// Linear and Bezier paths between two solutions of the same text.
inline void run_interp_table(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult& res,
                             detail::ExperimentWriter& out) {
    const auto texts = lab.texts(TextSource::Seen, cfg.interp_texts, cfg.interp_length, cfg.context_length);
    const auto taus = default_tau_grid();
    struct Outcome {
        ProtoSolution a, b;
        std::vector<double> linear, bezier;
        double ratio = 0;
    };
    std::vector<std::string> errs;
    const auto outcomes = run_jobs<Outcome>(
        texts.size(),
        [&](std::size_t i) {
            Outcome o;
            o.a = lab.stamp(cram(lab.lm(), texts[i].ids, cfg.arrangement, cfg.opt, cfg.seeds[0], cfg.bos_first), texts[i].text_id);
            o.b = lab.stamp(cram(lab.lm(), texts[i].ids, cfg.arrangement, cfg.opt, cfg.seeds[1], cfg.bos_first), texts[i].text_id);
            const auto sp = PointSpace::of(o.a);
            o.linear = linear_interp_accuracy(lab.lm(), o.a, o.b, texts[i].ids, taus);
            BezierSpec bs;
            bs.steps = cfg.bezier_steps;
            const auto fit = fit_bezier(lab.lm(), o.a.point(), o.b.point(), sp, texts[i].ids, bs, cfg.seeds[0]);
            o.bezier = curve_accuracy(lab.lm(), fit.curve, sp, texts[i].ids, taus);
            o.ratio = curve_length_ratio(fit.curve);
            return o;
        },
        worker_count(cfg.workers), &errs);
    out.failures("interp", errs, [&](std::size_t i) { return texts[i].text_id; });

    CsvTable points("interp", {"text_id", "curve", "tau", "accuracy"});
    CsvTable curves("interp_summary", {"text_id", "seed_a", "seed_b", "accuracy_a", "accuracy_b", "linear_mean",
                                       "bezier_mean", "length_ratio"});
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!outcomes[i]) continue;
        const auto& o = *outcomes[i];
        double lm = 0, bm = 0;
        for (std::size_t k = 0; k < taus.size(); ++k) {
            points.add({texts[i].text_id, "linear", fmt(taus[k]), fmt(o.linear[k])});
            lm += o.linear[k];
        }
        for (std::size_t k = 0; k < taus.size(); ++k) {
            points.add({texts[i].text_id, "bezier", fmt(taus[k]), fmt(o.bezier[k])});
            bm += o.bezier[k];
        }
        curves.add({texts[i].text_id, fmt(o.a.seed), fmt(o.b.seed), fmt(o.a.final_accuracy), fmt(o.b.final_accuracy),
                    fmt(lm / double(taus.size())), fmt(bm / double(taus.size())), fmt(o.ratio)});
        out.solution("interp", o.a);
        out.solution("interp", o.b);
        res.runs.push_back(o.a);
        res.runs.push_back(o.b);
    }
    out.csv(points);
    out.csv(curves);
}

// Pairwise distances between solutions of generated texts. Under a shared m
// every seed is one group run over all texts and distances use e.
inline void run_distance_table(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult& res,
                               detail::ExperimentWriter& out) {
    const auto contexts = spread_slices(lab.ids, lab.split, TextSource::Unseen, cfg.distance_contexts, cfg.context_length);
    std::vector<TargetText> texts;
    for (const auto& c : contexts)
        for (std::size_t k = 0; k < cfg.distance_continuations; ++k)
            texts.push_back(model_continuation(lab.lm(), c, cfg.distance_length, k));
    const bool shared_m = cfg.share == Share::M;
    std::vector<std::vector<TokenId>> ids;
    for (const auto& t : texts) ids.push_back(t.ids);

    std::vector<std::string> errs;
    std::vector<ProtoSolution> sols;
    std::vector<std::vector<TokenId>> sol_texts;
    std::vector<std::string> sol_contexts;
    if (shared_m) {
        const auto runs = run_jobs<std::vector<ProtoSolution>>(
            cfg.seeds.size(),
            [&](std::size_t s) { return cram_group(lab.lm(), ids, cfg.arrangement, cfg.opt, cfg.seeds[s], Share::M, cfg.bos_first); },
            worker_count(cfg.workers), &errs);
        out.failures("distance", errs, [&](std::size_t s) { return "seed" + std::to_string(cfg.seeds[s]); });
        for (const auto& r : runs)
            if (r)
                for (std::size_t k = 0; k < r->size(); ++k) {
                    sols.push_back(lab.stamp((*r)[k], texts[k].text_id));
                    sol_texts.push_back(texts[k].ids);
                    sol_contexts.push_back(texts[k].context_id);
                }
    } else {
        const std::size_t S = cfg.seeds.size();
        const auto runs = run_jobs<ProtoSolution>(
            texts.size() * S,
            [&](std::size_t i) {
                return lab.stamp(cram(lab.lm(), ids[i / S], cfg.arrangement, cfg.opt, cfg.seeds[i % S], cfg.bos_first),
                                 texts[i / S].text_id);
            },
            worker_count(cfg.workers), &errs);
        out.failures("distance", errs, [&](std::size_t i) { return texts[i / S].text_id + "/s" + std::to_string(cfg.seeds[i % S]); });
        for (std::size_t i = 0; i < runs.size(); ++i)
            if (runs[i]) {
                sols.push_back(*runs[i]);
                sol_texts.push_back(texts[i / S].ids);
                sol_contexts.push_back(texts[i / S].context_id);
            }
    }
    for (const auto& s : sols) {
        out.solution("distance", s);
        res.runs.push_back(s);
    }
    if (sols.size() < 2) throw InputError("distance report needs at least two successful runs");
    const auto stats = DocStats::build(ids);
    const auto labeled = label_solutions(sols, sol_texts, sol_contexts, shared_m);
    const auto rep = embedding_distance_report(lab.lm().weights(), labeled, stats, shared_m ? "e" : "e_m");

    CsvTable pairs("distance", {"text_a", "context_a", "seed_a", "text_b", "context_b", "seed_b", "group",
                                "embedding_distance", "tfidf_distance", "proxy_semantic_distance", "vector"});
    for (const auto& p : rep.pairs) {
        const auto& a = labeled[p.a].label;
        const auto& b = labeled[p.b].label;
        pairs.add({a.text_id, a.context_id, fmt(a.seed), b.text_id, b.context_id, fmt(b.seed), to_string(p.group),
                   fmt(p.embedding_distance), fmt(p.tfidf_distance), fmt(p.proxy_semantic_distance), rep.vector_choice});
    }
    CsvTable summary("distance_summary", {"group", "pairs", "mean", "p10", "p50", "p90", "vector"});
    for (auto g : {PairGroup::SameText, PairGroup::SameContext, PairGroup::DifferentContext}) {
        const auto& s = rep.summary(g);
        summary.add({to_string(g), fmt(s.count), fmt(s.mean), fmt(s.p10), fmt(s.p50), fmt(s.p90), rep.vector_choice});
    }
    out.csv(pairs);
    out.csv(summary);
}

// One-pass against autoregressive wall-clock, on lossless solutions only.
inline void run_bench_table(const ExperimentConfig& cfg, const Lab& lab, ExperimentResult& res,
                            detail::ExperimentWriter& out) {
    CsvTable t("bench", {"text_id", "N", "lossless", "one_pass_seconds", "ar_seconds", "ar_cached_seconds",
                         "one_pass_forwards", "ar_forwards", "throughput_ratio", "cached_throughput_ratio"});
    std::size_t longest = 0;
    for (auto n : cfg.bench_lengths) longest = std::max(longest, n);
    const auto base = lab.texts(TextSource::Seen, 1, longest, cfg.context_length).front();
    // Benchmarks run one at a time so timings do not compete for cores.
    for (auto N : cfg.bench_lengths) {
        const auto text = std::span(base.ids).first(N);
        const std::string id = base.text_id + "-p" + std::to_string(N);
        try {
            const auto s = lab.stamp(cram(lab.lm(), text, cfg.arrangement, cfg.opt, cfg.seeds[0], cfg.bos_first), id);
            res.runs.push_back(s);
            if (s.final_accuracy < 1.0) {
                t.add({id, fmt(N), "false", "", "", "", "", "", "", ""});
                continue;
            }
            const auto b = bench_throughput(lab.lm(), s, text, cfg.bench_repetitions);
            t.add({id, fmt(N), "true", fmt(b.one_pass_seconds), fmt(b.ar_seconds), fmt(b.ar_cached_seconds),
                   fmt(std::size_t(b.one_pass_forward_count)), fmt(std::size_t(b.ar_forward_count)),
                   fmt(b.throughput_ratio), fmt(b.cached_throughput_ratio)});
        } catch (const std::exception& e) {
            res.failures.push_back({"bench", id, e.what()});
        }
    }
    out.csv(t, true);
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Lab lab = Lab::load(cfg);
    ExperimentResult res;
    res.output = cfg.output;
    detail::ExperimentWriter out(cfg, lab, res);
    using Runner = void (*)(const ExperimentConfig&, const Lab&, ExperimentResult&, detail::ExperimentWriter&);
    const std::vector<std::pair<std::string, Runner>> runners{
        {"arrangement", run_arrangement_table}, {"sharing", run_sharing_table}, {"capacity", run_capacity_table},
        {"interp", run_interp_table},           {"distance", run_distance_table}, {"bench", run_bench_table}};
    for (const auto& [name, run] : runners) {
        if (std::find(cfg.tables.begin(), cfg.tables.end(), name) == cfg.tables.end()) continue;
        try {
            run(cfg, lab, res, out);
        } catch (const std::exception& e) {
            res.failures.push_back({name, "table", e.what()});
        }
    }

    CsvTable times("training_time", {"model", "N", "runs", "mean_seconds", "mean_steps", "mean_step_seconds_sum"});
    const auto& mc = lab.lm().config();
    const std::string label = "L" + std::to_string(mc.layers) + "-d" + std::to_string(mc.d_model) + "-" +
                              to_string(mc.positional) + "-" + io::hex32(lab.prov.model_checksum);
    for (const auto& r : record_training_time(res.runs, label))
        times.add({r.model, fmt(r.N), fmt(r.runs), fmt(r.mean_seconds), fmt(r.mean_steps), fmt(r.mean_step_seconds_sum)});
    out.csv(times, true);

    nlohmann::ordered_json j;
    j["format"] = "onepass-experiment";
    j["version"] = 1;
    j["model_checksum"] = io::hex32(lab.prov.model_checksum);
    j["tokenizer_checksum"] = io::hex32(lab.prov.tokenizer_checksum);
    j["config_hash"] = io::hex32(lab.prov.config_hash);
    j["seeds"] = cfg.seeds;
    auto kv = cfg.to_key_values();
    for (const char* k : {"checkpoint", "tokenizer", "corpus", "split", "output", "workers"}) kv.erase(k);
    j["config"] = kv;
    j["files"] = nlohmann::ordered_json::array();
    std::sort(res.files.begin(), res.files.end());
    for (const auto& f : res.files)
        j["files"].push_back({{"path", f}, {"crc32", io::hex32(io::crc32(io::read_file(cfg.output / f)))}});
    j["timing_files"] = res.timing_files;
    j["failures"] = nlohmann::ordered_json::array();
    for (const auto& f : res.failures) j["failures"].push_back({{"table", f.table}, {"job", f.job}, {"message", f.message}});
    io::write_file(cfg.output / "summary.json", j.dump(1) + "\n");
    return res;
}

}  // namespace onepass
