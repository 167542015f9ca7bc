#include "run_config.hpp"

#include "flas/analysis/geometry.hpp"
#include "flas/analysis/latency.hpp"
#include "flas/analysis/pca.hpp"
#include "flas/analysis/stats.hpp"
#include "flas/analysis/trajectory.hpp"
#include "flas/base_lm/generate.hpp"
#include "flas/errors.hpp"
#include "flas/flow/methods.hpp"
#include "flas/flow/steer.hpp"
#include "flas/io/container.hpp"
#include "flas/training/baseline_fit.hpp"
#include "flas/training/checkpoint.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace flas;

namespace {

struct ConfigFlags {
    std::string file;
    std::vector<std::string> overrides;

    void add_to(CLI::App* app) {
        app->add_option("-c,--config", file, "Run config file (key = value lines)");
        app->add_option("--set", overrides, "Override a config key, key=value (repeatable)");
    }
    cli::RunConfig resolve() const { return cli::resolve_config(file, overrides); }
};

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void log(const std::string& msg) { std::cerr << "[flas] " << msg << "\n"; }

void write_corpus_files(const train::ToyCorpus& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    train::write_jsonl(dir / "train.jsonl", corpus.train);
    train::write_jsonl(dir / "val.jsonl", corpus.val);
    train::write_jsonl(dir / "held_out.jsonl", corpus.held_out_examples);
    std::vector<std::vector<std::string>> rows;
    auto add = [&](const std::vector<std::size_t>& ids, const char* split) {
        for (auto id : ids) {
            const auto& c = corpus.concepts[id];
            rows.push_back({std::to_string(c.id), std::string(1, c.marker), split, c.text});
        }
    };
    add(corpus.held_in, "held_in");
    add(corpus.held_out, "held_out");
    analysis::write_table(dir / "concepts.tsv", {"id", "marker", "split", "text"}, rows);
}

struct CorpusData {
    std::vector<train::TrainingExample> train;
    std::vector<train::TrainingExample> val;
    std::vector<train::TrainingExample> held_out;
};

CorpusData load_corpus(const cli::RunConfig& cfg, const train::ToyCorpus& generated) {
    if (cfg.corpus_dir.empty()) return {generated.train, generated.val, generated.held_out_examples};
    if (!fs::is_directory(cfg.corpus_dir))
        throw DataError("corpus_dir: '" + cfg.corpus_dir.string() + "' is not a directory");
    for (const char* f : {"train.jsonl", "val.jsonl"})
        if (!fs::exists(cfg.corpus_dir / f))
            throw DataError("corpus_dir: '" + (cfg.corpus_dir / f).string() + "' does not exist");
    CorpusData d{train::read_jsonl(cfg.corpus_dir / "train.jsonl"), train::read_jsonl(cfg.corpus_dir / "val.jsonl"), {}};
    if (fs::exists(cfg.corpus_dir / "held_out.jsonl")) d.held_out = train::read_jsonl(cfg.corpus_dir / "held_out.jsonl");
    if (d.train.empty()) throw DataError("corpus_dir: train.jsonl has no examples");
    return d;
}

lm::LanguageModel base_for(const cli::RunConfig& cfg) {
    return train::load_or_pretrain_base(cfg.base, cfg.cache_dir, [](std::size_t step, double loss) {
        if (step % 100 == 0) log("pretrain step " + std::to_string(step) + " loss " + fmt_double(loss));
    });
}

void check_resume_config(const fs::path& dir, const cli::KeyValues& now) {
    const auto before = cli::read_kv_file(dir / "config.resolved");
    for (const auto& [k, v] : now) {
        auto it = before.find(k);
        if (it == before.end() || it->second != v)
            throw ConfigError("--resume: field '" + k + "' differs from the run's config.resolved");
    }
}

int cmd_gen_corpus(const ConfigFlags& flags, const std::string& out) {
    const auto cfg = flags.resolve();
    const fs::path dir = !out.empty() ? fs::path(out) : !cfg.corpus_dir.empty() ? cfg.corpus_dir : cfg.out_dir / "corpus";
    const auto corpus = train::generate_toy_corpus(cfg.base.corpus);
    write_corpus_files(corpus, dir);
    std::cout << "wrote " << corpus.train.size() << " train, " << corpus.val.size() << " val, "
              << corpus.held_out_examples.size() << " held-out examples to " << dir.string() << "\n";
    return 0;
}

int cmd_train(const ConfigFlags& flags, bool resume) {
    const auto cfg = flags.resolve();
    const auto kv = cfg.to_map();
    const auto& dir = cfg.out_dir;
    const auto generated = train::generate_toy_corpus(cfg.base.corpus);
    const auto corpus = load_corpus(cfg, generated);

    if (resume) {
        if (!fs::exists(dir / "last.ckpt")) throw DataError("--resume: '" + (dir / "last.ckpt").string() + "' does not exist");
        check_resume_config(dir, kv);
    }
    fs::create_directories(dir);
    cli::write_kv_file(dir / "config.resolved", kv);

    auto base = base_for(cfg);
    base.save(dir / "base.weights");
    log("base ready");

    const auto data = train::prepare_data(base, corpus.train, corpus.val, cfg.train.max_len);
    auto state = resume ? train::load_checkpoint(dir / "last.ckpt", base).state
                        : train::TrainState(flow::FlowModel(cfg.flow, base, cfg.seed + 1), cfg.train);
    log(std::string(resume ? "resuming at step " + std::to_string(state.step) : "training") + ", flow has " +
        std::to_string(state.flow.parameter_count()) + " parameters");

    const auto result = train::train_loop(state, base, data, cfg.train, dir, [](const train::StepStats& s, const double* v) {
        if (v) log("step " + std::to_string(s.step) + " lm " + fmt_double(s.lm_loss) + " div " + fmt_double(s.div_loss) +
                   " val " + fmt_double(*v));
    });

    auto fit_on = corpus.train;
    fit_on.insert(fit_on.end(), corpus.held_out.begin(), corpus.held_out.end());
    train::fit_toy_baselines(base, fit_on, cfg.baseline_per_side, cfg.seed).save(dir / "baselines.bin");

    nlohmann::json summary = {{"best_val", result.best_val},   {"best_step", result.best_step},
                              {"final_val", result.final_val}, {"steps_run", result.steps_run},
                              {"early_stopped", result.early_stopped}};
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    std::cout << "best val " << fmt_double(result.best_val) << " at step " << result.best_step << "; "
              << result.steps_run << " steps; outputs in " << dir.string() << "\n";
    return 0;
}

struct SteerArgs {
    std::string run_dir;
    std::string checkpoint;
    std::string method = "flas";
    std::string concept_text;
    std::vector<std::string> prompts;
    std::optional<double> strength;
    std::size_t n_steps = 0;
    std::size_t max_new = analysis::kDefaultGenLength;
    std::string record_dir;
    std::size_t concept_id = 0;
};

int cmd_steer(const SteerArgs& a) {
    const fs::path run = a.run_dir;
    const auto base = lm::LanguageModel::load(run / "base.weights");
    flow::MethodSpec spec{flow::method_from_string(a.method), a.concept_text, a.strength, a.n_steps};
    if (spec.method != flow::Method::none && spec.concept_text.empty())
        throw UsageError("--concept is required for method '" + a.method + "'");

    std::optional<flow::FlowModel> flow_model;
    std::optional<baselines::BaselineSet> bl;
    if (spec.method == flow::Method::flas) {
        const fs::path ckpt = a.checkpoint.empty() ? run / "flow.ckpt" : fs::path(a.checkpoint);
        flow_model.emplace(train::load_checkpoint(ckpt, base).state.flow);
    } else if (spec.method != flow::Method::none) {
        bl = baselines::BaselineSet::load(run / "baselines.bin");
    }
    const double strength = spec.strength.value_or(flow::default_strength(spec.method));

    for (std::size_t i = 0; i < a.prompts.size(); ++i) {
        const auto& prompt = a.prompts[i];
        std::vector<TokenId> generated;
        if (!a.record_dir.empty()) {
            analysis::TrajectoryRecord rec;
            if (spec.method == flow::Method::flas) {
                const auto cache = flow::concept_cache_for(*flow_model, base, spec.concept_text);
                rec = analysis::record_trajectory(base, *flow_model, cache, prompt, strength, a.max_new, true, a.n_steps);
            } else {
                rec = analysis::record_static(base, flow::make_hook(spec, base, nullptr, bl ? &*bl : nullptr), strength,
                                              a.method, prompt, a.max_new);
            }
            rec.method = a.method;
            rec.concept_text = spec.concept_text;
            rec.concept_id = a.concept_id;
            rec.prompt_id = i;
            fs::create_directories(a.record_dir);
            char name[96];
            std::snprintf(name, sizeof(name), "%s-c%03zu-p%03zu.traj", a.method.c_str(), a.concept_id, i);
            analysis::write_trajectory(fs::path(a.record_dir) / name, rec);
            generated = rec.generated;
        } else {
            lm::GenerationOptions opts;
            opts.max_new = a.max_new;
            const auto hook = flow::make_hook(spec, base, flow_model ? &*flow_model : nullptr, bl ? &*bl : nullptr);
            generated = lm::generate_steered(base, lm::format_prompt(prompt), hook, opts).generated;
        }
        std::cout << lm::detokenize(generated) << "\n";
    }
    return 0;
}

std::vector<analysis::TrajectoryRecord> load_records(const fs::path& dir) {
    auto recs = analysis::read_trajectory_dir(dir);
    if (recs.empty()) throw DataError("no .traj files in '" + dir.string() + "'");
    for (const auto& r : recs) {
        if (r.n_steps() != recs.front().n_steps())
            throw DataError("trajectory dumps mix N = " + std::to_string(recs.front().n_steps()) + " and N = " +
                            std::to_string(r.n_steps()) + "; analyse one configuration at a time");
        if (r.T != recs.front().T)
            throw DataError("trajectory dumps mix T = " + fmt_double(recs.front().T) + " and T = " + fmt_double(r.T));
    }
    return recs;
}

// PCA is fit on the pooled displacements of every Euler step of every record.
void analyze_trajectories(const fs::path& in, const fs::path& out, std::size_t k) {
    const auto recs = load_records(in);
    std::vector<analysis::Matrix> paths;
    std::size_t total = 0;
    for (const auto& r : recs) {
        paths.push_back(analysis::pooled_displacement_path(r));
        total += paths.back().rows;
    }
    const std::size_t d = paths.front().cols;
    analysis::Matrix pooled(total, d);
    std::size_t row = 0;
    for (const auto& p : paths)
        for (std::size_t i = 0; i < p.rows; ++i, ++row)
            std::copy_n(p.data.begin() + i * d, d, pooled.data.begin() + row * d);
    const auto model = analysis::pca_fit(pooled, k);
    const auto proj = analysis::pca_project(model, pooled);

    std::vector<std::string> cols = {"record", "method", "concept_id", "prompt_id", "step"};
    for (std::size_t j = 0; j < model.rank; ++j) cols.push_back("pc" + std::to_string(j + 1));
    std::vector<std::vector<std::string>> rows;
    row = 0;
    for (std::size_t r = 0; r < recs.size(); ++r)
        for (std::size_t s = 0; s < paths[r].rows; ++s, ++row) {
            std::vector<std::string> line = {std::to_string(r), recs[r].method, std::to_string(recs[r].concept_id),
                                             std::to_string(recs[r].prompt_id), std::to_string(s)};
            for (std::size_t j = 0; j < model.rank; ++j) line.push_back(fmt_double(proj(row, j)));
            rows.push_back(std::move(line));
        }
    analysis::write_table(out / "trajectories.tsv", cols, rows);

    std::vector<std::vector<std::string>> pca_rows;
    for (std::size_t j = 0; j < model.rank; ++j)
        pca_rows.push_back({std::to_string(j + 1), fmt_double(model.explained_variance[j]),
                            fmt_double(model.explained_ratio[j]), "all_steps"});
    analysis::write_table(out / "pca.tsv", {"component", "variance", "ratio", "fit_on"}, pca_rows);
}

void analyze_stepcos(const fs::path& in, const fs::path& out) {
    const auto sc = analysis::step_cosine_matrix(load_records(in));
    const std::size_t n = sc.cosine.rows;
    std::vector<std::string> cols = {"step"};
    for (std::size_t j = 0; j < n; ++j) cols.push_back("s" + std::to_string(j));
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> line = {std::to_string(i)};
        for (std::size_t j = 0; j < n; ++j) line.push_back(fmt_double(sc.cosine(i, j)));
        rows.push_back(std::move(line));
    }
    analysis::write_table(out / "stepcos.tsv", cols, rows);
    std::vector<std::vector<std::string>> norms;
    for (std::size_t i = 0; i < n; ++i) norms.push_back({std::to_string(i), fmt_double(sc.mean_norm[i])});
    analysis::write_table(out / "step_norms.tsv", {"step", "mean_norm"}, norms);
    if (sc.skipped_pairs > 0) log(std::to_string(sc.skipped_pairs) + " zero-norm velocity pairs left out");
}

void analyze_pertoken(const fs::path& in, const fs::path& out) {
    const auto recs = load_records(in);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < recs.size(); ++r) {
        const auto pt = analysis::per_token_displacement_cosines(recs[r]);
        rows.push_back({std::to_string(r), recs[r].method, std::to_string(recs[r].concept_id),
                        std::to_string(recs[r].prompt_id), fmt_double(pt.mean), fmt_double(pt.stddev),
                        std::to_string(pt.off_diagonal), std::to_string(pt.skipped_pairs)});
    }
    analysis::write_table(out / "pertoken.tsv",
                          {"record", "method", "concept_id", "prompt_id", "mean", "std", "pairs", "skipped"}, rows);
}

// Scores table: tab-separated with a header naming at least concept, prompt,
// C, I and F; an optional method column groups rows.
void analyze_stats(const fs::path& scores_path, const fs::path& out, std::size_t resamples, std::uint64_t seed) {
    std::ifstream in(scores_path);
    if (!in) throw DataError("cannot open scores table '" + scores_path.string() + "'");
    std::string line;
    std::vector<std::string> header;
    std::map<std::string, std::map<std::pair<std::string, std::string>, double>> by_method;
    std::vector<std::string> method_order;
    std::vector<std::vector<std::string>> row_out;
    std::size_t lineno = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::stringstream ss(s);
        std::string x;
        while (std::getline(ss, x, '\t')) f.push_back(x);
        return f;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header.empty()) {
            header = split(line.rfind("# ", 0) == 0 ? line.substr(2) : line);
            continue;
        }
        const auto f = split(line);
        if (f.size() != header.size())
            throw DataError(scores_path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields");
        auto field = [&](const std::string& name) -> const std::string* {
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) return &f[i];
            return nullptr;
        };
        for (const char* req : {"concept", "prompt", "C", "I", "F"})
            if (!field(req)) throw DataError(scores_path.string() + ": missing column '" + req + "'");
        const std::string method = field("method") ? *field("method") : "all";
        const std::string where = scores_path.string() + ":" + std::to_string(lineno);
        const analysis::ScoreTriple s{io::parse_double(*field("C"), where + " C"), io::parse_double(*field("I"), where + " I"),
                                      io::parse_double(*field("F"), where + " F")};
        const double h = analysis::hmean(s);
        if (!by_method.count(method)) method_order.push_back(method);
        by_method[method][{*field("concept"), *field("prompt")}] = h;
        row_out.push_back({method, *field("concept"), *field("prompt"), fmt_double(h)});
    }
    if (row_out.empty()) throw DataError(scores_path.string() + ": no score rows");
    analysis::write_table(out / "stats_rows.tsv", {"method", "concept", "prompt", "hmean"}, row_out);

    std::vector<std::vector<std::string>> summary;
    for (const auto& m : method_order) {
        std::vector<double> values;
        std::map<std::string, std::vector<double>> per_concept;
        for (const auto& [key, h] : by_method[m]) {
            values.push_back(h);
            per_concept[key.first].push_back(h);
        }
        const auto ci = analysis::bootstrap_ci(values, resamples, 0.95, seed);
        std::vector<std::vector<double>> grid;
        bool balanced = per_concept.size() >= 2;
        for (const auto& [c, v] : per_concept) {
            grid.push_back(v);
            balanced = balanced && v.size() == per_concept.begin()->second.size() && v.size() >= 2;
        }
        std::string vs = "nan", vc = "nan", vw = "nan";
        if (balanced) {
            const auto vd = analysis::variance_decomposition(grid);
            vs = fmt_double(vd.sigma_samp), vc = fmt_double(vd.sigma_conc), vw = fmt_double(vd.sigma_within);
        }
        summary.push_back({m, std::to_string(values.size()), fmt_double(analysis::mean_of(values)), fmt_double(ci.lo),
                           fmt_double(ci.hi), vs, vc, vw});
    }
    analysis::write_table(out / "stats_summary.tsv",
                          {"method", "n", "mean_hmean", "ci_lo", "ci_hi", "sigma_samp", "sigma_conc", "sigma_within"},
                          summary);

    if (method_order.size() >= 2) {
        std::vector<std::vector<std::string>> paired;
        const auto& ref = by_method[method_order.front()];
        for (std::size_t i = 1; i < method_order.size(); ++i) {
            std::vector<double> a, b;
            for (const auto& [key, h] : by_method[method_order[i]]) {
                auto it = ref.find(key);
                if (it == ref.end()) continue;
                a.push_back(h);
                b.push_back(it->second);
            }
            if (a.size() < 2) continue;
            const auto t = analysis::paired_t(a, b);
            paired.push_back({method_order[i], method_order.front(), std::to_string(a.size()), fmt_double(t.t),
                              std::to_string(t.df), fmt_double(t.p)});
        }
        analysis::write_table(out / "stats_paired.tsv", {"method", "reference", "pairs", "t", "df", "p"}, paired);
    }
}

struct BenchArgs {
    std::string run_dir;
    std::string concept_text;
    std::size_t n_prompts = 8;
    analysis::LatencyOptions options;
    std::string out;
};

int cmd_bench(const BenchArgs& a) {
    const fs::path run = a.run_dir;
    const auto cfg = cli::RunConfig::from_map(cli::read_kv_file(run / "config.resolved"));
    const auto base = lm::LanguageModel::load(run / "base.weights");
    const auto flow_model = train::load_checkpoint(run / "flow.ckpt", base).state.flow;
    const auto bl = baselines::BaselineSet::load(run / "baselines.bin");
    const auto corpus = train::generate_toy_corpus(cfg.base.corpus);
    const std::string concept_text =
        a.concept_text.empty() ? corpus.concepts[corpus.held_in.front()].text : a.concept_text;

    std::vector<lm::TokenSequence> prompts;
    for (std::size_t i = 0; i < std::min(a.n_prompts, corpus.eval_prompts.size()); ++i)
        prompts.push_back(lm::format_prompt(corpus.eval_prompts[i]));
    const std::vector<analysis::LatencyMethod> methods = {
        {"base", [] { return lm::Hook{}; }},
        {"additive", [&] { return flow::make_hook({flow::Method::additive, concept_text, {}, 0}, base, nullptr, &bl); }},
        {"flas", [&] { return flow::make_hook({flow::Method::flas, concept_text, {}, 0}, base, &flow_model, nullptr); }},
    };
    const auto rows = analysis::measure_latency(base, methods, prompts, a.options);

    std::vector<std::vector<std::string>> table;
    for (const auto& r : rows) {
        table.push_back({r.method, fmt_double(r.prefill_ms_mean), fmt_double(r.prefill_ms_median),
                         fmt_double(r.per_token_ms_mean), fmt_double(r.per_token_ms_median),
                         fmt_double(r.prefill_ratio), fmt_double(r.per_token_ratio)});
        std::printf("%-9s prefill %8.3f ms (x%.2f)  per-token %8.3f ms (x%.2f)\n", r.method.c_str(), r.prefill_ms_mean,
                    r.prefill_ratio, r.per_token_ms_mean, r.per_token_ratio);
    }
    analysis::write_table(a.out.empty() ? run / "latency.tsv" : fs::path(a.out),
                          {"method", "prefill_ms_mean", "prefill_ms_median", "per_token_ms_mean", "per_token_ms_median",
                           "prefill_ratio", "per_token_ratio"},
                          table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flas: flow-based activation steering on a toy transformer"};
    app.require_subcommand(1);

    ConfigFlags gen_flags;
    std::string corpus_out;
    auto* gen = app.add_subcommand("gen-corpus", "Write the synthetic marker corpus as JSONL");
    gen_flags.add_to(gen);
    gen->add_option("-o,--out", corpus_out, "Output directory (default: corpus_dir, else out_dir/corpus)");

    ConfigFlags train_flags;
    bool resume = false;
    auto* trn = app.add_subcommand("train", "Pretrain or load the base model, then train the flow");
    train_flags.add_to(trn);
    trn->add_flag("--resume", resume, "Continue from out_dir/last.ckpt");

    SteerArgs steer_args;
    auto* st = app.add_subcommand("steer", "Generate with a steering method");
    st->add_option("-r,--run", steer_args.run_dir, "Run directory written by train")->required();
    st->add_option("--checkpoint", steer_args.checkpoint, "Flow checkpoint (default: <run>/flow.ckpt)");
    st->add_option("-m,--method", steer_args.method, "flas, additive, act or none")
        ->check(CLI::IsMember({"flas", "additive", "act", "none"}));
    st->add_option("--concept", steer_args.concept_text, "Concept description");
    st->add_option("-p,--prompt", steer_args.prompts, "Prompt (repeatable)")->required();
    st->add_option("-T,--strength", steer_args.strength, "T for flas, alpha for additive, lambda for act");
    st->add_option("-N,--steps", steer_args.n_steps, "Euler steps for flas (default: checkpoint's N)");
    st->add_option("--max-new", steer_args.max_new, "Tokens to generate");
    st->add_option("--record", steer_args.record_dir, "Write one trajectory dump per prompt into this directory");
    st->add_option("--concept-id", steer_args.concept_id, "Concept id stored in trajectory dumps");

    std::string which, an_in, an_out, scores;
    std::size_t components = 2, resamples = 10000;
    std::uint64_t an_seed = 0;
    auto* an = app.add_subcommand("analyze", "Tables from trajectory dumps or a scores file");
    an->add_option("which", which, "trajectories, stepcos, pertoken or stats")
        ->required()
        ->check(CLI::IsMember({"trajectories", "stepcos", "pertoken", "stats"}));
    an->add_option("-i,--in", an_in, "Trajectory directory");
    an->add_option("-s,--scores", scores, "Scores table for stats");
    an->add_option("-o,--out", an_out, "Output directory (default: the input directory)");
    an->add_option("-k,--components", components, "PCA components for trajectories");
    an->add_option("--resamples", resamples, "Bootstrap resamples for stats");
    an->add_option("--seed", an_seed, "Bootstrap seed for stats");

    BenchArgs bench_args;
    auto* bn = app.add_subcommand("bench", "Latency of base, additive and flas decoding");
    bn->add_option("-r,--run", bench_args.run_dir, "Run directory written by train")->required();
    bn->add_option("--concept", bench_args.concept_text, "Concept (default: first held-in concept)");
    bn->add_option("--prompts", bench_args.n_prompts, "Number of evaluation prompts");
    bn->add_option("--repeats", bench_args.options.repeats, "Timed repeats");
    bn->add_option("--warmup", bench_args.options.warmup, "Untimed warmup repeats");
    bn->add_option("--new-tokens", bench_args.options.new_tokens, "Tokens decoded per prompt");
    bn->add_option("-o,--out", bench_args.out, "Table path (default: <run>/latency.tsv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_corpus(gen_flags, corpus_out);
        if (*trn) return cmd_train(train_flags, resume);
        if (*st) return cmd_steer(steer_args);
        if (*bn) return cmd_bench(bench_args);
        if (*an) {
            if (which == "stats") {
                if (scores.empty()) throw UsageError("analyze stats needs --scores");
                const fs::path out = an_out.empty() ? fs::path(scores).parent_path() : fs::path(an_out);
                fs::create_directories(out.empty() ? "." : out);
                analyze_stats(scores, out.empty() ? "." : out, resamples, an_seed);
            } else {
                if (an_in.empty()) throw UsageError("analyze " + which + " needs --in");
                const fs::path out = an_out.empty() ? fs::path(an_in) : fs::path(an_out);
                fs::create_directories(out);
                if (which == "trajectories") analyze_trajectories(an_in, out, components);
                if (which == "stepcos") analyze_stepcos(an_in, out);
                if (which == "pertoken") analyze_pertoken(an_in, out);
            }
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
