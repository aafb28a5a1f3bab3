#include "targetamp/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "targetamp/data.hpp"
#include "targetamp/errors.hpp"
#include "targetamp/evalsuite.hpp"
#include "targetamp/relation.hpp"
#include "targetamp/target_id.hpp"
#include "targetamp/text.hpp"
#include "targetamp/training.hpp"

namespace targetamp {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string default_out_dir() {
    const char* env = std::getenv("TARGETAMP_OUT_DIR");
    return env && *env ? env : "out";
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw config_error("cannot create output directory " + dir.string());
}

// Probes without truncating so a failed run never clobbers existing output.
void check_writable(const fs::path& path) {
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    std::ofstream probe(path, std::ios::app);
    if (!probe) throw config_error("cannot write to " + path.string());
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write to " + path.string());
    out << content;
    if (!out) throw config_error("failed writing " + path.string());
}

std::string format2(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

std::string format4(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", x);
    return buf;
}

struct CommonOpts {
    std::string corpus;
    std::string lexicon;  // empty = built-in synthetic lexicon
    std::string out_dir = default_out_dir();
    std::string target_mode = "both";
    std::string value_source = "targets";
    std::vector<double> split_fractions = {0.8, 0.1, 0.1};
    std::uint64_t split_seed = 13;
    std::string config_path;
    TrainConfig train;
};

void add_common_options(CLI::App& cmd, CommonOpts& o) {
    // Required, but enforced after the config file is merged so the file can
    // supply it too.
    cmd.add_option("--corpus", o.corpus, "training corpus, line-delimited JSON records")
        ->check(CLI::ExistingFile);
    cmd.add_option("--lexicon", o.lexicon,
                   "entity lexicon TSV; defaults to the built-in synthetic lexicon")
        ->check(CLI::ExistingFile);
    cmd.add_option("--out-dir", o.out_dir,
                   "output directory (default from TARGETAMP_OUT_DIR, else ./out)")
        ->capture_default_str();
    cmd.add_option("--seeds", o.train.seeds, "run seeds")
        ->delimiter(',')
        ->capture_default_str();
    cmd.add_option("--lambda", o.train.lambda, "amplification factor")
        ->check(CLI::Range(0.0, 2.0))
        ->capture_default_str();
    cmd.add_option("--value-source", o.value_source, "relation value matrix")
        ->check(CLI::IsMember({"targets", "cls"}))
        ->capture_default_str();
    cmd.add_option("--lr", o.train.learning_rate, "AdamW learning rate")->capture_default_str();
    cmd.add_option("--batch-size", o.train.batch_size, "examples per step")
        ->capture_default_str();
    cmd.add_option("--epochs", o.train.epochs, "passes over the training split")
        ->capture_default_str();
    cmd.add_option("--eval-every", o.train.eval_every, "optimizer steps between validations")
        ->capture_default_str();
    cmd.add_option("--random-rate", o.train.random_rate, "flag rate for random target mode")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd.add_option("--weight-decay", o.train.weight_decay, "decoupled weight decay")
        ->capture_default_str();
    cmd.add_option("--min-freq", o.train.min_freq, "vocabulary frequency cutoff")
        ->capture_default_str();
    cmd.add_option("--d-model", o.train.encoder.d_model, "hidden size")->capture_default_str();
    cmd.add_option("--n-heads", o.train.encoder.n_heads, "attention heads")
        ->capture_default_str();
    cmd.add_option("--n-layers", o.train.encoder.n_layers, "encoder layers")
        ->capture_default_str();
    cmd.add_option("--d-ff", o.train.encoder.d_ff, "feed-forward size")->capture_default_str();
    cmd.add_option("--max-len", o.train.encoder.max_len, "maximum sequence length")
        ->capture_default_str();
    cmd.add_option("--split-fractions", o.split_fractions, "train,valid,test fractions")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    cmd.add_option("--split-seed", o.split_seed, "shuffle seed for the split")
        ->capture_default_str();
    cmd.add_option("--config", o.config_path, "key=value file mirroring the flags; explicit flags win")
        ->check(CLI::ExistingFile);
}

// Feeds config-file values into every option not already set on the command
// line. Done by hand because the parser only consults config files attached to
// the top-level command, not to subcommands.
void apply_config_file(CLI::App& cmd, const std::string& path) {
    if (path.empty()) return;
    std::vector<CLI::ConfigItem> items;
    try {
        items = cmd.get_config_formatter()->from_file(path);
    } catch (const CLI::Error& e) {
        throw config_error("config file " + path + ": " + e.what());
    }
    for (const auto& item : items) {
        if (!item.parents.empty())
            throw config_error("config file " + path + ": key \"" + item.fullname() +
                               "\" is sectioned; expected flat key=value lines");
        auto* opt = cmd.get_option_no_throw("--" + item.name);
        if (opt == nullptr)
            throw config_error("config file " + path + ": unknown key \"" + item.name + "\"");
        if (opt->count() > 0) continue;  // the explicit flag wins
        try {
            for (const auto& input : item.inputs) opt->add_result(input);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw config_error("config file " + path + ": key \"" + item.name + "\": " +
                               e.what());
        }
    }
}

Gazetteer load_lexicon(const std::string& path) {
    return path.empty() ? default_synthetic_lexicon() : Gazetteer::from_file(path);
}

TrainConfig finish_train_config(CommonOpts& o) {
    if (o.corpus.empty())
        throw config_error("--corpus is required, as a flag or a config file entry");
    const auto mode = target_mode_from_string(o.target_mode);
    if (!mode)
        throw config_error("unknown target mode \"" + o.target_mode +
                           "\"; expected none, random20, implicit, explicit or both");
    o.train.target_mode = *mode;
    o.train.value_source = o.value_source == "cls" ? ValueSource::Cls : ValueSource::Targets;
    o.train.validate();
    return o.train;
}

DatasetSplit split_corpus(const CommonOpts& o) {
    const auto corpus = load_corpus(o.corpus);
    return make_splits(corpus, {o.split_fractions[0], o.split_fractions[1], o.split_fractions[2]},
                       o.split_seed);
}

json config_block(const CommonOpts& o, const TrainConfig& cfg) {
    json j;
    j["corpus"] = o.corpus;
    j["lexicon"] = o.lexicon.empty() ? "builtin" : o.lexicon;
    j["target_mode"] = to_string(cfg.target_mode);
    j["value_source"] = to_string(cfg.value_source);
    j["lambda"] = cfg.lambda;
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["eval_every"] = cfg.eval_every;
    j["seeds"] = cfg.seeds;
    j["random_rate"] = cfg.random_rate;
    j["weight_decay"] = cfg.weight_decay;
    j["min_freq"] = cfg.min_freq;
    j["encoder"] = {{"d_model", cfg.encoder.d_model}, {"n_heads", cfg.encoder.n_heads},
                    {"n_layers", cfg.encoder.n_layers}, {"d_ff", cfg.encoder.d_ff},
                    {"max_len", cfg.encoder.max_len}};
    j["split_fractions"] = o.split_fractions;
    j["split_seed"] = o.split_seed;
    return j;
}

json run_block(const RunRecord& r) {
    return {{"seed", r.seed},
            {"convergence_step", r.convergence_step},
            {"best_threshold", r.best_threshold},
            {"valid_macro_f1", r.valid_macro_f1},
            {"test_macro_f1", r.test_macro_f1}};
}

json aggregate_block(const SeedAggregate& agg) {
    std::vector<double> pct;
    for (const auto& r : agg.records) pct.push_back(r.test_macro_f1 * 100.0);
    const auto ci = confidence_interval(pct);
    json j;
    j["test_f1_percent"] = {{"mean", ci.mean}, {"std", ci.std_dev},
                            {"ci_lo", ci.lo}, {"ci_hi", ci.hi}};
    j["convergence_step"] = {{"mean", agg.mean_convergence_step},
                             {"std", agg.std_convergence_step}};
    return j;
}

void write_runs_jsonl(const fs::path& path, const std::vector<RunRecord>& records) {
    std::ostringstream out;
    for (const auto& r : records) {
        for (const auto& p : r.trace) {
            out << json{{"seed", r.seed}, {"step", p.step}, {"macro_f1", p.macro_f1},
                        {"threshold", p.threshold}}
                       .dump()
                << '\n';
        }
        auto summary = run_block(r);
        summary["record"] = "summary";
        out << summary.dump() << '\n';
    }
    write_text_file(path, out.str());
}

// ---- gen-synthetic ---------------------------------------------------------

struct GenOpts {
    std::size_t size = 2000;
    std::uint64_t seed = 7;
    std::string lexicon;
    std::string out;
};

int cmd_gen_synthetic(const GenOpts& o) {
    const auto lexicon = Gazetteer::from_file(o.lexicon);
    check_writable(o.out);
    const auto corpus = gen_synthetic(o.size, o.seed, lexicon);
    save_corpus(corpus, o.out);
    std::cerr << "wrote " << corpus.size() << " records to " << o.out << "\n";
    return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(CommonOpts& o) {
    const auto cfg = finish_train_config(o);
    if (cfg.seeds.size() < 2) throw config_error("train needs at least 2 seeds");
    const auto lexicon = load_lexicon(o.lexicon);
    const auto split = split_corpus(o);
    ensure_dir(o.out_dir);
    const fs::path out_dir(o.out_dir);
    save_split_manifest(split, out_dir / "split.json");

    std::cerr << "train: mode=" << to_string(cfg.target_mode) << " seeds=" << cfg.seeds.size()
              << " examples=" << split.train.size() << "/" << split.valid.size() << "/"
              << split.test.size() << "\n";

    std::vector<Model> models;
    std::vector<Vocab> vocabs;
    const auto agg = multi_seed_run(split, lexicon, cfg, &models, &vocabs);

    vocabs.front().save(out_dir / "vocab.txt");
    for (std::size_t i = 0; i < models.size(); ++i)
        save_checkpoint(models[i],
                        out_dir / ("checkpoint-seed" + std::to_string(cfg.seeds[i]) + ".bin"));
    write_runs_jsonl(out_dir / "runs.jsonl", agg.records);

    json summary;
    summary["config"] = config_block(o, cfg);
    summary["runs"] = json::array();
    for (const auto& r : agg.records) summary["runs"].push_back(run_block(r));
    summary["aggregate"] = aggregate_block(agg);
    write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");

    std::cout << "seed  conv_step  best_thr  valid_f1  test_f1\n";
    for (const auto& r : agg.records)
        std::cout << r.seed << "     " << r.convergence_step << "        "
                  << format2(r.best_threshold) << "      " << format4(r.valid_macro_f1) << "    "
                  << format4(r.test_macro_f1) << "\n";
    const auto ci = summary["aggregate"]["test_f1_percent"];
    std::cout << "test macro-F1 " << format2(ci["mean"].get<double>()) << " +/- "
              << format2(ci["std"].get<double>()) << "  CI [" << format2(ci["ci_lo"].get<double>())
              << ", " << format2(ci["ci_hi"].get<double>()) << "]\n";
    std::cerr << "train: wrote " << (out_dir / "summary.json").string() << "\n";
    return 0;
}

// ---- ablate ----------------------------------------------------------------

int cmd_ablate(CommonOpts& o) {
    o.target_mode = "both";  // per-mode settings applied in the loop below
    const auto base_cfg = finish_train_config(o);
    if (base_cfg.seeds.size() < 2) throw config_error("ablate needs at least 2 seeds");
    const auto lexicon = load_lexicon(o.lexicon);
    const auto split = split_corpus(o);
    ensure_dir(o.out_dir);
    const fs::path out_dir(o.out_dir);
    save_split_manifest(split, out_dir / "split.json");

    json report;
    report["seeds"] = base_cfg.seeds;
    report["rows"] = json::array();

    std::cout << "mode      mean_f1  std_f1  mean_step  std_step\n";
    bool vocab_saved = false;
    for (const auto mode : all_target_modes()) {
        TrainConfig cfg = base_cfg;
        cfg.target_mode = mode;
        std::cerr << "ablate: training mode=" << to_string(mode) << "\n";
        std::vector<Model> models;
        std::vector<Vocab> vocabs;
        const auto agg = multi_seed_run(split, lexicon, cfg, &models, &vocabs);
        if (!vocab_saved) {
            vocabs.front().save(out_dir / "vocab.txt");
            vocab_saved = true;
        }
        for (std::size_t i = 0; i < models.size(); ++i)
            save_checkpoint(models[i],
                            out_dir / ("checkpoint-" + std::string(to_string(mode)) + "-seed" +
                                       std::to_string(cfg.seeds[i]) + ".bin"));

        json row;
        row["mode"] = to_string(mode);
        row["anchor"] = mode == TargetMode::Both;  // comparison anchor of the grid
        row["seeds"] = cfg.seeds;
        row["mean_test_f1"] = agg.mean_test_f1;
        row["std_test_f1"] = agg.std_test_f1;
        row["mean_convergence_step"] = agg.mean_convergence_step;
        row["std_convergence_step"] = agg.std_convergence_step;
        row["per_seed_test_f1"] = json::array();
        for (const auto& r : agg.records) row["per_seed_test_f1"].push_back(r.test_macro_f1);
        report["rows"].push_back(row);

        std::printf("%-9s %.4f   %.4f  %8.1f  %8.1f%s\n", to_string(mode), agg.mean_test_f1,
                    agg.std_test_f1, agg.mean_convergence_step, agg.std_convergence_step,
                    mode == TargetMode::Both ? "  <- anchor" : "");
        std::fflush(stdout);
    }
    write_text_file(out_dir / "ablation.json", report.dump(2) + "\n");
    std::cerr << "ablate: wrote " << (out_dir / "ablation.json").string() << "\n";
    return 0;
}

// ---- analyze ---------------------------------------------------------------

struct AnalyzeOpts {
    std::string checkpoint;
    std::string baseline;
    std::string corpus;
    std::string vocab;
    std::string lexicon;
    std::string format = "ansi";
    std::string out;
    double quantile = 0.8;
};

int cmd_analyze(const AnalyzeOpts& o) {
    const auto model = load_checkpoint(o.checkpoint);
    const auto baseline = load_checkpoint(o.baseline);

    fs::path vocab_path = o.vocab.empty()
                              ? fs::path(o.checkpoint).parent_path() / "vocab.txt"
                              : fs::path(o.vocab);
    if (!fs::exists(vocab_path))
        throw config_error("vocabulary file not found at " + vocab_path.string() +
                           "; pass --vocab");
    const auto vocab = Vocab::load(vocab_path);
    if (vocab.size() != model.encoder.config.vocab_size)
        throw config_error("vocab has " + std::to_string(vocab.size()) +
                           " entries but the checkpoint expects " +
                           std::to_string(model.encoder.config.vocab_size));

    const auto records = load_corpus(o.corpus);
    const auto lexicon = load_lexicon(o.lexicon);
    const auto max_len = model.encoder.config.max_len;

    std::vector<TokenizedExample> examples;
    std::vector<TargetMask> masks;
    std::vector<std::pair<std::string, AttentionReport>> reports;
    for (const auto& r : records) {
        const auto tokens = tokenize(r.text);
        auto ex = encode(tokens, vocab, max_len);
        ex.label = r.label;
        auto texts = token_strings(tokens);
        texts.resize(ex.token_count());
        auto report = attention_diff(model, baseline, ex, texts, o.quantile);
        masks.push_back(lexicon.tag(texts));
        examples.push_back(std::move(ex));
        reports.emplace_back(r.id, std::move(report));
    }
    const auto agg = attention_diff_aggregate(model, baseline, examples, masks);

    fs::path out_path = o.out.empty()
                            ? fs::path(default_out_dir()) / ("attention." + o.format)
                            : fs::path(o.out);
    if (o.format == "ansi") {
        for (const auto& [id, report] : reports) {
            std::cout << id << "\n" << to_ansi(report) << "\n";
        }
    } else if (o.format == "json") {
        std::ostringstream lines;
        for (const auto& [id, report] : reports) {
            auto j = json::parse(to_json(report));
            j["id"] = id;
            lines << j.dump() << '\n';
        }
        lines << json{{"aggregate",
                       {{"entity_mean_diff", agg.entity_mean_diff},
                        {"other_mean_diff", agg.other_mean_diff},
                        {"entity_tokens", agg.entity_tokens},
                        {"other_tokens", agg.other_tokens}}}}
                     .dump()
              << '\n';
        check_writable(out_path);
        write_text_file(out_path, lines.str());
        std::cerr << "analyze: wrote " << out_path.string() << "\n";
    } else {
        check_writable(out_path);
        write_text_file(out_path, to_html_many(reports));
        std::cerr << "analyze: wrote " << out_path.string() << "\n";
    }
    std::cerr << "analyze: mean diff on entity tokens " << format4(agg.entity_mean_diff)
              << " vs other tokens " << format4(agg.other_mean_diff) << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"target-aware attention injection for implicit hate detection"};
    app.require_subcommand(1);

    GenOpts gen;
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a seeded synthetic corpus");
    gen_cmd->add_option("--size", gen.size, "number of records")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    gen_cmd->add_option("--lexicon", gen.lexicon, "entity lexicon TSV")
        ->required()
        ->check(CLI::ExistingFile);
    gen_cmd->add_option("--out", gen.out, "output corpus path")->required();

    CommonOpts train_opts;
    auto* train_cmd = app.add_subcommand("train", "multi-seed training run");
    train_cmd->add_option("--target-mode", train_opts.target_mode,
                          "one of none, random20, implicit, explicit, both")
        ->check(CLI::IsMember({"none", "random20", "implicit", "explicit", "both"}))
        ->capture_default_str();
    add_common_options(*train_cmd, train_opts);

    CommonOpts ablate_opts;
    auto* ablate_cmd =
        app.add_subcommand("ablate", "train all five target modes under identical seeds");
    add_common_options(*ablate_cmd, ablate_opts);

    AnalyzeOpts an;
    auto* an_cmd = app.add_subcommand("analyze", "token attention diff vs a baseline model");
    an_cmd->add_option("--checkpoint", an.checkpoint, "trained model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    an_cmd->add_option("--baseline-checkpoint", an.baseline, "baseline model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    an_cmd->add_option("--corpus", an.corpus, "corpus to analyze")
        ->required()
        ->check(CLI::ExistingFile);
    an_cmd->add_option("--vocab", an.vocab, "vocab file (default: vocab.txt next to checkpoint)")
        ->check(CLI::ExistingFile);
    an_cmd->add_option("--lexicon", an.lexicon,
                       "entity lexicon for the aggregate; defaults to the built-in one")
        ->check(CLI::ExistingFile);
    an_cmd->add_option("--quantile", an.quantile, "highlight diffs above this quantile")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    an_cmd->add_option("--format", an.format, "output format")
        ->check(CLI::IsMember({"json", "html", "ansi"}))
        ->capture_default_str();
    an_cmd->add_option("--out", an.out, "output file for json/html");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_synthetic(gen);
        if (train_cmd->parsed()) {
            apply_config_file(*train_cmd, train_opts.config_path);
            return cmd_train(train_opts);
        }
        if (ablate_cmd->parsed()) {
            apply_config_file(*ablate_cmd, ablate_opts.config_path);
            return cmd_ablate(ablate_opts);
        }
        if (an_cmd->parsed()) return cmd_analyze(an);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace targetamp
