// ie: command-line front end.
//
//   ie synth     build a corpus file
//   ie extract   run the toy transformer over a corpus into macro/micro stores
//   ie mi        MI matrix of one store
//   ie ie        full IE pipeline over a macro and a micro store
//   ie oracle    exact parity-dynamics table
//   ie validate  check a store or corpus file
//   ie report    shot and source-comparison tables from finished runs
//
// Every subcommand takes --config <json>; flags given on the command line
// override the file. Exit codes: 0 ok, 2 validation failure, 3 partial
// result (failed cells), 64 usage error, 130 interrupted.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ie/cli/manifest.hpp"
#include "ie/data/arithmetic.hpp"
#include "ie/data/icl.hpp"
#include "ie/data/natural.hpp"
#include "ie/model/extract.hpp"
#include "ie/oracle/parity.hpp"
#include "ie/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using ie::Json;

namespace {

enum Exit : int { kOk = 0, kValidation = 2, kPartial = 3, kUsage = 64, kInterrupted = 130 };

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

// Command-line flags bound to JSON pointers of a subcommand's resolved
// config. Only flags that were actually given override the config file.
class Flags {
public:
    explicit Flags(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "JSON config file; flags override its keys");
    }

    template <typename T>
    CLI::Option* add(const std::string& flag, const std::string& pointer, const std::string& help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app_->add_option(flag, *value, help);
        setters_.push_back([opt, value, pointer](Json& j) {
            if (opt->count()) j[Json::json_pointer(pointer)] = *value;
        });
        return opt;
    }

    CLI::Option* flag(const std::string& flag, const std::string& pointer, const std::string& help) {
        CLI::Option* opt = app_->add_flag(flag, help);
        setters_.push_back([opt, pointer](Json& j) {
            if (opt->count()) j[Json::json_pointer(pointer)] = true;
        });
        return opt;
    }

    // defaults <- config file <- flags
    Json resolve(Json defaults) const {
        if (!config_path_.empty()) {
            std::ifstream in(config_path_);
            if (!in) throw ie::IoError("cannot open config " + config_path_);
            Json file;
            try {
                file = Json::parse(in);
            } catch (const Json::parse_error& e) {
                throw ie::InvalidArgument("config " + config_path_ + ": " + e.what());
            }
            if (!file.is_object()) throw ie::InvalidArgument("config " + config_path_ + " is not a JSON object");
            defaults.merge_patch(file);
        }
        for (const auto& set : setters_) set(defaults);
        return defaults;
    }

    const std::string& config_path() const { return config_path_; }

private:
    CLI::App* app_;
    std::string config_path_;
    std::vector<std::function<void(Json&)>> setters_;
};

struct Runtime {
    std::size_t workers = ie::default_workers();
    bool resume = false;
    std::optional<fs::path> scratch;

    Json to_json() const {
        return Json{{"workers", workers}, {"resume", resume}, {"scratch", scratch ? Json(scratch->string()) : Json()}};
    }
};

// IE_WORKERS and IE_SCRATCH only change scheduling and where cell files live.
Runtime runtime_from_env() {
    Runtime r;
    if (const char* w = std::getenv("IE_WORKERS")) {
        try {
            r.workers = std::stoul(w);
        } catch (const std::exception&) {
            throw ie::InvalidArgument(std::string("IE_WORKERS='") + w + "' is not a count");
        }
    }
    if (const char* s = std::getenv("IE_SCRATCH"); s && *s) r.scratch = fs::path(s);
    return r;
}

void add_runtime_flags(CLI::App* app, Runtime& rt) {
    app->add_option("--workers", rt.workers, "concurrent estimator cells (default: IE_WORKERS or all cores)");
    app->add_flag("--resume", rt.resume, "reuse finished cells whose config hash matches");
}

template <typename T>
T required(const Json& cfg, const char* key) {
    if (!cfg.contains(key) || cfg.at(key).is_null()) throw ie::InvalidArgument(std::string("--") + key + " is required");
    return cfg.at(key).get<T>();
}

void add_train_flags(Flags& f, const std::string& base) {
    f.add<std::size_t>("--epochs", base + "/epochs", "training epochs per cell");
    f.add<double>("--lr-start", base + "/lr_start", "initial learning rate");
    f.add<double>("--lr-end", base + "/lr_end", "final learning rate");
    f.add<std::size_t>("--critic-depth", base + "/critic_depth", "critic affine layers");
    f.add<std::size_t>("--critic-min-hidden", base + "/critic_min_hidden", "smallest critic hidden width");
    f.add<double>("--leaky-slope", base + "/leaky_slope", "leaky ReLU negative slope");
    f.add<std::size_t>("--patience", base + "/early_stop_patience", "stop after this many epochs without a new best");
}

void add_range_flags(Flags& f) {
    f.add<std::size_t>("--layer-begin", "/layer_pairs/begin", "first layer pair");
    f.add<std::size_t>("--layer-end", "/layer_pairs/end", "one past the last layer pair");
    f.add<std::size_t>("--token-begin", "/tokens/begin", "first token position");
    f.add<std::size_t>("--token-end", "/tokens/end", "one past the last token position");
}

void install_signal_handlers() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
}

// --- synth ------------------------------------------------------------------

Json synth_defaults() {
    return Json{{"domain", nullptr}, {"shots", 2},        {"entities", nullptr}, {"ablation", nullptr},
                {"fusion", Json::array()}, {"pattern", nullptr}, {"task", "add1"},   {"count", 1000},
                {"source", nullptr}, {"rule", "sentence_start"}, {"tokens", 8},     {"subsample", nullptr},
                {"seed", 0},         {"out", nullptr}};
}

int run_synth(const Json& cfg, ie::ManifestWriter& mw) {
    const auto domain = ie::parse_domain(required<std::string>(cfg, "domain"));
    const fs::path out = required<std::string>(cfg, "out");
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    ie::Corpus corpus;
    if (domain == ie::DomainTag::arithmetic) {
        corpus = ie::synth_arithmetic(ie::parse_arithmetic_task(cfg.at("task").get<std::string>()),
                                      cfg.at("count").get<std::size_t>(), seed);
    } else if (domain == ie::DomainTag::natural) {
        const fs::path source = required<std::string>(cfg, "source");
        std::ifstream in(source);
        if (!in) throw ie::IoError("cannot open " + source.string());
        mw.input(source);
        const auto sel = ie::select_natural(in, ie::parse_anchor_rule(cfg.at("rule").get<std::string>()),
                                            cfg.at("tokens").get<std::size_t>(), cfg.at("count").get<std::size_t>());
        if (!sel.complete())
            std::cerr << "ie synth: found " << sel.found << " of " << sel.requested << " sentences ("
                      << sel.skipped_short << " too short)\n";
        corpus = sel.corpus;
    } else {
        ie::EntityVocabulary vocab;
        if (cfg.at("entities").is_null()) {
            vocab = ie::builtin_vocabulary(domain);
        } else {
            const fs::path p = cfg.at("entities").get<std::string>();
            vocab = ie::load_entity_vocabulary(p);
            mw.input(p);
            if (vocab.domain != domain)
                throw ie::InvalidArgument("entity file is for domain " + std::string(ie::to_string(vocab.domain)));
        }
        const auto shots = cfg.at("shots").get<std::size_t>();
        if (!cfg.at("pattern").is_null()) {
            corpus = ie::synth_pattern(vocab, ie::parse_pattern(cfg.at("pattern").get<std::string>()), shots);
        } else if (!cfg.at("ablation").is_null()) {
            std::vector<ie::EntityVocabulary> pools;
            for (const auto& d : cfg.at("fusion")) pools.push_back(ie::builtin_vocabulary(ie::parse_domain(d.get<std::string>())));
            corpus = ie::synth_ablation(vocab, shots, ie::parse_ablation(cfg.at("ablation").get<std::string>()), pools);
        } else {
            corpus = ie::synth_icl(vocab, shots);
        }
    }
    if (!cfg.at("subsample").is_null()) corpus = corpus.subsample(cfg.at("subsample").get<std::size_t>(), seed);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    corpus.write(out);
    mw.manifest().config["corpus"] = corpus.manifest();
    mw.write(out);
    std::cout << corpus.size() << " sequences of " << corpus.spec().token_count << " tokens -> " << out.string() << '\n';
    return kOk;
}

// --- extract ----------------------------------------------------------------

Json extract_defaults() {
    return Json{{"corpus", nullptr}, {"domain", "custom"}, {"shot_length", nullptr}, {"vocab", nullptr},
                {"model", nullptr},  {"blocks", 4},        {"width", 64},            {"heads", 4},
                {"max_positions", 256}, {"mlp_ratio", 4},  {"micro", "first_entity"}, {"seed", 0},
                {"out", nullptr}};
}

int run_extract(const Json& cfg, ie::ManifestWriter& mw) {
    const fs::path corpus_path = required<std::string>(cfg, "corpus");
    const fs::path out = required<std::string>(cfg, "out");
    std::optional<std::size_t> shot;
    if (!cfg.at("shot_length").is_null()) shot = cfg.at("shot_length").get<std::size_t>();
    const auto corpus = ie::load_corpus(corpus_path, ie::parse_domain(cfg.at("domain").get<std::string>()), shot);
    mw.input(corpus_path);

    ie::Vocabulary vocab;
    if (cfg.at("vocab").is_null()) {
        vocab = ie::Vocabulary::from_lines(corpus.lines());
    } else {
        vocab = ie::Vocabulary::load(cfg.at("vocab").get<std::string>());
        mw.input(cfg.at("vocab").get<std::string>());
    }
    std::optional<ie::ToyTransformer> model;
    if (cfg.at("model").is_null()) {
        ie::ToyModelConfig mc;
        mc.blocks = cfg.at("blocks").get<std::size_t>();
        mc.width = cfg.at("width").get<std::size_t>();
        mc.heads = cfg.at("heads").get<std::size_t>();
        mc.max_positions = cfg.at("max_positions").get<std::size_t>();
        mc.mlp_ratio = cfg.at("mlp_ratio").get<std::size_t>();
        mc.vocab_size = vocab.size();
        mc.seed = cfg.at("seed").get<std::uint64_t>();
        model.emplace(mc);
    } else {
        model.emplace(ie::ToyTransformer::load(cfg.at("model").get<std::string>()));
        mw.input(cfg.at("model").get<std::string>());
    }
    fs::create_directories(out);
    ie::extract_to_files(*model, vocab, corpus, out / "macro.repr1", out / "micro.repr1",
                         ie::MicroPositions::parse(cfg.at("micro").get<std::string>()));
    vocab.save(out / "vocab.json");
    model->save(out / "model.toyw");
    mw.manifest().config["model_config"] = model->config();
    mw.write(out);
    std::cout << "macro " << Json(ie::Repr1Reader(out / "macro.repr1").dims()).dump() << ", micro "
              << Json(ie::Repr1Reader(out / "micro.repr1").dims()).dump() << " -> " << out.string() << '\n';
    return kOk;
}

// --- mi -----------------------------------------------------------------------

Json mi_defaults() {
    return Json{{"store", nullptr},
                {"train", ie::TrainConfig{}},
                {"layer_pairs", ie::detail::range_to_json({})},
                {"tokens", ie::detail::range_to_json({})},
                {"bootstrap", 32},
                {"seed", 0},
                {"out", nullptr}};
}

void print_failures(const ie::MIMatrix& m, const char* which) {
    for (const auto& f : m.failures())
        std::cerr << "ie: " << which << " cell (" << f.layer_pair << "," << f.token << ") failed: " << f.error << '\n';
}

int run_mi(const Json& cfg, const Runtime& rt, ie::ManifestWriter& mw) {
    const fs::path store_path = required<std::string>(cfg, "store");
    const fs::path out = required<std::string>(cfg, "out");
    ie::EstimateOptions o;
    o.train = cfg.at("train").get<ie::TrainConfig>();
    o.seed = cfg.at("seed").get<std::uint64_t>();
    o.bootstrap = cfg.at("bootstrap").get<std::size_t>();
    o.layer_pairs = ie::detail::range_from_json(cfg.at("layer_pairs"));
    o.tokens = ie::detail::range_from_json(cfg.at("tokens"));
    o.workers = rt.workers;
    o.resume = rt.resume;
    o.cell_dir = rt.scratch ? *rt.scratch / "cells" : out / "cells";
    o.should_stop = [] { return g_stop.load(); };
    const auto report = ie::validate_file(store_path);
    if (!report.ok()) {
        for (const auto& i : report.issues) std::cerr << "ie mi: " << i.message << '\n';
        return kValidation;
    }
    mw.input(store_path);
    fs::create_directories(out);
    const auto m = ie::estimate_all(ie::StoreSource::from_file(store_path), o);
    if (g_stop) return kInterrupted;
    ie::write_text_file(out / "mi_matrix.csv", ie::render_mi_matrix(m));
    if (o.bootstrap) ie::write_text_file(out / "mi_bootstrap.csv", ie::render_bootstrap(m));
    ie::write_text_file(out / "failed_cells.csv", ie::render_failed_cells({{"store", &m}}));
    mw.write(out);
    print_failures(m, "mi");
    return m.failures().empty() ? kOk : kPartial;
}

// --- ie -----------------------------------------------------------------------

int run_ie(const Json& cfg, const Runtime& rt, ie::ManifestWriter& mw) {
    const auto pc = cfg.get<ie::PipelineConfig>();
    pc.validate();
    std::vector<fs::path> stores{pc.macro_store};
    stores.insert(stores.end(), pc.micro_stores.begin(), pc.micro_stores.end());
    for (const auto& p : stores) {
        const auto report = ie::validate_file(p);
        if (!report.ok()) {
            for (const auto& i : report.issues) std::cerr << "ie ie: " << p.string() << ": " << i.message << '\n';
            return kValidation;
        }
        mw.input(p);
    }
    ie::PipelineHooks hooks;
    hooks.workers = rt.workers;
    hooks.resume = rt.resume;
    if (rt.scratch) hooks.cell_root = *rt.scratch / "cells";
    hooks.should_stop = [] { return g_stop.load(); };
    const auto r = ie::run_pipeline(pc, hooks);
    if (g_stop) return kInterrupted;
    mw.write(pc.out);
    print_failures(r.macro, "macro");
    print_failures(r.micro, "micro");
    std::cout << "e_hat:";
    for (const auto& v : r.profile.e_hat) std::cout << ' ' << (v ? ie::format_real(*v, 4) : std::string("NA"));
    std::cout << '\n';
    return r.complete() ? kOk : kPartial;
}

// --- oracle -------------------------------------------------------------------

int run_oracle(const Json& cfg, ie::ManifestWriter& mw) {
    const fs::path out = required<std::string>(cfg, "out");
    const auto gammas = cfg.at("gamma").get<std::vector<double>>();
    std::ostringstream os;
    ie::write_oracle_table(os, cfg.at("T").get<std::size_t>(), gammas);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    ie::write_text_file(out, os.str());
    mw.write(out);
    std::cout << os.str();
    return kOk;
}

// --- validate -----------------------------------------------------------------

int run_validate(const std::string& store, const std::string& corpus) {
    if (store.empty() == corpus.empty()) throw ie::InvalidArgument("give exactly one of --store or --corpus");
    if (!store.empty()) {
        const auto report = ie::validate_file(store);
        for (const auto& i : report.issues) std::cout << i.message << '\n';
        if (report.ok()) std::cout << ie::describe(store).dump() << '\n';
        return report.ok() ? kOk : kValidation;
    }
    try {
        const auto c = ie::load_corpus(corpus);
        std::cout << c.size() << " sequences of " << c.spec().token_count << " tokens\n";
        return kOk;
    } catch (const ie::InvalidArgument& e) {
        std::cout << e.what() << '\n';
        return kValidation;
    }
}

// --- report -------------------------------------------------------------------

// "Text+Estimator=run_dir"
ie::LabeledProfile load_labeled(const std::string& spec, ie::ManifestWriter& mw) {
    const auto eq = spec.find('=');
    const auto plus = spec.find('+');
    if (eq == std::string::npos || plus == std::string::npos || plus > eq)
        throw ie::InvalidArgument("--profile expects Text+Estimator=run_dir, got '" + spec + "'");
    const fs::path dir = spec.substr(eq + 1);
    const auto run = ie::load_persisted_run(dir);
    auto profile = ie::compute_ie(run.macro, run.micro, run.config.micro_protocol, run.config.shot_length);
    // A persisted profile that disagrees with its own estimates is a broken run.
    if (ie::render_ie_profile(profile) != ie::read_text_file(dir / "ie_profile.csv"))
        throw ie::InvalidArgument(dir.string() + "/ie_profile.csv does not match its MI matrices");
    mw.input(dir / "ie_profile.csv");
    mw.input(dir / "mi_matrix.csv");
    mw.input(dir / "mi_matrix_micro.csv");
    return {spec.substr(0, plus), spec.substr(plus + 1, eq - plus - 1), std::move(profile)};
}

int run_report(const Json& cfg, ie::ManifestWriter& mw) {
    const fs::path out = required<std::string>(cfg, "out");
    const auto specs = cfg.at("profile").get<std::vector<std::string>>();
    if (specs.empty()) throw ie::InvalidArgument("--profile is required");
    std::vector<ie::LabeledProfile> profiles;
    for (const auto& s : specs) profiles.push_back(load_labeled(s, mw));
    fs::create_directories(out);
    ie::write_text_file(out / "compare.csv", ie::render_comparison(ie::compare_sources(profiles)));
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].profile.shot_stats.empty()) continue;
        const auto rows = ie::shot_report(profiles[i].profile);
        const std::string suffix = profiles.size() == 1 ? "" : "_" + std::to_string(i);
        ie::write_text_file(out / ("shot_report" + suffix + ".csv"), ie::render_shot_report(rows));
        ie::write_text_file(out / ("shot_table" + suffix + ".csv"), ie::render_shot_table(rows));
    }
    if (cfg.at("svg").get<bool>()) {
        std::vector<std::pair<std::string, ie::IEProfile>> named;
        for (const auto& p : profiles) named.emplace_back(p.label(), p.profile);
        ie::write_text_file(out / "ie_profile.svg", ie::render_profile_svg(named));
    }
    mw.write(out);
    std::cout << ie::read_text_file(out / "compare.csv");
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Information emergence toolkit"};
    app.set_version_flag("--version", ie::kVersion);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    Runtime rt;

    auto* synth = app.add_subcommand("synth", "build a corpus file");
    Flags synth_f(synth);
    synth_f.add<std::string>("--domain", "/domain", "country, animal, color, arithmetic, natural or custom");
    synth_f.add<std::size_t>("--shots", "/shots", "demonstrations per sequence");
    synth_f.add<std::string>("--entities", "/entities", "entity list JSON (default: the shipped list)");
    synth_f.add<std::string>("--ablation", "/ablation", "candidate, fusion1, fusion2, space or prefix");
    synth_f.add<std::vector<std::string>>("--fusion", "/fusion", "extra entity domains for fusion variants");
    synth_f.add<std::string>("--pattern", "/pattern", "asia, europe, size or alphabet");
    synth_f.add<std::string>("--task", "/task", "arithmetic task, e.g. add1 or div2");
    synth_f.add<std::size_t>("--count", "/count", "prompts or sentences to produce");
    synth_f.add<std::string>("--source", "/source", "text file for the natural domain");
    synth_f.add<std::string>("--rule", "/rule", "sentence_start or sentence_end");
    synth_f.add<std::size_t>("--tokens", "/tokens", "tokens per natural sequence");
    synth_f.add<std::size_t>("--subsample", "/subsample", "keep this many sequences, chosen by --seed");
    synth_f.add<std::uint64_t>("--seed", "/seed", "random seed");
    synth_f.add<std::string>("--out", "/out", "corpus file to write");

    auto* extract = app.add_subcommand("extract", "toy-transformer representations of a corpus");
    Flags extract_f(extract);
    extract_f.add<std::string>("--corpus", "/corpus", "corpus file, one sequence per line");
    extract_f.add<std::string>("--domain", "/domain", "domain tag recorded for the corpus");
    extract_f.add<std::size_t>("--shot-length", "/shot_length", "tokens per demonstration");
    extract_f.add<std::string>("--vocab", "/vocab", "vocabulary JSON (default: built from the corpus)");
    extract_f.add<std::string>("--model", "/model", "weights file (default: a fresh model from --seed)");
    extract_f.add<std::size_t>("--blocks", "/blocks", "transformer blocks");
    extract_f.add<std::size_t>("--width", "/width", "hidden width");
    extract_f.add<std::size_t>("--heads", "/heads", "attention heads");
    extract_f.add<std::size_t>("--max-positions", "/max_positions", "longest sequence");
    extract_f.add<std::size_t>("--mlp-ratio", "/mlp_ratio", "MLP expansion factor");
    extract_f.add<std::string>("--micro", "/micro", "micro positions: first_entity, all or a list like 0,3");
    extract_f.add<std::uint64_t>("--seed", "/seed", "model initialisation seed");
    extract_f.add<std::string>("--out", "/out", "output directory");

    auto* mi = app.add_subcommand("mi", "MI matrix of one store");
    Flags mi_f(mi);
    mi_f.add<std::string>("--store", "/store", "REPR1 store");
    add_train_flags(mi_f, "/train");
    add_range_flags(mi_f);
    mi_f.add<std::size_t>("--bootstrap", "/bootstrap", "bootstrap resamples per cell (0 disables)");
    mi_f.add<std::uint64_t>("--seed", "/seed", "run seed");
    mi_f.add<std::string>("--out", "/out", "output directory");
    add_runtime_flags(mi, rt);

    auto* iecmd = app.add_subcommand("ie", "IE profile from macro and micro stores");
    Flags ie_f(iecmd);
    ie_f.add<std::string>("--macro", "/macro_store", "macro REPR1 store");
    ie_f.add<std::vector<std::string>>("--micro", "/micro_store", "micro REPR1 store(s), joined along tokens");
    ie_f.add<std::string>("--protocol", "/micro_protocol", "first_entity or position_mean");
    ie_f.add<std::size_t>("--shot-length", "/shot_length", "tokens per demonstration, enables shot statistics");
    add_train_flags(ie_f, "/train");
    add_range_flags(ie_f);
    ie_f.add<std::size_t>("--bootstrap", "/bootstrap", "bootstrap resamples per cell (0 disables)");
    ie_f.flag("--svg", "/svg", "also write ie_profile.svg");
    ie_f.add<std::uint64_t>("--seed", "/seed", "run seed");
    ie_f.add<std::string>("--out", "/out", "output directory");
    add_runtime_flags(iecmd, rt);

    auto* oracle = app.add_subcommand("oracle", "exact MI of the parity dynamics");
    Flags oracle_f(oracle);
    oracle_f.add<std::vector<double>>("--gamma", "/gamma", "fidelities");
    oracle_f.add<std::size_t>("--T", "/T", "tokens");
    oracle_f.add<std::string>("--out", "/out", "CSV file to write");

    auto* validate = app.add_subcommand("validate", "check a store or corpus file");
    std::string validate_store, validate_corpus;
    validate->add_option("--store", validate_store, "REPR1 store");
    validate->add_option("--corpus", validate_corpus, "corpus file");

    auto* report = app.add_subcommand("report", "shot and comparison tables from finished runs");
    Flags report_f(report);
    report_f.add<std::vector<std::string>>("--profile", "/profile", "Text+Estimator=run_dir, repeatable");
    report_f.flag("--svg", "/svg", "also write ie_profile.svg");
    report_f.add<std::string>("--out", "/out", "output directory");

    try {
        rt = runtime_from_env();
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kUsage;
    } catch (const ie::Error& e) {
        std::cerr << "ie: " << e.what() << '\n';
        return kValidation;
    }
    if (rt.workers == 0) rt.workers = 1;
    install_signal_handlers();

    auto run = [&](CLI::App* sub, const Flags& flags, Json defaults, auto&& body) -> int {
        ie::ManifestWriter mw(sub->get_name());
        Json cfg = flags.resolve(std::move(defaults));
        mw.manifest().config = cfg;
        if (cfg.contains("seed")) mw.manifest().seeds["run"] = cfg.at("seed");
        mw.manifest().runtime = rt.to_json();
        if (!flags.config_path().empty()) mw.input(flags.config_path());
        return body(cfg, mw);
    };

    try {
        if (*synth) return run(synth, synth_f, synth_defaults(), run_synth);
        if (*extract) return run(extract, extract_f, extract_defaults(), run_extract);
        if (*mi)
            return run(mi, mi_f, mi_defaults(), [&](const Json& c, ie::ManifestWriter& mw) { return run_mi(c, rt, mw); });
        if (*iecmd) {
            Json d = ie::PipelineConfig{};
            d["macro_store"] = nullptr;
            d["out"] = nullptr;
            return run(iecmd, ie_f, d, [&](const Json& c, ie::ManifestWriter& mw) {
                if (c.at("macro_store").is_null()) throw ie::InvalidArgument("--macro is required");
                if (c.at("out").is_null()) throw ie::InvalidArgument("--out is required");
                return run_ie(c, rt, mw);
            });
        }
        if (*oracle)
            return run(oracle, oracle_f, Json{{"gamma", {0.5, 0.7, 0.9, 1.0}}, {"T", 3}, {"out", nullptr}}, run_oracle);
        if (*validate) return run_validate(validate_store, validate_corpus);
        if (*report) return run(report, report_f, Json{{"profile", Json::array()}, {"svg", false}, {"out", nullptr}}, run_report);
    } catch (const ie::Error& e) {
        std::cerr << "ie: " << e.what() << '\n';
        return kValidation;
    } catch (const Json::exception& e) {
        std::cerr << "ie: bad config value: " << e.what() << '\n';
        return kValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "ie: " << e.what() << '\n';
        return kValidation;
    }
    return kUsage;
}
