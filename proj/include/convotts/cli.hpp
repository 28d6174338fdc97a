#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "convotts/corpus_io.hpp"
#include "convotts/grad_suite.hpp"
#include "convotts/train.hpp"
#include "json.hpp"

namespace convotts {

// exit codes shared by every subcommand
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitCheckFailed = 4;

inline int cli_exit_code(const std::exception& e) {
    if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
    if (dynamic_cast<const DataError*>(&e)) return kExitData;  // covers parse/validation
    if (dynamic_cast<const VocabError*>(&e)) return kExitData;
    if (dynamic_cast<const ShapeError*>(&e)) return kExitData;
    return kExitUsage;  // ConfigError and anything unexpected
}

namespace detail {

inline void append_log(const std::filesystem::path& dir, const std::string& line) {
    std::ofstream log(dir / "run.log", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
    log << stamp << "Z " << line << "\n";
}

inline void write_text(const std::filesystem::path& file, const std::string& body) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    out << body;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
    if (dir.empty()) throw ConfigError("--out-dir must not be empty");
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw DataError("cannot create output dir " + p.string() + ": " + ec.message());
    return p;
}

}  // namespace detail

// ---- gen-corpus -----------------------------------------------------------

struct GenRunConfig {
    CorpusGenConfig gen;
    std::string out_dir;
    bool operator==(const GenRunConfig&) const = default;
};

inline nlohmann::json to_json(const GenRunConfig& c) {
    nlohmann::json j;
    j["command"] = "gen-corpus";
    j["out_dir"] = c.out_dir;
    j["n_dialogues"] = c.gen.n_dialogues;
    j["turns_per_dialogue"] = c.gen.turns_per_dialogue;
    j["styles"] = c.gen.styles;
    j["sentence_count_range"] = {c.gen.sentence_count_range.first,
                                 c.gen.sentence_count_range.second};
    j["tokens_per_sentence_range"] = {c.gen.tokens_per_sentence_range.first,
                                      c.gen.tokens_per_sentence_range.second};
    j["frames_per_sentence_range"] = {c.gen.frames_per_sentence_range.first,
                                      c.gen.frames_per_sentence_range.second};
    j["mel_dim"] = c.gen.mel_dim;
    j["vocab"] = c.gen.vocab;
    j["noise_std"] = c.gen.noise_std;
    j["style_map"] = c.gen.style_map;
    j["seed"] = c.gen.seed;
    j["n_topics"] = c.gen.n_topics;
    return j;
}

inline GenRunConfig gen_config_from_json(const nlohmann::json& j) {
    GenRunConfig c;
    c.out_dir = j.at("out_dir").get<std::string>();
    c.gen.n_dialogues = j.at("n_dialogues").get<std::size_t>();
    c.gen.turns_per_dialogue = j.at("turns_per_dialogue").get<std::size_t>();
    c.gen.styles = j.at("styles").get<std::size_t>();
    auto pair_of = [&](const char* key) {
        const auto& a = j.at(key);
        return std::pair<std::size_t, std::size_t>{a.at(0).get<std::size_t>(),
                                                   a.at(1).get<std::size_t>()};
    };
    c.gen.sentence_count_range = pair_of("sentence_count_range");
    c.gen.tokens_per_sentence_range = pair_of("tokens_per_sentence_range");
    c.gen.frames_per_sentence_range = pair_of("frames_per_sentence_range");
    c.gen.mel_dim = j.at("mel_dim").get<std::size_t>();
    c.gen.vocab = j.at("vocab").get<std::size_t>();
    c.gen.noise_std = j.at("noise_std").get<double>();
    c.gen.style_map = j.at("style_map").get<std::vector<std::size_t>>();
    c.gen.seed = j.at("seed").get<std::uint64_t>();
    c.gen.n_topics = j.at("n_topics").get<std::size_t>();
    return c;
}

inline void run_gen_corpus(const GenRunConfig& cfg) {
    validate_config(cfg.gen);
    const auto out = detail::prepare_out_dir(cfg.out_dir);
    detail::append_log(out, "gen-corpus start");
    Corpus corpus = generate_corpus(cfg.gen);
    save_corpus(corpus, out);
    detail::write_text(out / "gen_config.json", to_json(cfg).dump(2) + "\n");
    detail::append_log(out, "gen-corpus done: " + std::to_string(corpus.train.size()) + "/" +
                                std::to_string(corpus.valid.size()) + "/" +
                                std::to_string(corpus.eval.size()) + " dialogues");
}

// ---- train ------------------------------------------------------------------

struct TrainRunConfig {
    std::string corpus_dir;
    std::string out_dir;
    std::uint64_t seed = 1;
    std::size_t epochs = 50;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double lambda_sg = 1.0;
    std::size_t capacity = 5;
    bool ssl = false;
    bool sg = false;
    bool attn = false;
    bool fg = false;
    bool cross_modal = false;  // CLI opts into each mechanism explicitly
    bool operator==(const TrainRunConfig&) const = default;
};

inline nlohmann::json to_json(const TrainRunConfig& c) {
    nlohmann::json j;
    j["command"] = "train";
    j["corpus_dir"] = c.corpus_dir;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["lambda_sg"] = c.lambda_sg;
    j["capacity"] = c.capacity;
    j["ssl"] = c.ssl;
    j["sg"] = c.sg;
    j["attn"] = c.attn;
    j["fg"] = c.fg;
    j["cross_modal"] = c.cross_modal;
    return j;
}

inline TrainRunConfig train_config_from_json(const nlohmann::json& j) {
    TrainRunConfig c;
    c.corpus_dir = j.at("corpus_dir").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.lambda_sg = j.at("lambda_sg").get<double>();
    c.capacity = j.at("capacity").get<std::size_t>();
    c.ssl = j.at("ssl").get<bool>();
    c.sg = j.at("sg").get<bool>();
    c.attn = j.at("attn").get<bool>();
    c.fg = j.at("fg").get<bool>();
    c.cross_modal = j.at("cross_modal").get<bool>();
    return c;
}

/// Model dimensions derived from the corpus: token table sized by the
/// largest id seen, feature width equal to the mel width so predictions map
/// onto mel without padding.
inline ModelConfig model_for_corpus(const Corpus& corpus, StrategyConfig strategy,
                                    std::size_t capacity, std::uint64_t init_seed) {
    std::size_t max_token = 0;
    std::size_t mel_dim = 0;
    for (const std::vector<Dialogue>* split : {&corpus.train, &corpus.valid, &corpus.eval})
        for (const Dialogue& d : *split)
            for (const Turn& t : d.turns)
                for (const Sentence& s : t.sentences) {
                    for (std::size_t tok : s.tokens) max_token = std::max(max_token, tok);
                    if (s.mel.size() > 0) mel_dim = s.mel.cols();
                }
    if (mel_dim == 0) throw DataError("corpus has no mel frames");

    ModelConfig mc;
    mc.strategy = strategy;
    mc.dims.d_l = 16;
    mc.dims.d_p = 8;
    mc.dims.hidden = 16;
    mc.dims.d_a = 8;
    mc.dims.d_e = 8;  // matches d_p so the sg cells are buildable
    mc.vocab = max_token + 1;
    mc.mel_dim = mel_dim;
    mc.d_tok = 16;
    mc.feat_dim = mel_dim;
    mc.capacity = capacity;
    mc.init_seed = init_seed;
    return mc;
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
    nlohmann::json j;
    j["recon_l1"] = m.recon_l1;
    j["sg_mse"] = m.sg_mse;
    j["probe_accuracy"] = m.probe_accuracy;
    j["best_epoch"] = m.best_epoch;
    nlohmann::json curve = nlohmann::json::array();
    for (const EpochLoss& e : m.curve) curve.push_back({{"train", e.train}, {"valid", e.valid}});
    j["curve"] = std::move(curve);
    return j;
}

inline TrainingConfig training_config_for(const TrainRunConfig& cfg, const Corpus& corpus) {
    StrategyConfig strategy;
    strategy.ssl = cfg.ssl;
    strategy.sg = cfg.sg;
    strategy.attn = cfg.attn;
    strategy.fg = cfg.fg;
    strategy.cross_modal = cfg.cross_modal;
    TrainingConfig tc;
    tc.model = model_for_corpus(corpus, strategy, cfg.capacity, cfg.seed);
    tc.lr = cfg.lr;
    tc.beta1 = cfg.beta1;
    tc.beta2 = cfg.beta2;
    tc.lambda_sg = cfg.lambda_sg;
    tc.epochs = cfg.epochs;
    tc.shuffle_seed = cfg.seed + 1;
    return tc;
}

inline Metrics run_train(const TrainRunConfig& cfg) {
    Corpus corpus = load_corpus(cfg.corpus_dir);
    TrainingConfig tc = training_config_for(cfg, corpus);
    validate_model_config(tc.model);  // reject bad cells before spending time
    const auto out = detail::prepare_out_dir(cfg.out_dir);
    detail::append_log(out, "train start");
    TrainResult r = train(corpus, tc);
    r.model.save(out / "model.txt");
    detail::write_text(out / "metrics.json", metrics_to_json(r.metrics).dump(2) + "\n");
    detail::write_text(out / "train_config.json", to_json(cfg).dump(2) + "\n");
    detail::append_log(out, "train done: recon_l1 " + detail::fmt_double(r.metrics.recon_l1));
    return r.metrics;
}

// ---- ablate -----------------------------------------------------------------

struct AblateRunConfig {
    std::string corpus_dir;
    std::string out_dir;
    std::uint64_t seed = 1;
    std::size_t epochs = 50;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double lambda_sg = 1.0;
    std::size_t capacity = 5;
    std::vector<std::string> cells;  // empty = the full grid without SSL
    bool operator==(const AblateRunConfig&) const = default;
};

inline nlohmann::json to_json(const AblateRunConfig& c) {
    nlohmann::json j;
    j["command"] = "ablate";
    j["corpus_dir"] = c.corpus_dir;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["lr"] = c.lr;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["lambda_sg"] = c.lambda_sg;
    j["capacity"] = c.capacity;
    j["cells"] = c.cells;
    return j;
}

inline AblateRunConfig ablate_config_from_json(const nlohmann::json& j) {
    AblateRunConfig c;
    c.corpus_dir = j.at("corpus_dir").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.lambda_sg = j.at("lambda_sg").get<double>();
    c.capacity = j.at("capacity").get<std::size_t>();
    c.cells = j.at("cells").get<std::vector<std::string>>();
    return c;
}

/// The seven conditioning variants of the study, without SSL.
inline std::vector<std::string> default_ablation_cells() {
    return {"baseline",  "cmcce",        "cmcce-sg",   "cmcce-attn",
            "cmcce-fg",  "cmcce-sg-attn", "cmcce-sg-fg"};
}

/// Cell name -> strategy. A leading "ssl-" switches to the frozen prosody
/// encoder; the rest names the mechanism set.
inline StrategyConfig cell_strategy(std::string name) {
    StrategyConfig s;
    s.cross_modal = false;
    if (name.rfind("ssl-", 0) == 0) {
        s.ssl = true;
        name = name.substr(4);
    }
    if (name == "baseline") return s;
    if (name.rfind("cmcce", 0) != 0) throw ConfigError("unknown ablation cell '" + name + "'");
    s.cross_modal = true;
    std::string rest = name.substr(5);
    while (!rest.empty()) {
        if (rest.rfind("-sg", 0) == 0) {
            s.sg = true;
            rest = rest.substr(3);
        } else if (rest.rfind("-attn", 0) == 0) {
            s.attn = true;
            rest = rest.substr(5);
        } else if (rest.rfind("-fg", 0) == 0) {
            s.fg = true;
            rest = rest.substr(3);
        } else {
            throw ConfigError("unknown ablation cell '" + name + "'");
        }
    }
    return s;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Derived per-cell seed: stable under subsetting and reordering of --cells.
inline std::uint64_t cell_seed(std::uint64_t base_seed, const std::string& cell) {
    return fnv1a(cell) ^ (base_seed * 0x9E3779B97F4A7C15ull);
}

struct AblationRow {
    std::string cell;
    StrategyConfig strategy;
    Metrics metrics;
};

inline std::vector<AblationRow> run_ablation_cells(const Corpus& corpus,
                                                   const AblateRunConfig& cfg) {
    const std::vector<std::string> cells =
        cfg.cells.empty() ? default_ablation_cells() : cfg.cells;
    std::vector<AblationRow> rows;
    for (const std::string& name : cells) {
        StrategyConfig strategy = cell_strategy(name);
        const std::uint64_t seed = cell_seed(cfg.seed, name);
        TrainingConfig tc;
        tc.model = model_for_corpus(corpus, strategy, cfg.capacity, seed);
        tc.lr = cfg.lr;
        tc.beta1 = cfg.beta1;
        tc.beta2 = cfg.beta2;
        tc.lambda_sg = cfg.lambda_sg;
        tc.epochs = cfg.epochs;
        tc.shuffle_seed = seed + 1;
        rows.push_back({name, strategy, train(corpus, tc).metrics});
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "ssl,sg,attn,fg,cross_modal,recon_l1,sg_mse,probe_accuracy\n";
    for (const AblationRow& r : rows) {
        out += std::to_string(int(r.strategy.ssl)) + "," + std::to_string(int(r.strategy.sg)) +
               "," + std::to_string(int(r.strategy.attn)) + "," +
               std::to_string(int(r.strategy.fg)) + "," +
               std::to_string(int(r.strategy.cross_modal)) + "," +
               detail::fmt_double(r.metrics.recon_l1) + "," +
               detail::fmt_double(r.metrics.sg_mse) + "," +
               detail::fmt_double(r.metrics.probe_accuracy) + "\n";
    }
    return out;
}

inline std::vector<AblationRow> run_ablate(const AblateRunConfig& cfg) {
    Corpus corpus = load_corpus(cfg.corpus_dir);
    const auto out = detail::prepare_out_dir(cfg.out_dir);
    detail::append_log(out, "ablate start");
    std::vector<AblationRow> rows = run_ablation_cells(corpus, cfg);
    detail::write_text(out / "ablation.csv", ablation_csv(rows));
    detail::write_text(out / "ablate_config.json", to_json(cfg).dump(2) + "\n");
    detail::append_log(out, "ablate done: " + std::to_string(rows.size()) + " cells");
    return rows;
}

// ---- grad-check ---------------------------------------------------------------

struct GradCheckRunConfig {
    double tol = 1e-3;
    std::string only;
    std::size_t seeds = 20;
    bool operator==(const GradCheckRunConfig&) const = default;
};

inline GradSuiteResult run_grad_check(const GradCheckRunConfig& cfg) {
    if (!(cfg.tol > 0.0)) throw ConfigError("--tol must be > 0");
    if (cfg.seeds == 0) throw ConfigError("need at least one seed");
    GradSuiteResult res = run_grad_suite(cfg.tol, cfg.only, cfg.seeds);
    if (res.rows.empty()) throw ConfigError("--only '" + cfg.only + "' matches no block");
    return res;
}

}  // namespace convotts
