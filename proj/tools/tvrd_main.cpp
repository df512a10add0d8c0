#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tvrd/config.hpp"
#include "tvrd/eval.hpp"
#include "tvrd/matio.hpp"
#include "tvrd/train.hpp"

namespace fs = std::filesystem;
using namespace tvrd;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

// every command leaves a re-runnable record of itself in its output directory
void write_invocation(const fs::path& out_dir, const std::string& command,
                      const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << "# " << kToolVersion << "\n[invocation]\ncommand = \"" << command << "\"\n";
    for (const auto& [k, v] : kv) os << k << " = \"" << v << "\"\n";
    write_text(out_dir / "invocation.toml", os.str());
}

std::string fmt(double v) { return train::format_double(v); }

struct GenArgs {
    int n = 2500;
    double visual_dominance = 0.3;
    double textual_bias_rate = 0.4;
    uint64_t seed = 1;
    uint64_t profile_seed = 0;
    GeneratorSpec spec;
    std::string out;
};

int cmd_gen_corpus(const GenArgs& a) {
    BiasProfile profile{a.visual_dominance, a.textual_bias_rate, a.profile_seed};
    auto result = generate_synthetic_corpus(a.n, profile, a.spec, a.seed);
    const fs::path out(a.out);
    fs::create_directories(out);
    save_corpus(result.corpus, (out / "corpus.jsonl").string());
    result.vocab.save((out / "vocab.json").string());
    save_lexicon(result.lexicon, (out / "lexicon.json").string());
    write_invocation(out, "gen-corpus",
                     {{"n", std::to_string(a.n)},
                      {"visual_dominance", fmt(a.visual_dominance)},
                      {"textual_bias_rate", fmt(a.textual_bias_rate)},
                      {"seed", std::to_string(a.seed)},
                      {"profile_seed", std::to_string(a.profile_seed)},
                      {"entities", std::to_string(a.spec.n_entities)},
                      {"activities", std::to_string(a.spec.n_activities)},
                      {"bias_words", std::to_string(a.spec.n_bias_words)},
                      {"k_entities", std::to_string(a.spec.k_entities)},
                      {"k_activities", std::to_string(a.spec.k_activities)},
                      {"d_raw", std::to_string(a.spec.d_raw)},
                      {"n_f", std::to_string(a.spec.n_f)},
                      {"n_t", std::to_string(a.spec.n_t)},
                      {"catalog_seed", std::to_string(a.spec.catalog_seed)}});
    std::cout << "wrote " << result.corpus.pairs.size() << " pairs to " << (out / "corpus.jsonl")
              << "\n";
    return 0;
}

int cmd_build_dict(const std::string& corpus_path, const std::string& vocab_path,
                   const std::string& lexicon_path, const std::string& out_dir,
                   const std::string& embed_checkpoint) {
    const Corpus corpus = load_corpus(corpus_path);
    const Vocabulary vocab = Vocabulary::load(vocab_path);
    if (corpus.vocab_sha256 != vocab.sha256())
        throw std::invalid_argument("build-dict: vocabulary does not match corpus header");
    const Lexicon lexicon = load_lexicon(lexicon_path);

    std::vector<std::string> captions;
    captions.reserve(corpus.pairs.size());
    for (const auto& p : corpus.pairs) captions.push_back(detokenize(p.caption, vocab));
    auto dict = build_dictionary(captions, lexicon, {pipeline::corpus_id(corpus)});

    const fs::path out(out_dir);
    fs::create_directories(out);
    save_dictionary(dict, (out / "dict.json").string());
    if (!embed_checkpoint.empty()) {
        auto snap = eval::snapshot_from_checkpoint(embed_checkpoint);
        embed_dictionary(dict,
                         pipeline::make_phrase_encoder(snap.sel_params, snap.mcfg, snap.vocab),
                         snap.mcfg.d);
        save_dictionary_embeddings(dict, (out / "dict").string());
    }
    write_invocation(out, "build-dict",
                     {{"corpus", corpus_path},
                      {"vocab", vocab_path},
                      {"lexicon", lexicon_path},
                      {"embed_checkpoint", embed_checkpoint}});
    std::cout << "dictionary: " << dict.entities.size() << " entities, "
              << dict.activities.size() << " activities\n";
    return 0;
}

train::TrainInputs load_train_inputs(const std::string& config_path,
                                     std::optional<uint64_t> seed_override,
                                     const std::string& out_override) {
    train::TrainInputs inputs;
    inputs.cfg = load_run_config(config_path);
    if (seed_override) inputs.cfg.seed = *seed_override;
    if (!out_override.empty()) inputs.cfg.out_dir = out_override;
    if (inputs.cfg.corpus_path.empty() || inputs.cfg.vocab_path.empty() ||
        inputs.cfg.dict_path.empty())
        throw std::invalid_argument("config: corpus.path, corpus.vocab and corpus.dict are required");
    inputs.corpus = load_corpus(inputs.cfg.corpus_path);
    inputs.vocab = Vocabulary::load(inputs.cfg.vocab_path);
    inputs.dict = load_dictionary(inputs.cfg.dict_path);
    return inputs;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed,
              const std::string& out_override) {
    auto inputs = load_train_inputs(config_path, seed, out_override);
    if (inputs.cfg.out_dir.empty())
        throw std::invalid_argument("config: out.dir (or --out) is required for train");
    auto result = train::run_training(inputs);
    train::write_train_outputs(inputs, result);
    std::cout << "checkpoint: " << (fs::path(inputs.cfg.out_dir) / "checkpoint.bin") << "\n";
    if (!result.curve.empty())
        std::cout << "final epoch loss " << fmt(result.curve.back().loss) << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus_path,
             const std::string& features, std::optional<double> alpha, int max_items,
             const std::string& out_dir, bool ood) {
    auto snap = eval::snapshot_from_checkpoint(checkpoint);
    const Corpus corpus = load_corpus(corpus_path);
    eval::EvalRequest req;
    req.source = eval::parse_feature_source(features);
    req.alpha = alpha;
    req.max_items = max_items;
    req.ood = ood;
    const auto report = eval::evaluate(snap, corpus, req);

    const std::string json_text = eval::report_json(report);
    std::cout << json_text;
    if (!out_dir.empty()) {
        const fs::path out(out_dir);
        fs::create_directories(out);
        write_text(out / "report.json", json_text);
        std::vector<eval::SweepRow> rows{{ood ? "ood" : "eval", report.feature_source, report}};
        write_text(out / "metrics.csv", eval::sweep_csv(rows));
        write_invocation(out, ood ? "ood" : "eval",
                         {{"checkpoint", checkpoint},
                          {"corpus", corpus_path},
                          {"features", features},
                          {"alpha", alpha ? fmt(*alpha) : ""},
                          {"max_items", std::to_string(max_items)}});
    }
    return 0;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok));
    }
    return out;
}

std::vector<std::string> parse_names(const std::string& csv) {
    std::vector<std::string> out;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

int cmd_sweep(const std::string& axis, const std::string& values, const std::string& config_path,
              const std::string& checkpoint, const std::string& corpus_path, int max_items,
              std::optional<uint64_t> seed, const std::string& out_dir) {
    if (out_dir.empty()) throw std::invalid_argument("sweep: --out is required");
    std::vector<eval::SweepRow> rows;
    if (axis == "alpha") {
        if (checkpoint.empty() || corpus_path.empty())
            throw std::invalid_argument("sweep alpha: --checkpoint and --corpus are required");
        auto snap = eval::snapshot_from_checkpoint(checkpoint);
        const Corpus corpus = load_corpus(corpus_path);
        rows = eval::sweep_alpha(snap, corpus, parse_doubles(values), max_items);
    } else {
        if (config_path.empty())
            throw std::invalid_argument("sweep " + axis + ": --config is required");
        auto base = load_train_inputs(config_path, seed, "");
        if (axis == "kappa") {
            std::vector<int> ks;
            for (double v : parse_doubles(values)) ks.push_back(int(v));
            rows = eval::sweep_kappa(base, ks);
        } else if (axis == "g_toggle") {
            rows = eval::sweep_g_toggle(base);
        } else if (axis == "modules") {
            rows = eval::sweep_modules(base, parse_names(values));
        } else {
            throw std::invalid_argument("sweep: unknown axis " + axis);
        }
    }
    const fs::path out(out_dir);
    fs::create_directories(out);
    write_text(out / "sweep.csv", eval::sweep_csv(rows));
    write_invocation(out, "sweep",
                     {{"axis", axis},
                      {"values", values},
                      {"config", config_path},
                      {"checkpoint", checkpoint},
                      {"corpus", corpus_path},
                      {"max_items", std::to_string(max_items)},
                      {"seed", seed ? std::to_string(*seed) : ""}});
    std::cout << eval::sweep_csv(rows);
    return 0;
}

int cmd_dump(const std::string& checkpoint, const std::string& corpus_path,
             const std::string& out_dir) {
    auto snap = eval::snapshot_from_checkpoint(checkpoint);
    const Corpus corpus = load_corpus(corpus_path);
    auto dump = eval::dump_embeddings(snap, corpus);
    const fs::path out(out_dir);
    fs::create_directories(out);
    write_matrix((out / "content_cls.mat").string(), dump.content_cls);
    write_matrix((out / "bias_mu.mat").string(), dump.bias_mu);
    std::ostringstream ids;
    for (const auto& id : dump.ids) ids << id << '\n';
    write_text(out / "ids.txt", ids.str());
    write_invocation(out, "dump-embeddings",
                     {{"checkpoint", checkpoint}, {"corpus", corpus_path}});
    std::cout << "wrote " << dump.ids.size() << " embedding rows to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"text-video retrieval with scene-element fusion and content/bias disentanglement"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* sc_gen = app.add_subcommand("gen-corpus", "generate a synthetic bias-injected corpus");
    sc_gen->add_option("--n", gen.n, "number of pairs");
    sc_gen->add_option("--visual-dominance", gen.visual_dominance, "distractor energy fraction");
    sc_gen->add_option("--textual-bias-rate", gen.textual_bias_rate, "bias token rate");
    sc_gen->add_option("--seed", gen.seed, "generator seed");
    sc_gen->add_option("--profile-seed", gen.profile_seed, "extra profile seed");
    sc_gen->add_option("--entities", gen.spec.n_entities, "entity catalog size");
    sc_gen->add_option("--activities", gen.spec.n_activities, "activity catalog size");
    sc_gen->add_option("--bias-words", gen.spec.n_bias_words, "emotive vocabulary size");
    sc_gen->add_option("--k-entities", gen.spec.k_entities, "latent entities per pair");
    sc_gen->add_option("--k-activities", gen.spec.k_activities, "latent activities per pair");
    sc_gen->add_option("--d-raw", gen.spec.d_raw, "raw frame feature dim");
    sc_gen->add_option("--n-f", gen.spec.n_f, "frames per clip");
    sc_gen->add_option("--n-t", gen.spec.n_t, "caption token budget");
    sc_gen->add_option("--catalog-seed", gen.spec.catalog_seed, "latent catalog seed");
    sc_gen->add_option("--out", gen.out, "output directory")->required();

    std::string bd_corpus, bd_vocab, bd_lexicon, bd_out, bd_embed;
    auto* sc_dict = app.add_subcommand("build-dict", "build the scene taxonomy dictionary");
    sc_dict->add_option("--corpus", bd_corpus)->required();
    sc_dict->add_option("--vocab", bd_vocab)->required();
    sc_dict->add_option("--lexicon", bd_lexicon)->required();
    sc_dict->add_option("--out", bd_out)->required();
    sc_dict->add_option("--embed-checkpoint", bd_embed,
                        "also write phrase embeddings using this checkpoint's frozen tower");

    std::string tr_config, tr_out;
    std::optional<uint64_t> tr_seed;
    auto* sc_train = app.add_subcommand("train", "train a retrieval model");
    sc_train->add_option("--config", tr_config)->required();
    sc_train->add_option("--seed", tr_seed, "override train.seed");
    sc_train->add_option("--out", tr_out, "override out.dir");

    std::string ev_ckpt, ev_corpus, ev_features = "content", ev_out;
    std::optional<double> ev_alpha;
    int ev_max = 0;
    auto* sc_eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus eval split");
    sc_eval->add_option("--checkpoint", ev_ckpt)->required();
    sc_eval->add_option("--corpus", ev_corpus)->required();
    sc_eval->add_option("--features", ev_features, "content | bias | mixed");
    sc_eval->add_option("--alpha", ev_alpha, "bias mixing weight (mixed only)");
    sc_eval->add_option("--max-items", ev_max, "cap the gallery size, 0 = all");
    sc_eval->add_option("--out", ev_out, "output directory");

    std::string ood_ckpt, ood_corpus, ood_out;
    int ood_max = 0;
    auto* sc_ood = app.add_subcommand("ood", "evaluate on an unseen corpus distribution");
    sc_ood->add_option("--checkpoint", ood_ckpt)->required();
    sc_ood->add_option("--corpus", ood_corpus)->required();
    sc_ood->add_option("--max-items", ood_max);
    sc_ood->add_option("--out", ood_out);

    std::string sw_axis, sw_values, sw_config, sw_ckpt, sw_corpus, sw_out;
    int sw_max = 0;
    std::optional<uint64_t> sw_seed;
    auto* sc_sweep = app.add_subcommand("sweep", "sweep alpha, kappa, g_toggle or modules");
    sc_sweep->add_option("--axis", sw_axis)->required();
    sc_sweep->add_option("--values", sw_values);
    sc_sweep->add_option("--config", sw_config);
    sc_sweep->add_option("--checkpoint", sw_ckpt);
    sc_sweep->add_option("--corpus", sw_corpus);
    sc_sweep->add_option("--max-items", sw_max);
    sc_sweep->add_option("--seed", sw_seed);
    sc_sweep->add_option("--out", sw_out)->required();

    std::string du_ckpt, du_corpus, du_out;
    auto* sc_dump = app.add_subcommand("dump-embeddings", "dump content and bias text embeddings");
    sc_dump->add_option("--checkpoint", du_ckpt)->required();
    sc_dump->add_option("--corpus", du_corpus)->required();
    sc_dump->add_option("--out", du_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (*sc_gen) return cmd_gen_corpus(gen);
        if (*sc_dict) return cmd_build_dict(bd_corpus, bd_vocab, bd_lexicon, bd_out, bd_embed);
        if (*sc_train) return cmd_train(tr_config, tr_seed, tr_out);
        if (*sc_eval)
            return cmd_eval(ev_ckpt, ev_corpus, ev_features, ev_alpha, ev_max, ev_out, false);
        if (*sc_ood) return cmd_eval(ood_ckpt, ood_corpus, "content", std::nullopt, ood_max,
                                     ood_out, true);
        if (*sc_sweep)
            return cmd_sweep(sw_axis, sw_values, sw_config, sw_ckpt, sw_corpus, sw_max, sw_seed,
                             sw_out);
        if (*sc_dump) return cmd_dump(du_ckpt, du_corpus, du_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
