#include "tvrd/train.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tvrd/rng.hpp"
#include "tvrd/textual_debias.hpp"
#include "tvrd/visual_debias.hpp"

namespace tvrd::train {

using nlohmann::json;

std::string format_double(double v) {
    auto shortest = [v](std::chars_format fmt) -> std::string {
        for (int prec = 1; prec <= 17; ++prec) {
            char buf[64];
            auto res = std::to_chars(buf, buf + sizeof(buf), v, fmt, prec);
            std::string cand(buf, res.ptr);
            double back = 0.0;
            std::from_chars(cand.data(), cand.data() + cand.size(), back);
            if (back == v) return cand;
        }
        return {};
    };
    const std::string fixed = shortest(std::chars_format::fixed);
    const std::string general = shortest(std::chars_format::general);
    if (fixed.empty()) return general.empty() ? std::to_string(v) : general;
    if (general.empty() || fixed.size() <= general.size()) return fixed;
    return general;
}

double lr_at(int64_t step, int64_t total_steps, double base_lr, double warmup_frac) {
    if (total_steps <= 0) return base_lr;
    const double warmup = std::max(1.0, std::floor(warmup_frac * double(total_steps)));
    if (double(step) < warmup) return base_lr * (double(step) + 1.0) / warmup;
    const double span = std::max(1.0, double(total_steps) - warmup);
    const double progress = (double(step) - warmup) / span;
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

namespace {

// decoupled weight decay applies to weight matrices only; biases, norms,
// embeddings and the logit scale stay undecayed
bool decays(const std::string& name) {
    return name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0;
}

struct AdamW {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;

    void step(nn::ParamStore<float>& ps, double lr, double wd) {
        ++t;
        const float bc1 = float(1.0 - std::pow(beta1, double(t)));
        const float bc2 = float(1.0 - std::pow(beta2, double(t)));
        const float b1 = float(beta1), b2 = float(beta2);
        const float flr = float(lr), feps = float(eps);
        for (auto& e : ps.entries()) {
            e.m = b1 * e.m + (1.0f - b1) * e.grad;
            e.v = (b2 * e.v.array() + (1.0f - b2) * e.grad.array().square()).matrix();
            ad::Mat<float> mhat = e.m / bc1;
            ad::Mat<float> vhat = e.v / bc2;
            ad::Mat<float> update = (mhat.array() / (vhat.array().sqrt() + feps)).matrix();
            if (decays(e.name)) update += float(wd) * e.value;
            e.value -= flr * update;
        }
    }
};

struct StepLosses {
    double total = 0.0, infonce = 0.0, cap = 0.0, rec = 0.0, kl = 0.0;
};

StepLosses train_step(nn::ParamStore<float>& params, const model::ModelConfig& mcfg,
                      const model::Toggles& toggles, const matching::LossWeights& weights,
                      const std::vector<const CorpusPair*>& batch,
                      const std::vector<const scene::SceneElementEmbedding*>& scene_batch,
                      uint64_t eps_base) {
    const int b = int(batch.size());
    ad::Tape<float> tp;
    nn::ParamVars<float> pv(tp, params, true);

    std::vector<matching::TextSide<float>> text_sides;
    std::vector<matching::VideoSide<float>> video_sides;
    text_sides.reserve(size_t(b));
    video_sides.reserve(size_t(b));

    ad::Var cap_acc, rec_acc, kl_acc;

    for (int i = 0; i < b; ++i) {
        const CorpusPair& pair = *batch[size_t(i)];
        auto enc_text = model::encode_text(tp, pv, mcfg, pair.caption);
        ad::Var frames = model::encode_video(tp, pv, mcfg, pair.clip);

        ad::Var vhat = frames;
        if (scene_batch[size_t(i)]) {
            auto fused = vdebias::cross_attention_fuse(tp, pv, frames, scene_batch[size_t(i)]->c,
                                                       toggles.residual_fuse);
            vhat = fused.vhat;
        }

        ad::Var text_feats = enc_text.tokens;
        if (toggles.textual_debias) {
            const uint64_t eps_seed = rng::mix(eps_base, rng::fnv1a64(pair.id));
            auto eps_provider = [eps_seed, &mcfg](int k) {
                rng::Stream rs(rng::mix(eps_seed, uint64_t(k)));
                Eigen::RowVectorXd e(mcfg.d);
                for (int j = 0; j < mcfg.d; ++j) e(j) = rs.normal();
                return e;
            };
            auto decomp = tdebias::decompose(tp, pv, enc_text, mcfg.k_samples, eps_provider);
            text_feats = decomp.content;
            ad::Var rec = tdebias::reconstruction_loss(tp, pv, mcfg, decomp, pair.caption);
            ad::Var kl = tdebias::kl_loss(tp, decomp.posterior);
            rec_acc = rec_acc.valid() ? tp.add(rec_acc, rec) : rec;
            kl_acc = kl_acc.valid() ? tp.add(kl_acc, kl) : kl;
        }
        if (toggles.captioning_head) {
            auto cl = vdebias::caption_loss(tp, pv, mcfg, vhat, pair.caption);
            cap_acc = cap_acc.valid() ? tp.add(cap_acc, cl.loss) : cl.loss;
        }

        text_sides.push_back(
            matching::prepare_text_side(tp, pv, text_feats, enc_text.mask, mcfg.act));
        video_sides.push_back(matching::prepare_video_side(tp, pv, vhat, mcfg.act));
    }

    ad::Var sim = matching::similarity_matrix(tp, text_sides, video_sides);
    ad::Var tau = model::logit_scale(tp, pv);
    ad::Var infonce = matching::infonce_loss(tp, sim, tau);

    const float inv_b = 1.0f / float(b);
    ad::Var cap = toggles.captioning_head ? tp.scale(cap_acc, inv_b) : tp.scalar(0.0f);
    ad::Var rec = toggles.textual_debias ? tp.scale(rec_acc, inv_b) : tp.scalar(0.0f);
    ad::Var kl = toggles.textual_debias ? tp.scale(kl_acc, inv_b) : tp.scalar(0.0f);
    ad::Var total = matching::total_loss(tp, infonce, cap, rec, kl, weights);

    StepLosses out;
    out.total = double(tp.val(total)(0, 0));
    out.infonce = double(tp.val(infonce)(0, 0));
    out.cap = double(tp.val(cap)(0, 0));
    out.rec = double(tp.val(rec)(0, 0));
    out.kl = double(tp.val(kl)(0, 0));
    if (!std::isfinite(out.total))
        throw std::runtime_error("train: non-finite loss (infonce=" + std::to_string(out.infonce) +
                                 " cap=" + std::to_string(out.cap) +
                                 " rec=" + std::to_string(out.rec) +
                                 " kl=" + std::to_string(out.kl) + ")");

    tp.backward(total);
    pv.collect_grads();
    return out;
}

}  // namespace

TrainResult run_training(const TrainInputs& inputs) {
    const RunConfig& cfg = inputs.cfg;
    cfg.validate();
    if (inputs.corpus.vocab_sha256 != inputs.vocab.sha256())
        throw std::invalid_argument("train: vocabulary does not match the corpus header hash");

    TrainResult result;
    result.mcfg = to_model_config(cfg, inputs.corpus, inputs.vocab.size());
    result.params = model::build_parameters<float>(result.mcfg, cfg.seed);
    result.sel_params = result.params;  // frozen snapshot taken before any update
    result.dict = inputs.dict;

    if (cfg.toggles.fusion_enabled()) {
        embed_dictionary(result.dict,
                         pipeline::make_phrase_encoder(result.sel_params, result.mcfg, inputs.vocab),
                         result.mcfg.d);
        if (cfg.kappa > int(result.dict.entities.size()) ||
            cfg.kappa > int(result.dict.activities.size()))
            throw std::invalid_argument("train: kappa exceeds dictionary size");
    }

    auto selections = pipeline::compute_selections(result.sel_params, result.mcfg, inputs.corpus,
                                                   result.dict, cfg.toggles);
    result.selection_cache = std::move(selections.cache);

    const auto split = pipeline::split_by_id_hash(inputs.corpus);
    if (int(split.train.size()) < cfg.batch)
        throw std::invalid_argument("train: training split smaller than one batch");

    const int steps_per_epoch = int(split.train.size()) / cfg.batch;
    const int64_t total_steps = int64_t(steps_per_epoch) * cfg.epochs;

    AdamW opt;
    int64_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = split.train;
        rng::Stream shuffle_rs(rng::mix(rng::mix(cfg.seed, "shuffle"), uint64_t(epoch)));
        shuffle_rs.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<const CorpusPair*> batch;
            std::vector<const scene::SceneElementEmbedding*> scene_batch;
            for (int k = 0; k < cfg.batch; ++k) {
                const int idx = order[size_t(s * cfg.batch + k)];
                batch.push_back(&inputs.corpus.pairs[size_t(idx)]);
                const auto& emb = selections.per_pair[size_t(idx)];
                scene_batch.push_back(emb ? &*emb : nullptr);
            }
            const uint64_t eps_base =
                rng::mix(rng::mix(rng::mix(cfg.seed, "eps"), uint64_t(epoch)), uint64_t(s));
            result.params.zero_grads();
            StepLosses losses;
            try {
                losses = train_step(result.params, result.mcfg, cfg.toggles, cfg.weights, batch,
                                    scene_batch, eps_base);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error(std::string(e.what()) + " at step " +
                                         std::to_string(global_step));
            }
            if (!result.params.grads_finite())
                throw std::runtime_error("train: non-finite gradient at step " +
                                         std::to_string(global_step));
            const double lr = lr_at(global_step, total_steps, cfg.lr, cfg.warmup_frac);
            opt.step(result.params, lr, cfg.weight_decay);
            ++global_step;

            stats.lr = lr;
            stats.loss += losses.total;
            stats.infonce += losses.infonce;
            stats.cap += losses.cap;
            stats.rec += losses.rec;
            stats.kl += losses.kl;
        }
        const double inv = 1.0 / double(steps_per_epoch);
        stats.loss *= inv;
        stats.infonce *= inv;
        stats.cap *= inv;
        stats.rec *= inv;
        stats.kl *= inv;
        result.curve.push_back(stats);
    }
    return result;
}

std::string loss_curve_csv(const std::vector<EpochStats>& curve) {
    std::ostringstream os;
    os << "epoch,lr,loss,infonce,cap,rec,kl\n";
    for (const auto& row : curve) {
        os << row.epoch << ',' << format_double(row.lr) << ',' << format_double(row.loss) << ','
           << format_double(row.infonce) << ',' << format_double(row.cap) << ','
           << format_double(row.rec) << ',' << format_double(row.kl) << '\n';
    }
    return os.str();
}

std::string checkpoint_manifest(const RunConfig& cfg, const model::ModelConfig& mcfg,
                                const Vocabulary& vocab, const std::string& corpus_id,
                                const TaxonomyDictionary& dict) {
    json j;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = config_hash(cfg);
    j["vocab_sha256"] = vocab.sha256();
    j["vocab_tokens"] = vocab.tokens();
    j["corpus_id"] = corpus_id;
    j["model"] = {{"d", mcfg.d},
                  {"n_t", mcfg.n_t},
                  {"n_f", mcfg.n_f},
                  {"d_raw", mcfg.d_raw},
                  {"vocab", mcfg.vocab},
                  {"heads", mcfg.heads},
                  {"blocks", mcfg.blocks},
                  {"m_decoder", mcfg.m_decoder},
                  {"kappa", mcfg.kappa},
                  {"k_samples", mcfg.k_samples},
                  {"activation", cfg.activation},
                  {"cap_loss_reduction", cfg.cap_loss_reduction}};
    j["toggles"] = {{"entities", cfg.toggles.entities},
                    {"activities", cfg.toggles.activities},
                    {"captioning_head", cfg.toggles.captioning_head},
                    {"textual_debias", cfg.toggles.textual_debias},
                    {"coefficient_g", cfg.toggles.coefficient_g},
                    {"residual_fuse", cfg.toggles.residual_fuse}};
    json d;
    d["entities"] = json::array();
    for (const auto& p : dict.entities) d["entities"].push_back(p.text);
    d["activities"] = json::array();
    for (const auto& p : dict.activities) d["activities"].push_back(p.text);
    d["provenance"] = dict.provenance;
    j["dictionary"] = d;
    return j.dump();
}

void write_train_outputs(const TrainInputs& inputs, const TrainResult& result) {
    namespace fs = std::filesystem;
    if (inputs.cfg.out_dir.empty()) throw std::invalid_argument("train: out.dir not set");
    fs::create_directories(inputs.cfg.out_dir);
    const fs::path out(inputs.cfg.out_dir);

    {
        std::ofstream os(out / "config.resolved.toml", std::ios::trunc);
        os << "# " << kToolVersion << "\n" << canonical_config(inputs.cfg);
    }
    {
        std::ofstream os(out / "loss_curve.csv", std::ios::trunc);
        os << loss_curve_csv(result.curve);
    }
    if (!result.selection_cache.empty())
        scene::save_selection_cache(result.selection_cache,
                                    (out / "selection_cache.jsonl").string());

    auto tensors = model::store_tensors(result.params, "model/");
    auto sel = model::store_tensors(result.sel_params, "sel/");
    tensors.insert(tensors.end(), sel.begin(), sel.end());
    model::save_checkpoint((out / "checkpoint.bin").string(),
                           checkpoint_manifest(inputs.cfg, result.mcfg, inputs.vocab,
                                               pipeline::corpus_id(inputs.corpus), result.dict),
                           tensors);
}

}  // namespace tvrd::train
