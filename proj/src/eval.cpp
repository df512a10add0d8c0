#include "tvrd/eval.hpp"

#include <sstream>

#include "json.hpp"
#include "tvrd/textual_debias.hpp"
#include "tvrd/visual_debias.hpp"

namespace tvrd::eval {

using nlohmann::json;

std::string feature_source_name(FeatureSource s) {
    switch (s) {
        case FeatureSource::Content: return "content";
        case FeatureSource::Bias: return "bias";
        case FeatureSource::Mixed: return "mixed";
    }
    return "content";
}

FeatureSource parse_feature_source(const std::string& name) {
    if (name == "content") return FeatureSource::Content;
    if (name == "bias") return FeatureSource::Bias;
    if (name == "mixed") return FeatureSource::Mixed;
    throw std::invalid_argument("unknown feature source: " + name);
}

Snapshot snapshot_from_checkpoint(const std::string& path) {
    auto [manifest_text, tensors] = model::load_checkpoint(path);
    json manifest = json::parse(manifest_text);

    Snapshot snap;
    const json& m = manifest.at("model");
    snap.mcfg.d = m.at("d").get<int>();
    snap.mcfg.n_t = m.at("n_t").get<int>();
    snap.mcfg.n_f = m.at("n_f").get<int>();
    snap.mcfg.d_raw = m.at("d_raw").get<int>();
    snap.mcfg.vocab = m.at("vocab").get<int>();
    snap.mcfg.heads = m.at("heads").get<int>();
    snap.mcfg.blocks = m.at("blocks").get<int>();
    snap.mcfg.m_decoder = m.at("m_decoder").get<int>();
    snap.mcfg.kappa = m.at("kappa").get<int>();
    snap.mcfg.k_samples = m.at("k_samples").get<int>();
    snap.mcfg.act = parse_activation(m.at("activation").get<std::string>());
    snap.mcfg.cap_loss_mean = m.at("cap_loss_reduction").get<std::string>() == "mean";
    snap.mcfg.validate();

    const json& t = manifest.at("toggles");
    snap.toggles.entities = t.at("entities").get<bool>();
    snap.toggles.activities = t.at("activities").get<bool>();
    snap.toggles.captioning_head = t.at("captioning_head").get<bool>();
    snap.toggles.textual_debias = t.at("textual_debias").get<bool>();
    snap.toggles.coefficient_g = t.at("coefficient_g").get<bool>();
    snap.toggles.residual_fuse = t.at("residual_fuse").get<bool>();

    snap.config_hash = manifest.at("config_hash").get<std::string>();
    snap.vocab_sha256 = manifest.at("vocab_sha256").get<std::string>();

    const json& d = manifest.at("dictionary");
    for (const auto& p : d.at("entities"))
        snap.dict.entities.push_back({p.get<std::string>(), PhraseKind::Entity});
    for (const auto& p : d.at("activities"))
        snap.dict.activities.push_back({p.get<std::string>(), PhraseKind::Activity});
    if (d.contains("provenance"))
        snap.dict.provenance = d["provenance"].get<std::vector<std::string>>();

    snap.vocab = Vocabulary(manifest.at("vocab_tokens").get<std::vector<std::string>>());
    if (snap.vocab.sha256() != snap.vocab_sha256)
        throw std::runtime_error("checkpoint: vocabulary hash mismatch in manifest");

    snap.params = model::build_parameters<float>(snap.mcfg, 0);
    snap.sel_params = model::build_parameters<float>(snap.mcfg, 0);
    model::load_store_tensors(snap.params, tensors, "model/");
    model::load_store_tensors(snap.sel_params, tensors, "sel/");
    return snap;
}

Snapshot snapshot_from_training(const train::TrainResult& result, const RunConfig& cfg,
                                const Vocabulary& vocab) {
    Snapshot snap;
    snap.params = result.params;
    snap.sel_params = result.sel_params;
    snap.mcfg = result.mcfg;
    snap.toggles = cfg.toggles;
    snap.vocab = vocab;
    snap.dict = result.dict;
    snap.config_hash = config_hash(cfg);
    snap.vocab_sha256 = vocab.sha256();
    return snap;
}

namespace {

// the corpus only stores token ids; phrase embedding re-tokenizes dictionary
// text with the checkpoint's own vocabulary
void ensure_dict_embedded(Snapshot& snap) {
    if (snap.dict.has_embeddings() || !snap.toggles.fusion_enabled()) return;
    embed_dictionary(snap.dict,
                     pipeline::make_phrase_encoder(snap.sel_params, snap.mcfg, snap.vocab),
                     snap.mcfg.d);
}

struct GalleryItem {
    matching::PlainTextSide text;
    matching::PlainVideoSide video;
};

matching::PlainTextSide text_side_from_tape(ad::Tape<float>& tp, const nn::ParamVars<float>& pv,
                                            ad::Var feats, const ad::MaskVec& mask,
                                            nn::Activation act) {
    auto side = matching::prepare_text_side(tp, pv, feats, mask, act);
    matching::PlainTextSide out;
    out.feats_norm = tp.val(side.feats_norm);
    out.weights = tp.val(side.weights).col(0);
    out.mask = mask;
    return out;
}

}  // namespace

EvalReport evaluate(Snapshot& snap, const Corpus& corpus, const EvalRequest& request) {
    if (corpus.n_f != snap.mcfg.n_f || corpus.d_raw != snap.mcfg.d_raw ||
        corpus.n_t != snap.mcfg.n_t)
        throw std::invalid_argument("evaluate: corpus shape disagrees with the checkpoint");
    if (corpus.vocab_sha256 != snap.vocab_sha256)
        throw std::invalid_argument("evaluate: corpus vocabulary differs from the checkpoint");
    if (request.source == FeatureSource::Mixed && !request.alpha)
        throw std::invalid_argument("evaluate: mixed features require alpha");
    if (request.source != FeatureSource::Content && !snap.toggles.textual_debias)
        throw std::invalid_argument(
            "evaluate: bias/mixed features need a checkpoint trained with textual_debias");
    ensure_dict_embedded(snap);

    const auto split = pipeline::split_by_id_hash(corpus);
    std::vector<int> items = split.eval;
    if (request.max_items > 0 && int(items.size()) > request.max_items)
        items.resize(size_t(request.max_items));
    if (items.empty()) throw std::invalid_argument("evaluate: empty evaluation split");

    const float alpha = request.alpha ? float(*request.alpha) : 0.0f;

    std::vector<GalleryItem> gallery;
    gallery.reserve(items.size());
    for (int idx : items) {
        const CorpusPair& pair = corpus.pairs[size_t(idx)];
        ad::Tape<float> tp;
        nn::ParamVars<float> pv(tp, snap.params, false);

        // video side: encode, fuse with the frozen selection, gate
        ad::Var frames = model::encode_video(tp, pv, snap.mcfg, pair.clip);
        ad::Var vhat = frames;
        if (snap.toggles.fusion_enabled()) {
            // pooled video embedding comes from the frozen tower, matching how
            // selections were computed during training
            const Eigen::RowVectorXf pooled =
                pipeline::plain_encode_video(snap.sel_params, snap.mcfg, pair.clip)
                    .colwise()
                    .mean();
            const auto sel = scene::select_top_k(pooled, snap.dict, snap.mcfg.kappa);
            const auto emb = pipeline::scene_embedding_for(sel, snap.toggles);
            auto fused =
                vdebias::cross_attention_fuse(tp, pv, frames, emb->c, snap.toggles.residual_fuse);
            vhat = fused.vhat;
        }
        auto vside = matching::prepare_video_side(tp, pv, vhat, snap.mcfg.act);

        GalleryItem item;
        item.video.feats_norm = tp.val(vside.feats_norm);
        item.video.weights = tp.val(vside.weights).col(0);

        // text side per feature source
        auto enc_text = model::encode_text(tp, pv, snap.mcfg, pair.caption);
        if (!snap.toggles.textual_debias) {
            item.text = text_side_from_tape(tp, pv, enc_text.tokens, enc_text.mask, snap.mcfg.act);
        } else {
            ad::Var content = nn::linear(tp, pv, "content", enc_text.tokens);
            ad::Mat<float> maskcol(snap.mcfg.n_t, 1);
            for (int i = 0; i < snap.mcfg.n_t; ++i)
                maskcol(i, 0) = float(enc_text.mask[size_t(i)]);
            content = tp.scale_rows(content, tp.constant(maskcol));
            ad::Var mu = nn::linear(tp, pv, "bias_mu", enc_text.cls);

            switch (request.source) {
                case FeatureSource::Content:
                    item.text =
                        text_side_from_tape(tp, pv, content, enc_text.mask, snap.mcfg.act);
                    break;
                case FeatureSource::Bias: {
                    ad::MaskVec one{1};
                    item.text = text_side_from_tape(tp, pv, mu, one, snap.mcfg.act);
                    break;
                }
                case FeatureSource::Mixed: {
                    MatrixF mixed = tdebias::mix_bias(MatrixF(tp.val(content)),
                                                      Eigen::RowVectorXf(tp.val(mu).row(0)), alpha);
                    item.text = text_side_from_tape(tp, pv, tp.constant(mixed), enc_text.mask,
                                                    snap.mcfg.act);
                    break;
                }
            }
        }
        gallery.push_back(std::move(item));
    }

    const int n = int(gallery.size());
    Eigen::MatrixXd sim(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            sim(i, j) = matching::wti_pair_plain(gallery[size_t(i)].text, gallery[size_t(j)].video);

    EvalReport report;
    auto [t2v, v2t] = metrics::recall_at_k(sim);
    report.t2v = t2v;
    report.v2t = v2t;
    report.config_hash = snap.config_hash;
    report.corpus_id = pipeline::corpus_id(corpus);
    report.feature_source = feature_source_name(request.source);
    report.alpha = request.alpha;
    report.ood = request.ood;
    report.gallery_size = n;
    return report;
}

EvalReport ood_evaluate(Snapshot& snap, const Corpus& corpus_b, int max_items) {
    EvalRequest req;
    req.source = FeatureSource::Content;
    req.ood = true;
    req.max_items = max_items;
    return evaluate(snap, corpus_b, req);
}

std::string report_json(const EvalReport& report) {
    json j;
    auto metrics_json = [](const metrics::RetrievalMetrics& m) {
        return json{{"r1", m.r1}, {"r5", m.r5}, {"r10", m.r10}, {"rsum", m.rsum}};
    };
    j["t2v"] = metrics_json(report.t2v);
    j["v2t"] = metrics_json(report.v2t);
    j["config_hash"] = report.config_hash;
    j["corpus_id"] = report.corpus_id;
    j["feature_source"] = report.feature_source;
    if (report.alpha) j["alpha"] = *report.alpha;
    j["ood"] = report.ood;
    j["gallery_size"] = report.gallery_size;
    j["tool_version"] = kToolVersion;
    return j.dump(2) + "\n";
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "axis,value,direction,r1,r5,r10,rsum,config_hash\n";
    for (const auto& row : rows) {
        for (const metrics::RetrievalMetrics* m : {&row.report.t2v, &row.report.v2t}) {
            os << row.axis << ',' << row.value << ',' << m->direction << ','
               << train::format_double(m->r1) << ',' << train::format_double(m->r5) << ','
               << train::format_double(m->r10) << ',' << train::format_double(m->rsum) << ','
               << row.report.config_hash << '\n';
        }
    }
    return os.str();
}

std::vector<SweepRow> sweep_alpha(Snapshot& snap, const Corpus& corpus,
                                  const std::vector<double>& alphas, int max_items) {
    if (alphas.empty()) throw std::invalid_argument("sweep: empty value list");
    std::vector<SweepRow> rows;
    for (double a : alphas) {
        EvalRequest req;
        req.source = FeatureSource::Mixed;
        req.alpha = a;
        req.max_items = max_items;
        rows.push_back({"alpha", train::format_double(a), evaluate(snap, corpus, req)});
    }
    return rows;
}

model::Toggles toggles_preset(const std::string& name) {
    model::Toggles t;
    t.entities = t.activities = t.captioning_head = t.textual_debias = false;
    if (name == "exp1" || name == "baseline") return t;
    if (name == "exp2") {
        t.entities = true;
        return t;
    }
    if (name == "exp3") {
        t.activities = true;
        return t;
    }
    if (name == "exp4") {
        t.entities = t.activities = true;
        return t;
    }
    if (name == "exp5") {
        t.entities = t.activities = t.captioning_head = true;
        return t;
    }
    if (name == "exp6") {
        t.textual_debias = true;
        return t;
    }
    if (name == "exp7" || name == "full") {
        t.entities = t.activities = t.captioning_head = t.textual_debias = true;
        return t;
    }
    throw std::invalid_argument("unknown module preset: " + name);
}

namespace {

SweepRow train_and_eval(const train::TrainInputs& inputs, const std::string& axis,
                        const std::string& value) {
    auto result = train::run_training(inputs);
    auto snap = snapshot_from_training(result, inputs.cfg, inputs.vocab);
    EvalRequest req;
    req.source = FeatureSource::Content;
    req.max_items = inputs.cfg.eval_max_items;
    return {axis, value, evaluate(snap, inputs.corpus, req)};
}

}  // namespace

std::vector<SweepRow> sweep_kappa(const train::TrainInputs& base, const std::vector<int>& kappas) {
    if (kappas.empty()) throw std::invalid_argument("sweep: empty value list");
    std::vector<SweepRow> rows;
    for (int k : kappas) {
        train::TrainInputs inputs = base;
        inputs.cfg.kappa = k;
        rows.push_back(train_and_eval(inputs, "kappa", std::to_string(k)));
    }
    return rows;
}

std::vector<SweepRow> sweep_g_toggle(const train::TrainInputs& base) {
    std::vector<SweepRow> rows;
    for (bool with_g : {true, false}) {
        train::TrainInputs inputs = base;
        inputs.cfg.toggles.coefficient_g = with_g;
        rows.push_back(train_and_eval(inputs, "g_toggle", with_g ? "with_g" : "without_g"));
    }
    return rows;
}

std::vector<SweepRow> sweep_modules(const train::TrainInputs& base,
                                    const std::vector<std::string>& presets) {
    if (presets.empty()) throw std::invalid_argument("sweep: empty value list");
    std::vector<SweepRow> rows;
    for (const auto& name : presets) {
        train::TrainInputs inputs = base;
        inputs.cfg.toggles = toggles_preset(name);
        rows.push_back(train_and_eval(inputs, "module_toggles", name));
    }
    return rows;
}

EmbeddingDump dump_embeddings(Snapshot& snap, const Corpus& corpus) {
    if (!snap.toggles.textual_debias)
        throw std::invalid_argument("dump: checkpoint was trained without textual_debias");
    if (corpus.vocab_sha256 != snap.vocab_sha256)
        throw std::invalid_argument("dump: corpus vocabulary differs from the checkpoint");
    EmbeddingDump dump;
    dump.content_cls.resize(Eigen::Index(corpus.pairs.size()), snap.mcfg.d);
    dump.bias_mu.resize(Eigen::Index(corpus.pairs.size()), snap.mcfg.d);
    for (size_t i = 0; i < corpus.pairs.size(); ++i) {
        const CorpusPair& pair = corpus.pairs[i];
        ad::Tape<float> tp;
        nn::ParamVars<float> pv(tp, snap.params, false);
        auto enc = model::encode_text(tp, pv, snap.mcfg, pair.caption);
        dump.content_cls.row(Eigen::Index(i)) =
            tp.val(nn::linear(tp, pv, "content", enc.cls)).row(0);
        dump.bias_mu.row(Eigen::Index(i)) = tp.val(nn::linear(tp, pv, "bias_mu", enc.cls)).row(0);
        dump.ids.push_back(pair.id);
    }
    return dump;
}

}  // namespace tvrd::eval
