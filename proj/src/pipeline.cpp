#include "tvrd/pipeline.hpp"

#include "tvrd/rng.hpp"
#include "tvrd/sha256.hpp"

namespace tvrd::pipeline {

Split split_by_id_hash(const Corpus& corpus) {
    Split split;
    for (int i = 0; i < int(corpus.pairs.size()); ++i) {
        if (rng::fnv1a64(corpus.pairs[size_t(i)].id) % 5 == 0)
            split.eval.push_back(i);
        else
            split.train.push_back(i);
    }
    return split;
}

std::string corpus_id(const Corpus& corpus) {
    Sha256 h;
    h.update(corpus.vocab_sha256);
    h.update(":" + std::to_string(corpus.pairs.size()));
    if (!corpus.pairs.empty()) {
        h.update(":" + corpus.pairs.front().id);
        h.update(":" + corpus.pairs.back().id);
    }
    return h.hex_digest().substr(0, 16);
}

PlainText plain_encode_text(nn::ParamStore<float>& params, const model::ModelConfig& cfg,
                            const Caption& caption) {
    ad::Tape<float> tp;
    nn::ParamVars<float> pv(tp, params, false);
    auto enc = model::encode_text(tp, pv, cfg, caption);
    PlainText out;
    out.tokens = tp.val(enc.tokens);
    out.cls = tp.val(enc.cls).row(0);
    out.mask = enc.mask;
    return out;
}

MatrixF plain_encode_video(nn::ParamStore<float>& params, const model::ModelConfig& cfg,
                           const VideoClip& clip) {
    ad::Tape<float> tp;
    nn::ParamVars<float> pv(tp, params, false);
    return tp.val(model::encode_video(tp, pv, cfg, clip));
}

PhraseEncoder make_phrase_encoder(nn::ParamStore<float>& params, const model::ModelConfig& cfg,
                                  const Vocabulary& vocab) {
    return [&params, cfg, &vocab](const std::string& text) {
        const Caption cap = tokenize(text, vocab, cfg.n_t);
        return plain_encode_text(params, cfg, cap).cls;
    };
}

std::optional<scene::SceneElementEmbedding> scene_embedding_for(
    const scene::SceneSelection& sel, const model::Toggles& toggles) {
    if (!toggles.fusion_enabled()) return std::nullopt;
    scene::SceneElementEmbedding out;
    if (toggles.entities && toggles.activities) {
        const float g = toggles.coefficient_g
                            ? scene::balance_coefficient(sel.activity_embeddings,
                                                         sel.entity_embeddings)
                            : 1.0f;
        out = scene::aggregate(sel.activity_embeddings, sel.entity_embeddings, g);
    } else if (toggles.entities) {
        out.c = sel.entity_embeddings;
        out.g = 1.0f;
    } else {
        out.c = sel.activity_embeddings;
        out.g = 1.0f;
    }
    return out;
}

SelectionResult compute_selections(nn::ParamStore<float>& frozen_params,
                                   const model::ModelConfig& cfg, const Corpus& corpus,
                                   const TaxonomyDictionary& dict, const model::Toggles& toggles) {
    SelectionResult result;
    result.per_pair.reserve(corpus.pairs.size());
    for (const auto& pair : corpus.pairs) {
        if (!toggles.fusion_enabled()) {
            result.per_pair.push_back(std::nullopt);
            continue;
        }
        const MatrixF frames = plain_encode_video(frozen_params, cfg, pair.clip);
        const Eigen::RowVectorXf pooled = frames.colwise().mean();
        const auto sel = scene::select_top_k(pooled, dict, cfg.kappa);
        auto emb = scene_embedding_for(sel, toggles);
        result.cache.push_back({pair.id, sel.entity_ids, sel.activity_ids,
                                emb ? emb->g : 1.0f});
        result.per_pair.push_back(std::move(emb));
    }
    return result;
}

}  // namespace tvrd::pipeline
