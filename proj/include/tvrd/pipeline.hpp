#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tvrd/config.hpp"
#include "tvrd/corpus.hpp"
#include "tvrd/matching.hpp"
#include "tvrd/scene_elements.hpp"
#include "tvrd/taxonomy.hpp"

namespace tvrd::pipeline {

struct Split {
    std::vector<int> train;
    std::vector<int> eval;
};

// 80/20 split by FNV-1a hash of the pair id; no stored split file needed
Split split_by_id_hash(const Corpus& corpus);

std::string corpus_id(const Corpus& corpus);

struct PlainText {
    MatrixF tokens;            // n_t x d
    Eigen::RowVectorXf cls;    // d
    std::vector<uint8_t> mask;
};

// single-item forward passes with gradients off
PlainText plain_encode_text(nn::ParamStore<float>& params, const model::ModelConfig& cfg,
                            const Caption& caption);
MatrixF plain_encode_video(nn::ParamStore<float>& params, const model::ModelConfig& cfg,
                           const VideoClip& clip);

// phrase encoder bound to a parameter store: tokenize, encode, take CLS
PhraseEncoder make_phrase_encoder(nn::ParamStore<float>& params, const model::ModelConfig& cfg,
                                  const Vocabulary& vocab);

// per-pair scene element embedding under the module toggles; nullopt when
// fusion is disabled entirely
std::optional<scene::SceneElementEmbedding> scene_embedding_for(
    const scene::SceneSelection& sel, const model::Toggles& toggles);

struct SelectionResult {
    std::vector<std::optional<scene::SceneElementEmbedding>> per_pair;
    std::vector<scene::SelectionCacheEntry> cache;
};

// selection runs once per video on the frozen tower
SelectionResult compute_selections(nn::ParamStore<float>& frozen_params,
                                   const model::ModelConfig& cfg, const Corpus& corpus,
                                   const TaxonomyDictionary& dict, const model::Toggles& toggles);

}  // namespace tvrd::pipeline
