#pragma once

#include <string>
#include <vector>

#include "tvrd/matio.hpp"
#include "tvrd/taxonomy.hpp"

namespace tvrd::scene {

struct SceneSelection {
    std::vector<int> entity_ids;    // kappa dictionary indices, scores non-increasing
    std::vector<int> activity_ids;
    MatrixF entity_embeddings;      // kappa x d
    MatrixF activity_embeddings;    // kappa x d
    std::vector<float> entity_scores;
    std::vector<float> activity_scores;
};

struct SceneElementEmbedding {
    MatrixF c;       // kappa x d
    float g = 1.0f;  // in [0, 2] for unit-norm rows
};

// Cosine top-k of the pooled video embedding against each dictionary side.
// Ties break toward the lower dictionary index. Selection runs on frozen
// embeddings, so everything here is plain arithmetic with no gradient.
SceneSelection select_top_k(const Eigen::RowVectorXf& pooled_video, const TaxonomyDictionary& dict,
                            int kappa);

// g = 1 - (1/kappa) * sum_l max_j cos(activity_l, entity_j); rows must be unit-norm
float balance_coefficient(const MatrixF& activities, const MatrixF& entities);

// c = activities + g * entities, element-wise
SceneElementEmbedding aggregate(const MatrixF& activities, const MatrixF& entities, float g);

// optional cache record so repeated runs can skip re-selection
struct SelectionCacheEntry {
    std::string id;
    std::vector<int> entity_ids;
    std::vector<int> activity_ids;
    float g = 1.0f;
};

void save_selection_cache(const std::vector<SelectionCacheEntry>& entries, const std::string& path);
std::vector<SelectionCacheEntry> load_selection_cache(const std::string& path);

}  // namespace tvrd::scene
