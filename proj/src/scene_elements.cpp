#include "tvrd/scene_elements.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace tvrd::scene {

using nlohmann::json;

namespace {

void check_unit_rows(const MatrixF& m, const char* what) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const float n = m.row(r).norm();
        if (std::abs(n - 1.0f) > 1e-3f)
            throw std::invalid_argument(std::string(what) + ": rows must be unit-norm");
    }
}

// indices of the k largest scores, ties toward the lower index
std::vector<int> top_k_indices(const Eigen::VectorXf& scores, int k) {
    std::vector<int> idx(size_t(scores.size()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    idx.resize(size_t(k));
    return idx;
}

}  // namespace

SceneSelection select_top_k(const Eigen::RowVectorXf& pooled_video, const TaxonomyDictionary& dict,
                            int kappa) {
    if (!dict.has_embeddings())
        throw std::invalid_argument("select_top_k: dictionary has no embeddings");
    dict.validate();
    if (kappa < 1 || kappa > int(dict.entities.size()) || kappa > int(dict.activities.size()))
        throw std::invalid_argument("select_top_k: kappa exceeds dictionary size");
    if (pooled_video.size() != dict.entity_embeddings.cols())
        throw std::invalid_argument("select_top_k: dim mismatch");

    Eigen::RowVectorXf v = pooled_video;
    const float n = v.norm();
    if (n > 1e-12f) v /= n;

    // dictionary rows are unit-norm, so cosine is a plain dot product
    const Eigen::VectorXf ent_scores = dict.entity_embeddings * v.transpose();
    const Eigen::VectorXf act_scores = dict.activity_embeddings * v.transpose();

    SceneSelection sel;
    sel.entity_ids = top_k_indices(ent_scores, kappa);
    sel.activity_ids = top_k_indices(act_scores, kappa);
    sel.entity_embeddings.resize(kappa, dict.entity_embeddings.cols());
    sel.activity_embeddings.resize(kappa, dict.activity_embeddings.cols());
    for (int i = 0; i < kappa; ++i) {
        sel.entity_embeddings.row(i) = dict.entity_embeddings.row(sel.entity_ids[size_t(i)]);
        sel.activity_embeddings.row(i) = dict.activity_embeddings.row(sel.activity_ids[size_t(i)]);
        sel.entity_scores.push_back(ent_scores(sel.entity_ids[size_t(i)]));
        sel.activity_scores.push_back(act_scores(sel.activity_ids[size_t(i)]));
    }
    return sel;
}

float balance_coefficient(const MatrixF& activities, const MatrixF& entities) {
    if (activities.rows() != entities.rows() || activities.cols() != entities.cols())
        throw std::invalid_argument("balance_coefficient: kappa mismatch between inputs");
    if (activities.rows() < 1) throw std::invalid_argument("balance_coefficient: empty input");
    check_unit_rows(activities, "balance_coefficient activities");
    check_unit_rows(entities, "balance_coefficient entities");

    const MatrixF cos = activities * entities.transpose();  // kappa x kappa
    double acc = 0.0;
    for (Eigen::Index l = 0; l < cos.rows(); ++l) acc += double(cos.row(l).maxCoeff());
    return float(1.0 - acc / double(cos.rows()));
}

SceneElementEmbedding aggregate(const MatrixF& activities, const MatrixF& entities, float g) {
    if (activities.rows() != entities.rows() || activities.cols() != entities.cols())
        throw std::invalid_argument("aggregate: shape mismatch");
    SceneElementEmbedding out;
    out.c = activities + g * entities;
    out.g = g;
    if (!out.c.allFinite()) throw std::runtime_error("aggregate: non-finite result");
    return out;
}

void save_selection_cache(const std::vector<SelectionCacheEntry>& entries,
                          const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("selection cache: cannot write " + path);
    for (const auto& e : entries) {
        json j;
        j["id"] = e.id;
        j["entity_ids"] = e.entity_ids;
        j["activity_ids"] = e.activity_ids;
        j["g"] = e.g;
        os << j.dump() << '\n';
    }
}

std::vector<SelectionCacheEntry> load_selection_cache(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("selection cache: cannot open " + path);
    std::vector<SelectionCacheEntry> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        SelectionCacheEntry e;
        e.id = j.at("id").get<std::string>();
        e.entity_ids = j.at("entity_ids").get<std::vector<int>>();
        e.activity_ids = j.at("activity_ids").get<std::vector<int>>();
        e.g = j.at("g").get<float>();
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace tvrd::scene
