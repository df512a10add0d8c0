#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tvrd/metrics.hpp"
#include "tvrd/pipeline.hpp"
#include "tvrd/train.hpp"

namespace tvrd::eval {

enum class FeatureSource { Content, Bias, Mixed };

std::string feature_source_name(FeatureSource s);
FeatureSource parse_feature_source(const std::string& name);

struct EvalRequest {
    FeatureSource source = FeatureSource::Content;
    std::optional<double> alpha;  // required iff source == Mixed
    bool ood = false;
    int max_items = 0;  // 0 = whole eval split
};

struct EvalReport {
    metrics::RetrievalMetrics t2v;
    metrics::RetrievalMetrics v2t;
    std::string config_hash;
    std::string corpus_id;
    std::string feature_source;
    std::optional<double> alpha;
    bool ood = false;
    int gallery_size = 0;
};

// a checkpoint plus everything evaluation derives from it; the manifest keeps
// the vocabulary and dictionary phrases, so scoring needs no extra files
struct Snapshot {
    nn::ParamStore<float> params;
    nn::ParamStore<float> sel_params;
    model::ModelConfig mcfg;
    model::Toggles toggles;
    Vocabulary vocab;
    TaxonomyDictionary dict;  // embedded with sel_params on first use
    std::string config_hash;
    std::string vocab_sha256;
};

Snapshot snapshot_from_checkpoint(const std::string& path);
Snapshot snapshot_from_training(const train::TrainResult& result, const RunConfig& cfg,
                                const Vocabulary& vocab);

EvalReport evaluate(Snapshot& snap, const Corpus& corpus, const EvalRequest& request);

// standard evaluation of a checkpoint trained elsewhere; rejects corpora with
// a different vocabulary or shape
EvalReport ood_evaluate(Snapshot& snap, const Corpus& corpus_b, int max_items);

std::string report_json(const EvalReport& report);

struct SweepRow {
    std::string axis;
    std::string value;
    EvalReport report;
};

std::string sweep_csv(const std::vector<SweepRow>& rows);

std::vector<SweepRow> sweep_alpha(Snapshot& snap, const Corpus& corpus,
                                  const std::vector<double>& alphas, int max_items);

model::Toggles toggles_preset(const std::string& name);

// config sweeps retrain per value; the returned reports use content features
std::vector<SweepRow> sweep_kappa(const train::TrainInputs& base, const std::vector<int>& kappas);
std::vector<SweepRow> sweep_g_toggle(const train::TrainInputs& base);
std::vector<SweepRow> sweep_modules(const train::TrainInputs& base,
                                    const std::vector<std::string>& presets);

// per-pair content CLS and posterior mean, for external embedding analysis
struct EmbeddingDump {
    std::vector<std::string> ids;
    MatrixF content_cls;
    MatrixF bias_mu;
};
EmbeddingDump dump_embeddings(Snapshot& snap, const Corpus& corpus);

}  // namespace tvrd::eval
