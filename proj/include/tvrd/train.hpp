#pragma once

#include <string>
#include <vector>

#include "tvrd/config.hpp"
#include "tvrd/pipeline.hpp"

namespace tvrd::train {

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double infonce = 0.0;
    double cap = 0.0;
    double rec = 0.0;
    double kl = 0.0;
};

struct TrainInputs {
    RunConfig cfg;
    Corpus corpus;
    Vocabulary vocab;
    TaxonomyDictionary dict;  // phrases; embeddings are rebuilt on the frozen tower
};

struct TrainResult {
    nn::ParamStore<float> params;      // trained weights
    nn::ParamStore<float> sel_params;  // frozen init snapshot driving selection
    model::ModelConfig mcfg;
    TaxonomyDictionary dict;           // embedded with sel_params
    std::vector<EpochStats> curve;
    std::vector<scene::SelectionCacheEntry> selection_cache;
};

TrainResult run_training(const TrainInputs& inputs);

std::string loss_curve_csv(const std::vector<EpochStats>& curve);
std::string checkpoint_manifest(const RunConfig& cfg, const model::ModelConfig& mcfg,
                                const Vocabulary& vocab, const std::string& corpus_id,
                                const TaxonomyDictionary& dict);

// writes config.resolved.toml, loss_curve.csv, selection_cache.jsonl and
// checkpoint.bin under cfg.out_dir
void write_train_outputs(const TrainInputs& inputs, const TrainResult& result);

double lr_at(int64_t step, int64_t total_steps, double base_lr, double warmup_frac);

std::string format_double(double v);

}  // namespace tvrd::train
