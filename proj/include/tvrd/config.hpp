#pragma once

#include <cstdint>
#include <string>

#include "tvrd/corpus.hpp"
#include "tvrd/matching.hpp"
#include "tvrd/model.hpp"

namespace tvrd {

inline constexpr const char* kToolVersion = "tvrd 0.1.0";

// Resolved run configuration. The on-disk format is a flat TOML-like document
// of [section] blocks with key = value lines; unknown keys are rejected. Any
// key can be overridden through the environment as TVRD_<SECTION>__<KEY>.
struct RunConfig {
    std::string corpus_path;
    std::string vocab_path;
    std::string dict_path;
    std::string out_dir;

    int d = 64;
    int heads = 4;
    int blocks = 2;
    int m_decoder = 2;
    int kappa = 20;
    int k_samples = 1;
    std::string activation = "gelu";      // gelu | relu | tanh
    std::string cap_loss_reduction = "mean";   // mean | sum

    matching::LossWeights weights;

    int batch = 32;
    int epochs = 30;
    double lr = 1e-3;
    double warmup_frac = 0.1;
    double weight_decay = 0.01;
    uint64_t seed = 7;
    int eval_max_items = 200;  // 0 = use the whole eval split

    model::Toggles toggles;

    void validate() const;
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// canonical snapshot: fixed section/key order, round-trip parseable
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);  // 16-hex prefix of the snapshot digest

nn::Activation parse_activation(const std::string& name);
model::ModelConfig to_model_config(const RunConfig& cfg, const Corpus& corpus, int vocab_size);

}  // namespace tvrd
