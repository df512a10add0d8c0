#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tvrd/corpus.hpp"
#include "tvrd/nn.hpp"

namespace tvrd::model {

using nn::Activation;

struct ModelConfig {
    int d = 64;
    int n_t = 16;
    int n_f = 8;
    int d_raw = 32;
    int vocab = 0;
    int heads = 4;
    int blocks = 2;      // encoder depth, both towers
    int m_decoder = 2;   // captioning / reconstruction decoder depth
    int kappa = 20;
    int k_samples = 1;   // bias samples per caption during training
    Activation act = Activation::Gelu;
    bool cap_loss_mean = true;  // per-token mean; false = plain sum

    void validate() const {
        if (d < 2 || d % heads != 0) throw std::invalid_argument("model: bad d/heads");
        if (n_t < 3 || n_f < 1 || d_raw < 1 || vocab < 5)
            throw std::invalid_argument("model: bad dims");
        if (blocks < 1 || m_decoder < 1) throw std::invalid_argument("model: bad depth");
        if (kappa < 1) throw std::invalid_argument("model: kappa must be >= 1");
        if (k_samples < 1) throw std::invalid_argument("model: k_samples must be >= 1");
    }
};

// module switches mirroring the ablation grid
struct Toggles {
    bool entities = true;
    bool activities = true;
    bool captioning_head = true;
    bool textual_debias = true;
    bool coefficient_g = true;
    bool residual_fuse = true;

    bool fusion_enabled() const { return entities || activities; }
};

inline constexpr double kLogitScaleInit = 50.0;
inline constexpr double kLogitScaleMax = 100.0;

// ---- parameter construction -------------------------------------------------

template <class S>
void init_tensor(ad::Mat<S>& m, uint64_t seed, const std::string& name, S scale) {
    rng::Stream rs(rng::mix(seed, name));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = S(rs.normal()) * scale;
}

template <class S>
void add_linear(nn::ParamStore<S>& ps, uint64_t seed, const std::string& name, Eigen::Index din,
                Eigen::Index dout) {
    ps.add(name + ".w", din, dout);
    init_tensor(ps.value(name + ".w"), seed, name + ".w", S(0.02));
    ps.add(name + ".b", 1, dout);
}

template <class S>
void add_layer_norm(nn::ParamStore<S>& ps, const std::string& name, Eigen::Index d) {
    ps.add(name + ".g", 1, d);
    ps.value(name + ".g").setOnes();
    ps.add(name + ".b", 1, d);
}

template <class S>
void add_attention(nn::ParamStore<S>& ps, uint64_t seed, const std::string& prefix,
                   Eigen::Index d) {
    for (const char* p : {".q", ".k", ".v", ".o"}) add_linear(ps, seed, prefix + p, d, d);
}

template <class S>
void add_encoder_block(nn::ParamStore<S>& ps, uint64_t seed, const std::string& prefix,
                       Eigen::Index d) {
    add_layer_norm(ps, prefix + ".ln1", d);
    add_attention(ps, seed, prefix + ".attn", d);
    add_layer_norm(ps, prefix + ".ln2", d);
    add_linear(ps, seed, prefix + ".mlp.fc1", d, 4 * d);
    add_linear(ps, seed, prefix + ".mlp.fc2", 4 * d, d);
}

template <class S>
void add_decoder_block(nn::ParamStore<S>& ps, uint64_t seed, const std::string& prefix,
                       Eigen::Index d) {
    add_layer_norm(ps, prefix + ".ln1", d);
    add_attention(ps, seed, prefix + ".sattn", d);
    add_layer_norm(ps, prefix + ".ln2", d);
    add_attention(ps, seed, prefix + ".xattn", d);
    add_layer_norm(ps, prefix + ".ln3", d);
    add_linear(ps, seed, prefix + ".mlp.fc1", d, 4 * d);
    add_linear(ps, seed, prefix + ".mlp.fc2", 4 * d, d);
}

template <class S>
nn::ParamStore<S> build_parameters(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    nn::ParamStore<S> ps;
    const Eigen::Index d = cfg.d;

    ps.add("tok_emb", cfg.vocab, d);
    init_tensor(ps.value("tok_emb"), seed, "tok_emb", S(0.02));

    ps.add("text.cls", 1, d);
    init_tensor(ps.value("text.cls"), seed, "text.cls", S(0.02));
    ps.add("text.pos", cfg.n_t + 1, d);
    init_tensor(ps.value("text.pos"), seed, "text.pos", S(0.02));
    for (int b = 0; b < cfg.blocks; ++b)
        add_encoder_block(ps, seed, "text.b" + std::to_string(b), d);
    add_layer_norm(ps, "text.lnf", d);

    add_linear(ps, seed, "video.in", cfg.d_raw, d);
    ps.add("video.pos", cfg.n_f, d);
    init_tensor(ps.value("video.pos"), seed, "video.pos", S(0.02));
    for (int b = 0; b < cfg.blocks; ++b)
        add_encoder_block(ps, seed, "video.b" + std::to_string(b), d);
    add_layer_norm(ps, "video.lnf", d);

    // scene-element fusion projections (no output projection: attention rows
    // mix value rows directly)
    add_linear(ps, seed, "fuse.q", d, d);
    add_linear(ps, seed, "fuse.k", d, d);
    add_linear(ps, seed, "fuse.v", d, d);

    add_linear(ps, seed, "content", d, d);
    add_linear(ps, seed, "bias_mu", d, d);
    add_linear(ps, seed, "bias_lv", d, d);

    ps.add("cap.pos", cfg.n_t, d);
    init_tensor(ps.value("cap.pos"), seed, "cap.pos", S(0.02));
    for (int b = 0; b < cfg.m_decoder; ++b)
        add_decoder_block(ps, seed, "cap.b" + std::to_string(b), d);
    add_layer_norm(ps, "cap.lnf", d);

    ps.add("rec.pos", cfg.n_t, d);
    init_tensor(ps.value("rec.pos"), seed, "rec.pos", S(0.02));
    for (int b = 0; b < cfg.m_decoder; ++b)
        add_decoder_block(ps, seed, "rec.b" + std::to_string(b), d);
    add_layer_norm(ps, "rec.lnf", d);

    add_linear(ps, seed, "wti_t.fc1", d, d);
    add_linear(ps, seed, "wti_t.fc2", d, 1);
    add_linear(ps, seed, "wti_v.fc1", d, d);
    add_linear(ps, seed, "wti_v.fc2", d, 1);

    ps.add("logit_scale", 1, 1);
    ps.value("logit_scale")(0, 0) = S(std::log(kLogitScaleInit));

    return ps;
}

// learnable scale, exp of the clamped log so it stays within [1, max]
template <class S>
ad::Var logit_scale(ad::Tape<S>& tp, const nn::ParamVars<S>& pv) {
    return tp.exp_(tp.clamp(pv.at("logit_scale"), S(0), S(std::log(kLogitScaleMax))));
}

// ---- encoders ------------------------------------------------------------------

template <class S>
struct EncodedText {
    ad::Var tokens;  // n_t x d, PAD rows zeroed
    ad::Var cls;     // 1 x d
    ad::MaskVec mask;  // length n_t
};

template <class S>
EncodedText<S> encode_text(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, const ModelConfig& cfg,
                           const Caption& caption) {
    if (int(caption.token_ids.size()) != cfg.n_t)
        throw std::invalid_argument("encode_text: caption length != n_t");
    for (int id : caption.token_ids)
        if (id < 0 || id >= cfg.vocab)
            throw std::out_of_range("encode_text: token id outside vocabulary");

    ad::Var emb = tp.gather_rows(pv.at("tok_emb"), caption.token_ids);
    ad::Var x = tp.vcat(pv.at("text.cls"), emb);  // CLS sits at row 0
    x = tp.add(x, pv.at("text.pos"));

    ad::MaskVec key_mask(size_t(cfg.n_t) + 1, 0);
    key_mask[0] = 1;
    for (int i = 0; i < cfg.n_t; ++i) key_mask[size_t(i) + 1] = caption.attention_mask[size_t(i)];

    for (int b = 0; b < cfg.blocks; ++b)
        x = nn::encoder_block(tp, pv, "text.b" + std::to_string(b), x, cfg.heads, &key_mask,
                              cfg.act);
    x = nn::layer_norm(tp, pv, "text.lnf", x);

    EncodedText<S> out;
    out.cls = tp.slice_rows(x, 0, 1);
    ad::Var toks = tp.slice_rows(x, 1, cfg.n_t);
    ad::Mat<S> maskcol(cfg.n_t, 1);
    for (int i = 0; i < cfg.n_t; ++i) maskcol(i, 0) = S(caption.attention_mask[size_t(i)]);
    out.tokens = tp.scale_rows(toks, tp.constant(maskcol));
    out.mask = caption.attention_mask;
    return out;
}

template <class S>
ad::Var encode_video(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, const ModelConfig& cfg,
                     const VideoClip& clip) {
    if (clip.frames.rows() != cfg.n_f || clip.frames.cols() != cfg.d_raw)
        throw std::invalid_argument("encode_video: clip shape mismatch");
    if (!clip.frames.allFinite()) throw std::invalid_argument("encode_video: non-finite frames");
    ad::Var x = tp.constant(clip.frames.template cast<S>());
    x = nn::linear(tp, pv, "video.in", x);
    x = tp.add(x, pv.at("video.pos"));
    for (int b = 0; b < cfg.blocks; ++b)
        x = nn::encoder_block(tp, pv, "video.b" + std::to_string(b), x, cfg.heads, nullptr,
                              cfg.act);
    return nn::layer_norm(tp, pv, "video.lnf", x);
}

template <class S>
ad::Var mean_pool(ad::Tape<S>& tp, ad::Var frames) {
    const Eigen::Index n = tp.val(frames).rows();
    if (n < 1) throw std::invalid_argument("mean_pool: empty input");
    return tp.scale(tp.colwise_sum(frames), S(1) / S(n));
}

// ---- checkpoint container ---------------------------------------------------

struct CheckpointTensor {
    std::string name;
    MatrixF value;
};

// Binary container: magic "TVRDCKPT", u32 version, u64 manifest length,
// manifest JSON, u32 tensor count, then per tensor: name, dtype "f32",
// u32 rows, u32 cols, little-endian payload.
void save_checkpoint(const std::string& path, const std::string& manifest_json,
                     const std::vector<CheckpointTensor>& tensors);
std::pair<std::string, std::vector<CheckpointTensor>> load_checkpoint(const std::string& path);

template <class S>
std::vector<CheckpointTensor> store_tensors(const nn::ParamStore<S>& ps,
                                            const std::string& prefix) {
    std::vector<CheckpointTensor> out;
    out.reserve(ps.size());
    for (const auto& e : ps.entries())
        out.push_back({prefix + e.name, e.value.template cast<float>()});
    return out;
}

template <class S>
void load_store_tensors(nn::ParamStore<S>& ps, const std::vector<CheckpointTensor>& tensors,
                        const std::string& prefix) {
    size_t found = 0;
    for (const auto& t : tensors) {
        if (t.name.rfind(prefix, 0) != 0) continue;
        const std::string name = t.name.substr(prefix.size());
        auto& e = ps.at(name);
        if (e.value.rows() != t.value.rows() || e.value.cols() != t.value.cols())
            throw std::runtime_error("checkpoint: shape mismatch for " + t.name);
        e.value = t.value.template cast<S>();
        ++found;
    }
    if (found != ps.size())
        throw std::runtime_error("checkpoint: missing tensors under prefix " + prefix);
}

}  // namespace tvrd::model
