#pragma once

#include <vector>

#include "tvrd/model.hpp"

namespace tvrd::matching {

struct LossWeights {
    double lambda_cap = 0.3;
    double lambda_rec = 0.5;
    double lambda_kl = 1e-4;

    void validate() const {
        if (lambda_cap < 0 || lambda_rec < 0 || lambda_kl < 0)
            throw std::invalid_argument("loss weights must be non-negative");
    }
};

// Per-item halves of the weighted token interaction score. Gates and row
// normalization depend only on the item itself, so batch code prepares each
// side once and pairs them for the full similarity matrix.
template <class S>
struct TextSide {
    ad::Var feats_norm;  // n_t x d, unit rows
    ad::Var weights;     // n_t x 1, softmax over non-masked tokens
    ad::MaskVec mask;
};

template <class S>
struct VideoSide {
    ad::Var feats_norm;  // n_f x d
    ad::Var weights;     // n_f x 1
};

template <class S>
ad::Var gate_weights(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, const std::string& prefix,
                     ad::Var feats, const ad::MaskVec* mask, nn::Activation act) {
    ad::Var h = nn::activate(tp, nn::linear(tp, pv, prefix + ".fc1", feats), act);
    ad::Var logits = nn::linear(tp, pv, prefix + ".fc2", h);  // n x 1
    return tp.vec_softmax(logits, mask);
}

template <class S>
TextSide<S> prepare_text_side(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, ad::Var token_feats,
                              const ad::MaskVec& mask, nn::Activation act) {
    bool any = false;
    for (uint8_t m : mask) any = any || m;
    if (!any) throw std::invalid_argument("wti: all tokens masked");
    TextSide<S> side;
    side.feats_norm = tp.l2normalize_rows(token_feats);
    side.weights = gate_weights(tp, pv, "wti_t", token_feats, &mask, act);
    side.mask = mask;
    return side;
}

template <class S>
VideoSide<S> prepare_video_side(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, ad::Var frame_feats,
                                nn::Activation act) {
    VideoSide<S> side;
    side.feats_norm = tp.l2normalize_rows(frame_feats);
    side.weights = gate_weights(tp, pv, "wti_v", frame_feats, nullptr, act);
    return side;
}

// s = 0.5 * sum_i w_t[i] * max_j cos(t_i, v_j) + 0.5 * sum_j w_v[j] * max_i cos(t_i, v_j)
template <class S>
ad::Var wti_pair(ad::Tape<S>& tp, const TextSide<S>& text, const VideoSide<S>& video) {
    ad::Var cos = tp.matmul_nt(text.feats_norm, video.feats_norm);  // n_t x n_f
    ad::Var text_max = tp.rowwise_max(cos);                          // over frames
    ad::Var video_max = tp.rowwise_max(tp.transpose(cos), &text.mask);  // over real tokens
    ad::Var s = tp.add(tp.sum_all(tp.mul(text.weights, text_max)),
                       tp.sum_all(tp.mul(video.weights, video_max)));
    return tp.scale(s, S(0.5));
}

// single-pair entry point matching the module contract
template <class S>
ad::Var wti_similarity(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, ad::Var token_feats,
                       const ad::MaskVec& mask, ad::Var frame_feats, nn::Activation act) {
    auto t = prepare_text_side(tp, pv, token_feats, mask, act);
    auto v = prepare_video_side(tp, pv, frame_feats, act);
    return wti_pair(tp, t, v);
}

// S[i][j] = similarity of text query i against video j
template <class S>
ad::Var similarity_matrix(ad::Tape<S>& tp, const std::vector<TextSide<S>>& texts,
                          const std::vector<VideoSide<S>>& videos) {
    const Eigen::Index b = Eigen::Index(texts.size());
    if (b == 0 || videos.size() != texts.size())
        throw std::invalid_argument("similarity_matrix: need equal non-empty sides");
    std::vector<ad::Var> cells;
    cells.reserve(size_t(b * b));
    for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = 0; j < b; ++j)
            cells.push_back(wti_pair(tp, texts[size_t(i)], videos[size_t(j)]));
    return tp.pack_scalars(cells, b, b);
}

// symmetric cross entropy over S * tau with matching pairs on the diagonal
template <class S>
ad::Var infonce_loss(ad::Tape<S>& tp, ad::Var sim, ad::Var tau) {
    const Eigen::Index b = tp.val(sim).rows();
    if (b < 1 || tp.val(sim).cols() != b)
        throw std::invalid_argument("infonce_loss: similarity matrix must be square");
    if (!tp.val(sim).allFinite())
        throw std::invalid_argument("infonce_loss: non-finite similarity entries");
    if (!(tp.val(tau)(0, 0) > S(0))) throw std::invalid_argument("infonce_loss: tau must be > 0");
    ad::Var scaled = tp.mul_scalar(sim, tau);
    std::vector<int> diag(static_cast<size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) diag[size_t(i)] = int(i);
    ad::MaskVec use(static_cast<size_t>(b), 1);
    ad::Var t2v = tp.cross_entropy_rows(scaled, diag, use, true);
    ad::Var v2t = tp.cross_entropy_rows(tp.transpose(scaled), diag, use, true);
    return tp.scale(tp.add(t2v, v2t), S(0.5));
}

template <class S>
ad::Var total_loss(ad::Tape<S>& tp, ad::Var infonce, ad::Var cap, ad::Var rec, ad::Var kl,
                   const LossWeights& w) {
    w.validate();
    ad::Var out = infonce;
    out = tp.add(out, tp.scale(cap, S(w.lambda_cap)));
    out = tp.add(out, tp.scale(rec, S(w.lambda_rec)));
    out = tp.add(out, tp.scale(kl, S(w.lambda_kl)));
    return out;
}

// ---- plain (gradient-free) scoring for evaluation -------------------------------

struct PlainTextSide {
    MatrixF feats_norm;
    Eigen::VectorXf weights;
    std::vector<uint8_t> mask;
};

struct PlainVideoSide {
    MatrixF feats_norm;
    Eigen::VectorXf weights;
};

double wti_pair_plain(const PlainTextSide& text, const PlainVideoSide& video);

}  // namespace tvrd::matching
