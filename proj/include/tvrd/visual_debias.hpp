#pragma once

#include <vector>

#include "tvrd/model.hpp"

namespace tvrd::vdebias {

template <class S>
struct FusedVisual {
    ad::Var vhat;             // n_f x d
    ad::Mat<S> attention;     // n_f x kappa, rows sum to 1 (diagnostic)
};

// Scaled dot-product cross-attention from frame embeddings to scene-element
// embeddings: q from frames, k and values from elements. With `residual` the
// attention output augments the frames; without it the output is the bare
// attention mix over linear(c).
template <class S>
FusedVisual<S> cross_attention_fuse(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, ad::Var frames,
                                    const MatrixF& elements, bool residual) {
    if (elements.rows() < 1) throw std::invalid_argument("cross_attention_fuse: kappa must be >= 1");
    const Eigen::Index d = tp.val(frames).cols();
    if (elements.cols() != d) throw std::invalid_argument("cross_attention_fuse: dim mismatch");

    ad::Var c = tp.constant(elements.template cast<S>());
    ad::Var q = nn::linear(tp, pv, "fuse.q", frames);
    ad::Var k = nn::linear(tp, pv, "fuse.k", c);
    ad::Var v = nn::linear(tp, pv, "fuse.v", c);
    ad::Var scores = tp.scale(tp.matmul_nt(q, k), S(1) / S(std::sqrt(double(d))));
    ad::Var probs = tp.row_softmax(scores);
    ad::Var mixed = tp.matmul(probs, v);

    FusedVisual<S> out;
    out.vhat = residual ? tp.add(frames, mixed) : mixed;
    out.attention = tp.val(probs);
    return out;
}

template <class S>
struct TokenLoss {
    ad::Var loss;                 // 1x1
    std::vector<S> token_logprobs;  // one per predicted target, in order
};

// Teacher-forced autoregressive decoding over the caption, cross-attending to
// `memory` at every decoder block. Targets are all non-PAD tokens after BOS.
template <class S>
TokenLoss<S> decode_loss(ad::Tape<S>& tp, const nn::ParamVars<S>& pv, const model::ModelConfig& cfg,
                         const std::string& prefix, ad::Var memory, const ad::MaskVec* memory_mask,
                         const Caption& caption, bool mean_reduce) {
    const int len = caption.length();
    if (len < 2)
        throw std::invalid_argument("decode_loss: caption has zero non-PAD targets");
    const int steps = len - 1;

    std::vector<int> inputs(caption.token_ids.begin(), caption.token_ids.begin() + steps);
    std::vector<int> targets(caption.token_ids.begin() + 1, caption.token_ids.begin() + 1 + steps);

    ad::Var x = tp.gather_rows(pv.at("tok_emb"), inputs);
    x = tp.add(x, tp.slice_rows(pv.at(prefix + ".pos"), 0, steps));
    for (int b = 0; b < cfg.m_decoder; ++b)
        x = nn::decoder_block(tp, pv, prefix + ".b" + std::to_string(b), x, memory, cfg.heads,
                              memory_mask, cfg.act);
    x = nn::layer_norm(tp, pv, prefix + ".lnf", x);

    ad::Var logits = tp.matmul_nt(x, pv.at("tok_emb"));  // tied output projection
    ad::MaskVec use(size_t(steps), 1);
    TokenLoss<S> out;
    out.loss = tp.cross_entropy_rows(logits, targets, use, mean_reduce);
    out.token_logprobs = tp.log_softmax_at(logits, targets);
    return out;
}

template <class S>
TokenLoss<S> caption_loss(ad::Tape<S>& tp, const nn::ParamVars<S>& pv,
                          const model::ModelConfig& cfg, ad::Var vhat, const Caption& caption) {
    return decode_loss(tp, pv, cfg, "cap", vhat, nullptr, caption, cfg.cap_loss_mean);
}

}  // namespace tvrd::vdebias
