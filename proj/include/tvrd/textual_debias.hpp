#pragma once

#include <functional>
#include <vector>

#include "tvrd/model.hpp"
#include "tvrd/visual_debias.hpp"

namespace tvrd::tdebias {

template <class S>
struct GaussianPosterior {
    ad::Var mu;       // 1 x d
    ad::Var log_var;  // 1 x d
};

template <class S>
struct ContentBiasDecomposition {
    ad::Var content;      // n_t x d token-level, PAD rows zeroed
    ad::Var content_cls;  // 1 x d pooled content
    GaussianPosterior<S> posterior;
    std::vector<ad::Var> bias_samples;  // K entries, 1 x d each
    std::vector<ad::Var> z;             // K entries, n_t x d, z_k = content + bias_k
    ad::MaskVec mask;                   // caption mask
};

// bias = mu + exp(0.5 * log_var) * eps
template <class S>
ad::Var reparameterize(ad::Tape<S>& tp, const GaussianPosterior<S>& post, ad::Var eps) {
    return tp.add(post.mu, tp.mul(tp.exp_(tp.scale(post.log_var, S(0.5))), eps));
}

// eps_provider(k) must return a length-d standard normal draw (injected in
// tests, seeded per pair id in training)
template <class S>
ContentBiasDecomposition<S> decompose(ad::Tape<S>& tp, const nn::ParamVars<S>& pv,
                                      const model::EncodedText<S>& text, int k_samples,
                                      const std::function<Eigen::RowVectorXd(int)>& eps_provider) {
    if (k_samples < 1) throw std::invalid_argument("decompose: K must be >= 1");
    const Eigen::Index n_t = tp.val(text.tokens).rows();
    const Eigen::Index d = tp.val(text.tokens).cols();

    ContentBiasDecomposition<S> out;
    ad::Mat<S> maskcol(n_t, 1);
    for (Eigen::Index i = 0; i < n_t; ++i) maskcol(i, 0) = S(text.mask[size_t(i)]);
    out.content = tp.scale_rows(nn::linear(tp, pv, "content", text.tokens), tp.constant(maskcol));
    out.content_cls = nn::linear(tp, pv, "content", text.cls);
    out.posterior.mu = nn::linear(tp, pv, "bias_mu", text.cls);
    out.posterior.log_var = nn::linear(tp, pv, "bias_lv", text.cls);
    out.mask = text.mask;

    for (int k = 0; k < k_samples; ++k) {
        Eigen::RowVectorXd eps = eps_provider(k);
        if (eps.size() != d) throw std::invalid_argument("decompose: eps dim mismatch");
        ad::Mat<S> em = eps.template cast<S>();
        ad::Var sample = reparameterize(tp, out.posterior, tp.constant(em));
        out.bias_samples.push_back(sample);
        out.z.push_back(tp.add(out.content, tp.broadcast_row(sample, n_t)));
    }
    return out;
}

// closed-form KL of N(mu, diag(exp(log_var))) against N(0, I):
// 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
template <class S>
ad::Var kl_loss(ad::Tape<S>& tp, const GaussianPosterior<S>& post) {
    const Eigen::Index d = tp.val(post.mu).cols();
    ad::Var s = tp.add(tp.sum_all(tp.square(post.mu)), tp.sum_all(tp.exp_(post.log_var)));
    s = tp.sub(s, tp.add_const(tp.sum_all(post.log_var), S(d)));
    return tp.scale(s, S(0.5));
}

// negative log-likelihood of reconstructing the caption from z, averaged over
// the K samples
template <class S>
ad::Var reconstruction_loss(ad::Tape<S>& tp, const nn::ParamVars<S>& pv,
                            const model::ModelConfig& cfg,
                            const ContentBiasDecomposition<S>& decomp, const Caption& caption) {
    if (decomp.z.empty()) throw std::invalid_argument("reconstruction_loss: no z samples");
    ad::Var acc;
    for (size_t k = 0; k < decomp.z.size(); ++k) {
        auto tl = vdebias::decode_loss(tp, pv, cfg, "rec", decomp.z[k], &decomp.mask, caption,
                                       cfg.cap_loss_mean);
        acc = k == 0 ? tl.loss : tp.add(acc, tl.loss);
    }
    return tp.scale(acc, S(1) / S(decomp.z.size()));
}

template <class S>
ad::Var vae_loss(ad::Tape<S>& tp, ad::Var rec, ad::Var kl) {
    return tp.add(rec, kl);
}

// plain-arithmetic mix for evaluation sweeps: content + alpha * bias_row
inline MatrixF mix_bias(const MatrixF& content, const Eigen::RowVectorXf& bias_row, float alpha) {
    MatrixF out = content;
    out.rowwise() += alpha * bias_row;
    return out;
}

}  // namespace tvrd::tdebias
