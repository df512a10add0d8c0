#include <cmath>

#include "doctest.h"
#include "tvrd/rng.hpp"
#include "tvrd/textual_debias.hpp"

using namespace tvrd;
using model::ModelConfig;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d = 8;
    cfg.n_t = 6;
    cfg.n_f = 3;
    cfg.d_raw = 5;
    cfg.vocab = 12;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.m_decoder = 1;
    return cfg;
}

Caption make_caption(const std::vector<int>& words, int n_t) {
    Caption c;
    c.token_ids.assign(size_t(n_t), Vocabulary::kPad);
    c.attention_mask.assign(size_t(n_t), 0);
    c.token_ids[0] = Vocabulary::kBos;
    size_t p = 1;
    for (int w : words) c.token_ids[p++] = w;
    c.token_ids[p++] = Vocabulary::kEos;
    for (size_t i = 0; i < p; ++i) c.attention_mask[i] = 1;
    return c;
}

tdebias::GaussianPosterior<double> make_posterior(ad::Tape<double>& tp,
                                                  const Eigen::RowVectorXd& mu,
                                                  const Eigen::RowVectorXd& lv) {
    tdebias::GaussianPosterior<double> p;
    p.mu = tp.leaf(ad::Mat<double>(mu), true);
    p.log_var = tp.leaf(ad::Mat<double>(lv), true);
    return p;
}

}  // namespace

TEST_CASE("reparameterize worked cases") {
    ad::Tape<double> tp;
    {
        Eigen::RowVectorXd mu(2), lv(2), eps(2);
        mu << 3.0, -1.0;
        lv << 0.4, 1.2;
        eps << 0.0, 0.0;
        auto post = make_posterior(tp, mu, lv);
        ad::Var out = tdebias::reparameterize(tp, post, tp.constant(ad::Mat<double>(eps)));
        CHECK((Eigen::RowVectorXd(tp.val(out)) - mu).cwiseAbs().maxCoeff() == 0.0);
    }
    {
        Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(3), lv = Eigen::RowVectorXd::Zero(3);
        Eigen::RowVectorXd eps(3);
        eps << 1.0, 0.0, 0.0;
        auto post = make_posterior(tp, mu, lv);
        ad::Var out = tdebias::reparameterize(tp, post, tp.constant(ad::Mat<double>(eps)));
        CHECK(tp.val(out)(0, 0) == 1.0);
        CHECK(tp.val(out)(0, 1) == 0.0);
    }
    {
        // mu=[1,2], log_var=[0, ln 4], eps=[1,-1]: sigma=[1,2], out=[2,0]
        Eigen::RowVectorXd mu(2), lv(2), eps(2);
        mu << 1.0, 2.0;
        lv << 0.0, std::log(4.0);
        eps << 1.0, -1.0;
        auto post = make_posterior(tp, mu, lv);
        ad::Var out = tdebias::reparameterize(tp, post, tp.constant(ad::Mat<double>(eps)));
        CHECK(tp.val(out)(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(tp.val(out)(0, 1) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    }
}

TEST_CASE("kl closed-form cases") {
    ad::Tape<double> tp;
    {
        auto post = make_posterior(tp, Eigen::RowVectorXd::Zero(4), Eigen::RowVectorXd::Zero(4));
        CHECK(tp.val(tdebias::kl_loss(tp, post))(0, 0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    }
    {
        Eigen::RowVectorXd mu(1), lv(1);
        mu << 1.0;
        lv << 0.0;
        auto post = make_posterior(tp, mu, lv);
        CHECK(tp.val(tdebias::kl_loss(tp, post))(0, 0) == doctest::Approx(0.5).epsilon(1e-9));
    }
}

TEST_CASE("kl is non-negative on random posteriors") {
    rng::Stream rs(3);
    for (int trial = 0; trial < 200; ++trial) {
        ad::Tape<double> tp;
        const int d = 1 + int(rs.uniform_int(6));
        Eigen::RowVectorXd mu(d), lv(d);
        for (int i = 0; i < d; ++i) {
            mu(i) = rs.normal() * 2.0;
            lv(i) = rs.normal();
        }
        auto post = make_posterior(tp, mu, lv);
        CHECK(tp.val(tdebias::kl_loss(tp, post))(0, 0) >= -1e-12);
    }
}

TEST_CASE("kl agrees with a Monte-Carlo estimate within 1 percent") {
    ad::Tape<double> tp;
    Eigen::RowVectorXd mu(3), lv(3);
    mu << 0.8, -1.1, 0.4;
    lv << 0.3, -0.5, 0.9;
    auto post = make_posterior(tp, mu, lv);
    const double closed = tp.val(tdebias::kl_loss(tp, post))(0, 0);

    // E[log q(x) - log p(x)] with x = mu + sigma*eps reduces to
    // 0.5 * sum(x^2 - eps^2 - log sigma^2) per sample
    rng::Stream rs(12345);
    const int n = 100000;
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
        double term = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double eps = rs.normal();
            const double sigma = std::exp(0.5 * lv(i));
            const double x = mu(i) + sigma * eps;
            term += x * x - eps * eps - lv(i);
        }
        acc += 0.5 * term;
    }
    const double mc = acc / n;
    CHECK(std::abs(mc - closed) / closed < 0.01);
}

TEST_CASE("kl gradients match finite differences") {
    Eigen::RowVectorXd mu(4), lv(4);
    mu << 0.5, -0.8, 1.2, 0.0;
    lv << 0.2, -0.4, 0.0, 0.7;
    auto loss_at = [&](const Eigen::RowVectorXd& m, const Eigen::RowVectorXd& l,
                       Eigen::RowVectorXd* gm, Eigen::RowVectorXd* gl) {
        ad::Tape<double> tp;
        tdebias::GaussianPosterior<double> p;
        p.mu = tp.leaf(ad::Mat<double>(m), true);
        p.log_var = tp.leaf(ad::Mat<double>(l), true);
        ad::Var kl = tdebias::kl_loss(tp, p);
        if (gm) {
            tp.backward(kl);
            *gm = Eigen::RowVectorXd(tp.grad(p.mu));
            *gl = Eigen::RowVectorXd(tp.grad(p.log_var));
        }
        return tp.val(kl)(0, 0);
    };
    Eigen::RowVectorXd gm, gl;
    loss_at(mu, lv, &gm, &gl);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        Eigen::RowVectorXd mp = mu, mm = mu;
        mp(i) += h;
        mm(i) -= h;
        const double fd = (loss_at(mp, lv, nullptr, nullptr) - loss_at(mm, lv, nullptr, nullptr)) / (2 * h);
        CHECK(std::abs(gm(i) - fd) / std::max({std::abs(fd), std::abs(gm(i)), 1e-6}) < 1e-4);
        Eigen::RowVectorXd lp = lv, lm = lv;
        lp(i) += h;
        lm(i) -= h;
        const double fdl = (loss_at(mu, lp, nullptr, nullptr) - loss_at(mu, lm, nullptr, nullptr)) / (2 * h);
        CHECK(std::abs(gl(i) - fdl) / std::max({std::abs(fdl), std::abs(gl(i)), 1e-6}) < 1e-4);
    }
}

TEST_CASE("reparameterized sample statistics match mu and sigma^2") {
    const double mu = 0.7, lv = -0.6;
    const double sigma2 = std::exp(lv);
    rng::Stream rs(777);
    const int n = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = mu + std::exp(0.5 * lv) * rs.normal();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double se_mean = std::sqrt(sigma2 / n);
    const double se_var = sigma2 * std::sqrt(2.0 / (n - 1));
    CHECK(std::abs(mean - mu) < 3.0 * se_mean);
    CHECK(std::abs(var - sigma2) < 3.0 * se_var);
}

TEST_CASE("decompose shapes, determinism, and z consistency") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 40);
    const Caption cap = make_caption({5, 6, 7}, cfg.n_t);

    auto eps_of = [&](uint64_t seed) {
        return [seed, &cfg](int k) {
            rng::Stream rs(rng::mix(seed, uint64_t(k)));
            Eigen::RowVectorXd e(cfg.d);
            for (int i = 0; i < cfg.d; ++i) e(i) = rs.normal();
            return e;
        };
    };

    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    auto enc = model::encode_text(tp, pv, cfg, cap);
    auto d1 = tdebias::decompose(tp, pv, enc, 3, eps_of(9));
    auto d2 = tdebias::decompose(tp, pv, enc, 3, eps_of(9));

    REQUIRE(d1.z.size() == 3);
    CHECK(tp.val(d1.content).rows() == cfg.n_t);
    CHECK(tp.val(d1.posterior.mu).cols() == cfg.d);

    // same seeded provider: samples reproduce bitwise
    for (int k = 0; k < 3; ++k)
        CHECK((tp.val(d1.bias_samples[size_t(k)]) - tp.val(d2.bias_samples[size_t(k)]))
                  .cwiseAbs()
                  .maxCoeff() == 0.0);

    // z_k is exactly content + broadcast(bias_k): recomputing the same sum
    // reproduces identical bits
    for (int k = 0; k < 3; ++k) {
        ad::Mat<double> expected = tp.val(d1.content);
        for (Eigen::Index r = 0; r < expected.rows(); ++r)
            expected.row(r) += tp.val(d1.bias_samples[size_t(k)]).row(0);
        CHECK((expected - tp.val(d1.z[size_t(k)])).cwiseAbs().maxCoeff() == 0.0);
    }

    // PAD rows of content are zero
    for (int i = 0; i < cfg.n_t; ++i)
        if (!cap.attention_mask[size_t(i)])
            CHECK(tp.val(d1.content).row(i).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decompose with zero variance collapses samples to mu") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 41);
    // forcing the log-variance head to a huge negative bias puts sigma ~ 0
    ps.value("bias_lv.w").setZero();
    ps.value("bias_lv.b").setConstant(-200.0);
    const Caption cap = make_caption({5}, cfg.n_t);

    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    auto enc = model::encode_text(tp, pv, cfg, cap);
    auto dec = tdebias::decompose(tp, pv, enc, 2, [&](int k) {
        Eigen::RowVectorXd e(cfg.d);
        e.setConstant(k == 0 ? 3.0 : -7.0);  // arbitrary eps
        return e;
    });
    for (const auto& s : dec.bias_samples)
        CHECK((tp.val(s) - tp.val(dec.posterior.mu)).cwiseAbs().maxCoeff() < 1e-40);
}

TEST_CASE("reconstruction loss: uniform logits and K-sample averaging") {
    ModelConfig cfg = tiny_config();
    cfg.vocab = 50;
    auto ps = model::build_parameters<double>(cfg, 42);
    for (auto& e : ps.entries()) e.value.setZero();
    const Caption cap = make_caption({5, 6}, cfg.n_t);

    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    auto enc = model::encode_text(tp, pv, cfg, cap);
    auto dec = tdebias::decompose(tp, pv, enc, 2, [&](int) {
        return Eigen::RowVectorXd::Zero(cfg.d).eval();
    });
    ad::Var rec = tdebias::reconstruction_loss(tp, pv, cfg, dec, cap);
    CHECK(tp.val(rec)(0, 0) == doctest::Approx(std::log(50.0)).epsilon(1e-9));

    // identical samples: K=2 equals K=1
    auto dec1 = tdebias::decompose(tp, pv, enc, 1, [&](int) {
        return Eigen::RowVectorXd::Zero(cfg.d).eval();
    });
    ad::Var rec1 = tdebias::reconstruction_loss(tp, pv, cfg, dec1, cap);
    CHECK(tp.val(rec)(0, 0) == doctest::Approx(tp.val(rec1)(0, 0)).epsilon(1e-12));
}

TEST_CASE("vae loss is the plain sum of parts") {
    ad::Tape<double> tp;
    ad::Var a = tp.scalar(0.0), b = tp.scalar(0.0);
    CHECK(tp.val(tdebias::vae_loss(tp, a, b))(0, 0) == 0.0);
    ad::Var r = tp.scalar(3.9), k = tp.scalar(0.5);
    CHECK(tp.val(tdebias::vae_loss(tp, r, k))(0, 0) == doctest::Approx(4.4).epsilon(1e-12));
    CHECK(tp.val(tdebias::vae_loss(tp, r, k))(0, 0) >= 3.9);
}

TEST_CASE("mix_bias worked cases") {
    MatrixF content(1, 2);
    content << 0.0f, 2.0f;
    Eigen::RowVectorXf bias(2);
    bias << 1.0f, 0.0f;
    MatrixF m0 = tdebias::mix_bias(content, bias, 0.0f);
    CHECK((m0 - content).cwiseAbs().maxCoeff() == 0.0f);
    MatrixF mh = tdebias::mix_bias(content, bias, 0.5f);
    CHECK(mh(0, 0) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(mh(0, 1) == doctest::Approx(2.0).epsilon(1e-7));
    // alpha = 1 equals the single-sample latent built from the same bias row
    MatrixF m1 = tdebias::mix_bias(content, bias, 1.0f);
    MatrixF z = content;
    z.rowwise() += bias;
    CHECK((m1 - z).cwiseAbs().maxCoeff() == 0.0f);
}
