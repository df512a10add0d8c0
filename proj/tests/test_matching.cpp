#include <cmath>

#include "doctest.h"
#include "tvrd/matching.hpp"
#include "tvrd/metrics.hpp"
#include "tvrd/rng.hpp"

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

ad::Mat<double> random_mat(Eigen::Index r, Eigen::Index c, uint64_t seed, double scale = 1.0) {
    rng::Stream rs(seed);
    ad::Mat<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rs.normal() * scale;
    return m;
}

// brute-force oracle for the WTI score given explicit weights
double wti_oracle(const Eigen::MatrixXd& t, const std::vector<uint8_t>& tmask,
                  const Eigen::VectorXd& tw, const Eigen::MatrixXd& v, const Eigen::VectorXd& vw) {
    Eigen::MatrixXd tn = t, vn = v;
    for (int r = 0; r < tn.rows(); ++r) tn.row(r) /= std::sqrt(tn.row(r).squaredNorm() + 1e-12);
    for (int r = 0; r < vn.rows(); ++r) vn.row(r) /= std::sqrt(vn.row(r).squaredNorm() + 1e-12);
    double text_term = 0.0;
    for (int i = 0; i < tn.rows(); ++i) {
        double best = -1e30;
        for (int j = 0; j < vn.rows(); ++j) best = std::max(best, tn.row(i).dot(vn.row(j)));
        text_term += tw(i) * best;
    }
    double video_term = 0.0;
    for (int j = 0; j < vn.rows(); ++j) {
        double best = -1e30;
        for (int i = 0; i < tn.rows(); ++i)
            if (tmask[size_t(i)]) best = std::max(best, tn.row(i).dot(vn.row(j)));
        video_term += vw(j) * best;
    }
    return 0.5 * (text_term + video_term);
}

}  // namespace

TEST_CASE("wti single token and frame reduces to the cosine") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 1);
    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    ad::Mat<double> t = random_mat(1, cfg.d, 2);
    ad::Mat<double> v = random_mat(1, cfg.d, 3);
    ad::MaskVec mask{1};
    ad::Var s = matching::wti_similarity(tp, pv, tp.constant(t), mask, tp.constant(v), cfg.act);
    const double cos = t.row(0).dot(v.row(0)) / (t.row(0).norm() * v.row(0).norm());
    CHECK(tp.val(s)(0, 0) == doctest::Approx(cos).epsilon(1e-9));
}

TEST_CASE("wti equals one when token rows permute frame rows") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 4);
    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    ad::Mat<double> v = random_mat(3, cfg.d, 5);
    ad::Mat<double> t(3, cfg.d);
    t.row(0) = v.row(2);
    t.row(1) = v.row(0);
    t.row(2) = v.row(1);
    ad::MaskVec mask{1, 1, 1};
    ad::Var s = matching::wti_similarity(tp, pv, tp.constant(t), mask, tp.constant(v), cfg.act);
    CHECK(tp.val(s)(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("wti stays within [-1, 1] and masked tokens are ignored") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 6);
    rng::Stream rs(7);
    for (int trial = 0; trial < 200; ++trial) {
        ad::Tape<double> tp;
        nn::ParamVars<double> pv(tp, ps, false);
        const int nt = 2 + int(rs.uniform_int(4));
        const int nf = 1 + int(rs.uniform_int(4));
        ad::Mat<double> t = random_mat(nt, cfg.d, rs.next_u64());
        ad::Mat<double> v = random_mat(nf, cfg.d, rs.next_u64());
        ad::MaskVec mask(size_t(nt), 1);
        mask[size_t(nt - 1)] = 0;  // one masked token with garbage features
        t.row(nt - 1).setConstant(1e6);
        ad::Var s = matching::wti_similarity(tp, pv, tp.constant(t), mask, tp.constant(v), cfg.act);
        const double val = tp.val(s)(0, 0);
        CHECK(val <= 1.0 + 1e-9);
        CHECK(val >= -1.0 - 1e-9);
    }
}

TEST_CASE("wti matches a brute-force oracle with the model's own gate weights") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 8);
    rng::Stream rs(9);
    for (int trial = 0; trial < 50; ++trial) {
        ad::Tape<double> tp;
        nn::ParamVars<double> pv(tp, ps, false);
        const int nt = 2 + int(rs.uniform_int(3));
        const int nf = 2 + int(rs.uniform_int(3));
        ad::Mat<double> t = random_mat(nt, cfg.d, rs.next_u64());
        ad::Mat<double> v = random_mat(nf, cfg.d, rs.next_u64());
        ad::MaskVec mask(size_t(nt), 1);

        auto ts = matching::prepare_text_side(tp, pv, tp.leaf(t, false), mask, cfg.act);
        auto vs = matching::prepare_video_side(tp, pv, tp.leaf(v, false), cfg.act);
        ad::Var s = matching::wti_pair(tp, ts, vs);

        const Eigen::VectorXd tw = tp.val(ts.weights).col(0);
        const Eigen::VectorXd vw = tp.val(vs.weights).col(0);
        CHECK(tp.val(s)(0, 0) ==
              doctest::Approx(wti_oracle(t, mask, tw, v, vw)).epsilon(1e-9));
        CHECK(tw.sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(vw.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("wti plain scorer agrees with the tape path") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 10);
    rng::Stream rs(11);
    for (int trial = 0; trial < 50; ++trial) {
        ad::Tape<double> tp;
        nn::ParamVars<double> pv(tp, ps, false);
        const int nt = 2 + int(rs.uniform_int(3));
        const int nf = 2 + int(rs.uniform_int(3));
        ad::Mat<double> t = random_mat(nt, cfg.d, rs.next_u64());
        ad::Mat<double> v = random_mat(nf, cfg.d, rs.next_u64());
        ad::MaskVec mask(size_t(nt), 1);
        if (nt > 2) mask[0] = 0;

        auto ts = matching::prepare_text_side(tp, pv, tp.leaf(t, false), mask, cfg.act);
        auto vs = matching::prepare_video_side(tp, pv, tp.leaf(v, false), cfg.act);
        ad::Var s = matching::wti_pair(tp, ts, vs);

        matching::PlainTextSide pts;
        pts.feats_norm = tp.val(ts.feats_norm).cast<float>();
        pts.weights = tp.val(ts.weights).col(0).cast<float>();
        pts.mask = mask;
        matching::PlainVideoSide pvs;
        pvs.feats_norm = tp.val(vs.feats_norm).cast<float>();
        pvs.weights = tp.val(vs.weights).col(0).cast<float>();
        CHECK(matching::wti_pair_plain(pts, pvs) ==
              doctest::Approx(tp.val(s)(0, 0)).epsilon(1e-5));
    }
}

TEST_CASE("wti rejects fully masked token sets") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 12);
    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    ad::Mat<double> t = random_mat(2, cfg.d, 13);
    ad::Mat<double> v = random_mat(2, cfg.d, 14);
    ad::MaskVec mask{0, 0};
    CHECK_THROWS(matching::wti_similarity(tp, pv, tp.constant(t), mask, tp.constant(v), cfg.act));
}

TEST_CASE("infonce worked cases") {
    ad::Tape<double> tp;
    {
        ad::Mat<double> s(1, 1);
        s << 0.73;
        ad::Var loss = matching::infonce_loss(tp, tp.leaf(s, false), tp.scalar(1.0));
        CHECK(tp.val(loss)(0, 0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
    }
    {
        ad::Mat<double> s = ad::Mat<double>::Constant(5, 5, 0.21);
        ad::Var loss = matching::infonce_loss(tp, tp.leaf(s, false), tp.scalar(3.0));
        CHECK(tp.val(loss)(0, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    }
    {
        ad::Mat<double> s(2, 2);
        s << 1, 0, 0, 1;
        ad::Var loss = matching::infonce_loss(tp, tp.leaf(s, false), tp.scalar(1.0));
        CHECK(tp.val(loss)(0, 0) == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)))
                                        .epsilon(1e-6));
        CHECK(tp.val(loss)(0, 0) == doctest::Approx(0.3132616875).epsilon(1e-6));
    }
}

TEST_CASE("infonce equals a from-scratch log-sum-exp oracle for small batches") {
    rng::Stream rs(15);
    for (int trial = 0; trial < 200; ++trial) {
        const int b = 1 + int(rs.uniform_int(4));
        ad::Mat<double> s = random_mat(b, b, rs.next_u64(), 2.0);
        const double tau = 0.5 + rs.uniform() * 10.0;
        ad::Tape<double> tp;
        ad::Var loss = matching::infonce_loss(tp, tp.leaf(s, false), tp.scalar(tau));

        double expect = 0.0;
        for (int i = 0; i < b; ++i) {
            double denom_row = 0.0, denom_col = 0.0;
            for (int j = 0; j < b; ++j) {
                denom_row += std::exp(s(i, j) * tau);
                denom_col += std::exp(s(j, i) * tau);
            }
            expect += -std::log(std::exp(s(i, i) * tau) / denom_row);
            expect += -std::log(std::exp(s(i, i) * tau) / denom_col);
        }
        expect /= 2.0 * b;
        CHECK(std::abs(tp.val(loss)(0, 0) - expect) < 1e-10);
    }
}

TEST_CASE("infonce rejects bad inputs") {
    ad::Tape<double> tp;
    ad::Mat<double> bad(2, 2);
    bad << 1, std::numeric_limits<double>::quiet_NaN(), 0, 1;
    CHECK_THROWS(matching::infonce_loss(tp, tp.leaf(bad, false), tp.scalar(1.0)));
    ad::Mat<double> rect(2, 3);
    rect.setZero();
    CHECK_THROWS(matching::infonce_loss(tp, tp.leaf(rect, false), tp.scalar(1.0)));
    ad::Mat<double> ok = ad::Mat<double>::Identity(2, 2);
    CHECK_THROWS(matching::infonce_loss(tp, tp.leaf(ok, false), tp.scalar(0.0)));
}

TEST_CASE("ranking under the softmax is invariant to tau") {
    rng::Stream rs(16);
    for (int trial = 0; trial < 200; ++trial) {
        const int b = 2 + int(rs.uniform_int(5));
        Eigen::MatrixXd s(b, b);
        for (int i = 0; i < s.size(); ++i) s.data()[i] = rs.normal();
        const double tau_a = 0.25 + rs.uniform() * 2.0;
        const double tau_b = 10.0 + rs.uniform() * 80.0;
        for (int i = 0; i < b; ++i) {
            int arg_a = 0, arg_b = 0;
            (s.row(i) * tau_a).maxCoeff(&arg_a);
            (s.row(i) * tau_b).maxCoeff(&arg_b);
            CHECK(arg_a == arg_b);
        }
    }
}

TEST_CASE("total loss weighted sum") {
    ad::Tape<double> tp;
    matching::LossWeights w;
    ad::Var nce = tp.scalar(1.0), cap = tp.scalar(2.0), rec = tp.scalar(3.0), kl = tp.scalar(4.0);
    {
        matching::LossWeights zero;
        zero.lambda_cap = zero.lambda_rec = zero.lambda_kl = 0.0;
        CHECK(tp.val(matching::total_loss(tp, nce, cap, rec, kl, zero))(0, 0) == 1.0);
    }
    // defaults lambda_cap=0.3, lambda_rec=0.5, lambda_kl=1e-4
    CHECK(w.lambda_cap == 0.3);
    CHECK(w.lambda_rec == 0.5);
    CHECK(w.lambda_kl == 1e-4);
    CHECK(tp.val(matching::total_loss(tp, nce, cap, rec, kl, w))(0, 0) ==
          doctest::Approx(1.0 + 0.6 + 1.5 + 0.0004).epsilon(1e-12));
    matching::LossWeights neg;
    neg.lambda_cap = -1.0;
    CHECK_THROWS(matching::total_loss(tp, nce, cap, rec, kl, neg));
}

TEST_CASE("recall worked cases") {
    using metrics::recall_at_k;
    {
        Eigen::MatrixXd s = Eigen::MatrixXd::Identity(4, 4);
        auto [t2v, v2t] = recall_at_k(s);
        CHECK(t2v.r1 == 100.0);
        CHECK(v2t.r1 == 100.0);
        CHECK(t2v.rsum == 300.0);
    }
    {
        Eigen::MatrixXd s(3, 3);
        s << 0.9, 0.95, 0.1, 0.2, 0.8, 0.3, 0.5, 0.4, 0.6;
        auto ranks = metrics::t2v_ranks(s);
        CHECK(ranks == std::vector<int>{2, 1, 1});
        auto [t2v, v2t] = recall_at_k(s);
        CHECK(t2v.r1 == doctest::Approx(100.0 * 2 / 3).epsilon(1e-9));
        CHECK(t2v.r5 == 100.0);
    }
    {
        Eigen::MatrixXd s = Eigen::MatrixXd::Constant(6, 6, 0.5);
        auto [t2v, v2t] = recall_at_k(s);
        CHECK(t2v.r1 == 0.0);  // pessimistic ties
        CHECK(v2t.r1 == 0.0);
    }
}

TEST_CASE("recall matches a brute-force sort oracle and stays monotone") {
    rng::Stream rs(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int b = 20;
        Eigen::MatrixXd s(b, b);
        for (int i = 0; i < s.size(); ++i) s.data()[i] = rs.normal();
        auto ranks = metrics::t2v_ranks(s);
        for (int i = 0; i < b; ++i) {
            // oracle: sort row descending, find the diagonal position with ties ahead
            std::vector<double> row;
            for (int j = 0; j < b; ++j) row.push_back(s(i, j));
            std::sort(row.begin(), row.end(), std::greater<double>());
            int pos = 0;
            while (pos < b && row[size_t(pos)] >= s(i, i)) ++pos;
            CHECK(ranks[size_t(i)] == pos);
        }
        auto [t2v, v2t] = metrics::recall_at_k(s);
        CHECK(t2v.r1 <= t2v.r5);
        CHECK(t2v.r5 <= t2v.r10);
        CHECK(t2v.rsum == doctest::Approx(t2v.r1 + t2v.r5 + t2v.r10).epsilon(1e-12));
    }
}
