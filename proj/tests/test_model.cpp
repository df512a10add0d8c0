#include <filesystem>

#include "doctest.h"
#include "tvrd/model.hpp"
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
    cfg.blocks = 2;
    cfg.m_decoder = 1;
    cfg.kappa = 2;
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

VideoClip random_clip(const ModelConfig& cfg, uint64_t seed) {
    VideoClip clip;
    clip.frames.resize(cfg.n_f, cfg.d_raw);
    rng::Stream rs(seed);
    for (Eigen::Index i = 0; i < clip.frames.size(); ++i)
        clip.frames.data()[i] = float(rs.normal());
    return clip;
}

}  // namespace

TEST_CASE("encode_text is pure and shape-correct") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 3);
    const Caption cap = make_caption({5, 7, 9}, cfg.n_t);

    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    auto enc1 = model::encode_text(tp, pv, cfg, cap);
    auto enc2 = model::encode_text(tp, pv, cfg, cap);
    CHECK(tp.val(enc1.tokens).rows() == cfg.n_t);
    CHECK(tp.val(enc1.tokens).cols() == cfg.d);
    CHECK(tp.val(enc1.cls).rows() == 1);
    CHECK((tp.val(enc1.tokens) - tp.val(enc2.tokens)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((tp.val(enc1.cls) - tp.val(enc2.cls)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode_text masks PAD rows to zero and ignores PAD content") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 4);
    const Caption cap = make_caption({5, 7}, cfg.n_t);

    // same caption, garbage in the PAD tail ids (still flagged PAD via mask)
    Caption dirty = cap;
    for (size_t i = 0; i < dirty.token_ids.size(); ++i)
        if (!dirty.attention_mask[i]) dirty.token_ids[i] = 11;

    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    auto enc = model::encode_text(tp, pv, cfg, cap);
    auto encd = model::encode_text(tp, pv, cfg, dirty);
    const auto& t1 = tp.val(enc.tokens);
    const auto& t2 = tp.val(encd.tokens);
    for (int i = 0; i < cfg.n_t; ++i) {
        if (cap.attention_mask[size_t(i)]) {
            CHECK((t1.row(i) - t2.row(i)).cwiseAbs().maxCoeff() == 0.0);
        } else {
            CHECK(t1.row(i).cwiseAbs().maxCoeff() == 0.0);
        }
    }
    CHECK((tp.val(enc.cls) - tp.val(encd.cls)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode_text rejects out-of-vocabulary ids") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 5);
    Caption cap = make_caption({5}, cfg.n_t);
    cap.token_ids[1] = cfg.vocab;  // out of range
    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    CHECK_THROWS(model::encode_text(tp, pv, cfg, cap));
}

TEST_CASE("encode_video shape, purity, and degenerate input") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 6);
    const VideoClip clip = random_clip(cfg, 21);

    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    ad::Var v1 = model::encode_video(tp, pv, cfg, clip);
    ad::Var v2 = model::encode_video(tp, pv, cfg, clip);
    CHECK(tp.val(v1).rows() == cfg.n_f);
    CHECK(tp.val(v1).cols() == cfg.d);
    CHECK((tp.val(v1) - tp.val(v2)).cwiseAbs().maxCoeff() == 0.0);

    VideoClip zeros;
    zeros.frames = MatrixF::Zero(cfg.n_f, cfg.d_raw);
    ad::Var vz = model::encode_video(tp, pv, cfg, zeros);
    CHECK(tp.val(vz).allFinite());
}

TEST_CASE("encoder output is not constant in its input") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 7);
    ad::Tape<double> tp;
    nn::ParamVars<double> pv(tp, ps, false);
    ad::Var a = model::encode_video(tp, pv, cfg, random_clip(cfg, 1));
    ad::Var b = model::encode_video(tp, pv, cfg, random_clip(cfg, 2));
    CHECK((tp.val(a) - tp.val(b)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("mean_pool cases") {
    ad::Tape<double> tp;
    ad::Mat<double> one(1, 3);
    one << 1.0, -2.0, 0.5;
    CHECK((tp.val(model::mean_pool(tp, tp.constant(one))) - one).cwiseAbs().maxCoeff() == 0.0);

    ad::Mat<double> sym(2, 3);
    sym << 1, 2, 3, -1, -2, -3;
    CHECK(tp.val(model::mean_pool(tp, tp.constant(sym))).cwiseAbs().maxCoeff() == 0.0);

    ad::Mat<double> three(3, 2);
    three << 1, 2, 3, 4, 5, 9;
    auto pooled = tp.val(model::mean_pool(tp, tp.constant(three)));
    CHECK(pooled(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(pooled(0, 1) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("parameter init is seeded per name and reproducible") {
    const ModelConfig cfg = tiny_config();
    auto a = model::build_parameters<float>(cfg, 11);
    auto b = model::build_parameters<float>(cfg, 11);
    auto c = model::build_parameters<float>(cfg, 12);
    bool any_diff = false;
    for (size_t i = 0; i < a.entries().size(); ++i) {
        CHECK((a.entries()[i].value - b.entries()[i].value).cwiseAbs().maxCoeff() == 0.0f);
        any_diff = any_diff ||
                   (a.entries()[i].value - c.entries()[i].value).cwiseAbs().maxCoeff() > 0.0f;
        CHECK(a.entries()[i].value.allFinite());
    }
    CHECK(any_diff);
    CHECK(double(std::exp(a.value("logit_scale")(0, 0))) == doctest::Approx(50.0).epsilon(1e-6));
}

TEST_CASE("checkpoint container round trip") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<float>(cfg, 13);
    const std::string path =
        (std::filesystem::temp_directory_path() / "tvrd_ckpt_test.bin").string();
    save_checkpoint(path, R"({"config_hash":"deadbeef"})", model::store_tensors(ps, "model/"));

    auto [manifest, tensors] = model::load_checkpoint(path);
    CHECK(manifest.find("deadbeef") != std::string::npos);
    auto ps2 = model::build_parameters<float>(cfg, 999);
    model::load_store_tensors(ps2, tensors, "model/");
    for (size_t i = 0; i < ps.entries().size(); ++i)
        CHECK((ps.entries()[i].value - ps2.entries()[i].value).cwiseAbs().maxCoeff() == 0.0f);

    // shape mismatch rejected
    ModelConfig other = cfg;
    other.d = 16;
    auto ps3 = model::build_parameters<float>(other, 1);
    CHECK_THROWS(model::load_store_tensors(ps3, tensors, "model/"));
    std::remove(path.c_str());
}

TEST_CASE("logit scale clamps to [1, 100]") {
    const ModelConfig cfg = tiny_config();
    auto ps = model::build_parameters<double>(cfg, 14);
    ps.value("logit_scale")(0, 0) = 50.0;  // way above log(100)
    {
        ad::Tape<double> tp;
        nn::ParamVars<double> pv(tp, ps, false);
        CHECK(tp.val(model::logit_scale(tp, pv))(0, 0) == doctest::Approx(100.0));
    }
    ps.value("logit_scale")(0, 0) = -3.0;
    {
        ad::Tape<double> tp;
        nn::ParamVars<double> pv(tp, ps, false);
        CHECK(tp.val(model::logit_scale(tp, pv))(0, 0) == doctest::Approx(1.0));
    }
}
