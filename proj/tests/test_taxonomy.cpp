#include <filesystem>

#include "doctest.h"
#include "tvrd/rng.hpp"
#include "tvrd/taxonomy.hpp"

using namespace tvrd;

namespace {

Lexicon english_lexicon() {
    return Lexicon{
        {"a", PosClass::Det},       {"the", PosClass::Det},    {"man", PosClass::Noun},
        {"dog", PosClass::Noun},    {"mango", PosClass::Noun}, {"scarf", PosClass::Noun},
        {"woman", PosClass::Noun},  {"ripe", PosClass::Adj},   {"brown", PosClass::Adj},
        {"slices", PosClass::Verb}, {"runs", PosClass::Verb},  {"running", PosClass::Verb},
        {"knitting", PosClass::Verb}, {"up", PosClass::Particle}, {"down", PosClass::Particle},
    };
}

std::vector<std::string> texts(const std::vector<Phrase>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(p.text);
    return out;
}

}  // namespace

TEST_CASE("extract_phrases on the worked grammar example") {
    auto [nouns, verbs] = extract_phrases("a man slices a ripe mango", english_lexicon());
    CHECK(texts(nouns) == std::vector<std::string>{"a man", "a ripe mango"});
    CHECK(texts(verbs) == std::vector<std::string>{"slices mango"});
}

TEST_CASE("extract_phrases empty input") {
    auto [nouns, verbs] = extract_phrases("", english_lexicon());
    CHECK(nouns.empty());
    CHECK(verbs.empty());
}

TEST_CASE("extract_phrases dedup within caption") {
    auto [nouns, verbs] = extract_phrases("running running running", english_lexicon());
    CHECK(nouns.empty());
    CHECK(texts(verbs) == std::vector<std::string>{"running"});
}

TEST_CASE("extract_phrases verb particle and bare verb forms") {
    auto [nouns, verbs] = extract_phrases("the dog runs up", english_lexicon());
    CHECK(texts(nouns) == std::vector<std::string>{"the dog"});
    CHECK(texts(verbs) == std::vector<std::string>{"runs up"});

    auto [n2, v2] = extract_phrases("knitting running", english_lexicon());
    CHECK(texts(v2) == std::vector<std::string>{"knitting", "running"});
    CHECK(n2.empty());
}

TEST_CASE("extract_phrases consecutive nouns merge into one maximal run") {
    auto [nouns, verbs] = extract_phrases("man dog runs", english_lexicon());
    CHECK(texts(nouns) == std::vector<std::string>{"man dog"});
    CHECK(texts(verbs) == std::vector<std::string>{"runs"});
}

TEST_CASE("extract_phrases determinism") {
    const Lexicon lex = english_lexicon();
    const std::string caption = "a woman knitting a brown scarf runs down the man";
    auto first = extract_phrases(caption, lex);
    for (int i = 0; i < 50; ++i) {
        auto again = extract_phrases(caption, lex);
        CHECK(texts(again.first) == texts(first.first));
        CHECK(texts(again.second) == texts(first.second));
    }
}

TEST_CASE("build_dictionary dedups across captions and keeps first-occurrence order") {
    const Lexicon lex = english_lexicon();
    auto dict = build_dictionary({"a man slices a ripe mango", "a man runs"}, lex, {"corpusA"});
    CHECK(texts(dict.entities) == std::vector<std::string>{"a man", "a ripe mango"});
    CHECK(texts(dict.activities) == std::vector<std::string>{"slices mango", "runs"});
    CHECK(dict.provenance == std::vector<std::string>{"corpusA"});
}

TEST_CASE("build_dictionary union bound") {
    const Lexicon lex = english_lexicon();
    std::vector<std::string> setA = {"a man slices a ripe mango", "the dog runs"};
    std::vector<std::string> setB = {"a woman knitting a scarf", "the dog runs up"};
    auto da = build_dictionary(setA, lex);
    auto db = build_dictionary(setB, lex);
    std::vector<std::string> both = setA;
    both.insert(both.end(), setB.begin(), setB.end());
    auto dab = build_dictionary(both, lex);
    CHECK(dab.entities.size() <= da.entities.size() + db.entities.size());
    CHECK(dab.activities.size() <= da.activities.size() + db.activities.size());
}

TEST_CASE("build_dictionary dedup idempotence per kind") {
    const Lexicon lex = english_lexicon();
    auto dict = build_dictionary({"a man slices a ripe mango", "the dog runs up", "a man runs"},
                                 lex);
    // feeding each kind's phrases back as captions reproduces that kind's set
    // (verb phrases may mention nouns, so the cross-kind union is not compared)
    auto sorted = [](std::vector<std::string> v) {
        std::sort(v.begin(), v.end());
        return v;
    };
    auto redo_e = build_dictionary(texts(dict.entities), lex);
    CHECK(sorted(texts(redo_e.entities)) == sorted(texts(dict.entities)));
    CHECK(redo_e.activities.empty());
    auto redo_a = build_dictionary(texts(dict.activities), lex);
    CHECK(sorted(texts(redo_a.activities)) == sorted(texts(dict.activities)));
}

TEST_CASE("build_dictionary rejects empty outcomes") {
    const Lexicon lex = english_lexicon();
    CHECK_THROWS(build_dictionary({}, lex));
    CHECK_THROWS(build_dictionary({"zzz yyy xxx"}, lex));  // everything classes OTHER
}

TEST_CASE("embed_dictionary normalizes rows and is pure per phrase") {
    const Lexicon lex = english_lexicon();
    auto dict = build_dictionary({"a man slices a ripe mango", "a man runs"}, lex);
    // toy deterministic encoder: hash-seeded gaussian per phrase
    auto encoder = [](const std::string& text) {
        rng::Stream rs(rng::fnv1a64(text));
        Eigen::RowVectorXf v(7);
        for (int i = 0; i < 7; ++i) v(i) = float(rs.normal()) + 2.0f;
        return v;
    };
    embed_dictionary(dict, encoder, 7);
    REQUIRE(dict.has_embeddings());
    REQUIRE(dict.entity_embeddings.rows() == Eigen::Index(dict.entities.size()));
    for (Eigen::Index r = 0; r < dict.entity_embeddings.rows(); ++r)
        CHECK(dict.entity_embeddings.row(r).norm() == doctest::Approx(1.0).epsilon(1e-6));
    for (Eigen::Index r = 0; r < dict.activity_embeddings.rows(); ++r)
        CHECK(dict.activity_embeddings.row(r).norm() == doctest::Approx(1.0).epsilon(1e-6));

    // identical phrase text in both kinds embeds identically
    TaxonomyDictionary d2;
    d2.entities.push_back({"runs", PhraseKind::Entity});
    d2.activities.push_back({"runs", PhraseKind::Activity});
    embed_dictionary(d2, encoder, 7);
    CHECK((d2.entity_embeddings.row(0) - d2.activity_embeddings.row(0)).cwiseAbs().maxCoeff() ==
          0.0f);
    // cosine with itself
    CHECK(double(d2.entity_embeddings.row(0).dot(d2.activity_embeddings.row(0))) ==
          doctest::Approx(1.0).epsilon(1e-6));

    // dim mismatch rejected
    CHECK_THROWS(embed_dictionary(dict, encoder, 9));
}

TEST_CASE("dictionary json and embeddings round trip") {
    const Lexicon lex = english_lexicon();
    auto dict = build_dictionary({"a man slices a ripe mango", "the dog runs up"}, lex, {"c1", "c2"});
    auto encoder = [](const std::string& text) {
        rng::Stream rs(rng::fnv1a64(text));
        Eigen::RowVectorXf v(5);
        for (int i = 0; i < 5; ++i) v(i) = float(rs.normal());
        return v;
    };
    embed_dictionary(dict, encoder, 5);

    namespace fs = std::filesystem;
    const std::string jpath = (fs::temp_directory_path() / "tvrd_dict.json").string();
    const std::string stem = (fs::temp_directory_path() / "tvrd_dict").string();
    save_dictionary(dict, jpath);
    save_dictionary_embeddings(dict, stem);

    TaxonomyDictionary loaded = load_dictionary(jpath);
    load_dictionary_embeddings(loaded, stem);
    CHECK(texts(loaded.entities) == texts(dict.entities));
    CHECK(texts(loaded.activities) == texts(dict.activities));
    CHECK(loaded.provenance == dict.provenance);
    CHECK((loaded.entity_embeddings - dict.entity_embeddings).cwiseAbs().maxCoeff() == 0.0f);
    std::remove(jpath.c_str());
    std::remove((stem + ".ent.mat").c_str());
    std::remove((stem + ".act.mat").c_str());
}
