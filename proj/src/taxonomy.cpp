#include "tvrd/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace tvrd {

using nlohmann::json;

namespace {

std::vector<std::string> split_lower(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(cur), cur.clear();
        } else {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

PosClass classify(const Lexicon& lex, const std::string& word) {
    auto it = lex.find(word);
    return it == lex.end() ? PosClass::Other : it->second;
}

std::string join(const std::vector<std::string>& words, size_t begin, size_t end) {
    std::string s;
    for (size_t i = begin; i < end; ++i) {
        if (!s.empty()) s.push_back(' ');
        s += words[i];
    }
    return s;
}

// Matches det? adj* noun+ starting at i. Returns one past the last consumed
// token and the index of the head (last) noun, or i if no match.
size_t match_noun_phrase(const std::vector<PosClass>& cls, size_t i, size_t* head_noun) {
    size_t j = i;
    if (j < cls.size() && cls[j] == PosClass::Det) ++j;
    while (j < cls.size() && cls[j] == PosClass::Adj) ++j;
    size_t first_noun = j;
    while (j < cls.size() && cls[j] == PosClass::Noun) ++j;
    if (j == first_noun) return i;  // no noun: not a phrase
    if (head_noun) *head_noun = j - 1;
    return j;
}

void push_unique(std::vector<Phrase>& out, std::set<std::string>& seen, std::string text,
                 PhraseKind kind) {
    if (seen.insert(text).second) out.push_back(Phrase{std::move(text), kind});
}

}  // namespace

std::pair<std::vector<Phrase>, std::vector<Phrase>> extract_phrases(const std::string& caption_text,
                                                                    const Lexicon& lexicon) {
    const auto words = split_lower(caption_text);
    std::vector<PosClass> cls(words.size());
    for (size_t i = 0; i < words.size(); ++i) cls[i] = classify(lexicon, words[i]);

    std::vector<Phrase> nouns, verbs;
    std::set<std::string> seen_nouns, seen_verbs;

    // noun phrases: maximal runs
    for (size_t i = 0; i < words.size();) {
        const size_t j = match_noun_phrase(cls, i, nullptr);
        if (j > i) {
            push_unique(nouns, seen_nouns, join(words, i, j), PhraseKind::Entity);
            i = j;
        } else {
            ++i;
        }
    }

    // verb phrases: verb + particle | verb + head noun of following NP | verb
    for (size_t i = 0; i < words.size(); ++i) {
        if (cls[i] != PosClass::Verb) continue;
        std::string text = words[i];
        if (i + 1 < words.size() && cls[i + 1] == PosClass::Particle) {
            text += ' ';
            text += words[i + 1];
        } else if (i + 1 < words.size()) {
            size_t head = 0;
            if (match_noun_phrase(cls, i + 1, &head) > i + 1) {
                text += ' ';
                text += words[head];
            }
        }
        push_unique(verbs, seen_verbs, std::move(text), PhraseKind::Activity);
    }
    return {std::move(nouns), std::move(verbs)};
}

TaxonomyDictionary build_dictionary(const std::vector<std::string>& captions, const Lexicon& lexicon,
                                    std::vector<std::string> provenance) {
    if (captions.empty()) throw std::invalid_argument("build_dictionary: no captions");
    TaxonomyDictionary dict;
    dict.provenance = std::move(provenance);
    std::set<std::string> seen_e, seen_a;
    for (const auto& caption : captions) {
        auto [nouns, verbs] = extract_phrases(caption, lexicon);
        for (auto& p : nouns)
            if (seen_e.insert(p.text).second) dict.entities.push_back(std::move(p));
        for (auto& p : verbs)
            if (seen_a.insert(p.text).second) dict.activities.push_back(std::move(p));
    }
    if (dict.entities.empty() && dict.activities.empty())
        throw std::runtime_error("build_dictionary: empty dictionary");
    return dict;
}

void TaxonomyDictionary::validate() const {
    std::set<std::string> seen;
    for (const auto& p : entities)
        if (!seen.insert(p.text).second)
            throw std::runtime_error("dictionary: duplicate entity phrase '" + p.text + "'");
    seen.clear();
    for (const auto& p : activities)
        if (!seen.insert(p.text).second)
            throw std::runtime_error("dictionary: duplicate activity phrase '" + p.text + "'");
    if (entity_embeddings.size() > 0 && entity_embeddings.rows() != Eigen::Index(entities.size()))
        throw std::runtime_error("dictionary: entity embedding row count mismatch");
    if (activity_embeddings.size() > 0 &&
        activity_embeddings.rows() != Eigen::Index(activities.size()))
        throw std::runtime_error("dictionary: activity embedding row count mismatch");
}

namespace {

MatrixF embed_list(const std::vector<Phrase>& phrases, const PhraseEncoder& encoder,
                   int expected_dim) {
    MatrixF m(Eigen::Index(phrases.size()), expected_dim);
    for (size_t i = 0; i < phrases.size(); ++i) {
        Eigen::RowVectorXf v = encoder(phrases[i].text);
        if (v.size() != expected_dim)
            throw std::invalid_argument("embed_dictionary: encoder dim " +
                                        std::to_string(v.size()) + " != expected " +
                                        std::to_string(expected_dim));
        const float n = v.norm();
        if (n > 1e-12f) v /= n;
        m.row(Eigen::Index(i)) = v;
    }
    return m;
}

}  // namespace

void embed_dictionary(TaxonomyDictionary& dict, const PhraseEncoder& encoder, int expected_dim) {
    dict.entity_embeddings = embed_list(dict.entities, encoder, expected_dim);
    dict.activity_embeddings = embed_list(dict.activities, encoder, expected_dim);
}

void save_dictionary(const TaxonomyDictionary& dict, const std::string& path) {
    json j;
    j["entities"] = json::array();
    for (const auto& p : dict.entities) j["entities"].push_back(p.text);
    j["activities"] = json::array();
    for (const auto& p : dict.activities) j["activities"].push_back(p.text);
    j["provenance"] = dict.provenance;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("dictionary: cannot write " + path);
    os << j.dump() << '\n';
}

TaxonomyDictionary load_dictionary(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("dictionary: cannot open " + path);
    json j;
    is >> j;
    TaxonomyDictionary dict;
    for (const auto& t : j.at("entities"))
        dict.entities.push_back(Phrase{t.get<std::string>(), PhraseKind::Entity});
    for (const auto& t : j.at("activities"))
        dict.activities.push_back(Phrase{t.get<std::string>(), PhraseKind::Activity});
    if (j.contains("provenance"))
        dict.provenance = j["provenance"].get<std::vector<std::string>>();
    dict.validate();
    return dict;
}

void save_dictionary_embeddings(const TaxonomyDictionary& dict, const std::string& path_stem) {
    if (!dict.has_embeddings())
        throw std::runtime_error("dictionary: no embeddings to save");
    write_matrix(path_stem + ".ent.mat", dict.entity_embeddings);
    write_matrix(path_stem + ".act.mat", dict.activity_embeddings);
}

void load_dictionary_embeddings(TaxonomyDictionary& dict, const std::string& path_stem) {
    dict.entity_embeddings = read_matrix(path_stem + ".ent.mat");
    dict.activity_embeddings = read_matrix(path_stem + ".act.mat");
    dict.validate();
}

}  // namespace tvrd
