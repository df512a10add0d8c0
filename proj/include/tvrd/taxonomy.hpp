#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tvrd/corpus.hpp"
#include "tvrd/matio.hpp"

namespace tvrd {

enum class PhraseKind { Entity, Activity };

struct Phrase {
    std::string text;  // normalized: lowercase, single spaces
    PhraseKind kind = PhraseKind::Entity;
};

struct TaxonomyDictionary {
    std::vector<Phrase> entities;
    std::vector<Phrase> activities;
    MatrixF entity_embeddings;    // n_entities x d, rows unit-norm; empty until embedded
    MatrixF activity_embeddings;  // n_activities x d
    std::vector<std::string> provenance;

    bool has_embeddings() const {
        return entity_embeddings.size() > 0 && activity_embeddings.size() > 0;
    }
    void validate() const;
};

// Rule-based chunker. Noun phrases are maximal runs of {det? adj* noun+}.
// Verb phrases are a verb plus an optional particle, or a verb plus the head
// noun of the noun phrase that starts right after it. Outputs follow
// appearance order and are deduplicated within one caption.
std::pair<std::vector<Phrase>, std::vector<Phrase>> extract_phrases(const std::string& caption_text,
                                                                    const Lexicon& lexicon);

TaxonomyDictionary build_dictionary(const std::vector<std::string>& captions, const Lexicon& lexicon,
                                    std::vector<std::string> provenance = {});

// encoder maps a phrase to its pooled embedding (length d); rows are
// re-normalized to unit length here
using PhraseEncoder = std::function<Eigen::RowVectorXf(const std::string&)>;
void embed_dictionary(TaxonomyDictionary& dict, const PhraseEncoder& encoder, int expected_dim);

void save_dictionary(const TaxonomyDictionary& dict, const std::string& path);
TaxonomyDictionary load_dictionary(const std::string& path);

// embeddings live beside the dictionary JSON as two matrix files
void save_dictionary_embeddings(const TaxonomyDictionary& dict, const std::string& path_stem);
void load_dictionary_embeddings(TaxonomyDictionary& dict, const std::string& path_stem);

}  // namespace tvrd
