#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tvrd/matio.hpp"

namespace tvrd {

// Part-of-speech classes used by the phrase extractor. The synthetic
// generator emits a lexicon over its vocabulary; real corpora supply one.
enum class PosClass { Det, Adj, Noun, Verb, Particle, Other };

using Lexicon = std::map<std::string, PosClass>;

void save_lexicon(const Lexicon& lex, const std::string& path);
Lexicon load_lexicon(const std::string& path);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    Vocabulary();  // specials only
    explicit Vocabulary(std::vector<std::string> tokens);  // must start with specials

    int add(const std::string& token);  // returns id; existing token keeps its id
    int lookup(const std::string& token) const;  // kUnk if absent
    const std::string& token_of(int id) const;
    int size() const { return int(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::string sha256() const;  // hash of tokens joined by '\n'

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

struct Caption {
    std::vector<int> token_ids;        // length n_t, padded
    std::vector<uint8_t> attention_mask;  // 1 exactly on non-PAD positions

    int length() const {  // number of non-PAD tokens
        int n = 0;
        for (uint8_t m : attention_mask) n += m ? 1 : 0;
        return n;
    }
};

struct VideoClip {
    MatrixF frames;  // n_f x d_raw
};

struct PairMeta {
    std::vector<int> entity_ids;    // latent entity catalog indices
    std::vector<int> activity_ids;  // latent activity catalog indices
    std::vector<int> bias_positions;  // indices into token_ids flagged as bias
};

struct CorpusPair {
    std::string id;
    VideoClip clip;
    Caption caption;
    std::optional<PairMeta> meta;  // present iff corpus is synthetic
};

struct BiasProfile {
    double visual_dominance = 0.0;   // fraction of frame energy given to distractor
    double textual_bias_rate = 0.0;  // expected fraction of optional slots that are bias tokens
    uint64_t seed = 0;

    void validate() const;
};

// Generator configuration: latent catalogs and shapes. Catalog contents are a
// pure function of these fields, so corpora generated with the same spec share
// the same latent space and vocabulary.
struct GeneratorSpec {
    int n_entities = 24;    // entity catalog size
    int n_activities = 24;  // activity catalog size
    int n_bias_words = 24;  // emotive vocabulary size
    int k_entities = 2;     // latents per pair
    int k_activities = 2;
    int d_raw = 32;
    int n_f = 8;
    int n_t = 16;
    uint64_t catalog_seed = 0xBA5Eu;

    void validate() const;
};

struct Corpus {
    int n_f = 0;
    int d_raw = 0;
    int n_t = 0;
    std::string vocab_sha256;
    bool synthetic = false;
    std::vector<CorpusPair> pairs;
};

struct SyntheticCorpus {
    Corpus corpus;
    Vocabulary vocab;
    Lexicon lexicon;
};

SyntheticCorpus generate_synthetic_corpus(int n_pairs, const BiasProfile& profile,
                                          const GeneratorSpec& spec, uint64_t seed);

Caption tokenize(const std::string& text, const Vocabulary& vocab, int max_len);
std::string detokenize(const Caption& caption, const Vocabulary& vocab);

// JSONL: record 0 is {"header": {...}}, then one record per pair.
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

}  // namespace tvrd
