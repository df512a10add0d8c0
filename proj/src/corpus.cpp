#include "tvrd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tvrd/rng.hpp"
#include "tvrd/sha256.hpp"

namespace tvrd {

using nlohmann::json;

// ---- lexicon ----------------------------------------------------------------

namespace {

const char* pos_name(PosClass c) {
    switch (c) {
        case PosClass::Det: return "det";
        case PosClass::Adj: return "adj";
        case PosClass::Noun: return "noun";
        case PosClass::Verb: return "verb";
        case PosClass::Particle: return "particle";
        case PosClass::Other: return "other";
    }
    return "other";
}

PosClass pos_from_name(const std::string& s) {
    if (s == "det") return PosClass::Det;
    if (s == "adj") return PosClass::Adj;
    if (s == "noun") return PosClass::Noun;
    if (s == "verb") return PosClass::Verb;
    if (s == "particle") return PosClass::Particle;
    if (s == "other") return PosClass::Other;
    throw std::runtime_error("lexicon: unknown pos class '" + s + "'");
}

std::vector<std::string> split_words(const std::string& text) {
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

}  // namespace

void save_lexicon(const Lexicon& lex, const std::string& path) {
    json j = json::object();
    for (const auto& [word, cls] : lex) j[word] = pos_name(cls);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("lexicon: cannot write " + path);
    os << j.dump() << '\n';
}

Lexicon load_lexicon(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("lexicon: cannot open " + path);
    json j;
    is >> j;
    Lexicon lex;
    for (auto it = j.begin(); it != j.end(); ++it)
        lex[it.key()] = pos_from_name(it.value().get<std::string>());
    return lex;
}

// ---- vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
    for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    static const std::vector<std::string> specials = {"<pad>", "<bos>", "<eos>", "<unk>"};
    if (tokens.size() < specials.size() ||
        !std::equal(specials.begin(), specials.end(), tokens.begin()))
        throw std::runtime_error("vocabulary: reserved tokens missing or out of order");
    for (const auto& t : tokens) add(t);
}

int Vocabulary::add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = int(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: bad id");
    return tokens_[size_t(id)];
}

std::string Vocabulary::sha256() const {
    Sha256 h;
    for (size_t i = 0; i < tokens_.size(); ++i) {
        if (i) h.update("\n");
        h.update(tokens_[i]);
    }
    return h.hex_digest();
}

void Vocabulary::save(const std::string& path) const {
    json j;
    j["tokens"] = tokens_;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("vocabulary: cannot write " + path);
    os << j.dump() << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("vocabulary: cannot open " + path);
    json j;
    is >> j;
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>());
}

// ---- tokenizer ---------------------------------------------------------------

Caption tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
    if (max_len < 3) throw std::invalid_argument("tokenize: max_len must be >= 3");
    const auto words = split_words(text);
    Caption cap;
    cap.token_ids.assign(size_t(max_len), Vocabulary::kPad);
    cap.attention_mask.assign(size_t(max_len), 0);
    cap.token_ids[0] = Vocabulary::kBos;
    size_t pos = 1;
    const size_t word_budget = size_t(max_len) - 2;  // BOS and EOS always kept
    for (size_t i = 0; i < words.size() && i < word_budget; ++i)
        cap.token_ids[pos++] = vocab.lookup(words[i]);
    cap.token_ids[pos++] = Vocabulary::kEos;
    for (size_t i = 0; i < pos; ++i) cap.attention_mask[i] = 1;
    return cap;
}

std::string detokenize(const Caption& caption, const Vocabulary& vocab) {
    std::string out;
    for (size_t i = 0; i < caption.token_ids.size(); ++i) {
        const int id = caption.token_ids[i];
        if (id == Vocabulary::kPad || id == Vocabulary::kBos || id == Vocabulary::kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += vocab.token_of(id);
    }
    return out;
}

// ---- synthetic generator -------------------------------------------------------

void BiasProfile::validate() const {
    if (!(visual_dominance >= 0.0 && visual_dominance <= 1.0))
        throw std::invalid_argument("bias profile: visual_dominance outside [0, 1]");
    if (!(textual_bias_rate >= 0.0 && textual_bias_rate <= 1.0))
        throw std::invalid_argument("bias profile: textual_bias_rate outside [0, 1]");
}

void GeneratorSpec::validate() const {
    if (n_entities < 1 || n_activities < 1 || n_bias_words < 1)
        throw std::invalid_argument("generator: catalogs must be non-empty");
    if (k_entities < 1 || k_activities < 1)
        throw std::invalid_argument("generator: need at least one latent per kind");
    if (k_entities > n_entities || k_activities > n_activities)
        throw std::invalid_argument("generator: vocabulary overflow, more latents than catalog slots");
    if (d_raw < 1 || n_f < 1) throw std::invalid_argument("generator: bad clip dims");
    if (k_entities + k_activities + 2 > n_t)
        throw std::invalid_argument("generator: vocabulary overflow, caption budget too small");
}

namespace {

std::string numbered(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
    return buf;
}

MatrixF sample_prototypes(int n, int d_raw, rng::Stream& rs) {
    MatrixF protos(n, d_raw);
    const float scale = 1.0f / std::sqrt(float(d_raw));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_raw; ++j) protos(i, j) = float(rs.normal()) * scale;
    return protos;
}

std::vector<int> sample_distinct(int k, int n, rng::Stream& rs) {
    std::vector<int> picked;
    picked.reserve(size_t(k));
    while (int(picked.size()) < k) {
        const int c = int(rs.uniform_int(uint64_t(n)));
        if (std::find(picked.begin(), picked.end(), c) == picked.end()) picked.push_back(c);
    }
    return picked;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(int n_pairs, const BiasProfile& profile,
                                          const GeneratorSpec& spec, uint64_t seed) {
    if (n_pairs < 1) throw std::invalid_argument("generator: n_pairs must be >= 1");
    profile.validate();
    spec.validate();

    SyntheticCorpus out;

    // vocabulary and latent catalogs depend only on the generator spec
    std::vector<std::string> entity_words, activity_words, bias_words;
    for (int i = 0; i < spec.n_entities; ++i) entity_words.push_back(numbered("obj", i));
    for (int i = 0; i < spec.n_activities; ++i) activity_words.push_back(numbered("act", i));
    for (int i = 0; i < spec.n_bias_words; ++i) bias_words.push_back(numbered("mood", i));

    Vocabulary vocab;
    for (const auto& w : entity_words) vocab.add(w);
    for (const auto& w : activity_words) vocab.add(w);
    for (const auto& w : bias_words) vocab.add(w);

    Lexicon lex;
    for (const auto& w : entity_words) lex[w] = PosClass::Noun;
    for (const auto& w : activity_words) lex[w] = PosClass::Verb;
    for (const auto& w : bias_words) lex[w] = PosClass::Other;

    rng::Stream catalog_rs(rng::mix(spec.catalog_seed, "catalog"));
    const MatrixF ent_protos = sample_prototypes(spec.n_entities, spec.d_raw, catalog_rs);
    const MatrixF act_protos = sample_prototypes(spec.n_activities, spec.d_raw, catalog_rs);

    Corpus& corpus = out.corpus;
    corpus.n_f = spec.n_f;
    corpus.d_raw = spec.d_raw;
    corpus.n_t = spec.n_t;
    corpus.vocab_sha256 = vocab.sha256();
    corpus.synthetic = true;
    corpus.pairs.reserve(size_t(n_pairs));

    const uint64_t base = rng::mix(rng::mix(seed, "corpus"), profile.seed);
    const double vd = profile.visual_dominance;
    const float sig_scale = float(std::sqrt(1.0 - vd));
    const float noise_scale = float(std::sqrt(vd) / std::sqrt(double(spec.d_raw)));

    for (int p = 0; p < n_pairs; ++p) {
        rng::Stream rs(rng::mix(base, uint64_t(p)));
        CorpusPair pair;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "p%06d", p);
        pair.id = idbuf;

        PairMeta meta;
        meta.entity_ids = sample_distinct(spec.k_entities, spec.n_entities, rs);
        meta.activity_ids = sample_distinct(spec.k_activities, spec.n_activities, rs);

        // clip: normalized latent signature plus distractor, energy split by
        // visual_dominance
        Eigen::RowVectorXf signal = Eigen::RowVectorXf::Zero(spec.d_raw);
        for (int e : meta.entity_ids) signal += ent_protos.row(e);
        for (int a : meta.activity_ids) signal += act_protos.row(a);
        const float norm = signal.norm();
        if (norm > 1e-12f) signal /= norm;
        pair.clip.frames.resize(spec.n_f, spec.d_raw);
        for (int f = 0; f < spec.n_f; ++f) {
            for (int j = 0; j < spec.d_raw; ++j)
                pair.clip.frames(f, j) =
                    sig_scale * signal(j) + noise_scale * float(rs.normal());
        }

        // caption: latent words in shuffled order, bias tokens spliced in
        struct Word {
            int id;
            bool is_bias;
        };
        std::vector<Word> words;
        for (int e : meta.entity_ids) words.push_back({vocab.lookup(entity_words[size_t(e)]), false});
        for (int a : meta.activity_ids)
            words.push_back({vocab.lookup(activity_words[size_t(a)]), false});
        rs.shuffle(words);
        const int optional_slots = spec.n_t - 2 - int(words.size());
        for (int s = 0; s < optional_slots; ++s) {
            if (rs.uniform() >= profile.textual_bias_rate) continue;
            const int b = int(rs.uniform_int(uint64_t(spec.n_bias_words)));
            const size_t at = size_t(rs.uniform_int(words.size() + 1));
            words.insert(words.begin() + long(at), {vocab.lookup(bias_words[size_t(b)]), true});
        }

        Caption cap;
        cap.token_ids.assign(size_t(spec.n_t), Vocabulary::kPad);
        cap.attention_mask.assign(size_t(spec.n_t), 0);
        cap.token_ids[0] = Vocabulary::kBos;
        size_t pos = 1;
        for (const Word& w : words) {
            if (w.is_bias) meta.bias_positions.push_back(int(pos));
            cap.token_ids[pos++] = w.id;
        }
        cap.token_ids[pos++] = Vocabulary::kEos;
        for (size_t i = 0; i < pos; ++i) cap.attention_mask[i] = 1;

        pair.caption = std::move(cap);
        pair.meta = std::move(meta);
        corpus.pairs.push_back(std::move(pair));
    }

    out.vocab = std::move(vocab);
    out.lexicon = std::move(lex);
    return out;
}

// ---- JSONL io ------------------------------------------------------------------

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("corpus: cannot write " + path);
    json header;
    header["header"] = {{"n_f", corpus.n_f},
                        {"d_raw", corpus.d_raw},
                        {"n_t", corpus.n_t},
                        {"vocab_sha256", corpus.vocab_sha256}};
    os << header.dump() << '\n';
    for (const auto& pair : corpus.pairs) {
        json j;
        j["id"] = pair.id;
        std::vector<float> frames(pair.clip.frames.data(),
                                  pair.clip.frames.data() + pair.clip.frames.size());
        j["frames"] = frames;
        j["tokens"] = pair.caption.token_ids;
        if (pair.meta) {
            j["meta"] = {{"entities", pair.meta->entity_ids},
                         {"activities", pair.meta->activity_ids},
                         {"bias_positions", pair.meta->bias_positions}};
        }
        os << j.dump() << '\n';
    }
    if (!os) throw std::runtime_error("corpus: write failed " + path);
}

Corpus load_corpus(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("corpus: cannot open " + path);
    Corpus corpus;
    std::string line;
    size_t line_no = 0;
    bool have_header = false;
    bool any_meta = false;
    std::vector<std::string> seen_ids;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error("corpus: malformed JSONL at line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        if (!have_header) {
            if (!j.contains("header"))
                throw std::runtime_error("corpus: line 1 must be the header record");
            const json& h = j["header"];
            corpus.n_f = h.at("n_f").get<int>();
            corpus.d_raw = h.at("d_raw").get<int>();
            corpus.n_t = h.at("n_t").get<int>();
            corpus.vocab_sha256 = h.at("vocab_sha256").get<std::string>();
            have_header = true;
            continue;
        }
        CorpusPair pair;
        try {
            pair.id = j.at("id").get<std::string>();
            const auto frames = j.at("frames").get<std::vector<float>>();
            if (int(frames.size()) != corpus.n_f * corpus.d_raw)
                throw std::runtime_error("frame count disagrees with header dims");
            pair.clip.frames.resize(corpus.n_f, corpus.d_raw);
            std::copy(frames.begin(), frames.end(), pair.clip.frames.data());
            pair.caption.token_ids = j.at("tokens").get<std::vector<int>>();
            if (int(pair.caption.token_ids.size()) != corpus.n_t)
                throw std::runtime_error("token count disagrees with header dims");
            pair.caption.attention_mask.assign(size_t(corpus.n_t), 0);
            for (size_t i = 0; i < pair.caption.token_ids.size(); ++i)
                pair.caption.attention_mask[i] =
                    pair.caption.token_ids[i] != Vocabulary::kPad ? 1 : 0;
            if (j.contains("meta")) {
                PairMeta meta;
                meta.entity_ids = j["meta"].at("entities").get<std::vector<int>>();
                meta.activity_ids = j["meta"].at("activities").get<std::vector<int>>();
                meta.bias_positions = j["meta"].at("bias_positions").get<std::vector<int>>();
                pair.meta = std::move(meta);
                any_meta = true;
            } else if (any_meta) {
                throw std::runtime_error("metadata present on some pairs but not all");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("corpus: bad record at line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        seen_ids.push_back(pair.id);
        corpus.pairs.push_back(std::move(pair));
    }
    if (!have_header) throw std::runtime_error("corpus: empty file " + path);
    if (!corpus.pairs.empty() && corpus.pairs.front().meta.has_value()) {
        for (const auto& p : corpus.pairs)
            if (!p.meta)
                throw std::runtime_error("corpus: metadata present on some pairs but not all");
        corpus.synthetic = true;
    }
    std::sort(seen_ids.begin(), seen_ids.end());
    if (std::adjacent_find(seen_ids.begin(), seen_ids.end()) != seen_ids.end())
        throw std::runtime_error("corpus: duplicate pair id");
    return corpus;
}

}  // namespace tvrd
