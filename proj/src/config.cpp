#include "tvrd/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tvrd/sha256.hpp"

namespace tvrd {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string upper(std::string s) {
    for (char& c : s) c = char(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

// strip a trailing comment that starts outside quotes
std::string strip_comment(const std::string& line) {
    bool in_quote = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_quote = !in_quote;
        if (line[i] == '#' && !in_quote) return line.substr(0, i);
    }
    return line;
}

class ConfigMap {
public:
    explicit ConfigMap(const std::string& text) {
        std::istringstream is(text);
        std::string raw;
        std::string section;
        int line_no = 0;
        while (std::getline(is, raw)) {
            ++line_no;
            const std::string line = trim(strip_comment(raw));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::invalid_argument("config: bad section header at line " +
                                                std::to_string(line_no));
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw std::invalid_argument("config: empty section name at line " +
                                                std::to_string(line_no));
                continue;
            }
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config: expected key = value at line " +
                                            std::to_string(line_no));
            if (section.empty())
                throw std::invalid_argument("config: key outside any section at line " +
                                            std::to_string(line_no));
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config: empty key at line " + std::to_string(line_no));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
                value = value.substr(1, value.size() - 2);
            const std::string full = section + "." + key;
            if (!kv_.emplace(full, value).second)
                throw std::invalid_argument("config: duplicate key " + full);
        }
    }

    // environment override: TVRD_<SECTION>__<KEY>
    std::string fetch(const std::string& key, const std::string& fallback, bool* found = nullptr) {
        consumed_.insert(key);
        std::string env_name = "TVRD_" + upper(key);
        const size_t dot = env_name.find('.');
        if (dot != std::string::npos) env_name.replace(dot, 1, "__");
        if (const char* env = std::getenv(env_name.c_str())) {
            if (found) *found = true;
            return env;
        }
        auto it = kv_.find(key);
        if (it == kv_.end()) {
            if (found) *found = false;
            return fallback;
        }
        if (found) *found = true;
        return it->second;
    }

    std::string get_str(const std::string& key, const std::string& fallback) {
        return fetch(key, fallback);
    }

    double get_double(const std::string& key, double fallback) {
        bool found = false;
        const std::string v = fetch(key, "", &found);
        if (!found) return fallback;
        char* end = nullptr;
        const double out = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0')
            throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
        return out;
    }

    int64_t get_int(const std::string& key, int64_t fallback) {
        bool found = false;
        const std::string v = fetch(key, "", &found);
        if (!found) return fallback;
        char* end = nullptr;
        const long long out = std::strtoll(v.c_str(), &end, 10);
        if (end == v.c_str() || *end != '\0')
            throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
        return out;
    }

    bool get_bool(const std::string& key, bool fallback) {
        bool found = false;
        const std::string v = fetch(key, "", &found);
        if (!found) return fallback;
        if (v == "true") return true;
        if (v == "false") return false;
        throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_)
            if (!consumed_.count(key))
                throw std::invalid_argument("config: unknown key " + key);
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> consumed_;
};

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    std::string s(buf, res.ptr);
    // shortest representation that round-trips
    for (int prec = 1; prec < 17; ++prec) {
        char b2[64];
        auto r2 = std::to_chars(b2, b2 + sizeof(b2), v, std::chars_format::general, prec);
        std::string cand(b2, r2.ptr);
        double back = 0.0;
        std::from_chars(cand.data(), cand.data() + cand.size(), back);
        if (back == v) return cand;
    }
    return s;
}

}  // namespace

void RunConfig::validate() const {
    if (d < 2) throw std::invalid_argument("config: model.d too small");
    if (d % heads != 0) throw std::invalid_argument("config: model.d must be divisible by heads");
    if (blocks < 1 || m_decoder < 1) throw std::invalid_argument("config: bad depth");
    if (kappa < 1) throw std::invalid_argument("config: model.kappa must be >= 1");
    if (k_samples < 1) throw std::invalid_argument("config: model.k_samples must be >= 1");
    if (activation != "gelu" && activation != "relu" && activation != "tanh")
        throw std::invalid_argument("config: model.activation must be gelu|relu|tanh");
    if (cap_loss_reduction != "mean" && cap_loss_reduction != "sum")
        throw std::invalid_argument("config: model.cap_loss_reduction must be mean|sum");
    weights.validate();
    if (batch < 1 || epochs < 0) throw std::invalid_argument("config: bad train.batch/epochs");
    if (lr <= 0.0) throw std::invalid_argument("config: train.lr must be > 0");
    if (warmup_frac < 0.0 || warmup_frac > 1.0)
        throw std::invalid_argument("config: train.warmup_frac outside [0, 1]");
    if (weight_decay < 0.0) throw std::invalid_argument("config: train.weight_decay negative");
    if (eval_max_items < 0) throw std::invalid_argument("config: train.eval_max_items negative");
}

RunConfig parse_run_config_text(const std::string& text) {
    ConfigMap m(text);
    RunConfig c;
    c.corpus_path = m.get_str("corpus.path", "");
    c.vocab_path = m.get_str("corpus.vocab", "");
    c.dict_path = m.get_str("corpus.dict", "");
    c.out_dir = m.get_str("out.dir", "");

    c.d = int(m.get_int("model.d", c.d));
    c.heads = int(m.get_int("model.heads", c.heads));
    c.blocks = int(m.get_int("model.blocks", c.blocks));
    c.m_decoder = int(m.get_int("model.m_decoder", c.m_decoder));
    c.kappa = int(m.get_int("model.kappa", c.kappa));
    c.k_samples = int(m.get_int("model.k_samples", c.k_samples));
    c.activation = m.get_str("model.activation", c.activation);
    c.cap_loss_reduction = m.get_str("model.cap_loss_reduction", c.cap_loss_reduction);

    c.weights.lambda_cap = m.get_double("loss.lambda_cap", c.weights.lambda_cap);
    c.weights.lambda_rec = m.get_double("loss.lambda_rec", c.weights.lambda_rec);
    c.weights.lambda_kl = m.get_double("loss.lambda_kl", c.weights.lambda_kl);

    c.batch = int(m.get_int("train.batch", c.batch));
    c.epochs = int(m.get_int("train.epochs", c.epochs));
    c.lr = m.get_double("train.lr", c.lr);
    c.warmup_frac = m.get_double("train.warmup_frac", c.warmup_frac);
    c.weight_decay = m.get_double("train.weight_decay", c.weight_decay);
    c.seed = uint64_t(m.get_int("train.seed", int64_t(c.seed)));
    c.eval_max_items = int(m.get_int("train.eval_max_items", c.eval_max_items));

    c.toggles.entities = m.get_bool("toggles.entities", c.toggles.entities);
    c.toggles.activities = m.get_bool("toggles.activities", c.toggles.activities);
    c.toggles.captioning_head = m.get_bool("toggles.captioning_head", c.toggles.captioning_head);
    c.toggles.textual_debias = m.get_bool("toggles.textual_debias", c.toggles.textual_debias);
    c.toggles.coefficient_g = m.get_bool("toggles.coefficient_g", c.toggles.coefficient_g);
    c.toggles.residual_fuse = m.get_bool("toggles.residual_fuse", c.toggles.residual_fuse);

    m.reject_unknown();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config_text(ss.str());
}

std::string canonical_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "[corpus]\n";
    os << "path = \"" << cfg.corpus_path << "\"\n";
    os << "vocab = \"" << cfg.vocab_path << "\"\n";
    os << "dict = \"" << cfg.dict_path << "\"\n";
    os << "\n[model]\n";
    os << "d = " << cfg.d << "\n";
    os << "heads = " << cfg.heads << "\n";
    os << "blocks = " << cfg.blocks << "\n";
    os << "m_decoder = " << cfg.m_decoder << "\n";
    os << "kappa = " << cfg.kappa << "\n";
    os << "k_samples = " << cfg.k_samples << "\n";
    os << "activation = \"" << cfg.activation << "\"\n";
    os << "cap_loss_reduction = \"" << cfg.cap_loss_reduction << "\"\n";
    os << "\n[loss]\n";
    os << "lambda_cap = " << fmt_double(cfg.weights.lambda_cap) << "\n";
    os << "lambda_rec = " << fmt_double(cfg.weights.lambda_rec) << "\n";
    os << "lambda_kl = " << fmt_double(cfg.weights.lambda_kl) << "\n";
    os << "\n[train]\n";
    os << "batch = " << cfg.batch << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "lr = " << fmt_double(cfg.lr) << "\n";
    os << "warmup_frac = " << fmt_double(cfg.warmup_frac) << "\n";
    os << "weight_decay = " << fmt_double(cfg.weight_decay) << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "eval_max_items = " << cfg.eval_max_items << "\n";
    os << "\n[toggles]\n";
    os << "entities = " << (cfg.toggles.entities ? "true" : "false") << "\n";
    os << "activities = " << (cfg.toggles.activities ? "true" : "false") << "\n";
    os << "captioning_head = " << (cfg.toggles.captioning_head ? "true" : "false") << "\n";
    os << "textual_debias = " << (cfg.toggles.textual_debias ? "true" : "false") << "\n";
    os << "coefficient_g = " << (cfg.toggles.coefficient_g ? "true" : "false") << "\n";
    os << "residual_fuse = " << (cfg.toggles.residual_fuse ? "true" : "false") << "\n";
    os << "\n[out]\n";
    os << "dir = \"" << cfg.out_dir << "\"\n";
    return os.str();
}

std::string config_hash(const RunConfig& cfg) {
    return Sha256::hex(canonical_config(cfg)).substr(0, 16);
}

nn::Activation parse_activation(const std::string& name) {
    if (name == "gelu") return nn::Activation::Gelu;
    if (name == "relu") return nn::Activation::Relu;
    if (name == "tanh") return nn::Activation::Tanh;
    throw std::invalid_argument("unknown activation: " + name);
}

model::ModelConfig to_model_config(const RunConfig& cfg, const Corpus& corpus, int vocab_size) {
    model::ModelConfig mc;
    mc.d = cfg.d;
    mc.n_t = corpus.n_t;
    mc.n_f = corpus.n_f;
    mc.d_raw = corpus.d_raw;
    mc.vocab = vocab_size;
    mc.heads = cfg.heads;
    mc.blocks = cfg.blocks;
    mc.m_decoder = cfg.m_decoder;
    mc.kappa = cfg.kappa;
    mc.k_samples = cfg.k_samples;
    mc.act = parse_activation(cfg.activation);
    mc.cap_loss_mean = cfg.cap_loss_reduction == "mean";
    mc.validate();
    return mc;
}

}  // namespace tvrd
