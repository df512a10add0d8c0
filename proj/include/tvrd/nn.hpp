#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "tvrd/ad.hpp"
#include "tvrd/rng.hpp"

namespace tvrd::nn {

using ad::Mask;
using ad::MaskVec;
using ad::Var;

enum class Activation { Gelu, Relu, Tanh };

template <class S>
ad::Var activate(ad::Tape<S>& tp, ad::Var x, Activation act) {
    switch (act) {
        case Activation::Gelu: return tp.gelu(x);
        case Activation::Relu: return tp.relu(x);
        case Activation::Tanh: return tp.tanh_(x);
    }
    throw std::logic_error("activate: bad enum");
}

// Named parameter tensors with optimizer slots. Iteration order is the
// registration order, which is fixed by the model builder, so optimizer
// updates and checkpoints are reproducible.
template <class S>
class ParamStore {
public:
    struct Entry {
        std::string name;
        ad::Mat<S> value;
        ad::Mat<S> grad;
        ad::Mat<S> m;  // Adam first moment
        ad::Mat<S> v;  // Adam second moment
    };

    int add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (index_.count(name)) throw std::invalid_argument("param exists: " + name);
        Entry e;
        e.name = name;
        e.value = ad::Mat<S>::Zero(rows, cols);
        e.grad = ad::Mat<S>::Zero(rows, cols);
        e.m = ad::Mat<S>::Zero(rows, cols);
        e.v = ad::Mat<S>::Zero(rows, cols);
        entries_.push_back(std::move(e));
        index_[name] = int(entries_.size()) - 1;
        return int(entries_.size()) - 1;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Entry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("param missing: " + name);
        return entries_[size_t(it->second)];
    }
    const Entry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("param missing: " + name);
        return entries_[size_t(it->second)];
    }

    ad::Mat<S>& value(const std::string& name) { return at(name).value; }
    const ad::Mat<S>& value(const std::string& name) const { return at(name).value; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    void zero_grads() {
        for (auto& e : entries_) e.grad.setZero();
    }

    bool grads_finite() const {
        for (const auto& e : entries_)
            if (!e.grad.allFinite()) return false;
        return true;
    }

    template <class T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (const auto& e : entries_) {
            out.add(e.name, e.value.rows(), e.value.cols());
            out.value(e.name) = e.value.template cast<T>();
        }
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Handles of parameters injected into a tape for one forward/backward pass.
template <class S>
class ParamVars {
public:
    ParamVars(ad::Tape<S>& tape, ParamStore<S>& store, bool requires_grad)
        : tape_(&tape), store_(&store) {
        for (auto& e : store.entries()) vars_.emplace(e.name, tape.leaf(e.value, requires_grad));
    }

    ad::Var at(const std::string& name) const {
        auto it = vars_.find(name);
        if (it == vars_.end()) throw std::out_of_range("param var missing: " + name);
        return it->second;
    }

    // accumulate tape gradients back into the store
    void collect_grads() {
        for (auto& e : store_->entries()) e.grad += tape_->grad(vars_.at(e.name));
    }

private:
    ad::Tape<S>* tape_;
    ParamStore<S>* store_;
    std::unordered_map<std::string, ad::Var> vars_;
};

// y = x W + b with W named `name.w` (din x dout) and bias `name.b` (1 x dout)
template <class S>
ad::Var linear(ad::Tape<S>& tp, const ParamVars<S>& pv, const std::string& name, ad::Var x) {
    return tp.add_bcast_row(tp.matmul(x, pv.at(name + ".w")), pv.at(name + ".b"));
}

template <class S>
ad::Var layer_norm(ad::Tape<S>& tp, const ParamVars<S>& pv, const std::string& name, ad::Var x) {
    return tp.layer_norm(x, pv.at(name + ".g"), pv.at(name + ".b"), S(1e-5));
}

// key mask per position (length m) and optional causal restriction; builds the
// n x m attention mask consumed by row_softmax
inline Mask build_attn_mask(Eigen::Index n, Eigen::Index m, const MaskVec* key_mask, bool causal) {
    Mask mask(n, m);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < m; ++c) {
            bool ok = true;
            if (key_mask) ok = ok && (*key_mask)[size_t(c)] != 0;
            if (causal) ok = ok && c <= r;
            mask(r, c) = ok ? 1 : 0;
        }
    return mask;
}

// multi-head scaled dot-product attention; q from `x`, k/v from `memory`
template <class S>
ad::Var attention(ad::Tape<S>& tp, const ParamVars<S>& pv, const std::string& prefix, ad::Var x,
                  ad::Var memory, int heads, const MaskVec* key_mask, bool causal) {
    const Eigen::Index d = tp.val(x).cols();
    if (d % heads != 0) throw std::invalid_argument("attention: d not divisible by heads");
    const Eigen::Index dh = d / heads;
    ad::Var q = linear(tp, pv, prefix + ".q", x);
    ad::Var k = linear(tp, pv, prefix + ".k", memory);
    ad::Var v = linear(tp, pv, prefix + ".v", memory);
    const Mask mask =
        build_attn_mask(tp.val(x).rows(), tp.val(memory).rows(), key_mask, causal);
    std::vector<ad::Var> head_outs;
    head_outs.reserve(size_t(heads));
    const S scale = S(1) / S(std::sqrt(double(dh)));
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = tp.slice_cols(q, h * dh, dh);
        ad::Var kh = tp.slice_cols(k, h * dh, dh);
        ad::Var vh = tp.slice_cols(v, h * dh, dh);
        ad::Var scores = tp.scale(tp.matmul_nt(qh, kh), scale);
        ad::Var probs = tp.row_softmax(scores, &mask);
        head_outs.push_back(tp.matmul(probs, vh));
    }
    ad::Var cat = heads == 1 ? head_outs[0] : tp.hcat(head_outs);
    return linear(tp, pv, prefix + ".o", cat);
}

// pre-norm encoder block: x += attn(ln1 x); x += mlp(ln2 x)
template <class S>
ad::Var encoder_block(ad::Tape<S>& tp, const ParamVars<S>& pv, const std::string& prefix, ad::Var x,
                      int heads, const MaskVec* key_mask, Activation act) {
    ad::Var h = layer_norm(tp, pv, prefix + ".ln1", x);
    x = tp.add(x, attention(tp, pv, prefix + ".attn", h, h, heads, key_mask, false));
    ad::Var m = layer_norm(tp, pv, prefix + ".ln2", x);
    m = linear(tp, pv, prefix + ".mlp.fc2", activate(tp, linear(tp, pv, prefix + ".mlp.fc1", m), act));
    return tp.add(x, m);
}

// pre-norm decoder block: causal self-attention, cross-attention to memory, mlp
template <class S>
ad::Var decoder_block(ad::Tape<S>& tp, const ParamVars<S>& pv, const std::string& prefix, ad::Var x,
                      ad::Var memory, int heads, const MaskVec* mem_mask, Activation act) {
    ad::Var h = layer_norm(tp, pv, prefix + ".ln1", x);
    x = tp.add(x, attention(tp, pv, prefix + ".sattn", h, h, heads, nullptr, true));
    ad::Var c = layer_norm(tp, pv, prefix + ".ln2", x);
    x = tp.add(x, attention(tp, pv, prefix + ".xattn", c, memory, heads, mem_mask, false));
    ad::Var m = layer_norm(tp, pv, prefix + ".ln3", x);
    m = linear(tp, pv, prefix + ".mlp.fc2", activate(tp, linear(tp, pv, prefix + ".mlp.fc1", m), act));
    return tp.add(x, m);
}

}  // namespace tvrd::nn
