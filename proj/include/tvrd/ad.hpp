#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tvrd::ad {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// 1 = position participates, 0 = masked out
using Mask = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskVec = std::vector<uint8_t>;

struct Var {
    int32_t i = -1;
    bool valid() const { return i >= 0; }
};

// Reverse-mode tape over dense matrices. Scalars are 1x1 matrices. Operand
// nodes always precede result nodes, so one reverse sweep settles all
// gradients. Reduction orders inside each op are fixed, which keeps whole
// runs bit-reproducible.
template <class S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Mat<S> v, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(v), Mat<S>(), nullptr, requires_grad});
        return Var{int32_t(nodes_.size() - 1)};
    }
    Var constant(Mat<S> v) { return leaf(std::move(v), false); }
    Var scalar(S v, bool requires_grad = false) {
        Mat<S> m(1, 1);
        m(0, 0) = v;
        return leaf(std::move(m), requires_grad);
    }

    const Mat<S>& val(Var x) const { return nodes_.at(size_t(x.i)).val; }
    bool requires_grad(Var x) const { return nodes_.at(size_t(x.i)).rg; }
    size_t size() const { return nodes_.size(); }

    // zero matrix if backward never reached this node
    Mat<S> grad(Var x) const {
        const Node& n = nodes_.at(size_t(x.i));
        if (n.grad.size() == 0) return Mat<S>::Zero(n.val.rows(), n.val.cols());
        return n.grad;
    }

    void backward(Var root) {
        Node& r = nodes_.at(size_t(root.i));
        if (r.val.rows() != 1 || r.val.cols() != 1)
            throw std::invalid_argument("backward: root must be a scalar");
        r.grad = Mat<S>::Ones(1, 1);
        for (int32_t i = root.i; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (n.back && n.grad.size() != 0) n.back(*this);
        }
    }

    // ---- elementwise ----------------------------------------------------

    Var add(Var a, Var b) {
        check_same_shape(a, b, "add");
        return unit(val(a) + val(b), {a, b}, [a, b](Tape& t, const Mat<S>& g) {
            t.acc(a, g);
            t.acc(b, g);
        });
    }

    Var sub(Var a, Var b) {
        check_same_shape(a, b, "sub");
        return unit(val(a) - val(b), {a, b}, [a, b](Tape& t, const Mat<S>& g) {
            t.acc(a, g);
            t.acc(b, -g);
        });
    }

    Var mul(Var a, Var b) {
        check_same_shape(a, b, "mul");
        return unit(val(a).cwiseProduct(val(b)), {a, b}, [a, b](Tape& t, const Mat<S>& g) {
            t.acc(a, g.cwiseProduct(t.val(b)));
            t.acc(b, g.cwiseProduct(t.val(a)));
        });
    }

    Var scale(Var a, S c) {
        return unit(val(a) * c, {a}, [a, c](Tape& t, const Mat<S>& g) { t.acc(a, g * c); });
    }

    Var add_const(Var a, S c) {
        return unit((val(a).array() + c).matrix(), {a},
                    [a](Tape& t, const Mat<S>& g) { t.acc(a, g); });
    }

    Var neg(Var a) { return scale(a, S(-1)); }

    // s is 1x1; broadcast multiply
    Var mul_scalar(Var a, Var s) {
        if (val(s).size() != 1) throw std::invalid_argument("mul_scalar: s must be 1x1");
        return unit(val(a) * val(s)(0, 0), {a, s}, [a, s](Tape& t, const Mat<S>& g) {
            t.acc(a, g * t.val(s)(0, 0));
            Mat<S> gs(1, 1);
            gs(0, 0) = g.cwiseProduct(t.val(a)).sum();
            t.acc(s, gs);
        });
    }

    Var exp_(Var a) {
        Mat<S> y = val(a).array().exp().matrix();
        return unit(y, {a}, [a, y](Tape& t, const Mat<S>& g) { t.acc(a, g.cwiseProduct(y)); });
    }

    Var log_(Var a) {
        return unit(val(a).array().log().matrix(), {a}, [a](Tape& t, const Mat<S>& g) {
            t.acc(a, g.cwiseQuotient(t.val(a)));
        });
    }

    Var square(Var a) {
        return unit(val(a).cwiseProduct(val(a)), {a}, [a](Tape& t, const Mat<S>& g) {
            t.acc(a, (g.array() * t.val(a).array() * S(2)).matrix());
        });
    }

    Var tanh_(Var a) {
        Mat<S> y = val(a).array().tanh().matrix();
        return unit(y, {a}, [a, y](Tape& t, const Mat<S>& g) {
            t.acc(a, (g.array() * (S(1) - y.array().square())).matrix());
        });
    }

    Var sigmoid(Var a) {
        Mat<S> y = (S(1) / (S(1) + (-val(a).array()).exp())).matrix();
        return unit(y, {a}, [a, y](Tape& t, const Mat<S>& g) {
            t.acc(a, (g.array() * y.array() * (S(1) - y.array())).matrix());
        });
    }

    Var relu(Var a) {
        Mat<S> y = val(a).cwiseMax(S(0));
        return unit(y, {a}, [a](Tape& t, const Mat<S>& g) {
            Mat<S> gi = (t.val(a).array() > S(0)).template cast<S>() * g.array();
            t.acc(a, gi);
        });
    }

    // exact gelu: x * Phi(x)
    Var gelu(Var a) {
        const auto& x = val(a);
        Mat<S> y(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double xi = double(x.data()[i]);
            y.data()[i] = S(xi * 0.5 * (1.0 + std::erf(xi * 0.70710678118654752440)));
        }
        return unit(y, {a}, [a](Tape& t, const Mat<S>& g) {
            const auto& x = t.val(a);
            Mat<S> gi(x.rows(), x.cols());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const double xi = double(x.data()[i]);
                const double phi = std::exp(-0.5 * xi * xi) * 0.39894228040143267794;
                const double cdf = 0.5 * (1.0 + std::erf(xi * 0.70710678118654752440));
                gi.data()[i] = S(double(g.data()[i]) * (cdf + xi * phi));
            }
            t.acc(a, gi);
        });
    }

    // gradient is zero outside [lo, hi]
    Var clamp(Var a, S lo, S hi) {
        Mat<S> y = val(a).cwiseMax(lo).cwiseMin(hi);
        return unit(y, {a}, [a, lo, hi](Tape& t, const Mat<S>& g) {
            const auto& x = t.val(a).array();
            Mat<S> gi = ((x >= lo && x <= hi).template cast<S>() * g.array()).matrix();
            t.acc(a, gi);
        });
    }

    // ---- linear algebra --------------------------------------------------

    Var matmul(Var a, Var b) {
        if (val(a).cols() != val(b).rows()) throw std::invalid_argument("matmul: shape mismatch");
        Mat<S> y = val(a) * val(b);
        return unit(std::move(y), {a, b}, [a, b](Tape& t, const Mat<S>& g) {
            t.acc(a, g * t.val(b).transpose());
            t.acc(b, t.val(a).transpose() * g);
        });
    }

    // a * b^T
    Var matmul_nt(Var a, Var b) {
        if (val(a).cols() != val(b).cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
        Mat<S> y = val(a) * val(b).transpose();
        return unit(std::move(y), {a, b}, [a, b](Tape& t, const Mat<S>& g) {
            t.acc(a, g * t.val(b));
            t.acc(b, g.transpose() * t.val(a));
        });
    }

    Var transpose(Var a) {
        return unit(val(a).transpose(), {a},
                    [a](Tape& t, const Mat<S>& g) { t.acc(a, g.transpose()); });
    }

    // ---- shape ops --------------------------------------------------------

    Var vcat(Var a, Var b) {
        if (val(a).cols() != val(b).cols()) throw std::invalid_argument("vcat: col mismatch");
        Mat<S> y(val(a).rows() + val(b).rows(), val(a).cols());
        y.topRows(val(a).rows()) = val(a);
        y.bottomRows(val(b).rows()) = val(b);
        const Eigen::Index na = val(a).rows();
        return unit(std::move(y), {a, b}, [a, b, na](Tape& t, const Mat<S>& g) {
            t.acc(a, g.topRows(na));
            t.acc(b, g.bottomRows(g.rows() - na));
        });
    }

    Var hcat(const std::vector<Var>& xs) {
        if (xs.empty()) throw std::invalid_argument("hcat: empty");
        Eigen::Index cols = 0;
        for (Var x : xs) cols += val(x).cols();
        Mat<S> y(val(xs[0]).rows(), cols);
        Eigen::Index c = 0;
        for (Var x : xs) {
            y.middleCols(c, val(x).cols()) = val(x);
            c += val(x).cols();
        }
        std::vector<Var> deps = xs;
        return unit(std::move(y), deps, [deps](Tape& t, const Mat<S>& g) {
            Eigen::Index c = 0;
            for (Var x : deps) {
                const Eigen::Index w = t.val(x).cols();
                t.acc(x, g.middleCols(c, w));
                c += w;
            }
        });
    }

    Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
        if (r0 < 0 || n < 0 || r0 + n > val(a).rows())
            throw std::invalid_argument("slice_rows: out of range");
        return unit(val(a).middleRows(r0, n), {a}, [a, r0, n](Tape& t, const Mat<S>& g) {
            Mat<S> gi = Mat<S>::Zero(t.val(a).rows(), t.val(a).cols());
            gi.middleRows(r0, n) = g;
            t.acc(a, gi);
        });
    }

    Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
        if (c0 < 0 || n < 0 || c0 + n > val(a).cols())
            throw std::invalid_argument("slice_cols: out of range");
        return unit(val(a).middleCols(c0, n), {a}, [a, c0, n](Tape& t, const Mat<S>& g) {
            Mat<S> gi = Mat<S>::Zero(t.val(a).rows(), t.val(a).cols());
            gi.middleCols(c0, n) = g;
            t.acc(a, gi);
        });
    }

    // r: 1xd added to every row of a
    Var add_bcast_row(Var a, Var r) {
        if (val(r).rows() != 1 || val(r).cols() != val(a).cols())
            throw std::invalid_argument("add_bcast_row: shape mismatch");
        Mat<S> y = val(a).rowwise() + val(r).row(0);
        return unit(std::move(y), {a, r}, [a, r](Tape& t, const Mat<S>& g) {
            t.acc(a, g);
            t.acc(r, g.colwise().sum());
        });
    }

    Var broadcast_row(Var r, Eigen::Index n) {
        if (val(r).rows() != 1) throw std::invalid_argument("broadcast_row: need 1xd");
        Mat<S> y = val(r).replicate(n, 1);
        return unit(std::move(y), {r}, [r](Tape& t, const Mat<S>& g) {
            t.acc(r, g.colwise().sum());
        });
    }

    // w: nx1, scales row i of a by w(i)
    Var scale_rows(Var a, Var w) {
        if (val(w).cols() != 1 || val(w).rows() != val(a).rows())
            throw std::invalid_argument("scale_rows: shape mismatch");
        Mat<S> y = val(a).array().colwise() * val(w).col(0).array();
        return unit(std::move(y), {a, w}, [a, w](Tape& t, const Mat<S>& g) {
            t.acc(a, (g.array().colwise() * t.val(w).col(0).array()).matrix());
            Mat<S> gw = g.cwiseProduct(t.val(a)).rowwise().sum();
            t.acc(w, gw);
        });
    }

    Var rowwise_dot(Var a, Var b) {
        check_same_shape(a, b, "rowwise_dot");
        Mat<S> y = a_rowdot(val(a), val(b));
        return unit(std::move(y), {a, b}, [a, b](Tape& t, const Mat<S>& g) {
            t.acc(a, (t.val(b).array().colwise() * g.col(0).array()).matrix());
            t.acc(b, (t.val(a).array().colwise() * g.col(0).array()).matrix());
        });
    }

    // ---- reductions --------------------------------------------------------

    Var sum_all(Var a) {
        Mat<S> y(1, 1);
        y(0, 0) = val(a).sum();
        return unit(std::move(y), {a}, [a](Tape& t, const Mat<S>& g) {
            t.acc(a, Mat<S>::Constant(t.val(a).rows(), t.val(a).cols(), g(0, 0)));
        });
    }

    Var mean_all(Var a) { return scale(sum_all(a), S(1) / S(val(a).size())); }

    Var colwise_sum(Var a) {
        Mat<S> y = val(a).colwise().sum();
        return unit(std::move(y), {a}, [a](Tape& t, const Mat<S>& g) {
            t.acc(a, g.replicate(t.val(a).rows(), 1));
        });
    }

    // ---- normalization and softmax ------------------------------------------

    // softmax over each row; masked entries produce 0 and receive no gradient
    Var row_softmax(Var a, const Mask* mask = nullptr) {
        const auto& x = val(a);
        if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols()))
            throw std::invalid_argument("row_softmax: mask shape mismatch");
        Mat<S> y(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            S mx = std::numeric_limits<S>::lowest();
            int live = 0;
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                if (mask && !(*mask)(r, c)) continue;
                ++live;
                mx = std::max(mx, x(r, c));
            }
            if (live == 0) throw std::invalid_argument("row_softmax: fully masked row");
            S denom = S(0);
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                if (mask && !(*mask)(r, c)) {
                    y(r, c) = S(0);
                    continue;
                }
                y(r, c) = std::exp(x(r, c) - mx);
                denom += y(r, c);
            }
            y.row(r) /= denom;
        }
        Mat<S> yc = y;
        return unit(std::move(y), {a}, [a, yc](Tape& t, const Mat<S>& g) {
            Mat<S> gi(yc.rows(), yc.cols());
            for (Eigen::Index r = 0; r < yc.rows(); ++r) {
                const S dot = g.row(r).cwiseProduct(yc.row(r)).sum();
                gi.row(r) = yc.row(r).cwiseProduct(g.row(r) - Mat<S>::Constant(1, yc.cols(), dot));
            }
            t.acc(a, gi);
        });
    }

    // softmax over a single nx1 column
    Var vec_softmax(Var a, const MaskVec* mask = nullptr) {
        if (val(a).cols() != 1) throw std::invalid_argument("vec_softmax: need nx1");
        Mask m;
        const Mask* mp = nullptr;
        if (mask) {
            if (Eigen::Index(mask->size()) != val(a).rows())
                throw std::invalid_argument("vec_softmax: mask size mismatch");
            m.resize(val(a).rows(), 1);
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = (*mask)[size_t(i)];
            mp = &m;
        }
        Var tr = transpose(a);
        Mask mt;
        if (mp) mt = mp->transpose();
        Var sm = row_softmax(tr, mp ? &mt : nullptr);
        return transpose(sm);
    }

    // max over each row; optional valid-column mask shared by all rows.
    // Ties resolve to the lowest column index.
    Var rowwise_max(Var a, const MaskVec* valid_cols = nullptr) {
        const auto& x = val(a);
        if (valid_cols && Eigen::Index(valid_cols->size()) != x.cols())
            throw std::invalid_argument("rowwise_max: mask size mismatch");
        Mat<S> y(x.rows(), 1);
        std::vector<Eigen::Index> arg(size_t(x.rows()));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            Eigen::Index best = -1;
            S bv = std::numeric_limits<S>::lowest();
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                if (valid_cols && !(*valid_cols)[size_t(c)]) continue;
                if (best < 0 || x(r, c) > bv) {
                    best = c;
                    bv = x(r, c);
                }
            }
            if (best < 0) throw std::invalid_argument("rowwise_max: no valid column");
            y(r, 0) = bv;
            arg[size_t(r)] = best;
        }
        return unit(std::move(y), {a}, [a, arg](Tape& t, const Mat<S>& g) {
            Mat<S> gi = Mat<S>::Zero(t.val(a).rows(), t.val(a).cols());
            for (Eigen::Index r = 0; r < gi.rows(); ++r) gi(r, arg[size_t(r)]) = g(r, 0);
            t.acc(a, gi);
        });
    }

    // per-row layer norm with affine parameters gain, bias (both 1xd)
    Var layer_norm(Var x, Var gain, Var bias, S eps) {
        const auto& v = val(x);
        const Eigen::Index n = v.rows(), d = v.cols();
        if (val(gain).cols() != d || val(bias).cols() != d)
            throw std::invalid_argument("layer_norm: affine shape mismatch");
        Mat<S> xhat(n, d);
        Mat<S> inv_std(n, 1);
        for (Eigen::Index r = 0; r < n; ++r) {
            const S mu = v.row(r).mean();
            const S var = (v.row(r).array() - mu).square().mean();
            const S is = S(1) / std::sqrt(var + eps);
            inv_std(r, 0) = is;
            xhat.row(r) = (v.row(r).array() - mu) * is;
        }
        Mat<S> y = (xhat.array().rowwise() * val(gain).row(0).array()).matrix();
        y = y.rowwise() + val(bias).row(0);
        Mat<S> xh = xhat;
        Mat<S> isv = inv_std;
        return unit(std::move(y), {x, gain, bias},
                    [x, gain, bias, xh, isv](Tape& t, const Mat<S>& g) {
                        const Eigen::Index n = g.rows(), d = g.cols();
                        t.acc(bias, g.colwise().sum());
                        t.acc(gain, g.cwiseProduct(xh).colwise().sum());
                        Mat<S> gx(n, d);
                        const auto& gr = t.val(gain).row(0);
                        for (Eigen::Index r = 0; r < n; ++r) {
                            Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
                                g.row(r).cwiseProduct(gr);
                            const S m1 = dxhat.mean();
                            const S m2 = dxhat.cwiseProduct(xh.row(r)).mean();
                            gx.row(r) =
                                (dxhat.array() - m1 - xh.row(r).array() * m2) * isv(r, 0);
                        }
                        t.acc(x, gx);
                    });
    }

    Var l2normalize_rows(Var a, S eps = S(1e-12)) {
        const auto& x = val(a);
        Mat<S> norms(x.rows(), 1);
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            norms(r, 0) = std::sqrt(x.row(r).squaredNorm() + eps);
        Mat<S> y = x.array().colwise() / norms.col(0).array();
        Mat<S> yc = y, nc = norms;
        return unit(std::move(y), {a}, [a, yc, nc](Tape& t, const Mat<S>& g) {
            Mat<S> gi(yc.rows(), yc.cols());
            for (Eigen::Index r = 0; r < yc.rows(); ++r) {
                const S dot = g.row(r).cwiseProduct(yc.row(r)).sum();
                gi.row(r) = (g.row(r) - yc.row(r) * dot) / nc(r, 0);
            }
            t.acc(a, gi);
        });
    }

    // ---- indexing -----------------------------------------------------------

    Var gather_rows(Var table, std::vector<int> ids) {
        const auto& tb = val(table);
        Mat<S> y(Eigen::Index(ids.size()), tb.cols());
        for (size_t i = 0; i < ids.size(); ++i) {
            if (ids[i] < 0 || ids[i] >= tb.rows())
                throw std::out_of_range("gather_rows: id out of range");
            y.row(Eigen::Index(i)) = tb.row(ids[i]);
        }
        return unit(std::move(y), {table}, [table, ids](Tape& t, const Mat<S>& g) {
            Mat<S> gi = Mat<S>::Zero(t.val(table).rows(), t.val(table).cols());
            for (size_t i = 0; i < ids.size(); ++i) gi.row(ids[i]) += g.row(Eigen::Index(i));
            t.acc(table, gi);
        });
    }

    // assemble a rows x cols matrix from 1x1 vars in row-major order
    Var pack_scalars(const std::vector<Var>& xs, Eigen::Index rows, Eigen::Index cols) {
        if (Eigen::Index(xs.size()) != rows * cols)
            throw std::invalid_argument("pack_scalars: count mismatch");
        Mat<S> y(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) y(r, c) = val(xs[size_t(r * cols + c)])(0, 0);
        std::vector<Var> deps = xs;
        return unit(std::move(y), deps, [deps, cols](Tape& t, const Mat<S>& g) {
            for (Eigen::Index r = 0; r < g.rows(); ++r)
                for (Eigen::Index c = 0; c < g.cols(); ++c) {
                    Mat<S> gs(1, 1);
                    gs(0, 0) = g(r, c);
                    t.acc(deps[size_t(r * cols + c)], gs);
                }
        });
    }

    // mean (or sum) of log-softmax cross entropy over rows flagged in `use`;
    // log-sum-exp stabilized
    Var cross_entropy_rows(Var logits, std::vector<int> targets, MaskVec use, bool mean_reduce) {
        const auto& x = val(logits);
        if (Eigen::Index(targets.size()) != x.rows() || use.size() != targets.size())
            throw std::invalid_argument("cross_entropy_rows: target size mismatch");
        int n_used = 0;
        for (uint8_t u : use) n_used += u ? 1 : 0;
        if (n_used == 0) throw std::invalid_argument("cross_entropy_rows: no rows in use");
        Mat<S> probs(x.rows(), x.cols());
        S loss = S(0);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (!use[size_t(r)]) {
                probs.row(r).setZero();
                continue;
            }
            const int tgt = targets[size_t(r)];
            if (tgt < 0 || tgt >= x.cols())
                throw std::out_of_range("cross_entropy_rows: target out of range");
            const S mx = x.row(r).maxCoeff();
            const S lse = std::log((x.row(r).array() - mx).exp().sum()) + mx;
            probs.row(r) = (x.row(r).array() - lse).exp();
            loss += lse - x(r, tgt);
        }
        const S w = mean_reduce ? S(1) / S(n_used) : S(1);
        Mat<S> y(1, 1);
        y(0, 0) = loss * w;
        Mat<S> pc = probs;
        return unit(std::move(y), {logits},
                    [logits, targets, use, w, pc](Tape& t, const Mat<S>& g) {
                        Mat<S> gi = pc * (g(0, 0) * w);
                        for (Eigen::Index r = 0; r < gi.rows(); ++r) {
                            if (!use[size_t(r)]) continue;
                            gi(r, targets[size_t(r)]) -= g(0, 0) * w;
                        }
                        t.acc(logits, gi);
                    });
    }

    // per-row log softmax probability of a chosen column (diagnostic values,
    // same backward as cross entropy through pack of selected entries)
    std::vector<S> log_softmax_at(Var logits, const std::vector<int>& targets) const {
        const auto& x = val(logits);
        std::vector<S> out(size_t(x.rows()));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const S mx = x.row(r).maxCoeff();
            const S lse = std::log((x.row(r).array() - mx).exp().sum()) + mx;
            out[size_t(r)] = x(r, targets[size_t(r)]) - lse;
        }
        return out;
    }

private:
    struct Node {
        Mat<S> val;
        Mat<S> grad;
        std::function<void(Tape&)> back;
        bool rg = false;
    };

    std::vector<Node> nodes_;

    void check_same_shape(Var a, Var b, const char* op) const {
        if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
            throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }

    static Mat<S> a_rowdot(const Mat<S>& a, const Mat<S>& b) {
        Mat<S> y(a.rows(), 1);
        for (Eigen::Index r = 0; r < a.rows(); ++r) y(r, 0) = a.row(r).dot(b.row(r));
        return y;
    }

    template <class G>
    void acc(Var x, const G& g) {
        Node& n = nodes_[size_t(x.i)];
        if (!n.rg) return;
        if (n.grad.size() == 0) n.grad = Mat<S>::Zero(n.val.rows(), n.val.cols());
        n.grad += g;
    }

    // create a node whose backward distributes the output grad via fn
    template <class F>
    Var unit(Mat<S> value, std::initializer_list<Var> deps, F fn) {
        bool rg = false;
        for (Var d : deps) rg = rg || nodes_[size_t(d.i)].rg;
        return push(std::move(value), rg, std::move(fn));
    }

    template <class F>
    Var unit(Mat<S> value, const std::vector<Var>& deps, F fn) {
        bool rg = false;
        for (Var d : deps) rg = rg || nodes_[size_t(d.i)].rg;
        return push(std::move(value), rg, std::move(fn));
    }

    template <class F>
    Var push(Mat<S> value, bool rg, F fn) {
        Var out{int32_t(nodes_.size())};
        std::function<void(Tape&)> back;
        if (rg) {
            back = [out, fn = std::move(fn)](Tape& t) {
                fn(t, t.nodes_[size_t(out.i)].grad);
            };
        }
        nodes_.push_back(Node{std::move(value), Mat<S>(), std::move(back), rg});
        return out;
    }
};

}  // namespace tvrd::ad
