#include "tvrd/metrics.hpp"

#include <stdexcept>

namespace tvrd::metrics {

std::vector<int> t2v_ranks(const Eigen::MatrixXd& sim) {
    if (sim.rows() != sim.cols() || sim.rows() < 1)
        throw std::invalid_argument("ranks: similarity matrix must be square");
    std::vector<int> ranks(size_t(sim.rows()));
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        const double truth = sim(i, i);
        int ahead = 0;
        for (Eigen::Index j = 0; j < sim.cols(); ++j) {
            if (j == i) continue;
            if (sim(i, j) >= truth) ++ahead;
        }
        ranks[size_t(i)] = ahead + 1;
    }
    return ranks;
}

RetrievalMetrics metrics_from_ranks(const std::vector<int>& ranks, const std::string& direction) {
    if (ranks.empty()) throw std::invalid_argument("metrics: empty rank list");
    RetrievalMetrics m;
    m.direction = direction;
    const double n = double(ranks.size());
    int c1 = 0, c5 = 0, c10 = 0;
    for (int r : ranks) {
        c1 += r <= 1;
        c5 += r <= 5;
        c10 += r <= 10;
    }
    m.r1 = 100.0 * c1 / n;
    m.r5 = 100.0 * c5 / n;
    m.r10 = 100.0 * c10 / n;
    m.rsum = m.r1 + m.r5 + m.r10;
    return m;
}

std::pair<RetrievalMetrics, RetrievalMetrics> recall_at_k(const Eigen::MatrixXd& sim) {
    const auto t2v = metrics_from_ranks(t2v_ranks(sim), "T2V");
    const Eigen::MatrixXd simT = sim.transpose();
    const auto v2t = metrics_from_ranks(t2v_ranks(simT), "V2T");
    return {t2v, v2t};
}

}  // namespace tvrd::metrics
