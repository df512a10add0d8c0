#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace tvrd::metrics {

struct RetrievalMetrics {
    double r1 = 0.0;   // percentages
    double r5 = 0.0;
    double r10 = 0.0;
    double rsum = 0.0;
    std::string direction;  // "T2V" or "V2T"
};

// Pessimistic rank of the diagonal entry of each row: ties count as ranked
// ahead of the ground-truth item.
std::vector<int> t2v_ranks(const Eigen::MatrixXd& sim);

// both directions from one matrix with texts on the rows
std::pair<RetrievalMetrics, RetrievalMetrics> recall_at_k(const Eigen::MatrixXd& sim);

RetrievalMetrics metrics_from_ranks(const std::vector<int>& ranks, const std::string& direction);

}  // namespace tvrd::metrics
