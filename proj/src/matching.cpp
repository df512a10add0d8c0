#include "tvrd/matching.hpp"

#include <limits>
#include <stdexcept>

namespace tvrd::matching {

double wti_pair_plain(const PlainTextSide& text, const PlainVideoSide& video) {
    const MatrixF cos = text.feats_norm * video.feats_norm.transpose();  // n_t x n_f
    double text_term = 0.0;
    for (Eigen::Index i = 0; i < cos.rows(); ++i)
        text_term += double(text.weights(i)) * double(cos.row(i).maxCoeff());
    double video_term = 0.0;
    for (Eigen::Index j = 0; j < cos.cols(); ++j) {
        float best = -std::numeric_limits<float>::infinity();
        bool any = false;
        for (Eigen::Index i = 0; i < cos.rows(); ++i) {
            if (!text.mask[size_t(i)]) continue;
            any = true;
            best = std::max(best, cos(i, j));
        }
        if (!any) throw std::invalid_argument("wti: all tokens masked");
        video_term += double(video.weights(j)) * double(best);
    }
    return 0.5 * (text_term + video_term);
}

}  // namespace tvrd::matching
