#pragma once

#include <Eigen/Core>
#include <string>

namespace tvrd {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Binary matrix file: 8-byte magic "TVRDMAT1", uint32 rows, uint32 cols,
// then rows*cols little-endian float32 values in row-major order.
void write_matrix(const std::string& path, const MatrixF& m);
MatrixF read_matrix(const std::string& path);

}  // namespace tvrd
