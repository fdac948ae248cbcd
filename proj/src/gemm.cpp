#include "deformer/detail/gemm.hpp"

#include <Eigen/Core>

namespace deformer::detail {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m) {
  Map(c, idx(n), idx(m)).noalias() += ConstMap(a, idx(n), idx(k)) * ConstMap(b, idx(k), idx(m));
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m) {
  Map(c, idx(n), idx(k)).noalias() +=
      ConstMap(a, idx(n), idx(m)) * ConstMap(b, idx(k), idx(m)).transpose();
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m) {
  Map(c, idx(k), idx(m)).noalias() +=
      ConstMap(a, idx(n), idx(k)).transpose() * ConstMap(b, idx(n), idx(m));
}

}  // namespace deformer::detail
