#ifndef CLOZE_NN_HPP_
#define CLOZE_NN_HPP_

#include <cmath>

#include <Eigen/Core>

namespace cloze {

// Dense math kernels shared by the encoder and the heads. All are pure and
// scalar-generic over Eigen expressions.

template <typename Derived>
using PlainMatrix =
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Row-wise softmax, stabilized by the row maximum.
template <typename Derived>
PlainMatrix<Derived> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  PlainMatrix<Derived> z =
      (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  return (z.array().colwise() / z.array().rowwise().sum()).matrix();
}

// Given probabilities p = softmax_rows(s) and dL/dp, returns dL/ds.
template <typename DerivedP, typename DerivedG>
PlainMatrix<DerivedP> softmax_rows_backward(const Eigen::MatrixBase<DerivedP>& probs,
                                            const Eigen::MatrixBase<DerivedG>& dprobs) {
  auto inner = (dprobs.array() * probs.array()).rowwise().sum();
  return (probs.array() * (dprobs.array().colwise() - inner)).matrix();
}

template <typename Scalar>
Scalar gelu_scalar(Scalar x) {
  return x * Scalar(0.5) * (Scalar(1) + std::erf(x * Scalar(M_SQRT1_2)));
}

template <typename Scalar>
Scalar gelu_grad_scalar(Scalar x) {
  const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x * Scalar(M_SQRT1_2)));
  const Scalar pdf = std::exp(Scalar(-0.5) * x * x) /
                     std::sqrt(Scalar(2) * Scalar(M_PI));
  return cdf + x * pdf;
}

template <typename Derived>
PlainMatrix<Derived> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu_scalar(v); });
}

// dL/dx for y = gelu(x), given pre-activation x and dL/dy.
template <typename DerivedX, typename DerivedG>
PlainMatrix<DerivedX> gelu_backward(const Eigen::MatrixBase<DerivedX>& x,
                                    const Eigen::MatrixBase<DerivedG>& dy) {
  using Scalar = typename DerivedX::Scalar;
  return (x.unaryExpr([](Scalar v) { return gelu_grad_scalar(v); }).array() *
          dy.array())
      .matrix();
}

}  // namespace cloze

#endif  // CLOZE_NN_HPP_
