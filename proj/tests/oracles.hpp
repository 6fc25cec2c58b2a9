#pragma once

// Independent reference implementations on nested vectors. They share no code
// with the library and are used to freeze expected values.

#include <cmath>
#include <random>
#include <vector>

#include "gcvrnn/tensor.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from(const gcvrnn::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

inline gcvrnn::Tensor to_tensor(const Mat& m) {
  gcvrnn::Tensor t = gcvrnn::Tensor::zeros(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) t(r, c) = m[r][c];
  return t;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline Mat relu(Mat m) {
  for (auto& r : m)
    for (auto& v : r) v = v > 0.0 ? v : 0.0;
  return m;
}

inline Mat affine(const Mat& x, const Mat& w, const Mat& b) {
  Mat y = matmul(x, w);
  for (auto& r : y)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[0][j];
  return y;
}

inline Mat mlp2(const Mat& x, const Mat& w0, const Mat& b0, const Mat& w1, const Mat& b1) {
  return affine(relu(affine(x, w0, b0)), w1, b1);
}

inline Mat concat(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t r = 0; r < a.size(); ++r) out[r].insert(out[r].end(), b[r].begin(), b[r].end());
  return out;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Textbook GRU with separate gate matrices taken from column blocks r|u|n.
inline Mat gru(const Mat& x, const Mat& h, const Mat& wx, const Mat& bx, const Mat& wh, const Mat& bh) {
  const std::size_t H = h[0].size();
  Mat gx = affine(x, wx, bx), gh = affine(h, wh, bh);
  Mat out = h;
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = 0; j < H; ++j) {
      const double r = sigmoid(gx[i][j] + gh[i][j]);
      const double u = sigmoid(gx[i][H + j] + gh[i][H + j]);
      const double n = std::tanh(gx[i][2 * H + j] + r * gh[i][2 * H + j]);
      out[i][j] = (1.0 - u) * n + u * h[i][j];
    }
  }
  return out;
}

/// Degree-normalized GCN propagation matrix D^-1/2 (A + I) D^-1/2 for a fully
/// connected graph of n nodes.
inline Mat gcn_propagation_full(std::size_t n) {
  Mat a(n, std::vector<double>(n, 1.0));
  const double d = static_cast<double>(n);
  for (auto& r : a)
    for (auto& v : r) v /= std::sqrt(d) * std::sqrt(d);
  return a;
}

inline Mat random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, std::vector<double>(c));
  for (auto& row : m)
    for (auto& v : row) v = u(rng);
  return m;
}

inline double max_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

}  // namespace oracle
