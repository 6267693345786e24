#include "lgdf/vgt/algebra.hpp"

#include <string>

#include "lgdf/core/error.hpp"

namespace lgdf::vgt {

SymSkewSplit split_sym_skew(const Mat3& m) {
  const Mat3 mt = m.transpose();
  return {0.5 * (m + mt), 0.5 * (m - mt)};
}

InvariantVec invariants(const SymSkewSplit& sw) {
  const Mat3 s2 = sw.s * sw.s;
  const Mat3 w2 = sw.w * sw.w;
  return {s2.trace(), w2.trace(), (s2 * sw.s).trace(), (w2 * sw.s).trace(), (w2 * s2).trace()};
}

TensorBases tensor_bases(const SymSkewSplit& sw) {
  const Mat3& s = sw.s;
  const Mat3& w = sw.w;
  const Mat3 I = Mat3::Identity();
  const Mat3 s2 = s * s;
  const Mat3 w2 = w * w;
  const Mat3 sw_ = s * w;
  const Mat3 ws = w * s;
  const Mat3 ws_sq = ws * ws;
  const Mat3 sw_sq = sw_ * sw_;
  const Mat3 wsw = w * s * w;
  const Mat3 sws = s * w * s;
  const Mat3 s2w2 = s2 * w2;

  TensorBases t;
  t[0] = s;
  t[1] = sw_ - ws;
  t[2] = s2 - I * (s2.trace() / 3.0);
  t[3] = w2 - I * (w2.trace() / 3.0);
  t[4] = ws_sq - s2 * w;
  t[5] = w2 * s + sw_sq - I * (2.0 / 3.0 * sw_sq.trace());
  t[6] = wsw * wsw - w2 * s * w;
  t[7] = sws * sws - s2 * w * s;
  t[8] = w2 * s2 + s2w2 - I * (2.0 / 3.0 * s2w2.trace());
  t[9] = ws_sq * w2 - w2 * s2 * w;
  return t;
}

Mat3 basis_expansion(std::span<const double> g, const TensorBases& t) {
  if (g.size() != t.size())
    throw ArgumentError("basis_expansion: expected 10 coefficients, got " + std::to_string(g.size()));
  Mat3 h = Mat3::Zero();
  for (std::size_t n = 0; n < t.size(); ++n) h += g[n] * t[n];
  return h;
}

PairFeatures lles_pair_features(const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_j,
                                const Eigen::VectorXd& v_i, const Eigen::VectorXd& v_j, double rho_i,
                                double rho_j, const PairNormalizers& norm, double box_L) {
  if (!(norm.d > 0.0) || !(norm.v_rms > 0.0) || !(norm.rho_rms > 0.0))
    throw ArgumentError("lles_pair_features: normalisers must be positive");
  const auto d = x_i.size();
  if (x_j.size() != d || v_i.size() != d || v_j.size() != d || d == 0)
    throw ArgumentError("lles_pair_features: position/velocity sizes differ");

  Eigen::VectorXd dx = x_i - x_j;
  if (box_L > 0.0)
    for (auto& v : dx) v -= box_L * std::round(v / box_L);

  PairFeatures f;
  f.b1 = dx / norm.d;
  f.b2 = (v_i - v_j) / norm.v_rms;
  f.I = {rho_i / norm.rho_rms, rho_j / norm.rho_rms, f.b1.norm(), f.b2.norm(), f.b1.dot(f.b2)};
  return f;
}

double q_invariant(const Mat3& m) { return -0.5 * (m * m).trace(); }

double r_invariant(const Mat3& m) { return -m.determinant(); }

double vieillefosse(const Mat3& m) {
  const double q = q_invariant(m), r = r_invariant(m);
  return q * q * q + 6.75 * r * r;
}

}  // namespace lgdf::vgt
