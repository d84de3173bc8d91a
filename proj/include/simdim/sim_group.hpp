#pragma once

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "simdim/common.hpp"

namespace simdim {

// Tolerance below which an input rotation is accepted verbatim. Larger
// drift up to the projection guard is repaired by polar projection; beyond
// that construction fails. Overridable through SIMDIM_ORTHO_TOL so the
// verify suite can demonstrate a broken-tolerance failure.
inline double ortho_accept_tol() {
  static const double tol = [] {
    if (const char* env = std::getenv("SIMDIM_ORTHO_TOL")) {
      try {
        const double v = std::stod(env);
        if (v > 0) return v;
      } catch (...) {
      }
    }
    return 1e-10;
  }();
  return tol;
}

constexpr double kOrthoProjectGuard = 1e-8;

// Operator norm (largest singular value). Explicit SVD for d <= 3, power
// iteration on A^T A otherwise.
inline double operator_norm(const Mat& a) {
  if (a.rows() <= 3) {
    Eigen::JacobiSVD<Mat> svd(a);
    return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()[0];
  }
  const Mat ata = a.transpose() * a;
  Vec v = Vec::Ones(a.cols()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vec w = ata * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    w /= nw;
    const double next = w.dot(ata * w);
    if (std::abs(next - lambda) <= 1e-12 * std::max(1.0, next)) {
      lambda = next;
      break;
    }
    lambda = next;
    v = w;
  }
  return std::sqrt(std::max(0.0, lambda));
}

// A similarity x -> rho * rot * x + trans with rho > 0 and rot orthogonal.
struct SimElement {
  double rho = 1.0;
  Mat rot;
  Vec trans;

  SimElement() : rot(Mat::Identity(1, 1)), trans(Vec::Zero(1)) {}

  SimElement(double rho_, Mat rot_, Vec trans_)
      : rho(rho_), rot(std::move(rot_)), trans(std::move(trans_)) {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ConstructionError("SimElement: rho must be positive and finite");
    if (rot.rows() != rot.cols()) throw ConstructionError("SimElement: rotation must be square");
    if (trans.size() != rot.rows()) throw ConstructionError("SimElement: translation dimension mismatch");
    const Mat gram = rot * rot.transpose();
    const double drift = (gram - Mat::Identity(rot.rows(), rot.cols())).norm();
    if (drift > ortho_accept_tol()) {
      if (drift > kOrthoProjectGuard) {
        std::ostringstream os;
        os << "SimElement: rotation drift " << drift << " exceeds guard " << kOrthoProjectGuard;
        throw ConstructionError(os.str());
      }
      // Nearest orthogonal matrix via polar decomposition.
      Eigen::JacobiSVD<Mat> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
      rot = svd.matrixU() * svd.matrixV().transpose();
    }
  }

  int dim() const { return static_cast<int>(rot.rows()); }

  static SimElement identity(int d) { return SimElement(1.0, Mat::Identity(d, d), Vec::Zero(d)); }

  static SimElement scaling_1d(double rho_, double trans_, bool reflect = false) {
    Mat u(1, 1);
    u(0, 0) = reflect ? -1.0 : 1.0;
    Vec b(1);
    b[0] = trans_;
    return SimElement(rho_, u, b);
  }

  static Mat rotation2d(double theta) {
    Mat u(2, 2);
    const double c = std::cos(theta), s = std::sin(theta);
    u << c, -s, s, c;
    return u;
  }
};

inline SimElement compose(const SimElement& g, const SimElement& h) {
  return SimElement(g.rho * h.rho, g.rot * h.rot, g.rho * (g.rot * h.trans) + g.trans);
}

inline SimElement inverse(const SimElement& g) {
  const Mat ut = g.rot.transpose();
  return SimElement(1.0 / g.rho, ut, -(ut * g.trans) / g.rho);
}

inline Vec apply(const SimElement& g, const Vec& x) { return g.rho * (g.rot * x) + g.trans; }

// d(g,h) = |log rho(g) - log rho(h)| + ||U(g) - U(h)||_op + |b(g) - b(h)|.
inline double metric_dist(const SimElement& g, const SimElement& h) {
  const double scale_term = std::abs(std::log(g.rho) - std::log(h.rho));
  double rot_term;
  if (g.rot.rows() == 1) {
    rot_term = std::abs(g.rot(0, 0) - h.rot(0, 0));
  } else {
    rot_term = operator_norm(g.rot - h.rot);
  }
  return scale_term + rot_term + (g.trans - h.trans).norm();
}

// Lie algebra element u = (alpha, beta) with alpha = scale_part*I + skew_part.
struct LieVector {
  double scale_part = 0.0;
  Mat skew_part;
  Vec trans_part;

  LieVector() : skew_part(Mat::Zero(1, 1)), trans_part(Vec::Zero(1)) {}

  LieVector(double scale, Mat skew, Vec trans)
      : scale_part(scale), skew_part(std::move(skew)), trans_part(std::move(trans)) {
    if (skew_part.rows() != skew_part.cols()) throw ConstructionError("LieVector: skew part must be square");
    if (trans_part.size() != skew_part.rows()) throw ConstructionError("LieVector: translation dimension mismatch");
    if ((skew_part + skew_part.transpose()).norm() > 1e-12)
      throw ConstructionError("LieVector: skew part is not antisymmetric");
  }

  static LieVector zero(int d) { return LieVector(0.0, Mat::Zero(d, d), Vec::Zero(d)); }

  int dim() const { return static_cast<int>(skew_part.rows()); }

  Mat alpha() const { return scale_part * Mat::Identity(dim(), dim()) + skew_part; }

  // Euclidean norm of the concatenated free coordinates.
  double norm() const {
    double s = scale_part * scale_part + trans_part.squaredNorm();
    for (int i = 0; i < dim(); ++i)
      for (int j = i + 1; j < dim(); ++j) s += 2.0 * skew_part(i, j) * skew_part(i, j);
    return std::sqrt(s);
  }

  LieVector scaled(double c) const { return LieVector(c * scale_part, c * skew_part, c * trans_part); }

  LieVector plus(const LieVector& o) const {
    return LieVector(scale_part + o.scale_part, skew_part + o.skew_part, trans_part + o.trans_part);
  }
};

// psi_x(u) = alpha x + beta, the differential at zero of u -> exp(u)x.
inline Vec differential_psi(const Vec& x, const LieVector& u) {
  return u.scale_part * x + u.skew_part * x + u.trans_part;
}

// Affine embedding g -> [[rho U, b], [0, 1]] in GL_{d+1}.
inline Mat embed_affine(const SimElement& g) {
  const int d = g.dim();
  Mat m = Mat::Zero(d + 1, d + 1);
  m.topLeftCorner(d, d) = g.rho * g.rot;
  m.topRightCorner(d, 1) = g.trans;
  m(d, d) = 1.0;
  return m;
}

namespace detail {

// phi(alpha) = sum_{k>=0} alpha^k / (k+1)!  (so b(exp u) = phi(alpha) beta).
// Safe for moderate ||alpha||; large negative scale parts cancel badly, so
// callers switch to the (e^alpha - I) alpha^{-1} form there.
inline Mat phi_series(const Mat& alpha) {
  const int n = static_cast<int>(alpha.rows());
  Mat result = Mat::Identity(n, n);
  Mat term = Mat::Identity(n, n);
  for (int k = 1; k <= 60; ++k) {
    term = term * alpha / static_cast<double>(k + 1);
    result += term;
    if (term.norm() < 1e-19 * result.norm()) break;
  }
  return result;
}

// exp of a skew-symmetric matrix through its rotation-block form.
inline Mat exp_skew(const Mat& w) {
  const int d = static_cast<int>(w.rows());
  if (d == 1) return Mat::Identity(1, 1);
  Eigen::RealSchur<Mat> schur(w);
  const Mat t = schur.matrixT();
  const Mat q = schur.matrixU();
  Mat r = Mat::Identity(d, d);
  int i = 0;
  while (i < d) {
    const bool is_block = (i + 1 < d) && (std::abs(t(i + 1, i)) > 1e-14);
    if (is_block) {
      const double theta = 0.5 * (t(i + 1, i) - t(i, i + 1));
      r(i, i) = std::cos(theta);
      r(i + 1, i + 1) = std::cos(theta);
      r(i, i + 1) = -std::sin(theta);
      r(i + 1, i) = std::sin(theta);
      i += 2;
    } else {
      i += 1;
    }
  }
  return q * r * q.transpose();
}

// Block-rotation form of an orthogonal matrix via the real Schur
// decomposition. Returns the principal skew logarithm, or throws when an
// eigenvalue sits at -1 (angle pi) within tolerance.
inline Mat log_orthogonal(const Mat& u, double minus_one_tol = 1e-8) {
  const int d = static_cast<int>(u.rows());
  if (d == 1) {
    if (u(0, 0) < 0.0) throw RotationBranchError("log_map: 1x1 rotation part is a reflection");
    return Mat::Zero(1, 1);
  }
  Eigen::RealSchur<Mat> schur(u);
  const Mat t = schur.matrixT();
  const Mat q = schur.matrixU();
  Mat w = Mat::Zero(d, d);
  int i = 0;
  while (i < d) {
    const bool is_block = (i + 1 < d) && (std::abs(t(i + 1, i)) > 1e-12);
    if (is_block) {
      const double c = 0.5 * (t(i, i) + t(i + 1, i + 1));
      const double s = 0.5 * (t(i + 1, i) - t(i, i + 1));
      const double theta = std::atan2(s, c);
      if (M_PI - std::abs(theta) <= minus_one_tol)
        throw RotationBranchError("log_map: rotation angle at pi (principal branch undefined)");
      w(i, i + 1) = -theta;
      w(i + 1, i) = theta;
      i += 2;
    } else {
      // Real eigenvalues of an orthogonal matrix are +-1.
      if (t(i, i) < 0.0) throw RotationBranchError("log_map: orthogonal part has eigenvalue -1");
      i += 1;
    }
  }
  return q * w * q.transpose();
}

}  // namespace detail

// Group exponential: rho(exp u) = e^{scale_part} exactly, the rotation part
// exponentiates the skew block, and b = phi(alpha) beta. For |scale| away
// from zero the well-conditioned form (e^alpha - I) alpha^{-1} beta is used
// instead of the series (which cancels catastrophically for strongly
// contracting directions).
inline SimElement exp_map(const LieVector& u) {
  const int d = u.dim();
  const double s = u.scale_part;
  const double rho = std::exp(s);
  const Mat rot = detail::exp_skew(u.skew_part);
  Vec b(d);
  if (std::abs(s) > 1.5) {
    const Mat alpha = u.alpha();
    const Mat exp_alpha = rho * rot;
    const Vec z = alpha.partialPivLu().solve(u.trans_part);
    b = exp_alpha * z - z;
  } else {
    b = detail::phi_series(u.alpha()) * u.trans_part;
  }
  return SimElement(rho, rot, b);
}

// Principal logarithm. Requires every rotation angle of U(g) strictly inside
// (-pi, pi); eigenvalues at -1 raise RotationBranchError.
inline LieVector log_map(const SimElement& g) {
  const int d = g.dim();
  const double s = std::log(g.rho);
  const Mat w = detail::log_orthogonal(g.rot);
  const Mat alpha = s * Mat::Identity(d, d) + w;
  Vec beta(d);
  if (std::abs(s) > 1.5) {
    // beta = alpha (e^alpha - I)^{-1} b; e^alpha - I is well conditioned
    // away from s = 0.
    const Mat exp_alpha = g.rho * g.rot;
    beta = alpha * (exp_alpha - Mat::Identity(d, d)).partialPivLu().solve(g.trans);
  } else {
    beta = detail::phi_series(alpha).partialPivLu().solve(g.trans);
  }
  return LieVector(s, w, beta);
}

}  // namespace simdim
