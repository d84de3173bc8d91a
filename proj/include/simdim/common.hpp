#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace simdim {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Error taxonomy. Every failure a caller is expected to handle gets its
// own type so the CLI can map it onto an exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConstructionError : Error {
  using Error::Error;
};
struct RotationBranchError : Error {
  using Error::Error;
};
struct BudgetExceeded : Error {
  BudgetExceeded(const std::string& what, int completed)
      : Error(what), largest_completed_n(completed) {}
  int largest_completed_n = 0;
};
struct AmbiguousDedup : Error {
  using Error::Error;
};
struct StoppingCapExceeded : Error {
  using Error::Error;
};
struct TooFewSamples : Error {
  using Error::Error;
};
struct ScaleRangeTooNarrow : Error {
  using Error::Error;
};
struct NotContractingOnAverage : Error {
  using Error::Error;
};
struct PreconditionViolation : Error {
  using Error::Error;
};
struct BlockPlanInfeasible : Error {
  using Error::Error;
};
struct ScaleMismatch : Error {
  using Error::Error;
};
struct HypothesisUnverifiable : Error {
  using Error::Error;
};
struct EmptyCloud : Error {
  using Error::Error;
};
struct ExactOverflow : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// Flat point storage: row-major, point i occupies data[i*d .. i*d+d).
struct PointCloud {
  int d = 1;
  std::vector<double> data;

  std::size_t size() const { return d == 0 ? 0 : data.size() / static_cast<std::size_t>(d); }
  const double* point(std::size_t i) const { return data.data() + i * static_cast<std::size_t>(d); }
  double* point(std::size_t i) { return data.data() + i * static_cast<std::size_t>(d); }
  Vec point_vec(std::size_t i) const {
    Vec v(d);
    for (int k = 0; k < d; ++k) v[k] = data[i * static_cast<std::size_t>(d) + k];
    return v;
  }
  void push(const Vec& v) {
    for (int k = 0; k < d; ++k) data.push_back(v[k]);
  }
};

inline std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

}  // namespace simdim
