#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace netperm {

inline constexpr const char* version_string = "0.1.0";

/// Invalid or inconsistent input data (bad indices, malformed files,
/// precondition violations). Mapped to exit code 2 by the CLI.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure that prevents producing a result (factorization
/// breakdown, nonfinite statistic on observed data). Exit code 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Minimal row-major dense matrix used for AFT design matrices and
/// correlation matrices. Not a linear-algebra type; just storage.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t nrow, std::size_t ncol, double fill = 0.0)
      : nrow_(nrow), ncol_(ncol), a_(nrow * ncol, fill) {}

  std::size_t nrow() const { return nrow_; }
  std::size_t ncol() const { return ncol_; }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * ncol_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * ncol_ + j]; }

  const double* row(std::size_t i) const { return a_.data() + i * ncol_; }
  double* row(std::size_t i) { return a_.data() + i * ncol_; }

  std::vector<double>& data() { return a_; }
  const std::vector<double>& data() const { return a_; }

 private:
  std::size_t nrow_ = 0;
  std::size_t ncol_ = 0;
  std::vector<double> a_;
};

}  // namespace netperm
