#include "fedhub/kernels/scoring.h"

#include <omp.h>

namespace fedhub::kernels {

namespace {
constexpr std::ptrdiff_t kParallelThreshold = 16;
}

std::size_t pair_index(std::size_t n, std::size_t i, std::size_t j) {
  // Row i starts after rows 0..i-1, which hold (n-1) + (n-2) + ... + (n-i) entries.
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

std::vector<double> score_all(std::size_t n, const std::function<double(std::size_t)>& score) {
  std::vector<double> out(n, 0.0);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4) if (count > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < count; ++i) out[i] = score(static_cast<std::size_t>(i));
  return out;
}

std::vector<double> score_pairs(std::size_t n,
                                const std::function<double(std::size_t, std::size_t)>& score) {
  std::vector<double> out(n < 2 ? 0 : n * (n - 1) / 2, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1) if (rows > kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < n; ++j) {
      out[pair_index(n, static_cast<std::size_t>(i), j)] = score(static_cast<std::size_t>(i), j);
    }
  }
  return out;
}

namespace serial {

std::vector<double> score_all(std::size_t n, const std::function<double(std::size_t)>& score) {
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(score(i));
  return out;
}

std::vector<double> score_pairs(std::size_t n,
                                const std::function<double(std::size_t, std::size_t)>& score) {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) out.push_back(score(i, j));
  }
  return out;
}

}  // namespace serial

int max_threads() { return omp_get_max_threads(); }

}  // namespace fedhub::kernels
