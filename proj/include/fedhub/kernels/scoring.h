#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace fedhub::kernels {

// Evaluates score(i) for i in [0, n). The parallel version distributes indices
// over OpenMP threads; `score` must be safe to call concurrently.
std::vector<double> score_all(std::size_t n, const std::function<double(std::size_t)>& score);

// Upper triangle (i < j) of a symmetric pairwise score, row-major packed.
std::vector<double> score_pairs(std::size_t n,
                                const std::function<double(std::size_t, std::size_t)>& score);

std::size_t pair_index(std::size_t n, std::size_t i, std::size_t j);

namespace serial {

std::vector<double> score_all(std::size_t n, const std::function<double(std::size_t)>& score);
std::vector<double> score_pairs(std::size_t n,
                                const std::function<double(std::size_t, std::size_t)>& score);

}  // namespace serial

int max_threads();

}  // namespace fedhub::kernels
