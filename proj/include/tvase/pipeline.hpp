#pragma once

#include <vector>

#include "tvase/model.hpp"
#include "tvase/streaming.hpp"

namespace tvase {

// Joint enhancement of one clip. Inputs are zero-padded to a whole number of
// hops (at least one analysis window); the output is truncated back to the
// input length, so output length always equals input length.

template <typename T>
std::vector<T> enhance_batch(const std::vector<T>& mic, const std::vector<T>& far,
                             const WeightStore<T>& w, const ModelConfig& cfg);

template <typename T>
std::vector<T> enhance_stream(const std::vector<T>& mic, const std::vector<T>& far,
                              const WeightStore<T>& w, const ModelConfig& cfg);

std::vector<float> enhance_batch(const std::vector<float>& mic, const std::vector<float>& far,
                                 const ModelWeights& w);
std::vector<float> enhance_stream(const std::vector<float>& mic, const std::vector<float>& far,
                                  const ModelWeights& w);

} // namespace tvase
