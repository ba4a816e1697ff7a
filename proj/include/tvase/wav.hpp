#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tvase/common.hpp"

namespace tvase {

enum class WavFormat { pcm16, float32 };

struct WavData {
    std::vector<float> samples; // mono, normalized to [-1, 1] for PCM
    int sample_rate = 16000;
    WavFormat format = WavFormat::float32;
};

// Mono 16 kHz PCM16 / float32 only; anything else is rejected, never resampled.
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate = 16000,
               WavFormat format = WavFormat::float32);

} // namespace tvase
