#include "tvase/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tvase {

namespace {

template <typename V>
V read_le(std::istream& is, const char* what) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw IoError(std::string("WAV truncated while reading ") + what);
    return v;
}

template <typename V>
void write_le(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

} // namespace

WavData read_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open WAV '" + path + "'");
    char tag[4];
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "RIFF", 4) != 0) throw IoError("'" + path + "' is not RIFF");
    read_le<uint32_t>(is, "riff size");
    is.read(tag, 4);
    if (!is || std::memcmp(tag, "WAVE", 4) != 0) throw IoError("'" + path + "' is not WAVE");

    uint16_t audio_format = 0, channels = 0, bits = 0;
    uint32_t sample_rate = 0;
    bool have_fmt = false;
    WavData out;
    while (is.read(tag, 4)) {
        const auto chunk_size = read_le<uint32_t>(is, "chunk size");
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            audio_format = read_le<uint16_t>(is, "format");
            channels = read_le<uint16_t>(is, "channels");
            sample_rate = read_le<uint32_t>(is, "sample rate");
            read_le<uint32_t>(is, "byte rate");
            read_le<uint16_t>(is, "block align");
            bits = read_le<uint16_t>(is, "bits");
            if (chunk_size > 16) is.seekg(chunk_size - 16, std::ios::cur);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw IoError("'" + path + "': data before fmt chunk");
            if (channels != 1) throw IoError("'" + path + "': only mono WAV is supported");
            if (audio_format == 1 && bits == 16) {
                out.format = WavFormat::pcm16;
                const size_t n = chunk_size / 2;
                std::vector<int16_t> raw(n);
                is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(chunk_size));
                if (!is) throw IoError("'" + path + "': data chunk truncated");
                out.samples.resize(n);
                for (size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(raw[i]) / 32768.0f;
            } else if (audio_format == 3 && bits == 32) {
                out.format = WavFormat::float32;
                const size_t n = chunk_size / 4;
                out.samples.resize(n);
                is.read(reinterpret_cast<char*>(out.samples.data()),
                        static_cast<std::streamsize>(chunk_size));
                if (!is) throw IoError("'" + path + "': data chunk truncated");
            } else {
                throw IoError("'" + path + "': unsupported WAV encoding (need PCM16 or float32)");
            }
            out.sample_rate = static_cast<int>(sample_rate);
            return out;
        } else {
            is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
        }
    }
    throw IoError("'" + path + "': no data chunk");
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate,
               WavFormat format) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open WAV '" + path + "' for writing");
    const uint16_t channels = 1;
    const uint16_t bits = format == WavFormat::pcm16 ? 16 : 32;
    const uint32_t data_size = static_cast<uint32_t>(samples.size() * (bits / 8));
    os.write("RIFF", 4);
    write_le<uint32_t>(os, 36 + data_size);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    write_le<uint32_t>(os, 16);
    write_le<uint16_t>(os, format == WavFormat::pcm16 ? 1 : 3);
    write_le<uint16_t>(os, channels);
    write_le<uint32_t>(os, static_cast<uint32_t>(sample_rate));
    write_le<uint32_t>(os, static_cast<uint32_t>(sample_rate) * channels * bits / 8);
    write_le<uint16_t>(os, static_cast<uint16_t>(channels * bits / 8));
    write_le<uint16_t>(os, bits);
    os.write("data", 4);
    write_le<uint32_t>(os, data_size);
    if (format == WavFormat::pcm16) {
        for (float s : samples) {
            const float clamped = std::clamp(s, -1.0f, 1.0f);
            write_le<int16_t>(os, static_cast<int16_t>(std::lrintf(clamped * 32767.0f)));
        }
    } else {
        os.write(reinterpret_cast<const char*>(samples.data()),
                 static_cast<std::streamsize>(samples.size() * sizeof(float)));
    }
    if (!os) throw IoError("write failed for WAV '" + path + "'");
}

} // namespace tvase
