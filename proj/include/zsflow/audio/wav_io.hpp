#pragma once

// RIFF/WAVE, 16-bit PCM, mono, little-endian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "zsflow/audio/waveform.hpp"
#include "zsflow/io/binary.hpp"

namespace zsflow::audio {

inline void write_wav(std::ostream& os, const Waveform& wav) {
  const auto n = static_cast<std::uint32_t>(wav.size());
  const std::uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  io::put<std::uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::put<std::uint32_t>(os, 16);
  io::put<std::uint16_t>(os, 1);  // PCM
  io::put<std::uint16_t>(os, 1);  // mono
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(wav.sample_rate));
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(wav.sample_rate) * 2);
  io::put<std::uint16_t>(os, 2);
  io::put<std::uint16_t>(os, 16);
  os.write("data", 4);
  io::put<std::uint32_t>(os, data_bytes);
  for (float s : wav.samples) {
    const long q = std::lround(std::clamp(static_cast<double>(s), -1.0, 1.0) * 32767.0);
    io::put<std::int16_t>(os, static_cast<std::int16_t>(q));
  }
}

inline void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  io::write_atomic(path, [&](std::ostream& os) { write_wav(os, wav); });
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw AudioError("cannot open " + path.string());
  try {
    if (io::get_bytes(is, 4, "RIFF tag") != "RIFF") throw AudioError(path.string() + ": not a RIFF file");
    (void)io::get<std::uint32_t>(is, "RIFF size");
    if (io::get_bytes(is, 4, "WAVE tag") != "WAVE") throw AudioError(path.string() + ": not a WAVE file");
    Waveform w;
    bool have_fmt = false;
    while (true) {
      const std::string id = io::get_bytes(is, 4, "chunk id");
      const auto size = io::get<std::uint32_t>(is, "chunk size");
      if (id == "fmt ") {
        const auto format = io::get<std::uint16_t>(is, "format");
        const auto channels = io::get<std::uint16_t>(is, "channels");
        w.sample_rate = static_cast<int>(io::get<std::uint32_t>(is, "sample rate"));
        (void)io::get<std::uint32_t>(is, "byte rate");
        (void)io::get<std::uint16_t>(is, "block align");
        const auto bits = io::get<std::uint16_t>(is, "bits");
        if (format != 1 || channels != 1 || bits != 16)
          throw AudioError(path.string() + ": only 16-bit PCM mono is supported");
        if (size > 16) is.ignore(size - 16);
        have_fmt = true;
      } else if (id == "data") {
        if (!have_fmt) throw AudioError(path.string() + ": data chunk before fmt chunk");
        const std::size_t n = size / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(std::max(-1.0, io::get<std::int16_t>(is, "samples") / 32767.0));
        return w;
      } else {
        is.ignore(size + (size & 1));
      }
    }
  } catch (const io::FormatError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
}

}  // namespace zsflow::audio
