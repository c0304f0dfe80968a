#pragma once

#include <filesystem>
#include <vector>

namespace usonic {

/// Channel-major audio block as stored in / loaded from a RIFF WAVE file.
struct WavData {
  int sample_rate_hz = 0;
  std::vector<std::vector<float>> channels;

  std::size_t num_frames() const { return channels.empty() ? 0 : channels.front().size(); }
};

/// Writes 32-bit IEEE float WAVE. Files with more than two channels use
/// WAVE_FORMAT_EXTENSIBLE. Throws DataError on I/O failure.
void write_wav_f32(const std::filesystem::path& path, const WavData& data);

/// Reads 32-bit float or 16-bit PCM WAVE (plain or extensible header).
/// Throws DataError for anything else.
WavData read_wav(const std::filesystem::path& path);

}  // namespace usonic
