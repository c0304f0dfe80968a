#include "usonic/common/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "usonic/common/error.hpp"

namespace usonic {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// KSDATAFORMAT_SUBTYPE_IEEE_FLOAT; the PCM GUID differs only in the first byte.
constexpr std::array<std::uint8_t, 16> kFloatGuid = {0x03, 0x00, 0x00, 0x00, 0x00, 0x00,
                                                      0x10, 0x00, 0x80, 0x00, 0x00, 0xAA,
                                                      0x00, 0x38, 0x9B, 0x71};

class LeWriter {
 public:
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void tag(const char* t) { buf_.append(t, 4); }
  void bytes(const void* p, std::size_t n) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    buf_.append(static_cast<const char*>(p), n);
  }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

std::uint16_t get_u16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

void write_wav_f32(const std::filesystem::path& path, const WavData& data) {
  const auto nch = static_cast<std::uint32_t>(data.channels.size());
  if (nch == 0 || nch > 65535) throw DataError("WAV: invalid channel count");
  if (data.sample_rate_hz <= 0) throw DataError("WAV: invalid sample rate");
  const std::size_t frames = data.num_frames();
  for (const auto& ch : data.channels) {
    if (ch.size() != frames) throw DataError("WAV: channels differ in length");
  }
  const std::uint64_t data_bytes = static_cast<std::uint64_t>(frames) * nch * 4;
  if (data_bytes > 0xFFFFFF00ull) throw DataError("WAV: payload exceeds RIFF 4 GiB limit");

  const bool extensible = nch > 2;
  LeWriter fmt;
  fmt.u16(extensible ? kFormatExtensible : kFormatFloat);
  fmt.u16(static_cast<std::uint16_t>(nch));
  fmt.u32(static_cast<std::uint32_t>(data.sample_rate_hz));
  fmt.u32(static_cast<std::uint32_t>(data.sample_rate_hz) * nch * 4);
  fmt.u16(static_cast<std::uint16_t>(nch * 4));
  fmt.u16(32);
  if (extensible) {
    fmt.u16(22);
    fmt.u16(32);
    fmt.u32(0);  // no speaker mapping
    fmt.bytes(kFloatGuid.data(), kFloatGuid.size());
  } else {
    fmt.u16(0);
  }

  LeWriter head;
  const std::uint32_t riff_size = static_cast<std::uint32_t>(
      4 + (8 + fmt.str().size()) + (8 + 4) + (8 + data_bytes));
  head.tag("RIFF");
  head.u32(riff_size);
  head.tag("WAVE");
  head.tag("fmt ");
  head.u32(static_cast<std::uint32_t>(fmt.str().size()));
  head.bytes(fmt.str().data(), fmt.str().size());
  head.tag("fact");
  head.u32(4);
  head.u32(static_cast<std::uint32_t>(frames));
  head.tag("data");
  head.u32(static_cast<std::uint32_t>(data_bytes));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("WAV: cannot open '" + path.string() + "' for writing");
  out.write(head.str().data(), static_cast<std::streamsize>(head.str().size()));
  std::vector<float> interleaved(static_cast<std::size_t>(nch) * 4096);
  for (std::size_t f0 = 0; f0 < frames; f0 += 4096) {
    const std::size_t n = std::min<std::size_t>(4096, frames - f0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint32_t c = 0; c < nch; ++c) interleaved[i * nch + c] = data.channels[c][f0 + i];
    }
    out.write(reinterpret_cast<const char*>(interleaved.data()),
              static_cast<std::streamsize>(n * nch * sizeof(float)));
  }
  if (!out) throw DataError("WAV: write failed for '" + path.string() + "'");
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("WAV: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw DataError("WAV: '" + path.string() + "' is not a RIFF WAVE file");
  }

  std::uint16_t format = 0, nch = 0, bits = 0;
  std::uint32_t rate = 0;
  const char* payload = nullptr;
  std::size_t payload_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = get_u32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw DataError("WAV: truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) throw DataError("WAV: short fmt chunk");
      format = get_u16(bytes.data() + body);
      nch = get_u16(bytes.data() + body + 2);
      rate = get_u32(bytes.data() + body + 4);
      bits = get_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw DataError("WAV: short extensible fmt chunk");
        format = get_u16(bytes.data() + body + 24);  // first GUID word carries the format tag
      }
    } else if (id == "data") {
      payload = bytes.data() + body;
      payload_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (nch == 0 || rate == 0) throw DataError("WAV: missing fmt chunk");
  if (payload == nullptr) throw DataError("WAV: missing data chunk");

  WavData out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.channels.assign(nch, {});
  if (format == kFormatFloat && bits == 32) {
    const std::size_t frames = payload_size / (4u * nch);
    for (auto& ch : out.channels) ch.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::uint16_t c = 0; c < nch; ++c) {
        float v;
        std::memcpy(&v, payload + (f * nch + c) * 4, 4);
        out.channels[c][f] = v;
      }
    }
  } else if (format == kFormatPcm && bits == 16) {
    const std::size_t frames = payload_size / (2u * nch);
    for (auto& ch : out.channels) ch.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::uint16_t c = 0; c < nch; ++c) {
        std::int16_t v;
        std::memcpy(&v, payload + (f * nch + c) * 2, 2);
        out.channels[c][f] = static_cast<float>(v) / 32768.0f;
      }
    }
  } else {
    throw DataError("WAV: unsupported sample format (tag " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits)");
  }
  return out;
}

}  // namespace usonic
