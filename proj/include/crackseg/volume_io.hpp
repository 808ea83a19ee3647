///   @file volume_io.hpp
///   @brief Raw volume files with a JSON sidecar header.
///
/// A volume stored at `path` consists of two files:
///   - `path`        raw little-endian samples, x-fastest
///   - `path.json`   {"dims":[nx,ny,nz], "dtype":"f32"|"u8",
///                    "order":"x-fastest", "kind":"gray"|"mask"}
/// Gray volumes are written as f32, masks as u8 holding 0 or 1. Readers
/// also accept u8 gray volumes (e.g. 8-bit scans).

#ifndef CRACKSEG_VOLUME_IO_HPP
#define CRACKSEG_VOLUME_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "volume.hpp"

namespace crackseg {

enum class VolumeKind { gray, mask };
enum class SampleType { f32, u8 };

struct VolumeHeader {
  Dims dims;
  SampleType dtype = SampleType::f32;
  VolumeKind kind = VolumeKind::gray;
  std::optional<std::pair<float, float>> value_range;
};

inline std::filesystem::path header_path(const std::filesystem::path& blob) {
  return std::filesystem::path(blob.string() + ".json");
}

namespace detail {

inline nlohmann::ordered_json header_to_json(const VolumeHeader& h) {
  nlohmann::ordered_json j;
  j["dims"] = {h.dims.nx, h.dims.ny, h.dims.nz};
  j["dtype"] = h.dtype == SampleType::f32 ? "f32" : "u8";
  j["order"] = "x-fastest";
  j["kind"] = h.kind == VolumeKind::gray ? "gray" : "mask";
  if (h.value_range) j["value_range"] = {h.value_range->first, h.value_range->second};
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + p.string());
}

inline void write_blob(const std::filesystem::path& p, const void* data, std::size_t bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!os) throw IoError("failed writing " + p.string());
}

inline std::vector<char> read_blob(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline float load_f32_le(const char* p) {
  std::uint32_t u;
  std::memcpy(&u, p, 4);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  return std::bit_cast<float>(u);
}

inline void store_f32_le(char* p, float v) {
  auto u = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
  std::memcpy(p, &u, 4);
}

}  // namespace detail

inline VolumeHeader read_header(const std::filesystem::path& blob) {
  const auto hp = header_path(blob);
  std::ifstream is(hp);
  if (!is) throw IoError("missing header " + hp.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(hp.string() + ": " + e.what());
  }
  VolumeHeader h;
  try {
    const auto& d = j.at("dims");
    if (!d.is_array() || d.size() != 3) throw FormatError(hp.string() + ": dims must be [nx,ny,nz]");
    for (const auto& v : d)
      if (!v.is_number_integer() || v.get<long long>() <= 0)
        throw FormatError(hp.string() + ": dims must be positive integers");
    h.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
    const auto dtype = j.at("dtype").get<std::string>();
    if (dtype == "f32")
      h.dtype = SampleType::f32;
    else if (dtype == "u8")
      h.dtype = SampleType::u8;
    else
      throw FormatError(hp.string() + ": unknown dtype '" + dtype + "'");
    const auto order = j.value("order", std::string("x-fastest"));
    if (order != "x-fastest") throw FormatError(hp.string() + ": unsupported order '" + order + "'");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "gray")
      h.kind = VolumeKind::gray;
    else if (kind == "mask")
      h.kind = VolumeKind::mask;
    else
      throw FormatError(hp.string() + ": unknown kind '" + kind + "'");
    if (j.contains("value_range")) {
      const auto& r = j["value_range"];
      h.value_range = std::make_pair(r.at(0).get<float>(), r.at(1).get<float>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(hp.string() + ": " + e.what());
  }
  return h;
}

inline void write_volume(const std::filesystem::path& blob, const Volume& vol) {
  VolumeHeader h{vol.dims(), SampleType::f32, VolumeKind::gray, vol.value_range()};
  std::vector<char> bytes(vol.size() * 4);
  for (std::size_t i = 0; i < vol.size(); ++i) detail::store_f32_le(bytes.data() + 4 * i, vol[i]);
  detail::write_blob(blob, bytes.data(), bytes.size());
  detail::write_text(header_path(blob), detail::header_to_json(h).dump(2) + "\n");
}

inline void write_mask(const std::filesystem::path& blob, const BinaryMask& mask) {
  VolumeHeader h{mask.dims(), SampleType::u8, VolumeKind::mask, std::nullopt};
  std::vector<std::uint8_t> bytes(mask.size(), 0);
  mask.for_each_set([&](std::size_t i) { bytes[i] = 1; });
  detail::write_blob(blob, bytes.data(), bytes.size());
  detail::write_text(header_path(blob), detail::header_to_json(h).dump(2) + "\n");
}

namespace detail {

inline std::vector<char> read_payload(const std::filesystem::path& blob, const VolumeHeader& h) {
  auto bytes = read_blob(blob);
  const std::size_t width = h.dtype == SampleType::f32 ? 4 : 1;
  if (bytes.size() != h.dims.size() * width)
    throw CorruptFileError(blob.string() + ": expected " + std::to_string(h.dims.size() * width) +
                           " bytes for " + h.dims.str() + ", found " + std::to_string(bytes.size()));
  return bytes;
}

}  // namespace detail

/// Reads a gray volume. Mask files are accepted and yield 0/1 samples.
inline Volume read_volume(const std::filesystem::path& blob) {
  const VolumeHeader h = read_header(blob);
  const auto bytes = detail::read_payload(blob, h);
  Volume vol(h.dims);
  if (h.dtype == SampleType::f32) {
    for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = detail::load_f32_le(bytes.data() + 4 * i);
    if (!vol.all_finite()) throw CorruptFileError(blob.string() + ": non-finite samples");
  } else {
    for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = static_cast<float>(static_cast<std::uint8_t>(bytes[i]));
  }
  vol.set_value_range(h.value_range);
  return vol;
}

/// Reads a mask file; any nonzero sample is set.
inline BinaryMask read_mask(const std::filesystem::path& blob) {
  const VolumeHeader h = read_header(blob);
  if (h.kind != VolumeKind::mask) throw FormatError(blob.string() + ": expected kind 'mask'");
  const auto bytes = detail::read_payload(blob, h);
  BinaryMask mask(h.dims);
  if (h.dtype == SampleType::u8) {
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (bytes[i] != 0) mask.set(i);
  } else {
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (detail::load_f32_le(bytes.data() + 4 * i) != 0.0f) mask.set(i);
  }
  return mask;
}

}  // namespace crackseg

#endif  // CRACKSEG_VOLUME_IO_HPP
