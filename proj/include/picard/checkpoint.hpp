#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "picard/error.hpp"
#include "picard/model.hpp"

namespace picard {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::array<char, 4> kCheckpointMagic{'P', 'I', 'C', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw FormatError("truncated checkpoint");
  return v;
}

}  // namespace detail

// Layout: magic, u32 version, u32 d_p, u32 d_m, u32 stage count, then per stage
// u32 in, out, kernel, stride, padding and u8 upsample, activation, dropout flag;
// then each stage's weights and bias as little-endian f32.
inline void write_checkpoint(std::ostream& os, const InpainterModel<float>& model) {
  const auto& arch = model.arch;
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.input_size));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.mask_size));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(arch.stages.size()));
  for (const auto& s : arch.stages) {
    for (auto v : {s.in_channels, s.out_channels, s.kernel, s.stride, s.padding})
      detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    detail::put<std::uint8_t>(os, s.upsample ? 1 : 0);
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(s.activation));
    detail::put<std::uint8_t>(os, s.dropout_eligible ? 1 : 0);
  }
  model.params.for_each([&](std::span<const float> t) {
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size_bytes()));
  });
  if (!os) throw IoError("failed writing checkpoint");
}

inline InpainterModel<float> read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw FormatError("not a PICN checkpoint");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Architecture arch;
  arch.input_size = detail::get<std::uint32_t>(is);
  arch.mask_size = detail::get<std::uint32_t>(is);
  const auto count = detail::get<std::uint32_t>(is);
  if (count > 4096) throw FormatError("implausible stage count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StageSpec s;
    s.in_channels = detail::get<std::uint32_t>(is);
    s.out_channels = detail::get<std::uint32_t>(is);
    s.kernel = detail::get<std::uint32_t>(is);
    s.stride = detail::get<std::uint32_t>(is);
    s.padding = detail::get<std::uint32_t>(is);
    s.upsample = detail::get<std::uint8_t>(is) != 0;
    const auto act = detail::get<std::uint8_t>(is);
    if (act > static_cast<std::uint8_t>(Activation::kTanh)) throw FormatError("unknown activation code");
    s.activation = static_cast<Activation>(act);
    s.dropout_eligible = detail::get<std::uint8_t>(is) != 0;
    arch.stages.push_back(s);
  }
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid architecture in checkpoint: ") + e.what());
  }
  InpainterModel<float> model{arch, zero_parameters<float>(arch)};
  model.params.for_each([&](std::span<float> t) {
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size_bytes()));
    if (!is) throw FormatError("truncated checkpoint parameters");
  });
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path, const InpainterModel<float>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, model);
}

inline InpainterModel<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace picard
