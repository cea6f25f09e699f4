#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "wrin/graph.hpp"

namespace wrin {

/// Binary parameter file:
///   "WRIN" | version:u8
///   per entry: name_len:u32 | name (UTF-8) | rank:u8 | dims:u32[rank] | values:f32[prod(dims)]
///   entry_count:u64
/// All integers and floats little-endian. Entries cover learnable parameters and
/// batch-norm running statistics, in registry order.
inline constexpr char kCheckpointMagic[4] = {'W', 'R', 'I', 'N'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  static_assert(std::is_integral_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[pos + i]) << (8 * i);
  pos += sizeof(U);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  out.push_back(kCheckpointVersion);
  for (const auto& e : entries) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    if (e.dims.size() > 255) throw FormatError("checkpoint: rank too large for '" + e.name + "'");
    out.push_back(static_cast<std::uint8_t>(e.dims.size()));
    for (std::uint32_t d : e.dims) detail::put_le<std::uint32_t>(out, d);
    for (float v : e.values) detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  detail::put_le<std::uint64_t>(out, entries.size());
  return out;
}

inline std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& in) {
  if (in.size() < 5 + 8 || std::memcmp(in.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  if (in[4] != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(in[4]));
  std::size_t pos = 5;
  const std::size_t body_end = in.size() - 8;
  std::vector<CheckpointEntry> entries;
  while (pos < body_end) {
    CheckpointEntry e;
    const auto len = detail::get_le<std::uint32_t>(in, pos);
    if (pos + len > body_end) throw FormatError("checkpoint: name overruns file at byte " + std::to_string(pos));
    e.name.assign(reinterpret_cast<const char*>(in.data() + pos), len);
    pos += len;
    if (pos >= body_end) throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
    const std::uint8_t rank = in[pos++];
    std::size_t count = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      e.dims.push_back(detail::get_le<std::uint32_t>(in, pos));
      count *= e.dims.back();
    }
    if (pos + 4 * count > body_end) throw FormatError("checkpoint: values of '" + e.name + "' overrun file");
    e.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) e.values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(in, pos));
    entries.push_back(std::move(e));
  }
  std::size_t tail = body_end;
  const auto declared = detail::get_le<std::uint64_t>(in, tail);
  if (pos != body_end || declared != entries.size()) {
    throw FormatError("checkpoint: trailing count " + std::to_string(declared) + " does not match " +
                      std::to_string(entries.size()) + " entries");
  }
  return entries;
}

template <typename T>
std::vector<CheckpointEntry> checkpoint_entries(const Network<T>& net) {
  std::vector<CheckpointEntry> entries;
  for (const auto& p : net.params()) {
    CheckpointEntry e{p.name, {}, std::vector<float>(p.value.begin(), p.value.end())};
    for (std::size_t d : p.dims) e.dims.push_back(static_cast<std::uint32_t>(d));
    entries.push_back(std::move(e));
  }
  return entries;
}

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path) {
  const auto bytes = encode_checkpoint(checkpoint_entries(net));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

/// Loads values by name. Every network parameter must be present with matching dims.
template <typename T>
void apply_checkpoint(Network<T>& net, const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  for (auto& p : net.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks parameter '" + p.name + "'");
    const CheckpointEntry& e = *it->second;
    if (e.dims.size() != p.dims.size() || !std::equal(e.dims.begin(), e.dims.end(), p.dims.begin())) {
      throw FormatError("checkpoint parameter '" + p.name + "' has mismatched dims");
    }
    std::ranges::transform(e.values, p.value.begin(), [](float v) { return static_cast<T>(v); });
  }
}

template <typename T>
void load_checkpoint(Network<T>& net, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  apply_checkpoint(net, decode_checkpoint(bytes));
}

}  // namespace wrin
