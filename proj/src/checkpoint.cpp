#include "pointmixer/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace pmx {

namespace {

constexpr char kMagic[5] = {'P', 'M', 'I', 'X', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw CheckpointError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<CheckpointEntry>& entries) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, entries.size());
  for (const auto& e : entries) {
    put<std::uint64_t>(out, e.name.size());
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.extents.size()));
    std::uint64_t count = 1;
    for (auto x : e.extents) {
      put<std::uint64_t>(out, x);
      count *= x;
    }
    if (count != e.data.size()) throw CheckpointError("entry " + e.name + ": extents do not match data");
    for (double v : e.data) put<double>(out, v);
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

std::vector<CheckpointEntry> read_checkpoint(std::istream& in) {
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) throw CheckpointError("not a PMIX1 checkpoint");
  const auto n = get<std::uint64_t>(in);
  std::vector<CheckpointEntry> entries;
  for (std::uint64_t i = 0; i < n; ++i) {
    CheckpointEntry e;
    const auto len = get<std::uint64_t>(in);
    if (len > (1u << 20)) throw CheckpointError("implausible name length");
    e.name.resize(len);
    if (!in.read(e.name.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated checkpoint");
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw CheckpointError("implausible rank");
    std::uint64_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      e.extents.push_back(get<std::uint64_t>(in));
      count *= e.extents.back();
    }
    if (count > (1ull << 32)) throw CheckpointError("implausible entry size");
    e.data.resize(count);
    for (auto& v : e.data) v = get<double>(in);
    entries.push_back(std::move(e));
  }
  return entries;
}

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(out, entries);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace pmx
