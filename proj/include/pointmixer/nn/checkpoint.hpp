#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "pointmixer/nn/params.hpp"

namespace pmx {

/// One tensor as stored in a PMIX1 checkpoint.
struct CheckpointEntry {
  std::string name;
  std::vector<std::uint64_t> extents;
  std::vector<double> data;
  bool operator==(const CheckpointEntry&) const = default;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layout: "PMIX1", u64 entry count, then per entry u64 name length, name
/// bytes, u32 rank, rank x u64 extents, prod(extents) x f64. All little-endian.
void write_checkpoint(std::ostream& out, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

template <typename Scalar>
CheckpointEntry to_entry(const std::string& name, const MatrixX<Scalar>& m, int rank) {
  CheckpointEntry e;
  e.name = name;
  if (rank == 1)
    e.extents = {static_cast<std::uint64_t>(m.size())};
  else
    e.extents = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  e.data.resize(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) e.data[i] = static_cast<double>(m.data()[i]);
  return e;
}

template <typename Scalar>
std::vector<CheckpointEntry> to_entries(const ParamStore<Scalar>& store) {
  std::vector<CheckpointEntry> out;
  out.reserve(static_cast<std::size_t>(store.size()));
  for (const auto& p : store) out.push_back(to_entry(p.name, p.value, p.rank));
  return out;
}

/// Momentum buffers under "momentum/<name>".
template <typename Scalar>
std::vector<CheckpointEntry> momentum_entries(const ParamStore<Scalar>& store) {
  std::vector<CheckpointEntry> out;
  for (const auto& p : store) out.push_back(to_entry("momentum/" + p.name, p.momentum, p.rank));
  return out;
}

namespace detail {
template <typename Scalar>
void assign_entry(const CheckpointEntry& e, MatrixX<Scalar>& dst, int rank) {
  const bool shape_ok =
      rank == 1 ? (e.extents.size() == 1 && e.extents[0] == static_cast<std::uint64_t>(dst.size()))
                : (e.extents.size() == 2 && e.extents[0] == static_cast<std::uint64_t>(dst.rows()) &&
                   e.extents[1] == static_cast<std::uint64_t>(dst.cols()));
  if (!shape_ok) throw CheckpointError("checkpoint entry " + e.name + " has the wrong shape");
  for (Index i = 0; i < dst.size(); ++i) dst.data()[i] = static_cast<Scalar>(e.data[i]);
}
}  // namespace detail

/// Loads values (and "momentum/" buffers when present). Every store entry must
/// be present with a matching shape; unknown names are rejected.
template <typename Scalar>
void load_entries(ParamStore<Scalar>& store, const std::vector<CheckpointEntry>& entries) {
  std::vector<bool> seen(static_cast<std::size_t>(store.size()), false);
  for (const auto& e : entries) {
    const bool is_momentum = e.name.rfind("momentum/", 0) == 0;
    const std::string name = is_momentum ? e.name.substr(9) : e.name;
    const ParamRef r = store.find(name);
    if (!r.valid()) throw CheckpointError("checkpoint entry " + e.name + " has no matching parameter");
    auto& p = store[r];
    if (is_momentum) {
      detail::assign_entry(e, p.momentum, p.rank);
    } else {
      detail::assign_entry(e, p.value, p.rank);
      seen[static_cast<std::size_t>(r.id)] = true;
    }
  }
  for (const auto& p : store) {
    if (!seen[static_cast<std::size_t>(store.find(p.name).id)])
      throw CheckpointError("checkpoint is missing parameter " + p.name);
  }
}

}  // namespace pmx
