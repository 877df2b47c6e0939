#pragma once

#include "stbench/rng.hpp"
#include "stbench/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace stb {

enum class EventKind { Cube, Local, Gaussian, Onset, RandomWalk };

struct EventSpec {
  EventKind kind = EventKind::Cube;
  int n = 0;
  int sx = 1;  // lon extent
  int sy = 1;  // lat extent
  int sz = 1;  // duration
  int s = 0;   // random-walk steps
  double os = 0.0;  // onset position as a fraction of the series
};

struct Voxel {
  std::int32_t t, y, x;
  bool operator==(const Voxel&) const = default;
};

struct CouplingEntry {
  bool coupled = false;
  int delta = 0;  // -1 or +1 when coupled
  int lead = 0;   // steps before an extreme
  int lag = 0;    // steps after an extreme
};
using CouplingMatrix = std::vector<CouplingEntry>;

/// Provenance of one placed event.
struct EventRecord {
  std::string target;  // "extreme" or "random:<variable>"
  EventKind kind;
  int spec_index = 0;
  int instance = 0;
  std::uint64_t stream = 0;
  std::size_t voxels = 0;
  std::array<int, 6> bbox{};  // t0, t1, y0, y1, x0, x1 (inclusive)
  EventSpec spec;
};

void validate(const EventSpec& spec);

/// Voxels of one event instance, clipped to the grid. RandomWalk voxels are
/// returned in visit order; other kinds in no particular order.
std::vector<Voxel> gen_event(const EventSpec& spec, const Dims& dims, Rng& rng);

/// Union of all instances of all specs, intersected with `valid`. Each
/// instance draws from stream (seed, purpose, spec index, instance).
MaskCube place_events(const std::vector<EventSpec>& specs, const Dims& grid, const PixelMask& valid,
                      std::uint64_t seed, const std::string& purpose, const std::string& target,
                      std::vector<EventRecord>* ledger);

MaskCube place_extremes(const std::vector<EventSpec>& specs, const Dims& grid, const PixelMask& valid,
                        std::uint64_t seed, std::vector<EventRecord>* ledger = nullptr);

/// Flags exactly `coupled_count` variables. Variables with a configured
/// delta (non-zero entry in `deltas`) are picked first, in random order.
CouplingMatrix build_coupling(int vars, int coupled_count, int lead_max, int lag_max, Rng& rng,
                              const std::vector<int>& deltas = {});

/// Temporal dilation of the extremes by [-lead, +lag] per coupled variable.
MaskCube derive_driver_mask(const MaskCube& extremes, const CouplingMatrix& coupling);

/// Per-variable random anomalies; variable v uses streams keyed by v.
MaskCube place_random_anomalies(const std::vector<std::vector<EventSpec>>& specs, const Dims& dims,
                                const PixelMask& valid, std::uint64_t seed,
                                const std::vector<std::string>& names,
                                std::vector<EventRecord>* ledger = nullptr);

nlohmann::json to_json(const EventSpec& spec);
EventSpec event_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EventRecord& rec);
nlohmann::json to_json(const CouplingMatrix& m, const std::vector<std::string>& names);
std::string to_string(EventKind k);
EventKind parse_event_kind(const std::string& s);

}  // namespace stb
