#pragma once

// Language-specific data area: call-site, action, type and spec tables with
// a versioned LEB128 byte encoding.  The layout is described bit-exactly in
// docs/lsda-format.md.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ehvm::lsda {

inline constexpr uint8_t kVersion = 0x01;

struct CallSiteRecord {
  uint64_t start = 0;
  uint64_t length = 0;
  uint64_t landing_pad = 0;  // 0: no landing pad in this frame
  uint64_t action = 0;       // 1-based action index; 0: none (cleanup-only when landing_pad != 0)

  friend bool operator==(const CallSiteRecord&, const CallSiteRecord&) = default;
};

struct ActionEntry {
  int64_t type_filter = 0;  // > 0 type table index, < 0 spec list index, 0 cleanup
  int64_t next = 0;         // relative entry offset, 0 ends the chain

  friend bool operator==(const ActionEntry&, const ActionEntry&) = default;
};

struct LsdaTable {
  std::vector<CallSiteRecord> callsites;
  std::vector<ActionEntry> actions;
  std::vector<uint64_t> types;               // typeinfo ids, 0 = catch-all
  std::vector<std::vector<uint64_t>> specs;  // each encoded 0-terminated

  friend bool operator==(const LsdaTable&, const LsdaTable&) = default;
};

class LsdaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<uint8_t> uleb_encode(uint64_t v);
std::vector<uint8_t> sleb_encode(int64_t v);
void uleb_append(std::vector<uint8_t>& out, uint64_t v);
void sleb_append(std::vector<uint8_t>& out, int64_t v);
// Returns (value, bytes consumed).  Throws LsdaError on truncated or
// non-minimal input.
std::pair<uint64_t, size_t> uleb_decode(std::span<const uint8_t> bytes);
std::pair<int64_t, size_t> sleb_decode(std::span<const uint8_t> bytes);

// Throws LsdaError describing the first violated table invariant.
void check(const LsdaTable& t);

std::vector<uint8_t> encode(const LsdaTable& t);
LsdaTable decode(std::span<const uint8_t> bytes);

// The record with start <= pc < start + length.
std::optional<CallSiteRecord> find_callsite(const LsdaTable& t, uint64_t pc);

// Action entries of the chain starting at 1-based `action` (empty for 0).
std::vector<ActionEntry> action_chain(const LsdaTable& t, uint64_t action);

using TypeNamer = std::function<std::string(uint64_t)>;
// Stable, line-oriented text rendering used by `ehvm lsda-dump`.
std::string dump(const LsdaTable& t, const TypeNamer& name_of);

}  // namespace ehvm::lsda
