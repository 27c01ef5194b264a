#include "ehvm/lsda.hpp"

#include <algorithm>
#include <sstream>

namespace ehvm::lsda {

void uleb_append(std::vector<uint8_t>& out, uint64_t v) {
  do {
    uint8_t byte = v & 0x7f;
    v >>= 7;
    if (v != 0) byte |= 0x80;
    out.push_back(byte);
  } while (v != 0);
}

void sleb_append(std::vector<uint8_t>& out, int64_t v) {
  for (;;) {
    uint8_t byte = v & 0x7f;
    v >>= 7;  // arithmetic shift
    bool done = (v == 0 && !(byte & 0x40)) || (v == -1 && (byte & 0x40));
    if (!done) byte |= 0x80;
    out.push_back(byte);
    if (done) return;
  }
}

std::vector<uint8_t> uleb_encode(uint64_t v) {
  std::vector<uint8_t> out;
  uleb_append(out, v);
  return out;
}

std::vector<uint8_t> sleb_encode(int64_t v) {
  std::vector<uint8_t> out;
  sleb_append(out, v);
  return out;
}

std::pair<uint64_t, size_t> uleb_decode(std::span<const uint8_t> bytes) {
  uint64_t value = 0;
  unsigned shift = 0;
  for (size_t i = 0; i < bytes.size(); ++i) {
    uint64_t slice = bytes[i] & 0x7f;
    if (shift >= 64 || (shift > 0 && (slice << shift) >> shift != slice))
      throw LsdaError("uleb128 value does not fit in 64 bits");
    value |= slice << shift;
    shift += 7;
    if (!(bytes[i] & 0x80)) {
      if (i > 0 && bytes[i] == 0) throw LsdaError("non-minimal uleb128");
      return {value, i + 1};
    }
  }
  throw LsdaError("truncated uleb128");
}

std::pair<int64_t, size_t> sleb_decode(std::span<const uint8_t> bytes) {
  uint64_t value = 0;
  unsigned shift = 0;
  for (size_t i = 0; i < bytes.size(); ++i) {
    uint8_t byte = bytes[i];
    if (shift >= 64) throw LsdaError("sleb128 value does not fit in 64 bits");
    value |= uint64_t(byte & 0x7f) << shift;
    shift += 7;
    if (!(byte & 0x80)) {
      if (i > 0) {
        bool prev_sign = bytes[i - 1] & 0x40;
        if ((byte == 0x00 && !prev_sign) || (byte == 0x7f && prev_sign))
          throw LsdaError("non-minimal sleb128");
      }
      if (shift < 64 && (byte & 0x40)) value |= ~uint64_t(0) << shift;
      return {static_cast<int64_t>(value), i + 1};
    }
  }
  throw LsdaError("truncated sleb128");
}

void check(const LsdaTable& t) {
  for (size_t i = 0; i < t.callsites.size(); ++i) {
    const auto& c = t.callsites[i];
    if (c.length == 0) throw LsdaError("call-site " + std::to_string(i) + " has zero length");
    if (c.start + c.length < c.start) throw LsdaError("call-site range overflows");
    if (i > 0 && t.callsites[i - 1].start + t.callsites[i - 1].length > c.start)
      throw LsdaError("call-sites unsorted or overlapping at " + std::to_string(i));
    if (c.action > t.actions.size())
      throw LsdaError("call-site " + std::to_string(i) + " refers to missing action");
    if (c.landing_pad == 0 && c.action != 0)
      throw LsdaError("call-site " + std::to_string(i) + " has an action but no landing pad");
  }
  const auto n = static_cast<int64_t>(t.actions.size());
  for (int64_t i = 0; i < n; ++i) {
    const auto& a = t.actions[i];
    if (a.type_filter > 0 && static_cast<uint64_t>(a.type_filter) > t.types.size())
      throw LsdaError("action " + std::to_string(i + 1) + " filter beyond type table");
    if (a.type_filter < 0 && static_cast<uint64_t>(-a.type_filter) > t.specs.size())
      throw LsdaError("action " + std::to_string(i + 1) + " filter beyond spec table");
    if (a.next != 0 && (i + a.next < 0 || i + a.next >= n))
      throw LsdaError("action " + std::to_string(i + 1) + " links outside the table");
  }
  // Every chain must terminate.
  for (int64_t start = 0; start < n; ++start) {
    int64_t cur = start;
    for (int64_t steps = 0; t.actions[cur].next != 0; ++steps) {
      if (steps > n) throw LsdaError("action chain from " + std::to_string(start + 1) + " cycles");
      cur += t.actions[cur].next;
    }
  }
  for (size_t i = 0; i < t.specs.size(); ++i)
    for (auto id : t.specs[i])
      if (id == 0) throw LsdaError("spec list " + std::to_string(i + 1) + " contains id 0");
}

std::vector<uint8_t> encode(const LsdaTable& t) {
  check(t);
  std::vector<uint8_t> out{kVersion};
  uleb_append(out, t.callsites.size());
  uleb_append(out, t.actions.size());
  uleb_append(out, t.types.size());
  uleb_append(out, t.specs.size());
  for (const auto& c : t.callsites) {
    uleb_append(out, c.start);
    uleb_append(out, c.length);
    uleb_append(out, c.landing_pad);
    uleb_append(out, c.action);
  }
  for (const auto& a : t.actions) {
    sleb_append(out, a.type_filter);
    sleb_append(out, a.next);
  }
  for (auto id : t.types) uleb_append(out, id);
  for (const auto& spec : t.specs) {
    for (auto id : spec) uleb_append(out, id);
    out.push_back(0);
  }
  return out;
}

namespace {

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  uint64_t uleb() {
    auto [v, n] = uleb_decode(bytes_.subspan(pos_));
    pos_ += n;
    return v;
  }
  int64_t sleb() {
    auto [v, n] = sleb_decode(bytes_.subspan(pos_));
    pos_ += n;
    return v;
  }
  uint8_t byte() {
    if (pos_ >= bytes_.size()) throw LsdaError("truncated lsda");
    return bytes_[pos_++];
  }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

LsdaTable decode(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  uint8_t version = r.byte();
  if (version != kVersion)
    throw LsdaError("unsupported lsda version " + std::to_string(version));
  uint64_t ncall = r.uleb(), nact = r.uleb(), ntype = r.uleb(), nspec = r.uleb();
  // Lower bound on encoded size: 4 bytes per call-site, 2 per action, 1 per
  // type and spec.
  if (ncall > r.remaining() || nact > r.remaining() || ntype > r.remaining() ||
      nspec > r.remaining() || 4 * ncall + 2 * nact + ntype + nspec > r.remaining())
    throw LsdaError("truncated lsda: table sizes exceed input");
  LsdaTable t;
  t.callsites.resize(ncall);
  for (auto& c : t.callsites) {
    c.start = r.uleb();
    c.length = r.uleb();
    c.landing_pad = r.uleb();
    c.action = r.uleb();
  }
  t.actions.resize(nact);
  for (auto& a : t.actions) {
    a.type_filter = r.sleb();
    a.next = r.sleb();
  }
  t.types.resize(ntype);
  for (auto& id : t.types) id = r.uleb();
  t.specs.resize(nspec);
  for (auto& spec : t.specs)
    for (uint64_t id = r.uleb(); id != 0; id = r.uleb()) spec.push_back(id);
  if (r.remaining() != 0) throw LsdaError("trailing bytes after lsda");
  check(t);
  return t;
}

std::optional<CallSiteRecord> find_callsite(const LsdaTable& t, uint64_t pc) {
  auto it = std::upper_bound(t.callsites.begin(), t.callsites.end(), pc,
                             [](uint64_t p, const CallSiteRecord& c) { return p < c.start; });
  if (it == t.callsites.begin()) return std::nullopt;
  --it;
  if (pc - it->start < it->length) return *it;
  return std::nullopt;
}

std::vector<ActionEntry> action_chain(const LsdaTable& t, uint64_t action) {
  std::vector<ActionEntry> out;
  if (action == 0 || action > t.actions.size()) return out;
  int64_t cur = static_cast<int64_t>(action) - 1;
  for (;;) {
    out.push_back(t.actions[cur]);
    if (t.actions[cur].next == 0 || out.size() > t.actions.size()) return out;
    cur += t.actions[cur].next;
    if (cur < 0 || cur >= static_cast<int64_t>(t.actions.size())) return out;
  }
}

std::string dump(const LsdaTable& t, const TypeNamer& name_of) {
  std::ostringstream os;
  auto type_name = [&](uint64_t id) { return id == 0 ? std::string("any") : name_of(id); };
  os << "lsda version " << int(kVersion) << "\n";
  os << "callsites " << t.callsites.size() << "\n";
  for (size_t i = 0; i < t.callsites.size(); ++i) {
    const auto& c = t.callsites[i];
    os << "  " << i << ": start " << c.start << " length " << c.length << " landing_pad "
       << c.landing_pad << " action " << c.action << "\n";
  }
  os << "actions " << t.actions.size() << "\n";
  for (size_t i = 0; i < t.actions.size(); ++i)
    os << "  " << i + 1 << ": filter " << t.actions[i].type_filter << " next "
       << t.actions[i].next << "\n";
  os << "types " << t.types.size() << "\n";
  for (size_t i = 0; i < t.types.size(); ++i)
    os << "  " << i + 1 << ": " << type_name(t.types[i]) << "\n";
  os << "specs " << t.specs.size() << "\n";
  for (size_t i = 0; i < t.specs.size(); ++i) {
    os << "  " << i + 1 << ": [";
    for (size_t j = 0; j < t.specs[i].size(); ++j) os << (j ? ", " : "") << type_name(t.specs[i][j]);
    os << "]\n";
  }
  return os.str();
}

}  // namespace ehvm::lsda
