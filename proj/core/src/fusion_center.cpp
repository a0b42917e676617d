#include "arrayloc/fusion_center.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <mutex>
#include <system_error>

#include "arrayloc/errors.hpp"

namespace arrayloc {
namespace {

template <typename T>
bool parse_field(std::string_view tok, T& out) {
  if (tok.empty()) return false;
  if (tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

void set_error(std::string* error, const char* msg) {
  if (error != nullptr) *error = msg;
}

std::string log_name(std::size_t array) { return "array_" + std::to_string(array) + ".log"; }

}  // namespace

std::optional<WireRecord> parse_wire_line(std::string_view line, std::string* error) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::string_view fields[7];
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (count == 7) {
      set_error(error, "too many fields");
      return std::nullopt;
    }
    fields[count++] = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (count != 7) {
    set_error(error, "expected 7 fields");
    return std::nullopt;
  }
  WireRecord r;
  if (!parse_field(fields[0], r.timestamp_ms) || !parse_field(fields[1], r.array_id) ||
      !parse_field(fields[2], r.dx) || !parse_field(fields[3], r.dy) || !parse_field(fields[4], r.dz) ||
      !parse_field(fields[5], r.energy) || !parse_field(fields[6], r.seq)) {
    set_error(error, "unparsable field");
    return std::nullopt;
  }
  if (r.array_id < 0) {
    set_error(error, "negative array id");
    return std::nullopt;
  }
  Vec3 d = r.direction();
  if (!d.allFinite() || !std::isfinite(r.energy)) {
    set_error(error, "non-finite value");
    return std::nullopt;
  }
  if (std::abs(d.norm() - 1.0) > kWireNormTolerance) {
    set_error(error, "direction is not unit norm");
    return std::nullopt;
  }
  if (d.z() < -kWireNormTolerance) {
    set_error(error, "direction below the half-sphere");
    return std::nullopt;
  }
  // Values already unit to rounding are kept as-is so parsing the store's own
  // log reproduces the stored doubles.
  if (d.z() < 0.0) d.z() = 0.0;
  if (std::abs(d.squaredNorm() - 1.0) > 1e-15) d.normalize();
  r.dx = d.x();
  r.dy = d.y();
  r.dz = d.z();
  return r;
}

std::string format_wire_line(const WireRecord& r) {
  char buf[192];
  const int n = std::snprintf(buf, sizeof(buf), "%lld,%d,%.17g,%.17g,%.17g,%.17g,%llu",
                              static_cast<long long>(r.timestamp_ms), r.array_id, r.dx, r.dy, r.dz, r.energy,
                              static_cast<unsigned long long>(r.seq));
  return std::string(buf, static_cast<std::size_t>(n));
}

std::int64_t bin_index(std::int64_t timestamp_ms, std::int64_t bin_ms) {
  std::int64_t q = timestamp_ms / bin_ms;
  if (timestamp_ms % bin_ms != 0 && timestamp_ms < 0) --q;
  return q;
}

DoaStore::DoaStore(std::size_t arrays) : arrays_(arrays), index_(arrays), last_seq_(arrays) {
  if (arrays == 0 || arrays > kMaxArrays) throw InvalidArgument("store array count must be in [1, 32]");
}

DoaStore::DoaStore(const std::filesystem::path& directory, std::size_t arrays) : DoaStore(arrays) {
  std::filesystem::create_directories(directory);
  directory_ = directory;
  for (std::size_t a = 0; a < arrays_; ++a) {
    const auto path = directory / log_name(a);
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      while (std::getline(in, line)) {
        if (auto rec = parse_wire_line(line); rec && static_cast<std::size_t>(rec->array_id) == a) {
          index_[a][rec->timestamp_ms] = *rec;
          last_seq_[a] = rec->seq;
        }
      }
    }
    logs_.push_back(std::make_unique<std::ofstream>(path, std::ios::app | std::ios::binary));
    if (!*logs_.back()) throw DataError("cannot open store log " + path.string());
  }
}

DoaStore::~DoaStore() {
  try {
    flush();
  } catch (...) {
  }
}

bool DoaStore::store_locked(const WireRecord& r) {
  const auto a = static_cast<std::size_t>(r.array_id);
  auto& idx = index_[a];
  auto it = idx.find(r.timestamp_ms);
  if (it != idx.end()) {
    ++counters_.duplicates;
    if (!(it->second == r)) ++counters_.conflicting_duplicates;
    it->second = r;
  } else {
    idx.emplace(r.timestamp_ms, r);
  }
  if (last_seq_[a] && r.seq > *last_seq_[a] + 1) counters_.sequence_gaps += r.seq - *last_seq_[a] - 1;
  if (!last_seq_[a] || r.seq > *last_seq_[a]) last_seq_[a] = r.seq;
  if (!logs_.empty()) *logs_[a] << format_wire_line(r) << '\n';
  ++counters_.ingested;
  return true;
}

bool DoaStore::ingest_line(std::string_view line) {
  auto rec = parse_wire_line(line);
  std::unique_lock lock(mutex_);
  ++counters_.received;
  if (!rec || static_cast<std::size_t>(rec->array_id) >= arrays_) {
    ++counters_.rejected;
    return false;
  }
  return store_locked(*rec);
}

bool DoaStore::ingest(const WireRecord& record) { return ingest_line(format_wire_line(record)); }

std::size_t DoaStore::ingest_stream(std::istream& in) {
  std::size_t accepted = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (ingest_line(line)) ++accepted;
  }
  return accepted;
}

void DoaStore::note_partial_line() {
  std::unique_lock lock(mutex_);
  ++counters_.partial_lines;
}

void DoaStore::set_default_join_options(JoinOptions options) {
  std::unique_lock lock(mutex_);
  default_join_ = std::move(options);
}

std::vector<JoinedRow> DoaStore::join_bins(TimeRange range, const JoinOptions& options) const {
  if (range.end_ms < range.begin_ms) throw InvalidArgument("time range end precedes its begin");
  if (options.bin_ms <= 0) throw InvalidArgument("bin_ms must be positive");
  for (const auto& [array, offset] : options.clock_offset_ms) {
    if (std::abs(offset) > options.jitter_ms) {
      throw InvalidArgument("clock offset for array " + std::to_string(array) + " exceeds the jitter bound");
    }
  }
  struct Acc {
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
  };
  // bin -> per-array accumulators
  std::map<std::int64_t, std::vector<Acc>> bins;
  {
    std::shared_lock lock(mutex_);
    for (std::size_t a = 0; a < arrays_; ++a) {
      auto off_it = options.clock_offset_ms.find(static_cast<int>(a));
      const std::int64_t offset = off_it == options.clock_offset_ms.end() ? 0 : off_it->second;
      for (const auto& [ts, rec] : index_[a]) {
        const std::int64_t bin = bin_index(ts - offset, options.bin_ms);
        const std::int64_t start = bin * options.bin_ms;
        if (start < range.begin_ms || start >= range.end_ms) continue;
        auto& accs = bins[bin];
        if (accs.empty()) accs.resize(arrays_);
        accs[a].sum += rec.direction();
        ++accs[a].count;
      }
    }
  }
  std::vector<JoinedRow> rows;
  rows.reserve(bins.size());
  for (const auto& [bin, accs] : bins) {
    std::vector<std::optional<DoaVector>> per_array(arrays_);
    bool any = false;
    for (std::size_t a = 0; a < arrays_; ++a) {
      if (accs[a].count == 0) continue;
      const Vec3 mean = accs[a].sum / static_cast<double>(accs[a].count);
      if (mean.norm() < 1e-12) continue;
      per_array[a] = DoaVector::normalized(mean);
      any = true;
    }
    if (!any) continue;
    const std::int64_t start = bin * options.bin_ms;
    rows.push_back({start, concat_doas(per_array, start)});
  }
  return rows;
}

std::vector<JoinedRow> DoaStore::query(TimeRange range) const {
  JoinOptions options;
  {
    std::shared_lock lock(mutex_);
    options = default_join_;
  }
  return join_bins(range, options);
}

IngestCounters DoaStore::counters() const {
  std::shared_lock lock(mutex_);
  return counters_;
}

std::vector<WireRecord> DoaStore::records(int array_id) const {
  std::shared_lock lock(mutex_);
  std::vector<WireRecord> out;
  if (array_id < 0 || static_cast<std::size_t>(array_id) >= arrays_) return out;
  for (const auto& [ts, r] : index_[static_cast<std::size_t>(array_id)]) out.push_back(r);
  return out;
}

std::size_t DoaStore::record_count() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& idx : index_) n += idx.size();
  return n;
}

void DoaStore::flush() {
  std::unique_lock lock(mutex_);
  for (auto& log : logs_) log->flush();
}

std::vector<WireRecord> to_wire_records(const ConcatenatedDoa& d, std::vector<std::uint64_t>& seq, double energy) {
  if (seq.size() < d.arrays()) seq.resize(d.arrays(), 0);
  std::vector<WireRecord> out;
  for (std::size_t a = 0; a < d.arrays(); ++a) {
    if (!d.active[a]) continue;
    const Vec3 v = d.subvector(a);
    out.push_back({d.timestamp_ms, static_cast<int>(a), v.x(), v.y(), v.z(), energy, seq[a]++});
  }
  return out;
}

}  // namespace arrayloc
